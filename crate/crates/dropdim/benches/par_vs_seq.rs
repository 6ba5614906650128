//! Parallel-vs-sequential comparison of the compute paths the training
//! loop actually spends time in: the matmul kernel, batch mask
//! application, and a model forward pass.
//!
//! The `parallel` feature routes these through rayon; the `_seq`
//! functions are the fallback bodies that the crate compiles to when the
//! feature is off. Benchmarking both from one binary shows the speedup
//! (or, on one core, the overhead) without rebuilding.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use dropdim::model::{make_batch, Model, ModelConfig, RegContext};
use dropdim::parallel;
use dropdim::tasks::{generate, TaskKind, TaskSpec};
use dropdim::tensor::{matmul2, matmul2_seq, Tape};

fn bench_matmul(c: &mut Criterion) {
    let mut group = c.benchmark_group("matmul");
    for &dim in &[64usize, 128, 256] {
        let a: Vec<f64> = (0..dim * dim).map(|i| (i % 17) as f64 * 0.1).collect();
        let b: Vec<f64> = (0..dim * dim).map(|i| (i % 13) as f64 * 0.1).collect();
        let mut out = vec![0.0; dim * dim];
        group.bench_with_input(BenchmarkId::new("parallel", dim), &dim, |bench, &d| {
            bench.iter(|| {
                matmul2(black_box(&a), black_box(&b), d, d, d, &mut out);
                black_box(out[0])
            })
        });
        group.bench_with_input(BenchmarkId::new("sequential", dim), &dim, |bench, &d| {
            bench.iter(|| {
                matmul2_seq(black_box(&a), black_box(&b), d, d, d, &mut out);
                black_box(out[0])
            })
        });
    }
    group.finish();
}

fn bench_batch_masking(c: &mut Criterion) {
    // Scaling each example's rows by its own mask multiplier is the shape
    // of work apply_dim_masks does across a batch.
    let batch = 32usize;
    let t = 64usize;
    let d = 256usize;
    let data: Vec<f64> = (0..batch * t * d).map(|i| (i % 7) as f64).collect();
    let multipliers: Vec<Vec<f64>> = (0..batch)
        .map(|b| (0..d).map(|j| if (j + b) % 10 == 0 { 0.0 } else { 1.1 }).collect())
        .collect();
    let mut group = c.benchmark_group("batch_masking");
    group.bench_function("parallel", |bench| {
        bench.iter(|| {
            let mut x = data.clone();
            parallel::chunks_mut(&mut x, t * d, |b, chunk| {
                let m = &multipliers[b];
                for row in chunk.chunks_mut(d) {
                    for (v, s) in row.iter_mut().zip(m) {
                        *v *= s;
                    }
                }
            });
            black_box(x[0])
        })
    });
    group.bench_function("sequential", |bench| {
        bench.iter(|| {
            let mut x = data.clone();
            parallel::chunks_mut_seq(&mut x, t * d, |b, chunk| {
                let m = &multipliers[b];
                for row in chunk.chunks_mut(d) {
                    for (v, s) in row.iter_mut().zip(m) {
                        *v *= s;
                    }
                }
            });
            black_box(x[0])
        })
    });
    group.finish();
}

fn bench_forward(c: &mut Criterion) {
    // One teacher-forced forward pass of the toy model over a batch; the
    // feature flag decides which kernel path runs inside.
    let spec = TaskSpec {
        n_train: 16,
        n_dev: 1,
        n_test: 1,
        ..TaskSpec::new(TaskKind::Copy)
    };
    let dataset = generate(&spec, 11).expect("dataset");
    let refs: Vec<_> = dataset.train.iter().collect();
    let model = Model::new(ModelConfig::toy(spec.vocab, spec.vocab), 11).expect("model");
    let batch = make_batch(&refs, model.config.frame_dim).expect("batch");
    c.bench_function("forward_toy_batch16", |bench| {
        bench.iter(|| {
            let mut tape = Tape::new();
            let mut ctx = RegContext::inference(&batch.example_ids);
            let (logits, _) = model
                .forward(&mut tape, &batch, &mut ctx, None)
                .expect("forward");
            black_box(logits)
        })
    });
}

criterion_group!(benches, bench_matmul, bench_batch_masking, bench_forward);
criterion_main!(benches);
