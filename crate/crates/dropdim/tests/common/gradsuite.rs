//! The gradient-verification suite, shared by the per-op test target and
//! the acceptance criteria. Each function returns the worst combined
//! absolute/relative disagreement against central finite differences;
//! callers apply the tolerance appropriate to the group.

use super::{grad_check, wiggle};

use dropdim::model::{
    make_batch, multi_head_attention, AttnWeights, Model, ModelConfig, RegContext,
};
use dropdim::reg::{
    apply_attention_drop, apply_dim_masks, apply_dropout, apply_head_scale, AttnRegKind,
    BernoulliReading, DimMask, HeadMask, Mode, Part, RegKind, RegularizerSpec,
};
use dropdim::rng::{self, Lane};
use dropdim::tasks::{generate, TaskKind, TaskSpec};
use dropdim::tensor::{Tape, Tensor};

pub const STEP: f64 = 1e-5;

fn t2(rows: usize, cols: usize, phase: f64) -> Tensor {
    Tensor::from_vec(&[rows, cols], wiggle(rows * cols, phase))
        .unwrap()
        .with_grad()
}

fn t3(b: usize, rows: usize, cols: usize, phase: f64) -> Tensor {
    Tensor::from_vec(&[b, rows, cols], wiggle(b * rows * cols, phase))
        .unwrap()
        .with_grad()
}

fn positive2(rows: usize, cols: usize, phase: f64) -> Tensor {
    let data: Vec<f64> = wiggle(rows * cols, phase).iter().map(|v| v.abs() + 0.2).collect();
    Tensor::from_vec(&[rows, cols], data).unwrap().with_grad()
}

fn positive3(b: usize, rows: usize, cols: usize, phase: f64) -> Tensor {
    let data: Vec<f64> = wiggle(b * rows * cols, phase).iter().map(|v| v.abs() + 0.2).collect();
    Tensor::from_vec(&[b, rows, cols], data).unwrap().with_grad()
}

/// Differentiable-everywhere ops and compositions: tolerance 1e-4.
pub fn nonlinear_op_errors() -> Vec<(&'static str, f64)> {
    let mut out = Vec::new();

    out.push((
        "add/mul/relu/scale",
        grad_check(
            |tape, ids| {
                let s = tape.add(ids[0], ids[1]).unwrap();
                let m = tape.mul(s, ids[2]).unwrap();
                let r = tape.relu(m).unwrap();
                let sc = tape.scale(r, 1.7).unwrap();
                tape.sum_all(sc).unwrap()
            },
            &[t2(2, 3, 0.1), t2(2, 3, 1.3), t2(2, 3, 2.9)],
            STEP,
        ),
    ));

    out.push((
        "add_bias",
        grad_check(
            |tape, ids| {
                let y = tape.add_bias(ids[0], ids[1]).unwrap();
                let w = tape.mul(y, ids[2]).unwrap();
                tape.sum_all(w).unwrap()
            },
            &[
                t3(2, 3, 4, 0.2),
                Tensor::from_vec(&[4], wiggle(4, 5.0)).unwrap().with_grad(),
                t3(2, 3, 4, 7.7),
            ],
            STEP,
        ),
    ));

    out.push((
        "matmul [m,k]x[k,n]",
        grad_check(
            |tape, ids| {
                let c = tape.matmul(ids[0], ids[1]).unwrap();
                tape.sum_all(c).unwrap()
            },
            &[t2(2, 3, 0.4), t2(3, 4, 1.1)],
            STEP,
        ),
    ));
    out.push((
        "matmul [B,m,k]x[k,n]",
        grad_check(
            |tape, ids| {
                let c = tape.matmul(ids[0], ids[1]).unwrap();
                tape.sum_all(c).unwrap()
            },
            &[t3(2, 2, 3, 0.9), t2(3, 4, 2.2)],
            STEP,
        ),
    ));
    out.push((
        "matmul [B,m,k]x[B,k,n]",
        grad_check(
            |tape, ids| {
                let c = tape.matmul(ids[0], ids[1]).unwrap();
                tape.sum_all(c).unwrap()
            },
            &[t3(2, 2, 3, 1.6), t3(2, 3, 4, 3.3)],
            STEP,
        ),
    ));
    out.push((
        "bmm_nt",
        grad_check(
            |tape, ids| {
                let c = tape.bmm_nt(ids[0], ids[1]).unwrap();
                tape.sum_all(c).unwrap()
            },
            &[t3(2, 2, 3, 2.8), t3(2, 4, 3, 4.1)],
            STEP,
        ),
    ));

    out.push((
        "transpose",
        grad_check(
            |tape, ids| {
                let t = tape.transpose(ids[0]).unwrap();
                let w = tape.mul(t, ids[1]).unwrap();
                tape.sum_all(w).unwrap()
            },
            &[t2(3, 4, 0.5), t2(4, 3, 6.1)],
            STEP,
        ),
    ));
    out.push((
        "slice_cols/concat_cols",
        grad_check(
            |tape, ids| {
                let a = tape.slice_cols(ids[0], 1, 2).unwrap();
                let b = tape.slice_cols(ids[0], 3, 2).unwrap();
                let joined = tape.concat_cols(&[a, b]).unwrap();
                let w = tape.mul(joined, ids[1]).unwrap();
                tape.sum_all(w).unwrap()
            },
            &[t3(2, 2, 6, 1.0), t3(2, 2, 4, 2.4)],
            STEP,
        ),
    ));
    out.push((
        "stride_rows",
        grad_check(
            |tape, ids| {
                let s = tape.stride_rows(ids[0], 2).unwrap();
                let w = tape.mul(s, ids[1]).unwrap();
                tape.sum_all(w).unwrap()
            },
            &[t3(2, 5, 3, 3.0), t3(2, 3, 3, 0.8)],
            STEP,
        ),
    ));

    out.push((
        "softmax_rows",
        grad_check(
            |tape, ids| {
                let p = tape.softmax_rows(ids[0]).unwrap();
                let w = tape.mul(p, ids[1]).unwrap();
                tape.sum_all(w).unwrap()
            },
            &[t3(2, 3, 4, 0.3), t3(2, 3, 4, 5.5)],
            STEP,
        ),
    ));
    out.push((
        "row_renorm_uniform",
        grad_check(
            |tape, ids| {
                let p = tape.row_renorm_uniform(ids[0]).unwrap();
                let w = tape.mul(p, ids[1]).unwrap();
                tape.sum_all(w).unwrap()
            },
            &[positive2(4, 5, 0.7), t2(4, 5, 8.8)],
            STEP,
        ),
    ));
    out.push((
        "layernorm",
        grad_check(
            |tape, ids| {
                let y = tape.layernorm(ids[0], ids[1], ids[2], 1e-5).unwrap();
                let w = tape.mul(y, ids[3]).unwrap();
                tape.sum_all(w).unwrap()
            },
            &[
                t3(2, 3, 6, 1.2),
                Tensor::from_vec(&[6], wiggle(6, 2.0)).unwrap().with_grad(),
                Tensor::from_vec(&[6], wiggle(6, 3.0)).unwrap().with_grad(),
                t3(2, 3, 6, 9.1),
            ],
            STEP,
        ),
    ));

    let labels: Vec<u32> = vec![2, 4, 0, 1, 5, 0]; // two PADs excluded from the loss
    out.push((
        "cross_entropy eps=0.1",
        grad_check(
            |tape, ids| tape.cross_entropy_label_smoothed(ids[0], &labels, 0.1, 0).unwrap(),
            &[t3(2, 3, 6, 1.9)],
            STEP,
        ),
    ));
    out.push((
        "cross_entropy eps=0",
        grad_check(
            |tape, ids| tape.cross_entropy_label_smoothed(ids[0], &labels, 0.0, 0).unwrap(),
            &[t3(2, 3, 6, 6.2)],
            STEP,
        ),
    ));

    out.push((
        "apply_attention_drop",
        grad_check(
            |tape, ids| {
                let mut r = rng::lane(78, Lane::Mask);
                let y = apply_attention_drop(tape, ids[0], 0.3, Mode::Train, &mut r).unwrap();
                let w = tape.mul(y, ids[1]).unwrap();
                tape.sum_all(w).unwrap()
            },
            &[positive3(2, 3, 4, 2.6), t3(2, 3, 4, 5.8)],
            STEP,
        ),
    ));

    out.push(("attention block", attention_block_error()));
    out
}

/// Linear maps (the chain rule is exact, so finite differences agree to
/// rounding): tolerance 1e-8.
pub fn linear_op_errors() -> Vec<(&'static str, f64)> {
    let mut out = Vec::new();

    let ids: Vec<u32> = vec![2, 0, 3, 3, 1, 2];
    out.push((
        "embedding",
        grad_check(
            |tape, leaf_ids| {
                let emb = tape.embedding(leaf_ids[0], &ids, &[2, 3]).unwrap();
                let w = tape.mul(emb, leaf_ids[1]).unwrap();
                tape.sum_all(w).unwrap()
            },
            &[t2(4, 5, 0.6), t3(2, 3, 5, 4.4)],
            STEP,
        ),
    ));
    out.push((
        "mean_all",
        grad_check(|tape, ids| tape.mean_all(ids[0]).unwrap(), &[t3(2, 3, 4, 2.7)], STEP),
    ));

    let mut r = rng::lane(31, Lane::Mask);
    let masks: Vec<DimMask> = (0..2)
        .map(|_| {
            DimMask::sample_random(6, 0.3, BernoulliReading::DropProbability, true, &mut r).unwrap()
        })
        .collect();
    out.push((
        "apply_dim_masks random",
        grad_check(
            |tape, ids| {
                let y = apply_dim_masks(tape, ids[0], &masks, Mode::Train).unwrap();
                let w = tape.mul(y, ids[1]).unwrap();
                tape.sum_all(w).unwrap()
            },
            &[t3(2, 3, 6, 0.2), t3(2, 3, 6, 7.3)],
            STEP,
        ),
    ));

    let span = DimMask::sample_span(6, 3, &mut r).unwrap();
    out.push((
        "apply_dim_masks span",
        grad_check(
            |tape, ids| {
                let y = apply_dim_masks(tape, ids[0], std::slice::from_ref(&span), Mode::Train)
                    .unwrap();
                tape.sum_all(y).unwrap()
            },
            &[t2(4, 6, 3.9)],
            STEP,
        ),
    ));

    out.push((
        "apply_dropout",
        grad_check(
            |tape, ids| {
                let mut r = rng::lane(77, Lane::Mask);
                let y = apply_dropout(tape, ids[0], 0.4, Mode::Train, &mut r).unwrap();
                tape.sum_all(y).unwrap()
            },
            &[t2(3, 5, 1.4)],
            STEP,
        ),
    ));

    let head_masks = vec![
        HeadMask { heads: 2, dropped: vec![0], norm: 2.0 },
        HeadMask::identity(2),
    ];
    out.push((
        "apply_head_scale",
        grad_check(
            |tape, ids| {
                let y = apply_head_scale(tape, ids[0], 0, &head_masks, Mode::Train).unwrap();
                let w = tape.mul(y, ids[1]).unwrap();
                tape.sum_all(w).unwrap()
            },
            &[t3(2, 3, 4, 4.7), t3(2, 3, 4, 0.9)],
            STEP,
        ),
    ));
    out
}

fn attention_block_error() -> f64 {
    let d = 4;
    let spec = RegularizerSpec {
        kind: RegKind::None,
        p: 0.0,
        alpha: 0,
        part: Part::All,
        attn: AttnRegKind::None,
        attn_p: 0.0,
    };
    let example_ids = [0u64, 1];
    grad_check(
        |tape, ids| {
            let w = AttnWeights { wq: ids[1], wk: ids[2], wv: ids[3], wo: ids[4] };
            let mut rng = rng::lane(5, Lane::Mask);
            let mut ctx = RegContext::train(spec, &mut rng, &example_ids, 0);
            let out = multi_head_attention(
                tape,
                ids[0],
                ids[0],
                &w,
                2,
                None,
                0.0,
                dropdim::reg::Location::new(
                    dropdim::reg::Side::Encoder,
                    0,
                    dropdim::reg::Site::SelfAttn,
                ),
                &mut ctx,
                None,
            )
            .unwrap();
            let weighted = tape.mul(out, ids[5]).unwrap();
            tape.sum_all(weighted).unwrap()
        },
        &[
            t3(2, 3, d, 0.1),
            t2(d, d, 1.0),
            t2(d, d, 2.0),
            t2(d, d, 3.0),
            t2(d, d, 4.0),
            t3(2, 3, d, 5.0),
        ],
        STEP,
    )
}

/// End-to-end: loss gradient w.r.t. every parameter of a small model in
/// train mode with seed-frozen masks, spot-checked against central
/// differences at several entries per parameter tensor. Returns the
/// worst error and the number of entries probed.
pub fn model_e2e_error() -> (f64, usize) {
    let task = TaskSpec {
        vocab: 8,
        len_min: 3,
        len_max: 5,
        n_train: 2,
        n_dev: 1,
        n_test: 1,
        ..TaskSpec::new(TaskKind::Copy)
    };
    let dataset = generate(&task, 3).unwrap();
    let refs: Vec<_> = dataset.train.iter().collect();

    let mut config = ModelConfig::toy(task.vocab, task.vocab);
    config.enc_layers = 1;
    config.dec_layers = 1;
    config.heads = 2;
    config.d_model = 8;
    config.ffn_dim = 16;
    let spec = RegularizerSpec {
        kind: RegKind::DropdimRandom,
        p: 0.3,
        alpha: 0,
        part: Part::All,
        attn: AttnRegKind::DropAttention,
        attn_p: 0.2,
    };
    config.reg = spec;
    let mut model = Model::new(config, 5).unwrap();
    let batch = make_batch(&refs, model.config.frame_dim).unwrap();

    let eval = |model: &Model| -> (f64, Vec<Option<Vec<f64>>>) {
        let mut tape = Tape::new();
        // A fresh rng with the same seed each call freezes the masks.
        let mut mask_rng = rng::lane(99, Lane::Mask);
        let mut ctx = RegContext::train(spec, &mut mask_rng, &batch.example_ids, 0);
        let (logits, fwd) = model.forward(&mut tape, &batch, &mut ctx, None).unwrap();
        let loss = model.loss(&mut tape, logits, &batch).unwrap();
        let value = tape.value(loss).data()[0];
        tape.backward(loss).unwrap();
        let grads = fwd.iter().map(|(_, id)| tape.take_grad(id)).collect();
        (value, grads)
    };

    let (_, analytic) = eval(&model);
    assert_eq!(analytic.len(), model.params.len());

    let mut checked = 0usize;
    let mut worst: f64 = 0.0;
    for idx in 0..model.params.len() {
        let n = model.params.at(idx).1.numel();
        let mut picks = vec![0, n / 3, (2 * n) / 3, n - 1];
        picks.dedup();
        let grad = analytic[idx]
            .as_ref()
            .unwrap_or_else(|| panic!("no gradient for {}", model.params.at(idx).0));
        for &i in &picks {
            model.params.at_mut(idx).1.data_mut()[i] += STEP;
            let (f_plus, _) = eval(&model);
            model.params.at_mut(idx).1.data_mut()[i] -= 2.0 * STEP;
            let (f_minus, _) = eval(&model);
            model.params.at_mut(idx).1.data_mut()[i] += STEP;
            let numeric = (f_plus - f_minus) / (2.0 * STEP);
            let err = (grad[i] - numeric).abs() / grad[i].abs().max(numeric.abs()).max(1.0);
            worst = worst.max(err);
            checked += 1;
        }
    }
    (worst, checked)
}
