//! Helpers shared by the integration-test targets.

#![allow(dead_code)]

pub mod gradsuite;

use dropdim::tensor::{NodeId, Tape, Tensor};

/// Force Bernoulli drop reading of Algorithm-style masks in brute form:
/// `(h .* keep) * (D / kept)` evaluated with plain loops, independent of
/// the library's mask application path.
pub fn dim_mask_brute(h: &[f64], t: usize, d: usize, dropped: &[usize], kept: usize) -> Vec<f64> {
    assert_eq!(h.len(), t * d);
    let norm = d as f64 / kept as f64;
    let mut out = vec![0.0; t * d];
    for ti in 0..t {
        for j in 0..d {
            let keep = if dropped.contains(&j) { 0.0 } else { 1.0 };
            out[ti * d + j] = (h[ti * d + j] * keep) * norm;
        }
    }
    out
}

/// Max combined absolute/relative disagreement between an analytic
/// gradient and central finite differences.
///
/// `build` must be a pure function of the leaf values: called repeatedly
/// with perturbed copies of `inputs`, it re-derives the same graph every
/// time (seed any randomness inside). It returns the scalar root node.
pub fn grad_check<F>(build: F, inputs: &[Tensor], step: f64) -> f64
where
    F: Fn(&mut Tape, &[NodeId]) -> NodeId,
{
    let eval = |tensors: &[Tensor]| -> (f64, Vec<Option<Vec<f64>>>) {
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = tensors.iter().map(|t| tape.leaf(t.clone())).collect();
        let root = build(&mut tape, &ids);
        let value = {
            let v = tape.value(root);
            assert_eq!(v.numel(), 1, "grad_check root must be a scalar");
            v.data()[0]
        };
        tape.backward(root).expect("backward");
        let grads = ids.iter().map(|&id| tape.grad(id).map(|g| g.to_vec())).collect();
        (value, grads)
    };

    let (_, analytic) = eval(inputs);
    let mut worst: f64 = 0.0;
    for (k, tensor) in inputs.iter().enumerate() {
        let grad = analytic[k]
            .as_ref()
            .unwrap_or_else(|| panic!("input {k} received no gradient"));
        for i in 0..tensor.numel() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[i] += step;
            let (f_plus, _) = eval(&plus);
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[i] -= step;
            let (f_minus, _) = eval(&minus);
            let numeric = (f_plus - f_minus) / (2.0 * step);
            let err = (grad[i] - numeric).abs() / grad[i].abs().max(numeric.abs()).max(1.0);
            worst = worst.max(err);
        }
    }
    worst
}

/// Deterministic pseudo-random data without an rng dependency: signed
/// values with magnitude in [0.05, 0.95], so finite differences never
/// straddle ReLU's kink at zero.
pub fn wiggle(n: usize, phase: f64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let s = (phase + i as f64 * 0.7391).sin();
            s.signum() * (s.abs() * 0.9 + 0.05)
        })
        .collect()
}
