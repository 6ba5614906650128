//! Adam with the inverse-square-root warmup schedule.
//!
//! Step size at optimizer step `t` (1-based):
//! `lr(t) = peak * min(t / warmup, sqrt(warmup / t))`
//! which ramps linearly to `peak` at `t = warmup` and decays as
//! `1/sqrt(t)` afterwards.

use crate::error::{Error, Result};
use crate::model::ParamSet;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.98;
pub const ADAM_EPS: f64 = 1e-9;

pub struct Adam {
    peak_lr: f64,
    warmup: usize,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: &ParamSet, peak_lr: f64, warmup: usize) -> Adam {
        let m = params.iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
        let v = params.iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
        Adam {
            peak_lr,
            warmup: warmup.max(1),
            t: 0,
            m,
            v,
        }
    }

    /// Step size that will be used by the next `step` call.
    pub fn next_lr(&self) -> f64 {
        lr_at(self.peak_lr, self.warmup, self.t + 1)
    }

    /// One update. `grads[i]` is the gradient for parameter `i` in
    /// `ParamSet` order (`None` = zero gradient: moments still decay).
    /// Returns the step size used.
    pub fn step(&mut self, params: &mut ParamSet, grads: &[Option<Vec<f64>>]) -> Result<f64> {
        if grads.len() != params.len() {
            return Err(Error::param(
                "grads",
                format!("got {} gradients for {} parameters", grads.len(), params.len()),
            ));
        }
        self.t += 1;
        let lr = lr_at(self.peak_lr, self.warmup, self.t);
        let bc1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
        for i in 0..params.len() {
            let (name, tensor) = params.at_mut(i);
            let data = tensor.data_mut();
            if let Some(g) = &grads[i] {
                if g.len() != data.len() {
                    return Err(Error::param(
                        "grads",
                        format!("gradient {} for `{}` has {} values, parameter has {}", i, name, g.len(), data.len()),
                    ));
                }
            }
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            for j in 0..data.len() {
                let g = grads[i].as_ref().map_or(0.0, |g| g[j]);
                m[j] = ADAM_BETA1 * m[j] + (1.0 - ADAM_BETA1) * g;
                v[j] = ADAM_BETA2 * v[j] + (1.0 - ADAM_BETA2) * g * g;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                data[j] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
        }
        Ok(lr)
    }
}

pub fn lr_at(peak: f64, warmup: usize, t: u64) -> f64 {
    let t = t as f64;
    let w = warmup as f64;
    peak * (t / w).min((w / t).sqrt())
}
