//! Focal loss over the two per-kind tasks: binary expression-frame
//! classification (sigmoid) and 4-way onset/apex/offset/background
//! classification (softmax). Modulating factors act on the predicted
//! probability.

use super::windows::Targets;
use crate::feature_io::ExpressionKind;
use crate::model::{CHANNELS_PER_KIND, HEAD_CHANNELS};
use crate::numerics::{Real, Tensor};

pub const PROB_CLAMP: f64 = 1e-7;

/// Converts a gradient entry, flushing values below the smallest normal of
/// `T` to zero; subnormals slow every later matrix product.
fn flush<T: Real>(v: f64) -> T {
    let t = T::from_f64_lossy(v);
    if t.abs() < T::min_positive_value() {
        T::zero()
    } else {
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocalParams {
    pub alpha: f64,
    pub gamma: f64,
}

/// `(p, dclamp/dp)` with p clamped to `[1e-7, 1 − 1e-7]`.
fn clamp_prob(p: f64) -> (f64, f64) {
    if p < PROB_CLAMP {
        (PROB_CLAMP, 0.0)
    } else if p > 1.0 - PROB_CLAMP {
        (1.0 - PROB_CLAMP, 0.0)
    } else {
        (p, 1.0)
    }
}

/// `γ·x^(γ−1)`, taken as 0 when γ = 0.
fn dpow(x: f64, gamma: f64) -> f64 {
    if gamma == 0.0 {
        0.0
    } else {
        gamma * x.powf(gamma - 1.0)
    }
}

/// Binary focal term and its derivative with respect to `p`.
pub fn binary_focal(p: f64, y: f64, fp: FocalParams) -> (f64, f64) {
    let (q, dq) = clamp_prob(p);
    let FocalParams { alpha, gamma } = fp;
    let loss = -alpha * (1.0 - q).powf(gamma) * y * q.ln() - (1.0 - alpha) * q.powf(gamma) * (1.0 - y) * (1.0 - q).ln();
    let d_pos = -alpha * y * (-dpow(1.0 - q, gamma) * q.ln() + (1.0 - q).powf(gamma) / q);
    let d_neg = -(1.0 - alpha) * (1.0 - y) * (dpow(q, gamma) * (1.0 - q).ln() - q.powf(gamma) / (1.0 - q));
    (loss, (d_pos + d_neg) * dq)
}

/// Multi-class focal term at the target probability and its derivative.
pub fn class_focal(p_target: f64, fp: FocalParams) -> (f64, f64) {
    let (q, dq) = clamp_prob(p_target);
    let FocalParams { alpha, gamma } = fp;
    let loss = -alpha * (1.0 - q).powf(gamma) * q.ln();
    let d = -alpha * (-dpow(1.0 - q, gamma) * q.ln() + (1.0 - q).powf(gamma) / q);
    (loss, d * dq)
}

/// Total loss over both kinds and both tasks, each averaged over the first
/// `valid_len` frames, plus its gradient with respect to the `10 × L` logits.
pub fn focal_loss<T: Real>(
    logits: &Tensor<T>,
    targets: &Targets,
    valid_len: usize,
    fp: FocalParams,
) -> (f64, Tensor<T>) {
    let len = logits.shape()[1];
    assert_eq!(
        logits.shape()[0],
        HEAD_CHANNELS,
        "focal_loss expects the 10-channel head"
    );
    let z = logits.data();
    let mut grad = vec![T::zero(); HEAD_CHANNELS * len];
    if valid_len == 0 {
        return (0.0, Tensor::from_vec(logits.shape(), grad).expect("shape"));
    }
    let norm = 1.0 / valid_len as f64;
    let mut total = 0.0;
    for kind in ExpressionKind::ALL {
        let base = kind.index() * CHANNELS_PER_KIND;
        let kt = targets.kind(kind);
        for t in 0..valid_len {
            let logit = z[base * len + t].as_f64();
            let p = 1.0 / (1.0 + (-logit).exp());
            let (l, dp) = binary_focal(p, kt.expression[t] as f64, fp);
            total += l * norm;
            grad[base * len + t] = flush(dp * p * (1.0 - p) * norm);

            let row = |k: usize| (base + 1 + k) * len + t;
            let logits4: [f64; 4] = std::array::from_fn(|k| z[row(k)].as_f64());
            let max = logits4.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: [f64; 4] = logits4.map(|v| (v - max).exp());
            let sum: f64 = e.iter().sum();
            let probs = e.map(|v| v / sum);
            let c = kt.class[t].index();
            let (l, dpc) = class_focal(probs[c], fp);
            total += l * norm;
            for k in 0..4 {
                let delta = if k == c { 1.0 } else { 0.0 };
                grad[row(k)] = flush(dpc * probs[c] * (delta - probs[k]) * norm);
            }
        }
    }
    (total, Tensor::from_vec(logits.shape(), grad).expect("shape"))
}
