//! Softmax cross-entropy, the classifier loss used in every supervised
//! stage.

use crate::error::{Error, Result};

/// Negative log-likelihood of `label` under a softmax over `logits`, with
/// the max-shift for numerical stability. Also returns the gradient with
/// respect to the logits: `softmax - one_hot(label)`.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if logits.is_empty() {
        return Err(Error::EmptyInput("softmax_cross_entropy"));
    }
    if label >= logits.len() {
        return Err(Error::LabelOutOfRange {
            label,
            classes: logits.len(),
        });
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("softmax_cross_entropy: logits"));
    }
    let p = softmax(logits);
    // recompute the log-sum-exp directly for the loss; more accurate than
    // ln(p[label]) when the correct class dominates
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse: f64 = logits.iter().map(|v| (v - m).exp()).sum::<f64>().ln() + m;
    let loss = lse - logits[label];
    let mut grad = p;
    grad[label] -= 1.0;
    Ok((loss, grad))
}

/// Stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
