//! Scalar reference forms of the two training losses.
//!
//! The tape ops compute the same quantities; these plain versions are handy
//! for evaluation code that has no tape.

use crate::error::{Error, Result};

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `-Σ log σ(p) - Σ log(1 - σ(n))` in log-sum-exp form.
pub fn bce_with_logits(pos_logits: &[f64], neg_logits: &[f64]) -> Result<f64> {
    if pos_logits.is_empty() && neg_logits.is_empty() {
        return Err(Error::Contract(
            "bce_with_logits needs at least one logit".into(),
        ));
    }
    Ok(pos_logits.iter().map(|&x| softplus(-x)).sum::<f64>()
        + neg_logits.iter().map(|&x| softplus(x)).sum::<f64>())
}

/// `-log softmax(logits)[class]`.
pub fn cross_entropy(logits: &[f64], class: usize) -> Result<f64> {
    if class >= logits.len() {
        return Err(Error::Contract(format!(
            "class {class} outside {} logits",
            logits.len()
        )));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    Ok(lse - logits[class])
}
