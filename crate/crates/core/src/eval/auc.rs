//! Exact ROC AUC via tie-grouped ranks.

use crate::{Error, Result};

/// Probability that a random real score exceeds a random spoof score, ties
/// counting one half. Exact: the pair count is accumulated in integers.
pub fn roc_auc(real: &[f64], spoof: &[f64]) -> Result<f64> {
    if real.is_empty() {
        return Err(Error::EmptyClass("real"));
    }
    if spoof.is_empty() {
        return Err(Error::EmptyClass("spoof"));
    }
    if real.iter().chain(spoof).any(|s| s.is_nan()) {
        return Err(Error::NonFinite("scores"));
    }
    let mut all: Vec<(f64, bool)> = real
        .iter()
        .map(|&s| (s, true))
        .chain(spoof.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // twice the Mann-Whitney U: each real counts 2 per lower spoof, 1 per tie.
    let mut twice_u: u128 = 0;
    let mut spoof_below: u128 = 0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        let (mut r, mut s) = (0u128, 0u128);
        // -0.0 and 0.0 compare equal as scores.
        while j < all.len() && all[j].0 == all[i].0 {
            if all[j].1 {
                r += 1;
            } else {
                s += 1;
            }
            j += 1;
        }
        twice_u += r * (2 * spoof_below + s);
        spoof_below += s;
        i = j;
    }
    let den = 2 * real.len() as u128 * spoof.len() as u128;
    // Evaluating the upper half as a complement makes
    // auc(a, b) + auc(b, a) == 1 hold exactly in floating point.
    Ok(if 2 * twice_u <= den {
        twice_u as f64 / den as f64
    } else {
        1.0 - (den - twice_u) as f64 / den as f64
    })
}
