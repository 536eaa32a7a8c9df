//! Full-batch gradient descent on a class-balanced logistic loss.

use serde::{Deserialize, Serialize};

use super::head::{sigmoid, LinearHead, Standardization};
use super::FeatureLayout;
use crate::{Error, Result};

/// Features below this relative spread are treated as constant and dropped.
const CONSTANT_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Upper bound on the step; the step actually taken is
    /// `min(lr, 1 / L)` with `L` a Lipschitz bound of the gradient, which
    /// keeps the loss from increasing.
    pub lr: f64,
    pub l2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 3000,
            lr: 1.0,
            l2: 1e-3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || !(self.lr > 0.0 && self.lr.is_finite()) || !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::InvalidConfig(format!("train config {self:?}")));
        }
        Ok(())
    }
}

/// Raw feature rows with liveness labels (`true` = live).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainSet {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<bool>,
}

impl TrainSet {
    pub fn push(&mut self, x: Vec<f64>, live: bool) {
        self.x.push(x);
        self.y.push(live);
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub loss_history: Vec<f64>,
    pub step: f64,
    pub dropped_features: Vec<String>,
    pub train_accuracy: f64,
    /// True when no epoch increased the loss.
    pub monotone: bool,
}

/// Per-sample weights giving each class half the total mass.
fn balanced_weights(y: &[bool]) -> Result<Vec<f64>> {
    let pos = y.iter().filter(|&&l| l).count();
    let neg = y.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    Ok(y.iter()
        .map(|&l| 0.5 / if l { pos as f64 } else { neg as f64 })
        .collect())
}

/// Weighted logistic loss plus `l2/2 |w|^2` and its gradient. `params` holds
/// the weights followed by the bias (which is not regularized).
pub fn loss_and_gradient(params: &[f64], z: &[Vec<f64>], y: &[bool], sw: &[f64], l2: f64) -> (f64, Vec<f64>) {
    let d = params.len() - 1;
    let (w, b) = (&params[..d], params[d]);
    let mut loss = 0.0;
    let mut grad = vec![0.0; d + 1];
    for ((zi, &yi), &si) in z.iter().zip(y).zip(sw) {
        let t = b + zi.iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
        // log(1 + e^-t) for positives, log(1 + e^t) for negatives, stably.
        let s = if yi { -t } else { t };
        loss += si * (s.max(0.0) + (-s.abs()).exp().ln_1p());
        let r = si * (sigmoid(t) - if yi { 1.0 } else { 0.0 });
        for (g, a) in grad.iter_mut().zip(zi) {
            *g += r * a;
        }
        grad[d] += r;
    }
    for (g, wi) in grad.iter_mut().zip(w) {
        *g += l2 * wi;
    }
    loss += 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>();
    (loss, grad)
}

fn standardization(x: &[Vec<f64>], d: usize) -> Standardization {
    let n = x.len() as f64;
    let mut mean = vec![0.0; d];
    for row in x {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v / n;
        }
    }
    let mut std = vec![0.0; d];
    for row in x {
        for ((s, v), m) in std.iter_mut().zip(row).zip(&mean) {
            *s += (v - m).powi(2) / n;
        }
    }
    for (s, m) in std.iter_mut().zip(&mean) {
        *s = s.sqrt();
        if *s <= CONSTANT_TOL * (1.0 + m.abs()) {
            *s = 0.0;
        }
    }
    Standardization { mean, std }
}

/// Fits a head for `layout` on `set`. Deterministic: the same inputs give
/// bit-identical weights.
pub fn train(layout: FeatureLayout, set: &TrainSet, cfg: &TrainConfig) -> Result<(LinearHead, TrainReport)> {
    cfg.validate()?;
    let d = layout.dim();
    if let Some(row) = set.x.iter().find(|r| r.len() != d) {
        return Err(Error::DimensionMismatch(format!("{} features for layout {}", row.len(), layout.describe())));
    }
    if set.x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("training features"));
    }
    let sw = balanced_weights(&set.y)?;
    let mut head = LinearHead::unfitted(layout);
    head.standardization = Some(standardization(&set.x, d));
    let z: Vec<Vec<f64>> = set.x.iter().map(|r| head.standardize(r)).collect::<Result<_>>()?;

    // The logistic Hessian is bounded by 0.25 * sum_i w_i |(z_i, 1)|^2 + l2.
    let lip = 0.25 * z.iter().zip(&sw).map(|(r, s)| s * (1.0 + r.iter().map(|v| v * v).sum::<f64>())).sum::<f64>() + cfg.l2;
    let step = cfg.lr.min(1.0 / lip);

    let mut params = vec![0.0; d + 1];
    let mut history = Vec::with_capacity(cfg.epochs + 1);
    let mut monotone = true;
    let (initial, mut grad) = loss_and_gradient(&params, &z, &set.y, &sw, cfg.l2);
    history.push(initial);
    for epoch in 1..=cfg.epochs {
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= step * g;
        }
        let (loss, g) = loss_and_gradient(&params, &z, &set.y, &sw, cfg.l2);
        if !loss.is_finite() || loss > 10.0 * initial {
            return Err(Error::TrainingDiverged { epoch, loss, initial });
        }
        if loss > history[history.len() - 1] {
            monotone = false;
        }
        history.push(loss);
        grad = g;
    }
    head.weights = params[..d].to_vec();
    head.bias = params[d];
    let st = head.standardization.as_ref().expect("set above");
    let dropped = st
        .std
        .iter()
        .zip(&head.feature_names)
        .filter(|(s, _)| **s == 0.0)
        .map(|(_, n)| n.clone())
        .collect();
    let correct = z
        .iter()
        .zip(&set.y)
        .filter(|(r, &l)| (head.logit(r) > 0.0) == l)
        .count();
    let report = TrainReport {
        loss_history: history,
        step,
        dropped_features: dropped,
        train_accuracy: correct as f64 / set.len() as f64,
        monotone,
    };
    Ok((head, report))
}
