//! Logistic head over standardized features.

use serde::{Deserialize, Serialize};

use super::{FeatureLayout, FeatureVector};
use crate::{Error, Result};

pub const HEAD_SCHEMA_VERSION: u32 = 1;
/// Logits are clamped so scores stay strictly inside (0, 1) in f64.
const MAX_LOGIT: f64 = 30.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    /// Zero marks a dropped (constant in training) feature.
    pub std: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearHead {
    pub schema_version: u32,
    pub layout: FeatureLayout,
    pub feature_names: Vec<String>,
    pub weights: Vec<f64>,
    pub bias: f64,
    /// `None` until the head is fitted.
    pub standardization: Option<Standardization>,
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LinearHead {
    /// Head with no standardization; scoring fails until trained.
    pub fn unfitted(layout: FeatureLayout) -> Self {
        Self {
            schema_version: HEAD_SCHEMA_VERSION,
            layout,
            feature_names: layout.names(),
            weights: vec![0.0; layout.dim()],
            bias: 0.0,
            standardization: None,
        }
    }

    /// Zero weights over identity standardization: scores 0.5 everywhere.
    pub fn zeros(layout: FeatureLayout) -> Self {
        let d = layout.dim();
        Self {
            standardization: Some(Standardization {
                mean: vec![0.0; d],
                std: vec![1.0; d],
            }),
            ..Self::unfitted(layout)
        }
    }

    pub fn is_fitted(&self) -> bool {
        self.standardization.is_some()
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Standardized copy of raw feature values; dropped features map to 0.
    pub fn standardize(&self, x: &[f64]) -> Result<Vec<f64>> {
        let st = self.standardization.as_ref().ok_or(Error::UnfittedHead)?;
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!("{} features for a {}-wide head", x.len(), self.dim())));
        }
        Ok(x.iter()
            .zip(st.mean.iter().zip(&st.std))
            .map(|(v, (m, s))| if *s > 0.0 { (v - m) / s } else { 0.0 })
            .collect())
    }

    /// Logit of standardized values.
    pub fn logit(&self, z: &[f64]) -> f64 {
        self.bias + z.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Liveness score in `(0, 1)`; higher is more live.
    pub fn score(&self, fv: &FeatureVector) -> Result<f64> {
        if fv.layout != self.layout {
            return Err(Error::LayoutMismatch {
                expected: self.layout.describe(),
                got: fv.layout.describe(),
            });
        }
        self.score_values(&fv.values())
    }

    pub fn score_values(&self, x: &[f64]) -> Result<f64> {
        let z = self.standardize(x)?;
        Ok(sigmoid(self.logit(&z).clamp(-MAX_LOGIT, MAX_LOGIT)))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.schema_version != HEAD_SCHEMA_VERSION {
            return bad(format!("head schema version {}", self.schema_version));
        }
        let d = self.layout.dim();
        if self.weights.len() != d || self.feature_names.len() != d {
            return bad(format!("head has {} weights for {d} features", self.weights.len()));
        }
        if let Some(st) = &self.standardization {
            if st.mean.len() != d || st.std.len() != d || st.std.iter().any(|s| *s < 0.0) {
                return bad("malformed standardization".into());
            }
        }
        if self.weights.iter().chain([&self.bias]).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("head weights"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let head: LinearHead = serde_json::from_str(s)?;
        head.validate()?;
        Ok(head)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::from(e).at(path))?;
        Self::from_json(&s).map_err(|e| e.at(path))
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::from(e).at(path))
    }
}
