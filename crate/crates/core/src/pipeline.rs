//! End-to-end verdict for one triplet, shared by the CLI and the service.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::classifier::{extract_features, flow_feature_names, FeatureVector, LinearHead, StreamMode, RGB_NAMES};
use crate::flow::{estimate_flow, FlowConfig, FlowField};
use crate::geometry::{preprocess_triplet, FrameAnnotation, PreprocessConfig, PreprocessedPair};
use crate::imaging::ImageBuffer;
use crate::Result;

pub const LIVE_THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub preprocess: PreprocessConfig,
    pub flow: FlowConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StreamFeatures {
    pub flow: BTreeMap<String, f64>,
    pub rgb: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub score: f64,
    pub label: String,
    pub mode: StreamMode,
    pub per_stream_features: StreamFeatures,
}

impl Verdict {
    pub fn is_live(&self) -> bool {
        self.score > LIVE_THRESHOLD
    }

    /// Canonical JSON text; the CLI and the service both emit exactly this.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Preprocessed crops and the f1 -> f3 flow of a triplet.
pub fn analyze(
    frames: [&ImageBuffer; 3],
    annotations: [&FrameAnnotation; 3],
    cfg: &PipelineConfig,
) -> Result<(PreprocessedPair, FlowField)> {
    let pair = preprocess_triplet(frames, annotations, &cfg.preprocess)?;
    let flow = estimate_flow(&pair.f1_crop, &pair.f3_crop, &cfg.flow)?;
    Ok((pair, flow))
}

/// Scores a triplet with `head`; the feature layout comes from the head.
pub fn classify(
    frames: [&ImageBuffer; 3],
    annotations: [&FrameAnnotation; 3],
    head: &LinearHead,
    cfg: &PipelineConfig,
) -> Result<Verdict> {
    head.validate()?;
    if !head.is_fitted() {
        return Err(crate::Error::UnfittedHead);
    }
    let (pair, flow) = analyze(frames, annotations, cfg)?;
    let fv = extract_features(&pair, &flow, head.layout)?;
    verdict(head, &fv)
}

/// Verdict for precomputed features.
pub fn verdict(head: &LinearHead, fv: &FeatureVector) -> Result<Verdict> {
    let score = head.score(fv)?;
    let named = |names: &[&str], vals: &[f64], used: bool| -> BTreeMap<String, f64> {
        if !used {
            return BTreeMap::new();
        }
        names.iter().map(|n| n.to_string()).zip(vals.iter().copied()).collect()
    };
    Ok(Verdict {
        score,
        label: if score > LIVE_THRESHOLD { "live" } else { "spoof" }.to_string(),
        mode: fv.layout.mode,
        per_stream_features: StreamFeatures {
            flow: named(flow_feature_names(fv.layout.flow_repr), &fv.flow, fv.layout.mode.uses_flow()),
            rgb: named(&RGB_NAMES, &fv.rgb, fv.layout.mode.uses_rgb()),
        },
    })
}
