//! Dual-stream features, logistic head, training and augmentation.

mod augment;
mod features;
mod head;
mod train;

use serde::{Deserialize, Serialize};

pub use augment::{augment_sample, AugmentConfig, AugmentedSample};
pub use features::{
    flow_feature_names, flow_features, percentiles, represent, rgb_features, Regions, FACE_RADIUS_FRAC,
    MAGNITUDE_FLOW_NAMES, RAW_FLOW_NAMES, RGB_NAMES, RING_WIDTH_FRAC,
};
pub use head::{LinearHead, HEAD_SCHEMA_VERSION};
pub use train::{loss_and_gradient, train, TrainConfig, TrainReport, TrainSet};

use crate::flow::FlowField;
use crate::geometry::PreprocessedPair;
use crate::Result;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamMode {
    FlowOnly,
    RgbOnly,
    #[default]
    Dual,
}

impl StreamMode {
    pub const ALL: [StreamMode; 3] = [StreamMode::FlowOnly, StreamMode::RgbOnly, StreamMode::Dual];

    pub fn name(self) -> &'static str {
        match self {
            StreamMode::FlowOnly => "flow_only",
            StreamMode::RgbOnly => "rgb_only",
            StreamMode::Dual => "dual",
        }
    }

    pub fn uses_flow(self) -> bool {
        self != StreamMode::RgbOnly
    }

    pub fn uses_rgb(self) -> bool {
        self != StreamMode::FlowOnly
    }
}

impl std::str::FromStr for StreamMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| crate::Error::InvalidConfig(format!("unknown mode `{s}`")))
    }
}

/// How the flow field enters the flow stream.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowRepresentation {
    Raw,
    Magnitude,
    #[default]
    ClippedMagnitude,
}

impl FlowRepresentation {
    pub const ALL: [FlowRepresentation; 3] =
        [FlowRepresentation::Raw, FlowRepresentation::Magnitude, FlowRepresentation::ClippedMagnitude];

    pub fn name(self) -> &'static str {
        match self {
            FlowRepresentation::Raw => "raw_flow",
            FlowRepresentation::Magnitude => "magnitude",
            FlowRepresentation::ClippedMagnitude => "clipped_magnitude",
        }
    }
}

impl std::str::FromStr for FlowRepresentation {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" | "raw_flow" => Ok(FlowRepresentation::Raw),
            "magnitude" => Ok(FlowRepresentation::Magnitude),
            "clipped" | "clipped_magnitude" => Ok(FlowRepresentation::ClippedMagnitude),
            _ => Err(crate::Error::InvalidConfig(format!("unknown flow representation `{s}`"))),
        }
    }
}

/// Which features a head consumes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureLayout {
    pub mode: StreamMode,
    pub flow_repr: FlowRepresentation,
}

impl FeatureLayout {
    pub fn new(mode: StreamMode, flow_repr: FlowRepresentation) -> Self {
        Self { mode, flow_repr }
    }

    pub fn flow_dim(&self) -> usize {
        flow_feature_names(self.flow_repr).len()
    }

    pub fn dim(&self) -> usize {
        self.flow_dim() + RGB_NAMES.len()
    }

    /// Feature names, flow stream first.
    pub fn names(&self) -> Vec<String> {
        let flow = flow_feature_names(self.flow_repr).iter().map(|n| format!("flow.{n}"));
        let rgb = RGB_NAMES.iter().map(|n| format!("rgb.{n}"));
        flow.chain(rgb).collect()
    }

    pub fn describe(&self) -> String {
        format!("{}/{}", self.mode.name(), self.flow_repr.name())
    }
}

/// Both feature streams; the stream a mode does not use is all zeros.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub layout: FeatureLayout,
    pub flow: Vec<f64>,
    pub rgb: Vec<f64>,
}

impl FeatureVector {
    /// Builds a vector from precomputed streams, zeroing the unused one.
    pub fn from_streams(layout: FeatureLayout, flow: Vec<f64>, rgb: Vec<f64>) -> Result<Self> {
        if flow.len() != layout.flow_dim() || rgb.len() != RGB_NAMES.len() {
            return Err(crate::Error::DimensionMismatch(format!(
                "feature streams {}+{} for layout {}",
                flow.len(),
                rgb.len(),
                layout.describe()
            )));
        }
        if flow.iter().chain(&rgb).any(|v| !v.is_finite()) {
            return Err(crate::Error::NonFinite("features"));
        }
        let flow = if layout.mode.uses_flow() { flow } else { vec![0.0; flow.len()] };
        let rgb = if layout.mode.uses_rgb() { rgb } else { vec![0.0; rgb.len()] };
        Ok(Self { layout, flow, rgb })
    }

    pub fn values(&self) -> Vec<f64> {
        self.flow.iter().chain(&self.rgb).copied().collect()
    }
}

/// Features of a preprocessed triplet and its f1→f3 flow.
pub fn extract_features(pair: &PreprocessedPair, flow: &FlowField, layout: FeatureLayout) -> Result<FeatureVector> {
    let side = pair.f1_crop.width() as f64;
    let flow_feats = if layout.mode.uses_flow() {
        flow_features(flow, layout.flow_repr, side)?
    } else {
        vec![0.0; layout.flow_dim()]
    };
    let rgb_feats = if layout.mode.uses_rgb() {
        rgb_features(&pair.f2_crop)?
    } else {
        vec![0.0; RGB_NAMES.len()]
    };
    FeatureVector::from_streams(layout, flow_feats, rgb_feats)
}
