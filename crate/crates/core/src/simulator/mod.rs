//! Synthetic approaching-face recordings with exact annotations and
//! ground-truth flow.
//!
//! Every scene is a pinhole rendering whose face-bearing surface moves from
//! relative height `start_rel_height` to `start_rel_height * approach` on a
//! linear schedule. Attack classes differ in what carries the face:
//!
//! - `Real`: a textured head (dome plus nose ridge) in front of a static wall.
//! - `PrintedPhoto` / `ScreenPhoto`: a flat photo of another person approaching
//!   the camera; prints lose contrast and saturation, screens add gamma and a
//!   point-sampled subpixel grid that aliases into moiré.
//! - `StaticVideo`: an approaching screen replaying an almost still face.
//! - `DynamicVideo`: a static screen filling the view that replays a live
//!   approach recording.
//! - `PrintedMask`: a flat printed face with eye holes held in front of a real
//!   head; the wall around it stays put.

mod dataset;
mod scene;
mod texture;

pub use dataset::{read_dataset, write_dataset, write_sequence, DiskDataset, DiskSequence};
pub use scene::Scene;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::flow::FlowField;
use crate::geometry::FrameAnnotation;
use crate::imaging::ImageBuffer;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackClass {
    Real,
    ScreenPhoto,
    PrintedPhoto,
    PrintedMask,
    DynamicVideo,
    StaticVideo,
}

impl AttackClass {
    pub const ALL: [AttackClass; 6] = [
        AttackClass::Real,
        AttackClass::ScreenPhoto,
        AttackClass::PrintedPhoto,
        AttackClass::PrintedMask,
        AttackClass::DynamicVideo,
        AttackClass::StaticVideo,
    ];

    pub const ATTACKS: [AttackClass; 5] = [
        AttackClass::ScreenPhoto,
        AttackClass::PrintedPhoto,
        AttackClass::PrintedMask,
        AttackClass::DynamicVideo,
        AttackClass::StaticVideo,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AttackClass::Real => "real",
            AttackClass::ScreenPhoto => "screen_photo",
            AttackClass::PrintedPhoto => "printed_photo",
            AttackClass::PrintedMask => "printed_mask",
            AttackClass::DynamicVideo => "dynamic_video",
            AttackClass::StaticVideo => "static_video",
        }
    }

    pub fn is_live(&self) -> bool {
        *self == AttackClass::Real
    }

    /// Classes rendered through an emissive display.
    pub fn uses_screen(&self) -> bool {
        matches!(
            self,
            AttackClass::ScreenPhoto | AttackClass::DynamicVideo | AttackClass::StaticVideo
        )
    }

    fn index(&self) -> u64 {
        AttackClass::ALL.iter().position(|c| c == self).unwrap() as u64
    }
}

impl fmt::Display for AttackClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttackClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AttackClass::ALL
            .into_iter()
            .find(|c| c.name() == s.trim())
            .ok_or_else(|| Error::InvalidSpec(format!("unknown class {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScreenArtifacts {
    /// Relative amplitude of the subpixel grid.
    pub moire_strength: f64,
    /// Subpixel grid period on the screen, face-height units.
    pub pixel_grid_period: f64,
    /// Emission gamma applied to the displayed content.
    pub gamma: f64,
}

impl Default for ScreenArtifacts {
    fn default() -> Self {
        Self {
            moire_strength: 0.08,
            pixel_grid_period: 0.0045,
            gamma: 0.85,
        }
    }
}

/// Lateral placement of the face-bearing surface over the recording.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Motion {
    /// Offset of the face centre from the optical axis at the first frame.
    pub offset: [f64; 2],
    /// Total lateral drift over the recording.
    pub drift: [f64; 2],
    /// Roll at the first and last frame, degrees.
    pub roll_deg: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub attack: AttackClass,
    pub texture_seed: u64,
    /// Nose protrusion as a fraction of face width; live faces only.
    pub depth_amplitude: Option<f64>,
    /// Ratio of start to end distance.
    pub approach: f64,
    pub start_rel_height: f64,
    pub frames: usize,
    /// Required for screen classes, absent otherwise.
    pub screen_artifacts: Option<ScreenArtifacts>,
    pub noise_sigma: f64,
    pub frame_size: [usize; 2],
    pub motion: Motion,
    /// Wobble of the replayed face of a static video, display units.
    pub static_jitter: f64,
}

impl SceneSpec {
    /// Default spec for `attack` with no lateral motion.
    pub fn new(attack: AttackClass, texture_seed: u64) -> Self {
        Self {
            attack,
            texture_seed,
            depth_amplitude: attack.is_live().then_some(0.25),
            approach: 1.5,
            start_rel_height: 0.5,
            frames: 30,
            screen_artifacts: attack.uses_screen().then(ScreenArtifacts::default),
            noise_sigma: 0.01,
            frame_size: [192, 192],
            motion: Motion::default(),
            static_jitter: if attack == AttackClass::StaticVideo { 0.004 } else { 0.0 },
        }
    }

    /// Default spec with pose nuisance and screen parameters drawn from the seed.
    pub fn sample(attack: AttackClass, texture_seed: u64) -> Self {
        let mut rng = texture::seeded(mix_seed(texture_seed, 77));
        let mut spec = Self::new(attack, texture_seed);
        let r0 = rng.random_range(-4.0..4.0);
        spec.motion = Motion {
            offset: [rng.random_range(-0.04..0.04), rng.random_range(-0.04..0.04)],
            drift: [rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05)],
            roll_deg: [r0, r0 + rng.random_range(-3.0..3.0)],
        };
        if let Some(s) = spec.screen_artifacts.as_mut() {
            s.moire_strength = rng.random_range(0.06..0.1);
            s.pixel_grid_period = rng.random_range(0.004..0.005);
            s.gamma = rng.random_range(0.8..0.9);
        }
        spec
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.frames < 3 {
            return bad(format!("{} frames", self.frames));
        }
        if !(self.approach > 1.0 && self.start_rel_height > 0.0 && self.start_rel_height * self.approach < 1.0) {
            return bad(format!(
                "heights {} -> {}",
                self.start_rel_height,
                self.start_rel_height * self.approach
            ));
        }
        match (self.attack.is_live(), self.depth_amplitude) {
            (true, Some(d)) if d > 0.0 && d <= 0.6 => {}
            (true, _) => return bad("live faces need a depth amplitude in (0, 0.6]".into()),
            (false, Some(_)) => return bad(format!("depth amplitude given for {}", self.attack)),
            (false, None) => {}
        }
        match (self.attack.uses_screen(), &self.screen_artifacts) {
            (true, Some(s)) => {
                if !(s.moire_strength >= 0.0 && s.pixel_grid_period > 0.0 && s.gamma > 0.0) {
                    return bad(format!("screen artifacts {s:?}"));
                }
            }
            (true, None) => return bad(format!("{} needs screen artifacts", self.attack)),
            (false, Some(_)) => return bad(format!("screen artifacts given for {}", self.attack)),
            (false, None) => {}
        }
        if self.static_jitter != 0.0 && self.attack != AttackClass::StaticVideo {
            return bad(format!("static jitter given for {}", self.attack));
        }
        if !(self.noise_sigma >= 0.0 && self.static_jitter >= 0.0) {
            return bad("negative noise or jitter".into());
        }
        if self.frame_size[0] < 16 || self.frame_size[1] < 16 {
            return bad(format!("frame size {:?}", self.frame_size));
        }
        let finite = [self.motion.offset, self.motion.drift, self.motion.roll_deg]
            .iter()
            .flatten()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("scene motion"));
        }
        Ok(())
    }
}

/// An eagerly rendered recording.
#[derive(Clone, Debug)]
pub struct RenderedSequence {
    pub frames: Vec<ImageBuffer>,
    pub annotations: Vec<FrameAnnotation>,
    pub rel_heights: Vec<f64>,
    pub label: AttackClass,
    scene: Scene,
}

impl RenderedSequence {
    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    /// Exact flow from frame `i` to `j` with its validity mask.
    pub fn ground_truth_flow(&self, i: usize, j: usize) -> Result<(FlowField, Vec<bool>)> {
        self.scene.ground_truth_flow(i, j)
    }
}

pub fn render(spec: &SceneSpec) -> Result<RenderedSequence> {
    let scene = Scene::new(spec.clone())?;
    let n = spec.frames;
    let frames = (0..n).map(|i| scene.render_frame(i)).collect::<Result<Vec<_>>>()?;
    let annotations = (0..n).map(|i| scene.annotation(i)).collect::<Result<Vec<_>>>()?;
    let rel_heights = (0..n).map(|i| scene.rel_height(i)).collect();
    Ok(RenderedSequence {
        frames,
        annotations,
        rel_heights,
        label: spec.attack,
        scene,
    })
}

/// Deterministic seed derivation (SplitMix64 finalizer over seed and tag).
pub fn mix_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Scene specs split into disjoint train and test parts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimDataset {
    pub seed: u64,
    pub train: Vec<SceneSpec>,
    pub test: Vec<SceneSpec>,
}

impl SimDataset {
    pub fn all(&self) -> impl Iterator<Item = &SceneSpec> {
        self.train.iter().chain(&self.test)
    }
}

/// `n_per_class` sampled scenes for each of the six classes; the first 80% of
/// each class (rounded) train, the rest test.
pub fn make_dataset(n_per_class: usize, seed: u64) -> Result<SimDataset> {
    if n_per_class == 0 {
        return Err(Error::InvalidSpec("n_per_class must be at least 1".into()));
    }
    let n_train = ((n_per_class as f64) * 0.8).round().max(1.0) as usize;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in AttackClass::ALL {
        for k in 0..n_per_class {
            let tex = mix_seed(seed, (class.index() << 32) | k as u64);
            let spec = SceneSpec::sample(class, tex);
            if k < n_train {
                train.push(spec);
            } else {
                test.push(spec);
            }
        }
    }
    Ok(SimDataset { seed, train, test })
}
