//! Training-time augmentation: random checkpoint frames, random flow
//! resolution and perspective jitter of f1/f3.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{crop_rect, DEFAULT_MARGIN};
use crate::imaging::{self, Transform2D};
use crate::sequence::{load_triplet, SequenceSource, Triplet};
use crate::{Error, Result};

/// Shortest recording for which frame pools are drawn.
pub const MIN_POOL_FRAMES: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub random_frame: bool,
    /// Share of frames with the smallest (f1) and largest (f3) faces to draw from.
    pub frame_pool_frac: f64,
    pub multires: bool,
    /// Inclusive range of the flow working resolution.
    pub multires_range: [usize; 2],
    pub perspective: bool,
    /// Largest corner displacement as a fraction of the crop side.
    pub corner_jitter: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            random_frame: true,
            frame_pool_frac: 0.10,
            multires: true,
            multires_range: [192, 320],
            perspective: true,
            corner_jitter: 0.05,
        }
    }
}

impl AugmentConfig {
    pub fn off() -> Self {
        Self {
            random_frame: false,
            multires: false,
            perspective: false,
            ..Self::default()
        }
    }

    pub fn is_off(&self) -> bool {
        !(self.random_frame || self.multires || self.perspective)
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.multires_range;
        let ok = self.frame_pool_frac > 0.0
            && self.frame_pool_frac <= 0.5
            && (64..=1024).contains(&lo)
            && lo <= hi
            && hi <= 1024
            && (0.0..=0.05).contains(&self.corner_jitter);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("augmentation {self:?}")))
        }
    }
}

/// One augmentation draw for a recording.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedSample {
    pub indices: [usize; 3],
    /// Flow working resolution; `None` keeps the configured one.
    pub resolution: Option<usize>,
    /// Source-frame homographies applied to f1 and f3; both move the corners
    /// of their frame's crop square by the same fractions of its side.
    pub perspective: Option<[Transform2D; 2]>,
}

impl AugmentedSample {
    pub fn fixed(indices: [usize; 3]) -> Self {
        Self {
            indices,
            resolution: None,
            perspective: None,
        }
    }

    /// Loads the selected frames and applies the perspective jitter.
    pub fn load(&self, src: &dyn SequenceSource) -> Result<Triplet> {
        let mut t = load_triplet(src, self.indices)?;
        if let Some(hs) = &self.perspective {
            for (k, h) in [(0, &hs[0]), (2, &hs[1])] {
                let (w, ht) = t.frames[k].dims();
                t.frames[k] = imaging::warp(&t.frames[k], h, w, ht)?;
                t.annotations[k] = t.annotations[k].map(h);
            }
        }
        Ok(t)
    }
}

/// Indices of the `k` smallest and `k` largest faces.
fn pools(src: &dyn SequenceSource, k: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut hs = (0..src.len())
        .map(|i| {
            src.rel_height(i)
                .map(|h| (h, i))
                .ok_or_else(|| Error::Annotation(format!("no face height for frame {i}")))
        })
        .collect::<Result<Vec<_>>>()?;
    hs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let small = hs[..k].iter().map(|p| p.1).collect();
    let large = hs[hs.len() - k..].iter().map(|p| p.1).collect();
    Ok((small, large))
}

/// Homography moving each corner of the frame's crop square by `offsets`
/// (fractions of the crop side).
fn corner_jitter(src: &dyn SequenceSource, frame: usize, offsets: &[[f64; 2]; 4]) -> Result<Transform2D> {
    let r = crop_rect(&src.annotation(frame)?.face_box, DEFAULT_MARGIN)?;
    let corners = [
        [r.x0, r.y0],
        [r.x0 + r.side, r.y0],
        [r.x0 + r.side, r.y0 + r.side],
        [r.x0, r.y0 + r.side],
    ];
    let mut moved = corners;
    for (m, o) in moved.iter_mut().zip(offsets) {
        m[0] += o[0] * r.side;
        m[1] += o[1] * r.side;
    }
    Transform2D::from_correspondences(&corners, &moved)
}

/// Draws an augmentation for a recording whose protocol checkpoints are
/// `checkpoints`. The same `seed` gives the same draw.
pub fn augment_sample(
    src: &dyn SequenceSource,
    checkpoints: [usize; 3],
    cfg: &AugmentConfig,
    seed: u64,
) -> Result<AugmentedSample> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = AugmentedSample::fixed(checkpoints);
    if cfg.random_frame {
        if src.len() < MIN_POOL_FRAMES {
            log::warn!(
                "{}: {} frames is too short for frame pools, keeping the checkpoints",
                src.id(),
                src.len()
            );
        } else {
            let k = ((cfg.frame_pool_frac * src.len() as f64).round() as usize).max(1);
            let (small, large) = pools(src, k)?;
            out.indices[0] = small[rng.random_range(0..k)];
            out.indices[2] = large[rng.random_range(0..k)];
        }
    }
    if cfg.multires {
        out.resolution = Some(rng.random_range(cfg.multires_range[0]..=cfg.multires_range[1]));
    }
    if cfg.perspective {
        // One relative distortion for both frames: a consistent oblique view,
        // not a change of shape between f1 and f3.
        let j = cfg.corner_jitter;
        let offsets: [[f64; 2]; 4] =
            std::array::from_fn(|_| [rng.random_range(-j..=j), rng.random_range(-j..=j)]);
        out.perspective = Some([
            corner_jitter(src, out.indices[0], &offsets)?,
            corner_jitter(src, out.indices[2], &offsets)?,
        ]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::FlowField;
    use crate::protocol::{checkpoint_indices, ProtocolConfig};
    use crate::sequence::run_protocol;
    use crate::simulator::{AttackClass, Scene, SceneSpec};

    fn scene() -> Scene {
        Scene::new(SceneSpec::new(AttackClass::Real, 11)).unwrap()
    }

    fn checkpoints(s: &Scene) -> [usize; 3] {
        checkpoint_indices(&run_protocol(s, &ProtocolConfig::default()).unwrap()).unwrap()
    }

    #[test]
    fn all_off_keeps_checkpoints() {
        let s = scene();
        let cp = checkpoints(&s);
        let a = augment_sample(&s, cp, &AugmentConfig::off(), 5).unwrap();
        assert_eq!(a, AugmentedSample::fixed(cp));
    }

    #[test]
    fn frame_pools_cover_the_extreme_tenths() {
        let s = scene();
        let cp = checkpoints(&s);
        let cfg = AugmentConfig {
            random_frame: true,
            ..AugmentConfig::off()
        };
        let mut seen = [std::collections::BTreeSet::new(), std::collections::BTreeSet::new()];
        for seed in 0..60 {
            let a = augment_sample(&s, cp, &cfg, seed).unwrap();
            assert!(a.indices[0] <= 2 && a.indices[2] >= 27, "{:?}", a.indices);
            assert_eq!(a.indices[1], cp[1]);
            seen[0].insert(a.indices[0]);
            seen[1].insert(a.indices[2]);
        }
        assert_eq!(seen[0].len(), 3);
        assert_eq!(seen[1].len(), 3);
    }

    #[test]
    fn draws_are_deterministic_and_bounded() {
        let s = scene();
        let cp = checkpoints(&s);
        let cfg = AugmentConfig::default();
        for seed in 0..20 {
            let a = augment_sample(&s, cp, &cfg, seed).unwrap();
            assert_eq!(a, augment_sample(&s, cp, &cfg, seed).unwrap());
            let r = a.resolution.unwrap();
            assert!((192..=320).contains(&r));
            let h = &a.perspective.as_ref().unwrap()[0];
            let c = crop_rect(&s.annotation(a.indices[0]).unwrap().face_box, DEFAULT_MARGIN).unwrap();
            let p = h.apply_point([c.x0, c.y0]);
            assert!((p[0] - c.x0).abs() <= 0.05 * c.side + 1e-9 && (p[1] - c.y0).abs() <= 0.05 * c.side + 1e-9);
        }
    }

    #[test]
    fn multires_field_is_rescaled_to_crop() {
        let f = FlowField::from_fn(320, 320, |_, _| (32.0, 0.0));
        let g = f.resized(256, 256).unwrap();
        assert!((g.at(100, 100).0 - 25.6).abs() < 1e-12);
    }

    #[test]
    fn perspective_warps_frames_and_annotations() {
        let s = scene();
        let cp = checkpoints(&s);
        let cfg = AugmentConfig {
            perspective: true,
            ..AugmentConfig::off()
        };
        let a = augment_sample(&s, cp, &cfg, 1).unwrap();
        let t = a.load(&s).unwrap();
        let plain = a.clone().tap_fixed().load(&s).unwrap();
        assert_ne!(t.frames[0], plain.frames[0]);
        assert_eq!(t.frames[1], plain.frames[1]);
        assert_ne!(t.annotations[2], plain.annotations[2]);
    }

    impl AugmentedSample {
        fn tap_fixed(self) -> Self {
            Self::fixed(self.indices)
        }
    }
}
