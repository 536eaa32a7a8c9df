//! Single-shot style baseline: average of rigidly stabilized frames.

use crate::classifier::{rgb_features, FeatureVector, LinearHead};
use crate::geometry::{crop_rect, eye_similarity, PreprocessConfig};
use crate::imaging::{self, ImageBuffer};
use crate::sequence::SequenceSource;
use crate::{Error, Result};

pub const STABILIZED_FRAMES: usize = 5;

/// Evenly spaced indices from `first` to `last` inclusive.
pub fn spaced_indices(first: usize, last: usize) -> Result<[usize; STABILIZED_FRAMES]> {
    if last < first || last - first + 1 < STABILIZED_FRAMES {
        return Err(Error::TooFewFrames {
            needed: STABILIZED_FRAMES,
            got: last.saturating_sub(first) + 1,
        });
    }
    let span = (last - first) as f64;
    Ok(std::array::from_fn(|k| {
        first + (k as f64 * span / (STABILIZED_FRAMES - 1) as f64).round() as usize
    }))
}

/// Frames between the f1 and f3 checkpoints aligned onto f3's eyes, cropped
/// with f3's box and averaged.
pub fn stabilized_average(src: &dyn SequenceSource, checkpoints: [usize; 3], cfg: &PreprocessConfig) -> Result<ImageBuffer> {
    if src.len() < STABILIZED_FRAMES {
        return Err(Error::TooFewFrames {
            needed: STABILIZED_FRAMES,
            got: src.len(),
        });
    }
    let idx = spaced_indices(checkpoints[0], checkpoints[2])?;
    let anchor = src.annotation(checkpoints[2])?;
    let to_crop = crop_rect(&anchor.face_box, cfg.margin)?.to_output(cfg.crop_size);
    let crops = idx
        .iter()
        .map(|&i| {
            let a = src.annotation(i)?;
            let t = eye_similarity(&a.keypoints, &anchor.keypoints)?.then(&to_crop);
            imaging::warp(&src.frame(i)?, &t, cfg.crop_size, cfg.crop_size)
        })
        .collect::<Result<Vec<_>>>()?;
    ImageBuffer::average(&crops)
}

/// Scores the stabilized average with an RGB-only head.
pub fn baseline_stabilized_average(
    src: &dyn SequenceSource,
    checkpoints: [usize; 3],
    head: &LinearHead,
    cfg: &PreprocessConfig,
) -> Result<f64> {
    let avg = stabilized_average(src, checkpoints, cfg)?;
    let layout = head.layout;
    let fv = FeatureVector::from_streams(layout, vec![0.0; layout.flow_dim()], rgb_features(&avg)?)?;
    head.score(&fv)
}
