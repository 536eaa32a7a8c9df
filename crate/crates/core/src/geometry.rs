//! Facial keypoints, rigid alignment and the crop pipeline that turns the
//! three checkpoint frames into normalized 256x256 crops.
//!
//! f1 and f3 are rotated so the eyes lie on a horizontal line and shifted so
//! the eye midpoint sits at the image center. No scaling is applied there:
//! scale normalization happens only through each frame's own face box, which
//! is what turns a uniformly approaching plane into zero flow.

use serde::{Deserialize, Serialize};

use crate::imaging::{self, ImageBuffer, Transform2D};
use crate::{Error, Result};

pub const CROP_SIZE: usize = 256;
pub const DEFAULT_MARGIN: f64 = 0.10;
const MIN_EYE_DISTANCE: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyPoints {
    pub left_eye: [f64; 2],
    pub right_eye: [f64; 2],
    pub nose: [f64; 2],
    pub mouth_left: [f64; 2],
    pub mouth_right: [f64; 2],
}

impl KeyPoints {
    pub fn points(&self) -> [[f64; 2]; 5] {
        [self.left_eye, self.right_eye, self.nose, self.mouth_left, self.mouth_right]
    }

    pub fn from_points(p: [[f64; 2]; 5]) -> Self {
        Self {
            left_eye: p[0],
            right_eye: p[1],
            nose: p[2],
            mouth_left: p[3],
            mouth_right: p[4],
        }
    }

    pub fn map(&self, t: &Transform2D) -> KeyPoints {
        Self::from_points(self.points().map(|p| t.apply_point(p)))
    }

    pub fn eye_midpoint(&self) -> [f64; 2] {
        [
            0.5 * (self.left_eye[0] + self.right_eye[0]),
            0.5 * (self.left_eye[1] + self.right_eye[1]),
        ]
    }

    pub fn eye_distance(&self) -> f64 {
        (self.right_eye[0] - self.left_eye[0]).hypot(self.right_eye[1] - self.left_eye[1])
    }

    pub fn validate(&self) -> Result<()> {
        if self.points().iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("keypoints"));
        }
        let d = self.eye_distance();
        if d <= MIN_EYE_DISTANCE {
            return Err(Error::CoincidentEyes(d));
        }
        if self.right_eye[0] <= self.left_eye[0] {
            return Err(Error::NotUpright);
        }
        Ok(())
    }
}

/// Axis-aligned face box in pixels; `(x, y)` is the first covered pixel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 4]", try_from = "[f64; 4]")]
pub struct FaceBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl FaceBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        let b = Self { x, y, w, h };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("face box"));
        }
        if self.w <= 0.0 || self.h <= 0.0 {
            return Err(Error::InvalidBox(format!("nonpositive size {}x{}", self.w, self.h)));
        }
        Ok(())
    }

    pub fn center(&self) -> [f64; 2] {
        [self.x + 0.5 * self.w, self.y + 0.5 * self.h]
    }

    pub fn with_center(&self, c: [f64; 2]) -> FaceBox {
        FaceBox {
            x: c[0] - 0.5 * self.w,
            y: c[1] - 0.5 * self.h,
            ..*self
        }
    }

    /// Box of the same size re-centered on the mapped center.
    pub fn moved_by(&self, t: &Transform2D) -> FaceBox {
        self.with_center(t.apply_point(self.center()))
    }

    /// Bounding box of the mapped corners.
    pub fn mapped_bounds(&self, t: &Transform2D) -> FaceBox {
        let corners = [
            [self.x, self.y],
            [self.x + self.w, self.y],
            [self.x + self.w, self.y + self.h],
            [self.x, self.y + self.h],
        ]
        .map(|p| t.apply_point(p));
        let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for [x, y] in corners {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        FaceBox {
            x: x0,
            y: y0,
            w: x1 - x0,
            h: y1 - y0,
        }
    }
}

impl From<FaceBox> for [f64; 4] {
    fn from(b: FaceBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

impl TryFrom<[f64; 4]> for FaceBox {
    type Error = Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        FaceBox::new(v[0], v[1], v[2], v[3])
    }
}

/// One frame's detections, the unit of the JSON sidecar format.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameAnnotation {
    #[serde(rename = "box")]
    pub face_box: FaceBox,
    pub keypoints: KeyPoints,
}

impl FrameAnnotation {
    pub fn map(&self, t: &Transform2D) -> FrameAnnotation {
        FrameAnnotation {
            face_box: self.face_box.mapped_bounds(t),
            keypoints: self.keypoints.map(t),
        }
    }
}

/// Square crop region `(x0, y0)`-anchored with side `side`, in source pixels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CropRect {
    pub x0: f64,
    pub y0: f64,
    pub side: f64,
}

impl CropRect {
    /// Maps source coordinates into an `out` x `out` raster covering the rect.
    pub fn to_output(&self, out: usize) -> Transform2D {
        let k = out as f64 / self.side;
        Transform2D::scale_translate(k, k, (0.5 - self.x0) * k - 0.5, (0.5 - self.y0) * k - 0.5)
    }
}

/// Expanded square region around `b`: each side grows by `margin * side` at
/// both ends, then the bounding square of the result is taken.
pub fn crop_rect(b: &FaceBox, margin: f64) -> Result<CropRect> {
    b.validate()?;
    if !(margin >= 0.0 && margin.is_finite()) {
        return Err(Error::InvalidConfig(format!("margin {margin}")));
    }
    let w = b.w * (1.0 + 2.0 * margin);
    let h = b.h * (1.0 + 2.0 * margin);
    let side = w.max(h);
    let [cx, cy] = b.center();
    Ok(CropRect {
        x0: cx - 0.5 * side,
        y0: cy - 0.5 * side,
        side,
    })
}

/// Rotation about the eye midpoint that levels the eyes, followed by the shift
/// of the midpoint to the image center.
pub fn rigid_alignment(points: &KeyPoints, width: usize, height: usize) -> Result<Transform2D> {
    points.validate()?;
    let dx = points.right_eye[0] - points.left_eye[0];
    let dy = points.right_eye[1] - points.left_eye[1];
    let angle = dy.atan2(dx);
    let [mx, my] = points.eye_midpoint();
    let anchor = [(width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0];
    Ok(Transform2D::rotation_about(-angle, mx, my)
        .then(&Transform2D::translation(anchor[0] - mx, anchor[1] - my)))
}

/// Rigidly aligns `img` on its keypoints; returns the warped image and the
/// source-to-aligned transform.
pub fn rigid_align(points: &KeyPoints, img: &ImageBuffer) -> Result<(ImageBuffer, Transform2D)> {
    let t = rigid_alignment(points, img.width(), img.height())?;
    let out = imaging::warp(img, &t, img.width(), img.height())?;
    Ok((out, t))
}

/// Square margin crop at native resolution; out-of-image area is replicated.
pub fn crop_with_margin(img: &ImageBuffer, b: &FaceBox, margin: f64) -> Result<ImageBuffer> {
    let rect = crop_rect(b, margin)?;
    let n = rect.side.round().max(1.0) as usize;
    imaging::warp(img, &rect.to_output(n), n, n)
}

/// Similarity (rotation, isotropic scale, shift) mapping `src` eyes onto `dst` eyes.
pub fn eye_similarity(src: &KeyPoints, dst: &KeyPoints) -> Result<Transform2D> {
    src.validate()?;
    dst.validate()?;
    let sv = [src.right_eye[0] - src.left_eye[0], src.right_eye[1] - src.left_eye[1]];
    let dv = [dst.right_eye[0] - dst.left_eye[0], dst.right_eye[1] - dst.left_eye[1]];
    let scale = dst.eye_distance() / src.eye_distance();
    let angle = dv[1].atan2(dv[0]) - sv[1].atan2(sv[0]);
    let [sx, sy] = src.eye_midpoint();
    let [tx, ty] = dst.eye_midpoint();
    Ok(Transform2D::rotation_about(angle, sx, sy)
        .then(&Transform2D::scale_about(scale, sx, sy))
        .then(&Transform2D::translation(tx - sx, ty - sy)))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CropMode {
    /// f1 and f3 are each cropped around their own box.
    #[default]
    PerFrame,
    /// f1 and f3 share the (aligned) f3 box; kept for comparison.
    Shared,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub crop_size: usize,
    pub margin: f64,
    pub crop_mode: CropMode,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            crop_size: CROP_SIZE,
            margin: DEFAULT_MARGIN,
            crop_mode: CropMode::PerFrame,
        }
    }
}

/// Normalized crops of the checkpoint frames.
#[derive(Clone, Debug)]
pub struct PreprocessedPair {
    pub f1_crop: ImageBuffer,
    pub f2_crop: ImageBuffer,
    pub f3_crop: ImageBuffer,
    /// Side of the f1 crop region in source pixels, before resizing.
    pub crop_side_f1: f64,
    /// Source-frame to crop transforms for f1, f2, f3.
    pub transforms: [Transform2D; 3],
}

/// Source-to-crop transforms for the aligned flow frames.
pub fn flow_crop_transforms(
    f1: (&ImageBuffer, &FrameAnnotation),
    f3: (&ImageBuffer, &FrameAnnotation),
    cfg: &PreprocessConfig,
) -> Result<([Transform2D; 2], f64)> {
    let a1 = rigid_alignment(&f1.1.keypoints, f1.0.width(), f1.0.height())?;
    let a3 = rigid_alignment(&f3.1.keypoints, f3.0.width(), f3.0.height())?;
    let b1 = f1.1.face_box.moved_by(&a1);
    let b3 = f3.1.face_box.moved_by(&a3);
    let (r1, r3) = match cfg.crop_mode {
        CropMode::PerFrame => (crop_rect(&b1, cfg.margin)?, crop_rect(&b3, cfg.margin)?),
        CropMode::Shared => {
            let r = crop_rect(&b3, cfg.margin)?;
            (r, r)
        }
    };
    Ok((
        [a1.then(&r1.to_output(cfg.crop_size)), a3.then(&r3.to_output(cfg.crop_size))],
        r1.side,
    ))
}

/// Aligned, margin-cropped and resized f1/f3 plus the unaligned f2 crop.
///
/// Alignment, crop and resize are composed into a single resampling pass.
pub fn preprocess_triplet(
    frames: [&ImageBuffer; 3],
    annotations: [&FrameAnnotation; 3],
    cfg: &PreprocessConfig,
) -> Result<PreprocessedPair> {
    if cfg.crop_size < 2 {
        return Err(Error::InvalidConfig(format!("crop size {}", cfg.crop_size)));
    }
    let ([t1, t3], crop_side_f1) =
        flow_crop_transforms((frames[0], annotations[0]), (frames[2], annotations[2]), cfg)?;
    let t2 = crop_rect(&annotations[1].face_box, cfg.margin)?.to_output(cfg.crop_size);
    let n = cfg.crop_size;
    Ok(PreprocessedPair {
        f1_crop: imaging::warp(frames[0], &t1, n, n)?,
        f2_crop: imaging::warp(frames[1], &t2, n, n)?,
        f3_crop: imaging::warp(frames[2], &t3, n, n)?,
        crop_side_f1,
        transforms: [t1, t2, t3],
    })
}
