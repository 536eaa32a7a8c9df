//! Dense optical flow between the preprocessed f1 and f3 crops.
//!
//! Flow is always measured f1 -> f3: a point at `p` in f1 appears at
//! `p + (u(p), v(p))` in f3.

mod fit;
mod flo;
mod solver;

pub use fit::{fit_expansion, ExpansionFit};
pub use flo::{read_flo, read_flo_file, write_flo, write_flo_file, FLO_SENTINEL};
pub use solver::HornSchunck;

use serde::{Deserialize, Serialize};

use crate::imaging::{self, ImageBuffer};
use crate::{Error, Result};

/// Fraction of the crop side at which magnitudes saturate.
pub const CLIP_FRACTION: f64 = 0.2;

#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl FlowField {
    pub fn new(width: usize, height: usize, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::DegenerateDims { width, height });
        }
        if u.len() != width * height || v.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "flow {width}x{height} with {} / {} components",
                u.len(),
                v.len()
            )));
        }
        if u.iter().chain(&v).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("flow field"));
        }
        Ok(Self { width, height, u, v })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            u: vec![0.0; width * height],
            v: vec![0.0; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> (f64, f64)) -> Self {
        let mut u = Vec::with_capacity(width * height);
        let mut v = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let (a, b) = f(x, y);
                u.push(a);
                v.push(b);
            }
        }
        Self { width, height, u, v }
    }

    pub(crate) fn from_parts(width: usize, height: usize, u: Vec<f64>, v: Vec<f64>) -> Self {
        debug_assert_eq!(u.len(), width * height);
        Self { width, height, u, v }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> (f64, f64) {
        let i = y * self.width + x;
        (self.u[i], self.v[i])
    }

    pub fn max_abs(&self) -> f64 {
        self.u.iter().chain(&self.v).fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Bilinear resize of both components, scaling vectors by the axis ratios.
    pub fn resized(&self, width: usize, height: usize) -> Result<FlowField> {
        if width == 0 || height == 0 {
            return Err(Error::DegenerateDims { width, height });
        }
        if (width, height) == (self.width, self.height) {
            return Ok(self.clone());
        }
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        let mut u = Vec::with_capacity(width * height);
        let mut v = Vec::with_capacity(width * height);
        for y in 0..height {
            let fy = imaging::area_coordinate(y, self.height, height);
            for x in 0..width {
                let fx = imaging::area_coordinate(x, self.width, width);
                u.push(sx * imaging::bilinear(&self.u, self.width, self.height, 1, fx, fy, 0));
                v.push(sy * imaging::bilinear(&self.v, self.width, self.height, 1, fx, fy, 0));
            }
        }
        Ok(FlowField::from_parts(width, height, u, v))
    }

    /// Mean endpoint error against `truth` over pixels where `mask` holds.
    pub fn mean_epe(&self, truth: &FlowField, mut mask: impl FnMut(usize, usize) -> bool) -> f64 {
        let mut acc = 0.0;
        let mut n = 0usize;
        for y in 0..self.height {
            for x in 0..self.width {
                if mask(x, y) {
                    let (a, b) = self.at(x, y);
                    let (c, d) = truth.at(x, y);
                    acc += (a - c).hypot(b - d);
                    n += 1;
                }
            }
        }
        if n == 0 {
            0.0
        } else {
            acc / n as f64
        }
    }
}

/// Per-pixel flow vector length, in pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct MagnitudeMap {
    width: usize,
    height: usize,
    m: Vec<f64>,
}

impl MagnitudeMap {
    pub fn new(width: usize, height: usize, m: Vec<f64>) -> Result<Self> {
        if m.len() != width * height {
            return Err(Error::DimensionMismatch(format!("magnitude {width}x{height} with {} values", m.len())));
        }
        if m.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::NonFinite("magnitude map"));
        }
        Ok(Self { width, height, m })
    }

    pub fn uniform(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            m: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.m
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.m[y * self.width + x]
    }

    pub fn max(&self) -> f64 {
        self.m.iter().fold(0.0, |a, &b| a.max(b))
    }
}

/// Euclidean length of each flow vector.
pub fn magnitude(f: &FlowField) -> MagnitudeMap {
    let m = f.u.iter().zip(&f.v).map(|(a, b)| a.hypot(*b)).collect();
    MagnitudeMap {
        width: f.width,
        height: f.height,
        m,
    }
}

/// Saturates magnitudes at 20% of the crop side.
pub fn clip_magnitude(m: &MagnitudeMap, crop_side: f64) -> Result<MagnitudeMap> {
    if !(crop_side > 0.0 && crop_side.is_finite()) {
        return Err(Error::InvalidConfig(format!("crop side {crop_side}")));
    }
    let cap = CLIP_FRACTION * crop_side;
    Ok(MagnitudeMap {
        width: m.width,
        height: m.height,
        m: m.m.iter().map(|&x| x.min(cap)).collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    /// Square working resolution; inputs are resized to it and the field is
    /// resized back with vectors rescaled.
    pub resolution: usize,
    /// Warping passes per pyramid level.
    pub refine_iters: usize,
    /// Jacobi sweeps per warping pass.
    pub inner_iters: usize,
    /// Smoothness weight on `[0, 1]` intensities.
    pub alpha: f64,
    pub pyramid_scale: f64,
    pub min_level_size: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            resolution: 256,
            refine_iters: 3,
            inner_iters: 60,
            alpha: 0.1,
            pyramid_scale: 0.5,
            min_level_size: 16,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = (64..=1024).contains(&self.resolution)
            && self.refine_iters > 0
            && self.inner_iters > 0
            && self.alpha > 0.0
            && self.alpha.is_finite()
            && self.pyramid_scale == 0.5
            && self.min_level_size >= 2;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("flow config {self:?}")))
        }
    }
}

/// Backend boundary: two same-sized crops in, f1 -> f3 flow out.
pub trait FlowEstimator: Send + Sync {
    fn estimate(&self, a: &ImageBuffer, b: &ImageBuffer) -> Result<FlowField>;
}

/// Coarse-to-fine Horn-Schunck flow from `a` to `b`.
pub fn estimate_flow(a: &ImageBuffer, b: &ImageBuffer, cfg: &FlowConfig) -> Result<FlowField> {
    HornSchunck::new(*cfg)?.estimate(a, b)
}
