//! Engineered features of the two streams.
//!
//! Flow stream (magnitude representations, 9 values):
//! `face_p10, face_p50, face_p90, ring_p10, ring_p50, ring_p90,
//! face_ring_ratio, expansion_residual, radial_slope`.
//! Raw representation (14 values): p10/p50/p90 of signed `u` and `v` in the
//! face and in the ring, then `expansion_residual, radial_slope`.
//!
//! The face region is the central disc of radius `0.3 * side` (the central
//! 60% of the crop); the ring is the outer band `0.1 * side` wide on every
//! edge. Percentiles use the nearest-rank rule.
//!
//! RGB stream (5 values, from the f2 crop): `laplacian_log_energy,
//! gradient_entropy, saturation_mean, saturation_var, hf_log_energy`.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::FlowRepresentation;
use crate::flow::{fit_expansion, FlowField, CLIP_FRACTION};
use crate::imaging::{ImageBuffer, LUMA};
use crate::{Error, Result};

pub const FACE_RADIUS_FRAC: f64 = 0.3;
pub const RING_WIDTH_FRAC: f64 = 0.1;
/// Added to both means of the face/ring ratio so it stays finite on zero flow.
const RATIO_EPS: f64 = 1e-3;
const ORIENTATION_BINS: usize = 16;
/// Spectral band of the high-frequency feature, cycles per crop pixel.
const HF_BAND: (f64, f64) = (0.15, 0.35);

pub const MAGNITUDE_FLOW_NAMES: [&str; 9] = [
    "face_p10",
    "face_p50",
    "face_p90",
    "ring_p10",
    "ring_p50",
    "ring_p90",
    "face_ring_ratio",
    "expansion_residual",
    "radial_slope",
];

pub const RAW_FLOW_NAMES: [&str; 14] = [
    "face_u_p10",
    "face_u_p50",
    "face_u_p90",
    "face_v_p10",
    "face_v_p50",
    "face_v_p90",
    "ring_u_p10",
    "ring_u_p50",
    "ring_u_p90",
    "ring_v_p10",
    "ring_v_p50",
    "ring_v_p90",
    "expansion_residual",
    "radial_slope",
];

pub const RGB_NAMES: [&str; 5] = [
    "laplacian_log_energy",
    "gradient_entropy",
    "saturation_mean",
    "saturation_var",
    "hf_log_energy",
];

pub fn flow_feature_names(repr: FlowRepresentation) -> &'static [&'static str] {
    match repr {
        FlowRepresentation::Raw => &RAW_FLOW_NAMES,
        _ => &MAGNITUDE_FLOW_NAMES,
    }
}

/// Pixel regions of a square crop.
#[derive(Clone, Copy, Debug)]
pub struct Regions {
    side: usize,
}

impl Regions {
    pub fn new(side: usize) -> Self {
        Self { side }
    }

    fn center(&self) -> f64 {
        (self.side as f64 - 1.0) / 2.0
    }

    pub fn radius(&self, x: usize, y: usize) -> f64 {
        let c = self.center();
        (x as f64 - c).hypot(y as f64 - c)
    }

    pub fn in_face(&self, x: usize, y: usize) -> bool {
        self.radius(x, y) <= FACE_RADIUS_FRAC * self.side as f64
    }

    pub fn in_ring(&self, x: usize, y: usize) -> bool {
        let band = RING_WIDTH_FRAC * self.side as f64;
        let edge = x.min(y).min(self.side - 1 - x).min(self.side - 1 - y);
        (edge as f64) < band
    }
}

/// Nearest-rank percentiles `ps` (in percent) of `values`; zeros when empty.
pub fn percentiles(values: &mut [f64], ps: &[f64]) -> Vec<f64> {
    if values.is_empty() {
        return vec![0.0; ps.len()];
    }
    values.sort_unstable_by(f64::total_cmp);
    let n = values.len();
    ps.iter()
        .map(|p| {
            let rank = ((p / 100.0) * n as f64).ceil().max(1.0) as usize;
            values[rank.min(n) - 1]
        })
        .collect()
}

/// Applies the flow representation: clipped vectors keep their direction
/// and are shortened to the cap.
pub fn represent(flow: &FlowField, repr: FlowRepresentation, crop_side: f64) -> FlowField {
    match repr {
        FlowRepresentation::ClippedMagnitude => {
            let cap = CLIP_FRACTION * crop_side;
            let (w, h) = (flow.width(), flow.height());
            FlowField::from_fn(w, h, |x, y| {
                let (u, v) = flow.at(x, y);
                let m = u.hypot(v);
                if m > cap {
                    (u * cap / m, v * cap / m)
                } else {
                    (u, v)
                }
            })
        }
        _ => flow.clone(),
    }
}

/// Least-squares slope of `value` against distance from the crop centre.
fn radial_slope(side: usize, mut value: impl FnMut(usize, usize) -> f64) -> f64 {
    let reg = Regions::new(side);
    let (mut n, mut sr, mut sv, mut srr, mut srv) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for y in 0..side {
        for x in 0..side {
            let r = reg.radius(x, y);
            let v = value(x, y);
            n += 1.0;
            sr += r;
            sv += v;
            srr += r * r;
            srv += r * v;
        }
    }
    let den = srr - sr * sr / n;
    if den > 0.0 {
        (srv - sr * sv / n) / den
    } else {
        0.0
    }
}

/// Flow-stream features of a square field; see the module docs for order.
pub fn flow_features(flow: &FlowField, repr: FlowRepresentation, crop_side: f64) -> Result<Vec<f64>> {
    let side = flow.width();
    if flow.height() != side || side < 4 {
        return Err(Error::DimensionMismatch(format!(
            "flow features need a square field, got {}x{}",
            flow.width(),
            flow.height()
        )));
    }
    let f = represent(flow, repr, crop_side);
    let reg = Regions::new(side);
    let c = reg.center();
    let residual = fit_expansion(&f, [c, c], |x, y| reg.in_face(x, y)).residual_rms;
    let ps = [10.0, 50.0, 90.0];
    let mut out = Vec::with_capacity(14);
    match repr {
        FlowRepresentation::Raw => {
            for region in [0, 1] {
                let inside = |x: usize, y: usize| if region == 0 { reg.in_face(x, y) } else { reg.in_ring(x, y) };
                let mut us = Vec::new();
                let mut vs = Vec::new();
                for y in 0..side {
                    for x in 0..side {
                        if inside(x, y) {
                            let (u, v) = f.at(x, y);
                            us.push(u);
                            vs.push(v);
                        }
                    }
                }
                out.extend(percentiles(&mut us, &ps));
                out.extend(percentiles(&mut vs, &ps));
            }
            out.push(residual);
            out.push(radial_slope(side, |x, y| {
                let (u, v) = f.at(x, y);
                let r = reg.radius(x, y);
                if r > 0.0 {
                    (u * (x as f64 - c) + v * (y as f64 - c)) / r
                } else {
                    0.0
                }
            }));
        }
        _ => {
            let mag = |x: usize, y: usize| {
                let (u, v) = f.at(x, y);
                u.hypot(v)
            };
            let mut face = Vec::new();
            let mut ring = Vec::new();
            for y in 0..side {
                for x in 0..side {
                    if reg.in_face(x, y) {
                        face.push(mag(x, y));
                    }
                    if reg.in_ring(x, y) {
                        ring.push(mag(x, y));
                    }
                }
            }
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
            let ratio = (mean(&face) + RATIO_EPS) / (mean(&ring) + RATIO_EPS);
            out.extend(percentiles(&mut face, &ps));
            out.extend(percentiles(&mut ring, &ps));
            out.push(ratio);
            out.push(residual);
            out.push(radial_slope(side, mag));
        }
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("flow features"));
    }
    Ok(out)
}

fn luma_plane(img: &ImageBuffer) -> Vec<f64> {
    if img.channels() == 1 {
        return img.samples().to_vec();
    }
    img.samples()
        .chunks_exact(img.channels())
        .map(|p| LUMA[0] * p[0] + LUMA[1] * p[1] + LUMA[2] * p[2])
        .collect()
}

/// Log mean squared 4-neighbour Laplacian over interior pixels.
fn laplacian_log_energy(l: &[f64], w: usize, h: usize) -> f64 {
    let mut acc = 0.0;
    let mut n = 0.0;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let i = y * w + x;
            let lap = l[i - 1] + l[i + 1] + l[i - w] + l[i + w] - 4.0 * l[i];
            acc += lap * lap;
            n += 1.0;
        }
    }
    (acc / n + 1e-12).ln()
}

/// Entropy of the magnitude-weighted gradient-orientation histogram,
/// normalized to `[0, 1]`.
fn gradient_entropy(l: &[f64], w: usize, h: usize) -> f64 {
    let mut hist = [0.0; ORIENTATION_BINS];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let i = y * w + x;
            let gx = 0.5 * (l[i + 1] - l[i - 1]);
            let gy = 0.5 * (l[i + w] - l[i - w]);
            let m = gx.hypot(gy);
            if m > 0.0 {
                let theta = gy.atan2(gx).rem_euclid(std::f64::consts::PI);
                let bin = ((theta / std::f64::consts::PI) * ORIENTATION_BINS as f64) as usize;
                hist[bin.min(ORIENTATION_BINS - 1)] += m;
            }
        }
    }
    let total: f64 = hist.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let ent: f64 = hist
        .iter()
        .filter(|&&c| c > 0.0)
        .map(|&c| {
            let p = c / total;
            -p * p.ln()
        })
        .sum();
    ent / (ORIENTATION_BINS as f64).ln()
}

/// HSV saturation mean and variance; gray images give zeros.
fn saturation_stats(img: &ImageBuffer) -> (f64, f64) {
    if img.channels() < 3 {
        return (0.0, 0.0);
    }
    let sats: Vec<f64> = img
        .samples()
        .chunks_exact(img.channels())
        .map(|p| {
            let mx = p[0].max(p[1]).max(p[2]);
            let mn = p[0].min(p[1]).min(p[2]);
            if mx > 0.0 {
                (mx - mn) / mx
            } else {
                0.0
            }
        })
        .collect();
    let n = sats.len() as f64;
    let mean = sats.iter().sum::<f64>() / n;
    let var = sats.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

/// 2-D FFT planner cache for one square size.
struct Spectrum {
    side: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl Spectrum {
    fn new(side: usize) -> Self {
        Self {
            side,
            fft: FftPlanner::new().plan_fft_forward(side),
        }
    }

    /// Power spectrum of a mean-removed plane, row-major.
    fn power(&self, plane: &[f64]) -> Vec<f64> {
        let n = self.side;
        let mean = plane.iter().sum::<f64>() / plane.len() as f64;
        let mut buf: Vec<Complex<f64>> = plane.iter().map(|&v| Complex::new(v - mean, 0.0)).collect();
        for row in buf.chunks_exact_mut(n) {
            self.fft.process(row);
        }
        let mut col = vec![Complex::new(0.0, 0.0); n];
        for x in 0..n {
            for y in 0..n {
                col[y] = buf[y * n + x];
            }
            self.fft.process(&mut col);
            for y in 0..n {
                buf[y * n + x] = col[y];
            }
        }
        buf.iter().map(|c| c.norm_sqr()).collect()
    }
}

/// Log share of spectral energy inside the high-frequency band, averaged
/// over channels.
fn hf_log_energy(img: &ImageBuffer) -> f64 {
    let (w, h) = img.dims();
    if w != h {
        return 0.0;
    }
    let spec = Spectrum::new(w);
    let ch = img.channels();
    let mut acc = 0.0;
    for c in 0..ch {
        let plane: Vec<f64> = img.samples().iter().skip(c).step_by(ch).copied().collect();
        let p = spec.power(&plane);
        let (mut band, mut total) = (0.0, 0.0);
        for ky in 0..w {
            let fy = if ky <= w / 2 { ky as f64 } else { ky as f64 - w as f64 } / w as f64;
            for kx in 0..w {
                let fx = if kx <= w / 2 { kx as f64 } else { kx as f64 - w as f64 } / w as f64;
                let r = fx.hypot(fy);
                let e = p[ky * w + kx];
                total += e;
                if r >= HF_BAND.0 && r < HF_BAND.1 {
                    band += e;
                }
            }
        }
        let share = if total > 0.0 { band / total } else { 0.0 };
        acc += (share + 1e-9).ln();
    }
    acc / ch as f64
}

/// RGB-stream features of a crop; see the module docs for order.
pub fn rgb_features(img: &ImageBuffer) -> Result<Vec<f64>> {
    let (w, h) = img.dims();
    if w < 3 || h < 3 {
        return Err(Error::DegenerateDims { width: w, height: h });
    }
    let l = luma_plane(img);
    let (smean, svar) = saturation_stats(img);
    let out = vec![
        laplacian_log_energy(&l, w, h),
        gradient_entropy(&l, w, h),
        smean,
        svar,
        hf_log_energy(img),
    ];
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("rgb features"));
    }
    Ok(out)
}
