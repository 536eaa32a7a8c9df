//! Coarse-to-fine Horn-Schunck with image warping.
//!
//! Per pyramid level and warping pass, `b` is warped toward `a` by the current
//! flow `w0`, brightness constancy is linearized around `w0`
//! (`Ix u + Iy v + It - Ix u0 - Iy v0 = 0`), and the regularized normal
//! equations are relaxed with Jacobi sweeps. Each sweep reads only the
//! previous iterate, so rows are updated independently.

use super::{FlowConfig, FlowEstimator, FlowField};
use crate::imaging::{self, ImageBuffer};
use crate::{Error, Result};

#[derive(Clone, Debug)]
struct Plane {
    w: usize,
    h: usize,
    data: Vec<f64>,
}

impl Plane {
    fn from_gray(img: &ImageBuffer) -> Self {
        Self {
            w: img.width(),
            h: img.height(),
            data: img.samples().to_vec(),
        }
    }

    #[inline]
    fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.w + x]
    }

    /// Decimation by 2 with the separable [1,3,3,1]/8 kernel, which keeps
    /// coarse sample `i` centred on fine position `2i + 0.5`; borders are
    /// replicated and an odd trailing row/column is dropped.
    fn halve(&self) -> Plane {
        const K: [f64; 4] = [0.125, 0.375, 0.375, 0.125];
        let (w, h) = (self.w / 2, self.h / 2);
        let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
        let mut rows = vec![0.0; w * self.h];
        for y in 0..self.h {
            for x in 0..w {
                let mut s = 0.0;
                for (k, wt) in K.iter().enumerate() {
                    s += wt * self.at(clamp(2 * x as isize - 1 + k as isize, self.w), y);
                }
                rows[y * w + x] = s;
            }
        }
        let mut data = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let mut s = 0.0;
                for (k, wt) in K.iter().enumerate() {
                    s += wt * rows[clamp(2 * y as isize - 1 + k as isize, self.h) * w + x];
                }
                data[y * w + x] = s;
            }
        }
        Plane { w, h, data }
    }

    /// Central-difference gradients with replicated borders.
    fn gradients(&self) -> (Vec<f64>, Vec<f64>) {
        let (w, h) = (self.w, self.h);
        let mut gx = vec![0.0; w * h];
        let mut gy = vec![0.0; w * h];
        for y in 0..h {
            let ym = y.saturating_sub(1);
            let yp = (y + 1).min(h - 1);
            for x in 0..w {
                let xm = x.saturating_sub(1);
                let xp = (x + 1).min(w - 1);
                gx[y * w + x] = 0.5 * (self.at(xp, y) - self.at(xm, y));
                gy[y * w + x] = 0.5 * (self.at(x, yp) - self.at(x, ym));
            }
        }
        (gx, gy)
    }
}

#[derive(Clone, Debug)]
pub struct HornSchunck {
    cfg: FlowConfig,
}

impl HornSchunck {
    pub fn new(cfg: FlowConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg })
    }

    pub fn config(&self) -> &FlowConfig {
        &self.cfg
    }

    fn pyramid(&self, base: Plane) -> Vec<Plane> {
        let mut levels = vec![base];
        loop {
            let last = levels.last().unwrap();
            let (nw, nh) = (last.w / 2, last.h / 2);
            if nw.min(nh) < self.cfg.min_level_size {
                break;
            }
            let next = last.halve();
            levels.push(next);
        }
        levels
    }

    /// Solves one level starting from `flow`; returns the refined flow.
    fn refine_level(&self, a: &Plane, b: &Plane, flow: FlowField) -> FlowField {
        let (w, h) = (a.w, a.h);
        let n = w * h;
        let alpha2 = self.cfg.alpha * self.cfg.alpha;
        let (ax, ay) = a.gradients();
        let (mut u, mut v) = (flow.u, flow.v);
        let mut ix = vec![0.0; n];
        let mut iy = vec![0.0; n];
        let mut c = vec![0.0; n];
        let mut inv = vec![0.0; n];
        let mut nu = vec![0.0; n];
        let mut nv = vec![0.0; n];

        for _ in 0..self.cfg.refine_iters {
            let mut warped = Plane {
                w,
                h,
                data: vec![0.0; n],
            };
            let mut inside = vec![true; n];
            for y in 0..h {
                for x in 0..w {
                    let i = y * w + x;
                    let sx = x as f64 + u[i];
                    let sy = y as f64 + v[i];
                    inside[i] = sx >= 0.0 && sx <= (w - 1) as f64 && sy >= 0.0 && sy <= (h - 1) as f64;
                    warped.data[i] = imaging::bilinear(&b.data, w, h, 1, sx, sy, 0);
                }
            }
            let (bx, by) = warped.gradients();
            for i in 0..n {
                if inside[i] {
                    ix[i] = 0.5 * (ax[i] + bx[i]);
                    iy[i] = 0.5 * (ay[i] + by[i]);
                    let it = warped.data[i] - a.data[i];
                    c[i] = it - ix[i] * u[i] - iy[i] * v[i];
                } else {
                    ix[i] = 0.0;
                    iy[i] = 0.0;
                    c[i] = 0.0;
                }
            }
            for y in 0..h {
                for x in 0..w {
                    let i = y * w + x;
                    let nb = neighbour_count(x, y, w, h);
                    inv[i] = 1.0 / (alpha2 * nb + ix[i] * ix[i] + iy[i] * iy[i]);
                }
            }
            for _ in 0..self.cfg.inner_iters {
                jacobi_sweep(w, h, &u, &v, &ix, &iy, &c, &inv, &mut nu, &mut nv);
                std::mem::swap(&mut u, &mut nu);
                std::mem::swap(&mut v, &mut nv);
            }
        }
        FlowField::from_parts(w, h, u, v)
    }
}

#[inline]
fn neighbour_count(x: usize, y: usize, w: usize, h: usize) -> f64 {
    let mut k = 0.0;
    if x > 0 {
        k += 1.0;
    }
    if x + 1 < w {
        k += 1.0;
    }
    if y > 0 {
        k += 1.0;
    }
    if y + 1 < h {
        k += 1.0;
    }
    k
}

#[allow(clippy::too_many_arguments)]
fn jacobi_sweep(
    w: usize,
    h: usize,
    u: &[f64],
    v: &[f64],
    ix: &[f64],
    iy: &[f64],
    c: &[f64],
    inv: &[f64],
    nu: &mut [f64],
    nv: &mut [f64],
) {
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let (mut su, mut sv, mut k) = (0.0, 0.0, 0.0);
            if x > 0 {
                su += u[i - 1];
                sv += v[i - 1];
                k += 1.0;
            }
            if x + 1 < w {
                su += u[i + 1];
                sv += v[i + 1];
                k += 1.0;
            }
            if y > 0 {
                su += u[i - w];
                sv += v[i - w];
                k += 1.0;
            }
            if y + 1 < h {
                su += u[i + w];
                sv += v[i + w];
                k += 1.0;
            }
            let ub = su / k;
            let vb = sv / k;
            let r = (ix[i] * ub + iy[i] * vb + c[i]) * inv[i];
            nu[i] = ub - ix[i] * r;
            nv[i] = vb - iy[i] * r;
        }
    }
}

impl FlowEstimator for HornSchunck {
    fn estimate(&self, a: &ImageBuffer, b: &ImageBuffer) -> Result<FlowField> {
        if a.dims() != b.dims() {
            return Err(Error::DimensionMismatch(format!(
                "flow inputs {:?} vs {:?}",
                a.dims(),
                b.dims()
            )));
        }
        if a.samples().iter().chain(b.samples()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("flow input"));
        }
        let (w0, h0) = a.dims();
        let res = self.cfg.resolution;
        let prep = |img: &ImageBuffer| -> Result<Plane> {
            let g = img.to_gray();
            Ok(Plane::from_gray(&imaging::resize(&g, res, res)?))
        };
        let pa = self.pyramid(prep(a)?);
        let pb = self.pyramid(prep(b)?);

        let coarsest = pa.last().unwrap();
        let mut flow = FlowField::zeros(coarsest.w, coarsest.h);
        for (level, (la, lb)) in pa.iter().zip(&pb).enumerate().rev() {
            if (flow.width(), flow.height()) != (la.w, la.h) {
                flow = flow.resized(la.w, la.h)?;
            }
            flow = self.refine_level(la, lb, flow);
            log::trace!("flow level {level} ({}x{}) max |w| = {:.3}", la.w, la.h, flow.max_abs());
        }
        flow.resized(w0, h0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::fit_expansion;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::time::Instant;

    /// Sum of random low-frequency sinusoids, periods between 8 and 40 px.
    fn texture(w: usize, h: usize, seed: u64) -> ImageBuffer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let waves: Vec<(f64, f64, f64, f64)> = (0..12)
            .map(|_| {
                let period = rng.random_range(8.0..40.0);
                let theta = rng.random_range(0.0..std::f64::consts::PI);
                let k = 2.0 * std::f64::consts::PI / period;
                (k * theta.cos(), k * theta.sin(), rng.random_range(0.0..6.3), rng.random_range(0.3..1.0))
            })
            .collect();
        let norm: f64 = waves.iter().map(|w| w.3).sum();
        ImageBuffer::from_fn(w, h, 1, |x, y, _| {
            let s: f64 = waves.iter().map(|&(kx, ky, ph, a)| a * (kx * x as f64 + ky * y as f64 + ph).sin()).sum();
            0.5 + 0.45 * s / norm
        })
    }

    fn shifted(a: &ImageBuffer, dx: i64, dy: i64) -> ImageBuffer {
        let (w, h) = a.dims();
        ImageBuffer::from_fn(w, h, 1, |x, y, _| {
            let sx = (x as i64 - dx).clamp(0, w as i64 - 1) as usize;
            let sy = (y as i64 - dy).clamp(0, h as i64 - 1) as usize;
            a.get(sx, sy, 0)
        })
    }

    /// Exhaustive integer block matching: best SSD displacement of the 8x8
    /// patch at (x0, y0) within +-6 px.
    fn block_match(a: &ImageBuffer, b: &ImageBuffer, x0: usize, y0: usize) -> (i64, i64) {
        let mut best = (f64::INFINITY, (0, 0));
        for dy in -6i64..=6 {
            for dx in -6i64..=6 {
                let mut ssd = 0.0;
                for y in 0..8 {
                    for x in 0..8 {
                        let (px, py) = (x0 + x, y0 + y);
                        let qx = px as i64 + dx;
                        let qy = py as i64 + dy;
                        if qx < 0 || qy < 0 || qx >= b.width() as i64 || qy >= b.height() as i64 {
                            ssd = f64::INFINITY;
                            continue;
                        }
                        let d = a.get(px, py, 0) - b.get(qx as usize, qy as usize, 0);
                        ssd += d * d;
                    }
                }
                if ssd < best.0 {
                    best = (ssd, (dx, dy));
                }
            }
        }
        best.1
    }

    fn central(w: usize, h: usize) -> impl Fn(usize, usize) -> bool {
        move |x, y| x >= w / 8 && x < w - w / 8 && y >= h / 8 && y < h - h / 8
    }

    fn cfg(res: usize) -> FlowConfig {
        FlowConfig {
            resolution: res,
            ..FlowConfig::default()
        }
    }

    #[test]
    fn identical_inputs_give_zero_flow() {
        let a = texture(64, 64, 1);
        let f = HornSchunck::new(cfg(64)).unwrap().estimate(&a, &a).unwrap();
        assert!(f.max_abs() < 1e-6, "max {}", f.max_abs());
    }

    #[test]
    fn recovers_integer_shift() {
        let a = texture(64, 64, 2);
        let b = shifted(&a, 3, 0);
        for y0 in (16..40).step_by(8) {
            for x0 in (16..40).step_by(8) {
                assert_eq!(block_match(&a, &b, x0, y0), (3, 0));
            }
        }
        let f = HornSchunck::new(cfg(64)).unwrap().estimate(&a, &b).unwrap();
        let truth = FlowField::from_fn(64, 64, |_, _| (3.0, 0.0));
        let epe = f.mean_epe(&truth, central(64, 64));
        assert!(epe <= 0.3, "epe {epe}");
    }

    #[test]
    fn recovers_central_zoom() {
        let k = 1.10;
        let a = texture(128, 128, 3);
        let c = 63.5;
        // b(p) = a(c + (p - c) / k): content at p in a moves to c + k (p - c).
        let b = ImageBuffer::from_fn(128, 128, 1, |x, y, _| {
            a.sample(c + (x as f64 - c) / k, c + (y as f64 - c) / k, 0)
        });
        let f = HornSchunck::new(cfg(128)).unwrap().estimate(&a, &b).unwrap();
        let fit = fit_expansion(&f, [c, c], central(128, 128));
        assert!((1.0 + fit.scale - k).abs() <= 0.02, "scale {}", 1.0 + fit.scale);
    }

    #[test]
    fn mismatched_or_non_finite_inputs_rejected() {
        let hs = HornSchunck::new(FlowConfig::default()).unwrap();
        let a = texture(32, 32, 4);
        let b = texture(32, 30, 4);
        assert!(matches!(hs.estimate(&a, &b), Err(Error::DimensionMismatch(_))));
        assert!(HornSchunck::new(cfg(16)).is_err());
    }

    #[test]
    fn runtime_at_default_resolution() {
        let a = texture(256, 256, 5);
        let b = shifted(&a, 2, -1);
        let hs = HornSchunck::new(FlowConfig::default()).unwrap();
        let t = Instant::now();
        hs.estimate(&a, &b).unwrap();
        let dt = t.elapsed().as_secs_f64();
        assert!(dt <= 2.0, "{dt:.2} s");
    }

    #[test]
    fn pyramid_stops_at_min_level() {
        let hs = HornSchunck::new(FlowConfig::default()).unwrap();
        let p = hs.pyramid(Plane::from_gray(&texture(256, 256, 6)));
        let sizes: Vec<usize> = p.iter().map(|l| l.w).collect();
        assert_eq!(sizes, vec![256, 128, 64, 32, 16]);
    }
}
