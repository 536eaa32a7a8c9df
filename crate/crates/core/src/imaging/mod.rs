//! Raster images and the resampling primitives shared by every stage.
//!
//! Sampling convention: pixel centers sit at integer coordinates, `(0, 0)` is
//! the center of the top-left pixel, and resizes map pixel areas onto pixel
//! areas (no corner alignment). Reads outside the raster replicate the edge.

mod io;
mod transform;

pub use io::{decode_image, encode_png, read_image, write_image, write_png};
pub use transform::Transform2D;

use crate::{Error, Result};

/// Rec. 601 luma weights used for every RGB to gray conversion.
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// Row-major raster with 1 (gray) or 3 (RGB) channels, samples in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::DegenerateDims { width, height });
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidImage(format!("unsupported channel count {channels}")));
        }
        if data.len() != width * height * channels {
            return Err(Error::InvalidImage(format!(
                "expected {} samples, got {}",
                width * height * channels,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("image samples"));
        }
        if data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidImage("samples outside [0, 1]".into()));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Builds an image from a per-sample function; results are clamped to `[0, 1]`.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        assert!(width > 0 && height > 0 && (channels == 1 || channels == 3));
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    let v = f(x, y, c);
                    debug_assert!(v.is_finite(), "non-finite sample at ({x},{y},{c})");
                    data.push(v.clamp(0.0, 1.0));
                }
            }
        }
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        Self::from_fn(width, height, channels, |_, _, _| value)
    }

    pub(crate) fn from_raw_unchecked(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height * channels);
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn samples(&self) -> &[f64] {
        &self.data
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn is_gray(&self) -> bool {
        self.channels == 1
    }

    /// Luminance image; gray images are returned as a copy.
    pub fn to_gray(&self) -> ImageBuffer {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| (LUMA[0] * p[0] + LUMA[1] * p[1] + LUMA[2] * p[2]).clamp(0.0, 1.0))
            .collect();
        Self::from_raw_unchecked(self.width, self.height, 1, data)
    }

    /// Bilinear read at a real-valued position with edge replication.
    #[inline]
    pub fn sample(&self, x: f64, y: f64, c: usize) -> f64 {
        bilinear(&self.data, self.width, self.height, self.channels, x, y, c)
    }

    /// Applies `f` to every sample, clamping the result.
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> ImageBuffer {
        let data = self.data.iter().map(|&v| f(v).clamp(0.0, 1.0)).collect();
        Self::from_raw_unchecked(self.width, self.height, self.channels, data)
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Per-sample mean of equally sized images.
    pub fn average(images: &[ImageBuffer]) -> Result<ImageBuffer> {
        let first = images
            .first()
            .ok_or_else(|| Error::InvalidImage("nothing to average".into()))?;
        let mut acc = vec![0.0; first.data.len()];
        for img in images {
            if (img.width, img.height, img.channels) != (first.width, first.height, first.channels) {
                return Err(Error::DimensionMismatch("averaged images differ in shape".into()));
            }
            for (a, v) in acc.iter_mut().zip(&img.data) {
                *a += v;
            }
        }
        let n = images.len() as f64;
        let data = acc.into_iter().map(|v| (v / n).clamp(0.0, 1.0)).collect();
        Ok(Self::from_raw_unchecked(first.width, first.height, first.channels, data))
    }
}

/// Bilinear interpolation over a row-major interleaved buffer, replicating
/// edge samples for out-of-range reads.
#[inline]
pub(crate) fn bilinear(data: &[f64], w: usize, h: usize, ch: usize, x: f64, y: f64, c: usize) -> f64 {
    let xf = x.floor();
    let yf = y.floor();
    let fx = x - xf;
    let fy = y - yf;
    let clamp = |v: f64, n: usize| -> usize { v.max(0.0).min((n - 1) as f64) as usize };
    let x0 = clamp(xf, w);
    let x1 = clamp(xf + 1.0, w);
    let y0 = clamp(yf, h);
    let y1 = clamp(yf + 1.0, h);
    let at = |xi: usize, yi: usize| data[(yi * w + xi) * ch + c];
    let top = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
    let bottom = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Source coordinate of destination pixel `i` when `src` pixels are stretched
/// onto `dst` pixels edge to edge.
#[inline]
pub(crate) fn area_coordinate(i: usize, src: usize, dst: usize) -> f64 {
    (i as f64 + 0.5) * (src as f64 / dst as f64) - 0.5
}

/// Bilinear resize to exactly `width` x `height`.
pub fn resize(img: &ImageBuffer, width: usize, height: usize) -> Result<ImageBuffer> {
    if width == 0 || height == 0 {
        return Err(Error::DegenerateDims { width, height });
    }
    if (width, height) == img.dims() {
        return Ok(img.clone());
    }
    let xs: Vec<f64> = (0..width).map(|x| area_coordinate(x, img.width, width)).collect();
    let mut data = Vec::with_capacity(width * height * img.channels);
    for y in 0..height {
        let sy = area_coordinate(y, img.height, height);
        for &sx in &xs {
            for c in 0..img.channels {
                data.push(img.sample(sx, sy, c).clamp(0.0, 1.0));
            }
        }
    }
    Ok(ImageBuffer::from_raw_unchecked(width, height, img.channels, data))
}

/// Inverse-mapped bilinear warp: `out(p) = img(t^-1 p)`, edges replicated.
pub fn warp(img: &ImageBuffer, t: &Transform2D, out_w: usize, out_h: usize) -> Result<ImageBuffer> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::DegenerateDims {
            width: out_w,
            height: out_h,
        });
    }
    let inv = t.inverse()?;
    let mut data = Vec::with_capacity(out_w * out_h * img.channels);
    for y in 0..out_h {
        for x in 0..out_w {
            let (sx, sy) = inv.apply(x as f64, y as f64);
            for c in 0..img.channels {
                let v = if sx.is_finite() && sy.is_finite() {
                    img.sample(sx, sy, c)
                } else {
                    0.0
                };
                data.push(v.clamp(0.0, 1.0));
            }
        }
    }
    Ok(ImageBuffer::from_raw_unchecked(out_w, out_h, img.channels, data))
}

/// Standard deviation used for a Gaussian kernel of `kernel_px` taps.
pub fn blur_sigma(kernel_px: usize) -> f64 {
    0.3 * ((kernel_px as f64 - 1.0) * 0.5 - 1.0) + 0.8
}

/// Normalized 1-D Gaussian taps for an odd kernel size.
pub fn gaussian_kernel(kernel_px: i64) -> Result<Vec<f64>> {
    if kernel_px < 1 || kernel_px % 2 == 0 {
        return Err(Error::InvalidKernel(kernel_px));
    }
    let k = kernel_px as usize;
    let sigma = blur_sigma(k);
    let r = (k / 2) as i64;
    let taps: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    Ok(taps.into_iter().map(|t| t / sum).collect())
}

/// Separable Gaussian blur with edge replication.
pub fn gaussian_blur(img: &ImageBuffer, kernel_px: i64) -> Result<ImageBuffer> {
    let taps = gaussian_kernel(kernel_px)?;
    if taps.len() == 1 {
        return Ok(img.clone());
    }
    let (w, h, ch) = (img.width, img.height, img.channels);
    let r = (taps.len() / 2) as isize;
    let src = &img.data;
    let mut tmp = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let mut acc = 0.0;
                for (k, t) in taps.iter().enumerate() {
                    let xi = (x as isize + k as isize - r).clamp(0, w as isize - 1) as usize;
                    acc += t * src[(y * w + xi) * ch + c];
                }
                tmp[(y * w + x) * ch + c] = acc;
            }
        }
    }
    let mut out = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let mut acc = 0.0;
                for (k, t) in taps.iter().enumerate() {
                    let yi = (y as isize + k as isize - r).clamp(0, h as isize - 1) as usize;
                    acc += t * tmp[(yi * w + x) * ch + c];
                }
                out[(y * w + x) * ch + c] = acc.clamp(0.0, 1.0);
            }
        }
    }
    Ok(ImageBuffer::from_raw_unchecked(w, h, ch, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn smooth(w: usize, h: usize, phase: f64) -> ImageBuffer {
        ImageBuffer::from_fn(w, h, 1, |x, y, _| {
            let (x, y) = (x as f64, y as f64);
            0.5 + 0.2 * (0.11 * x + phase).sin() * (0.07 * y).cos() + 0.1 * (0.05 * (x + y)).sin()
        })
    }

    fn rms_interior(a: &ImageBuffer, b: &ImageBuffer, border: usize) -> f64 {
        let mut acc = 0.0;
        let mut n = 0.0;
        for y in border..a.height() - border {
            for x in border..a.width() - border {
                let d = a.get(x, y, 0) - b.get(x, y, 0);
                acc += d * d;
                n += 1.0;
            }
        }
        (acc / n).sqrt()
    }

    #[test]
    fn new_rejects_out_of_range_and_bad_lengths() {
        assert!(ImageBuffer::new(2, 2, 1, vec![0.0; 3]).is_err());
        assert!(ImageBuffer::new(1, 1, 1, vec![1.5]).is_err());
        assert!(ImageBuffer::new(1, 1, 1, vec![f64::NAN]).is_err());
        assert!(ImageBuffer::new(1, 1, 2, vec![0.0, 0.0]).is_err());
        assert!(ImageBuffer::new(1, 1, 3, vec![0.1, 0.2, 0.3]).is_ok());
    }

    #[test]
    fn resize_identity_is_exact() {
        let img = smooth(256, 256, 0.3);
        let out = resize(&img, 256, 256).unwrap();
        for (a, b) in img.samples().iter().zip(out.samples()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn resize_preserves_constants() {
        let img = ImageBuffer::filled(37, 23, 3, 0.5);
        for (w, h) in [(256, 256), (5, 90), (2, 2)] {
            let out = resize(&img, w, h).unwrap();
            assert_eq!(out.dims(), (w, h));
            assert!(out.samples().iter().all(|v| (v - 0.5).abs() < 1e-9));
        }
    }

    #[test]
    fn resize_two_pixels_to_four_matches_hand_kernel() {
        // Destination centers map to source x = (i + 0.5) * 2/4 - 0.5:
        // -0.25 (edge replicated -> 0), 0.25, 0.75, 1.25 (-> 1).
        let img = ImageBuffer::new(2, 1, 1, vec![0.0, 1.0]).unwrap();
        let out = resize(&img, 4, 1).unwrap();
        let expected = [0.0, 0.25, 0.75, 1.0];
        for (v, e) in out.samples().iter().zip(expected) {
            assert!((v - e).abs() < 1e-12, "{v} vs {e}");
        }
    }

    #[test]
    fn resize_rejects_zero_dims() {
        let img = ImageBuffer::filled(4, 4, 1, 0.2);
        assert!(matches!(resize(&img, 0, 4), Err(Error::DegenerateDims { .. })));
    }

    #[test]
    fn resize_round_trip_of_smooth_image() {
        let img = smooth(96, 80, 1.0);
        let up = resize(&img, 160, 130).unwrap();
        let back = resize(&up, 96, 80).unwrap();
        assert!(rms_interior(&img, &back, 0) < 1e-2);
    }

    #[test]
    fn warp_identity_returns_input() {
        let img = smooth(40, 30, 0.0);
        let out = warp(&img, &Transform2D::identity(), 40, 30).unwrap();
        for (a, b) in img.samples().iter().zip(out.samples()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn warp_translation_shifts_content() {
        let img = smooth(50, 40, 0.7);
        let out = warp(&img, &Transform2D::translation(3.0, 0.0), 50, 40).unwrap();
        for y in 0..40 {
            for x in 3..50 {
                assert!((out.get(x, y, 0) - img.get(x - 3, y, 0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_quarter_turns_equal_a_half_turn() {
        let n = 48;
        let img = smooth(n, n, 0.2);
        let c = (n as f64 - 1.0) / 2.0;
        let quarter = Transform2D::rotation_about(std::f64::consts::FRAC_PI_2, c, c);
        let half = Transform2D::rotation_about(std::f64::consts::PI, c, c);
        let twice = warp(&warp(&img, &quarter, n, n).unwrap(), &quarter, n, n).unwrap();
        let once = warp(&img, &half, n, n).unwrap();
        for y in 4..n - 4 {
            for x in 4..n - 4 {
                assert!((twice.get(x, y, 0) - once.get(x, y, 0)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn warp_singular_transform_errors() {
        let img = smooth(8, 8, 0.0);
        let t = Transform2D::from_rows([[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        assert!(matches!(warp(&img, &t, 8, 8), Err(Error::SingularTransform(_))));
    }

    #[test]
    fn warp_round_trip_on_smooth_texture() {
        let img = smooth(80, 80, 0.4);
        let t = Transform2D::rotation_about(0.2, 40.0, 40.0).then(&Transform2D::translation(2.5, -1.5));
        let fwd = warp(&img, &t, 80, 80).unwrap();
        let back = warp(&fwd, &t.inverse().unwrap(), 80, 80).unwrap();
        assert!(rms_interior(&img, &back, 15) < 1e-2);
    }

    #[test]
    fn blur_kernel_one_is_identity() {
        let img = smooth(20, 20, 0.1);
        assert_eq!(gaussian_blur(&img, 1).unwrap(), img);
    }

    #[test]
    fn blur_rejects_even_and_nonpositive() {
        let img = smooth(8, 8, 0.0);
        for k in [0, -3, 2, 8] {
            assert!(matches!(gaussian_blur(&img, k), Err(Error::InvalidKernel(_))));
        }
    }

    #[test]
    fn blur_keeps_constants() {
        let img = ImageBuffer::filled(30, 20, 3, 0.37);
        let out = gaussian_blur(&img, 9).unwrap();
        assert!(out.samples().iter().all(|v| (v - 0.37).abs() < 1e-9));
    }

    #[test]
    fn blur_kernel_weights_sum_to_one() {
        for k in [1, 3, 5, 7, 15, 31] {
            let taps = gaussian_kernel(k).unwrap();
            assert!((taps.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn blurred_impulse_center_is_squared_center_tap() {
        // sigma for 5 taps: 0.3 * ((5 - 1) * 0.5 - 1) + 0.8 = 1.1
        let sigma: f64 = 1.1;
        let raw: Vec<f64> = (-2i32..=2)
            .map(|i| (-(f64::from(i * i)) / (2.0 * sigma * sigma)).exp())
            .collect();
        let center_tap = 1.0 / raw.iter().sum::<f64>();
        let img = ImageBuffer::from_fn(11, 11, 1, |x, y, _| if x == 5 && y == 5 { 1.0 } else { 0.0 });
        let out = gaussian_blur(&img, 5).unwrap();
        assert!((out.get(5, 5, 0) - center_tap * center_tap).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn blur_never_widens_range(seed in 0u64..1000, k in 0i64..6) {
            let img = ImageBuffer::from_fn(17, 13, 1, |x, y, _| {
                let h = (x as u64 * 73 + y as u64 * 151 + seed * 7919) % 1000;
                h as f64 / 999.0 * 0.6 + 0.2
            });
            let (lo, hi) = img.min_max();
            let out = gaussian_blur(&img, 2 * k + 1).unwrap();
            let (olo, ohi) = out.min_max();
            prop_assert!(olo >= lo - 1e-12 && ohi <= hi + 1e-12);
        }
    }
}
