//! Procedural albedo: sums of random sinusoids plus a few facial marks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

#[derive(Clone, Debug)]
struct Wave {
    kx: f64,
    ky: f64,
    phase: f64,
    amp: f64,
}

/// Band-limited scalar pattern with zero mean and values in `[-amp_sum, amp_sum]`.
#[derive(Clone, Debug)]
pub struct WaveTexture {
    waves: Vec<Wave>,
}

impl WaveTexture {
    /// `count` waves with periods uniform in `[min_period, max_period]` and
    /// amplitudes summing to `total_amp`.
    pub fn random(rng: &mut ChaCha8Rng, count: usize, min_period: f64, max_period: f64, total_amp: f64) -> Self {
        let mut waves: Vec<Wave> = (0..count)
            .map(|_| {
                let period = rng.random_range(min_period..max_period);
                let theta = rng.random_range(0.0..PI);
                let k = 2.0 * PI / period;
                Wave {
                    kx: k * theta.cos(),
                    ky: k * theta.sin(),
                    phase: rng.random_range(0.0..2.0 * PI),
                    amp: rng.random_range(0.5..1.0),
                }
            })
            .collect();
        let sum: f64 = waves.iter().map(|w| w.amp).sum();
        for w in &mut waves {
            w.amp *= total_amp / sum;
        }
        Self { waves }
    }

    #[inline]
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.waves.iter().map(|w| w.amp * (w.kx * x + w.ky * y + w.phase).sin()).sum()
    }
}

#[derive(Clone, Copy, Debug)]
struct Mark {
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
    color: [f64; 3],
    strength: f64,
}

impl Mark {
    /// Soft elliptical blend weight in `[0, 1]`.
    fn weight(&self, a: f64, b: f64) -> f64 {
        let r2 = ((a - self.cx) / self.rx).powi(2) + ((b - self.cy) / self.ry).powi(2);
        if r2 >= 1.0 {
            0.0
        } else {
            self.strength * (1.0 - r2).powi(2)
        }
    }
}

/// Skin albedo in face-local units (face height 1, origin at the face centre,
/// `b` pointing down).
#[derive(Clone, Debug)]
pub struct SkinTexture {
    tone: [f64; 3],
    detail: WaveTexture,
    blotch: WaveTexture,
    hair: [f64; 3],
    marks: Vec<Mark>,
}

impl SkinTexture {
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        let shade = rng.random_range(0.55..0.95);
        let tone = [
            shade * rng.random_range(0.85..0.95),
            shade * rng.random_range(0.62..0.72),
            shade * rng.random_range(0.50..0.62),
        ];
        let hair_level = rng.random_range(0.08..0.35);
        let hair = [hair_level, hair_level * 0.85, hair_level * 0.7];
        let eye = [0.12, 0.1, 0.1];
        let brow = [hair[0] * 0.8, hair[1] * 0.8, hair[2] * 0.8];
        let lip = [0.62 * shade, 0.3 * shade, 0.3 * shade];
        let mut marks = Vec::new();
        for side in [-1.0, 1.0] {
            marks.push(Mark {
                cx: side * EYE_X,
                cy: EYE_Y,
                rx: 0.065,
                ry: 0.03,
                color: eye,
                strength: 0.9,
            });
            marks.push(Mark {
                cx: side * EYE_X,
                cy: EYE_Y - 0.075,
                rx: 0.085,
                ry: 0.018,
                color: brow,
                strength: 0.85,
            });
        }
        marks.push(Mark {
            cx: 0.0,
            cy: MOUTH_Y,
            rx: 0.13,
            ry: 0.035,
            color: lip,
            strength: 0.8,
        });
        Self {
            tone,
            detail: WaveTexture::random(rng, 14, 0.045, 0.2, 0.35),
            blotch: WaveTexture::random(rng, 4, 0.3, 0.8, 0.12),
            hair,
            marks,
        }
    }

    pub fn albedo(&self, a: f64, b: f64) -> [f64; 3] {
        let d = 1.0 + self.detail.eval(a, b);
        let t = self.blotch.eval(a, b);
        let mut c = [
            self.tone[0] * d * (1.0 + t),
            self.tone[1] * d,
            self.tone[2] * d * (1.0 - t),
        ];
        // Hairline: top of the head ellipse.
        let hair_w = smoothstep(-0.36, -0.42, b);
        if hair_w > 0.0 {
            for k in 0..3 {
                c[k] += hair_w * (self.hair[k] * d - c[k]);
            }
        }
        for m in &self.marks {
            let w = m.weight(a, b);
            if w > 0.0 {
                for k in 0..3 {
                    c[k] += w * (m.color[k] * d - c[k]);
                }
            }
        }
        c
    }
}

/// Wall albedo in world units.
#[derive(Clone, Debug)]
pub struct WallTexture {
    base: [f64; 3],
    pattern: WaveTexture,
    tint: WaveTexture,
}

impl WallTexture {
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        let l = rng.random_range(0.35..0.75);
        let base = [
            l * rng.random_range(0.8..1.2),
            l * rng.random_range(0.8..1.2),
            l * rng.random_range(0.8..1.2),
        ];
        Self {
            base,
            pattern: WaveTexture::random(rng, 10, 0.12, 0.6, 0.45),
            tint: WaveTexture::random(rng, 3, 0.5, 1.5, 0.15),
        }
    }

    pub fn albedo(&self, x: f64, y: f64) -> [f64; 3] {
        let p = 1.0 + self.pattern.eval(x, y);
        let t = self.tint.eval(x, y);
        [self.base[0] * p * (1.0 + t), self.base[1] * p, self.base[2] * p * (1.0 - t)]
    }
}

pub const EYE_X: f64 = 0.17;
pub const EYE_Y: f64 = -0.1;
pub const NOSE_Y: f64 = 0.07;
pub const MOUTH_X: f64 = 0.12;
pub const MOUTH_Y: f64 = 0.24;

/// 0 at `e0`, 1 at `e1`, Hermite in between; works for either edge order.
pub fn smoothstep(e0: f64, e1: f64, x: f64) -> f64 {
    let t = ((x - e0) / (e1 - e0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
