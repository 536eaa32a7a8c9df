//! Scene geometry, ray casting and shading.
//!
//! Camera: pinhole at the origin looking down +Z, image `x` right and `y`
//! down, focal length equal to the frame height in pixels. World units are
//! face heights, so a face plane at depth `Z` has relative height `1 / Z`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::texture::{seeded, SkinTexture, WallTexture, EYE_X, EYE_Y, MOUTH_X, MOUTH_Y, NOSE_Y};
use super::{mix_seed, AttackClass, SceneSpec, ScreenArtifacts};
use crate::flow::FlowField;
use crate::geometry::{FaceBox, FrameAnnotation, KeyPoints};
use crate::imaging::ImageBuffer;
use crate::sequence::SequenceSource;
use crate::{Error, Result};

/// Half-axes of the head ellipse in face-local units.
pub(crate) const FACE_RX: f64 = 0.40;
pub(crate) const FACE_RY: f64 = 0.52;
/// Face width used to express nose protrusion.
pub(crate) const FACE_WIDTH: f64 = 2.0 * FACE_RX;
const DOME_AMP: f64 = 0.2;
const WALL_DEPTH: f64 = 3.5;
/// Depth at which the content of photos and screens was originally captured.
const CONTENT_DEPTH: f64 = 1.0 / 0.6;
/// Half-extent of a displayed photo or screen, face-height units.
const DISPLAY_HALF_EXTENT: f64 = 1.5;
/// Depth of the replay screen when it fills the camera view.
const REPLAY_SCREEN_DEPTH: f64 = 0.6;
/// Wearer's face plane behind the mask: nose tip plus clearance.
const MASK_GAP: f64 = DOME_AMP + 0.25 * FACE_WIDTH + 0.01;
const MASK_RX: f64 = 0.42;
const MASK_RY: f64 = 0.55;
const EYE_HOLE_RX: f64 = 0.05;
const EYE_HOLE_RY: f64 = 0.026;
const AMBIENT: f64 = 0.35;
const FIXED_POINT_ITERS: usize = 24;

#[derive(Clone, Copy, Debug)]
pub(crate) struct Camera {
    pub width: usize,
    pub height: usize,
    pub f: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Camera {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            f: height as f64,
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
        }
    }

    /// Direction `(dx, dy, 1)` of the ray through pixel `(x, y)`.
    #[inline]
    pub fn ray(&self, x: f64, y: f64) -> [f64; 2] {
        [(x - self.cx) / self.f, (y - self.cy) / self.f]
    }

    #[inline]
    pub fn project(&self, p: [f64; 3]) -> [f64; 2] {
        [self.cx + self.f * p[0] / p[2], self.cy + self.f * p[1] / p[2]]
    }

    fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= 0.0 && p[1] >= 0.0 && p[0] <= (self.width - 1) as f64 && p[1] <= (self.height - 1) as f64
    }
}

/// Placement of a face-local frame: origin at `(x, y, z)`, rotated by `roll`
/// about the optical axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Pose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub roll: f64,
}

impl Pose {
    #[inline]
    fn to_local(&self, px: f64, py: f64) -> [f64; 2] {
        let (s, c) = self.roll.sin_cos();
        let (dx, dy) = (px - self.x, py - self.y);
        [c * dx + s * dy, -s * dx + c * dy]
    }

    /// Camera-space point of local `(a, b)` lifted `lift` toward the camera.
    #[inline]
    fn to_camera(&self, a: f64, b: f64, lift: f64) -> [f64; 3] {
        let (s, c) = self.roll.sin_cos();
        [self.x + c * a - s * b, self.y + s * a + c * b, self.z - lift]
    }

    /// Intersection of ray `dir` with this pose's plane, in local coordinates.
    #[inline]
    fn plane_hit(&self, dir: [f64; 2]) -> [f64; 2] {
        self.to_local(dir[0] * self.z, dir[1] * self.z)
    }
}

/// What a camera ray hits, in the coordinates of the hit object.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Hit {
    Wall { x: f64, y: f64 },
    Face { a: f64, b: f64 },
    Plane { u: f64, v: f64 },
}

impl Hit {
    fn close_to(&self, other: &Hit) -> bool {
        const TOL: f64 = 1e-4;
        match (self, other) {
            (Hit::Wall { x, y }, Hit::Wall { x: x2, y: y2 }) => (x - x2).abs() < TOL && (y - y2).abs() < TOL,
            (Hit::Face { a, b }, Hit::Face { a: a2, b: b2 }) => (a - a2).abs() < TOL && (b - b2).abs() < TOL,
            (Hit::Plane { u, v }, Hit::Plane { u: u2, v: v2 }) => (u - u2).abs() < TOL && (v - v2).abs() < TOL,
            _ => false,
        }
    }
}

/// Textured head: an elliptical dome with a nose ridge.
#[derive(Clone, Debug)]
pub(crate) struct FaceModel {
    skin: SkinTexture,
    nose_amp: f64,
}

impl FaceModel {
    pub fn new(skin: SkinTexture, depth_amplitude: f64) -> Self {
        Self {
            skin,
            nose_amp: depth_amplitude * FACE_WIDTH,
        }
    }

    /// Height above the face plane, `None` outside the head ellipse.
    #[inline]
    pub fn lift(&self, a: f64, b: f64) -> Option<f64> {
        let r2 = (a / FACE_RX).powi(2) + (b / FACE_RY).powi(2);
        if r2 >= 1.0 {
            return None;
        }
        let dome = DOME_AMP * (1.0 - r2).powi(2);
        let nose = self.nose_amp * (-(a * a) / (2.0 * 0.045 * 0.045) - (b - 0.03).powi(2) / (2.0 * 0.075 * 0.075)).exp();
        let socket = |sx: f64| -0.012 * (-((a - sx).powi(2) + (b - EYE_Y).powi(2)) / (2.0 * 0.04 * 0.04)).exp();
        Some(dome + nose + socket(-EYE_X) + socket(EYE_X))
    }

    fn lift_or_zero(&self, a: f64, b: f64) -> f64 {
        self.lift(a, b).unwrap_or(0.0)
    }

    /// Unit normal (toward the camera) in face-local axes.
    fn normal(&self, a: f64, b: f64) -> [f64; 3] {
        const H: f64 = 1e-4;
        let ga = (self.lift_or_zero(a + H, b) - self.lift_or_zero(a - H, b)) / (2.0 * H);
        let gb = (self.lift_or_zero(a, b + H) - self.lift_or_zero(a, b - H)) / (2.0 * H);
        let n = [ga, gb, -1.0];
        let l = (n[0] * n[0] + n[1] * n[1] + 1.0).sqrt();
        [n[0] / l, n[1] / l, n[2] / l]
    }

    /// Ray-surface intersection by fixed-point iteration on depth.
    fn intersect(&self, dir: [f64; 2], pose: &Pose) -> Option<[f64; 2]> {
        let mut z = pose.z;
        let mut ab = pose.to_local(dir[0] * z, dir[1] * z);
        for _ in 0..FIXED_POINT_ITERS {
            let next = pose.z - self.lift_or_zero(ab[0], ab[1]);
            let nab = pose.to_local(dir[0] * next, dir[1] * next);
            let done = (next - z).abs() < 1e-12;
            z = next;
            ab = nab;
            if done {
                break;
            }
        }
        self.lift(ab[0], ab[1]).map(|_| ab)
    }

    pub fn landmarks(&self) -> [[f64; 2]; 5] {
        [
            [-EYE_X, EYE_Y],
            [EYE_X, EYE_Y],
            [0.0, NOSE_Y],
            [-MOUTH_X, MOUTH_Y],
            [MOUTH_X, MOUTH_Y],
        ]
    }
}

/// A live head in front of a textured wall.
#[derive(Clone, Debug)]
pub(crate) struct RealWorld {
    pub face: FaceModel,
    pub wall: WallTexture,
}

impl RealWorld {
    fn random(seed: u64, depth_amplitude: f64) -> Self {
        let mut rng = seeded(seed);
        let skin = SkinTexture::random(&mut rng);
        let wall = WallTexture::random(&mut rng);
        Self {
            face: FaceModel::new(skin, depth_amplitude),
            wall,
        }
    }

    fn trace(&self, dir: [f64; 2], pose: &Pose) -> Hit {
        match self.face.intersect(dir, pose) {
            Some([a, b]) => Hit::Face { a, b },
            None => Hit::Wall {
                x: dir[0] * WALL_DEPTH,
                y: dir[1] * WALL_DEPTH,
            },
        }
    }

    fn shade(&self, hit: Hit, pose: &Pose) -> [f64; 3] {
        match hit {
            Hit::Face { a, b } => {
                let albedo = self.face.skin.albedo(a, b);
                let n = self.face.normal(a, b);
                let (s, c) = pose.roll.sin_cos();
                let n = [c * n[0] - s * n[1], s * n[0] + c * n[1], n[2]];
                let l = light();
                let lambert = (n[0] * l[0] + n[1] * l[1] + n[2] * l[2]).max(0.0);
                let k = AMBIENT + (1.0 - AMBIENT) * lambert;
                albedo.map(|v| v * k)
            }
            Hit::Wall { x, y } => self.wall.albedo(x, y).map(|v| v * 0.9),
            Hit::Plane { .. } => unreachable!("no planes in a live scene"),
        }
    }

    fn color(&self, dir: [f64; 2], pose: &Pose) -> [f64; 3] {
        self.shade(self.trace(dir, pose), pose)
    }

    /// Camera-space landmark positions on the surface.
    fn landmarks_3d(&self, pose: &Pose) -> [[f64; 3]; 5] {
        self.face
            .landmarks()
            .map(|[a, b]| pose.to_camera(a, b, self.face.lift_or_zero(a, b)))
    }

    /// Where a hit recorded under `from` lies in the image under `to`.
    fn reproject(&self, hit: Hit, to: &Pose, cam: &Camera) -> [f64; 2] {
        match hit {
            Hit::Face { a, b } => cam.project(to.to_camera(a, b, self.face.lift_or_zero(a, b))),
            Hit::Wall { x, y } => cam.project([x, y, WALL_DEPTH]),
            Hit::Plane { .. } => unreachable!("no planes in a live scene"),
        }
    }
}

/// Direction toward the light, camera axes, unit length.
fn light() -> [f64; 3] {
    let l: [f64; 3] = [-0.35, -0.45, -1.0];
    let n = (l[0] * l[0] + l[1] * l[1] + l[2] * l[2]).sqrt();
    l.map(|v| v / n)
}

/// A still image of a live scene, addressed in face-height units on the
/// display surface with the face centre at the origin.
#[derive(Clone, Debug)]
pub(crate) struct Content {
    world: RealWorld,
    pose: Pose,
}

impl Content {
    fn new(world: RealWorld) -> Self {
        Self {
            world,
            pose: Pose {
                x: 0.0,
                y: 0.0,
                z: CONTENT_DEPTH,
                roll: 0.0,
            },
        }
    }

    fn color(&self, u: f64, v: f64) -> [f64; 3] {
        self.world.color([u / CONTENT_DEPTH, v / CONTENT_DEPTH], &self.pose)
    }

    fn landmarks(&self) -> [[f64; 2]; 5] {
        self.world
            .landmarks_3d(&self.pose)
            .map(|p| [CONTENT_DEPTH * p[0] / p[2], CONTENT_DEPTH * p[1] / p[2]])
    }
}

fn luma(c: [f64; 3]) -> f64 {
    0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]
}

/// Ink on paper: compressed contrast, reduced saturation, warm paper white.
fn print_look(c: [f64; 3]) -> [f64; 3] {
    let y = luma(c);
    let tint = [1.02, 1.0, 0.93];
    let mut out = [0.0; 3];
    for k in 0..3 {
        let desat = y + 0.7 * (c[k] - y);
        out[k] = (0.52 + 0.78 * (desat - 0.5)) * tint[k];
    }
    out
}

/// Emissive display: gamma, raised black level, cool tint and a point-sampled
/// subpixel grid at `(u, v)` in screen units.
fn screen_look(c: [f64; 3], u: f64, v: f64, s: &ScreenArtifacts) -> [f64; 3] {
    let tau = 2.0 * std::f64::consts::PI;
    let g = (tau * u / s.pixel_grid_period).cos() * (tau * v / s.pixel_grid_period).cos();
    let g2 = (tau * u / s.pixel_grid_period).cos();
    // Red and blue against green, weighted so luminance barely moves.
    let chroma = [1.0, -0.70, 1.0];
    let tint = [0.95, 1.0, 1.07];
    let mut out = [0.0; 3];
    for k in 0..3 {
        let e = 0.04 + 0.94 * c[k].max(0.0).powf(s.gamma);
        let m = s.moire_strength * (0.75 * chroma[k] * g2 + 0.25 * g);
        out[k] = e * tint[k] * (1.0 + m);
    }
    out
}

#[derive(Clone, Debug)]
enum Medium {
    Print,
    Screen(ScreenArtifacts),
}

#[derive(Clone, Debug)]
enum Body {
    Live(RealWorld),
    Display {
        content: Content,
        wall: WallTexture,
        medium: Medium,
    },
    Mask {
        wearer: RealWorld,
        print: Content,
    },
    Replay {
        inner: Box<Scene>,
        screen: ScreenArtifacts,
    },
}

/// A lazily rendered recording; frames are synthesized on request.
#[derive(Clone, Debug)]
pub struct Scene {
    spec: SceneSpec,
    camera: Camera,
    body: Body,
}

impl Scene {
    pub fn new(spec: SceneSpec) -> Result<Self> {
        spec.validate()?;
        let camera = Camera::new(spec.frame_size[0], spec.frame_size[1]);
        let seed = spec.texture_seed;
        let body = match spec.attack {
            AttackClass::Real => Body::Live(RealWorld::random(mix_seed(seed, 1), spec.depth_amplitude.unwrap_or(0.25))),
            AttackClass::PrintedPhoto | AttackClass::ScreenPhoto | AttackClass::StaticVideo => {
                let victim = RealWorld::random(mix_seed(seed, 2), 0.25);
                let wall = WallTexture::random(&mut seeded(mix_seed(seed, 3)));
                let medium = match spec.attack {
                    AttackClass::PrintedPhoto => Medium::Print,
                    _ => Medium::Screen(spec.screen_artifacts.expect("validated")),
                };
                Body::Display {
                    content: Content::new(victim),
                    wall,
                    medium,
                }
            }
            AttackClass::PrintedMask => Body::Mask {
                wearer: RealWorld::random(mix_seed(seed, 4), 0.25),
                print: Content::new(RealWorld::random(mix_seed(seed, 2), 0.25)),
            },
            AttackClass::DynamicVideo => {
                let inner = SceneSpec {
                    attack: AttackClass::Real,
                    depth_amplitude: Some(0.25),
                    screen_artifacts: None,
                    static_jitter: 0.0,
                    texture_seed: mix_seed(seed, 5),
                    ..spec.clone()
                };
                Body::Replay {
                    inner: Box::new(Scene::new(inner)?),
                    screen: spec.screen_artifacts.expect("validated"),
                }
            }
        };
        Ok(Self { spec, camera, body })
    }

    pub fn spec(&self) -> &SceneSpec {
        &self.spec
    }

    pub fn frame_count(&self) -> usize {
        self.spec.frames
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i < self.spec.frames {
            Ok(())
        } else {
            Err(Error::InvalidSpec(format!("frame {i} of {}", self.spec.frames)))
        }
    }

    /// Exact relative face height of frame `i`.
    pub fn rel_height(&self, i: usize) -> f64 {
        let t = i as f64 / (self.spec.frames - 1) as f64;
        self.spec.start_rel_height * (1.0 + (self.spec.approach - 1.0) * t)
    }

    /// Pose of the face-bearing surface: the head, the photo or the mask.
    fn pose(&self, i: usize) -> Pose {
        let t = i as f64 / (self.spec.frames - 1) as f64;
        let m = &self.spec.motion;
        Pose {
            x: m.offset[0] + m.drift[0] * t,
            y: m.offset[1] + m.drift[1] * t,
            z: 1.0 / self.rel_height(i),
            roll: (m.roll_deg[0] + (m.roll_deg[1] - m.roll_deg[0]) * t).to_radians(),
        }
    }

    /// Small wobble of the face shown by a static replay, in display units.
    fn jitter(&self, i: usize) -> [f64; 2] {
        let j = self.spec.static_jitter;
        if j == 0.0 {
            return [0.0, 0.0];
        }
        let ph = (mix_seed(self.spec.texture_seed, 6) % 1000) as f64 * 0.001 * std::f64::consts::TAU;
        let t = i as f64;
        [j * (0.9 * t + ph).sin(), j * (1.3 * t + 2.0 * ph).cos()]
    }

    fn wearer_pose(&self, i: usize) -> Pose {
        let p = self.pose(i);
        Pose { z: p.z + MASK_GAP, ..p }
    }

    fn in_mask(u: f64, v: f64) -> bool {
        let outline = (u / MASK_RX).powi(2) + (v / MASK_RY).powi(2) < 1.0;
        let hole = |sx: f64| ((u - sx) / EYE_HOLE_RX).powi(2) + ((v - EYE_Y) / EYE_HOLE_RY).powi(2) < 1.0;
        outline && !hole(-EYE_X) && !hole(EYE_X)
    }

    /// Surface hit by the ray through pixel `(x, y)` of frame `i`.
    pub(crate) fn hit(&self, i: usize, x: f64, y: f64) -> Hit {
        let dir = self.camera.ray(x, y);
        match &self.body {
            Body::Live(world) => world.trace(dir, &self.pose(i)),
            Body::Display { .. } => {
                let [u, v] = self.pose(i).plane_hit(dir);
                if u.abs() <= DISPLAY_HALF_EXTENT && v.abs() <= DISPLAY_HALF_EXTENT {
                    Hit::Plane { u, v }
                } else {
                    Hit::Wall {
                        x: dir[0] * WALL_DEPTH,
                        y: dir[1] * WALL_DEPTH,
                    }
                }
            }
            Body::Mask { wearer, .. } => {
                let [u, v] = self.pose(i).plane_hit(dir);
                if Self::in_mask(u, v) {
                    Hit::Plane { u, v }
                } else {
                    wearer.trace(dir, &self.wearer_pose(i))
                }
            }
            Body::Replay { inner, .. } => inner.hit(i, x, y),
        }
    }

    /// Noise-free color of pixel `(x, y)` in frame `i`.
    fn color(&self, i: usize, x: f64, y: f64) -> [f64; 3] {
        let hit = self.hit(i, x, y);
        match &self.body {
            Body::Live(world) => world.shade(hit, &self.pose(i)),
            Body::Display { content, wall, medium } => match hit {
                Hit::Plane { u, v } => {
                    let [jx, jy] = self.jitter(i);
                    let c = content.color(u - jx, v - jy);
                    match medium {
                        Medium::Print => print_look(c),
                        Medium::Screen(s) => screen_look(c, u, v, s),
                    }
                }
                Hit::Wall { x, y } => wall.albedo(x, y).map(|v| v * 0.9),
                Hit::Face { .. } => unreachable!("displays have no face layer"),
            },
            Body::Mask { wearer, print } => match hit {
                Hit::Plane { u, v } => print_look(print.color(u, v)),
                _ => wearer.shade(hit, &self.wearer_pose(i)),
            },
            Body::Replay { inner, screen } => {
                let c = inner.color(i, x, y);
                let d = self.camera.ray(x, y).map(|r| r * REPLAY_SCREEN_DEPTH);
                screen_look(c, d[0], d[1], screen)
            }
        }
    }

    /// Renders frame `i` with sensor noise; deterministic per spec and index.
    pub fn render_frame(&self, i: usize) -> Result<ImageBuffer> {
        self.check_index(i)?;
        let (w, h) = (self.camera.width, self.camera.height);
        let mut data = Vec::with_capacity(w * h * 3);
        for y in 0..h {
            for x in 0..w {
                data.extend(self.color(i, x as f64, y as f64));
            }
        }
        let sigma = self.spec.noise_sigma;
        if sigma > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.spec.texture_seed, 1000 + i as u64));
            let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidSpec(e.to_string()))?;
            for v in &mut data {
                *v += normal.sample(&mut rng);
            }
        }
        for v in &mut data {
            *v = v.clamp(0.0, 1.0);
        }
        ImageBuffer::new(w, h, 3, data)
    }

    pub fn annotation(&self, i: usize) -> Result<FrameAnnotation> {
        self.check_index(i)?;
        let cam = &self.camera;
        let (center, side, landmarks): ([f64; 2], f64, [[f64; 2]; 5]) = match &self.body {
            Body::Live(world) => {
                let p = self.pose(i);
                let lm = world.landmarks_3d(&p).map(|q| cam.project(q));
                (cam.project([p.x, p.y, p.z]), cam.f / p.z, lm)
            }
            Body::Display { content, .. } => {
                let p = self.pose(i);
                let [jx, jy] = self.jitter(i);
                let lm = content
                    .landmarks()
                    .map(|[u, v]| cam.project(p.to_camera(u + jx, v + jy, 0.0)));
                (cam.project(p.to_camera(jx, jy, 0.0)), cam.f / p.z, lm)
            }
            Body::Mask { print, .. } => {
                let p = self.pose(i);
                let lm = print.landmarks().map(|[u, v]| cam.project(p.to_camera(u, v, 0.0)));
                (cam.project([p.x, p.y, p.z]), cam.f / p.z, lm)
            }
            Body::Replay { inner, .. } => return inner.annotation(i),
        };
        // Boxes use the first-covered-pixel convention: centre + 0.5.
        let face_box = FaceBox::new(center[0] - 0.5 * side + 0.5, center[1] - 0.5 * side + 0.5, side, side)?;
        Ok(FrameAnnotation {
            face_box,
            keypoints: KeyPoints::from_points(landmarks),
        })
    }

    /// Image position in frame `j` of the surface point seen at `(x, y)` in
    /// frame `i`; `None` when it leaves the frame or is hidden in frame `j`.
    pub fn displacement(&self, i: usize, j: usize, x: f64, y: f64) -> Option<[f64; 2]> {
        if let Body::Replay { inner, .. } = &self.body {
            return inner.displacement(i, j, x, y);
        }
        let hit = self.hit(i, x, y);
        let cam = &self.camera;
        let target = match (&self.body, hit) {
            (Body::Live(world), h) => world.reproject(h, &self.pose(j), cam),
            (Body::Display { .. }, Hit::Plane { u, v }) => {
                let [ix, iy] = self.jitter(i);
                let [jx, jy] = self.jitter(j);
                let (u2, v2) = (u - ix + jx, v - iy + jy);
                cam.project(self.pose(j).to_camera(u2, v2, 0.0))
            }
            (Body::Mask { .. }, Hit::Plane { u, v }) => cam.project(self.pose(j).to_camera(u, v, 0.0)),
            (Body::Mask { wearer, .. }, h) => wearer.reproject(h, &self.wearer_pose(j), cam),
            (_, Hit::Wall { x, y }) => cam.project([x, y, WALL_DEPTH]),
            _ => return None,
        };
        if !cam.contains(target) {
            return None;
        }
        let seen = self.hit(j, target[0], target[1]);
        let expected = match (&self.body, hit) {
            (Body::Display { .. }, Hit::Plane { u, v }) => {
                let [ix, iy] = self.jitter(i);
                let [jx, jy] = self.jitter(j);
                Hit::Plane {
                    u: u - ix + jx,
                    v: v - iy + jy,
                }
            }
            _ => hit,
        };
        let visible = seen.close_to(&expected);
        visible.then(|| [target[0] - x, target[1] - y])
    }

    /// Dense ground-truth flow from frame `i` to frame `j` with validity mask.
    pub fn ground_truth_flow(&self, i: usize, j: usize) -> Result<(FlowField, Vec<bool>)> {
        self.ground_truth_flow_mapped(i, j, None)
    }

    /// Ground-truth flow on a grid related to the frames by `maps`: the first
    /// transform takes frame `i` pixels to the grid, the second takes frame `j`
    /// pixels to the grid of the second image, e.g. the crop transforms.
    pub fn ground_truth_flow_mapped(
        &self,
        i: usize,
        j: usize,
        maps: Option<(&crate::imaging::Transform2D, &crate::imaging::Transform2D, usize, usize)>,
    ) -> Result<(FlowField, Vec<bool>)> {
        self.check_index(i)?;
        self.check_index(j)?;
        let (w, h) = match maps {
            Some((_, _, w, h)) => (w, h),
            None => (self.camera.width, self.camera.height),
        };
        let inv = match maps {
            Some((ti, _, _, _)) => Some(ti.inverse()?),
            None => None,
        };
        let mut u = Vec::with_capacity(w * h);
        let mut v = Vec::with_capacity(w * h);
        let mut valid = Vec::with_capacity(w * h);
        for gy in 0..h {
            for gx in 0..w {
                let (gxf, gyf) = (gx as f64, gy as f64);
                let src = match &inv {
                    Some(t) => t.apply(gxf, gyf),
                    None => (gxf, gyf),
                };
                let d = if self.camera.contains([src.0, src.1]) {
                    self.displacement(i, j, src.0, src.1)
                } else {
                    None
                };
                match d {
                    Some([dx, dy]) => {
                        let dst = (src.0 + dx, src.1 + dy);
                        let out = match maps {
                            Some((_, tj, _, _)) => tj.apply(dst.0, dst.1),
                            None => dst,
                        };
                        u.push(out.0 - gxf);
                        v.push(out.1 - gyf);
                        valid.push(true);
                    }
                    None => {
                        u.push(0.0);
                        v.push(0.0);
                        valid.push(false);
                    }
                }
            }
        }
        Ok((FlowField::new(w, h, u, v)?, valid))
    }
}

impl SequenceSource for Scene {
    fn len(&self) -> usize {
        self.spec.frames
    }

    fn frame(&self, i: usize) -> Result<ImageBuffer> {
        self.render_frame(i)
    }

    fn annotation(&self, i: usize) -> Result<FrameAnnotation> {
        Scene::annotation(self, i)
    }

    fn label(&self) -> AttackClass {
        self.spec.attack
    }

    fn frame_size(&self) -> Result<(usize, usize)> {
        Ok((self.camera.width, self.camera.height))
    }

    fn rel_height(&self, i: usize) -> Option<f64> {
        (i < self.spec.frames).then(|| Scene::rel_height(self, i))
    }

    fn id(&self) -> String {
        format!("{}-{:016x}", self.spec.attack.name(), self.spec.texture_seed)
    }
}
