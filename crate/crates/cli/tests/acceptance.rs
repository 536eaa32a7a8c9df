//! Acceptance run. Every test prints one `PASS <criterion>: ...` or
//! `FAIL <criterion>: ...` line to stdout (uncaptured) and fails when its
//! criterion does not hold.
//!
//! The benchmark criteria share one seeded 300-recording simulator set; the
//! first test touching it pays for the features (several minutes on one core).

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tower::ServiceExt;

use flowgate::classifier::{loss_and_gradient, AugmentConfig, LinearHead};
use flowgate::eval::{roc_auc, run_suite, EvalConfig, EvalData, EvalReport, SampleFeatures, Split, Workbench};
use flowgate::flow::{estimate_flow, fit_expansion, FlowConfig, FlowField};
use flowgate::geometry::{FaceBox, FrameAnnotation, KeyPoints};
use flowgate::imaging::{decode_image, encode_png, ImageBuffer};
use flowgate::pipeline::{classify, PipelineConfig};
use flowgate::protocol::{CaptureSession, CaptureState, FrameDims, ProtocolConfig, RestartReason, StepOutcome};
use flowgate::sequence::{run_protocol, SequenceSource};
use flowgate::simulator::{make_dataset, write_sequence, AttackClass, Scene, SimDataset};
use flowgate_service::{router, AppState, ServiceConfig};

const BENCH_PER_CLASS: usize = 50;
const BENCH_SEED: u64 = 2024;
const PHENO_PER_CLASS: usize = 10;
const PHENO_SEED: u64 = 77;

fn verdict_line(name: &str, pass: bool, detail: &str) {
    let line = format!("{} {name}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    assert!(pass, "{name}: {detail}");
}

fn fmt_auc(m: &BTreeMap<AttackClass, f64>) -> String {
    m.iter().map(|(c, a)| format!("{c}={a:.3}")).collect::<Vec<_>>().join(" ")
}

struct Bench {
    ds: SimDataset,
    wb: Workbench,
}

fn bench() -> &'static Bench {
    static B: OnceLock<Bench> = OnceLock::new();
    B.get_or_init(|| {
        let ds = make_dataset(BENCH_PER_CLASS, BENCH_SEED).unwrap();
        let wb = Workbench::new(EvalData::from_sim(&ds).unwrap(), EvalConfig::default()).unwrap();
        Bench { ds, wb }
    })
}

fn suite(name: &'static str) -> &'static [EvalReport] {
    static CACHE: OnceLock<std::sync::Mutex<BTreeMap<&'static str, &'static [EvalReport]>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
    *guard
        .entry(name)
        .or_insert_with(|| Box::leak(run_suite(&bench().wb, name).unwrap().into_boxed_slice()))
}

fn row<'a>(reports: &'a [EvalReport], name: &str) -> &'a EvalReport {
    reports.iter().find(|r| r.row == name).unwrap_or_else(|| panic!("row {name}"))
}

fn acceptance_head() -> &'static LinearHead {
    static H: OnceLock<LinearHead> = OnceLock::new();
    H.get_or_init(|| {
        let wb = &bench().wb;
        wb.train_variant(&wb.default_variant("acceptance")).unwrap().0
    })
}

// ---------------------------------------------------------------- flow

/// Random sum of plane waves with periods in [6, 48] px, values in [0.05, 0.95].
fn texture(side: usize, rng: &mut ChaCha8Rng) -> ImageBuffer {
    let waves: Vec<[f64; 4]> = (0..10)
        .map(|_| {
            let k = std::f64::consts::TAU / rng.random_range(6.0..48.0);
            let th: f64 = rng.random_range(0.0..std::f64::consts::PI);
            [k * th.cos(), k * th.sin(), rng.random_range(0.0..std::f64::consts::TAU), rng.random_range(0.2..1.0)]
        })
        .collect();
    let total: f64 = waves.iter().map(|w| w[3]).sum();
    ImageBuffer::from_fn(side, side, 3, |x, y, c| {
        let s: f64 = waves
            .iter()
            .map(|w| w[3] * (w[0] * x as f64 + w[1] * y as f64 + w[2] + 0.3 * c as f64).sin())
            .sum();
        0.5 + 0.45 * s / total
    })
}

fn central(side: usize) -> impl Fn(usize, usize) -> bool {
    let lo = side / 8;
    let hi = side - side / 8;
    move |x, y| x >= lo && x < hi && y >= lo && y < hi
}

#[test]
fn c01_flow_correctness() {
    let cfg = FlowConfig::default();
    assert_eq!((cfg.resolution, cfg.refine_iters), (256, 3));
    let side = cfg.resolution;
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut epes = Vec::new();
    let mut slowest: f64 = 0.0;
    for _ in 0..20 {
        let a = texture(side, &mut rng);
        let dx = rng.random_range(-6i64..=6);
        let dy = rng.random_range(-6i64..=6);
        // b(p) = a(p - d): content moves by +d.
        let b = ImageBuffer::from_fn(side, side, 3, |x, y, c| {
            let sx = (x as i64 - dx).clamp(0, side as i64 - 1) as usize;
            let sy = (y as i64 - dy).clamp(0, side as i64 - 1) as usize;
            a.get(sx, sy, c)
        });
        let t = Instant::now();
        let f = estimate_flow(&a, &b, &cfg).unwrap();
        slowest = slowest.max(t.elapsed().as_secs_f64());
        let truth = FlowField::from_fn(side, side, |_, _| (dx as f64, dy as f64));
        epes.push(f.mean_epe(&truth, central(side)));
    }
    let mean_epe = epes.iter().sum::<f64>() / epes.len() as f64;

    let a = texture(side, &mut rng);
    let k = 1.10;
    let c = (side as f64 - 1.0) / 2.0;
    let b = ImageBuffer::from_fn(side, side, 3, |x, y, ch| {
        a.sample(c + (x as f64 - c) / k, c + (y as f64 - c) / k, ch)
    });
    let fit = fit_expansion(&estimate_flow(&a, &b, &cfg).unwrap(), [c, c], central(side));
    let zoom = 1.0 + fit.scale;

    let same = estimate_flow(&a, &a, &cfg).unwrap();
    let self_max = flowgate::flow::magnitude(&same).max();

    let pass = mean_epe <= 0.3 && (zoom - k).abs() <= 0.02 && self_max < 1e-3 && slowest <= 2.0;
    verdict_line(
        "flow_correctness",
        pass,
        &format!(
            "mean EPE {mean_epe:.3} px over 20 shifts (worst {:.3}); zoom {zoom:.4} for 1.10; self-flow max {self_max:.2e}; slowest pair {slowest:.2} s",
            epes.iter().cloned().fold(0.0, f64::max)
        ),
    );
}

// ---------------------------------------------------------------- phenomenology

#[test]
fn c02_phenomenology() {
    let ds = make_dataset(PHENO_PER_CLASS, PHENO_SEED).unwrap();
    assert_eq!(ds.train.len() + ds.test.len(), 60);
    let wb = Workbench::new(EvalData::from_sim(&ds).unwrap(), EvalConfig::default()).unwrap();
    let flow = wb.config().pipeline.flow;
    let mut all: Vec<SampleFeatures> = Vec::new();
    for split in [Split::Train, Split::Test] {
        all.extend(wb.features(split, &flow, &AugmentConfig::off(), None).unwrap().iter().cloned());
    }
    let of = |c: AttackClass| all.iter().filter(move |f| f.label == c);
    let mean = |c: AttackClass, g: fn(&SampleFeatures) -> f64| {
        let v: Vec<f64> = of(c).map(g).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let flat = [AttackClass::PrintedPhoto, AttackClass::ScreenPhoto];
    let flat_face: Vec<f64> = flat.iter().map(|&c| mean(c, |f| f.stats.face_mean)).collect();
    let mask_ratio = mean(AttackClass::PrintedMask, |f| f.stats.ring_mean) / mean(AttackClass::PrintedMask, |f| f.stats.face_mean);
    let real_min = of(AttackClass::Real).map(|f| f.stats.residual_rms).fold(f64::INFINITY, f64::min);
    let flat_max = flat
        .iter()
        .flat_map(|&c| of(c).map(|f| f.stats.residual_rms))
        .fold(0.0, f64::max);
    let pass = flat_face.iter().all(|&m| m < 1.0) && mask_ratio >= 5.0 && real_min >= 5.0 * flat_max;
    verdict_line(
        "phenomenology",
        pass,
        &format!(
            "flat face magnitude printed {:.3} px, screen {:.3} px; mask ring/face {mask_ratio:.2}; real residual min {real_min:.3} vs flat max {flat_max:.3} ({:.1}x)",
            flat_face[0],
            flat_face[1],
            real_min / flat_max.max(1e-12)
        ),
    );
}

// ---------------------------------------------------------------- ablations

#[test]
fn c03_clipping_ablation() {
    let t = Instant::now();
    let reports = suite("flow_processing");
    let raw = row(reports, "raw_flow");
    let mag = row(reports, "magnitude");
    let clip = row(reports, "clipped_magnitude");
    let hardest = clip.hardest();
    let within = AttackClass::ATTACKS.iter().all(|&c| clip.auc_of(c) >= raw.auc_of(c) - 0.01);
    let strictly = clip.auc_of(hardest) > raw.auc_of(hardest) && clip.auc_of(hardest) > mag.auc_of(hardest);
    verdict_line(
        "clipping_ablation",
        within && strictly,
        &format!(
            "{} recordings, {:.0} s; raw [{}] magnitude [{}] clipped [{}]; hardest {hardest}; clipped >= raw - 0.01 everywhere: {within}; clipped strictly highest on hardest: {strictly}",
            bench().ds.train.len() + bench().ds.test.len(),
            t.elapsed().as_secs_f64(),
            fmt_auc(&raw.auc),
            fmt_auc(&mag.auc),
            fmt_auc(&clip.auc)
        ),
    );
}

#[test]
fn c04_architecture_ablation() {
    let reports = suite("architecture");
    let flow = row(reports, "flow_only");
    let dual = row(reports, "dual");
    let dv = AttackClass::DynamicVideo;
    let min_is_dv = AttackClass::ATTACKS.iter().all(|&c| flow.auc_of(dv) <= flow.auc_of(c));
    let gain = dual.auc_of(dv) - flow.auc_of(dv);
    let worst_drop = AttackClass::ATTACKS
        .iter()
        .filter(|&&c| c != dv)
        .map(|&c| flow.auc_of(c) - dual.auc_of(c))
        .fold(f64::NEG_INFINITY, f64::max);
    verdict_line(
        "architecture_ablation",
        min_is_dv && gain >= 0.10 && worst_drop <= 0.02,
        &format!(
            "flow_only [{}] dual [{}]; dynamic_video is flow_only minimum: {min_is_dv}; gain {gain:+.3}; worst drop elsewhere {worst_drop:+.3}",
            fmt_auc(&flow.auc),
            fmt_auc(&dual.auc)
        ),
    );
}

#[test]
fn c05_dual_auc_floor() {
    let dual = row(suite("architecture"), "dual");
    verdict_line(
        "dual_auc_floor",
        dual.min_auc() >= 0.95,
        &format!("dual [{}]; minimum {:.3} (needs >= 0.95)", fmt_auc(&dual.auc), dual.min_auc()),
    );
}

#[test]
fn c06_blur_ordering() {
    let reports = suite("blur");
    let levels = ["none", "low", "medium", "high"].map(|n| row(reports, n));
    let broken: Vec<String> = AttackClass::ATTACKS
        .iter()
        .filter(|&&c| levels.windows(2).any(|w| w[0].auc_of(c) < w[1].auc_of(c)))
        .map(|c| c.to_string())
        .collect();
    let detail = AttackClass::ATTACKS
        .iter()
        .map(|&c| format!("{c} {}", levels.map(|r| format!("{:.3}", r.auc_of(c))).join(">=")))
        .collect::<Vec<_>>()
        .join("; ");
    verdict_line(
        "blur_ordering",
        broken.is_empty(),
        &format!("{detail}; out of order: {broken:?}"),
    );
}

// ---------------------------------------------------------------- oracles

fn pairwise_auc(real: &[f64], spoof: &[f64]) -> f64 {
    let mut s = 0.0;
    for &r in real {
        for &f in spoof {
            s += if r > f {
                1.0
            } else if r == f {
                0.5
            } else {
                0.0
            };
        }
    }
    s / (real.len() * spoof.len()) as f64
}

#[test]
fn c07_auc_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    let mut complement_exact = true;
    for i in 0..1000 {
        let n = rng.random_range(1..60);
        let m = rng.random_range(1..60);
        // Every other list draws from a coarse grid so ties are frequent.
        let draw = |rng: &mut ChaCha8Rng| -> f64 {
            if i % 2 == 0 {
                rng.random_range(0..8) as f64 / 8.0
            } else {
                rng.random()
            }
        };
        let a: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
        let b: Vec<f64> = (0..m).map(|_| draw(&mut rng)).collect();
        let x = roc_auc(&a, &b).unwrap();
        worst = worst.max((x - pairwise_auc(&a, &b)).abs());
        complement_exact &= x + roc_auc(&b, &a).unwrap() == 1.0;
    }
    verdict_line(
        "auc_oracle",
        worst <= 1e-12 && complement_exact,
        &format!("1000 list pairs, max |rank - pairwise| {worst:.1e}; complement identity exact: {complement_exact}"),
    );
}

#[test]
fn c08_training() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let d = 6;
    let z: Vec<Vec<f64>> = (0..40).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let y: Vec<bool> = (0..40).map(|i| i % 3 == 0).collect();
    let n_live = y.iter().filter(|&&l| l).count() as f64;
    let sw: Vec<f64> = y.iter().map(|&l| 0.5 / if l { n_live } else { 40.0 - n_live }).collect();
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let p: Vec<f64> = (0..=d).map(|_| rng.random_range(-1.5..1.5)).collect();
        let (_, g) = loss_and_gradient(&p, &z, &y, &sw, 1e-2);
        for k in 0..=d {
            let h = 1e-5;
            let mut hi = p.clone();
            hi[k] += h;
            let mut lo = p.clone();
            lo[k] -= h;
            let fd = (loss_and_gradient(&hi, &z, &y, &sw, 1e-2).0 - loss_and_gradient(&lo, &z, &y, &sw, 1e-2).0) / (2.0 * h);
            worst = worst.max((fd - g[k]).abs());
        }
    }

    // Two independent workbenches, same seed, augmentation on.
    let ds = make_dataset(3, 5).unwrap();
    let head = || {
        let wb = Workbench::new(EvalData::from_sim(&ds).unwrap(), EvalConfig::default()).unwrap();
        wb.train_variant(&wb.default_variant("repro")).unwrap().0.to_json().unwrap()
    };
    let (h1, h2) = (head(), head());
    let identical = h1 == h2;
    verdict_line(
        "training",
        worst <= 1e-6 && identical,
        &format!("max |analytic - central difference| {worst:.1e} over 70 coordinates; seeded heads byte-identical: {identical} ({} bytes)", h1.len()),
    );
}

// ---------------------------------------------------------------- protocol

#[derive(Clone, Copy, Debug, PartialEq)]
enum Obs {
    Missing,
    Centered(f64),
    OffCenter(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Phase {
    Waiting,
    Restarted,
    /// Recording with f1 only, or with f1 and f2.
    Rec1,
    Rec2,
    Done,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Event {
    NoFace,
    NoFaceTooLong,
    OffCenter,
    BelowReference,
    InReference,
    AboveReference,
    Retreat,
    Hold,
    ReachMid,
    ReachEnd,
}

/// Hand-written transition table: (phase, event) -> next phase. Rows not
/// listed cannot occur.
const TABLE: &[(Phase, Event, Phase)] = &[
    (Phase::Waiting, Event::NoFace, Phase::Waiting),
    (Phase::Waiting, Event::OffCenter, Phase::Waiting),
    (Phase::Waiting, Event::BelowReference, Phase::Waiting),
    (Phase::Waiting, Event::AboveReference, Phase::Waiting),
    (Phase::Waiting, Event::InReference, Phase::Rec1),
    (Phase::Restarted, Event::NoFace, Phase::Waiting),
    (Phase::Restarted, Event::OffCenter, Phase::Waiting),
    (Phase::Restarted, Event::BelowReference, Phase::Waiting),
    (Phase::Restarted, Event::AboveReference, Phase::Waiting),
    (Phase::Restarted, Event::InReference, Phase::Rec1),
    (Phase::Rec1, Event::NoFace, Phase::Rec1),
    (Phase::Rec1, Event::NoFaceTooLong, Phase::Restarted),
    (Phase::Rec1, Event::Retreat, Phase::Restarted),
    (Phase::Rec1, Event::Hold, Phase::Rec1),
    (Phase::Rec1, Event::ReachMid, Phase::Rec2),
    (Phase::Rec2, Event::NoFace, Phase::Rec2),
    (Phase::Rec2, Event::NoFaceTooLong, Phase::Restarted),
    (Phase::Rec2, Event::Retreat, Phase::Restarted),
    (Phase::Rec2, Event::Hold, Phase::Rec2),
    (Phase::Rec2, Event::ReachEnd, Phase::Done),
];

#[derive(Clone, Debug)]
struct Oracle {
    phase: Phase,
    max: f64,
    missing: u32,
    cps: Vec<i64>,
}

impl Oracle {
    fn new() -> Self {
        Self {
            phase: Phase::Waiting,
            max: 0.0,
            missing: 0,
            cps: vec![],
        }
    }

    fn event(&self, obs: Obs, cfg: &ProtocolConfig) -> Event {
        let recording = matches!(self.phase, Phase::Rec1 | Phase::Rec2);
        match obs {
            Obs::Missing if recording && self.missing + 1 > cfg.max_missing_frames => Event::NoFaceTooLong,
            Obs::Missing => Event::NoFace,
            Obs::OffCenter(_) if !recording => Event::OffCenter,
            Obs::Centered(h) | Obs::OffCenter(h) if !recording => {
                if h < cfg.start_rel_height {
                    Event::BelowReference
                } else if h < cfg.mid_rel_height {
                    Event::InReference
                } else {
                    Event::AboveReference
                }
            }
            Obs::Centered(h) | Obs::OffCenter(h) => {
                if h < self.max - cfg.retreat_hysteresis {
                    Event::Retreat
                } else if self.phase == Phase::Rec1 && h >= cfg.mid_rel_height {
                    Event::ReachMid
                } else if self.phase == Phase::Rec2 && h >= cfg.end_rel_height {
                    Event::ReachEnd
                } else {
                    Event::Hold
                }
            }
        }
    }

    fn step(&mut self, i: i64, obs: Obs, cfg: &ProtocolConfig) -> Event {
        // Heights as the machine sees them: box height over frame height.
        let obs = match obs {
            Obs::Centered(h) => Obs::Centered(h * SIDE / SIDE),
            Obs::OffCenter(h) => Obs::OffCenter(h * SIDE / SIDE),
            Obs::Missing => Obs::Missing,
        };
        let ev = self.event(obs, cfg);
        let next = TABLE
            .iter()
            .find(|r| r.0 == self.phase && r.1 == ev)
            .unwrap_or_else(|| panic!("no table row for {:?} {ev:?}", self.phase))
            .2;
        let h = match obs {
            Obs::Centered(h) | Obs::OffCenter(h) => Some(h),
            Obs::Missing => None,
        };
        match (self.phase, next) {
            (_, Phase::Restarted) => {
                self.max = 0.0;
                self.cps.clear();
                self.missing = 0;
            }
            (Phase::Waiting | Phase::Restarted, Phase::Rec1) => {
                self.max = h.unwrap();
                self.cps = vec![i];
            }
            _ => {}
        }
        if matches!(next, Phase::Rec1 | Phase::Rec2 | Phase::Done) && matches!(self.phase, Phase::Rec1 | Phase::Rec2) {
            match h {
                Some(h) => {
                    self.missing = 0;
                    self.max = self.max.max(h);
                }
                None => self.missing += 1,
            }
            if next != self.phase {
                self.cps.push(i);
            }
        }
        self.phase = next;
        ev
    }
}

const SIDE: f64 = 400.0;

fn face(obs: Obs) -> Option<FaceBox> {
    let (h, dx) = match obs {
        Obs::Missing => return None,
        Obs::Centered(h) => (h, 0.0),
        Obs::OffCenter(h) => (h, 0.2 * SIDE),
    };
    let s = h * SIDE;
    Some(FaceBox::new(SIDE / 2.0 + dx - s / 2.0, SIDE / 2.0 - s / 2.0, s, s).unwrap())
}

/// Steps the real machine and the oracle side by side.
fn check_trace(trace: &[Obs], cfg: &ProtocolConfig) -> Result<Vec<CaptureState>, String> {
    let dims = FrameDims { width: SIDE, height: SIDE };
    let mut s = CaptureSession::new();
    let mut o = Oracle::new();
    let mut states = vec![];
    for (i, &obs) in trace.iter().enumerate() {
        if o.phase == Phase::Done {
            let (n, out) = s.step(i as i64, face(obs).as_ref(), dims, cfg).unwrap();
            if out != StepOutcome::AlreadyDone || n != s {
                return Err(format!("{trace:?}: step after done changed the session"));
            }
            states.push(n.state);
            continue;
        }
        let ev = o.step(i as i64, obs, cfg);
        let (n, out) = s.step(i as i64, face(obs).as_ref(), dims, cfg).unwrap();
        let want_state = match o.phase {
            Phase::Waiting => CaptureState::WaitAlign,
            Phase::Restarted => CaptureState::Restarted,
            Phase::Rec1 | Phase::Rec2 => CaptureState::Recording,
            Phase::Done => CaptureState::Done,
        };
        let want_out = match ev {
            Event::Retreat => StepOutcome::Restarted(RestartReason::Retreat),
            Event::NoFaceTooLong => StepOutcome::Restarted(RestartReason::FaceLost),
            _ => StepOutcome::Advanced,
        };
        let cps: Vec<i64> = [n.checkpoints.i1, n.checkpoints.i2, n.checkpoints.i3].into_iter().flatten().collect();
        if n.state != want_state || out != want_out || cps != o.cps {
            return Err(format!(
                "{trace:?} step {i} ({ev:?}): got {:?} {out:?} {cps:?}, table says {want_state:?} {want_out:?} {:?}",
                n.state, o.cps
            ));
        }
        states.push(n.state);
        s = n;
    }
    Ok(states)
}

#[test]
fn c09_protocol() {
    use CaptureState::{Done as D, Recording as R, Restarted as X, WaitAlign as W};
    use Obs::{Centered as C, Missing as M};
    let cfg = ProtocolConfig::default();
    let mut failures: Vec<String> = vec![];

    // Named scripts with their expected states written out by hand.
    let scripts: Vec<(&str, Vec<Obs>, Vec<CaptureState>)> = vec![
        ("monotone", vec![C(0.3), C(0.5), C(0.56), C(0.63), C(0.7), C(0.76), C(0.8)], vec![W, R, R, R, R, D, D]),
        ("retreat", vec![C(0.5), C(0.6), C(0.56), C(0.55), C(0.64)], vec![R, R, X, R, R]),
        ("wobble", vec![C(0.5), C(0.6), C(0.58), C(0.63), C(0.75)], vec![R, R, R, R, D]),
        ("disappearance", vec![C(0.52), M, M, M, M, M, C(0.6), M, M, M, M, M, M, C(0.7)], vec![R, R, R, R, R, R, R, R, R, R, R, R, X, W]),
        ("oscillation", vec![C(0.5), C(0.6), C(0.5), C(0.52), C(0.6), C(0.52), C(0.7)], vec![R, R, X, R, R, X, W]),
        ("too_close_to_start", vec![C(0.7), C(0.8), C(0.55), C(0.76)], vec![W, W, R, R]),
        ("off_center", vec![Obs::OffCenter(0.55), C(0.55)], vec![W, R]),
    ];
    for (name, trace, want) in &scripts {
        match check_trace(trace, &cfg) {
            Ok(got) if &got == want => {}
            Ok(got) => failures.push(format!("{name}: {got:?} != {want:?}")),
            Err(e) => failures.push(format!("{name}: {e}")),
        }
    }

    // Every trace of length 5 over this alphabet, with a one-frame dropout
    // allowance so face loss is reachable.
    let alphabet = [
        M,
        C(0.45),
        C(0.5),
        C(0.55),
        C(0.58),
        C(0.6),
        C(0.63),
        C(0.7),
        C(0.76),
        Obs::OffCenter(0.55),
    ];
    let short = ProtocolConfig { max_missing_frames: 1, ..cfg };
    let mut count = 0usize;
    for code in 0..alphabet.len().pow(5) {
        let trace: Vec<Obs> = (0..5).map(|k| alphabet[code / alphabet.len().pow(k) % alphabet.len()]).collect();
        if let Err(e) = check_trace(&trace, &short) {
            if failures.len() < 5 {
                failures.push(e);
            }
        }
        count += 1;
    }

    // Checkpoint heights on simulator recordings.
    let ds = make_dataset(PHENO_PER_CLASS, PHENO_SEED).unwrap();
    let targets = [cfg.start_rel_height, cfg.mid_rel_height, cfg.end_rel_height];
    let mut worst: f64 = 0.0;
    for spec in ds.all() {
        let scene = Scene::new(spec.clone()).unwrap();
        let (_, h) = scene.frame_size().unwrap();
        let session = run_protocol(&scene, &cfg).unwrap();
        let idx = session.checkpoints.complete().unwrap();
        for (k, &i) in idx.iter().enumerate() {
            let rel = scene.annotation(i as usize).unwrap().face_box.h / h as f64;
            worst = worst.max((rel - targets[k]).abs());
        }
    }
    verdict_line(
        "protocol",
        failures.is_empty() && worst <= 0.01,
        &format!(
            "{} scripts and {count} exhaustive traces against the table, mismatches: {failures:?}; worst checkpoint height error {worst:.4} over {} recordings",
            scripts.len(),
            ds.train.len() + ds.test.len()
        ),
    );
}

// ---------------------------------------------------------------- service

const BOUNDARY: &str = "acceptance-boundary";

fn multipart(png: &[u8], annotation: &str) -> Vec<u8> {
    let mut body = format!(
        "--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"image\"; filename=\"f.png\"\r\nContent-Type: image/png\r\n\r\n"
    )
    .into_bytes();
    body.extend_from_slice(png);
    body.extend_from_slice(
        format!("\r\n--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"annotation\"\r\n\r\n{annotation}\r\n--{BOUNDARY}--\r\n")
            .as_bytes(),
    );
    body
}

async fn call(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn create(app: &Router) -> String {
    let (s, body) = call(app, Request::post("/api/v1/sessions").body(Body::empty()).unwrap()).await;
    assert_eq!(s, StatusCode::CREATED);
    serde_json::from_slice::<serde_json::Value>(&body).unwrap()["id"].as_str().unwrap().to_string()
}

async fn post_frame(app: &Router, id: &str, png: &[u8], ann: Option<&FrameAnnotation>) -> serde_json::Value {
    let json = ann.map_or("{}".to_string(), |a| serde_json::to_string(a).unwrap());
    let req = Request::post(format!("/api/v1/sessions/{id}/frames"))
        .header("content-type", format!("multipart/form-data; boundary={BOUNDARY}"))
        .body(Body::from(multipart(png, &json)))
        .unwrap();
    let (s, body) = call(app, req).await;
    assert_eq!(s, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
    serde_json::from_slice(&body).unwrap()
}

async fn verdict(app: &Router, id: &str) -> (StatusCode, Vec<u8>) {
    call(app, Request::post(format!("/api/v1/sessions/{id}/verdict")).body(Body::empty()).unwrap()).await
}

/// Streams a recording directory into a session and returns the verdict body.
async fn stream_recording(app: &Router, dir: &Path) -> Vec<u8> {
    let anns: Vec<FrameAnnotation> = serde_json::from_slice(&std::fs::read(dir.join("annotations.json")).unwrap()).unwrap();
    let id = create(app).await;
    for (i, a) in anns.iter().enumerate() {
        let png = std::fs::read(dir.join(format!("frame_{i:03}.png"))).unwrap();
        if post_frame(app, &id, &png, Some(a)).await["state"] == "done" {
            break;
        }
    }
    let (s, body) = verdict(app, &id).await;
    assert_eq!(s, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
    body
}

fn synthetic_annotation(h: f64) -> FrameAnnotation {
    let c = 32.0;
    FrameAnnotation {
        face_box: FaceBox::new(c - h / 2.0, c - h / 2.0, h, h).unwrap(),
        keypoints: KeyPoints::from_points([
            [c - 0.2 * h, c - 0.1 * h],
            [c + 0.2 * h, c - 0.1 * h],
            [c, c + 0.05 * h],
            [c - 0.12 * h, c + 0.22 * h],
            [c + 0.12 * h, c + 0.22 * h],
        ]),
    }
}

/// One fuzzed session checked against a local protocol replay and a local
/// verdict on the same decoded frames. Returns whether it finished.
async fn fuzzed_session(app: Router, k: u64, head: LinearHead) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + k);
    let cfg = ProtocolConfig::default();
    let dims = FrameDims { width: 64.0, height: 64.0 };
    let id = create(&app).await;
    let mut local = CaptureSession::new();
    let mut kept: [Option<(ImageBuffer, FrameAnnotation)>; 3] = [None, None, None];
    let mut h: f64 = rng.random_range(0.42..0.56);
    for i in 0..rng.random_range(6..28) {
        let r: f64 = rng.random();
        let ann = if r < 0.08 {
            None
        } else {
            h = (h + if r < 0.18 { -rng.random_range(0.0..0.08) } else { rng.random_range(0.0..0.05) }).clamp(0.2, 0.95);
            Some(synthetic_annotation(h * 64.0))
        };
        let img = ImageBuffer::from_fn(64, 64, 3, |x, y, c| ((x * 7 + y * 3 + c) as u64 + 13 * k + 5 * i) as f64 % 97.0 / 96.0);
        let png = encode_png(&img).unwrap();
        let (next, _) = local.step(i as i64, ann.as_ref().map(|a| &a.face_box), dims, &cfg).unwrap();
        for (slot, cp) in kept.iter_mut().zip([next.checkpoints.i1, next.checkpoints.i2, next.checkpoints.i3]) {
            match cp {
                None => *slot = None,
                Some(c) if c == i as i64 => *slot = Some((decode_image(&png).unwrap(), ann.unwrap())),
                _ => {}
            }
        }
        local = next;
        let reply = post_frame(&app, &id, &png, ann.as_ref()).await;
        assert_eq!(reply["state"], serde_json::to_value(local.state).unwrap(), "session {k} frame {i}");
        assert_eq!(reply["checkpoints_hit"], local.checkpoints.count(), "session {k} frame {i}");
        if local.is_done() {
            break;
        }
    }
    let (s, body) = verdict(&app, &id).await;
    if !local.is_done() {
        assert_eq!(s, StatusCode::CONFLICT);
        return false;
    }
    let [a, b, c] = kept.map(|x| x.unwrap());
    let want = classify([&a.0, &b.0, &c.0], [&a.1, &b.1, &c.1], &head, &PipelineConfig::default()).unwrap();
    assert_eq!(String::from_utf8(body).unwrap(), want.to_json().unwrap() + "\n", "session {k}");
    true
}

#[test]
fn c10_service() {
    let head = acceptance_head().clone();
    let tmp = tempfile::tempdir().unwrap();
    let head_path = tmp.path().join("head.json");
    head.save(&head_path).unwrap();

    // A held-out live recording on disk, scored by the binary and the service.
    let spec = bench().ds.test.iter().find(|s| s.attack == AttackClass::Real).unwrap().clone();
    let seq_dir = tmp.path().join("real");
    write_sequence(&Scene::new(spec).unwrap(), &seq_dir).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_flowgate"))
        .args(["classify", "--seq"])
        .arg(&seq_dir)
        .arg("--head")
        .arg(&head_path)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let cli_score = serde_json::from_slice::<serde_json::Value>(&out.stdout).unwrap()["score"].as_f64().unwrap();

    let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(4).enable_all().build().unwrap();
    let app = router(AppState::new(ServiceConfig::default(), Some(head.clone())));
    let served = rt.block_on(stream_recording(&app, &seq_dir));
    let identical = served == out.stdout;

    let fuzz_app = router(AppState::new(
        ServiceConfig {
            idle_timeout: Duration::from_secs(600),
            ..ServiceConfig::default()
        },
        Some(head.clone()),
    ));
    let finished = rt.block_on(async {
        let tasks: Vec<_> = (0..100u64).map(|k| tokio::spawn(fuzzed_session(fuzz_app.clone(), k, head.clone()))).collect();
        let mut n = 0;
        for t in tasks {
            n += t.await.expect("session task panicked") as usize;
        }
        n
    });
    verdict_line(
        "service",
        identical && finished >= 10 && cli_score > 0.5,
        &format!(
            "verdict bytes identical to `flowgate classify`: {identical}; live recording score {cli_score:.4}; 100 concurrent fuzzed sessions matched local replays ({finished} reached a verdict)"
        ),
    );
}
