//! Per-attack ROC AUC and the ablation suites.
//!
//! A [`Workbench`] holds a train/test split of recordings and caches the
//! per-sample features of every (flow config, augmentation, blur) setting it
//! has seen, so suites sharing a setting compute each flow once.

mod auc;
mod baseline;

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use auc::roc_auc;
pub use baseline::{baseline_stabilized_average, spaced_indices, stabilized_average, STABILIZED_FRAMES};

use crate::classifier::{
    augment_sample, flow_features, rgb_features, train, AugmentConfig, AugmentedSample, FeatureLayout, FeatureVector,
    FlowRepresentation, LinearHead, Regions, StreamMode, TrainConfig, TrainSet,
};
use crate::flow::{FlowConfig, FlowField, CLIP_FRACTION};
use crate::imaging::gaussian_blur;
use crate::pipeline::{analyze, PipelineConfig};
use crate::protocol::{checkpoint_indices, ProtocolConfig};
use crate::sequence::{run_protocol, SequenceSource};
use crate::simulator::{mix_seed, AttackClass, DiskDataset, Scene, SimDataset};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    FlowProcessing,
    Architecture,
    Augmentation,
    Blur,
    Resolution,
    Iterations,
    Baselines,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::FlowProcessing,
        Suite::Architecture,
        Suite::Augmentation,
        Suite::Blur,
        Suite::Resolution,
        Suite::Iterations,
        Suite::Baselines,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::FlowProcessing => "flow_processing",
            Suite::Architecture => "architecture",
            Suite::Augmentation => "augmentation",
            Suite::Blur => "blur",
            Suite::Resolution => "resolution",
            Suite::Iterations => "iterations",
            Suite::Baselines => "baselines",
        }
    }
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::UnknownSuite(s.to_string()))
    }
}

/// Blur levels as fractions of the mean f1 crop height.
pub const BLUR_LEVELS: [(&str, f64); 3] = [("low", 0.01), ("medium", 0.06), ("high", 0.12)];
pub const RESOLUTIONS: [usize; 5] = [128, 192, 256, 320, 384];
pub const REFINE_ITERS: [usize; 5] = [1, 2, 3, 5, 8];

/// Smallest odd kernel at least `frac * crop_height` wide.
pub fn blur_kernel(frac: f64, crop_height: f64) -> usize {
    let k = (frac * crop_height).ceil().max(1.0) as usize;
    if k % 2 == 0 {
        k + 1
    } else {
        k
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub seed: u64,
    pub pipeline: PipelineConfig,
    pub protocol: ProtocolConfig,
    pub augment: AugmentConfig,
    /// Augmentation draws per training recording.
    pub draws: usize,
    pub train: TrainConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            pipeline: PipelineConfig::default(),
            protocol: ProtocolConfig::default(),
            augment: AugmentConfig::default(),
            draws: 2,
            train: TrainConfig::default(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        self.pipeline.flow.validate()?;
        self.protocol.validate()?;
        self.augment.validate()?;
        self.train.validate()?;
        if self.draws == 0 {
            return Err(Error::InvalidConfig("draws must be positive".into()));
        }
        Ok(())
    }
}

/// What the test-time features are computed from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    #[default]
    Checkpoints,
    StabilizedAverage,
}

/// One row of a suite: a model configuration trained and tested once.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub name: String,
    pub layout: FeatureLayout,
    pub augment: AugmentConfig,
    pub flow: FlowConfig,
    /// Test-set blur as a fraction of the mean f1 crop height.
    pub test_blur: Option<f64>,
    pub input: InputKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub samples: usize,
    pub final_loss: f64,
    pub train_accuracy: f64,
    pub dropped_features: Vec<String>,
    pub monotone: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuntimeStats {
    pub seconds: f64,
    /// Mean flow time per test sample, milliseconds.
    pub mean_flow_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub suite: String,
    pub row: String,
    pub config: serde_json::Value,
    pub config_hash: String,
    pub auc: BTreeMap<AttackClass, f64>,
    pub train: TrainSummary,
    pub runtime: RuntimeStats,
}

impl EvalReport {
    pub fn auc_of(&self, c: AttackClass) -> f64 {
        self.auc[&c]
    }

    pub fn min_auc(&self) -> f64 {
        self.auc.values().copied().fold(f64::INFINITY, f64::min)
    }

    /// Attack class with the lowest AUC.
    pub fn hardest(&self) -> AttackClass {
        *self.auc.iter().min_by(|a, b| a.1.total_cmp(b.1)).expect("all attacks present").0
    }
}

/// Aligned-column text table of report rows.
pub fn format_table(reports: &[EvalReport]) -> String {
    let mut out = format!("{:<22}", "row");
    for c in AttackClass::ATTACKS {
        out += &format!(" {:>14}", c.name());
    }
    out += &format!(" {:>10}\n", "flow_ms");
    for r in reports {
        out += &format!("{:<22}", format!("{}/{}", r.suite, r.row));
        for c in AttackClass::ATTACKS {
            out += &format!(" {:>14.4}", r.auc_of(c));
        }
        out += &format!(" {:>10.1}\n", r.runtime.mean_flow_ms);
    }
    out
}

pub fn format_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from("suite,row");
    for c in AttackClass::ATTACKS {
        out += &format!(",{}", c.name());
    }
    out += ",mean_flow_ms,config_hash\n";
    for r in reports {
        out += &format!("{},{}", r.suite, r.row);
        for c in AttackClass::ATTACKS {
            out += &format!(",{}", r.auc_of(c));
        }
        out += &format!(",{},{}\n", r.runtime.mean_flow_ms, r.config_hash);
    }
    out
}

/// Train and test recordings.
#[derive(Clone)]
pub struct EvalData {
    pub train: Vec<Arc<dyn SequenceSource>>,
    pub test: Vec<Arc<dyn SequenceSource>>,
}

impl EvalData {
    pub fn from_sim(ds: &SimDataset) -> Result<Self> {
        let scenes = |specs: &[crate::simulator::SceneSpec]| {
            specs
                .iter()
                .map(|s| Ok(Arc::new(Scene::new(s.clone())?) as Arc<dyn SequenceSource>))
                .collect::<Result<Vec<_>>>()
        };
        Ok(Self {
            train: scenes(&ds.train)?,
            test: scenes(&ds.test)?,
        })
    }

    pub fn from_disk(ds: DiskDataset) -> Self {
        let wrap = |v: Vec<crate::simulator::DiskSequence>| {
            v.into_iter().map(|s| Arc::new(s) as Arc<dyn SequenceSource>).collect()
        };
        Self {
            train: wrap(ds.train),
            test: wrap(ds.test),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

/// Flow statistics of the clipped field, for inspecting the phenomenology.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowStats {
    pub face_mean: f64,
    pub ring_mean: f64,
    pub residual_rms: f64,
}

/// Everything a variant needs from one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleFeatures {
    pub label: AttackClass,
    /// Flow features for raw, magnitude and clipped-magnitude representations.
    pub flow: [Vec<f64>; 3],
    pub rgb: Vec<f64>,
    pub crop_side_f1: f64,
    pub stats: FlowStats,
    pub flow_ms: f64,
}

impl SampleFeatures {
    pub fn vector(&self, layout: FeatureLayout) -> Result<FeatureVector> {
        let k = FlowRepresentation::ALL.iter().position(|r| *r == layout.flow_repr).expect("listed");
        FeatureVector::from_streams(layout, self.flow[k].clone(), self.rgb.clone())
    }
}

fn flow_stats(flow: &FlowField, crop_side: f64) -> FlowStats {
    let side = flow.width();
    let reg = Regions::new(side);
    let cap = CLIP_FRACTION * crop_side;
    let (mut fs, mut fn_, mut rs, mut rn) = (0.0, 0.0, 0.0, 0.0);
    for y in 0..side {
        for x in 0..side {
            let (u, v) = flow.at(x, y);
            let m = u.hypot(v).min(cap);
            if reg.in_face(x, y) {
                fs += m;
                fn_ += 1.0;
            }
            if reg.in_ring(x, y) {
                rs += m;
                rn += 1.0;
            }
        }
    }
    let clipped = crate::classifier::represent(flow, FlowRepresentation::ClippedMagnitude, crop_side);
    let c = (side as f64 - 1.0) / 2.0;
    FlowStats {
        face_mean: fs / fn_,
        ring_mean: rs / rn,
        residual_rms: crate::flow::fit_expansion(&clipped, [c, c], |x, y| reg.in_face(x, y)).residual_rms,
    }
}

/// Features of one (possibly augmented, possibly blurred) sample.
pub fn sample_features(
    src: &dyn SequenceSource,
    sample: &AugmentedSample,
    cfg: &PipelineConfig,
    blur: Option<usize>,
) -> Result<SampleFeatures> {
    let mut t = sample.load(src)?;
    if let Some(k) = blur {
        for f in t.frames.iter_mut() {
            *f = gaussian_blur(f, k as i64)?;
        }
    }
    let mut pcfg = *cfg;
    if let Some(r) = sample.resolution {
        pcfg.flow.resolution = r;
    }
    let t0 = Instant::now();
    let (pair, flow) = analyze(t.frames(), t.annotations(), &pcfg)?;
    let flow_ms = t0.elapsed().as_secs_f64() * 1e3;
    let side = pair.f1_crop.width() as f64;
    let flow_feats = FlowRepresentation::ALL
        .iter()
        .map(|&r| flow_features(&flow, r, side))
        .collect::<Result<Vec<_>>>()?;
    Ok(SampleFeatures {
        label: src.label(),
        flow: flow_feats.try_into().expect("three representations"),
        rgb: rgb_features(&pair.f2_crop)?,
        crop_side_f1: pair.crop_side_f1,
        stats: flow_stats(&flow, side),
        flow_ms,
    })
}

fn config_hash(v: &impl Serialize) -> String {
    let bytes = serde_json::to_vec(v).expect("configs serialize");
    hex::encode(Sha256::digest(bytes))
}

type FeatureSet = Arc<Vec<SampleFeatures>>;

pub struct Workbench {
    data: EvalData,
    cfg: EvalConfig,
    checkpoints: [OnceLock<Vec<[usize; 3]>>; 2],
    cache: Mutex<HashMap<String, FeatureSet>>,
}

impl Workbench {
    pub fn new(data: EvalData, cfg: EvalConfig) -> Result<Self> {
        cfg.validate()?;
        for (split, name) in [(&data.train, "train"), (&data.test, "test")] {
            let labels: Vec<_> = split.iter().map(|s| s.label()).collect();
            if !labels.iter().any(|l| l.is_live()) || !labels.iter().any(|l| !l.is_live()) {
                return Err(Error::EmptyClass(name));
            }
        }
        Ok(Self {
            data,
            cfg,
            checkpoints: [OnceLock::new(), OnceLock::new()],
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn config(&self) -> &EvalConfig {
        &self.cfg
    }

    pub fn data(&self) -> &EvalData {
        &self.data
    }

    fn sources(&self, split: Split) -> &[Arc<dyn SequenceSource>] {
        match split {
            Split::Train => &self.data.train,
            Split::Test => &self.data.test,
        }
    }

    /// Protocol checkpoints of every recording in a split.
    pub fn checkpoints(&self, split: Split) -> Result<&[[usize; 3]]> {
        let slot = &self.checkpoints[split as usize];
        if let Some(v) = slot.get() {
            return Ok(v);
        }
        let v = self
            .sources(split)
            .par_iter()
            .map(|s| {
                let session = run_protocol(s.as_ref(), &self.cfg.protocol)?;
                checkpoint_indices(&session).map_err(|e| Error::Annotation(format!("{}: {e}", s.id())))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(slot.get_or_init(|| v))
    }

    fn cached(&self, key: String, compute: impl FnOnce() -> Result<Vec<SampleFeatures>>) -> Result<FeatureSet> {
        if let Some(v) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(v.clone());
        }
        let v = Arc::new(compute()?);
        self.cache.lock().expect("cache lock").insert(key, v.clone());
        Ok(v)
    }

    /// Features of a split under a flow config, augmentation and test blur.
    /// Unaugmented splits yield one sample per recording.
    pub fn features(
        &self,
        split: Split,
        flow: &FlowConfig,
        augment: &AugmentConfig,
        blur: Option<usize>,
    ) -> Result<FeatureSet> {
        let draws = if augment.is_off() { 1 } else { self.cfg.draws };
        let key = serde_json::to_string(&(split as u8, flow, augment, draws, blur, self.cfg.seed))?;
        self.cached(key, || {
            let cps = self.checkpoints(split)?;
            let mut pcfg = self.cfg.pipeline;
            pcfg.flow = *flow;
            let jobs: Vec<(usize, usize)> = (0..cps.len()).flat_map(|i| (0..draws).map(move |d| (i, d))).collect();
            jobs.par_iter()
                .map(|&(i, d)| {
                    let src = self.sources(split)[i].as_ref();
                    let sample = if augment.is_off() {
                        AugmentedSample::fixed(cps[i])
                    } else {
                        augment_sample(src, cps[i], augment, mix_seed(self.cfg.seed, ((i as u64) << 8) | d as u64))?
                    };
                    sample_features(src, &sample, &pcfg, blur).map_err(|e| match e {
                        Error::Path { .. } => e,
                        e => Error::Annotation(format!("{}: {e}", src.id())),
                    })
                })
                .collect()
        })
    }

    /// RGB features of stabilized averages; flow features are left empty.
    pub fn stabilized_features(&self, split: Split) -> Result<FeatureSet> {
        let key = format!("stabilized/{}", split as u8);
        self.cached(key, || {
            let cps = self.checkpoints(split)?;
            let pre = self.cfg.pipeline.preprocess;
            self.sources(split)
                .par_iter()
                .zip(cps.par_iter())
                .map(|(src, cp)| {
                    let avg = stabilized_average(src.as_ref(), *cp, &pre)?;
                    Ok(SampleFeatures {
                        label: src.label(),
                        flow: FlowRepresentation::ALL
                            .map(|r| vec![0.0; crate::classifier::flow_feature_names(r).len()]),
                        rgb: rgb_features(&avg)?,
                        crop_side_f1: 0.0,
                        stats: FlowStats {
                            face_mean: 0.0,
                            ring_mean: 0.0,
                            residual_rms: 0.0,
                        },
                        flow_ms: 0.0,
                    })
                })
                .collect()
        })
    }

    /// Mean f1 crop height of the clean test set, in source pixels.
    pub fn mean_test_crop_height(&self) -> Result<f64> {
        let feats = self.features(Split::Test, &self.cfg.pipeline.flow, &AugmentConfig::off(), None)?;
        Ok(feats.iter().map(|f| f.crop_side_f1).sum::<f64>() / feats.len() as f64)
    }

    /// The default model: dual stream, clipped magnitude, configured
    /// augmentation and flow.
    pub fn default_variant(&self, name: &str) -> Variant {
        Variant {
            name: name.to_string(),
            layout: FeatureLayout::default(),
            augment: self.cfg.augment,
            flow: self.cfg.pipeline.flow,
            test_blur: None,
            input: InputKind::Checkpoints,
        }
    }

    pub fn suite_variants(&self, suite: Suite) -> Vec<Variant> {
        let base = self.default_variant("");
        let with = |name: &str, f: &dyn Fn(&mut Variant)| {
            let mut v = base.clone();
            v.name = name.to_string();
            f(&mut v);
            v
        };
        match suite {
            Suite::FlowProcessing => FlowRepresentation::ALL
                .iter()
                .map(|&r| with(r.name(), &|v| v.layout = FeatureLayout::new(StreamMode::FlowOnly, r)))
                .collect(),
            Suite::Architecture => [StreamMode::FlowOnly, StreamMode::Dual]
                .iter()
                .map(|&m| with(m.name(), &|v| v.layout.mode = m))
                .collect(),
            Suite::Augmentation => {
                let off = AugmentConfig::off();
                let aug = self.cfg.augment;
                vec![
                    with("none", &|v| v.augment = off),
                    with("random_frame", &|v| v.augment = AugmentConfig { random_frame: true, ..off }),
                    with("multires", &|v| v.augment = AugmentConfig { multires: true, ..off }),
                    with("perspective", &|v| v.augment = AugmentConfig { perspective: true, ..off }),
                    with("all", &|v| {
                        v.augment = AugmentConfig {
                            random_frame: true,
                            multires: true,
                            perspective: true,
                            ..aug
                        }
                    }),
                ]
            }
            Suite::Blur => std::iter::once(with("none", &|_| {}))
                .chain(BLUR_LEVELS.iter().map(|&(n, f)| with(n, &|v| v.test_blur = Some(f))))
                .collect(),
            // Multi-resolution training would override the resolution under study.
            Suite::Resolution => RESOLUTIONS
                .iter()
                .map(|&r| {
                    with(&format!("res_{r}"), &|v| {
                        v.flow.resolution = r;
                        v.augment.multires = false;
                    })
                })
                .collect(),
            Suite::Iterations => REFINE_ITERS
                .iter()
                .map(|&n| with(&format!("iters_{n}"), &|v| v.flow.refine_iters = n))
                .collect(),
            Suite::Baselines => vec![
                with("single_shot_rgb", &|v| v.layout.mode = StreamMode::RgbOnly),
                with("stabilized_average", &|v| {
                    v.layout.mode = StreamMode::RgbOnly;
                    v.input = InputKind::StabilizedAverage;
                }),
                with("dual", &|_| {}),
            ],
        }
    }

    /// Trains a head for a variant on the train split.
    pub fn train_variant(&self, v: &Variant) -> Result<(LinearHead, TrainSummary)> {
        let feats = match v.input {
            InputKind::Checkpoints => self.features(Split::Train, &v.flow, &v.augment, None)?,
            InputKind::StabilizedAverage => self.stabilized_features(Split::Train)?,
        };
        let mut set = TrainSet::default();
        for f in feats.iter() {
            set.push(f.vector(v.layout)?.values(), f.label.is_live());
        }
        let (head, rep) = train(v.layout, &set, &self.cfg.train)?;
        Ok((
            head,
            TrainSummary {
                samples: set.len(),
                final_loss: *rep.loss_history.last().expect("at least one epoch"),
                train_accuracy: rep.train_accuracy,
                dropped_features: rep.dropped_features,
                monotone: rep.monotone,
            },
        ))
    }

    /// Test-split scores of a trained head.
    pub fn test_scores(&self, v: &Variant, head: &LinearHead) -> Result<(Vec<(AttackClass, f64)>, f64)> {
        let feats = match v.input {
            InputKind::Checkpoints => {
                let blur = match v.test_blur {
                    Some(f) => Some(blur_kernel(f, self.mean_test_crop_height()?)),
                    None => None,
                };
                self.features(Split::Test, &v.flow, &AugmentConfig::off(), blur)?
            }
            InputKind::StabilizedAverage => self.stabilized_features(Split::Test)?,
        };
        let scores = feats
            .iter()
            .map(|f| Ok((f.label, head.score(&f.vector(v.layout)?)?)))
            .collect::<Result<Vec<_>>>()?;
        let flow_ms = feats.iter().map(|f| f.flow_ms).sum::<f64>() / feats.len() as f64;
        Ok((scores, flow_ms))
    }

    pub fn run_variant(&self, suite: &str, v: &Variant) -> Result<EvalReport> {
        let t0 = Instant::now();
        let (head, summary) = self.train_variant(v)?;
        let (scores, mean_flow_ms) = self.test_scores(v, &head)?;
        let auc = per_attack_auc(&scores)?;
        let blur_kernel_px = match v.test_blur {
            Some(f) => Some(blur_kernel(f, self.mean_test_crop_height()?)),
            None => None,
        };
        let config = serde_json::json!({
            "eval": self.cfg,
            "variant": v,
            "blur_kernel_px": blur_kernel_px,
        });
        Ok(EvalReport {
            suite: suite.to_string(),
            row: v.name.clone(),
            config_hash: config_hash(&config),
            config,
            auc,
            train: summary,
            runtime: RuntimeStats {
                seconds: t0.elapsed().as_secs_f64(),
                mean_flow_ms,
            },
        })
    }

    pub fn run_suite(&self, suite: Suite) -> Result<Vec<EvalReport>> {
        self.suite_variants(suite)
            .iter()
            .map(|v| self.run_variant(suite.name(), v))
            .collect()
    }
}

/// AUC of every attack class against the live class.
pub fn per_attack_auc(scores: &[(AttackClass, f64)]) -> Result<BTreeMap<AttackClass, f64>> {
    let real: Vec<f64> = scores.iter().filter(|s| s.0.is_live()).map(|s| s.1).collect();
    AttackClass::ATTACKS
        .iter()
        .map(|&c| {
            let spoof: Vec<f64> = scores.iter().filter(|s| s.0 == c).map(|s| s.1).collect();
            if spoof.is_empty() {
                return Err(Error::EmptyClass(c.name()));
            }
            Ok((c, roc_auc(&real, &spoof)?))
        })
        .collect()
}

/// Suite by name over a workbench.
pub fn run_suite(bench: &Workbench, suite: &str) -> Result<Vec<EvalReport>> {
    bench.run_suite(suite.parse()?)
}
