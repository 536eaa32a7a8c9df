//! JSON configuration file mirroring the command-line flags.
//!
//! ```json
//! {
//!   "seed": 7,
//!   "protocol": { "center_tolerance": 0.1 },
//!   "pipeline": { "flow": { "resolution": 256 } },
//!   "augment": { "perspective": false },
//!   "training": { "epochs": 2000 },
//!   "draws": 2,
//!   "classify": { "head": "head.json" }
//! }
//! ```
//!
//! Subcommand sections take the same keys as the flags (dashes become
//! underscores). A flag given on the command line always wins.

use std::path::Path;

use serde::Deserialize;

use flowgate::classifier::{AugmentConfig, TrainConfig};
use flowgate::eval::EvalConfig;
use flowgate::pipeline::PipelineConfig;
use flowgate::protocol::ProtocolConfig;

use crate::{ClassifyArgs, EvalArgs, Failure, FlowArgs, ServeArgs, SimulateArgs, TrainArgs};

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub protocol: Option<ProtocolConfig>,
    pub pipeline: Option<PipelineConfig>,
    pub augment: Option<AugmentConfig>,
    pub training: Option<TrainConfig>,
    pub draws: Option<usize>,
    pub simulate: SimulateArgs,
    pub flow: FlowArgs,
    pub classify: ClassifyArgs,
    pub train: TrainArgs,
    pub eval: EvalArgs,
    pub serve: ServeArgs,
}

/// Settings shared by the subcommands after merging.
#[derive(Clone, Debug)]
pub struct Settings {
    pub seed: u64,
    pub protocol: ProtocolConfig,
    pub pipeline: PipelineConfig,
    pub augment: AugmentConfig,
    pub train: TrainConfig,
    pub draws: usize,
}

impl Settings {
    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            seed: self.seed,
            pipeline: self.pipeline,
            protocol: self.protocol,
            augment: self.augment,
            draws: self.draws,
            train: self.train,
        }
    }
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| flowgate::Error::from(e).at(path))?;
        serde_json::from_str(&text).map_err(|e| crate::usage(format!("{}: {e}", path.display())))
    }

    pub fn settings(&self, seed_flag: Option<u64>) -> Result<Settings, Failure> {
        let defaults = EvalConfig::default();
        let s = Settings {
            seed: seed_flag.or(self.seed).unwrap_or(0),
            protocol: self.protocol.unwrap_or_default(),
            pipeline: self.pipeline.unwrap_or_default(),
            augment: self.augment.unwrap_or_default(),
            train: self.training.unwrap_or_default(),
            draws: self.draws.unwrap_or(defaults.draws),
        };
        s.eval_config().validate()?;
        Ok(s)
    }
}

/// Fills every flag left unset on the command line from the file section.
macro_rules! merge {
    ($ty:ty { $($f:ident),* }) => {
        impl $ty {
            pub fn merged_into(&self, mut flags: $ty) -> $ty {
                $(if flags.$f.is_none() { flags.$f = self.$f.clone(); })*
                flags
            }
        }
    };
}

merge!(SimulateArgs { classes, n, out });
merge!(FlowArgs { f1, f3, annotations, res, iters, out });
merge!(ClassifyArgs { seq, head, mode });
merge!(TrainArgs { data, out, augment, mode, repr, draws, epochs });
merge!(EvalArgs { suite, data, out, csv, draws });
merge!(ServeArgs { port, head, idle_timeout_secs, cors_origin });

/// Parses `all`, `none` or a comma list of augmentation names.
pub fn parse_augment(spec: &str, base: AugmentConfig) -> Result<AugmentConfig, String> {
    let mut cfg = AugmentConfig::off();
    cfg.frame_pool_frac = base.frame_pool_frac;
    cfg.multires_range = base.multires_range;
    cfg.corner_jitter = base.corner_jitter;
    match spec {
        "none" => return Ok(cfg),
        "all" => {
            return Ok(AugmentConfig {
                random_frame: true,
                multires: true,
                perspective: true,
                ..cfg
            })
        }
        _ => {}
    }
    for item in spec.split(',').map(str::trim) {
        match item {
            "random_frame" => cfg.random_frame = true,
            "multires" => cfg.multires = true,
            "perspective" => cfg.perspective = true,
            other => return Err(format!("unknown augmentation `{other}`")),
        }
    }
    Ok(cfg)
}
