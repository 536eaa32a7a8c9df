//! `flowgate`: simulate recordings, estimate flow, train, evaluate, classify
//! and serve.
//!
//! Results go to stdout as JSON, logs to stderr (`FLOWGATE_LOG=debug`).
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::json;

use flowgate::classifier::{FeatureLayout, FlowRepresentation, LinearHead, StreamMode};
use flowgate::eval::{format_table, EvalData, Suite, Workbench};
use flowgate::flow::{estimate_flow, write_flo_file};
use flowgate::geometry::{preprocess_triplet, FrameAnnotation};
use flowgate::imaging::read_image;
use flowgate::pipeline::classify;
use flowgate::sequence::capture_triplet;
use flowgate::simulator::{make_dataset, read_dataset, write_dataset, AttackClass, DiskSequence};

use config::{ConfigFile, Settings};

#[derive(Parser, Debug)]
#[command(name = "flowgate", version, about = "Approaching-face liveness detection")]
struct Cli {
    /// JSON file mirroring the flags; flags given on the command line win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a simulator dataset to disk.
    Simulate(SimulateArgs),
    /// Flow between two frames after alignment and cropping, as `.flo`.
    Flow(FlowArgs),
    /// Score a recording directory; prints the verdict.
    Classify(ClassifyArgs),
    /// Fit a head on a dataset directory.
    Train(TrainArgs),
    /// Run an evaluation suite on a dataset directory.
    Eval(EvalArgs),
    /// Start the HTTP session API.
    Serve(ServeArgs),
}

#[derive(Args, Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateArgs {
    /// Comma-separated classes; all when omitted.
    #[arg(long, value_delimiter = ',')]
    pub classes: Option<Vec<AttackClass>>,
    /// Recordings per class.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowArgs {
    #[arg(long)]
    pub f1: Option<PathBuf>,
    #[arg(long)]
    pub f3: Option<PathBuf>,
    /// JSON array with the f1 and f3 annotations.
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    #[arg(long)]
    pub res: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub seq: Option<PathBuf>,
    #[arg(long)]
    pub head: Option<PathBuf>,
    /// Must match the head's mode when given.
    #[arg(long)]
    pub mode: Option<StreamMode>,
}

#[derive(Args, Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `all`, `none`, or a comma list of random_frame, multires, perspective.
    #[arg(long)]
    pub augment: Option<String>,
    #[arg(long)]
    pub mode: Option<StreamMode>,
    #[arg(long)]
    pub repr: Option<FlowRepresentation>,
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Args, Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalArgs {
    #[arg(long)]
    pub suite: Option<String>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub draws: Option<usize>,
}

#[derive(Args, Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeArgs {
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub head: Option<PathBuf>,
    #[arg(long)]
    pub idle_timeout_secs: Option<u64>,
    #[arg(long)]
    pub cors_origin: Option<String>,
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<flowgate::Error> for Failure {
    fn from(e: flowgate::Error) -> Self {
        Self {
            code: if e.is_data_error() { 2 } else { 1 },
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

fn required<T: Clone>(v: &Option<T>, flag: &str) -> Result<T, Failure> {
    v.clone().ok_or_else(|| usage(format!("missing --{flag}")))
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string(v).expect("json values serialize"));
}

fn simulate(s: &Settings, a: &SimulateArgs) -> Result<(), Failure> {
    let out = required(&a.out, "out")?;
    let n = a.n.unwrap_or(10);
    let mut ds = make_dataset(n, s.seed)?;
    if let Some(classes) = &a.classes {
        ds.train.retain(|spec| classes.contains(&spec.attack));
        ds.test.retain(|spec| classes.contains(&spec.attack));
    }
    write_dataset(&ds, &out)?;
    print_json(&json!({ "out": out, "train": ds.train.len(), "test": ds.test.len(), "seed": s.seed }));
    Ok(())
}

fn flow(s: &Settings, a: &FlowArgs) -> Result<(), Failure> {
    let f1 = read_image(required(&a.f1, "f1")?)?;
    let f3 = read_image(required(&a.f3, "f3")?)?;
    let ann_path = required(&a.annotations, "annotations")?;
    let text = std::fs::read_to_string(&ann_path).map_err(|e| flowgate::Error::from(e).at(&ann_path))?;
    let ann: [FrameAnnotation; 2] =
        serde_json::from_str(&text).map_err(|e| flowgate::Error::from(e).at(&ann_path))?;
    let out = required(&a.out, "out")?;
    let mut cfg = s.pipeline;
    if let Some(r) = a.res {
        cfg.flow.resolution = r;
    }
    if let Some(n) = a.iters {
        cfg.flow.refine_iters = n;
    }
    cfg.flow.validate()?;
    let pair = preprocess_triplet([&f1, &f1, &f3], [&ann[0], &ann[0], &ann[1]], &cfg.preprocess)?;
    let field = estimate_flow(&pair.f1_crop, &pair.f3_crop, &cfg.flow)?;
    write_flo_file(&out, &field)?;
    print_json(&json!({
        "out": out,
        "width": field.width(),
        "height": field.height(),
        "max_abs": field.max_abs(),
    }));
    Ok(())
}

fn load_head(path: &Path) -> Result<LinearHead, Failure> {
    Ok(LinearHead::load(path)?)
}

fn classify_cmd(s: &Settings, a: &ClassifyArgs) -> Result<(), Failure> {
    let head = load_head(&required(&a.head, "head")?)?;
    if let Some(m) = a.mode {
        if m != head.layout.mode {
            return Err(usage(format!(
                "--mode {} does not match the head's mode {}",
                m.name(),
                head.layout.mode.name()
            )));
        }
    }
    let seq = DiskSequence::open(&required(&a.seq, "seq")?)?;
    let t = capture_triplet(&seq, &s.protocol)?;
    let v = classify(t.frames(), t.annotations(), &head, &s.pipeline)?;
    println!("{}", v.to_json()?);
    Ok(())
}

fn workbench(s: &Settings, data: &Path, draws: Option<usize>) -> Result<Workbench, Failure> {
    let ds = read_dataset(data)?;
    let mut cfg = s.eval_config();
    if let Some(d) = draws {
        cfg.draws = d;
    }
    Ok(Workbench::new(EvalData::from_disk(ds), cfg)?)
}

fn train_cmd(s: &Settings, a: &TrainArgs) -> Result<(), Failure> {
    let data = required(&a.data, "data")?;
    let out = required(&a.out, "out")?;
    let mut settings = s.clone();
    if let Some(spec) = &a.augment {
        settings.augment = config::parse_augment(spec, settings.augment).map_err(usage)?;
    }
    if let Some(e) = a.epochs {
        settings.train.epochs = e;
    }
    let wb = workbench(&settings, &data, a.draws)?;
    let mut v = wb.default_variant("train");
    v.layout = FeatureLayout::new(a.mode.unwrap_or_default(), a.repr.unwrap_or_default());
    let (head, summary) = wb.train_variant(&v)?;
    head.save(&out)?;
    print_json(&json!({ "out": out, "layout": head.layout, "train": summary }));
    Ok(())
}

fn eval_cmd(s: &Settings, a: &EvalArgs) -> Result<(), Failure> {
    let suite: Suite = required(&a.suite, "suite")?.parse()?;
    let data = required(&a.data, "data")?;
    let wb = workbench(s, &data, a.draws)?;
    let reports = wb.run_suite(suite)?;
    eprint!("{}", format_table(&reports));
    let text = serde_json::to_string_pretty(&reports).map_err(flowgate::Error::from)?;
    if let Some(out) = &a.out {
        std::fs::write(out, &text).map_err(|e| flowgate::Error::from(e).at(out))?;
    }
    if let Some(csv) = &a.csv {
        std::fs::write(csv, flowgate::eval::format_csv(&reports)).map_err(|e| flowgate::Error::from(e).at(csv))?;
    }
    println!("{}", serde_json::to_string(&reports).map_err(flowgate::Error::from)?);
    Ok(())
}

fn serve_cmd(s: &Settings, a: &ServeArgs) -> Result<(), Failure> {
    let head = match &a.head {
        Some(p) => Some(load_head(p)?),
        None => {
            log::warn!("no --head given; verdict requests will fail with 503");
            None
        }
    };
    let mut cfg = flowgate_service::ServiceConfig {
        protocol: s.protocol,
        pipeline: s.pipeline,
        cors_origin: a.cors_origin.clone(),
        ..Default::default()
    };
    if let Some(t) = a.idle_timeout_secs {
        cfg.idle_timeout = std::time::Duration::from_secs(t);
    }
    let port = a.port.unwrap_or(8080);
    let addr = std::net::SocketAddr::from(([0, 0, 0, 0], port));
    let rt = tokio::runtime::Runtime::new().map_err(|e| usage(format!("runtime: {e}")))?;
    rt.block_on(flowgate_service::serve(addr, flowgate_service::AppState::new(cfg, head)))
        .map_err(|e| Failure {
            code: 2,
            message: format!("serve on port {port}: {e}"),
        })
}

fn run(cli: Cli) -> Result<(), Failure> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let settings = file.settings(cli.seed)?;
    match cli.cmd {
        Command::Simulate(a) => simulate(&settings, &file.simulate.merged_into(a)),
        Command::Flow(a) => flow(&settings, &file.flow.merged_into(a)),
        Command::Classify(a) => classify_cmd(&settings, &file.classify.merged_into(a)),
        Command::Train(a) => train_cmd(&settings, &file.train.merged_into(a)),
        Command::Eval(a) => eval_cmd(&settings, &file.eval.merged_into(a)),
        Command::Serve(a) => serve_cmd(&settings, &file.serve.merged_into(a)),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FLOWGATE_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
