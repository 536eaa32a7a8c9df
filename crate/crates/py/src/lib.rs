//! Python bindings. The helpers below are plain Rust so they can be tested
//! without an interpreter; the `#[pyfunction]`s only convert errors.

use std::path::Path;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

use flowgate::classifier::LinearHead;
use flowgate::flow::{estimate_flow, read_flo_file, write_flo_file, FlowConfig};
use flowgate::geometry::{preprocess_triplet, FrameAnnotation};
use flowgate::imaging::read_image;
use flowgate::pipeline::PipelineConfig;
use flowgate::protocol::ProtocolConfig;
use flowgate::sequence::capture_triplet;
use flowgate::simulator::{make_dataset, write_dataset, AttackClass, DiskSequence};

/// `(width, height, u, v)` with row-major components.
pub type FlowTuple = (usize, usize, Vec<f64>, Vec<f64>);

pub fn simulate_to(out: &Path, n_per_class: usize, seed: u64, classes: Option<&[String]>) -> flowgate::Result<(usize, usize)> {
    let mut ds = make_dataset(n_per_class, seed)?;
    if let Some(names) = classes {
        let keep = names.iter().map(|n| n.parse()).collect::<flowgate::Result<Vec<AttackClass>>>()?;
        ds.train.retain(|s| keep.contains(&s.attack));
        ds.test.retain(|s| keep.contains(&s.attack));
    }
    write_dataset(&ds, out)?;
    Ok((ds.train.len(), ds.test.len()))
}

/// Verdict JSON for a recording directory, as printed by `flowgate classify`.
pub fn classify_dir(seq: &Path, head: &Path) -> flowgate::Result<String> {
    let head = LinearHead::load(head)?;
    let seq = DiskSequence::open(seq)?;
    let t = capture_triplet(&seq, &ProtocolConfig::default())?;
    flowgate::pipeline::classify(t.frames(), t.annotations(), &head, &PipelineConfig::default())?.to_json()
}

/// Flow between two annotated frames after alignment and cropping.
pub fn flow_files(f1: &Path, f3: &Path, annotations_json: &str, cfg: FlowConfig, out: Option<&Path>) -> flowgate::Result<FlowTuple> {
    let ann: [FrameAnnotation; 2] = serde_json::from_str(annotations_json)?;
    let (a, b) = (read_image(f1)?, read_image(f3)?);
    let mut pcfg = PipelineConfig::default();
    pcfg.flow = cfg;
    cfg.validate()?;
    let pair = preprocess_triplet([&a, &a, &b], [&ann[0], &ann[0], &ann[1]], &pcfg.preprocess)?;
    let f = estimate_flow(&pair.f1_crop, &pair.f3_crop, &cfg)?;
    if let Some(p) = out {
        write_flo_file(p, &f)?;
    }
    Ok((f.width(), f.height(), f.u().to_vec(), f.v().to_vec()))
}

fn py_err(e: flowgate::Error) -> PyErr {
    match e {
        flowgate::Error::Io(_) | flowgate::Error::Path { .. } => PyOSError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

/// Probability that a live score outranks a spoof score (ties count half).
#[pyfunction]
fn roc_auc(real: Vec<f64>, spoof: Vec<f64>) -> PyResult<f64> {
    flowgate::eval::roc_auc(&real, &spoof).map_err(py_err)
}

/// Renders a simulator dataset; returns the (train, test) recording counts.
#[pyfunction]
#[pyo3(signature = (out, n_per_class=10, seed=0, classes=None))]
fn simulate(py: Python<'_>, out: std::path::PathBuf, n_per_class: usize, seed: u64, classes: Option<Vec<String>>) -> PyResult<(usize, usize)> {
    py.detach(|| simulate_to(&out, n_per_class, seed, classes.as_deref())).map_err(py_err)
}

/// Scores a recording directory with a saved head; returns the verdict JSON.
#[pyfunction]
fn classify(py: Python<'_>, seq: std::path::PathBuf, head: std::path::PathBuf) -> PyResult<String> {
    py.detach(|| classify_dir(&seq, &head)).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (f1, f3, annotations, resolution=256, refine_iters=3, out=None))]
fn flow(
    py: Python<'_>,
    f1: std::path::PathBuf,
    f3: std::path::PathBuf,
    annotations: String,
    resolution: usize,
    refine_iters: usize,
    out: Option<std::path::PathBuf>,
) -> PyResult<FlowTuple> {
    let cfg = FlowConfig {
        resolution,
        refine_iters,
        ..FlowConfig::default()
    };
    py.detach(|| flow_files(&f1, &f3, &annotations, cfg, out.as_deref())).map_err(py_err)
}

#[pyfunction]
fn read_flo(path: std::path::PathBuf) -> PyResult<FlowTuple> {
    let f = read_flo_file(&path).map_err(py_err)?;
    Ok((f.width(), f.height(), f.u().to_vec(), f.v().to_vec()))
}

#[pymodule]
fn _flowgate(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(roc_auc, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(flow, m)?)?;
    m.add_function(wrap_pyfunction!(read_flo, m)?)?;
    Ok(())
}
