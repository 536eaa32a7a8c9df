//! Dataset tree: `class/seq_id/frame_%03d.png`, `annotations.json` (one
//! `{box, keypoints}` object per frame) and `label`, plus a root
//! `dataset.json` recording the train/test split.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::{AttackClass, Scene, SimDataset};
use crate::geometry::FrameAnnotation;
use crate::imaging::{self, ImageBuffer};
use crate::sequence::SequenceSource;
use crate::{Error, Result};

const MANIFEST: &str = "dataset.json";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    seed: u64,
    train: Vec<String>,
    test: Vec<String>,
}

fn frame_name(i: usize) -> String {
    format!("frame_{i:03}.png")
}

/// Writes every frame of `src` plus its annotations and label into `dir`.
pub fn write_sequence(src: &dyn SequenceSource, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::from(e).at(dir))?;
    let mut annotations = Vec::with_capacity(src.len());
    for i in 0..src.len() {
        let path = dir.join(frame_name(i));
        imaging::write_png(&path, &src.frame(i)?)?;
        annotations.push(src.annotation(i)?);
    }
    let ann = dir.join("annotations.json");
    fs::write(&ann, serde_json::to_vec_pretty(&annotations)?).map_err(|e| Error::from(e).at(&ann))?;
    let label = dir.join("label");
    fs::write(&label, format!("{}\n", src.label())).map_err(|e| Error::from(e).at(&label))?;
    Ok(())
}

fn relative_dir(class: AttackClass, seed: u64) -> String {
    format!("{}/{:016x}", class.name(), seed)
}

/// Renders and writes every scene of `ds` under `root`.
pub fn write_dataset(ds: &SimDataset, root: &Path) -> Result<()> {
    let mut manifest = Manifest {
        seed: ds.seed,
        train: Vec::new(),
        test: Vec::new(),
    };
    for (specs, names) in [(&ds.train, &mut manifest.train), (&ds.test, &mut manifest.test)] {
        for spec in specs {
            let rel = relative_dir(spec.attack, spec.texture_seed);
            let dir = root.join(&rel);
            let scene = Scene::new(spec.clone())?;
            write_sequence(&scene, &dir)?;
            let spec_path = dir.join("spec.json");
            fs::write(&spec_path, serde_json::to_vec_pretty(spec)?).map_err(|e| Error::from(e).at(&spec_path))?;
            names.push(rel);
        }
    }
    let path = root.join(MANIFEST);
    fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::from(e).at(&path))?;
    Ok(())
}

/// A recording stored on disk; frames are decoded on access.
#[derive(Debug)]
pub struct DiskSequence {
    dir: PathBuf,
    label: AttackClass,
    annotations: Vec<FrameAnnotation>,
    size: OnceLock<(usize, usize)>,
}

impl DiskSequence {
    pub fn open(dir: &Path) -> Result<Self> {
        let ann_path = dir.join("annotations.json");
        let bytes = fs::read(&ann_path).map_err(|e| Error::from(e).at(&ann_path))?;
        let annotations: Vec<FrameAnnotation> = serde_json::from_slice(&bytes)
            .map_err(|e| Error::Annotation(e.to_string()).at(&ann_path))?;
        for a in &annotations {
            a.face_box.validate().map_err(|e| e.at(&ann_path))?;
        }
        let label_path = dir.join("label");
        let label = fs::read_to_string(&label_path)
            .map_err(|e| Error::from(e).at(&label_path))?
            .parse::<AttackClass>()
            .map_err(|e| e.at(&label_path))?;
        for i in 0..annotations.len() {
            let p = dir.join(frame_name(i));
            if !p.is_file() {
                return Err(Error::TooFewFrames {
                    needed: annotations.len(),
                    got: i,
                }
                .at(dir));
            }
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            label,
            annotations,
            size: OnceLock::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

impl SequenceSource for DiskSequence {
    fn len(&self) -> usize {
        self.annotations.len()
    }

    fn frame(&self, i: usize) -> Result<ImageBuffer> {
        if i >= self.annotations.len() {
            return Err(Error::TooFewFrames {
                needed: i + 1,
                got: self.annotations.len(),
            });
        }
        let img = imaging::read_image(&self.dir.join(frame_name(i)))?;
        let _ = self.size.set(img.dims());
        Ok(img)
    }

    fn annotation(&self, i: usize) -> Result<FrameAnnotation> {
        self.annotations.get(i).copied().ok_or(Error::TooFewFrames {
            needed: i + 1,
            got: self.annotations.len(),
        })
    }

    fn label(&self) -> AttackClass {
        self.label
    }

    fn frame_size(&self) -> Result<(usize, usize)> {
        if let Some(s) = self.size.get() {
            return Ok(*s);
        }
        Ok(self.frame(0)?.dims())
    }

    fn id(&self) -> String {
        let name = self.dir.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        format!("{}-{name}", self.label)
    }
}

/// Train and test recordings read back from a dataset tree.
#[derive(Debug)]
pub struct DiskDataset {
    pub train: Vec<DiskSequence>,
    pub test: Vec<DiskSequence>,
}

/// Opens a dataset tree. Without a `dataset.json`, every `class/seq_id`
/// directory found is returned as training data.
pub fn read_dataset(root: &Path) -> Result<DiskDataset> {
    let manifest_path = root.join(MANIFEST);
    if manifest_path.is_file() {
        let bytes = fs::read(&manifest_path).map_err(|e| Error::from(e).at(&manifest_path))?;
        let m: Manifest = serde_json::from_slice(&bytes).map_err(|e| Error::from(e).at(&manifest_path))?;
        let open = |names: &[String]| names.iter().map(|n| DiskSequence::open(&root.join(n))).collect::<Result<Vec<_>>>();
        return Ok(DiskDataset {
            train: open(&m.train)?,
            test: open(&m.test)?,
        });
    }
    let mut train = Vec::new();
    for class in AttackClass::ALL {
        let dir = root.join(class.name());
        if !dir.is_dir() {
            continue;
        }
        let mut entries = fs::read_dir(&dir)
            .map_err(|e| Error::from(e).at(&dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect::<Vec<_>>();
        entries.sort();
        for p in entries {
            train.push(DiskSequence::open(&p)?);
        }
    }
    if train.is_empty() {
        return Err(Error::InvalidSpec(format!("no sequences under {}", root.display())));
    }
    Ok(DiskDataset { train, test: Vec::new() })
}
