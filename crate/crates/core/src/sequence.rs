//! Frame sources: anything that yields annotated frames of one recording.

use crate::geometry::FrameAnnotation;
use crate::imaging::ImageBuffer;
use crate::protocol::{self, CaptureSession, FrameDims, ProtocolConfig};
use crate::simulator::AttackClass;
use crate::Result;

pub trait SequenceSource: Send + Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn frame(&self, i: usize) -> Result<ImageBuffer>;

    fn annotation(&self, i: usize) -> Result<FrameAnnotation>;

    fn label(&self) -> AttackClass;

    /// Frame width and height in pixels.
    fn frame_size(&self) -> Result<(usize, usize)>;

    /// Relative face height of frame `i`, from its box unless known exactly.
    fn rel_height(&self, i: usize) -> Option<f64> {
        let (_, h) = self.frame_size().ok()?;
        self.annotation(i).ok().map(|a| a.face_box.h / h as f64)
    }

    fn id(&self) -> String;
}

/// Checkpoint frames of a recording with their annotations.
#[derive(Clone, Debug)]
pub struct Triplet {
    pub indices: [usize; 3],
    pub frames: [ImageBuffer; 3],
    pub annotations: [FrameAnnotation; 3],
}

impl Triplet {
    pub fn frames(&self) -> [&ImageBuffer; 3] {
        [&self.frames[0], &self.frames[1], &self.frames[2]]
    }

    pub fn annotations(&self) -> [&FrameAnnotation; 3] {
        [&self.annotations[0], &self.annotations[1], &self.annotations[2]]
    }
}

/// Runs the capture protocol over the recording's face boxes.
pub fn run_protocol(src: &dyn SequenceSource, cfg: &ProtocolConfig) -> Result<CaptureSession> {
    let (w, h) = src.frame_size()?;
    let dims = FrameDims {
        width: w as f64,
        height: h as f64,
    };
    let boxes = (0..src.len())
        .map(|i| src.annotation(i).map(|a| a.face_box))
        .collect::<Result<Vec<_>>>()?;
    CaptureSession::replay(boxes.iter().map(Some), dims, cfg)
}

/// Loads the frames at explicit indices.
pub fn load_triplet(src: &dyn SequenceSource, indices: [usize; 3]) -> Result<Triplet> {
    let get = |k: usize| -> Result<(ImageBuffer, FrameAnnotation)> {
        Ok((src.frame(indices[k])?, src.annotation(indices[k])?))
    };
    let (f1, a1) = get(0)?;
    let (f2, a2) = get(1)?;
    let (f3, a3) = get(2)?;
    Ok(Triplet {
        indices,
        frames: [f1, f2, f3],
        annotations: [a1, a2, a3],
    })
}

/// Runs the protocol and loads its checkpoint frames.
pub fn capture_triplet(src: &dyn SequenceSource, cfg: &ProtocolConfig) -> Result<Triplet> {
    let session = run_protocol(src, cfg)?;
    load_triplet(src, protocol::checkpoint_indices(&session)?)
}
