use std::time::Instant;

use serde::{Deserialize, Serialize};

use flowgate::geometry::{FaceBox, FrameAnnotation, KeyPoints};
use flowgate::imaging::ImageBuffer;
use flowgate::protocol::{CaptureSession, CaptureState, Checkpoints, FrameDims, ProtocolConfig, StepOutcome};

/// Client-side detection for one frame; a missing box means no face.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FramePart {
    #[serde(rename = "box", default)]
    pub face_box: Option<FaceBox>,
    #[serde(default)]
    pub keypoints: Option<KeyPoints>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameReply {
    pub state: CaptureState,
    pub rel_height: Option<f64>,
    pub checkpoints_hit: usize,
    pub restarted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub state: CaptureState,
    pub rel_height: Option<f64>,
    pub checkpoints_hit: usize,
    pub checkpoints: Checkpoints,
    pub frames_seen: u64,
    pub has_verdict: bool,
}

pub struct SessionResource {
    pub id: String,
    pub session: CaptureSession,
    /// Checkpoint frames f1, f2, f3 with their annotations.
    buffered: [Option<(ImageBuffer, FrameAnnotation)>; 3],
    frames_seen: u64,
    pub verdict: Option<String>,
    pub last_seen: Instant,
}

impl SessionResource {
    pub fn new(id: String) -> Self {
        Self {
            id,
            session: CaptureSession::new(),
            buffered: [None, None, None],
            frames_seen: 0,
            verdict: None,
            last_seen: Instant::now(),
        }
    }

    pub fn touch(&mut self) {
        self.last_seen = Instant::now();
    }

    pub fn buffered_frames(&self) -> usize {
        self.buffered.iter().filter(|b| b.is_some()).count()
    }

    /// Steps the protocol with one frame, keeping it only if it became a
    /// checkpoint.
    pub fn step(&mut self, frame: ImageBuffer, part: FramePart, cfg: &ProtocolConfig) -> flowgate::Result<FrameReply> {
        self.touch();
        let annotation = match (part.face_box, part.keypoints) {
            (Some(b), Some(k)) => {
                b.validate()?;
                k.validate()?;
                Some(FrameAnnotation {
                    face_box: b,
                    keypoints: k,
                })
            }
            (Some(_), None) => {
                return Err(flowgate::Error::Annotation("a face box needs keypoints".into()));
            }
            (None, _) => None,
        };
        let index = self.frames_seen as i64;
        let (next, outcome) = self.session.step(
            index,
            annotation.as_ref().map(|a| &a.face_box),
            FrameDims::of(&frame),
            cfg,
        )?;
        self.frames_seen += 1;
        let restarted = matches!(outcome, StepOutcome::Restarted(_));
        if outcome != StepOutcome::AlreadyDone {
            let cp = next.checkpoints;
            for (k, slot) in [cp.i1, cp.i2, cp.i3].into_iter().enumerate() {
                match slot {
                    None => self.buffered[k] = None,
                    Some(i) if i == index => {
                        self.buffered[k] = Some((frame.clone(), annotation.expect("checkpoints need a face")))
                    }
                    Some(_) => {}
                }
            }
            self.session = next;
        }
        Ok(FrameReply {
            state: self.session.state,
            rel_height: self.session.last_rel_height,
            checkpoints_hit: self.session.checkpoints.count(),
            restarted,
        })
    }

    /// Copies of the checkpoint frames once the protocol is done.
    pub fn triplet(&self) -> Option<([ImageBuffer; 3], [FrameAnnotation; 3])> {
        if !self.session.is_done() {
            return None;
        }
        let [a, b, c] = &self.buffered;
        let (a, b, c) = (a.as_ref()?, b.as_ref()?, c.as_ref()?);
        Some(([a.0.clone(), b.0.clone(), c.0.clone()], [a.1, b.1, c.1]))
    }

    pub fn view(&self) -> SessionView {
        SessionView {
            id: self.id.clone(),
            state: self.session.state,
            rel_height: self.session.last_rel_height,
            checkpoints_hit: self.session.checkpoints.count(),
            checkpoints: self.session.checkpoints,
            frames_seen: self.frames_seen,
            has_verdict: self.verdict.is_some(),
        }
    }
}
