//! The "approaching face" capture protocol.
//!
//! The user first matches the face to a reference square of half the frame
//! height, then moves closer until the face fills a square of three quarters
//! of the frame height. Checkpoints f1/f2/f3 are the first frames whose
//! relative face height reaches 0.500, 0.625 and 0.750. Retreating or losing
//! the face restarts the recording.

use serde::{Deserialize, Serialize};

use crate::geometry::FaceBox;
use crate::imaging::ImageBuffer;
use crate::{Error, Result};

/// Slack for threshold comparisons on heights computed in floating point.
const HEIGHT_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolConfig {
    pub start_rel_height: f64,
    pub mid_rel_height: f64,
    pub end_rel_height: f64,
    /// Allowed offset of the face center from the frame center, as a fraction
    /// of frame height.
    pub center_tolerance: f64,
    pub retreat_hysteresis: f64,
    pub max_missing_frames: u32,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            start_rel_height: 0.50,
            mid_rel_height: 0.625,
            end_rel_height: 0.75,
            center_tolerance: 0.10,
            retreat_hysteresis: 0.03,
            max_missing_frames: 5,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 < self.start_rel_height
            && self.start_rel_height < self.mid_rel_height
            && self.mid_rel_height < self.end_rel_height
            && self.end_rel_height < 1.0
            && self.center_tolerance > 0.0
            && self.retreat_hysteresis > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("protocol thresholds {self:?}")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptureState {
    WaitAlign,
    Recording,
    Done,
    Restarted,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoints {
    pub i1: Option<i64>,
    pub i2: Option<i64>,
    pub i3: Option<i64>,
}

impl Checkpoints {
    pub fn count(&self) -> usize {
        [self.i1, self.i2, self.i3].iter().filter(|c| c.is_some()).count()
    }

    pub fn complete(&self) -> Option<[i64; 3]> {
        Some([self.i1?, self.i2?, self.i3?])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RestartReason {
    Retreat,
    FaceLost,
}

/// What a single [`CaptureSession::step`] did.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "reason")]
pub enum StepOutcome {
    Advanced,
    Restarted(RestartReason),
    /// The session was already done; nothing changed.
    AlreadyDone,
}

/// Frame dimensions, needed for relative height and centering.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameDims {
    pub width: f64,
    pub height: f64,
}

impl FrameDims {
    pub fn of(img: &ImageBuffer) -> Self {
        Self {
            width: img.width() as f64,
            height: img.height() as f64,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaptureSession {
    pub state: CaptureState,
    pub running_max_height: f64,
    pub missing_count: u32,
    pub checkpoints: Checkpoints,
    pub last_frame: Option<i64>,
    pub last_rel_height: Option<f64>,
}

impl Default for CaptureSession {
    fn default() -> Self {
        Self::new()
    }
}

impl CaptureSession {
    pub fn new() -> Self {
        Self {
            state: CaptureState::WaitAlign,
            running_max_height: 0.0,
            missing_count: 0,
            checkpoints: Checkpoints::default(),
            last_frame: None,
            last_rel_height: None,
        }
    }

    pub fn is_done(&self) -> bool {
        self.state == CaptureState::Done
    }

    fn restarted(mut self, reason: RestartReason) -> (Self, StepOutcome) {
        self.state = CaptureState::Restarted;
        self.running_max_height = 0.0;
        self.missing_count = 0;
        self.checkpoints = Checkpoints::default();
        (self, StepOutcome::Restarted(reason))
    }

    /// Advances the state machine by one frame. Pure: the receiver is not
    /// modified, the next session is returned.
    pub fn step(
        &self,
        frame_index: i64,
        detection: Option<&FaceBox>,
        frame: FrameDims,
        cfg: &ProtocolConfig,
    ) -> Result<(CaptureSession, StepOutcome)> {
        if self.is_done() {
            return Ok((*self, StepOutcome::AlreadyDone));
        }
        if let Some(last) = self.last_frame {
            if frame_index <= last {
                return Err(Error::NonMonotoneFrame { last, got: frame_index });
            }
        }
        let mut next = *self;
        next.last_frame = Some(frame_index);
        next.last_rel_height = detection.map(|b| b.h / frame.height);

        match self.state {
            CaptureState::WaitAlign | CaptureState::Restarted => {
                next.state = CaptureState::WaitAlign;
                next.missing_count = 0;
                let Some(b) = detection else {
                    return Ok((next, StepOutcome::Advanced));
                };
                let rel = b.h / frame.height;
                let [cx, cy] = b.center();
                let off = (cx - frame.width / 2.0).hypot(cy - frame.height / 2.0) / frame.height;
                let in_reference = rel >= cfg.start_rel_height - HEIGHT_EPS && rel < cfg.mid_rel_height - HEIGHT_EPS;
                if in_reference && off <= cfg.center_tolerance {
                    next.state = CaptureState::Recording;
                    next.running_max_height = rel;
                    next.checkpoints = Checkpoints {
                        i1: Some(frame_index),
                        ..Checkpoints::default()
                    };
                }
                Ok((next, StepOutcome::Advanced))
            }
            CaptureState::Recording => {
                let Some(b) = detection else {
                    next.missing_count += 1;
                    if next.missing_count > cfg.max_missing_frames {
                        return Ok(next.restarted(RestartReason::FaceLost));
                    }
                    return Ok((next, StepOutcome::Advanced));
                };
                next.missing_count = 0;
                let rel = b.h / frame.height;
                if rel < self.running_max_height - cfg.retreat_hysteresis {
                    return Ok(next.restarted(RestartReason::Retreat));
                }
                next.running_max_height = self.running_max_height.max(rel);
                let cp = &mut next.checkpoints;
                if cp.i2.is_none() {
                    if rel >= cfg.mid_rel_height - HEIGHT_EPS {
                        cp.i2 = Some(frame_index);
                    }
                } else if rel >= cfg.end_rel_height - HEIGHT_EPS {
                    cp.i3 = Some(frame_index);
                    next.state = CaptureState::Done;
                }
                Ok((next, StepOutcome::Advanced))
            }
            CaptureState::Done => unreachable!(),
        }
    }

    /// Runs the protocol over a whole annotated recording.
    pub fn replay<'a>(
        detections: impl IntoIterator<Item = Option<&'a FaceBox>>,
        frame: FrameDims,
        cfg: &ProtocolConfig,
    ) -> Result<CaptureSession> {
        let mut s = CaptureSession::new();
        for (i, d) in detections.into_iter().enumerate() {
            s = s.step(i as i64, d, frame, cfg)?.0;
            if s.is_done() {
                break;
            }
        }
        Ok(s)
    }
}

/// Checkpoint frame indices of a finished session.
pub fn checkpoint_indices(session: &CaptureSession) -> Result<[usize; 3]> {
    if !session.is_done() {
        return Err(Error::SessionNotDone);
    }
    let idx = session.checkpoints.complete().ok_or(Error::SessionNotDone)?;
    idx.iter()
        .map(|&i| usize::try_from(i).map_err(|_| Error::SessionNotDone))
        .collect::<Result<Vec<_>>>()
        .map(|v| [v[0], v[1], v[2]])
}

/// Returns the frames at the recorded checkpoints.
pub fn extract_triplet<'a>(
    frames: &'a [ImageBuffer],
    session: &CaptureSession,
) -> Result<[&'a ImageBuffer; 3]> {
    let [a, b, c] = checkpoint_indices(session)?;
    let get = |i: usize| {
        frames.get(i).ok_or(Error::TooFewFrames {
            needed: i + 1,
            got: frames.len(),
        })
    };
    Ok([get(a)?, get(b)?, get(c)?])
}
