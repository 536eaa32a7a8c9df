//! Cooperative face liveness detection for the "approaching face" capture
//! protocol.
//!
//! The user moves a frontal face from a small guidance square (half the frame
//! height) to a large one (three quarters). Three checkpoint frames are cut
//! from the recording, rigidly aligned and normalized to their own face box,
//! and dense optical flow between the first and last crop is measured. After
//! per-crop scale normalization a flat medium (photo, screen) collapses to
//! near-zero flow, a printed mask leaves flow only on the static background,
//! and a real face keeps a depth-dependent parallax residual. Flow features
//! are fused with texture features of the middle frame and scored by a
//! logistic head.
//!
//! Module map:
//! - [`imaging`]: raster type, bilinear resampling, warps, blur, image IO.
//! - [`geometry`]: keypoints, rigid alignment, margin crops, triplet preprocessing.
//! - [`protocol`]: the capture state machine producing checkpoints f1/f2/f3.
//! - [`flow`]: coarse-to-fine variational optical flow, magnitude, clipping, `.flo` IO.
//! - [`simulator`]: synthetic genuine and attack recordings with analytic ground truth.
//! - [`classifier`]: dual-stream features, augmentation, logistic head.
//! - [`eval`]: per-attack ROC AUC and ablation suites.
//! - [`pipeline`]: end-to-end verdict shared by the CLI and the HTTP service.
pub mod classifier;
pub mod error;
pub mod eval;
pub mod flow;
pub mod geometry;
pub mod imaging;
pub mod pipeline;
pub mod protocol;
pub mod sequence;
pub mod simulator;

pub use error::{Error, Result};
