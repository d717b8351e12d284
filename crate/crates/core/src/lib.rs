//! Visual-channel decomposition and affect recognition for video advertisements.
//!
//! The crate is organised around the stages of the pipeline:
//!
//! * [`model`]: dataset manifest, frames, ratings and gaze traces.
//! * [`detector`]: the object-detection port (detections are ingested, never inferred).
//! * [`channels`]: image operators that synthesise the content-driven channels.
//! * [`gaze`]: fixation/saccade segmentation, heatmaps and gaze histogram features.
//! * [`features`]: the Gist descriptor, feature sidecars and design-matrix assembly.
//! * [`learners`]: LDA and SMO-trained SVMs with inner cross-validated model selection.
//! * [`eval`]: the repeated group-aware cross-validation protocol and its report.
//! * [`stats`]: annotator agreement, correlation with FDR control and rank-sum tests.
//! * [`pipeline`]: per-frame glue used by the command-line stages.
//! * [`corpus`]: a synthetic planted-signal corpus generator for end-to-end checks.

pub mod channels;
pub mod corpus;
pub mod detector;
pub mod eval;
pub mod features;
pub mod gaze;
pub mod imageops;
pub mod learners;
pub mod model;
pub mod pipeline;
pub mod stats;

mod error;

pub use error::{Error, Result};
pub use model::{
    AffectDimension, AffectTask, ChannelKind, DatasetManifest, FeatureScope, FrameSample,
    GazeSample, GazeTrace, Level, RatingMatrix, ScreenDims, VideoRecord,
};

/// Seconds between two sampled frames.
pub const FRAME_PERIOD_S: f64 = 3.0;
