//! Feature extraction and ingestion, and assembly of per-channel design matrices.

mod design;
mod embed;
mod gist;
mod sidecar;

use std::path::PathBuf;

use thiserror::Error;

use crate::model::ChannelKind;

pub use design::{assemble_design_matrix, DesignMatrix, Window};
pub use embed::{thumbnail, ThumbnailConfig};
pub use gist::{gist, GaborBank, GistConfig, GistExtractor};
pub use sidecar::{
    deep_feature_dim, load_deep_features, load_features, read_binary, read_csv, sidecar_paths, validate_fc8_row,
    write_binary, write_csv, FeatureTable, LoadedFeatures, RowKey, SidecarHeader, FC7_DIM, FC8_DIM,
    FC8_SUM_TOLERANCE,
};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("{source_name}: expected dimension {expected}, found {found}")]
    DimMismatch {
        source_name: String,
        expected: usize,
        found: usize,
    },
    #[error("{source_name} row {row}: {reason}")]
    Validation {
        source_name: String,
        row: String,
        reason: String,
    },
    #[error("no rows for channel {channel} in window {window}")]
    EmptyDesign { channel: ChannelKind, window: Window },
}
