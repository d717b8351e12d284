//! Object-detection port.
//!
//! Detections are produced offline by an external detector and shipped as JSON
//! sidecars keyed by `(frame_index, blur_level)`. A key with an empty list means
//! "the detector ran and found nothing"; an absent key is an error.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default confidence threshold; detections must exceed it strictly.
pub const DEFAULT_CONFIDENCE_THRESHOLD: f64 = 0.25;
/// Size of the detector's class vocabulary.
pub const NUM_CLASSES: u32 = 80;

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("no detection sidecar entry for video `{video_id}` frame {frame_index} blur level {blur_level}")]
    MissingSidecar {
        video_id: String,
        frame_index: u32,
        blur_level: u32,
    },
    #[error("scripted detector has no rule for blur level {0}")]
    UndefinedLevel(u32),
    #[error("confidence threshold {0} outside (0, 1)")]
    BadThreshold(f64),
    #[error("invalid detection in {context}: {reason}")]
    InvalidDetection { context: String, reason: String },
    #[error("cannot read sidecar {path}: {reason}")]
    Read { path: PathBuf, reason: String },
}

/// Axis-aligned box in frame pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

/// Integer pixel rectangle `[x0, x1) × [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelRect {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl PixelRect {
    pub fn width(&self) -> u32 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> u32 {
        self.y1 - self.y0
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }
}

impl BBox {
    /// Rounds the box to pixels and clamps it to a `width × height` frame.
    /// Returns `None` when nothing of the box remains.
    pub fn clamp_to(&self, width: u32, height: u32) -> Option<PixelRect> {
        let clamp = |v: f64, max: u32| v.round().clamp(0.0, f64::from(max)) as u32;
        let rect = PixelRect {
            x0: clamp(self.x, width),
            y0: clamp(self.y, height),
            x1: clamp(self.x + self.w, width),
            y1: clamp(self.y + self.h, height),
        };
        (rect.x1 > rect.x0 && rect.y1 > rect.y0).then_some(rect)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class_id: u32,
    #[serde(flatten)]
    pub bbox: BBox,
    pub confidence: f64,
}

impl Detection {
    pub fn new(class_id: u32, x: f64, y: f64, w: f64, h: f64, confidence: f64) -> Self {
        Self {
            class_id,
            bbox: BBox { x, y, w, h },
            confidence,
        }
    }

    pub fn validate(&self, context: &str) -> Result<(), DetectorError> {
        let bad = |reason: String| DetectorError::InvalidDetection {
            context: context.to_string(),
            reason,
        };
        if self.class_id >= NUM_CLASSES {
            return Err(bad(format!("class_id {} outside [0, {}]", self.class_id, NUM_CLASSES - 1)));
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(bad(format!("confidence {} outside [0, 1]", self.confidence)));
        }
        let b = &self.bbox;
        if ![b.x, b.y, b.w, b.h].iter().all(|v| v.is_finite()) || b.w < 0.0 || b.h < 0.0 {
            return Err(bad(format!("malformed bbox {b:?}")));
        }
        Ok(())
    }
}

/// Address of one detector invocation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FrameKey {
    pub video_id: String,
    pub frame_index: u32,
    pub blur_level: u32,
}

impl FrameKey {
    pub fn new(video_id: impl Into<String>, frame_index: u32, blur_level: u32) -> Self {
        Self {
            video_id: video_id.into(),
            frame_index,
            blur_level,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidecarFrame {
    pub frame_index: u32,
    pub blur_level: u32,
    pub detections: Vec<Detection>,
}

/// On-disk detection sidecar for one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSidecar {
    pub video_id: String,
    pub frames: Vec<SidecarFrame>,
}

impl DetectionSidecar {
    pub fn validate(&self) -> Result<(), DetectorError> {
        for f in &self.frames {
            let ctx = format!("{} frame {} level {}", self.video_id, f.frame_index, f.blur_level);
            for d in &f.detections {
                d.validate(&ctx)?;
            }
        }
        Ok(())
    }

    pub fn from_path(path: &Path) -> Result<Self, DetectorError> {
        let read_err = |reason: String| DetectorError::Read {
            path: path.to_path_buf(),
            reason,
        };
        let text = fs::read_to_string(path).map_err(|e| read_err(e.to_string()))?;
        let sidecar: DetectionSidecar = serde_json::from_str(&text).map_err(|e| read_err(e.to_string()))?;
        sidecar.validate()?;
        Ok(sidecar)
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        fs::write(path, serde_json::to_string_pretty(self).expect("sidecar serialises"))
    }
}

#[derive(Debug, Clone)]
enum Backend {
    FileBacked(HashMap<(String, u32, u32), Vec<Detection>>),
    /// Answers by blur level; levels above the highest defined one reuse its answer.
    Scripted(BTreeMap<u32, Vec<Detection>>),
}

/// A read-only source of detections.
#[derive(Debug, Clone)]
pub struct DetectorHandle {
    backend: Backend,
    confidence_threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectorKind {
    FileBacked,
    Scripted,
}

impl DetectorHandle {
    /// Builds a detector over in-memory sidecars.
    pub fn file_backed(sidecars: impl IntoIterator<Item = DetectionSidecar>) -> Result<Self, DetectorError> {
        let mut map = HashMap::new();
        for s in sidecars {
            s.validate()?;
            for f in s.frames {
                map.insert((s.video_id.clone(), f.frame_index, f.blur_level), f.detections);
            }
        }
        Ok(Self {
            backend: Backend::FileBacked(map),
            confidence_threshold: DEFAULT_CONFIDENCE_THRESHOLD,
        })
    }

    /// Loads every `*.json` sidecar in `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self, DetectorError> {
        let entries = fs::read_dir(dir).map_err(|e| DetectorError::Read {
            path: dir.to_path_buf(),
            reason: e.to_string(),
        })?;
        let mut paths: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "json"))
            .collect();
        paths.sort();
        let sidecars = paths
            .iter()
            .map(|p| DetectionSidecar::from_path(p))
            .collect::<Result<Vec<_>, _>>()?;
        Self::file_backed(sidecars)
    }

    pub fn with_threshold(mut self, threshold: f64) -> Result<Self, DetectorError> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(DetectorError::BadThreshold(threshold));
        }
        self.confidence_threshold = threshold;
        Ok(self)
    }

    pub fn kind(&self) -> DetectorKind {
        match self.backend {
            Backend::FileBacked(_) => DetectorKind::FileBacked,
            Backend::Scripted(_) => DetectorKind::Scripted,
        }
    }

    pub fn confidence_threshold(&self) -> f64 {
        self.confidence_threshold
    }

    /// Detections for `key` with confidence strictly above the threshold.
    pub fn detect(&self, key: &FrameKey) -> Result<Vec<Detection>, DetectorError> {
        let raw = match &self.backend {
            Backend::FileBacked(map) => map
                .get(&(key.video_id.clone(), key.frame_index, key.blur_level))
                .ok_or_else(|| DetectorError::MissingSidecar {
                    video_id: key.video_id.clone(),
                    frame_index: key.frame_index,
                    blur_level: key.blur_level,
                })?,
            Backend::Scripted(rule) => rule
                .range(..=key.blur_level)
                .next_back()
                .map(|(_, d)| d)
                .ok_or(DetectorError::UndefinedLevel(key.blur_level))?,
        };
        Ok(raw
            .iter()
            .filter(|d| d.confidence > self.confidence_threshold)
            .copied()
            .collect())
    }
}

/// A test double that answers from a `blur_level → detections` rule, ignoring the frame.
pub fn scripted_detector(rule: BTreeMap<u32, Vec<Detection>>) -> DetectorHandle {
    DetectorHandle {
        backend: Backend::Scripted(rule),
        confidence_threshold: DEFAULT_CONFIDENCE_THRESHOLD,
    }
}
