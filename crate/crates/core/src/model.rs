//! Domain types shared by every stage, plus the dataset manifest.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use image::RgbImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::FRAME_PERIOD_S;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("manifest parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid manifest field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("missing data for video `{video_id}`: {reason}")]
    MissingData { video_id: String, reason: String },
    #[error("cannot decode frame {path}: {reason}")]
    Decode { path: PathBuf, reason: String },
    #[error("gaze file {path} rejected: {malformed} of {total} rows malformed")]
    GazeRejected {
        path: PathBuf,
        malformed: usize,
        total: usize,
    },
    #[error("gaze file {path}: {reason}")]
    GazeFormat { path: PathBuf, reason: String },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ManifestError {
    ManifestError::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

/// Binary affect level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Level {
    #[serde(alias = "H", alias = "high")]
    High,
    #[serde(alias = "L", alias = "low")]
    Low,
}

impl Level {
    pub fn is_high(self) -> bool {
        matches!(self, Level::High)
    }

    pub fn from_high(high: bool) -> Self {
        if high {
            Level::High
        } else {
            Level::Low
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AffectDimension {
    Valence,
    Arousal,
}

impl AffectDimension {
    pub const ALL: [AffectDimension; 2] = [AffectDimension::Valence, AffectDimension::Arousal];

    pub fn as_str(self) -> &'static str {
        match self {
            AffectDimension::Valence => "valence",
            AffectDimension::Arousal => "arousal",
        }
    }
}

impl fmt::Display for AffectDimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A binary high-vs-low prediction task. The positive class is always [`Level::High`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AffectTask {
    pub dimension: AffectDimension,
}

impl AffectTask {
    pub const POSITIVE: Level = Level::High;

    pub fn new(dimension: AffectDimension) -> Self {
        Self { dimension }
    }

    pub fn label_of(&self, video: &VideoRecord) -> Level {
        match self.dimension {
            AffectDimension::Valence => video.expert_valence,
            AffectDimension::Arousal => video.expert_arousal,
        }
    }
}

/// Whether a channel yields one feature row per sampled frame or one per video.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureScope {
    Frame,
    Video,
}

/// The ten information channels, in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    Video,
    ConstantBlur,
    AdaptiveBlur,
    ObjectCrops,
    ObjectRetained,
    Fc8,
    Gist,
    EyeRoi,
    EyeHist,
    EyeRoiContextBlur,
}

impl ChannelKind {
    pub const ALL: [ChannelKind; 10] = [
        ChannelKind::Video,
        ChannelKind::ConstantBlur,
        ChannelKind::AdaptiveBlur,
        ChannelKind::ObjectCrops,
        ChannelKind::ObjectRetained,
        ChannelKind::Fc8,
        ChannelKind::Gist,
        ChannelKind::EyeRoi,
        ChannelKind::EyeHist,
        ChannelKind::EyeRoiContextBlur,
    ];

    pub fn slug(self) -> &'static str {
        match self {
            ChannelKind::Video => "video",
            ChannelKind::ConstantBlur => "constant_blur",
            ChannelKind::AdaptiveBlur => "adaptive_blur",
            ChannelKind::ObjectCrops => "object_crops",
            ChannelKind::ObjectRetained => "object_retained",
            ChannelKind::Fc8 => "fc8",
            ChannelKind::Gist => "gist",
            ChannelKind::EyeRoi => "eye_roi",
            ChannelKind::EyeHist => "eye_hist",
            ChannelKind::EyeRoiContextBlur => "eye_roi_context_blur",
        }
    }

    /// Human-readable name used in report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            ChannelKind::Video => "Video",
            ChannelKind::ConstantBlur => "Constant Blur",
            ChannelKind::AdaptiveBlur => "Adaptive Blur",
            ChannelKind::ObjectCrops => "Object Crops",
            ChannelKind::ObjectRetained => "Object Retained",
            ChannelKind::Fc8 => "AlexNet FC8",
            ChannelKind::Gist => "Gist",
            ChannelKind::EyeRoi => "Eye ROI",
            ChannelKind::EyeHist => "Eye Hist",
            ChannelKind::EyeRoiContextBlur => "Eye ROI + Context Blur",
        }
    }

    pub fn scope(self) -> FeatureScope {
        match self {
            ChannelKind::EyeHist => FeatureScope::Video,
            _ => FeatureScope::Frame,
        }
    }

    /// Channels that are materialised as images before feature extraction.
    pub fn is_image_channel(self) -> bool {
        !matches!(
            self,
            ChannelKind::Fc8 | ChannelKind::Gist | ChannelKind::EyeHist
        )
    }

    /// Channels whose synthesis consumes object detections.
    pub fn needs_detections(self) -> bool {
        matches!(
            self,
            ChannelKind::AdaptiveBlur | ChannelKind::ObjectCrops | ChannelKind::ObjectRetained
        )
    }

    /// Channels whose synthesis consumes gaze heatmaps.
    pub fn needs_gaze(self) -> bool {
        matches!(
            self,
            ChannelKind::EyeRoi | ChannelKind::EyeRoiContextBlur | ChannelKind::EyeHist
        )
    }
}

impl fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for ChannelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', ' ', '+'], "_");
        ChannelKind::ALL
            .into_iter()
            .find(|c| c.slug() == norm)
            .ok_or_else(|| format!("unknown channel `{s}`"))
    }
}

/// One advertisement video, represented by a directory of pre-extracted frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub id: String,
    pub duration_s: f64,
    pub frame_width: u32,
    pub frame_height: u32,
    pub frame_dir: PathBuf,
    pub expert_valence: Level,
    pub expert_arousal: Level,
}

impl VideoRecord {
    fn validate(&self, idx: usize) -> Result<(), ManifestError> {
        let field = |name: &str| format!("videos[{idx}].{name}");
        if self.id.is_empty() {
            return Err(invalid(field("id"), "must be non-empty"));
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(invalid(field("duration_s"), "must be finite and > 0"));
        }
        if self.frame_width < 1 {
            return Err(invalid(field("frame_width"), "must be >= 1"));
        }
        if self.frame_height < 1 {
            return Err(invalid(field("frame_height"), "must be >= 1"));
        }
        Ok(())
    }

    /// Number of sampled frames: the count of `i >= 0` with `3 i < duration_s`.
    pub fn frame_count(&self) -> u32 {
        sampled_frame_count(self.duration_s)
    }

    /// `(index, timestamp_s)` for every sampled frame.
    pub fn frame_schedule(&self) -> Vec<(u32, f64)> {
        (0..self.frame_count())
            .map(|i| (i, FRAME_PERIOD_S * f64::from(i)))
            .collect()
    }
}

pub fn sampled_frame_count(duration_s: f64) -> u32 {
    if !(duration_s > 0.0) {
        return 0;
    }
    let mut n = (duration_s / FRAME_PERIOD_S).ceil().max(0.0) as u32;
    while FRAME_PERIOD_S * f64::from(n) < duration_s {
        n += 1;
    }
    while n > 0 && FRAME_PERIOD_S * f64::from(n - 1) >= duration_s {
        n -= 1;
    }
    n
}

/// A decoded frame sampled from a video.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSample {
    pub video_id: String,
    pub index: u32,
    pub timestamp_s: f64,
    pub pixels: RgbImage,
}

impl FrameSample {
    pub fn new(video_id: impl Into<String>, index: u32, pixels: RgbImage) -> Self {
        Self {
            video_id: video_id.into(),
            index,
            timestamp_s: FRAME_PERIOD_S * f64::from(index),
            pixels,
        }
    }

    pub fn width(&self) -> u32 {
        self.pixels.width()
    }

    pub fn height(&self) -> u32 {
        self.pixels.height()
    }
}

/// Integer millisecond timestamp carried in a frame filename (`000012000.png`, `frame_12000.png`).
pub fn parse_frame_timestamp_ms(path: &Path) -> Option<u64> {
    let stem = path.file_stem()?.to_str()?;
    let digits: String = stem
        .chars()
        .rev()
        .take_while(|c| c.is_ascii_digit())
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    if digits.is_empty() {
        return None;
    }
    digits.parse().ok()
}

const FRAME_EXTENSIONS: [&str; 5] = ["png", "jpg", "jpeg", "bmp", "ppm"];

/// Lists timestamped frame files in `dir`, sorted by timestamp.
pub fn list_frame_files(dir: &Path) -> std::io::Result<Vec<(u64, PathBuf)>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let ext_ok = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| FRAME_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
            .unwrap_or(false);
        if !ext_ok {
            continue;
        }
        if let Some(ms) = parse_frame_timestamp_ms(&path) {
            files.push((ms, path));
        }
    }
    files.sort();
    Ok(files)
}

/// Samples one frame every three seconds from `video.frame_dir`.
///
/// For each scheduled time the frame on screen at that instant is chosen, i.e. the
/// last file whose timestamp is not after it (or the earliest file if none is).
pub fn sample_frames(video: &VideoRecord) -> Result<Vec<FrameSample>, ManifestError> {
    let files = list_frame_files(&video.frame_dir).map_err(|e| ManifestError::MissingData {
        video_id: video.id.clone(),
        reason: format!("cannot list {}: {e}", video.frame_dir.display()),
    })?;
    if files.is_empty() {
        return Err(ManifestError::MissingData {
            video_id: video.id.clone(),
            reason: format!("no timestamped frames in {}", video.frame_dir.display()),
        });
    }
    video
        .frame_schedule()
        .into_iter()
        .map(|(index, t)| {
            let target_ms = (t * 1000.0).round() as u64;
            let pos = files.partition_point(|(ms, _)| *ms <= target_ms);
            let (_, path) = &files[pos.saturating_sub(1)];
            let pixels = image::open(path)
                .map_err(|e| ManifestError::Decode {
                    path: path.clone(),
                    reason: e.to_string(),
                })?
                .to_rgb8();
            Ok(FrameSample::new(video.id.clone(), index, pixels))
        })
        .collect()
}

/// Raters × items grids of ordinal ratings; `None` marks a missing rating.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RatingMatrix {
    pub raters: Vec<String>,
    pub items: Vec<String>,
    pub valence: Vec<Vec<Option<i8>>>,
    pub arousal: Vec<Vec<Option<i8>>>,
}

impl RatingMatrix {
    pub const VALENCE_RANGE: (i8, i8) = (-2, 2);
    pub const AROUSAL_RANGE: (i8, i8) = (0, 4);

    pub fn grid(&self, dim: AffectDimension) -> &[Vec<Option<i8>>] {
        match dim {
            AffectDimension::Valence => &self.valence,
            AffectDimension::Arousal => &self.arousal,
        }
    }

    pub fn is_complete(&self, dim: AffectDimension) -> bool {
        self.grid(dim).iter().flatten().all(Option::is_some)
    }

    /// Validates dimensions and scale membership. Out-of-scale values are errors.
    pub fn validate(&self) -> Result<(), ManifestError> {
        let grids = [
            ("valence", &self.valence, Self::VALENCE_RANGE),
            ("arousal", &self.arousal, Self::AROUSAL_RANGE),
        ];
        for (name, grid, (lo, hi)) in grids {
            if grid.len() != self.raters.len() {
                return Err(invalid(
                    format!("ratings.{name}"),
                    format!("{} rows for {} raters", grid.len(), self.raters.len()),
                ));
            }
            for (r, row) in grid.iter().enumerate() {
                if row.len() != self.items.len() {
                    return Err(invalid(
                        format!("ratings.{name}[{r}]"),
                        format!("{} columns for {} items", row.len(), self.items.len()),
                    ));
                }
                for (i, v) in row.iter().enumerate() {
                    if let Some(v) = *v {
                        if v < lo || v > hi {
                            return Err(invalid(
                                format!("ratings.{name}[{r}][{i}]"),
                                format!("value {v} outside [{lo}, {hi}]"),
                            ));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Presentation screen in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScreenDims {
    pub width: u32,
    pub height: u32,
}

impl Default for ScreenDims {
    fn default() -> Self {
        Self {
            width: 1366,
            height: 768,
        }
    }
}

impl ScreenDims {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x < f64::from(self.width) && y < f64::from(self.height)
    }
}

/// One raw gaze sample: milliseconds since video onset and screen pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeSample {
    pub t_ms: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GazeTrace {
    pub rater_id: String,
    pub video_id: String,
    pub samples: Vec<GazeSample>,
    #[serde(default)]
    pub screen: ScreenDims,
}

impl GazeTrace {
    pub fn new(
        rater_id: impl Into<String>,
        video_id: impl Into<String>,
        samples: Vec<GazeSample>,
    ) -> Self {
        Self {
            rater_id: rater_id.into(),
            video_id: video_id.into(),
            samples,
            screen: ScreenDims::default(),
        }
    }

    /// Samples with finite coordinates inside the screen.
    pub fn valid_samples(&self) -> impl Iterator<Item = &GazeSample> + '_ {
        self.samples
            .iter()
            .filter(move |s| s.t_ms.is_finite() && self.screen.contains(s.x, s.y))
    }
}

/// Result of reading a gaze CSV: the accepted samples and the malformed-row count.
#[derive(Debug, Clone)]
pub struct GazeCsv {
    pub samples: Vec<GazeSample>,
    pub malformed: usize,
    pub total: usize,
}

/// Maximum fraction of malformed rows tolerated in a gaze file.
pub const GAZE_MALFORMED_LIMIT: f64 = 0.10;

/// Reads a `t_ms,x_px,y_px` gaze CSV. Malformed rows (non-numeric, non-finite or
/// non-increasing time) are skipped; more than 10% malformed rejects the file.
pub fn read_gaze_csv(path: &Path) -> Result<GazeCsv, ManifestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| ManifestError::GazeFormat {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
    let headers = rdr
        .headers()
        .map_err(|e| ManifestError::GazeFormat {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?
        .clone();
    let expected = ["t_ms", "x_px", "y_px"];
    if headers.len() < 3 || headers.iter().take(3).ne(expected.iter().copied()) {
        return Err(ManifestError::GazeFormat {
            path: path.to_path_buf(),
            reason: format!("expected header `t_ms,x_px,y_px`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut samples: Vec<GazeSample> = Vec::new();
    let mut malformed = 0usize;
    let mut total = 0usize;
    for record in rdr.records() {
        total += 1;
        let parsed = record.ok().and_then(|r| {
            if r.len() != 3 {
                return None;
            }
            let t: f64 = r[0].parse().ok()?;
            let x: f64 = r[1].parse().ok()?;
            let y: f64 = r[2].parse().ok()?;
            (t.is_finite() && x.is_finite() && y.is_finite()).then_some(GazeSample { t_ms: t, x, y })
        });
        match parsed {
            Some(s) if samples.last().is_none_or(|p| s.t_ms > p.t_ms) => samples.push(s),
            _ => malformed += 1,
        }
    }
    if total > 0 && malformed as f64 > GAZE_MALFORMED_LIMIT * total as f64 {
        return Err(ManifestError::GazeRejected {
            path: path.to_path_buf(),
            malformed,
            total,
        });
    }
    Ok(GazeCsv {
        samples,
        malformed,
        total,
    })
}

/// Writes samples as a `t_ms,x_px,y_px` CSV.
pub fn write_gaze_csv(path: &Path, samples: &[GazeSample]) -> std::io::Result<()> {
    let mut out = String::from("t_ms,x_px,y_px\n");
    for s in samples {
        out.push_str(&format!("{},{},{}\n", s.t_ms, s.x, s.y));
    }
    fs::write(path, out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GazeRef {
    pub rater_id: String,
    pub video_id: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Sidecars {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detections: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<PathBuf>,
}

/// Everything the pipeline knows about a dataset. Paths are resolved against the
/// manifest's directory at load time; existence is checked lazily by each stage.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub videos: Vec<VideoRecord>,
    #[serde(default)]
    pub ratings: RatingMatrix,
    #[serde(default)]
    pub gaze: Vec<GazeRef>,
    #[serde(default)]
    pub sidecars: Sidecars,
}

impl DatasetManifest {
    /// Parses and validates a manifest, resolving relative paths against `base_dir`.
    pub fn from_json_str(json: &str, base_dir: &Path) -> Result<Self, ManifestError> {
        let mut manifest: DatasetManifest = serde_json::from_str(json)?;
        manifest.resolve_paths(base_dir);
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serialises")
    }

    fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for v in &mut self.videos {
            resolve(&mut v.frame_dir);
        }
        for g in &mut self.gaze {
            resolve(&mut g.path);
        }
        if let Some(d) = self.sidecars.detections.as_mut() {
            resolve(d);
        }
        if let Some(d) = self.sidecars.features.as_mut() {
            resolve(d);
        }
    }

    pub fn validate(&self) -> Result<(), ManifestError> {
        let mut ids = HashSet::new();
        for (i, v) in self.videos.iter().enumerate() {
            v.validate(i)?;
            if !ids.insert(v.id.as_str()) {
                return Err(invalid(format!("videos[{i}].id"), format!("duplicate id `{}`", v.id)));
            }
        }
        self.ratings.validate()?;
        for item in &self.ratings.items {
            if !ids.contains(item.as_str()) {
                return Err(ManifestError::Integrity(format!(
                    "ratings item `{item}` names an unknown video"
                )));
            }
        }
        for g in &self.gaze {
            if !ids.contains(g.video_id.as_str()) {
                return Err(ManifestError::Integrity(format!(
                    "gaze trace of rater `{}` names unknown video `{}`",
                    g.rater_id, g.video_id
                )));
            }
        }
        Ok(())
    }

    pub fn video(&self, id: &str) -> Option<&VideoRecord> {
        self.videos.iter().find(|v| v.id == id)
    }

    /// Total sampled frames across all videos.
    pub fn total_frames(&self) -> u64 {
        self.videos.iter().map(|v| u64::from(v.frame_count())).sum()
    }

    /// Gaze file references grouped by video id.
    pub fn gaze_by_video(&self) -> BTreeMap<&str, Vec<&GazeRef>> {
        let mut map: BTreeMap<&str, Vec<&GazeRef>> = BTreeMap::new();
        for g in &self.gaze {
            map.entry(g.video_id.as_str()).or_default().push(g);
        }
        map
    }

    /// Sorted, de-duplicated rater roster from the rating matrix and gaze references.
    pub fn rater_roster(&self) -> Vec<String> {
        let mut roster: Vec<String> = self
            .ratings
            .raters
            .iter()
            .cloned()
            .chain(self.gaze.iter().map(|g| g.rater_id.clone()))
            .collect();
        roster.sort();
        roster.dedup();
        roster
    }
}

/// Reads and validates a manifest file.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest, ManifestError> {
    let text = fs::read_to_string(path).map_err(|source| ManifestError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    DatasetManifest::from_json_str(&text, base)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn manifest_json(gaze_video: &str) -> String {
        format!(
            r#"{{
              "videos": [
                {{"id": "v1", "duration_s": 60.0, "frame_width": 64, "frame_height": 48,
                  "frame_dir": "frames/v1", "expert_valence": "High", "expert_arousal": "L"}},
                {{"id": "v2", "duration_s": 31.5, "frame_width": 64, "frame_height": 48,
                  "frame_dir": "frames/v2", "expert_valence": "Low", "expert_arousal": "High"}}
              ],
              "ratings": {{
                "raters": ["r1", "r2", "r3"], "items": ["v1", "v2"],
                "valence": [[2, -1], [1, null], [2, -2]],
                "arousal": [[0, 4], [1, 3], [null, 4]]
              }},
              "gaze": [{{"rater_id": "r1", "video_id": "{gaze_video}", "path": "gaze/r1_v1.csv"}}],
              "sidecars": {{"detections": "dets", "features": "feats"}}
            }}"#
        )
    }

    #[test]
    fn loads_two_videos_three_raters() {
        let m = DatasetManifest::from_json_str(&manifest_json("v1"), Path::new("/data")).unwrap();
        assert_eq!(m.videos.len(), 2);
        assert_eq!(m.ratings.valence.len(), 3);
        assert!(m.ratings.valence.iter().all(|r| r.len() == 2));
        assert_eq!(m.videos[0].frame_dir, Path::new("/data/frames/v1"));
        assert_eq!(m.videos[0].expert_arousal, Level::Low);
        assert_eq!(m.sidecars.detections.as_deref(), Some(Path::new("/data/dets")));
    }

    #[test]
    fn unknown_gaze_video_is_integrity_error() {
        let err = DatasetManifest::from_json_str(&manifest_json("v99"), Path::new("/d")).unwrap_err();
        assert!(matches!(err, ManifestError::Integrity(ref m) if m.contains("v99")), "{err}");
    }

    #[test]
    fn out_of_scale_rating_rejected_not_clamped() {
        let json = manifest_json("v1").replace("[2, -1]", "[3, -1]");
        let err = DatasetManifest::from_json_str(&json, Path::new("/d")).unwrap_err();
        match err {
            ManifestError::Invalid { field, .. } => assert_eq!(field, "ratings.valence[0][0]"),
            other => panic!("unexpected {other}"),
        }
        let json = manifest_json("v1").replace("[0, 4]", "[0, 5]");
        assert!(DatasetManifest::from_json_str(&json, Path::new("/d")).is_err());
    }

    #[test]
    fn schema_violation_names_field() {
        let json = manifest_json("v1").replace("\"duration_s\": 60.0,", "");
        let err = DatasetManifest::from_json_str(&json, Path::new("/d")).unwrap_err();
        assert!(err.to_string().contains("duration_s"), "{err}");
        let json = manifest_json("v1").replace("\"duration_s\": 60.0", "\"duration_s\": -1.0");
        let err = DatasetManifest::from_json_str(&json, Path::new("/d")).unwrap_err();
        assert!(err.to_string().contains("videos[0].duration_s"), "{err}");
    }

    #[test]
    fn manifest_round_trips() {
        let m = DatasetManifest::from_json_str(&manifest_json("v1"), Path::new("/data")).unwrap();
        let again = DatasetManifest::from_json_str(&m.to_json_string(), Path::new("/elsewhere")).unwrap();
        assert_eq!(m, again);
    }

    fn loop_count(duration: f64) -> u32 {
        let mut n = 0u32;
        while 3.0 * f64::from(n) < duration {
            n += 1;
        }
        n
    }

    #[test]
    fn frame_count_examples() {
        assert_eq!(sampled_frame_count(60.0), 20);
        assert_eq!(sampled_frame_count(3.0), 1);
        assert_eq!(sampled_frame_count(48.16), 17);
        let v = VideoRecord {
            id: "v".into(),
            duration_s: 60.0,
            frame_width: 4,
            frame_height: 4,
            frame_dir: PathBuf::new(),
            expert_valence: Level::High,
            expert_arousal: Level::Low,
        };
        let sched = v.frame_schedule();
        assert_eq!(sched.first(), Some(&(0, 0.0)));
        assert_eq!(sched.last(), Some(&(19, 57.0)));
    }

    #[test]
    fn frame_count_matches_loop_on_random_durations() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let d: f64 = if rng.random_bool(0.1) {
                3.0 * f64::from(rng.random_range(1u32..50))
            } else {
                rng.random_range(0.01..200.0)
            };
            assert_eq!(sampled_frame_count(d), loop_count(d), "duration {d}");
        }
    }

    #[test]
    fn full_scale_manifest_indexes_1793_frames() {
        let mut m = DatasetManifest::default();
        for i in 0..100 {
            let duration_s = if i < 93 { 54.0 } else { 51.0 };
            m.videos.push(VideoRecord {
                id: format!("ad{i:03}"),
                duration_s,
                frame_width: 1366,
                frame_height: 768,
                frame_dir: PathBuf::from("x"),
                expert_valence: Level::High,
                expert_arousal: Level::High,
            });
        }
        m.validate().unwrap();
        assert_eq!(m.total_frames(), 1793);
    }

    #[test]
    fn parses_timestamps_from_names() {
        assert_eq!(parse_frame_timestamp_ms(Path::new("a/000012000.png")), Some(12000));
        assert_eq!(parse_frame_timestamp_ms(Path::new("frame_3000.png")), Some(3000));
        assert_eq!(parse_frame_timestamp_ms(Path::new("cover.png")), None);
    }

    #[test]
    fn sample_frames_picks_frame_on_screen() {
        let dir = tempfile::tempdir().unwrap();
        for ms in [0u64, 1000, 2900, 3100, 6000] {
            let img = RgbImage::from_pixel(2, 2, image::Rgb([(ms / 100) as u8, 0, 0]));
            img.save(dir.path().join(format!("{ms:09}.png"))).unwrap();
        }
        let v = VideoRecord {
            id: "v".into(),
            duration_s: 7.0,
            frame_width: 2,
            frame_height: 2,
            frame_dir: dir.path().to_path_buf(),
            expert_valence: Level::High,
            expert_arousal: Level::Low,
        };
        let frames = sample_frames(&v).unwrap();
        assert_eq!(frames.len(), 3);
        let reds: Vec<u8> = frames.iter().map(|f| f.pixels.get_pixel(0, 0)[0]).collect();
        assert_eq!(reds, vec![0, 29, 60]);
        assert_eq!(frames[2].timestamp_s, 6.0);
    }

    #[test]
    fn empty_frame_dir_is_missing_data() {
        let dir = tempfile::tempdir().unwrap();
        let v = VideoRecord {
            id: "v".into(),
            duration_s: 7.0,
            frame_width: 2,
            frame_height: 2,
            frame_dir: dir.path().to_path_buf(),
            expert_valence: Level::High,
            expert_arousal: Level::Low,
        };
        assert!(matches!(sample_frames(&v), Err(ManifestError::MissingData { .. })));
    }

    #[test]
    fn gaze_csv_skips_and_rejects() {
        let dir = tempfile::tempdir().unwrap();
        let ok = dir.path().join("ok.csv");
        let mut text = String::from("t_ms,x_px,y_px\n");
        for i in 0..20 {
            text.push_str(&format!("{},{},{}\n", i * 16, 100, 200));
        }
        text.push_str("bad,1,2\n");
        fs::write(&ok, &text).unwrap();
        let g = read_gaze_csv(&ok).unwrap();
        assert_eq!((g.samples.len(), g.malformed, g.total), (20, 1, 21));

        let bad = dir.path().join("bad.csv");
        text.push_str("x,y,z\n1,2\nnan,1,1\n");
        fs::write(&bad, &text).unwrap();
        assert!(matches!(read_gaze_csv(&bad), Err(ManifestError::GazeRejected { .. })));
    }

    #[test]
    fn channel_names_parse() {
        for c in ChannelKind::ALL {
            assert_eq!(c.slug().parse::<ChannelKind>().unwrap(), c);
        }
        assert_eq!("Eye-ROI".parse::<ChannelKind>().unwrap(), ChannelKind::EyeRoi);
    }

    proptest! {
        #[test]
        fn rating_grid_round_trips(vals in proptest::collection::vec(proptest::option::of(-2i8..=2), 6)) {
            let m = RatingMatrix {
                raters: vec!["a".into(), "b".into()],
                items: vec!["x".into(), "y".into(), "z".into()],
                valence: vals.chunks(3).map(|c| c.to_vec()).collect(),
                arousal: vec![vec![Some(0); 3]; 2],
            };
            m.validate().unwrap();
            let back: RatingMatrix = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
