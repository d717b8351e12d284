//! On-disk feature files: a JSON header line followed by little-endian f32 rows, plus an index file.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::FeatureError;
use crate::model::{ChannelKind, DatasetManifest, FeatureScope};

pub const FC7_DIM: usize = 4096;
pub const FC8_DIM: usize = 1000;
/// Allowed deviation of a softmax row sum from one.
pub const FC8_SUM_TOLERANCE: f64 = 1e-3;

/// Identifies one feature row: a frame, a crop within a frame, or (frame 0) a whole video.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RowKey {
    pub video_id: String,
    pub frame_index: u32,
    pub crop_index: Option<u32>,
}

impl RowKey {
    pub fn frame(video_id: impl Into<String>, frame_index: u32) -> Self {
        Self {
            video_id: video_id.into(),
            frame_index,
            crop_index: None,
        }
    }

    pub fn crop(video_id: impl Into<String>, frame_index: u32, crop_index: u32) -> Self {
        Self {
            video_id: video_id.into(),
            frame_index,
            crop_index: Some(crop_index),
        }
    }

    pub fn video(video_id: impl Into<String>) -> Self {
        Self::frame(video_id, 0)
    }
}

/// Feature rows of one channel, keyed and ordered by [`RowKey`].
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub channel: ChannelKind,
    pub dim: usize,
    rows: BTreeMap<RowKey, Vec<f64>>,
}

impl FeatureTable {
    pub fn new(channel: ChannelKind, dim: usize) -> Self {
        Self {
            channel,
            dim,
            rows: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, key: RowKey, values: Vec<f64>) -> Result<(), FeatureError> {
        if values.len() != self.dim {
            return Err(FeatureError::DimMismatch {
                source_name: format!("{} row {key:?}", self.channel),
                expected: self.dim,
                found: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(FeatureError::Validation {
                source_name: self.channel.to_string(),
                row: format!("{key:?}"),
                reason: format!("non-finite value at column {i}"),
            });
        }
        self.rows.insert(key, values);
        Ok(())
    }

    pub fn get(&self, key: &RowKey) -> Option<&[f64]> {
        self.rows.get(key).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&RowKey, &[f64])> {
        self.rows.iter().map(|(k, v)| (k, v.as_slice()))
    }

    /// Rows of one video, in key order.
    pub fn video_rows<'a>(&'a self, video_id: &'a str) -> impl Iterator<Item = (&'a RowKey, &'a [f64])> + 'a {
        let start = RowKey {
            video_id: video_id.to_string(),
            frame_index: 0,
            crop_index: None,
        };
        self.rows
            .range(start..)
            .take_while(move |(k, _)| k.video_id == video_id)
            .map(|(k, v)| (k, v.as_slice()))
    }

    pub fn extend(&mut self, other: FeatureTable) -> Result<(), FeatureError> {
        for (k, v) in other.rows {
            self.insert(k, v)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidecarHeader {
    pub channel: ChannelKind,
    pub video_id: String,
    pub dim: usize,
    pub n_rows: usize,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FeatureError + '_ {
    move |source| FeatureError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn format_err(path: &Path, reason: impl Into<String>) -> FeatureError {
    FeatureError::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// `<dir>/<channel>/<video>.bin` and `.idx`.
pub fn sidecar_paths(dir: &Path, channel: ChannelKind, video_id: &str) -> (PathBuf, PathBuf) {
    let base = dir.join(channel.slug());
    (base.join(format!("{video_id}.bin")), base.join(format!("{video_id}.idx")))
}

fn key_line(k: &RowKey) -> String {
    match k.crop_index {
        Some(c) => format!("{},{c}", k.frame_index),
        None => k.frame_index.to_string(),
    }
}

/// Writes one video's rows of `table` as a binary sidecar; returns the `.bin` path.
pub fn write_binary(dir: &Path, table: &FeatureTable, video_id: &str) -> Result<PathBuf, FeatureError> {
    let rows: Vec<_> = table.video_rows(video_id).collect();
    let (bin, idx) = sidecar_paths(dir, table.channel, video_id);
    let parent = bin.parent().expect("sidecar path has a parent");
    fs::create_dir_all(parent).map_err(io_err(parent))?;
    let header = SidecarHeader {
        channel: table.channel,
        video_id: video_id.to_string(),
        dim: table.dim,
        n_rows: rows.len(),
    };
    let mut buf = serde_json::to_vec(&header).expect("header serialises");
    buf.push(b'\n');
    let mut index = String::new();
    for (k, v) in &rows {
        for &x in *v {
            buf.extend_from_slice(&(x as f32).to_le_bytes());
        }
        index.push_str(&key_line(k));
        index.push('\n');
    }
    fs::write(&bin, buf).map_err(io_err(&bin))?;
    fs::write(&idx, index).map_err(io_err(&idx))?;
    Ok(bin)
}

fn parse_key(video_id: &str, s: &str) -> Option<RowKey> {
    let mut it = s.split(',').map(str::trim);
    let frame = it.next()?.parse().ok()?;
    let crop = match it.next() {
        Some(c) => Some(c.parse().ok()?),
        None => None,
    };
    if it.next().is_some() {
        return None;
    }
    Some(RowKey {
        video_id: video_id.to_string(),
        frame_index: frame,
        crop_index: crop,
    })
}

/// Reads a binary sidecar and its index file.
pub fn read_binary(bin: &Path) -> Result<(SidecarHeader, Vec<(RowKey, Vec<f64>)>), FeatureError> {
    let bytes = fs::read(bin).map_err(io_err(bin))?;
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| format_err(bin, "missing header line"))?;
    let header: SidecarHeader =
        serde_json::from_slice(&bytes[..nl]).map_err(|e| format_err(bin, format!("bad header: {e}")))?;
    if header.dim == 0 {
        return Err(format_err(bin, "dimension must be positive"));
    }
    let body = &bytes[nl + 1..];
    let expected = header.dim * header.n_rows * 4;
    if body.len() != expected {
        return Err(FeatureError::DimMismatch {
            source_name: bin.display().to_string(),
            expected,
            found: body.len(),
        });
    }
    let idx = bin.with_extension("idx");
    let text = fs::read_to_string(&idx).map_err(io_err(&idx))?;
    let keys: Vec<RowKey> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| parse_key(&header.video_id, l).ok_or_else(|| format_err(&idx, format!("bad index line `{l}`"))))
        .collect::<Result<_, _>>()?;
    if keys.len() != header.n_rows {
        return Err(format_err(
            &idx,
            format!("{} index lines for {} rows", keys.len(), header.n_rows),
        ));
    }
    let rows = keys
        .into_iter()
        .zip(body.chunks_exact(header.dim * 4))
        .map(|(k, chunk)| {
            let v = chunk
                .chunks_exact(4)
                .map(|b| f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])))
                .collect();
            (k, v)
        })
        .collect();
    Ok((header, rows))
}

/// Reads a CSV sidecar: optional header `frame_index[,crop_index],...`; without a header
/// the first column is the frame index and the rest are values.
pub fn read_csv(path: &Path, video_id: &str) -> Result<Vec<(RowKey, Vec<f64>)>, FeatureError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut rows = Vec::new();
    let mut has_crop = false;
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if i == 0 && line.starts_with("frame_index") {
            has_crop = line.split(',').nth(1).map(str::trim) == Some("crop_index");
            continue;
        }
        let mut cols = line.split(',').map(str::trim);
        let bad = || format_err(path, format!("line {}: malformed row", i + 1));
        let frame_index = cols.next().and_then(|c| c.parse().ok()).ok_or_else(bad)?;
        let crop_index = if has_crop {
            Some(cols.next().and_then(|c| c.parse().ok()).ok_or_else(bad)?)
        } else {
            None
        };
        let values = cols.map(|c| c.parse::<f64>()).collect::<Result<Vec<_>, _>>().map_err(|_| bad())?;
        rows.push((
            RowKey {
                video_id: video_id.to_string(),
                frame_index,
                crop_index,
            },
            values,
        ));
    }
    Ok(rows)
}

/// Writes rows as a CSV sidecar with a header.
pub fn write_csv(path: &Path, rows: &[(RowKey, Vec<f64>)]) -> Result<(), FeatureError> {
    let has_crop = rows.iter().any(|(k, _)| k.crop_index.is_some());
    let dim = rows.first().map_or(0, |(_, v)| v.len());
    let mut out = String::from("frame_index");
    if has_crop {
        out.push_str(",crop_index");
    }
    for i in 0..dim {
        out.push_str(&format!(",v{i}"));
    }
    out.push('\n');
    for (k, v) in rows {
        out.push_str(&k.frame_index.to_string());
        if has_crop {
            out.push_str(&format!(",{}", k.crop_index.unwrap_or(0)));
        }
        for x in v {
            out.push_str(&format!(",{x}"));
        }
        out.push('\n');
    }
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(out.as_bytes()).map_err(io_err(path))
}

/// Checks one FC8 row is a probability vector.
pub fn validate_fc8_row(values: &[f64]) -> Result<(), String> {
    if let Some(i) = values.iter().position(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(format!("entry {i} = {} outside [0, 1]", values[i]));
    }
    let sum: f64 = values.iter().sum();
    if (sum - 1.0).abs() > FC8_SUM_TOLERANCE {
        return Err(format!("row sums to {sum}, expected 1"));
    }
    Ok(())
}

/// Rows that loaded plus the expected keys with no data.
#[derive(Debug, Clone)]
pub struct LoadedFeatures {
    pub table: FeatureTable,
    pub missing: Vec<RowKey>,
}

/// Dimension of ingested network features for a channel: FC8 is 1000, image channels 4096.
pub fn deep_feature_dim(channel: ChannelKind) -> Option<usize> {
    match channel {
        ChannelKind::Fc8 => Some(FC8_DIM),
        c if c.is_image_channel() => Some(FC7_DIM),
        _ => None,
    }
}

/// Loads precomputed network features for every manifest video.
pub fn load_deep_features(dir: &Path, channel: ChannelKind, manifest: &DatasetManifest) -> Result<LoadedFeatures, FeatureError> {
    load_features(dir, channel, manifest, deep_feature_dim(channel))
}

/// Loads `<dir>/<channel>/<video>.{bin,csv}` for every manifest video.
///
/// With `expected_dim = None` the dimension is taken from the first file and enforced
/// on the rest. Missing files and frames go to the missing-list; crop channels only
/// report a frame missing when the whole file is absent.
pub fn load_features(
    dir: &Path,
    channel: ChannelKind,
    manifest: &DatasetManifest,
    expected_dim: Option<usize>,
) -> Result<LoadedFeatures, FeatureError> {
    let mut dim = expected_dim;
    let mut table: Option<FeatureTable> = None;
    let mut missing = Vec::new();
    for video in &manifest.videos {
        let (bin, _) = sidecar_paths(dir, channel, &video.id);
        let csv = bin.with_extension("csv");
        let expected_keys: Vec<RowKey> = match channel.scope() {
            FeatureScope::Video => vec![RowKey::video(&video.id)],
            FeatureScope::Frame => (0..video.frame_count()).map(|i| RowKey::frame(&video.id, i)).collect(),
        };
        let (source, rows) = if bin.exists() {
            let (header, rows) = read_binary(&bin)?;
            if header.channel != channel || header.video_id != video.id {
                return Err(format_err(
                    &bin,
                    format!("header names {}/{}, expected {channel}/{}", header.channel, header.video_id, video.id),
                ));
            }
            (bin.clone(), rows)
        } else if csv.exists() {
            (csv.clone(), read_csv(&csv, &video.id)?)
        } else {
            missing.extend(expected_keys);
            continue;
        };
        for (i, (key, values)) in rows.into_iter().enumerate() {
            let d = *dim.get_or_insert(values.len());
            if values.len() != d {
                return Err(FeatureError::DimMismatch {
                    source_name: format!("{} row {i}", source.display()),
                    expected: d,
                    found: values.len(),
                });
            }
            if channel == ChannelKind::Fc8 {
                validate_fc8_row(&values).map_err(|reason| FeatureError::Validation {
                    source_name: source.display().to_string(),
                    row: i.to_string(),
                    reason,
                })?;
            }
            table.get_or_insert_with(|| FeatureTable::new(channel, d)).insert(key, values)?;
        }
        let t = table.as_ref();
        for key in expected_keys {
            let present = match (channel, t) {
                (_, None) => false,
                (ChannelKind::ObjectCrops, Some(_)) => true,
                (_, Some(t)) => t.get(&key).is_some(),
            };
            if !present {
                missing.push(key);
            }
        }
    }
    let table = table.unwrap_or_else(|| FeatureTable::new(channel, dim.unwrap_or(0)));
    if !missing.is_empty() {
        log::warn!("{channel}: {} expected feature rows missing", missing.len());
    }
    Ok(LoadedFeatures { table, missing })
}
