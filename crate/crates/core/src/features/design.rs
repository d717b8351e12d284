use serde::{Deserialize, Serialize};

use super::{FeatureError, FeatureTable, RowKey};
use crate::model::{AffectTask, DatasetManifest, FeatureScope};
use crate::FRAME_PERIOD_S;

/// Temporal window over each video's sampled frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    All,
    L30,
    L10,
}

impl Window {
    pub const ALL: [Window; 3] = [Window::All, Window::L30, Window::L10];

    pub fn as_str(self) -> &'static str {
        match self {
            Window::All => "all",
            Window::L30 => "l30",
            Window::L10 => "l10",
        }
    }

    /// Length of the trailing window in seconds; `None` for the whole video.
    pub fn seconds(self) -> Option<f64> {
        match self {
            Window::All => None,
            Window::L30 => Some(30.0),
            Window::L10 => Some(10.0),
        }
    }

    /// Whether a frame at `timestamp_s` lies in the window of a `duration_s` video.
    pub fn includes(self, timestamp_s: f64, duration_s: f64) -> bool {
        match self.seconds() {
            None => true,
            Some(w) => timestamp_s >= duration_s - w,
        }
    }
}

impl std::fmt::Display for Window {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Window {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "all" => Ok(Window::All),
            "l30" => Ok(Window::L30),
            "l10" => Ok(Window::L10),
            _ => Err(format!("unknown window `{s}`")),
        }
    }
}

/// Rows, binary labels (`true` = High) and the video each row came from.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<bool>,
    pub groups: Vec<String>,
    pub keys: Vec<RowKey>,
}

impl DesignMatrix {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    /// Distinct groups in first-appearance order.
    pub fn unique_groups(&self) -> Vec<&str> {
        let mut seen = std::collections::HashSet::new();
        self.groups
            .iter()
            .map(String::as_str)
            .filter(|g| seen.insert(*g))
            .collect()
    }

    pub fn select(&self, idx: &[usize]) -> DesignMatrix {
        DesignMatrix {
            x: idx.iter().map(|&i| self.x[i].clone()).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            groups: idx.iter().map(|&i| self.groups[i].clone()).collect(),
            keys: idx.iter().map(|&i| self.keys[i].clone()).collect(),
        }
    }
}

/// Builds the design matrix of one channel for one task and window.
///
/// Frame-level rows are kept when their frame timestamp falls in the window; crop rows
/// follow their parent frame. Video-level channels give one row per video and ignore
/// the window.
pub fn assemble_design_matrix(
    manifest: &DatasetManifest,
    table: &FeatureTable,
    window: Window,
    task: AffectTask,
) -> Result<DesignMatrix, FeatureError> {
    let video_scope = table.channel.scope() == FeatureScope::Video;
    if video_scope && window != Window::All {
        log::warn!("{}: video-level features ignore the {window} window", table.channel);
    }
    let mut d = DesignMatrix {
        x: Vec::new(),
        y: Vec::new(),
        groups: Vec::new(),
        keys: Vec::new(),
    };
    for video in &manifest.videos {
        let label = task.label_of(video).is_high();
        for (key, values) in table.video_rows(&video.id) {
            let keep = video_scope || {
                let t = FRAME_PERIOD_S * f64::from(key.frame_index);
                t < video.duration_s && window.includes(t, video.duration_s)
            };
            if keep {
                d.x.push(values.to_vec());
                d.y.push(label);
                d.groups.push(video.id.clone());
                d.keys.push(key.clone());
            }
        }
    }
    if d.is_empty() {
        return Err(FeatureError::EmptyDesign {
            channel: table.channel,
            window,
        });
    }
    Ok(d)
}
