//! Per-frame glue between the stages: channel synthesis, heatmaps and embeddings.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::channels::{
    adaptive_blur_with, constant_blur_with, eye_roi_context_blur_with, eye_roi_with, object_crops, object_retained,
    video_channel, BlurParams, ChannelError, ChannelImage, DEFAULT_MAX_BLUR_ITERATIONS, DEFAULT_WARM_THRESHOLD,
};
use crate::detector::{DetectorHandle, FrameKey};
use crate::features::{
    assemble_design_matrix, thumbnail, DesignMatrix, FeatureError, FeatureTable, GistConfig, GistExtractor, RowKey,
    ThumbnailConfig, Window,
};
use crate::gaze::{
    build_heatmap_with, gaze_histogram_features, map_to_frame, restrict_to_display, segment, FixationParams,
    GazeHistParams, Heatmap, HeatmapParams, RaterEvents,
};
use crate::model::{AffectDimension, AffectTask, ChannelKind, DatasetManifest, FrameSample, GazeTrace, ScreenDims};

/// Settings for synthesising image channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub blur: BlurParams,
    pub max_blur_iterations: u32,
    pub warm_threshold: f64,
    /// Accept the last blurred image when adaptive blur does not converge.
    pub adaptive_fallback: bool,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            blur: BlurParams::default(),
            max_blur_iterations: DEFAULT_MAX_BLUR_ITERATIONS,
            warm_threshold: DEFAULT_WARM_THRESHOLD,
            adaptive_fallback: true,
        }
    }
}

/// What a channel image is turned into before classification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Embedding {
    Thumbnail(ThumbnailConfig),
    Gist(GistConfig),
}

impl Default for Embedding {
    fn default() -> Self {
        Embedding::Thumbnail(ThumbnailConfig::default())
    }
}

pub enum Embedder {
    Thumbnail(ThumbnailConfig),
    Gist(Box<GistExtractor>),
}

impl Embedder {
    pub fn new(e: Embedding) -> Self {
        match e {
            Embedding::Thumbnail(c) => Embedder::Thumbnail(c),
            Embedding::Gist(c) => Embedder::Gist(Box::new(GistExtractor::new(c))),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Embedder::Thumbnail(c) => c.dim(),
            Embedder::Gist(g) => g.config().dim(),
        }
    }

    pub fn embed(&self, img: &image::RgbImage) -> Vec<f64> {
        match self {
            Embedder::Thumbnail(c) => thumbnail(img, c),
            Embedder::Gist(g) => g.describe(img),
        }
    }
}

/// Heatmap of all traces around a frame, registered to frame pixels.
pub fn frame_heatmap(traces: &[GazeTrace], screen: ScreenDims, frame: &FrameSample, params: &HeatmapParams) -> Heatmap {
    let visible: Vec<GazeTrace> = traces
        .iter()
        .map(|t| restrict_to_display(t, frame.width(), frame.height()))
        .collect();
    let heat = build_heatmap_with(&visible, screen, frame.timestamp_s, params);
    map_to_frame(&heat, screen, frame.width(), frame.height())
}

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("{0} is not an image channel")]
    NotImage(ChannelKind),
    #[error("{0} needs object detections")]
    NoDetector(ChannelKind),
    #[error("{0} needs a gaze heatmap")]
    NoHeatmap(ChannelKind),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// Inputs available for one frame.
#[derive(Clone, Copy)]
pub struct FrameInputs<'a> {
    pub frame: &'a FrameSample,
    pub detector: Option<&'a DetectorHandle>,
    pub heat: Option<&'a Heatmap>,
}

/// Synthesises one image channel for one frame. Object crops may return several images
/// (or none).
pub fn synthesize(channel: ChannelKind, inputs: FrameInputs<'_>, params: &SynthParams) -> Result<Vec<ChannelImage>, SynthError> {
    let frame = inputs.frame;
    let dets = || -> Result<Vec<_>, SynthError> {
        let d = inputs.detector.ok_or(SynthError::NoDetector(channel))?;
        Ok(d.detect(&FrameKey::new(frame.video_id.clone(), frame.index, 0))
            .map_err(ChannelError::from)?)
    };
    let heat = || inputs.heat.ok_or(SynthError::NoHeatmap(channel));
    Ok(match channel {
        ChannelKind::Video => vec![video_channel(frame)],
        ChannelKind::ConstantBlur => vec![constant_blur_with(frame, &params.blur)],
        ChannelKind::AdaptiveBlur => {
            let d = inputs.detector.ok_or(SynthError::NoDetector(channel))?;
            match adaptive_blur_with(frame, d, params.max_blur_iterations, &params.blur) {
                Ok(img) => vec![img],
                Err(ChannelError::NonConvergence { max_iter, fallback }) if params.adaptive_fallback => {
                    log::warn!(
                        "video {} frame {}: objects persist after {max_iter} blurs, keeping the last image",
                        frame.video_id,
                        frame.index
                    );
                    vec![*fallback]
                }
                Err(e) => return Err(e.into()),
            }
        }
        ChannelKind::ObjectCrops => object_crops(frame, &dets()?).crops,
        ChannelKind::ObjectRetained => vec![object_retained(frame, &dets()?)],
        ChannelKind::EyeRoi => vec![eye_roi_with(frame, heat()?, params.warm_threshold)?],
        ChannelKind::EyeRoiContextBlur => {
            vec![eye_roi_context_blur_with(frame, heat()?, params.warm_threshold, &params.blur)?]
        }
        ChannelKind::Fc8 | ChannelKind::Gist | ChannelKind::EyeHist => return Err(SynthError::NotImage(channel)),
    })
}

/// Row key of a channel image.
pub fn row_key(img: &ChannelImage) -> RowKey {
    match img.meta.crop_index {
        Some(c) => RowKey::crop(img.video_id.clone(), img.frame_index, c),
        None => RowKey::frame(img.video_id.clone(), img.frame_index),
    }
}

/// One EyeHist row per video from per-rater traces.
pub fn eye_hist_table(
    traces_by_video: &BTreeMap<String, Vec<GazeTrace>>,
    roster: &[String],
    screen: ScreenDims,
    fixation: &FixationParams,
    hist: &GazeHistParams,
) -> Result<FeatureTable, FeatureError> {
    let mut table = FeatureTable::new(ChannelKind::EyeHist, hist.rater_dim(screen) * roster.len());
    for (video, traces) in traces_by_video {
        let events: BTreeMap<String, RaterEvents> = traces
            .iter()
            .map(|t| (t.rater_id.clone(), segment(t, fixation)))
            .collect();
        let f = gaze_histogram_features(&events, screen, roster, hist);
        table.insert(RowKey::video(video.clone()), f.values)?;
    }
    Ok(table)
}

/// Design matrices of `tables` for both dimensions and every window in `windows`.
/// Empty combinations map to `None`.
pub fn design_set(
    manifest: &DatasetManifest,
    tables: &[FeatureTable],
    windows: &[Window],
) -> BTreeMap<crate::eval::DesignKey, Option<DesignMatrix>> {
    let mut set = BTreeMap::new();
    for table in tables {
        let windows: Vec<Window> = if table.channel.scope() == crate::FeatureScope::Video {
            vec![Window::All]
        } else {
            windows.to_vec()
        };
        for dim in AffectDimension::ALL {
            for &window in &windows {
                let key = crate::eval::DesignKey {
                    channel: table.channel,
                    dimension: dim,
                    window,
                };
                let d = match assemble_design_matrix(manifest, table, window, AffectTask::new(dim)) {
                    Ok(d) => Some(d),
                    Err(e) => {
                        log::warn!("{}: {e}", table.channel);
                        None
                    }
                };
                set.insert(key, d);
            }
        }
    }
    set
}
