//! Content-driven channel synthesis: blur channels, object channels and gaze-masked channels.
//!
//! All operators are pure functions of their inputs.

mod blur;

pub use blur::{
    blur_plane, constant_blur_sigma, gaussian_blur, BlurKernel, BlurMode, CONSTANT_BLUR_SIGMA_FRACTION,
};

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::{Detection, DetectorError, DetectorHandle, FrameKey, PixelRect};
use crate::gaze::Heatmap;
use crate::model::{ChannelKind, FrameSample};

/// Cap on adaptive-blur iterations.
pub const DEFAULT_MAX_BLUR_ITERATIONS: u32 = 10;
/// Heat level (0–255 scale) at and above which a pixel counts as attended.
pub const DEFAULT_WARM_THRESHOLD: f64 = 170.0;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error("objects still detected after {max_iter} blur iterations")]
    NonConvergence {
        max_iter: u32,
        /// The image after `max_iter` blurs, for callers that fall back to it.
        fallback: Box<ChannelImage>,
    },
    #[error("heatmap is {heat_w}x{heat_h} but frame is {frame_w}x{frame_h}")]
    DimensionMismatch {
        heat_w: usize,
        heat_h: usize,
        frame_w: u32,
        frame_h: u32,
    },
}

/// Channel-specific metadata written next to each image.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChannelMeta {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blur_sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blur_iterations: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub crop_index: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detection: Option<Detection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub crop_rect: Option<PixelRect>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warm_threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub retained_pixels: Option<u64>,
}

/// A synthesised channel image linked to its source frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelImage {
    pub video_id: String,
    pub frame_index: u32,
    pub channel: ChannelKind,
    pub pixels: RgbImage,
    pub meta: ChannelMeta,
}

impl ChannelImage {
    fn from_frame(frame: &FrameSample, channel: ChannelKind, pixels: RgbImage, meta: ChannelMeta) -> Self {
        Self {
            video_id: frame.video_id.clone(),
            frame_index: frame.index,
            channel,
            pixels,
            meta,
        }
    }
}

/// Parameters shared by the blur-based channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlurParams {
    pub sigma_fraction: f64,
    pub mode: BlurMode,
}

impl Default for BlurParams {
    fn default() -> Self {
        Self {
            sigma_fraction: CONSTANT_BLUR_SIGMA_FRACTION,
            mode: BlurMode::Auto,
        }
    }
}

impl BlurParams {
    pub fn exact() -> Self {
        Self {
            mode: BlurMode::Exact,
            ..Self::default()
        }
    }

    fn sigma(&self, width: u32) -> f64 {
        self.sigma_fraction * f64::from(width)
    }

    fn apply(&self, img: &RgbImage) -> RgbImage {
        gaussian_blur(img, self.sigma(img.width()), self.mode)
    }
}

/// The raw frame as a channel image.
pub fn video_channel(frame: &FrameSample) -> ChannelImage {
    ChannelImage::from_frame(frame, ChannelKind::Video, frame.pixels.clone(), ChannelMeta::default())
}

/// Gaussian blur with σ = 0.2 × frame width.
pub fn constant_blur(frame: &FrameSample) -> ChannelImage {
    constant_blur_with(frame, &BlurParams::default())
}

pub fn constant_blur_with(frame: &FrameSample, params: &BlurParams) -> ChannelImage {
    let meta = ChannelMeta {
        blur_sigma: Some(params.sigma(frame.width())),
        blur_iterations: Some(1),
        ..ChannelMeta::default()
    };
    ChannelImage::from_frame(frame, ChannelKind::ConstantBlur, params.apply(&frame.pixels), meta)
}

/// Re-applies the constant blur until the detector reports nothing.
///
/// The detector is consulted after every blur (level `k` = number of blurs applied),
/// so the result always has at least one blur. Fails with
/// [`ChannelError::NonConvergence`] if detections persist at `max_iter`.
pub fn adaptive_blur(frame: &FrameSample, detector: &DetectorHandle, max_iter: u32) -> Result<ChannelImage, ChannelError> {
    adaptive_blur_with(frame, detector, max_iter, &BlurParams::default())
}

pub fn adaptive_blur_with(
    frame: &FrameSample,
    detector: &DetectorHandle,
    max_iter: u32,
    params: &BlurParams,
) -> Result<ChannelImage, ChannelError> {
    let max_iter = max_iter.max(1);
    let mut pixels = params.apply(&frame.pixels);
    let mut level = 1u32;
    loop {
        let dets = detector.detect(&FrameKey::new(frame.video_id.clone(), frame.index, level))?;
        let meta = ChannelMeta {
            blur_sigma: Some(params.sigma(frame.width())),
            blur_iterations: Some(level),
            ..ChannelMeta::default()
        };
        if dets.is_empty() {
            return Ok(ChannelImage::from_frame(frame, ChannelKind::AdaptiveBlur, pixels, meta));
        }
        if level >= max_iter {
            return Err(ChannelError::NonConvergence {
                max_iter,
                fallback: Box::new(ChannelImage::from_frame(frame, ChannelKind::AdaptiveBlur, pixels, meta)),
            });
        }
        pixels = params.apply(&pixels);
        level += 1;
    }
}

/// Crops produced for one frame, plus detections dropped for degenerate boxes.
#[derive(Debug, Clone, Default)]
pub struct CropSet {
    pub crops: Vec<ChannelImage>,
    pub skipped: Vec<(usize, Detection)>,
}

/// One image per detection, copied from the box clamped to the frame.
pub fn object_crops(frame: &FrameSample, dets: &[Detection]) -> CropSet {
    let mut set = CropSet::default();
    for (i, det) in dets.iter().enumerate() {
        let Some(rect) = det.bbox.clamp_to(frame.width(), frame.height()) else {
            log::warn!(
                "video {} frame {}: skipping degenerate crop {i} ({:?})",
                frame.video_id,
                frame.index,
                det.bbox
            );
            set.skipped.push((i, *det));
            continue;
        };
        let pixels = image::imageops::crop_imm(&frame.pixels, rect.x0, rect.y0, rect.width(), rect.height()).to_image();
        let meta = ChannelMeta {
            crop_index: Some(i as u32),
            detection: Some(*det),
            crop_rect: Some(rect),
            ..ChannelMeta::default()
        };
        set.crops.push(ChannelImage::from_frame(frame, ChannelKind::ObjectCrops, pixels, meta));
    }
    set
}

/// Union of the clamped detection boxes as a per-pixel mask.
pub fn detection_mask(width: u32, height: u32, dets: &[Detection]) -> Vec<bool> {
    let mut mask = vec![false; (width * height) as usize];
    for rect in dets.iter().filter_map(|d| d.bbox.clamp_to(width, height)) {
        for y in rect.y0..rect.y1 {
            let row = (y * width) as usize;
            mask[row + rect.x0 as usize..row + rect.x1 as usize].fill(true);
        }
    }
    mask
}

fn apply_mask(src: &RgbImage, mask: &[bool], background: impl Fn(u32, u32) -> Rgb<u8>) -> (RgbImage, u64) {
    let width = src.width();
    let mut kept = 0u64;
    let out = RgbImage::from_fn(src.width(), src.height(), |x, y| {
        if mask[(y * width + x) as usize] {
            kept += 1;
            *src.get_pixel(x, y)
        } else {
            background(x, y)
        }
    });
    (out, kept)
}

/// Blackens everything outside the union of detection boxes.
pub fn object_retained(frame: &FrameSample, dets: &[Detection]) -> ChannelImage {
    let mask = detection_mask(frame.width(), frame.height(), dets);
    let (pixels, kept) = apply_mask(&frame.pixels, &mask, |_, _| Rgb([0, 0, 0]));
    let meta = ChannelMeta {
        retained_pixels: Some(kept),
        ..ChannelMeta::default()
    };
    ChannelImage::from_frame(frame, ChannelKind::ObjectRetained, pixels, meta)
}

fn check_dims(frame: &FrameSample, heat: &Heatmap) -> Result<(), ChannelError> {
    if heat.width() != frame.width() as usize || heat.height() != frame.height() as usize {
        return Err(ChannelError::DimensionMismatch {
            heat_w: heat.width(),
            heat_h: heat.height(),
            frame_w: frame.width(),
            frame_h: frame.height(),
        });
    }
    Ok(())
}

/// Keeps pixels whose heat is at least the warm threshold; blackens the rest.
pub fn eye_roi(frame: &FrameSample, heat: &Heatmap) -> Result<ChannelImage, ChannelError> {
    eye_roi_with(frame, heat, DEFAULT_WARM_THRESHOLD)
}

pub fn eye_roi_with(frame: &FrameSample, heat: &Heatmap, warm_threshold: f64) -> Result<ChannelImage, ChannelError> {
    check_dims(frame, heat)?;
    let mask = heat.mask(warm_threshold);
    let (pixels, kept) = apply_mask(&frame.pixels, &mask, |_, _| Rgb([0, 0, 0]));
    let meta = ChannelMeta {
        warm_threshold: Some(warm_threshold),
        retained_pixels: Some(kept),
        ..ChannelMeta::default()
    };
    Ok(ChannelImage::from_frame(frame, ChannelKind::EyeRoi, pixels, meta))
}

/// Constant-blur context with the attended region pasted back at full resolution.
///
/// The paste uses the heat mask, not pixel values, so black pixels inside the
/// attended region are kept.
pub fn eye_roi_context_blur(frame: &FrameSample, heat: &Heatmap) -> Result<ChannelImage, ChannelError> {
    eye_roi_context_blur_with(frame, heat, DEFAULT_WARM_THRESHOLD, &BlurParams::default())
}

pub fn eye_roi_context_blur_with(
    frame: &FrameSample,
    heat: &Heatmap,
    warm_threshold: f64,
    params: &BlurParams,
) -> Result<ChannelImage, ChannelError> {
    check_dims(frame, heat)?;
    let context = constant_blur_with(frame, params);
    let roi = eye_roi_with(frame, heat, warm_threshold)?;
    let mask = heat.mask(warm_threshold);
    let (pixels, kept) = apply_mask(&roi.pixels, &mask, |x, y| *context.pixels.get_pixel(x, y));
    let meta = ChannelMeta {
        blur_sigma: context.meta.blur_sigma,
        warm_threshold: Some(warm_threshold),
        retained_pixels: Some(kept),
        ..ChannelMeta::default()
    };
    Ok(ChannelImage::from_frame(frame, ChannelKind::EyeRoiContextBlur, pixels, meta))
}
