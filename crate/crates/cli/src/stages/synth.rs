use std::collections::BTreeMap;
use std::path::PathBuf;

use affectlens_core::channels::ChannelMeta;
use affectlens_core::detector::DetectorHandle;
use affectlens_core::model::sample_frames;
use affectlens_core::pipeline::{synthesize, FrameInputs};
use affectlens_core::{ChannelKind, VideoRecord};
use rayon::prelude::*;
use serde::Serialize;

use super::{Ctx, Stage, StageReport};
use crate::cache::KeyBuilder;
use crate::fsutil::{frame_file, png_bytes, write_atomic, Staging};

#[derive(Serialize)]
struct ImageRecord {
    video: String,
    frame: u32,
    file: String,
    meta: ChannelMeta,
}

/// Frames seen and images written for one video, or why it failed.
type VideoResult = Result<(usize, Vec<ImageRecord>), String>;

#[derive(Serialize)]
struct Summary<'a> {
    channel: ChannelKind,
    videos: usize,
    frames: usize,
    images: usize,
    /// Adaptive blur only: how many frames needed each number of blur passes.
    blur_iterations: BTreeMap<u32, usize>,
    skipped: &'a [String],
    records: Vec<ImageRecord>,
}

/// Content-driven image channels that need only frames and, for some, detections.
pub(super) fn run(ctx: &Ctx) -> anyhow::Result<StageReport> {
    let mut report = StageReport::new(Stage::Synth);
    let channels: Vec<ChannelKind> = ctx
        .cfg
        .channels
        .iter()
        .copied()
        .filter(|c| c.is_image_channel() && !c.needs_gaze())
        .collect();
    if channels.is_empty() {
        return Ok(report);
    }
    let detector: Result<DetectorHandle, String> = if channels.iter().any(|c| c.needs_detections()) {
        match &ctx.manifest().sidecars.detections {
            Some(dir) => DetectorHandle::from_dir(dir).map_err(|e| format!("detections {}: {e}", dir.display())),
            None => Err("the manifest names no detection sidecars".to_string()),
        }
    } else {
        Err("not needed".to_string())
    };
    let frames = ctx.frames_digest()?;
    for channel in channels {
        if channel.needs_detections() {
            if let Err(e) = &detector {
                report.skip(format!("channel {}: {e}", channel.slug()));
                continue;
            }
        }
        let stage = format!("synth-{}", channel.slug());
        let mut key = KeyBuilder::new(&stage).json(&channel).json(&ctx.cfg.synth).json(&frames);
        if channel.needs_detections() {
            if let Some(dir) = &ctx.manifest().sidecars.detections {
                key = key.tree(dir)?;
            }
        }
        let key = key.finish();
        if ctx.cache.is_fresh(&stage, &key) {
            log::info!("synth {}: up to date", channel.slug());
            report.cached += 1;
            continue;
        }
        let rel = PathBuf::from(channel.slug());
        let staging = Staging::new(ctx.out(), &stage)?;
        let det = detector.as_ref().ok().filter(|_| channel.needs_detections());
        let results: Vec<(String, VideoResult)> = ctx.pool.install(|| {
            ctx.manifest()
                .videos
                .par_iter()
                .map(|v| (v.id.clone(), synth_video(ctx, channel, v, det, &staging, &rel)))
                .collect()
        });
        let mut summary = Summary {
            channel,
            videos: 0,
            frames: 0,
            images: 0,
            blur_iterations: BTreeMap::new(),
            skipped: &[],
            records: Vec::new(),
        };
        let mut skipped = Vec::new();
        for (video, res) in results {
            match res {
                Ok((n_frames, records)) => {
                    summary.videos += 1;
                    summary.frames += n_frames;
                    summary.images += records.len();
                    if channel == ChannelKind::AdaptiveBlur {
                        for r in &records {
                            *summary.blur_iterations.entry(r.meta.blur_iterations.unwrap_or(0)).or_default() += 1;
                        }
                    }
                    summary.records.extend(records);
                }
                Err(e) => skipped.push(format!("channel {} video {video}: {e}", channel.slug())),
            }
        }
        summary.skipped = &skipped;
        log::info!(
            "synth {}: {} images from {} frames of {} videos",
            channel.slug(),
            summary.images,
            summary.frames,
            summary.videos
        );
        let json = serde_json::to_string_pretty(&summary)?;
        write_atomic(&staging.path(rel.join("summary.json")), json.as_bytes())?;
        staging.commit(std::slice::from_ref(&rel))?;
        if skipped.is_empty() {
            ctx.cache.store(&stage, key, &[rel])?;
        } else {
            ctx.cache.invalidate(&stage);
        }
        for s in skipped {
            report.skip(s);
        }
        report.computed += 1;
    }
    Ok(report)
}

fn synth_video(
    ctx: &Ctx,
    channel: ChannelKind,
    video: &VideoRecord,
    detector: Option<&DetectorHandle>,
    staging: &Staging,
    rel: &std::path::Path,
) -> VideoResult {
    let frames = sample_frames(video).map_err(|e| e.to_string())?;
    let per_frame: Vec<Vec<ImageRecord>> = frames
        .par_iter()
        .map(|frame| {
            let inputs = FrameInputs {
                frame,
                detector,
                heat: None,
            };
            let images =
                synthesize(channel, inputs, &ctx.cfg.synth).map_err(|e| format!("frame {}: {e}", frame.index))?;
            images
                .into_iter()
                .map(|img| {
                    let file = frame_file(img.frame_index, img.meta.crop_index);
                    let path = staging.path(rel.join(&video.id).join(&file));
                    write_atomic(&path, &png_bytes(img.pixels)).map_err(|e| format!("{}: {e}", path.display()))?;
                    Ok(ImageRecord {
                        video: video.id.clone(),
                        frame: img.frame_index,
                        file,
                        meta: img.meta,
                    })
                })
                .collect()
        })
        .collect::<Result<_, String>>()?;
    let records: Vec<ImageRecord> = per_frame.into_iter().flatten().collect();
    Ok((frames.len(), records))
}
