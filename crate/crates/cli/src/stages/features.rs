use std::path::{Path, PathBuf};

use affectlens_core::features::{write_binary, FeatureTable, RowKey};
use affectlens_core::model::sample_frames;
use affectlens_core::pipeline::{Embedder, Embedding};
use affectlens_core::ChannelKind;
use rayon::prelude::*;

use super::{Ctx, Stage, StageReport};
use crate::cache::KeyBuilder;
use crate::fsutil::{files_under, parse_frame_file, Staging};

type Rows = Vec<(RowKey, Vec<f64>)>;

/// Descriptor vectors for every channel that is not ingested from precomputed files.
pub(super) fn run(ctx: &Ctx) -> anyhow::Result<StageReport> {
    let mut report = StageReport::new(Stage::Features);
    for &channel in &ctx.cfg.channels {
        if channel == ChannelKind::EyeHist {
            continue;
        }
        if ctx.deep_features(channel).is_some() {
            log::info!("features {}: precomputed features found, ingested at evaluation", channel.slug());
            continue;
        }
        if channel == ChannelKind::Fc8 {
            report.skip(format!("channel {}: no precomputed features in the manifest sidecars", channel.slug()));
            continue;
        }
        let stage = format!("features-{}", channel.slug());
        let (source, embedding) = if channel == ChannelKind::Gist {
            (None, Embedding::Gist(Default::default()))
        } else {
            let dir = ctx.out().join(channel.slug());
            if !dir.is_dir() {
                report.skip(format!("channel {}: no images under {}", channel.slug(), dir.display()));
                continue;
            }
            (Some(dir), ctx.cfg.embedding)
        };
        let key = match &source {
            Some(dir) => KeyBuilder::new(&stage).json(&embedding).tree(dir)?,
            None => KeyBuilder::new(&stage).json(&embedding).json(&ctx.frames_digest()?),
        }
        .finish();
        if ctx.cache.is_fresh(&stage, &key) {
            log::info!("features {}: up to date", channel.slug());
            report.cached += 1;
            continue;
        }
        let embedder = Embedder::new(embedding);
        let staging = Staging::new(ctx.out(), &stage)?;
        let results: Vec<(String, Result<Rows, String>)> = ctx.pool.install(|| {
            ctx.manifest()
                .videos
                .par_iter()
                .map(|v| {
                    let rows = match &source {
                        Some(dir) => embed_images(&dir.join(&v.id), &embedder),
                        None => gist_frames(ctx, &v.id, &embedder),
                    };
                    (v.id.clone(), rows)
                })
                .collect()
        });
        let mut rows_written = 0;
        for (video, res) in results {
            let rows = match res {
                Ok(r) if !r.is_empty() => r,
                Ok(_) => {
                    report.skip(format!("channel {} video {video}: no images", channel.slug()));
                    continue;
                }
                Err(e) => {
                    report.skip(format!("channel {} video {video}: {e}", channel.slug()));
                    continue;
                }
            };
            let mut table = FeatureTable::new(channel, embedder.dim());
            rows_written += rows.len();
            for (k, v) in rows {
                table.insert(k, v)?;
            }
            write_binary(&staging.path("features"), &table, &video)?;
        }
        log::info!("features {}: {rows_written} rows of {} values", channel.slug(), embedder.dim());
        let rel = PathBuf::from("features").join(channel.slug());
        staging.commit(std::slice::from_ref(&rel))?;
        ctx.cache.store(&stage, key, &[rel])?;
        report.computed += 1;
    }
    Ok(report)
}

fn embed_images(dir: &Path, embedder: &Embedder) -> Result<Rows, String> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let video = dir.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
    let mut rows = Vec::new();
    for path in files_under(dir).map_err(|e| e.to_string())? {
        let Some((frame, crop)) = path.file_name().and_then(|n| n.to_str()).and_then(parse_frame_file) else {
            continue;
        };
        let img = image::open(&path).map_err(|e| format!("{}: {e}", path.display()))?.to_rgb8();
        let key = match crop {
            Some(c) => RowKey::crop(&video, frame, c),
            None => RowKey::frame(&video, frame),
        };
        rows.push((key, embedder.embed(&img)));
    }
    Ok(rows)
}

fn gist_frames(ctx: &Ctx, video: &str, embedder: &Embedder) -> Result<Rows, String> {
    let v = ctx.manifest().video(video).expect("video from the manifest");
    let frames = sample_frames(v).map_err(|e| e.to_string())?;
    Ok(frames
        .iter()
        .map(|f| (RowKey::frame(&f.video_id, f.index), embedder.embed(&f.pixels)))
        .collect())
}

