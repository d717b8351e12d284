use std::collections::BTreeMap;
use std::path::PathBuf;

use affectlens_core::features::write_binary;
use affectlens_core::gaze::{fixations_csv, saccades_csv, segment};
use affectlens_core::model::{read_gaze_csv, sample_frames, GazeRef};
use affectlens_core::pipeline::{eye_hist_table, frame_heatmap, synthesize, FrameInputs};
use affectlens_core::{ChannelKind, GazeTrace, VideoRecord};
use anyhow::bail;
use rayon::prelude::*;
use serde::Serialize;

use super::{Ctx, Stage, StageReport};
use crate::cache::KeyBuilder;
use crate::fsutil::{frame_file, png_bytes, write_atomic, Staging};

#[derive(Serialize)]
struct TraceSummary {
    rater: String,
    video: String,
    rows: usize,
    malformed: usize,
    fixations: usize,
    saccades: usize,
}

#[derive(Serialize, Default)]
struct Summary {
    traces: Vec<TraceSummary>,
    heatmaps: usize,
    eye_hist_dim: Option<usize>,
    skipped: Vec<String>,
}

struct VideoOutcome {
    traces: Vec<GazeTrace>,
    summaries: Vec<TraceSummary>,
    heatmaps: usize,
    skipped: Vec<String>,
}

/// Fixations, saccades, heatmaps, gaze-driven image channels and gaze histograms.
pub(super) fn run(ctx: &Ctx) -> anyhow::Result<StageReport> {
    let mut report = StageReport::new(Stage::Gaze);
    let m = ctx.manifest();
    if m.gaze.is_empty() {
        bail!("the manifest lists no gaze traces");
    }
    let image_channels: Vec<ChannelKind> = [ChannelKind::EyeRoi, ChannelKind::EyeRoiContextBlur]
        .into_iter()
        .filter(|&c| ctx.cfg.wants(c))
        .collect();
    let want_hist = ctx.cfg.wants(ChannelKind::EyeHist);

    let mut key = KeyBuilder::new("gaze")
        .json(&ctx.cfg.gaze)
        .json(&ctx.cfg.synth)
        .json(&image_channels)
        .json(&want_hist)
        .json(&m.gaze)
        .json(&ctx.frames_digest()?);
    for g in &m.gaze {
        key = if g.path.exists() { key.file(&g.path)? } else { key.json(&("missing", &g.path)) };
    }
    let key = key.finish();
    let hist_rel = PathBuf::from("features").join(ChannelKind::EyeHist.slug());
    let mut rels = vec![PathBuf::from("gaze")];
    rels.extend(image_channels.iter().map(|c| PathBuf::from(c.slug())));
    if want_hist {
        rels.push(hist_rel.clone());
    }
    if ctx.cache.is_fresh("gaze", &key) {
        log::info!("gaze: up to date");
        report.cached += 1;
        return Ok(report);
    }

    let staging = Staging::new(ctx.out(), "gaze")?;
    let by_video = m.gaze_by_video();
    let outcomes: Vec<VideoOutcome> = ctx.pool.install(|| {
        m.videos
            .par_iter()
            .map(|v| {
                let refs = by_video.get(v.id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
                gaze_video(ctx, v, refs, &image_channels, &staging)
            })
            .collect()
    });

    let mut summary = Summary::default();
    let mut traces_by_video = BTreeMap::new();
    for (v, o) in m.videos.iter().zip(outcomes) {
        summary.traces.extend(o.summaries);
        summary.heatmaps += o.heatmaps;
        summary.skipped.extend(o.skipped);
        traces_by_video.insert(v.id.clone(), o.traces);
    }
    if want_hist {
        let roster = m.rater_roster();
        let g = &ctx.cfg.gaze;
        let table = eye_hist_table(&traces_by_video, &roster, g.screen, &g.fixation, &g.histogram)?;
        summary.eye_hist_dim = Some(table.dim);
        for v in &m.videos {
            write_binary(&staging.path("features"), &table, &v.id)?;
        }
        log::info!("gaze: eye_hist vectors of {} values for {} raters", table.dim, roster.len());
    }
    let malformed: usize = summary.traces.iter().map(|t| t.malformed).sum();
    log::info!(
        "gaze: {} traces, {} malformed rows dropped, {} heatmaps",
        summary.traces.len(),
        malformed,
        summary.heatmaps
    );
    write_atomic(
        &staging.path("gaze/summary.json"),
        serde_json::to_string_pretty(&summary)?.as_bytes(),
    )?;
    staging.commit(&rels)?;
    if summary.skipped.is_empty() {
        ctx.cache.store("gaze", key, &rels)?;
    } else {
        ctx.cache.invalidate("gaze");
    }
    for s in summary.skipped {
        report.skip(s);
    }
    report.computed += 1;
    Ok(report)
}

fn gaze_video(
    ctx: &Ctx,
    video: &VideoRecord,
    refs: &[&GazeRef],
    image_channels: &[ChannelKind],
    staging: &Staging,
) -> VideoOutcome {
    let g = &ctx.cfg.gaze;
    let mut out = VideoOutcome {
        traces: Vec::new(),
        summaries: Vec::new(),
        heatmaps: 0,
        skipped: Vec::new(),
    };
    for r in refs {
        let csv = match read_gaze_csv(&r.path) {
            Ok(c) => c,
            Err(e) => {
                out.skipped.push(format!("rater {} video {}: {e}", r.rater_id, r.video_id));
                continue;
            }
        };
        let mut trace = GazeTrace::new(&r.rater_id, &r.video_id, csv.samples);
        trace.screen = g.screen;
        let events = segment(&trace, &g.fixation);
        let name = format!("{}_{}.csv", r.rater_id, r.video_id);
        let writes = [
            (format!("gaze/fixations/{name}"), fixations_csv(&r.rater_id, &r.video_id, &events.fixations)),
            (format!("gaze/saccades/{name}"), saccades_csv(&r.rater_id, &r.video_id, &events.saccades)),
        ];
        for (rel, text) in writes {
            if let Err(e) = write_atomic(&staging.path(&rel), text.as_bytes()) {
                out.skipped.push(format!("{rel}: {e}"));
            }
        }
        out.summaries.push(TraceSummary {
            rater: r.rater_id.clone(),
            video: r.video_id.clone(),
            rows: csv.total,
            malformed: csv.malformed,
            fixations: events.fixations.len(),
            saccades: events.saccades.len(),
        });
        out.traces.push(trace);
    }

    let frames = match sample_frames(video) {
        Ok(f) => f,
        Err(e) => {
            out.skipped.push(format!("video {}: {e}", video.id));
            return out;
        }
    };
    let traces = &out.traces;
    let per_frame: Vec<Result<(), String>> = frames
        .par_iter()
        .map(|frame| {
            let heat = frame_heatmap(traces, g.screen, frame, &g.heatmap);
            let rel = format!("gaze/heatmaps/{}/{}", video.id, frame_file(frame.index, None));
            write_atomic(&staging.path(&rel), &png_bytes(heat.to_gray_image())).map_err(|e| format!("{rel}: {e}"))?;
            let inputs = FrameInputs {
                frame,
                detector: None,
                heat: Some(&heat),
            };
            for &channel in image_channels {
                synthesize(channel, inputs, &ctx.cfg.synth)
                    .map_err(|e| e.to_string())
                    .and_then(|imgs| {
                        imgs.into_iter().try_for_each(|img| {
                            let rel = format!("{}/{}/{}", channel.slug(), video.id, frame_file(img.frame_index, None));
                            write_atomic(&staging.path(&rel), &png_bytes(img.pixels)).map_err(|e| e.to_string())
                        })
                    })
                    .map_err(|e| format!("channel {} video {} frame {}: {e}", channel.slug(), video.id, frame.index))?;
            }
            Ok(())
        })
        .collect();
    for r in per_frame {
        match r {
            Ok(()) => out.heatmaps += 1,
            Err(e) => out.skipped.push(e),
        }
    }
    out
}
