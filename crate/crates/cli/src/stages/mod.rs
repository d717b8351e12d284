//! Pipeline stages. Stages talk to each other only through files under the run directory.

mod eval;
mod features;
mod gaze;
mod report;
mod stats;
mod synth;

use std::path::{Path, PathBuf};

use affectlens_core::model::load_manifest;
use affectlens_core::{ChannelKind, DatasetManifest};
use anyhow::Context;
use serde::Serialize;

use crate::cache::{KeyBuilder, StageCache};
use crate::config::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Synth,
    Gaze,
    Features,
    Eval,
    Stats,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 6] = [Stage::Synth, Stage::Gaze, Stage::Features, Stage::Eval, Stage::Stats, Stage::Report];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Gaze => "gaze",
            Stage::Features => "features",
            Stage::Eval => "eval",
            Stage::Stats => "stats",
            Stage::Report => "report",
        }
    }
}

/// What a stage did. Named skips make the run partial.
#[derive(Debug, Clone, Default, Serialize)]
pub struct StageReport {
    pub stage: String,
    pub skipped: Vec<String>,
    /// Units (channels or the whole stage) served from the cache.
    pub cached: usize,
    pub computed: usize,
}

impl StageReport {
    fn new(stage: Stage) -> Self {
        Self {
            stage: stage.name().to_string(),
            ..Self::default()
        }
    }

    fn skip(&mut self, what: String) {
        log::warn!("{}: {what}", self.stage);
        self.skipped.push(what);
    }
}

pub struct Ctx {
    pub cfg: RunConfig,
    manifest: Option<DatasetManifest>,
    pub cache: StageCache,
    pub pool: rayon::ThreadPool,
}

impl Ctx {
    pub fn new(cfg: RunConfig) -> anyhow::Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .context("starting worker pool")?;
        Ok(Self {
            cache: StageCache::new(&cfg.out),
            cfg,
            manifest: None,
            pool,
        })
    }

    fn load_manifest(&mut self) -> anyhow::Result<()> {
        if self.manifest.is_none() {
            let m = load_manifest(&self.cfg.manifest).with_context(|| format!("manifest {}", self.cfg.manifest.display()))?;
            self.manifest = Some(m);
        }
        Ok(())
    }

    pub fn manifest(&self) -> &DatasetManifest {
        self.manifest.as_ref().expect("manifest loaded before the stage runs")
    }

    pub fn out(&self) -> &Path {
        &self.cfg.out
    }

    /// Directory of precomputed network features for `channel`, if the manifest provides one.
    fn deep_features(&self, channel: ChannelKind) -> Option<PathBuf> {
        let dir = self.manifest().sidecars.features.clone()?;
        dir.join(channel.slug()).is_dir().then_some(dir)
    }

    /// Digest of every video's frame directory.
    fn frames_digest(&self) -> anyhow::Result<String> {
        let mut k = KeyBuilder::new("frames").json(&self.manifest().videos);
        for v in &self.manifest().videos {
            k = k.tree(&v.frame_dir)?;
        }
        Ok(k.finish().0)
    }
}

/// Runs one stage. Errors are stage failures; skips are reported in the result.
pub fn run_stage(ctx: &mut Ctx, stage: Stage) -> anyhow::Result<StageReport> {
    if stage != Stage::Report {
        ctx.load_manifest().with_context(|| stage.name())?;
    }
    let started = std::time::Instant::now();
    let report = match stage {
        Stage::Synth => synth::run(ctx),
        Stage::Gaze => gaze::run(ctx),
        Stage::Features => features::run(ctx),
        Stage::Eval => eval::run(ctx),
        Stage::Stats => stats::run(ctx),
        Stage::Report => report::run(ctx),
    }
    .with_context(|| stage.name())?;
    log::info!(
        "{} finished in {:.1} s ({} computed, {} cached, {} skipped)",
        stage.name(),
        started.elapsed().as_secs_f64(),
        report.computed,
        report.cached,
        report.skipped.len()
    );
    Ok(report)
}

/// 0 when every stage completed, 2 when some units were skipped, 1 on failure.
pub fn exit_code(result: &anyhow::Result<Vec<StageReport>>) -> u8 {
    match result {
        Err(_) => 1,
        Ok(reports) if reports.iter().any(|r| !r.skipped.is_empty()) => 2,
        Ok(_) => 0,
    }
}
