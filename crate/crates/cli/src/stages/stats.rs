use std::path::PathBuf;

use affectlens_core::stats::agreement_report;
use anyhow::bail;

use super::{Ctx, Stage, StageReport};
use crate::cache::KeyBuilder;
use crate::fsutil::write_atomic;

/// Inter-rater agreement, rating correlations and expert-group comparisons.
pub(super) fn run(ctx: &Ctx) -> anyhow::Result<StageReport> {
    let mut report = StageReport::new(Stage::Stats);
    let m = ctx.manifest();
    if m.ratings.raters.is_empty() || m.ratings.items.is_empty() {
        bail!("the manifest holds no ratings");
    }
    let key = KeyBuilder::new("stats")
        .json(&m.ratings)
        .json(&m.videos)
        .json(&ctx.cfg.fdr_q)
        .finish();
    let out = PathBuf::from("agreement.json");
    if ctx.cache.is_fresh("stats", &key) {
        log::info!("stats: up to date");
        report.cached += 1;
        return Ok(report);
    }
    let agreement = agreement_report(&m.ratings, &m.videos, ctx.cfg.fdr_q);
    for a in agreement.agreement.iter().filter(|a| a.omitted.is_some()) {
        log::info!(
            "stats: {:?} {:?} {:?} omitted: {}",
            a.dimension,
            a.coefficient,
            a.thresholding,
            a.omitted.as_deref().unwrap_or_default()
        );
    }
    write_atomic(&ctx.out().join(&out), serde_json::to_string_pretty(&agreement)?.as_bytes())?;
    ctx.cache.store("stats", key, &[out])?;
    report.computed += 1;
    Ok(report)
}
