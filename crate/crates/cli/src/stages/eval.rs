use std::path::PathBuf;

use affectlens_core::eval::{run_protocol, DesignKey, Learner, OracleLearner, StandardLearner};
use affectlens_core::features::{load_deep_features, load_features, Window};
use affectlens_core::learners::ClassifierKind;
use affectlens_core::pipeline::design_set;
use affectlens_core::{AffectDimension, ChannelKind, FeatureScope};
use serde::Serialize;

use super::{Ctx, Stage, StageReport};
use crate::cache::KeyBuilder;
use crate::fsutil::write_atomic;

#[derive(Serialize)]
struct FeatureSource {
    channel: ChannelKind,
    /// Precomputed sidecar directory, or a path relative to the run directory.
    source: Option<PathBuf>,
    dim: usize,
    rows: usize,
    missing_rows: usize,
}

#[derive(Serialize)]
struct RunMeta<'a> {
    version: &'static str,
    seed: u64,
    repetitions: usize,
    folds: usize,
    channels: &'a [ChannelKind],
    classifiers: &'a [ClassifierKind],
    windows: &'a [Window],
    mock_oracle: bool,
    features: Vec<FeatureSource>,
    unavailable: Vec<String>,
}

fn windows_for(channel: ChannelKind, windows: &[Window]) -> Vec<Window> {
    if channel.scope() == FeatureScope::Video {
        windows.iter().copied().filter(|&w| w == Window::All).collect()
    } else {
        windows.to_vec()
    }
}

/// Repeated cross-validation of every channel × classifier × dimension × window cell.
pub(super) fn run(ctx: &Ctx) -> anyhow::Result<StageReport> {
    let mut report = StageReport::new(Stage::Eval);
    let cfg = &ctx.cfg;
    let m = ctx.manifest();
    let local = ctx.out().join("features");
    let source_of = |c: ChannelKind| ctx.deep_features(c).unwrap_or_else(|| local.clone());

    let mut key = KeyBuilder::new("eval")
        .json(&cfg.channels)
        .json(&cfg.classifiers)
        .json(&cfg.windows)
        .json(&cfg.cv_plan())
        .json(&cfg.learner)
        .json(&cfg.protocol)
        .json(&cfg.mock_oracle)
        .json(&m.videos);
    for &c in &cfg.channels {
        let dir = source_of(c).join(c.slug());
        key = if dir.is_dir() { key.tree(&dir)? } else { key.json(&("missing", c)) };
    }
    let key = key.finish();
    let outputs = ["results.csv", "results.json", "run_meta.json"].map(PathBuf::from);
    if ctx.cache.is_fresh("eval", &key) {
        log::info!("eval: up to date");
        report.cached += 1;
        return Ok(report);
    }

    let mut tables = Vec::new();
    let mut absent = Vec::new();
    let mut sources = Vec::new();
    for &channel in &cfg.channels {
        let dir = source_of(channel);
        let deep = ctx.deep_features(channel).is_some();
        let loaded = if deep {
            load_deep_features(&dir, channel, m)
        } else {
            load_features(&dir, channel, m, None)
        };
        match loaded {
            Ok(l) if !l.table.is_empty() => {
                if !l.missing.is_empty() {
                    report.skip(format!("channel {}: {} feature rows missing", channel.slug(), l.missing.len()));
                }
                sources.push(FeatureSource {
                    channel,
                    source: Some(if deep { dir.join(channel.slug()) } else { PathBuf::from("features").join(channel.slug()) }),
                    dim: l.table.dim,
                    rows: l.table.len(),
                    missing_rows: l.missing.len(),
                });
                tables.push(l.table);
            }
            Ok(_) => {
                report.skip(format!("channel {}: no features under {}", channel.slug(), dir.display()));
                absent.push(channel);
            }
            Err(e) => {
                report.skip(format!("channel {}: {e}", channel.slug()));
                absent.push(channel);
            }
        }
    }
    for &channel in &absent {
        sources.push(FeatureSource {
            channel,
            source: None,
            dim: 0,
            rows: 0,
            missing_rows: 0,
        });
    }

    let mut designs = design_set(m, &tables, &cfg.windows);
    for &channel in &absent {
        for dimension in AffectDimension::ALL {
            for window in windows_for(channel, &cfg.windows) {
                designs.insert(DesignKey { channel, dimension, window }, None);
            }
        }
    }

    let standard: Vec<StandardLearner> = cfg
        .classifiers
        .iter()
        .map(|&k| StandardLearner::new(k, cfg.learner.clone()))
        .collect();
    let oracle = OracleLearner;
    let learners: Vec<(ClassifierKind, &dyn Learner)> = cfg
        .classifiers
        .iter()
        .zip(&standard)
        .map(|(&k, l)| (k, if cfg.mock_oracle { &oracle as &dyn Learner } else { l as &dyn Learner }))
        .collect();
    log::info!(
        "eval: {} designs × {} classifiers, {} runs each",
        designs.len(),
        learners.len(),
        cfg.cv_plan().runs()
    );
    let results = ctx.pool.install(|| run_protocol(&designs, &learners, &cfg.cv_plan(), cfg.protocol));

    let mut unavailable = Vec::new();
    for row in &results.rows {
        if absent.contains(&row.channel) {
            continue;
        }
        for dimension in AffectDimension::ALL {
            for window in windows_for(row.channel, &cfg.windows) {
                if row.cell(dimension, window).is_none() {
                    unavailable.push(format!(
                        "{} {} {} {}",
                        row.channel.slug(),
                        row.classifier,
                        dimension.as_str(),
                        window.as_str()
                    ));
                }
            }
        }
    }
    for u in &unavailable {
        report.skip(format!("cell {u}: unavailable"));
    }

    let meta = RunMeta {
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        repetitions: cfg.plan.repetitions,
        folds: cfg.plan.folds,
        channels: &cfg.channels,
        classifiers: &cfg.classifiers,
        windows: &cfg.windows,
        mock_oracle: cfg.mock_oracle,
        features: sources,
        unavailable,
    };
    let out = ctx.out();
    write_atomic(&out.join("results.csv"), results.to_csv().as_bytes())?;
    write_atomic(&out.join("results.json"), results.to_json().as_bytes())?;
    write_atomic(&out.join("run_meta.json"), serde_json::to_string_pretty(&meta)?.as_bytes())?;
    if report.skipped.is_empty() {
        ctx.cache.store("eval", key, &outputs)?;
    } else {
        ctx.cache.invalidate("eval");
    }
    report.computed += 1;
    Ok(report)
}
