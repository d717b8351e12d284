use std::path::{Path, PathBuf};

use affectlens_core::eval::{CvPlan, ProtocolOptions};
use affectlens_core::features::Window;
use affectlens_core::gaze::{FixationParams, GazeHistParams, HeatmapParams};
use affectlens_core::learners::{ClassifierKind, LearnerConfig};
use affectlens_core::pipeline::{Embedding, SynthParams};
use affectlens_core::stats::DEFAULT_FDR_Q;
use affectlens_core::{ChannelKind, ScreenDims};
use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanConfig {
    pub repetitions: usize,
    pub folds: usize,
}

impl Default for PlanConfig {
    fn default() -> Self {
        let p = CvPlan::new(0);
        Self {
            repetitions: p.repetitions,
            folds: p.folds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct GazeConfig {
    pub screen: ScreenDims,
    pub fixation: FixationParams,
    pub heatmap: HeatmapParams,
    pub histogram: GazeHistParams,
}

/// Everything a run depends on. Stages read only the parts they need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub out: PathBuf,
    pub channels: Vec<ChannelKind>,
    pub classifiers: Vec<ClassifierKind>,
    pub windows: Vec<Window>,
    pub seed: u64,
    /// Worker threads; 0 uses one per core.
    pub workers: usize,
    pub plan: PlanConfig,
    pub synth: SynthParams,
    pub gaze: GazeConfig,
    /// Embedding of image channels that have no precomputed network features.
    pub embedding: Embedding,
    pub learner: LearnerConfig,
    pub protocol: ProtocolOptions,
    pub fdr_q: f64,
    /// Replace every classifier by one that returns the true labels.
    pub mock_oracle: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            manifest: PathBuf::from("manifest.json"),
            out: PathBuf::from("out"),
            channels: ChannelKind::ALL.to_vec(),
            classifiers: ClassifierKind::ALL.to_vec(),
            windows: Window::ALL.to_vec(),
            seed: 1,
            workers: 0,
            plan: PlanConfig::default(),
            synth: SynthParams::default(),
            gaze: GazeConfig::default(),
            embedding: Embedding::default(),
            learner: LearnerConfig::default(),
            protocol: ProtocolOptions::default(),
            fdr_q: DEFAULT_FDR_Q,
            mock_oracle: false,
        }
    }
}

/// Values given on the command line; `None` leaves the default.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub manifest: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub channels: Option<Vec<ChannelKind>>,
    pub classifiers: Option<Vec<ClassifierKind>>,
    pub windows: Option<Vec<Window>>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl RunConfig {
    /// Defaults, then command-line values, then the config file on top.
    ///
    /// Relative paths in the file are taken relative to the file's directory.
    pub fn resolve(flags: Overrides, file: Option<&Path>) -> anyhow::Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(v) = flags.manifest {
            cfg.manifest = v;
        }
        if let Some(v) = flags.out {
            cfg.out = v;
        }
        if let Some(v) = flags.channels {
            cfg.channels = v;
        }
        if let Some(v) = flags.classifiers {
            cfg.classifiers = v;
        }
        if let Some(v) = flags.windows {
            cfg.windows = v;
        }
        if let Some(v) = flags.seed {
            cfg.seed = v;
        }
        if let Some(v) = flags.workers {
            cfg.workers = v;
        }
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            cfg = cfg.overlay(&text, path.parent().unwrap_or(Path::new(".")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn overlay(self, text: &str, base: &Path) -> anyhow::Result<Self> {
        let over: toml::Value = toml::from_str(text).context("parsing config")?;
        let rel = |key: &str| over.get(key).and_then(|v| v.as_str()).map(PathBuf::from);
        let (manifest, out) = (rel("manifest"), rel("out"));
        let mut merged = toml::Value::try_from(&self).context("encoding configuration")?;
        merge(&mut merged, over);
        let mut cfg: RunConfig = merged.try_into().context("invalid config")?;
        for (given, slot) in [(manifest, &mut cfg.manifest), (out, &mut cfg.out)] {
            if let Some(p) = given.filter(|p| p.is_relative()) {
                *slot = base.join(p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.channels.is_empty() || self.classifiers.is_empty() || self.windows.is_empty() {
            bail!("channels, classifiers and windows must each name at least one entry");
        }
        if self.plan.repetitions == 0 || self.plan.folds < 2 {
            bail!("the CV plan needs at least one repetition and two folds");
        }
        if !(self.fdr_q > 0.0 && self.fdr_q < 1.0) {
            bail!("fdr_q must lie in (0, 1)");
        }
        self.learner.grid.validate()?;
        Ok(())
    }

    pub fn cv_plan(&self) -> CvPlan {
        CvPlan {
            repetitions: self.plan.repetitions,
            folds: self.plan.folds,
            seed: self.seed,
        }
    }

    pub fn wants(&self, channel: ChannelKind) -> bool {
        self.channels.contains(&channel)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration encodes as TOML")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_overrides_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "seed = 9\nout = \"res\"\n[plan]\nfolds = 3\n[synth]\nwarm_threshold = 200.0\n").unwrap();
        let flags = Overrides {
            seed: Some(4),
            workers: Some(2),
            ..Overrides::default()
        };
        let cfg = RunConfig::resolve(flags, Some(&path)).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.workers, 2);
        assert_eq!(cfg.plan.folds, 3);
        assert_eq!(cfg.plan.repetitions, 10);
        assert_eq!(cfg.synth.warm_threshold, 200.0);
        assert_eq!(cfg.out, dir.path().join("res"));
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = RunConfig::default();
        let back = cfg.clone().overlay(&cfg.to_toml(), Path::new("")).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(RunConfig::default().overlay("sed = 3", Path::new(".")).is_err());
        let bad = RunConfig::default().overlay("fdr_q = 2.0", Path::new(".")).unwrap();
        assert!(bad.validate().is_err());
    }
}
