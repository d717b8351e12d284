use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{CellStat, EvalReport, ReportRow};
use super::{f1_score, EvalError};
use crate::features::{DesignMatrix, Window};
use crate::learners::{fit, fold_indices, group_folds, ClassifierKind, LearnError, LearnerConfig};
use crate::model::{AffectDimension, ChannelKind};

/// Repeated group-aware k-fold cross-validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvPlan {
    pub repetitions: usize,
    pub folds: usize,
    pub seed: u64,
}

impl CvPlan {
    pub fn new(seed: u64) -> Self {
        Self {
            repetitions: 10,
            folds: 5,
            seed,
        }
    }

    pub fn runs(&self) -> usize {
        self.repetitions * self.folds
    }

    /// Shuffled group folds for one repetition; each repetition draws from its own stream.
    pub fn repetition_folds<'a>(&self, rep: usize, groups: &[&'a str]) -> Vec<Vec<&'a str>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(rep as u64);
        group_folds(groups, self.folds, &mut rng)
    }

    /// All `(repetition, fold, train_rows, test_rows)` splits in run order.
    pub fn splits(&self, row_groups: &[String]) -> Vec<Split> {
        let refs: Vec<&str> = row_groups.iter().map(String::as_str).collect();
        let mut out = Vec::with_capacity(self.runs());
        for rep in 0..self.repetitions {
            let folds = self.repetition_folds(rep, &refs);
            for (fold, (train, test)) in fold_indices(row_groups, &folds).into_iter().enumerate() {
                out.push(Split { rep, fold, train, test });
            }
        }
        out
    }

    /// Seed handed to the learner for one split.
    pub fn split_seed(&self, rep: usize, fold: usize) -> u64 {
        self.seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add((rep * self.folds + fold) as u64 + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub rep: usize,
    pub fold: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Anything that can be trained on some rows of a design matrix and predict others.
pub trait Learner: Send + Sync {
    fn fit_predict(&self, design: &DesignMatrix, train: &[usize], test: &[usize], seed: u64) -> Result<Vec<bool>, LearnError>;
}

/// Inner-CV tuned LDA/SVM.
#[derive(Debug, Clone)]
pub struct StandardLearner {
    pub kind: ClassifierKind,
    pub config: LearnerConfig,
}

impl StandardLearner {
    pub fn new(kind: ClassifierKind, config: LearnerConfig) -> Self {
        Self { kind, config }
    }
}

impl Learner for StandardLearner {
    fn fit_predict(&self, design: &DesignMatrix, train: &[usize], test: &[usize], seed: u64) -> Result<Vec<bool>, LearnError> {
        let x: Vec<Vec<f64>> = train.iter().map(|&i| design.x[i].clone()).collect();
        let y: Vec<bool> = train.iter().map(|&i| design.y[i]).collect();
        let g: Vec<String> = train.iter().map(|&i| design.groups[i].clone()).collect();
        let model = fit(self.kind, &x, &y, &g, &self.config, seed)?;
        Ok(test.iter().map(|&i| model.predict(&design.x[i])).collect())
    }
}

/// Returns the true labels; for checking the harness itself.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleLearner;

impl Learner for OracleLearner {
    fn fit_predict(&self, design: &DesignMatrix, _train: &[usize], test: &[usize], _seed: u64) -> Result<Vec<bool>, LearnError> {
        Ok(test.iter().map(|&i| design.y[i]).collect())
    }
}

/// How held-out predictions are scored.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// F1 over all held-out rows.
    #[default]
    Frame,
    /// One majority-vote prediction per held-out video.
    VideoMajority,
}

/// What the reported spread is computed over.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpreadOver {
    #[default]
    FoldScores,
    RepetitionMeans,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolOptions {
    pub aggregation: Aggregation,
    pub spread: SpreadOver,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DesignKey {
    pub channel: ChannelKind,
    pub dimension: AffectDimension,
    pub window: Window,
}

/// Design matrices per key; `None` marks a combination with no data.
pub type DesignSet = BTreeMap<DesignKey, Option<DesignMatrix>>;

fn score_split(
    design: &DesignMatrix,
    split: &Split,
    learner: &dyn Learner,
    seed: u64,
    aggregation: Aggregation,
) -> Result<f64, EvalError> {
    let pred = learner
        .fit_predict(design, &split.train, &split.test, seed)
        .map_err(|e| EvalError::Learner(e.to_string()))?;
    let truth: Vec<bool> = split.test.iter().map(|&i| design.y[i]).collect();
    match aggregation {
        Aggregation::Frame => f1_score(&truth, &pred),
        Aggregation::VideoMajority => {
            let mut votes: BTreeMap<&str, (usize, usize, bool)> = BTreeMap::new();
            for ((&i, &p), &t) in split.test.iter().zip(&pred).zip(&truth) {
                let e = votes.entry(design.groups[i].as_str()).or_insert((0, 0, t));
                if p {
                    e.0 += 1;
                } else {
                    e.1 += 1;
                }
            }
            let (t, p): (Vec<bool>, Vec<bool>) = votes.values().map(|&(h, l, t)| (t, h > l)).unzip();
            f1_score(&t, &p)
        }
    }
}

/// Fold-level F1 scores of one learner on one design, in run order.
pub fn cell_scores(
    design: &DesignMatrix,
    learner: &dyn Learner,
    plan: &CvPlan,
    aggregation: Aggregation,
) -> Result<Vec<f64>, EvalError> {
    let n_groups = design.unique_groups().len();
    if n_groups < plan.folds {
        return Err(EvalError::TooFewGroups {
            found: n_groups,
            needed: plan.folds,
        });
    }
    let splits = plan.splits(&design.groups);
    splits
        .par_iter()
        .map(|s| score_split(design, s, learner, plan.split_seed(s.rep, s.fold), aggregation))
        .collect()
}

fn summarize(scores: Vec<f64>, plan: &CvPlan, spread: SpreadOver) -> CellStat {
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    let spread_of: Vec<f64> = match spread {
        SpreadOver::FoldScores => scores.clone(),
        SpreadOver::RepetitionMeans => scores
            .chunks(plan.folds)
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect(),
    };
    let m = spread_of.iter().sum::<f64>() / spread_of.len() as f64;
    let std = if spread_of.len() > 1 {
        (spread_of.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (spread_of.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    CellStat { mean, std, scores }
}

/// Runs every (design, learner) cell and assembles the report.
///
/// Cells without data, or whose runs fail, are reported as unavailable; the rest of the
/// table is still produced.
pub fn run_protocol(
    designs: &DesignSet,
    learners: &[(ClassifierKind, &dyn Learner)],
    plan: &CvPlan,
    options: ProtocolOptions,
) -> EvalReport {
    let jobs: Vec<(DesignKey, usize)> = designs
        .keys()
        .flat_map(|k| (0..learners.len()).map(move |l| (*k, l)))
        .collect();
    let results: Vec<Result<CellStat, String>> = jobs
        .par_iter()
        .map(|(key, l)| {
            let Some(design) = designs[key].as_ref() else {
                return Err("no data".to_string());
            };
            cell_scores(design, learners[*l].1, plan, options.aggregation)
                .map(|s| summarize(s, plan, options.spread))
                .map_err(|e| {
                    log::warn!("{} {} {:?} {}: {e}", key.channel, learners[*l].0, key.dimension, key.window);
                    e.to_string()
                })
        })
        .collect();

    let channels: BTreeSet<ChannelKind> = designs.keys().map(|k| k.channel).collect();
    let mut rows: Vec<ReportRow> = channels
        .iter()
        .flat_map(|&c| learners.iter().map(move |(k, _)| ReportRow::empty(c, *k)))
        .collect();
    for ((key, l), res) in jobs.iter().zip(results) {
        let row = rows
            .iter_mut()
            .find(|r| r.channel == key.channel && r.classifier == learners[*l].0)
            .expect("row exists");
        if let Ok(cell) = res {
            row.set(key.dimension, key.window, Some(cell));
        }
    }
    let mut report = EvalReport { rows };
    report.mark_bold();
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::RowKey;

    fn design(n_videos: usize, rows_per: usize) -> DesignMatrix {
        design_with(n_videos, rows_per, |v| v % 3 == 0)
    }

    fn design_with(n_videos: usize, rows_per: usize, label: impl Fn(usize) -> bool) -> DesignMatrix {
        let mut d = DesignMatrix {
            x: Vec::new(),
            y: Vec::new(),
            groups: Vec::new(),
            keys: Vec::new(),
        };
        for v in 0..n_videos {
            for r in 0..rows_per {
                d.x.push(vec![v as f64, r as f64]);
                d.y.push(label(v));
                d.groups.push(format!("v{v:02}"));
                d.keys.push(RowKey::frame(format!("v{v:02}"), r as u32));
            }
        }
        d
    }

    #[test]
    fn fifty_runs_no_leakage_balanced_folds() {
        let d = design(23, 4);
        let plan = CvPlan::new(11);
        let splits = plan.splits(&d.groups);
        assert_eq!(splits.len(), 50);
        for rep in 0..10 {
            let sizes: Vec<usize> = splits
                .iter()
                .filter(|s| s.rep == rep)
                .map(|s| s.test.iter().map(|&i| &d.groups[i]).collect::<BTreeSet<_>>().len())
                .collect();
            assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
        for s in &splits {
            let tr: BTreeSet<&String> = s.train.iter().map(|&i| &d.groups[i]).collect();
            assert!(s.test.iter().all(|&i| !tr.contains(&d.groups[i])));
        }
    }

    #[test]
    fn oracle_gives_perfect_table() {
        let mut designs = DesignSet::new();
        for dim in AffectDimension::ALL {
            for w in Window::ALL {
                designs.insert(DesignKey { channel: ChannelKind::Gist, dimension: dim, window: w }, Some(design_with(12, 3, |v| v != 0)));
            }
        }
        let oracle = OracleLearner;
        let r = run_protocol(&designs, &[(ClassifierKind::Lda, &oracle)], &CvPlan::new(1), ProtocolOptions::default());
        assert_eq!(r.rows.len(), 1);
        for dim in AffectDimension::ALL {
            for w in Window::ALL {
                let c = r.rows[0].cell(dim, w).unwrap();
                assert_eq!(c.scores.len(), 50);
                assert!(c.scores.iter().all(|&s| s == 1.0));
                assert_eq!((c.mean, c.std), (1.0, 0.0));
            }
        }
    }

    #[test]
    fn too_few_groups_is_unavailable() {
        let mut designs = DesignSet::new();
        designs.insert(
            DesignKey { channel: ChannelKind::Video, dimension: AffectDimension::Valence, window: Window::All },
            Some(design(3, 2)),
        );
        let r = run_protocol(&designs, &[(ClassifierKind::Lda, &OracleLearner)], &CvPlan::new(1), ProtocolOptions::default());
        assert!(r.rows[0].cell(AffectDimension::Valence, Window::All).is_none());
    }
}
