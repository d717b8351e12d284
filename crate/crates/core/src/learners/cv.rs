use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::svm::{solve_dual, sq_dist, dot, Gram};
use super::{ClassifierKind, LearnError, Standardizer};
use crate::eval::f1_score;

/// Log-spaced candidates for `C` and the RBF `γ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub c: Vec<f64>,
    pub gamma: Vec<f64>,
}

pub const LOG_GRID: [f64; 7] = [1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3];

impl Default for HyperGrid {
    fn default() -> Self {
        Self {
            c: LOG_GRID.to_vec(),
            gamma: LOG_GRID.to_vec(),
        }
    }
}

impl HyperGrid {
    pub fn single(c: f64, gamma: f64) -> Self {
        Self {
            c: vec![c],
            gamma: vec![gamma],
        }
    }

    pub fn validate(&self) -> Result<(), LearnError> {
        for (name, v) in [("c", &self.c), ("gamma", &self.gamma)] {
            if v.is_empty() {
                return Err(LearnError::InvalidParameter(format!("grid `{name}` is empty")));
            }
            if v.windows(2).any(|w| w[0] >= w[1]) || v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return Err(LearnError::InvalidParameter(format!(
                    "grid `{name}` must be positive and strictly increasing"
                )));
            }
        }
        Ok(())
    }

    /// Candidates for a classifier in tie-break order (smaller `C`, then smaller `γ`).
    pub fn candidates(&self, kind: ClassifierKind) -> Vec<HyperParams> {
        match kind {
            ClassifierKind::Lda => vec![HyperParams::default()],
            ClassifierKind::LinearSvm => self.c.iter().map(|&c| HyperParams { c: Some(c), gamma: None }).collect(),
            ClassifierKind::RbfSvm => self
                .c
                .iter()
                .flat_map(|&c| self.gamma.iter().map(move |&g| HyperParams { c: Some(c), gamma: Some(g) }))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub c: Option<f64>,
    pub gamma: Option<f64>,
}

/// Assigns shuffled groups to `k` folds round-robin; fold sizes differ by at most one group.
pub fn group_folds<'a>(groups: &[&'a str], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<&'a str>> {
    let mut g: Vec<&str> = groups.to_vec();
    g.sort_unstable();
    g.dedup();
    g.shuffle(rng);
    let mut folds = vec![Vec::new(); k.max(1)];
    for (i, name) in g.into_iter().enumerate() {
        folds[i % k.max(1)].push(name);
    }
    folds
}

/// Row indices `(train, test)` for each fold of a grouped split.
pub fn fold_indices(row_groups: &[String], folds: &[Vec<&str>]) -> Vec<(Vec<usize>, Vec<usize>)> {
    let mut fold_of: BTreeMap<&str, usize> = BTreeMap::new();
    for (f, names) in folds.iter().enumerate() {
        for &n in names {
            fold_of.insert(n, f);
        }
    }
    (0..folds.len())
        .map(|f| {
            let (mut train, mut test) = (Vec::new(), Vec::new());
            for (i, g) in row_groups.iter().enumerate() {
                if fold_of.get(g.as_str()) == Some(&f) {
                    test.push(i);
                } else {
                    train.push(i);
                }
            }
            (train, test)
        })
        .collect()
}

/// Mean inner F1 of every candidate (same order as [`HyperGrid::candidates`]).
///
/// Features are z-scored once with statistics of all supplied rows, so the pairwise
/// kernel base (dot products or squared distances) is shared by all candidates.
pub fn grid_scores(
    x: &[Vec<f64>],
    y: &[bool],
    groups: &[String],
    kind: ClassifierKind,
    grid: &HyperGrid,
    k: usize,
    seed: u64,
    config: &super::LearnerConfig,
) -> Result<Vec<(HyperParams, f64)>, LearnError> {
    grid.validate()?;
    let candidates = grid.candidates(kind);
    let group_refs: Vec<&str> = groups.iter().map(String::as_str).collect();
    let n_groups = {
        let mut g = group_refs.clone();
        g.sort_unstable();
        g.dedup();
        g.len()
    };
    if n_groups < 2 {
        return Err(LearnError::InsufficientGroups { found: n_groups, needed: 2 });
    }
    let k = if n_groups < k {
        log::warn!("inner CV: {n_groups} groups, reducing folds from {k} to {n_groups}");
        n_groups
    } else {
        k
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let folds = fold_indices(groups, &group_folds(&group_refs, k, &mut rng));

    let z = Standardizer::fit(x).apply_all(x);
    let n = z.len();
    let base = match kind {
        ClassifierKind::Lda => None,
        ClassifierKind::LinearSvm => Some(Gram::from_fn(n, |i, j| dot(&z[i], &z[j]))),
        ClassifierKind::RbfSvm => Some(Gram::from_fn(n, |i, j| sq_dist(&z[i], &z[j]))),
    };

    let scores: Vec<f64> = candidates
        .par_iter()
        .map(|hp| {
            let mut total = 0.0;
            for (train, test) in &folds {
                let yt: Vec<bool> = train.iter().map(|&i| y[i]).collect();
                let truth: Vec<bool> = test.iter().map(|&i| y[i]).collect();
                let pred: Vec<bool> = if yt.iter().all(|&v| v == yt[0]) {
                    vec![yt[0]; test.len()]
                } else {
                    match (kind, &base) {
                        (ClassifierKind::Lda, _) | (_, None) => {
                            let xt: Vec<Vec<f64>> = train.iter().map(|&i| z[i].clone()).collect();
                            match super::train_lda(&xt, &yt, config.lda_shrinkage) {
                                Ok(m) => test.iter().map(|&i| m.predict(&z[i])).collect(),
                                Err(_) => vec![false; test.len()],
                            }
                        }
                        (_, Some(base)) => {
                            let c = hp.c.unwrap_or(1.0);
                            let kf = |v: f64| match hp.gamma {
                                Some(g) => (-g * v).exp(),
                                None => v,
                            };
                            let gram = Gram::from_fn(train.len(), |a, b| kf(base.get(train[a], train[b])));
                            let sol = solve_dual(&gram, &yt, c, config.svm_tol, config.svm_max_iter);
                            test.iter()
                                .map(|&t| {
                                    let f: f64 = train
                                        .iter()
                                        .enumerate()
                                        .filter(|&(a, _)| sol.alpha[a] > 0.0)
                                        .map(|(a, &s)| {
                                            let ya = if yt[a] { 1.0 } else { -1.0 };
                                            sol.alpha[a] * ya * kf(base.get(s, t))
                                        })
                                        .sum::<f64>()
                                        + sol.b;
                                    f > 0.0
                                })
                                .collect()
                        }
                    }
                };
                total += f1_score(&truth, &pred).unwrap_or(0.0);
            }
            total / folds.len() as f64
        })
        .collect();
    Ok(candidates.into_iter().zip(scores).collect())
}

/// Grid point with the highest mean inner F1; ties go to the earlier (smaller) candidate.
#[allow(clippy::too_many_arguments)]
pub fn inner_cv_select(
    x: &[Vec<f64>],
    y: &[bool],
    groups: &[String],
    kind: ClassifierKind,
    grid: &HyperGrid,
    k: usize,
    seed: u64,
    config: &super::LearnerConfig,
) -> Result<HyperParams, LearnError> {
    let candidates = grid.candidates(kind);
    if candidates.len() == 1 {
        grid.validate()?;
        return Ok(candidates[0]);
    }
    let scores = grid_scores(x, y, groups, kind, grid, k, seed, config)?;
    let mut best = scores[0];
    for &(hp, s) in &scores[1..] {
        if s > best.1 {
            best = (hp, s);
        }
    }
    Ok(best.0)
}
