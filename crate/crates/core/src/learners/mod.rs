//! Binary classifiers (LDA, linear and RBF SVM) and inner-CV model selection.

mod cv;
mod lda;
mod svm;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cv::{fold_indices, grid_scores, group_folds, inner_cv_select, HyperGrid, HyperParams, LOG_GRID};
pub use lda::{train_lda, LdaModel, DEFAULT_LDA_SHRINKAGE};
pub use svm::{
    dual_objective, kkt_violation, solve_dual, train_svm, DualSolution, Gram, Kernel, SvmModel, SvmParams,
};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("training labels contain a single class")]
    DegenerateLabels,
    #[error("empty training set")]
    EmptyInput,
    #[error("{x} feature rows but {y} labels")]
    LengthMismatch { x: usize, y: usize },
    #[error("feature rows have inconsistent dimensions")]
    RaggedInput,
    #[error("scatter matrix is singular")]
    Singular,
    #[error("{0}")]
    InvalidParameter(String),
    #[error("{found} groups available, {needed} needed")]
    InsufficientGroups { found: usize, needed: usize },
}

/// Validates shapes and returns `(n_positive, n_negative)`.
pub(crate) fn check_labels(x: &[Vec<f64>], y: &[bool]) -> Result<(usize, usize), LearnError> {
    if x.len() != y.len() {
        return Err(LearnError::LengthMismatch { x: x.len(), y: y.len() });
    }
    if x.is_empty() || x[0].is_empty() {
        return Err(LearnError::EmptyInput);
    }
    if x.iter().any(|r| r.len() != x[0].len()) {
        return Err(LearnError::RaggedInput);
    }
    let pos = y.iter().filter(|&&v| v).count();
    if pos == 0 || pos == y.len() {
        return Err(LearnError::DegenerateLabels);
    }
    Ok((pos, y.len() - pos))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    Lda,
    #[serde(rename = "lsvm")]
    LinearSvm,
    #[serde(rename = "rsvm")]
    RbfSvm,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 3] = [ClassifierKind::Lda, ClassifierKind::LinearSvm, ClassifierKind::RbfSvm];

    pub fn slug(self) -> &'static str {
        match self {
            ClassifierKind::Lda => "lda",
            ClassifierKind::LinearSvm => "lsvm",
            ClassifierKind::RbfSvm => "rsvm",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            ClassifierKind::Lda => "LDA",
            ClassifierKind::LinearSvm => "LSVM",
            ClassifierKind::RbfSvm => "RSVM",
        }
    }
}

impl std::fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.display_name())
    }
}

impl std::str::FromStr for ClassifierKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lda" => Ok(ClassifierKind::Lda),
            "lsvm" | "linear_svm" | "svm" => Ok(ClassifierKind::LinearSvm),
            "rsvm" | "rbf_svm" => Ok(ClassifierKind::RbfSvm),
            _ => Err(format!("unknown classifier `{s}`")),
        }
    }
}

/// Per-feature z-scoring; constant features get unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &[Vec<f64>]) -> Self {
        let d = x.first().map_or(0, Vec::len);
        let n = x.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        for r in x {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; d];
        for r in x {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        let scale = var
            .into_iter()
            .map(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 })
            .collect();
        Self { mean, scale }
    }

    pub fn identity(d: usize) -> Self {
        Self {
            mean: vec![0.0; d],
            scale: vec![1.0; d],
        }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn apply_all(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        x.iter().map(|r| self.apply(r)).collect()
    }
}

/// Settings shared by every training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub grid: HyperGrid,
    pub inner_folds: usize,
    pub lda_shrinkage: f64,
    pub svm_tol: f64,
    pub svm_max_iter: usize,
    /// Z-score features with training-fold statistics before fitting.
    pub standardize: bool,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            grid: HyperGrid::default(),
            inner_folds: 5,
            lda_shrinkage: DEFAULT_LDA_SHRINKAGE,
            svm_tol: 1e-3,
            svm_max_iter: 100_000,
            standardize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Model {
    Lda(LdaModel),
    Svm(SvmModel),
    /// Training data held one class only.
    Constant { label: bool },
}

/// A trained classifier with its input standardisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub kind: ClassifierKind,
    pub params: HyperParams,
    pub standardizer: Standardizer,
    pub model: Model,
}

impl FittedModel {
    pub fn predict(&self, x: &[f64]) -> bool {
        let z = self.standardizer.apply(x);
        match &self.model {
            Model::Lda(m) => m.predict(&z),
            Model::Svm(m) => m.predict(&z),
            Model::Constant { label } => *label,
        }
    }

    pub fn predict_all(&self, x: &[Vec<f64>]) -> Vec<bool> {
        x.iter().map(|r| self.predict(r)).collect()
    }
}

/// Selects hyperparameters by inner CV on the training rows, then fits on all of them.
pub fn fit(
    kind: ClassifierKind,
    x: &[Vec<f64>],
    y: &[bool],
    groups: &[String],
    config: &LearnerConfig,
    seed: u64,
) -> Result<FittedModel, LearnError> {
    match check_labels(x, y) {
        Err(LearnError::DegenerateLabels) => {
            log::warn!("{kind}: single-class training fold, predicting the constant label");
            return Ok(FittedModel {
                kind,
                params: HyperParams::default(),
                standardizer: Standardizer::identity(x[0].len()),
                model: Model::Constant { label: y[0] },
            });
        }
        r => {
            r?;
        }
    }
    let standardizer = if config.standardize {
        Standardizer::fit(x)
    } else {
        Standardizer::identity(x[0].len())
    };
    let params = inner_cv_select(x, y, groups, kind, &config.grid, config.inner_folds, seed, config)?;
    let z = standardizer.apply_all(x);
    let model = match kind {
        ClassifierKind::Lda => Model::Lda(train_lda(&z, y, config.lda_shrinkage)?),
        ClassifierKind::LinearSvm | ClassifierKind::RbfSvm => {
            let kernel = match kind {
                ClassifierKind::RbfSvm => Kernel::Rbf {
                    gamma: params.gamma.unwrap_or(1.0),
                },
                _ => Kernel::Linear,
            };
            let p = SvmParams {
                kernel,
                c: params.c.unwrap_or(1.0),
                tol: config.svm_tol,
                max_iter: config.svm_max_iter,
            };
            Model::Svm(train_svm(&z, y, &p)?)
        }
    };
    Ok(FittedModel {
        kind,
        params,
        standardizer,
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standardizer_fits_training_rows() {
        let x = vec![vec![1.0, 5.0], vec![3.0, 5.0]];
        let s = Standardizer::fit(&x);
        assert_eq!(s.mean, vec![2.0, 5.0]);
        assert_eq!(s.scale, vec![1.0, 1.0]);
        assert_eq!(s.apply(&[3.0, 7.0]), vec![1.0, 2.0]);
    }

    #[test]
    fn singleton_grid_returned_directly() {
        let x = vec![vec![0.0], vec![1.0]];
        let y = vec![false, true];
        let g = vec!["a".to_string(), "b".to_string()];
        let hp = inner_cv_select(&x, &y, &g, ClassifierKind::RbfSvm, &HyperGrid::single(10.0, 0.1), 5, 0, &LearnerConfig::default()).unwrap();
        assert_eq!(hp, HyperParams { c: Some(10.0), gamma: Some(0.1) });
    }

    #[test]
    fn ties_prefer_smaller_c() {
        // Perfectly separable: every C gives inner F1 = 1.
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![if i % 2 == 0 { 5.0 } else { -5.0 } + i as f64 * 0.01]).collect();
        let y: Vec<bool> = (0..20).map(|i| i % 2 == 0).collect();
        let g: Vec<String> = (0..20).map(|i| format!("v{}", i / 2)).collect();
        let grid = HyperGrid { c: vec![1.0, 10.0], gamma: vec![1.0] };
        let hp = inner_cv_select(&x, &y, &g, ClassifierKind::LinearSvm, &grid, 5, 3, &LearnerConfig::default()).unwrap();
        assert_eq!(hp.c, Some(1.0));
    }

    #[test]
    fn classifier_names_parse() {
        for k in ClassifierKind::ALL {
            assert_eq!(k.slug().parse::<ClassifierKind>().unwrap(), k);
        }
    }
}
