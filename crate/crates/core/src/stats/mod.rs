//! Annotator agreement, correlation under FDR control and rank-sum tests.

mod agreement;
mod hypothesis;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AffectDimension, AffectTask, RatingMatrix, VideoRecord};

pub use agreement::{
    complete_grid, fleiss_kappa, krippendorff_alpha, threshold_labels, AlphaMetric, Coincidences, Thresholding,
};
pub use hypothesis::{
    benjamini_hochberg, midranks, pearson, pearson_fdr, wilcoxon_ranksum, wilcoxon_ranksum_with, Correlation,
    PearsonFdr, RankSum, RankSumMethod, EXACT_RANKSUM_MAX_N,
};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("agreement undefined: {0}")]
    Undefined(String),
    #[error("not enough data: {0}")]
    Insufficient(String),
    #[error("rating grid incomplete at rater {rater}, item {item}")]
    Incomplete { rater: usize, item: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// Default false discovery rate for correlation families.
pub const DEFAULT_FDR_Q: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Coefficient {
    KrippendorffAlpha,
    FleissKappa,
}

/// One agreement coefficient, or the reason it could not be computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementResult {
    pub dimension: AffectDimension,
    pub coefficient: Coefficient,
    pub metric: AlphaMetric,
    pub thresholding: Thresholding,
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omitted: Option<String>,
}

impl AgreementResult {
    fn from_result(
        dimension: AffectDimension,
        coefficient: Coefficient,
        metric: AlphaMetric,
        thresholding: Thresholding,
        r: Result<f64, StatsError>,
    ) -> Self {
        let (value, omitted) = match r {
            Ok(v) => (Some(v), None),
            Err(e) => (None, Some(e.to_string())),
        };
        Self {
            dimension,
            coefficient,
            metric,
            thresholding,
            value,
            omitted,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTest {
    /// `mean` for the per-item mean ratings, otherwise a rater id.
    pub source: String,
    pub r: f64,
    pub p: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupComparison {
    pub dimension: AffectDimension,
    pub n_high: usize,
    pub n_low: usize,
    pub mean_high: f64,
    pub mean_low: f64,
    pub test: Option<RankSum>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omitted: Option<String>,
}

/// Contents of `agreement.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub n_raters: usize,
    pub n_items: usize,
    pub agreement: Vec<AgreementResult>,
    pub fdr_q: f64,
    pub correlations: Vec<CorrelationTest>,
    pub comparisons: Vec<GroupComparison>,
}

fn item_means(grid: &[Vec<Option<i8>>], n_items: usize) -> Vec<Option<f64>> {
    (0..n_items)
        .map(|i| {
            let v: Vec<f64> = grid.iter().filter_map(|r| r[i].map(f64::from)).collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        })
        .collect()
}

fn paired(a: &[Option<f64>], b: &[Option<f64>]) -> (Vec<f64>, Vec<f64>) {
    a.iter()
        .zip(b)
        .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
        .unzip()
}

/// Runs the full annotation analysis over a rating matrix and the videos' expert labels.
pub fn agreement_report(ratings: &RatingMatrix, videos: &[VideoRecord], q: f64) -> AgreementReport {
    let n_items = ratings.items.len();
    let mut agreement = Vec::new();
    for dim in AffectDimension::ALL {
        let grid = ratings.grid(dim);
        agreement.push(AgreementResult::from_result(
            dim,
            Coefficient::KrippendorffAlpha,
            AlphaMetric::Ordinal,
            Thresholding::None,
            krippendorff_alpha(grid, AlphaMetric::Ordinal),
        ));
        for scheme in [Thresholding::PerRaterMean, Thresholding::GrandMean] {
            let r = complete_grid(grid)
                .map(|_| threshold_labels(grid, scheme))
                .and_then(|labels| complete_grid(&labels))
                .and_then(|labels| fleiss_kappa(&labels));
            agreement.push(AgreementResult::from_result(
                dim,
                Coefficient::FleissKappa,
                AlphaMetric::Nominal,
                scheme,
                r,
            ));
        }
    }

    let mean_v = item_means(&ratings.valence, n_items);
    let mean_a = item_means(&ratings.arousal, n_items);
    let mut family: Vec<(String, Correlation)> = Vec::new();
    let (x, y) = paired(&mean_a, &mean_v);
    match pearson(&x, &y) {
        Ok(c) => family.push(("mean".into(), c)),
        Err(e) => log::warn!("mean-rating correlation skipped: {e}"),
    }
    for (r, rater) in ratings.raters.iter().enumerate() {
        let a: Vec<Option<f64>> = ratings.arousal[r].iter().map(|v| v.map(f64::from)).collect();
        let v: Vec<Option<f64>> = ratings.valence[r].iter().map(|v| v.map(f64::from)).collect();
        let (x, y) = paired(&a, &v);
        if let Ok(c) = pearson(&x, &y) {
            family.push((rater.clone(), c));
        }
    }
    let ps: Vec<f64> = family.iter().map(|(_, c)| c.p).collect();
    let sig = benjamini_hochberg(&ps, q);
    let correlations = family
        .into_iter()
        .zip(sig)
        .map(|((source, c), significant)| CorrelationTest {
            source,
            r: c.r,
            p: c.p,
            significant,
        })
        .collect();

    let mut comparisons = Vec::new();
    for dim in AffectDimension::ALL {
        let means = match dim {
            AffectDimension::Valence => &mean_v,
            AffectDimension::Arousal => &mean_a,
        };
        let task = AffectTask::new(dim);
        let (mut hi, mut lo) = (Vec::new(), Vec::new());
        for (item, m) in ratings.items.iter().zip(means) {
            let (Some(m), Some(v)) = (m, videos.iter().find(|v| &v.id == item)) else {
                continue;
            };
            if task.label_of(v).is_high() {
                hi.push(*m);
            } else {
                lo.push(*m);
            }
        }
        let avg = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
        let (test, omitted) = match wilcoxon_ranksum(&hi, &lo) {
            Ok(t) => (Some(t), None),
            Err(e) => (None, Some(e.to_string())),
        };
        comparisons.push(GroupComparison {
            dimension: dim,
            n_high: hi.len(),
            n_low: lo.len(),
            mean_high: avg(&hi),
            mean_low: avg(&lo),
            test,
            omitted,
        });
    }

    AgreementReport {
        n_raters: ratings.raters.len(),
        n_items,
        agreement,
        fdr_q: q,
        correlations,
        comparisons,
    }
}
