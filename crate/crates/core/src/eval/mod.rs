//! Repeated group-aware cross-validation, F1 scoring and the results table.

mod protocol;
mod report;

use thiserror::Error;

pub use protocol::{
    cell_scores, run_protocol, Aggregation, CvPlan, DesignKey, DesignSet, Learner, OracleLearner, ProtocolOptions,
    Split, SpreadOver, StandardLearner,
};
pub use report::{CellStat, EvalReport, ReportRow, CSV_DECIMALS};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{0}")]
    Contract(String),
    #[error("{found} groups available, {needed} folds requested")]
    TooFewGroups { found: usize, needed: usize },
    #[error("learner failed: {0}")]
    Learner(String),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// F1 of the positive class; zero when precision and recall are both zero.
pub fn f1_score(y_true: &[bool], y_pred: &[bool]) -> Result<f64, EvalError> {
    if y_true.len() != y_pred.len() {
        return Err(EvalError::Contract(format!(
            "{} labels but {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(EvalError::Contract("empty label vector".into()));
    }
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t, p) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fneg += 1,
            _ => {}
        }
    }
    let precision = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
    let recall = if tp + fneg > 0 { tp as f64 / (tp + fneg) as f64 } else { 0.0 };
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f1_examples() {
        assert_eq!(f1_score(&[true, false, true], &[true, false, true]).unwrap(), 1.0);
        let truth: Vec<bool> = (0..10).map(|i| i < 6).collect();
        assert!((f1_score(&truth, &[true; 10]).unwrap() - 0.75).abs() < 1e-12);
        assert_eq!(f1_score(&[false, false], &[false, false]).unwrap(), 0.0);
        assert!(f1_score(&[true], &[true, false]).is_err());
        assert!(f1_score(&[], &[]).is_err());
    }
}
