use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::StatsError;

/// Distance used by Krippendorff's α.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AlphaMetric {
    Nominal,
    #[default]
    Ordinal,
    Interval,
}

/// Coincidence matrix over the observed categories.
#[derive(Debug, Clone, PartialEq)]
pub struct Coincidences {
    pub categories: Vec<i64>,
    /// `o[c][k]`, symmetric.
    pub o: Vec<Vec<f64>>,
}

impl Coincidences {
    /// Builds the matrix from a raters × items grid; items with fewer than two ratings are dropped.
    pub fn from_grid<T: Copy + Into<i64>>(grid: &[Vec<Option<T>>]) -> Result<Self, StatsError> {
        let n_items = grid.first().map_or(0, Vec::len);
        if grid.iter().any(|r| r.len() != n_items) {
            return Err(StatsError::Shape("rating rows differ in length".into()));
        }
        let units: Vec<Vec<i64>> = (0..n_items)
            .map(|i| grid.iter().filter_map(|r| r[i].map(Into::into)).collect::<Vec<i64>>())
            .filter(|u| u.len() >= 2)
            .collect();
        if units.len() < 2 {
            return Err(StatsError::Insufficient(format!(
                "{} items with two or more ratings, 2 needed",
                units.len()
            )));
        }
        let mut categories: Vec<i64> = units.iter().flatten().copied().collect();
        categories.sort_unstable();
        categories.dedup();
        let index: BTreeMap<i64, usize> = categories.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        let q = categories.len();
        let mut o = vec![vec![0.0; q]; q];
        for u in &units {
            let w = 1.0 / (u.len() - 1) as f64;
            for (a, va) in u.iter().enumerate() {
                for (b, vb) in u.iter().enumerate() {
                    if a != b {
                        o[index[va]][index[vb]] += w;
                    }
                }
            }
        }
        Ok(Self { categories, o })
    }

    pub fn marginals(&self) -> Vec<f64> {
        self.o.iter().map(|row| row.iter().sum()).collect()
    }

    /// Squared distance between categories `c` and `k` (indices).
    pub fn delta2(&self, metric: AlphaMetric, c: usize, k: usize) -> f64 {
        match metric {
            AlphaMetric::Nominal => f64::from(u8::from(c != k)),
            AlphaMetric::Interval => {
                let d = (self.categories[c] - self.categories[k]) as f64;
                d * d
            }
            AlphaMetric::Ordinal => {
                let n = self.marginals();
                let (lo, hi) = (c.min(k), c.max(k));
                let s: f64 = n[lo..=hi].iter().sum::<f64>() - (n[c] + n[k]) / 2.0;
                s * s
            }
        }
    }
}

/// Krippendorff's α over a raters × items grid with missing entries.
pub fn krippendorff_alpha<T: Copy + Into<i64>>(
    grid: &[Vec<Option<T>>],
    metric: AlphaMetric,
) -> Result<f64, StatsError> {
    let co = Coincidences::from_grid(grid)?;
    let n_c = co.marginals();
    let n: f64 = n_c.iter().sum();
    let q = co.categories.len();
    let (mut obs, mut exp) = (0.0, 0.0);
    for c in 0..q {
        for k in 0..q {
            let d = co.delta2(metric, c, k);
            obs += co.o[c][k] * d;
            exp += n_c[c] * n_c[k] * d;
        }
    }
    if exp <= 0.0 {
        return Err(StatsError::Undefined("expected disagreement is zero".into()));
    }
    Ok(1.0 - (n - 1.0) * obs / exp)
}

/// Fleiss' κ over a complete raters × items grid of categorical labels.
pub fn fleiss_kappa<T: Ord + Copy>(grid: &[Vec<T>]) -> Result<f64, StatsError> {
    let raters = grid.len();
    let items = grid.first().map_or(0, Vec::len);
    if raters < 2 || items < 2 {
        return Err(StatsError::Insufficient(format!("{raters} raters × {items} items, 2 × 2 needed")));
    }
    if grid.iter().any(|r| r.len() != items) {
        return Err(StatsError::Shape("rating rows differ in length".into()));
    }
    let n = raters as f64;
    let mut totals: BTreeMap<T, f64> = BTreeMap::new();
    let mut p_bar = 0.0;
    for i in 0..items {
        let mut counts: BTreeMap<T, f64> = BTreeMap::new();
        for r in grid {
            *counts.entry(r[i]).or_default() += 1.0;
        }
        let sq: f64 = counts.values().map(|c| c * c).sum();
        p_bar += (sq - n) / (n * (n - 1.0));
        for (k, c) in counts {
            *totals.entry(k).or_default() += c;
        }
    }
    p_bar /= items as f64;
    let total = n * items as f64;
    let p_e: f64 = totals.values().map(|c| (c / total).powi(2)).sum();
    if (1.0 - p_e).abs() < 1e-15 {
        return Err(StatsError::Undefined("all ratings fall in one category".into()));
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

/// Returns the grid with every entry present, or an error naming the first gap.
pub fn complete_grid<T: Copy>(grid: &[Vec<Option<T>>]) -> Result<Vec<Vec<T>>, StatsError> {
    grid.iter()
        .enumerate()
        .map(|(r, row)| {
            row.iter()
                .enumerate()
                .map(|(i, v)| v.ok_or_else(|| StatsError::Incomplete { rater: r, item: i }))
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Thresholding {
    None,
    PerRaterMean,
    GrandMean,
}

/// High iff the score is strictly above the threshold; missing entries stay missing.
pub fn threshold_labels<T: Copy + Into<i64>>(
    grid: &[Vec<Option<T>>],
    scheme: Thresholding,
) -> Vec<Vec<Option<bool>>> {
    let mean = |vals: &mut dyn Iterator<Item = i64>| {
        let (s, n) = vals.fold((0i64, 0usize), |(s, n), v| (s + v, n + 1));
        (n > 0).then(|| s as f64 / n as f64)
    };
    let grand = mean(&mut grid.iter().flatten().filter_map(|v| v.map(Into::into)));
    grid.iter()
        .map(|row| {
            let th = match scheme {
                Thresholding::PerRaterMean => mean(&mut row.iter().filter_map(|v| v.map(Into::into))),
                Thresholding::GrandMean => grand,
                Thresholding::None => Some(0.0),
            };
            row.iter()
                .map(|v| v.map(|v| th.is_some_and(|t| Into::<i64>::into(v) as f64 > t)))
                .collect()
        })
        .collect()
}
