use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use super::StatsError;

/// Largest pooled sample size for which exact enumeration is used automatically.
pub const EXACT_RANKSUM_MAX_N: usize = 12;
/// Hard cap on forced exact enumeration.
const EXACT_RANKSUM_HARD_MAX_N: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    pub p: f64,
    pub n: usize,
}

/// Product-moment correlation with a two-sided t-test on `n − 2` degrees of freedom.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Correlation, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::Shape(format!("{} vs {} observations", x.len(), y.len())));
    }
    let n = x.len();
    if n < 3 {
        return Err(StatsError::Insufficient(format!("{n} observations, 3 needed")));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(StatsError::Undefined("zero variance".into()));
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p = if 1.0 - r.abs() < 1e-15 {
        0.0
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
        (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
    };
    Ok(Correlation { r, p, n })
}

/// Benjamini–Hochberg step-up: rejects the `k` smallest p-values for the largest `k`
/// with `p_(k) ≤ k·q/m`.
pub fn benjamini_hochberg(p: &[f64], q: f64) -> Vec<bool> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
    let k = order
        .iter()
        .enumerate()
        .filter(|(rank, &i)| p[i] <= (rank + 1) as f64 * q / m as f64)
        .map(|(rank, _)| rank + 1)
        .max()
        .unwrap_or(0);
    let mut out = vec![false; m];
    for &i in &order[..k] {
        out[i] = true;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PearsonFdr {
    pub r: f64,
    pub p: f64,
    /// Decision for the primary test followed by the supplied family, in order.
    pub significant: Vec<bool>,
}

/// Correlates `x` and `y`, then applies BH over this test plus `others` (`(r, p)` pairs).
pub fn pearson_fdr(x: &[f64], y: &[f64], others: &[(f64, f64)], q: f64) -> Result<PearsonFdr, StatsError> {
    let c = pearson(x, y)?;
    let ps: Vec<f64> = std::iter::once(c.p).chain(others.iter().map(|o| o.1)).collect();
    Ok(PearsonFdr {
        r: c.r,
        p: c.p,
        significant: benjamini_hochberg(&ps, q),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RankSumMethod {
    #[default]
    Auto,
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankSum {
    /// Mann–Whitney U of the first sample.
    pub u: f64,
    /// Rank sum of the first sample.
    pub w: f64,
    pub p: f64,
    pub exact: bool,
}

/// Midranks (1-based) of the pooled sample.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Two-sided Wilcoxon rank-sum test; exact when the pooled size is at most 12.
pub fn wilcoxon_ranksum(a: &[f64], b: &[f64]) -> Result<RankSum, StatsError> {
    wilcoxon_ranksum_with(a, b, RankSumMethod::Auto)
}

pub fn wilcoxon_ranksum_with(a: &[f64], b: &[f64], method: RankSumMethod) -> Result<RankSum, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::Insufficient("both samples need at least one value".into()));
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = pooled.len();
    let na = a.len();
    let ranks = midranks(&pooled);
    let w: f64 = ranks[..na].iter().sum();
    let u = w - (na * (na + 1)) as f64 / 2.0;
    let exact = match method {
        RankSumMethod::Auto => n <= EXACT_RANKSUM_MAX_N,
        RankSumMethod::Exact => {
            if n > EXACT_RANKSUM_HARD_MAX_N {
                return Err(StatsError::Insufficient(format!(
                    "exact enumeration limited to {EXACT_RANKSUM_HARD_MAX_N} values"
                )));
            }
            true
        }
        RankSumMethod::Normal => false,
    };
    let mu = na as f64 * (n + 1) as f64 / 2.0;
    let p = if exact {
        exact_p(&ranks, na, (w - mu).abs())
    } else {
        normal_p(&pooled, na, (w - mu).abs())
    };
    Ok(RankSum { u, w, p, exact })
}

fn exact_p(ranks: &[f64], na: usize, dev: f64) -> f64 {
    let n = ranks.len();
    let mu = na as f64 * (n + 1) as f64 / 2.0;
    let (mut hit, mut total) = (0u64, 0u64);
    fn walk(ranks: &[f64], start: usize, left: usize, sum: f64, mu: f64, dev: f64, hit: &mut u64, total: &mut u64) {
        if left == 0 {
            *total += 1;
            if (sum - mu).abs() >= dev - 1e-9 {
                *hit += 1;
            }
            return;
        }
        for i in start..=ranks.len() - left {
            walk(ranks, i + 1, left - 1, sum + ranks[i], mu, dev, hit, total);
        }
    }
    walk(ranks, 0, na, 0.0, mu, dev, &mut hit, &mut total);
    hit as f64 / total as f64
}

fn normal_p(pooled: &[f64], na: usize, dev: f64) -> f64 {
    let n = pooled.len() as f64;
    let nb = n - na as f64;
    let mut sorted = pooled.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut ties = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&v| v == sorted[i]).count();
        let t = j as f64;
        ties += t * t * t - t;
        i += j;
    }
    let var = na as f64 * nb / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)).max(1.0));
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((dev - 0.5).max(0.0)) / var.sqrt();
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    (2.0 * (1.0 - std.cdf(z))).clamp(0.0, 1.0)
}
