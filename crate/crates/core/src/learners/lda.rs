use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{check_labels, LearnError};

/// Default ridge added to the pooled covariance, relative to its mean eigenvalue.
pub const DEFAULT_LDA_SHRINKAGE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    pub w: Vec<f64>,
    pub b: f64,
    /// Class priors `(P(High), P(Low))` of the training set.
    pub priors: (f64, f64),
}

impl LdaModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.b
    }

    pub fn predict(&self, x: &[f64]) -> bool {
        self.decision(x) > 0.0
    }
}

/// Two-class Fisher discriminant with shrinkage `λ = shrinkage · tr(Σ) / d`.
///
/// Uses the Woodbury identity when there are more features than samples.
pub fn train_lda(x: &[Vec<f64>], y: &[bool], shrinkage: f64) -> Result<LdaModel, LearnError> {
    let (n_pos, n_neg) = check_labels(x, y)?;
    let n = x.len();
    let d = x[0].len();
    let mut mu_p = DVector::<f64>::zeros(d);
    let mut mu_n = DVector::<f64>::zeros(d);
    for (row, &label) in x.iter().zip(y) {
        let mu = if label { &mut mu_p } else { &mut mu_n };
        for (m, v) in mu.iter_mut().zip(row) {
            *m += v;
        }
    }
    mu_p /= n_pos as f64;
    mu_n /= n_neg as f64;

    let z = DMatrix::from_fn(n, d, |i, j| x[i][j] - if y[i] { mu_p[j] } else { mu_n[j] });
    let dof = n.saturating_sub(2).max(1) as f64;
    let trace = z.iter().map(|v| v * v).sum::<f64>() / dof;
    let mut lambda = shrinkage * trace / d as f64;
    if trace == 0.0 {
        lambda = shrinkage;
    }
    let diff = &mu_p - &mu_n;

    let w = if d > n && lambda > 0.0 {
        // (λI + ZᵀZ/m)⁻¹ v = (v − Zᵀ (mλI + ZZᵀ)⁻¹ Z v) / λ
        let mut small = &z * z.transpose();
        for i in 0..n {
            small[(i, i)] += dof * lambda;
        }
        let zv = &z * &diff;
        let inner = solve_spd(small, &zv).ok_or(LearnError::Singular)?;
        (&diff - z.transpose() * inner) / lambda
    } else {
        let mut cov = z.transpose() * &z / dof;
        for i in 0..d {
            cov[(i, i)] += lambda;
        }
        solve_spd(cov, &diff).ok_or(LearnError::Singular)?
    };
    if w.iter().any(|v| !v.is_finite()) {
        return Err(LearnError::Singular);
    }
    let pi_p = n_pos as f64 / n as f64;
    let pi_n = n_neg as f64 / n as f64;
    let mid = (&mu_p + &mu_n) / 2.0;
    let b = -w.dot(&mid) + (pi_p / pi_n).ln();
    Ok(LdaModel {
        w: w.iter().copied().collect(),
        b,
        priors: (pi_p, pi_n),
    })
}

fn solve_spd(a: DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        return Some(ch.solve(b));
    }
    a.lu().solve(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn clouds(n: usize, sep: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<bool>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let nd = Normal::new(0.0, 1.0).unwrap();
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let pos = i % 2 == 0;
            let c = if pos { sep } else { -sep };
            x.push(vec![c + nd.sample(&mut rng), nd.sample(&mut rng)]);
            y.push(pos);
        }
        (x, y)
    }

    #[test]
    fn separated_clouds() {
        let (x, y) = clouds(2000, 5.0, 1);
        let m = train_lda(&x, &y, DEFAULT_LDA_SHRINKAGE).unwrap();
        let acc = x.iter().zip(&y).filter(|(r, &l)| m.predict(r) == l).count() as f64 / 2000.0;
        assert!(acc >= 0.99);
        let angle = m.w[1].atan2(m.w[0]).to_degrees().abs();
        assert!(angle < 5.0, "{angle}");
    }

    #[test]
    fn duplicated_columns_still_solve() {
        let (x, y) = clouds(50, 2.0, 2);
        let x: Vec<Vec<f64>> = x.into_iter().map(|r| vec![r[0], r[1], r[0], r[1]]).collect();
        let m = train_lda(&x, &y, DEFAULT_LDA_SHRINKAGE).unwrap();
        assert!(m.w.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn single_class_rejected() {
        let x = vec![vec![1.0], vec![2.0]];
        assert!(matches!(train_lda(&x, &[true, true], 1e-6), Err(LearnError::DegenerateLabels)));
    }

    #[test]
    fn woodbury_matches_direct_solve() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let nd = Normal::new(0.0, 1.0).unwrap();
        let x: Vec<Vec<f64>> = (0..12).map(|_| (0..30).map(|_| nd.sample(&mut rng)).collect()).collect();
        let y: Vec<bool> = (0..12).map(|i| i % 3 == 0).collect();
        let m = train_lda(&x, &y, 0.5).unwrap();
        // direct d×d solve
        let n_pos = y.iter().filter(|&&b| b).count() as f64;
        let mut mp = vec![0.0; 30];
        let mut mn = vec![0.0; 30];
        for (r, &l) in x.iter().zip(&y) {
            for j in 0..30 {
                if l { mp[j] += r[j] / n_pos } else { mn[j] += r[j] / (12.0 - n_pos) }
            }
        }
        let mut cov = DMatrix::<f64>::zeros(30, 30);
        for (r, &l) in x.iter().zip(&y) {
            let c: Vec<f64> = (0..30).map(|j| r[j] - if l { mp[j] } else { mn[j] }).collect();
            for a in 0..30 {
                for b in 0..30 {
                    cov[(a, b)] += c[a] * c[b] / 10.0;
                }
            }
        }
        let lambda = 0.5 * cov.trace() / 30.0;
        for i in 0..30 {
            cov[(i, i)] += lambda;
        }
        let diff = DVector::from_fn(30, |j, _| mp[j] - mn[j]);
        let w = cov.lu().solve(&diff).unwrap();
        for j in 0..30 {
            assert!((w[j] - m.w[j]).abs() < 1e-8 * (1.0 + w[j].abs()));
        }
    }

    #[test]
    fn affine_rescaling_keeps_predictions() {
        let (x, y) = clouds(60, 1.0, 9);
        let m = train_lda(&x, &y, 0.0).unwrap();
        let xs: Vec<Vec<f64>> = x.iter().map(|r| r.iter().map(|v| 7.0 * v - 3.0).collect()).collect();
        let ms = train_lda(&xs, &y, 0.0).unwrap();
        for (a, b) in x.iter().zip(&xs) {
            assert_eq!(m.predict(a), ms.predict(b));
        }
    }
}
