use serde::{Deserialize, Serialize};

use super::{check_labels, LearnError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => dot(a, b),
            Kernel::Rbf { gamma } => (-gamma * sq_dist(a, b)).exp(),
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub kernel: Kernel,
    pub c: f64,
    /// Stopping tolerance on the maximal KKT violation.
    pub tol: f64,
    /// Cap on pair updates.
    pub max_iter: usize,
}

impl SvmParams {
    pub fn new(kernel: Kernel, c: f64) -> Self {
        Self {
            kernel,
            c,
            tol: 1e-3,
            max_iter: 100_000,
        }
    }
}

/// Dense symmetric kernel matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Gram {
    n: usize,
    data: Vec<f64>,
}

impl Gram {
    pub fn compute(x: &[Vec<f64>], kernel: Kernel) -> Self {
        let n = x.len();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let k = kernel.eval(&x[i], &x[j]);
                data[i * n + j] = k;
                data[j * n + i] = k;
            }
        }
        Self { n, data }
    }

    /// Evaluates `f` on the upper triangle and mirrors it.
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = f(i, j);
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        Self { n, data }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }
}

/// Solution of the soft-margin dual for `f(x) = Σ αᵢ yᵢ K(xᵢ, x) + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    pub b: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Maximal KKT violation `m(α) − M(α)` at return.
    pub violation: f64,
}

const TAU: f64 = 1e-12;

#[inline]
fn sign(y: bool) -> f64 {
    if y {
        1.0
    } else {
        -1.0
    }
}

/// Maximal violating pair `(i, m, j, M)` for the current gradient.
fn select_pair(alpha: &[f64], grad: &[f64], ys: &[f64], c: f64) -> (Option<usize>, f64, Option<usize>, f64) {
    let (mut i, mut m) = (None, f64::NEG_INFINITY);
    let (mut j, mut big_m) = (None, f64::INFINITY);
    for t in 0..alpha.len() {
        let v = -ys[t] * grad[t];
        let up = (ys[t] > 0.0 && alpha[t] < c) || (ys[t] < 0.0 && alpha[t] > 0.0);
        let low = (ys[t] < 0.0 && alpha[t] < c) || (ys[t] > 0.0 && alpha[t] > 0.0);
        if up && v > m {
            m = v;
            i = Some(t);
        }
        if low && v < big_m {
            big_m = v;
            j = Some(t);
        }
    }
    (i, m, j, big_m)
}

/// Sequential minimal optimisation with maximal-violating-pair working-set selection.
pub fn solve_dual(gram: &Gram, y: &[bool], c: f64, tol: f64, max_iter: usize) -> DualSolution {
    let n = gram.len();
    let ys: Vec<f64> = y.iter().map(|&v| sign(v)).collect();
    let mut alpha = vec![0.0; n];
    // gradient of ½αᵀQα − eᵀα
    let mut grad = vec![-1.0; n];
    let mut iterations = 0;
    let mut converged = false;
    let (mut m, mut big_m);
    loop {
        let (i, mi, j, mj) = select_pair(&alpha, &grad, &ys, c);
        m = mi;
        big_m = mj;
        let (Some(i), Some(j)) = (i, j) else {
            converged = true;
            break;
        };
        if m - big_m <= tol {
            converged = true;
            break;
        }
        if iterations >= max_iter {
            break;
        }
        iterations += 1;

        let (kii, kjj, kij) = (gram.get(i, i), gram.get(j, j), gram.get(i, j));
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if ys[i] != ys[j] {
            let quad = (kii + kjj + 2.0 * ys[i] * ys[j] * kij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (kii + kjj - 2.0 * ys[i] * ys[j] * kij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        let (ri, rj) = (gram.row(i), gram.row(j));
        for t in 0..n {
            grad[t] += ys[t] * (ys[i] * ri[t] * di + ys[j] * rj[t] * dj);
        }
    }
    let b = free_bias(&alpha, &grad, &ys, c).unwrap_or(if m.is_finite() && big_m.is_finite() {
        (m + big_m) / 2.0
    } else {
        0.0
    });
    DualSolution {
        alpha,
        b,
        converged,
        iterations,
        violation: if m.is_finite() && big_m.is_finite() { (m - big_m).max(0.0) } else { 0.0 },
    }
}

/// Mean of `−yᵢ Gᵢ` over free multipliers, if any.
fn free_bias(alpha: &[f64], grad: &[f64], ys: &[f64], c: f64) -> Option<f64> {
    let (mut s, mut k) = (0.0, 0usize);
    for t in 0..alpha.len() {
        if alpha[t] > 0.0 && alpha[t] < c {
            s += -ys[t] * grad[t];
            k += 1;
        }
    }
    (k > 0).then(|| s / k as f64)
}

/// `½ αᵀQα − Σα` with `Q = yyᵀ ∘ K`.
pub fn dual_objective(gram: &Gram, y: &[bool], alpha: &[f64]) -> f64 {
    let n = gram.len();
    let mut quad = 0.0;
    for i in 0..n {
        if alpha[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            quad += alpha[i] * alpha[j] * sign(y[i]) * sign(y[j]) * gram.get(i, j);
        }
    }
    0.5 * quad - alpha.iter().sum::<f64>()
}

/// Maximal KKT violation `m(α) − M(α)` (zero at an exact optimum).
pub fn kkt_violation(gram: &Gram, y: &[bool], alpha: &[f64], c: f64) -> f64 {
    let n = gram.len();
    let ys: Vec<f64> = y.iter().map(|&v| sign(v)).collect();
    let grad: Vec<f64> = (0..n)
        .map(|t| ys[t] * (0..n).map(|s| ys[s] * alpha[s] * gram.get(t, s)).sum::<f64>() - 1.0)
        .collect();
    let (_, m, _, big_m) = select_pair(alpha, &grad, &ys, c);
    if m.is_finite() && big_m.is_finite() {
        (m - big_m).max(0.0)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub kernel: Kernel,
    pub c: f64,
    pub support_vectors: Vec<Vec<f64>>,
    /// `αᵢ yᵢ` for each support vector.
    pub dual_coef: Vec<f64>,
    pub b: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Full multiplier vector over the training set.
    pub alpha: Vec<f64>,
}

impl SvmModel {
    pub fn from_solution(x: &[Vec<f64>], y: &[bool], params: &SvmParams, sol: DualSolution) -> Self {
        let mut support_vectors = Vec::new();
        let mut dual_coef = Vec::new();
        for (i, &a) in sol.alpha.iter().enumerate() {
            if a > 0.0 {
                support_vectors.push(x[i].clone());
                dual_coef.push(a * sign(y[i]));
            }
        }
        Self {
            kernel: params.kernel,
            c: params.c,
            support_vectors,
            dual_coef,
            b: sol.b,
            converged: sol.converged,
            iterations: sol.iterations,
            alpha: sol.alpha,
        }
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.dual_coef)
            .map(|(sv, a)| a * self.kernel.eval(sv, x))
            .sum::<f64>()
            + self.b
    }

    pub fn predict(&self, x: &[f64]) -> bool {
        self.decision(x) > 0.0
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serialises")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// Soft-margin SVM. A run that hits `max_iter` returns the last iterate with `converged = false`.
pub fn train_svm(x: &[Vec<f64>], y: &[bool], params: &SvmParams) -> Result<SvmModel, LearnError> {
    check_labels(x, y)?;
    if !(params.c > 0.0 && params.c.is_finite()) {
        return Err(LearnError::InvalidParameter(format!("C must be positive, got {}", params.c)));
    }
    if let Kernel::Rbf { gamma } = params.kernel {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(LearnError::InvalidParameter(format!("gamma must be positive, got {gamma}")));
        }
    }
    let gram = Gram::compute(x, params.kernel);
    let sol = solve_dual(&gram, y, params.c, params.tol, params.max_iter);
    if !sol.converged {
        log::warn!("SVM stopped after {} iterations (violation {:.3e})", sol.iterations, sol.violation);
    }
    Ok(SvmModel::from_solution(x, y, params, sol))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xor() -> (Vec<Vec<f64>>, Vec<bool>) {
        (
            vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![false, false, true, true],
        )
    }

    fn accuracy(m: &SvmModel, x: &[Vec<f64>], y: &[bool]) -> f64 {
        x.iter().zip(y).filter(|(r, &l)| m.predict(r) == l).count() as f64 / y.len() as f64
    }

    #[test]
    fn xor_linear_vs_rbf() {
        let (x, y) = xor();
        let lin = train_svm(&x, &y, &SvmParams::new(Kernel::Linear, 1.0)).unwrap();
        assert!(accuracy(&lin, &x, &y) <= 0.5);
        let rbf = train_svm(&x, &y, &SvmParams::new(Kernel::Rbf { gamma: 1.0 }, 10.0)).unwrap();
        assert_eq!(accuracy(&rbf, &x, &y), 1.0);
    }

    #[test]
    fn hand_placed_margin() {
        // Closest points (0,0) and (2,0): maximum margin 2, w = (1, 0), b = −1.
        let x = vec![vec![0.0, 0.0], vec![-1.0, 1.0], vec![-2.0, -1.0], vec![2.0, 0.0], vec![3.0, 1.0], vec![4.0, -2.0]];
        let y = vec![false, false, false, true, true, true];
        let m = train_svm(&x, &y, &SvmParams { tol: 1e-6, ..SvmParams::new(Kernel::Linear, 1e3) }).unwrap();
        let w0: f64 = m.support_vectors.iter().zip(&m.dual_coef).map(|(s, a)| a * s[0]).sum();
        let w1: f64 = m.support_vectors.iter().zip(&m.dual_coef).map(|(s, a)| a * s[1]).sum();
        let margin = 2.0 / w0.hypot(w1);
        assert!((margin - 2.0).abs() < 1e-3, "{margin}");
        assert!((m.b + 1.0).abs() < 1e-3);
    }

    #[test]
    fn feasibility_and_round_trip() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![(i as f64 * 0.37).sin() * 3.0, (i as f64 * 1.3).cos()]).collect();
        let y: Vec<bool> = (0..20).map(|i| (i * 7) % 3 == 0).collect();
        let p = SvmParams::new(Kernel::Rbf { gamma: 0.5 }, 2.0);
        let m = train_svm(&x, &y, &p).unwrap();
        assert!(m.alpha.iter().all(|&a| (0.0..=2.0).contains(&a)));
        let balance: f64 = m.alpha.iter().zip(&y).map(|(a, &l)| a * sign(l)).sum();
        assert!(balance.abs() < 1e-6);
        assert!(kkt_violation(&Gram::compute(&x, p.kernel), &y, &m.alpha, 2.0) <= 1e-3 + 1e-9);
        let back = SvmModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn duplicated_training_set_same_decisions() {
        let x = vec![vec![0.0, 0.5], vec![1.0, 1.5], vec![-1.0, 0.0], vec![3.0, 3.0], vec![4.0, 2.5], vec![3.5, 4.0]];
        let y = vec![false, false, false, true, true, true];
        let p = SvmParams { tol: 1e-6, ..SvmParams::new(Kernel::Linear, 10.0) };
        let a = train_svm(&x, &y, &p).unwrap();
        let mut x2 = x.clone();
        x2.extend(x.iter().cloned());
        let mut y2 = y.clone();
        y2.extend(y.iter().copied());
        let b = train_svm(&x2, &y2, &p).unwrap();
        for gx in -4..8 {
            for gy in -4..8 {
                let q = [gx as f64 * 0.7, gy as f64 * 0.6];
                assert!((a.decision(&q) - b.decision(&q)).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        let (x, y) = xor();
        assert!(train_svm(&x, &y, &SvmParams::new(Kernel::Linear, 0.0)).is_err());
        assert!(train_svm(&x, &[true; 4], &SvmParams::new(Kernel::Linear, 1.0)).is_err());
    }

    #[test]
    fn iteration_cap_flags_non_convergence() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![(i as f64).sin(), (i as f64 * 0.3).cos()]).collect();
        let y: Vec<bool> = (0..30).map(|i| i % 2 == 0).collect();
        let m = train_svm(&x, &y, &SvmParams { max_iter: 2, ..SvmParams::new(Kernel::Linear, 100.0) }).unwrap();
        assert!(!m.converged);
        assert_eq!(m.iterations, 2);
    }
}
