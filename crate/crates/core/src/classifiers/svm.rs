//! Kernel SVM trained by sequential minimal optimization.
//!
//! The dual `min 1/2 a'Qa - e'a, 0 <= a <= C, y'a = 0` is solved with
//! second-order working set selection. Multiclass problems are split
//! one-vs-rest; a two-class problem trains a single machine for class 1.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{Gamma, KernelKind, SvmParams};

const TAU: f64 = 1e-12;
const TOLERANCE: f64 = 1e-3;
const MAX_ITER_FLOOR: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub kind: KernelKind,
    pub gamma: f64,
    pub degree: u32,
    pub coef0: f64,
}

impl Kernel {
    pub fn from_params(params: &SvmParams, n_features: usize) -> Self {
        let gamma = match params.gamma {
            Gamma::InverseFeatures => 1.0 / n_features as f64,
            Gamma::Value(g) => g,
        };
        Kernel { kind: params.kernel, gamma, degree: params.degree, coef0: 0.0 }
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.kind {
            KernelKind::Linear => dot(a, b),
            KernelKind::Polynomial => libm::pow(self.gamma * dot(a, b) + self.coef0, self.degree as f64),
            KernelKind::Rbf => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                libm::exp(-self.gamma * d2)
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Symmetric kernel matrix, stored full for O(1) row access.
pub(crate) struct KernelMatrix {
    n: usize,
    values: Vec<f64>,
}

impl KernelMatrix {
    pub(crate) fn new(kernel: &Kernel, x: &[&[f64]]) -> Self {
        let n = x.len();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let k = kernel.eval(x[i], x[j]);
                values[i * n + j] = k;
                values[j * n + i] = k;
            }
        }
        KernelMatrix { n, values }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }
}

/// One binary machine: `f(x) = sum_i coef_i K(sv_i, x) - rho`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySvm {
    pub support_indices: Vec<usize>,
    /// `alpha_i * y_i` per support vector.
    pub coefficients: Vec<f64>,
    pub rho: f64,
}

/// Fitted one-vs-rest SVM. Support vectors are stored once and shared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub kernel: Kernel,
    pub support_vectors: Vec<Vec<f64>>,
    pub machines: Vec<BinarySvm>,
    pub n_classes: usize,
}

/// Solves one binary dual. `y` holds +1/-1.
pub(crate) fn solve_binary(k: &KernelMatrix, y: &[f64], c: f64) -> (Vec<f64>, f64) {
    let n = y.len();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let diag: Vec<f64> = (0..n).map(|i| k.row(i)[i]).collect();

    let upper = |a: f64| a >= c;
    let lower = |a: f64| a <= 0.0;

    let max_iter = MAX_ITER_FLOOR.max(100 * n);
    for _ in 0..max_iter {
        // i: maximal violating index in I_up
        let mut g_max = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        for t in 0..n {
            if y[t] > 0.0 {
                if !upper(alpha[t]) && -grad[t] >= g_max {
                    g_max = -grad[t];
                    i_sel = t;
                }
            } else if !lower(alpha[t]) && grad[t] >= g_max {
                g_max = grad[t];
                i_sel = t;
            }
        }
        if i_sel == usize::MAX {
            break;
        }
        let i = i_sel;
        let k_i = k.row(i);

        // j: second-order selection in I_low
        let mut g_max2 = f64::NEG_INFINITY;
        let mut j_sel = usize::MAX;
        let mut best_obj = f64::INFINITY;
        for t in 0..n {
            let q_it = y[i] * y[t] * k_i[t];
            if y[t] > 0.0 {
                if !lower(alpha[t]) {
                    let grad_diff = g_max + grad[t];
                    if grad[t] >= g_max2 {
                        g_max2 = grad[t];
                    }
                    if grad_diff > 0.0 {
                        let quad = diag[i] + diag[t] - 2.0 * y[i] * q_it;
                        let obj = -(grad_diff * grad_diff) / if quad > 0.0 { quad } else { TAU };
                        if obj <= best_obj {
                            best_obj = obj;
                            j_sel = t;
                        }
                    }
                }
            } else if !upper(alpha[t]) {
                let grad_diff = g_max - grad[t];
                if -grad[t] >= g_max2 {
                    g_max2 = -grad[t];
                }
                if grad_diff > 0.0 {
                    let quad = diag[i] + diag[t] + 2.0 * y[i] * q_it;
                    let obj = -(grad_diff * grad_diff) / if quad > 0.0 { quad } else { TAU };
                    if obj <= best_obj {
                        best_obj = obj;
                        j_sel = t;
                    }
                }
            }
        }
        if g_max + g_max2 < TOLERANCE || j_sel == usize::MAX {
            break;
        }
        let j = j_sel;
        let k_j = k.row(j);
        let q_ij = y[i] * y[j] * k_i[j];
        let (old_i, old_j) = (alpha[i], alpha[j]);

        if y[i] != y[j] {
            let quad = diag[i] + diag[j] + 2.0 * q_ij;
            let quad = if quad > 0.0 { quad } else { TAU };
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
            let quad = diag[i] + diag[j] - 2.0 * q_ij;
            let quad = if quad > 0.0 { quad } else { TAU };
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

        let (d_i, d_j) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * k_i[t] * d_i + y[j] * k_j[t] * d_j);
        }
    }

    // offset from free vectors, else midpoint of the feasible interval
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum_free) = (0usize, 0.0);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if upper(alpha[t]) {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if lower(alpha[t]) {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum_free += yg;
        }
    }
    let rho = if free > 0 { sum_free / free as f64 } else { (ub + lb) / 2.0 };
    (alpha, rho)
}

pub(crate) fn fit(params: &SvmParams, x: &[&[f64]], labels: &[usize], n_classes: usize) -> SvmModel {
    let n_features = x.first().map_or(0, |r| r.len());
    let kernel = Kernel::from_params(params, n_features);
    let matrix = KernelMatrix::new(&kernel, x);

    let targets: Vec<usize> = if n_classes == 2 { vec![1] } else { (0..n_classes).collect() };
    let mut raw: Vec<(Vec<f64>, f64)> = Vec::with_capacity(targets.len());
    for &class in &targets {
        let y: Vec<f64> = labels.iter().map(|&l| if l == class { 1.0 } else { -1.0 }).collect();
        if y.iter().all(|&v| v < 0.0) {
            // class absent from this training set: never fires
            raw.push((vec![0.0; y.len()], 1.0));
            continue;
        }
        let (alpha, rho) = solve_binary(&matrix, &y, params.c);
        let coef = alpha.iter().zip(&y).map(|(a, yy)| a * yy).collect();
        raw.push((coef, rho));
    }

    // shared support set: any sample with a nonzero coefficient in some machine
    let in_support: Vec<usize> = (0..x.len()).filter(|&i| raw.iter().any(|(c, _)| c[i] != 0.0)).collect();
    let support_vectors = in_support.iter().map(|&i| x[i].to_vec()).collect();
    let machines = raw
        .iter()
        .map(|(coef, rho)| {
            let (support_indices, coefficients) = in_support
                .iter()
                .enumerate()
                .filter(|(_, &i)| coef[i] != 0.0)
                .map(|(pos, &i)| (pos, coef[i]))
                .unzip();
            BinarySvm { support_indices, coefficients, rho: *rho }
        })
        .collect();
    SvmModel { kernel, support_vectors, machines, n_classes }
}

impl SvmModel {
    /// Signed margins, one per class. Two-class models report `[-m, m]`.
    pub fn decision_scores(&self, x: &[f64]) -> Vec<f64> {
        let kernel_row: Vec<f64> = self.support_vectors.iter().map(|sv| self.kernel.eval(sv, x)).collect();
        let margins: Vec<f64> = self
            .machines
            .iter()
            .map(|m| {
                m.support_indices.iter().zip(&m.coefficients).map(|(&i, c)| c * kernel_row[i]).sum::<f64>() - m.rho
            })
            .collect();
        if self.n_classes == 2 {
            vec![-margins[0], margins[0]]
        } else {
            margins
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear(c: f64) -> SvmParams {
        SvmParams { c, kernel: KernelKind::Linear, degree: 1, gamma: Gamma::InverseFeatures }
    }

    #[test]
    fn two_point_problem_has_closed_form() {
        // x = -1 (neg), x = +1 (pos), linear kernel, large C:
        // alpha = 0.5 each, w = 1, rho = 0
        let a = [-1.0];
        let b = [1.0];
        let x: Vec<&[f64]> = vec![&a, &b];
        let model = fit(&linear(10.0), &x, &[0, 1], 2);
        let s = model.decision_scores(&[1.0]);
        assert!((s[1] - 1.0).abs() < 1e-9, "{s:?}");
        assert!((model.decision_scores(&[0.0])[1]).abs() < 1e-9);
        assert!((model.decision_scores(&[-3.0])[1] + 3.0).abs() < 1e-9);
    }

    #[test]
    fn polynomial_and_rbf_kernels() {
        let k = Kernel { kind: KernelKind::Polynomial, gamma: 0.5, degree: 2, coef0: 0.0 };
        assert_eq!(k.eval(&[1.0, 2.0], &[3.0, 4.0]), 30.25);
        let k = Kernel { kind: KernelKind::Rbf, gamma: 0.5, degree: 0, coef0: 0.0 };
        assert!((k.eval(&[0.0, 0.0], &[1.0, 1.0]) - libm::exp(-1.0)).abs() < 1e-15);
    }

    #[test]
    fn kkt_conditions_hold_at_solution() {
        let pts: Vec<[f64; 2]> = (0..20)
            .map(|i| {
                let f = i as f64;
                [libm::sin(f) * 2.0 + if i % 2 == 0 { 1.0 } else { -1.0 }, libm::cos(f * 1.7)]
            })
            .collect();
        let x: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        let y: Vec<f64> = (0..20).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let kernel = Kernel { kind: KernelKind::Rbf, gamma: 0.5, degree: 0, coef0: 0.0 };
        let km = KernelMatrix::new(&kernel, &x);
        let c = 1.0;
        let (alpha, rho) = solve_binary(&km, &y, c);
        let eq: f64 = alpha.iter().zip(&y).map(|(a, yy)| a * yy).sum();
        assert!(eq.abs() < 1e-9);
        for i in 0..20 {
            let f: f64 = (0..20).map(|j| alpha[j] * y[j] * km.row(i)[j]).sum::<f64>() - rho;
            let m = y[i] * f;
            if alpha[i] <= 0.0 {
                assert!(m >= 1.0 - 2e-3, "i={i} m={m}");
            } else if alpha[i] >= c {
                assert!(m <= 1.0 + 2e-3, "i={i} m={m}");
            } else {
                assert!((m - 1.0).abs() < 2e-3, "i={i} m={m}");
            }
        }
    }
}
