//! Sequential minimal optimisation for the C-SVM dual
//!
//! ```text
//! max  sum(a) - 1/2 a^T Q a    s.t.  0 <= a_i <= C,  y^T a = 0,
//! Q_ij = y_i y_j K(x_i, x_j)
//! ```
//!
//! Working pairs are the maximal violating pair; ties go to the lowest
//! index, so a run is fully determined by its inputs.

use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

use rayon::prelude::*;

use super::kernel::KernelSpec;

const TAU: f64 = 1e-12;
const CACHE_BYTES: usize = 256 << 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoParams {
    pub c: f64,
    pub tolerance: f64,
    /// Consecutive pair updates that leave the multipliers unchanged before
    /// the solver gives up.
    pub max_passes: usize,
    pub max_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Final `m(a) - M(a)` gap between the violating sets.
    pub gap: f64,
}

impl SmoSolution {
    pub fn dual_coefs(&self, y: &[f64]) -> Vec<f64> {
        self.alpha.iter().zip(y).map(|(a, y)| a * y).collect()
    }
}

/// Kernel rows computed on demand with a bounded FIFO cache.
struct KernelRows<'a> {
    data: &'a [Vec<f64>],
    kernel: KernelSpec,
    cache: HashMap<usize, Arc<[f64]>>,
    order: VecDeque<usize>,
    capacity: usize,
}

impl<'a> KernelRows<'a> {
    fn new(data: &'a [Vec<f64>], kernel: KernelSpec) -> Self {
        let row_bytes = data.len().max(1) * std::mem::size_of::<f64>();
        Self {
            data,
            kernel,
            cache: HashMap::new(),
            order: VecDeque::new(),
            capacity: (CACHE_BYTES / row_bytes).max(2),
        }
    }

    fn row(&mut self, i: usize) -> Arc<[f64]> {
        if let Some(r) = self.cache.get(&i) {
            return Arc::clone(r);
        }
        let xi = &self.data[i];
        let kernel = self.kernel;
        let row: Arc<[f64]> = self
            .data
            .par_iter()
            .map(|xj| kernel.eval(xi, xj))
            .collect::<Vec<_>>()
            .into();
        if self.order.len() == self.capacity {
            if let Some(old) = self.order.pop_front() {
                self.cache.remove(&old);
            }
        }
        self.order.push_back(i);
        self.cache.insert(i, Arc::clone(&row));
        row
    }
}

#[inline]
fn in_up(y: f64, a: f64, c: f64) -> bool {
    if y > 0.0 {
        a < c
    } else {
        a > 0.0
    }
}

#[inline]
fn in_low(y: f64, a: f64, c: f64) -> bool {
    if y > 0.0 {
        a > 0.0
    } else {
        a < c
    }
}

/// Solve the dual for `data` with labels `y` in {-1, +1}.
pub fn solve(data: &[Vec<f64>], y: &[f64], kernel: KernelSpec, params: &SmoParams) -> SmoSolution {
    let n = data.len();
    assert_eq!(n, y.len());
    let c = params.c;
    let mut rows = KernelRows::new(data, kernel);
    let diag: Vec<f64> = data.iter().map(|x| kernel.eval(x, x)).collect();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut iterations = 0;
    let mut stalled = 0;
    let mut converged = false;
    let mut gap = f64::INFINITY;

    while iterations < params.max_iterations {
        let mut i = usize::MAX;
        let mut g_max = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut g_min = f64::INFINITY;
        for t in 0..n {
            let v = -y[t] * grad[t];
            if in_up(y[t], alpha[t], c) && v > g_max {
                g_max = v;
                i = t;
            }
            if in_low(y[t], alpha[t], c) && v < g_min {
                g_min = v;
                j = t;
            }
        }
        gap = g_max - g_min;
        if i == usize::MAX || j == usize::MAX || gap < params.tolerance {
            converged = true;
            break;
        }
        iterations += 1;

        let k_i = rows.row(i);
        let k_j = rows.row(j);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let mut quad = diag[i] + diag[j] - 2.0 * k_i[j];
        if quad <= 0.0 {
            quad = TAU;
        }
        if y[i] != y[j] {
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

        let d_i = alpha[i] - old_i;
        let d_j = alpha[j] - old_j;
        if d_i == 0.0 && d_j == 0.0 {
            stalled += 1;
            if stalled >= params.max_passes.max(1) {
                break;
            }
            continue;
        }
        stalled = 0;
        let (yi, yj) = (y[i], y[j]);
        for t in 0..n {
            grad[t] += y[t] * (yi * k_i[t] * d_i + yj * k_j[t] * d_j);
        }
    }

    let bias = -rho(&alpha, &grad, y, c);
    let objective = 0.5 * alpha.iter().zip(&grad).map(|(a, g)| a * (1.0 - g)).sum::<f64>();
    SmoSolution {
        alpha,
        bias,
        objective,
        iterations,
        converged,
        gap,
    }
}

fn rho(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let mut upper = f64::INFINITY;
    let mut lower = f64::NEG_INFINITY;
    let mut free_sum = 0.0;
    let mut free = 0usize;
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                upper = upper.min(yg);
            } else {
                lower = lower.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                upper = upper.min(yg);
            } else {
                lower = lower.max(yg);
            }
        } else {
            free += 1;
            free_sum += yg;
        }
    }
    if free > 0 {
        free_sum / free as f64
    } else if upper.is_finite() && lower.is_finite() {
        0.5 * (upper + lower)
    } else if upper.is_finite() {
        upper
    } else if lower.is_finite() {
        lower
    } else {
        0.0
    }
}

/// Dual objective `sum(a) - 1/2 a^T Q a` evaluated directly.
pub fn dual_objective(data: &[Vec<f64>], y: &[f64], kernel: KernelSpec, alpha: &[f64]) -> f64 {
    let mut quad = 0.0;
    for i in 0..data.len() {
        if alpha[i] == 0.0 {
            continue;
        }
        for j in 0..data.len() {
            if alpha[j] != 0.0 {
                quad += alpha[i] * alpha[j] * y[i] * y[j] * kernel.eval(&data[i], &data[j]);
            }
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}
