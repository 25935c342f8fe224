//! Soft-margin kernel SVM dual solved by two-variable coordinate updates
//! (maximal violating pair selection).
//!
//! The dual is `min ½ αᵀQα − Σα` subject to `0 ≤ α ≤ C` and `yᵀα = 0`, with
//! `Q_ij = y_i y_j K(x_i, x_j)`.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

pub const DEFAULT_TOL: f64 = 1e-3;
pub const PASS_LIMIT: usize = 1000;
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolyKernel {
    pub degree: u32,
    pub gamma: f64,
    pub coef0: f64,
}

impl PolyKernel {
    pub fn eval(&self, u: &[f64], v: &[f64]) -> f64 {
        let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
        (self.gamma * dot + self.coef0).powi(self.degree as i32)
    }

    pub fn gram(&self, x: ArrayView2<f64>) -> Vec<Vec<f64>> {
        let rows: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
        let n = rows.len();
        let mut k = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i..n {
                let v = self.eval(&rows[i], &rows[j]);
                k[i][j] = v;
                k[j][i] = v;
            }
        }
        k
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    /// Decision function offset: `f(x) = Σ α_i y_i K(x_i, x) − rho`.
    pub rho: f64,
    /// Dual objective `Σα − ½ αᵀQα` (to be maximized).
    pub objective: f64,
    /// Maximal KKT violation `m(α) − M(α)` at termination.
    pub kkt_violation: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// `y` holds ±1. `max_iter` bounds the number of pair updates.
pub fn solve_dual(kernel: &[Vec<f64>], y: &[f64], c: f64, tol: f64, max_iter: usize) -> DualSolution {
    let n = y.len();
    let mut alpha = vec![0.0; n];
    // gradient of ½αᵀQα − Σα
    let mut grad = vec![-1.0; n];
    let mut iterations = 0;

    let up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let low = |a: f64, yt: f64| (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c);

    let select = |alpha: &[f64], grad: &[f64]| {
        let mut i = None;
        let mut m = f64::NEG_INFINITY;
        let mut j = None;
        let mut big_m = f64::INFINITY;
        for t in 0..n {
            let v = -y[t] * grad[t];
            if up(alpha[t], y[t]) && v > m {
                m = v;
                i = Some(t);
            }
            if low(alpha[t], y[t]) && v < big_m {
                big_m = v;
                j = Some(t);
            }
        }
        (i, j, m - big_m)
    };

    let mut violation;
    loop {
        let (i, j, gap) = select(&alpha, &grad);
        violation = if i.is_some() && j.is_some() { gap } else { 0.0 };
        let (Some(i), Some(j)) = (i, j) else { break };
        if gap < tol || iterations >= max_iter {
            break;
        }
        iterations += 1;

        let curvature = (kernel[i][i] + kernel[j][j] - 2.0 * kernel[i][j]).max(TAU);
        let mut delta = gap / curvature;
        let room_i = if y[i] > 0.0 { c - alpha[i] } else { alpha[i] };
        let room_j = if y[j] > 0.0 { alpha[j] } else { c - alpha[j] };
        let mut clip_i = false;
        let mut clip_j = false;
        if delta >= room_i {
            delta = room_i;
            clip_i = true;
        }
        if delta >= room_j {
            delta = room_j;
            clip_j = true;
            clip_i = clip_i && room_i == room_j;
        }

        alpha[i] += y[i] * delta;
        alpha[j] -= y[j] * delta;
        if clip_i {
            alpha[i] = if y[i] > 0.0 { c } else { 0.0 };
        }
        if clip_j {
            alpha[j] = if y[j] > 0.0 { 0.0 } else { c };
        }
        for t in 0..n {
            grad[t] += y[t] * delta * (kernel[t][i] - kernel[t][j]);
        }
    }

    // offset from free multipliers, else the midpoint of the feasible range
    let mut free_sum = 0.0;
    let mut free = 0usize;
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] > 0.0 && alpha[t] < c {
            free_sum += yg;
            free += 1;
        } else {
            let at_upper = alpha[t] >= c;
            if (y[t] > 0.0) == at_upper {
                lb = lb.max(yg);
            } else {
                ub = ub.min(yg);
            }
        }
    }
    let rho = if free > 0 {
        free_sum / free as f64
    } else if ub.is_finite() && lb.is_finite() {
        (ub + lb) / 2.0
    } else if ub.is_finite() {
        ub
    } else if lb.is_finite() {
        lb
    } else {
        0.0
    };

    let primal_part: f64 = alpha.iter().zip(&grad).map(|(a, g)| a * (g - 1.0)).sum::<f64>() * 0.5;
    DualSolution {
        objective: -primal_part,
        converged: violation < tol,
        alpha,
        rho,
        kkt_violation: violation,
        iterations,
    }
}
