//! L2-regularized logistic regression fitted by full-batch gradient descent
//! with Armijo backtracking.

use ndarray::ArrayView2;

const MAX_ITER: usize = 10_000;
const GRAD_TOL: f64 = 1e-8;
const ARMIJO_C: f64 = 1e-4;
const MIN_STEP: f64 = 1e-30;
const ROUNDOFF: f64 = 16.0 * f64::EPSILON;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Mean logistic loss plus `lambda · ‖w‖²` (bias unpenalized), with its
/// gradient with respect to the weights and the bias.
pub fn objective_and_gradient(
    x: ArrayView2<f64>,
    y: &[bool],
    weights: &[f64],
    bias: f64,
    lambda: f64,
) -> (f64, Vec<f64>, f64) {
    let n = x.nrows() as f64;
    let mut loss = 0.0;
    let mut gw = vec![0.0; weights.len()];
    let mut gb = 0.0;
    for (row, &label) in x.rows().into_iter().zip(y) {
        let z = bias + row.iter().zip(weights).map(|(a, w)| a * w).sum::<f64>();
        let t = label as u8 as f64;
        loss += softplus(z) - t * z;
        let r = sigmoid(z) - t;
        for (g, a) in gw.iter_mut().zip(row) {
            *g += r * a;
        }
        gb += r;
    }
    let penalty: f64 = weights.iter().map(|w| w * w).sum();
    for (g, w) in gw.iter_mut().zip(weights) {
        *g = *g / n + 2.0 * lambda * w;
    }
    (loss / n + lambda * penalty, gw, gb / n)
}

pub(crate) struct Fit {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
}

pub(crate) fn fit(x: ArrayView2<f64>, y: &[bool], lambda: f64) -> Fit {
    let p = x.ncols();
    let mut w = vec![0.0; p];
    let mut b = 0.0;
    let (mut f, mut gw, mut gb) = objective_and_gradient(x, y, &w, b, lambda);
    let mut step: f64 = 1.0;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < MAX_ITER {
        let gmax = gw.iter().fold(gb.abs(), |m, g| m.max(g.abs()));
        if gmax < GRAD_TOL {
            converged = true;
            break;
        }
        iterations += 1;
        let gnorm2 = gw.iter().map(|g| g * g).sum::<f64>() + gb * gb;
        step = (step * 2.0).min(1e3);
        loop {
            let cand_w: Vec<f64> = w.iter().zip(&gw).map(|(wi, gi)| wi - step * gi).collect();
            let cand_b = b - step * gb;
            let (fc, gwc, gbc) = objective_and_gradient(x, y, &cand_w, cand_b, lambda);
            let decrease = ARMIJO_C * step * gnorm2;
            let accept = if decrease > ROUNDOFF * f.abs().max(1.0) {
                fc <= f - decrease
            } else {
                // below the resolution of f: accept non-increasing steps that shrink the gradient
                fc <= f + ROUNDOFF * f.abs().max(1.0)
                    && gwc.iter().map(|g| g * g).sum::<f64>() + gbc * gbc < gnorm2
            };
            if accept {
                w = cand_w;
                b = cand_b;
                f = fc;
                gw = gwc;
                gb = gbc;
                break;
            }
            step *= 0.5;
            if step < MIN_STEP {
                break;
            }
        }
        if step < MIN_STEP {
            break;
        }
    }
    Fit { weights: w, bias: b, iterations, converged, objective: f }
}
