//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use gaitroc::learners::tree::Node;
use gaitroc::learners::{Parameters, TrainedModel};
use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn test_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_7e57)
}

/// Fraction of (positive, negative) pairs ranked correctly, ties counting ½.
pub fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut num = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                num += 1.0;
            } else if scores[i] == scores[j] {
                num += 0.5;
            }
        }
    }
    num / pairs
}

pub fn random_matrix(r: &mut impl Rng, n: usize, p: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, p), |_| r.random::<f64>() * 4.0 - 2.0)
}

/// Labels with at least two members of each class.
pub fn random_labels(r: &mut impl Rng, n: usize) -> Vec<bool> {
    loop {
        let y: Vec<bool> = (0..n).map(|_| r.random_bool(0.5)).collect();
        let pos = y.iter().filter(|&&l| l).count();
        if pos >= 2 && n - pos >= 2 {
            return y;
        }
    }
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        z.exp() / (1.0 + z.exp())
    }
}

/// Penalized mean log loss evaluated from its definition.
pub fn logistic_objective(x: ArrayView2<f64>, y: &[bool], w: &[f64], b: f64, lambda: f64) -> f64 {
    let n = x.nrows() as f64;
    let mut loss = 0.0;
    for (row, &l) in x.rows().into_iter().zip(y) {
        let z: f64 = b + row.iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
        let p = logistic(z);
        loss -= if l { p.ln() } else { (1.0 - p).ln() };
    }
    loss / n + lambda * w.iter().map(|v| v * v).sum::<f64>()
}

/// Exact rational number with an i128 numerator and positive denominator.
#[derive(Clone, Copy, Debug)]
struct Ratio(i128, i128);

impl Ratio {
    fn add(self, o: Ratio) -> Ratio {
        Ratio(self.0 * o.1 + o.0 * self.1, self.1 * o.1)
    }
    fn cmp(self, o: Ratio) -> std::cmp::Ordering {
        (self.0 * o.1).cmp(&(o.0 * self.1))
    }
}

/// Exact `G²/(H + λ)` for a node holding `n` rows with `pos` positives,
/// when every row has gradient `p̄ - y` and hessian `p̄(1 - p̄)` with
/// `p̄ = P/N` and λ a non-negative integer.
fn exact_score(n: i128, pos: i128, big_p: i128, big_n: i128, lambda: i128) -> Ratio {
    // G = (n P - N pos)/N, H = n P (N - P)/N²
    let g_num = n * big_p - big_n * pos;
    Ratio(g_num * g_num, n * big_p * (big_n - big_p) + lambda * big_n * big_n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StumpOracle {
    pub feature: usize,
    pub threshold: f64,
    pub left_weight: f64,
    pub right_weight: f64,
}

/// First boosting round at depth 1 by exhaustive enumeration: every feature,
/// every midpoint between consecutive distinct values, gain compared in exact
/// rational arithmetic; ties go to the lowest feature, then the lowest
/// threshold. Returns `None` when no split has positive gain.
pub fn gbt_stump_oracle(x: ArrayView2<f64>, y: &[bool], lambda: u32) -> Option<StumpOracle> {
    let n = y.len();
    let big_n = n as i128;
    let big_p = y.iter().filter(|&&l| l).count() as i128;
    let lam = lambda as i128;
    let parent = exact_score(big_n, big_p, big_p, big_n, lam);

    let mut best: Option<(Ratio, usize, f64)> = None;
    for f in 0..x.ncols() {
        let mut values: Vec<f64> = x.column(f).to_vec();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let mid = (w[0] + w[1]) / 2.0;
            let t = if mid > w[0] { mid } else { w[1] };
            let left: Vec<usize> = (0..n).filter(|&i| x[[i, f]] < t).collect();
            let nl = left.len() as i128;
            let pl = left.iter().filter(|&&i| y[i]).count() as i128;
            let sum = exact_score(nl, pl, big_p, big_n, lam)
                .add(exact_score(big_n - nl, big_p - pl, big_p, big_n, lam));
            if sum.cmp(parent).is_le() {
                continue;
            }
            if best.is_none_or(|(b, _, _)| sum.cmp(b).is_gt()) {
                best = Some((sum, f, t));
            }
        }
    }
    let (_, feature, threshold) = best?;

    let mean = big_p as f64 / n as f64;
    let p = logistic((mean / (1.0 - mean)).ln());
    let (mut gl, mut hl, mut gr, mut hr) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        let g = p - if y[i] { 1.0 } else { 0.0 };
        let h = p * (1.0 - p);
        if x[[i, feature]] < threshold {
            gl += g;
            hl += h;
        } else {
            gr += g;
            hr += h;
        }
    }
    let l = lambda as f64;
    Some(StumpOracle { feature, threshold, left_weight: -gl / (hl + l), right_weight: -gr / (hr + l) })
}

fn route(nodes: &[Node], row: &[f64]) -> usize {
    let mut at = 0;
    while let Node::Split { feature, threshold, left, right, .. } = nodes[at] {
        at = if row[feature] < threshold { left } else { right };
    }
    at
}

/// Replays a boosted model on its training rows and returns, for every leaf
/// of every tree, `|w (H + λ) + G|` with G and H recomputed from the rows
/// routed to that leaf.
pub fn leaf_identity_residuals(model: &TrainedModel, x: ArrayView2<f64>, y: &[bool], lambda: f64) -> Vec<f64> {
    let Parameters::Boosted { base_score, learning_rate, trees } = &model.parameters else {
        panic!("not a boosted model");
    };
    let rows: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
    let mut margin = vec![*base_score; rows.len()];
    let mut out = Vec::new();
    for tree in trees {
        let mut sums = vec![(0.0, 0.0); tree.nodes.len()];
        for (i, row) in rows.iter().enumerate() {
            let p = logistic(margin[i]);
            let leaf = route(&tree.nodes, row);
            sums[leaf].0 += p - if y[i] { 1.0 } else { 0.0 };
            sums[leaf].1 += p * (1.0 - p);
        }
        for (id, node) in tree.nodes.iter().enumerate() {
            if let Node::Leaf { value } = node {
                let (g, h) = sums[id];
                out.push((value * (h + lambda) + g).abs());
            }
        }
        for (i, row) in rows.iter().enumerate() {
            let Node::Leaf { value } = tree.nodes[route(&tree.nodes, row)] else { unreachable!() };
            margin[i] += learning_rate * value;
        }
    }
    out
}

fn poly(u: &[f64], v: &[f64], degree: u32, gamma: f64, coef0: f64) -> f64 {
    (gamma * u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() + coef0).powi(degree as i32)
}

/// Dual objective `Σα − ½ Σ c_i c_j K(s_i, s_j)` of a trained kernel model,
/// where `c_i = α_i y_i`.
pub fn svm_model_dual(model: &TrainedModel) -> f64 {
    let Parameters::Kernel { kernel, support_vectors, coefficients, .. } = &model.parameters else {
        panic!("not a kernel model");
    };
    let mut quad = 0.0;
    for (a, sa) in coefficients.iter().zip(support_vectors) {
        for (b, sb) in coefficients.iter().zip(support_vectors) {
            quad += a * b * poly(sa, sb, kernel.degree, kernel.gamma, kernel.coef0);
        }
    }
    coefficients.iter().map(|c| c.abs()).sum::<f64>() - 0.5 * quad
}

/// Projection onto `{0 ≤ α ≤ C, yᵀα = 0}` by bisection on the multiplier.
fn project(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let at = |mu: f64| -> (Vec<f64>, f64) {
        let a: Vec<f64> = v.iter().zip(y).map(|(vi, yi)| (vi - mu * yi).clamp(0.0, c)).collect();
        let s = a.iter().zip(y).map(|(ai, yi)| ai * yi).sum();
        (a, s)
    };
    let (mut lo, mut hi) = (-1e6, 1e6);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if at(mid).1 > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi)).0
}

/// Maximum of the soft-margin dual by accelerated projected gradient.
pub fn svm_dual_oracle(x: ArrayView2<f64>, y: &[bool], c: f64, degree: u32, gamma: f64, coef0: f64) -> f64 {
    let n = y.len();
    let s: Vec<f64> = y.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect();
    let rows: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
    let q: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| s[i] * s[j] * poly(&rows[i], &rows[j], degree, gamma, coef0)).collect())
        .collect();
    let lipschitz = q.iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let step = 1.0 / lipschitz;
    let objective = |a: &[f64]| {
        let mut quad = 0.0;
        for i in 0..n {
            for j in 0..n {
                quad += a[i] * q[i][j] * a[j];
            }
        }
        a.iter().sum::<f64>() - 0.5 * quad
    };
    let mut a = vec![0.0; n];
    let mut z = a.clone();
    let mut t = 1.0f64;
    for _ in 0..100_000 {
        let grad: Vec<f64> = (0..n).map(|i| 1.0 - (0..n).map(|j| q[i][j] * z[j]).sum::<f64>()).collect();
        let v: Vec<f64> = z.iter().zip(&grad).map(|(zi, gi)| zi + step * gi).collect();
        let next = project(&v, &s, c);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = next.iter().zip(&a).map(|(n1, a0)| n1 + (t - 1.0) / t_next * (n1 - a0)).collect();
        let moved = next.iter().zip(&a).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        a = next;
        t = t_next;
        if moved < 1e-14 {
            break;
        }
    }
    objective(&a)
}

/// Maximal KKT violation `m(α) − M(α)` of a kernel model over its training set.
pub fn svm_kkt_violation(model: &TrainedModel, x: ArrayView2<f64>, y: &[bool], c: f64) -> f64 {
    let Parameters::Kernel { kernel, support_vectors, coefficients, .. } = &model.parameters else {
        panic!("not a kernel model");
    };
    let rows: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
    let mut m = f64::NEG_INFINITY;
    let mut big_m = f64::INFINITY;
    for (row, &l) in rows.iter().zip(y) {
        let yi = if l { 1.0 } else { -1.0 };
        let alpha = support_vectors
            .iter()
            .zip(coefficients)
            .find(|(sv, _)| *sv == row)
            .map_or(0.0, |(_, c)| c.abs());
        let f: f64 = support_vectors
            .iter()
            .zip(coefficients)
            .map(|(sv, cf)| cf * poly(sv, row, kernel.degree, kernel.gamma, kernel.coef0))
            .sum();
        // −y ∇_i of the minimization form equals y_i − f_i
        let v = yi - f;
        let up = (yi > 0.0 && alpha < c) || (yi < 0.0 && alpha > 0.0);
        let low = (yi > 0.0 && alpha > 0.0) || (yi < 0.0 && alpha < c);
        if up {
            m = m.max(v);
        }
        if low {
            big_m = big_m.min(v);
        }
    }
    (m - big_m).max(0.0)
}

/// k nearest neighbours of `row` among `candidates` by brute force,
/// ties broken by lower index.
pub fn knn(x: ArrayView2<f64>, row: usize, candidates: &[usize], k: usize) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> = candidates
        .iter()
        .filter(|&&c| c != row)
        .map(|&c| (x.row(row).iter().zip(x.row(c)).map(|(a, b)| (a - b).powi(2)).sum(), c))
        .collect();
    d.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    d.into_iter().take(k).map(|(_, c)| c).collect()
}

/// Whether `s` lies on the segment from some minority row to one of its k
/// nearest minority neighbours (tolerance 1e-9), searching every pair.
pub fn on_minority_segment(s: &[f64], x: ArrayView2<f64>, minority: &[usize], k: usize) -> bool {
    let k_eff = k.min(minority.len() - 1);
    minority.iter().any(|&a| {
        let ra = x.row(a);
        let nbs = if k_eff == 0 { vec![a] } else { knn(x, a, minority, k_eff) };
        nbs.into_iter().any(|b| {
            let rb = x.row(b);
            let d: Vec<f64> = ra.iter().zip(rb.iter()).map(|(p, q)| q - p).collect();
            let dd: f64 = d.iter().map(|v| v * v).sum();
            let t = if dd == 0.0 {
                0.0
            } else {
                s.iter().zip(ra.iter()).zip(&d).map(|((si, ai), di)| (si - ai) * di).sum::<f64>() / dd
            };
            (-1e-12..=1.0 + 1e-12).contains(&t)
                && s.iter().zip(ra.iter()).zip(&d).all(|((si, ai), di)| (ai + t * di - si).abs() <= 1e-9)
        })
    })
}
