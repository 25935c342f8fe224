//! Binary decision trees with exact greedy splits.
//!
//! One grower serves both the Gini classification trees (single trees and
//! random forests) and the second-order boosted trees; the split criterion
//! supplies node statistics, gain and leaf values.

use ndarray::ArrayView2;
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::exec::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    /// Rows with `x[feature] < threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        gain: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// `nodes[0]` is the root.
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { .. } => return at,
                Node::Split { feature, threshold, left, right, .. } => {
                    at = if row[feature] < threshold { left } else { right };
                }
            }
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(row)] {
            Node::Leaf { value } => value,
            Node::Split { .. } => unreachable!("leaf_index returns a leaf"),
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Depth of the deepest leaf; a lone root leaf has depth 0.
    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, at: usize) -> usize {
            match t.nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(t, left).max(walk(t, right)),
            }
        }
        walk(self, 0)
    }

    /// Adds each split's gain to `acc[feature]`.
    pub fn accumulate_gain(&self, acc: &mut [f64]) {
        for n in &self.nodes {
            if let Node::Split { feature, gain, .. } = n {
                acc[*feature] += gain;
            }
        }
    }
}

pub(crate) trait Criterion {
    type Stats: Copy + Default;
    fn add(&self, stats: &mut Self::Stats, row: usize);
    fn sub(&self, a: &Self::Stats, b: &Self::Stats) -> Self::Stats;
    /// Gain of splitting `parent` into `left` and `right`.
    fn gain(&self, left: &Self::Stats, right: &Self::Stats, parent: &Self::Stats) -> f64;
    fn leaf_value(&self, stats: &Self::Stats) -> f64;
    fn is_pure(&self, _stats: &Self::Stats) -> bool {
        false
    }

    fn stats_of(&self, rows: &[usize]) -> Self::Stats {
        let mut s = Self::Stats::default();
        for &r in rows {
            self.add(&mut s, r);
        }
        s
    }
}

/// Gini impurity over 0/1 labels. Gain is the count-weighted impurity decrease.
pub(crate) struct Gini<'a> {
    pub labels: &'a [bool],
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Counts {
    n: f64,
    pos: f64,
}

fn weighted_gini(c: &Counts) -> f64 {
    if c.n == 0.0 {
        return 0.0;
    }
    let p = c.pos / c.n;
    c.n * 2.0 * p * (1.0 - p)
}

impl Criterion for Gini<'_> {
    type Stats = Counts;
    fn add(&self, s: &mut Counts, row: usize) {
        s.n += 1.0;
        if self.labels[row] {
            s.pos += 1.0;
        }
    }
    fn sub(&self, a: &Counts, b: &Counts) -> Counts {
        Counts { n: a.n - b.n, pos: a.pos - b.pos }
    }
    fn gain(&self, l: &Counts, r: &Counts, p: &Counts) -> f64 {
        weighted_gini(p) - weighted_gini(l) - weighted_gini(r)
    }
    fn leaf_value(&self, s: &Counts) -> f64 {
        s.pos / s.n
    }
    fn is_pure(&self, s: &Counts) -> bool {
        s.pos == 0.0 || s.pos == s.n
    }
}

/// Second-order gradient statistics for logistic boosting.
pub(crate) struct SecondOrder<'a> {
    pub grad: &'a [f64],
    pub hess: &'a [f64],
    pub lambda: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct GradHess {
    pub g: f64,
    pub h: f64,
}

impl SecondOrder<'_> {
    fn score(&self, s: &GradHess) -> f64 {
        s.g * s.g / (s.h + self.lambda)
    }
}

impl Criterion for SecondOrder<'_> {
    type Stats = GradHess;
    fn add(&self, s: &mut GradHess, row: usize) {
        s.g += self.grad[row];
        s.h += self.hess[row];
    }
    fn sub(&self, a: &GradHess, b: &GradHess) -> GradHess {
        GradHess { g: a.g - b.g, h: a.h - b.h }
    }
    fn gain(&self, l: &GradHess, r: &GradHess, p: &GradHess) -> f64 {
        0.5 * (self.score(l) + self.score(r) - self.score(p)) - self.gamma
    }
    fn leaf_value(&self, s: &GradHess) -> f64 {
        -s.g / (s.h + self.lambda)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Growth {
    LevelWise,
    LeafWise,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct GrowParams {
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub max_leaves: Option<usize>,
    pub growth: Growth,
    /// Features examined per split; `None` examines all.
    pub max_features: Option<usize>,
}

#[derive(Debug, Clone, Copy)]
struct SplitChoice {
    feature: usize,
    threshold: f64,
    gain: f64,
}

/// Relative gap below which two gains count as tied; keeps the tie-break
/// independent of summation-order rounding.
const TIE_TOL: f64 = 1e-12;

/// Best split over the given features. Candidates are midpoints between
/// consecutive distinct sorted values; ties keep the lowest feature, then the
/// lowest threshold.
fn best_split<C: Criterion>(
    x: ArrayView2<f64>,
    rows: &[usize],
    parent: &C::Stats,
    features: &[usize],
    crit: &C,
) -> Option<SplitChoice> {
    let mut best: Option<SplitChoice> = None;
    let mut order: Vec<usize> = rows.to_vec();
    for &f in features {
        order.sort_by(|&a, &b| x[[a, f]].total_cmp(&x[[b, f]]).then(a.cmp(&b)));
        let mut left = C::Stats::default();
        for w in 0..order.len() - 1 {
            crit.add(&mut left, order[w]);
            let lo = x[[order[w], f]];
            let hi = x[[order[w + 1], f]];
            if lo == hi {
                continue;
            }
            let mid = (lo + hi) / 2.0;
            let threshold = if mid > lo { mid } else { hi };
            let right = crit.sub(parent, &left);
            let gain = crit.gain(&left, &right, parent);
            if best.is_none_or(|b| gain > b.gain + TIE_TOL * b.gain.abs().max(1.0)) {
                best = Some(SplitChoice { feature: f, threshold, gain });
            }
        }
    }
    best
}

struct Pending<S> {
    node: usize,
    rows: Vec<usize>,
    stats: S,
    depth: usize,
    split: Option<SplitChoice>,
}

pub(crate) fn grow<C: Criterion>(
    x: ArrayView2<f64>,
    rows: Vec<usize>,
    crit: &C,
    params: &GrowParams,
    mut rng: Option<&mut Rng>,
) -> Tree {
    let n_features = x.ncols();
    let draw_features = |rng: &mut Option<&mut Rng>| -> Vec<usize> {
        match (params.max_features, rng.as_deref_mut()) {
            (Some(m), Some(r)) if m < n_features => {
                let mut f = sample(r, n_features, m).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..n_features).collect(),
        }
    };

    let mut nodes = vec![Node::Leaf { value: 0.0 }];
    let root_stats = crit.stats_of(&rows);

    let evaluate = |p: &mut Pending<C::Stats>, features: Vec<usize>| {
        let can_split = p.depth < params.max_depth
            && p.rows.len() >= params.min_samples_split.max(2)
            && !crit.is_pure(&p.stats);
        p.split = if can_split {
            best_split(x, &p.rows, &p.stats, &features, crit).filter(|s| s.gain > 0.0)
        } else {
            None
        };
    };

    let mut root = Pending { node: 0, rows, stats: root_stats, depth: 0, split: None };
    evaluate(&mut root, draw_features(&mut rng));

    let mut frontier = vec![root];
    let mut leaves = 1usize;
    let leaf_cap = params.max_leaves.unwrap_or(usize::MAX).max(1);

    loop {
        let pick = match params.growth {
            // first splittable node in creation order: tiers are exhausted in order
            Growth::LevelWise => frontier.iter().position(|p| p.split.is_some()),
            Growth::LeafWise => frontier
                .iter()
                .enumerate()
                .filter_map(|(i, p)| p.split.map(|s| (i, s.gain, p.node)))
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.2.cmp(&a.2)))
                .map(|(i, _, _)| i),
        };
        let Some(i) = pick else { break };
        if leaves >= leaf_cap {
            break;
        }
        let p = frontier.remove(i);
        let s = p.split.expect("picked node has a split");
        let (lrows, rrows): (Vec<usize>, Vec<usize>) =
            p.rows.iter().partition(|&&r| x[[r, s.feature]] < s.threshold);
        let left_id = nodes.len();
        let right_id = left_id + 1;
        nodes.push(Node::Leaf { value: 0.0 });
        nodes.push(Node::Leaf { value: 0.0 });
        nodes[p.node] = Node::Split {
            feature: s.feature,
            threshold: s.threshold,
            gain: s.gain,
            left: left_id,
            right: right_id,
        };
        leaves += 1;
        for (id, child_rows) in [(left_id, lrows), (right_id, rrows)] {
            let stats = crit.stats_of(&child_rows);
            let mut child = Pending { node: id, rows: child_rows, stats, depth: p.depth + 1, split: None };
            evaluate(&mut child, draw_features(&mut rng));
            // keep creation order so level-wise growth finishes a tier first
            let at = frontier.partition_point(|q| q.node < id);
            frontier.insert(at, child);
        }
    }

    for p in frontier {
        nodes[p.node] = Node::Leaf { value: crit.leaf_value(&p.stats) };
    }
    Tree { nodes }
}
