//! Weighted-Gini classification trees.

use ndarray::ArrayView2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split { feature: usize, threshold: f64, left: u32, right: u32 },
    /// `counts` are raw training rows per class (bootstrap duplicates
    /// included); `distribution` is the class-weighted, normalized histogram.
    Leaf { counts: Vec<u32>, distribution: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    n_features: usize,
    n_classes: usize,
    max_depth: Option<usize>,
    min_leaf: usize,
}

impl DecisionTree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn max_depth(&self) -> Option<usize> {
        self.max_depth
    }

    pub fn min_leaf(&self) -> usize {
        self.min_leaf
    }

    pub fn leaf_for(&self, row: &[f64]) -> &Node {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                Node::Split { feature, threshold, left, right } => {
                    i = if row[*feature] <= *threshold { *left as usize } else { *right as usize };
                }
                leaf => return leaf,
            }
        }
    }

    /// Class distribution of the leaf that `row` lands in.
    pub fn predict_row(&self, row: &[f64]) -> &[f64] {
        match self.leaf_for(row) {
            Node::Leaf { distribution, .. } => distribution,
            Node::Split { .. } => unreachable!("leaf_for always ends at a leaf"),
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left as usize).max(walk(nodes, *right as usize)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum SplitRule {
    /// Exhaustive search over midpoints between distinct values.
    Best,
    /// One threshold per candidate feature, uniform between the node's min and max.
    Random,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub max_features: usize,
    pub rule: SplitRule,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    /// `sum_k cL_k^2 / wL + sum_k cR_k^2 / wR`; larger is purer.
    purity: f64,
}

struct Work {
    rows: Vec<usize>,
    depth: usize,
    slot: usize,
}

/// Grows a tree on the row multiset `sample` (indices into `x`, duplicates
/// allowed). `weights` is a per-row weight; impurity decreases are added to
/// `importances`.
pub(crate) fn grow(
    x: ArrayView2<'_, f64>,
    y: &[usize],
    weights: &[f64],
    n_classes: usize,
    sample: Vec<usize>,
    params: TreeParams,
    rng: &mut ChaCha8Rng,
    importances: &mut [f64],
) -> DecisionTree {
    let n_features = x.ncols();
    let mut nodes = vec![placeholder()];
    let mut stack = vec![Work { rows: sample, depth: 0, slot: 0 }];
    let mut features: Vec<usize> = (0..n_features).collect();
    let mut scratch: Vec<(f64, usize)> = Vec::new();

    while let Some(Work { rows, depth, slot }) = stack.pop() {
        let mut class_w = vec![0.0; n_classes];
        let mut counts = vec![0u32; n_classes];
        for &r in &rows {
            class_w[y[r]] += weights[r];
            counts[y[r]] += 1;
        }
        let total_w: f64 = class_w.iter().sum();
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let depth_capped = params.max_depth.is_some_and(|d| depth >= d);

        let split = if pure || depth_capped || rows.len() < 2 * params.min_leaf {
            None
        } else {
            find_split(x, y, weights, n_classes, &rows, &class_w, params, rng, &mut features, &mut scratch)
        };

        match split {
            None => nodes[slot] = leaf(counts, &class_w, total_w),
            Some(c) => {
                let node_purity: f64 = class_w.iter().map(|w| w * w).sum::<f64>() / total_w;
                importances[c.feature] += (c.purity - node_purity).max(0.0);
                let (left, right): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| x[[r, c.feature]] <= c.threshold);
                let l = nodes.len();
                nodes.push(placeholder());
                nodes.push(placeholder());
                nodes[slot] = Node::Split { feature: c.feature, threshold: c.threshold, left: l as u32, right: l as u32 + 1 };
                stack.push(Work { rows: right, depth: depth + 1, slot: l + 1 });
                stack.push(Work { rows: left, depth: depth + 1, slot: l });
            }
        }
    }

    DecisionTree { nodes, n_features, n_classes, max_depth: params.max_depth, min_leaf: params.min_leaf }
}

fn placeholder() -> Node {
    Node::Leaf { counts: Vec::new(), distribution: Vec::new() }
}

fn leaf(counts: Vec<u32>, class_w: &[f64], total_w: f64) -> Node {
    let distribution = if total_w > 0.0 {
        class_w.iter().map(|w| w / total_w).collect()
    } else {
        let n: u32 = counts.iter().sum();
        counts.iter().map(|&c| c as f64 / n.max(1) as f64).collect()
    };
    Node::Leaf { counts, distribution }
}

#[allow(clippy::too_many_arguments)]
fn find_split(
    x: ArrayView2<'_, f64>,
    y: &[usize],
    weights: &[f64],
    n_classes: usize,
    rows: &[usize],
    class_w: &[f64],
    params: TreeParams,
    rng: &mut ChaCha8Rng,
    features: &mut [usize],
    scratch: &mut Vec<(f64, usize)>,
) -> Option<Candidate> {
    let n_features = features.len();
    let mut best: Option<Candidate> = None;
    // Lazy Fisher-Yates: keep drawing past max_features until some valid split exists.
    for visited in 0..n_features {
        if visited >= params.max_features && best.is_some() {
            break;
        }
        let j = rng.random_range(visited..n_features);
        features.swap(visited, j);
        let f = features[visited];

        let cand = match params.rule {
            SplitRule::Best => best_threshold(x, y, weights, n_classes, rows, class_w, f, params.min_leaf, scratch),
            SplitRule::Random => random_threshold(x, y, weights, n_classes, rows, f, params.min_leaf, rng),
        };
        if let Some(c) = cand {
            if best.as_ref().is_none_or(|b| c.purity > b.purity) {
                best = Some(c);
            }
        }
    }
    best
}

#[allow(clippy::too_many_arguments)]
fn best_threshold(
    x: ArrayView2<'_, f64>,
    y: &[usize],
    weights: &[f64],
    n_classes: usize,
    rows: &[usize],
    class_w: &[f64],
    f: usize,
    min_leaf: usize,
    scratch: &mut Vec<(f64, usize)>,
) -> Option<Candidate> {
    scratch.clear();
    scratch.extend(rows.iter().map(|&r| (x[[r, f]], r)));
    scratch.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = scratch.len();
    if scratch[0].0 == scratch[n - 1].0 {
        return None;
    }

    let mut left = vec![0.0; n_classes];
    let mut right = class_w.to_vec();
    let mut sq_left = 0.0;
    let mut sq_right: f64 = right.iter().map(|w| w * w).sum();
    let mut w_left = 0.0;
    let mut w_right: f64 = right.iter().sum();
    let mut best: Option<(f64, usize)> = None;

    for p in 1..n {
        let (_, r) = scratch[p - 1];
        let (k, w) = (y[r], weights[r]);
        sq_left += 2.0 * left[k] * w + w * w;
        sq_right += -2.0 * right[k] * w + w * w;
        left[k] += w;
        right[k] -= w;
        w_left += w;
        w_right -= w;
        if p < min_leaf || n - p < min_leaf || scratch[p - 1].0 == scratch[p].0 {
            continue;
        }
        if w_left <= 0.0 || w_right <= 0.0 {
            continue;
        }
        let purity = sq_left / w_left + sq_right.max(0.0) / w_right;
        if best.is_none_or(|(b, _)| purity > b) {
            best = Some((purity, p));
        }
    }
    best.map(|(purity, p)| {
        let (a, b) = (scratch[p - 1].0, scratch[p].0);
        let mid = a + (b - a) / 2.0;
        let threshold = if mid < b { mid } else { a };
        Candidate { feature: f, threshold, purity }
    })
}

#[allow(clippy::too_many_arguments)]
fn random_threshold(
    x: ArrayView2<'_, f64>,
    y: &[usize],
    weights: &[f64],
    n_classes: usize,
    rows: &[usize],
    f: usize,
    min_leaf: usize,
    rng: &mut ChaCha8Rng,
) -> Option<Candidate> {
    let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
        let v = x[[r, f]];
        (lo.min(v), hi.max(v))
    });
    if lo >= hi {
        return None;
    }
    let threshold = rng.random_range(lo..hi);
    let mut left = vec![0.0; n_classes];
    let mut right = vec![0.0; n_classes];
    let mut n_left = 0usize;
    for &r in rows {
        if x[[r, f]] <= threshold {
            left[y[r]] += weights[r];
            n_left += 1;
        } else {
            right[y[r]] += weights[r];
        }
    }
    if n_left < min_leaf || rows.len() - n_left < min_leaf {
        return None;
    }
    let side = |c: &[f64]| {
        let w: f64 = c.iter().sum();
        if w > 0.0 {
            c.iter().map(|v| v * v).sum::<f64>() / w
        } else {
            0.0
        }
    };
    Some(Candidate { feature: f, threshold, purity: side(&left) + side(&right) })
}
