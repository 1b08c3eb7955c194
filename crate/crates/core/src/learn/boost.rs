//! Multinomial gradient boosting with second-order (Newton) leaves on
//! quantile-binned features.

use ndarray::{Array2, ArrayView2};
use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::BoostParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RegNode {
    Split { feature: usize, threshold: f64, left: u32, right: u32 },
    Leaf { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<RegNode>,
}

impl RegressionTree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                RegNode::Split { feature, threshold, left, right } => {
                    i = if row[*feature] <= *threshold { *left as usize } else { *right as usize };
                }
                RegNode::Leaf { value } => return *value,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    pub initial: Vec<f64>,
    pub learning_rate: f64,
    /// `rounds[r][k]` is the class-`k` tree of round `r`.
    pub rounds: Vec<Vec<RegressionTree>>,
    /// Step multiplier of each round after line search (1.0 unless halved).
    pub scales: Vec<f64>,
}

impl BoostedModel {
    pub fn scores_row(&self, row: &[f64]) -> Vec<f64> {
        let mut f = self.initial.clone();
        for (trees, scale) in self.rounds.iter().zip(&self.scales) {
            for (k, t) in trees.iter().enumerate() {
                f[k] += self.learning_rate * scale * t.predict_row(row);
            }
        }
        f
    }

    pub fn proba_row(&self, row: &[f64]) -> Vec<f64> {
        softmax(&self.scores_row(row))
    }
}

pub(crate) fn softmax(scores: &[f64]) -> Vec<f64> {
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// Quantile bin edges per feature; code of `x` is the number of edges below it,
/// so `code <= b` exactly when `x <= edges[b]`.
struct Binned {
    edges: Vec<Vec<f64>>,
    /// Column-major codes, `codes[f][row]`.
    codes: Vec<Vec<u16>>,
}

fn bin_features(x: ArrayView2<'_, f64>, max_bins: usize) -> Binned {
    let n = x.nrows();
    let (edges, codes) = (0..x.ncols())
        .into_par_iter()
        .map(|f| {
            let mut v: Vec<f64> = x.column(f).to_vec();
            v.sort_by(f64::total_cmp);
            let mut e: Vec<f64> = Vec::new();
            for b in 1..max_bins {
                let idx = b * n / max_bins;
                if idx == 0 || idx >= n {
                    continue;
                }
                let (lo, hi) = (v[idx - 1], v[idx]);
                if lo < hi {
                    let mid = lo + (hi - lo) / 2.0;
                    let cut = if mid < hi { mid } else { lo };
                    if e.last().is_none_or(|&last| cut > last) {
                        e.push(cut);
                    }
                }
            }
            let c: Vec<u16> = x.column(f).iter().map(|xv| e.partition_point(|edge| edge < xv) as u16).collect();
            (e, c)
        })
        .unzip();
    Binned { edges, codes }
}

struct RegParams {
    max_depth: usize,
    min_leaf: usize,
    l2: f64,
}

/// Fits one Newton regression tree on `(grad, hess)` over `rows` using only
/// `features`. Split gains are added to `gains`.
fn fit_tree(
    binned: &Binned,
    grad: &[f64],
    hess: &[f64],
    rows: Vec<usize>,
    features: &[usize],
    p: &RegParams,
    gains: &mut [f64],
) -> RegressionTree {
    struct Work {
        rows: Vec<usize>,
        depth: usize,
        slot: usize,
    }
    let leaf_value = |g: f64, h: f64| -g / (h + p.l2);
    let score = |g: f64, h: f64| g * g / (h + p.l2);

    let mut nodes = vec![RegNode::Leaf { value: 0.0 }];
    let mut stack = vec![Work { rows, depth: 0, slot: 0 }];
    while let Some(Work { rows, depth, slot }) = stack.pop() {
        let g: f64 = rows.iter().map(|&r| grad[r]).sum();
        let h: f64 = rows.iter().map(|&r| hess[r]).sum();
        let mut best: Option<(f64, usize, usize)> = None;
        if depth < p.max_depth && rows.len() >= 2 * p.min_leaf {
            let parent = score(g, h);
            for &f in features {
                let nb = binned.edges[f].len() + 1;
                if nb < 2 {
                    continue;
                }
                let mut hg = vec![0.0; nb];
                let mut hh = vec![0.0; nb];
                let mut hc = vec![0usize; nb];
                let codes = &binned.codes[f];
                for &r in &rows {
                    let c = codes[r] as usize;
                    hg[c] += grad[r];
                    hh[c] += hess[r];
                    hc[c] += 1;
                }
                let (mut gl, mut hl, mut cl) = (0.0, 0.0, 0usize);
                for b in 0..nb - 1 {
                    gl += hg[b];
                    hl += hh[b];
                    cl += hc[b];
                    if cl == 0 || cl < p.min_leaf || rows.len() - cl < p.min_leaf.max(1) {
                        continue;
                    }
                    let gain = score(gl, hl) + score(g - gl, h - hl) - parent;
                    if gain > 1e-12 && best.is_none_or(|(bg, _, _)| gain > bg) {
                        best = Some((gain, f, b));
                    }
                }
            }
        }
        match best {
            None => nodes[slot] = RegNode::Leaf { value: leaf_value(g, h) },
            Some((gain, f, b)) => {
                gains[f] += gain;
                let codes = &binned.codes[f];
                let (left, right): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| codes[r] as usize <= b);
                let l = nodes.len();
                nodes.push(RegNode::Leaf { value: 0.0 });
                nodes.push(RegNode::Leaf { value: 0.0 });
                nodes[slot] = RegNode::Split { feature: f, threshold: binned.edges[f][b], left: l as u32, right: l as u32 + 1 };
                stack.push(Work { rows: right, depth: depth + 1, slot: l + 1 });
                stack.push(Work { rows: left, depth: depth + 1, slot: l });
            }
        }
    }
    RegressionTree { nodes }
}

/// Weighted mean multinomial deviance.
fn deviance(scores: &Array2<f64>, y: &[usize], weights: &[f64]) -> f64 {
    let mut total = 0.0;
    let mut wsum = 0.0;
    for (i, row) in scores.outer_iter().enumerate() {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|s| (s - m).exp()).sum::<f64>().ln();
        total += weights[i] * (lse - row[y[i]]);
        wsum += weights[i];
    }
    total / wsum
}

pub(crate) struct BoostFit {
    pub model: BoostedModel,
    pub gains: Vec<f64>,
    pub train_loss: Vec<f64>,
}

pub(crate) fn fit(x: ArrayView2<'_, f64>, y: &[usize], weights: &[f64], n_classes: usize, params: &BoostParams, seed: u64) -> BoostFit {
    let (n, d) = x.dim();
    let binned = bin_features(x, params.max_bins.clamp(2, u16::MAX as usize));

    let mut prior = vec![0.0; n_classes];
    for (i, &k) in y.iter().enumerate() {
        prior[k] += weights[i];
    }
    let wsum: f64 = prior.iter().sum();
    let initial: Vec<f64> = prior.iter().map(|p| (p / wsum).max(1e-12).ln()).collect();

    let mut scores = Array2::from_shape_fn((n, n_classes), |(_, k)| initial[k]);
    let mut loss = deviance(&scores, y, weights);
    let mut train_loss = vec![loss];
    let mut rounds = Vec::with_capacity(params.rounds);
    let mut scales = Vec::with_capacity(params.rounds);
    let mut gains = vec![0.0; d];
    let n_sub = ((params.subsample.clamp(0.0, 1.0) * n as f64).round() as usize).clamp(1, n);
    let n_feat = params.max_features.resolve(d);
    let reg = RegParams { max_depth: params.max_depth, min_leaf: params.min_leaf.max(1), l2: params.l2.max(0.0) };

    for r in 0..params.rounds {
        let mut rng = crate::seed::rng(crate::seed::derive(seed, r as u64));
        let rows: Vec<usize> = if n_sub == n {
            (0..n).collect()
        } else {
            let mut s = sample(&mut rng, n, n_sub).into_vec();
            s.sort_unstable();
            s
        };
        let probs: Vec<Vec<f64>> = scores.outer_iter().map(|row| softmax(row.as_slice().expect("standard layout"))).collect();

        let fitted: Vec<(RegressionTree, Vec<f64>)> = (0..n_classes)
            .into_par_iter()
            .map(|k| {
                let mut krng = crate::seed::rng(crate::seed::derive(crate::seed::derive(seed, r as u64), k as u64 + 1));
                let mut features: Vec<usize> = if n_feat == d {
                    (0..d).collect()
                } else {
                    sample(&mut krng, d, n_feat).into_vec()
                };
                features.sort_unstable();
                let mut grad = vec![0.0; n];
                let mut hess = vec![0.0; n];
                for i in 0..n {
                    let p = probs[i][k];
                    let t = if y[i] == k { 1.0 } else { 0.0 };
                    grad[i] = weights[i] * (p - t);
                    hess[i] = weights[i] * (p * (1.0 - p)).max(1e-16);
                }
                let mut g = vec![0.0; d];
                let tree = fit_tree(&binned, &grad, &hess, rows.clone(), &features, &reg, &mut g);
                (tree, g)
            })
            .collect();

        let step: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let row = x.row(i);
                let row = row.as_slice().expect("standard layout");
                fitted.iter().map(|(t, _)| t.predict_row(row)).collect()
            })
            .collect();

        // Backtracking keeps the training deviance non-increasing.
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let mut cand = scores.clone();
            for i in 0..n {
                for k in 0..n_classes {
                    cand[[i, k]] += params.learning_rate * scale * step[i][k];
                }
            }
            let l = deviance(&cand, y, weights);
            if l <= loss {
                accepted = Some((cand, l));
                break;
            }
            scale *= 0.5;
        }
        let Some((cand, l)) = accepted else {
            train_loss.push(loss);
            break;
        };
        scores = cand;
        loss = l;
        train_loss.push(loss);
        for (_, g) in &fitted {
            for (acc, v) in gains.iter_mut().zip(g) {
                *acc += v * scale;
            }
        }
        rounds.push(fitted.into_iter().map(|(t, _)| t).collect());
        scales.push(scale);
    }

    BoostFit { model: BoostedModel { initial, learning_rate: params.learning_rate, rounds, scales }, gains, train_loss }
}
