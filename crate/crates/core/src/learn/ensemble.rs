use std::collections::BTreeSet;
use std::fmt;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::boost::{self, BoostedModel};
use super::tree::{self, DecisionTree, SplitRule, TreeParams};
use super::{ClassWeight, ForestParams, LearnError, ModelSpec, ProbabilisticClassifier, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    BaggedForest,
    ExtraRandomForest,
    GradientBoosted,
}

impl fmt::Display for EnsembleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EnsembleKind::BaggedForest => "bagged_forest",
            EnsembleKind::ExtraRandomForest => "extra_random_forest",
            EnsembleKind::GradientBoosted => "gradient_boosted",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Model {
    Forest(Vec<DecisionTree>),
    Boosted(BoostedModel),
}

/// A trained forest or boosted ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    spec: ModelSpec,
    classes: Vec<String>,
    n_features: usize,
    importances: Vec<f64>,
    importances_degenerate: bool,
    model: Model,
    train_loss: Vec<f64>,
}

impl TreeEnsemble {
    pub fn kind(&self) -> EnsembleKind {
        self.spec.kind()
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Per-feature importance, nonnegative and summing to 1 unless
    /// [`importances_degenerate`](Self::importances_degenerate) is set, in
    /// which case every entry is 0.
    pub fn importances(&self) -> &[f64] {
        &self.importances
    }

    /// True when no split was ever made, so importances are all zero.
    pub fn importances_degenerate(&self) -> bool {
        self.importances_degenerate
    }

    /// Forest members; `None` for boosted models.
    pub fn trees(&self) -> Option<&[DecisionTree]> {
        match &self.model {
            Model::Forest(t) => Some(t),
            Model::Boosted(_) => None,
        }
    }

    /// Training multinomial deviance before the first round and after each
    /// round (boosting only; empty for forests).
    pub fn train_loss(&self) -> &[f64] {
        &self.train_loss
    }

    pub fn predict(&self, rows: ArrayView2<'_, f64>) -> Result<Vec<String>> {
        let p = self.predict_proba(rows)?;
        Ok(p.outer_iter().map(|r| self.classes[super::argmax(r.as_slice().expect("owned rows"))].clone()).collect())
    }

    fn proba_row(&self, row: &[f64]) -> Vec<f64> {
        match &self.model {
            Model::Forest(trees) => {
                let mut acc = vec![0.0; self.classes.len()];
                for t in trees {
                    for (a, v) in acc.iter_mut().zip(t.predict_row(row)) {
                        *a += v;
                    }
                }
                let s: f64 = acc.iter().sum();
                acc.iter().map(|v| v / s).collect()
            }
            Model::Boosted(m) => m.proba_row(row),
        }
    }
}

impl ProbabilisticClassifier for TreeEnsemble {
    fn classes(&self) -> &[String] {
        &self.classes
    }

    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_proba(&self, rows: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if rows.ncols() != self.n_features {
            return Err(LearnError::WidthMismatch { expected: self.n_features, found: rows.ncols() });
        }
        let rows = rows.as_standard_layout();
        let k = self.classes.len();
        let out: Vec<f64> = (0..rows.nrows())
            .into_par_iter()
            .flat_map_iter(|i| self.proba_row(rows.row(i).as_slice().expect("standard layout")))
            .collect();
        Ok(Array2::from_shape_vec((rows.nrows(), k), out).expect("k values per row"))
    }
}

pub(crate) fn check_rows(rows: ArrayView2<'_, f64>) -> Result<()> {
    if rows.nrows() == 0 || rows.ncols() == 0 {
        return Err(LearnError::Empty);
    }
    for ((r, c), v) in rows.indexed_iter() {
        if !v.is_finite() {
            return Err(LearnError::NonFinite { row: r, col: c });
        }
    }
    Ok(())
}

fn class_weights(y: &[usize], k: usize, mode: ClassWeight) -> Vec<f64> {
    match mode {
        ClassWeight::Uniform => vec![1.0; y.len()],
        ClassWeight::Balanced => {
            let mut counts = vec![0usize; k];
            for &c in y {
                counts[c] += 1;
            }
            let n = y.len() as f64;
            y.iter().map(|&c| n / (k as f64 * counts[c] as f64)).collect()
        }
    }
}

fn normalize(mut v: Vec<f64>) -> (Vec<f64>, bool) {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
        (v, false)
    } else {
        (vec![0.0; v.len()], true)
    }
}

/// Trains an ensemble of the kind named by `spec`. Classes are the sorted
/// distinct labels. Deterministic in `seed` regardless of thread count.
pub fn train<S: AsRef<str>>(spec: &ModelSpec, rows: ArrayView2<'_, f64>, labels: &[S], seed: u64) -> Result<TreeEnsemble> {
    check_rows(rows)?;
    if labels.len() != rows.nrows() {
        return Err(LearnError::LengthMismatch { rows: rows.nrows(), labels: labels.len() });
    }
    let classes: Vec<String> = labels.iter().map(|l| l.as_ref().to_string()).collect::<BTreeSet<_>>().into_iter().collect();
    if classes.len() < 2 {
        return Err(LearnError::SingleClass(classes.len()));
    }
    let y: Vec<usize> = labels.iter().map(|l| classes.binary_search_by(|c| c.as_str().cmp(l.as_ref())).expect("label in class set")).collect();
    let x = rows.as_standard_layout();
    let x = x.view();
    let weights = class_weights(&y, classes.len(), spec.class_weight());
    let n_features = x.ncols();

    let (model, raw_importances, train_loss) = match spec {
        ModelSpec::BaggedForest(p) => {
            let (trees, imp) = forest(x, &y, &weights, classes.len(), p, SplitRule::Best, true, seed)?;
            (Model::Forest(trees), imp, Vec::new())
        }
        ModelSpec::ExtraRandomForest(p) => {
            let (trees, imp) = forest(x, &y, &weights, classes.len(), p, SplitRule::Random, false, seed)?;
            (Model::Forest(trees), imp, Vec::new())
        }
        ModelSpec::GradientBoosted(p) => {
            if p.rounds == 0 || !(p.learning_rate > 0.0) || p.max_depth == 0 {
                return Err(LearnError::InvalidParams("boosting needs rounds >= 1, learning_rate > 0, max_depth >= 1".into()));
            }
            let fit = boost::fit(x, &y, &weights, classes.len(), p, seed);
            (Model::Boosted(fit.model), fit.gains, fit.train_loss)
        }
    };
    let (importances, importances_degenerate) = normalize(raw_importances);
    Ok(TreeEnsemble { spec: spec.clone(), classes, n_features, importances, importances_degenerate, model, train_loss })
}

#[allow(clippy::too_many_arguments)]
fn forest(
    x: ArrayView2<'_, f64>,
    y: &[usize],
    weights: &[f64],
    k: usize,
    p: &ForestParams,
    rule: SplitRule,
    bootstrap: bool,
    seed: u64,
) -> Result<(Vec<DecisionTree>, Vec<f64>)> {
    if p.n_trees == 0 || p.min_leaf == 0 {
        return Err(LearnError::InvalidParams("forests need n_trees >= 1 and min_leaf >= 1".into()));
    }
    let n = x.nrows();
    let params = TreeParams { max_depth: p.max_depth, min_leaf: p.min_leaf, max_features: p.max_features.resolve(x.ncols()), rule };
    let grown: Vec<(DecisionTree, Vec<f64>)> = (0..p.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = seed::rng(seed::derive(seed, t as u64));
            let sample: Vec<usize> = if bootstrap {
                use rand::Rng;
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let mut imp = vec![0.0; x.ncols()];
            let tree = tree::grow(x, y, weights, k, sample, params, &mut rng, &mut imp);
            (tree, normalize(imp).0)
        })
        .collect();
    let mut importances = vec![0.0; x.ncols()];
    let mut trees = Vec::with_capacity(grown.len());
    for (t, imp) in grown {
        for (a, v) in importances.iter_mut().zip(imp) {
            *a += v;
        }
        trees.push(t);
    }
    Ok((trees, importances))
}
