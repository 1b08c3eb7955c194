use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::ensemble::{train, TreeEnsemble};
use super::{LearnError, ModelSpec, ProbabilisticClassifier, Result};

/// How many columns a reducer keeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Keep {
    /// The `k` most important columns.
    Top(usize),
    /// The shortest importance-ranked prefix whose importances sum to at least
    /// this fraction.
    Cumulative(f64),
}

/// Columns chosen by `keep`, ranked by descending importance with ties going to
/// the lower index, returned in ascending column order.
pub fn select_columns(importances: &[f64], keep: Keep) -> Result<Vec<usize>> {
    let n = importances.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| importances[b].total_cmp(&importances[a]).then(a.cmp(&b)));
    let take = match keep {
        Keep::Top(0) => return Err(LearnError::InvalidKeep("top-0 keeps nothing".into())),
        Keep::Top(k) if k > n => return Err(LearnError::KeepTooLarge { keep: k, features: n }),
        Keep::Top(k) => k,
        Keep::Cumulative(t) if !(t > 0.0 && t <= 1.0) => {
            return Err(LearnError::InvalidKeep(format!("cumulative threshold {t} outside (0, 1]")))
        }
        Keep::Cumulative(t) => {
            let mut acc = 0.0;
            let mut k = n;
            for (i, &c) in order.iter().enumerate() {
                acc += importances[c];
                if acc >= t - 1e-12 {
                    k = i + 1;
                    break;
                }
            }
            k
        }
    };
    let mut cols: Vec<usize> = order[..take].to_vec();
    cols.sort_unstable();
    Ok(cols)
}

/// Selects columns by the reducer's importances and returns them together with
/// the reduced matrix.
pub fn reduce_features(reducer: &TreeEnsemble, rows: ArrayView2<'_, f64>, keep: Keep) -> Result<(Vec<usize>, Array2<f64>)> {
    if rows.ncols() != reducer.n_features() {
        return Err(LearnError::WidthMismatch { expected: reducer.n_features(), found: rows.ncols() });
    }
    let cols = select_columns(reducer.importances(), keep)?;
    let reduced = rows.select(Axis(1), &cols);
    Ok((cols, reduced))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducerSpec {
    pub model: ModelSpec,
    pub keep: Keep,
}

/// An optional importance-based reducer followed by a classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub reducer: Option<ReducerSpec>,
    pub model: ModelSpec,
}

impl ClassifierSpec {
    pub fn plain(model: ModelSpec) -> Self {
        Self { name: None, reducer: None, model }
    }

    pub fn reduced(reducer: ModelSpec, keep: Keep, model: ModelSpec) -> Self {
        Self { name: None, reducer: Some(ReducerSpec { model: reducer, keep }), model }
    }

    pub fn label(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        match &self.reducer {
            Some(r) => format!("{}>{}", r.model.kind(), self.model.kind()),
            None => self.model.kind().to_string(),
        }
    }
}

/// A fitted [`ClassifierSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    spec: ClassifierSpec,
    n_features: usize,
    columns: Option<Vec<usize>>,
    model: TreeEnsemble,
}

impl Classifier {
    pub fn fit<S: AsRef<str>>(spec: &ClassifierSpec, rows: ArrayView2<'_, f64>, labels: &[S], seed: u64) -> Result<Self> {
        let n_features = rows.ncols();
        match &spec.reducer {
            None => {
                let model = train(&spec.model, rows, labels, crate::seed::derive(seed, 2))?;
                Ok(Self { spec: spec.clone(), n_features, columns: None, model })
            }
            Some(r) => {
                let reducer = train(&r.model, rows, labels, crate::seed::derive(seed, 1))?;
                let (cols, reduced) = reduce_features(&reducer, rows, r.keep)?;
                let model = train(&spec.model, reduced.view(), labels, crate::seed::derive(seed, 2))?;
                Ok(Self { spec: spec.clone(), n_features, columns: Some(cols), model })
            }
        }
    }

    pub fn spec(&self) -> &ClassifierSpec {
        &self.spec
    }

    /// Input columns fed to the final model, if a reducer was used.
    pub fn columns(&self) -> Option<&[usize]> {
        self.columns.as_deref()
    }

    pub fn model(&self) -> &TreeEnsemble {
        &self.model
    }
}

impl ProbabilisticClassifier for Classifier {
    fn classes(&self) -> &[String] {
        self.model.classes()
    }

    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_proba(&self, rows: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if rows.ncols() != self.n_features {
            return Err(LearnError::WidthMismatch { expected: self.n_features, found: rows.ncols() });
        }
        match &self.columns {
            None => self.model.predict_proba(rows),
            Some(cols) => self.model.predict_proba(rows.select(Axis(1), cols).view()),
        }
    }
}
