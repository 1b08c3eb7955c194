//! Exhaustive search over feature configurations and classifier specs.
//!
//! Every cell sees the same folds and the same segments. Cells run in
//! parallel; a cell that fails to train is recorded with its error rather than
//! aborting the search.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{featurize_clips, SegmentTable};
use super::metrics::{evaluate, EvalReport};
use super::reduce::{Classifier, ClassifierSpec};
use super::LearnError;
use crate::features::{Extractor, FeatureConfig};
use crate::seed::derive;
use crate::signal::{split_by_source, AudioClip, Sourced, DEFAULT_SEGMENT_S};

fn default_folds() -> usize {
    1
}
fn default_test_fraction() -> f64 {
    0.3
}
fn default_segment_length() -> f64 {
    DEFAULT_SEGMENT_S
}
fn default_segments_per_clip() -> usize {
    9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Clip label to predict.
    pub target: String,
    pub feature_configs: Vec<FeatureConfig>,
    pub classifiers: Vec<ClassifierSpec>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default = "default_segment_length")]
    pub segment_length_s: f64,
    #[serde(default = "default_segments_per_clip")]
    pub segments_per_clip: usize,
}

impl GridSpec {
    pub fn new(target: impl Into<String>, feature_configs: Vec<FeatureConfig>, classifiers: Vec<ClassifierSpec>) -> Self {
        Self {
            target: target.into(),
            feature_configs,
            classifiers,
            folds: default_folds(),
            test_fraction: default_test_fraction(),
            segment_length_s: default_segment_length(),
            segments_per_clip: default_segments_per_clip(),
        }
    }

    /// Seed of the source split for fold `f`.
    pub fn split_seed(seed: u64, fold: usize) -> u64 {
        derive(seed, 1000 + fold as u64)
    }

    /// Seed of classifier training in fold `f`.
    pub fn train_seed(seed: u64, fold: usize) -> u64 {
        derive(seed, 2000 + fold as u64)
    }

    /// Seed of segment extraction, shared by all cells and folds.
    pub fn segment_seed(seed: u64) -> u64 {
        derive(seed, 3000)
    }

    pub fn hash(&self) -> String {
        crate::config_hash(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub cell_id: String,
    pub feature_config: usize,
    pub classifier: usize,
    pub feature_hash: String,
    pub classifier_label: String,
    /// Means over folds.
    pub roc_auc: Option<f64>,
    pub pr_auc: Option<f64>,
    pub accuracy: Option<f64>,
    pub folds: Vec<EvalReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub grid_hash: String,
    pub seed: u64,
    /// Best first.
    pub results: Vec<CellResult>,
}

struct ClipRef<'a> {
    index: usize,
    source: &'a str,
}

impl Sourced for ClipRef<'_> {
    fn source_id(&self) -> &str {
        self.source
    }
}

/// Indices of `(train, test)` clips for one fold.
pub fn fold_split(clips: &[AudioClip], test_fraction: f64, split_seed: u64) -> crate::Result<(Vec<usize>, Vec<usize>)> {
    let refs: Vec<ClipRef<'_>> = clips.iter().enumerate().map(|(index, c)| ClipRef { index, source: c.source_id() }).collect();
    let (train, test) = split_by_source(refs, test_fraction, split_seed)?;
    Ok((train.iter().map(|r| r.index).collect(), test.iter().map(|r| r.index).collect()))
}

/// Per-clip values of `label`, erroring on the first clip without it.
pub fn clip_labels(clips: &[AudioClip], label: &str) -> Result<Vec<String>, LearnError> {
    clips
        .iter()
        .map(|c| {
            c.label(label)
                .map(str::to_string)
                .ok_or_else(|| LearnError::MissingLabel { source_id: c.source_id().to_string(), label: label.to_string() })
        })
        .collect()
}

fn mean(v: &[Option<f64>]) -> Option<f64> {
    let d: Option<Vec<f64>> = v.iter().copied().collect();
    d.filter(|d| !d.is_empty()).map(|d| d.iter().sum::<f64>() / d.len() as f64)
}

fn run_cell(
    spec: &ClassifierSpec,
    table: &SegmentTable,
    labels: &[String],
    folds: &[(Vec<usize>, Vec<usize>)],
    seed: u64,
) -> Result<Vec<EvalReport>, LearnError> {
    folds
        .iter()
        .enumerate()
        .map(|(f, (train, test))| {
            let in_train = membership(train, labels.len());
            let in_test = membership(test, labels.len());
            let (tr, te) = (table.filter_clips(|i| in_train[i]), table.filter_clips(|i| in_test[i]));
            let y_tr: Vec<&str> = tr.clip_index.iter().map(|&i| labels[i].as_str()).collect();
            let y_te: Vec<&str> = te.clip_index.iter().map(|&i| labels[i].as_str()).collect();
            let model = Classifier::fit(spec, tr.rows.view(), &y_tr, GridSpec::train_seed(seed, f))?;
            evaluate(&model, te.rows.view(), &y_te)
        })
        .collect()
}

fn membership(idx: &[usize], n: usize) -> Vec<bool> {
    let mut m = vec![false; n];
    for &i in idx {
        m[i] = true;
    }
    m
}

/// Evaluates every (feature config, classifier) cell and ranks the cells by
/// ROC-AUC, then PR-AUC, then cell id. Failed cells rank last.
pub fn grid_search(spec: &GridSpec, clips: &[AudioClip], seed: u64) -> crate::Result<GridReport> {
    if spec.feature_configs.is_empty() || spec.classifiers.is_empty() {
        return Err(LearnError::InvalidParams("grid needs at least one feature config and one classifier".into()).into());
    }
    if spec.folds == 0 {
        return Err(LearnError::InvalidParams("grid needs at least one fold".into()).into());
    }
    let labels = clip_labels(clips, &spec.target)?;
    let folds: Vec<(Vec<usize>, Vec<usize>)> =
        (0..spec.folds).map(|f| fold_split(clips, spec.test_fraction, GridSpec::split_seed(seed, f))).collect::<crate::Result<_>>()?;

    let tables: Vec<Result<SegmentTable, String>> = spec
        .feature_configs
        .iter()
        .map(|cfg| {
            Extractor::new(cfg.clone())
                .map_err(crate::Error::from)
                .and_then(|ex| featurize_clips(clips, &ex, spec.segment_length_s, spec.segments_per_clip, GridSpec::segment_seed(seed)))
                .map_err(|e| e.to_string())
        })
        .collect();

    let cells: Vec<(usize, usize)> =
        (0..spec.feature_configs.len()).flat_map(|c| (0..spec.classifiers.len()).map(move |m| (c, m))).collect();
    let mut results: Vec<CellResult> = cells
        .par_iter()
        .map(|&(c, m)| {
            let outcome = match &tables[c] {
                Err(e) => Err(e.clone()),
                Ok(table) => run_cell(&spec.classifiers[m], table, &labels, &folds, seed).map_err(|e| e.to_string()),
            };
            let (reports, error) = match outcome {
                Ok(r) => (r, None),
                Err(e) => (Vec::new(), Some(e)),
            };
            let metric = |f: fn(&EvalReport) -> Option<f64>| {
                if reports.is_empty() {
                    None
                } else {
                    mean(&reports.iter().map(f).collect::<Vec<_>>())
                }
            };
            CellResult {
                cell_id: format!("f{c:02}-m{m:02}"),
                feature_config: c,
                classifier: m,
                feature_hash: spec.feature_configs[c].hash(),
                classifier_label: spec.classifiers[m].label(),
                roc_auc: metric(|r| r.roc_auc),
                pr_auc: metric(|r| r.pr_auc),
                accuracy: metric(|r| Some(r.accuracy)),
                folds: reports,
                error,
            }
        })
        .collect();

    let key = |v: Option<f64>| v.unwrap_or(f64::NEG_INFINITY);
    results.sort_by(|a, b| {
        a.error
            .is_some()
            .cmp(&b.error.is_some())
            .then(key(b.roc_auc).total_cmp(&key(a.roc_auc)))
            .then(key(b.pr_auc).total_cmp(&key(a.pr_auc)))
            .then(a.cell_id.cmp(&b.cell_id))
    });
    Ok(GridReport { grid_hash: spec.hash(), seed, results })
}

impl GridReport {
    /// One line per cell, best first.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
        let mut out = String::from("rank,cell_id,feature_config,classifier,feature_hash,classifier_label,roc_auc,pr_auc,accuracy,error,grid_hash\n");
        for (rank, r) in self.results.iter().enumerate() {
            let err = r.error.as_deref().unwrap_or("").replace(['"', '\n'], " ");
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},\"{}\",{}",
                rank + 1,
                r.cell_id,
                r.feature_config,
                r.classifier,
                r.feature_hash,
                r.classifier_label,
                opt(r.roc_auc),
                opt(r.pr_auc),
                opt(r.accuracy),
                err,
                self.grid_hash
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
