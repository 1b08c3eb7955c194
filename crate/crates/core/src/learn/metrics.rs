use std::fmt;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::{argmax, LearnError, ProbabilisticClassifier, Result};

/// Score-sorted positions with tied scores grouped, as (positives, negatives)
/// per distinct threshold, highest score first.
fn threshold_groups(scores: &[f64], positive: &[bool]) -> Vec<(u64, u64)> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut groups: Vec<(u64, u64)> = Vec::new();
    let mut last: Option<f64> = None;
    for i in idx {
        if last != Some(scores[i]) {
            groups.push((0, 0));
            last = Some(scores[i]);
        }
        let g = groups.last_mut().expect("pushed above");
        if positive[i] {
            g.0 += 1;
        } else {
            g.1 += 1;
        }
    }
    groups
}

/// ROC-AUC by sweeping every distinct threshold and integrating the
/// trapezoids exactly. `None` if either class is absent.
pub fn roc_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), positive.len(), "one label per score");
    let groups = threshold_groups(scores, positive);
    let p: u64 = groups.iter().map(|g| g.0).sum();
    let n: u64 = groups.iter().map(|g| g.1).sum();
    if p == 0 || n == 0 {
        return None;
    }
    // Twice the area in units of one (positive, negative) cell.
    let mut area2: u128 = 0;
    let mut tp: u64 = 0;
    for (dp, dn) in groups {
        area2 += dn as u128 * (2 * tp as u128 + dp as u128);
        tp += dp;
    }
    Some(area2 as f64 / (2.0 * p as f64 * n as f64))
}

/// Area under the precision-recall curve as average precision,
/// `sum_t (R_t - R_{t-1}) P_t` over distinct thresholds. `None` without positives.
pub fn average_precision(scores: &[f64], positive: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), positive.len(), "one label per score");
    let groups = threshold_groups(scores, positive);
    let p: u64 = groups.iter().map(|g| g.0).sum();
    if p == 0 {
        return None;
    }
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut ap = 0.0;
    for (dp, dn) in groups {
        tp += dp;
        fp += dn;
        if dp > 0 {
            ap += (dp as f64 / p as f64) * (tp as f64 / (tp + fp) as f64);
        }
    }
    Some(ap)
}

/// Classification report in the layout of a column-normalized confusion table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classes: Vec<String>,
    /// Raw counts, `confusion[predicted][actual]`.
    pub confusion: Vec<Vec<u64>>,
    /// Each column divided by its actual-class support; unsupported columns stay 0.
    pub confusion_normalized: Vec<Vec<f64>>,
    /// Macro one-vs-rest mean over classes where the metric is defined.
    pub roc_auc: Option<f64>,
    pub pr_auc: Option<f64>,
    pub per_class_roc_auc: Vec<Option<f64>>,
    pub per_class_pr_auc: Vec<Option<f64>>,
    pub accuracy: f64,
    pub n: usize,
}

fn mean_defined(v: &[Option<f64>]) -> Option<f64> {
    let d: Vec<f64> = v.iter().flatten().copied().collect();
    (!d.is_empty()).then(|| d.iter().sum::<f64>() / d.len() as f64)
}

/// Builds a report from class probabilities (`proba[row][class]`).
pub fn evaluate_proba<S: AsRef<str>>(classes: &[String], proba: ArrayView2<'_, f64>, labels: &[S]) -> Result<EvalReport> {
    if labels.is_empty() {
        return Err(LearnError::Empty);
    }
    if proba.nrows() != labels.len() {
        return Err(LearnError::LengthMismatch { rows: proba.nrows(), labels: labels.len() });
    }
    if proba.ncols() != classes.len() {
        return Err(LearnError::WidthMismatch { expected: classes.len(), found: proba.ncols() });
    }
    let k = classes.len();
    let actual: Vec<usize> = labels
        .iter()
        .map(|l| classes.iter().position(|c| c == l.as_ref()).ok_or_else(|| LearnError::UnknownLabel(l.as_ref().to_string())))
        .collect::<Result<_>>()?;

    let mut confusion = vec![vec![0u64; k]; k];
    let mut correct = 0usize;
    for (row, &a) in proba.outer_iter().zip(&actual) {
        let p = argmax(&row.to_vec());
        confusion[p][a] += 1;
        correct += usize::from(p == a);
    }
    let mut confusion_normalized = vec![vec![0.0; k]; k];
    for a in 0..k {
        let support: u64 = (0..k).map(|p| confusion[p][a]).sum();
        if support > 0 {
            for p in 0..k {
                confusion_normalized[p][a] = confusion[p][a] as f64 / support as f64;
            }
        }
    }

    let mut per_class_roc_auc = Vec::with_capacity(k);
    let mut per_class_pr_auc = Vec::with_capacity(k);
    for c in 0..k {
        let scores: Vec<f64> = proba.column(c).to_vec();
        let pos: Vec<bool> = actual.iter().map(|&a| a == c).collect();
        per_class_roc_auc.push(roc_auc(&scores, &pos));
        per_class_pr_auc.push(average_precision(&scores, &pos));
    }

    Ok(EvalReport {
        classes: classes.to_vec(),
        confusion,
        confusion_normalized,
        roc_auc: mean_defined(&per_class_roc_auc),
        pr_auc: mean_defined(&per_class_pr_auc),
        per_class_roc_auc,
        per_class_pr_auc,
        accuracy: correct as f64 / labels.len() as f64,
        n: labels.len(),
    })
}

/// Scores `rows` with `model` and reports against `labels`.
pub fn evaluate<M, S>(model: &M, rows: ArrayView2<'_, f64>, labels: &[S]) -> Result<EvalReport>
where
    M: ProbabilisticClassifier + ?Sized,
    S: AsRef<str>,
{
    if rows.nrows() == 0 {
        return Err(LearnError::Empty);
    }
    let proba = model.predict_proba(rows)?;
    evaluate_proba(model.classes(), proba.view(), labels)
}

fn fmt_metric(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.3}"))
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let w = self.classes.iter().map(|c| c.len()).max().unwrap_or(0).max(10);
        writeln!(f, "{:>w$}  actual", "predicted", w = w)?;
        write!(f, "{:>w$}", "", w = w)?;
        for c in &self.classes {
            write!(f, "  {c:>w$}", w = w)?;
        }
        writeln!(f)?;
        for (p, row) in self.confusion_normalized.iter().enumerate() {
            write!(f, "{:>w$}", self.classes[p], w = w)?;
            for v in row {
                write!(f, "  {v:>w$.2}", w = w)?;
            }
            writeln!(f)?;
        }
        writeln!(f)?;
        writeln!(f, "raw counts")?;
        for (p, row) in self.confusion.iter().enumerate() {
            write!(f, "{:>w$}", self.classes[p], w = w)?;
            for v in row {
                write!(f, "  {v:>w$}", w = w)?;
            }
            writeln!(f)?;
        }
        writeln!(f)?;
        writeln!(f, "ROC-AUC  {}", fmt_metric(self.roc_auc))?;
        writeln!(f, "PR-AUC   {}", fmt_metric(self.pr_auc))?;
        writeln!(f, "accuracy {:.3} (n = {})", self.accuracy, self.n)
    }
}
