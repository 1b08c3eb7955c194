//! Sequential powertrain classification with segment voting.
//!
//! Stages run in a fixed order (by default aspiration, fuel, cylinders).
//! A stage may append upstream stage outputs to the acoustic features: at
//! training time the upstream ground-truth labels (teacher forcing), at
//! inference the upstream predictions. Clip-level predictions average the
//! per-segment distributions of each stage and take the argmax.

use std::collections::BTreeSet;
use std::io::{Read, Write};

use ndarray::{s, Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{Extractor, FeatureConfig};
use crate::learn::{
    argmax, evaluate_proba, featurize_clips, fold_split, read_container, write_container, Classifier, ClassifierSpec, ContainerHeader,
    EvalReport, ModelSpec, ProbabilisticClassifier, CONTAINER_VERSION,
};
use crate::seed::{derive, derive_keyed};
use crate::signal::{segment, AudioClip, DEFAULT_SEGMENT_S};

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("invalid chain spec: {0}")]
    InvalidSpec(String),
    #[error("clip {source_id:?} has no {label:?} label")]
    MissingLabel { source_id: String, label: String },
    #[error("stage {stage:?}: label {class:?} is not in the declared class set")]
    UnknownClass { stage: String, class: String },
    #[error("stage {stage:?} needs at least 2 classes in training data, found {found}")]
    SingleClass { stage: String, found: usize },
    #[error("chain was trained with feature config {expected}, not {found}")]
    FeatureMismatch { expected: String, found: String },
}

/// How upstream stage outputs are appended to a stage's features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    /// Indicator of the (predicted) class.
    OneHot,
    /// The full class distribution.
    Probability,
    /// Indicator followed by distribution.
    #[default]
    Both,
}

impl Encoding {
    fn width(self, classes: usize) -> usize {
        match self {
            Encoding::OneHot | Encoding::Probability => classes,
            Encoding::Both => 2 * classes,
        }
    }

    fn encode(self, dist: &[f64], out: &mut Vec<f64>) {
        let k = argmax(dist);
        if matches!(self, Encoding::OneHot | Encoding::Both) {
            out.extend((0..dist.len()).map(|i| if i == k { 1.0 } else { 0.0 }));
        }
        if matches!(self, Encoding::Probability | Encoding::Both) {
            out.extend_from_slice(dist);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSpec {
    /// Clip label this stage predicts.
    pub label: String,
    /// Class set; inferred from training labels when empty.
    #[serde(default)]
    pub classes: Vec<String>,
    /// Earlier stages whose outputs are appended to the features.
    #[serde(default)]
    pub upstream: Vec<String>,
    #[serde(default)]
    pub encoding: Encoding,
    pub classifier: ClassifierSpec,
}

fn default_segment_length() -> f64 {
    DEFAULT_SEGMENT_S
}

fn default_segments() -> usize {
    DEFAULT_SEGMENTS_PER_CLIP
}

/// Default number of voting segments per clip.
pub const DEFAULT_SEGMENTS_PER_CLIP: usize = 9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub stages: Vec<StageSpec>,
    #[serde(default)]
    pub features: FeatureConfig,
    #[serde(default = "default_segment_length")]
    pub segment_length_s: f64,
    /// Training segments cut from each clip.
    #[serde(default = "default_segments")]
    pub segments_per_clip: usize,
}

impl ChainSpec {
    /// Aspiration, then fuel with aspiration appended, then cylinders with
    /// both appended. Aspiration and fuel use extremely randomized trees and
    /// gradient boosting; cylinders use class-balanced boosting.
    pub fn default_powertrain() -> Self {
        use crate::learn::{ClassWeight, EnsembleKind, Keep};
        let forest = ModelSpec::default_for(EnsembleKind::BaggedForest);
        let extra = ModelSpec::default_for(EnsembleKind::ExtraRandomForest);
        let boost = ModelSpec::default_for(EnsembleKind::GradientBoosted);
        let stage = |label: &str, upstream: &[&str], classifier| StageSpec {
            label: label.into(),
            classes: Vec::new(),
            upstream: upstream.iter().map(|s| s.to_string()).collect(),
            encoding: Encoding::Both,
            classifier,
        };
        Self {
            stages: vec![
                stage("aspiration", &[], ClassifierSpec::reduced(forest.clone(), Keep::Top(64), extra)),
                stage("fuel", &["aspiration"], ClassifierSpec::reduced(forest.clone(), Keep::Top(64), boost.clone())),
                stage(
                    "cylinders",
                    &["aspiration", "fuel"],
                    ClassifierSpec::reduced(forest, Keep::Top(64), boost.with_class_weight(ClassWeight::Balanced)),
                ),
            ],
            features: FeatureConfig::default(),
            segment_length_s: DEFAULT_SEGMENT_S,
            segments_per_clip: DEFAULT_SEGMENTS_PER_CLIP,
        }
    }

    pub fn validate(&self) -> Result<(), ChainError> {
        if self.stages.is_empty() {
            return Err(ChainError::InvalidSpec("no stages".into()));
        }
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        for st in &self.stages {
            for u in &st.upstream {
                if !seen.contains(u.as_str()) {
                    return Err(ChainError::InvalidSpec(format!("stage {:?} references {u:?}, which is not an earlier stage", st.label)));
                }
            }
            if !seen.insert(&st.label) {
                return Err(ChainError::InvalidSpec(format!("duplicate stage {:?}", st.label)));
            }
            let distinct: BTreeSet<&String> = st.classes.iter().collect();
            if distinct.len() != st.classes.len() {
                return Err(ChainError::InvalidSpec(format!("stage {:?} repeats a class", st.label)));
            }
        }
        if self.segments_per_clip == 0 {
            return Err(ChainError::InvalidSpec("segments_per_clip must be positive".into()));
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        crate::config_hash(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedStage {
    pub label: String,
    pub classes: Vec<String>,
    upstream: Vec<usize>,
    encoding: Encoding,
    classifier: Classifier,
}

impl TrainedStage {
    /// Feature width seen by this stage's classifier.
    pub fn input_width(&self) -> usize {
        self.classifier.n_features()
    }

    pub fn classifier(&self) -> &Classifier {
        &self.classifier
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedChain {
    spec: ChainSpec,
    stages: Vec<TrainedStage>,
    schema_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagePrediction {
    pub label: String,
    pub classes: Vec<String>,
    pub distribution: Vec<f64>,
    pub class: String,
    /// Probability of the chosen class.
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainPrediction {
    pub source_id: String,
    pub segments: usize,
    pub stages: Vec<StagePrediction>,
}

impl ChainPrediction {
    pub fn stage(&self, label: &str) -> Option<&StagePrediction> {
        self.stages.iter().find(|s| s.label == label)
    }
}

/// Average of equally weighted distributions.
pub fn vote(distributions: &[Vec<f64>]) -> Vec<f64> {
    let Some(first) = distributions.first() else {
        return Vec::new();
    };
    let mut acc = vec![0.0; first.len()];
    for d in distributions {
        for (a, v) in acc.iter_mut().zip(d) {
            *a += v;
        }
    }
    let n = distributions.len() as f64;
    acc.iter().map(|a| a / n).collect()
}

fn stage_labels(clips: &[AudioClip], label: &str) -> Result<Vec<String>, ChainError> {
    clips
        .iter()
        .map(|c| c.label(label).map(str::to_string).ok_or_else(|| ChainError::MissingLabel { source_id: c.source_id().into(), label: label.into() }))
        .collect()
}

fn one_hot(classes: &[String], label: &str) -> Vec<f64> {
    classes.iter().map(|c| if c == label { 1.0 } else { 0.0 }).collect()
}

fn augment(base: ArrayView2<'_, f64>, parts: &[(Encoding, &Array2<f64>)]) -> Array2<f64> {
    let width = base.ncols() + parts.iter().map(|(e, d)| e.width(d.ncols())).sum::<usize>();
    let mut out = Array2::zeros((base.nrows(), width));
    out.slice_mut(s![.., ..base.ncols()]).assign(&base);
    let mut buf = Vec::new();
    for i in 0..base.nrows() {
        buf.clear();
        for (enc, dist) in parts {
            enc.encode(dist.row(i).as_slice().expect("standard layout"), &mut buf);
        }
        out.slice_mut(s![i, base.ncols()..]).assign(&ndarray::ArrayView1::from(&buf[..]));
    }
    out
}

/// Trains every stage on the segments of `clips`, with upstream features
/// taken from the ground-truth labels.
pub fn train_chain(spec: &ChainSpec, clips: &[AudioClip], seed: u64) -> crate::Result<TrainedChain> {
    spec.validate()?;
    let extractor = Extractor::new(spec.features.clone())?;
    let mut labels = Vec::with_capacity(spec.stages.len());
    let mut classes = Vec::with_capacity(spec.stages.len());
    for st in &spec.stages {
        let l = stage_labels(clips, &st.label)?;
        let present: BTreeSet<String> = l.iter().cloned().collect();
        let c = if st.classes.is_empty() {
            present.iter().cloned().collect::<Vec<_>>()
        } else {
            if let Some(bad) = present.iter().find(|p| !st.classes.contains(p)) {
                return Err(ChainError::UnknownClass { stage: st.label.clone(), class: bad.clone() }.into());
            }
            let mut c = st.classes.clone();
            c.sort();
            c
        };
        if present.len() < 2 {
            return Err(ChainError::SingleClass { stage: st.label.clone(), found: present.len() }.into());
        }
        labels.push(l);
        classes.push(c);
    }

    let table = featurize_clips(clips, &extractor, spec.segment_length_s, spec.segments_per_clip, derive(seed, 0))?;
    let truth: Vec<Array2<f64>> = (0..spec.stages.len())
        .map(|k| {
            let rows: Vec<f64> = table.clip_index.iter().flat_map(|&c| one_hot(&classes[k], &labels[k][c])).collect();
            Array2::from_shape_vec((table.len(), classes[k].len()), rows).expect("one row per segment")
        })
        .collect();

    let mut stages = Vec::with_capacity(spec.stages.len());
    for (k, st) in spec.stages.iter().enumerate() {
        let upstream: Vec<usize> = st.upstream.iter().map(|u| spec.stages.iter().position(|s| &s.label == u).expect("validated")).collect();
        let parts: Vec<(Encoding, &Array2<f64>)> = upstream.iter().map(|&u| (st.encoding, &truth[u])).collect();
        let x = augment(table.rows.view(), &parts);
        let y: Vec<&str> = table.clip_index.iter().map(|&c| labels[k][c].as_str()).collect();
        let classifier = Classifier::fit(&st.classifier, x.view(), &y, derive(seed, 1 + k as u64))?;
        // Classes absent from training data cannot be predicted; keep the model's set.
        let model_classes = classifier.classes().to_vec();
        stages.push(TrainedStage { label: st.label.clone(), classes: model_classes, upstream, encoding: st.encoding, classifier });
    }
    Ok(TrainedChain { spec: spec.clone(), stages, schema_hash: extractor.schema().hash() })
}

impl TrainedChain {
    pub fn spec(&self) -> &ChainSpec {
        &self.spec
    }

    pub fn stages(&self) -> &[TrainedStage] {
        &self.stages
    }

    pub fn feature_hash(&self) -> String {
        self.spec.features.hash()
    }

    pub fn schema_hash(&self) -> &str {
        &self.schema_hash
    }

    /// Per-stage class distributions for feature rows, feeding each stage the
    /// predicted outputs of its upstream stages.
    pub fn predict_rows(&self, rows: ArrayView2<'_, f64>) -> crate::Result<Vec<Array2<f64>>> {
        let mut outputs: Vec<Array2<f64>> = Vec::with_capacity(self.stages.len());
        for st in &self.stages {
            let parts: Vec<(Encoding, &Array2<f64>)> = st.upstream.iter().map(|&u| (st.encoding, &outputs[u])).collect();
            let x = augment(rows, &parts);
            outputs.push(st.classifier.predict_proba(x.view())?);
        }
        Ok(outputs)
    }

    /// Cuts `segments_per_clip` segments, predicts each, and votes per stage.
    pub fn predict(&self, clip: &AudioClip, segments_per_clip: usize, seed: u64) -> crate::Result<ChainPrediction> {
        let extractor = Extractor::new(self.spec.features.clone())?;
        let segs = segment(clip, self.spec.segment_length_s, segments_per_clip, seed)?;
        let width = extractor.schema().len();
        let mut flat = Vec::with_capacity(segs.len() * width);
        for s in &segs {
            flat.extend(extractor.extract(s)?.values);
        }
        let rows = Array2::from_shape_vec((segs.len(), width), flat).expect("fixed-width rows");
        let outputs = self.predict_rows(rows.view())?;
        let stages = self
            .stages
            .iter()
            .zip(outputs)
            .map(|(st, out)| {
                let dists: Vec<Vec<f64>> = out.outer_iter().map(|r| r.to_vec()).collect();
                let distribution = vote(&dists);
                let k = argmax(&distribution);
                StagePrediction {
                    label: st.label.clone(),
                    classes: st.classes.clone(),
                    class: st.classes[k].clone(),
                    confidence: distribution[k],
                    distribution,
                }
            })
            .collect();
        Ok(ChainPrediction { source_id: clip.source_id().to_string(), segments: segs.len(), stages })
    }

    /// Writes the chain as a model container.
    pub fn write<W: Write>(&self, out: W) -> crate::Result<()> {
        let header = ContainerHeader {
            format: "chain".into(),
            version: CONTAINER_VERSION,
            kind: "chain".into(),
            classes: self.stages.iter().flat_map(|s| s.classes.iter().map(move |c| format!("{}:{c}", s.label))).collect(),
            schema_hash: self.schema_hash.clone(),
            config_hash: self.spec.hash(),
            hyperparams: serde_json::to_value(&self.spec).expect("spec serializes"),
        };
        write_container(out, &header, self)?;
        Ok(())
    }

    pub fn read<R: Read>(input: R) -> crate::Result<Self> {
        let (header, chain): (ContainerHeader, TrainedChain) = read_container(input)?;
        if header.format != "chain" {
            return Err(crate::learn::LearnError::Container(format!("expected a chain, found {:?}", header.format)).into());
        }
        Ok(chain)
    }
}

/// Clip-level prediction for many clips. Each clip's segments are seeded
/// from its source id, so reordering the clips reorders the predictions.
pub fn predict_clips(chain: &TrainedChain, clips: &[AudioClip], segments_per_clip: usize, seed: u64) -> crate::Result<Vec<ChainPrediction>> {
    clips.par_iter().map(|c| chain.predict(c, segments_per_clip, derive_keyed(seed, c.source_id()))).collect()
}

pub fn predict_chain(chain: &TrainedChain, clip: &AudioClip, segments_per_clip: usize, seed: u64) -> crate::Result<ChainPrediction> {
    chain.predict(clip, segments_per_clip, seed)
}

/// Per-stage clip-level reports from voted predictions.
pub fn evaluate_predictions(chain: &TrainedChain, clips: &[AudioClip], predictions: &[ChainPrediction]) -> crate::Result<Vec<EvalReport>> {
    chain
        .stages
        .iter()
        .enumerate()
        .map(|(k, st)| {
            let labels = stage_labels(clips, &st.label)?;
            let rows: Vec<f64> = predictions.iter().flat_map(|p| p.stages[k].distribution.clone()).collect();
            let proba = Array2::from_shape_vec((predictions.len(), st.classes.len()), rows).expect("one row per clip");
            Ok(evaluate_proba(&st.classes, proba.view(), &labels)?)
        })
        .collect()
}

/// Outcome of a source-split train and evaluate run.
#[derive(Debug, Clone)]
pub struct ChainEvaluation {
    pub chain: TrainedChain,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub predictions: Vec<ChainPrediction>,
    pub reports: Vec<EvalReport>,
}

/// Splits `clips` by source, trains on one side and evaluates voted
/// predictions on the other.
pub fn fit_and_evaluate(spec: &ChainSpec, clips: &[AudioClip], test_fraction: f64, segments_per_clip: usize, seed: u64) -> crate::Result<ChainEvaluation> {
    let (train, test) = fold_split(clips, test_fraction, derive(seed, 100))?;
    let train_clips: Vec<AudioClip> = train.iter().map(|&i| clips[i].clone()).collect();
    let test_clips: Vec<AudioClip> = test.iter().map(|&i| clips[i].clone()).collect();
    let chain = train_chain(spec, &train_clips, derive(seed, 200))?;
    let predictions = predict_clips(&chain, &test_clips, segments_per_clip, derive(seed, 300))?;
    let reports = evaluate_predictions(&chain, &test_clips, &predictions)?;
    Ok(ChainEvaluation { chain, train, test, predictions, reports })
}
