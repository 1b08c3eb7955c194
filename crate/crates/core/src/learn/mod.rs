//! Tree ensembles, importance-based feature reduction, evaluation metrics and
//! grid search.
//!
//! Three ensemble kinds share one interface: bagged random forests,
//! extremely randomized forests, and multinomial gradient boosting. Training
//! is deterministic in the seed; each tree draws from its own derived stream,
//! so thread count never changes the result.

mod boost;
mod container;
mod dataset;
mod ensemble;
pub mod grid;
mod metrics;
mod reduce;
mod tree;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use container::{read_container, write_container, ContainerHeader, CONTAINER_VERSION};
pub use dataset::{featurize_clips, SegmentTable};
pub use ensemble::{train, EnsembleKind, TreeEnsemble};
pub use grid::{clip_labels, fold_split, grid_search, CellResult, GridReport, GridSpec};
pub use metrics::{average_precision, evaluate, evaluate_proba, roc_auc, EvalReport};
pub use reduce::{reduce_features, select_columns, Classifier, ClassifierSpec, Keep, ReducerSpec};
pub use tree::{DecisionTree, Node};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("training needs at least 2 classes, found {0}")]
    SingleClass(usize),
    #[error("empty training or evaluation set")]
    Empty,
    #[error("non-finite feature at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("row width {found} does not match the model's {expected} features")]
    WidthMismatch { expected: usize, found: usize },
    #[error("{rows} rows but {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("cannot keep {keep} of {features} features")]
    KeepTooLarge { keep: usize, features: usize },
    #[error("invalid feature-reduction rule: {0}")]
    InvalidKeep(String),
    #[error("clip {source_id:?} has no {label:?} label")]
    MissingLabel { source_id: String, label: String },
    #[error("label {0:?} is not one of the model's classes")]
    UnknownLabel(String),
    #[error("invalid hyperparameters: {0}")]
    InvalidParams(String),
    #[error("model container: {0}")]
    Container(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, LearnError>;

/// How many features each split considers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    All,
    Sqrt,
    Log2,
    Count(usize),
    Fraction(f64),
}

impl MaxFeatures {
    pub fn resolve(self, n_features: usize) -> usize {
        let n = n_features as f64;
        let k = match self {
            MaxFeatures::All => n_features,
            MaxFeatures::Sqrt => n.sqrt().round() as usize,
            MaxFeatures::Log2 => n.log2().round() as usize,
            MaxFeatures::Count(c) => c,
            MaxFeatures::Fraction(f) => (f * n).round() as usize,
        };
        k.clamp(1, n_features.max(1))
    }
}

/// Per-class sample weighting in split criteria and gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeight {
    #[default]
    Uniform,
    /// Inverse class frequency, `n / (k * n_c)`.
    Balanced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub max_features: MaxFeatures,
    pub class_weight: ClassWeight,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self { n_trees: 300, max_depth: None, min_leaf: 1, max_features: MaxFeatures::Sqrt, class_weight: ClassWeight::Uniform }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoostParams {
    pub rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub max_features: MaxFeatures,
    /// Row fraction drawn (without replacement) for each round.
    pub subsample: f64,
    /// L2 penalty on leaf values.
    pub l2: f64,
    pub max_bins: usize,
    pub class_weight: ClassWeight,
}

impl Default for BoostParams {
    fn default() -> Self {
        Self {
            rounds: 200,
            learning_rate: 0.1,
            max_depth: 3,
            min_leaf: 1,
            max_features: MaxFeatures::All,
            subsample: 1.0,
            l2: 1.0,
            max_bins: 64,
            class_weight: ClassWeight::Uniform,
        }
    }
}

/// Ensemble kind together with its hyperparameters.
///
/// In JSON the kind is an inline `"kind"` field; binary encodings use a plain
/// variant index because they cannot parse internally tagged enums.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    BaggedForest(ForestParams),
    ExtraRandomForest(ForestParams),
    GradientBoosted(BoostParams),
}

mod spec_repr {
    use super::{BoostParams, ForestParams, ModelSpec};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(tag = "kind", rename_all = "snake_case")]
    enum Tagged {
        BaggedForest(ForestParams),
        ExtraRandomForest(ForestParams),
        GradientBoosted(BoostParams),
    }

    #[derive(Serialize, Deserialize)]
    enum Plain {
        BaggedForest(ForestParams),
        ExtraRandomForest(ForestParams),
        GradientBoosted(BoostParams),
    }

    impl Serialize for ModelSpec {
        fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
            let human = s.is_human_readable();
            match (self.clone(), human) {
                (ModelSpec::BaggedForest(p), true) => Tagged::BaggedForest(p).serialize(s),
                (ModelSpec::ExtraRandomForest(p), true) => Tagged::ExtraRandomForest(p).serialize(s),
                (ModelSpec::GradientBoosted(p), true) => Tagged::GradientBoosted(p).serialize(s),
                (ModelSpec::BaggedForest(p), false) => Plain::BaggedForest(p).serialize(s),
                (ModelSpec::ExtraRandomForest(p), false) => Plain::ExtraRandomForest(p).serialize(s),
                (ModelSpec::GradientBoosted(p), false) => Plain::GradientBoosted(p).serialize(s),
            }
        }
    }

    impl<'de> Deserialize<'de> for ModelSpec {
        fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
            if d.is_human_readable() {
                Ok(match Tagged::deserialize(d)? {
                    Tagged::BaggedForest(p) => ModelSpec::BaggedForest(p),
                    Tagged::ExtraRandomForest(p) => ModelSpec::ExtraRandomForest(p),
                    Tagged::GradientBoosted(p) => ModelSpec::GradientBoosted(p),
                })
            } else {
                Ok(match Plain::deserialize(d)? {
                    Plain::BaggedForest(p) => ModelSpec::BaggedForest(p),
                    Plain::ExtraRandomForest(p) => ModelSpec::ExtraRandomForest(p),
                    Plain::GradientBoosted(p) => ModelSpec::GradientBoosted(p),
                })
            }
        }
    }
}

impl ModelSpec {
    pub fn kind(&self) -> EnsembleKind {
        match self {
            ModelSpec::BaggedForest(_) => EnsembleKind::BaggedForest,
            ModelSpec::ExtraRandomForest(_) => EnsembleKind::ExtraRandomForest,
            ModelSpec::GradientBoosted(_) => EnsembleKind::GradientBoosted,
        }
    }

    pub fn default_for(kind: EnsembleKind) -> Self {
        match kind {
            EnsembleKind::BaggedForest => ModelSpec::BaggedForest(ForestParams::default()),
            EnsembleKind::ExtraRandomForest => ModelSpec::ExtraRandomForest(ForestParams::default()),
            EnsembleKind::GradientBoosted => ModelSpec::GradientBoosted(BoostParams::default()),
        }
    }

    /// Same spec with class weighting switched.
    pub fn with_class_weight(mut self, weight: ClassWeight) -> Self {
        match &mut self {
            ModelSpec::BaggedForest(p) | ModelSpec::ExtraRandomForest(p) => p.class_weight = weight,
            ModelSpec::GradientBoosted(p) => p.class_weight = weight,
        }
        self
    }

    pub fn class_weight(&self) -> ClassWeight {
        match self {
            ModelSpec::BaggedForest(p) | ModelSpec::ExtraRandomForest(p) => p.class_weight,
            ModelSpec::GradientBoosted(p) => p.class_weight,
        }
    }
}

/// Anything that maps feature rows to class distributions.
pub trait ProbabilisticClassifier {
    fn classes(&self) -> &[String];
    fn n_features(&self) -> usize;
    fn predict_proba(&self, rows: ndarray::ArrayView2<'_, f64>) -> Result<ndarray::Array2<f64>>;
}

/// Index of the largest value; exact ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
