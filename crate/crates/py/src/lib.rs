//! Python bindings. Structured results (predictions, reports, traces) come
//! back as plain dicts and lists; clips, chains and descriptors are classes.

use std::collections::BTreeMap;

use autoctx_core::chain::{self, ChainSpec, TrainedChain};
use autoctx_core::context::{self as ctx, ContextVector, ContextWeights, ReferenceContextDB, ReferenceEntry, Ternary};
use autoctx_core::features::{Extractor, FeatureConfig};
use autoctx_core::learn;
use autoctx_core::registry::{self, Aspiration, Fuel, ModelRecord, VehicleDescriptor};
use autoctx_core::signal::{self, AudioClip, Segment};
use autoctx_core::synth::{self, ClassMix, CorpusOptions, EngineSpec, TimbreFamily};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use pyo3::IntoPyObjectExt;
use serde_json::Value;

create_exception!(autoctx, AutoctxError, PyException, "Any error raised by the pipeline.");

fn err(e: impl std::fmt::Display) -> PyErr {
    AutoctxError::new_err(e.to_string())
}

fn parse<T: std::str::FromStr>(what: &str, s: &str) -> PyResult<T> {
    s.parse().map_err(|_| PyValueError::new_err(format!("invalid {what}: {s:?}")))
}

fn from_json<T: serde::de::DeserializeOwned>(what: &str, text: Option<&str>) -> PyResult<Option<T>> {
    text.map(|t| serde_json::from_str(t).map_err(|e| PyValueError::new_err(format!("{what}: {e}")))).transpose()
}

/// Converts a JSON value into the equivalent Python object.
fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_bound_py_any(py)?,
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_bound_py_any(py)?,
            None => n.as_f64().unwrap_or(f64::NAN).into_bound_py_any(py)?,
        },
        Value::String(s) => s.into_bound_py_any(py)?,
        Value::Array(a) => PyList::new(py, a.iter().map(|x| to_py(py, x)).collect::<PyResult<Vec<_>>>()?)?.into_any(),
        Value::Object(m) => {
            let d = PyDict::new(py);
            for (k, x) in m {
                d.set_item(k, to_py(py, x)?)?;
            }
            d.into_any()
        }
    })
}

fn serialize<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &serde_json::to_value(value).map_err(err)?)
}

/// A canonical mono clip with labels.
#[pyclass(name = "Clip", module = "autoctx", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyClip {
    inner: AudioClip,
}

#[pymethods]
impl PyClip {
    /// Peak-normalizes `samples` into a clip at `sample_rate`.
    #[new]
    #[pyo3(signature = (samples, sample_rate, source_id, labels = None))]
    fn new(samples: Vec<f64>, sample_rate: u32, source_id: String, labels: Option<BTreeMap<String, String>>) -> PyResult<Self> {
        let clip = AudioClip::normalized(samples, sample_rate, source_id).map_err(err)?;
        Ok(Self { inner: clip.with_labels(labels.unwrap_or_default()) })
    }

    #[getter]
    fn samples(&self) -> Vec<f64> {
        self.inner.samples().to_vec()
    }

    #[getter]
    fn sample_rate(&self) -> u32 {
        self.inner.sample_rate()
    }

    #[getter]
    fn source_id(&self) -> String {
        self.inner.source_id().to_string()
    }

    #[getter]
    fn duration_s(&self) -> f64 {
        self.inner.duration_s()
    }

    #[getter]
    fn labels(&self) -> BTreeMap<String, String> {
        self.inner.labels.clone()
    }

    /// Writes `<dir>/<stem>.wav` and its sidecar; returns the WAV path.
    #[pyo3(signature = (dir, stem = None))]
    fn write(&self, dir: &str, stem: Option<&str>) -> PyResult<String> {
        let p = signal::write_clip(&self.inner, dir, stem.unwrap_or(self.inner.source_id())).map_err(err)?;
        Ok(p.display().to_string())
    }

    /// Yes (1), no (0) or unknown (-1): does the clip sound like a running engine?
    fn engine_running(&self) -> i8 {
        ctx::detect_engine_running(&self.inner).as_i8()
    }

    fn __len__(&self) -> usize {
        self.inner.samples().len()
    }

    fn __repr__(&self) -> String {
        format!("Clip({:?}, {:.2} s @ {} Hz)", self.inner.source_id(), self.inner.duration_s(), self.inner.sample_rate())
    }
}

/// Loads a WAV file (and its sidecar) as a canonical clip.
#[pyfunction]
fn ingest(path: &str) -> PyResult<PyClip> {
    Ok(PyClip { inner: signal::ingest(path).map_err(err)? })
}

/// Ingests every WAV file in a directory, ordered by path.
#[pyfunction]
fn ingest_dir(path: &str) -> PyResult<Vec<PyClip>> {
    Ok(signal::ingest_dir(path).map_err(err)?.into_iter().map(|inner| PyClip { inner }).collect())
}

/// Renders one idle engine. `idle_rpm` defaults to a per-seed random draw.
#[pyfunction]
#[pyo3(signature = (fuel, cylinders, aspiration, seed, duration_s = 10.0, idle_rpm = None, family = "standard"))]
fn synthesize(fuel: &str, cylinders: u8, aspiration: &str, seed: u64, duration_s: f64, idle_rpm: Option<f64>, family: &str) -> PyResult<PyClip> {
    let (fuel, aspiration): (Fuel, Aspiration) = (parse("fuel", fuel)?, parse("aspiration", aspiration)?);
    let family = timbre(family)?;
    let mut spec = EngineSpec::random(fuel, cylinders, aspiration, family, seed);
    if let Some(rpm) = idle_rpm {
        spec.idle_rpm = rpm;
    }
    Ok(PyClip { inner: synth::synthesize(&spec, duration_s).map_err(err)? })
}

fn timbre(name: &str) -> PyResult<TimbreFamily> {
    match name {
        "standard" => Ok(TimbreFamily::Standard),
        "alternate" => Ok(TimbreFamily::Alternate),
        _ => Err(PyValueError::new_err(format!("unknown family {name:?}"))),
    }
}

/// A labeled synthetic corpus, one clip per vehicle.
#[pyfunction]
#[pyo3(signature = (n, seed, mix = "balanced", duration_s = 10.0, family = "standard", prefix = "veh"))]
fn generate_corpus(py: Python<'_>, n: usize, seed: u64, mix: &str, duration_s: f64, family: &str, prefix: &str) -> PyResult<Vec<PyClip>> {
    let mix = match mix {
        "balanced" => ClassMix::balanced(),
        "fleet" => ClassMix::fleet(),
        _ => return Err(PyValueError::new_err(format!("unknown mix {mix:?}"))),
    };
    let opts = CorpusOptions { duration_s, family: timbre(family)?, id_prefix: prefix.to_string() };
    let clips = py.detach(|| synth::generate_corpus(n, &mix, seed, &opts)).map_err(err)?;
    Ok(clips.into_iter().map(|inner| PyClip { inner }).collect())
}

fn feature_config(config: Option<&str>) -> PyResult<FeatureConfig> {
    Ok(from_json("feature config", config)?.unwrap_or_default())
}

/// Feature vector of one segment; `config` is FeatureConfig JSON.
#[pyfunction]
#[pyo3(signature = (samples, sample_rate = 22_050, config = None))]
fn extract_features(samples: Vec<f64>, sample_rate: u32, config: Option<&str>) -> PyResult<Vec<f64>> {
    let ex = Extractor::new(feature_config(config)?).map_err(err)?;
    Ok(ex.extract(&Segment::from_samples(samples, sample_rate)).map_err(err)?.values)
}

/// Column names of the feature vector for `config`.
#[pyfunction]
#[pyo3(signature = (config = None))]
fn feature_names(config: Option<&str>) -> PyResult<Vec<String>> {
    Ok(feature_config(config)?.schema().column_names().map(str::to_string).collect())
}

/// Threshold-sweep ROC-AUC; `None` when a class is missing.
#[pyfunction]
fn roc_auc(scores: Vec<f64>, positive: Vec<bool>) -> PyResult<Option<f64>> {
    if scores.len() != positive.len() {
        return Err(PyValueError::new_err("scores and labels differ in length"));
    }
    Ok(learn::roc_auc(&scores, &positive))
}

fn unwrap_clips(clips: &[PyRef<'_, PyClip>]) -> Vec<AudioClip> {
    clips.iter().map(|c| c.inner.clone()).collect()
}

/// A trained classifier chain.
#[pyclass(name = "Chain", module = "autoctx", frozen, skip_from_py_object)]
pub struct PyChain {
    inner: TrainedChain,
}

#[pymethods]
impl PyChain {
    /// Trains on labeled clips; `spec` is ChainSpec JSON, defaulting to
    /// aspiration, then fuel, then cylinders.
    #[staticmethod]
    #[pyo3(signature = (clips, seed, spec = None))]
    fn train(py: Python<'_>, clips: Vec<PyRef<'_, PyClip>>, seed: u64, spec: Option<&str>) -> PyResult<Self> {
        let spec: ChainSpec = from_json("chain spec", spec)?.unwrap_or_else(ChainSpec::default_powertrain);
        let clips = unwrap_clips(&clips);
        Ok(Self { inner: py.detach(|| chain::train_chain(&spec, &clips, seed)).map_err(err)? })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let file = std::fs::File::open(path).map_err(err)?;
        Ok(Self { inner: TrainedChain::read(std::io::BufReader::new(file)).map_err(err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        let file = std::fs::File::create(path).map_err(err)?;
        self.inner.write(std::io::BufWriter::new(file)).map_err(err)
    }

    /// Stage labels in prediction order.
    #[getter]
    fn stages(&self) -> Vec<String> {
        self.inner.stages().iter().map(|s| s.label.clone()).collect()
    }

    #[getter]
    fn config_hash(&self) -> String {
        self.inner.spec().hash()
    }

    /// Voted prediction for one clip.
    #[pyo3(signature = (clip, seed, segments = 9))]
    fn predict<'py>(&self, py: Python<'py>, clip: PyRef<'_, PyClip>, seed: u64, segments: usize) -> PyResult<Bound<'py, PyAny>> {
        let p = self.inner.predict(&clip.inner, segments, seed).map_err(err)?;
        serialize(py, &p)
    }

    /// Per-stage reports on labeled clips.
    #[pyo3(signature = (clips, seed, segments = 9))]
    fn evaluate<'py>(&self, py: Python<'py>, clips: Vec<PyRef<'_, PyClip>>, seed: u64, segments: usize) -> PyResult<Bound<'py, PyAny>> {
        let clips = unwrap_clips(&clips);
        let reports = py
            .detach(|| -> autoctx_core::Result<_> {
                let preds = chain::predict_clips(&self.inner, &clips, segments, seed)?;
                chain::evaluate_predictions(&self.inner, &clips, &preds)
            })
            .map_err(err)?;
        let keyed: BTreeMap<&str, &learn::EvalReport> = self.inner.stages().iter().map(|s| s.label.as_str()).zip(&reports).collect();
        serialize(py, &keyed)
    }
}

/// A vehicle descriptor: seven attributes, each fixed or a wildcard.
#[pyclass(name = "Descriptor", module = "autoctx", frozen, eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
pub struct PyDescriptor {
    inner: VehicleDescriptor,
}

#[pymethods]
impl PyDescriptor {
    /// Parses `(fuel, configuration, cylinders, displacement, aspiration, make, instance)`.
    #[new]
    #[pyo3(signature = (text = "(*, *, *, *, *, *, *)"))]
    fn new(text: &str) -> PyResult<Self> {
        Ok(Self { inner: text.parse().map_err(err)? })
    }

    #[getter]
    fn specificity(&self) -> usize {
        self.inner.specificity()
    }

    /// True when every fixed attribute of `self` is fixed identically in `other`.
    fn generalizes(&self, other: &PyDescriptor) -> bool {
        self.inner.generalizes(&other.inner)
    }

    fn meet(&self, other: &PyDescriptor) -> Self {
        Self { inner: self.inner.meet(&other.inner) }
    }

    fn __str__(&self) -> String {
        self.inner.to_string()
    }

    fn __repr__(&self) -> String {
        format!("Descriptor({:?})", self.inner.to_string())
    }
}

/// Descriptor implied by a `Chain.predict` result.
#[pyfunction]
#[pyo3(signature = (prediction, floor = 0.8))]
fn identify(prediction: Bound<'_, PyAny>, floor: f64) -> PyResult<PyDescriptor> {
    let json = prediction.py().import("json")?.call_method1("dumps", (prediction,))?.extract::<String>()?;
    let p: chain::ChainPrediction = serde_json::from_str(&json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(PyDescriptor { inner: registry::identify(&p, floor, &[]) })
}

/// Most specific applicable record. `records` are dicts with `id`,
/// `descriptor` (text), `kind` and `n_train`. Returns the id, whether the
/// root was a fallback, and the candidate trace.
#[pyfunction]
#[pyo3(signature = (query, kind, records, min_n = registry::DEFAULT_MIN_N))]
fn select_model<'py>(py: Python<'py>, query: &PyDescriptor, kind: &str, records: Vec<Bound<'py, PyDict>>, min_n: u32) -> PyResult<Bound<'py, PyAny>> {
    let records = records
        .iter()
        .map(|r| {
            let get = |k: &str| r.get_item(k)?.ok_or_else(|| PyValueError::new_err(format!("record lacks {k:?}")));
            let d: VehicleDescriptor = get("descriptor")?.extract::<String>()?.parse().map_err(err)?;
            Ok(ModelRecord::new(get("id")?.extract::<String>()?, d, get("kind")?.extract::<String>()?, get("n_train")?.extract::<u32>()?))
        })
        .collect::<PyResult<Vec<_>>>()?;
    let sel = registry::select_model(&query.inner, kind, min_n, &records).map_err(err)?;
    let out = serde_json::json!({
        "id": sel.record.id,
        "specificity": sel.record.descriptor.specificity(),
        "fell_back_to_root": sel.fell_back_to_root,
        "candidates": sel.candidates,
    });
    to_py(py, &out)
}

fn ternary(v: i8) -> PyResult<Ternary> {
    match v {
        1 => Ok(Ternary::Yes),
        0 => Ok(Ternary::No),
        -1 => Ok(Ternary::Unknown),
        _ => Err(PyValueError::new_err(format!("context values are 1, 0 or -1, got {v}"))),
    }
}

/// Prunes unknown and zero-weight entries, then finds the nearest reference
/// by weighted Hamming distance. `query` is an ordered list of
/// `(name, value)`; `references` maps model id to 0/1 values in that order.
#[pyfunction]
#[pyo3(signature = (query, references, weights = None))]
fn match_context<'py>(
    py: Python<'py>,
    query: Vec<(String, i8)>,
    references: BTreeMap<String, Vec<u8>>,
    weights: Option<BTreeMap<String, f64>>,
) -> PyResult<Bound<'py, PyAny>> {
    let names: Vec<String> = query.iter().map(|(n, _)| n.clone()).collect();
    let q = ContextVector::new(query.iter().map(|(n, v)| Ok((n.clone(), ternary(*v)?))).collect::<PyResult<Vec<_>>>()?).map_err(err)?;
    let entries = references.into_iter().map(|(model_id, values)| ReferenceEntry { model_id, values, n_train: 1 }).collect();
    let db = ReferenceContextDB::new(names.clone(), entries).map_err(err)?;
    let w = match weights {
        Some(w) => ContextWeights::new("python", w).map_err(err)?,
        None => ContextWeights::uniform("python", names),
    };
    let (pruned, m) = ctx::select_context(&q, &db, &w).map_err(err)?;
    to_py(py, &serde_json::json!({ "model_id": m.model_id, "distance": m.distance, "margin": m.margin, "distances": m.distances, "pruned": pruned.dropped }))
}

/// Registers the module contents on `m`.
pub fn register(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("AutoctxError", m.py().get_type::<AutoctxError>())?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyClip>()?;
    m.add_class::<PyChain>()?;
    m.add_class::<PyDescriptor>()?;
    m.add_function(wrap_pyfunction!(ingest, m)?)?;
    m.add_function(wrap_pyfunction!(ingest_dir, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(generate_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(extract_features, m)?)?;
    m.add_function(wrap_pyfunction!(feature_names, m)?)?;
    m.add_function(wrap_pyfunction!(roc_auc, m)?)?;
    m.add_function(wrap_pyfunction!(identify, m)?)?;
    m.add_function(wrap_pyfunction!(select_model, m)?)?;
    m.add_function(wrap_pyfunction!(match_context, m)?)?;
    Ok(())
}

#[pymodule]
fn autoctx(m: &Bound<'_, PyModule>) -> PyResult<()> {
    register(m)
}
