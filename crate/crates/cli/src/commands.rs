use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use autoctx_core::chain::{evaluate_predictions, predict_clips, train_chain, ChainPrediction, ChainSpec, TrainedChain};
use autoctx_core::config_hash;
use autoctx_core::context::{detect_engine_running, select_context, ContextVector, ContextWeights, ReferenceContextDB};
use autoctx_core::features::{write_dump, Extractor, FeatureConfig};
use autoctx_core::learn::{featurize_clips, grid_search, ClassifierSpec, EnsembleKind, GridSpec, ModelSpec};
use autoctx_core::registry::{identify, RegistryStore, VehicleDescriptor, DEFAULT_MIN_N};
use autoctx_core::signal::{self, ingest_dir, write_clip, AudioClip};
use autoctx_core::synth::{generate_corpus, write_corpus, ClassMix, CorpusOptions, TimbreFamily};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::config::{required, resolve};
use crate::error::{CliError, Result};
use crate::{ClassifyFlags, EvaluateFlags, FeaturizeFlags, GridFlags, IngestFlags, SelectFlags, SynthFlags, TrainFlags};

type ConfigFile<'a> = Option<&'a Map<String, Value>>;

const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Logs the resolved parameters and returns the artifact hash: the hash of
/// the parameters minus file locations, plus any loaded specifications.
fn announce<P: Serialize>(command: &str, params: &P, locations: &[&str], specs: Value) -> String {
    let resolved = serde_json::to_value(params).expect("params serialize");
    let mut hashed = resolved.clone();
    if let Value::Object(m) = &mut hashed {
        for k in locations {
            m.remove(*k);
        }
    }
    let hash = config_hash(&json!({ "command": command, "params": hashed, "specs": specs }));
    tracing::info!(command, version = VERSION, config_hash = %hash, config = %resolved, specs = %specs, "resolved configuration");
    hash
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
    serde_json::from_str(&text).map_err(|e| CliError::io(path.display(), e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display(), e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path.display(), e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn load_clips(input: &Path) -> Result<Vec<AudioClip>> {
    if !input.exists() {
        return Err(CliError::io(input.display(), "no such file or directory"));
    }
    let clips = if input.is_dir() { ingest_dir(input)? } else { vec![signal::ingest(input)?] };
    if clips.is_empty() {
        return Err(CliError::io(input.display(), "no WAV files found"));
    }
    tracing::info!(input = %input.display(), clips = clips.len(), "loaded clips");
    Ok(clips)
}

fn load_chain(path: &Path) -> Result<TrainedChain> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path.display(), e))?;
    Ok(TrainedChain::read(std::io::BufReader::new(file))?)
}

#[derive(Serialize)]
struct ClipEntry<'a> {
    source_id: &'a str,
    file: String,
    duration_s: f64,
    labels: &'a BTreeMap<String, String>,
}

fn clip_entries<'a>(clips: &'a [AudioClip], files: &[PathBuf]) -> Vec<ClipEntry<'a>> {
    clips
        .iter()
        .zip(files)
        .map(|(c, f)| ClipEntry {
            source_id: c.source_id(),
            file: f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
            duration_s: c.duration_s(),
            labels: &c.labels,
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct SynthParams {
    out: Option<PathBuf>,
    n: usize,
    mix: String,
    seed: Option<u64>,
    duration_s: f64,
    family: TimbreFamily,
    prefix: String,
}

pub fn synth(file: ConfigFile, flags: &SynthFlags) -> Result<()> {
    let defaults = SynthParams {
        out: None,
        n: 200,
        mix: "balanced".into(),
        seed: None,
        duration_s: autoctx_core::synth::DEFAULT_DURATION_S,
        family: TimbreFamily::Standard,
        prefix: "veh".into(),
    };
    let p: SynthParams = resolve("synth", &defaults, file, flags)?;
    let out = required(&p.out, "out")?;
    let seed = required(&p.seed, "seed")?;
    let mix = match p.mix.as_str() {
        "balanced" => ClassMix::balanced(),
        "fleet" => ClassMix::fleet(),
        other => return Err(CliError::Usage(format!("unknown mix {other:?}; expected balanced or fleet"))),
    };
    let hash = announce("synth", &p, &["out"], Value::Null);
    let opts = CorpusOptions { duration_s: p.duration_s, family: p.family, id_prefix: p.prefix.clone() };
    let clips = generate_corpus(p.n, &mix, seed, &opts)?;
    let files = write_corpus(&clips, &out)?;
    write_json(&out.join("corpus.json"), &json!({ "config_hash": hash, "version": VERSION, "params": p, "clips": clip_entries(&clips, &files) }))?;
    let mut cells: BTreeMap<String, usize> = BTreeMap::new();
    for c in &clips {
        let key = ["fuel", "aspiration", "cylinders"].map(|k| c.label(k).unwrap_or("?")).join(" / ");
        *cells.entry(key).or_default() += 1;
    }
    println!("wrote {} clips to {} (config {hash})", clips.len(), out.display());
    for (k, n) in cells {
        println!("  {k:<28} {n:>4}");
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct IngestParams {
    input: Option<PathBuf>,
    out: Option<PathBuf>,
}

pub fn ingest(file: ConfigFile, flags: &IngestFlags) -> Result<()> {
    let p: IngestParams = resolve("ingest", &IngestParams { input: None, out: None }, file, flags)?;
    let (input, out) = (required(&p.input, "input")?, required(&p.out, "out")?);
    let hash = announce("ingest", &p, &["input", "out"], Value::Null);
    let clips = load_clips(&input)?;
    fs::create_dir_all(&out).map_err(|e| CliError::io(out.display(), e))?;
    let files = clips.iter().map(|c| write_clip(c, &out, c.source_id())).collect::<std::result::Result<Vec<_>, _>>()?;
    write_json(&out.join("manifest.json"), &json!({ "config_hash": hash, "version": VERSION, "clips": clip_entries(&clips, &files) }))?;
    println!("{:<24} {:>9}  labels", "source_id", "seconds");
    for c in &clips {
        let labels: Vec<String> = c.labels.iter().map(|(k, v)| format!("{k}={v}")).collect();
        println!("{:<24} {:>9.2}  {}", c.source_id(), c.duration_s(), labels.join(" "));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct FeaturizeParams {
    input: Option<PathBuf>,
    out: Option<PathBuf>,
    features: Option<PathBuf>,
    segments: usize,
    segment_length_s: f64,
    seed: Option<u64>,
}

pub fn featurize(file: ConfigFile, flags: &FeaturizeFlags) -> Result<()> {
    let defaults = FeaturizeParams { input: None, out: None, features: None, segments: 9, segment_length_s: 1.0, seed: None };
    let p: FeaturizeParams = resolve("featurize", &defaults, file, flags)?;
    let (input, out, seed) = (required(&p.input, "input")?, required(&p.out, "out")?, required(&p.seed, "seed")?);
    let cfg: FeatureConfig = p.features.as_deref().map(read_json).transpose()?.unwrap_or_default();
    let hash = announce("featurize", &p, &["input", "out", "features"], serde_json::to_value(&cfg)?);
    let clips = load_clips(&input)?;
    let ex = Extractor::new(cfg.clone())?;
    let table = featurize_clips(&clips, &ex, p.segment_length_s, p.segments, seed)?;
    let rows: Vec<Vec<f64>> = table.rows.outer_iter().map(|r| r.to_vec()).collect();
    let mut seen: BTreeMap<usize, usize> = BTreeMap::new();
    let ids = table
        .clip_index
        .iter()
        .map(|&c| {
            let k = seen.entry(c).or_default();
            *k += 1;
            format!("{}#{}", clips[c].source_id(), *k - 1)
        })
        .collect();
    let paths = write_dump(&out, &cfg, ex.schema(), &rows, ids)?;
    write_json(&out.join("featurize.json"), &json!({ "config_hash": hash, "version": VERSION, "feature_hash": cfg.hash(), "rows": rows.len(), "cols": ex.schema().len() }))?;
    println!("{} segments x {} features (config {hash})", rows.len(), ex.schema().len());
    for f in [&paths.csv, &paths.matrix, &paths.sidecar] {
        println!("  {}", f.display());
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct TrainParams {
    input: Option<PathBuf>,
    out: Option<PathBuf>,
    chain: Option<PathBuf>,
    seed: Option<u64>,
}

pub fn train(file: ConfigFile, flags: &TrainFlags) -> Result<()> {
    let p: TrainParams = resolve("train", &TrainParams { input: None, out: None, chain: None, seed: None }, file, flags)?;
    let (input, out, seed) = (required(&p.input, "input")?, required(&p.out, "out")?, required(&p.seed, "seed")?);
    let spec: ChainSpec = match &p.chain {
        Some(path) => read_json(path)?,
        None => ChainSpec::default_powertrain(),
    };
    announce("train", &p, &["input", "out", "chain"], serde_json::to_value(&spec)?);
    let clips = load_clips(&input)?;
    let chain = train_chain(&spec, &clips, seed)?;
    let mut bytes = Vec::new();
    chain.write(&mut bytes)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display(), e))?;
    }
    fs::write(&out, &bytes).map_err(|e| CliError::io(out.display(), e))?;
    println!("{:<12} {:>7} {:>7}  classes", "stage", "inputs", "n");
    for st in chain.stages() {
        println!("{:<12} {:>7} {:>7}  {}", st.label, st.input_width(), clips.len(), st.classes.join(", "));
    }
    println!("wrote {} (chain config {})", out.display(), spec.hash());
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct GridParams {
    input: Option<PathBuf>,
    out: Option<PathBuf>,
    grid: Option<PathBuf>,
    target: String,
    seed: Option<u64>,
}

fn default_grid(target: &str) -> GridSpec {
    let classifiers = [EnsembleKind::BaggedForest, EnsembleKind::ExtraRandomForest, EnsembleKind::GradientBoosted]
        .map(|k| ClassifierSpec::plain(ModelSpec::default_for(k)))
        .to_vec();
    GridSpec::new(target, vec![FeatureConfig::default()], classifiers)
}

pub fn grid(file: ConfigFile, flags: &GridFlags) -> Result<()> {
    let defaults = GridParams { input: None, out: None, grid: None, target: "fuel".into(), seed: None };
    let p: GridParams = resolve("grid", &defaults, file, flags)?;
    let (input, out, seed) = (required(&p.input, "input")?, required(&p.out, "out")?, required(&p.seed, "seed")?);
    let spec: GridSpec = match &p.grid {
        Some(path) => read_json(path)?,
        None => default_grid(&p.target),
    };
    announce("grid", &p, &["input", "out", "grid"], serde_json::to_value(&spec)?);
    let clips = load_clips(&input)?;
    let report = grid_search(&spec, &clips, seed)?;
    let stem = format!("grid-{}", report.grid_hash);
    write_text(&out.join(format!("{stem}.csv")), &report.to_csv())?;
    write_text(&out.join(format!("{stem}.json")), &(report.to_json() + "\n"))?;
    let metric = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"));
    println!("{:>4}  {:<8} {:>8} {:>8} {:>8}  classifier", "rank", "cell", "roc_auc", "pr_auc", "acc");
    for (i, r) in report.results.iter().enumerate() {
        println!("{:>4}  {:<8} {:>8} {:>8} {:>8}  {}", i + 1, r.cell_id, metric(r.roc_auc), metric(r.pr_auc), metric(r.accuracy), r.classifier_label);
    }
    println!("wrote {}/{stem}.{{csv,json}}", out.display());
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct EvaluateParams {
    input: Option<PathBuf>,
    model: Option<PathBuf>,
    out: Option<PathBuf>,
    segments: usize,
    seed: Option<u64>,
}

pub fn evaluate(file: ConfigFile, flags: &EvaluateFlags) -> Result<()> {
    let defaults = EvaluateParams { input: None, model: None, out: None, segments: 9, seed: None };
    let p: EvaluateParams = resolve("evaluate", &defaults, file, flags)?;
    let (input, model, seed) = (required(&p.input, "input")?, required(&p.model, "model")?, required(&p.seed, "seed")?);
    let chain = load_chain(&model)?;
    let hash = announce("evaluate", &p, &["input", "model", "out"], json!({ "chain": chain.spec().hash() }));
    let clips = load_clips(&input)?;
    let predictions = predict_clips(&chain, &clips, p.segments, seed)?;
    let reports = evaluate_predictions(&chain, &clips, &predictions)?;
    for (st, r) in chain.stages().iter().zip(&reports) {
        println!("== {} ==", st.label);
        println!("{r}");
    }
    if let Some(out) = &p.out {
        let stages: Vec<Value> = chain.stages().iter().zip(&reports).map(|(s, r)| json!({ "label": s.label, "report": r })).collect();
        write_json(out, &json!({ "config_hash": hash, "version": VERSION, "chain_config_hash": chain.spec().hash(), "stages": stages }))?;
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct ClassifyParams {
    model: Option<PathBuf>,
    clip: Option<PathBuf>,
    out: Option<PathBuf>,
    segments: usize,
    seed: Option<u64>,
    floor: f64,
}

#[derive(Serialize, Deserialize)]
struct StageReport {
    label: String,
    class: String,
    confidence: f64,
    distribution: BTreeMap<String, f64>,
}

/// What `classify` prints and what `select-model --prediction` reads.
#[derive(Serialize, Deserialize)]
struct ClassifyReport {
    config_hash: String,
    source_id: String,
    segments: usize,
    engine_running: autoctx_core::context::Ternary,
    stages: Vec<StageReport>,
    descriptor: String,
    prediction: ChainPrediction,
}

pub fn classify(file: ConfigFile, flags: &ClassifyFlags) -> Result<()> {
    let defaults = ClassifyParams { model: None, clip: None, out: None, segments: 9, seed: None, floor: 0.8 };
    let p: ClassifyParams = resolve("classify", &defaults, file, flags)?;
    let (model, clip_path, seed) = (required(&p.model, "model")?, required(&p.clip, "clip")?, required(&p.seed, "seed")?);
    let chain = load_chain(&model)?;
    let hash = announce("classify", &p, &["model", "clip", "out"], json!({ "chain": chain.spec().hash() }));
    if !clip_path.exists() {
        return Err(CliError::io(clip_path.display(), "no such file"));
    }
    let clip = signal::ingest(&clip_path)?;
    let prediction = chain.predict(&clip, p.segments, seed)?;
    let stages = prediction
        .stages
        .iter()
        .map(|s| StageReport {
            label: s.label.clone(),
            class: s.class.clone(),
            confidence: s.confidence,
            distribution: s.classes.iter().cloned().zip(s.distribution.iter().copied()).collect(),
        })
        .collect();
    let report = ClassifyReport {
        config_hash: hash,
        source_id: prediction.source_id.clone(),
        segments: prediction.segments,
        engine_running: detect_engine_running(&clip),
        stages,
        descriptor: identify(&prediction, p.floor, &[]).to_string(),
        prediction,
    };
    let text = serde_json::to_string_pretty(&report)? + "\n";
    if let Some(out) = &p.out {
        write_text(out, &text)?;
    }
    print!("{text}");
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct SelectParams {
    registry: Option<PathBuf>,
    kind: Option<String>,
    descriptor: Option<String>,
    prediction: Option<PathBuf>,
    floor: f64,
    min_n: u32,
    context: Option<PathBuf>,
    json: bool,
}

#[derive(Deserialize)]
struct ContextInput {
    query: ContextVector,
    db: ReferenceContextDB,
    weights: ContextWeights,
}

pub fn select_model(file: ConfigFile, flags: &SelectFlags) -> Result<()> {
    let defaults = SelectParams { registry: None, kind: None, descriptor: None, prediction: None, floor: 0.8, min_n: DEFAULT_MIN_N, context: None, json: false };
    let p: SelectParams = resolve("select_model", &defaults, file, flags)?;
    let registry_dir = required(&p.registry, "registry")?;
    announce("select_model", &p, &["registry", "prediction", "context"], Value::Null);

    let query = match (&p.descriptor, &p.prediction) {
        (Some(_), Some(_)) => return Err(CliError::Usage("give either descriptor or prediction, not both".into())),
        (Some(d), None) => d.parse::<VehicleDescriptor>()?,
        (None, Some(path)) => identify(&read_json::<ClassifyReport>(path)?.prediction, p.floor, &[]),
        (None, None) => VehicleDescriptor::root(),
    };

    let mut trace = Map::new();
    let mut lines = Vec::new();
    let mut kind = p.kind.clone();
    if let Some(path) = &p.context {
        let ctx: ContextInput = read_json(path)?;
        let (pruned, m) = select_context(&ctx.query, &ctx.db, &ctx.weights)?;
        lines.push(format!("context: kept [{}], pruned [{}]", pruned.query.names().join(", "), pruned.dropped.join(", ")));
        for (id, d) in &m.distances {
            lines.push(format!("  distance {id:<16} {d}"));
        }
        let margin = m.margin.map_or_else(|| "n/a".to_string(), |x| x.to_string());
        lines.push(format!("  nearest {} (distance {}, margin {margin})", m.model_id, m.distance));
        trace.insert("context".into(), json!({ "kept": pruned.query.names(), "pruned": pruned.dropped, "match": m }));
        kind.get_or_insert(m.model_id);
    }
    let kind = kind.ok_or_else(|| CliError::Usage("need a diagnostic kind or a context to choose one".into()))?;

    let registry = RegistryStore::open(&registry_dir)?.load()?;
    let sel = registry.select(&query, &kind, p.min_n)?;
    lines.push(format!("vehicle {query} (specificity {})", query.specificity()));
    lines.push(format!("registry v{} kind {kind} min_n {}:", registry.version, p.min_n));
    lines.push(format!("  {:<20} {:>11} {:>7}  {:<11} eligible", "id", "specificity", "n_train", "generalizes"));
    for c in &sel.candidates {
        lines.push(format!("  {:<20} {:>11} {:>7}  {:<11} {}", c.id, c.specificity, c.n_train, c.generalizes_query, c.eligible));
    }
    let rec = sel.record;
    lines.push(format!(
        "selected {} {} (specificity {}, n_train {}){}",
        rec.id,
        rec.descriptor,
        rec.descriptor.specificity(),
        rec.n_train,
        if sel.fell_back_to_root { " [fallback to root]" } else { "" }
    ));
    trace.insert("query".into(), json!({ "descriptor": query.to_string(), "specificity": query.specificity() }));
    trace.insert("kind".into(), json!(kind));
    trace.insert("candidates".into(), serde_json::to_value(&sel.candidates)?);
    trace.insert(
        "selected".into(),
        json!({ "record": rec, "specificity": rec.descriptor.specificity(), "fell_back_to_root": sel.fell_back_to_root }),
    );
    if p.json {
        println!("{}", serde_json::to_string_pretty(&Value::Object(trace))?);
    } else {
        for l in lines {
            println!("{l}");
        }
    }
    Ok(())
}

pub fn registry_list(dir: &Path) -> Result<()> {
    let reg = RegistryStore::open(dir)?.load()?;
    println!("registry v{} ({} records)", reg.version, reg.records.len());
    for r in &reg.records {
        println!("  {:<20} {:<12} n={:<5} {}", r.id, r.diagnostic_kind, r.n_train, r.descriptor);
    }
    Ok(())
}

pub fn registry_add(dir: &Path, id: &str, descriptor: &str, kind: &str, n_train: u32, blob: Option<&Path>) -> Result<()> {
    tracing::info!(command = "registry add", version = VERSION, id, descriptor, kind, n_train, "resolved configuration");
    let d: VehicleDescriptor = descriptor.parse()?;
    let bytes = blob.map(|b| fs::read(b).map_err(|e| CliError::io(b.display(), e))).transpose()?;
    let store = RegistryStore::open(dir)?;
    let reg = store.add(autoctx_core::registry::ModelRecord::new(id, d, kind, n_train), bytes.as_deref())?;
    println!("registry v{}: added {id}", reg.version);
    Ok(())
}
