//! Ternary operating-context vectors and nearest-reference matching.
//!
//! Each context entry is `1` (yes), `0` (no) or `-1` (unknown). Before
//! matching, unknown entries and entries with zero weight for the target
//! algorithm are pruned from the query and from every reference; the
//! reference with the smallest weighted Hamming distance then wins.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::hann;
use crate::signal::AudioClip;

#[derive(Debug, Error)]
pub enum ContextError {
    #[error("no usable context: every entry is unknown or has zero weight")]
    NoUsableContext,
    #[error("reference database is empty")]
    EmptyDb,
    #[error("context schema mismatch: query has {query:?}, database has {db:?}")]
    SchemaMismatch { query: Vec<String>, db: Vec<String> },
    #[error("duplicate context name {0:?}")]
    DuplicateName(String),
    #[error("invalid ternary value {0}")]
    InvalidValue(i64),
    #[error("reference {model_id:?} is not fully specified at {name:?}")]
    UnknownInReference { model_id: String, name: String },
    #[error("reference {model_id:?} has {found} values for {expected} names")]
    ReferenceWidth { model_id: String, expected: usize, found: usize },
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
}

pub type Result<T> = std::result::Result<T, ContextError>;

/// A three-state context value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub enum Ternary {
    Unknown,
    No,
    Yes,
}

impl Ternary {
    pub fn as_i8(self) -> i8 {
        match self {
            Ternary::Unknown => -1,
            Ternary::No => 0,
            Ternary::Yes => 1,
        }
    }

    pub fn from_bool(b: bool) -> Self {
        if b {
            Ternary::Yes
        } else {
            Ternary::No
        }
    }
}

impl TryFrom<i64> for Ternary {
    type Error = ContextError;
    fn try_from(v: i64) -> Result<Self> {
        match v {
            -1 => Ok(Ternary::Unknown),
            0 => Ok(Ternary::No),
            1 => Ok(Ternary::Yes),
            other => Err(ContextError::InvalidValue(other)),
        }
    }
}

impl From<Ternary> for i64 {
    fn from(t: Ternary) -> i64 {
        t.as_i8() as i64
    }
}

impl fmt::Display for Ternary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_i8())
    }
}

/// Confidence thresholds mapping a binary classifier's probability to a
/// ternary value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TernaryThresholds {
    pub yes: f64,
    pub no: f64,
}

impl Default for TernaryThresholds {
    fn default() -> Self {
        Self { yes: 0.8, no: 0.2 }
    }
}

impl TernaryThresholds {
    pub fn map(&self, p_yes: f64) -> Ternary {
        if p_yes >= self.yes {
            Ternary::Yes
        } else if p_yes <= self.no {
            Ternary::No
        } else {
            Ternary::Unknown
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextEntry {
    pub name: String,
    pub value: Ternary,
}

/// Ordered, uniquely named ternary entries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ContextEntry>", into = "Vec<ContextEntry>")]
pub struct ContextVector {
    entries: Vec<ContextEntry>,
}

impl TryFrom<Vec<ContextEntry>> for ContextVector {
    type Error = ContextError;
    fn try_from(entries: Vec<ContextEntry>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for e in &entries {
            if !seen.insert(e.name.as_str()) {
                return Err(ContextError::DuplicateName(e.name.clone()));
            }
        }
        Ok(Self { entries })
    }
}

impl From<ContextVector> for Vec<ContextEntry> {
    fn from(v: ContextVector) -> Self {
        v.entries
    }
}

impl ContextVector {
    pub fn new<S: Into<String>>(entries: impl IntoIterator<Item = (S, Ternary)>) -> Result<Self> {
        entries.into_iter().map(|(name, value)| ContextEntry { name: name.into(), value }).collect::<Vec<_>>().try_into()
    }

    pub fn entries(&self) -> &[ContextEntry] {
        &self.entries
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.name.as_str()).collect()
    }

    pub fn get(&self, name: &str) -> Option<Ternary> {
        self.entries.iter().find(|e| e.name == name).map(|e| e.value)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Per-entry importance for one diagnostic algorithm. Names absent from the
/// map have weight 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextWeights {
    pub algorithm: String,
    pub weights: BTreeMap<String, f64>,
}

impl ContextWeights {
    pub fn new<S: Into<String>>(algorithm: impl Into<String>, weights: impl IntoIterator<Item = (S, f64)>) -> Result<Self> {
        let w = Self { algorithm: algorithm.into(), weights: weights.into_iter().map(|(k, v)| (k.into(), v)).collect() };
        w.validate()?;
        Ok(w)
    }

    /// Weight 1 on every name.
    pub fn uniform<S: Into<String>>(algorithm: impl Into<String>, names: impl IntoIterator<Item = S>) -> Self {
        Self { algorithm: algorithm.into(), weights: names.into_iter().map(|n| (n.into(), 1.0)).collect() }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some((k, v)) = self.weights.iter().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            return Err(ContextError::InvalidWeights(format!("{k} = {v}")));
        }
        if !self.weights.values().any(|v| *v > 0.0) {
            return Err(ContextError::InvalidWeights("no positive weight".into()));
        }
        Ok(())
    }

    pub fn weight(&self, name: &str) -> f64 {
        self.weights.get(name).copied().unwrap_or(0.0)
    }
}

/// A fully specified reference context for which a trained model exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceEntry {
    pub model_id: String,
    /// One value per database name, each 0 or 1.
    pub values: Vec<u8>,
    /// Training vehicles behind the model; breaks distance ties.
    #[serde(default = "one")]
    pub n_train: u32,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DbRepr", into = "DbRepr")]
pub struct ReferenceContextDB {
    names: Vec<String>,
    entries: Vec<ReferenceEntry>,
}

#[derive(Serialize, Deserialize)]
struct DbRepr {
    names: Vec<String>,
    entries: Vec<ReferenceEntry>,
}

impl TryFrom<DbRepr> for ReferenceContextDB {
    type Error = ContextError;
    fn try_from(r: DbRepr) -> Result<Self> {
        ReferenceContextDB::new(r.names, r.entries)
    }
}

impl From<ReferenceContextDB> for DbRepr {
    fn from(db: ReferenceContextDB) -> Self {
        DbRepr { names: db.names, entries: db.entries }
    }
}

impl ReferenceContextDB {
    pub fn new(names: Vec<String>, entries: Vec<ReferenceEntry>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(ContextError::DuplicateName(n.clone()));
            }
        }
        for e in &entries {
            if e.values.len() != names.len() {
                return Err(ContextError::ReferenceWidth { model_id: e.model_id.clone(), expected: names.len(), found: e.values.len() });
            }
            if let Some(i) = e.values.iter().position(|v| *v > 1) {
                return Err(ContextError::UnknownInReference { model_id: e.model_id.clone(), name: names[i].clone() });
            }
        }
        Ok(Self { names, entries })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn entries(&self) -> &[ReferenceEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Keeps only references satisfying `keep` (e.g. contexts ruled feasible
    /// by vehicle bus data).
    pub fn prefilter(&self, keep: impl Fn(&ReferenceEntry) -> bool) -> Self {
        Self { names: self.names.clone(), entries: self.entries.iter().filter(|e| keep(e)).cloned().collect() }
    }

    fn select_columns(&self, cols: &[usize]) -> Self {
        Self {
            names: cols.iter().map(|&c| self.names[c].clone()).collect(),
            entries: self
                .entries
                .iter()
                .map(|e| ReferenceEntry { model_id: e.model_id.clone(), values: cols.iter().map(|&c| e.values[c]).collect(), n_train: e.n_train })
                .collect(),
        }
    }
}

/// Query and database restricted to the usable entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pruned {
    pub query: ContextVector,
    pub db: ReferenceContextDB,
    /// Names removed, in schema order.
    pub dropped: Vec<String>,
}

fn check_schema(query: &ContextVector, db: &ReferenceContextDB) -> Result<()> {
    if query.entries.iter().map(|e| e.name.as_str()).ne(db.names.iter().map(String::as_str)) {
        return Err(ContextError::SchemaMismatch {
            query: query.entries.iter().map(|e| e.name.clone()).collect(),
            db: db.names.clone(),
        });
    }
    Ok(())
}

/// Drops unknown and zero-weight entries from the query and the same columns
/// from every reference.
pub fn prune(query: &ContextVector, db: &ReferenceContextDB, weights: &ContextWeights) -> Result<Pruned> {
    check_schema(query, db)?;
    let (keep, drop): (Vec<usize>, Vec<usize>) =
        (0..query.len()).partition(|&i| query.entries[i].value != Ternary::Unknown && weights.weight(&query.entries[i].name) > 0.0);
    if keep.is_empty() {
        return Err(ContextError::NoUsableContext);
    }
    Ok(Pruned {
        query: ContextVector { entries: keep.iter().map(|&i| query.entries[i].clone()).collect() },
        db: db.select_columns(&keep),
        dropped: drop.iter().map(|&i| query.entries[i].name.clone()).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub model_id: String,
    pub distance: f64,
    /// Second-best minus best distance; `None` with a single reference.
    pub margin: Option<f64>,
    /// Distance to every reference, in database order.
    pub distances: Vec<(String, f64)>,
}

/// Weighted Hamming distance over entries that are known and weighted.
pub fn distance(query: &ContextVector, reference: &ReferenceEntry, weights: &ContextWeights) -> f64 {
    query
        .entries
        .iter()
        .zip(&reference.values)
        .filter(|(q, _)| q.value != Ternary::Unknown)
        .map(|(q, &r)| if q.value.as_i8() as u8 != r { weights.weight(&q.name) } else { 0.0 })
        .sum()
}

/// Nearest reference by weighted Hamming distance. Ties go to the reference
/// with more training vehicles, then to the smaller model id.
pub fn match_nearest(query: &ContextVector, db: &ReferenceContextDB, weights: &ContextWeights) -> Result<Match> {
    check_schema(query, db)?;
    if db.is_empty() {
        return Err(ContextError::EmptyDb);
    }
    let distances: Vec<(String, f64)> = db.entries.iter().map(|e| (e.model_id.clone(), distance(query, e, weights))).collect();
    let mut order: Vec<usize> = (0..db.len()).collect();
    order.sort_by(|&a, &b| {
        distances[a]
            .1
            .total_cmp(&distances[b].1)
            .then(db.entries[b].n_train.cmp(&db.entries[a].n_train))
            .then(db.entries[a].model_id.cmp(&db.entries[b].model_id))
    });
    let best = order[0];
    Ok(Match {
        model_id: db.entries[best].model_id.clone(),
        distance: distances[best].1,
        margin: order.get(1).map(|&s| distances[s].1 - distances[best].1),
        distances,
    })
}

/// Prune followed by match.
pub fn select_context(query: &ContextVector, db: &ReferenceContextDB, weights: &ContextWeights) -> Result<(Pruned, Match)> {
    let pruned = prune(query, db, weights)?;
    let m = match_nearest(&pruned.query, &pruned.db, weights)?;
    Ok((pruned, m))
}

/// Evidence behind [`detect_engine_running`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineEvidence {
    pub value: Ternary,
    /// Best comb fundamental in Hz (0 if not evaluated).
    pub f0_hz: f64,
    /// Mean harmonic power over the median spectral level.
    pub score: f64,
    /// Harmonics individually at least `STRONG_RATIO` above the median.
    pub strong_harmonics: usize,
}

const F0_RANGE_HZ: (f64, f64) = (5.0, 60.0);
const HARMONICS: usize = 8;
const STRONG_RATIO: f64 = 3.0;
const YES_SCORE: f64 = 3.0;
const NO_SCORE: f64 = 2.0;
const MIN_STRONG: usize = 3;
const REFERENCE_BAND_HZ: (f64, f64) = (5.0, 1000.0);

/// Long-window Welch PSD: 1 s Hann frames zero-padded to a power of two,
/// half-overlapping.
fn fine_psd(x: &[f64], rate: u32) -> (f64, Vec<f64>) {
    let frame = rate as usize;
    let nfft = frame.next_power_of_two();
    let hop = frame / 2;
    let window = hann(frame);
    let fft = FftPlanner::new().plan_fft_forward(nfft);
    let mut psd = vec![0.0; nfft / 2 + 1];
    let mut buf = vec![Complex::new(0.0, 0.0); nfft];
    let mut frames = 0usize;
    let mut start = 0usize;
    while start + frame <= x.len() {
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for (i, w) in window.iter().enumerate() {
            buf[i] = Complex::new(x[start + i] * w, 0.0);
        }
        fft.process(&mut buf);
        for (p, c) in psd.iter_mut().zip(&buf) {
            *p += c.norm_sqr();
        }
        frames += 1;
        start += hop;
    }
    psd.iter_mut().for_each(|p| *p /= frames.max(1) as f64);
    (rate as f64 / nfft as f64, psd)
}

/// Whether a clip sounds like a running engine: `1` when a harmonic comb with
/// a 5-60 Hz fundamental stands well above the median spectral level, `0` for
/// silence or broadband sound, `-1` for clips under 1 s or ambiguous evidence.
pub fn detect_engine_running(clip: &AudioClip) -> Ternary {
    engine_evidence(clip).value
}

pub fn engine_evidence(clip: &AudioClip) -> EngineEvidence {
    let unknown = EngineEvidence { value: Ternary::Unknown, f0_hz: 0.0, score: 0.0, strong_harmonics: 0 };
    if clip.duration_s() < 1.0 {
        return unknown;
    }
    let x = clip.samples();
    if x.iter().all(|v| *v == 0.0) {
        return EngineEvidence { value: Ternary::No, ..unknown };
    }
    let (df, psd) = fine_psd(x, clip.sample_rate());
    // Local maximum over +-1 bin, so peaks that fall between bins count fully
    // and the reference level is computed on the same footing.
    let peak: Vec<f64> = (0..psd.len())
        .map(|k| psd[k.saturating_sub(1)..(k + 2).min(psd.len())].iter().cloned().fold(0.0, f64::max))
        .collect();
    let lo = (REFERENCE_BAND_HZ.0 / df).ceil() as usize;
    let hi = ((REFERENCE_BAND_HZ.1 / df).floor() as usize).min(peak.len() - 1);
    let mut band: Vec<f64> = peak[lo..=hi].to_vec();
    band.sort_by(f64::total_cmp);
    let median = band[band.len() / 2];
    if median <= 0.0 {
        return EngineEvidence { value: Ternary::No, ..unknown };
    }

    let mut best = EngineEvidence { value: Ternary::No, f0_hz: 0.0, score: f64::NEG_INFINITY, strong_harmonics: 0 };
    let step = df / 2.0;
    let mut f0 = F0_RANGE_HZ.0;
    while f0 <= F0_RANGE_HZ.1 + 1e-9 {
        let mut sum = 0.0;
        let mut strong = 0;
        for h in 1..=HARMONICS {
            let k = (h as f64 * f0 / df).round() as usize;
            let p = peak.get(k).copied().unwrap_or(0.0) / median;
            sum += p;
            strong += usize::from(p >= STRONG_RATIO);
        }
        let score = sum / HARMONICS as f64;
        if score > best.score {
            best = EngineEvidence { value: Ternary::No, f0_hz: f0, score, strong_harmonics: strong };
        }
        f0 += step;
    }
    best.value = if best.score >= YES_SCORE && best.strong_harmonics >= MIN_STRONG {
        Ternary::Yes
    } else if best.score < NO_SCORE {
        Ternary::No
    } else {
        Ternary::Unknown
    };
    best
}
