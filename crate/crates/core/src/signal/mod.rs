//! Audio clips, random segmentation and leakage-safe train/test splits.

mod resample;
mod wav;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use resample::resample;
pub use wav::{ingest, ingest_dir, read_sidecar, write_clip, write_wav, Sidecar};

/// Every clip is resampled to this rate at ingest.
pub const CANONICAL_RATE: u32 = 22_050;

/// Default segment length in seconds.
pub const DEFAULT_SEGMENT_S: f64 = 1.0;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("cannot read audio file {path}: {reason}")]
    Unreadable { path: PathBuf, reason: String },
    #[error("unsupported audio encoding in {path}: {reason}")]
    UnsupportedEncoding { path: PathBuf, reason: String },
    #[error("zero-length audio in {0}")]
    Empty(PathBuf),
    #[error("silent clip: peak normalization is undefined")]
    Silent,
    #[error("flat clip: every sample has the same value")]
    Flat,
    #[error("invalid clip: {0}")]
    InvalidClip(String),
    #[error("clip of {clip_s:.3} s is shorter than the requested segment of {length_s:.3} s")]
    TooShort { clip_s: f64, length_s: f64 },
    #[error("need at least 2 distinct sources to split, found {0}")]
    TooFewSources(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("metadata error: {0}")]
    Metadata(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SignalError>;

/// Where the microphone sat relative to the engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapturePosition {
    Underhood,
    ClosedHood,
    Exhaust,
    #[default]
    Unknown,
}

/// A mono waveform from one vehicle instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
    source_id: String,
    pub capture_position: CapturePosition,
    /// Ground-truth labels (e.g. `fuel`, `aspiration`, `cylinders`), when known.
    pub labels: BTreeMap<String, String>,
}

impl AudioClip {
    /// Builds a clip, checking the rate, sample finiteness and range, and the
    /// source id. Samples must already lie in `[-1, 1]`.
    pub fn new(samples: Vec<f64>, sample_rate: u32, source_id: impl Into<String>) -> Result<Self> {
        let source_id = source_id.into();
        if sample_rate == 0 {
            return Err(SignalError::InvalidClip("sample rate must be positive".into()));
        }
        if source_id.is_empty() {
            return Err(SignalError::InvalidClip("source id must be non-empty".into()));
        }
        if let Some(bad) = samples.iter().find(|s| !s.is_finite() || s.abs() > 1.0) {
            return Err(SignalError::InvalidClip(format!("sample {bad} is not finite or outside [-1, 1]")));
        }
        Ok(Self {
            samples,
            sample_rate,
            source_id,
            capture_position: CapturePosition::Unknown,
            labels: BTreeMap::new(),
        })
    }

    /// Peak-normalizes arbitrary finite samples to `max |x| = 1`, rejecting
    /// silent and constant input.
    pub fn normalized(mut samples: Vec<f64>, sample_rate: u32, source_id: impl Into<String>) -> Result<Self> {
        peak_normalize(&mut samples)?;
        Self::new(samples, sample_rate, source_id)
    }

    pub fn with_labels(mut self, labels: BTreeMap<String, String>) -> Self {
        self.labels = labels;
        self
    }

    pub fn with_capture_position(mut self, position: CapturePosition) -> Self {
        self.capture_position = position;
        self
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn label(&self, name: &str) -> Option<&str> {
        self.labels.get(name).map(String::as_str)
    }
}

/// Scales `samples` in place so the largest magnitude is exactly 1.
pub fn peak_normalize(samples: &mut [f64]) -> Result<()> {
    if samples.is_empty() {
        return Err(SignalError::InvalidClip("no samples".into()));
    }
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(SignalError::InvalidClip("non-finite sample".into()));
    }
    let peak = samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak == 0.0 {
        return Err(SignalError::Silent);
    }
    if samples.len() > 1 && samples.iter().all(|&s| s == samples[0]) {
        return Err(SignalError::Flat);
    }
    for s in samples.iter_mut() {
        *s /= peak;
    }
    Ok(())
}

/// A fixed-length window cut from a clip.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub parent: String,
    pub offset_s: f64,
}

impl Segment {
    /// Wraps raw samples as a segment with no parent clip.
    pub fn from_samples(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self { samples, sample_rate, parent: String::new(), offset_s: 0.0 }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Number of samples in a segment of `length_s` seconds at `rate`.
pub fn segment_samples(length_s: f64, rate: u32) -> usize {
    (length_s * rate as f64).round() as usize
}

/// Cuts `count` segments of `length_s` seconds at uniformly random offsets.
/// Segments may overlap; the same seed always yields the same list.
pub fn segment(clip: &AudioClip, length_s: f64, count: usize, seed: u64) -> Result<Vec<Segment>> {
    if !(length_s > 0.0 && length_s.is_finite()) {
        return Err(SignalError::InvalidArgument(format!("segment length {length_s} s")));
    }
    if count == 0 {
        return Err(SignalError::InvalidArgument("segment count must be positive".into()));
    }
    let len = segment_samples(length_s, clip.sample_rate);
    if len == 0 || len > clip.samples.len() {
        return Err(SignalError::TooShort { clip_s: clip.duration_s(), length_s });
    }
    let max_start = clip.samples.len() - len;
    let mut rng = crate::seed::rng(seed);
    Ok((0..count)
        .map(|_| {
            let start = rng.random_range(0..=max_start);
            Segment {
                samples: clip.samples[start..start + len].to_vec(),
                sample_rate: clip.sample_rate,
                parent: clip.source_id.clone(),
                offset_s: start as f64 / clip.sample_rate as f64,
            }
        })
        .collect())
}

/// One line of a segment manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub parent: String,
    pub index: usize,
    pub offset_s: f64,
    pub length_s: f64,
    pub sample_rate: u32,
}

/// Writes one JSON object per segment.
pub fn write_segment_manifest<W: Write>(mut out: W, segments: &[Segment]) -> Result<()> {
    for (index, seg) in segments.iter().enumerate() {
        let rec = SegmentRecord {
            parent: seg.parent.clone(),
            index,
            offset_s: seg.offset_s,
            length_s: seg.duration_s(),
            sample_rate: seg.sample_rate,
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Anything attributable to a single recorded vehicle.
pub trait Sourced {
    fn source_id(&self) -> &str;
}

impl Sourced for AudioClip {
    fn source_id(&self) -> &str {
        &self.source_id
    }
}

impl<T: Sourced> Sourced for &T {
    fn source_id(&self) -> &str {
        (*self).source_id()
    }
}

/// Partitions items into `(train, test)` by source so that no vehicle appears
/// on both sides. Sources are shuffled and moved to the test side until the
/// test item count reaches `test_fraction` of the total; each side keeps at
/// least one source. Input order is preserved within each side.
pub fn split_by_source<T: Sourced>(items: Vec<T>, test_fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if !(0.0..=1.0).contains(&test_fraction) {
        return Err(SignalError::InvalidArgument(format!("test fraction {test_fraction}")));
    }
    let mut per_source: BTreeMap<&str, usize> = BTreeMap::new();
    for item in &items {
        *per_source.entry(item.source_id()).or_default() += 1;
    }
    if per_source.len() < 2 {
        return Err(SignalError::TooFewSources(per_source.len()));
    }
    let mut sources: Vec<(&str, usize)> = per_source.into_iter().collect();
    sources.shuffle(&mut crate::seed::rng(seed));

    let target = test_fraction * items.len() as f64;
    let mut taken = 0usize;
    let mut k = 0usize;
    while k < sources.len() - 1 && (k == 0 || (taken as f64) < target) {
        taken += sources[k].1;
        k += 1;
    }
    let test_sources: BTreeSet<String> = sources[..k].iter().map(|(s, _)| s.to_string()).collect();

    let (test, train): (Vec<T>, Vec<T>) = items.into_iter().partition(|it| test_sources.contains(it.source_id()));
    Ok((train, test))
}
