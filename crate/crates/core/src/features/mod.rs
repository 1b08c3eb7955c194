//! Segment feature extraction.
//!
//! A [`FeatureVector`] is the concatenation `[fft | mfcc | dwt | meta]`, laid
//! out by a [`Schema`] that depends only on the [`FeatureConfig`]. Every
//! segment processed with the same configuration yields the same schema.

mod dump;
mod dwt;
mod meta;
mod mfcc;
mod spectrum;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::Segment;

pub use dump::{read_matrix, write_csv, write_dump, DumpPaths, DumpSidecar};
pub use dwt::{wavedec, Wavelet};
pub use meta::{meta_stats, moments, welch_psd, Moments, OCTAVE_EDGES_HZ};
pub use mfcc::{mel_filterbank, mfcc};
pub use spectrum::{fft_features, hann, magnitude_spectrum};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("invalid feature config: {0}")]
    InvalidConfig(String),
    #[error("segment of {len} samples is too short: {what} needs {needed}")]
    TooShort { len: usize, needed: usize, what: &'static str },
    #[error("feature dump error: {0}")]
    Io(#[from] std::io::Error),
    #[error("feature dump metadata: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed feature matrix: {0}")]
    Malformed(String),
}

pub type Result<T> = std::result::Result<T, FeatureError>;

/// Which of the time-domain statistics to include.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaFlags {
    pub skewness: bool,
    pub kurtosis: bool,
    pub psd: bool,
    pub zero_crossing: bool,
}

impl Default for MetaFlags {
    fn default() -> Self {
        Self { skewness: true, kurtosis: true, psd: true, zero_crossing: true }
    }
}

/// Grid-searchable parameters of the four feature families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    /// FFT length in samples (taken from the start of the segment).
    pub fft_window: usize,
    /// Number of low-frequency magnitude bins kept.
    pub fft_kept_bins: usize,
    pub mel_filters: usize,
    pub mfcc_coeffs: usize,
    /// MFCC frame length in samples.
    pub frame: usize,
    pub hop: usize,
    pub dwt_family: Wavelet,
    pub dwt_levels: usize,
    pub include_meta: MetaFlags,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            fft_window: 8192,
            fft_kept_bins: 256,
            mel_filters: 26,
            mfcc_coeffs: 13,
            frame: 2048,
            hop: 512,
            dwt_family: Wavelet::Db4,
            dwt_levels: 6,
            include_meta: MetaFlags::default(),
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(FeatureError::InvalidConfig(msg));
        if self.fft_window < 2 {
            return fail(format!("fft_window {} < 2", self.fft_window));
        }
        if self.fft_kept_bins == 0 || self.fft_kept_bins > self.fft_window / 2 {
            return fail(format!("fft_kept_bins {} must be in 1..={}", self.fft_kept_bins, self.fft_window / 2));
        }
        if self.mel_filters == 0 || self.mfcc_coeffs == 0 || self.mfcc_coeffs > self.mel_filters {
            return fail(format!("mfcc_coeffs {} must be in 1..=mel_filters ({})", self.mfcc_coeffs, self.mel_filters));
        }
        if self.frame < 2 || self.hop == 0 || self.hop > self.frame {
            return fail(format!("need 0 < hop ({}) <= frame ({})", self.hop, self.frame));
        }
        if self.dwt_levels == 0 || self.dwt_levels > 30 {
            return fail(format!("dwt_levels {} must be in 1..=30", self.dwt_levels));
        }
        Ok(())
    }

    /// Checks that a segment of `len` samples can be featurized.
    pub fn validate_for(&self, len: usize) -> Result<()> {
        self.validate()?;
        let checks = [
            (self.fft_window, "the FFT window"),
            (self.frame, "one MFCC frame"),
            (1usize << self.dwt_levels, "the DWT depth"),
        ];
        for (needed, what) in checks {
            if len < needed {
                return Err(FeatureError::TooShort { len, needed, what });
            }
        }
        Ok(())
    }

    /// Short content hash, used in dump filenames and artifact headers.
    pub fn hash(&self) -> String {
        crate::config_hash(self)
    }

    /// The canonical feature layout for this configuration.
    pub fn schema(&self) -> Schema {
        let mut names = Vec::new();
        let mut push = |family, name: String| names.push(FeatureName { family, name });
        for k in 0..self.fft_kept_bins {
            push(FeatureFamily::Fft, format!("fft_mag_{k:04}"));
        }
        for stat in spectrum::FFT_META_NAMES {
            push(FeatureFamily::Fft, format!("fft_{stat}"));
        }
        for stat in ["mean", "std"] {
            for c in 0..self.mfcc_coeffs {
                push(FeatureFamily::Mfcc, format!("mfcc_{c:02}_{stat}"));
            }
        }
        for band in dwt::band_names(self.dwt_levels) {
            for stat in ["energy", "log_energy", "fraction"] {
                push(FeatureFamily::Dwt, format!("dwt_{band}_{stat}"));
            }
        }
        for name in meta::meta_names(&self.include_meta) {
            push(FeatureFamily::Meta, name);
        }
        Schema { names }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureFamily {
    Fft,
    Mfcc,
    Dwt,
    Meta,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureName {
    pub family: FeatureFamily,
    pub name: String,
}

/// Ordered feature names.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Schema {
    pub names: Vec<FeatureName>,
}

impl Schema {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn hash(&self) -> String {
        crate::config_hash(self)
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(|n| n.name.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub schema: Arc<Schema>,
}

impl fmt::Display for FeatureVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (n, v) in self.schema.names.iter().zip(&self.values) {
            writeln!(f, "{:<28} {v:.6}", n.name)?;
        }
        Ok(())
    }
}

/// Reusable extractor that shares one schema across many segments.
#[derive(Debug, Clone)]
pub struct Extractor {
    config: FeatureConfig,
    schema: Arc<Schema>,
}

impl Extractor {
    pub fn new(config: FeatureConfig) -> Result<Self> {
        config.validate()?;
        let schema = Arc::new(config.schema());
        Ok(Self { config, schema })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.config
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn extract(&self, seg: &Segment) -> Result<FeatureVector> {
        let cfg = &self.config;
        cfg.validate_for(seg.len())?;
        let mut values = Vec::with_capacity(self.schema.len());
        values.extend(fft_features(seg, cfg)?);
        values.extend(mfcc(seg, cfg)?);
        values.extend(dwt::dwt_features(seg, cfg)?);
        values.extend(meta_stats(seg, &cfg.include_meta)?);
        debug_assert_eq!(values.len(), self.schema.len());
        for v in values.iter_mut() {
            if !v.is_finite() {
                *v = 0.0;
            }
        }
        Ok(FeatureVector { values, schema: Arc::clone(&self.schema) })
    }
}

/// Extracts the full feature vector of `seg`.
pub fn extract(seg: &Segment, cfg: &FeatureConfig) -> Result<FeatureVector> {
    Extractor::new(cfg.clone())?.extract(seg)
}

pub use dwt::dwt_features;

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn noise(n: usize, seed: u64) -> Segment {
        let mut rng = crate::seed::rng(seed);
        Segment::from_samples((0..n).map(|_| rng.random_range(-1.0..1.0)).collect(), 22_050)
    }

    #[test]
    fn default_schema_is_stable() {
        let cfg = FeatureConfig::default();
        let schema = cfg.schema();
        // 256 + 7 FFT, 13 x 2 MFCC, 7 bands x 3 DWT, 16 meta
        assert_eq!(schema.len(), 263 + 26 + 21 + 16);
        assert_eq!(schema, FeatureConfig::default().schema());
        let a = extract(&noise(22_050, 1), &cfg).unwrap();
        let b = extract(&noise(22_050, 2), &cfg).unwrap();
        assert_eq!(a.schema, b.schema);
        assert_eq!(a.values.len(), schema.len());
        assert!(a.values.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn families_appear_in_canonical_order() {
        let schema = FeatureConfig::default().schema();
        let order: Vec<FeatureFamily> = schema.names.iter().map(|n| n.family).collect();
        let rank = |f: &FeatureFamily| *f as usize;
        assert!(order.windows(2).all(|w| rank(&w[0]) <= rank(&w[1])));
    }

    #[test]
    fn degenerate_segments_still_featurize() {
        let cfg = FeatureConfig::default();
        for seg in [
            Segment::from_samples(vec![0.0; 22_050], 22_050),
            Segment::from_samples(vec![0.25; 22_050], 22_050),
        ] {
            let v = extract(&seg, &cfg).unwrap();
            assert!(v.values.iter().all(|x| x.is_finite()));
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = FeatureConfig::default();
        cfg.fft_kept_bins = 5000;
        assert!(cfg.validate().is_err());
        let mut cfg = FeatureConfig::default();
        cfg.mfcc_coeffs = 27;
        assert!(cfg.validate().is_err());
        let mut cfg = FeatureConfig::default();
        cfg.hop = 4096;
        assert!(cfg.validate().is_err());
        let mut cfg = FeatureConfig::default();
        cfg.dwt_levels = 0;
        assert!(cfg.validate().is_err());
        assert!(matches!(
            FeatureConfig::default().validate_for(4096),
            Err(FeatureError::TooShort { what: "the FFT window", .. })
        ));
    }

    #[test]
    fn hash_tracks_config() {
        let a = FeatureConfig::default();
        let mut b = a.clone();
        b.mel_filters = 40;
        assert_eq!(a.hash(), FeatureConfig::default().hash());
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn config_json_fills_defaults() {
        let cfg: FeatureConfig = serde_json::from_str(r#"{"mel_filters": 40, "dwt_family": "db2"}"#).unwrap();
        assert_eq!(cfg.mel_filters, 40);
        assert_eq!(cfg.dwt_family, Wavelet::Db2);
        assert_eq!(cfg.fft_window, 8192);
    }
}
