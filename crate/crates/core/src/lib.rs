//! Powertrain identification from idle engine audio, and context-aware
//! selection of the most specific diagnostic model for a vehicle.
//!
//! The pipeline runs in stages:
//!
//! * [`signal`] ingests WAV clips, normalizes them and cuts random segments.
//! * [`features`] turns a segment into a fixed-layout feature vector
//!   (FFT, MFCC, DWT and time-domain statistics).
//! * [`learn`] trains tree ensembles, reduces features by importance,
//!   evaluates classifiers and runs grid searches.
//! * [`chain`] predicts aspiration, fuel and cylinder count in sequence and
//!   votes over segments.
//! * [`context`] matches a ternary operating-context vector against the
//!   contexts for which models exist.
//! * [`registry`] walks the vehicle-descriptor lattice to the most specific
//!   model with enough training support.
//! * [`synth`] generates labeled idle-engine audio for testing.

pub mod chain;
pub mod context;
pub mod features;
pub mod learn;
pub mod registry;
pub mod seed;
pub mod signal;
pub mod synth;

use thiserror::Error;

/// Any error produced by the pipeline, tagged by the module family it came from.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Signal(#[from] signal::SignalError),
    #[error(transparent)]
    Features(#[from] features::FeatureError),
    #[error(transparent)]
    Learn(#[from] learn::LearnError),
    #[error(transparent)]
    Chain(#[from] chain::ChainError),
    #[error(transparent)]
    Context(#[from] context::ContextError),
    #[error(transparent)]
    Registry(#[from] registry::RegistryError),
    #[error(transparent)]
    Synth(#[from] synth::SynthError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Short stable hash of a serializable value, used to key caches and to stamp
/// artifacts with the configuration that produced them.
pub fn config_hash<T: serde::Serialize>(value: &T) -> String {
    use sha2::{Digest, Sha256};
    let bytes = serde_json::to_vec(value).expect("config values serialize to JSON");
    let digest = Sha256::digest(&bytes);
    hex::encode(&digest[..8])
}
