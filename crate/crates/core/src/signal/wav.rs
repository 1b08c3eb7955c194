//! WAV ingestion and export, with per-clip JSON sidecars.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{peak_normalize, resample, AudioClip, CapturePosition, Result, SignalError, CANONICAL_RATE};

/// Metadata stored next to `clip.wav` as `clip.json`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_id: Option<String>,
    #[serde(default)]
    pub labels: BTreeMap<String, String>,
    #[serde(default)]
    pub capture_position: CapturePosition,
}

fn sidecar_path(wav: &Path) -> PathBuf {
    wav.with_extension("json")
}

/// Reads the sidecar for `wav`, if one exists.
pub fn read_sidecar(wav: &Path) -> Result<Option<Sidecar>> {
    let path = sidecar_path(wav);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path)?;
    Ok(Some(serde_json::from_str(&text)?))
}

fn map_hound(path: &Path, err: hound::Error) -> SignalError {
    let reason = err.to_string();
    match err {
        hound::Error::Unsupported | hound::Error::InvalidSampleFormat | hound::Error::TooWide => {
            SignalError::UnsupportedEncoding { path: path.to_path_buf(), reason }
        }
        _ => SignalError::Unreadable { path: path.to_path_buf(), reason },
    }
}

/// Decodes a PCM or float WAV file into interleaved samples scaled to [-1, 1].
fn decode(path: &Path) -> Result<(Vec<f64>, hound::WavSpec)> {
    let reader = hound::WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, bits @ (8 | 16 | 24 | 32)) => {
            let scale = (1u64 << (bits - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| map_hound(path, e))?
        }
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (format, bits) => {
            return Err(SignalError::UnsupportedEncoding {
                path: path.to_path_buf(),
                reason: format!("{format:?} samples at {bits} bits"),
            })
        }
    };
    Ok((samples, spec))
}

/// Loads a WAV file as a canonical clip: mono, 22,050 Hz, peak 1.
///
/// The source id comes from the sidecar when present, else the file stem.
pub fn ingest(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let (interleaved, spec) = decode(path)?;
    let channels = spec.channels.max(1) as usize;
    if interleaved.len() < channels {
        return Err(SignalError::Empty(path.to_path_buf()));
    }
    let mono: Vec<f64> = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    let mut samples = resample(&mono, spec.sample_rate, CANONICAL_RATE);
    peak_normalize(&mut samples)?;

    let sidecar = read_sidecar(path)?.unwrap_or_default();
    let source_id = match sidecar.source_id {
        Some(id) if !id.is_empty() => id,
        _ => path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    Ok(AudioClip::new(samples, CANONICAL_RATE, source_id)?
        .with_labels(sidecar.labels)
        .with_capture_position(sidecar.capture_position))
}

/// Ingests every `.wav` file in `dir`, ordered by path.
pub fn ingest_dir(dir: impl AsRef<Path>) -> Result<Vec<AudioClip>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir.as_ref())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    paths.sort();
    paths.par_iter().map(ingest).collect()
}

/// Writes a clip as 16-bit mono PCM.
pub fn write_wav(clip: &AudioClip, path: impl AsRef<Path>) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let path = path.as_ref();
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| map_hound(path, e))?;
    for &s in clip.samples() {
        let v = (s * i16::MAX as f64).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
        writer.write_sample(v).map_err(|e| map_hound(path, e))?;
    }
    writer.finalize().map_err(|e| map_hound(path, e))
}

/// Writes `<dir>/<stem>.wav` plus its JSON sidecar; returns the WAV path.
pub fn write_clip(clip: &AudioClip, dir: impl AsRef<Path>, stem: &str) -> Result<PathBuf> {
    let wav = dir.as_ref().join(format!("{stem}.wav"));
    write_wav(clip, &wav)?;
    let sidecar = Sidecar {
        source_id: Some(clip.source_id().to_string()),
        labels: clip.labels.clone(),
        capture_position: clip.capture_position,
    };
    fs::write(sidecar_path(&wav), serde_json::to_string_pretty(&sidecar)? + "\n")?;
    Ok(wav)
}
