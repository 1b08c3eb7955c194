//! Windowed magnitude spectra and the FFT feature family.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{moments, FeatureConfig, FeatureError, Result};
use crate::signal::Segment;

pub(super) const FFT_META_NAMES: [&str; 7] =
    ["mean", "std", "skewness", "kurtosis", "centroid_hz", "rolloff85_hz", "flatness"];

/// Periodic Hann window of length `n`.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Magnitudes `|X_k|`, `k = 0..=n/2`, of the Hann-windowed DFT of `samples`.
pub fn magnitude_spectrum(samples: &[f64]) -> Vec<f64> {
    let n = samples.len();
    let window = hann(n);
    let mut buf: Vec<Complex<f64>> = samples.iter().zip(&window).map(|(x, w)| Complex::new(x * w, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf.truncate(n / 2 + 1);
    buf.into_iter().map(|c| c.norm()).collect()
}

/// Low-frequency magnitude bins followed by spectral shape statistics:
/// mean, standard deviation, skewness and excess kurtosis of the magnitudes,
/// centroid, 85 % rolloff frequency, and flatness of the power spectrum.
pub fn fft_features(seg: &Segment, cfg: &FeatureConfig) -> Result<Vec<f64>> {
    if seg.len() < cfg.fft_window {
        return Err(FeatureError::TooShort { len: seg.len(), needed: cfg.fft_window, what: "the FFT window" });
    }
    let mags = magnitude_spectrum(&seg.samples[..cfg.fft_window]);
    let bin_hz = seg.sample_rate as f64 / cfg.fft_window as f64;

    let mut out = Vec::with_capacity(cfg.fft_kept_bins + FFT_META_NAMES.len());
    out.extend_from_slice(&mags[..cfg.fft_kept_bins]);

    let m = moments(&mags);
    out.extend([m.mean, m.std, m.skewness, m.excess_kurtosis]);

    let total: f64 = mags.iter().sum();
    let (centroid, rolloff) = if total > 0.0 {
        let centroid = mags.iter().enumerate().map(|(k, a)| k as f64 * bin_hz * a).sum::<f64>() / total;
        let mut acc = 0.0;
        let k = mags
            .iter()
            .position(|a| {
                acc += a;
                acc >= 0.85 * total
            })
            .unwrap_or(mags.len() - 1);
        (centroid, k as f64 * bin_hz)
    } else {
        (0.0, 0.0)
    };
    out.extend([centroid, rolloff, flatness(&mags)]);
    Ok(out)
}

/// Geometric over arithmetic mean of the power spectrum.
fn flatness(mags: &[f64]) -> f64 {
    const FLOOR: f64 = 1e-20;
    let n = mags.len() as f64;
    let powers = mags.iter().map(|a| (a * a).max(FLOOR));
    let arith = powers.clone().sum::<f64>() / n;
    let geo = (powers.map(f64::ln).sum::<f64>() / n).exp();
    if arith <= FLOOR {
        0.0
    } else {
        (geo / arith).min(1.0)
    }
}
