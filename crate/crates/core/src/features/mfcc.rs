//! Mel-frequency cepstral coefficients.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{hann, FeatureConfig, FeatureError, Result};
use crate::signal::Segment;

const LOG_FLOOR: f64 = 1e-12;

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters equally spaced on the mel scale from 0 Hz to Nyquist,
/// as sparse `(bin, weight)` lists over the `n_fft / 2 + 1` power bins.
pub fn mel_filterbank(n_filters: usize, n_fft: usize, rate: u32) -> Vec<Vec<(usize, f64)>> {
    let nyquist = rate as f64 / 2.0;
    let top = hz_to_mel(nyquist);
    let edges: Vec<f64> = (0..n_filters + 2).map(|i| mel_to_hz(top * i as f64 / (n_filters + 1) as f64)).collect();
    let bin_hz = rate as f64 / n_fft as f64;
    (0..n_filters)
        .map(|m| {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..=n_fft / 2)
                .filter_map(|k| {
                    let f = k as f64 * bin_hz;
                    let w = if f > lo && f <= mid {
                        (f - lo) / (mid - lo)
                    } else if f > mid && f < hi {
                        (hi - f) / (hi - mid)
                    } else {
                        0.0
                    };
                    (w > 0.0).then_some((k, w))
                })
                .collect()
        })
        .collect()
}

/// Orthonormal DCT-II, first `keep` coefficients.
fn dct2(x: &[f64], keep: usize) -> Vec<f64> {
    let m = x.len() as f64;
    (0..keep)
        .map(|k| {
            let scale = if k == 0 { (1.0 / m).sqrt() } else { (2.0 / m).sqrt() };
            scale
                * x.iter()
                    .enumerate()
                    .map(|(i, v)| v * (PI * k as f64 * (2 * i + 1) as f64 / (2.0 * m)).cos())
                    .sum::<f64>()
        })
        .collect()
}

/// Per-frame MFCCs summarized as the mean of each coefficient across frames,
/// followed by the standard deviation of each coefficient.
pub fn mfcc(seg: &Segment, cfg: &FeatureConfig) -> Result<Vec<f64>> {
    if seg.len() < cfg.frame {
        return Err(FeatureError::TooShort { len: seg.len(), needed: cfg.frame, what: "one MFCC frame" });
    }
    let frames = 1 + (seg.len() - cfg.frame) / cfg.hop;
    let window = hann(cfg.frame);
    let bank = mel_filterbank(cfg.mel_filters, cfg.frame, seg.sample_rate);
    let fft = FftPlanner::new().plan_fft_forward(cfg.frame);
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.frame];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];

    let c = cfg.mfcc_coeffs;
    let mut sum = vec![0.0; c];
    let mut sum_sq = vec![0.0; c];
    for f in 0..frames {
        let start = f * cfg.hop;
        for (b, (x, w)) in buf.iter_mut().zip(seg.samples[start..start + cfg.frame].iter().zip(&window)) {
            *b = Complex::new(x * w, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        let log_mel: Vec<f64> = bank
            .iter()
            .map(|filter| {
                let e: f64 = filter.iter().map(|&(k, w)| w * buf[k].norm_sqr()).sum();
                e.max(LOG_FLOOR).ln()
            })
            .collect();
        for (i, v) in dct2(&log_mel, c).into_iter().enumerate() {
            sum[i] += v;
            sum_sq[i] += v * v;
        }
    }
    let n = frames as f64;
    let means: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let stds = sum_sq.iter().zip(&means).map(|(sq, m)| (sq / n - m * m).max(0.0).sqrt());
    Ok(means.iter().copied().chain(stds).collect())
}
