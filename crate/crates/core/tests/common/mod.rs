//! Reference implementations shared by the integration tests. Each is written
//! from the textbook definition and shares no code with the crate.
#![allow(dead_code)]

pub mod lattice;
pub mod matching;

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `|X_k|`, `k = 0..=n/2`, of the periodic-Hann-windowed signal by the O(n^2) sum.
pub fn naive_dft_magnitudes(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let w: Vec<f64> = (0..n).map(|i| x[i] * (0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())).collect();
    let cos: Vec<f64> = (0..n).map(|j| (2.0 * PI * j as f64 / n as f64).cos()).collect();
    let sin: Vec<f64> = (0..n).map(|j| (2.0 * PI * j as f64 / n as f64).sin()).collect();
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            let mut idx = 0usize;
            for v in &w {
                re += v * cos[idx];
                im -= v * sin[idx];
                idx += k;
                if idx >= n {
                    idx -= n;
                }
            }
            (re * re + im * im).sqrt()
        })
        .collect()
}

/// Largest per-bin relative error, measured against `max(|want|, 1e-9 * peak)`.
pub fn max_relative_error(got: &[f64], want: &[f64]) -> f64 {
    let peak = want.iter().cloned().fold(0.0, f64::max);
    got.iter().zip(want).map(|(g, w)| (g - w).abs() / w.abs().max(1e-9 * peak)).fold(0.0, f64::max)
}

/// Mann-Whitney form of ROC-AUC: the fraction of (positive, negative) pairs
/// ranked correctly, ties counting one half.
pub fn mann_whitney_auc(scores: &[f64], positive: &[bool]) -> f64 {
    let mut num = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if !positive[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if positive[j] {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                num += 1.0;
            } else if si == sj {
                num += 0.5;
            }
        }
    }
    num / pairs
}

pub fn noise(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.random_range(-1.0..1.0)).collect()
}

/// Laplace(0, b) samples by inverse transform.
pub fn laplace(r: &mut ChaCha8Rng, n: usize, b: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let u: f64 = r.random_range(-0.5..0.5);
            -b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
        })
        .collect()
}

/// Population excess kurtosis.
pub fn excess_kurtosis(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let m2 = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m4 = x.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    m4 / (m2 * m2) - 3.0
}

/// Periodized cascade DWT: circular convolution with the time-reversed
/// filters, then keep every other output.
pub fn cascade_dwt(x: &[f64], lowpass: &[f64], levels: usize) -> Vec<Vec<f64>> {
    let m = lowpass.len();
    let highpass: Vec<f64> = (0..m).map(|k| if k % 2 == 0 { lowpass[m - 1 - k] } else { -lowpass[m - 1 - k] }).collect();
    let mut approx = x.to_vec();
    let mut bands = Vec::new();
    for _ in 0..levels {
        let n = approx.len();
        let filt = |f: &[f64]| -> Vec<f64> {
            let full: Vec<f64> = (0..n).map(|t| (0..m).map(|k| f[k] * approx[(t + k) % n]).sum()).collect();
            full.into_iter().step_by(2).collect()
        };
        let d = filt(&highpass);
        let a = filt(lowpass);
        bands.push(d);
        approx = a;
    }
    bands.push(approx);
    bands
}

/// Index of the largest value, first on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}
