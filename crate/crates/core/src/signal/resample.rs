//! Rate conversion.
//!
//! Downsampling first smooths with a non-negative Hann kernel whose first
//! spectral null sits at the output Nyquist, then interpolates linearly. Both
//! steps are convex combinations of input samples, so monotone input stays
//! monotone and no overshoot is introduced.

/// Converts `samples` from `from` Hz to `to` Hz. Equal rates are an identity.
pub fn resample(samples: &[f64], from: u32, to: u32) -> Vec<f64> {
    if from == to || samples.is_empty() {
        return samples.to_vec();
    }
    let ratio = to as f64 / from as f64;
    let smoothed = if ratio < 1.0 { smooth(samples, ratio) } else { samples.to_vec() };
    let out_len = ((samples.len() as f64) * ratio).round().max(1.0) as usize;
    let last = samples.len() - 1;
    (0..out_len)
        .map(|j| {
            let pos = j as f64 / ratio;
            let i = pos.floor() as usize;
            if i >= last {
                return smoothed[last];
            }
            let frac = pos - i as f64;
            smoothed[i] * (1.0 - frac) + smoothed[i + 1] * frac
        })
        .collect()
}

fn smooth(samples: &[f64], ratio: f64) -> Vec<f64> {
    // A Hann window of length L has its first null at 2 * fs / L.
    let half = (2.0 / ratio).ceil() as isize;
    let width = 2 * half + 1;
    let kernel: Vec<f64> = (0..width)
        .map(|k| {
            let x = (k + 1) as f64 / (width + 1) as f64;
            (std::f64::consts::PI * x).sin().powi(2)
        })
        .collect();
    let norm: f64 = kernel.iter().sum();
    let n = samples.len() as isize;
    (0..n)
        .map(|i| {
            kernel
                .iter()
                .enumerate()
                .map(|(k, w)| {
                    let idx = (i + k as isize - half).clamp(0, n - 1);
                    w * samples[idx as usize]
                })
                .sum::<f64>()
                / norm
        })
        .collect()
}
