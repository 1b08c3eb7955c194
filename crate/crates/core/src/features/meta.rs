//! Time-domain statistics: moments, Welch PSD summary, zero crossings.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{hann, MetaFlags, Result};
use crate::features::FeatureError;
use crate::signal::Segment;

/// Octave band edges in Hz used to summarize the PSD; the last band runs to Nyquist.
pub const OCTAVE_EDGES_HZ: [f64; 11] =
    [0.0, 31.25, 62.5, 125.0, 250.0, 500.0, 1000.0, 2000.0, 4000.0, 8000.0, f64::INFINITY];

const WELCH_FRAMES: usize = 8;

/// Population moments. Skewness and kurtosis are 0 and `degenerate` is set
/// when the input has no spread.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub std: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub degenerate: bool,
}

pub fn moments(x: &[f64]) -> Moments {
    let n = x.len() as f64;
    if x.is_empty() {
        return Moments { mean: 0.0, std: 0.0, skewness: 0.0, excess_kurtosis: 0.0, degenerate: true };
    }
    let mean = x.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in x {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let constant = x.iter().all(|&v| v == x[0]);
    if constant || m2 <= f64::EPSILON * f64::EPSILON * mean * mean || m2 == 0.0 {
        return Moments { mean, std: 0.0, skewness: 0.0, excess_kurtosis: 0.0, degenerate: true };
    }
    Moments {
        mean,
        std: m2.sqrt(),
        skewness: m3 / m2.powf(1.5),
        excess_kurtosis: m4 / (m2 * m2) - 3.0,
        degenerate: false,
    }
}

/// Welch power spectral density with `WELCH_FRAMES` half-overlapping Hann
/// frames and constant detrending. Returns `(frequencies_hz, density)`.
pub fn welch_psd(x: &[f64], rate: u32) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let mut frame = 2 * n / (WELCH_FRAMES + 1);
    let mut frames = WELCH_FRAMES;
    if frame < 4 {
        frame = n;
        frames = 1;
    }
    let hop = (frame / 2).max(1);
    let window = hann(frame);
    let win_power: f64 = window.iter().map(|w| w * w).sum();
    let fft = FftPlanner::new().plan_fft_forward(frame);
    let bins = frame / 2 + 1;
    let mut psd = vec![0.0; bins];
    let mut buf = vec![Complex::new(0.0, 0.0); frame];
    for f in 0..frames {
        let chunk = &x[f * hop..f * hop + frame];
        let mean = chunk.iter().sum::<f64>() / frame as f64;
        for (b, (v, w)) in buf.iter_mut().zip(chunk.iter().zip(&window)) {
            *b = Complex::new((v - mean) * w, 0.0);
        }
        fft.process(&mut buf);
        for (p, c) in psd.iter_mut().zip(&buf) {
            *p += c.norm_sqr();
        }
    }
    let scale = 1.0 / (rate as f64 * win_power * frames as f64);
    for (k, p) in psd.iter_mut().enumerate() {
        *p *= scale;
        let edge = k == 0 || (frame.is_multiple_of(2) && k == bins - 1);
        if !edge {
            *p *= 2.0;
        }
    }
    let freqs = (0..bins).map(|k| k as f64 * rate as f64 / frame as f64).collect();
    (freqs, psd)
}

/// Zero crossings counted as sign changes, with 0 treated as positive.
fn zero_crossings(x: &[f64]) -> usize {
    x.windows(2).filter(|w| (w[0] >= 0.0) != (w[1] >= 0.0)).count()
}

pub(super) fn meta_names(flags: &MetaFlags) -> Vec<String> {
    let mut names = Vec::new();
    if flags.skewness {
        names.push("meta_skewness".to_string());
    }
    if flags.kurtosis {
        names.push("meta_kurtosis".to_string());
    }
    if flags.skewness || flags.kurtosis {
        names.push("meta_moments_undefined".to_string());
    }
    if flags.psd {
        names.push("meta_psd_total".to_string());
        for w in OCTAVE_EDGES_HZ.windows(2) {
            let hi = if w[1].is_finite() { format!("{}", w[1]) } else { "nyq".to_string() };
            names.push(format!("meta_psd_{}_{hi}", w[0]));
        }
    }
    if flags.zero_crossing {
        names.push("meta_zcr_per_s".to_string());
        names.push("meta_zero_crossings".to_string());
    }
    names
}

/// Time-domain statistics of the raw segment, in [`meta_names`] order.
pub fn meta_stats(seg: &Segment, flags: &MetaFlags) -> Result<Vec<f64>> {
    if seg.is_empty() {
        return Err(FeatureError::TooShort { len: 0, needed: 1, what: "time-domain statistics" });
    }
    let mut out = Vec::new();
    let m = moments(&seg.samples);
    if flags.skewness {
        out.push(m.skewness);
    }
    if flags.kurtosis {
        out.push(m.excess_kurtosis);
    }
    if flags.skewness || flags.kurtosis {
        out.push(if m.degenerate { 1.0 } else { 0.0 });
    }
    if flags.psd {
        let (freqs, psd) = welch_psd(&seg.samples, seg.sample_rate);
        let df = freqs.get(1).copied().unwrap_or(seg.sample_rate as f64);
        out.push(psd.iter().sum::<f64>() * df);
        for w in OCTAVE_EDGES_HZ.windows(2) {
            let band: f64 = freqs.iter().zip(&psd).filter(|(f, _)| **f >= w[0] && **f < w[1]).map(|(_, p)| p).sum();
            out.push(band * df);
        }
    }
    if flags.zero_crossing {
        let count = zero_crossings(&seg.samples);
        out.push(count as f64 * seg.sample_rate as f64 / seg.len() as f64);
        out.push(count as f64);
    }
    Ok(out)
}
