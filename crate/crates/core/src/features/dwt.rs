//! Periodized multilevel Daubechies wavelet decomposition.
//!
//! The filters are orthonormal and the signal is extended periodically, so the
//! transform preserves energy exactly. Input is truncated to the largest
//! multiple of `2^levels` samples so that every level halves cleanly.

use serde::{Deserialize, Serialize};

use super::{FeatureConfig, FeatureError, Result};
use crate::signal::Segment;

const LOG_FLOOR: f64 = 1e-12;

/// Daubechies wavelets named by vanishing moments (`db4` has 8 taps).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Wavelet {
    Db1,
    Db2,
    Db3,
    #[default]
    Db4,
}

impl Wavelet {
    /// Decomposition low-pass filter.
    pub fn lowpass(self) -> &'static [f64] {
        match self {
            Wavelet::Db1 => &[std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2],
            Wavelet::Db2 => &[
                0.482_962_913_144_534_14,
                0.836_516_303_737_807_9,
                0.224_143_868_042_013_38,
                -0.129_409_522_551_260_38,
            ],
            Wavelet::Db3 => &[
                0.332_670_552_950_085_62,
                0.806_891_509_311_092_1,
                0.459_877_502_118_489_9,
                -0.135_011_020_010_255_84,
                -0.085_441_273_882_026_53,
                0.035_226_291_885_709_82,
            ],
            Wavelet::Db4 => &[
                0.230_377_813_308_896_5,
                0.714_846_570_552_915_6,
                0.630_880_767_929_858_9,
                -0.027_983_769_416_859_857,
                -0.187_034_811_719_093_08,
                0.030_841_381_835_560_765,
                0.032_883_011_666_885_2,
                -0.010_597_401_785_069_032,
            ],
        }
    }

    /// Quadrature-mirror high-pass filter.
    pub fn highpass(self) -> Vec<f64> {
        let h = self.lowpass();
        let n = h.len();
        (0..n).map(|k| if k % 2 == 0 { h[n - 1 - k] } else { -h[n - 1 - k] }).collect()
    }
}

/// One analysis step: `(approximation, detail)`, each half the input length.
fn step(x: &[f64], lo: &[f64], hi: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let half = n / 2;
    let mut a = vec![0.0; half];
    let mut d = vec![0.0; half];
    for i in 0..half {
        for (k, (l, h)) in lo.iter().zip(hi).enumerate() {
            let v = x[(2 * i + k) % n];
            a[i] += l * v;
            d[i] += h * v;
        }
    }
    (a, d)
}

/// Decomposes `x` into `[d1, d2, .., d_levels, a_levels]`, finest detail first.
pub fn wavedec(x: &[f64], wavelet: Wavelet, levels: usize) -> Result<Vec<Vec<f64>>> {
    let block = 1usize.checked_shl(levels as u32).unwrap_or(usize::MAX);
    if levels == 0 || x.len() < block {
        return Err(FeatureError::TooShort { len: x.len(), needed: block, what: "the DWT depth" });
    }
    let usable = x.len() / block * block;
    let lo = wavelet.lowpass();
    let hi = wavelet.highpass();
    let mut bands = Vec::with_capacity(levels + 1);
    let mut approx = x[..usable].to_vec();
    for _ in 0..levels {
        let (a, d) = step(&approx, lo, &hi);
        bands.push(d);
        approx = a;
    }
    bands.push(approx);
    Ok(bands)
}

pub(super) fn band_names(levels: usize) -> Vec<String> {
    (1..=levels).map(|l| format!("d{l}")).chain(std::iter::once(format!("a{levels}"))).collect()
}

/// Per band: energy, natural-log energy, and fraction of total energy.
pub fn dwt_features(seg: &Segment, cfg: &FeatureConfig) -> Result<Vec<f64>> {
    let bands = wavedec(&seg.samples, cfg.dwt_family, cfg.dwt_levels)?;
    let energies: Vec<f64> = bands.iter().map(|b| b.iter().map(|v| v * v).sum()).collect();
    let total: f64 = energies.iter().sum();
    Ok(energies
        .iter()
        .flat_map(|&e| {
            let frac = if total > 0.0 { e / total } else { 0.0 };
            [e, e.max(LOG_FLOOR).ln(), frac]
        })
        .collect())
}
