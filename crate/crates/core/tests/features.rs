mod common;

use autoctx_core::features::{
    dwt_features, extract, fft_features, magnitude_spectrum, meta_stats, mfcc, moments, wavedec, Extractor, FeatureConfig, MetaFlags, Wavelet,
};
use autoctx_core::registry::{Aspiration, Fuel};
use autoctx_core::signal::{Segment, CANONICAL_RATE};
use autoctx_core::synth::{synthesize, EngineSpec, TimbreFamily, CYLINDER_COUNTS};
use common::*;
use proptest::prelude::*;
use rand::Rng;

fn seg(x: Vec<f64>) -> Segment {
    Segment::from_samples(x, CANONICAL_RATE)
}

#[test]
fn magnitudes_match_the_naive_dft() {
    for (n, trials) in [(256usize, 20u64), (1024, 10), (8192, 2)] {
        for t in 0..trials {
            let x = noise(&mut rng(n as u64 * 1000 + t), n);
            let err = max_relative_error(&magnitude_spectrum(&x), &naive_dft_magnitudes(&x));
            assert!(err <= 1e-6, "n={n} trial {t}: {err}");
        }
    }
}

#[test]
fn fft_family_keeps_the_low_bins_of_the_oracle() {
    let cfg = FeatureConfig { fft_window: 1024, fft_kept_bins: 64, ..FeatureConfig::default() };
    let x = noise(&mut rng(5), 2048);
    let got = fft_features(&seg(x.clone()), &cfg).unwrap();
    let oracle = naive_dft_magnitudes(&x[..1024]);
    assert!(max_relative_error(&got[..64], &oracle[..64]) <= 1e-6);
}

#[test]
fn mfcc_gain_changes_only_coefficient_zero() {
    let cfg = FeatureConfig::default();
    let c = cfg.mfcc_coeffs;
    for t in 0..5 {
        let mut r = rng(t);
        let x: Vec<f64> = noise(&mut r, 22_050).iter().map(|v| v * 0.3).collect();
        let alpha = r.random_range(0.05..3.0);
        let a = mfcc(&seg(x.clone()), &cfg).unwrap();
        let b = mfcc(&seg(x.iter().map(|v| v * alpha).collect()), &cfg).unwrap();
        for i in 1..c {
            assert!((a[i] - b[i]).abs() < 1e-6, "mean c{i}");
            assert!((a[c + i] - b[c + i]).abs() < 1e-6, "std c{i}");
        }
        assert!((a[0] - b[0]).abs() > 1e-3);
    }
}

#[test]
fn diesel_has_more_high_order_cepstral_energy() {
    let cfg = FeatureConfig::default();
    let high = |clip: &autoctx_core::signal::AudioClip| -> f64 {
        let m = mfcc(&seg(clip.samples()[..22_050].to_vec()), &cfg).unwrap();
        m[6..cfg.mfcc_coeffs].iter().map(|v| v.abs()).sum()
    };
    for seed in 0..20u64 {
        let cyl = CYLINDER_COUNTS[seed as usize % 4];
        let g = EngineSpec::random(Fuel::Gasoline, cyl, Aspiration::Natural, TimbreFamily::Standard, seed);
        let d = EngineSpec::random(Fuel::Diesel, cyl, Aspiration::Natural, TimbreFamily::Standard, seed);
        let (hg, hd) = (high(&synthesize(&g, 2.0).unwrap()), high(&synthesize(&d, 2.0).unwrap()));
        assert!(hd > hg, "seed {seed}: diesel {hd} vs gasoline {hg}");
    }
}

#[test]
fn db2_matches_its_closed_form() {
    let s3 = 3f64.sqrt();
    let d = 4.0 * 2f64.sqrt();
    let closed = [(1.0 + s3) / d, (3.0 + s3) / d, (3.0 - s3) / d, (1.0 - s3) / d];
    for (a, b) in Wavelet::Db2.lowpass().iter().zip(closed) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn wavedec_matches_the_cascade_oracle() {
    let x = noise(&mut rng(11), 1024);
    for w in [Wavelet::Db1, Wavelet::Db2, Wavelet::Db3, Wavelet::Db4] {
        let got = wavedec(&x, w, 5).unwrap();
        let want = cascade_dwt(&x, w.lowpass(), 5);
        for (g, o) in got.iter().zip(&want) {
            assert_eq!(g.len(), o.len());
            assert!(g.iter().zip(o).all(|(a, b)| (a - b).abs() < 1e-12), "{w:?}");
        }
    }
}

#[test]
fn low_tone_lands_in_the_deepest_approximation() {
    let cfg = FeatureConfig::default();
    // Below rate / 2^(levels + 1) = 172 Hz.
    let x: Vec<f64> = (0..22_050).map(|i| (2.0 * std::f64::consts::PI * 60.0 * i as f64 / 22_050.0).sin()).collect();
    let bands = cascade_dwt(&x[..22_016], Wavelet::Db4.lowpass(), 6);
    let total: f64 = bands.iter().flatten().map(|v| v * v).sum();
    let deep: f64 = bands[6].iter().map(|v| v * v).sum();
    assert!(deep / total > 0.9);
    let f = dwt_features(&seg(x), &cfg).unwrap();
    assert!(f[6 * 3 + 2] > 0.9, "approximation fraction {}", f[20]);
}

#[test]
fn white_noise_band_fractions_halve_per_level() {
    let cfg = FeatureConfig::default();
    let levels = cfg.dwt_levels;
    let mut mean = vec![0.0; levels + 1];
    for s in 0..50 {
        let f = dwt_features(&seg(noise(&mut rng(100 + s), 8192)), &cfg).unwrap();
        for b in 0..=levels {
            mean[b] += f[3 * b + 2] / 50.0;
        }
    }
    for (b, m) in mean.iter().enumerate() {
        let expect = if b < levels { 0.5f64.powi(b as i32 + 1) } else { 0.5f64.powi(levels as i32) };
        assert!((m / expect - 1.0).abs() < 0.3, "band {b}: {m} vs {expect}");
    }
}

#[test]
fn laplace_noise_has_excess_kurtosis_three() {
    let x = laplace(&mut rng(42), 1_000_000, 1.0);
    let m = moments(&x);
    assert!((m.excess_kurtosis - 3.0).abs() < 0.5, "{}", m.excess_kurtosis);
    assert!((m.excess_kurtosis - excess_kurtosis(&x)).abs() < 1e-9);
}

#[test]
fn meta_statistics_follow_their_definitions() {
    let x: Vec<f64> = (0..22_050).map(|i| (2.0 * std::f64::consts::PI * 100.0 * (i as f64 + 0.25) / 22_050.0).sin()).collect();
    let flags = MetaFlags { skewness: false, kurtosis: false, psd: false, zero_crossing: true };
    let zc = meta_stats(&seg(x), &flags).unwrap();
    assert!((zc[0] - 200.0).abs() <= 2.0);
}

#[test]
fn default_schema_is_a_fixed_width_with_finite_values() {
    let ex = Extractor::new(FeatureConfig::default()).unwrap();
    assert_eq!(ex.schema().len(), 326);
    let mut r = rng(9);
    for kind in 0..4 {
        let x: Vec<f64> = match kind {
            0 => vec![0.0; 22_050],
            1 => vec![0.5; 22_050],
            2 => noise(&mut r, 22_050),
            _ => (0..22_050).map(|i| if i % 100 == 0 { 1.0 } else { 0.0 }).collect(),
        };
        let v = ex.extract(&seg(x)).unwrap();
        assert_eq!(v.values.len(), 326);
        assert!(v.values.iter().all(|v| v.is_finite()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn dwt_conserves_energy(x in prop::collection::vec(-1.0f64..1.0, 64..600), levels in 1usize..6) {
        prop_assume!(x.len() >= 1 << levels);
        let usable = x.len() / (1 << levels) * (1 << levels);
        let input: f64 = x[..usable].iter().map(|v| v * v).sum();
        for w in [Wavelet::Db1, Wavelet::Db2, Wavelet::Db3, Wavelet::Db4] {
            let out: f64 = wavedec(&x, w, levels).unwrap().iter().flatten().map(|v| v * v).sum();
            prop_assert!((out - input).abs() <= 1e-9 * input.max(1.0));
        }
    }

    #[test]
    fn extraction_is_pure(seed in any::<u64>()) {
        let cfg = FeatureConfig { fft_window: 1024, fft_kept_bins: 32, ..FeatureConfig::default() };
        let x = noise(&mut rng(seed), 4096);
        let a = extract(&seg(x.clone()), &cfg).unwrap();
        let b = extract(&seg(x), &cfg).unwrap();
        prop_assert_eq!(a.values, b.values);
    }

    #[test]
    fn mfcc_gain_invariance_for_any_alpha(alpha in 0.01f64..100.0, seed in any::<u64>()) {
        let cfg = FeatureConfig::default();
        let x: Vec<f64> = noise(&mut rng(seed), 4096);
        let a = mfcc(&seg(x.clone()), &cfg).unwrap();
        let b = mfcc(&seg(x.iter().map(|v| v * alpha).collect()), &cfg).unwrap();
        for i in (1..cfg.mfcc_coeffs).chain(cfg.mfcc_coeffs + 1..2 * cfg.mfcc_coeffs) {
            prop_assert!((a[i] - b[i]).abs() < 1e-6);
        }
    }
}
