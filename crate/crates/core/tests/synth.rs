mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use autoctx_core::features::welch_psd;
use autoctx_core::registry::{Aspiration, Fuel};
use autoctx_core::signal::{ingest_dir, CANONICAL_RATE};
use autoctx_core::synth::*;
use common::excess_kurtosis;
use proptest::prelude::*;

/// Strongest DFT magnitude on a 0.05 Hz grid between `lo` and `hi`, computed
/// by direct summation.
fn dominant_frequency(x: &[f64], rate: f64, lo: f64, hi: f64) -> f64 {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let mut best = (0.0, lo);
    let mut f = lo;
    while f <= hi {
        let w = 2.0 * PI * f / rate;
        let (mut re, mut im) = (0.0, 0.0);
        for (n, v) in x.iter().enumerate() {
            let p = w * n as f64;
            re += (v - mean) * p.cos();
            im -= (v - mean) * p.sin();
        }
        let m = re.hypot(im);
        if m > best.0 {
            best = (m, f);
        }
        f += 0.05;
    }
    best.1
}

/// Low-passes by block averaging so the direct search stays cheap.
fn decimate(x: &[f64], factor: usize) -> Vec<f64> {
    x.chunks_exact(factor).map(|c| c.iter().sum::<f64>() / factor as f64).collect()
}

#[test]
fn four_cylinders_at_600_rpm_fire_at_20_hz() {
    let spec = EngineSpec::new(Fuel::Gasoline, 4, Aspiration::Natural, 600.0, 1);
    assert_eq!(spec.firing_hz(), 20.0);
    let clip = synthesize(&spec, 4.0).unwrap();
    let factor = 21;
    let x = decimate(clip.samples(), factor);
    let f = dominant_frequency(&x, CANONICAL_RATE as f64 / factor as f64, 5.0, 200.0);
    assert!((f - 20.0).abs() <= 0.5, "peak at {f} Hz");
}

#[test]
fn fundamental_within_two_and_a_half_percent_for_random_specs() {
    let mut cases = 0;
    for (i, fuel) in [Fuel::Gasoline, Fuel::Diesel].into_iter().enumerate() {
        for (j, cyl) in CYLINDER_COUNTS.into_iter().enumerate() {
            for fam in [TimbreFamily::Standard, TimbreFamily::Alternate] {
                let seed = 40 + (i * 4 + j) as u64;
                let spec = EngineSpec::random(fuel, cyl, Aspiration::Natural, fam, seed);
                let clip = synthesize(&spec, 3.0).unwrap();
                let x = decimate(clip.samples(), 21);
                let want = spec.firing_hz();
                let f = dominant_frequency(&x, CANONICAL_RATE as f64 / 21.0, 0.6 * want, 1.4 * want);
                assert!((f / want - 1.0).abs() <= 0.025, "{fuel} {cyl} {fam:?}: {f} vs {want}");
                cases += 1;
            }
        }
    }
    assert_eq!(cases, 16);
}

fn band_energy(x: &[f64], lo: f64, hi: f64) -> f64 {
    let (freqs, psd) = welch_psd(x, CANONICAL_RATE);
    freqs.iter().zip(&psd).filter(|(f, _)| (lo..=hi).contains(*f)).map(|(_, p)| p).sum()
}

#[test]
fn turbo_adds_energy_in_the_whine_band() {
    for seed in 0..10 {
        for fuel in Fuel::ALL {
            let natural = EngineSpec::random(*fuel, 4, Aspiration::Natural, TimbreFamily::Standard, seed);
            let turbo = EngineSpec { aspiration: Aspiration::Turbo, ..natural.clone() };
            let (n, t) = (synthesize(&natural, 2.0).unwrap(), synthesize(&turbo, 2.0).unwrap());
            let (en, et) = (band_energy(n.samples(), TURBO_BAND_HZ.0, TURBO_BAND_HZ.1), band_energy(t.samples(), TURBO_BAND_HZ.0, TURBO_BAND_HZ.1));
            assert!(et > en, "seed {seed} {fuel}: turbo {et} natural {en}");
        }
    }
}

#[test]
fn diesel_is_more_impulsive_than_gasoline() {
    for seed in 0..20 {
        let cyl = CYLINDER_COUNTS[seed as usize % 4];
        let g = EngineSpec::new(Fuel::Gasoline, cyl, Aspiration::Natural, 750.0, seed);
        let d = EngineSpec::new(Fuel::Diesel, cyl, Aspiration::Natural, 750.0, seed);
        let (kg, kd) = (excess_kurtosis(synthesize(&g, 2.0).unwrap().samples()), excess_kurtosis(synthesize(&d, 2.0).unwrap().samples()));
        assert!(kd > kg, "seed {seed}: diesel {kd} gasoline {kg}");
    }
}

#[test]
fn same_seed_same_samples() {
    let spec = EngineSpec::random(Fuel::Diesel, 6, Aspiration::Turbo, TimbreFamily::Standard, 17);
    let (a, b) = (synthesize(&spec, 1.5).unwrap(), synthesize(&spec, 1.5).unwrap());
    assert_eq!(a.samples(), b.samples());
    let other = EngineSpec { seed: 18, ..spec };
    assert_ne!(synthesize(&other, 1.5).unwrap().samples(), a.samples());
}

#[test]
fn balanced_mix_of_160_gives_ten_per_cell() {
    let counts = ClassMix::balanced().apportion(160).unwrap();
    assert_eq!(counts.len(), 16);
    assert!(counts.iter().all(|&c| c == 10));
}

#[test]
fn fleet_counts_follow_the_ratios() {
    let mix = ClassMix::fleet();
    let total: f64 = mix.cells.iter().map(|c| c.weight).sum();
    for n in [50, 200, 1000] {
        let counts = mix.apportion(n).unwrap();
        assert_eq!(counts.iter().sum::<usize>(), n);
        for (cell, &c) in mix.cells.iter().zip(&counts) {
            let want = cell.weight / total * n as f64;
            assert!((c as f64 - want).abs() <= 1.0, "{cell:?}: {c} vs {want}");
        }
    }
}

#[test]
fn unsplittable_mix_is_rejected() {
    assert!(matches!(corpus_specs(6, &ClassMix::balanced(), 0, TimbreFamily::Standard), Err(SynthError::InfeasibleMix(_))));
}

#[test]
fn corpus_ids_are_unique_and_labels_follow_the_mix() {
    let specs = corpus_specs(200, &ClassMix::balanced(), 3, TimbreFamily::Standard).unwrap();
    let seeds: BTreeSet<u64> = specs.iter().map(|s| s.seed).collect();
    assert_eq!(seeds.len(), 200);
    let opts = CorpusOptions { duration_s: 1.0, ..CorpusOptions::default() };
    let clips = generate_corpus(200, &ClassMix::balanced(), 3, &opts).unwrap();
    let ids: BTreeSet<&str> = clips.iter().map(|c| c.source_id()).collect();
    assert_eq!(ids.len(), 200);
    let mut per_fuel: BTreeMap<&str, usize> = BTreeMap::new();
    for c in &clips {
        *per_fuel.entry(c.label("fuel").unwrap()).or_default() += 1;
        assert!(c.label("cylinders").is_some() && c.label("aspiration").is_some() && c.label("make").is_some());
    }
    // 12.5 per cell: every cell gets 12 or 13.
    assert!(per_fuel.values().all(|&c| (96..=104).contains(&c)), "{per_fuel:?}");
}

#[test]
fn written_corpus_is_reproducible_and_reingests() {
    let opts = CorpusOptions { duration_s: 1.0, ..CorpusOptions::default() };
    let mix = ClassMix::balanced();
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let p1 = write_corpus(&generate_corpus(32, &mix, 9, &opts).unwrap(), d1.path()).unwrap();
    let p2 = write_corpus(&generate_corpus(32, &mix, 9, &opts).unwrap(), d2.path()).unwrap();
    assert_eq!(p1.len(), 32);
    for (a, b) in p1.iter().zip(&p2) {
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
        assert_eq!(std::fs::read(a.with_extension("json")).unwrap(), std::fs::read(b.with_extension("json")).unwrap());
    }
    let back = ingest_dir(d1.path()).unwrap();
    assert_eq!(back.len(), 32);
    assert!(back.iter().all(|c| c.label("fuel").is_some() && c.source_id().starts_with("veh-")));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn apportionment_is_exact_and_near_the_quota(weights in prop::collection::vec(0.0f64..5.0, 16), n in 0usize..500) {
        let mut mix = ClassMix::balanced();
        prop_assume!(weights.iter().sum::<f64>() > 0.0);
        for (c, w) in mix.cells.iter_mut().zip(&weights) {
            c.weight = *w;
        }
        let total: f64 = weights.iter().sum();
        let counts = mix.apportion(n).unwrap();
        prop_assert_eq!(counts.iter().sum::<usize>(), n);
        for (c, w) in counts.iter().zip(&weights) {
            prop_assert!((*c as f64 - w / total * n as f64).abs() < 1.0 + 1e-9);
        }
    }
}
