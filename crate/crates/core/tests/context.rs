mod common;

use autoctx_core::context::*;
use autoctx_core::registry::{Aspiration, Fuel};
use autoctx_core::signal::{AudioClip, CANONICAL_RATE};
use autoctx_core::synth::{synthesize, EngineSpec, TimbreFamily, CYLINDER_COUNTS};
use common::matching::*;
use common::rng;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn matcher_equals_brute_force_on_a_thousand_instances() {
    let mut r = rng(2024);
    for t in 0..1000 {
        let inst = random_instance(&mut r);
        let (_, m) = select_context(&inst.query, &inst.db, &inst.weights).unwrap();
        let (id, d) = brute_force(&inst);
        assert_eq!(m.model_id, id, "trial {t}");
        assert_eq!(m.distance, d, "trial {t}");
        // Unpruned matching skips unknown and zero-weight entries the same way.
        assert_eq!(match_nearest(&inst.query, &inst.db, &inst.weights).unwrap().model_id, id);
    }
}

#[test]
fn pruning_example() {
    let names = vec!["engine_on".to_string(), "in_gear".to_string(), "moving".to_string()];
    let db = ReferenceContextDB::new(names.clone(), vec![ReferenceEntry { model_id: "a".into(), values: vec![1, 1, 0], n_train: 1 }]).unwrap();
    let q = ContextVector::new([("engine_on", Ternary::Yes), ("in_gear", Ternary::Unknown), ("moving", Ternary::No)]).unwrap();
    let p = prune(&q, &db, &ContextWeights::uniform("d", names)).unwrap();
    assert_eq!(p.query.names(), vec!["engine_on", "moving"]);
    assert_eq!(p.db.names(), ["engine_on", "moving"]);
    assert_eq!(p.db.entries()[0].values, vec![1, 0]);
    assert_eq!(p.dropped, vec!["in_gear"]);
}

fn engine_clip(i: u64) -> AudioClip {
    let fuel = if i % 2 == 0 { Fuel::Gasoline } else { Fuel::Diesel };
    let asp = if i % 3 == 0 { Aspiration::Turbo } else { Aspiration::Natural };
    let fam = if i % 5 == 0 { TimbreFamily::Alternate } else { TimbreFamily::Standard };
    let spec = EngineSpec::random(fuel, CYLINDER_COUNTS[(i / 2 % 4) as usize], asp, fam, 900 + i);
    synthesize(&spec, 3.0).unwrap()
}

#[test]
fn synthetic_idle_engines_are_detected() {
    for i in 0..50 {
        let e = engine_evidence(&engine_clip(i));
        assert_eq!(e.value, Ternary::Yes, "config {i}: {e:?}");
    }
}

#[test]
fn white_noise_is_not_an_engine() {
    for seed in 0..20 {
        let mut r = rng(seed);
        let level = 10f64.powf(-20.0 / 20.0);
        let x: Vec<f64> = (0..3 * CANONICAL_RATE as usize).map(|_| level * r.random_range(-1.0..1.0)).collect();
        let clip = AudioClip::new(x, CANONICAL_RATE, "noise").unwrap();
        assert_eq!(detect_engine_running(&clip), Ternary::No, "seed {seed}");
    }
}

#[test]
fn half_second_clip_is_unknown() {
    let clip = engine_clip(0);
    let short = AudioClip::new(clip.samples()[..CANONICAL_RATE as usize / 2].to_vec(), CANONICAL_RATE, "short").unwrap();
    assert_eq!(detect_engine_running(&short), Ternary::Unknown);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn scaling_weights_keeps_the_selection(seed in any::<u64>(), alpha in 0.01f64..100.0) {
        let inst = random_instance(&mut rng(seed));
        let a = match_nearest(&inst.query, &inst.db, &inst.weights).unwrap();
        let scaled = ContextWeights::new("diag", inst.weights.weights.iter().map(|(k, v)| (k.clone(), v * alpha))).unwrap();
        let b = match_nearest(&inst.query, &inst.db, &scaled).unwrap();
        // Exact ties may round apart under a general factor; strict winners may not.
        if a.margin.is_none_or(|m| m > 1e-9) {
            prop_assert_eq!(a.model_id, b.model_id);
        }
    }

    #[test]
    fn scaling_by_powers_of_two_keeps_the_selection(seed in any::<u64>(), k in -6i32..6) {
        let inst = random_instance(&mut rng(seed));
        let alpha = 2f64.powi(k);
        let a = match_nearest(&inst.query, &inst.db, &inst.weights).unwrap();
        let scaled = ContextWeights::new("diag", inst.weights.weights.iter().map(|(k, v)| (k.clone(), v * alpha))).unwrap();
        let b = match_nearest(&inst.query, &inst.db, &scaled).unwrap();
        prop_assert_eq!(&a.model_id, &b.model_id);
        prop_assert_eq!(a.distance * alpha, b.distance);
    }

    #[test]
    fn prune_is_idempotent(seed in any::<u64>()) {
        let inst = random_instance(&mut rng(seed));
        let once = prune(&inst.query, &inst.db, &inst.weights).unwrap();
        let twice = prune(&once.query, &once.db, &inst.weights).unwrap();
        prop_assert_eq!(&once.query, &twice.query);
        prop_assert_eq!(&once.db, &twice.db);
        prop_assert!(twice.dropped.is_empty());
    }

    #[test]
    fn farther_references_never_change_the_selection(seed in any::<u64>()) {
        let inst = random_instance(&mut rng(seed));
        let a = match_nearest(&inst.query, &inst.db, &inst.weights).unwrap();
        // Complement of the query on every usable entry: maximal distance.
        let values: Vec<u8> = inst.query.entries().iter().map(|e| match e.value { Ternary::Yes => 0, _ => 1 }).collect();
        let far = ReferenceEntry { model_id: "zz-far".into(), values, n_train: 1 };
        if distance(&inst.query, &far, &inst.weights) > a.distance {
            let mut entries = inst.db.entries().to_vec();
            entries.push(far);
            let db = ReferenceContextDB::new(inst.db.names().to_vec(), entries).unwrap();
            prop_assert_eq!(match_nearest(&inst.query, &db, &inst.weights).unwrap().model_id, a.model_id);
        }
    }

    #[test]
    fn unknown_entries_never_influence_the_selection(seed in any::<u64>(), flip in any::<prop::sample::Index>()) {
        let inst = random_instance(&mut rng(seed));
        let i = flip.index(inst.query.len());
        let mut entries: Vec<(String, Ternary)> = inst.query.entries().iter().map(|e| (e.name.clone(), e.value)).collect();
        entries[i].1 = Ternary::Unknown;
        prop_assume!(entries.iter().zip(inst.db.names()).any(|((_, v), n)| *v != Ternary::Unknown && inst.weights.weight(n) > 0.0));
        let q = ContextVector::new(entries.clone()).unwrap();
        let got = match_nearest(&q, &inst.db, &inst.weights).unwrap();
        // Whatever the reference values in the unknown column, the outcome is
        // the same, so rewriting that column cannot matter.
        let rewritten: Vec<ReferenceEntry> = inst.db.entries().iter().map(|e| {
            let mut e = e.clone();
            e.values[i] ^= 1;
            e
        }).collect();
        let db2 = ReferenceContextDB::new(inst.db.names().to_vec(), rewritten).unwrap();
        prop_assert_eq!(&match_nearest(&q, &db2, &inst.weights).unwrap().model_id, &got.model_id);
        let inst2 = Instance { query: q, db: inst.db.clone(), weights: inst.weights.clone() };
        prop_assert_eq!(brute_force(&inst2).0, got.model_id);
    }
}
