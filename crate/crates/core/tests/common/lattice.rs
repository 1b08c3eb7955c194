//! Random descriptors and registries with filter-sort selection oracles.

use autoctx_core::registry::{Aspiration, Configuration, Displacement, Fuel, ModelRecord, VehicleDescriptor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Each attribute is a wildcard or one of two values, so random pairs are
/// often comparable.
pub fn random_descriptor(r: &mut ChaCha8Rng, p_fixed: f64) -> VehicleDescriptor {
    let mut pick = |p: f64| r.random_bool(p).then(|| r.random_bool(0.5));
    VehicleDescriptor {
        fuel: pick(p_fixed).map(|b| if b { Fuel::Gasoline } else { Fuel::Diesel }),
        configuration: pick(p_fixed).map(|b| if b { Configuration::Inline } else { Configuration::Vee }),
        cylinders: pick(p_fixed).map(|b| if b { 4 } else { 6 }),
        displacement: pick(p_fixed).map(|b| Displacement::from_liters(if b { 2.0 } else { 3.0 }).unwrap()),
        aspiration: pick(p_fixed).map(|b| if b { Aspiration::Turbo } else { Aspiration::Natural }),
        make: pick(p_fixed).map(|b| if b { "ford" } else { "vw" }.to_string()),
        instance: pick(p_fixed).map(|b| if b { "a" } else { "b" }.to_string()),
    }
}

/// Attribute-wise definition: every fixed attribute of `a` is fixed to the
/// same value in `b`.
pub fn generalizes_oracle(a: &VehicleDescriptor, b: &VehicleDescriptor) -> bool {
    let sa = a.to_string();
    let sb = b.to_string();
    let pa: Vec<&str> = sa.trim_matches(|c| c == '(' || c == ')').split(", ").collect();
    let pb: Vec<&str> = sb.trim_matches(|c| c == '(' || c == ')').split(", ").collect();
    pa.iter().zip(&pb).all(|(x, y)| *x == "*" || x == y)
}

/// Exhaustive filter-sort oracle for `select_model`.
pub fn select_oracle<'a>(query: &VehicleDescriptor, kind: &str, min_n: u32, records: &'a [ModelRecord]) -> Option<&'a ModelRecord> {
    let key = |r: &ModelRecord| (std::cmp::Reverse(r.descriptor.specificity()), std::cmp::Reverse(r.n_train), r.id.clone());
    let mut eligible: Vec<&ModelRecord> =
        records.iter().filter(|r| r.diagnostic_kind == kind && r.n_train >= min_n && generalizes_oracle(&r.descriptor, query)).collect();
    eligible.sort_by_key(|r| key(r));
    if let Some(r) = eligible.first() {
        return Some(r);
    }
    let mut roots: Vec<&ModelRecord> = records.iter().filter(|r| r.diagnostic_kind == kind && r.descriptor.specificity() == 0).collect();
    roots.sort_by_key(|r| key(r));
    roots.first().copied()
}

pub fn random_records(r: &mut ChaCha8Rng) -> Vec<ModelRecord> {
    let n = r.random_range(0..=30);
    (0..n)
        .map(|i| {
            let p = r.random_range(0.0..0.8);
            let d = random_descriptor(r, p);
            let kind = if r.random_bool(0.8) { "misfire" } else { "belt" };
            ModelRecord::new(format!("r{:02}-{i}", r.random_range(0..10)), d, kind, r.random_range(1..8))
        })
        .collect()
}
