//! Random matcher instances and an exhaustive nearest-reference oracle.

use autoctx_core::context::{ContextVector, ContextWeights, ReferenceContextDB, ReferenceEntry, Ternary};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub struct Instance {
    pub query: ContextVector,
    pub db: ReferenceContextDB,
    pub weights: ContextWeights,
}

pub fn ternary(v: i8) -> Ternary {
    match v {
        1 => Ternary::Yes,
        0 => Ternary::No,
        _ => Ternary::Unknown,
    }
}

pub fn random_instance(r: &mut ChaCha8Rng) -> Instance {
    let n_names = r.random_range(1..=6);
    let names: Vec<String> = (0..n_names).map(|i| format!("ctx{i}")).collect();
    let n_db = r.random_range(1..=10);
    let entries = (0..n_db)
        .map(|e| ReferenceEntry {
            // Ids drawn from a small pool with a suffix keep them unique but
            // unordered relative to insertion.
            model_id: format!("m{}-{e}", r.random_range(0..5)),
            values: (0..n_names).map(|_| r.random_range(0..2u8)).collect(),
            n_train: r.random_range(1..4),
        })
        .collect();
    let mut query: Vec<(String, Ternary)> = names.iter().map(|n| (n.clone(), ternary(r.random_range(-1..=1)))).collect();
    let mut weights: Vec<(String, f64)> = names
        .iter()
        .map(|n| {
            let w = if r.random_bool(0.5) { r.random_range(0..4) as f64 } else { r.random_range(0.0..3.0) };
            (n.clone(), w)
        })
        .collect();
    // At least one usable entry.
    let i = r.random_range(0..n_names);
    weights[i].1 = weights[i].1.max(0.5);
    if query[i].1 == Ternary::Unknown {
        query[i].1 = Ternary::Yes;
    }
    Instance {
        query: ContextVector::new(query).unwrap(),
        db: ReferenceContextDB::new(names, entries).unwrap(),
        weights: ContextWeights::new("diag", weights).unwrap(),
    }
}

/// Exhaustive oracle: every reference's weighted Hamming distance over the
/// known, positively weighted query entries; the minimum wins, ties to the
/// larger n_train and then the smaller id.
pub fn brute_force(inst: &Instance) -> (String, f64) {
    let mut best: Option<(f64, u32, String)> = None;
    for e in inst.db.entries() {
        let mut d = 0.0;
        for (i, q) in inst.query.entries().iter().enumerate() {
            let w = inst.weights.weights.get(&q.name).copied().unwrap_or(0.0);
            let qv = match q.value {
                Ternary::Yes => 1u8,
                Ternary::No => 0,
                Ternary::Unknown => continue,
            };
            if w > 0.0 && qv != e.values[i] {
                d += w;
            }
        }
        let cand = (d, e.n_train, e.model_id.clone());
        let better = match &best {
            None => true,
            Some((bd, bn, bid)) => d < *bd || (d == *bd && (e.n_train > *bn || (e.n_train == *bn && e.model_id < *bid))),
        };
        if better {
            best = Some(cand);
        }
    }
    let (d, _, id) = best.unwrap();
    (id, d)
}
