//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

mod common;

use std::collections::HashSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use autoctx_core::chain::*;
use autoctx_core::context::select_context;
use autoctx_core::features::{magnitude_spectrum, mfcc, wavedec, Extractor, FeatureConfig, Wavelet};
use autoctx_core::learn::*;
use autoctx_core::registry::{select_model, ModelRecord, VehicleDescriptor};
use autoctx_core::seed::derive;
use autoctx_core::signal::{AudioClip, Segment, CANONICAL_RATE};
use autoctx_core::synth::{generate_corpus, ClassMix, CorpusOptions, TimbreFamily};
use common::lattice::{random_descriptor, random_records, select_oracle};
use common::matching::{brute_force, random_instance};
use common::*;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed <= Duration::from_secs(limit_s)
}

fn dsp() -> Outcome {
    let t = Instant::now();
    let mut fft_err: f64 = 0.0;
    for n in [256usize, 1024, 8192] {
        for s in 0..100u64 {
            let x = noise(&mut rng(n as u64 * 7919 + s), n);
            fft_err = fft_err.max(max_relative_error(&magnitude_spectrum(&x), &naive_dft_magnitudes(&x)));
        }
    }
    let mut dwt_err: f64 = 0.0;
    for s in 0..100u64 {
        let mut r = rng(50_000 + s);
        let levels = r.random_range(1..=6);
        let len = 64 << r.random_range(0..5);
        let x = noise(&mut r, len);
        let input: f64 = x.iter().map(|v| v * v).sum();
        for w in [Wavelet::Db1, Wavelet::Db2, Wavelet::Db3, Wavelet::Db4] {
            let out: f64 = wavedec(&x, w, levels).unwrap().iter().flatten().map(|v| v * v).sum();
            dwt_err = dwt_err.max((out - input).abs() / input);
        }
    }
    let cfg = FeatureConfig::default();
    let mut mfcc_err: f64 = 0.0;
    for s in 0..20u64 {
        let mut r = rng(60_000 + s);
        let x = noise(&mut r, CANONICAL_RATE as usize);
        let alpha = r.random_range(0.01..100.0);
        let a = mfcc(&Segment::from_samples(x.clone(), CANONICAL_RATE), &cfg).unwrap();
        let b = mfcc(&Segment::from_samples(x.iter().map(|v| v * alpha).collect(), CANONICAL_RATE), &cfg).unwrap();
        for i in (1..cfg.mfcc_coeffs).chain(cfg.mfcc_coeffs + 1..2 * cfg.mfcc_coeffs) {
            mfcc_err = mfcc_err.max((a[i] - b[i]).abs());
        }
    }
    let el = t.elapsed();
    outcome(
        fft_err <= 1e-6 && dwt_err <= 1e-9 && mfcc_err <= 1e-6 && within(el, 30),
        format!("fft rel err {fft_err:.2e} (<=1e-6), dwt energy err {dwt_err:.2e} (<=1e-9), mfcc gain err {mfcc_err:.2e} (<=1e-6), {el:.1?} (<30s)"),
    )
}

fn matcher() -> Outcome {
    let t = Instant::now();
    let mut r = rng(2);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let inst = random_instance(&mut r);
        let (_, m) = select_context(&inst.query, &inst.db, &inst.weights).unwrap();
        let (id, d) = brute_force(&inst);
        mismatches += (m.model_id != id || m.distance != d) as usize;
    }
    let el = t.elapsed();
    outcome(mismatches == 0 && within(el, 10), format!("{mismatches}/1000 mismatches vs brute force, {el:.1?} (<10s)"))
}

fn registry() -> Outcome {
    let t = Instant::now();
    let mut r = rng(3);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let records = random_records(&mut r);
        let query = random_descriptor(&mut r, 0.9);
        let min_n = r.random_range(1..6);
        let got = select_model(&query, "misfire", min_n, &records).ok().map(|s| s.record.id.clone());
        let want = select_oracle(&query, "misfire", min_n, &records).map(|rec| rec.id.clone());
        mismatches += (got != want) as usize;
    }
    let mut violations = 0;
    for _ in 0..10_000 {
        let p = r.random_range(0.1..0.9);
        let (a, b, c) = (random_descriptor(&mut r, p), random_descriptor(&mut r, p), random_descriptor(&mut r, p));
        let refl = a.generalizes(&a);
        let anti = !(a.generalizes(&b) && b.generalizes(&a)) || a == b;
        let trans = !(a.generalizes(&b) && b.generalizes(&c)) || a.generalizes(&c);
        violations += !(refl && anti && trans) as usize;
    }
    let el = t.elapsed();
    outcome(
        mismatches == 0 && violations == 0 && within(el, 10),
        format!("{mismatches}/1000 selection mismatches, {violations}/10000 partial-order violations, {el:.1?} (<10s)"),
    )
}

fn stage_report<'a>(ev: &'a ChainEvaluation, label: &str) -> &'a EvalReport {
    let k = ev.chain.stages().iter().position(|s| s.label == label).unwrap();
    &ev.reports[k]
}

fn end_to_end() -> Outcome {
    let t = Instant::now();
    let clips = generate_corpus(200, &ClassMix::balanced(), 7, &CorpusOptions::default()).unwrap();
    let ev = fit_and_evaluate(&ChainSpec::default_powertrain(), &clips, 0.3, DEFAULT_SEGMENTS_PER_CLIP, 7).unwrap();
    let fuel = stage_report(&ev, "fuel").roc_auc.unwrap();
    let asp = stage_report(&ev, "aspiration").roc_auc.unwrap();
    let cyl = stage_report(&ev, "cylinders").roc_auc.unwrap();
    let el = t.elapsed();
    outcome(
        fuel >= 0.95 && asp >= 0.85 && cyl >= 0.85 && within(el, 600),
        format!("ROC-AUC fuel {fuel:.3} (>=0.95), aspiration {asp:.3} (>=0.85), cylinders macro {cyl:.3} (>=0.85), {el:.1?} (<10min)"),
    )
}

fn clip_accuracy(preds: &[ChainPrediction], clips: &[AudioClip], stage: usize) -> f64 {
    let hits = preds.iter().zip(clips).filter(|(p, c)| Some(p.stages[stage].class.as_str()) == c.label(&p.stages[stage].label)).count();
    hits as f64 / clips.len() as f64
}

/// Voting gain and the chain ablation share corpora and folds.
fn voting_and_ablation() -> (Outcome, Outcome) {
    let opts = CorpusOptions { duration_s: 5.0, ..CorpusOptions::default() };
    let spec = ChainSpec::default_powertrain();
    let mut flat = spec.clone();
    flat.stages.iter_mut().for_each(|s| s.upstream.clear());
    let mut acc9 = [0.0; 3];
    let mut acc1 = [0.0; 3];
    let (mut roc_chain, mut roc_flat) = (0.0, 0.0);
    let seeds = 10;
    for seed in 0..seeds {
        let clips = generate_corpus(120, &ClassMix::balanced(), derive(seed, 11), &opts).unwrap();
        let ev = fit_and_evaluate(&spec, &clips, 0.3, 9, seed).unwrap();
        let test: Vec<AudioClip> = ev.test.iter().map(|&i| clips[i].clone()).collect();
        let single = predict_clips(&ev.chain, &test, 1, derive(seed, 300)).unwrap();
        for k in 0..3 {
            acc9[k] += clip_accuracy(&ev.predictions, &test, k) / seeds as f64;
            acc1[k] += clip_accuracy(&single, &test, k) / seeds as f64;
        }
        let ab = fit_and_evaluate(&flat, &clips, 0.3, 9, seed).unwrap();
        assert_eq!(ab.test, ev.test);
        roc_chain += stage_report(&ev, "cylinders").roc_auc.unwrap() / seeds as f64;
        roc_flat += stage_report(&ab, "cylinders").roc_auc.unwrap() / seeds as f64;
    }
    let wins = (0..3).filter(|&k| acc9[k] >= acc1[k]).count();
    let names = ["aspiration", "fuel", "cylinders"];
    let per: Vec<String> = (0..3).map(|k| format!("{} {:.3} vs {:.3}", names[k], acc9[k], acc1[k])).collect();
    (
        outcome(wins >= 2, format!("mean clip accuracy 9-seg vs 1-seg over 10 seeds: {}; {wins}/3 stages (>=2)", per.join(", "))),
        outcome(
            roc_chain >= roc_flat - 0.02,
            format!("cylinder macro ROC-AUC with upstream {roc_chain:.3} vs without {roc_flat:.3} (>= without - 0.02), 10 seeds, same folds"),
        ),
    )
}

fn two_family() -> Outcome {
    let spec = ChainSpec::default_powertrain().stages[2].classifier.clone();
    let ex = Extractor::new(FeatureConfig::default()).unwrap();
    let labels = |clips: &[AudioClip], t: &SegmentTable| -> Vec<String> {
        t.clip_index.iter().map(|&i| clips[i].label("cylinders").unwrap().to_string()).collect()
    };
    let mut gains = Vec::new();
    for seed in 0..10u64 {
        let opts = |family, prefix: &str| CorpusOptions { duration_s: 5.0, family, id_prefix: prefix.into() };
        let std = generate_corpus(96, &ClassMix::balanced(), derive(seed, 1), &opts(TimbreFamily::Standard, "std")).unwrap();
        let alt = generate_corpus(48, &ClassMix::balanced(), derive(seed, 2), &opts(TimbreFamily::Alternate, "alt")).unwrap();
        let (train_idx, _) = fold_split(&alt, 0.3, derive(seed, 3)).unwrap();
        let train_set: HashSet<usize> = train_idx.into_iter().collect();
        let st = featurize_clips(&std, &ex, 1.0, 9, derive(seed, 4)).unwrap();
        let at = featurize_clips(&alt, &ex, 1.0, 9, derive(seed, 5)).unwrap();
        let (a_tr, a_te) = (at.filter_clips(|i| train_set.contains(&i)), at.filter_clips(|i| !train_set.contains(&i)));
        let (y_st, y_tr, y_te) = (labels(&std, &st), labels(&alt, &a_tr), labels(&alt, &a_te));

        let specific = Classifier::fit(&spec, a_tr.rows.view(), &y_tr, derive(seed, 6)).unwrap();
        let pooled = ndarray::concatenate(ndarray::Axis(0), &[st.rows.view(), a_tr.rows.view()]).unwrap();
        let y_pooled: Vec<String> = y_st.iter().chain(&y_tr).cloned().collect();
        let universal = Classifier::fit(&spec, pooled.view(), &y_pooled, derive(seed, 6)).unwrap();

        let make = TimbreFamily::Alternate.make().to_string();
        let n_alt = train_set.len() as u32;
        let records = vec![
            ModelRecord::new("root", VehicleDescriptor::root(), "cylinders", std.len() as u32 + n_alt),
            ModelRecord::new("alternate", VehicleDescriptor { make: Some(make.clone()), ..VehicleDescriptor::root() }, "cylinders", n_alt),
        ];
        let query = VehicleDescriptor { make: Some(make), ..VehicleDescriptor::root() };
        let chosen = select_model(&query, "cylinders", 2, &records).unwrap();
        let model = if chosen.record.id == "alternate" { &specific } else { &universal };
        let acc_sel = evaluate(model, a_te.rows.view(), &y_te).unwrap().accuracy;
        let acc_root = evaluate(&universal, a_te.rows.view(), &y_te).unwrap().accuracy;
        gains.push(100.0 * (acc_sel - acc_root));
    }
    gains.sort_by(f64::total_cmp);
    let median = (gains[4] + gains[5]) / 2.0;
    outcome(median >= 2.0, format!("registry-selected family model minus universal root: median {median:.1} accuracy points over 10 seeds (>=2)"))
}

fn artifacts_in(threads: usize) -> Vec<Vec<u8>> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| {
        let clips = generate_corpus(32, &ClassMix::balanced(), 21, &CorpusOptions { duration_s: 2.0, ..CorpusOptions::default() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let mut out: Vec<Vec<u8>> = autoctx_core::synth::write_corpus(&clips, dir.path())
            .unwrap()
            .iter()
            .flat_map(|p| [std::fs::read(p).unwrap(), std::fs::read(p.with_extension("json")).unwrap()])
            .collect();
        let mut spec = ChainSpec::default_powertrain();
        spec.segments_per_clip = 3;
        let chain = train_chain(&spec, &clips, 5).unwrap();
        let mut bytes = Vec::new();
        chain.write(&mut bytes).unwrap();
        out.push(bytes);
        out.push(serde_json::to_vec(&predict_clips(&chain, &clips, 3, 6).unwrap()).unwrap());
        let mut grid = GridSpec::new(
            "fuel",
            vec![FeatureConfig { fft_window: 2048, fft_kept_bins: 32, ..FeatureConfig::default() }, FeatureConfig::default()],
            vec![ClassifierSpec::plain(ModelSpec::default_for(EnsembleKind::BaggedForest)), ClassifierSpec::plain(ModelSpec::default_for(EnsembleKind::GradientBoosted))],
        );
        grid.segments_per_clip = 3;
        let report = grid_search(&grid, &clips, 8).unwrap();
        out.push(report.to_csv().into_bytes());
        out.push(report.to_json().into_bytes());
        out
    })
}

fn determinism() -> Outcome {
    let serial = artifacts_in(1);
    let parallel = artifacts_in(4);
    let rerun = artifacts_in(4);
    let differing = serial.iter().zip(&parallel).zip(&rerun).filter(|((a, b), c)| a != b || b != c).count();
    outcome(
        differing == 0 && serial.len() == parallel.len(),
        format!("{differing}/{} artifacts differ across serial, 4-thread and repeated 4-thread runs (corpus, chain, predictions, grid)", serial.len()),
    )
}

fn metrics() -> Outcome {
    let mut sweep_err: f64 = 0.0;
    for t in 0..100u64 {
        let mut r = rng(70_000 + t);
        let n = r.random_range(2..300);
        let scores: Vec<f64> = (0..n).map(|_| (r.random_range(0.0..1.0f64) * 25.0).floor() / 25.0).collect();
        let mut pos: Vec<bool> = (0..n).map(|_| r.random_bool(0.5)).collect();
        pos[0] = true;
        pos[1] = false;
        sweep_err = sweep_err.max((roc_auc(&scores, &pos).unwrap() - mann_whitney_auc(&scores, &pos)).abs());
    }
    let mut null = 0.0;
    for seed in 0..20u64 {
        let mut r = rng(80_000 + seed);
        let x = Array2::from_shape_fn((300, 8), |_| r.random_range(-1.0..1.0));
        let mut y: Vec<String> = (0..300).map(|i| if x[[i, 0]] > 0.0 { "a" } else { "b" }.to_string()).collect();
        y.shuffle(&mut r);
        let spec = ModelSpec::BaggedForest(ForestParams { n_trees: 60, ..ForestParams::default() });
        let m = train(&spec, x.slice(ndarray::s![..200, ..]), &y[..200], seed).unwrap();
        null += evaluate(&m, x.slice(ndarray::s![200.., ..]), &y[200..]).unwrap().roc_auc.unwrap() / 20.0;
    }
    let mut col_err: f64 = 0.0;
    for t in 0..100u64 {
        let mut r = rng(90_000 + t);
        let k = r.random_range(2..6);
        let classes: Vec<String> = (0..k).map(|c| format!("c{c}")).collect();
        let n = r.random_range(k..100);
        let proba = Array2::from_shape_fn((n, k), |_| r.random_range(0.0..1.0));
        let mut labels: Vec<String> = (0..n).map(|_| classes[r.random_range(0..k)].clone()).collect();
        labels[..k].clone_from_slice(&classes);
        let rep = evaluate_proba(&classes, proba.view(), &labels).unwrap();
        for c in 0..k {
            col_err = col_err.max((rep.confusion_normalized.iter().map(|row| row[c]).sum::<f64>() - 1.0).abs());
        }
    }
    outcome(
        sweep_err <= 1e-9 && (null - 0.5).abs() <= 0.1 && col_err <= 1e-9,
        format!("sweep vs rank statistic {sweep_err:.2e} (<=1e-9), permuted-label ROC-AUC {null:.3} (0.5 +/- 0.1), column sums err {col_err:.2e} (<=1e-9)"),
    )
}

fn run(f: impl FnOnce() -> Outcome) -> Outcome {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default();
        outcome(false, format!("panicked: {msg}"))
    })
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome)> = vec![
        (1, "dsp correctness", run(dsp)),
        (2, "context matcher", run(matcher)),
        (3, "registry selection", run(registry)),
        (4, "end-to-end chain", run(end_to_end)),
    ];
    let (voting, ablation) = catch_unwind(voting_and_ablation).unwrap_or_else(|_| (outcome(false, "panicked"), outcome(false, "panicked")));
    results.push((5, "segment voting", voting));
    results.push((6, "chain ablation", ablation));
    results.push((7, "two-family selection", run(two_family)));
    results.push((8, "determinism", run(determinism)));
    results.push((9, "metrics", run(metrics)));
    results.sort_by_key(|r| r.0);
    let mut failed = 0;
    for (n, name, o) in &results {
        println!("criterion {n} ({name}): {} - {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += !o.pass as usize;
    }
    if failed > 0 {
        eprintln!("{failed} criteria failed");
        std::process::exit(1);
    }
}
