//! Parametric idle-engine audio for end-to-end testing.
//!
//! A clip is a firing-rate pulse train: each combustion event adds a smooth
//! low-frequency "thump" plus a click rung through a damped resonance.
//! Diesel clicks are sharper and carry a 2-6 kHz knock burst. Turbocharged
//! engines add a slowly wandering 8-12 kHz whine at -18 dB, and every clip
//! gets a white noise floor. Timbre parameters are drawn per vehicle so that
//! classifiers must generalize across vehicles, not memorize them.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::registry::{Aspiration, Configuration, Fuel};
use crate::seed::{derive, rng};
use crate::signal::{AudioClip, CapturePosition, CANONICAL_RATE};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid engine spec: {0}")]
    InvalidSpec(String),
    #[error("infeasible class mix: {0}")]
    InfeasibleMix(String),
    #[error(transparent)]
    Signal(#[from] crate::signal::SignalError),
}

pub type Result<T> = std::result::Result<T, SynthError>;

pub const CYLINDER_COUNTS: [u8; 4] = [3, 4, 6, 8];
pub const TURBO_LEVEL_DB: f64 = -18.0;
pub const TURBO_BAND_HZ: (f64, f64) = (8_000.0, 12_000.0);
pub const KNOCK_BAND_HZ: (f64, f64) = (2_000.0, 6_000.0);
const KNOCK_MODES: usize = 6;
pub const DEFAULT_DURATION_S: f64 = 10.0;

/// Vehicle families with distinct idle speeds and resonances, standing in for
/// manufacturers with different engine tuning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimbreFamily {
    #[default]
    Standard,
    Alternate,
}

impl TimbreFamily {
    pub fn make(self) -> &'static str {
        match self {
            TimbreFamily::Standard => "standard",
            TimbreFamily::Alternate => "alternate",
        }
    }

    /// Idle speed range in rpm.
    pub fn idle_rpm_range(self) -> (f64, f64) {
        match self {
            // Narrow enough that firing-frequency ranges of 3, 4, 6 and 8
            // cylinders do not overlap.
            TimbreFamily::Standard => (650.0, 850.0),
            TimbreFamily::Alternate => (880.0, 1130.0),
        }
    }

    pub fn resonance_range(self) -> (f64, f64) {
        match self {
            TimbreFamily::Standard => (250.0, 900.0),
            TimbreFamily::Alternate => (500.0, 1200.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineSpec {
    pub fuel: Fuel,
    pub cylinders: u8,
    pub aspiration: Aspiration,
    pub configuration: Configuration,
    pub idle_rpm: f64,
    /// Centre frequency of the damped block resonance.
    pub resonance_hz: f64,
    /// 0 = soft, rounded combustion click; 1 = sharp impulse.
    pub impulse_sharpness: f64,
    /// White noise level relative to the engine's peak.
    pub noise_floor_db: f64,
    /// Relative standard deviation of the firing interval.
    pub jitter: f64,
    #[serde(default)]
    pub family: TimbreFamily,
    pub seed: u64,
}

impl EngineSpec {
    /// A spec with mid-range timbre for the given configuration.
    pub fn new(fuel: Fuel, cylinders: u8, aspiration: Aspiration, idle_rpm: f64, seed: u64) -> Self {
        Self {
            fuel,
            cylinders,
            aspiration,
            configuration: default_configuration(cylinders),
            idle_rpm,
            resonance_hz: 500.0,
            impulse_sharpness: match fuel {
                Fuel::Gasoline => 0.3,
                Fuel::Diesel => 0.8,
            },
            noise_floor_db: -40.0,
            jitter: 0.01,
            family: TimbreFamily::Standard,
            seed,
        }
    }

    /// Timbre drawn from the documented per-vehicle ranges.
    pub fn random(fuel: Fuel, cylinders: u8, aspiration: Aspiration, family: TimbreFamily, seed: u64) -> Self {
        let mut r = rng(derive(seed, 0x7153));
        let (lo, hi) = family.idle_rpm_range();
        let (rlo, rhi) = family.resonance_range();
        let sharp = match fuel {
            Fuel::Gasoline => r.random_range(0.1..0.45),
            Fuel::Diesel => r.random_range(0.6..0.95),
        };
        Self {
            fuel,
            cylinders,
            aspiration,
            configuration: default_configuration(cylinders),
            idle_rpm: r.random_range(lo..hi),
            resonance_hz: r.random_range(rlo..rhi),
            impulse_sharpness: sharp,
            noise_floor_db: r.random_range(-45.0..-32.0),
            jitter: r.random_range(0.003..0.015),
            family,
            seed,
        }
    }

    /// Four-stroke firing frequency, `rpm / 60 * cylinders / 2`.
    pub fn firing_hz(&self) -> f64 {
        self.idle_rpm / 60.0 * self.cylinders as f64 / 2.0
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(SynthError::InvalidSpec(m));
        if !CYLINDER_COUNTS.contains(&self.cylinders) {
            return fail(format!("cylinders {} not in {CYLINDER_COUNTS:?}", self.cylinders));
        }
        if !(500.0..=1200.0).contains(&self.idle_rpm) {
            return fail(format!("idle rpm {} outside [500, 1200]", self.idle_rpm));
        }
        if !(50.0..=5000.0).contains(&self.resonance_hz) {
            return fail(format!("resonance {} Hz outside [50, 5000]", self.resonance_hz));
        }
        if !(0.0..=1.0).contains(&self.impulse_sharpness) {
            return fail(format!("impulse sharpness {} outside [0, 1]", self.impulse_sharpness));
        }
        if !(self.noise_floor_db < 0.0 && self.noise_floor_db >= -120.0) {
            return fail(format!("noise floor {} dB outside [-120, 0)", self.noise_floor_db));
        }
        if !(0.0..0.2).contains(&self.jitter) {
            return fail(format!("jitter {} outside [0, 0.2)", self.jitter));
        }
        Ok(())
    }

    /// Label map attached to synthesized clips.
    pub fn labels(&self) -> BTreeMap<String, String> {
        BTreeMap::from([
            ("fuel".to_string(), self.fuel.to_string()),
            ("aspiration".to_string(), self.aspiration.to_string()),
            ("cylinders".to_string(), self.cylinders.to_string()),
            ("configuration".to_string(), self.configuration.to_string()),
            ("make".to_string(), self.family.make().to_string()),
        ])
    }
}

/// Inline for 3 and 4 cylinders, vee for 6 and 8.
pub fn default_configuration(cylinders: u8) -> Configuration {
    if cylinders <= 4 {
        Configuration::Inline
    } else {
        Configuration::Vee
    }
}

fn normal(r: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(r)
}

fn add_scaled(out: &mut [f64], start: isize, kernel: &[f64], gain: f64) {
    for (j, k) in kernel.iter().enumerate() {
        let i = start + j as isize;
        if i >= 0 && (i as usize) < out.len() {
            out[i as usize] += gain * k;
        }
    }
}

/// Hann pulse of `width` samples convolved with a damped sinusoid.
fn click_kernel(spec: &EngineSpec, fs: f64) -> Vec<f64> {
    let width = ((1.0 - spec.impulse_sharpness) * 0.002 * fs).round().max(1.0) as usize;
    let pulse = crate::features::hann(width + 1);
    let tau = 0.001 + 0.004 * spec.impulse_sharpness;
    let len = (6.0 * tau * fs) as usize;
    let ring: Vec<f64> = (0..len)
        .map(|j| {
            let t = j as f64 / fs;
            (-t / tau).exp() * (2.0 * PI * spec.resonance_hz * t).sin()
        })
        .collect();
    let mut k = vec![0.0; pulse.len() + ring.len() - 1];
    for (a, p) in pulse.iter().enumerate() {
        for (b, r) in ring.iter().enumerate() {
            k[a + b] += p * r;
        }
    }
    let peak = k.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    k.iter_mut().for_each(|v| *v /= peak);
    k
}

/// Knock burst: a few per-vehicle block modes inside the knock band, each a
/// decaying sinusoid with a random phase per event.
fn knock_burst(modes: &[f64], r: &mut ChaCha8Rng, fs: f64) -> Vec<f64> {
    const TAU: f64 = 0.003;
    let len = (6.0 * TAU * fs) as usize;
    let phases: Vec<f64> = modes.iter().map(|_| r.random_range(0.0..2.0 * PI)).collect();
    (0..len)
        .map(|j| {
            let t = j as f64 / fs;
            let env = (-t / TAU).exp();
            env * modes.iter().zip(&phases).map(|(f, ph)| (2.0 * PI * f * t + ph).sin()).sum::<f64>() * 0.6
        })
        .collect()
}

/// Renders `duration_s` seconds of idle audio for `spec`, peak-normalized and
/// labeled. Identical specs give bit-identical clips.
pub fn synthesize(spec: &EngineSpec, duration_s: f64) -> Result<AudioClip> {
    spec.validate()?;
    if !(duration_s >= 1.0 && duration_s.is_finite()) {
        return Err(SynthError::InvalidSpec(format!("duration {duration_s} s must be at least 1 s")));
    }
    let fs = CANONICAL_RATE as f64;
    let n = (duration_s * fs).round() as usize;
    let mut r = rng(spec.seed);
    let mut x = vec![0.0; n];

    let period = 1.0 / spec.firing_hz();
    let thump = crate::features::hann(((0.5 * period * fs).round() as usize).max(2));
    let click = click_kernel(spec, fs);
    let (thump_gain, click_gain, knock_gain) = match spec.fuel {
        Fuel::Gasoline => (0.8, 0.6, 0.0),
        Fuel::Diesel => (0.7, 0.9, 0.9),
    };

    // One mode per equal-width stratum of the knock band.
    let stratum = (KNOCK_BAND_HZ.1 - KNOCK_BAND_HZ.0) / KNOCK_MODES as f64;
    let modes: Vec<f64> = (0..KNOCK_MODES)
        .map(|i| KNOCK_BAND_HZ.0 + stratum * (i as f64 + r.random_range(0.2..0.8)))
        .collect();
    let mut t = r.random_range(0.0..period) - period;
    while t < duration_s {
        let amp = 1.0 + 0.05 * normal(&mut r);
        let start = (t * fs).round() as isize;
        add_scaled(&mut x, start - thump.len() as isize / 2, &thump, thump_gain * amp);
        add_scaled(&mut x, start, &click, click_gain * amp);
        if knock_gain > 0.0 {
            let burst = knock_burst(&modes, &mut r, fs);
            add_scaled(&mut x, start, &burst, knock_gain * amp);
        }
        t += period * (1.0 + spec.jitter * normal(&mut r));
    }
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    x.iter_mut().for_each(|v| *v /= peak);

    if spec.aspiration == Aspiration::Turbo {
        let amp = 10f64.powf(TURBO_LEVEL_DB / 20.0);
        let centre = r.random_range(9_000.0..11_000.0);
        let depth = r.random_range(200.0..800.0);
        let rate = r.random_range(0.1..0.5);
        let phase0 = r.random_range(0.0..2.0 * PI);
        let mut phase = r.random_range(0.0..2.0 * PI);
        for (i, v) in x.iter_mut().enumerate() {
            let t = i as f64 / fs;
            let f = centre + depth * (2.0 * PI * rate * t + phase0).sin();
            phase += 2.0 * PI * f / fs;
            *v += amp * phase.sin();
        }
    }

    let sigma = 10f64.powf(spec.noise_floor_db / 20.0);
    for v in x.iter_mut() {
        *v += sigma * normal(&mut r);
    }

    let clip = AudioClip::normalized(x, CANONICAL_RATE, format!("synth-{:016x}", spec.seed))?;
    Ok(clip.with_labels(spec.labels()).with_capture_position(CapturePosition::Underhood))
}

/// One cell of a class mix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixCell {
    pub fuel: Fuel,
    pub aspiration: Aspiration,
    pub cylinders: u8,
    pub weight: f64,
}

/// Relative frequency of each (fuel, aspiration, cylinders) combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMix {
    pub cells: Vec<MixCell>,
}

impl ClassMix {
    /// Every fuel x aspiration x cylinder combination equally likely.
    pub fn balanced() -> Self {
        let mut cells = Vec::new();
        for fuel in Fuel::ALL {
            for aspiration in Aspiration::ALL {
                for cylinders in CYLINDER_COUNTS {
                    cells.push(MixCell { fuel: *fuel, aspiration: *aspiration, cylinders, weight: 1.0 });
                }
            }
        }
        Self { cells }
    }

    /// Fleet-like imbalance: mostly 4-cylinder, few 3- and 8-cylinder engines.
    pub fn fleet() -> Self {
        let cyl_weight = |c: u8| match c {
            3 => 0.08,
            4 => 0.5,
            6 => 0.27,
            _ => 0.15,
        };
        let mut m = Self::balanced();
        for c in &mut m.cells {
            // Aspiration stays evenly split.
            let fuel_w = if c.fuel == Fuel::Gasoline { 0.65 } else { 0.35 };
            c.weight = cyl_weight(c.cylinders) * fuel_w;
        }
        m
    }

    /// Largest-remainder apportionment of `n` vehicles over the cells.
    pub fn apportion(&self, n: usize) -> Result<Vec<usize>> {
        let total: f64 = self.cells.iter().map(|c| c.weight).sum();
        if self.cells.is_empty() || !(total > 0.0) || self.cells.iter().any(|c| !(c.weight >= 0.0)) {
            return Err(SynthError::InfeasibleMix("weights must be nonnegative with a positive sum".into()));
        }
        let quotas: Vec<f64> = self.cells.iter().map(|c| c.weight / total * n as f64).collect();
        let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
        let mut left = n - counts.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..quotas.len()).collect();
        order.sort_by(|&a, &b| (quotas[b] - quotas[b].floor()).total_cmp(&(quotas[a] - quotas[a].floor())).then(a.cmp(&b)));
        for &i in &order {
            if left == 0 {
                break;
            }
            counts[i] += 1;
            left -= 1;
        }
        Ok(counts)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusOptions {
    pub duration_s: f64,
    pub family: TimbreFamily,
    /// Prefix of the per-vehicle source ids.
    pub id_prefix: String,
}

impl Default for CorpusOptions {
    fn default() -> Self {
        Self { duration_s: DEFAULT_DURATION_S, family: TimbreFamily::Standard, id_prefix: "veh".into() }
    }
}

/// Engine specs for a corpus, one per vehicle, before rendering.
pub fn corpus_specs(n_vehicles: usize, mix: &ClassMix, seed: u64, family: TimbreFamily) -> Result<Vec<EngineSpec>> {
    let counts = mix.apportion(n_vehicles)?;
    let mut per_class: BTreeMap<(&str, String), usize> = BTreeMap::new();
    for (cell, &c) in mix.cells.iter().zip(&counts) {
        if cell.weight > 0.0 {
            for (attr, value) in [("fuel", cell.fuel.to_string()), ("aspiration", cell.aspiration.to_string()), ("cylinders", cell.cylinders.to_string())] {
                *per_class.entry((attr, value)).or_default() += c;
            }
        }
    }
    if let Some(((attr, value), c)) = per_class.iter().find(|(_, c)| **c < 2) {
        return Err(SynthError::InfeasibleMix(format!("{attr}={value} gets {c} vehicles; at least 2 are needed to split")));
    }
    let mut specs = Vec::with_capacity(n_vehicles);
    for (cell, &c) in mix.cells.iter().zip(&counts) {
        for _ in 0..c {
            let v = specs.len() as u64;
            specs.push(EngineSpec::random(cell.fuel, cell.cylinders, cell.aspiration, family, derive(seed, v)));
        }
    }
    Ok(specs)
}

/// Renders a labeled corpus with one clip per vehicle and source ids
/// `<prefix>-0000`, `<prefix>-0001`, ...
pub fn generate_corpus(n_vehicles: usize, mix: &ClassMix, seed: u64, opts: &CorpusOptions) -> Result<Vec<AudioClip>> {
    let specs = corpus_specs(n_vehicles, mix, seed, opts.family)?;
    specs
        .par_iter()
        .enumerate()
        .map(|(i, spec)| {
            let clip = synthesize(spec, opts.duration_s)?;
            let id = format!("{}-{i:04}", opts.id_prefix);
            Ok(AudioClip::new(clip.samples().to_vec(), clip.sample_rate(), id)?
                .with_labels(clip.labels.clone())
                .with_capture_position(clip.capture_position))
        })
        .collect()
}

/// Writes each clip as `<source_id>.wav` plus the JSON sidecar read by ingestion.
pub fn write_corpus(clips: &[AudioClip], dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(crate::signal::SignalError::from)?;
    clips.iter().map(|c| Ok(crate::signal::write_clip(c, dir, c.source_id())?)).collect()
}
