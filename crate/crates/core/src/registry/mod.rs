//! Vehicle-descriptor specificity lattice and most-specific model selection.
//!
//! A [`VehicleDescriptor`] fixes some subset of seven attributes; the rest are
//! wildcards. Descriptor `a` generalizes `b` when every attribute fixed in `a`
//! has the same value in `b`. Model selection picks the most specific record
//! that generalizes the query and has enough training vehicles, falling back
//! to the universal root.

mod store;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::chain::ChainPrediction;
use crate::context::ContextVector;

pub use store::RegistryStore;

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("no {kind:?} model applies to {query}")]
    NoApplicableModel { kind: String, query: String },
    #[error("invalid model record {id:?}: {reason}")]
    InvalidRecord { id: String, reason: String },
    #[error("duplicate record id {0:?}")]
    DuplicateId(String),
    #[error("cannot parse {what} from {value:?}")]
    Parse { what: &'static str, value: String },
    #[error("model blob {0} not found")]
    MissingBlob(String),
    #[error("registry i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("registry index: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, RegistryError>;

macro_rules! label_enum {
    ($(#[$m:meta])* $name:ident, $what:literal { $($var:ident => $text:literal $(| $alias:literal)*),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum $name { $($var),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$var),+];

            pub fn as_str(self) -> &'static str {
                match self { $($name::$var => $text),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = RegistryError;
            fn from_str(s: &str) -> Result<Self> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($text $(| $alias)* => Ok($name::$var),)+
                    _ => Err(RegistryError::Parse { what: $what, value: s.to_string() }),
                }
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.serialize_str(self.as_str())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

label_enum!(Fuel, "fuel" { Gasoline => "gasoline" | "petrol", Diesel => "diesel" });
label_enum!(Configuration, "configuration" { Inline => "inline" | "i", Vee => "vee" | "v", Flat => "flat" | "boxer" });
label_enum!(Aspiration, "aspiration" { Natural => "natural" | "na", Turbo => "turbo" | "turbocharged" });

/// Engine displacement in canonical 0.1 L steps. Values within 0.05 L round
/// to the same step, which keeps descriptor equality transitive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Displacement(u16);

impl Displacement {
    pub fn from_liters(l: f64) -> Result<Self> {
        if !(l.is_finite() && l > 0.0 && l < 100.0) {
            return Err(RegistryError::Parse { what: "displacement", value: l.to_string() });
        }
        Ok(Self((l * 10.0).round() as u16))
    }

    pub fn liters(self) -> f64 {
        self.0 as f64 / 10.0
    }
}

impl fmt::Display for Displacement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.1}", self.liters())
    }
}

impl Serialize for Displacement {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.liters())
    }
}

impl<'de> Deserialize<'de> for Displacement {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Displacement::from_liters(f64::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

/// A node of the specificity lattice; `None` is a wildcard.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleDescriptor {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fuel: Option<Fuel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub configuration: Option<Configuration>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cylinders: Option<u8>,
    #[serde(rename = "displacement_l", skip_serializing_if = "Option::is_none")]
    pub displacement: Option<Displacement>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aspiration: Option<Aspiration>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub make: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instance: Option<String>,
}

fn fits<T: PartialEq>(general: &Option<T>, specific: &Option<T>) -> bool {
    general.as_ref().is_none_or(|g| specific.as_ref() == Some(g))
}

fn common<T: PartialEq + Clone>(a: &Option<T>, b: &Option<T>) -> Option<T> {
    if a == b {
        a.clone()
    } else {
        None
    }
}

impl VehicleDescriptor {
    /// The all-wildcard descriptor.
    pub fn root() -> Self {
        Self::default()
    }

    pub fn is_root(&self) -> bool {
        self.specificity() == 0
    }

    /// Number of fixed attributes, 0 to 7.
    pub fn specificity(&self) -> usize {
        [
            self.fuel.is_some(),
            self.configuration.is_some(),
            self.cylinders.is_some(),
            self.displacement.is_some(),
            self.aspiration.is_some(),
            self.make.is_some(),
            self.instance.is_some(),
        ]
        .iter()
        .filter(|b| **b)
        .count()
    }

    /// True iff `self` is an ancestor-or-equal of `other`.
    pub fn generalizes(&self, other: &VehicleDescriptor) -> bool {
        fits(&self.fuel, &other.fuel)
            && fits(&self.configuration, &other.configuration)
            && fits(&self.cylinders, &other.cylinders)
            && fits(&self.displacement, &other.displacement)
            && fits(&self.aspiration, &other.aspiration)
            && fits(&self.make, &other.make)
            && fits(&self.instance, &other.instance)
    }

    /// Most specific descriptor generalizing both.
    pub fn meet(&self, other: &VehicleDescriptor) -> VehicleDescriptor {
        VehicleDescriptor {
            fuel: common(&self.fuel, &other.fuel),
            configuration: common(&self.configuration, &other.configuration),
            cylinders: common(&self.cylinders, &other.cylinders),
            displacement: common(&self.displacement, &other.displacement),
            aspiration: common(&self.aspiration, &other.aspiration),
            make: common(&self.make, &other.make),
            instance: common(&self.instance, &other.instance),
        }
    }

    /// True when no attribute is fixed to different values in the two.
    pub fn compatible(&self, other: &VehicleDescriptor) -> bool {
        fn ok<T: PartialEq>(a: &Option<T>, b: &Option<T>) -> bool {
            match (a, b) {
                (Some(x), Some(y)) => x == y,
                _ => true,
            }
        }
        ok(&self.fuel, &other.fuel)
            && ok(&self.configuration, &other.configuration)
            && ok(&self.cylinders, &other.cylinders)
            && ok(&self.displacement, &other.displacement)
            && ok(&self.aspiration, &other.aspiration)
            && ok(&self.make, &other.make)
            && ok(&self.instance, &other.instance)
    }

    /// Sets the attribute named `name` from a label value. Unknown names are
    /// ignored and reported as `Ok(false)`.
    pub fn set_attribute(&mut self, name: &str, value: &str) -> Result<bool> {
        match name {
            "fuel" => self.fuel = Some(value.parse()?),
            "configuration" => self.configuration = Some(value.parse()?),
            "cylinders" => {
                self.cylinders = Some(value.trim().parse().map_err(|_| RegistryError::Parse { what: "cylinders", value: value.into() })?)
            }
            "displacement" | "displacement_l" => {
                let l: f64 = value.trim().parse().map_err(|_| RegistryError::Parse { what: "displacement", value: value.into() })?;
                self.displacement = Some(Displacement::from_liters(l)?);
            }
            "aspiration" => self.aspiration = Some(value.parse()?),
            "make" => self.make = Some(value.to_string()),
            "instance" => self.instance = Some(value.to_string()),
            _ => return Ok(false),
        }
        Ok(true)
    }
}

impl fmt::Display for VehicleDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn part<T: fmt::Display>(v: &Option<T>) -> String {
            v.as_ref().map_or_else(|| "*".to_string(), |x| x.to_string())
        }
        write!(
            f,
            "({}, {}, {}, {}, {}, {}, {})",
            part(&self.fuel),
            part(&self.configuration),
            part(&self.cylinders),
            part(&self.displacement),
            part(&self.aspiration),
            part(&self.make),
            part(&self.instance)
        )
    }
}

impl FromStr for VehicleDescriptor {
    type Err = RegistryError;

    /// Parses the tuple form printed by `Display`, e.g.
    /// `(gasoline, *, 4, 2.0, turbo, *, *)`.
    fn from_str(s: &str) -> Result<Self> {
        let inner = s.trim().trim_start_matches('(').trim_end_matches(')');
        let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
        if parts.len() != 7 {
            return Err(RegistryError::Parse { what: "descriptor", value: s.to_string() });
        }
        let names = ["fuel", "configuration", "cylinders", "displacement", "aspiration", "make", "instance"];
        let mut d = VehicleDescriptor::root();
        for (name, value) in names.iter().zip(parts) {
            if value != "*" && !value.is_empty() {
                d.set_attribute(name, value)?;
            }
        }
        Ok(d)
    }
}

/// A trained diagnostic model known to the registry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub id: String,
    pub descriptor: VehicleDescriptor,
    pub diagnostic_kind: String,
    /// Distinct training vehicles.
    pub n_train: u32,
    /// Content address of the stored model body, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blob: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub required_context: Option<ContextVector>,
}

impl ModelRecord {
    pub fn new(id: impl Into<String>, descriptor: VehicleDescriptor, kind: impl Into<String>, n_train: u32) -> Self {
        Self { id: id.into(), descriptor, diagnostic_kind: kind.into(), n_train, blob: None, required_context: None }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |reason: &str| Err(RegistryError::InvalidRecord { id: self.id.clone(), reason: reason.into() });
        if self.id.is_empty() {
            return fail("empty id");
        }
        if self.diagnostic_kind.is_empty() {
            return fail("empty diagnostic kind");
        }
        if self.n_train == 0 {
            return fail("n_train must be at least 1");
        }
        Ok(())
    }
}

/// Default support threshold for model selection.
pub const DEFAULT_MIN_N: u32 = 3;

/// Why a record was or was not chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: String,
    pub specificity: usize,
    pub n_train: u32,
    pub generalizes_query: bool,
    pub eligible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Selection<'a> {
    pub record: &'a ModelRecord,
    /// True when no eligible record existed and the root model was used.
    pub fell_back_to_root: bool,
    pub candidates: Vec<Candidate>,
}

/// Selection order among eligible records: higher specificity, then more
/// training vehicles, then lexicographically smaller id.
fn better(a: &ModelRecord, b: &ModelRecord) -> bool {
    (a.descriptor.specificity(), a.n_train, std::cmp::Reverse(&a.id)) > (b.descriptor.specificity(), b.n_train, std::cmp::Reverse(&b.id))
}

/// Most specific record of `kind` that generalizes `query` and has at least
/// `min_n` training vehicles; otherwise a universal-root record of `kind`.
pub fn select_model<'a>(query: &VehicleDescriptor, kind: &str, min_n: u32, records: &'a [ModelRecord]) -> Result<Selection<'a>> {
    let mut best: Option<&ModelRecord> = None;
    let mut best_root: Option<&ModelRecord> = None;
    let mut candidates = Vec::new();
    for r in records.iter().filter(|r| r.diagnostic_kind == kind) {
        let gen = r.descriptor.generalizes(query);
        let eligible = gen && r.n_train >= min_n;
        candidates.push(Candidate { id: r.id.clone(), specificity: r.descriptor.specificity(), n_train: r.n_train, generalizes_query: gen, eligible });
        if eligible && best.is_none_or(|b| better(r, b)) {
            best = Some(r);
        }
        if r.descriptor.is_root() && best_root.is_none_or(|b| better(r, b)) {
            best_root = Some(r);
        }
    }
    match (best, best_root) {
        (Some(record), _) => Ok(Selection { record, fell_back_to_root: false, candidates }),
        (None, Some(record)) => Ok(Selection { record, fell_back_to_root: true, candidates }),
        (None, None) => Err(RegistryError::NoApplicableModel { kind: kind.to_string(), query: query.to_string() }),
    }
}

/// Stage labels that map onto descriptor attributes.
const ATTRIBUTE_STAGES: [&str; 5] = ["fuel", "configuration", "cylinders", "aspiration", "make"];

/// Descriptor implied by a chain prediction: each stage whose voted confidence
/// reaches `floor` fixes its attribute. A non-empty `shortlist` of known
/// vehicles overrides the audio: one entry is returned as is; several are
/// narrowed to those compatible with the confident attributes and reduced to
/// their common generalization.
pub fn identify(prediction: &ChainPrediction, floor: f64, shortlist: &[VehicleDescriptor]) -> VehicleDescriptor {
    if shortlist.len() == 1 {
        return shortlist[0].clone();
    }
    let mut d = VehicleDescriptor::root();
    for stage in &prediction.stages {
        if stage.confidence >= floor && ATTRIBUTE_STAGES.contains(&stage.label.as_str()) {
            // Unparseable class names leave the attribute as a wildcard.
            let _ = d.set_attribute(&stage.label, &stage.class);
        }
    }
    if shortlist.is_empty() {
        return d;
    }
    let consistent: Vec<&VehicleDescriptor> = shortlist.iter().filter(|s| s.compatible(&d)).collect();
    let Some((first, rest)) = consistent.split_first() else {
        return d;
    };
    let mut m = rest.iter().fold((*first).clone(), |acc, s| acc.meet(s));
    // Keep confident attributes the shortlist leaves open.
    let fill = m.clone();
    m.fuel = fill.fuel.or(d.fuel);
    m.configuration = fill.configuration.or(d.configuration);
    m.cylinders = fill.cylinders.or(d.cylinders);
    m.aspiration = fill.aspiration.or(d.aspiration);
    m.make = fill.make.or(d.make);
    m
}

/// Immutable registry snapshot.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Registry {
    pub version: u64,
    pub records: Vec<ModelRecord>,
}

impl Registry {
    pub fn new(records: Vec<ModelRecord>) -> Result<Self> {
        let r = Self { version: 0, records };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        for r in &self.records {
            r.validate()?;
            if !ids.insert(r.id.as_str()) {
                return Err(RegistryError::DuplicateId(r.id.clone()));
            }
        }
        Ok(())
    }

    /// New snapshot with `record` added.
    pub fn with_record(&self, record: ModelRecord) -> Result<Self> {
        record.validate()?;
        if self.records.iter().any(|r| r.id == record.id) {
            return Err(RegistryError::DuplicateId(record.id));
        }
        let mut records = self.records.clone();
        records.push(record);
        records.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(Self { version: self.version + 1, records })
    }

    pub fn select(&self, query: &VehicleDescriptor, kind: &str, min_n: u32) -> Result<Selection<'_>> {
        select_model(query, kind, min_n, &self.records)
    }

    pub fn get(&self, id: &str) -> Option<&ModelRecord> {
        self.records.iter().find(|r| r.id == id)
    }
}
