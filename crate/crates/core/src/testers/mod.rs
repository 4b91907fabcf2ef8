//! Empirical testers for the echo state property, fading memory, the four
//! forgetting properties, uniform attraction and steady states, plus the
//! echo-functional cross-checks.
//!
//! `limsup d_n = 0` is realised as: the maximum of `d_n` over the last
//! `tail_window` evaluated horizons is below `tol`. Levels are nested by
//! construction:
//!
//! * pointwise: every sampled window, pairs from the fixed state pool;
//! * state-uniform: every sampled window, sup over the extended pool
//!   (fixed pool plus horizon-adaptive hard states);
//! * uniform: sup over sampled and adversarial extreme-value windows.
//!
//! Verdicts are statistical. A refutation carries a replayable witness; a
//! support is evidence over the recorded sample counts.

mod engine;
mod fmp;
mod lemma4;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sequence::WindowLiteral;
use crate::systems::{InputProcess, SystemSpec};

pub use engine::Session;
pub use lemma4::LemmaItem;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Property {
    #[serde(rename = "ESP")]
    Esp,
    #[serde(rename = "FMP")]
    Fmp,
    #[serde(rename = "SFP")]
    Sfp,
    #[serde(rename = "IFP")]
    Ifp,
    #[serde(rename = "sSFP")]
    Ssfp,
    #[serde(rename = "sIFP")]
    Sifp,
    #[serde(rename = "UAP")]
    Uap,
    #[serde(rename = "STEADY")]
    Steady,
}

impl Property {
    pub const ALL: [Property; 8] = [
        Property::Esp,
        Property::Fmp,
        Property::Sfp,
        Property::Ifp,
        Property::Ssfp,
        Property::Sifp,
        Property::Uap,
        Property::Steady,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Property::Esp => "ESP",
            Property::Fmp => "FMP",
            Property::Sfp => "SFP",
            Property::Ifp => "IFP",
            Property::Ssfp => "sSFP",
            Property::Sifp => "sIFP",
            Property::Uap => "UAP",
            Property::Steady => "STEADY",
        }
    }

    /// Forgetting properties carry a uniformity level; the others are
    /// supported (reported as `uniform`) or refuted.
    pub fn graded(self) -> bool {
        matches!(
            self,
            Property::Sfp | Property::Ifp | Property::Ssfp | Property::Sifp | Property::Steady
        )
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Property {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Property::ALL
            .into_iter()
            .find(|p| p.label().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown property `{s}`")))
    }
}

/// Forgetting variants: state or input forgetting, forward or pullback.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Sfp,
    Ifp,
    Ssfp,
    Sifp,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Sfp, Variant::Ifp, Variant::Ssfp, Variant::Sifp];

    pub fn property(self) -> Property {
        match self {
            Variant::Sfp => Property::Sfp,
            Variant::Ifp => Property::Ifp,
            Variant::Ssfp => Property::Ssfp,
            Variant::Sifp => Property::Sifp,
        }
    }

    /// Pullback flow `psi_n(x, T^n u)` instead of `psi_n(x, u)`.
    pub fn shifted(self) -> bool {
        matches!(self, Variant::Ssfp | Variant::Sifp)
    }

    /// Pairs drawn from approximate reachable states.
    pub fn reachable(self) -> bool {
        matches!(self, Variant::Ifp | Variant::Sifp)
    }

    fn slot(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Refuted,
    Pointwise,
    StateUniform,
    Uniform,
    NotApplicable,
}

impl Level {
    /// Position in `refuted < pointwise < state_uniform < uniform`.
    pub fn rank(self) -> Option<u8> {
        match self {
            Level::Refuted => Some(0),
            Level::Pointwise => Some(1),
            Level::StateUniform => Some(2),
            Level::Uniform => Some(3),
            Level::NotApplicable => None,
        }
    }

    /// True when both levels are ranked and `self` reaches `other`.
    pub fn reaches(self, other: Level) -> bool {
        matches!((self.rank(), other.rank()), (Some(a), Some(b)) if a >= b)
    }

    pub fn label(self) -> &'static str {
        match self {
            Level::Refuted => "refuted",
            Level::Pointwise => "pointwise",
            Level::StateUniform => "state_uniform",
            Level::Uniform => "uniform",
            Level::NotApplicable => "not_applicable",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Level::Refuted,
            Level::Pointwise,
            Level::StateUniform,
            Level::Uniform,
            Level::NotApplicable,
        ]
        .into_iter()
        .find(|l| l.label() == s)
        .ok_or_else(|| Error::InvalidConfig(format!("unknown level `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TestConfig {
    pub n_max: usize,
    pub tail_window: usize,
    pub tol: f64,
    pub state_samples: usize,
    pub input_samples: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Past horizon of generated windows; `None` means `max(256, 2 n_max)`.
    pub past_horizon: Option<usize>,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            n_max: 200,
            tail_window: 20,
            tol: 1e-6,
            state_samples: 64,
            input_samples: 32,
            burn_in: 128,
            seed: 0,
            past_horizon: None,
        }
    }
}

impl TestConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn past(&self) -> usize {
        self.past_horizon.unwrap_or(256.max(2 * self.n_max))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.n_max == 0 {
            return bad("n_max must be positive");
        }
        if self.tail_window == 0 || self.tail_window > self.n_max {
            return bad("tail_window must lie in 1..=n_max");
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return bad("tol must be positive");
        }
        if self.state_samples == 0 || self.input_samples == 0 {
            return bad("sample counts must be positive");
        }
        if self.burn_in == 0 {
            return bad("burn_in must be positive");
        }
        if self.past() < self.n_max {
            return bad("past horizon must be at least n_max");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Curve {
    pub name: String,
    pub values: Vec<f64>,
}

/// Numeric evidence behind a verdict. Maps are ordered so serialisation is
/// stable.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Evidence {
    pub n_values: Vec<usize>,
    pub curves: Vec<Curve>,
    pub values: BTreeMap<String, f64>,
    pub counts: BTreeMap<String, usize>,
    pub flags: BTreeMap<String, bool>,
}

impl Evidence {
    pub fn curve(&self, name: &str) -> Option<&[f64]> {
        self.curves
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.values.as_slice())
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }

    pub fn flag(&self, name: &str) -> Option<bool> {
        self.flags.get(name).copied()
    }

    fn set_curve(&mut self, name: &str, values: Vec<f64>) {
        self.curves.push(Curve {
            name: name.to_string(),
            values,
        });
    }

    fn set_value(&mut self, name: &str, v: f64) {
        self.values.insert(name.to_string(), v);
    }

    fn set_count(&mut self, name: &str, v: usize) {
        self.counts.insert(name.to_string(), v);
    }

    fn set_flag(&mut self, name: &str, v: bool) {
        self.flags.insert(name.to_string(), v);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LabeledWindow {
    pub label: String,
    pub window: WindowLiteral,
}

/// Replay data for a refutation: states, windows and the horizon at which
/// the offending distance was observed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Witness {
    pub description: String,
    pub seed: u64,
    pub n: usize,
    pub value: f64,
    /// States as points of the state set. Circle states are shown in
    /// `[0, 1]`: `1 - 2^-k` rounds to `1` once `k > 53`.
    pub states: Vec<Vec<f64>>,
    /// Internal coordinates (circle: signed chart), exact for replay.
    pub raw_states: Vec<Vec<f64>>,
    pub windows: Vec<LabeledWindow>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropertyVerdict {
    pub property: Property,
    pub level: Level,
    pub statistical: bool,
    pub evidence: Evidence,
    pub witness: Option<Witness>,
}

impl PropertyVerdict {
    fn new(property: Property, level: Level, evidence: Evidence, witness: Option<Witness>) -> Self {
        Self {
            property,
            level,
            statistical: true,
            evidence,
            witness,
        }
    }

    /// Supported at its reported level (anything but refuted / not applicable).
    pub fn supported(&self) -> bool {
        self.level.reaches(Level::Pointwise)
    }
}

pub fn test_forgetting<S: Scalar>(
    sys: &SystemSpec<S>,
    variant: Variant,
    proc: &InputProcess<S>,
    cfg: &TestConfig,
) -> Result<PropertyVerdict> {
    Session::new(sys, proc, *cfg)?.forgetting(variant)
}

pub fn test_esp<S: Scalar>(
    sys: &SystemSpec<S>,
    proc: &InputProcess<S>,
    cfg: &TestConfig,
) -> Result<PropertyVerdict> {
    Session::new(sys, proc, *cfg)?.esp().cloned()
}

pub fn test_fmp<S: Scalar>(
    sys: &SystemSpec<S>,
    proc: &InputProcess<S>,
    cfg: &TestConfig,
) -> Result<PropertyVerdict> {
    Session::new(sys, proc, *cfg)?.fmp()
}

pub fn test_uniform_attracting<S: Scalar>(
    sys: &SystemSpec<S>,
    proc: &InputProcess<S>,
    cfg: &TestConfig,
) -> Result<PropertyVerdict> {
    Session::new(sys, proc, *cfg)?.uniform_attracting()
}

pub fn test_steady_state<S: Scalar>(
    sys: &SystemSpec<S>,
    proc: &InputProcess<S>,
    cfg: &TestConfig,
) -> Result<PropertyVerdict> {
    Session::new(sys, proc, *cfg)?.steady_state()
}

pub fn crosscheck_lemma4<S: Scalar>(
    sys: &SystemSpec<S>,
    proc: &InputProcess<S>,
    cfg: &TestConfig,
    item: LemmaItem,
) -> Result<PropertyVerdict> {
    Session::new(sys, proc, *cfg)?.crosscheck(item)
}
