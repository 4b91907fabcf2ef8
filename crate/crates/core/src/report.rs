//! Analysis runs and their JSON reports.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::diagram::{
    check_diagram, ConditionFlags, ImplicationDiagram, Violation, WitnessedNonImplication,
};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sequence::product_tail_bound;
use crate::systems::{InputProcess, SystemSpec};
use crate::testers::{LemmaItem, Level, Property, PropertyVerdict, Session, TestConfig, Variant};

pub const SCHEMA_VERSION: &str = "v1";

/// What an analysis run computes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Selection {
    pub properties: Vec<Property>,
    pub crosschecks: Vec<LemmaItem>,
}

impl Default for Selection {
    fn default() -> Self {
        Self {
            properties: Property::ALL.to_vec(),
            crosschecks: LemmaItem::ALL.to_vec(),
        }
    }
}

impl Selection {
    pub fn none() -> Self {
        Self {
            properties: Vec::new(),
            crosschecks: Vec::new(),
        }
    }

    /// Parses a comma-separated list of property names, `lemma4` for all
    /// cross-checks, `lemma4:<item>` for one, or `all`. An empty list selects
    /// nothing.
    pub fn parse(text: &str) -> Result<Self> {
        let mut sel = Self::none();
        for tok in text.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let lower = tok.to_ascii_lowercase();
            if lower == "all" {
                return Ok(Self::default());
            }
            if lower == "lemma4" {
                sel.crosschecks = LemmaItem::ALL.to_vec();
            } else if let Some(item) = lower.strip_prefix("lemma4:") {
                let item: LemmaItem = item.parse()?;
                if !sel.crosschecks.contains(&item) {
                    sel.crosschecks.push(item);
                }
            } else {
                let p: Property = tok.parse()?;
                if !sel.properties.contains(&p) {
                    sel.properties.push(p);
                }
            }
        }
        // canonical order keeps reports independent of flag spelling
        sel.properties.sort_by_key(|p| Property::ALL.iter().position(|q| q == p));
        sel.crosschecks.sort_by_key(|i| LemmaItem::ALL.iter().position(|j| j == i));
        Ok(sel)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConfigEcho {
    pub n_max: usize,
    pub tail_window: usize,
    pub tol: f64,
    pub state_samples: usize,
    pub input_samples: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub past_horizon: usize,
    pub sampled_windows: usize,
    pub adversarial_windows: usize,
    pub scalar: &'static str,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TruncationBounds {
    /// Neglected tail of the product metric at the run's past horizon.
    pub product_metric_tail: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Crosscheck {
    pub item: LemmaItem,
    pub property: Property,
    pub level: Level,
    pub direct_level: Level,
    /// Direct level projected onto the levels the item can express.
    pub projected_direct_level: Level,
    pub agrees: bool,
    pub discrepancy: Option<f64>,
    pub verdict: PropertyVerdict,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub schema: &'static str,
    pub version: &'static str,
    pub system: String,
    pub process: String,
    pub config: ConfigEcho,
    pub flags: ConditionFlags,
    pub truncation: TruncationBounds,
    pub verdicts: Vec<PropertyVerdict>,
    pub crosschecks: Vec<Crosscheck>,
    pub violations: Vec<Violation>,
    pub non_implications: Vec<WitnessedNonImplication>,
    /// True iff `violations` is empty.
    pub consistent: bool,
}

impl AnalysisReport {
    pub fn verdict(&self, property: Property) -> Option<&PropertyVerdict> {
        self.verdicts.iter().find(|v| v.property == property)
    }

    /// Human-readable summary, one line per verdict.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "system {} under {} (seed {}, n_max {}, tol {:e}, past horizon {})",
            self.system,
            self.process,
            self.config.seed,
            self.config.n_max,
            self.config.tol,
            self.config.past_horizon
        );
        for v in &self.verdicts {
            let detail = v
                .witness
                .as_ref()
                .map(|w| format!("  [witness at n = {}, value {:.3e}]", w.n, w.value))
                .unwrap_or_default();
            let _ = writeln!(s, "  {:<7} {}{detail}", v.property.label(), v.level);
        }
        for c in &self.crosschecks {
            let _ = writeln!(
                s,
                "  lemma ({}) vs {}: {} / {}{}",
                c.item,
                c.property,
                c.level,
                c.projected_direct_level,
                if c.agrees { "" } else { "  DISAGREES" }
            );
        }
        for n in &self.non_implications {
            let _ = writeln!(s, "  non-implication witnessed: {}", n.relation);
        }
        if self.consistent {
            let _ = writeln!(s, "diagram: consistent");
        } else {
            for v in &self.violations {
                let _ = writeln!(s, "  VIOLATION {}: {}", v.edge, v.relation);
            }
            let _ = writeln!(s, "diagram: {} violation(s)", self.violations.len());
        }
        s
    }
}

fn scalar_name<S: Scalar>() -> &'static str {
    if std::mem::size_of::<S>() == 4 {
        "f32"
    } else {
        "f64"
    }
}

/// Runs the selected testers and checks the diagram against their verdicts.
pub fn analyze<S: Scalar>(
    sys: &SystemSpec<S>,
    proc: &InputProcess<S>,
    cfg: &TestConfig,
    selection: &Selection,
    diagram: &ImplicationDiagram,
) -> Result<AnalysisReport> {
    let session = Session::new(sys, proc, *cfg)?;
    let mut verdicts = Vec::with_capacity(selection.properties.len());
    for &p in &selection.properties {
        let v = match p {
            Property::Esp => session.esp()?.clone(),
            Property::Fmp => session.fmp()?,
            Property::Sfp => session.forgetting(Variant::Sfp)?,
            Property::Ifp => session.forgetting(Variant::Ifp)?,
            Property::Ssfp => session.forgetting(Variant::Ssfp)?,
            Property::Sifp => session.forgetting(Variant::Sifp)?,
            Property::Uap => session.uniform_attracting()?,
            Property::Steady => session.steady_state()?,
        };
        verdicts.push(v);
    }
    let mut crosschecks = Vec::with_capacity(selection.crosschecks.len());
    for &item in &selection.crosschecks {
        let verdict = session.crosscheck(item)?;
        let direct_level = session.forgetting(item.direct())?.level;
        let projected = item.project(direct_level);
        crosschecks.push(Crosscheck {
            item,
            property: verdict.property,
            level: verdict.level,
            direct_level,
            projected_direct_level: projected,
            agrees: verdict.level == Level::NotApplicable || verdict.level == projected,
            discrepancy: verdict.evidence.value("discrepancy"),
            verdict,
        });
    }

    let flags = ConditionFlags::new(sys.flags, proc.is_shift_invariant());
    let check = check_diagram(&verdicts, &flags, diagram)?;
    let past = session.past_horizon();
    Ok(AnalysisReport {
        schema: SCHEMA_VERSION,
        version: env!("CARGO_PKG_VERSION"),
        system: sys.id.clone(),
        process: proc.id.clone(),
        config: ConfigEcho {
            n_max: cfg.n_max,
            tail_window: cfg.tail_window,
            tol: cfg.tol,
            state_samples: cfg.state_samples,
            input_samples: cfg.input_samples,
            burn_in: cfg.burn_in,
            seed: cfg.seed,
            past_horizon: past,
            sampled_windows: session.sampled_windows(),
            adversarial_windows: session.adversarial_windows(),
            scalar: scalar_name::<S>(),
        },
        flags,
        truncation: TruncationBounds {
            product_metric_tail: product_tail_bound(past),
        },
        consistent: check.violations.is_empty(),
        verdicts,
        crosschecks,
        violations: check.violations,
        non_implications: check.non_implications,
    })
}

/// Pretty JSON with a trailing newline. Field order is fixed by the types and
/// maps are ordered, so equal reports serialise to identical bytes.
pub fn report_json(report: &AnalysisReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report types serialise infallibly");
    s.push('\n');
    s
}

pub fn emit_report(report: &AnalysisReport, path: &Path) -> Result<()> {
    std::fs::write(path, report_json(report)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
