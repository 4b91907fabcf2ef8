//! Alternative characterisations of the forgetting properties through the
//! echo-state functional `H`, estimated by pullback from a reference state.
//!
//! * (i) IFP: `d(H(tau sigma^n u), H(tau sigma^n u'))` for `u, u'` agreeing at
//!   every `t >= 1`;
//! * (ii) sIFP: `d(H(gamma^n(u', u)), H(gamma^n(u'', u)))`;
//! * (iii) SFP: `d(psi_n(x, u), H(tau sigma^n u))`;
//! * (iv) sSFP: `d(psi_n(x, T^n u), H(tau u))`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use super::engine::{fold_row, max_over, Row, Session};
use super::{Level, PropertyVerdict, Variant, Witness};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum LemmaItem {
    #[serde(rename = "i")]
    I,
    #[serde(rename = "ii")]
    Ii,
    #[serde(rename = "iii")]
    Iii,
    #[serde(rename = "iv")]
    Iv,
}

impl LemmaItem {
    pub const ALL: [LemmaItem; 4] = [LemmaItem::I, LemmaItem::Ii, LemmaItem::Iii, LemmaItem::Iv];

    pub fn label(self) -> &'static str {
        match self {
            LemmaItem::I => "i",
            LemmaItem::Ii => "ii",
            LemmaItem::Iii => "iii",
            LemmaItem::Iv => "iv",
        }
    }

    /// The forgetting property the item characterises.
    pub fn direct(self) -> Variant {
        match self {
            LemmaItem::I => Variant::Ifp,
            LemmaItem::Ii => Variant::Sifp,
            LemmaItem::Iii => Variant::Sfp,
            LemmaItem::Iv => Variant::Ssfp,
        }
    }

    /// Uniformity levels the item's formulation can express, ascending.
    pub fn levels(self) -> &'static [Level] {
        match self {
            LemmaItem::I => &[Level::Pointwise, Level::Uniform],
            LemmaItem::Ii | LemmaItem::Iii => &[Level::Pointwise, Level::StateUniform, Level::Uniform],
            LemmaItem::Iv => &[Level::StateUniform, Level::Uniform],
        }
    }

    /// Highest expressible level not above `level`; refuted if none.
    pub fn project(self, level: Level) -> Level {
        if level == Level::NotApplicable {
            return level;
        }
        self.levels()
            .iter()
            .rev()
            .copied()
            .find(|&l| level.reaches(l))
            .unwrap_or(Level::Refuted)
    }
}

impl fmt::Display for LemmaItem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for LemmaItem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LemmaItem::ALL
            .into_iter()
            .find(|i| i.label() == s.trim())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown lemma item `{s}`")))
    }
}

impl<S: Scalar> Session<'_, S> {
    /// Lemma-side verdict for `item`, with the direct tester's tail sup and
    /// level recorded alongside.
    pub fn crosscheck(&self, item: LemmaItem) -> Result<PropertyVerdict> {
        let property = item.direct().property();
        if self.esp()?.level != Level::Uniform {
            let mut ev = self.base_evidence(Vec::new());
            ev.set_flag("esp_unsupported", true);
            return Ok(PropertyVerdict::new(property, Level::NotApplicable, ev, None));
        }
        let perts = self.perturbations()?;
        let pairs: Vec<(usize, usize)> = (0..perts.len())
            .flat_map(|i| (i + 1..perts.len()).map(move |j| (i, j)))
            .collect();
        let metric = self.sys.state_metric;
        let sys = self.sys;
        let n_max = self.cfg.n_max;
        let pool = &self.states;

        // forward items: anchors and partners iterated along the future of u
        let forward = |u: &crate::sequence::InputWindow<S>, partners: Vec<(bool, Vec<S>)>| -> Row {
            let mut anchor = self.echo_tau(u);
            let mut xs = partners;
            let mut scratch = vec![S::zero(); sys.state_dim()];
            let mut row = Vec::with_capacity(n_max);
            for v in &u.future_entries()[..n_max] {
                sys.map.apply(&anchor, v.values(), &mut scratch);
                std::mem::swap(&mut anchor, &mut scratch);
                for (_, x) in xs.iter_mut() {
                    sys.map.apply(x, v.values(), &mut scratch);
                    x.copy_from_slice(&scratch);
                }
                let vals: Vec<(bool, f64)> = xs
                    .iter()
                    .map(|(fixed, x)| (*fixed, metric.distance(x, &anchor).as_f64()))
                    .collect();
                row.push(fold_row(&vals));
            }
            row
        };

        let (grid, rows): (Vec<usize>, Vec<Row>) = match item {
            // H(tau sigma^n u') = psi_n(H(tau u'), u) since u' shares the future of u
            LemmaItem::I => (
                (1..=n_max).collect(),
                self.probes
                    .par_iter()
                    .map(|p| {
                        let partners = perts
                            .iter()
                            .map(|q| (!q.adversarial, self.echo_tau(&q.window)))
                            .collect();
                        forward(&p.window, partners)
                    })
                    .collect(),
            ),
            LemmaItem::Ii => {
                let grid = self.shifted_grid();
                let rows = self
                    .probes
                    .par_iter()
                    .map(|p| {
                        grid.iter()
                            .map(|&n| {
                                let hs: Vec<Vec<S>> = perts
                                    .iter()
                                    .map(|q| self.echo_gamma(n, &q.window, &p.window))
                                    .collect();
                                let vals: Vec<(bool, f64)> = pairs
                                    .iter()
                                    .map(|&(i, j)| {
                                        let fixed = !perts[i].adversarial && !perts[j].adversarial;
                                        (fixed, metric.distance(&hs[i], &hs[j]).as_f64())
                                    })
                                    .collect();
                                fold_row(&vals)
                            })
                            .collect()
                    })
                    .collect();
                (grid, rows)
            }
            LemmaItem::Iii => (
                (1..=n_max).collect(),
                self.probes
                    .par_iter()
                    .map(|p| {
                        let partners = pool
                            .states
                            .iter()
                            .enumerate()
                            .map(|(i, x)| (i < pool.fixed, x.values().to_vec()))
                            .collect();
                        forward(&p.window, partners)
                    })
                    .collect(),
            ),
            LemmaItem::Iv => {
                let (grid, rows) = self.shifted_anchor_rows()?;
                (grid, rows.into_iter().cloned().collect())
            }
        };

        let len = grid.len();
        let (mut pw, mut su, mut un) = (vec![0.0; len], vec![0.0; len], vec![0.0; len]);
        for (p, row) in self.probes.iter().zip(&rows) {
            for k in 0..len {
                if !p.adversarial {
                    pw[k] = f64::max(pw[k], row[k].0);
                    su[k] = f64::max(su[k], row[k].2);
                }
                un[k] = f64::max(un[k], row[k].2);
            }
        }
        let tail = self.tail_positions(&grid);
        let tail_max = |env: &[f64]| max_over(tail.iter().map(|&k| env[k]));
        let (t_pw, t_su, t_un) = (tail_max(&pw), tail_max(&su), tail_max(&un));
        let tol = self.cfg.tol;

        // first failing check: (tail sup, level reached, all partners, all probes)
        let checks: Vec<(f64, Level, bool, bool)> = match item {
            LemmaItem::I => vec![
                (t_pw, Level::Refuted, false, false),
                (t_un, Level::Pointwise, true, true),
            ],
            LemmaItem::Ii | LemmaItem::Iii => vec![
                (t_pw, Level::Refuted, false, false),
                (t_su, Level::Pointwise, true, false),
                (t_un, Level::StateUniform, true, true),
            ],
            LemmaItem::Iv => vec![
                (t_su, Level::Refuted, true, false),
                (t_un, Level::StateUniform, true, true),
            ],
        };
        let failure = checks.into_iter().find(|c| c.0 >= tol);
        let level = failure.map_or(Level::Uniform, |f| f.1);
        let witness = failure.map(|(_, _, all, all_probes)| {
            let mut best = (0usize, 0usize, -1.0);
            for (pi, (p, row)) in self.probes.iter().zip(&rows).enumerate() {
                if !all_probes && p.adversarial {
                    continue;
                }
                for &k in &tail {
                    let v = if all { row[k].2 } else { row[k].0 };
                    if v > best.2 {
                        best = (pi, k, v);
                    }
                }
            }
            let (pi, k, value) = best;
            let arg = if all { rows[pi][k].3 } else { rows[pi][k].1 };
            let probe = &self.probes[pi];
            let mut windows = vec![probe.labeled()];
            let mut states = Vec::new();
            match item {
                LemmaItem::I => windows.push(perts[arg].labeled()),
                LemmaItem::Ii => {
                    let (i, j) = pairs[arg];
                    windows.push(perts[i].labeled());
                    windows.push(perts[j].labeled());
                }
                LemmaItem::Iii | LemmaItem::Iv => states.push(&pool.states[arg]),
            }
            let (states, raw_states) = self.witness_states(&states);
            Witness {
                description: format!(
                    "lemma item ({item}): distance {value:.3e} >= tol at n = {} on {}",
                    grid[k], probe.label
                ),
                seed: self.cfg.seed,
                n: grid[k],
                value,
                states,
                raw_states,
                windows,
            }
        });

        let direct = self.forgetting(item.direct())?;
        let direct_tail = direct.evidence.value("tail_max_uniform").unwrap_or(f64::NAN);
        let projected = item.project(direct.level);
        let mut ev = self.base_evidence(grid);
        ev.set_curve("pointwise_envelope", pw);
        ev.set_curve("state_uniform_envelope", su);
        ev.set_curve("uniform_envelope", un);
        ev.set_value("tail_max_pointwise", t_pw);
        ev.set_value("tail_max_state_uniform", t_su);
        ev.set_value("tail_max_uniform", t_un);
        ev.set_value("direct_tail_max_uniform", direct_tail);
        ev.set_value("discrepancy", (t_un - direct_tail).abs());
        ev.set_flag("agrees_with_direct", projected == level);
        ev.set_count("echo_steps", self.past);
        ev.set_count("perturbations", perts.len());
        ev.set_count("pool_fixed", pool.fixed);
        ev.set_count("pool_extended", pool.states.len());
        Ok(PropertyVerdict::new(property, level, ev, witness))
    }
}
