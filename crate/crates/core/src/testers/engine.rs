use std::sync::OnceLock;

use rayon::prelude::*;

use super::{Evidence, LabeledWindow, Level, Property, PropertyVerdict, TestConfig, Variant, Witness};
use crate::error::{Error, Result};
use crate::flows::{diameter_by, reachable_from};
use crate::scalar::Scalar;
use crate::sequence::{product_tail_bound, InputPoint, InputWindow, StatePoint};
use crate::systems::{InputProcess, SystemSpec};

/// Number of process draws used as perturbation pasts.
pub(super) const PERTURBATION_DRAWS: u64 = 4;

/// An input window under test.
pub(super) struct Probe<S> {
    pub label: String,
    pub adversarial: bool,
    pub window: InputWindow<S>,
}

impl<S: Scalar> Probe<S> {
    pub fn labeled(&self) -> LabeledWindow {
        LabeledWindow {
            label: self.label.clone(),
            window: self.window.to_literal(),
        }
    }
}

/// Initial states; the first `fixed` form the pointwise pool, all of them the
/// extended pool.
pub(super) struct Pool<S> {
    pub states: Vec<StatePoint<S>>,
    pub fixed: usize,
}

/// Diameters over the fixed and extended pool at each evaluated horizon, for
/// one window. `ext >= fixed` holds entrywise.
struct WindowCurves {
    fixed: Vec<f64>,
    ext: Vec<f64>,
    fixed_pair: Vec<(usize, usize)>,
    ext_pair: Vec<(usize, usize)>,
    exact: bool,
    /// Distances to a per-window anchor state, when one is given.
    anchor: Option<Row>,
}

/// Per-horizon maxima of distances: `(fixed max, fixed argmax, all max, all
/// argmax)`.
pub(super) type Row = Vec<(f64, usize, f64, usize)>;

pub(super) fn fold_row(values: &[(bool, f64)]) -> (f64, usize, f64, usize) {
    let mut out = (0.0, 0, 0.0, 0);
    for (i, &(fixed, d)) in values.iter().enumerate() {
        if fixed && d > out.0 {
            out.0 = d;
            out.1 = i;
        }
        if d > out.2 {
            out.2 = d;
            out.3 = i;
        }
    }
    out
}

struct Curves {
    n_values: Vec<usize>,
    windows: Vec<WindowCurves>,
}

/// Shared sampling state for one `(system, process, config)`: windows, state
/// pools and per-variant curves are computed once and reused across testers.
pub struct Session<'a, S: Scalar> {
    pub(super) sys: &'a SystemSpec<S>,
    pub(super) proc: &'a InputProcess<S>,
    pub(super) cfg: TestConfig,
    pub(super) past: usize,
    pub(super) probes: Vec<Probe<S>>,
    drawn: usize,
    /// Start of every echo-state estimate.
    pub(super) x_ref: StatePoint<S>,
    pub(super) states: Pool<S>,
    reach: OnceLock<Pool<S>>,
    curves: [OnceLock<Curves>; 4],
    verdicts: [OnceLock<PropertyVerdict>; 4],
    esp: OnceLock<PropertyVerdict>,
}

/// Runs `f` from `x` along the concatenation of `chain`.
pub(super) fn run_chain<S: Scalar>(
    sys: &SystemSpec<S>,
    x: &[S],
    chain: &[&[InputPoint<S>]],
) -> Vec<S> {
    let mut cur = x.to_vec();
    let mut next = vec![S::zero(); cur.len()];
    for part in chain {
        for u in *part {
            sys.map.apply(&cur, u.values(), &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
    }
    cur
}

pub(super) fn max_over<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    it.into_iter().fold(0.0, f64::max)
}

impl<'a, S: Scalar> Session<'a, S> {
    pub fn new(sys: &'a SystemSpec<S>, proc: &'a InputProcess<S>, cfg: TestConfig) -> Result<Self> {
        cfg.validate()?;
        if proc.dim() != sys.input_dim {
            return Err(Error::DimensionMismatch {
                expected: sys.input_dim,
                found: proc.dim(),
            });
        }
        let mut past = cfg.past();
        if let crate::systems::ProcessKind::Explicit { window } = &proc.kind {
            past = past.min(window.past_horizon());
            if past < cfg.n_max || window.future_horizon() < cfg.n_max {
                return Err(Error::InsufficientHorizon {
                    side: if past < cfg.n_max { "past" } else { "future" },
                    needed: cfg.n_max,
                    available: past.min(window.future_horizon()),
                });
            }
        }
        let mut probes: Vec<Probe<S>> = Vec::new();
        for i in 0..cfg.input_samples as u64 {
            let window = proc.sample_window(past, cfg.n_max, i)?;
            if probes.iter().any(|p| p.window == window) {
                continue;
            }
            probes.push(Probe {
                label: format!("{} sample #{i}", proc.id),
                adversarial: false,
                window,
            });
        }
        for (k, window) in proc.adversarial_windows(past, cfg.n_max).into_iter().enumerate() {
            probes.push(Probe {
                label: format!("{} adversarial #{k}", proc.id),
                adversarial: true,
                window,
            });
        }

        let samples = sys.sample_states(cfg.seed, cfg.state_samples);
        let fixed = samples.len() + sys.hard_states_for_horizon(0).len();
        let mut states = samples;
        states.extend(sys.hard_states_for_horizon(cfg.n_max));
        let x_ref = states[0].clone();

        Ok(Self {
            sys,
            proc,
            cfg,
            past,
            probes,
            drawn: cfg.input_samples,
            x_ref,
            states: Pool { states, fixed },
            reach: OnceLock::new(),
            curves: Default::default(),
            verdicts: Default::default(),
            esp: OnceLock::new(),
        })
    }

    pub fn config(&self) -> &TestConfig {
        &self.cfg
    }

    /// Past horizon of every generated window.
    pub fn past_horizon(&self) -> usize {
        self.past
    }

    pub fn sampled_windows(&self) -> usize {
        self.probes.iter().filter(|p| !p.adversarial).count()
    }

    pub fn adversarial_windows(&self) -> usize {
        self.probes.len() - self.sampled_windows()
    }

    /// Approximate reachable states grown from the state pool's seeds.
    pub(super) fn reachable(&self) -> Result<&Pool<S>> {
        if let Some(p) = self.reach.get() {
            return Ok(p);
        }
        let sys = self.sys;
        let cfg = &self.cfg;
        let mut seeds = sys.sample_states(cfg.seed, cfg.state_samples);
        let fixed = seeds.len() + sys.hard_states_for_horizon(cfg.burn_in).len();
        seeds.extend(sys.hard_states_for_horizon(cfg.burn_in + cfg.n_max));
        let states = reachable_from(sys, self.proc, cfg.burn_in, &seeds)?
            .into_iter()
            .map(|r| r.state)
            .collect();
        Ok(self.reach.get_or_init(|| Pool { states, fixed }))
    }

    /// Horizons at which shifted curves are evaluated: every `n <= 16`, every
    /// 8th `n`, and the whole tail window.
    pub(super) fn shifted_grid(&self) -> Vec<usize> {
        let n_max = self.cfg.n_max;
        let tail_start = n_max + 1 - self.cfg.tail_window;
        (1..=n_max)
            .filter(|&n| n <= 16 || n % 8 == 0 || n >= tail_start)
            .collect()
    }

    /// Positions in `n_values` that belong to the tail window.
    pub(super) fn tail_positions(&self, n_values: &[usize]) -> Vec<usize> {
        let tail_start = self.cfg.n_max + 1 - self.cfg.tail_window;
        let pos: Vec<usize> = (0..n_values.len())
            .filter(|&k| n_values[k] >= tail_start)
            .collect();
        if pos.is_empty() {
            vec![n_values.len() - 1]
        } else {
            pos
        }
    }

    fn pool(&self, variant: Variant) -> Result<&Pool<S>> {
        if variant.reachable() {
            self.reachable()
        } else {
            Ok(&self.states)
        }
    }

    fn curves(&self, variant: Variant) -> Result<&Curves> {
        let cell = &self.curves[variant.slot()];
        if let Some(c) = cell.get() {
            return Ok(c);
        }
        let pool = self.pool(variant)?;
        let n_values: Vec<usize> = if variant.shifted() {
            self.shifted_grid()
        } else {
            (1..=self.cfg.n_max).collect()
        };
        let sys = self.sys;
        let windows = self
            .probes
            .par_iter()
            .map(|p| {
                let anchor = (variant == Variant::Ssfp).then(|| self.echo_tau(&p.window));
                window_curves(sys, pool, &p.window, &n_values, variant.shifted(), anchor)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(cell.get_or_init(|| Curves { n_values, windows }))
    }

    pub(super) fn display(&self, x: &StatePoint<S>) -> Vec<f64> {
        self.sys.representative(x)
    }

    pub(super) fn witness_states(&self, xs: &[&StatePoint<S>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        (
            xs.iter().map(|x| self.display(x)).collect(),
            xs.iter().map(|x| x.to_f64()).collect(),
        )
    }

    pub(super) fn base_evidence(&self, n_values: Vec<usize>) -> Evidence {
        let mut ev = Evidence {
            n_values,
            ..Evidence::default()
        };
        ev.set_value("tol", self.cfg.tol);
        ev.set_value("truncation_bound", product_tail_bound(self.past));
        ev.set_count("n_max", self.cfg.n_max);
        ev.set_count("tail_window", self.cfg.tail_window);
        ev.set_count("past_horizon", self.past);
        ev.set_count("windows_drawn", self.drawn);
        ev.set_count("windows_distinct", self.sampled_windows());
        ev.set_count("windows_adversarial", self.adversarial_windows());
        ev
    }

    /// Direct forgetting tester for `variant`.
    pub fn forgetting(&self, variant: Variant) -> Result<PropertyVerdict> {
        let cell = &self.verdicts[variant.slot()];
        if let Some(v) = cell.get() {
            return Ok(v.clone());
        }
        let v = self.classify_forgetting(variant)?;
        Ok(cell.get_or_init(|| v).clone())
    }

    fn classify_forgetting(&self, variant: Variant) -> Result<PropertyVerdict> {
        let curves = self.curves(variant)?;
        let pool = self.pool(variant)?;
        let len = curves.n_values.len();
        let (mut pw, mut su, mut un) = (vec![0.0; len], vec![0.0; len], vec![0.0; len]);
        for (p, wc) in self.probes.iter().zip(&curves.windows) {
            for k in 0..len {
                if !p.adversarial {
                    pw[k] = f64::max(pw[k], wc.fixed[k]);
                    su[k] = f64::max(su[k], wc.ext[k]);
                }
                un[k] = f64::max(un[k], wc.ext[k]);
            }
        }
        for k in 0..len {
            if !(pw[k] <= su[k] && su[k] <= un[k]) {
                return Err(Error::Invariant(format!(
                    "{} envelopes out of order at n={}: {} / {} / {}",
                    variant.property(),
                    curves.n_values[k],
                    pw[k],
                    su[k],
                    un[k]
                )));
            }
        }
        let tail = self.tail_positions(&curves.n_values);
        let tail_max = |env: &[f64]| max_over(tail.iter().map(|&k| env[k]));
        let (t_pw, t_su, t_un) = (tail_max(&pw), tail_max(&su), tail_max(&un));
        let tol = self.cfg.tol;

        // (level, use extended pool, adversarial windows only)
        let failure = if t_pw >= tol {
            Some((Level::Refuted, false, false))
        } else if t_su >= tol {
            Some((Level::Pointwise, true, false))
        } else if t_un >= tol {
            Some((Level::StateUniform, true, true))
        } else {
            None
        };
        let level = failure.map_or(Level::Uniform, |f| f.0);
        let witness = failure.map(|(_, ext, adv_only)| {
            let mut best = (0usize, 0usize, -1.0);
            for (pi, (p, wc)) in self.probes.iter().zip(&curves.windows).enumerate() {
                if adv_only != p.adversarial {
                    continue;
                }
                let vals = if ext { &wc.ext } else { &wc.fixed };
                for &k in &tail {
                    if vals[k] > best.2 {
                        best = (pi, k, vals[k]);
                    }
                }
            }
            let (pi, k, value) = best;
            let wc = &curves.windows[pi];
            let (i, j) = if ext { wc.ext_pair[k] } else { wc.fixed_pair[k] };
            let (states, raw_states) = self.witness_states(&[&pool.states[i], &pool.states[j]]);
            let probe = &self.probes[pi];
            Witness {
                description: format!(
                    "{}: d_n = {value:.3e} >= tol at n = {} for initial states #{i}, #{j} ({} pool) on {}",
                    variant.property(),
                    curves.n_values[k],
                    if ext { "extended" } else { "fixed" },
                    probe.label
                ),
                seed: self.cfg.seed,
                n: curves.n_values[k],
                value,
                states,
                raw_states,
                windows: vec![probe.labeled()],
            }
        });

        let mut ev = self.base_evidence(curves.n_values.clone());
        ev.set_curve("pointwise_envelope", pw);
        ev.set_curve("state_uniform_envelope", su);
        ev.set_curve("uniform_envelope", un);
        ev.set_value("tail_max_pointwise", t_pw);
        ev.set_value("tail_max_state_uniform", t_su);
        ev.set_value("tail_max_uniform", t_un);
        ev.set_count("pool_fixed", pool.fixed);
        ev.set_count("pool_extended", pool.states.len());
        ev.set_flag("shifted", variant.shifted());
        ev.set_flag("reachable_approximate", variant.reachable());
        ev.set_flag("diameter_exact", curves.windows.iter().all(|w| w.exact));
        if variant.reachable() {
            ev.set_count("burn_in", self.cfg.burn_in);
        }
        Ok(PropertyVerdict::new(variant.property(), level, ev, witness))
    }

    /// Echo state property via collapse of pullback images of the extended
    /// state pool.
    pub fn esp(&self) -> Result<&PropertyVerdict> {
        if let Some(v) = self.esp.get() {
            return Ok(v);
        }
        let v = self.classify_esp()?;
        Ok(self.esp.get_or_init(|| v))
    }

    fn classify_esp(&self) -> Result<PropertyVerdict> {
        let curves = self.curves(Variant::Ssfp)?;
        let len = curves.n_values.len();
        let last = len - 1;
        let diam: Vec<f64> = (0..len)
            .map(|k| max_over(curves.windows.iter().map(|w| w.ext[k])))
            .collect();
        let tail = self.tail_positions(&curves.n_values);
        let persistent_min = tail.iter().map(|&k| diam[k]).fold(f64::INFINITY, f64::min);
        let tol = self.cfg.tol;
        let at_max = diam[last];
        let witness = (at_max >= tol).then(|| {
            let mut best = (0usize, -1.0);
            for (pi, w) in curves.windows.iter().enumerate() {
                if w.ext[last] > best.1 {
                    best = (pi, w.ext[last]);
                }
            }
            let (i, j) = curves.windows[best.0].ext_pair[last];
            let probe = &self.probes[best.0];
            let (states, raw_states) =
                self.witness_states(&[&self.states.states[i], &self.states.states[j]]);
            Witness {
                description: format!(
                    "ESP: pullback images of initial states #{i}, #{j} stay {:.3e} apart at n = {} on {}",
                    best.1, self.cfg.n_max, probe.label
                ),
                seed: self.cfg.seed,
                n: self.cfg.n_max,
                value: best.1,
                states,
                raw_states,
                windows: vec![probe.labeled()],
            }
        });
        let level = if witness.is_some() {
            Level::Refuted
        } else {
            Level::Uniform
        };
        let mut ev = self.base_evidence(curves.n_values.clone());
        ev.set_curve("pullback_diameter", diam);
        ev.set_value("max_diameter_at_n_max", at_max);
        ev.set_value("persistent_min_diameter", persistent_min);
        ev.set_flag("persistent", persistent_min >= tol);
        ev.set_count("pool_extended", self.states.states.len());
        ev.set_flag(
            "diameter_exact",
            curves.windows.iter().all(|w| w.exact),
        );
        Ok(PropertyVerdict::new(Property::Esp, level, ev, witness))
    }

    /// Steady-state property: the input forgetting verdict under another name.
    pub fn steady_state(&self) -> Result<PropertyVerdict> {
        let mut v = self.forgetting(Variant::Ifp)?;
        v.property = Property::Steady;
        Ok(v)
    }

    /// `H(tau u)` estimate: pullback of the reference state over the whole
    /// past of the window. The estimate of `H(tau sigma^n u)` is then
    /// `psi_n(H(tau u), u)`.
    pub(super) fn echo_tau(&self, w: &InputWindow<S>) -> Vec<S> {
        run_chain(self.sys, self.x_ref.values(), &[w.past_entries()])
    }

    /// `H(gamma^n(old, new))` estimate over the whole past of `old` followed
    /// by the latest `n` past entries of `new`.
    pub(super) fn echo_gamma(&self, n: usize, old: &InputWindow<S>, new: &InputWindow<S>) -> Vec<S> {
        let np = new.past_entries();
        run_chain(
            self.sys,
            self.x_ref.values(),
            &[old.past_entries(), &np[np.len() - n..]],
        )
    }

    /// Anchor-distance rows recorded with the shifted state-pool curves.
    pub(super) fn shifted_anchor_rows(&self) -> Result<(Vec<usize>, Vec<&Row>)> {
        let curves = self.curves(Variant::Ssfp)?;
        let rows = curves
            .windows
            .iter()
            .map(|w| w.anchor.as_ref().expect("sSFP curves carry anchor rows"))
            .collect();
        Ok((curves.n_values.clone(), rows))
    }

    /// Process draws plus adversarial windows, past-only, used as `u'`.
    pub(super) fn perturbations(&self) -> Result<Vec<Probe<S>>> {
        let mut out = Vec::new();
        for j in 0..PERTURBATION_DRAWS {
            out.push(Probe {
                label: format!("{} perturbation #{j}", self.proc.id),
                adversarial: false,
                window: self
                    .proc
                    .draw(self.past, 0, crate::rng::STREAM_PERTURBATIONS, j)?,
            });
        }
        for (k, window) in self.proc.adversarial_windows(self.past, 0).into_iter().enumerate() {
            out.push(Probe {
                label: format!("{} adversarial #{k}", self.proc.id),
                adversarial: true,
                window,
            });
        }
        Ok(out)
    }
}

fn window_curves<S: Scalar>(
    sys: &SystemSpec<S>,
    pool: &Pool<S>,
    w: &InputWindow<S>,
    n_values: &[usize],
    shifted: bool,
    anchor: Option<Vec<S>>,
) -> Result<WindowCurves> {
    let mut out = WindowCurves {
        fixed: Vec::with_capacity(n_values.len()),
        ext: Vec::with_capacity(n_values.len()),
        fixed_pair: Vec::with_capacity(n_values.len()),
        ext_pair: Vec::with_capacity(n_values.len()),
        exact: true,
        anchor: anchor.as_ref().map(|_| Vec::with_capacity(n_values.len())),
    };
    let mut record = |cur: &[Vec<S>]| {
        if let (Some(a), Some(row)) = (&anchor, out.anchor.as_mut()) {
            let vals: Vec<(bool, f64)> = cur
                .iter()
                .enumerate()
                .map(|(i, x)| (i < pool.fixed, sys.state_metric.distance(x, a).as_f64()))
                .collect();
            row.push(fold_row(&vals));
        }
        let dist = |i: usize, j: usize| sys.state_metric.distance(&cur[i], &cur[j]);
        let f = diameter_by(pool.fixed, dist);
        let e = diameter_by(cur.len(), dist);
        out.exact &= f.exact && e.exact;
        let (ev, ep) = if e.value >= f.value {
            (e.value, e.pair)
        } else {
            (f.value, f.pair)
        };
        out.fixed.push(f.value.as_f64());
        out.fixed_pair.push(f.pair);
        out.ext.push(ev.as_f64());
        out.ext_pair.push(ep);
    };
    if shifted {
        let past = w.past_entries();
        for &n in n_values {
            if n > past.len() {
                return Err(Error::InsufficientHorizon {
                    side: "past",
                    needed: n,
                    available: past.len(),
                });
            }
            let inputs = &past[past.len() - n..];
            let images: Vec<Vec<S>> = pool
                .states
                .iter()
                .map(|x| run_chain(sys, x.values(), &[inputs]))
                .collect();
            record(&images);
        }
    } else {
        let n_max = n_values.last().copied().unwrap_or(0);
        let future = w.future_entries();
        if n_max > future.len() {
            return Err(Error::InsufficientHorizon {
                side: "future",
                needed: n_max,
                available: future.len(),
            });
        }
        let mut cur: Vec<Vec<S>> = pool.states.iter().map(|x| x.values().to_vec()).collect();
        let mut scratch = vec![S::zero(); sys.state_dim()];
        let mut next_eval = 0;
        for (n, u) in (1..=n_max).zip(future) {
            for x in cur.iter_mut() {
                sys.map.apply(x, u.values(), &mut scratch);
                x.copy_from_slice(&scratch);
            }
            if n_values.get(next_eval) == Some(&n) {
                record(&cur);
                next_eval += 1;
            }
        }
    }
    Ok(out)
}
