use rand::Rng;

use super::catalog::split_call;
use super::SystemSpec;
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;
use crate::sequence::{InputPoint, InputWindow};

/// Word offset so that negative times map to nonnegative stream positions.
const TIME_ORIGIN: i64 = 1 << 40;

/// Hidden invertible dynamics generating observed inputs.
#[derive(Clone, Debug, PartialEq)]
pub enum HiddenMap<S> {
    /// `theta -> theta + rho mod 1` on the circle.
    Rotation { rho: S },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Observation {
    Identity,
    /// `cos(2 pi theta)`
    Cos,
}

impl Observation {
    fn apply<S: Scalar>(self, theta: S) -> S {
        match self {
            Observation::Identity => theta,
            Observation::Cos => (S::lit(std::f64::consts::TAU) * theta).cos(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ProcessKind<S> {
    /// Independent uniform draws in `[lo, hi]^dim`.
    Iid { lo: S, hi: S, dim: usize },
    /// Every entry equals `value`; `bounds` is the box of admissible constants.
    Constant {
        value: Vec<S>,
        bounds: Option<(S, S)>,
    },
    /// A fixed window literal.
    Explicit { window: InputWindow<S> },
    /// `u_t = omega(phi^t(p))`; sampled windows beyond the first draw `p`
    /// uniformly on the circle.
    Observed {
        map: HiddenMap<S>,
        observation: Observation,
        p: S,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct InputProcess<S> {
    pub id: String,
    pub kind: ProcessKind<S>,
    pub seed: u64,
}

impl<S: Scalar> InputProcess<S> {
    pub fn iid(lo: S, hi: S, dim: usize, seed: u64) -> Self {
        Self {
            id: format!("iid({},{})", lo, hi),
            kind: ProcessKind::Iid { lo, hi, dim },
            seed,
        }
    }

    pub fn constant(value: Vec<S>, bounds: Option<(S, S)>, seed: u64) -> Self {
        let shown: Vec<String> = value.iter().map(|v| v.to_string()).collect();
        Self {
            id: format!("constant({})", shown.join(",")),
            kind: ProcessKind::Constant { value, bounds },
            seed,
        }
    }

    pub fn explicit(window: InputWindow<S>, seed: u64) -> Self {
        Self {
            id: format!("explicit({})", window.describe()),
            kind: ProcessKind::Explicit { window },
            seed,
        }
    }

    pub fn observed_rotation(rho: S, observation: Observation, p: S, seed: u64) -> Self {
        let name = match observation {
            Observation::Identity => "observed",
            Observation::Cos => "observed_cos",
        };
        Self {
            id: format!("{name}({rho},{p})"),
            kind: ProcessKind::Observed {
                map: HiddenMap::Rotation { rho },
                observation,
                p,
            },
            seed,
        }
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            ProcessKind::Iid { dim, .. } => *dim,
            ProcessKind::Constant { value, .. } => value.len(),
            ProcessKind::Explicit { window } => window.dim(),
            ProcessKind::Observed { .. } => 1,
        }
    }

    /// Whether the generated sequence family is invariant under shifts.
    pub fn is_shift_invariant(&self) -> bool {
        !matches!(self.kind, ProcessKind::Explicit { .. })
    }

    /// The first window of the process.
    pub fn generate_window(&self, past: usize, future: usize) -> Result<InputWindow<S>> {
        self.draw(past, future, rng::STREAM_WINDOWS, 0)
    }

    /// The `index`-th sampled window; a function of `(seed, index)` only.
    pub fn sample_window(&self, past: usize, future: usize, index: u64) -> Result<InputWindow<S>> {
        self.draw(past, future, rng::STREAM_WINDOWS, index)
    }

    /// Hidden-orbit point generating the entry at time `t` of window `index`.
    pub fn hidden_point(&self, purpose: u64, index: u64, t: i64) -> Option<S> {
        let ProcessKind::Observed { map, p, .. } = &self.kind else {
            return None;
        };
        let start = if index == 0 {
            *p
        } else {
            let mut r = rng::stream(self.seed, purpose, index);
            S::lit(r.random::<f64>())
        };
        let HiddenMap::Rotation { rho } = map;
        let theta = start + S::lit(t as f64) * *rho;
        Some(theta - theta.floor())
    }

    pub(crate) fn draw(
        &self,
        past: usize,
        future: usize,
        purpose: u64,
        index: u64,
    ) -> Result<InputWindow<S>> {
        match &self.kind {
            ProcessKind::Iid { lo, hi, dim } => {
                let mut r = rng::stream(self.seed, purpose, index);
                let (lo, hi, dim) = (*lo, *hi, *dim);
                InputWindow::from_fn(dim, past, future, |t| {
                    // each f64 draw consumes two 32-bit words
                    r.set_word_pos(((t + TIME_ORIGIN) as u128) * dim as u128 * 2);
                    InputPoint::from_vec_unchecked(
                        (0..dim)
                            .map(|_| lo + (hi - lo) * S::lit(r.random::<f64>()))
                            .collect(),
                    )
                })
            }
            ProcessKind::Constant { value, .. } => Ok(InputWindow::constant(
                InputPoint::from_vec_unchecked(value.clone()),
                past,
                future,
            )),
            ProcessKind::Explicit { window } => {
                if window.future_horizon() < future {
                    return Err(Error::InsufficientHorizon {
                        side: "future",
                        needed: future,
                        available: window.future_horizon(),
                    });
                }
                let w = window.restrict_past(past)?;
                let drop = w.future_horizon() - future;
                let mut fut = w.future_entries().to_vec();
                fut.truncate(fut.len() - drop);
                InputWindow::new(w.dim(), w.past_entries().to_vec(), fut)
            }
            ProcessKind::Observed { observation, .. } => {
                let obs = *observation;
                InputWindow::from_fn(1, past, future, |t| {
                    let theta = self.hidden_point(purpose, index, t).expect("observed kind");
                    InputPoint::from_vec_unchecked(vec![obs.apply(theta)])
                })
            }
        }
    }

    /// Extreme-value windows inside the process's sequence family, used to
    /// stress uniform-in-input sups.
    pub fn adversarial_windows(&self, past: usize, future: usize) -> Vec<InputWindow<S>> {
        match &self.kind {
            ProcessKind::Iid { lo, hi, dim } => {
                let (lo, hi, dim) = (*lo, *hi, *dim);
                let point = |v: S| InputPoint::from_vec_unchecked(vec![v; dim]);
                let alternating = InputWindow::from_fn(dim, past, future, |t| {
                    point(if t.rem_euclid(2) == 0 { hi } else { lo })
                })
                .expect("consistent dimension");
                vec![
                    InputWindow::constant(point(lo), past, future),
                    InputWindow::constant(point(hi), past, future),
                    alternating,
                ]
            }
            ProcessKind::Constant {
                value,
                bounds: Some((lo, hi)),
            } => {
                let dim = value.len();
                [*lo, *hi]
                    .into_iter()
                    .map(|v| {
                        InputWindow::constant(InputPoint::from_vec_unchecked(vec![v; dim]), past, future)
                    })
                    .collect()
            }
            _ => Vec::new(),
        }
    }

    /// Coordinate bounds of the input family, when it lives in a box.
    pub fn bounds(&self) -> Option<(S, S)> {
        match &self.kind {
            ProcessKind::Iid { lo, hi, .. } => Some((*lo, *hi)),
            ProcessKind::Constant { bounds, .. } => *bounds,
            _ => None,
        }
    }
}

/// Parses a `--process` argument for `sys`: `iid`, `iid(lo,hi)`, `constant`,
/// `constant(c)`, `observed(rho[,p])` or `observed_cos(rho[,p])`.
pub fn parse_process<S: Scalar>(text: &str, sys: &SystemSpec<S>, seed: u64) -> Result<InputProcess<S>> {
    let (name, args) = split_call(text).map_err(|_| Error::UnknownProcess(text.to_string()))?;
    let dim = sys.input_dim;
    let (lo, hi) = sys.input_box.unwrap_or((-S::one(), S::one()));
    let wrong_arity = || Error::UnknownProcess(text.to_string());
    let proc = match name.as_str() {
        "iid" => match args.as_slice() {
            [] => InputProcess::iid(lo, hi, dim, seed),
            [a, b] if a < b => InputProcess::iid(S::lit(*a), S::lit(*b), dim, seed),
            _ => return Err(wrong_arity()),
        },
        "constant" => match args.as_slice() {
            [] => InputProcess::constant(vec![(lo + hi) / S::lit(2.0); dim], Some((lo, hi)), seed),
            [c] => InputProcess::constant(vec![S::lit(*c); dim], Some((lo, hi)), seed),
            _ => return Err(wrong_arity()),
        },
        "observed" | "observed_cos" => {
            if dim != 1 {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: 1,
                });
            }
            let obs = if name == "observed" {
                Observation::Identity
            } else {
                Observation::Cos
            };
            match args.as_slice() {
                [rho] => InputProcess::observed_rotation(S::lit(*rho), obs, S::zero(), seed),
                [rho, p] => InputProcess::observed_rotation(S::lit(*rho), obs, S::lit(*p), seed),
                _ => return Err(wrong_arity()),
            }
        }
        _ => return Err(Error::UnknownProcess(text.to_string())),
    };
    Ok(proc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::catalog_get;

    #[test]
    fn constant_process_fills_every_entry() {
        let p = InputProcess::constant(vec![0.3_f64], None, 1);
        let w = p.generate_window(4, 3).unwrap();
        assert!(w.iter().all(|(_, e)| e.values() == [0.3]));
        assert_eq!(w.past_horizon(), 4);
        assert_eq!(w.future_horizon(), 3);
    }

    #[test]
    fn observed_rotation_reads_backward_orbit() {
        let rho = (5f64.sqrt() - 1.0) / 2.0;
        let p = InputProcess::observed_rotation(rho, Observation::Identity, 0.0, 9);
        let w = p.generate_window(3, 0).unwrap();
        let expect = |k: f64| (k * rho).rem_euclid(1.0);
        assert!((w.at(-2).unwrap()[0] - expect(-2.0)).abs() < 1e-12);
        assert!((w.at(-1).unwrap()[0] - expect(-1.0)).abs() < 1e-12);
        assert_eq!(w.at(0).unwrap()[0], 0.0);
        // forward re-iteration of the hidden map reproduces the next entry
        for t in -2..0 {
            let next = (w.at(t).unwrap()[0] + rho).rem_euclid(1.0);
            assert!(crate::metric::circle_gap(next, w.at(t + 1).unwrap()[0]) < 1e-12);
        }
    }

    #[test]
    fn iid_is_deterministic_and_horizon_independent() {
        let p = InputProcess::iid(-1.0_f64, 1.0, 2, 42);
        let a = p.sample_window(10, 5, 3).unwrap();
        let b = p.sample_window(10, 5, 3).unwrap();
        assert_eq!(a, b);
        let c = p.sample_window(20, 1, 3).unwrap();
        for t in -9..=1 {
            assert_eq!(a.at(t).unwrap(), c.at(t).unwrap());
        }
        let d = p.sample_window(10, 5, 4).unwrap();
        assert_ne!(a, d);
        assert!(a.iter().all(|(_, e)| e.values().iter().all(|v| (-1.0..=1.0).contains(v))));
    }

    #[test]
    fn explicit_process_checks_horizons() {
        let w = InputWindow::constant(InputPoint::scalar(0.5_f64), 5, 2);
        let p = InputProcess::explicit(w, 0);
        let got = p.generate_window(3, 1).unwrap();
        assert_eq!(got.past_horizon(), 3);
        assert_eq!(got.future_horizon(), 1);
        assert!(p.generate_window(6, 0).is_err());
        assert!(p.generate_window(1, 3).is_err());
    }

    #[test]
    fn adversarial_windows_stay_in_the_box() {
        let p = InputProcess::iid(-1.0_f64, 1.0, 1, 0);
        let ws = p.adversarial_windows(4, 2);
        assert_eq!(ws.len(), 3);
        assert_eq!(ws[2].at(0).unwrap(), &[1.0]);
        assert_eq!(ws[2].at(-1).unwrap(), &[-1.0]);
        let c = InputProcess::constant(vec![0.0_f64], Some((-1.0, 1.0)), 0);
        assert_eq!(c.adversarial_windows(3, 0).len(), 2);
        let e = InputProcess::explicit(InputWindow::constant(InputPoint::scalar(0.0_f64), 2, 0), 0);
        assert!(e.adversarial_windows(2, 0).is_empty());
    }

    #[test]
    fn parse_process_forms() {
        let sys = catalog_get::<f64>("affine(0.5,1)").unwrap();
        assert_eq!(parse_process("iid", &sys, 1).unwrap().id, "iid(-1,1)");
        assert_eq!(parse_process("constant(0.2)", &sys, 1).unwrap().id, "constant(0.2)");
        assert!(parse_process("observed(0.3,0.1)", &sys, 1).is_ok());
        assert!(parse_process("iid(1,-1)", &sys, 1).is_err());
        assert!(matches!(
            parse_process("brownian", &sys, 1),
            Err(Error::UnknownProcess(_))
        ));
    }
}
