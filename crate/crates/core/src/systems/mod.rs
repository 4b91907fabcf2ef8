//! Driven state-space systems `x_t = f(x_{t-1}, u_t)` and the input processes
//! that feed them.

mod catalog;
mod process;

pub use catalog::{catalog_get, catalog_names, load_system, FamilyConfig, SystemConfig};
pub use process::{parse_process, HiddenMap, InputProcess, Observation, ProcessKind};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::metric::{circle_wrap, Metric};
use crate::rng;
use crate::scalar::Scalar;
use crate::sequence::{InputWindow, StatePoint};

use rand::Rng;

#[derive(Clone, Debug, PartialEq)]
pub enum StateSpace<S> {
    /// Product of intervals `[lo_i, hi_i]`.
    Box { lo: Vec<S>, hi: Vec<S> },
    /// The unit circle R/Z in the signed chart `[-1/2, 1/2)`.
    Circle,
}

impl<S: Scalar> StateSpace<S> {
    pub fn dim(&self) -> usize {
        match self {
            StateSpace::Box { lo, .. } => lo.len(),
            StateSpace::Circle => 1,
        }
    }

    pub fn cube(dim: usize, lo: S, hi: S) -> Self {
        StateSpace::Box {
            lo: vec![lo; dim],
            hi: vec![hi; dim],
        }
    }

    pub fn contains(&self, x: &[S]) -> bool {
        if x.len() != self.dim() || x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match self {
            StateSpace::Box { lo, hi } => {
                let slack = S::lit(1e-12);
                x.iter()
                    .zip(lo.iter().zip(hi))
                    .all(|(&v, (&l, &h))| v >= l - slack && v <= h + slack)
            }
            StateSpace::Circle => x[0] >= S::lit(-0.5) && x[0] < S::lit(0.5),
        }
    }

    fn sample(&self, rng: &mut impl Rng) -> StatePoint<S> {
        match self {
            StateSpace::Box { lo, hi } => StatePoint::from_vec_unchecked(
                lo.iter()
                    .zip(hi)
                    .map(|(&l, &h)| l + (h - l) * S::lit(rng.random::<f64>()))
                    .collect(),
            ),
            StateSpace::Circle => {
                StatePoint::from_vec_unchecked(vec![S::lit(rng.random::<f64>() - 0.5)])
            }
        }
    }

    /// Largest distance between two points of the set under `metric`.
    pub fn diameter(&self, metric: Metric) -> S {
        match self {
            StateSpace::Box { lo, hi } => metric.distance(lo, hi),
            StateSpace::Circle => S::lit(0.5),
        }
    }
}

/// The registered state-map families.
#[derive(Clone, Debug, PartialEq)]
pub enum StateMap<S> {
    /// `clamp(a*x + b*u)` coordinatewise onto the state box.
    Affine { a: S, b: S, lo: S, hi: S },
    /// `tanh(W x + W_in u)`; `w` is `n x n`, `w_in` is `n x m`, both row-major.
    TanhEsn {
        w: Vec<S>,
        w_in: Vec<S>,
        n: usize,
        m: usize,
    },
    /// `x -> x^2` on `[0, 1]` with endpoints glued, input ignored.
    CircleSquare,
    /// `x -> x + alpha mod 1`, input ignored.
    Rotation { alpha: S },
    /// `x -> 2x mod 1`, input ignored.
    Doubling,
    /// `x -> c`.
    Constant { c: Vec<S> },
}

impl<S: Scalar> StateMap<S> {
    /// Writes `f(x, u)` into `out`.
    pub fn apply(&self, x: &[S], u: &[S], out: &mut [S]) {
        match self {
            StateMap::Affine { a, b, lo, hi } => {
                for ((o, &xi), &ui) in out.iter_mut().zip(x).zip(u) {
                    *o = (*a * xi + *b * ui).max(*lo).min(*hi);
                }
            }
            StateMap::TanhEsn { w, w_in, n, m } => {
                for i in 0..*n {
                    let row = &w[i * n..(i + 1) * n];
                    let mut acc = S::zero();
                    for (&wij, &xj) in row.iter().zip(x) {
                        acc = acc + wij * xj;
                    }
                    let in_row = &w_in[i * m..(i + 1) * m];
                    for (&vik, &uk) in in_row.iter().zip(u) {
                        acc = acc + vik * uk;
                    }
                    out[i] = acc.tanh();
                }
            }
            StateMap::CircleSquare => out[0] = circle_square(x[0]),
            StateMap::Rotation { alpha } => out[0] = circle_wrap(x[0] + *alpha),
            StateMap::Doubling => out[0] = circle_double(x[0]),
            StateMap::Constant { c } => out.copy_from_slice(c),
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            StateMap::Affine { .. } => "affine",
            StateMap::TanhEsn { .. } => "tanh_esn",
            StateMap::CircleSquare => "circle_square",
            StateMap::Rotation { .. } => "rotation",
            StateMap::Doubling => "doubling",
            StateMap::Constant { .. } => "constant",
        }
    }
}

/// `g(x) = x^2` on the circle, in the signed chart. On the negative side
/// (`x = 1 + y`, `y < 0`) the result `x^2 - 1 = y(2 + y)` keeps full relative
/// precision next to the glued fixed point.
fn circle_square<S: Scalar>(y: S) -> S {
    if y >= S::zero() {
        return y * y;
    }
    let near_one = y * (S::lit(2.0) + y);
    if near_one >= S::lit(-0.5) {
        near_one
    } else {
        let x = S::one() + y;
        x * x
    }
}

/// Angle doubling through sin/cos. Binary `2y mod 1` shifts mantissa bits out
/// and lands every float orbit on the fixed point 0 within ~54 steps.
fn circle_double<S: Scalar>(y: S) -> S {
    let tau = S::lit(std::f64::consts::TAU);
    let angle = S::lit(2.0) * tau * y;
    let v = angle.sin().atan2(angle.cos()) / tau;
    if v >= S::lit(0.5) {
        v - S::one()
    } else {
        v
    }
}

/// Adversarial states that depend on the time horizon under test.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum HardFamily {
    /// Circle points `1 - 2^-k` (chart value `-2^-k`) for
    /// `k = fixed+1 ..= horizon + margin`; they leave the glued fixed point
    /// after about `k` steps.
    DyadicBelowGlue { fixed: u32, margin: u32 },
}

impl HardFamily {
    fn states<S: Scalar>(&self, horizon: usize) -> Vec<StatePoint<S>> {
        match *self {
            HardFamily::DyadicBelowGlue { fixed, margin } => {
                let top = horizon as u32 + margin;
                ((fixed + 1)..=top)
                    .map(|k| S::lit(-(2f64.powi(-(k as i32)))))
                    .filter(|v| *v < S::zero())
                    .map(|v| StatePoint::from_vec_unchecked(vec![v]))
                    .collect()
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CompactnessFlags {
    pub state_compact: bool,
    pub input_compact: bool,
    pub input_metrizable: bool,
}

/// Closed-form echo-state functional.
#[derive(Clone, Debug, PartialEq)]
pub enum EchoOracle<S> {
    /// `H(u) = sum_{k>=0} a^k b u_{-k}` evaluated over the window's past.
    Affine { a: S, b: S },
    Constant { c: Vec<S> },
}

impl<S: Scalar> EchoOracle<S> {
    pub fn evaluate(&self, w: &InputWindow<S>) -> StatePoint<S> {
        match self {
            EchoOracle::Affine { a, b } => {
                let dim = w.dim();
                let mut acc = vec![S::zero(); dim];
                let mut weight = *b;
                for p in w.past_entries().iter().rev() {
                    for (s, &u) in acc.iter_mut().zip(p.values()) {
                        *s = *s + weight * u;
                    }
                    weight = weight * *a;
                }
                StatePoint::from_vec_unchecked(acc)
            }
            EchoOracle::Constant { c } => StatePoint::from_vec_unchecked(c.clone()),
        }
    }
}

/// Closed-form divergence rate: `d_n <= rate^n d_0`, with equality when `exact`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DivergenceOracle {
    pub rate: f64,
    pub exact: bool,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Oracles<S> {
    pub echo_state: Option<EchoOracle<S>>,
    pub divergence: Option<DivergenceOracle>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SystemSpec<S> {
    pub id: String,
    pub state_space: StateSpace<S>,
    pub input_dim: usize,
    /// Bounds shared by every input coordinate, when the input set is a box.
    pub input_box: Option<(S, S)>,
    pub map: StateMap<S>,
    pub state_metric: Metric,
    pub input_metric: Metric,
    pub hard_states: Vec<StatePoint<S>>,
    pub hard_family: Option<HardFamily>,
    pub flags: CompactnessFlags,
    pub oracles: Oracles<S>,
}

impl<S: Scalar> SystemSpec<S> {
    pub fn state_dim(&self) -> usize {
        self.state_space.dim()
    }

    pub fn step(&self, x: &StatePoint<S>, u: &[S]) -> StatePoint<S> {
        let mut out = vec![S::zero(); self.state_dim()];
        self.map.apply(x.values(), u, &mut out);
        StatePoint::from_vec_unchecked(out)
    }

    pub fn distance(&self, x: &StatePoint<S>, y: &StatePoint<S>) -> S {
        self.state_metric.distance(x.values(), y.values())
    }

    /// Coordinates of `x` as a point of the state set: circle states in
    /// `[0, 1)` up to rounding of `1 + y` for tiny negative `y`, box states
    /// unchanged.
    pub fn representative(&self, x: &StatePoint<S>) -> Vec<f64> {
        match self.state_space {
            StateSpace::Circle => x
                .values()
                .iter()
                .map(|&v| {
                    let v = v.as_f64();
                    if v < 0.0 {
                        1.0 + v
                    } else {
                        v
                    }
                })
                .collect(),
            StateSpace::Box { .. } => x.to_f64(),
        }
    }

    /// Inverse of [`Self::representative`]; circle coordinates are taken mod 1.
    pub fn from_representative(&self, coords: &[f64]) -> Result<StatePoint<S>> {
        let values: Vec<S> = match self.state_space {
            StateSpace::Circle => coords
                .iter()
                .map(|&v| {
                    let r = v.rem_euclid(1.0);
                    S::lit(if r >= 0.5 { r - 1.0 } else { r })
                })
                .collect(),
            StateSpace::Box { .. } => coords.iter().map(|&v| S::lit(v)).collect(),
        };
        if !self.state_space.contains(&values) {
            return Err(Error::InvalidPoint(format!("{coords:?} is not a state of {}", self.id)));
        }
        Ok(StatePoint::from_vec_unchecked(values))
    }

    /// `count` states drawn uniformly from the state set; state `i` depends
    /// only on `(seed, i)`.
    pub fn sample_states(&self, seed: u64, count: usize) -> Vec<StatePoint<S>> {
        (0..count)
            .map(|i| {
                let mut r = rng::stream(seed, rng::STREAM_STATES, i as u64);
                self.state_space.sample(&mut r)
            })
            .collect()
    }

    /// Fixed hard states plus the horizon-adaptive family for `horizon`.
    pub fn hard_states_for_horizon(&self, horizon: usize) -> Vec<StatePoint<S>> {
        let mut out = self.hard_states.clone();
        if let Some(f) = &self.hard_family {
            out.extend(f.states(horizon));
        }
        out
    }

    /// Checks dimensions and invariance of the state set under the map on
    /// sampled states and inputs.
    pub fn validate(&self, seed: u64, samples: usize) -> Result<()> {
        let n = self.state_dim();
        if let StateMap::TanhEsn { n: wn, m, .. } = &self.map {
            if *wn != n || *m != self.input_dim {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: *wn,
                });
            }
        }
        if let StateMap::Affine { .. } = &self.map {
            if self.input_dim != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: self.input_dim,
                });
            }
        }
        if let StateMap::Constant { c } = &self.map {
            if c.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: c.len(),
                });
            }
        }
        if matches!(self.state_space, StateSpace::Circle) && self.state_metric != Metric::Circle {
            return Err(Error::InvalidConfig(
                "circle state space needs the circle metric".into(),
            ));
        }
        for h in &self.hard_states {
            if !self.state_space.contains(h.values()) {
                return Err(Error::InvalidConfig(format!(
                    "hard state {:?} outside the state set",
                    h.to_f64()
                )));
            }
        }
        let (lo, hi) = self.input_box.unwrap_or((-S::one(), S::one()));
        let mut pool = self.sample_states(seed, samples);
        pool.extend(self.hard_states_for_horizon(0));
        for (i, x) in pool.iter().enumerate() {
            let mut r = rng::stream(seed, rng::STREAM_SYSTEM, 1 + i as u64);
            let u: Vec<S> = (0..self.input_dim)
                .map(|_| lo + (hi - lo) * S::lit(r.random::<f64>()))
                .collect();
            let y = self.step(x, &u);
            if !self.state_space.contains(y.values()) {
                return Err(Error::InvalidConfig(format!(
                    "state map leaves the state set: f({:?}, {:?}) = {:?}",
                    x.to_f64(),
                    u.iter().map(|v| v.as_f64()).collect::<Vec<_>>(),
                    y.to_f64()
                )));
            }
        }
        Ok(())
    }
}
