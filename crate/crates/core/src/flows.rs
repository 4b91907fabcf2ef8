//! Reservoir flow, its pullback form, the extended autonomous map, echo-state
//! estimation, reachable-state sampling and pullback-image diameters.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::metric::Metric;
use crate::rng;
use crate::scalar::Scalar;
use crate::sequence::{InputPoint, InputWindow, StatePoint};
use crate::systems::{InputProcess, SystemSpec};

/// Above this many points, diameters are estimated from random pairs.
pub const EXACT_DIAMETER_LIMIT: usize = 512;

/// Applies the state map along `inputs` in order.
pub fn iterate<S: Scalar>(
    sys: &SystemSpec<S>,
    x: &StatePoint<S>,
    inputs: &[InputPoint<S>],
) -> StatePoint<S> {
    let mut cur = x.values().to_vec();
    let mut next = vec![S::zero(); cur.len()];
    for u in inputs {
        sys.map.apply(&cur, u.values(), &mut next);
        std::mem::swap(&mut cur, &mut next);
    }
    StatePoint::from_vec_unchecked(cur)
}

/// `psi_n(x, w)`: starts at `x` at time 0 and consumes inputs at times `1..=n`.
pub fn forward_flow<S: Scalar>(
    sys: &SystemSpec<S>,
    x: &StatePoint<S>,
    w: &InputWindow<S>,
    n: usize,
) -> Result<StatePoint<S>> {
    if w.future_horizon() < n {
        return Err(Error::InsufficientHorizon {
            side: "future",
            needed: n,
            available: w.future_horizon(),
        });
    }
    Ok(iterate(sys, x, &w.future_entries()[..n]))
}

/// `psi_n(x, T^n w)`: starts at `x` at time `-n` and consumes inputs at times
/// `-n+1..=0`.
pub fn pullback_flow<S: Scalar>(
    sys: &SystemSpec<S>,
    x: &StatePoint<S>,
    w: &InputWindow<S>,
    n: usize,
) -> Result<StatePoint<S>> {
    if w.past_horizon() < n {
        return Err(Error::InsufficientHorizon {
            side: "past",
            needed: n,
            available: w.past_horizon(),
        });
    }
    let past = w.past_entries();
    Ok(iterate(sys, x, &past[past.len() - n..]))
}

/// One step of the extended map `phi(x, u) = ((x, f(x_0, u_1)), sigma(u))`.
/// `traj` holds states at times `-m..=0`, oldest first.
pub fn extended_step<S: Scalar>(
    sys: &SystemSpec<S>,
    traj: &[StatePoint<S>],
    w: &InputWindow<S>,
) -> Result<(Vec<StatePoint<S>>, InputWindow<S>)> {
    let x0 = traj
        .last()
        .ok_or_else(|| Error::InvalidConfig("empty state trajectory".into()))?;
    let u1 = w.at(1).map_err(|_| Error::InsufficientHorizon {
        side: "future",
        needed: 1,
        available: w.future_horizon(),
    })?;
    let next = sys.step(x0, u1);
    let mut out = Vec::with_capacity(traj.len() + 1);
    out.extend_from_slice(traj);
    out.push(next);
    Ok((out, w.shift(-1)?))
}

#[derive(Clone, Copy, Debug)]
pub struct EchoConfig {
    /// Pullback steps.
    pub n: usize,
    /// Sampled starting states, on top of the system's hard states.
    pub samples: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for EchoConfig {
    fn default() -> Self {
        Self {
            n: 200,
            samples: 64,
            tol: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EchoStateEstimate<S> {
    /// Image of the first sampled state; a representative, not a mean.
    pub state: StatePoint<S>,
    /// Diameter of the pullback image of the sample set.
    pub residual: S,
    pub n_used: usize,
    pub converged: bool,
}

/// Pullback limit estimate of the echo state `H(tau(w))`.
pub fn estimate_echo_state<S: Scalar>(
    sys: &SystemSpec<S>,
    w: &InputWindow<S>,
    cfg: &EchoConfig,
) -> Result<EchoStateEstimate<S>> {
    if w.past_horizon() < cfg.n {
        return Err(Error::InsufficientHorizon {
            side: "past",
            needed: cfg.n,
            available: w.past_horizon(),
        });
    }
    let mut starts = sys.sample_states(cfg.seed, cfg.samples.max(1));
    starts.extend(sys.hard_states_for_horizon(cfg.n));
    let images = starts
        .iter()
        .map(|x| pullback_flow(sys, x, w, cfg.n))
        .collect::<Result<Vec<_>>>()?;
    let residual = diameter(sys.state_metric, &images).value;
    Ok(EchoStateEstimate {
        state: images[0].clone(),
        residual,
        n_used: cfg.n,
        converged: residual.as_f64() < cfg.tol,
    })
}

/// A state reached after `burn_in` steps, with what is needed to replay it.
#[derive(Clone, Debug, PartialEq)]
pub struct ReachableSample<S> {
    pub seed_state: StatePoint<S>,
    pub window: InputWindow<S>,
    pub state: StatePoint<S>,
}

/// Approximate elements of the reachable set: `count` sampled seed states
/// pulled through independent past windows of length `burn_in`.
pub fn sample_reachable<S: Scalar>(
    sys: &SystemSpec<S>,
    proc: &InputProcess<S>,
    burn_in: usize,
    count: usize,
) -> Result<Vec<ReachableSample<S>>> {
    let seeds = sys.sample_states(proc.seed ^ 0x7265_6163_6821, count);
    reachable_from(sys, proc, burn_in, &seeds)
}

/// Reachable states grown from the given seed states; seed `i` uses the
/// `i`-th reachability window of `proc`.
pub fn reachable_from<S: Scalar>(
    sys: &SystemSpec<S>,
    proc: &InputProcess<S>,
    burn_in: usize,
    seeds: &[StatePoint<S>],
) -> Result<Vec<ReachableSample<S>>> {
    if burn_in == 0 {
        return Err(Error::InvalidConfig("burn_in must be at least 1".into()));
    }
    seeds
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let window = proc.draw(burn_in, 0, rng::STREAM_REACHABLE_WINDOWS, i as u64)?;
            let state = pullback_flow(sys, x, &window, burn_in)?;
            Ok(ReachableSample {
                seed_state: x.clone(),
                window,
                state,
            })
        })
        .collect()
}

/// Max pairwise state distance over `{ psi_n(x, T^n w) : x in samples }`.
pub fn pullback_image_diameter<S: Scalar>(
    sys: &SystemSpec<S>,
    w: &InputWindow<S>,
    n: usize,
    samples: &[StatePoint<S>],
) -> Result<S> {
    let images = samples
        .iter()
        .map(|x| pullback_flow(sys, x, w, n))
        .collect::<Result<Vec<_>>>()?;
    Ok(diameter(sys.state_metric, &images).value)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Diameter<S> {
    pub value: S,
    /// Indices of the farthest pair found.
    pub pair: (usize, usize),
    /// False when estimated from random pairs.
    pub exact: bool,
}

pub fn diameter<S: Scalar>(metric: Metric, points: &[StatePoint<S>]) -> Diameter<S> {
    diameter_by(points.len(), |i, j| {
        metric.distance(points[i].values(), points[j].values())
    })
}

/// Diameter of `len` points given a pair distance; exact up to
/// [`EXACT_DIAMETER_LIMIT`] points, sampled pairs above.
pub(crate) fn diameter_by<S: Scalar>(len: usize, dist: impl Fn(usize, usize) -> S) -> Diameter<S> {
    let mut best = Diameter {
        value: S::zero(),
        pair: (0, 0),
        exact: true,
    };
    if len <= EXACT_DIAMETER_LIMIT {
        for i in 0..len {
            for j in i + 1..len {
                let d = dist(i, j);
                if d > best.value {
                    best.value = d;
                    best.pair = (i, j);
                }
            }
        }
        return best;
    }
    best.exact = false;
    let mut r = rng::stream(0, rng::STREAM_PAIRS, len as u64);
    let draws = EXACT_DIAMETER_LIMIT * EXACT_DIAMETER_LIMIT / 2;
    for _ in 0..draws {
        let i = r.random_range(0..len);
        let j = r.random_range(0..len);
        let d = dist(i, j);
        if d > best.value {
            best.value = d;
            best.pair = (i.min(j), i.max(j));
        }
    }
    best
}

/// `d_n` for one pair of initial states, forward (`psi_n(x, w)`) or shifted
/// (`psi_n(x, T^n w)`).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectoryPair {
    pub system: String,
    pub seed: u64,
    pub x: Vec<f64>,
    pub x_prime: Vec<f64>,
    pub window: String,
    pub shifted: bool,
    pub n_values: Vec<usize>,
    pub d_values: Vec<f64>,
}

pub fn divergence_curve<S: Scalar>(
    sys: &SystemSpec<S>,
    x: &StatePoint<S>,
    x_prime: &StatePoint<S>,
    w: &InputWindow<S>,
    n_max: usize,
    shifted: bool,
    seed: u64,
) -> Result<TrajectoryPair> {
    let mut d_values = Vec::with_capacity(n_max);
    if shifted {
        for n in 1..=n_max {
            let a = pullback_flow(sys, x, w, n)?;
            let b = pullback_flow(sys, x_prime, w, n)?;
            d_values.push(sys.distance(&a, &b).as_f64());
        }
    } else {
        if w.future_horizon() < n_max {
            return Err(Error::InsufficientHorizon {
                side: "future",
                needed: n_max,
                available: w.future_horizon(),
            });
        }
        let (mut a, mut b) = (x.clone(), x_prime.clone());
        for u in &w.future_entries()[..n_max] {
            a = sys.step(&a, u.values());
            b = sys.step(&b, u.values());
            d_values.push(sys.distance(&a, &b).as_f64());
        }
    }
    Ok(TrajectoryPair {
        system: sys.id.clone(),
        seed,
        x: x.to_f64(),
        x_prime: x_prime.to_f64(),
        window: w.describe(),
        shifted,
        n_values: (1..=n_max).collect(),
        d_values,
    })
}

/// Pullback-image diameter for `n = 0..=n_max`.
pub fn diameter_curve<S: Scalar>(
    sys: &SystemSpec<S>,
    w: &InputWindow<S>,
    samples: &[StatePoint<S>],
    n_max: usize,
) -> Result<Vec<(usize, f64)>> {
    (0..=n_max)
        .map(|n| Ok((n, pullback_image_diameter(sys, w, n, samples)?.as_f64())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::circle_gap;
    use crate::systems::catalog_get;

    fn affine() -> SystemSpec<f64> {
        catalog_get("affine(0.5,1)").unwrap()
    }

    fn iid_window(b: usize, h: usize, seed: u64) -> InputWindow<f64> {
        InputProcess::iid(-1.0, 1.0, 1, seed).generate_window(b, h).unwrap()
    }

    #[test]
    fn forward_affine_matches_unrolled_sum() {
        let sys = affine();
        let w = iid_window(0, 30, 5);
        let x = StatePoint::scalar(1.7);
        for n in 1..=30 {
            let mut expect = 0.5f64.powi(n as i32) * 1.7;
            for k in 1..=n {
                expect += 0.5f64.powi((n - k) as i32) * w.at(k as i64).unwrap()[0];
            }
            let got = forward_flow(&sys, &x, &w, n).unwrap().values()[0];
            assert!((got - expect).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn forward_is_sequential_state_map() {
        let sys: SystemSpec<f64> = catalog_get("tanh_esn(0.9)").unwrap();
        let w = iid_window(0, 12, 8);
        let x = sys.sample_states(1, 1).pop().unwrap();
        let mut y = x.clone();
        for t in 1..=12 {
            y = sys.step(&y, w.at(t).unwrap());
        }
        assert_eq!(forward_flow(&sys, &x, &w, 12).unwrap(), y);
    }

    #[test]
    fn constant_system_flows_hit_c() {
        let sys: SystemSpec<f64> = catalog_get("constant(0.25)").unwrap();
        let w = iid_window(5, 5, 1);
        for n in 1..=5 {
            let x = StatePoint::scalar(-0.9);
            assert_eq!(forward_flow(&sys, &x, &w, n).unwrap().values(), &[0.25]);
            assert_eq!(pullback_flow(&sys, &x, &w, n).unwrap().values(), &[0.25]);
        }
    }

    #[test]
    fn flows_check_horizons() {
        let sys = affine();
        let w = iid_window(3, 2, 0);
        let x = StatePoint::scalar(0.0);
        assert!(matches!(
            forward_flow(&sys, &x, &w, 3),
            Err(Error::InsufficientHorizon { side: "future", .. })
        ));
        assert!(matches!(
            pullback_flow(&sys, &x, &w, 4),
            Err(Error::InsufficientHorizon { side: "past", .. })
        ));
    }

    #[test]
    fn pullback_on_circle_is_repeated_squaring() {
        let sys: SystemSpec<f64> = catalog_get("circle_square").unwrap();
        let w = iid_window(12, 0, 2);
        for y in [0.3, -0.2, 0.45, -0.01] {
            let x01: f64 = if y < 0.0 { 1.0 + y } else { y };
            for n in 1..=12 {
                let expect = x01.powf(2f64.powi(n));
                let got = pullback_flow(&sys, &StatePoint::scalar(y), &w, n as usize).unwrap();
                assert!(circle_gap(got.values()[0], expect) < 1e-12, "y={y} n={n}");
            }
        }
    }

    #[test]
    fn pullback_affine_constant_input_sums_geometric_series() {
        let sys = affine();
        let w = InputWindow::constant(InputPoint::scalar(1.0), 80, 0);
        let x = pullback_flow(&sys, &StatePoint::scalar(0.0), &w, 80).unwrap();
        assert!((x.values()[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn pullback_is_forward_on_shifted_window() {
        let sys: SystemSpec<f64> = catalog_get("tanh_esn(0.9)").unwrap();
        let w = iid_window(25, 4, 13);
        let x = sys.sample_states(4, 1).pop().unwrap();
        for n in 1..=25 {
            let shifted = w.shift(n as i64).unwrap();
            assert_eq!(
                pullback_flow(&sys, &x, &w, n).unwrap(),
                forward_flow(&sys, &x, &shifted, n).unwrap()
            );
        }
    }

    #[test]
    fn extended_map_projects_onto_forward_flow() {
        let sys = affine();
        let w = iid_window(4, 20, 3);
        let x0 = StatePoint::scalar(-1.25);
        let mut traj = vec![StatePoint::scalar(0.0), x0.clone()];
        let mut win = w.clone();
        for n in 1..=20 {
            (traj, win) = extended_step(&sys, &traj, &win).unwrap();
            assert_eq!(traj.last().unwrap(), &forward_flow(&sys, &x0, &w, n).unwrap());
            assert_eq!(win, w.shift(-(n as i64)).unwrap());
        }
        assert_eq!(traj.len(), 22);
        assert!(extended_step(&sys, &traj, &win).is_err());
    }

    #[test]
    fn extended_step_on_constant_appends_c() {
        let sys: SystemSpec<f64> = catalog_get("constant(0.25)").unwrap();
        let w = iid_window(0, 1, 0);
        let (traj, _) = extended_step(&sys, &[StatePoint::scalar(0.9)], &w).unwrap();
        assert_eq!(traj[1].values(), &[0.25]);
    }

    #[test]
    fn echo_state_of_contraction_converges() {
        let sys = affine();
        let w = InputWindow::constant(InputPoint::scalar(0.0), 60, 0);
        let cfg = EchoConfig {
            n: 60,
            ..EchoConfig::default()
        };
        let est = estimate_echo_state(&sys, &w, &cfg).unwrap();
        assert!(est.state.values()[0].abs() <= 0.5f64.powi(60) * 2.0);
        assert!(est.residual <= 0.5f64.powi(60) * 4.0);
        assert!(est.converged);
    }

    #[test]
    fn echo_state_of_circle_square_does_not_converge() {
        let sys: SystemSpec<f64> = catalog_get("circle_square").unwrap();
        let w = iid_window(200, 0, 0);
        let est = estimate_echo_state(&sys, &w, &EchoConfig::default()).unwrap();
        assert!(est.residual > 0.4, "residual {}", est.residual);
        assert!(!est.converged);
    }

    #[test]
    fn echo_state_of_constant_is_exact_after_one_step() {
        let sys: SystemSpec<f64> = catalog_get("constant(0.25)").unwrap();
        let w = iid_window(1, 0, 0);
        let cfg = EchoConfig {
            n: 1,
            ..EchoConfig::default()
        };
        let est = estimate_echo_state(&sys, &w, &cfg).unwrap();
        assert_eq!(est.residual, 0.0);
        assert_eq!(est.state.values(), &[0.25]);
    }

    #[test]
    fn reachable_states_replay_exactly() {
        let sys: SystemSpec<f64> = catalog_get("tanh_esn(0.9)").unwrap();
        let proc = InputProcess::iid(-1.0, 1.0, 1, 77);
        for r in sample_reachable(&sys, &proc, 16, 8).unwrap() {
            assert_eq!(pullback_flow(&sys, &r.seed_state, &r.window, 16).unwrap(), r.state);
        }
    }

    #[test]
    fn reachable_sets_of_catalog_systems() {
        let proc = InputProcess::iid(-1.0, 1.0, 1, 4);
        let c: SystemSpec<f64> = catalog_get("constant(0.25)").unwrap();
        assert!(sample_reachable(&c, &proc, 5, 10)
            .unwrap()
            .iter()
            .all(|r| r.state.values() == [0.25]));
        let a = affine();
        assert!(sample_reachable(&a, &proc, 30, 50)
            .unwrap()
            .iter()
            .all(|r| r.state.values()[0].abs() <= 2.0));
        let g: SystemSpec<f64> = catalog_get("circle_square").unwrap();
        for r in sample_reachable(&g, &proc, 3, 10).unwrap() {
            let y = r.seed_state.values()[0];
            let x01: f64 = if y < 0.0 { 1.0 + y } else { y };
            assert!(circle_gap(r.state.values()[0], x01.powi(8)) < 1e-12);
        }
        assert!(sample_reachable(&a, &proc, 0, 1).is_err());
    }

    #[test]
    fn affine_pullback_diameter_contracts_at_rate_a() {
        let sys = affine();
        let w = iid_window(40, 0, 9);
        let samples = sys.sample_states(2, 20);
        let d0 = pullback_image_diameter(&sys, &w, 0, &samples).unwrap();
        assert_eq!(d0, diameter(Metric::Euclidean, &samples).value);
        for n in 1..=40 {
            let dn = pullback_image_diameter(&sys, &w, n, &samples).unwrap();
            assert!((dn - 0.5f64.powi(n as i32) * d0).abs() < 1e-9);
        }
    }

    #[test]
    fn circle_square_pullback_diameter_stays_large_on_hard_grid() {
        let sys: SystemSpec<f64> = catalog_get("circle_square").unwrap();
        let w = iid_window(30, 0, 9);
        for n in 0..=30 {
            let d = pullback_image_diameter(&sys, &w, n, &sys.hard_states).unwrap();
            assert!(d >= 0.4, "n={n} d={d}");
        }
    }

    #[test]
    fn large_sets_use_sampled_diameter() {
        let pts: Vec<StatePoint<f64>> = (0..600).map(|i| StatePoint::scalar(i as f64)).collect();
        let d = diameter(Metric::Euclidean, &pts);
        assert!(!d.exact);
        assert!(d.value > 500.0 && d.value <= 599.0);
        let small = diameter(Metric::Euclidean, &pts[..10]);
        assert!(small.exact);
        assert_eq!(small.value, 9.0);
        assert_eq!(small.pair, (0, 9));
    }
}
