use rayon::prelude::*;

use super::engine::{max_over, Session};
use super::{Evidence, Level, Property, PropertyVerdict, Variant, Witness};
use crate::error::Result;
use crate::scalar::Scalar;

/// Ladder points below this are dominated by roundoff and left out of the
/// decay-rate fit.
const FIT_FLOOR: f64 = 1e-10;

/// Least-squares slope of `ln y` against `x`.
pub(super) fn log_slope(points: &[(usize, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let m = points.len() as f64;
    let mx = points.iter().map(|p| p.0 as f64).sum::<f64>() / m;
    let my = points.iter().map(|p| p.1.ln()).sum::<f64>() / m;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(x, y) in points {
        let dx = x as f64 - mx;
        sxy += dx * (y.ln() - my);
        sxx += dx * dx;
    }
    (sxx > 0.0).then(|| sxy / sxx)
}

impl<S: Scalar> Session<'_, S> {
    fn not_applicable(&self, property: Property, reason: &str) -> PropertyVerdict {
        let mut ev = self.base_evidence(Vec::new());
        ev.set_flag(reason, true);
        PropertyVerdict::new(property, Level::NotApplicable, ev, None)
    }

    /// Ladder `4, 8, ..., n_max` of perturbation depths.
    fn ladder(&self) -> Vec<usize> {
        let l: Vec<usize> = (4..=self.cfg.n_max).step_by(4).collect();
        if l.is_empty() {
            vec![self.cfg.n_max]
        } else {
            l
        }
    }

    /// Fading memory in the product topology, probed through
    /// `delta(n) = max_{u'} d(H(gamma^n(u', u)), H(u))`.
    pub fn fmp(&self) -> Result<PropertyVerdict> {
        if self.esp()?.level != Level::Uniform {
            return Ok(self.not_applicable(Property::Fmp, "esp_unsupported"));
        }
        let ladder = self.ladder();
        let perts = self.perturbations()?;
        let sampled: Vec<usize> = (0..self.probes.len())
            .filter(|&i| !self.probes[i].adversarial)
            .collect();
        let metric = self.sys.state_metric;
        // per window: delta at each ladder point, with the maximising perturbation
        let rows = sampled
            .par_iter()
            .map(|&pi| {
                let u = &self.probes[pi].window;
                let h_u = self.echo_tau(u);
                ladder
                    .iter()
                    .map(|&n| {
                        let mut best = (0usize, 0.0f64, h_u.clone());
                        for (qi, q) in perts.iter().enumerate() {
                            let h = self.echo_gamma(n, &q.window, u);
                            let d = metric.distance(&h, &h_u).as_f64();
                            if qi == 0 || d > best.1 {
                                best = (qi, d, h);
                            }
                        }
                        best
                    })
                    .collect::<Vec<_>>()
            })
            .collect::<Vec<_>>();
        let delta: Vec<f64> = (0..ladder.len())
            .map(|k| max_over(rows.iter().map(|r| r[k].1)))
            .collect();
        let tail = self.tail_positions(&ladder);
        let tail_max = max_over(tail.iter().map(|&k| delta[k]));
        let fit: Vec<(usize, f64)> = ladder
            .iter()
            .zip(&delta)
            .filter(|(_, &d)| d >= FIT_FLOOR)
            .map(|(&n, &d)| (n, d))
            .collect();
        let slope = log_slope(&fit);

        let witness = (tail_max >= self.cfg.tol).then(|| {
            let mut best = (0usize, 0usize, -1.0);
            for (ri, r) in rows.iter().enumerate() {
                for &k in &tail {
                    if r[k].1 > best.2 {
                        best = (ri, k, r[k].1);
                    }
                }
            }
            let (ri, k, value) = best;
            let probe = &self.probes[sampled[ri]];
            let q = &perts[rows[ri][k].0];
            let h_u = crate::sequence::StatePoint::from_vec_unchecked(self.echo_tau(&probe.window));
            let h_g = crate::sequence::StatePoint::from_vec_unchecked(rows[ri][k].2.clone());
            let (states, raw_states) = self.witness_states(&[&h_g, &h_u]);
            Witness {
                description: format!(
                    "FMP: echo states of gamma^{}(u', u) and u differ by {value:.3e}; u = {}, u' = {}",
                    ladder[k], probe.label, q.label
                ),
                seed: self.cfg.seed,
                n: ladder[k],
                value,
                states,
                raw_states,
                windows: vec![probe.labeled(), q.labeled()],
            }
        });
        let level = if witness.is_some() {
            Level::Refuted
        } else {
            Level::Uniform
        };
        let mut ev = self.base_evidence(ladder);
        ev.set_curve("delta", delta);
        ev.set_value("tail_max_delta", tail_max);
        if let Some(s) = slope {
            ev.set_value("fitted_log_slope", s);
        }
        if let Some(o) = self.sys.oracles.divergence {
            if o.rate > 0.0 {
                ev.set_value("oracle_log_rate", o.rate.ln());
            }
        }
        ev.set_count("fit_points", fit.len());
        ev.set_count("perturbations", perts.len());
        ev.set_count("echo_steps", self.past);
        Ok(PropertyVerdict::new(Property::Fmp, level, ev, witness))
    }

    /// Uniform attraction, tested as the ESP together with the uniform SFP.
    /// The reduced form `sup d(psi_n(x, u), psi_n(H(tau u), u))` is probed as a
    /// consistency check.
    pub fn uniform_attracting(&self) -> Result<PropertyVerdict> {
        let esp = self.esp()?.clone();
        let sfp = self.forgetting(Variant::Sfp)?;
        let esp_ok = esp.level == Level::Uniform;
        let sfp_ok = sfp.level == Level::Uniform;
        let supported = esp_ok && sfp_ok;

        let n_max = self.cfg.n_max;
        let tail_start = n_max + 1 - self.cfg.tail_window;
        let metric = self.sys.state_metric;
        let probe_sup = self
            .probes
            .par_iter()
            .map(|p| {
                let future = &p.window.future_entries()[..n_max];
                let mut anchor = self.echo_tau(&p.window);
                let mut xs: Vec<Vec<S>> =
                    self.states.states.iter().map(|x| x.values().to_vec()).collect();
                let mut scratch = vec![S::zero(); anchor.len()];
                let mut sup = 0.0f64;
                for (n, u) in (1..=n_max).zip(future) {
                    self.sys.map.apply(&anchor, u.values(), &mut scratch);
                    std::mem::swap(&mut anchor, &mut scratch);
                    for x in xs.iter_mut() {
                        self.sys.map.apply(x, u.values(), &mut scratch);
                        x.copy_from_slice(&scratch);
                        if n >= tail_start {
                            sup = sup.max(metric.distance(x, &anchor).as_f64());
                        }
                    }
                }
                sup
            })
            .collect::<Vec<_>>();
        let probe_tail_max = max_over(probe_sup);

        let mut ev: Evidence = self.base_evidence(Vec::new());
        ev.set_flag("esp_supported", esp_ok);
        ev.set_flag("sfp_uniform", sfp_ok);
        ev.set_value("probe_tail_max", probe_tail_max);
        ev.set_flag(
            "probe_consistent",
            !supported || probe_tail_max < self.cfg.tol,
        );
        let witness = if supported {
            None
        } else if !esp_ok {
            esp.witness.clone()
        } else {
            sfp.witness.clone()
        };
        let level = if supported {
            Level::Uniform
        } else {
            Level::Refuted
        };
        Ok(PropertyVerdict::new(Property::Uap, level, ev, witness))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_exact_exponential() {
        let pts: Vec<(usize, f64)> = (1..10).map(|n| (n * 4, 0.7f64.powi(4 * n as i32))).collect();
        assert!((log_slope(&pts).unwrap() - 0.7f64.ln()).abs() < 1e-12);
        assert!(log_slope(&pts[..1]).is_none());
    }
}
