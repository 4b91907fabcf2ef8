//! Finite windows onto left- and bi-infinite input sequences.
//!
//! A window holds the entries at logical times `-B+1, ..., 0` (the past, `B` is
//! the past horizon) and `1, ..., H` (the future). All accessors take logical
//! times; array offsets never leak out of this module.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::Metric;
use crate::scalar::Scalar;

macro_rules! point_type {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name<S>(Vec<S>);

        impl<S: Scalar> $name<S> {
            /// Rejects non-finite coordinates.
            pub fn new(values: Vec<S>) -> Result<Self> {
                if let Some(v) = values.iter().find(|v| !v.is_finite()) {
                    return Err(Error::InvalidPoint(format!("non-finite coordinate {v}")));
                }
                Ok(Self(values))
            }

            pub fn scalar(value: S) -> Self {
                Self(vec![value])
            }

            pub fn values(&self) -> &[S] {
                &self.0
            }

            pub fn values_mut(&mut self) -> &mut [S] {
                &mut self.0
            }

            pub fn dim(&self) -> usize {
                self.0.len()
            }

            pub fn into_inner(self) -> Vec<S> {
                self.0
            }

            pub fn to_f64(&self) -> Vec<f64> {
                self.0.iter().map(|v| v.as_f64()).collect()
            }

            pub(crate) fn from_vec_unchecked(values: Vec<S>) -> Self {
                Self(values)
            }
        }
    };
}

point_type!(
    /// Element of the input space: a fixed-length real vector.
    InputPoint
);
point_type!(
    /// Element of the state space. Circle states use the signed chart `[-1/2, 1/2)`.
    StatePoint
);

#[derive(Clone, Debug, PartialEq)]
pub struct InputWindow<S> {
    dim: usize,
    past: usize,
    entries: Vec<InputPoint<S>>,
}

impl<S: Scalar> InputWindow<S> {
    /// `past` is ordered oldest first (times `-B+1..=0`), `future` times `1..=H`.
    pub fn new(dim: usize, past: Vec<InputPoint<S>>, future: Vec<InputPoint<S>>) -> Result<Self> {
        let b = past.len();
        let mut entries = past;
        entries.extend(future);
        for p in &entries {
            if p.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: p.dim(),
                });
            }
        }
        Ok(Self {
            dim,
            past: b,
            entries,
        })
    }

    pub fn from_fn(
        dim: usize,
        past_horizon: usize,
        future_horizon: usize,
        mut entry: impl FnMut(i64) -> InputPoint<S>,
    ) -> Result<Self> {
        let lo = 1 - past_horizon as i64;
        let entries: Vec<_> = (lo..=future_horizon as i64).map(&mut entry).collect();
        let future = entries[past_horizon..].to_vec();
        let mut past = entries;
        past.truncate(past_horizon);
        Self::new(dim, past, future)
    }

    pub fn constant(value: InputPoint<S>, past_horizon: usize, future_horizon: usize) -> Self {
        Self {
            dim: value.dim(),
            past: past_horizon,
            entries: vec![value; past_horizon + future_horizon],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn past_horizon(&self) -> usize {
        self.past
    }

    pub fn future_horizon(&self) -> usize {
        self.entries.len() - self.past
    }

    pub fn is_past_only(&self) -> bool {
        self.future_horizon() == 0
    }

    pub fn earliest_time(&self) -> i64 {
        1 - self.past as i64
    }

    pub fn latest_time(&self) -> i64 {
        self.future_horizon() as i64
    }

    fn offset(&self, t: i64) -> Option<usize> {
        let i = t + self.past as i64 - 1;
        (i >= 0 && (i as usize) < self.entries.len()).then_some(i as usize)
    }

    pub fn get(&self, t: i64) -> Option<&InputPoint<S>> {
        self.offset(t).map(|i| &self.entries[i])
    }

    /// Entry at logical time `t`, or a horizon error.
    pub fn at(&self, t: i64) -> Result<&[S]> {
        self.get(t).map(|p| p.values()).ok_or_else(|| {
            Error::HorizonExhausted(format!(
                "time {t} outside [{}, {}]",
                self.earliest_time(),
                self.latest_time()
            ))
        })
    }

    /// `(time, entry)` pairs, oldest first.
    pub fn iter(&self) -> impl Iterator<Item = (i64, &InputPoint<S>)> + '_ {
        let lo = self.earliest_time();
        self.entries.iter().enumerate().map(move |(i, p)| (lo + i as i64, p))
    }

    pub fn past_entries(&self) -> &[InputPoint<S>] {
        &self.entries[..self.past]
    }

    pub fn future_entries(&self) -> &[InputPoint<S>] {
        &self.entries[self.past..]
    }

    /// Shift by `k` steps: the result's entry at time `t` is this window's entry
    /// at time `t - k`. Positive `k` is the right shift `T^k` (entries move
    /// towards the future, the past horizon shrinks); negative `k` is the left
    /// shift `sigma^|k|` (future entries are absorbed into the past).
    pub fn shift(&self, k: i64) -> Result<Self> {
        let new_past = self.past as i64 - k;
        let new_future = self.future_horizon() as i64 + k;
        if new_past < 0 || new_future < 0 {
            return Err(Error::HorizonExhausted(format!(
                "shift by {k} needs past >= {} and future >= {}, window has B={} H={}",
                k.max(0),
                (-k).max(0),
                self.past,
                self.future_horizon()
            )));
        }
        Ok(Self {
            dim: self.dim,
            past: new_past as usize,
            entries: self.entries.clone(),
        })
    }

    /// Drops the future part (`tau`).
    pub fn truncate_past(&self) -> Self {
        Self {
            dim: self.dim,
            past: self.past,
            entries: self.entries[..self.past].to_vec(),
        }
    }

    /// Keeps only the latest `b` past entries; the future is untouched.
    pub fn restrict_past(&self, b: usize) -> Result<Self> {
        if b > self.past {
            return Err(Error::InsufficientHorizon {
                side: "past",
                needed: b,
                available: self.past,
            });
        }
        Ok(Self {
            dim: self.dim,
            past: b,
            entries: self.entries[self.past - b..].to_vec(),
        })
    }

    /// Summary of the window for diagnostics.
    pub fn describe(&self) -> String {
        format!("B={} H={} dim={}", self.past, self.future_horizon(), self.dim)
    }
}

/// `shift_window(w, k)`, see [`InputWindow::shift`].
pub fn shift_window<S: Scalar>(w: &InputWindow<S>, k: i64) -> Result<InputWindow<S>> {
    w.shift(k)
}

pub fn truncate_past<S: Scalar>(w: &InputWindow<S>) -> InputWindow<S> {
    w.truncate_past()
}

/// `gamma^n(old, new)`: the latest `n` entries of `new` (times `-n+1..=0`)
/// preceded by all of `old`, whose time-0 entry lands at time `-n`.
pub fn concat_gamma<S: Scalar>(
    n: usize,
    old: &InputWindow<S>,
    new: &InputWindow<S>,
) -> Result<InputWindow<S>> {
    for w in [old, new] {
        if !w.is_past_only() {
            return Err(Error::NotPastOnly(w.future_horizon()));
        }
    }
    if old.dim != new.dim {
        return Err(Error::DimensionMismatch {
            expected: new.dim,
            found: old.dim,
        });
    }
    if new.past < n {
        return Err(Error::InsufficientHorizon {
            side: "past",
            needed: n,
            available: new.past,
        });
    }
    let mut entries = Vec::with_capacity(old.past + n);
    entries.extend_from_slice(&old.entries);
    entries.extend_from_slice(&new.entries[new.past - n..]);
    Ok(InputWindow {
        dim: new.dim,
        past: old.past + n,
        entries,
    })
}

/// Product-topology metric `sup_t 2^t min{1, d_U(w1_t, w2_t)}` over the common
/// past `t = -B+1..=0`. Terms before the window are bounded by
/// [`product_tail_bound`].
pub fn product_distance<S: Scalar>(
    w1: &InputWindow<S>,
    w2: &InputWindow<S>,
    metric: Metric,
) -> Result<S> {
    for w in [w1, w2] {
        if !w.is_past_only() {
            return Err(Error::NotPastOnly(w.future_horizon()));
        }
    }
    if w1.past != w2.past {
        return Err(Error::HorizonMismatch {
            left: w1.past,
            right: w2.past,
        });
    }
    if w1.dim != w2.dim {
        return Err(Error::DimensionMismatch {
            expected: w1.dim,
            found: w2.dim,
        });
    }
    let two = S::lit(2.0);
    let mut sup = S::zero();
    // newest first: weight halves every step back
    let mut weight = S::one();
    for (a, b) in w1.entries.iter().rev().zip(w2.entries.iter().rev()) {
        let d = metric.distance(a.values(), b.values()).min(S::one());
        sup = sup.max(weight * d);
        weight = weight / two;
    }
    Ok(sup)
}

/// Upper bound on product-metric terms older than a window of past horizon `b`.
pub fn product_tail_bound(b: usize) -> f64 {
    2f64.powi(1 - b as i32)
}

/// Structured-text form of a window: declared horizons and `(time, value)` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowLiteral {
    pub past_horizon: usize,
    pub future_horizon: usize,
    pub entries: Vec<LiteralEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiteralEntry {
    pub t: i64,
    pub u: Vec<f64>,
}

impl<S: Scalar> InputWindow<S> {
    pub fn to_literal(&self) -> WindowLiteral {
        WindowLiteral {
            past_horizon: self.past,
            future_horizon: self.future_horizon(),
            entries: self
                .iter()
                .map(|(t, p)| LiteralEntry { t, u: p.to_f64() })
                .collect(),
        }
    }

    pub fn from_literal(lit: &WindowLiteral) -> Result<Self> {
        let b = lit.past_horizon;
        let h = lit.future_horizon;
        let len = b + h;
        if lit.entries.len() != len {
            return Err(Error::InvalidWindow(format!(
                "declared horizons B={b} H={h} need {len} entries, found {}",
                lit.entries.len()
            )));
        }
        let lo = 1 - b as i64;
        let mut slots: Vec<Option<InputPoint<S>>> = vec![None; len];
        let mut dim = None;
        for e in &lit.entries {
            if e.t < lo || e.t > h as i64 {
                return Err(Error::InvalidWindow(format!(
                    "time {} outside [{lo}, {h}]",
                    e.t
                )));
            }
            if *dim.get_or_insert(e.u.len()) != e.u.len() {
                return Err(Error::InvalidWindow(format!(
                    "entry at time {} has dimension {}",
                    e.t,
                    e.u.len()
                )));
            }
            let slot = &mut slots[(e.t - lo) as usize];
            if slot.is_some() {
                return Err(Error::InvalidWindow(format!("duplicate time {}", e.t)));
            }
            *slot = Some(InputPoint::new(e.u.iter().map(|&v| S::lit(v)).collect())?);
        }
        let entries: Vec<_> = slots.into_iter().map(|s| s.expect("all slots filled")).collect();
        Ok(Self {
            dim: dim.unwrap_or(0),
            past: b,
            entries,
        })
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let lit: WindowLiteral = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_literal(&lit)
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_literal()).expect("literal serializes");
        std::fs::write(path, text + "\n").map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_window(past: &[f64], future: &[f64]) -> InputWindow<f64> {
        let p = |v: &f64| InputPoint::scalar(*v);
        InputWindow::new(1, past.iter().map(p).collect(), future.iter().map(p).collect()).unwrap()
    }

    #[test]
    fn shift_by_zero_is_identity() {
        let w = scalar_window(&[1.0, 2.0, 3.0], &[4.0, 5.0]);
        assert_eq!(w.shift(0).unwrap(), w);
    }

    #[test]
    fn left_shift_absorbs_future_entry() {
        // past (.., u_-1, u_0) = (2, 3), future u_1 = 4
        let w = scalar_window(&[2.0, 3.0], &[4.0]);
        let s = w.shift(-1).unwrap();
        assert_eq!(s.at(0).unwrap(), &[4.0]);
        assert_eq!(s.at(-1).unwrap(), &[3.0]);
        assert_eq!(s.past_horizon(), 3);
        assert_eq!(s.future_horizon(), 0);
    }

    #[test]
    fn right_shift_moves_past_into_future() {
        let w = scalar_window(&[1.0, 2.0, 3.0], &[]);
        let s = w.shift(2).unwrap();
        assert_eq!(s.past_horizon(), 1);
        assert_eq!(s.at(0).unwrap(), &[1.0]);
        assert_eq!(s.at(1).unwrap(), &[2.0]);
        assert_eq!(s.at(2).unwrap(), &[3.0]);
    }

    #[test]
    fn shift_beyond_horizon_is_an_error() {
        let w = scalar_window(&[1.0, 2.0], &[3.0]);
        assert!(matches!(w.shift(3), Err(Error::HorizonExhausted(_))));
        assert!(matches!(w.shift(-2), Err(Error::HorizonExhausted(_))));
        assert!(w.at(2).is_err());
        assert!(w.at(-2).is_err());
    }

    #[test]
    fn truncate_is_idempotent_and_keeps_past() {
        let w = scalar_window(&[1.0, 2.0, 3.0], &[4.0, 5.0]);
        let t = w.truncate_past();
        assert_eq!(t.past_horizon(), 3);
        assert_eq!(t.future_horizon(), 0);
        assert_eq!(t.past_entries(), w.past_entries());
        assert_eq!(t.truncate_past(), t);
        let p = scalar_window(&[1.0], &[]);
        assert_eq!(p.truncate_past(), p);
    }

    #[test]
    fn gamma_smallest_case() {
        let a = scalar_window(&[7.0], &[]);
        let b = scalar_window(&[9.0], &[]);
        let g = concat_gamma(1, &a, &b).unwrap();
        assert_eq!(g.past_horizon(), 2);
        assert_eq!(g.at(-1).unwrap(), &[7.0]);
        assert_eq!(g.at(0).unwrap(), &[9.0]);
    }

    #[test]
    fn gamma_rejects_short_or_future_windows() {
        let a = scalar_window(&[1.0], &[]);
        let b = scalar_window(&[1.0, 2.0], &[]);
        assert!(matches!(
            concat_gamma(3, &a, &b),
            Err(Error::InsufficientHorizon { .. })
        ));
        let f = scalar_window(&[1.0, 2.0], &[3.0]);
        assert!(matches!(concat_gamma(1, &a, &f), Err(Error::NotPastOnly(1))));
    }

    #[test]
    fn gamma_of_matching_tail_is_identity() {
        // u constant: gamma^n(u, u) equals u on the shared horizon
        let u = scalar_window(&[0.5; 6], &[]);
        let g = concat_gamma(2, &u.restrict_past(4).unwrap(), &u).unwrap();
        assert_eq!(g, u);
    }

    #[test]
    fn product_distance_single_term() {
        let mut past = vec![0.0; 8];
        let w1 = scalar_window(&past, &[]);
        // t = -3 sits at offset B-1-3 = 4
        past[4] = 5.0;
        let w2 = scalar_window(&past, &[]);
        assert_eq!(w2.at(-3).unwrap(), &[5.0]);
        let d = product_distance(&w1, &w2, Metric::Euclidean).unwrap();
        assert_eq!(d, 0.125);
        assert_eq!(product_distance(&w1, &w1, Metric::Euclidean).unwrap(), 0.0);
    }

    #[test]
    fn product_distance_rejects_mismatch() {
        let a = scalar_window(&[1.0, 2.0], &[]);
        let b = scalar_window(&[1.0], &[]);
        assert!(matches!(
            product_distance(&a, &b, Metric::Euclidean),
            Err(Error::HorizonMismatch { left: 2, right: 1 })
        ));
        let f = scalar_window(&[1.0], &[2.0]);
        assert!(matches!(
            product_distance(&b, &f, Metric::Euclidean),
            Err(Error::NotPastOnly(1))
        ));
    }

    #[test]
    fn literal_accepts_any_order_and_rejects_gaps() {
        let lit = WindowLiteral {
            past_horizon: 2,
            future_horizon: 1,
            entries: vec![
                LiteralEntry { t: 1, u: vec![3.0] },
                LiteralEntry { t: -1, u: vec![1.0] },
                LiteralEntry { t: 0, u: vec![2.0] },
            ],
        };
        let w = InputWindow::<f64>::from_literal(&lit).unwrap();
        assert_eq!(w, scalar_window(&[1.0, 2.0], &[3.0]));
        assert_eq!(w.to_literal().entries[0].t, -1);

        let mut dup = lit.clone();
        dup.entries[0].t = 0;
        assert!(InputWindow::<f64>::from_literal(&dup).is_err());
        let mut out = lit;
        out.entries[0].t = 2;
        assert!(InputWindow::<f64>::from_literal(&out).is_err());
    }

    #[test]
    fn literal_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.json");
        let w = scalar_window(&[0.25, -0.5], &[1.0]);
        w.write_file(&path).unwrap();
        assert_eq!(InputWindow::<f64>::read_file(&path).unwrap(), w);
    }

    #[test]
    fn non_finite_points_rejected() {
        assert!(InputPoint::new(vec![f64::NAN]).is_err());
        assert!(StatePoint::new(vec![1.0, f64::INFINITY]).is_err());
    }
}
