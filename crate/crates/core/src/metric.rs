use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Distance on the coordinate vectors of state or input points.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Euclidean,
    /// Flat torus: each coordinate is a point of the unit circle R/Z,
    /// distances per coordinate are `min(|a-b|, 1-|a-b|)`.
    Circle,
}

impl Metric {
    pub fn distance<S: Scalar>(&self, a: &[S], b: &[S]) -> S {
        debug_assert_eq!(a.len(), b.len());
        match self {
            Metric::Euclidean => {
                if a.len() == 1 {
                    return (a[0] - b[0]).abs();
                }
                a.iter()
                    .zip(b)
                    .map(|(&x, &y)| (x - y) * (x - y))
                    .sum::<S>()
                    .sqrt()
            }
            Metric::Circle => {
                if a.len() == 1 {
                    return circle_gap(a[0], b[0]);
                }
                a.iter()
                    .zip(b)
                    .map(|(&x, &y)| {
                        let d = circle_gap(x, y);
                        d * d
                    })
                    .sum::<S>()
                    .sqrt()
            }
        }
    }
}

/// Quotient distance on R/Z.
pub fn circle_gap<S: Scalar>(a: S, b: S) -> S {
    let mut d = (a - b).abs();
    if d >= S::one() {
        d = d - d.floor();
    }
    d.min(S::one() - d)
}

/// Maps a real onto the signed chart `[-1/2, 1/2)` of R/Z.
pub fn circle_wrap<S: Scalar>(v: S) -> S {
    let half = S::lit(0.5);
    if v >= -half && v < half {
        return v;
    }
    let w = v - (v + half).floor();
    if w >= half {
        w - S::one()
    } else {
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_gap_wraps_across_glued_point() {
        assert!((circle_gap(0.45_f64, -0.45) - 0.1).abs() < 1e-15);
        assert_eq!(circle_gap(0.25_f64, -0.25), 0.5);
        assert_eq!(circle_gap(0.0_f64, 0.0), 0.0);
    }

    #[test]
    fn wrap_lands_in_signed_chart() {
        for v in [-3.7_f64, -0.5, 0.5, 0.49, 1.0, 2.25, 1e-300, -1e-300] {
            let w = circle_wrap(v);
            assert!((-0.5..0.5).contains(&w), "{v} -> {w}");
            assert!(circle_gap(w, v) < 1e-12);
        }
    }

    #[test]
    fn euclidean_is_norm_of_difference() {
        let d = Metric::Euclidean.distance(&[0.0_f64, 3.0], &[4.0, 0.0]);
        assert_eq!(d, 5.0);
    }
}
