use std::path::Path;

use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use super::{
    CompactnessFlags, DivergenceOracle, EchoOracle, HardFamily, Oracles, StateMap, StateSpace,
    SystemSpec,
};
use crate::error::{Error, Result};
use crate::metric::Metric;
use crate::rng;
use crate::scalar::Scalar;
use crate::sequence::StatePoint;

const TANH_DEFAULT_DIM: usize = 16;
const TANH_DEFAULT_SEED: u64 = 0x5eed;
const CIRCLE_FIXED_HARD: u32 = 40;

/// Registered identifiers with their default parameters.
pub fn catalog_names() -> Vec<(&'static str, &'static str)> {
    vec![
        ("constant(c)", "f(x,u) = c on [-1,1]; default c = 0.25"),
        ("affine(a,b)", "f(x,u) = a x + b u clamped to [-R,R], R = |b|/(1-|a|); default (0.5,1)"),
        ("tanh_esn(s[,dim[,seed]])", "f(x,u) = tanh(W x + W_in u), ||W||_2 = s; default (0.9,16)"),
        ("rotation(alpha)", "f(x,u) = x + alpha mod 1 on the circle; default alpha = 0.3"),
        ("doubling", "f(x,u) = 2x mod 1 on the circle"),
        ("circle_square", "f(x,u) = g(x), g: x -> x^2 on [0,1] with endpoints glued"),
    ]
}

/// Splits `name(a,b,...)` into the name and numeric arguments.
fn parse_call(text: &str) -> Result<(String, Vec<f64>)> {
    let text = text.trim();
    let Some(open) = text.find('(') else {
        return Ok((text.to_string(), Vec::new()));
    };
    let name = text[..open].trim().to_string();
    let inner = text[open + 1..]
        .strip_suffix(')')
        .ok_or_else(|| Error::UnknownSystem(text.to_string()))?;
    let args = inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Error::InvalidConfig(format!("bad numeric argument `{s}` in `{text}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((name, args))
}

pub(crate) fn split_call(text: &str) -> Result<(String, Vec<f64>)> {
    parse_call(text)
}

fn arity(name: &str, args: &[f64], max: usize) -> Result<()> {
    if args.len() > max {
        return Err(Error::InvalidConfig(format!(
            "`{name}` takes at most {max} arguments, got {}",
            args.len()
        )));
    }
    Ok(())
}

/// Looks up a registered system such as `affine(0.5,1)` or `circle_square`.
pub fn catalog_get<S: Scalar>(name: &str) -> Result<SystemSpec<S>> {
    let (family, args) = parse_call(name)?;
    match family.as_str() {
        "constant" => {
            arity(&family, &args, 1)?;
            constant(args.first().copied().unwrap_or(0.25))
        }
        "affine" => {
            arity(&family, &args, 2)?;
            affine(
                args.first().copied().unwrap_or(0.5),
                args.get(1).copied().unwrap_or(1.0),
                1,
                None,
            )
        }
        "tanh_esn" => {
            arity(&family, &args, 3)?;
            let dim = args.get(1).map(|&d| d as usize).unwrap_or(TANH_DEFAULT_DIM);
            let seed = args.get(2).map(|&s| s as u64).unwrap_or(TANH_DEFAULT_SEED);
            tanh_esn(args.first().copied().unwrap_or(0.9), dim, seed)
        }
        "rotation" => {
            arity(&family, &args, 1)?;
            Ok(rotation(args.first().copied().unwrap_or(0.3)))
        }
        "doubling" => {
            arity(&family, &args, 0)?;
            Ok(doubling())
        }
        "circle_square" => {
            arity(&family, &args, 0)?;
            Ok(circle_square())
        }
        _ => Err(Error::UnknownSystem(name.to_string())),
    }
}

/// `--system` argument: a path to a JSON [`SystemConfig`] or a catalog name.
pub fn load_system<S: Scalar>(arg: &str) -> Result<SystemSpec<S>> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg: SystemConfig = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        return cfg.build();
    }
    catalog_get(arg)
}

fn box_flags() -> CompactnessFlags {
    CompactnessFlags {
        state_compact: true,
        input_compact: true,
        input_metrizable: true,
    }
}

fn fmt_num(v: f64) -> String {
    format!("{v}")
}

fn constant<S: Scalar>(c: f64) -> Result<SystemSpec<S>> {
    if !(-1.0..=1.0).contains(&c) {
        return Err(Error::InvalidConfig(format!("constant({c}) must lie in [-1,1]")));
    }
    Ok(SystemSpec {
        id: format!("constant({})", fmt_num(c)),
        state_space: StateSpace::cube(1, -S::one(), S::one()),
        input_dim: 1,
        input_box: Some((-S::one(), S::one())),
        map: StateMap::Constant { c: vec![S::lit(c)] },
        state_metric: Metric::Euclidean,
        input_metric: Metric::Euclidean,
        hard_states: vec![
            StatePoint::scalar(-S::one()),
            StatePoint::scalar(S::one()),
        ],
        hard_family: None,
        flags: box_flags(),
        oracles: Oracles {
            echo_state: Some(EchoOracle::Constant { c: vec![S::lit(c)] }),
            divergence: Some(DivergenceOracle {
                rate: 0.0,
                exact: true,
            }),
        },
    })
}

/// Radius of the invariant interval of `a x + b u` for inputs in `[-1, 1]`.
fn affine_radius(a: f64, b: f64) -> f64 {
    if a.abs() < 1.0 {
        (b.abs() / (1.0 - a.abs())).max(1.0)
    } else {
        10.0
    }
}

fn affine<S: Scalar>(a: f64, b: f64, dim: usize, radius: Option<f64>) -> Result<SystemSpec<S>> {
    if !a.is_finite() || !b.is_finite() || dim == 0 {
        return Err(Error::InvalidConfig(format!("affine({a},{b}) in dimension {dim}")));
    }
    let r = radius.unwrap_or_else(|| affine_radius(a, b));
    let (lo, hi) = (S::lit(-r), S::lit(r));
    let contracting = a.abs() < 1.0;
    Ok(SystemSpec {
        id: format!("affine({},{})", fmt_num(a), fmt_num(b)),
        state_space: StateSpace::cube(dim, lo, hi),
        input_dim: dim,
        input_box: Some((-S::one(), S::one())),
        map: StateMap::Affine {
            a: S::lit(a),
            b: S::lit(b),
            lo,
            hi,
        },
        state_metric: Metric::Euclidean,
        input_metric: Metric::Euclidean,
        hard_states: vec![
            StatePoint::from_vec_unchecked(vec![lo; dim]),
            StatePoint::from_vec_unchecked(vec![hi; dim]),
        ],
        hard_family: None,
        flags: box_flags(),
        oracles: Oracles {
            // the clamp is inactive on the invariant box, so the series is exact there
            echo_state: (contracting && radius.is_none()).then(|| EchoOracle::Affine {
                a: S::lit(a),
                b: S::lit(b),
            }),
            divergence: (radius.is_none() || contracting).then(|| DivergenceOracle {
                rate: a.abs(),
                exact: contracting,
            }),
        },
    })
}

/// Largest singular value by power iteration on `W^T W`.
pub(crate) fn spectral_norm(w: &[f64], n: usize) -> f64 {
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut wv = vec![0.0; n];
    let mut prev = 0.0;
    for _ in 0..100_000 {
        for i in 0..n {
            wv[i] = (0..n).map(|j| w[i * n + j] * v[j]).sum();
        }
        let mut next: Vec<f64> = (0..n).map(|j| (0..n).map(|i| w[i * n + j] * wv[i]).sum()).collect();
        let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        next.iter_mut().for_each(|x| *x /= norm);
        v = next;
        if (norm - prev).abs() <= 1e-15 * norm {
            break;
        }
        prev = norm;
    }
    for i in 0..n {
        wv[i] = (0..n).map(|j| w[i * n + j] * v[j]).sum();
    }
    wv.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn tanh_esn<S: Scalar>(s: f64, dim: usize, seed: u64) -> Result<SystemSpec<S>> {
    if s.is_nan() || s < 0.0 || dim == 0 {
        return Err(Error::InvalidConfig(format!("tanh_esn({s},{dim})")));
    }
    let mut r = rng::stream(seed, rng::STREAM_SYSTEM, 0);
    let raw: Vec<f64> = (0..dim * dim).map(|_| StandardNormal.sample(&mut r)).collect();
    let unif = Uniform::new_inclusive(-1.0, 1.0).expect("valid range");
    let w_in: Vec<f64> = (0..dim).map(|_| unif.sample(&mut r)).collect();
    tanh_esn_from(s, raw, w_in, dim, 1, format!("tanh_esn({})", fmt_num(s)))
}

fn tanh_esn_from<S: Scalar>(
    s: f64,
    raw: Vec<f64>,
    w_in: Vec<f64>,
    n: usize,
    m: usize,
    id: String,
) -> Result<SystemSpec<S>> {
    let norm = spectral_norm(&raw, n);
    if norm == 0.0 && s > 0.0 {
        return Err(Error::InvalidConfig("reservoir matrix is zero".into()));
    }
    let scale = if norm == 0.0 { 0.0 } else { s / norm };
    Ok(SystemSpec {
        id,
        state_space: StateSpace::cube(n, -S::one(), S::one()),
        input_dim: m,
        input_box: Some((-S::one(), S::one())),
        map: StateMap::TanhEsn {
            w: raw.iter().map(|&x| S::lit(x * scale)).collect(),
            w_in: w_in.iter().map(|&x| S::lit(x)).collect(),
            n,
            m,
        },
        state_metric: Metric::Euclidean,
        input_metric: Metric::Euclidean,
        hard_states: vec![
            StatePoint::from_vec_unchecked(vec![-S::one(); n]),
            StatePoint::from_vec_unchecked(vec![S::one(); n]),
        ],
        hard_family: None,
        flags: box_flags(),
        oracles: Oracles {
            echo_state: None,
            divergence: Some(DivergenceOracle {
                rate: s,
                exact: false,
            }),
        },
    })
}

fn circle_system<S: Scalar>(id: String, map: StateMap<S>) -> SystemSpec<S> {
    SystemSpec {
        id,
        state_space: StateSpace::Circle,
        input_dim: 1,
        input_box: Some((-S::one(), S::one())),
        map,
        state_metric: Metric::Circle,
        input_metric: Metric::Euclidean,
        hard_states: Vec::new(),
        hard_family: None,
        flags: box_flags(),
        oracles: Oracles::default(),
    }
}

fn rotation<S: Scalar>(alpha: f64) -> SystemSpec<S> {
    let mut sys = circle_system(
        format!("rotation({})", fmt_num(alpha)),
        StateMap::Rotation {
            alpha: S::lit(alpha),
        },
    );
    sys.oracles.divergence = Some(DivergenceOracle {
        rate: 1.0,
        exact: true,
    });
    sys
}

fn doubling<S: Scalar>() -> SystemSpec<S> {
    circle_system("doubling".into(), StateMap::Doubling)
}

fn circle_square<S: Scalar>() -> SystemSpec<S> {
    let mut sys = circle_system("circle_square".into(), StateMap::CircleSquare);
    // chart value of 1 - 2^-k
    sys.hard_states = (1..=CIRCLE_FIXED_HARD as i32)
        .map(|k| StatePoint::scalar(S::lit(-(2f64.powi(-k)))))
        .collect();
    sys.hard_family = Some(HardFamily::DyadicBelowGlue {
        fixed: CIRCLE_FIXED_HARD,
        margin: CIRCLE_FIXED_HARD,
    });
    sys
}

/// User-defined system loaded from JSON.
///
/// ```json
/// { "name": "slow_affine", "family": { "kind": "affine", "a": 0.8, "b": 0.5 },
///   "state_dim": 2, "hard_states": [[1.0, -1.0]] }
/// ```
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub name: String,
    pub family: FamilyConfig,
    #[serde(default)]
    pub state_dim: Option<usize>,
    #[serde(default)]
    pub input_dim: Option<usize>,
    /// Symmetric or explicit box `[lo, hi]` for every state coordinate.
    #[serde(default)]
    pub state_box: Option<[f64; 2]>,
    #[serde(default)]
    pub input_box: Option<[f64; 2]>,
    #[serde(default)]
    pub metric: Option<Metric>,
    #[serde(default)]
    pub state_compact: Option<bool>,
    #[serde(default)]
    pub input_compact: Option<bool>,
    #[serde(default)]
    pub input_metrizable: Option<bool>,
    #[serde(default)]
    pub hard_states: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilyConfig {
    Affine {
        a: f64,
        b: f64,
    },
    TanhEsn {
        spectral_norm: f64,
        #[serde(default)]
        seed: Option<u64>,
        /// Explicit reservoir matrix (rows); rescaled to `spectral_norm`.
        #[serde(default)]
        w: Option<Vec<Vec<f64>>>,
        #[serde(default)]
        w_in: Option<Vec<Vec<f64>>>,
    },
    CircleSquare,
    Rotation {
        alpha: f64,
    },
    Doubling,
    Constant {
        c: Vec<f64>,
    },
}

impl SystemConfig {
    pub fn build<S: Scalar>(&self) -> Result<SystemSpec<S>> {
        let mut sys = match &self.family {
            FamilyConfig::Affine { a, b } => {
                let dim = self.state_dim.unwrap_or(1);
                let radius = self.state_box.map(|[lo, hi]| lo.abs().max(hi.abs()));
                affine(*a, *b, dim, radius)?
            }
            FamilyConfig::TanhEsn {
                spectral_norm: s,
                seed,
                w,
                w_in,
            } => match w {
                Some(rows) => {
                    let n = rows.len();
                    if rows.iter().any(|r| r.len() != n) {
                        return Err(Error::InvalidConfig("`w` must be square".into()));
                    }
                    let m = self.input_dim.unwrap_or(1);
                    let w_in_flat: Vec<f64> = match w_in {
                        Some(cols) => {
                            if cols.len() != n || cols.iter().any(|r| r.len() != m) {
                                return Err(Error::InvalidConfig(format!(
                                    "`w_in` must be {n} x {m}"
                                )));
                            }
                            cols.concat()
                        }
                        None => vec![1.0; n * m],
                    };
                    tanh_esn_from(*s, rows.concat(), w_in_flat, n, m, self.name.clone())?
                }
                None => tanh_esn(
                    *s,
                    self.state_dim.unwrap_or(TANH_DEFAULT_DIM),
                    seed.unwrap_or(TANH_DEFAULT_SEED),
                )?,
            },
            FamilyConfig::CircleSquare => circle_square(),
            FamilyConfig::Rotation { alpha } => rotation(*alpha),
            FamilyConfig::Doubling => doubling(),
            FamilyConfig::Constant { c } => {
                let mut sys = constant(0.0)?;
                let dim = c.len();
                let [lo, hi] = self.state_box.unwrap_or([-1.0, 1.0]);
                sys.state_space = StateSpace::cube(dim, S::lit(lo), S::lit(hi));
                sys.input_dim = self.input_dim.unwrap_or(1);
                sys.map = StateMap::Constant {
                    c: c.iter().map(|&v| S::lit(v)).collect(),
                };
                sys.oracles.echo_state = Some(EchoOracle::Constant {
                    c: c.iter().map(|&v| S::lit(v)).collect(),
                });
                sys.hard_states = vec![
                    StatePoint::from_vec_unchecked(vec![S::lit(lo); dim]),
                    StatePoint::from_vec_unchecked(vec![S::lit(hi); dim]),
                ];
                sys
            }
        };
        sys.id = self.name.clone();
        if let Some(dim) = self.state_dim {
            if dim != sys.state_dim() {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: sys.state_dim(),
                });
            }
        }
        if let Some([lo, hi]) = self.input_box {
            if lo.partial_cmp(&hi) != Some(std::cmp::Ordering::Less) {
                return Err(Error::InvalidConfig(format!("input box [{lo}, {hi}]")));
            }
            sys.input_box = Some((S::lit(lo), S::lit(hi)));
        }
        if let Some(m) = self.metric {
            sys.state_metric = m;
        }
        if let Some(v) = self.state_compact {
            sys.flags.state_compact = v;
        }
        if let Some(v) = self.input_compact {
            sys.flags.input_compact = v;
        }
        if let Some(v) = self.input_metrizable {
            sys.flags.input_metrizable = v;
        }
        if let Some(hs) = &self.hard_states {
            for h in hs {
                if h.len() != sys.state_dim() {
                    return Err(Error::DimensionMismatch {
                        expected: sys.state_dim(),
                        found: h.len(),
                    });
                }
                sys.hard_states
                    .push(StatePoint::new(h.iter().map(|&v| S::lit(v)).collect())?);
            }
        }
        sys.validate(0, 256)?;
        Ok(sys)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_call_forms() {
        assert_eq!(parse_call("doubling").unwrap(), ("doubling".into(), vec![]));
        assert_eq!(
            parse_call("affine(0.5, 1)").unwrap(),
            ("affine".into(), vec![0.5, 1.0])
        );
        assert!(parse_call("affine(0.5").is_err());
        assert!(parse_call("affine(x)").is_err());
    }

    #[test]
    fn unknown_name_is_an_error() {
        assert!(matches!(
            catalog_get::<f64>("lorenz"),
            Err(Error::UnknownSystem(_))
        ));
        assert!(catalog_get::<f64>("doubling(3)").is_err());
    }

    #[test]
    fn circle_square_entry() {
        let sys = catalog_get::<f64>("circle_square").unwrap();
        assert_eq!(sys.state_space, StateSpace::Circle);
        assert_eq!(sys.state_metric, Metric::Circle);
        assert_eq!(sys.hard_states.len(), 40);
        // chart value -2^-k is the circle point 1 - 2^-k
        assert_eq!(sys.hard_states[2].values()[0], -0.125);
        // input independent
        let x = StatePoint::scalar(0.3);
        assert_eq!(sys.step(&x, &[-1.0]), sys.step(&x, &[0.7]));
        let d = sys.distance(&StatePoint::scalar(0.45), &StatePoint::scalar(-0.45));
        assert!((d - 0.1).abs() < 1e-15);
    }

    #[test]
    fn affine_default_box() {
        let sys = catalog_get::<f64>("affine(0.5,1)").unwrap();
        assert_eq!(sys.id, "affine(0.5,1)");
        assert_eq!(
            sys.state_space,
            StateSpace::Box {
                lo: vec![-2.0],
                hi: vec![2.0]
            }
        );
        let slow = catalog_get::<f64>("affine(0.9,1)").unwrap();
        assert!(matches!(slow.map, StateMap::Affine { hi, .. } if (hi - 10.0).abs() < 1e-12));
    }

    #[test]
    fn constant_hits_c_after_one_step() {
        let sys = catalog_get::<f64>("constant(0.25)").unwrap();
        for x in sys.sample_states(3, 20) {
            assert_eq!(sys.step(&x, &[0.9]).values(), &[0.25]);
        }
    }

    #[test]
    fn tanh_reservoir_has_requested_norm() {
        let sys = catalog_get::<f64>("tanh_esn(0.9)").unwrap();
        let StateMap::TanhEsn { w, n, .. } = &sys.map else {
            panic!("wrong family")
        };
        assert_eq!(*n, 16);
        assert!((spectral_norm(w, *n) - 0.9).abs() < 1e-9);
        // independent lower/upper check: ||W v|| <= 0.9 ||v|| on random vectors
        let mut r = rng::stream(11, 0, 0);
        for _ in 0..200 {
            let v: Vec<f64> = (0..16).map(|_| StandardNormal.sample(&mut r)).collect();
            let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let wv: Vec<f64> = (0..16)
                .map(|i| (0..16).map(|j| w[i * 16 + j] * v[j]).sum())
                .collect();
            let nwv = wv.iter().map(|x: &f64| x * x).sum::<f64>().sqrt();
            assert!(nwv <= 0.9 * nv * (1.0 + 1e-9));
        }
    }

    #[test]
    fn spectral_norm_of_diagonal() {
        let w = vec![3.0, 0.0, 0.0, 0.0, -5.0, 0.0, 0.0, 0.0, 1.0];
        assert!((spectral_norm(&w, 3) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn every_catalog_system_is_invariant_on_samples() {
        for name in [
            "constant",
            "affine(0.5,1)",
            "affine(0.9,1)",
            "tanh_esn(0.9)",
            "rotation(0.3)",
            "doubling",
            "circle_square",
        ] {
            let sys = catalog_get::<f64>(name).unwrap();
            sys.validate(17, 500).unwrap_or_else(|e| panic!("{name}: {e}"));
            let sys32 = catalog_get::<f32>(name).unwrap();
            sys32.validate(17, 200).unwrap_or_else(|e| panic!("{name} f32: {e}"));
        }
    }

    #[test]
    fn config_overrides_and_validates() {
        let cfg: SystemConfig = serde_json::from_str(
            r#"{ "name": "slow", "family": { "kind": "affine", "a": 0.8, "b": 0.5 },
                 "state_dim": 2, "hard_states": [[1.0, -1.0]] }"#,
        )
        .unwrap();
        let sys = cfg.build::<f64>().unwrap();
        assert_eq!(sys.id, "slow");
        assert_eq!(sys.state_dim(), 2);
        assert_eq!(sys.hard_states.len(), 3);

        let bad: SystemConfig = serde_json::from_str(
            r#"{ "name": "bad", "family": { "kind": "affine", "a": 0.8, "b": 0.5 },
                 "hard_states": [[7.0]] }"#,
        )
        .unwrap();
        assert!(bad.build::<f64>().is_err());

        let esn: SystemConfig = serde_json::from_str(
            r#"{ "name": "tiny", "family": { "kind": "tanh_esn", "spectral_norm": 0.5,
                 "w": [[1.0, 2.0], [0.0, 1.0]] } }"#,
        )
        .unwrap();
        let sys = esn.build::<f64>().unwrap();
        let StateMap::TanhEsn { w, .. } = &sys.map else {
            panic!()
        };
        assert!((spectral_norm(w, 2) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn load_system_reads_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sys.json");
        std::fs::write(
            &p,
            r#"{ "name": "rot", "family": { "kind": "rotation", "alpha": 0.1 } }"#,
        )
        .unwrap();
        let sys = load_system::<f64>(p.to_str().unwrap()).unwrap();
        assert_eq!(sys.id, "rot");
        assert!(load_system::<f64>("affine(0.5,1)").is_ok());
    }
}
