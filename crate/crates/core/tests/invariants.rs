use echoprop::systems::parse_process;
use echoprop::testers::Session;
use echoprop::{catalog_get, InputProcess, Level, SystemSpec, SystemSpecF64, TestConfig, Variant};

fn small(seed: u64) -> TestConfig {
    TestConfig {
        n_max: 60,
        tail_window: 10,
        state_samples: 32,
        input_samples: 12,
        burn_in: 64,
        ..TestConfig::with_seed(seed)
    }
}

fn rank(l: Level) -> u8 {
    l.rank().expect("forgetting verdicts are ranked")
}

/// Envelope of `variant` restricted to the horizons both variants evaluate.
fn envelope_on(s: &Session<'_, f64>, variant: Variant, ns: &[usize]) -> Vec<f64> {
    let v = s.forgetting(variant).unwrap();
    let curve = v.evidence.curve("state_uniform_envelope").unwrap();
    ns.iter()
        .map(|n| curve[v.evidence.n_values.iter().position(|m| m == n).unwrap()])
        .collect()
}

fn shifted_horizons(s: &Session<'_, f64>) -> Vec<usize> {
    s.forgetting(Variant::Ssfp).unwrap().evidence.n_values
}

#[test]
fn shift_diagonal_is_exact_for_the_affine_contraction() {
    // every window contracts the pool diameter by exactly a^n, up to the
    // roundoff floor of the iterated states
    let sys: SystemSpecF64 = catalog_get("affine(0.5,1)").unwrap();
    for process in ["iid", "constant(0.3)"] {
        let proc = parse_process(process, &sys, 1).unwrap();
        let s = Session::new(&sys, &proc, small(1)).unwrap();
        let ns = shifted_horizons(&s);
        let fwd = envelope_on(&s, Variant::Sfp, &ns);
        let pull = envelope_on(&s, Variant::Ssfp, &ns);
        for ((n, a), b) in ns.iter().zip(&fwd).zip(&pull) {
            assert!((a - b).abs() <= 1e-12 * a.max(*b) + 1e-15, "n = {n}: {a} vs {b}");
        }
    }
}

#[test]
fn shift_diagonal_with_constant_input_on_the_circle() {
    let sys: SystemSpecF64 = catalog_get("circle_square").unwrap();
    let proc = parse_process("constant", &sys, 0).unwrap();
    let s = Session::new(&sys, &proc, small(0)).unwrap();
    let ns = shifted_horizons(&s);
    assert_eq!(envelope_on(&s, Variant::Sfp, &ns), envelope_on(&s, Variant::Ssfp, &ns));
}

#[test]
fn shift_diagonal_within_sampling_error_for_the_esn() {
    // sampling error: spread of each log envelope over independent seeds
    let sys: SystemSpecF64 = catalog_get("tanh_esn(0.9,6,3)").unwrap();
    let seeds = [5u64, 6, 7, 8];
    let mut ns = Vec::new();
    let runs: Vec<(Vec<f64>, Vec<f64>)> = seeds
        .iter()
        .map(|&seed| {
            let proc = parse_process("iid", &sys, seed).unwrap();
            let s = Session::new(&sys, &proc, small(seed)).unwrap();
            ns = shifted_horizons(&s);
            let ln = |v: Vec<f64>| v.into_iter().map(|x| x.max(1e-300).ln()).collect();
            (ln(envelope_on(&s, Variant::Sfp, &ns)), ln(envelope_on(&s, Variant::Ssfp, &ns)))
        })
        .collect();
    let spread = |vals: Vec<f64>| {
        let hi = vals.iter().cloned().fold(f64::MIN, f64::max);
        let lo = vals.iter().cloned().fold(f64::MAX, f64::min);
        (hi - lo, vals.iter().sum::<f64>() / vals.len() as f64)
    };
    for (k, n) in ns.iter().enumerate() {
        if runs.iter().any(|r| r.0[k] < -27.0 || r.1[k] < -27.0) {
            continue; // below ~1e-12 the envelopes are roundoff
        }
        let (e_fwd, m_fwd) = spread(runs.iter().map(|r| r.0[k]).collect());
        let (e_pull, m_pull) = spread(runs.iter().map(|r| r.1[k]).collect());
        let err = e_fwd.max(e_pull);
        let gap = (m_fwd - m_pull).abs();
        assert!(gap <= 2.0 * err, "n = {n}: gap {gap:.3}, sampling error {err:.3}");
    }
}

#[test]
fn state_forgetting_dominates_input_forgetting() {
    for name in ["constant", "affine(0.5,1)", "tanh_esn(0.9,6,3)", "rotation(0.3)", "doubling", "circle_square"] {
        let sys: SystemSpecF64 = catalog_get(name).unwrap();
        let proc = parse_process("iid", &sys, 2).unwrap();
        let s = Session::new(&sys, &proc, small(2)).unwrap();
        let lv = |v| s.forgetting(v).unwrap().level;
        assert!(rank(lv(Variant::Ifp)) >= rank(lv(Variant::Sfp)), "{name}: IFP below SFP");
        assert!(rank(lv(Variant::Sifp)) >= rank(lv(Variant::Ssfp)), "{name}: sIFP below sSFP");
        if lv(Variant::Sfp) == Level::Uniform {
            assert_eq!(lv(Variant::Ifp), Level::Uniform, "{name}");
        }
    }
}

#[test]
fn envelopes_are_nested() {
    let sys: SystemSpecF64 = catalog_get("circle_square").unwrap();
    let proc = parse_process("iid", &sys, 3).unwrap();
    let s = Session::new(&sys, &proc, small(3)).unwrap();
    for v in Variant::ALL {
        let r = s.forgetting(v).unwrap();
        let pw = r.evidence.curve("pointwise_envelope").unwrap();
        let su = r.evidence.curve("state_uniform_envelope").unwrap();
        let un = r.evidence.curve("uniform_envelope").unwrap();
        for k in 0..pw.len() {
            assert!(pw[k] <= su[k] && su[k] <= un[k], "{v:?} at {k}");
        }
    }
}

#[test]
fn single_precision_runs_the_same_pipeline() {
    let sys: SystemSpec<f32> = catalog_get("affine(0.5,1)").unwrap();
    let proc = InputProcess::iid(-1.0f32, 1.0, 1, 4);
    let cfg = TestConfig {
        tol: 1e-4,
        ..small(4)
    };
    let s = Session::new(&sys, &proc, cfg).unwrap();
    assert_eq!(s.esp().unwrap().level, Level::Uniform);
    assert_eq!(s.forgetting(Variant::Sfp).unwrap().level, Level::Uniform);
}
