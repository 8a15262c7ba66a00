use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use heatbath::lyapunov::{
    build_test_function, field_parameters, lower_bound_tv, moment_growth_bound, verify_sign, wonham_report,
    BoundVariant, Family, FnField, Predicate, ShellSampler, ShellSpec, TestField, TestFunctionSpec, WonhamSpec,
};
use heatbath::model::{energy, forces, Eval, ModelParams, Smoothing, State4};
use heatbath::oscillator::OrbitSolutions;
use heatbath::Error;

fn model(k: f64, t_hot: f64) -> ModelParams {
    let s = if k >= 1.0 { Smoothing::Pure } else { Smoothing::Regularized };
    ModelParams::new(1.0, 1.0, 1.0, t_hot, k, s).unwrap()
}

fn tables(k: f64) -> Arc<OrbitSolutions> {
    Arc::new(OrbitSolutions::build(k, 1024).unwrap())
}

fn value(f: &dyn TestField, x: State4) -> f64 {
    f.eval(&x).value()
}

/// Central differences for the gradient and the two momentum second
/// derivatives, and `L f` assembled from them.
fn fd_generator(f: &dyn TestField, x: &State4, m: &ModelParams) -> ([f64; 4], [f64; 2], f64, f64) {
    let base = x.to_array();
    let v0 = value(f, *x);
    let mut grad = [0.0; 4];
    let mut hess = [0.0; 2];
    for i in 0..4 {
        let h = 1e-4 * base[i].abs().max(1.0);
        let mut a = base;
        let mut b = base;
        a[i] += h;
        b[i] -= h;
        let (fa, fb) = (value(f, State4::from_array(a)), value(f, State4::from_array(b)));
        grad[i] = (fa - fb) / (2.0 * h);
        if i >= 2 {
            hess[i - 2] = (fa - 2.0 * v0 + fb) / (h * h);
        }
    }
    let [f0, f1] = forces(x, m);
    let [d0, d1] = m.diffusion();
    let terms = [
        x.p0 * grad[0],
        x.p1 * grad[1],
        (f0 - m.gamma * x.p0) * grad[2],
        f1 * grad[3],
        d0 * hess[0],
        d1 * hess[1],
    ];
    let scale = terms.iter().map(|t| t.abs()).sum::<f64>();
    (grad, hess, terms.iter().sum(), scale)
}

fn random_state(rng: &mut ChaCha8Rng, m: &ModelParams, lo: f64, hi: f64) -> State4 {
    loop {
        let s = rng.random_range(0.2..3.0);
        let x = State4::new(
            s * rng.random_range(-1.5..1.5),
            s * rng.random_range(-1.5..1.5),
            s * rng.random_range(-2.0..2.0),
            s * rng.random_range(-2.0..2.0),
        );
        let h = energy(&x, m);
        if h >= lo && h <= hi {
            return x;
        }
    }
}

fn check_jets(spec: TestFunctionSpec, m: ModelParams, t: Option<Arc<OrbitSolutions>>) {
    let field = build_test_function(&spec, &m, t).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut done = 0;
    while done < 100 {
        let x = random_state(&mut rng, &m, 0.5, 40.0);
        // W_tail and hatH_smallk are powers of V and H^ and only defined where these are positive
        if !field.eval(&x).value().is_finite() && matches!(spec.family, Family::WTail | Family::HatHSmallk) {
            continue;
        }
        done += 1;
        let e: Eval = field.eval(&x);
        let sc = e.log_scale.exp();
        let (grad, hess, lfd, scale) = fd_generator(&field, &x, &m);
        let jet = [e.jet.d_q0, e.jet.d_q1, e.jet.d_p0, e.jet.d_p1];
        let gnorm = grad.iter().map(|g| g.abs()).fold(1e-300, f64::max);
        for i in 0..4 {
            assert!(
                (jet[i] * sc - grad[i]).abs() <= 1e-5 * gnorm.max(1e-3),
                "{} d{i}: jet {} fd {} at {x:?}",
                field.describe(),
                jet[i] * sc,
                grad[i]
            );
        }
        let d2 = [e.jet.d2_p0 * sc, e.jet.d2_p1 * sc];
        for i in 0..2 {
            assert!(
                (d2[i] - hess[i]).abs() <= 1e-4 * (hess[i].abs() + gnorm).max(1e-3),
                "{} second derivative {i}: jet {} fd {} at {x:?}",
                field.describe(),
                d2[i],
                hess[i]
            );
        }
        let lg = e.generator_value();
        assert!(
            (lg - lfd).abs() <= 1e-4 * scale.max(1e-3),
            "{}: propagated L {lg} vs finite differences {lfd} at {x:?}",
            field.describe()
        );
        let lj = e.generator_from_jet(&x, &m) * sc;
        assert!((lg - lj).abs() <= 1e-8 * scale.max(1.0), "{}: {lg} vs {lj}", field.describe());
    }
}

#[test]
fn jets_match_finite_differences_k2() {
    let m = model(2.0, 0.5);
    let t = tables(2.0);
    for fam in [Family::TildeH0, Family::H0Cutoff, Family::VK2, Family::WTail, Family::W1Nonexist, Family::Energy] {
        let spec = TestFunctionSpec::new(fam).with(|p| p.e_cut = Some(2.0));
        check_jets(spec, m, Some(t.clone()));
    }
    check_jets(TestFunctionSpec::new(Family::ExpH).with(|p| p.beta0 = Some(0.1)), m, None);
}

#[test]
fn jets_match_finite_differences_fractional() {
    let m = model(1.5, 0.5);
    let t = tables(1.5);
    check_jets(TestFunctionSpec::new(Family::VKlt2), m, Some(t.clone()));
    check_jets(TestFunctionSpec::new(Family::WExpFrac), m, Some(t));
}

#[test]
fn jets_match_finite_differences_small_k() {
    let m = model(0.75, 0.5);
    check_jets(TestFunctionSpec::new(Family::HatHSmallk).with(|p| p.eps = Some(0.5)), m, None);
    check_jets(TestFunctionSpec::new(Family::SForm), m, None);
    check_jets(TestFunctionSpec::new(Family::SForm), model(1.0, 0.5), None);
    check_jets(TestFunctionSpec::new(Family::WSmallk), model(0.4, 0.5), None);
}

#[test]
fn tilde_h0_degenerates_to_effective_energy() {
    // k = 1 is the harmonic case; without tables Phi is absent
    let m = model(1.0, 0.5);
    let f = build_test_function(&TestFunctionSpec::new(Family::TildeH0).with(|p| p.theta = Some(0.0)), &m, None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let x = random_state(&mut rng, &m, 0.1, 50.0);
        let want = 0.5 * x.p0 * x.p0 + 0.5 * x.q0 * x.q0 + 0.5 * m.alpha * x.q0 * x.q0;
        assert!((f.eval(&x).value() - want).abs() < 1e-12);
    }
}

#[test]
fn missing_tables_and_bad_parameters_rejected() {
    let m = model(2.0, 0.3);
    let r = build_test_function(&TestFunctionSpec::new(Family::VK2), &m, None);
    assert!(matches!(r, Err(Error::MissingTables(_))));
    let t = tables(2.0);
    let r = build_test_function(&TestFunctionSpec::new(Family::VK2).with(|p| p.c = Some(1.2)), &m, Some(t.clone()));
    assert!(matches!(r, Err(Error::InvalidParams(_))));
    let r = build_test_function(&TestFunctionSpec::new(Family::VK2), &model(1.5, 0.3), Some(t));
    assert!(matches!(r, Err(Error::InvalidParams(_))));
    let r = build_test_function(&TestFunctionSpec::new(Family::WExpFrac), &model(2.0, 0.3), None);
    assert!(r.is_err());
}

#[test]
fn v_k2_coercive_outside_a_ball() {
    let m = model(2.0, 0.3);
    let t = tables(2.0);
    let f = build_test_function(&TestFunctionSpec::new(Family::VK2), &m, Some(t.clone())).unwrap();
    let sampler = ShellSampler::oscillator(&m, Some(&t)).unwrap();
    let c = f.values.c;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..10_000 {
        let lo = 1e2 * f.values.e_cut * 2f64.powi(i % 10);
        let x = sampler.sample(lo, 2.0 * lo, &mut rng).unwrap();
        let h = energy(&x, &m);
        assert!(f.eval(&x).value() >= 0.5 * (1.0 - c) * h, "V below (1-c)H/2 at {x:?}");
    }
}

fn small_spec() -> ShellSpec {
    ShellSpec { r0: 10.0, n: 2000, ..ShellSpec::default() }
}

#[test]
fn constant_field_has_zero_drift() {
    let m = model(2.0, 0.3);
    let f = build_test_function(&TestFunctionSpec::new(Family::Constant), &m, None).unwrap();
    let s = ShellSampler::oscillator(&m, None).unwrap();
    let r = verify_sign(&f, field_parameters(&f), &Predicate::AtMost { bound: 0.0 }, &s, &small_spec(), 1).unwrap();
    assert_eq!(r.violations, 0);
    assert!(r.passed());
}

#[test]
fn energy_drift_bounded_by_heat_input() {
    let m = model(2.0, 0.3);
    let f = build_test_function(&TestFunctionSpec::new(Family::Energy), &m, None).unwrap();
    let s = ShellSampler::oscillator(&m, None).unwrap();
    let bound = m.gamma * (m.t_cold + m.t_hot);
    let r = verify_sign(&f, field_parameters(&f), &Predicate::AtMost { bound }, &s, &small_spec(), 2).unwrap();
    assert_eq!(r.violations, 0);
    assert!(r.shells.iter().all(|row| row.violations == 0));
    // and the bound is attained up to p0^2 terms, so margins stay non-negative but small somewhere
    assert!(r.margin_quantiles[0].1 >= 0.0);
}

#[test]
fn exponential_energy_is_subharmonic() {
    let m = model(2.0, 0.3);
    let f = build_test_function(&TestFunctionSpec::new(Family::ExpH), &m, None).unwrap();
    let s = ShellSampler::oscillator(&m, None).unwrap();
    let r = verify_sign(&f, field_parameters(&f), &Predicate::AtLeast { bound: 0.0 }, &s, &small_spec(), 3).unwrap();
    assert!(r.passed(), "{r:?}");
}

#[test]
fn failing_predicate_is_reported() {
    let m = model(2.0, 0.3);
    let f = FnField::new("H", |x: &State4| Eval::energy(x, &m));
    let s = ShellSampler::oscillator(&m, None).unwrap();
    let r = verify_sign(&f, vec![], &Predicate::AtLeast { bound: 0.0 }, &s, &small_spec(), 4).unwrap();
    assert!(r.stabilized);
    assert!(!r.verdict);
    assert!(r.violations > 0);
    assert!(!r.worst_states.is_empty());
    assert!(r.violations <= r.samples);
    let json = serde_json::to_string(&r).unwrap();
    let back: heatbath::lyapunov::VerificationReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back.shells, r.shells);
    assert_eq!(back.violations, r.violations);
}

#[test]
fn verify_sign_is_reproducible() {
    let m = model(2.0, 0.3);
    let t = tables(2.0);
    let f = build_test_function(&TestFunctionSpec::new(Family::VK2), &m, Some(t.clone())).unwrap();
    let s = ShellSampler::oscillator(&m, Some(&t)).unwrap();
    let spec = ShellSpec { r0: 1e3, n: 1000, max_shells: 4, ..ShellSpec::default() };
    let p = Predicate::Below { bound: -0.01 };
    let a = verify_sign(&f, vec![], &p, &s, &spec, 9).unwrap();
    let b = verify_sign(&f, vec![], &p, &s, &spec, 9).unwrap();
    assert_eq!(a.shells, b.shells);
}

#[test]
fn too_few_samples_rejected() {
    let m = model(2.0, 0.3);
    let f = build_test_function(&TestFunctionSpec::new(Family::Energy), &m, None).unwrap();
    let s = ShellSampler::oscillator(&m, None).unwrap();
    let spec = ShellSpec { n: 10, ..small_spec() };
    assert!(verify_sign(&f, vec![], &Predicate::AtMost { bound: 0.0 }, &s, &spec, 1).is_err());
}

#[test]
fn tv_lower_bound_examples() {
    assert!((lower_bound_tv(|y| y.powf(-0.5), 2.0).unwrap() - 0.125).abs() < 1e-9);
    assert!(matches!(lower_bound_tv(|y| 1.0 / y, 2.0), Err(Error::NotMonotone(_))));
    // f(y) = 2 y^{-2/3} has y f(y) = 2 y^{1/3} = 2g at y = g^3, so the bound is 1/g^2
    for g in [1.5, 10.0, 1e3] {
        let b = lower_bound_tv(|y| 2.0 * y.powf(-2.0 / 3.0), g).unwrap();
        assert!((b * g * g - 1.0).abs() < 1e-8, "g = {g}: {b}");
    }
}

#[test]
fn stretched_family_from_exponential_envelope() {
    // with the exponential envelope g(t) the bound decays like exp(-2 C (1+t)^{kappa/(1-kappa)})
    let m = model(1.5, 0.5);
    let kappa = 1.0 / 3.0;
    let b = moment_growth_bound(0.5, &m, BoundVariant::Exponential { kappa }).unwrap();
    let f = |y: f64| 2.0 * y.powf(-2.0 / 3.0);
    let rate: Vec<f64> = [10.0, 40.0, 160.0]
        .iter()
        .map(|&t| {
            let g = b.eval(2.0, t);
            let lb = lower_bound_tv(f, g).unwrap();
            -lb.ln() / (1.0 + t).powf(kappa / (1.0 - kappa))
        })
        .collect();
    for r in &rate {
        assert!((r / (2.0 * b.constant) - 1.0).abs() < 0.2, "{rate:?}");
    }
}

#[test]
fn power_envelope_first_moment_is_linear() {
    let m = model(2.0, 0.3);
    let b = moment_growth_bound(1.0, &m, BoundVariant::Power).unwrap();
    assert!((b.eval(5.0, 2.0) - (5.0 + 2.0 * 1.3)).abs() < 1e-12);
    assert!((b.eval(5.0, 0.0) - 5.0).abs() < 1e-14);
    assert!(moment_growth_bound(1.0, &m, BoundVariant::Exponential { kappa: 0.7 }).is_err());
}

fn small_wonham() -> WonhamSpec {
    WonhamSpec {
        ratio_r0: 1e3,
        ratio_samples: 500,
        drift: ShellSpec { r0: 1e3, n: 1000, max_shells: 12, ..ShellSpec::default() },
        ..WonhamSpec::default()
    }
}

#[test]
fn wonham_exponential_pair_passes() {
    let m = model(2.0, 2.0);
    let exp_h = |b: f64| TestFunctionSpec::new(Family::ExpH).with(|p| p.beta0 = Some(b / m.t_cold));
    let w1 = build_test_function(&exp_h(1.0), &m, None).unwrap();
    let w2 = build_test_function(&exp_h(1.5), &m, None).unwrap();
    let f = build_test_function(&exp_h(2.0), &m, None).unwrap();
    let s = ShellSampler::oscillator(&m, None).unwrap();
    let r = wonham_report(&w1, &w2, &f, &s, &small_wonham(), 5).unwrap();
    assert!(r.passed(), "{:?}", r.hypotheses);
    assert_eq!(r.hypotheses.len(), 4);
    assert_eq!(r.ray.len(), 41);
}

#[test]
fn wonham_sabotaged_pair_fails() {
    let m = model(2.0, 2.0);
    let h = FnField::new("H", |x: &State4| Eval::energy(x, &m));
    let one = build_test_function(&TestFunctionSpec::new(Family::Constant), &m, None).unwrap();
    let s = ShellSampler::oscillator(&m, None).unwrap();
    let r = wonham_report(&h, &h, &one, &s, &small_wonham(), 6).unwrap();
    assert!(!r.passed());
    // H is unbounded and positive, but L H >= 0 fails where p0 is large and W1 / W2 = 1 never decreases
    assert!(r.hypothesis(0).pass);
    assert!(r.hypothesis(1).pass);
    assert!(!r.hypothesis(2).pass);
    assert!(!r.hypothesis(3).pass);
}

#[test]
fn wonham_spec_validated() {
    let m = model(2.0, 2.0);
    let h = FnField::new("H", |x: &State4| Eval::energy(x, &m));
    let s = ShellSampler::oscillator(&m, None).unwrap();
    let bad = WonhamSpec { ratio_shells: 1, ..WonhamSpec::default() };
    assert!(matches!(wonham_report(&h, &h, &h, &s, &bad, 1), Err(Error::InvalidParams(_))));
}

#[test]
fn log_drift_predicate_margin() {
    // F = e^{y}, L F = -F y^{-1/2}: the margin of LF <= -c (ln F)^{-1/2} F is (1 - c) y^{-1/2}
    let m = model(2.0, 0.3);
    let mut e = Eval::constant(1.0, &m);
    let y: f64 = 16.0;
    e.jet.value = 1.0;
    e.log_scale = y;
    e.generator = -y.powf(-0.5);
    let p = Predicate::LogDrift { c: 0.5, power: -0.5 };
    assert!((p.margin(&e) - 0.5 * 0.25).abs() < 1e-14);
}
