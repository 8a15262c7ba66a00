use heatbath::linear::build_matrices;
use heatbath::lyapunov::{moment_growth_bound, validate_moments, BoundVariant};
use heatbath::model::{energy, ModelParams, Smoothing, State4};
use heatbath::rng::path_rng;
use heatbath::sim::stats::{hill_estimate, ols, tv_proxy};
use heatbath::sim::{run_ensemble, step, EnsembleConfig, IntegratorConfig, Scheme};
use heatbath::Error;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

fn harmonic() -> ModelParams {
    ModelParams::new(1.0, 1.0, 1.0, 0.5, 1.0, Smoothing::Pure).unwrap()
}

// E H(t) for the linear chain from the second-moment equation S' = A S + S A^T + B B^T
fn exact_mean_energy(m: &ModelParams, x0: State4, t: f64) -> f64 {
    let d = build_matrices(m);
    let (a, bb) = (d.a_tilde, &d.b_tilde * d.b_tilde.transpose());
    let v = DVector::from_column_slice(&x0.to_array());
    let mut s = &v * v.transpose();
    let f = |s: &DMatrix<f64>| &a * s + s * a.transpose() + &bb;
    let n = 20_000;
    let h = t / n as f64;
    for _ in 0..n {
        let k1 = f(&s);
        let k2 = f(&(&s + &k1 * (h / 2.0)));
        let k3 = f(&(&s + &k2 * (h / 2.0)));
        let k4 = f(&(&s + &k3 * h));
        s += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    let al = m.alpha;
    #[rustfmt::skip]
    let hess = DMatrix::from_row_slice(4, 4, &[
        1.0 + al, -al, 0.0, 0.0,
        -al, 1.0 + al, 0.0, 0.0,
        0.0, 0.0, 1.0, 0.0,
        0.0, 0.0, 0.0, 1.0,
    ]);
    0.5 * (hess * s).trace()
}

fn mc_mean_energy(m: &ModelParams, cfg: &IntegratorConfig, x0: State4, t: f64, n: usize) -> f64 {
    let steps = (t / cfg.dt).round() as usize;
    let s: f64 = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(1, i as u64);
            let mut x = x0;
            for _ in 0..steps {
                x = step(&x, m, cfg, &mut rng).unwrap();
            }
            energy(&x, m)
        })
        .sum();
    s / n as f64
}

#[test]
fn weak_order_on_harmonic_chain() {
    let m = harmonic();
    let x0 = State4::new(1.0, -0.5, 0.5, 0.0);
    let exact = exact_mean_energy(&m, x0, 1.0);
    for (scheme, dts, nominal) in [
        (Scheme::EulerMaruyama, [0.125, 0.0625, 0.03125], 1.0),
        (Scheme::Strang, [0.5, 0.25, 0.125], 2.0),
    ] {
        let (ldt, lerr): (Vec<f64>, Vec<f64>) = dts
            .iter()
            .map(|&dt| {
                let cfg = IntegratorConfig { dt, scheme, ..Default::default() };
                let err = (mc_mean_energy(&m, &cfg, x0, 1.0, 400_000) - exact).abs();
                (dt.ln(), err.ln())
            })
            .unzip();
        let order = ols(&ldt, &lerr).1;
        assert!((order - nominal).abs() <= 0.3, "{scheme:?}: observed order {order:.3}");
    }
}

#[test]
fn strang_conserves_energy_to_second_order() {
    let m = ModelParams { alpha: 1.0, gamma: 1e-300, t_cold: 0.0, t_hot: 0.0, k: 2.0, smoothing: Smoothing::Pure };
    let x0 = State4::new(1.0, -0.5, 0.3, 0.8);
    let e0 = energy(&x0, &m);
    let drift = |dt: f64| {
        let cfg = IntegratorConfig { dt, ..Default::default() };
        let mut rng = path_rng(1, 0);
        let mut x = x0;
        let mut worst: f64 = 0.0;
        for _ in 0..(10.0 / dt).round() as usize {
            x = step(&x, &m, &cfg, &mut rng).unwrap();
            worst = worst.max((energy(&x, &m) - e0).abs());
        }
        worst
    };
    let order = (drift(0.02) / drift(0.01)).log2();
    assert!((order - 2.0).abs() < 0.3, "order {order}");
}

#[test]
fn first_moment_under_envelope() {
    let m = ModelParams::new(1.0, 1.0, 1.0, 0.3, 2.0, Smoothing::Pure).unwrap();
    let icfg = IntegratorConfig::default();
    let ecfg = EnsembleConfig { n_paths: 256, t_end: 20.0, record_every: 1.0, seed: 3, x0: State4::new(1.0, 0.0, 0.0, 0.0) };
    let ens = run_ensemble(&m, &icfg, &ecfg).unwrap();
    for alpha in [1.0, 0.5] {
        let b = moment_growth_bound(alpha, &m, BoundVariant::Power).unwrap();
        let rows = validate_moments(&ens, &b, &m).unwrap();
        assert_eq!(rows.len(), ens.times.len());
        assert!(rows.iter().all(|r| r.within), "alpha = {alpha}: {:?}", rows.iter().find(|r| !r.within));
    }
    // the same data under a bound that is far too small must be flagged
    let tight = heatbath::lyapunov::MomentBound { variant: BoundVariant::Power, alpha: 1.0, constant: 0.0 };
    assert!(validate_moments(&ens, &tight, &m).unwrap().iter().any(|r| !r.within));
}

#[test]
fn ensembles_reproducible_across_thread_counts() {
    let m = ModelParams::new(1.0, 1.0, 1.0, 0.5, 1.5, Smoothing::Pure).unwrap();
    let icfg = IntegratorConfig::default();
    let ecfg = EnsembleConfig { n_paths: 24, t_end: 5.0, record_every: 0.5, seed: 17, x0: State4::new(0.5, 0.0, 0.0, 1.0) };
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| run_ensemble(&m, &icfg, &ecfg).unwrap())
    };
    let a = run(1);
    let b = run(3);
    assert_eq!(a.times, b.times);
    assert_eq!(a.states, b.states);
    let c = run_ensemble(&m, &icfg, &EnsembleConfig { seed: 18, ..ecfg }).unwrap();
    assert_ne!(a.states, c.states);
}

#[test]
fn divergence_is_reported() {
    let m = ModelParams::new(1.0, 1.0, 1.0, 1.0, 3.0, Smoothing::Pure).unwrap();
    let icfg = IntegratorConfig { dt: 0.5, scheme: Scheme::EulerMaruyama, substep_cap: 1e300, max_halvings: 0 };
    let ecfg = EnsembleConfig { n_paths: 2, t_end: 50.0, record_every: 0.5, seed: 1, x0: State4::new(5.0, -5.0, 0.0, 0.0) };
    assert!(matches!(run_ensemble(&m, &icfg, &ecfg), Err(Error::Diverged(_))));
}

#[test]
fn hill_on_exact_pareto() {
    let mut rng = path_rng(21, 0);
    let x: Vec<f64> = (0..100_000).map(|_| (1.0 - rng.random::<f64>()).powf(-0.5)).collect();
    let h = hill_estimate(&x, 0.01, 1).unwrap();
    assert!((h.index - 2.0).abs() < 0.1, "index {}", h.index);
    assert!(h.std_error > 0.0 && h.std_error < 0.1);
    let scaled: Vec<f64> = x.iter().map(|v| 7.0 * v).collect();
    let hs = hill_estimate(&scaled, 0.01, 1).unwrap();
    assert!((hs.index - h.index).abs() < 1e-9);
}

#[test]
fn hill_grows_with_threshold_on_light_tails() {
    let mut rng = path_rng(22, 0);
    let x: Vec<f64> = (0..100_000).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let est: Vec<f64> = [0.1, 0.01, 0.001].iter().map(|f| hill_estimate(&x, *f, 1).unwrap().index).collect();
    assert!(est[0] < est[1] && est[1] < est[2], "{est:?}");
}

#[test]
fn hill_rejections() {
    assert!(hill_estimate(&[1.0; 50], 0.01, 1).is_err());
    assert!(hill_estimate(&[1.0; 5000], 1.5, 1).is_err());
}

#[test]
fn tv_of_shifted_gaussians() {
    let mut rng = path_rng(23, 0);
    let n = 100_000;
    let a: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.sample::<f64, _>(StandardNormal)]).collect();
    let b: Vec<Vec<f64>> = (0..n).map(|_| vec![2.0 + rng.sample::<f64, _>(StandardNormal)]).collect();
    // 2 Phi(1) - 1
    let exact = 0.6826894921370859;
    let tv = tv_proxy(&a, &b, 100).unwrap();
    assert!((tv - exact).abs() < 0.02, "tv {tv}");
}
