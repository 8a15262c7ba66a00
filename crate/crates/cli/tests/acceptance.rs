//! End-to-end acceptance checks. Each test prints one `criterion N` line
//! with its verdict before asserting it.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use heatbath::linear::{build_gram, build_matrices, default_gamma_tilde, spectral_abscissa};
use heatbath::model::{apply_generator, free_energy, Eval, ModelParams, Smoothing, State4};
use heatbath::oscillator::orbit_average;
use heatbath::reduced::{stationary_density, ReducedParams};
use heatbath::sim::stats::{fit_decay, DecayFamily};
use heatbath::Error;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

// written to the stdout handle directly so the line survives output capture
fn verdict(n: u32, name: &str, ok: bool, detail: String) {
    let line = format!("criterion {n} ({name}): {} | {detail}\n", if ok { "PASS" } else { "FAIL" });
    let _ = std::io::stdout().lock().write_all(line.as_bytes());
    assert!(ok, "criterion {n} failed: {detail}");
}

/// Runs the binary in `dir`, returning the exit code, the report and the
/// elapsed time.
fn heatbath(args: &[&str], config: Option<&str>, dir: &Path, out: &str) -> (i32, Value, Duration) {
    let mut a: Vec<String> = args.iter().map(|s| s.to_string()).collect();
    if let Some(text) = config {
        let path = dir.join(format!("{out}.toml"));
        fs::write(&path, text).unwrap();
        a.extend(["--config".into(), path.to_str().unwrap().into()]);
    }
    a.extend(["--out".into(), out.into()]);
    let t0 = Instant::now();
    let o = Command::new(env!("CARGO_BIN_EXE_heatbath")).args(&a).current_dir(dir).output().unwrap();
    let elapsed = t0.elapsed();
    let code = o.status.code().unwrap_or(-1);
    assert!(code == 0 || code == 2, "{a:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    let report = serde_json::from_str(&fs::read_to_string(dir.join(out).join("report.json")).unwrap()).unwrap();
    (code, report, elapsed)
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap()
}

#[test]
fn criterion_01_c_hat() {
    let dir = tempfile::tempdir().unwrap();
    let (code, r, t) = heatbath(&["constants"], None, dir.path(), "c");
    let c = f(&r["c_hat"]);
    let ok = code == 0 && (c - 0.6354699).abs() < 1e-6 && t < Duration::from_secs(60);
    verdict(1, "C_hat", ok, format!("C_hat = {c:.10} in {t:.2?}"));
}

#[test]
fn criterion_02_virial() {
    let mut worst: f64 = 0.0;
    for k in [1.0, 1.5, 2.0, 3.0] {
        let m = orbit_average(|p, _| p * p, 1.0, k, 4096).unwrap();
        worst = worst.max((m - 2.0 * k / (1.0 + k)).abs());
    }
    for e in [1.0, 16.0] {
        let m = orbit_average(|p, q| p * p - 4.0 / 3.0 * free_energy(p, q, 2.0), e, 2.0, 4096).unwrap();
        worst = worst.max(m.abs());
    }
    verdict(2, "virial constant", worst < 1e-8, format!("largest deviation {worst:.2e}"));
}

#[test]
fn criterion_03_generator() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let (g, t, ti, k) = (rng.random_range(0.1..3.0), rng.random_range(0.1..3.0), rng.random_range(0.1..3.0), rng.random_range(1.0..3.0));
        let m = ModelParams::new(rng.random_range(0.1..3.0), g, t, ti, k, Smoothing::Pure).unwrap();
        let x = State4::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let lh = apply_generator(&Eval::energy(&x, &m).jet, &x, &m);
        worst = worst.max((lh - (g * (t + ti) - g * x.p0 * x.p0)).abs());
    }
    verdict(3, "generator exactness", worst <= 1e-12, format!("largest residual {worst:.2e} over 1000 states"));
}

#[test]
fn criterion_04_reduced_stationarity() {
    let dir = tempfile::tempdir().unwrap();
    let t0 = Instant::now();
    let pareto = "seed = 1\n[reduced]\nsigma = -1.0\neta = 3.0\nburn_in = 1000.0\nevery = 36.0\nper_path = 200\nn_paths = 500\ntop_fraction = 0.05\n";
    let (_, a, _) = heatbath(&["reduced"], Some(pareto), dir.path(), "pareto");
    let stretched = "seed = 1\n[reduced]\nsigma = -0.5\neta = 1.0\nburn_in = 100.0\nevery = 5.0\nper_path = 50\nn_paths = 2000\n";
    let (_, b, _) = heatbath(&["reduced"], Some(stretched), dir.path(), "stretched");
    let hill = f(&a["simulation"]["hill"]["index"]);
    let ks = f(&b["simulation"]["ks_distance"]);
    let n = (a["simulation"]["samples"].as_u64().unwrap(), b["simulation"]["samples"].as_u64().unwrap());
    let none = matches!(stationary_density(&ReducedParams::new(-1.0, 1.0).unwrap()), Err(Error::NoInvariantMeasure));
    let t = t0.elapsed();
    let ok = (hill - 2.0).abs() <= 0.2 && ks < 0.05 && none && n == (100_000, 100_000) && t < Duration::from_secs(300);
    verdict(4, "reduced stationarity", ok, format!("Hill {hill:.3}, KS {ks:.4}, (-1, 1) has no invariant measure: {none}, {t:.1?}"));
}

fn verify_line(r: &Value) -> String {
    format!(
        "{} violations in {} samples, worst margin {:.3e}, stabilized at {}",
        r["violations"], r["samples"], f(&r["worst_margin"]), r["stabilization_radius"]
    )
}

#[test]
fn criterion_05_positive_verification() {
    let dir = tempfile::tempdir().unwrap();
    let (code, r, t) = heatbath(&["verify", "--preset", "positive"], None, dir.path(), "v");
    let ok = code == 0
        && r["violations"] == 0
        && r["samples"].as_u64().unwrap() >= 10_000
        && r["stabilized"] == true
        && r["predicate"] == "LF < -0.01"
        && t < Duration::from_secs(600);
    verdict(5, "V_k2 below the critical temperature", ok, format!("{} ({t:.1?})", verify_line(&r)));
}

#[test]
fn criterion_06_wonham() {
    let dir = tempfile::tempdir().unwrap();
    let (code, r, t) = heatbath(&["verify", "--preset", "negative"], None, dir.path(), "neg");
    let (scode, s, _) = heatbath(&["verify", "--preset", "negative-sabotaged"], None, dir.path(), "sab");
    let passes = |v: &Value| v["hypotheses"].as_array().unwrap().iter().map(|h| h["pass"] == true).collect::<Vec<_>>();
    let ok = code == 0 && passes(&r) == [true; 4] && scode == 2 && passes(&s).contains(&false) && t < Duration::from_secs(600);
    verdict(6, "Wonham pair at 2 alpha^2 C_hat", ok, format!("pair {:?}, control {:?} ({t:.1?})", passes(&r), passes(&s)));
}

#[test]
fn criterion_07_fractional() {
    let dir = tempfile::tempdir().unwrap();
    let (code, r, _) = heatbath(&["verify", "--preset", "fractional"], None, dir.path(), "v");
    let ok = code == 0 && r["violations"] == 0 && r["stabilized"] == true;
    verdict(7, "W_exp_frac at k = 1.5", ok, verify_line(&r));
}

#[test]
fn criterion_08_small_k() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut det_err, mut abscissa, mut residual): (f64, f64, f64) = (0.0, f64::NEG_INFINITY, 0.0);
    let mut contraction = true;
    for _ in 0..100 {
        let (alpha, gamma) = (rng.random_range(0.05..5.0), rng.random_range(0.05..5.0));
        let m = ModelParams::new(alpha, gamma, 1.0, 1.0, 0.75, Smoothing::Regularized).unwrap();
        let a = build_matrices(&m).a;
        det_err = det_err.max((a.determinant() + gamma * alpha).abs());
        abscissa = abscissa.max(spectral_abscissa(&a));
        let g = build_gram(&a, default_gamma_tilde(&a)).unwrap();
        residual = residual.max(g.residual(&a));
        for t in [0.1, 1.0, 10.0] {
            let y = DVector::from_fn(3, |_, _| rng.random_range(-3.0..3.0));
            let lhs = g.quadratic(((&a * t).exp() * &y).as_slice());
            contraction &= lhs <= (-g.gamma_tilde * t).exp() * g.quadratic(y.as_slice()) * (1.0 + 1e-10);
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let (code, r, _) = heatbath(&["verify", "--preset", "small-k"], None, dir.path(), "v");
    let ok = det_err <= 1e-12 && abscissa < 0.0 && residual < 1e-10 && contraction && code == 0 && r["violations"] == 0;
    verdict(
        8,
        "small-k machinery",
        ok,
        format!("det error {det_err:.1e}, abscissa {abscissa:.3}, Gram residual {residual:.1e}, contraction {contraction}, hatH_smallk: {}", verify_line(&r)),
    );
}

#[test]
fn criterion_09_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let (_, lo, t1) = heatbath(&["simulate", "--preset", "threshold-below"], None, dir.path(), "lo");
    let (_, hi, t2) = heatbath(&["simulate", "--preset", "threshold-above"], None, dir.path(), "hi");
    let (sl, el) = (f(&lo["median_slope"]["slope"]), f(&lo["median_slope"]["std_error"]));
    let (sh, eh) = (f(&hi["median_slope"]["slope"]), f(&hi["median_slope"]["std_error"]));
    let ok = sl.abs() <= 3.0 * el && sh > 0.0 && lo["paths"] == 512 && t1 + t2 < Duration::from_secs(1800);
    verdict(
        9,
        "threshold behaviour",
        ok,
        format!("slope below {sl:.2e} +- {el:.1e}, above {sh:.2e} +- {eh:.1e} ({:.1?})", t1 + t2),
    );
}

#[test]
fn criterion_10_decay_families() {
    let t: Vec<f64> = (1..=40).map(|i| 0.25 * i as f64).collect();
    let series = |g: fn(f64) -> f64| t.iter().map(|&x| g(x)).collect::<Vec<f64>>();
    let e = fit_decay(&t, &series(|x| (-0.7 * x).exp())).unwrap();
    let s = fit_decay(&t, &series(|x| (-x.sqrt()).exp())).unwrap();
    let p = fit_decay(&t, &series(|x| 1.0 / x)).unwrap();
    let synthetic = e.family == DecayFamily::Exponential
        && (e.rate - 0.7).abs() <= 0.05
        && s.family == DecayFamily::Stretched
        && (s.exponent - 0.5).abs() <= 0.1
        && p.family == DecayFamily::Polynomial
        && (p.rate - 1.0).abs() <= 0.1;
    let dir = tempfile::tempdir().unwrap();
    let (code, r, _) = heatbath(&["convergence", "--preset", "harmonic-convergence"], None, dir.path(), "conv");
    let family = r["fit"]["family"].as_str().unwrap().to_string();
    let ok = synthetic && code == 0 && family == "exponential";
    verdict(
        10,
        "decay families",
        ok,
        format!(
            "synthetic ({:?} {:.3}, {:?} s = {:.3}, {:?} {:.3}); k = 1 chain: {family} over {} points",
            e.family, e.rate, s.family, s.exponent, p.family, p.rate, r["points_in_fit"]
        ),
    );
}

#[test]
#[ignore = "hours of simulation; run with --ignored"]
fn criterion_11_tail_exponent() {
    let dir = tempfile::tempdir().unwrap();
    let (_, r, t) = heatbath(&["tails", "--preset", "critical-tails"], None, dir.path(), "tails");
    let (hill, z) = (f(&r["hill"]["index"]), f(&r["zeta_star"]));
    let ok = ((hill - z) / z).abs() <= 0.3;
    verdict(11, "tail exponent", ok, format!("Hill {hill:.3} vs zeta* {z:.3} ({t:.1?})"));
}
