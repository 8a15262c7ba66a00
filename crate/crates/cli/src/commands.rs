//! One driver per subcommand. Each reads a resolved [`Config`], writes its
//! artifacts and returns the exit code.

use std::sync::Arc;

use anyhow::{bail, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use heatbath::lyapunov::{
    build_test_function, field_parameters, moment_growth_bound, validate_moments, verify_sign, wonham_report,
    BoundVariant, Field, SamplerKind, ShellSampler, TestFunctionSpec, VerificationReport,
};
use heatbath::linear::{build_gram, build_matrices, default_gamma_tilde, GramExport};
use heatbath::model::{energy, ModelParams, State4};
use heatbath::oscillator::{build_orbit, build_phi, c_hat, OrbitSolutions};
use heatbath::reduced::{
    classify_reduced, phase_diagram, sample_reduced, stationary_density, zeta_star, RateRow, Regime,
};
use heatbath::sim::stats::{fit_decay, hill_estimate, ks_distance, median_slope, quantile_sorted, tv_proxy, DecayFit, HillEstimate};
use heatbath::sim::{run_ensemble, EnsembleConfig, EnsembleResult};
use heatbath::Error;

use crate::config::{Command, Config, VerifyMode};
use crate::output::OutputDir;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 2;

pub fn run(cmd: Command, cfg: &Config, out: &mut OutputDir) -> Result<i32> {
    match cmd {
        Command::Constants => constants(cfg, out),
        Command::PhaseDiagram => phase(cfg, out),
        Command::Simulate => simulate(cfg, out),
        Command::Tails => tails(cfg, out),
        Command::Convergence => convergence(cfg, out),
        Command::Verify => match cfg.verify.expect("resolved").mode {
            VerifyMode::Sign => verify(cfg, out),
            VerifyMode::Wonham => wonham(cfg, out),
        },
        Command::Reduced => reduced(cfg, out),
    }
}

fn model(cfg: &Config) -> Result<ModelParams> {
    cfg.model.expect("resolved").params()
}

#[derive(Serialize)]
struct Constants {
    c_hat: f64,
    nodes: usize,
    /// `alpha^2 C_hat`
    critical_t_hot: f64,
    k: f64,
    /// Virial constant `2k/(1+k)`.
    big_k: f64,
    kappa: f64,
    zeta_star: f64,
}

fn constants(cfg: &Config, out: &mut OutputDir) -> Result<i32> {
    let m = model(cfg)?;
    let nodes = cfg.constants.expect("resolved").nodes;
    let c = c_hat(nodes)?;
    let r = Constants {
        c_hat: c,
        nodes,
        critical_t_hot: m.alpha * m.alpha * c,
        k: m.k,
        big_k: 2.0 * m.k / (1.0 + m.k),
        kappa: 2.0 / m.k - 1.0,
        zeta_star: zeta_star(m.alpha, c, m.t_hot),
    };
    println!("C_hat = {:.10}", r.c_hat);
    println!("alpha^2 C_hat = {:.10}", r.critical_t_hot);
    println!("K(k) = {:.10}", r.big_k);
    println!("kappa = {:.10}", r.kappa);
    println!("zeta* = {:.10}", r.zeta_star);
    out.json("report.json", &r)?;
    out.json("linear.json", &linear_export(&m)?)?;
    if m.k >= 1.0 {
        let phi = build_phi(Arc::new(build_orbit(1.0, m.k, nodes)?))?;
        let rows: Vec<ProfileRecord> = phi
            .profile_rows()
            .into_iter()
            .map(|[t, q, p, u0, du0_dp]| ProfileRecord { t, q, p, u0, du0_dp })
            .collect();
        out.csv("phi_profile.csv", &rows)?;
    }
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct ProfileRecord {
    t: f64,
    q: f64,
    p: f64,
    u0: f64,
    du0_dp: f64,
}

#[derive(Serialize)]
struct LinearExport {
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    a_tilde: Vec<Vec<f64>>,
    b_tilde: Vec<Vec<f64>>,
    gram: GramExport,
    gram_tilde: GramExport,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn linear_export(m: &ModelParams) -> Result<LinearExport> {
    let d = build_matrices(m);
    let g = build_gram(&d.a, default_gamma_tilde(&d.a))?;
    let gt = build_gram(&d.a_tilde, default_gamma_tilde(&d.a_tilde))?;
    Ok(LinearExport {
        a: rows(&d.a),
        b: rows(&d.b),
        a_tilde: rows(&d.a_tilde),
        b_tilde: rows(&d.b_tilde),
        gram: g.export(&d.a),
        gram_tilde: gt.export(&d.a_tilde),
    })
}

/// One row of `phase.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub k: f64,
    pub t_hot: f64,
    /// Snake-case regime name, or `undetermined`.
    pub regime: String,
    pub invariant_measure: bool,
    pub integrability: String,
    pub speed: String,
    pub prefactor: String,
}

pub const UNDETERMINED: &str = "undetermined";

fn regime_name(r: Regime) -> String {
    serde_json::to_value(r).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

/// Parses `phase.csv` and checks every row against the schema.
pub fn read_phase_csv(text: &str) -> Result<Vec<PhaseRecord>> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let want = ["k", "t_hot", "regime", "invariant_measure", "integrability", "speed", "prefactor"];
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header != want {
        bail!("unexpected header {header:?}");
    }
    let mut rows = Vec::new();
    for (i, rec) in rd.deserialize().enumerate() {
        let r: PhaseRecord = rec?;
        if !(r.k.is_finite() && r.t_hot > 0.0) {
            bail!("row {i}: bad (k, t_hot) = ({}, {})", r.k, r.t_hot);
        }
        if r.regime == UNDETERMINED {
            if r.invariant_measure || !r.speed.is_empty() {
                bail!("row {i}: undetermined cell carries a rate");
            }
        } else {
            serde_json::from_value::<Regime>(serde_json::Value::String(r.regime.clone()))
                .map_err(|_| anyhow::anyhow!("row {i}: unknown regime '{}'", r.regime))?;
            if r.invariant_measure == (r.speed == "---") {
                bail!("row {i}: invariant_measure disagrees with speed '{}'", r.speed);
            }
        }
        rows.push(r);
    }
    Ok(rows)
}

fn phase(cfg: &Config, out: &mut OutputDir) -> Result<i32> {
    let base = ModelParams { k: 1.0, ..model_unchecked(cfg) };
    let g = cfg.grid.clone().expect("resolved");
    let c = c_hat(cfg.constants.expect("resolved").nodes)?;
    let critical = base.alpha * base.alpha * c;
    let ts: Vec<f64> = g.t_hots.iter().copied().chain(g.t_hot_ratios.iter().map(|r| r * critical)).collect();
    let cells = phase_diagram(&base, &g.ks, &ts, c);
    let rows: Vec<PhaseRecord> = cells
        .iter()
        .map(|cell| match cell.row {
            Some(row) => {
                let [a, b, p] = row.render("H");
                PhaseRecord {
                    k: cell.k,
                    t_hot: cell.t_hot,
                    regime: regime_name(row.regime),
                    invariant_measure: row.has_invariant_measure(),
                    integrability: a,
                    speed: b,
                    prefactor: p,
                }
            }
            None => PhaseRecord {
                k: cell.k,
                t_hot: cell.t_hot,
                regime: UNDETERMINED.into(),
                invariant_measure: false,
                integrability: String::new(),
                speed: String::new(),
                prefactor: String::new(),
            },
        })
        .collect();
    let mut distinct: Vec<String> = Vec::new();
    for r in &rows {
        if r.regime != UNDETERMINED && !distinct.contains(&r.regime) {
            distinct.push(r.regime.clone());
        }
    }
    let undetermined = rows.iter().filter(|r| r.regime == UNDETERMINED).count();
    for r in &rows {
        println!("k = {:<6} T_inf = {:<12.8} {:<16} {} | {} | {}", r.k, r.t_hot, r.regime, r.integrability, r.speed, r.prefactor);
    }
    println!("{} cells, {} distinct regimes, {} undetermined", rows.len(), distinct.len(), undetermined);
    out.csv("phase.csv", &rows)?;
    out.json(
        "report.json",
        &serde_json::json!({
            "c_hat": c,
            "critical_t_hot": critical,
            "cells": rows.len(),
            "distinct_regimes": distinct,
            "undetermined": undetermined,
        }),
    )?;
    Ok(EXIT_OK)
}

// the phase diagram overrides k and t_hot, so the section is not validated as a whole
fn model_unchecked(cfg: &Config) -> ModelParams {
    let m = cfg.model.expect("resolved");
    ModelParams {
        alpha: m.alpha,
        gamma: m.gamma,
        t_cold: m.t_cold,
        t_hot: m.t_hot,
        k: m.k,
        smoothing: m.smoothing.expect("resolved"),
    }
}

fn ensemble(cfg: &Config, m: &ModelParams, seed: u64) -> Result<EnsembleResult> {
    let icfg = cfg.integrator.expect("resolved").config();
    let ecfg = cfg.ensemble.expect("resolved").config(seed);
    Ok(run_ensemble(m, &icfg, &ecfg)?)
}

#[derive(Serialize)]
struct SummaryRecord {
    t: f64,
    observable: &'static str,
    mean: f64,
    q05: f64,
    q50: f64,
    q95: f64,
}

#[derive(Serialize)]
struct MomentRecord {
    order: f64,
    t: f64,
    mean: f64,
    std_error: f64,
    envelope: f64,
    within: bool,
}

#[derive(Serialize)]
struct MomentSummary {
    order: f64,
    constant: f64,
    records: usize,
    outside: usize,
}

#[derive(Serialize)]
struct TrajectoryRecord {
    path: usize,
    t: f64,
    energy: f64,
}

const TRAJECTORIES: usize = 8;

fn simulate(cfg: &Config, out: &mut OutputDir) -> Result<i32> {
    let m = model(cfg)?;
    let seed = cfg.seed();
    let ens = ensemble(cfg, &m, seed)?;
    let h = ens.observable(|x| energy(x, &m));
    let observables: [(&'static str, fn(&State4) -> f64); 4] =
        [("q0", |x| x.q0), ("q1", |x| x.q1), ("p0", |x| x.p0), ("p1", |x| x.p1)];
    let mut summary = Vec::new();
    let mut push = |name: &'static str, values: &[Vec<f64>]| {
        for r in heatbath::sim::summarize(&ens.times, values) {
            summary.push(SummaryRecord { t: r.t, observable: name, mean: r.mean, q05: r.q05, q50: r.median, q95: r.q95 });
        }
    };
    push("energy", &h);
    for (name, f) in observables {
        push(name, &ens.observable(f));
    }
    let slope = median_slope(&ens.times, &h, seed)?;
    let mut moments = Vec::new();
    let mut moment_rows = Vec::new();
    for &a in &cfg.simulate.as_ref().expect("resolved").moment_orders {
        let b = moment_growth_bound(a, &m, BoundVariant::Power)?;
        let rows = validate_moments(&ens, &b, &m)?;
        moments.push(MomentSummary { order: a, constant: b.constant, records: rows.len(), outside: rows.iter().filter(|r| !r.within).count() });
        moment_rows.extend(rows.iter().map(|r| MomentRecord {
            order: a,
            t: r.t,
            mean: r.mean,
            std_error: r.std_error,
            envelope: r.envelope,
            within: r.within,
        }));
    }
    let trajectories: Vec<TrajectoryRecord> = h
        .iter()
        .take(TRAJECTORIES)
        .enumerate()
        .flat_map(|(p, v)| ens.times.iter().zip(v).map(move |(t, e)| TrajectoryRecord { path: p, t: *t, energy: *e }))
        .collect();
    let z = slope.slope / slope.std_error;
    println!("median H last-half slope {:.4e} +- {:.4e} (z = {z:.2})", slope.slope, slope.std_error);
    let ok = moments.iter().all(|s| s.outside == 0);
    for s in &moments {
        println!("E H^{}: {} of {} records above the envelope", s.order, s.outside, s.records);
    }
    out.csv("summary.csv", &summary)?;
    out.csv("moments.csv", &moment_rows)?;
    out.csv("trajectories.csv", &trajectories)?;
    out.json(
        "report.json",
        &serde_json::json!({
            "paths": ens.n_paths(),
            "median_slope": slope,
            "z": z,
            "final_median_energy": summary.iter().filter(|r| r.observable == "energy").last().map(|r| r.q50),
            "moments": moments,
            "moments_within": ok,
        }),
    )?;
    Ok(if ok { EXIT_OK } else { EXIT_FAILED })
}

#[derive(Serialize)]
struct CcdfRecord {
    x: f64,
    ccdf: f64,
}

const CCDF_POINTS: usize = 200;

fn ccdf_points(sorted: &[f64]) -> Vec<CcdfRecord> {
    let n = sorted.len();
    // log-spaced upper-tail probabilities down to 1/n
    (0..CCDF_POINTS)
        .map(|i| {
            let p = (n as f64).powf(-(i as f64) / (CCDF_POINTS - 1) as f64);
            CcdfRecord { x: quantile_sorted(sorted, 1.0 - p), ccdf: p }
        })
        .collect()
}

fn tails(cfg: &Config, out: &mut OutputDir) -> Result<i32> {
    let m = model(cfg)?;
    let t = cfg.tails.expect("resolved");
    let seed = cfg.seed();
    let ens = ensemble(cfg, &m, seed)?;
    let keep: Vec<usize> = (0..ens.times.len()).filter(|&r| ens.times[r] >= t.burn_in).collect();
    let mut samples: Vec<f64> = ens.states.iter().flat_map(|p| keep.iter().map(|&r| energy(&p[r], &m))).collect();
    let hill = hill_estimate(&samples, t.top_fraction, seed)?;
    samples.sort_by(|a, b| a.total_cmp(b));
    let c = c_hat(cfg.constants.expect("resolved").nodes)?;
    let critical = m.alpha * m.alpha * c;
    let zeta = (m.k == 2.0 && m.t_hot < critical).then(|| zeta_star(m.alpha, c, m.t_hot));
    println!("Hill index {:.4} +- {:.4} from {} samples (top {})", hill.index, hill.std_error, samples.len(), hill.k_used);
    if let Some(z) = zeta {
        println!("zeta* = {z:.4}, relative error {:.3}", (hill.index - z) / z);
    }
    out.csv("ccdf.csv", &ccdf_points(&samples))?;
    out.json(
        "report.json",
        &serde_json::json!({
            "samples": samples.len(),
            "hill": hill,
            "zeta_star": zeta,
            "relative_error": zeta.map(|z| (hill.index - z) / z),
            "tail_threshold_3_7": (m.k == 2.0).then(|| 3.0 / 7.0 * critical),
        }),
    )?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct TvRecord {
    t: f64,
    tv: f64,
    in_fit: bool,
}

#[derive(Serialize)]
pub struct ConvergenceReport {
    pub floor: f64,
    pub window: (f64, f64),
    pub points_in_fit: usize,
    pub fit: DecayFit,
}

fn convergence(cfg: &Config, out: &mut OutputDir) -> Result<i32> {
    let m = model(cfg)?;
    let c = cfg.convergence.expect("resolved");
    let seed = cfg.seed();
    let icfg = cfg.integrator.expect("resolved").config();
    let e = cfg.ensemble.expect("resolved");
    let reference = |s: u64| -> Result<Vec<Vec<f64>>> {
        let ecfg = EnsembleConfig { t_end: c.reference_time, record_every: c.reference_time, ..e.config(s) };
        let ens = run_ensemble(&m, &icfg, &ecfg)?;
        Ok(ens.snapshot(ens.times.len() - 1).iter().map(|x| vec![energy(x, &m)]).collect())
    };
    let ref_a = reference(seed.wrapping_add(1))?;
    let ref_b = reference(seed.wrapping_add(2))?;
    let floor = tv_proxy(&ref_a, &ref_b, c.bins)?;
    let ens = ensemble(cfg, &m, seed)?;
    let lo = c.floor_factor * floor;
    let mut rows = Vec::with_capacity(ens.times.len());
    for (r, &t) in ens.times.iter().enumerate() {
        let snap: Vec<Vec<f64>> = ens.snapshot(r).iter().map(|x| vec![energy(x, &m)]).collect();
        let tv = tv_proxy(&snap, &ref_a, c.bins)?;
        rows.push(TvRecord { t, tv, in_fit: t > 0.0 && tv > lo && tv < c.fit_max });
    }
    let (ts, tvs): (Vec<f64>, Vec<f64>) = rows.iter().filter(|r| r.in_fit).map(|r| (r.t, r.tv)).unzip();
    out.csv("tv.csv", &rows)?;
    let fit = match fit_decay(&ts, &tvs) {
        Ok(f) => f,
        Err(Error::InsufficientData(msg)) => bail!("only {} points between {lo:.4} and {}: {msg}", ts.len(), c.fit_max),
        Err(e) => return Err(e.into()),
    };
    println!("noise floor {floor:.4}, {} points in ({lo:.4}, {})", ts.len(), c.fit_max);
    println!("decay family {:?}, rate {:.4}, exponent {:.3}", fit.family, fit.rate, fit.exponent);
    out.json("report.json", &ConvergenceReport { floor, window: (lo, c.fit_max), points_in_fit: ts.len(), fit })?;
    Ok(EXIT_OK)
}

fn tables_for(specs: &[TestFunctionSpec], m: &ModelParams, size: usize) -> Result<Option<Arc<OrbitSolutions>>> {
    if specs.iter().any(|s| s.family.needs_tables()) {
        Ok(Some(Arc::new(OrbitSolutions::build(m.k, size)?)))
    } else {
        Ok(None)
    }
}

fn sampler(cfg: &Config, field: &Field, m: &ModelParams) -> Result<ShellSampler> {
    Ok(match cfg.verify.expect("resolved").sampler {
        None => ShellSampler::for_field(field)?,
        Some(SamplerKind::Oscillator) => ShellSampler::oscillator(m, field.tables().map(|t| t.as_ref()))?,
        Some(SamplerKind::CentreOfMass) => ShellSampler::centre_of_mass(m),
    })
}

#[derive(Serialize)]
struct ShellRecord {
    r_lo: f64,
    r_hi: f64,
    samples: usize,
    violations: usize,
    worst_margin: f64,
    pass: bool,
}

#[derive(Serialize)]
struct StateRecord {
    q0: f64,
    q1: f64,
    p0: f64,
    p1: f64,
    energy: f64,
    margin: f64,
}

#[derive(Serialize)]
struct MarginRecord {
    energy: f64,
    margin: f64,
}

fn shell_records(r: &VerificationReport) -> Vec<ShellRecord> {
    r.shells
        .iter()
        .map(|s| ShellRecord { r_lo: s.r_lo, r_hi: s.r_hi, samples: s.samples, violations: s.violations, worst_margin: s.worst_margin, pass: s.pass })
        .collect()
}

fn state_records(r: &VerificationReport) -> Vec<StateRecord> {
    r.worst_states
        .iter()
        .map(|v| StateRecord { q0: v.state.q0, q1: v.state.q1, p0: v.state.p0, p1: v.state.p1, energy: v.energy, margin: v.margin })
        .collect()
}

fn print_verdict(name: &str, r: &VerificationReport) {
    println!(
        "{name}: {} | {} | {} violations in {} samples, worst margin {:.4e}, stabilized {} at R = {}",
        r.field,
        r.predicate,
        r.violations,
        r.samples,
        r.worst_margin,
        r.stabilized,
        r.stabilization_radius.map_or("-".to_string(), |x| format!("{x:e}")),
    );
    if !r.passed() {
        println!("worst states:");
        for v in &r.worst_states {
            let s = v.state;
            println!("  H = {:.4e} margin = {:.4e} at (q0, q1, p0, p1) = ({:.4e}, {:.4e}, {:.4e}, {:.4e})", v.energy, v.margin, s.q0, s.q1, s.p0, s.p1);
        }
    }
}

fn verify(cfg: &Config, out: &mut OutputDir) -> Result<i32> {
    let m = model(cfg)?;
    let v = cfg.verify.expect("resolved");
    let spec = cfg.field.expect("resolved").spec();
    let tables = tables_for(&[spec], &m, v.table_size)?;
    let field = build_test_function(&spec, &m, tables)?;
    let s = sampler(cfg, &field, &m)?;
    let pred = cfg.predicate.expect("resolved");
    let report = verify_sign(&field, field_parameters(&field), &pred, &s, &cfg.shells.expect("resolved"), cfg.seed())?;
    print_verdict("drift", &report);
    let margins: Vec<MarginRecord> = report.last_margins.iter().map(|&(energy, margin)| MarginRecord { energy, margin }).collect();
    out.json("report.json", &report)?;
    out.csv("shells.csv", &shell_records(&report))?;
    out.csv("worst.csv", &state_records(&report))?;
    out.csv("margins.csv", &margins)?;
    let ok = report.passed();
    println!("{}", if ok { "PASS" } else { "FAIL" });
    Ok(if ok { EXIT_OK } else { EXIT_FAILED })
}

#[derive(Serialize)]
struct HypothesisRecord {
    index: usize,
    name: String,
    pass: bool,
    evidence: String,
}

#[derive(Serialize)]
struct RayRecord {
    s: f64,
    ln_w1: f64,
}

fn wonham(cfg: &Config, out: &mut OutputDir) -> Result<i32> {
    let m = model(cfg)?;
    let v = cfg.verify.expect("resolved");
    let specs = [cfg.w1, cfg.w2, cfg.weight].map(|f| f.expect("resolved").spec());
    let tables = tables_for(&specs, &m, v.table_size)?;
    let [w1, w2, weight] = specs.map(|s| build_test_function(&s, &m, tables.clone()));
    let (w1, w2, weight) = (w1?, w2?, weight?);
    let s = sampler(cfg, &w1, &m)?;
    let spec = cfg.wonham.expect("resolved").spec(cfg.shells.expect("resolved"));
    let report = wonham_report(&w1, &w2, &weight, &s, &spec, cfg.seed())?;
    for (i, h) in report.hypotheses.iter().enumerate() {
        println!("({}) {}: {} | {}", i + 1, h.name, if h.pass { "pass" } else { "FAIL" }, h.evidence);
    }
    print_verdict("L W1 >= 0", &report.drift_w1);
    print_verdict("L W2 <= F", &report.drift_w2);
    let hyps: Vec<HypothesisRecord> = report
        .hypotheses
        .iter()
        .enumerate()
        .map(|(i, h)| HypothesisRecord { index: i + 1, name: h.name.clone(), pass: h.pass, evidence: h.evidence.clone() })
        .collect();
    let ray: Vec<RayRecord> = report.ray.iter().map(|&(s, ln_w1)| RayRecord { s, ln_w1 }).collect();
    out.json("report.json", &report)?;
    out.csv("hypotheses.csv", &hyps)?;
    out.csv("ray.csv", &ray)?;
    out.csv("ratio.csv", &report.ratio_shells)?;
    out.csv("shells_w1.csv", &shell_records(&report.drift_w1))?;
    out.csv("shells_w2.csv", &shell_records(&report.drift_w2))?;
    out.csv("worst_w1.csv", &state_records(&report.drift_w1))?;
    out.csv("worst_w2.csv", &state_records(&report.drift_w2))?;
    let ok = report.passed();
    println!("{}", if ok { "PASS" } else { "FAIL" });
    Ok(if ok { EXIT_OK } else { EXIT_FAILED })
}

#[derive(Serialize)]
struct DensityRecord {
    x: f64,
    pdf: f64,
    cdf: f64,
    ccdf: f64,
}

#[derive(Serialize)]
struct SampleReport {
    samples: usize,
    ks_distance: f64,
    hill: HillEstimate,
    /// `eta - 1` for the Pareto case.
    exact_tail_index: Option<f64>,
}

#[derive(Serialize)]
struct ReducedReport {
    sigma: f64,
    eta: f64,
    row: RateRow,
    invariant_measure: bool,
    simulation: Option<SampleReport>,
}

fn reduced(cfg: &Config, out: &mut OutputDir) -> Result<i32> {
    let r = cfg.reduced.expect("resolved");
    let rp = r.params()?;
    let row = classify_reduced(&rp);
    println!("{row}");
    let density = match stationary_density(&rp) {
        Ok(d) => Some(d),
        Err(Error::NoInvariantMeasure) => None,
        Err(e) => return Err(e.into()),
    };
    let mut simulation = None;
    if let Some(d) = density {
        let rows: Vec<DensityRecord> = (0..r.points)
            .map(|i| {
                let x = r.x_max.powf(i as f64 / (r.points - 1) as f64);
                DensityRecord { x, pdf: d.pdf(x), cdf: d.cdf(x), ccdf: d.ccdf(x) }
            })
            .collect();
        out.csv("density.csv", &rows)?;
        if r.simulate {
            let x = sample_reduced(&rp, r.dt, r.burn_in, r.every, r.per_path, r.n_paths, cfg.seed())?;
            let ks = ks_distance(&x, |v| d.cdf(v));
            let hill = hill_estimate(&x, r.top_fraction, cfg.seed())?;
            let exact = ((rp.sigma + 1.0).abs() <= 1e-12).then_some(rp.eta - 1.0);
            println!("{} samples: KS distance {ks:.4}, Hill index {:.3} +- {:.3}", x.len(), hill.index, hill.std_error);
            let mut sorted = x;
            sorted.sort_by(|a, b| a.total_cmp(b));
            out.csv("ccdf.csv", &ccdf_points(&sorted))?;
            simulation = Some(SampleReport { samples: sorted.len(), ks_distance: ks, hill, exact_tail_index: exact });
        }
    } else {
        println!("no invariant measure");
    }
    out.json(
        "report.json",
        &ReducedReport { sigma: rp.sigma, eta: rp.eta, row, invariant_measure: density.is_some(), simulation },
    )?;
    Ok(EXIT_OK)
}
