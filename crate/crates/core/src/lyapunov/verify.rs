use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fields::{Field, TestField};
use crate::error::{Error, Result};
use crate::model::{energy, Eval, ModelParams, State4};
use crate::oscillator::{build_orbit, CenteredSolution, OrbitSolutions, OrbitTable};
use crate::rng::path_rng;
use crate::sim::stats::quantile_sorted;

/// A violation fraction below this counts as a passing shell.
pub const PASS_FRACTION: f64 = 1e-3;
const MIN_SAMPLES: usize = 1000;
const MAX_ATTEMPTS: usize = 100_000;
const QUANTILES: [f64; 6] = [0.0, 0.001, 0.01, 0.1, 0.5, 0.9];
const WORST_KEPT: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    /// Energies of the two free oscillators `(p_tilde0, q0)` and `(p1, q1)`
    /// with uniform orbit phases.
    Oscillator,
    /// Centre of mass and the fast variables `y = (q, p0, p1)`.
    CentreOfMass,
}

/// Draws states with `H` in a prescribed range.
#[derive(Clone, Debug)]
pub struct ShellSampler {
    pub kind: SamplerKind,
    model: ModelParams,
    orbit: Option<Arc<OrbitTable>>,
    phi: Option<CenteredSolution>,
    /// Smallest energy given to the minor component.
    pub min_energy: f64,
}

impl ShellSampler {
    pub fn oscillator(model: &ModelParams, tables: Option<&OrbitSolutions>) -> Result<Self> {
        if model.k < 1.0 {
            return Err(Error::InvalidParams(format!("oscillator shells need k >= 1, got {}", model.k)));
        }
        let orbit = match tables {
            Some(t) => t.phi.orbit_arc(),
            None => Arc::new(build_orbit(1.0, model.k, 1024)?),
        };
        Ok(ShellSampler {
            kind: SamplerKind::Oscillator,
            model: *model,
            orbit: Some(orbit),
            phi: tables.map(|t| t.phi.clone()),
            min_energy: 1e-3,
        })
    }

    pub fn centre_of_mass(model: &ModelParams) -> Self {
        ShellSampler { kind: SamplerKind::CentreOfMass, model: *model, orbit: None, phi: None, min_energy: 1e-3 }
    }

    /// Oscillator shells for `k >= 1`, centre-of-mass shells below.
    pub fn for_field(field: &Field) -> Result<Self> {
        if field.model.k >= 1.0 {
            Self::oscillator(&field.model, field.tables().map(|t| t.as_ref()))
        } else {
            Ok(Self::centre_of_mass(&field.model))
        }
    }

    fn split<R: Rng + ?Sized>(&self, lo: f64, hi: f64, rng: &mut R) -> (f64, f64) {
        let e = (rng.random_range((lo / 1.25).ln()..(1.25 * hi).ln())).exp();
        let m = rng.random_range(self.min_energy.min(e).ln()..=e.ln()).exp();
        let rest = (e - m).max(self.min_energy);
        if rng.random_bool(0.5) {
            (m, rest)
        } else {
            (rest, m)
        }
    }

    fn propose<R: Rng + ?Sized>(&self, lo: f64, hi: f64, rng: &mut R) -> State4 {
        let (ea, eb) = self.split(lo, hi, rng);
        match self.kind {
            SamplerKind::Oscillator => {
                let orbit = self.orbit.as_ref().expect("oscillator sampler has an orbit");
                let (pt, q0) = orbit.point_at_energy(ea, rng.random());
                let (p1, q1) = orbit.point_at_energy(eb, rng.random());
                let shift = self.phi.as_ref().map_or(0.0, |phi| self.model.alpha * phi.eval(p1, q1).value);
                State4::new(q0, q1, pt + shift, p1)
            }
            SamplerKind::CentreOfMass => {
                let pot = self.model.potential();
                // 2 V1(Q) = ea
                let mut a = 0.0;
                let mut b = 1.0;
                while 2.0 * pot.v(b) < ea {
                    b *= 2.0;
                }
                for _ in 0..200 {
                    let m = 0.5 * (a + b);
                    if 2.0 * pot.v(m) < ea {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                let big_q = if rng.random_bool(0.5) { a } else { -a };
                let u: [f64; 3] = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
                let quad = 2.0 * self.model.alpha * u[0] * u[0] + 0.5 * (u[1] * u[1] + u[2] * u[2]);
                let s = (eb / quad).sqrt();
                State4::new(big_q + s * u[0], big_q - s * u[0], s * u[1], s * u[2])
            }
        }
    }

    /// A state with `lo <= H <= hi`, by rejection.
    pub fn sample<R: Rng + ?Sized>(&self, lo: f64, hi: f64, rng: &mut R) -> Result<State4> {
        for _ in 0..MAX_ATTEMPTS {
            let x = self.propose(lo, hi, rng);
            let h = energy(&x, &self.model);
            if h >= lo && h <= hi {
                return Ok(x);
            }
        }
        Err(Error::InsufficientData(format!("no state with H in [{lo:e}, {hi:e}] after {MAX_ATTEMPTS} proposals")))
    }
}

/// Pass/fail rule on `(field, L field)` at a state; margins are positive
/// when the rule holds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Predicate {
    /// `LF <= bound`
    AtMost { bound: f64 },
    /// `LF < bound`
    Below { bound: f64 },
    /// `LF >= bound`
    AtLeast { bound: f64 },
    /// `LF / F <= bound`, scale free.
    RatioAtMost { bound: f64 },
    /// `LF <= -c F V^{2 kappa - 1}` for `F = exp(delta V^kappa)`, checked as
    /// `LF / F <= -c V^{2 kappa - 1}`.
    FracExpDrift { c: f64, delta: f64, kappa: f64 },
    /// `LF <= -c (ln F)^power F`.
    LogDrift { c: f64, power: f64 },
}

impl Predicate {
    pub fn describe(&self) -> String {
        match self {
            Predicate::AtMost { bound } => format!("LF <= {bound}"),
            Predicate::Below { bound } => format!("LF < {bound}"),
            Predicate::AtLeast { bound } => format!("LF >= {bound}"),
            Predicate::RatioAtMost { bound } => format!("LF/F <= {bound}"),
            Predicate::FracExpDrift { c, delta, kappa } => {
                format!("LF/F <= -{c} V^(2*{kappa}-1) with F = exp({delta} V^{kappa})")
            }
            Predicate::LogDrift { c, power } => format!("LF/F <= -{c} (ln F)^{power}"),
        }
    }

    pub fn margin(&self, e: &Eval) -> f64 {
        match *self {
            Predicate::AtMost { bound } | Predicate::Below { bound } => bound - e.generator_value(),
            Predicate::AtLeast { bound } => e.generator_value() - bound,
            Predicate::RatioAtMost { bound } => bound - e.ratio(),
            Predicate::FracExpDrift { c, delta, kappa } => {
                let v = (e.ln_value() / delta).powf(1.0 / kappa);
                -c * v.powf(2.0 * kappa - 1.0) - e.ratio()
            }
            Predicate::LogDrift { c, power } => -c * e.ln_value().powf(power) - e.ratio(),
        }
    }

    pub fn strict(&self) -> bool {
        matches!(self, Predicate::Below { .. })
    }
}

/// Radii `r0 * growth^i`, shells `[r, width * r]`, stopping once the verdict
/// has been the same on `stable_runs` consecutive shells.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShellSpec {
    pub r0: f64,
    pub width: f64,
    pub growth: f64,
    pub n: usize,
    pub max_shells: usize,
    pub stable_runs: usize,
}

impl Default for ShellSpec {
    fn default() -> Self {
        ShellSpec { r0: 1e4, width: 2.0, growth: 2.0, n: 10_000, max_shells: 40, stable_runs: 3 }
    }
}

impl ShellSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.r0 > 0.0 && self.width > 1.0 && self.growth > 1.0) {
            return Err(Error::InvalidParams("shells need r0 > 0, width > 1 and growth > 1".into()));
        }
        if self.n < MIN_SAMPLES {
            return Err(Error::InvalidParams(format!("at least {MIN_SAMPLES} samples per shell, got {}", self.n)));
        }
        if self.stable_runs == 0 || self.max_shells < self.stable_runs {
            return Err(Error::InvalidParams("max_shells must be at least stable_runs >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShellRow {
    pub r_lo: f64,
    pub r_hi: f64,
    pub samples: usize,
    pub violations: usize,
    pub worst_margin: f64,
    /// `(level, margin quantile)`.
    pub quantiles: Vec<(f64, f64)>,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub state: State4,
    pub energy: f64,
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub field: String,
    pub predicate: String,
    pub shell: String,
    pub parameters: Vec<(String, f64)>,
    /// Totals over the final `stable_runs` shells.
    pub samples: usize,
    pub violations: usize,
    pub worst_margin: f64,
    pub margin_quantiles: Vec<(f64, f64)>,
    pub shells: Vec<ShellRow>,
    pub stabilized: bool,
    pub stabilization_radius: Option<f64>,
    /// Verdict of the stabilized shells under the violation-fraction rule.
    pub verdict: bool,
    pub worst_states: Vec<Violation>,
    /// `(H, margin)` on the last shell.
    #[serde(skip)]
    pub last_margins: Vec<(f64, f64)>,
}

impl VerificationReport {
    /// Stabilized, passing and without a single violation.
    pub fn passed(&self) -> bool {
        self.stabilized && self.verdict && self.violations == 0
    }
}

type MarginFn<'a> = dyn Fn(&State4) -> Result<f64> + Sync + 'a;

fn quantiles(sorted: &[f64]) -> Vec<(f64, f64)> {
    QUANTILES.iter().map(|&q| (q, quantile_sorted(sorted, q))).collect()
}

fn run_shell(
    margin: &MarginFn,
    sampler: &ShellSampler,
    lo: f64,
    hi: f64,
    n: usize,
    strict: bool,
    seed: u64,
    stream: u64,
) -> Result<(ShellRow, Vec<(State4, f64, f64)>)> {
    let points: Result<Vec<(State4, f64, f64)>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut rng = path_rng(seed, (stream << 32) | j as u64);
            let x = sampler.sample(lo, hi, &mut rng)?;
            let m = margin(&x)?;
            if !m.is_finite() {
                return Err(Error::NonFinite(format!("{x:?}")));
            }
            Ok((x, energy(&x, &sampler.model), m))
        })
        .collect();
    let points = points?;
    let violates = |m: f64| if strict { m <= 0.0 } else { m < 0.0 };
    let violations = points.iter().filter(|p| violates(p.2)).count();
    let mut sorted: Vec<f64> = points.iter().map(|p| p.2).collect();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let row = ShellRow {
        r_lo: lo,
        r_hi: hi,
        samples: n,
        violations,
        worst_margin: sorted[0],
        quantiles: quantiles(&sorted),
        pass: (violations as f64) < PASS_FRACTION * n as f64,
    };
    Ok((row, points))
}

/// Shell loop shared by `verify_sign` and the Wonham checks.
pub(crate) fn verify_margin(
    field_name: String,
    parameters: Vec<(String, f64)>,
    predicate: String,
    margin: &MarginFn,
    strict: bool,
    sampler: &ShellSampler,
    spec: &ShellSpec,
    seed: u64,
) -> Result<VerificationReport> {
    spec.validate()?;
    let mut rows: Vec<ShellRow> = Vec::new();
    let mut kept: Vec<Vec<(State4, f64, f64)>> = Vec::new();
    let mut r = spec.r0;
    let mut stabilized = false;
    for i in 0..spec.max_shells {
        let (row, points) = run_shell(margin, sampler, r, spec.width * r, spec.n, strict, seed, i as u64)?;
        rows.push(row);
        kept.push(points);
        if kept.len() > spec.stable_runs {
            kept.remove(0);
        }
        let tail = &rows[rows.len().saturating_sub(spec.stable_runs)..];
        if tail.len() == spec.stable_runs && tail.iter().all(|t| t.pass == tail[0].pass) {
            stabilized = true;
            break;
        }
        r *= spec.growth;
    }
    let tail = &rows[rows.len().saturating_sub(spec.stable_runs)..];
    let all: Vec<&(State4, f64, f64)> = kept.iter().flatten().collect();
    let mut sorted: Vec<f64> = all.iter().map(|p| p.2).collect();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mut worst: Vec<&(State4, f64, f64)> = all.clone();
    worst.sort_by(|a, b| a.2.total_cmp(&b.2));
    let violates = |m: f64| if strict { m <= 0.0 } else { m < 0.0 };
    let last_margins = kept.last().map(|v| v.iter().map(|p| (p.1, p.2)).collect()).unwrap_or_default();
    Ok(VerificationReport {
        field: field_name,
        predicate,
        shell: format!(
            "{:?} shells H in [r, {}r], r = {:e} * {}^i, {} samples each",
            sampler.kind, spec.width, spec.r0, spec.growth, spec.n
        ),
        parameters,
        samples: tail.iter().map(|t| t.samples).sum(),
        violations: tail.iter().map(|t| t.violations).sum(),
        worst_margin: sorted[0],
        margin_quantiles: quantiles(&sorted),
        stabilized,
        stabilization_radius: if stabilized { Some(tail[0].r_lo) } else { None },
        verdict: stabilized && tail[0].pass,
        worst_states: worst
            .iter()
            .take_while(|p| violates(p.2))
            .take(WORST_KEPT)
            .map(|p| Violation { state: p.0, energy: p.1, margin: p.2 })
            .collect(),
        shells: rows,
        last_margins,
    })
}

/// Parameters reported alongside a field.
pub fn field_parameters(field: &Field) -> Vec<(String, f64)> {
    let m = &field.model;
    let mut v: Vec<(String, f64)> = vec![
        ("alpha".into(), m.alpha),
        ("gamma".into(), m.gamma),
        ("t_cold".into(), m.t_cold),
        ("t_hot".into(), m.t_hot),
        ("k".into(), m.k),
    ];
    v.extend(field.values.named().into_iter().map(|(n, x)| (n.to_string(), x)));
    v
}

/// Checks `predicate` on shells of growing radius until the verdict
/// stabilizes.
pub fn verify_sign(
    field: &dyn TestField,
    parameters: Vec<(String, f64)>,
    predicate: &Predicate,
    sampler: &ShellSampler,
    spec: &ShellSpec,
    seed: u64,
) -> Result<VerificationReport> {
    let margin = |x: &State4| Ok(predicate.margin(&field.eval(x)));
    verify_margin(field.describe(), parameters, predicate.describe(), &margin, predicate.strict(), sampler, spec, seed)
}
