use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fields::TestField;
use super::verify::{verify_margin, ShellSampler, ShellSpec, VerificationReport};
use crate::error::{Error, Result};
use crate::model::State4;
use crate::rng::path_rng;

/// Settings for the four hypothesis checks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WonhamSpec {
    /// W1 is evaluated at `s * ray` for `s = 2^j`, `j = 0..=ray_steps`.
    pub ray: State4,
    pub ray_steps: usize,
    /// Required growth of W1 along the ray.
    pub ray_growth: f64,
    /// Thin shells `[R, ratio_width R]` for the `sup W1 / inf W2` check.
    pub ratio_r0: f64,
    pub ratio_width: f64,
    pub ratio_growth: f64,
    pub ratio_shells: usize,
    pub ratio_samples: usize,
    /// Shells for the drift checks on `L W1` and `L W2`.
    pub drift: ShellSpec,
}

impl Default for WonhamSpec {
    fn default() -> Self {
        WonhamSpec {
            ray: State4::new(0.0, 0.0, 0.0, 1.0),
            ray_steps: 40,
            ray_growth: 1e6,
            ratio_r0: 1e4,
            ratio_width: 1.01,
            ratio_growth: 10.0,
            ratio_shells: 5,
            ratio_samples: 2000,
            drift: ShellSpec::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub name: String,
    pub pass: bool,
    pub evidence: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioShell {
    pub r: f64,
    pub ln_sup_w1: f64,
    pub ln_inf_w2: f64,
    pub ln_ratio: f64,
    pub nonpositive_w2: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WonhamReport {
    pub w1: String,
    pub w2: String,
    pub weight: String,
    pub hypotheses: Vec<Hypothesis>,
    /// `(s, ln W1(s * ray))`.
    pub ray: Vec<(f64, f64)>,
    pub ratio_shells: Vec<RatioShell>,
    pub drift_w1: VerificationReport,
    pub drift_w2: VerificationReport,
}

impl WonhamSpec {
    pub fn validate(&self) -> Result<()> {
        if self.ray_steps < 2 || self.ratio_shells < 2 || !(self.ratio_width > 1.0 && self.ratio_growth > 1.0) {
            return Err(Error::InvalidParams("wonham spec needs at least two ray points and two ratio shells".into()));
        }
        if !(self.ratio_r0 > 0.0) || self.ratio_samples == 0 {
            return Err(Error::InvalidParams("ratio shells need ratio_r0 > 0 and ratio_samples >= 1".into()));
        }
        self.drift.validate()
    }
}

impl WonhamReport {
    pub fn passed(&self) -> bool {
        self.hypotheses.iter().all(|h| h.pass)
    }

    pub fn hypothesis(&self, i: usize) -> &Hypothesis {
        &self.hypotheses[i]
    }
}

fn ln_positive(v: f64, log_scale: f64) -> Option<f64> {
    (v > 0.0).then(|| v.ln() + log_scale)
}

fn scale_state(x: &State4, s: f64) -> State4 {
    State4::new(s * x.q0, s * x.q1, s * x.p0, s * x.p1)
}

/// Numerical check of the four hypotheses of the Wonham non-existence
/// criterion for the pair `(w1, w2)` and weight `f`:
/// (i) W1 unbounded along a probe ray, (ii) W2 > 0, (iii) `sup W1 / inf W2`
/// on thin energy shells decreasing in `R`, (iv) `L W1 >= 0` and
/// `L W2 <= F` on stabilized shells.
pub fn wonham_report(
    w1: &dyn TestField,
    w2: &dyn TestField,
    f: &dyn TestField,
    sampler: &ShellSampler,
    spec: &WonhamSpec,
    seed: u64,
) -> Result<WonhamReport> {
    spec.validate()?;
    let mut hyps = Vec::with_capacity(4);

    let ray: Vec<(f64, f64)> = (0..=spec.ray_steps)
        .map(|j| {
            let s = 2f64.powi(j as i32);
            let e = w1.eval(&scale_state(&spec.ray, s));
            (s, ln_positive(e.jet.value, e.log_scale).unwrap_or(f64::NEG_INFINITY))
        })
        .collect();
    let n = ray.len();
    let (first, last) = (ray[0].1, ray[n - 1].1);
    let base = ray.iter().map(|r| r.1).filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min);
    let growth = last - base;
    let growing = last.is_finite() && last > ray[n - 2].1 && growth > spec.ray_growth.ln();
    hyps.push(Hypothesis {
        name: "W1 unbounded".into(),
        pass: growing,
        evidence: format!("ln W1 from {first:.3} to {last:.3} along the ray, last step {:.3}", last - ray[n - 2].1),
    });

    let mut shells = Vec::with_capacity(spec.ratio_shells);
    let mut r = spec.ratio_r0;
    for i in 0..spec.ratio_shells {
        let lo = r;
        let hi = spec.ratio_width * r;
        let vals: Result<Vec<(Option<f64>, f64, bool)>> = (0..spec.ratio_samples)
            .into_par_iter()
            .map(|j| {
                let mut rng = path_rng(seed ^ 0x5752_4154, ((i as u64) << 32) | j as u64);
                let x = sampler.sample(lo, hi, &mut rng)?;
                let a = w1.eval(&x);
                let b = w2.eval(&x);
                let lb = ln_positive(b.jet.value, b.log_scale);
                Ok((ln_positive(a.jet.value, a.log_scale), lb.unwrap_or(f64::NEG_INFINITY), lb.is_none()))
            })
            .collect();
        let vals = vals?;
        let sup1 = vals.iter().filter_map(|v| v.0).fold(f64::NEG_INFINITY, f64::max);
        let inf2 = vals.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
        shells.push(RatioShell {
            r,
            ln_sup_w1: sup1,
            ln_inf_w2: inf2,
            ln_ratio: sup1 - inf2,
            nonpositive_w2: vals.iter().filter(|v| v.2).count(),
        });
        r *= spec.ratio_growth;
    }

    let nonpos: usize = shells.iter().map(|s| s.nonpositive_w2).sum();
    let ray_w2_bad = ray
        .iter()
        .filter(|(s, _)| w2.eval(&scale_state(&spec.ray, *s)).jet.value <= 0.0)
        .count();
    hyps.push(Hypothesis {
        name: "W2 positive".into(),
        pass: nonpos == 0 && ray_w2_bad == 0,
        evidence: format!(
            "{} nonpositive values among {} shell samples and {} ray points",
            nonpos + ray_w2_bad,
            spec.ratio_shells * spec.ratio_samples,
            ray.len()
        ),
    });

    let decreasing = shells.windows(2).all(|w| w[1].ln_ratio < w[0].ln_ratio) && shells.iter().all(|s| s.ln_ratio.is_finite());
    hyps.push(Hypothesis {
        name: "W1/W2 decreasing".into(),
        pass: decreasing,
        evidence: format!(
            "ln(sup W1 / inf W2) = [{}]",
            shells.iter().map(|s| format!("{:.4}", s.ln_ratio)).collect::<Vec<_>>().join(", ")
        ),
    });

    // Margins are in each field's own scale; only their sign matters.
    let m1 = |x: &State4| Ok(w1.eval(x).generator);
    let drift_w1 = verify_margin(w1.describe(), Vec::new(), "L W1 >= 0".into(), &m1, false, sampler, &spec.drift, seed)?;
    let m2 = |x: &State4| {
        let b = w2.eval(x);
        let w = f.eval(x);
        let lf = ln_positive(w.jet.value, w.log_scale).ok_or_else(|| Error::InvalidParams("weight F must be positive".into()))?;
        Ok(1.0 - b.generator * (b.log_scale - lf).exp())
    };
    let drift_w2 =
        verify_margin(w2.describe(), Vec::new(), "L W2 <= F".into(), &m2, false, sampler, &spec.drift, seed ^ 1)?;
    hyps.push(Hypothesis {
        name: "L W1 >= 0 and L W2 <= F".into(),
        pass: drift_w1.passed() && drift_w2.passed(),
        evidence: format!(
            "L W1: {} violations of {} (worst {:.3e}); L W2: {} violations of {} (worst {:.3e})",
            drift_w1.violations,
            drift_w1.samples,
            drift_w1.worst_margin,
            drift_w2.violations,
            drift_w2.samples,
            drift_w2.worst_margin
        ),
    });

    Ok(WonhamReport {
        w1: w1.describe(),
        w2: w2.describe(),
        weight: f.describe(),
        hypotheses: hyps,
        ray,
        ratio_shells: shells,
        drift_w1,
        drift_w2,
    })
}
