use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{forces, ModelParams, State4};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    EulerMaruyama,
    /// Exact Ornstein-Uhlenbeck half steps around a velocity Verlet core.
    Strang,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub scheme: Scheme,
    /// Force magnitude above which the step is subdivided.
    pub substep_cap: f64,
    /// At most `2^max_halvings` substeps per step.
    pub max_halvings: u32,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig { dt: 0.01, scheme: Scheme::Strang, substep_cap: 1e3, max_halvings: 10 }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidParams(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.substep_cap > 0.0) {
            return Err(Error::InvalidParams(format!("substep_cap must be positive, got {}", self.substep_cap)));
        }
        Ok(())
    }

    /// Number of halvings used at state `x`.
    pub fn halvings(&self, x: &State4, params: &ModelParams) -> u32 {
        let [f0, f1] = forces(x, params);
        let f = f0.abs().max(f1.abs());
        if !(f > self.substep_cap) {
            return 0;
        }
        let j = (f / self.substep_cap).log2().ceil();
        if j.is_finite() {
            (j as u32).min(self.max_halvings)
        } else {
            self.max_halvings
        }
    }
}

fn em_step<R: Rng + ?Sized>(x: &mut State4, params: &ModelParams, h: f64, rng: &mut R) {
    let [f0, f1] = forces(x, params);
    let [g0, g1] = params.diffusion();
    let xi0: f64 = rng.sample(StandardNormal);
    let xi1: f64 = rng.sample(StandardNormal);
    let (p0, p1) = (x.p0, x.p1);
    x.q0 += h * p0;
    x.q1 += h * p1;
    x.p0 += h * (f0 - params.gamma * p0) + (2.0 * g0 * h).sqrt() * xi0;
    x.p1 += h * f1 + (2.0 * g1 * h).sqrt() * xi1;
}

fn noise_half<R: Rng + ?Sized>(x: &mut State4, params: &ModelParams, h: f64, rng: &mut R) {
    let xi0: f64 = rng.sample(StandardNormal);
    let xi1: f64 = rng.sample(StandardNormal);
    let c = (-params.gamma * h).exp();
    x.p0 = c * x.p0 + (params.t_cold * (1.0 - c * c)).sqrt() * xi0;
    x.p1 += (2.0 * params.gamma * params.t_hot * h).sqrt() * xi1;
}

fn strang_step<R: Rng + ?Sized>(x: &mut State4, params: &ModelParams, h: f64, rng: &mut R) {
    noise_half(x, params, 0.5 * h, rng);
    let [f0, f1] = forces(x, params);
    x.p0 += 0.5 * h * f0;
    x.p1 += 0.5 * h * f1;
    x.q0 += h * x.p0;
    x.q1 += h * x.p1;
    let [f0, f1] = forces(x, params);
    x.p0 += 0.5 * h * f0;
    x.p1 += 0.5 * h * f1;
    noise_half(x, params, 0.5 * h, rng);
}

/// Advances by one `dt`, subdividing where the force is large.
pub fn step<R: Rng + ?Sized>(x: &State4, params: &ModelParams, cfg: &IntegratorConfig, rng: &mut R) -> Result<State4> {
    let j = cfg.halvings(x, params);
    let n = 1usize << j;
    let h = cfg.dt / n as f64;
    let mut y = *x;
    for _ in 0..n {
        match cfg.scheme {
            Scheme::EulerMaruyama => em_step(&mut y, params, h, rng),
            Scheme::Strang => strang_step(&mut y, params, h, rng),
        }
    }
    if !y.is_finite() {
        return Err(Error::Diverged(f64::NAN));
    }
    Ok(y)
}
