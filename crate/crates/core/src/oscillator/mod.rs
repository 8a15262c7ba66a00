//! The uncoupled oscillator `H_f = P^2/2 + |Q|^{2k}/(2k)`: closed orbits,
//! orbit averages and centred solutions of `L0 u = f` along them.

mod interp;
mod poisson;

pub use interp::PeriodicTable;
pub use poisson::{
    build_phi, build_psi, build_xi, build_xi_tilde, c_hat, CenteredSolution, OrbitJet, OrbitSolutions,
};

use serde::Serialize;
use statrs::function::beta::{beta, beta_reg};

use crate::error::{Error, Result};
use crate::model::{free_energy, free_force};

pub const DEFAULT_NODES: usize = 4096;

/// Largest excursion `(2kE)^{1/(2k)}`.
pub fn q_max(energy: f64, k: f64) -> f64 {
    (2.0 * k * energy).powf(1.0 / (2.0 * k))
}

fn check_energy(energy: f64) -> Result<()> {
    if !(energy.is_finite() && energy > 0.0) {
        return Err(Error::NonPositiveEnergy(energy));
    }
    Ok(())
}

fn check_k(k: f64) -> Result<()> {
    if !(k.is_finite() && k >= 1.0) {
        return Err(Error::Unsupported(format!("free oscillator orbits are built for k >= 1, got {k}")));
    }
    Ok(())
}

/// Period of the free oscillator at energy `E`, from the Beta function.
pub fn orbit_period(energy: f64, k: f64) -> Result<f64> {
    check_energy(energy)?;
    check_k(k)?;
    let a = 1.0 / (2.0 * k);
    Ok(4.0 * q_max(energy, k) / (2.0 * energy).sqrt() * a * beta(a, 0.5))
}

/// Position along the orbit through `(p, q)`, as a fraction of the period,
/// measured from the right turning point in the direction of the flow.
pub fn phase(p: f64, q: f64, k: f64) -> f64 {
    let e = free_energy(p, q, k);
    if e <= 0.0 {
        return 0.0;
    }
    let x = (0.5 * p * p / e).clamp(0.0, 1.0);
    let b = 1.0 / (2.0 * k);
    // near Q = 0 use the complementary form, which is better conditioned
    let r = if x <= 0.5 {
        beta_reg(0.5, b, x)
    } else {
        let w = (q.abs().powf(2.0 * k) / (2.0 * k * e)).clamp(0.0, 1.0);
        1.0 - beta_reg(b, 0.5, w)
    };
    match (q >= 0.0, p <= 0.0) {
        (true, true) => 0.25 * r,
        (false, true) => 0.5 - 0.25 * r,
        (false, false) => 0.5 + 0.25 * r,
        (true, false) => {
            let v = 1.0 - 0.25 * r;
            if v >= 1.0 {
                0.0
            } else {
                v
            }
        }
    }
}

/// Uniform-in-time samples of one closed orbit.
#[derive(Clone, Debug, Serialize)]
pub struct OrbitTable {
    pub k: f64,
    pub energy: f64,
    pub period: f64,
    pub q_max: f64,
    pub t: Vec<f64>,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    #[serde(skip)]
    q_interp: PeriodicTable,
    #[serde(skip)]
    p_interp: PeriodicTable,
}

fn rhs(y: [f64; 2], k: f64) -> [f64; 2] {
    [y[1], -free_force(y[0], k)]
}

fn rk4(y: [f64; 2], h: f64, k: f64) -> [f64; 2] {
    let k1 = rhs(y, k);
    let k2 = rhs([y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]], k);
    let k3 = rhs([y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]], k);
    let k4 = rhs([y[0] + h * k3[0], y[1] + h * k3[1]], k);
    [
        y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}

/// Integrates one period from the right turning point with classical RK4
/// and fine substeps, storing `n` equally spaced nodes.
pub fn build_orbit(energy: f64, k: f64, n: usize) -> Result<OrbitTable> {
    check_energy(energy)?;
    check_k(k)?;
    if n < 16 {
        return Err(Error::InvalidParams(format!("need at least 16 orbit nodes, got {n}")));
    }
    let period = orbit_period(energy, k)?;
    let qm = q_max(energy, k);
    let sub = (262_144 / n).max(16);
    let h = period / (n * sub) as f64;
    let mut y = [qm, 0.0];
    let mut q = Vec::with_capacity(n);
    let mut p = Vec::with_capacity(n);
    for _ in 0..n {
        q.push(y[0]);
        p.push(y[1]);
        for _ in 0..sub {
            y = rk4(y, h, k);
        }
    }
    let pscale = (2.0 * energy).sqrt();
    let mismatch = ((y[0] - qm) / qm).hypot(y[1] / pscale);
    if !(mismatch < 1e-8) {
        return Err(Error::OrbitDidNotClose(mismatch));
    }
    let t = (0..n).map(|i| i as f64 * period / n as f64).collect();
    Ok(OrbitTable {
        k,
        energy,
        period,
        q_max: qm,
        t,
        q_interp: PeriodicTable::new(q.clone()),
        p_interp: PeriodicTable::new(p.clone()),
        q,
        p,
    })
}

impl OrbitTable {
    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    /// Point at a phase in `[0, 1)` on this orbit.
    pub fn point(&self, phase: f64) -> (f64, f64) {
        (self.p_interp.eval(phase), self.q_interp.eval(phase))
    }

    /// Point at a phase on the orbit of energy `e`, by the scaling symmetry
    /// `(P, Q) -> (l^{1/2} P, l^{1/(2k)} Q)`.
    pub fn point_at_energy(&self, e: f64, phase: f64) -> (f64, f64) {
        let l = e / self.energy;
        let (p, q) = self.point(phase);
        (p * l.sqrt(), q * l.powf(1.0 / (2.0 * self.k)))
    }

    /// Time average of `f(P, Q)` over the stored nodes (spectrally accurate
    /// for smooth periodic integrands).
    pub fn average(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        let s: f64 = self.p.iter().zip(&self.q).map(|(&p, &q)| f(p, q)).sum();
        s / self.len() as f64
    }

    pub fn max_energy_drift(&self) -> f64 {
        self.p
            .iter()
            .zip(&self.q)
            .map(|(&p, &q)| (free_energy(p, q, self.k) - self.energy).abs())
            .fold(0.0, f64::max)
            / self.energy
    }
}

/// Orbit average of `f` at energy `E`.
pub fn orbit_average(f: impl Fn(f64, f64) -> f64, energy: f64, k: f64, n: usize) -> Result<f64> {
    Ok(build_orbit(energy, k, n)?.average(f))
}
