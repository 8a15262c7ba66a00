use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::interp::PeriodicTable;
use super::{build_orbit, phase, OrbitTable};
use crate::error::{Error, Result};
use crate::model::{cutoff, free_energy, free_force, Eval, Jet2, ModelParams, State4};

/// Value, `d/dP`, `d/dQ`, `d^2/dP^2` and `L0 u` of a plane function.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct OrbitJet {
    pub value: f64,
    pub d_p: f64,
    pub d_q: f64,
    pub d2_p: f64,
    pub l0: f64,
}

/// Solution of `L0 u = f` with zero mean on every orbit, for a right-hand
/// side that is homogeneous under the scaling of the free oscillator.
///
/// `u(P, Q) = chi(E) (E/E_ref)^a u0(phase)` where `chi` switches the
/// function off below `e_cut`, so the effective right-hand side differs from
/// `f` only on a small neighbourhood of the origin.
#[derive(Clone, Debug)]
pub struct CenteredSolution {
    pub k: f64,
    pub e_ref: f64,
    pub period_ref: f64,
    /// `a`: `u` scales like `E^a`.
    pub exponent: f64,
    /// `b`: the right-hand side scales like `E^b`.
    pub rhs_exponent: f64,
    pub e_cut: f64,
    u0: PeriodicTable,
    du0: PeriodicTable,
    d2u0: PeriodicTable,
    orbit: Arc<OrbitTable>,
}

fn fft(values: &[f64], inverse: bool) -> Vec<Complex<f64>> {
    let n = values.len();
    let mut buf: Vec<Complex<f64>> = values.iter().map(|&v| Complex::new(v, 0.0)).collect();
    let mut planner = FftPlanner::new();
    let plan = if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) };
    plan.process(&mut buf);
    buf
}

fn inverse_real(spec: Vec<Complex<f64>>) -> Vec<f64> {
    let n = spec.len();
    let mut buf = spec;
    let mut planner = FftPlanner::new();
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|c| c.re / n as f64).collect()
}

fn wavenumber(i: usize, n: usize) -> Option<f64> {
    if i == 0 || (n % 2 == 0 && i == n / 2) {
        return None;
    }
    let m = if i < n / 2 + n % 2 { i as f64 } else { i as f64 - n as f64 };
    Some(std::f64::consts::TAU * m)
}

/// Solves `L0 u = f` along the reference orbit given `f` at its nodes.
/// Along the orbit `du/dt = f`, so `u` is the mean-zero antiderivative,
/// computed in Fourier space.
pub fn solve_poisson(orbit: Arc<OrbitTable>, rhs: &[f64], rhs_exponent: f64) -> Result<CenteredSolution> {
    let n = orbit.len();
    if rhs.len() != n {
        return Err(Error::InvalidParams(format!("rhs has {} nodes, orbit has {n}", rhs.len())));
    }
    let scale = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let mean = rhs.iter().sum::<f64>() / n as f64;
    if mean.abs() > 1e-9 * scale {
        return Err(Error::NotCentred(mean));
    }
    let t = orbit.period;
    // derivative in phase: du0/dphase = T f
    let du: Vec<f64> = rhs.iter().map(|v| t * (v - mean)).collect();
    let spec = fft(&du, false);
    let mut anti = vec![Complex::new(0.0, 0.0); n];
    let mut deriv = vec![Complex::new(0.0, 0.0); n];
    for i in 0..n {
        if let Some(w) = wavenumber(i, n) {
            anti[i] = spec[i] / Complex::new(0.0, w);
            deriv[i] = spec[i] * Complex::new(0.0, w);
        }
    }
    let u0 = inverse_real(anti);
    let d2u0 = inverse_real(deriv);
    let k = orbit.k;
    let exponent = rhs_exponent + 1.0 / (2.0 * k) - 0.5;
    Ok(CenteredSolution {
        k,
        e_ref: orbit.energy,
        period_ref: t,
        exponent,
        rhs_exponent,
        e_cut: 0.25 * orbit.energy,
        u0: PeriodicTable::new(u0),
        du0: PeriodicTable::new(du),
        d2u0: PeriodicTable::new(d2u0),
        orbit,
    })
}

impl CenteredSolution {
    pub fn orbit(&self) -> &OrbitTable {
        &self.orbit
    }

    pub fn orbit_arc(&self) -> Arc<OrbitTable> {
        self.orbit.clone()
    }

    /// Values at the reference orbit nodes.
    pub fn nodes(&self) -> &[f64] {
        self.u0.values()
    }

    /// Orbit mean of `u^2` on the reference orbit.
    pub fn mean_square(&self) -> f64 {
        let v = self.u0.values();
        v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64
    }

    pub fn with_cut(mut self, e_cut: f64) -> Self {
        self.e_cut = e_cut;
        self
    }

    /// Unregularised solution; singular at the origin when `a < 0`.
    pub fn eval_raw(&self, p: f64, q: f64) -> OrbitJet {
        let k = self.k;
        let e = free_energy(p, q, k);
        if e <= 0.0 {
            return OrbitJet::default();
        }
        let ph = phase(p, q, k);
        let a = self.exponent;
        let l = e / self.e_ref;
        let s = l.powf(a);
        let (u, du, d2u) = (self.u0.eval(ph), self.du0.eval(ph), self.d2u0.eval(ph));
        let m = (1.0 - k) / (2.0 * k);
        let te = self.period_ref * l.powf(m);
        // gradient of the phase: annihilated by the scaling field, rate 1/T(E) along the flow
        let ph_p = -q / (2.0 * k * e * te);
        let ph_q = p / (2.0 * e * te);
        let ph_pp = -(1.0 + m) * ph_p * p / e;
        let vq = free_force(q, k);
        let big_a = a * p / e * u + du * ph_p;
        let da_p = a / e * u - a * p * p / (e * e) * u + a * p / e * du * ph_p + d2u * ph_p * ph_p + du * ph_pp;
        OrbitJet {
            value: s * u,
            d_p: s * big_a,
            d_q: s * (a * vq / e * u + du * ph_q),
            d2_p: s * (a * p / e * big_a + da_p),
            l0: s * du / te,
        }
    }

    pub fn eval(&self, p: f64, q: f64) -> OrbitJet {
        let e = free_energy(p, q, self.k);
        if e <= self.e_cut {
            return OrbitJet::default();
        }
        let raw = self.eval_raw(p, q);
        if e >= 2.0 * self.e_cut {
            return raw;
        }
        let [ps, dps, d2ps] = cutoff(e / self.e_cut);
        let c = 1.0 - ps;
        let c1 = -dps / self.e_cut;
        let c2 = -d2ps / (self.e_cut * self.e_cut);
        let vq = free_force(q, self.k);
        OrbitJet {
            value: c * raw.value,
            d_p: c1 * p * raw.value + c * raw.d_p,
            d_q: c1 * vq * raw.value + c * raw.d_q,
            d2_p: c2 * p * p * raw.value + c1 * raw.value + 2.0 * c1 * p * raw.d_p + c * raw.d2_p,
            l0: c * raw.l0,
        }
    }

    /// `u(p1, q1)` as a field on the full state, with its generator
    /// `L0 u + (F1 + V_f'(q1)) du/dP + gamma T_inf d^2u/dP^2`.
    pub fn eval_second(&self, x: &State4, params: &ModelParams) -> Eval {
        let j = self.eval(x.p1, x.q1);
        let pot = params.potential();
        let extra = -pot.dv(x.q1) + params.alpha * (x.q0 - x.q1) + free_force(x.q1, self.k);
        let jet = Jet2 { value: j.value, d_q1: j.d_q, d_p1: j.d_p, d2_p1: j.d2_p, ..Default::default() };
        let gen = j.l0 + extra * j.d_p + params.diffusion()[1] * j.d2_p;
        Eval::new(jet, gen, params.diffusion())
    }

    /// Rows `(t, Q, P, u0, du/dP)` along the reference orbit.
    pub fn profile_rows(&self) -> Vec<[f64; 5]> {
        let o = &self.orbit;
        (0..o.len())
            .map(|i| {
                let j = self.eval_raw(o.p[i], o.q[i]);
                [o.t[i], o.q[i], o.p[i], self.u0.values()[i], j.d_p]
            })
            .collect()
    }
}

/// `Phi`: `L0 Phi = Q`, scaling like `E^{1/k - 1/2}`.
pub fn build_phi(orbit: Arc<OrbitTable>) -> Result<CenteredSolution> {
    let rhs = orbit.q.clone();
    let b = 1.0 / (2.0 * orbit.k);
    solve_poisson(orbit, &rhs, b)
}

/// `Psi`: `L0 Psi = Phi`.
pub fn build_psi(phi: &CenteredSolution) -> Result<CenteredSolution> {
    solve_poisson(phi.orbit.clone(), phi.nodes(), phi.exponent)
}

/// `Xi`: `L0 Xi = Phi^2 - c E^{2/k-1}` with `c` the orbit mean of `Phi^2`
/// at the reference energy. Returns the solution and `c`.
pub fn build_xi(phi: &CenteredSolution) -> Result<(CenteredSolution, f64)> {
    let c = phi.mean_square();
    let rhs: Vec<f64> = phi.nodes().iter().map(|v| v * v - c).collect();
    Ok((solve_poisson(phi.orbit.clone(), &rhs, 2.0 * phi.exponent)?, c))
}

/// Solution of `L0 u = P^2 - K H_f` with `K = 2k/(1+k)`.
pub fn build_xi_tilde(orbit: Arc<OrbitTable>) -> Result<CenteredSolution> {
    let kk = 2.0 * orbit.k / (1.0 + orbit.k);
    let e = orbit.energy;
    let rhs: Vec<f64> = orbit.p.iter().map(|p| p * p - kk * e).collect();
    solve_poisson(orbit, &rhs, 1.0)
}

/// Orbit mean of `Phi^2` at `k = 2` (scale invariant there).
pub fn c_hat(n: usize) -> Result<f64> {
    let orbit = Arc::new(build_orbit(1.0, 2.0, n)?);
    Ok(build_phi(orbit)?.mean_square())
}

/// Every centred solution needed by the test functions, for one `k`.
#[derive(Clone, Debug)]
pub struct OrbitSolutions {
    pub k: f64,
    pub phi: CenteredSolution,
    pub psi: CenteredSolution,
    pub xi: CenteredSolution,
    pub xi_tilde: CenteredSolution,
    /// Orbit mean of `Phi^2` at unit energy.
    pub c_bar: f64,
}

impl OrbitSolutions {
    pub fn build(k: f64, n: usize) -> Result<Self> {
        let orbit = Arc::new(build_orbit(1.0, k, n)?);
        let phi = build_phi(orbit.clone())?;
        let psi = build_psi(&phi)?;
        let (xi, c_bar) = build_xi(&phi)?;
        let xi_tilde = build_xi_tilde(orbit)?;
        Ok(OrbitSolutions { k, phi, psi, xi, xi_tilde, c_bar })
    }

    pub fn with_cut(mut self, e_cut: f64) -> Self {
        self.phi.e_cut = e_cut;
        self.psi.e_cut = e_cut;
        self.xi.e_cut = e_cut;
        self.xi_tilde.e_cut = e_cut;
        self
    }
}
