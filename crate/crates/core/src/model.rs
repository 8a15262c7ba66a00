//! The four-dimensional chain: two pinned oscillators, one coupling spring,
//! friction and noise on the first momentum, noise only on the second.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    /// `|q|^{2k}/(2k)`, only allowed for `k >= 1`.
    Pure,
    /// `((1+q^2)^k - 1)/(2k)`, with the logarithmic limit at `k = 0`.
    Regularized,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub alpha: f64,
    pub gamma: f64,
    /// Temperature of the bath attached to the first oscillator.
    pub t_cold: f64,
    /// Temperature of the noise acting on the second oscillator.
    pub t_hot: f64,
    pub k: f64,
    pub smoothing: Smoothing,
}

impl ModelParams {
    pub fn new(alpha: f64, gamma: f64, t_cold: f64, t_hot: f64, k: f64, smoothing: Smoothing) -> Result<Self> {
        let p = ModelParams { alpha, gamma, t_cold, t_hot, k, smoothing };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("alpha", self.alpha),
            ("gamma", self.gamma),
            ("t_cold", self.t_cold),
            ("t_hot", self.t_hot),
        ];
        for (name, v) in named {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !self.k.is_finite() {
            return Err(Error::InvalidParams(format!("k must be finite, got {}", self.k)));
        }
        if self.smoothing == Smoothing::Pure && self.k < 1.0 {
            return Err(Error::UnsupportedPotential(self.k));
        }
        Ok(())
    }

    pub fn potential(&self) -> Potential {
        Potential { k: self.k, smoothing: self.smoothing }
    }

    /// `[gamma*T, gamma*T_inf]`, the coefficients of the two second-order terms.
    pub fn diffusion(&self) -> [f64; 2] {
        [self.gamma * self.t_cold, self.gamma * self.t_hot]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Potential {
    pub k: f64,
    pub smoothing: Smoothing,
}

impl Potential {
    pub fn new(k: f64, smoothing: Smoothing) -> Result<Self> {
        if !k.is_finite() {
            return Err(Error::InvalidParams(format!("k must be finite, got {k}")));
        }
        if smoothing == Smoothing::Pure && k < 1.0 {
            return Err(Error::UnsupportedPotential(k));
        }
        Ok(Potential { k, smoothing })
    }

    pub fn v(&self, q: f64) -> f64 {
        let k = self.k;
        match self.smoothing {
            Smoothing::Pure => q.abs().powf(2.0 * k) / (2.0 * k),
            Smoothing::Regularized => {
                let l = (q * q).ln_1p();
                if k.abs() < 1e-12 {
                    0.5 * l
                } else {
                    (k * l).exp_m1() / (2.0 * k)
                }
            }
        }
    }

    pub fn dv(&self, q: f64) -> f64 {
        let k = self.k;
        match self.smoothing {
            Smoothing::Pure => q * q.abs().powf(2.0 * k - 2.0),
            Smoothing::Regularized => q * (1.0 + q * q).powf(k - 1.0),
        }
    }

    pub fn d2v(&self, q: f64) -> f64 {
        let k = self.k;
        match self.smoothing {
            Smoothing::Pure => (2.0 * k - 1.0) * q.abs().powf(2.0 * k - 2.0),
            Smoothing::Regularized => {
                let s = 1.0 + q * q;
                s.powf(k - 2.0) * (1.0 + (2.0 * k - 1.0) * q * q)
            }
        }
    }
}

/// Free oscillator energy `P^2/2 + |Q|^{2k}/(2k)`.
pub fn free_energy(p: f64, q: f64, k: f64) -> f64 {
    0.5 * p * p + q.abs().powf(2.0 * k) / (2.0 * k)
}

/// Derivative of the free potential, `Q|Q|^{2k-2}`.
pub fn free_force(q: f64, k: f64) -> f64 {
    q * q.abs().powf(2.0 * k - 2.0)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct State4 {
    pub q0: f64,
    pub q1: f64,
    pub p0: f64,
    pub p1: f64,
}

impl State4 {
    pub fn new(q0: f64, q1: f64, p0: f64, p1: f64) -> Self {
        State4 { q0, q1, p0, p1 }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.q0, self.q1, self.p0, self.p1]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        State4 { q0: a[0], q1: a[1], p0: a[2], p1: a[3] }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

pub fn energy(x: &State4, params: &ModelParams) -> f64 {
    let v = params.potential();
    let d = x.q0 - x.q1;
    0.5 * (x.p0 * x.p0 + x.p1 * x.p1) + v.v(x.q0) + v.v(x.q1) + 0.5 * params.alpha * d * d
}

/// Conservative forces `(-dH/dq0, -dH/dq1)`.
pub fn forces(x: &State4, params: &ModelParams) -> [f64; 2] {
    let v = params.potential();
    let c = params.alpha * (x.q1 - x.q0);
    [-v.dv(x.q0) + c, -v.dv(x.q1) - c]
}

/// Closed form of `LH`.
pub fn energy_generator(x: &State4, params: &ModelParams) -> f64 {
    params.gamma * (params.t_cold + params.t_hot) - params.gamma * x.p0 * x.p0
}

/// Value, first partials and the two momentum second partials of a scalar field.
/// Those are exactly the entries the generator needs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Jet2 {
    pub value: f64,
    pub d_q0: f64,
    pub d_q1: f64,
    pub d_p0: f64,
    pub d_p1: f64,
    pub d2_p0: f64,
    pub d2_p1: f64,
}

impl Jet2 {
    pub fn constant(value: f64) -> Self {
        Jet2 { value, ..Default::default() }
    }

    pub fn is_finite(&self) -> bool {
        [self.value, self.d_q0, self.d_q1, self.d_p0, self.d_p1, self.d2_p0, self.d2_p1]
            .iter()
            .all(|v| v.is_finite())
    }

    pub fn scale(self, c: f64) -> Self {
        Jet2 {
            value: c * self.value,
            d_q0: c * self.d_q0,
            d_q1: c * self.d_q1,
            d_p0: c * self.d_p0,
            d_p1: c * self.d_p1,
            d2_p0: c * self.d2_p0,
            d2_p1: c * self.d2_p1,
        }
    }

    /// `phi(f)` given `phi(f), phi'(f), phi''(f)`.
    pub fn compose(self, phi: f64, dphi: f64, d2phi: f64) -> Self {
        Jet2 {
            value: phi,
            d_q0: dphi * self.d_q0,
            d_q1: dphi * self.d_q1,
            d_p0: dphi * self.d_p0,
            d_p1: dphi * self.d_p1,
            d2_p0: d2phi * self.d_p0 * self.d_p0 + dphi * self.d2_p0,
            d2_p1: d2phi * self.d_p1 * self.d_p1 + dphi * self.d2_p1,
        }
    }
}

impl Add for Jet2 {
    type Output = Jet2;
    fn add(self, o: Jet2) -> Jet2 {
        Jet2 {
            value: self.value + o.value,
            d_q0: self.d_q0 + o.d_q0,
            d_q1: self.d_q1 + o.d_q1,
            d_p0: self.d_p0 + o.d_p0,
            d_p1: self.d_p1 + o.d_p1,
            d2_p0: self.d2_p0 + o.d2_p0,
            d2_p1: self.d2_p1 + o.d2_p1,
        }
    }
}

impl Sub for Jet2 {
    type Output = Jet2;
    fn sub(self, o: Jet2) -> Jet2 {
        self + o.scale(-1.0)
    }
}

impl Mul for Jet2 {
    type Output = Jet2;
    fn mul(self, o: Jet2) -> Jet2 {
        let (a, b) = (self, o);
        Jet2 {
            value: a.value * b.value,
            d_q0: a.d_q0 * b.value + a.value * b.d_q0,
            d_q1: a.d_q1 * b.value + a.value * b.d_q1,
            d_p0: a.d_p0 * b.value + a.value * b.d_p0,
            d_p1: a.d_p1 * b.value + a.value * b.d_p1,
            d2_p0: a.d2_p0 * b.value + 2.0 * a.d_p0 * b.d_p0 + a.value * b.d2_p0,
            d2_p1: a.d2_p1 * b.value + 2.0 * a.d_p1 * b.d_p1 + a.value * b.d2_p1,
        }
    }
}

/// `L f` from a jet of `f`.
pub fn apply_generator(jet: &Jet2, x: &State4, params: &ModelParams) -> f64 {
    let [f0, f1] = forces(x, params);
    let [g0, g1] = params.diffusion();
    x.p0 * jet.d_q0 + x.p1 * jet.d_q1 + (f0 - params.gamma * x.p0) * jet.d_p0 + f1 * jet.d_p1
        + g0 * jet.d2_p0
        + g1 * jet.d2_p1
}

/// `Gamma(f, g) = gamma T df/dp0 dg/dp0 + gamma T_inf df/dp1 dg/dp1`.
pub fn carre_du_champ(f: &Jet2, g: &Jet2, params: &ModelParams) -> f64 {
    let [g0, g1] = params.diffusion();
    g0 * f.d_p0 * g.d_p0 + g1 * f.d_p1 * g.d_p1
}

/// Smooth step: 1 on `(-inf, 1]`, 0 on `[2, inf)`, quintic in between.
/// Returns `[psi, psi', psi'']`.
pub fn cutoff(x: f64) -> [f64; 3] {
    if x <= 1.0 {
        return [1.0, 0.0, 0.0];
    }
    if x >= 2.0 {
        return [0.0, 0.0, 0.0];
    }
    let s = x - 1.0;
    let s2 = s * s;
    let v = 1.0 - s2 * s * (10.0 - 15.0 * s + 6.0 * s2);
    let d = -30.0 * s2 * (1.0 - s) * (1.0 - s);
    let d2 = -60.0 * s * (1.0 - s) * (1.0 - 2.0 * s);
    [v, d, d2]
}

/// A field value together with its generator, carried through algebra with
/// the product and chain rules so that cancellations inside `L` happen
/// symbolically rather than in floating point.
///
/// The represented quantities are `exp(log_scale) * jet` and
/// `exp(log_scale) * generator`, which keeps exponential test functions
/// finite.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Eval {
    pub jet: Jet2,
    pub generator: f64,
    pub log_scale: f64,
    diffusion: [f64; 2],
}

impl Eval {
    pub fn new(jet: Jet2, generator: f64, diffusion: [f64; 2]) -> Self {
        Eval { jet, generator, log_scale: 0.0, diffusion }
    }

    /// Generator computed from the jet.
    pub fn from_jet(jet: Jet2, x: &State4, params: &ModelParams) -> Self {
        Eval::new(jet, apply_generator(&jet, x, params), params.diffusion())
    }

    pub fn constant(c: f64, params: &ModelParams) -> Self {
        Eval::new(Jet2::constant(c), 0.0, params.diffusion())
    }

    pub fn energy(x: &State4, params: &ModelParams) -> Self {
        let v = params.potential();
        let a = params.alpha * (x.q0 - x.q1);
        let jet = Jet2 {
            value: energy(x, params),
            d_q0: v.dv(x.q0) + a,
            d_q1: v.dv(x.q1) - a,
            d_p0: x.p0,
            d_p1: x.p1,
            d2_p0: 1.0,
            d2_p1: 1.0,
        };
        Eval::new(jet, energy_generator(x, params), params.diffusion())
    }

    pub fn q0(x: &State4, params: &ModelParams) -> Self {
        Eval::new(Jet2 { value: x.q0, d_q0: 1.0, ..Default::default() }, x.p0, params.diffusion())
    }

    pub fn q1(x: &State4, params: &ModelParams) -> Self {
        Eval::new(Jet2 { value: x.q1, d_q1: 1.0, ..Default::default() }, x.p1, params.diffusion())
    }

    pub fn p0(x: &State4, params: &ModelParams) -> Self {
        let [f0, _] = forces(x, params);
        let jet = Jet2 { value: x.p0, d_p0: 1.0, ..Default::default() };
        Eval::new(jet, f0 - params.gamma * x.p0, params.diffusion())
    }

    pub fn p1(x: &State4, params: &ModelParams) -> Self {
        let [_, f1] = forces(x, params);
        let jet = Jet2 { value: x.p1, d_p1: 1.0, ..Default::default() };
        Eval::new(jet, f1, params.diffusion())
    }

    pub fn diffusion(&self) -> [f64; 2] {
        self.diffusion
    }

    /// True value, possibly overflowing to infinity.
    pub fn value(&self) -> f64 {
        self.jet.value * self.log_scale.exp()
    }

    /// True generator, possibly overflowing.
    pub fn generator_value(&self) -> f64 {
        self.generator * self.log_scale.exp()
    }

    /// `Lf / f`, independent of the scale.
    pub fn ratio(&self) -> f64 {
        self.generator / self.jet.value
    }

    /// Natural log of the true value (requires a positive value).
    pub fn ln_value(&self) -> f64 {
        self.jet.value.ln() + self.log_scale
    }

    /// `Gamma(f, f)` in the scale of `f^2`, i.e. the true value divided by
    /// `exp(2 log_scale)`.
    pub fn carre_unscaled(&self) -> f64 {
        let [g0, g1] = self.diffusion;
        g0 * self.jet.d_p0 * self.jet.d_p0 + g1 * self.jet.d_p1 * self.jet.d_p1
    }

    fn carre_with(&self, o: &Eval) -> f64 {
        let [g0, g1] = self.diffusion;
        g0 * self.jet.d_p0 * o.jet.d_p0 + g1 * self.jet.d_p1 * o.jet.d_p1
    }

    /// Generator recomputed from the jet alone; used to cross-check the
    /// propagated value.
    pub fn generator_from_jet(&self, x: &State4, params: &ModelParams) -> f64 {
        apply_generator(&self.jet, x, params)
    }

    fn rescaled(self, log_scale: f64) -> Self {
        let f = (self.log_scale - log_scale).exp();
        Eval { jet: self.jet.scale(f), generator: self.generator * f, log_scale, diffusion: self.diffusion }
    }

    /// Folds the scale into the jet.
    pub fn unscaled(self) -> Self {
        if self.log_scale == 0.0 {
            self
        } else {
            self.rescaled(0.0)
        }
    }

    pub fn scale(self, c: f64) -> Self {
        Eval { jet: self.jet.scale(c), generator: self.generator * c, ..self }
    }

    /// `phi(f)` from `phi(f), phi'(f), phi''(f)`.
    pub fn map(self, phi: f64, dphi: f64, d2phi: f64) -> Self {
        let f = self.unscaled();
        Eval {
            jet: f.jet.compose(phi, dphi, d2phi),
            generator: dphi * f.generator + d2phi * f.carre_unscaled(),
            log_scale: 0.0,
            diffusion: f.diffusion,
        }
    }

    pub fn map_fn(self, phi: impl Fn(f64) -> [f64; 3]) -> Self {
        let f = self.unscaled();
        let [a, b, c] = phi(f.jet.value);
        f.map(a, b, c)
    }

    pub fn powf(self, e: f64) -> Self {
        self.map_fn(|v| [v.powf(e), e * v.powf(e - 1.0), e * (e - 1.0) * v.powf(e - 2.0)])
    }

    pub fn square(self) -> Self {
        self * self
    }

    pub fn ln(self) -> Self {
        // ln is scale-free apart from an additive constant
        let ls = self.log_scale;
        let g = Eval { log_scale: 0.0, ..self };
        let v = g.jet.value;
        let mut out = g.map(v.ln(), 1.0 / v, -1.0 / (v * v));
        out.jet.value += ls;
        out
    }

    /// `exp(f)`, stored with `log_scale = f` so it never overflows.
    pub fn exp(self) -> Self {
        let f = self.unscaled();
        let j = f.jet;
        Eval {
            jet: Jet2 {
                value: 1.0,
                d_q0: j.d_q0,
                d_q1: j.d_q1,
                d_p0: j.d_p0,
                d_p1: j.d_p1,
                d2_p0: j.d2_p0 + j.d_p0 * j.d_p0,
                d2_p1: j.d2_p1 + j.d_p1 * j.d_p1,
            },
            generator: f.generator + f.carre_unscaled(),
            log_scale: j.value,
            diffusion: f.diffusion,
        }
    }
}

impl Add for Eval {
    type Output = Eval;
    fn add(self, o: Eval) -> Eval {
        let s = self.log_scale.max(o.log_scale);
        let (a, b) = if self.log_scale == o.log_scale { (self, o) } else { (self.rescaled(s), o.rescaled(s)) };
        Eval { jet: a.jet + b.jet, generator: a.generator + b.generator, log_scale: a.log_scale, diffusion: a.diffusion }
    }
}

impl Sub for Eval {
    type Output = Eval;
    fn sub(self, o: Eval) -> Eval {
        self + o.scale(-1.0)
    }
}

impl Neg for Eval {
    type Output = Eval;
    fn neg(self) -> Eval {
        self.scale(-1.0)
    }
}

impl Mul for Eval {
    type Output = Eval;
    fn mul(self, o: Eval) -> Eval {
        Eval {
            jet: self.jet * o.jet,
            generator: self.jet.value * o.generator + o.jet.value * self.generator + 2.0 * self.carre_with(&o),
            log_scale: self.log_scale + o.log_scale,
            diffusion: self.diffusion,
        }
    }
}

impl Add<f64> for Eval {
    type Output = Eval;
    fn add(self, c: f64) -> Eval {
        let f = self.unscaled();
        Eval { jet: Jet2 { value: f.jet.value + c, ..f.jet }, ..f }
    }
}

impl Mul<f64> for Eval {
    type Output = Eval;
    fn mul(self, c: f64) -> Eval {
        self.scale(c)
    }
}
