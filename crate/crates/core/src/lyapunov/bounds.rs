use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{energy, ModelParams};
use crate::sim::EnsembleResult;

const BISECT_TOL: f64 = 1e-10;
// summation error of the ensemble mean
const ROUNDING: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundVariant {
    /// `E H^a(t) <= (H(x0) + C_a t)^a`
    Power,
    /// `E exp(a H^kappa(t)) <= exp(a H^kappa(x0) + C_kappa (1+t)^{kappa/(1-kappa)})`
    Exponential { kappa: f64 },
}

/// Closed-form envelope `g(x0, t)` for moments of `H` along the dynamics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentBound {
    pub variant: BoundVariant,
    pub alpha: f64,
    pub constant: f64,
}

/// Builds the envelope from `gamma (T + T_inf)`, the only constant entering
/// the differential inequality for `E phi(H)`.
pub fn moment_growth_bound(alpha: f64, params: &ModelParams, variant: BoundVariant) -> Result<MomentBound> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidParams(format!("moment order must be positive, got {alpha}")));
    }
    let a = params.gamma * (params.t_cold + params.t_hot);
    let constant = match variant {
        BoundVariant::Power => {
            // Gamma(H, H) <= 2 gamma (T + T_inf) H gives L H^a <= a C_a H^{a-1} for a >= 1,
            // below that Jensen on E H(t) suffices
            if alpha >= 1.0 {
                a * (2.0 * alpha - 1.0)
            } else {
                a
            }
        }
        BoundVariant::Exponential { kappa } => {
            if !(kappa > 0.0 && kappa <= 0.5) {
                return Err(Error::InvalidParams(format!("kappa must lie in (0, 1/2], got {kappa}")));
            }
            let c1 = a * alpha * kappa * (1.0 + 2.0 * alpha * kappa);
            let r = 1.0 / kappa - 1.0;
            let d = r * c1 * alpha.powf(r - 1.0);
            let big_k = ((1.0 / kappa - 1.0) / alpha).powf(1.0 / kappa).max(1.0);
            alpha * big_k.powf(kappa) + d.powf(kappa / (1.0 - kappa))
        }
    };
    Ok(MomentBound { variant, alpha, constant })
}

impl MomentBound {
    /// Envelope for the moment observable `phi(H)` started from `H(x0) = h0`.
    pub fn eval(&self, h0: f64, t: f64) -> f64 {
        match self.variant {
            BoundVariant::Power => (h0 + self.constant * t).powf(self.alpha),
            BoundVariant::Exponential { kappa } => {
                (self.alpha * h0.powf(kappa) + self.constant * (1.0 + t).powf(kappa / (1.0 - kappa))).exp()
            }
        }
    }

    /// The observable whose mean the envelope controls.
    pub fn observable(&self, h: f64) -> f64 {
        match self.variant {
            BoundVariant::Power => h.powf(self.alpha),
            BoundVariant::Exponential { kappa } => (self.alpha * h.powf(kappa)).exp(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MomentCheckRow {
    pub t: f64,
    pub mean: f64,
    pub std_error: f64,
    pub envelope: f64,
    /// `mean - 3 se <= envelope`, up to rounding
    pub within: bool,
}

/// Ensemble mean of the bounded observable against the envelope, allowing
/// three standard errors.
pub fn validate_moments(ens: &EnsembleResult, bound: &MomentBound, params: &ModelParams) -> Result<Vec<MomentCheckRow>> {
    if ens.n_paths() < 2 {
        return Err(Error::InsufficientData("need at least two paths".into()));
    }
    let h0 = energy(&ens.states[0][0], params);
    let vals = ens.observable(|x| bound.observable(energy(x, params)));
    let n = vals.len() as f64;
    Ok(ens
        .times
        .iter()
        .enumerate()
        .map(|(r, &t)| {
            let mean = vals.iter().map(|v| v[r]).sum::<f64>() / n;
            let var = vals.iter().map(|v| (v[r] - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let std_error = (var / n).sqrt();
            let envelope = bound.eval(h0, t);
            MomentCheckRow { t, mean, std_error, envelope, within: mean - 3.0 * std_error <= envelope * (1.0 + ROUNDING) }
        })
        .collect())
}

/// `f((Id f)^{-1}(2 g)) / 2`: the total-variation lower bound produced by a
/// tail `f` and a moment envelope value `g`.
///
/// `y f(y)` must be strictly increasing on `[1, inf)`; this is checked on
/// the grid `2^{j/4}` before solving.
pub fn lower_bound_tv(f: impl Fn(f64) -> f64, g: f64) -> Result<f64> {
    if !(g > 0.0) || !g.is_finite() {
        return Err(Error::InvalidParams(format!("moment bound must be positive and finite, got {g}")));
    }
    let yf = |y: f64| y * f(y);
    let target = 2.0 * g;
    let mut prev = yf(1.0);
    let mut j = 1;
    loop {
        let y = 2f64.powf(j as f64 / 4.0);
        let v = yf(y);
        if !(v > prev * (1.0 + 1e-12)) || !v.is_finite() {
            return Err(Error::NotMonotone(format!("y f(y) is not increasing near y = {y:.4}")));
        }
        if v >= target && j >= 8 {
            break;
        }
        if j > 4 * 1100 {
            return Err(Error::NotMonotone("y f(y) never reaches 2 g".into()));
        }
        prev = v;
        j += 1;
    }
    let mut lo = 1.0;
    let mut hi = 2.0;
    if yf(lo) >= target {
        return Ok(f(lo) / 2.0);
    }
    while yf(hi) < target {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > BISECT_TOL * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if yf(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(f(0.5 * (lo + hi)) / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Smoothing;

    #[test]
    fn inverse_square_root_tail() {
        let b = lower_bound_tv(|y| y.powf(-0.5), 2.0).unwrap();
        assert!((b - 0.125).abs() < 1e-9);
    }

    #[test]
    fn flat_product_rejected() {
        assert!(matches!(lower_bound_tv(|y| 1.0 / y, 2.0), Err(Error::NotMonotone(_))));
    }

    #[test]
    fn envelope_at_zero_time() {
        let p = ModelParams::new(1.0, 1.0, 1.0, 0.5, 2.0, Smoothing::Pure).unwrap();
        let b = moment_growth_bound(0.5, &p, BoundVariant::Power).unwrap();
        assert!((b.eval(9.0, 0.0) - 3.0).abs() < 1e-14);
    }
}
