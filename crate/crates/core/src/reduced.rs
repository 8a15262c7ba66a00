//! One-dimensional reflected diffusions `dX = -eta X^sigma dt + sqrt(2) dW`
//! on `[1, inf)` and the rate tables that classify them and the full chain.

use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_ur, ln_gamma};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::rng::path_rng;

const TIE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducedParams {
    pub sigma: f64,
    /// May be negative: the drift then pushes outwards.
    pub eta: f64,
}

impl ReducedParams {
    pub fn new(sigma: f64, eta: f64) -> Result<Self> {
        if !(sigma.is_finite() && eta.is_finite()) {
            return Err(Error::InvalidParams(format!("sigma and eta must be finite, got ({sigma}, {eta})")));
        }
        Ok(ReducedParams { sigma, eta })
    }

    pub fn drift(&self, x: f64) -> f64 {
        -self.eta * x.powf(self.sigma)
    }
}

/// Normalised invariant density on `[1, inf)`.
#[derive(Clone, Copy, Debug)]
pub enum StationaryDensity {
    /// `(eta - 1) x^{-eta}`.
    Pareto { eta: f64 },
    /// `exp(-eta x^s / s) / Z` with `s = sigma + 1`.
    StretchedExp { eta: f64, s: f64, ln_z: f64, tail_at_one: f64 },
}

pub fn stationary_density(rp: &ReducedParams) -> Result<StationaryDensity> {
    let (sigma, eta) = (rp.sigma, rp.eta);
    if (sigma + 1.0).abs() <= TIE {
        if eta > 1.0 {
            return Ok(StationaryDensity::Pareto { eta });
        }
        return Err(Error::NoInvariantMeasure);
    }
    if sigma < -1.0 || eta <= 0.0 {
        return Err(Error::NoInvariantMeasure);
    }
    let s = sigma + 1.0;
    let a = 1.0 / s;
    let tail_at_one = gamma_ur(a, eta / s);
    // Z = (1/s) (s/eta)^{1/s} Gamma(1/s) Q(1/s, eta/s)
    let ln_z = -s.ln() + a * (s / eta).ln() + ln_gamma(a) + tail_at_one.ln();
    Ok(StationaryDensity::StretchedExp { eta, s, ln_z, tail_at_one })
}

impl StationaryDensity {
    pub fn pdf(&self, x: f64) -> f64 {
        if x < 1.0 {
            return 0.0;
        }
        match *self {
            StationaryDensity::Pareto { eta } => (eta - 1.0) * x.powf(-eta),
            StationaryDensity::StretchedExp { eta, s, ln_z, .. } => (-eta * x.powf(s) / s - ln_z).exp(),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 1.0 {
            return 0.0;
        }
        1.0 - self.ccdf(x)
    }

    pub fn ccdf(&self, x: f64) -> f64 {
        if x <= 1.0 {
            return 1.0;
        }
        match *self {
            StationaryDensity::Pareto { eta } => x.powf(1.0 - eta),
            StationaryDensity::StretchedExp { eta, s, tail_at_one, .. } => {
                gamma_ur(1.0 / s, eta * x.powf(s) / s) / tail_at_one
            }
        }
    }
}

/// Euler-Maruyama with reflection `X <- 2 - X` at 1, started at `X = 1`.
/// Returns the `n_paths` values at `t_end`.
pub fn simulate_reduced(rp: &ReducedParams, dt: f64, t_end: f64, n_paths: usize, seed: u64) -> Result<Vec<f64>> {
    sample_reduced(rp, dt, t_end, 0.0, 1, n_paths, seed)
}

/// Same scheme, but each path is run for `burn_in` and then recorded
/// `per_path` times at spacing `every`. Returns `n_paths * per_path`
/// values, path-major.
pub fn sample_reduced(
    rp: &ReducedParams,
    dt: f64,
    burn_in: f64,
    every: f64,
    per_path: usize,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if !(dt > 0.0 && burn_in >= 0.0 && every >= 0.0) || per_path == 0 {
        return Err(Error::InvalidParams(format!(
            "need dt > 0, burn_in >= 0, every >= 0 and per_path >= 1, got {dt}, {burn_in}, {every}, {per_path}"
        )));
    }
    let burn = (burn_in / dt).round() as usize;
    let gap = (every / dt).round() as usize;
    let amp = (2.0 * dt).sqrt();
    let out: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, i as u64);
            let mut x = 1.0f64;
            let mut advance = |x: &mut f64, n: usize| {
                for _ in 0..n {
                    let xi: f64 = rng.sample(StandardNormal);
                    *x += rp.drift(*x) * dt + amp * xi;
                    if *x < 1.0 {
                        *x = 2.0 - *x;
                    }
                }
            };
            advance(&mut x, burn);
            let mut rec = Vec::with_capacity(per_path);
            rec.push(x);
            for _ in 1..per_path {
                advance(&mut x, gap);
                rec.push(x);
            }
            rec
        })
        .collect();
    let out: Vec<f64> = out.into_iter().flatten().collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Diverged(burn_in + every * per_path as f64));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Eps {
    Exact,
    PlusMinus,
    Plus,
}

impl Eps {
    fn suffix(self) -> &'static str {
        match self {
            Eps::Exact => "",
            Eps::PlusMinus => "±ε",
            Eps::Plus => "+ε",
        }
    }
}

/// Growth of a function of the state variable (`H` or `X`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Growth {
    /// `v^{exponent}` up to the stated epsilon.
    Power { exponent: f64, eps: Eps },
    /// `exp(c v^{exponent})` for some constant `c`.
    ExpPower { exponent: f64 },
    Unity,
}

impl Growth {
    pub fn render(&self, var: &str) -> String {
        match *self {
            Growth::Power { exponent, eps } => format!("{var}^{{{}{}}}", fmt_num(exponent), eps.suffix()),
            Growth::ExpPower { exponent } => {
                if (exponent - 1.0).abs() < TIE {
                    format!("exp(c {var})")
                } else {
                    format!("exp(c {var}^{{{}}})", fmt_num(exponent))
                }
            }
            Growth::Unity => "1".to_string(),
        }
    }
}

/// Decay of the distance to equilibrium.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Speed {
    /// `t^{exponent}`.
    Polynomial { exponent: f64, eps: Eps },
    /// `exp(-c t^{exponent})` with `exponent < 1`.
    Stretched { exponent: f64 },
    Exponential,
}

impl Speed {
    pub fn family(&self) -> &'static str {
        match self {
            Speed::Polynomial { .. } => "polynomial",
            Speed::Stretched { .. } => "stretched",
            Speed::Exponential => "exponential",
        }
    }

    pub fn render(&self) -> String {
        match *self {
            Speed::Polynomial { exponent, eps } => format!("t^{{{}{}}}", fmt_num(exponent), eps.suffix()),
            Speed::Stretched { exponent } => format!("exp(-c t^{{{}}})", fmt_num(exponent)),
            Speed::Exponential => "exp(-c t)".to_string(),
        }
    }
}

fn fmt_num(v: f64) -> String {
    let r = (v * 1e6).round() / 1e6;
    if r == r.trunc() {
        format!("{}", r as i64)
    } else {
        format!("{r}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    ReducedTooSteep,
    ReducedWeakPolynomial,
    ReducedPolynomial,
    ReducedStretched,
    ReducedSubLinear,
    ReducedLinear,
    ReducedSuperLinear,
    StiffPinning,
    CriticalHot,
    CriticalCold,
    FractionalSlow,
    FractionalFast,
    Harmonic,
    SoftPinning,
    WeakPinning,
    NoPinning,
}

/// One row of a rate table. `None` entries mean there is no invariant
/// measure.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub regime: Regime,
    pub integrability: Option<Growth>,
    pub speed: Option<Speed>,
    pub prefactor: Option<Growth>,
}

impl RateRow {
    fn absent(regime: Regime) -> Self {
        RateRow { regime, integrability: None, speed: None, prefactor: None }
    }

    pub fn has_invariant_measure(&self) -> bool {
        self.speed.is_some()
    }

    pub fn render(&self, var: &str) -> [String; 3] {
        let dash = || "---".to_string();
        [
            self.integrability.map(|g| g.render(var)).unwrap_or_else(dash),
            self.speed.map(|s| s.render()).unwrap_or_else(dash),
            self.prefactor.map(|g| g.render(var)).unwrap_or_else(dash),
        ]
    }
}

impl fmt::Display for RateRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c] = self.render("H");
        write!(f, "{:?}: {a} | {b} | {c}", self.regime)
    }
}

pub fn classify_reduced(rp: &ReducedParams) -> RateRow {
    let (sigma, eta) = (rp.sigma, rp.eta);
    let exp_int = Some(Growth::ExpPower { exponent: sigma + 1.0 });
    if (sigma + 1.0).abs() <= TIE {
        if eta <= 1.0 {
            return RateRow::absent(Regime::ReducedWeakPolynomial);
        }
        return RateRow {
            regime: Regime::ReducedPolynomial,
            integrability: Some(Growth::Power { exponent: eta - 1.0, eps: Eps::PlusMinus }),
            speed: Some(Speed::Polynomial { exponent: (1.0 - eta) / 2.0, eps: Eps::PlusMinus }),
            prefactor: Some(Growth::Power { exponent: eta + 1.0, eps: Eps::Plus }),
        };
    }
    if sigma < -1.0 || eta <= 0.0 {
        return RateRow::absent(Regime::ReducedTooSteep);
    }
    if sigma < 0.0 {
        return RateRow {
            regime: Regime::ReducedStretched,
            integrability: exp_int,
            speed: Some(Speed::Stretched { exponent: (1.0 + sigma) / (1.0 - sigma) }),
            prefactor: Some(Growth::ExpPower { exponent: sigma + 1.0 }),
        };
    }
    if (sigma - 1.0).abs() <= TIE {
        return RateRow {
            regime: Regime::ReducedLinear,
            integrability: exp_int,
            speed: Some(Speed::Exponential),
            prefactor: Some(Growth::Power { exponent: 0.0, eps: Eps::Plus }),
        };
    }
    if sigma < 1.0 {
        return RateRow {
            regime: Regime::ReducedSubLinear,
            integrability: exp_int,
            speed: Some(Speed::Exponential),
            prefactor: Some(Growth::ExpPower { exponent: 1.0 - sigma }),
        };
    }
    RateRow {
        regime: Regime::ReducedSuperLinear,
        integrability: exp_int,
        speed: Some(Speed::Exponential),
        prefactor: Some(Growth::Unity),
    }
}

/// `zeta* = 3/4 (alpha^2 C - T_inf) / T_inf`.
pub fn zeta_star(alpha: f64, c_hat: f64, t_hot: f64) -> f64 {
    0.75 * (alpha * alpha * c_hat - t_hot) / t_hot
}

/// Rate table for the full chain. `c_hat` is only used at `k = 2`, where
/// the critical temperature `alpha^2 c_hat` is reported as undetermined.
pub fn classify_full(params: &ModelParams, c_hat: f64) -> Result<RateRow> {
    let k = params.k;
    if !k.is_finite() {
        return Err(Error::InvalidParams(format!("k must be finite, got {k}")));
    }
    let kappa = 2.0 / k - 1.0;
    let exp_h = |e: f64| Some(Growth::ExpPower { exponent: e });
    if k > 2.0 + TIE {
        return Ok(RateRow::absent(Regime::StiffPinning));
    }
    if (k - 2.0).abs() <= TIE {
        let critical = params.alpha * params.alpha * c_hat;
        let gap = params.t_hot - critical;
        if gap.abs() <= TIE * critical.max(1.0) {
            return Err(Error::Undetermined);
        }
        if gap > 0.0 {
            return Ok(RateRow::absent(Regime::CriticalHot));
        }
        let z = zeta_star(params.alpha, c_hat, params.t_hot);
        return Ok(RateRow {
            regime: Regime::CriticalCold,
            integrability: Some(Growth::Power { exponent: z, eps: Eps::PlusMinus }),
            speed: Some(Speed::Polynomial { exponent: -z, eps: Eps::PlusMinus }),
            prefactor: Some(Growth::Power { exponent: z + 1.0, eps: Eps::Plus }),
        });
    }
    if k >= 4.0 / 3.0 - TIE {
        return Ok(RateRow {
            regime: Regime::FractionalSlow,
            integrability: exp_h(kappa),
            speed: Some(Speed::Stretched { exponent: kappa / (1.0 - kappa) }),
            prefactor: exp_h(kappa),
        });
    }
    if k > 1.0 + TIE {
        return Ok(RateRow {
            regime: Regime::FractionalFast,
            integrability: exp_h(kappa),
            speed: Some(Speed::Exponential),
            prefactor: exp_h(1.0 - kappa),
        });
    }
    if (k - 1.0).abs() <= TIE {
        return Ok(RateRow {
            regime: Regime::Harmonic,
            integrability: exp_h(1.0),
            speed: Some(Speed::Exponential),
            prefactor: Some(Growth::Power { exponent: 0.0, eps: Eps::Plus }),
        });
    }
    if k >= 0.5 - TIE {
        return Ok(RateRow {
            regime: Regime::SoftPinning,
            integrability: exp_h(1.0),
            speed: Some(Speed::Exponential),
            prefactor: exp_h(1.0 / k - 1.0),
        });
    }
    if k > 0.0 {
        return Ok(RateRow {
            regime: Regime::WeakPinning,
            integrability: exp_h(1.0),
            speed: Some(Speed::Stretched { exponent: k / (1.0 - k) }),
            prefactor: exp_h(1.0),
        });
    }
    Ok(RateRow::absent(Regime::NoPinning))
}

/// Reduced diffusion describing the slow variable of the chain.
///
/// * `k > 2`: `sigma = -1`, `eta = 1 - 2/K` with `K = 2k/(1+k)`.
/// * `k = 2`: `sigma = -1`, `eta = 3 alpha^2 c / (2 T_inf) - 1/2`.
/// * `1 < k < 2`: `sigma = 4/k - 3`, `c` being the orbit mean of `Phi^2`
///   at unit energy for this `k`.
/// * `0 < k <= 1`: `sigma = 2k - 1` for the centre of mass, with
///   `eta = (2/gamma) (gamma/(T+T_inf))^{1-k}`.
pub fn heuristic_reduction(params: &ModelParams, c: f64) -> Result<ReducedParams> {
    let k = params.k;
    let (alpha, gamma, t_hot) = (params.alpha, params.gamma, params.t_hot);
    if k <= 0.0 {
        return Err(Error::Unsupported(format!("no reduced description without pinning (k = {k})")));
    }
    let kk = 2.0 * k / (1.0 + k);
    if k > 2.0 + TIE {
        return ReducedParams::new(-1.0, 1.0 - 2.0 / kk);
    }
    if (k - 2.0).abs() <= TIE {
        return ReducedParams::new(-1.0, 1.5 * alpha * alpha * c / t_hot - 0.5);
    }
    if k > 1.0 + TIE {
        let eta = gamma.sqrt() * alpha * alpha * c / (t_hot * kk).sqrt()
            * (gamma * t_hot * kk / 4.0).powf(2.0 / k - 1.5);
        return ReducedParams::new(4.0 / k - 3.0, eta);
    }
    let eta = 2.0 / gamma * (gamma / (params.t_cold + t_hot)).powf(1.0 - k);
    ReducedParams::new(2.0 * k - 1.0, eta)
}

/// One cell of a `(k, T_inf)` phase diagram.
#[derive(Clone, Debug, Serialize)]
pub struct PhaseCell {
    pub k: f64,
    pub t_hot: f64,
    pub row: Option<RateRow>,
    pub undetermined: bool,
}

pub fn phase_diagram(base: &ModelParams, ks: &[f64], t_hots: &[f64], c_hat: f64) -> Vec<PhaseCell> {
    let mut out = Vec::with_capacity(ks.len() * t_hots.len());
    for &k in ks {
        for &t_hot in t_hots {
            let p = ModelParams { k, t_hot, ..*base };
            let (row, undetermined) = match classify_full(&p, c_hat) {
                Ok(r) => (Some(r), false),
                Err(_) => (None, true),
            };
            out.push(PhaseCell { k, t_hot, row, undetermined });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Smoothing;

    const C: f64 = 0.6354699;

    fn params(k: f64, t_hot: f64) -> ModelParams {
        let s = if k >= 1.0 { Smoothing::Pure } else { Smoothing::Regularized };
        ModelParams::new(1.0, 1.0, 1.0, t_hot, k, s).unwrap()
    }

    #[test]
    fn zeta_star_value() {
        assert!((zeta_star(1.0, C, 0.3) - 0.8386748).abs() < 1e-6);
    }

    #[test]
    fn polynomial_row_example() {
        let r = classify_reduced(&ReducedParams::new(-1.0, 3.0).unwrap());
        assert_eq!(r.render("X"), ["X^{2±ε}".to_string(), "t^{-1±ε}".into(), "X^{4+ε}".into()]);
    }

    #[test]
    fn critical_point_is_undetermined() {
        assert_eq!(classify_full(&params(2.0, C), C), Err(Error::Undetermined));
        assert!(!classify_full(&params(2.0, 1.5 * C), C).unwrap().has_invariant_measure());
        assert!(classify_full(&params(2.0, 0.5 * C), C).unwrap().has_invariant_measure());
    }

    #[test]
    fn reductions() {
        let r = heuristic_reduction(&params(2.0, C), C).unwrap();
        assert!((r.eta - 1.0).abs() < 1e-12 && r.sigma == -1.0);
        assert!((heuristic_reduction(&params(1.5, 1.0), 0.8).unwrap().sigma + 1.0 / 3.0).abs() < 1e-12);
        assert!((heuristic_reduction(&params(0.25, 1.0), 0.0).unwrap().sigma + 0.5).abs() < 1e-12);
        let r3 = heuristic_reduction(&params(3.0, 1.0), C).unwrap();
        assert!(r3.eta < 1.0);
    }

    #[test]
    fn kappa_and_zeta_correspondence() {
        for &k in &[1.2, 1.5, 1.8] {
            let sigma = heuristic_reduction(&params(k, 1.0), 0.5).unwrap().sigma;
            assert!(((sigma + 1.0) / 2.0 - (2.0 / k - 1.0)).abs() < 1e-12);
        }
        for &t in &[0.2, 0.3, 0.5] {
            let eta = heuristic_reduction(&params(2.0, t), C).unwrap().eta;
            assert!(((eta - 1.0) / 2.0 - zeta_star(1.0, C, t)).abs() < 1e-12);
        }
    }

    #[test]
    fn speed_families_agree_with_full_table() {
        let cases = [(0.25, 1.0), (0.75, 1.0), (1.5, 1.0), (2.0, 0.3), (2.0, 1.3), (3.0, 1.0)];
        for &(k, t) in &cases {
            let p = params(k, t);
            let full = classify_full(&p, C).unwrap();
            let red = classify_reduced(&heuristic_reduction(&p, C).unwrap());
            assert_eq!(full.speed.map(|s| s.family()), red.speed.map(|s| s.family()), "k={k} T={t}");
            if let (Some(a), Some(b)) = (full.speed, red.speed) {
                match (a, b) {
                    (Speed::Stretched { exponent: x }, Speed::Stretched { exponent: y })
                    | (Speed::Polynomial { exponent: x, .. }, Speed::Polynomial { exponent: y, .. }) => {
                        assert!((x - y).abs() < 1e-12, "k={k}: {x} vs {y}")
                    }
                    _ => {}
                }
            }
        }
    }

    #[test]
    fn density_rejections() {
        assert_eq!(stationary_density(&ReducedParams::new(-1.0, 1.0).unwrap()).unwrap_err(), Error::NoInvariantMeasure);
        assert!(stationary_density(&ReducedParams::new(-1.5, 3.0).unwrap()).is_err());
        assert!(stationary_density(&ReducedParams::new(0.5, -1.0).unwrap()).is_err());
    }

    #[test]
    fn phase_diagram_regimes() {
        let base = params(2.0, 1.0);
        let mut cells = Vec::new();
        for &(k, t) in &[(0.4, 1.0), (0.75, 1.0), (1.0, 1.0), (1.2, 1.0), (1.5, 1.0), (2.0, 0.3), (2.0, 1.3), (3.0, 1.0)] {
            cells.extend(phase_diagram(&base, &[k], &[t], C));
        }
        let mut regimes: Vec<_> = cells.iter().map(|c| c.row.unwrap().regime).collect();
        regimes.dedup();
        assert_eq!(regimes.len(), 8);
    }
}
