use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linear::{build_gram, build_matrices, default_gamma_tilde, GEps, GramForm};
use crate::model::{cutoff, free_force, Eval, ModelParams, State4};
use crate::oscillator::OrbitSolutions;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "tildeH0")]
    TildeH0,
    #[serde(rename = "H0_cutoff")]
    H0Cutoff,
    #[serde(rename = "V_k2")]
    VK2,
    #[serde(rename = "V_klt2")]
    VKlt2,
    #[serde(rename = "W_tail")]
    WTail,
    #[serde(rename = "W1_nonexist")]
    W1Nonexist,
    #[serde(rename = "W_exp_frac")]
    WExpFrac,
    #[serde(rename = "expH")]
    ExpH,
    #[serde(rename = "hatH_smallk")]
    HatHSmallk,
    #[serde(rename = "W_smallk")]
    WSmallk,
    #[serde(rename = "S_form")]
    SForm,
    /// The total energy.
    #[serde(rename = "energy")]
    Energy,
    /// The constant `c`.
    #[serde(rename = "constant")]
    Constant,
}

impl Family {
    pub const ALL: [Family; 13] = [
        Family::TildeH0,
        Family::H0Cutoff,
        Family::VK2,
        Family::VKlt2,
        Family::WTail,
        Family::W1Nonexist,
        Family::WExpFrac,
        Family::ExpH,
        Family::HatHSmallk,
        Family::WSmallk,
        Family::SForm,
        Family::Energy,
        Family::Constant,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::TildeH0 => "tildeH0",
            Family::H0Cutoff => "H0_cutoff",
            Family::VK2 => "V_k2",
            Family::VKlt2 => "V_klt2",
            Family::WTail => "W_tail",
            Family::W1Nonexist => "W1_nonexist",
            Family::WExpFrac => "W_exp_frac",
            Family::ExpH => "expH",
            Family::HatHSmallk => "hatH_smallk",
            Family::WSmallk => "W_smallk",
            Family::SForm => "S_form",
            Family::Energy => "energy",
            Family::Constant => "constant",
        }
    }

    /// Families built on the centred orbit solutions.
    pub fn needs_tables(self) -> bool {
        matches!(
            self,
            Family::H0Cutoff | Family::VK2 | Family::VKlt2 | Family::WTail | Family::W1Nonexist | Family::WExpFrac
        )
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .iter()
            .copied()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::InvalidParams(format!("unknown test function family '{s}'")))
    }
}

/// User-facing parameters; unset entries take the family default.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldParams {
    pub theta: Option<f64>,
    pub c: Option<f64>,
    /// Energy scale `E` of the cutoff `psi(H_f / E)`.
    pub e_cut: Option<f64>,
    pub zeta: Option<f64>,
    pub delta: Option<f64>,
    pub kappa: Option<f64>,
    pub eps: Option<f64>,
    pub xi: Option<f64>,
    pub beta0: Option<f64>,
    pub lambda: Option<f64>,
    pub eta: Option<f64>,
    /// Weight of the quadratic form `<y, S y>`; `S` is only fixed up to a
    /// positive multiple.
    pub sigma: Option<f64>,
}

/// Fully resolved parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldValues {
    pub theta: f64,
    pub c: f64,
    pub e_cut: f64,
    pub zeta: f64,
    pub delta: f64,
    pub kappa: f64,
    pub eps: f64,
    pub xi: f64,
    pub beta0: f64,
    pub lambda: f64,
    pub eta: f64,
    pub sigma: f64,
}

impl FieldValues {
    pub fn named(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("theta", self.theta),
            ("c", self.c),
            ("e_cut", self.e_cut),
            ("zeta", self.zeta),
            ("delta", self.delta),
            ("kappa", self.kappa),
            ("eps", self.eps),
            ("xi", self.xi),
            ("beta0", self.beta0),
            ("lambda", self.lambda),
            ("eta", self.eta),
            ("sigma", self.sigma),
        ]
    }
}

/// Default cutoff exponent: 2 when admissible, else the middle of `[2-k, k]`.
fn default_eta(k: f64) -> f64 {
    let lo = (2.0 - k).max(2.0 / k - 1.0);
    if (lo..=k).contains(&2.0) {
        2.0
    } else {
        0.5 * (lo + k)
    }
}

impl FieldParams {
    pub fn resolve(&self, family: Family, model: &ModelParams) -> FieldValues {
        let k = model.k;
        let (theta, c, e_cut, delta, beta0) = match family {
            Family::VK2 | Family::WTail => (-0.04, 0.9, 1e5, 0.0, 0.0),
            Family::W1Nonexist => (0.08, 0.0, 1e5, 0.2, 0.0),
            Family::WExpFrac => (0.4, 0.0, 1e3, 0.05, 0.0),
            Family::ExpH => (0.0, 0.0, 0.0, 0.0, 1.0 / model.t_cold),
            Family::HatHSmallk => (0.0, 0.0, 0.0, 1.0 / k - 1.0, 0.05),
            Family::WSmallk => (0.0, 0.0, 0.0, 0.0, 0.05),
            Family::Constant => (0.0, 1.0, 0.0, 0.0, 0.0),
            _ => (0.05, 0.9, 1e3, 0.2, 0.05),
        };
        let (xi, eps, sigma) = match family {
            Family::HatHSmallk => (2.2, 0.02, 0.03),
            Family::WSmallk => (1.0, 0.1, 0.03),
            _ => (1.0, 0.1, 1.0),
        };
        FieldValues {
            theta: self.theta.unwrap_or(theta),
            c: self.c.unwrap_or(c),
            e_cut: self.e_cut.unwrap_or(e_cut),
            zeta: self.zeta.unwrap_or(0.05),
            delta: self.delta.unwrap_or(delta),
            kappa: self.kappa.unwrap_or(2.0 / k - 1.0),
            eps: self.eps.unwrap_or(eps),
            xi: self.xi.unwrap_or(xi),
            beta0: self.beta0.unwrap_or(beta0),
            lambda: self.lambda.unwrap_or(1.0),
            eta: self.eta.unwrap_or_else(|| default_eta(k)),
            sigma: self.sigma.unwrap_or(sigma),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TestFunctionSpec {
    pub family: Family,
    #[serde(default)]
    pub params: FieldParams,
}

impl Default for Family {
    fn default() -> Self {
        Family::Energy
    }
}

impl TestFunctionSpec {
    pub fn new(family: Family) -> Self {
        TestFunctionSpec { family, params: FieldParams::default() }
    }

    pub fn with(mut self, f: impl FnOnce(&mut FieldParams)) -> Self {
        f(&mut self.params);
        self
    }

    /// Resolved parameters, checked against the family's constraints.
    pub fn validate(&self, model: &ModelParams) -> Result<FieldValues> {
        model.validate()?;
        let values = self.params.resolve(self.family, model);
        validate(self.family, &values, model.k)?;
        Ok(values)
    }
}

/// Anything whose value and generator can be evaluated at a state.
pub trait TestField: Sync {
    fn eval(&self, x: &State4) -> Eval;
    fn describe(&self) -> String;
}

/// A built test function.
#[derive(Clone, Debug)]
pub struct Field {
    pub family: Family,
    pub values: FieldValues,
    pub model: ModelParams,
    sols: Option<Arc<OrbitSolutions>>,
    gram: Option<GramForm>,
    geps: Option<GEps>,
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParams(msg()))
    }
}

fn validate(family: Family, v: &FieldValues, k: f64) -> Result<()> {
    let finite = v.named().iter().all(|(_, x)| x.is_finite());
    check(finite, || "field parameters must be finite".into())?;
    match family {
        Family::TildeH0 | Family::H0Cutoff => {
            check(k >= 1.0, || format!("{family} needs k >= 1, got {k}"))?;
            check(family == Family::TildeH0 || v.e_cut > 0.0, || "E must be positive".into())
        }
        Family::VK2 | Family::WTail => {
            check(k >= 1.0, || format!("{family} needs k >= 1, got {k}"))?;
            check(v.c > 0.0 && v.c < 1.0, || format!("c must lie in (0, 1), got {}", v.c))?;
            check(v.e_cut > 0.0, || "E must be positive".into())?;
            check(family == Family::VK2 || v.zeta > 0.0, || "zeta must be positive".into())
        }
        Family::W1Nonexist => {
            check(k >= 1.0, || format!("{family} needs k >= 1, got {k}"))?;
            check(v.zeta > 0.0 && v.zeta < 1.0, || format!("zeta must lie in (0, 1), got {}", v.zeta))?;
            check(v.delta > 0.0, || "delta must be positive".into())?;
            check(v.e_cut > 0.0, || "E must be positive".into())
        }
        Family::VKlt2 | Family::WExpFrac => {
            check(k > 1.0 && k < 2.0, || format!("{family} needs 1 < k < 2, got {k}"))?;
            check(v.theta > 0.0, || "theta must be positive".into())?;
            let lo = (2.0 - k).max(2.0 / k - 1.0);
            check(v.eta >= lo && v.eta <= k, || format!("eta must lie in [{lo}, {k}], got {}", v.eta))?;
            if family == Family::WExpFrac {
                check(v.delta > 0.0, || "delta must be positive".into())?;
                check(v.kappa > 0.0 && v.kappa <= 1.0, || format!("kappa must lie in (0, 1], got {}", v.kappa))?;
            }
            Ok(())
        }
        Family::ExpH => check(v.beta0 > 0.0, || "beta0 must be positive".into()),
        Family::HatHSmallk => {
            check(k > 0.5 && k < 1.0, || format!("{family} needs 1/2 < k < 1, got {k}"))?;
            let lo = 1.0 / k - 1.0;
            check(v.delta >= lo && v.delta <= 1.0, || format!("delta must lie in [{lo}, 1], got {}", v.delta))?;
            check(v.beta0 > 0.0 && v.xi > 0.0 && v.eps > 0.0 && v.sigma > 0.0, || {
                "beta0, xi, eps and sigma must be positive".into()
            })
        }
        Family::WSmallk => {
            check(k > 0.0 && k <= 0.5, || format!("{family} needs 0 < k <= 1/2, got {k}"))?;
            check(v.beta0 > 0.0 && v.lambda > 0.0 && v.sigma > 0.0, || {
                "beta0, lambda and sigma must be positive".into()
            })
        }
        Family::SForm => {
            check(k <= 1.0, || format!("{family} needs k <= 1, got {k}"))?;
            check(v.sigma > 0.0, || "sigma must be positive".into())
        }
        Family::Energy | Family::Constant => Ok(()),
    }
}

/// Builds the test function; families using `Phi`, `Psi`, `Xi` need the
/// orbit solutions for the model's `k`.
pub fn build_test_function(
    spec: &TestFunctionSpec,
    model: &ModelParams,
    tables: Option<Arc<OrbitSolutions>>,
) -> Result<Field> {
    model.validate()?;
    let family = spec.family;
    let values = spec.params.resolve(family, model);
    validate(family, &values, model.k)?;
    if let Some(t) = &tables {
        if (t.k - model.k).abs() > 1e-12 {
            return Err(Error::InvalidParams(format!("tables built for k = {}, model has k = {}", t.k, model.k)));
        }
    } else if family.needs_tables() {
        return Err(Error::MissingTables(format!("{family} needs the centred orbit solutions")));
    }
    let m = build_matrices(model);
    let gram = match family {
        Family::SForm if model.k == 1.0 => Some(build_gram(&m.a_tilde, default_gamma_tilde(&m.a_tilde))?),
        Family::SForm | Family::HatHSmallk | Family::WSmallk => Some(build_gram(&m.a, default_gamma_tilde(&m.a))?),
        _ => None,
    };
    let geps = if family == Family::HatHSmallk { Some(GEps::new(values.eps, model.k)?) } else { None };
    Ok(Field { family, values, model: *model, sols: tables, gram, geps })
}

fn quadratic(s: &DMatrix<f64>, ys: &[Eval], model: &ModelParams) -> Eval {
    let mut acc = Eval::constant(0.0, model);
    for i in 0..ys.len() {
        acc = acc + ys[i].square() * s[(i, i)];
        for j in i + 1..ys.len() {
            acc = acc + ys[i] * ys[j] * (2.0 * s[(i, j)]);
        }
    }
    acc
}

impl Field {
    pub fn tables(&self) -> Option<&Arc<OrbitSolutions>> {
        self.sols.as_ref()
    }

    pub fn gram(&self) -> Option<&GramForm> {
        self.gram.as_ref()
    }

    pub fn g_eps(&self) -> Option<&GEps> {
        self.geps.as_ref()
    }

    fn sols(&self) -> &OrbitSolutions {
        self.sols.as_deref().expect("tables checked at build time")
    }

    /// `p0 - alpha Phi(p1, q1)`, or `p0` when no tables are attached.
    pub fn p_tilde(&self, x: &State4) -> Eval {
        let p0 = Eval::p0(x, &self.model);
        match &self.sols {
            Some(s) => p0 - s.phi.eval_second(x, &self.model) * self.model.alpha,
            None => p0,
        }
    }

    fn free_energy(&self, p: Eval, q: Eval) -> Eval {
        let k = self.model.k;
        let vq = q.map_fn(|v| {
            let a = v.abs().powf(2.0 * k - 2.0);
            [v * v * a / (2.0 * k), free_force(v, k), (2.0 * k - 1.0) * a]
        });
        p.square() * 0.5 + vq
    }

    fn v_eff(&self, q: Eval) -> Eval {
        let pot = self.model.potential();
        let a = self.model.alpha;
        q.map_fn(|v| [pot.v(v) + 0.5 * a * v * v, pot.dv(v) + a * v, pot.d2v(v) + a])
    }

    // only ever applied to a position, so the second derivative never enters
    fn v_eff_prime(&self, q: Eval) -> Eval {
        let pot = self.model.potential();
        let a = self.model.alpha;
        q.map_fn(|v| [pot.dv(v) + a * v, pot.d2v(v) + a, 0.0])
    }

    fn tilde_h0(&self, x: &State4) -> Eval {
        let pt = self.p_tilde(x);
        let q0 = Eval::q0(x, &self.model);
        pt.square() * 0.5 + self.v_eff(q0) + pt * q0 * self.values.theta
    }

    fn h0_cutoff(&self, x: &State4) -> Eval {
        let m = &self.model;
        let v = &self.values;
        let s = self.sols();
        let pt = self.p_tilde(x);
        let q0 = Eval::q0(x, m);
        let g = m.alpha * (m.gamma - v.theta);
        let f_theta = pt * g + self.v_eff_prime(q0) * m.alpha;
        let corr = s.xi.eval_second(x, m) * (m.alpha * g) + f_theta * s.psi.eval_second(x, m);
        let cut = (self.free_energy(pt, q0) * (1.0 / v.e_cut)).map_fn(cutoff);
        self.tilde_h0(x) - corr * cut
    }

    fn v_k2(&self, x: &State4) -> Eval {
        Eval::energy(x, &self.model) - self.h0_cutoff(x) * self.values.c
    }

    fn v_klt2(&self, x: &State4) -> Eval {
        let m = &self.model;
        let v = &self.values;
        let s = self.sols();
        let (a, g, th) = (m.alpha, m.gamma, v.theta);
        let alpha_th = a * g * (a - 0.25 * g * th);
        let c_th = a * th - 2.0 * a * g + 0.5 * g * g * th;
        let pt = self.p_tilde(x);
        let q0 = Eval::q0(x, m);
        let hf0 = self.free_energy(pt, q0);
        let hf1 = self.free_energy(Eval::p1(x, m), Eval::q1(x, m));
        let cut = ((hf0 + 1.0) * (hf1 + 1.0).powf(-v.eta)).map_fn(cutoff);
        Eval::energy(x, m) + pt * q0 * th + s.xi.eval_second(x, m) * alpha_th
            - pt * s.psi.eval_second(x, m) * cut * c_th
    }

    /// `H + <y, S y> - xi (p0 + p1)(G(q0) + G(q1))`.
    pub fn hat_h(&self, x: &State4) -> Eval {
        let m = &self.model;
        let geps = self.geps.expect("built with the surrogate");
        let g = |q: Eval| {
            q.map_fn(|v| {
                let [a, b] = geps.eval(v);
                [a, b, 0.0]
            })
        };
        let p = Eval::p0(x, m) + Eval::p1(x, m);
        Eval::energy(x, m) + self.s_form(x) - p * (g(Eval::q0(x, m)) + g(Eval::q1(x, m))) * self.values.xi
    }

    fn s_form(&self, x: &State4) -> Eval {
        let m = &self.model;
        let s = &self.gram.as_ref().expect("built with a Gram form").s * self.values.sigma;
        if s.nrows() == 4 {
            let ys = [Eval::q0(x, m), Eval::q1(x, m), Eval::p0(x, m), Eval::p1(x, m)];
            quadratic(&s, &ys, m)
        } else {
            let q = (Eval::q0(x, m) - Eval::q1(x, m)) * 0.5;
            quadratic(&s, &[q, Eval::p0(x, m), Eval::p1(x, m)], m)
        }
    }

    fn w_smallk(&self, x: &State4) -> Eval {
        let m = &self.model;
        let v = &self.values;
        let pot = m.potential();
        // Q + <a, y> = q0 + (p0 + p1)/gamma
        let q_hat = Eval::q0(x, m) + (Eval::p0(x, m) + Eval::p1(x, m)) * (1.0 / m.gamma);
        let v1 = q_hat.map_fn(|u| [pot.v(u), pot.dv(u), pot.d2v(u)]);
        (self.s_form(x) * v.beta0).exp() + (v1 * (v.beta0 * v.lambda)).exp()
    }
}

impl TestField for Field {
    fn eval(&self, x: &State4) -> Eval {
        let m = &self.model;
        let v = &self.values;
        match self.family {
            Family::TildeH0 => self.tilde_h0(x),
            Family::H0Cutoff => self.h0_cutoff(x),
            Family::VK2 => self.v_k2(x),
            Family::VKlt2 => self.v_klt2(x),
            Family::WTail => {
                let vv = self.v_k2(x);
                let xt = self.sols().xi_tilde.eval_second(x, m);
                let z = v.zeta;
                vv.powf(z + 1.0) - vv.powf(z) * xt * (m.gamma * z * (z + 1.0) * m.t_hot)
            }
            Family::W1Nonexist => {
                let h = Eval::energy(x, m);
                h.powf(-v.zeta) * (h - self.h0_cutoff(x) * (1.0 + v.delta))
            }
            Family::WExpFrac => (self.v_klt2(x).powf(v.kappa) * v.delta).exp(),
            Family::ExpH => (Eval::energy(x, m) * v.beta0).exp(),
            Family::HatHSmallk => (self.hat_h(x).powf(v.delta) * v.beta0).exp(),
            Family::WSmallk => self.w_smallk(x),
            Family::SForm => self.s_form(x),
            Family::Energy => Eval::energy(x, m),
            Family::Constant => Eval::constant(v.c, m),
        }
    }

    fn describe(&self) -> String {
        let v = &self.values;
        let args = match self.family {
            Family::TildeH0 => format!("theta={}", v.theta),
            Family::H0Cutoff => format!("theta={}, E={}", v.theta, v.e_cut),
            Family::VK2 => format!("theta={}, c={}, E={}", v.theta, v.c, v.e_cut),
            Family::VKlt2 => format!("theta={}, eta={}", v.theta, v.eta),
            Family::WTail => format!("theta={}, c={}, E={}, zeta={}", v.theta, v.c, v.e_cut, v.zeta),
            Family::W1Nonexist => format!("theta={}, E={}, zeta={}, delta={}", v.theta, v.e_cut, v.zeta, v.delta),
            Family::WExpFrac => format!("theta={}, eta={}, delta={}, kappa={}", v.theta, v.eta, v.delta, v.kappa),
            Family::ExpH => format!("beta={}", v.beta0),
            Family::HatHSmallk => {
                format!("beta0={}, delta={}, xi={}, eps={}, sigma={}", v.beta0, v.delta, v.xi, v.eps, v.sigma)
            }
            Family::WSmallk => format!("beta0={}, lambda={}, sigma={}", v.beta0, v.lambda, v.sigma),
            Family::SForm | Family::Energy => String::new(),
            Family::Constant => format!("{}", v.c),
        };
        format!("{}({})", self.family, args)
    }
}

/// A field given by a closure, for ad hoc checks.
pub struct FnField<F> {
    name: String,
    f: F,
}

impl<F: Fn(&State4) -> Eval + Sync> FnField<F> {
    pub fn new(name: impl Into<String>, f: F) -> Self {
        FnField { name: name.into(), f }
    }
}

impl<F: Fn(&State4) -> Eval + Sync> TestField for FnField<F> {
    fn eval(&self, x: &State4) -> Eval {
        (self.f)(x)
    }

    fn describe(&self) -> String {
        self.name.clone()
    }
}
