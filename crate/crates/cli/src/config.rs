//! Experiment configuration: one level of TOML sections, unknown keys
//! rejected, every default filled in before anything runs.

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use heatbath::lyapunov::{Family, FieldParams, Predicate, SamplerKind, ShellSpec, TestFunctionSpec, WonhamSpec};
use heatbath::model::{ModelParams, Smoothing, State4};
use heatbath::reduced::ReducedParams;
use heatbath::sim::{EnsembleConfig, IntegratorConfig, Scheme};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Constants,
    PhaseDiagram,
    Simulate,
    Tails,
    Convergence,
    Verify,
    Reduced,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Constants => "constants",
            Command::PhaseDiagram => "phase-diagram",
            Command::Simulate => "simulate",
            Command::Tails => "tails",
            Command::Convergence => "convergence",
            Command::Verify => "verify",
            Command::Reduced => "reduced",
        }
    }

    fn sections(self) -> &'static [&'static str] {
        match self {
            Command::Constants => &["model", "constants"],
            Command::PhaseDiagram => &["model", "grid", "constants"],
            Command::Simulate => &["model", "integrator", "ensemble", "simulate"],
            Command::Tails => &["model", "integrator", "ensemble", "tails", "constants"],
            Command::Convergence => &["model", "integrator", "ensemble", "convergence"],
            Command::Verify => &["model", "verify", "field", "predicate", "shells", "wonham", "w1", "w2", "weight"],
            Command::Reduced => &["reduced"],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub integrator: Option<IntegratorSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constants: Option<ConstantsSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tails: Option<TailsSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifySection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<FieldSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predicate: Option<Predicate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shells: Option<ShellSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wonham: Option<WonhamSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w1: Option<FieldSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w2: Option<FieldSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight: Option<FieldSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reduced: Option<ReducedSection>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub alpha: f64,
    pub gamma: f64,
    pub t_cold: f64,
    pub t_hot: f64,
    pub k: f64,
    /// Pure power for `k >= 1`, regularised below when unset.
    pub smoothing: Option<Smoothing>,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection { alpha: 1.0, gamma: 1.0, t_cold: 1.0, t_hot: 0.3, k: 2.0, smoothing: None }
    }
}

impl ModelSection {
    pub fn params(&self) -> Result<ModelParams> {
        let s = self.smoothing.expect("smoothing resolved");
        Ok(ModelParams::new(self.alpha, self.gamma, self.t_cold, self.t_hot, self.k, s)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorSection {
    pub scheme: Scheme,
    pub dt: f64,
    pub substep_cap: f64,
    pub max_halvings: u32,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        let d = IntegratorConfig::default();
        IntegratorSection { scheme: d.scheme, dt: d.dt, substep_cap: d.substep_cap, max_halvings: d.max_halvings }
    }
}

impl IntegratorSection {
    pub fn config(&self) -> IntegratorConfig {
        IntegratorConfig { dt: self.dt, scheme: self.scheme, substep_cap: self.substep_cap, max_halvings: self.max_halvings }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSection {
    pub n_paths: usize,
    pub t_end: f64,
    pub record_every: f64,
    /// `(q0, q1, p0, p1)`
    pub x0: [f64; 4],
}

impl Default for EnsembleSection {
    fn default() -> Self {
        EnsembleSection { n_paths: 512, t_end: 200.0, record_every: 2.0, x0: [1.0, 0.0, 0.0, 0.0] }
    }
}

impl EnsembleSection {
    pub fn config(&self, seed: u64) -> EnsembleConfig {
        let [q0, q1, p0, p1] = self.x0;
        EnsembleConfig { n_paths: self.n_paths, t_end: self.t_end, record_every: self.record_every, seed, x0: State4::new(q0, q1, p0, p1) }
    }

    fn validate(&self, dt: f64) -> Result<()> {
        if self.n_paths == 0 {
            bail!("ensemble.n_paths must be positive");
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            bail!("ensemble.t_end must be positive, got {}", self.t_end);
        }
        if !(self.record_every >= dt && self.record_every <= self.t_end) {
            bail!("ensemble.record_every must lie in [dt, t_end], got {}", self.record_every);
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            bail!("ensemble.x0 must be finite");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstantsSection {
    /// Orbit nodes used for the Poisson solutions.
    pub nodes: usize,
}

impl Default for ConstantsSection {
    fn default() -> Self {
        ConstantsSection { nodes: 4096 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub ks: Vec<f64>,
    /// Absolute values of `T_inf`.
    pub t_hots: Vec<f64>,
    /// Values of `T_inf` in units of `alpha^2 C_hat`.
    pub t_hot_ratios: Vec<f64>,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection { ks: vec![0.4, 0.75, 1.0, 1.2, 1.5, 2.0, 3.0], t_hots: vec![], t_hot_ratios: vec![0.3, 1.0, 2.0] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    /// Orders `a` of the `E H^a` envelope checks.
    pub moment_orders: Vec<f64>,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection { moment_orders: vec![1.0] }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TailsSection {
    /// Records before this time are discarded.
    pub burn_in: f64,
    pub top_fraction: f64,
}

impl Default for TailsSection {
    fn default() -> Self {
        TailsSection { burn_in: 100.0, top_fraction: 0.01 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceSection {
    /// Run time of the two reference ensembles.
    pub reference_time: f64,
    pub bins: usize,
    /// Points with `tv <= floor_factor * floor` are left out of the fit.
    pub floor_factor: f64,
    /// Points with `tv >= fit_max` are left out of the fit.
    pub fit_max: f64,
}

impl Default for ConvergenceSection {
    fn default() -> Self {
        ConvergenceSection { reference_time: 40.0, bins: 20, floor_factor: 3.0, fit_max: 0.5 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifyMode {
    Sign,
    Wonham,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    pub mode: VerifyMode,
    /// Oscillator shells for `k >= 1`, centre of mass below, when unset.
    pub sampler: Option<SamplerKind>,
    /// Orbit nodes for the centred solutions.
    pub table_size: usize,
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection { mode: VerifyMode::Sign, sampler: None, table_size: 1024 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSection {
    pub family: Family,
    pub theta: Option<f64>,
    pub c: Option<f64>,
    pub e_cut: Option<f64>,
    pub zeta: Option<f64>,
    pub delta: Option<f64>,
    pub kappa: Option<f64>,
    pub eps: Option<f64>,
    pub xi: Option<f64>,
    pub beta0: Option<f64>,
    pub lambda: Option<f64>,
    pub eta: Option<f64>,
    pub sigma: Option<f64>,
}

impl FieldSection {
    pub fn spec(&self) -> TestFunctionSpec {
        TestFunctionSpec {
            family: self.family,
            params: FieldParams {
                theta: self.theta,
                c: self.c,
                e_cut: self.e_cut,
                zeta: self.zeta,
                delta: self.delta,
                kappa: self.kappa,
                eps: self.eps,
                xi: self.xi,
                beta0: self.beta0,
                lambda: self.lambda,
                eta: self.eta,
                sigma: self.sigma,
            },
        }
    }

    fn of_family(family: Family) -> Self {
        FieldSection {
            family,
            theta: None,
            c: None,
            e_cut: None,
            zeta: None,
            delta: None,
            kappa: None,
            eps: None,
            xi: None,
            beta0: None,
            lambda: None,
            eta: None,
            sigma: None,
        }
    }

    /// Validates and writes every default back, so the echoed configuration
    /// is explicit.
    fn resolve(&self, name: &str, model: &ModelParams) -> Result<Self> {
        let v = self.spec().validate(model).with_context(|| format!("[{name}]"))?;
        Ok(FieldSection {
            family: self.family,
            theta: Some(v.theta),
            c: Some(v.c),
            e_cut: Some(v.e_cut),
            zeta: Some(v.zeta),
            delta: Some(v.delta),
            kappa: Some(v.kappa),
            eps: Some(v.eps),
            xi: Some(v.xi),
            beta0: Some(v.beta0),
            lambda: Some(v.lambda),
            eta: Some(v.eta),
            sigma: Some(v.sigma),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WonhamSection {
    pub ray: [f64; 4],
    pub ray_steps: usize,
    pub ray_growth: f64,
    pub ratio_r0: f64,
    pub ratio_width: f64,
    pub ratio_growth: f64,
    pub ratio_shells: usize,
    pub ratio_samples: usize,
}

impl Default for WonhamSection {
    fn default() -> Self {
        let d = WonhamSpec::default();
        WonhamSection {
            ray: d.ray.to_array(),
            ray_steps: d.ray_steps,
            ray_growth: d.ray_growth,
            ratio_r0: d.ratio_r0,
            ratio_width: d.ratio_width,
            ratio_growth: d.ratio_growth,
            ratio_shells: d.ratio_shells,
            ratio_samples: d.ratio_samples,
        }
    }
}

impl WonhamSection {
    pub fn spec(&self, drift: ShellSpec) -> WonhamSpec {
        let [q0, q1, p0, p1] = self.ray;
        WonhamSpec {
            ray: State4::new(q0, q1, p0, p1),
            ray_steps: self.ray_steps,
            ray_growth: self.ray_growth,
            ratio_r0: self.ratio_r0,
            ratio_width: self.ratio_width,
            ratio_growth: self.ratio_growth,
            ratio_shells: self.ratio_shells,
            ratio_samples: self.ratio_samples,
            drift,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReducedSection {
    pub sigma: f64,
    pub eta: f64,
    pub simulate: bool,
    pub dt: f64,
    pub burn_in: f64,
    /// Time between records along a path.
    pub every: f64,
    pub per_path: usize,
    pub n_paths: usize,
    pub top_fraction: f64,
    /// The density table covers `[1, x_max]`.
    pub x_max: f64,
    pub points: usize,
}

impl Default for ReducedSection {
    fn default() -> Self {
        ReducedSection {
            sigma: -0.5,
            eta: 1.0,
            simulate: true,
            dt: 0.01,
            burn_in: 100.0,
            every: 5.0,
            per_path: 50,
            n_paths: 2000,
            top_fraction: 0.05,
            x_max: 50.0,
            points: 200,
        }
    }
}

impl ReducedSection {
    pub fn params(&self) -> Result<ReducedParams> {
        Ok(ReducedParams::new(self.sigma, self.eta)?)
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(anyhow!("{name} must be positive and finite, got {v}"))
    }
}

fn fraction(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(anyhow!("{name} must lie in (0, 1), got {v}"))
    }
}

fn check_predicate(p: &Predicate) -> Result<()> {
    let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
    let ok = match *p {
        Predicate::AtMost { bound }
        | Predicate::Below { bound }
        | Predicate::AtLeast { bound }
        | Predicate::RatioAtMost { bound } => finite(&[bound]),
        Predicate::FracExpDrift { c, delta, kappa } => finite(&[c]) && delta > 0.0 && kappa > 0.0,
        Predicate::LogDrift { c, power } => finite(&[c, power]),
    };
    if !ok {
        bail!("invalid predicate {}", p.describe());
    }
    Ok(())
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    fn present(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        let mut add = |name: &'static str, set: bool| {
            if set {
                v.push(name);
            }
        };
        add("model", self.model.is_some());
        add("integrator", self.integrator.is_some());
        add("ensemble", self.ensemble.is_some());
        add("constants", self.constants.is_some());
        add("grid", self.grid.is_some());
        add("simulate", self.simulate.is_some());
        add("tails", self.tails.is_some());
        add("convergence", self.convergence.is_some());
        add("verify", self.verify.is_some());
        add("field", self.field.is_some());
        add("predicate", self.predicate.is_some());
        add("shells", self.shells.is_some());
        add("wonham", self.wonham.is_some());
        add("w1", self.w1.is_some());
        add("w2", self.w2.is_some());
        add("weight", self.weight.is_some());
        add("reduced", self.reduced.is_some());
        v
    }

    /// Fills in every default the command reads and validates the result.
    /// Sections the command does not read are an error.
    pub fn resolve(&self, cmd: Command) -> Result<Config> {
        let allowed = cmd.sections();
        for s in self.present() {
            if !allowed.contains(&s) {
                bail!("section [{s}] is not used by '{}'", cmd.name());
            }
        }
        let mut out = Config { seed: Some(self.seed.unwrap_or(1)), ..Config::default() };
        let model = if allowed.contains(&"model") {
            let mut m = self.model.unwrap_or_default();
            if m.smoothing.is_none() {
                m.smoothing = Some(if m.k >= 1.0 { Smoothing::Pure } else { Smoothing::Regularized });
            }
            out.model = Some(m);
            // the phase diagram only reads alpha, gamma and t_cold
            let p = if cmd == Command::PhaseDiagram { ModelSection { k: 1.0, t_hot: 1.0, ..m } } else { m };
            Some(p.params().context("[model]")?)
        } else {
            None
        };
        match cmd {
            Command::Constants => {
                let c = self.constants.unwrap_or_default();
                if c.nodes < 64 {
                    bail!("constants.nodes must be at least 64, got {}", c.nodes);
                }
                out.constants = Some(c);
            }
            Command::PhaseDiagram => {
                let c = self.constants.unwrap_or_default();
                if c.nodes < 64 {
                    bail!("constants.nodes must be at least 64, got {}", c.nodes);
                }
                out.constants = Some(c);
                let g = self.grid.clone().unwrap_or_default();
                if g.ks.is_empty() || g.t_hots.len() + g.t_hot_ratios.len() == 0 {
                    bail!("grid needs at least one k and one temperature");
                }
                if g.ks.iter().any(|k| !k.is_finite()) {
                    bail!("grid.ks must be finite");
                }
                for t in g.t_hots.iter().chain(&g.t_hot_ratios) {
                    positive("grid temperature", *t)?;
                }
                out.grid = Some(g);
            }
            Command::Simulate | Command::Tails | Command::Convergence => {
                let i = self.integrator.unwrap_or_default();
                i.config().validate().context("[integrator]")?;
                let e = self.ensemble.unwrap_or_default();
                e.validate(i.dt)?;
                out.integrator = Some(i);
                out.ensemble = Some(e);
                match cmd {
                    Command::Simulate => {
                        let s = self.simulate.clone().unwrap_or_default();
                        for a in &s.moment_orders {
                            positive("simulate.moment_orders", *a)?;
                        }
                        out.simulate = Some(s);
                    }
                    Command::Tails => {
                        let t = self.tails.unwrap_or_default();
                        fraction("tails.top_fraction", t.top_fraction)?;
                        if !(t.burn_in >= 0.0 && t.burn_in < e.t_end) {
                            bail!("tails.burn_in must lie in [0, t_end), got {}", t.burn_in);
                        }
                        let c = self.constants.unwrap_or_default();
                        if c.nodes < 64 {
                            bail!("constants.nodes must be at least 64, got {}", c.nodes);
                        }
                        out.tails = Some(t);
                        out.constants = Some(c);
                    }
                    _ => {
                        let c = self.convergence.unwrap_or_default();
                        positive("convergence.reference_time", c.reference_time)?;
                        positive("convergence.floor_factor", c.floor_factor)?;
                        fraction("convergence.fit_max", c.fit_max)?;
                        if c.bins < 2 {
                            bail!("convergence.bins must be at least 2");
                        }
                        out.convergence = Some(c);
                    }
                }
            }
            Command::Verify => {
                let model = model.expect("verify reads [model]");
                let v = self.verify.unwrap_or_default();
                if v.table_size < 64 {
                    bail!("verify.table_size must be at least 64, got {}", v.table_size);
                }
                if v.sampler == Some(SamplerKind::Oscillator) && model.k < 1.0 {
                    bail!("the oscillator sampler needs k >= 1");
                }
                out.verify = Some(v);
                let shells = self.shells.unwrap_or_default();
                shells.validate().context("[shells]")?;
                out.shells = Some(shells);
                match v.mode {
                    VerifyMode::Sign => {
                        for (s, set) in [("wonham", self.wonham.is_some()), ("w1", self.w1.is_some()), ("w2", self.w2.is_some()), ("weight", self.weight.is_some())] {
                            if set {
                                bail!("section [{s}] is only read in wonham mode");
                            }
                        }
                        let f = self.field.ok_or_else(|| anyhow!("sign mode needs a [field] section"))?;
                        out.field = Some(f.resolve("field", &model)?);
                        let p = self.predicate.ok_or_else(|| anyhow!("sign mode needs a [predicate] section"))?;
                        check_predicate(&p)?;
                        out.predicate = Some(p);
                    }
                    VerifyMode::Wonham => {
                        for (s, set) in [("field", self.field.is_some()), ("predicate", self.predicate.is_some())] {
                            if set {
                                bail!("section [{s}] is only read in sign mode");
                            }
                        }
                        let w1 = self.w1.ok_or_else(|| anyhow!("wonham mode needs a [w1] section"))?;
                        let w2 = self.w2.unwrap_or(FieldSection::of_family(Family::Energy));
                        let weight = self.weight.unwrap_or(FieldSection {
                            c: Some(model.gamma * (model.t_cold + model.t_hot)),
                            ..FieldSection::of_family(Family::Constant)
                        });
                        out.w1 = Some(w1.resolve("w1", &model)?);
                        out.w2 = Some(w2.resolve("w2", &model)?);
                        out.weight = Some(weight.resolve("weight", &model)?);
                        let w = self.wonham.unwrap_or_default();
                        w.spec(shells).validate().context("[wonham]")?;
                        out.wonham = Some(w);
                    }
                }
            }
            Command::Reduced => {
                let r = self.reduced.unwrap_or_default();
                r.params().context("[reduced]")?;
                positive("reduced.dt", r.dt)?;
                positive("reduced.x_max", r.x_max - 1.0).context("reduced.x_max must exceed 1")?;
                fraction("reduced.top_fraction", r.top_fraction)?;
                if !(r.burn_in >= 0.0 && r.every >= 0.0) || r.per_path == 0 || r.n_paths == 0 || r.points < 2 {
                    bail!("reduced sampling needs burn_in, every >= 0, per_path, n_paths >= 1 and points >= 2");
                }
                out.reduced = Some(r);
            }
        }
        Ok(out)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(1)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}

/// Overlays `top` on `base` one section at a time; keys in `top` win.
pub fn merge(base: &mut toml::Table, top: toml::Table) {
    for (key, value) in top {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) if same_variant(b, &t) => {
                for (k, v) in t {
                    b.insert(k, v);
                }
            }
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

// a [predicate] of another kind or a field of another family replaces the
// whole section, since its keys differ
fn same_variant(a: &toml::Table, b: &toml::Table) -> bool {
    ["kind", "family"].iter().all(|k| match (a.get(*k), b.get(*k)) {
        (Some(x), Some(y)) => x == y,
        _ => true,
    })
}
