//! Named configurations. A user config is layered on top of a preset.

use anyhow::{bail, Result};

use crate::config::Command;

pub struct Preset {
    pub name: &'static str,
    pub command: Command,
    pub about: &'static str,
    pub toml: &'static str,
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "positive",
        command: Command::Verify,
        about: "k = 2 below the critical temperature: LV < -0.01 for V_k2",
        toml: r#"
[model]
k = 2.0
t_hot = 0.3

[field]
family = "V_k2"

[predicate]
kind = "below"
bound = -0.01

[shells]
r0 = 1e8
n = 10000
"#,
    },
    Preset {
        name: "positive-sabotaged",
        command: Command::Verify,
        about: "the positive preset with a predicate V_k2 cannot satisfy",
        toml: r#"
[model]
k = 2.0
t_hot = 0.3

[field]
family = "V_k2"

[predicate]
kind = "below"
bound = -1e3

[shells]
r0 = 1e8
n = 10000
"#,
    },
    Preset {
        name: "negative",
        command: Command::Verify,
        about: "k = 2 at twice the critical temperature: Wonham pair (W1_nonexist, H)",
        toml: r#"
[model]
k = 2.0
t_hot = 1.2709398

[verify]
mode = "wonham"

[w1]
family = "W1_nonexist"

[w2]
family = "energy"

[shells]
r0 = 1e8
n = 10000
"#,
    },
    Preset {
        name: "negative-sabotaged",
        command: Command::Verify,
        about: "control pair (H, H), which cannot certify non-existence",
        toml: r#"
[model]
k = 2.0
t_hot = 1.2709398

[verify]
mode = "wonham"

[w1]
family = "energy"

[w2]
family = "energy"

[shells]
r0 = 1e8
n = 10000
"#,
    },
    Preset {
        name: "fractional",
        command: Command::Verify,
        about: "k = 1.5: W_exp_frac against its stretched-exponential drift",
        toml: r#"
[model]
k = 1.5
t_hot = 1.0

[field]
family = "W_exp_frac"
theta = 0.4
delta = 0.05

[predicate]
kind = "frac_exp_drift"
c = 0.01
delta = 0.05
kappa = 0.3333333333333333

[shells]
r0 = 1e6
n = 10000
"#,
    },
    Preset {
        name: "small-k",
        command: Command::Verify,
        about: "k = 0.75: negative drift of hatH_smallk",
        toml: r#"
[model]
k = 0.75
t_hot = 1.0

[verify]
sampler = "centre_of_mass"

[field]
family = "hatH_smallk"

[predicate]
kind = "ratio_at_most"
bound = -0.001

[shells]
r0 = 1e3
growth = 4.0
n = 10000
"#,
    },
    Preset {
        name: "weak-pinning",
        command: Command::Verify,
        about: "k = 0.4: W_smallk with LW <= -c (ln W)^(2-1/k) W",
        toml: r#"
[model]
k = 0.4
t_hot = 1.0

[verify]
sampler = "centre_of_mass"

[field]
family = "W_smallk"

[predicate]
kind = "log_drift"
c = 0.001
power = -0.5

[shells]
r0 = 1e3
growth = 4.0
n = 10000
"#,
    },
    Preset {
        name: "harmonic",
        command: Command::Verify,
        about: "k = 1: the Gram form has a uniformly negative relative drift",
        toml: r#"
[model]
k = 1.0
t_hot = 1.0

[field]
family = "S_form"

[predicate]
kind = "ratio_at_most"
bound = -0.1

[shells]
r0 = 10.0
n = 2000
max_shells = 12
"#,
    },
    Preset {
        name: "threshold-below",
        command: Command::Simulate,
        about: "k = 2 at 0.3 times the critical temperature",
        toml: r#"
seed = 1

[model]
k = 2.0
t_hot = 0.19064097

[ensemble]
n_paths = 512
t_end = 200.0
record_every = 2.0
"#,
    },
    Preset {
        name: "threshold-above",
        command: Command::Simulate,
        about: "k = 2 at twice the critical temperature",
        toml: r#"
seed = 1

[model]
k = 2.0
t_hot = 1.2709398

[ensemble]
n_paths = 512
t_end = 200.0
record_every = 2.0
"#,
    },
    Preset {
        name: "harmonic-convergence",
        command: Command::Convergence,
        about: "k = 1 relaxation from a displaced state",
        toml: r#"
[model]
k = 1.0
t_hot = 0.5

[ensemble]
n_paths = 10000
t_end = 15.0
record_every = 0.25
x0 = [3.0, -3.0, 0.0, 0.0]
"#,
    },
    Preset {
        name: "critical-tails",
        command: Command::Tails,
        about: "k = 2 at T_inf = 0.3, where the tail index is about 0.84 (slow)",
        toml: r#"
[model]
k = 2.0
t_hot = 0.3

[ensemble]
n_paths = 2000
t_end = 5000.0
record_every = 10.0

[tails]
burn_in = 1000.0
top_fraction = 0.01
"#,
    },
];

pub fn find(name: &str, command: Command) -> Result<&'static Preset> {
    let Some(p) = PRESETS.iter().find(|p| p.name == name) else {
        let names: Vec<&str> = PRESETS.iter().map(|p| p.name).collect();
        bail!("unknown preset '{name}', available: {}", names.join(", "));
    };
    if p.command != command {
        bail!("preset '{name}' is for '{}', not '{}'", p.command.name(), command.name());
    }
    Ok(p)
}
