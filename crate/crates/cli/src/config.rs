//! Line-oriented run configuration.
//!
//! Each non-blank line is `section.key = value`; `#` starts a comment. Every
//! key is optional and falls back to its default. Sections: `grid`, `params`,
//! `stepping`, `initial`, `output`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use ferrosim::{Grid, Params, Scenario, Splitting, StepOptions};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("line {line}: `{key}`: {message}")]
    Value { line: usize, key: String, message: String },
    #[error("`{key}` must satisfy {constraint} (got {value})")]
    Invalid { key: String, constraint: String, value: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteppingConfig {
    pub h: f64,
    pub n_steps: usize,
    pub picard_tol: f64,
    pub picard_max: usize,
    pub newton_tol: f64,
    pub newton_max: usize,
    pub splitting: Splitting,
    pub strict_energy: bool,
    pub energy_rel_tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub out_dir: PathBuf,
    /// Field dump interval in steps; 0 disables dumps.
    pub dump_every: usize,
    pub timeseries: String,
    /// Exponent of the `M` norm recorded as `m_lr`.
    pub norm_exponent: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub grid: GridConfig,
    pub params: Params<f64>,
    pub stepping: SteppingConfig,
    pub initial: Scenario<f64>,
    pub output: OutputConfig,
}

impl Default for Config {
    fn default() -> Self {
        let s = StepOptions::<f64>::default();
        Config {
            grid: GridConfig { nx: 64, ny: 64, lx: 1.0, ly: 1.0 },
            params: Params::default(),
            stepping: SteppingConfig {
                h: s.h,
                n_steps: 200,
                picard_tol: s.picard_tol,
                picard_max: s.picard_max,
                newton_tol: s.newton_tol,
                newton_max: s.newton_max,
                splitting: s.splitting,
                strict_energy: s.strict_energy,
                energy_rel_tol: s.energy_rel_tol,
            },
            initial: Scenario::MagneticStripes { width: 0.03, heavy_on_top: true, bands: 2, m_amp: 0.1 },
            output: OutputConfig { out_dir: PathBuf::from("out"), dump_every: 50, timeseries: "timeseries.csv".into(), norm_exponent: 8.0 },
        }
    }
}

impl Config {
    pub fn grid(&self) -> Grid<f64> {
        Grid::new(self.grid.nx, self.grid.ny, self.grid.lx, self.grid.ly).expect("validated grid")
    }

    pub fn step_options(&self) -> StepOptions<f64> {
        let s = &self.stepping;
        StepOptions {
            h: s.h,
            picard_tol: s.picard_tol,
            picard_max: s.picard_max,
            newton_tol: s.newton_tol,
            newton_max: s.newton_max,
            splitting: s.splitting,
            strict_energy: s.strict_energy,
            energy_rel_tol: s.energy_rel_tol,
            linear: StepOptions::<f64>::default().linear,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, constraint: &str, value: String| Err(ConfigError::Invalid { key: key.into(), constraint: constraint.into(), value });
        let g = &self.grid;
        if g.nx < 2 {
            return bad("grid.nx", ">= 2", g.nx.to_string());
        }
        if g.ny < 2 {
            return bad("grid.ny", ">= 2", g.ny.to_string());
        }
        if !(g.lx > 0.0 && g.lx.is_finite()) {
            return bad("grid.lx", "> 0", g.lx.to_string());
        }
        if !(g.ly > 0.0 && g.ly.is_finite()) {
            return bad("grid.ly", "> 0", g.ly.to_string());
        }
        if let Err(ferrosim::materials::MaterialError::Invalid { name, constraint, value }) = self.params.validate() {
            return bad(&format!("params.{name}"), constraint, value.to_string());
        }
        let s = &self.stepping;
        for (key, v) in [("h", s.h), ("picard_tol", s.picard_tol), ("newton_tol", s.newton_tol), ("energy_rel_tol", s.energy_rel_tol)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(&format!("stepping.{key}"), "> 0", v.to_string());
            }
        }
        for (key, v) in [("n_steps", s.n_steps), ("picard_max", s.picard_max), ("newton_max", s.newton_max)] {
            if v == 0 {
                return bad(&format!("stepping.{key}"), ">= 1", "0".into());
            }
        }
        let limit = 1.0 - ferrosim::EPS_SAT;
        match self.initial {
            Scenario::UniformEquilibrium { c, m } => {
                if !(c.abs() <= limit) {
                    return bad("initial.c", "|c| <= 1 - 1e-12", c.to_string());
                }
                if m.iter().any(|x| !x.is_finite()) {
                    return bad("initial.m", "finite", format!("{m:?}"));
                }
            }
            Scenario::Stratified { width, .. } | Scenario::MagneticStripes { width, .. } => {
                if !(width > 0.0 && width.is_finite()) {
                    return bad("initial.width", "> 0", width.to_string());
                }
                if let Scenario::MagneticStripes { m_amp, .. } = self.initial {
                    if !m_amp.is_finite() {
                        return bad("initial.m_amp", "finite", m_amp.to_string());
                    }
                }
            }
            Scenario::RandomPerturbation { c, amplitude, modes, .. } => {
                if !(c.abs() <= limit) {
                    return bad("initial.c", "|c| <= 1 - 1e-12", c.to_string());
                }
                if !(amplitude >= 0.0 && amplitude.is_finite()) {
                    return bad("initial.amplitude", ">= 0", amplitude.to_string());
                }
                if modes == 0 {
                    return bad("initial.modes", ">= 1", "0".into());
                }
            }
        }
        let o = &self.output;
        if o.timeseries.is_empty() || o.timeseries.contains(['/', '\\']) {
            return bad("output.timeseries", "a plain file name", o.timeseries.clone());
        }
        if !(o.norm_exponent > 6.0 && o.norm_exponent.is_finite()) {
            return bad("output.norm_exponent", "> 6", o.norm_exponent.to_string());
        }
        Ok(())
    }

    /// Canonical text listing every key; parsing it gives back `self`.
    pub fn normalize(&self) -> String {
        let mut out = String::new();
        let g = &self.grid;
        let p = &self.params;
        let s = &self.stepping;
        let mut kv = |k: &str, v: String| writeln!(out, "{k} = {v}").expect("write to string");
        kv("grid.nx", g.nx.to_string());
        kv("grid.ny", g.ny.to_string());
        kv("grid.lx", num(g.lx));
        kv("grid.ly", num(g.ly));
        for (k, v) in params_fields(p) {
            kv(&format!("params.{k}"), num(v));
        }
        kv("stepping.h", num(s.h));
        kv("stepping.n_steps", s.n_steps.to_string());
        kv("stepping.picard_tol", num(s.picard_tol));
        kv("stepping.picard_max", s.picard_max.to_string());
        kv("stepping.newton_tol", num(s.newton_tol));
        kv("stepping.newton_max", s.newton_max.to_string());
        kv("stepping.splitting", s.splitting.name().into());
        kv("stepping.strict_energy", s.strict_energy.to_string());
        kv("stepping.energy_rel_tol", num(s.energy_rel_tol));
        kv("initial.scenario", self.initial.name().into());
        match self.initial {
            Scenario::UniformEquilibrium { c, m } => {
                kv("initial.c", num(c));
                kv("initial.m1", num(m[0]));
                kv("initial.m2", num(m[1]));
                kv("initial.m3", num(m[2]));
            }
            Scenario::Stratified { width, heavy_on_top } => {
                kv("initial.width", num(width));
                kv("initial.heavy_on_top", heavy_on_top.to_string());
            }
            Scenario::MagneticStripes { width, heavy_on_top, bands, m_amp } => {
                kv("initial.width", num(width));
                kv("initial.heavy_on_top", heavy_on_top.to_string());
                kv("initial.bands", bands.to_string());
                kv("initial.m_amp", num(m_amp));
            }
            Scenario::RandomPerturbation { seed, c, amplitude, modes } => {
                kv("initial.seed", seed.to_string());
                kv("initial.c", num(c));
                kv("initial.amplitude", num(amplitude));
                kv("initial.modes", modes.to_string());
            }
        }
        let o = &self.output;
        kv("output.out_dir", o.out_dir.display().to_string());
        kv("output.dump_every", o.dump_every.to_string());
        kv("output.timeseries", o.timeseries.clone());
        kv("output.norm_exponent", num(o.norm_exponent));
        out
    }
}

/// Shortest text that parses back to the same `f64`.
fn num(x: f64) -> String {
    format!("{x:?}")
}

fn params_fields(p: &Params<f64>) -> [(&'static str, f64); 12] {
    [
        ("eta", p.eta),
        ("alpha", p.alpha),
        ("a", p.a),
        ("b", p.b),
        ("kappa", p.kappa),
        ("xi1", p.xi1),
        ("xi2", p.xi2),
        ("eta_blend", p.eta_blend),
        ("nu1", p.nu1),
        ("nu2", p.nu2),
        ("rho1", p.rho1),
        ("rho2", p.rho2),
    ]
}

struct Entry {
    line: usize,
    value: String,
    used: bool,
}

struct Entries(BTreeMap<String, Entry>);

impl Entries {
    fn take<V>(&mut self, key: &str, default: V, parse: impl Fn(&str) -> Result<V, String>) -> Result<V, ConfigError> {
        match self.0.get_mut(key) {
            None => Ok(default),
            Some(e) => {
                e.used = true;
                parse(&e.value).map_err(|message| ConfigError::Value { line: e.line, key: key.into(), message })
            }
        }
    }

    fn f64(&mut self, key: &str, default: f64) -> Result<f64, ConfigError> {
        self.take(key, default, |s| s.parse::<f64>().map_err(|_| format!("expected a number, found `{s}`")))
    }

    fn usize(&mut self, key: &str, default: usize) -> Result<usize, ConfigError> {
        self.take(key, default, |s| s.parse::<usize>().map_err(|_| format!("expected a non-negative integer, found `{s}`")))
    }

    fn u64(&mut self, key: &str, default: u64) -> Result<u64, ConfigError> {
        self.take(key, default, |s| s.parse::<u64>().map_err(|_| format!("expected a non-negative integer, found `{s}`")))
    }

    fn bool(&mut self, key: &str, default: bool) -> Result<bool, ConfigError> {
        self.take(key, default, |s| match s {
            "true" => Ok(true),
            "false" => Ok(false),
            _ => Err(format!("expected `true` or `false`, found `{s}`")),
        })
    }

    fn string(&mut self, key: &str, default: &str) -> Result<String, ConfigError> {
        self.take(key, default.to_string(), |s| Ok(s.to_string()))
    }
}

pub fn parse_splitting(s: &str) -> Result<Splitting, String> {
    match s {
        "convex" => Ok(Splitting::Convex),
        "naive" => Ok(Splitting::Naive),
        _ => Err(format!("expected `convex` or `naive`, found `{s}`")),
    }
}

fn tokenize(text: &str) -> Result<Entries, ConfigError> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("");
        if content.trim().is_empty() {
            continue;
        }
        let syntax = |column: usize, message: &str| ConfigError::Syntax { line, column, message: message.into() };
        let Some(eq) = content.find('=') else {
            let col = content.len() - content.trim_start().len() + 1;
            return Err(syntax(col, "expected `section.key = value`"));
        };
        let key = content[..eq].trim();
        let value = content[eq + 1..].trim();
        let key_col = content.len() - content.trim_start().len() + 1;
        let valid_key = key.split_once('.').is_some_and(|(s, k)| {
            let ident = |x: &str| !x.is_empty() && x.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
            ident(s) && ident(k)
        });
        if !valid_key {
            return Err(syntax(key_col, "key must look like `section.key`"));
        }
        if value.is_empty() {
            return Err(syntax(eq + 2, "missing value"));
        }
        if let Some(prev) = map.get(key).map(|e: &Entry| e.line) {
            return Err(syntax(key_col, &format!("duplicate key `{key}` (first set on line {prev})")));
        }
        map.insert(key.to_string(), Entry { line, value: value.to_string(), used: false });
    }
    Ok(Entries(map))
}

/// Parses, applies defaults and validates.
pub fn parse_config(text: &str) -> Result<Config, ConfigError> {
    let mut e = tokenize(text)?;
    let d = Config::default();
    let grid = GridConfig {
        nx: e.usize("grid.nx", d.grid.nx)?,
        ny: e.usize("grid.ny", d.grid.ny)?,
        lx: e.f64("grid.lx", d.grid.lx)?,
        ly: e.f64("grid.ly", d.grid.ly)?,
    };
    let dp = d.params;
    let params = Params {
        eta: e.f64("params.eta", dp.eta)?,
        alpha: e.f64("params.alpha", dp.alpha)?,
        a: e.f64("params.a", dp.a)?,
        b: e.f64("params.b", dp.b)?,
        kappa: e.f64("params.kappa", dp.kappa)?,
        xi1: e.f64("params.xi1", dp.xi1)?,
        xi2: e.f64("params.xi2", dp.xi2)?,
        eta_blend: e.f64("params.eta_blend", dp.eta_blend)?,
        nu1: e.f64("params.nu1", dp.nu1)?,
        nu2: e.f64("params.nu2", dp.nu2)?,
        rho1: e.f64("params.rho1", dp.rho1)?,
        rho2: e.f64("params.rho2", dp.rho2)?,
    };
    let ds = d.stepping;
    let stepping = SteppingConfig {
        h: e.f64("stepping.h", ds.h)?,
        n_steps: e.usize("stepping.n_steps", ds.n_steps)?,
        picard_tol: e.f64("stepping.picard_tol", ds.picard_tol)?,
        picard_max: e.usize("stepping.picard_max", ds.picard_max)?,
        newton_tol: e.f64("stepping.newton_tol", ds.newton_tol)?,
        newton_max: e.usize("stepping.newton_max", ds.newton_max)?,
        splitting: e.take("stepping.splitting", ds.splitting, parse_splitting)?,
        strict_energy: e.bool("stepping.strict_energy", ds.strict_energy)?,
        energy_rel_tol: e.f64("stepping.energy_rel_tol", ds.energy_rel_tol)?,
    };
    let name = e.string("initial.scenario", d.initial.name())?;
    let initial = match name.as_str() {
        "uniform_equilibrium" => Scenario::UniformEquilibrium {
            c: e.f64("initial.c", 0.0)?,
            m: [e.f64("initial.m1", 1.0)?, e.f64("initial.m2", 0.0)?, e.f64("initial.m3", 0.0)?],
        },
        "stratified" => Scenario::Stratified { width: e.f64("initial.width", 0.03)?, heavy_on_top: e.bool("initial.heavy_on_top", true)? },
        "magnetic_stripes" => Scenario::MagneticStripes {
            width: e.f64("initial.width", 0.03)?,
            heavy_on_top: e.bool("initial.heavy_on_top", true)?,
            bands: e.usize("initial.bands", 2)?,
            m_amp: e.f64("initial.m_amp", 0.1)?,
        },
        "random_perturbation" => Scenario::RandomPerturbation {
            seed: e.u64("initial.seed", 0)?,
            c: e.f64("initial.c", 0.0)?,
            amplitude: e.f64("initial.amplitude", 0.1)?,
            modes: e.usize("initial.modes", 3)?,
        },
        other => {
            let line = e.0.get("initial.scenario").map_or(0, |x| x.line);
            return Err(ConfigError::Value {
                line,
                key: "initial.scenario".into(),
                message: format!(
                    "unknown scenario `{other}` (expected uniform_equilibrium, stratified, magnetic_stripes or random_perturbation)"
                ),
            });
        }
    };
    let output = OutputConfig {
        out_dir: PathBuf::from(e.string("output.out_dir", &d.output.out_dir.display().to_string())?),
        dump_every: e.usize("output.dump_every", d.output.dump_every)?,
        timeseries: e.string("output.timeseries", &d.output.timeseries)?,
        norm_exponent: e.f64("output.norm_exponent", d.output.norm_exponent)?,
    };
    if let Some((key, entry)) = e.0.iter().find(|(_, v)| !v.used) {
        let message = if key.starts_with("initial.") {
            format!("not a parameter of scenario `{name}`")
        } else {
            "unknown key".to_string()
        };
        return Err(ConfigError::Value { line: entry.line, key: key.clone(), message });
    }
    let cfg = Config { grid, params, stepping, initial, output };
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_defaults() {
        let cfg = parse_config("# nothing here\n\n").unwrap();
        assert_eq!(cfg, Config::default());
        assert_eq!(cfg.params, Params::default());
        assert_eq!(cfg.step_options(), StepOptions::default());
    }

    #[test]
    fn negative_alpha_is_rejected() {
        let err = parse_config("params.alpha = -1\n").unwrap_err();
        assert_eq!(err, ConfigError::Invalid { key: "params.alpha".into(), constraint: "> 0".into(), value: "-1".into() });
        assert!(err.to_string().contains("params.alpha") && err.to_string().contains("> 0"));
    }

    #[test]
    fn errors_carry_positions() {
        let e = parse_config("grid.nx = 8\n  oops\n").unwrap_err();
        assert_eq!(e, ConfigError::Syntax { line: 2, column: 3, message: "expected `section.key = value`".into() });
        assert!(matches!(parse_config("grid.nx = x\n"), Err(ConfigError::Value { line: 1, .. })));
        assert!(matches!(parse_config("grid.nx = 4\ngrid.nx = 5\n"), Err(ConfigError::Syntax { line: 2, .. })));
        assert!(matches!(parse_config("\n\ngrid.foo = 1\n"), Err(ConfigError::Value { line: 3, ref key, .. }) if key == "grid.foo"));
        assert!(matches!(parse_config("nx = 1\n"), Err(ConfigError::Syntax { line: 1, column: 1, .. })));
        assert!(matches!(parse_config("grid.nx =\n"), Err(ConfigError::Syntax { line: 1, .. })));
        // keys of a different scenario are not silently ignored
        let e = parse_config("initial.scenario = stratified\ninitial.seed = 3\n").unwrap_err();
        assert!(e.to_string().contains("initial.seed") && e.to_string().contains("stratified"));
        assert!(parse_config("initial.scenario = vortex\n").unwrap_err().to_string().contains("unknown scenario"));
        assert!(parse_config("grid.nx = 1\n").unwrap_err().to_string().contains("grid.nx"));
        assert!(parse_config("params.kappa = 0.5\n").unwrap_err().to_string().contains(">= b - a"));
        assert!(parse_config("stepping.splitting = explicit\n").is_err());
    }

    #[test]
    fn normalize_round_trips() {
        let text = "grid.nx = 16 # small\ngrid.ly = 2\nstepping.splitting = naive\nstepping.h = 0.1\n\
                    initial.scenario = random_perturbation\ninitial.seed = 42\ninitial.amplitude = 0.05\n\
                    output.out_dir = runs/a\nparams.rho2 = 5\n";
        let cfg = parse_config(text).unwrap();
        let norm = cfg.normalize();
        let again = parse_config(&norm).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.normalize(), norm);
        for sc in [
            "uniform_equilibrium\ninitial.c = 0.3",
            "stratified\ninitial.heavy_on_top = false",
            "magnetic_stripes\ninitial.bands = 4",
        ] {
            let cfg = parse_config(&format!("initial.scenario = {sc}\n")).unwrap();
            assert_eq!(parse_config(&cfg.normalize()).unwrap(), cfg);
        }
    }

    #[test]
    fn default_echo_is_stable() {
        let golden = "\
grid.nx = 64
grid.ny = 64
grid.lx = 1.0
grid.ly = 1.0
params.eta = 0.004
params.alpha = 0.1
params.a = 1.0
params.b = 2.0
params.kappa = 2.0
params.xi1 = 0.1
params.xi2 = 0.12
params.eta_blend = 0.1
params.nu1 = 0.1
params.nu2 = 0.2
params.rho1 = 1.0
params.rho2 = 3.0
stepping.h = 0.001
stepping.n_steps = 200
stepping.picard_tol = 1e-10
stepping.picard_max = 200
stepping.newton_tol = 1e-11
stepping.newton_max = 50
stepping.splitting = convex
stepping.strict_energy = false
stepping.energy_rel_tol = 1e-6
initial.scenario = magnetic_stripes
initial.width = 0.03
initial.heavy_on_top = true
initial.bands = 2
initial.m_amp = 0.1
output.out_dir = out
output.dump_every = 50
output.timeseries = timeseries.csv
output.norm_exponent = 8.0
";
        assert_eq!(Config::default().normalize(), golden);
    }
}
