//! Declarative experiment files.
//!
//! A config is a TOML document naming the experiment kind, the base system,
//! the generator and per-module parameters. Matrix entries, weights and
//! angles are decimal strings. Every table rejects unknown keys and every
//! parameter is checked when the file is loaded.

use crate::base::{BaseSystem, MeasurableSet, Roof};
use crate::cocycle::{CocycleHandle, Generator, DEFAULT_STEP};
use crate::datko::{DatkoOptions, TAIL_WINDOW};
use crate::expr::Expr;
use crate::linalg::Matrix;
use crate::uniform::{max_growth, Sampling, EXACT_MAX_N};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("`{key}` violates {constraint}")]
    Invalid { key: String, constraint: String },
}

fn invalid(key: &str, constraint: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        constraint: constraint.into(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Lyapunov,
    Datko,
    Induce,
    Temper,
    Uniform,
    Flow,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Lyapunov => "lyapunov",
            ExperimentKind::Datko => "datko",
            ExperimentKind::Induce => "induce",
            ExperimentKind::Temper => "temper",
            ExperimentKind::Uniform => "uniform",
            ExperimentKind::Flow => "flow",
        }
    }
}

/// Base map; a `roof` turns it into the suspension semi-flow.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SystemSpec {
    FullShift {
        weights: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        roof: Option<String>,
    },
    Sft {
        transitions: Vec<Vec<u8>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        markov: Option<Vec<Vec<String>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        roof: Option<String>,
    },
    Rotation {
        angle: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        roof: Option<String>,
    },
    Doubling {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        roof: Option<String>,
    },
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GeneratorSpec {
    /// `value·Id` in dimension `dim`.
    Scalar {
        value: String,
        #[serde(default = "one")]
        dim: usize,
    },
    Constant { matrix: Vec<Vec<String>> },
    /// One matrix per word of length `depth`, in lexicographic order.
    LocallyConstant {
        #[serde(default = "one")]
        depth: usize,
        matrices: Vec<Vec<Vec<String>>>,
    },
    /// Row-major entry expressions in `x` and `s`.
    ClosedForm { dim: usize, entries: Vec<String> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SetSpec {
    Whole,
    Cylinder(Vec<u8>),
    Intervals(Vec<(String, String)>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UniformMode {
    Exact,
    Sampled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LyapunovParams {
    pub orbits: usize,
    pub n_max: u64,
    pub t_max: f64,
}

impl Default for LyapunovParams {
    fn default() -> Self {
        LyapunovParams {
            orbits: 16,
            n_max: 4096,
            t_max: 256.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatkoParams {
    pub p: f64,
    pub tolerance: f64,
    pub n_max: u64,
    pub points: usize,
    pub directions: usize,
    pub envelope_horizon: u64,
}

impl Default for DatkoParams {
    fn default() -> Self {
        DatkoParams {
            p: 1.0,
            tolerance: 1e-12,
            n_max: 1 << 16,
            points: 32,
            directions: 4,
            envelope_horizon: 4096,
        }
    }
}

impl DatkoParams {
    pub fn options(&self) -> DatkoOptions {
        DatkoOptions {
            tolerance: self.tolerance,
            n_max: self.n_max,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InduceParams {
    pub set: SetSpec,
    pub p: f64,
    pub returns: usize,
    pub points: usize,
    pub calibration_samples: usize,
    pub periodic_max: usize,
    pub transfer_returns: usize,
    pub transfer_orbits: usize,
    pub transfer_tolerance: f64,
}

impl Default for InduceParams {
    fn default() -> Self {
        InduceParams {
            set: SetSpec::Cylinder(vec![0]),
            p: 1.0,
            returns: 20,
            points: 16,
            calibration_samples: 64,
            periodic_max: 8,
            transfer_returns: 2000,
            transfer_orbits: 8,
            transfer_tolerance: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemperParams {
    /// Defaults to half the estimated exponent's magnitude.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    pub horizon: u64,
    pub envelope_horizon: u64,
    pub drift_n_max: u64,
    pub points: usize,
    pub slope_tolerance: f64,
}

impl Default for TemperParams {
    fn default() -> Self {
        TemperParams {
            epsilon: None,
            horizon: 512,
            envelope_horizon: 4096,
            drift_n_max: 1024,
            points: 8,
            slope_tolerance: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UniformParams {
    pub n_max: usize,
    pub periods: usize,
    pub mode: UniformMode,
    pub points: usize,
}

impl Default for UniformParams {
    fn default() -> Self {
        UniformParams {
            n_max: 12,
            periods: 8,
            mode: UniformMode::Exact,
            points: 256,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowParams {
    pub p: f64,
    pub points: usize,
    pub directions: usize,
    pub tolerance: f64,
    /// Unit blocks for the p-integral.
    pub n_max: u64,
    /// Time horizon for the envelope `C̄`.
    pub envelope_horizon: u64,
    pub bound_samples: usize,
    pub bound_horizon: f64,
    pub t_budget: usize,
    pub grid: usize,
    pub periods: usize,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams {
            p: 1.0,
            points: 8,
            directions: 2,
            tolerance: 1e-10,
            n_max: 4096,
            envelope_horizon: 64,
            bound_samples: 64,
            bound_horizon: 8.0,
            t_budget: 8,
            grid: 32,
            periods: 4,
        }
    }
}

impl FlowParams {
    pub fn options(&self) -> DatkoOptions {
        DatkoOptions {
            tolerance: self.tolerance,
            n_max: self.n_max,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
}

fn default_step() -> f64 {
    DEFAULT_STEP
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    /// Integrator step for semi-flows.
    #[serde(default = "default_step")]
    pub step: f64,
    pub system: SystemSpec,
    pub generator: GeneratorSpec,
    #[serde(default)]
    pub lyapunov: LyapunovParams,
    #[serde(default)]
    pub datko: DatkoParams,
    #[serde(default)]
    pub induce: InduceParams,
    #[serde(default)]
    pub temper: TemperParams,
    #[serde(default)]
    pub uniform: UniformParams,
    #[serde(default)]
    pub flow: FlowParams,
    #[serde(default)]
    pub output: OutputSpec,
}

/// Read and validate a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_config(&text)
}

/// Parse and validate config text.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let config: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(with_suggestion(e.message())))?;
    config.validate()?;
    Ok(config)
}

/// Append the closest expected key to an unknown-field message.
fn with_suggestion(message: &str) -> String {
    let Some(rest) = message.split("unknown field `").nth(1) else {
        return message.to_string();
    };
    let Some(unknown) = rest.split('`').next() else {
        return message.to_string();
    };
    let expected: Vec<&str> = rest.split('`').skip(2).step_by(2).collect();
    let best = expected
        .iter()
        .map(|k| (strsim::jaro_winkler(unknown, k), *k))
        .filter(|(score, _)| *score > 0.7)
        .max_by(|a, b| a.0.total_cmp(&b.0));
    match best {
        Some((_, k)) => format!("{message}; did you mean `{k}`?"),
        None => message.to_string(),
    }
}

fn decimal(key: &str, s: &str) -> Result<f64, ConfigError> {
    match s.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(invalid(key, format!("a finite decimal (got {s:?})"))),
    }
}

fn decimals(key: &str, xs: &[String]) -> Result<Vec<f64>, ConfigError> {
    xs.iter().map(|s| decimal(key, s)).collect()
}

fn matrix(key: &str, rows: &[Vec<String>]) -> Result<Matrix, ConfigError> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(invalid(key, "a nonempty square matrix"));
    }
    let entries: Vec<f64> = rows.iter().flatten().map(|s| decimal(key, s)).collect::<Result<_, _>>()?;
    Ok(Matrix::from_row_slice(n, n, &entries))
}

fn expr(key: &str, s: &str) -> Result<Expr, ConfigError> {
    Expr::parse(s).map_err(|e| invalid(key, format!("a valid expression ({e})")))
}

fn positive(key: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(key, format!("{} > 0 (got {v})", key.rsplit('.').next().unwrap_or(key))))
    }
}

fn at_least<T: PartialOrd + std::fmt::Display>(key: &str, v: T, min: T) -> Result<(), ConfigError> {
    if v >= min {
        Ok(())
    } else {
        Err(invalid(key, format!("{} >= {min} (got {v})", key.rsplit('.').next().unwrap_or(key))))
    }
}

fn tolerance(key: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(invalid(key, format!("0 < tolerance < 1 (got {v})")))
    }
}

impl SystemSpec {
    fn roof(&self) -> Option<&String> {
        match self {
            SystemSpec::FullShift { roof, .. }
            | SystemSpec::Sft { roof, .. }
            | SystemSpec::Rotation { roof, .. }
            | SystemSpec::Doubling { roof } => roof.as_ref(),
        }
    }

    pub fn is_flow(&self) -> bool {
        self.roof().is_some()
    }

    /// The base map, before any suspension.
    pub fn base_map(&self) -> Result<BaseSystem, ConfigError> {
        let system = match self {
            SystemSpec::FullShift { weights, .. } => BaseSystem::full_shift(decimals("system.weights", weights)?),
            SystemSpec::Sft { transitions, markov, .. } => {
                if transitions.iter().flatten().any(|&v| v > 1) {
                    return Err(invalid("system.transitions", "entries in {0, 1}"));
                }
                let t = transitions.iter().map(|r| r.iter().map(|&v| v == 1).collect()).collect();
                let m = match markov {
                    Some(rows) => Some(
                        rows.iter()
                            .map(|r| decimals("system.markov", r))
                            .collect::<Result<Vec<_>, _>>()?,
                    ),
                    None => None,
                };
                BaseSystem::sft(t, m)
            }
            SystemSpec::Rotation { angle, .. } => BaseSystem::rotation(decimal("system.angle", angle)?),
            SystemSpec::Doubling { .. } => Ok(BaseSystem::doubling()),
        };
        system.map_err(|e| invalid("system", e.to_string()))
    }

    pub fn build(&self) -> Result<BaseSystem, ConfigError> {
        let base = self.base_map()?;
        match self.roof() {
            None => Ok(base),
            Some(r) => {
                let e = expr("system.roof", r)?;
                let roof = if e.is_constant() {
                    Roof::Constant(e.eval(0.0, 0.0))
                } else {
                    Roof::Closed(e)
                };
                BaseSystem::suspension(base, roof).map_err(|e| invalid("system.roof", e.to_string()))
            }
        }
    }
}

impl GeneratorSpec {
    pub fn build(&self, system: &BaseSystem) -> Result<Generator, ConfigError> {
        let g = match self {
            GeneratorSpec::Scalar { value, dim } => {
                at_least("generator.dim", *dim, 1)?;
                Ok(Generator::scalar_identity(decimal("generator.value", value)?, *dim))
            }
            GeneratorSpec::Constant { matrix: rows } => Generator::constant(matrix("generator.matrix", rows)?),
            GeneratorSpec::LocallyConstant { depth, matrices } => {
                at_least("generator.depth", *depth, 1)?;
                let k = system
                    .alphabet()
                    .ok_or_else(|| invalid("generator", "a symbolic base for a locally-constant generator"))?;
                let ms = matrices
                    .iter()
                    .map(|m| matrix("generator.matrices", m))
                    .collect::<Result<Vec<_>, _>>()?;
                Generator::locally_constant(k, *depth, ms)
            }
            GeneratorSpec::ClosedForm { dim, entries } => {
                at_least("generator.dim", *dim, 1)?;
                let es = entries
                    .iter()
                    .map(|e| expr("generator.entries", e))
                    .collect::<Result<Vec<_>, _>>()?;
                Generator::closed_form(*dim, es)
            }
        };
        g.map_err(|e| invalid("generator", e.to_string()))
    }
}

impl SetSpec {
    pub fn build(&self, system: &BaseSystem) -> Result<MeasurableSet, ConfigError> {
        let set = match self {
            SetSpec::Whole => Ok(MeasurableSet::whole()),
            SetSpec::Cylinder(word) => MeasurableSet::cylinder(system, word),
            SetSpec::Intervals(pairs) => {
                let iv = pairs
                    .iter()
                    .map(|(a, b)| Ok((decimal("induce.set", a)?, decimal("induce.set", b)?)))
                    .collect::<Result<Vec<_>, ConfigError>>()?;
                MeasurableSet::intervals(system, iv)
            }
        }
        .map_err(|e| invalid("induce.set", e.to_string()))?;
        if !(set.measure() > 0.0) {
            return Err(invalid("induce.set", "a set of positive measure"));
        }
        Ok(set)
    }
}

impl ExperimentConfig {
    /// The cocycle described by `system`, `generator` and `step`.
    pub fn build_handle(&self) -> Result<CocycleHandle, ConfigError> {
        let system = self.system.build()?;
        if self.system.is_flow() {
            let field = self.generator.build(self.system.base_map().as_ref().unwrap_or(&system))?;
            CocycleHandle::continuous(system, field, self.step).map_err(|e| invalid("generator", e.to_string()))
        } else {
            let g = self.generator.build(&system)?;
            CocycleHandle::discrete(system, g).map_err(|e| invalid("generator", e.to_string()))
        }
    }

    /// Check every parameter against the owning module's preconditions.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.step > 0.0 && self.step <= 0.5) {
            return Err(invalid("step", format!("0 < step <= 0.5 (got {})", self.step)));
        }
        let handle = self.build_handle()?;

        let l = &self.lyapunov;
        at_least("lyapunov.orbits", l.orbits, 1)?;
        at_least("lyapunov.n_max", l.n_max, 8)?;
        if !(l.t_max >= 8.0 && l.t_max.is_finite()) {
            return Err(invalid("lyapunov.t_max", format!("t_max >= 8 (got {})", l.t_max)));
        }

        let d = &self.datko;
        positive("datko.p", d.p)?;
        tolerance("datko.tolerance", d.tolerance)?;
        at_least("datko.n_max", d.n_max, TAIL_WINDOW as u64)?;
        at_least("datko.points", d.points, 1)?;
        at_least("datko.directions", d.directions, 1)?;
        at_least("datko.envelope_horizon", d.envelope_horizon, 64)?;

        let i = &self.induce;
        positive("induce.p", i.p)?;
        at_least("induce.returns", i.returns, 1)?;
        at_least("induce.points", i.points, 1)?;
        at_least("induce.calibration_samples", i.calibration_samples, 1)?;
        at_least("induce.transfer_returns", i.transfer_returns, 1)?;
        at_least("induce.transfer_orbits", i.transfer_orbits, 1)?;
        positive("induce.transfer_tolerance", i.transfer_tolerance)?;

        let t = &self.temper;
        if let Some(eps) = t.epsilon {
            positive("temper.epsilon", eps)?;
        }
        at_least("temper.horizon", t.horizon, 256)?;
        at_least("temper.envelope_horizon", t.envelope_horizon, 64)?;
        at_least("temper.drift_n_max", t.drift_n_max, 64)?;
        at_least("temper.points", t.points, 1)?;
        positive("temper.slope_tolerance", t.slope_tolerance)?;

        let u = &self.uniform;
        at_least("uniform.n_max", u.n_max, 1)?;
        at_least("uniform.points", u.points, 1)?;
        if u.mode == UniformMode::Exact && u.n_max > EXACT_MAX_N {
            return Err(invalid("uniform.n_max", format!("n_max <= {EXACT_MAX_N} in exact mode (got {})", u.n_max)));
        }

        let f = &self.flow;
        positive("flow.p", f.p)?;
        at_least("flow.points", f.points, 1)?;
        at_least("flow.directions", f.directions, 1)?;
        tolerance("flow.tolerance", f.tolerance)?;
        at_least("flow.n_max", f.n_max, TAIL_WINDOW as u64)?;
        at_least("flow.envelope_horizon", f.envelope_horizon, 64)?;
        at_least("flow.bound_samples", f.bound_samples, 1)?;
        positive("flow.bound_horizon", f.bound_horizon)?;
        at_least("flow.t_budget", f.t_budget, 1)?;
        at_least("flow.grid", f.grid, 1)?;

        match self.kind {
            ExperimentKind::Induce | ExperimentKind::Temper | ExperimentKind::Uniform if handle.is_continuous() => {
                return Err(invalid("system.roof", format!("absent for a {} experiment", self.kind.name())));
            }
            ExperimentKind::Flow if !handle.is_continuous() => {
                return Err(invalid("system.roof", "present for a flow experiment"));
            }
            _ => {}
        }
        if self.kind == ExperimentKind::Induce {
            self.induce.set.build(handle.base())?;
        }
        if self.kind == ExperimentKind::Uniform && u.mode == UniformMode::Exact {
            max_growth(&handle, 1, Sampling::Exact).map_err(|e| invalid("uniform.mode", e.to_string()))?;
        }
        Ok(())
    }

    /// Canonical TOML text with every default filled in.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
kind = "lyapunov"

[system]
type = "full-shift"
weights = ["0.5", "0.5"]

[generator]
type = "scalar"
value = "0.5"
"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.seed, 0);
        assert_eq!(c.lyapunov, LyapunovParams::default());
        assert_eq!(c.datko.p, 1.0);
        assert!(!c.system.is_flow());
    }

    #[test]
    fn round_trip() {
        let c = parse_config(MINIMAL).unwrap();
        let again = parse_config(&c.canonical()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.canonical(), again.canonical());
    }

    #[test]
    fn rejects_nonpositive_p() {
        let text = format!("{MINIMAL}\n[datko]\np = -1.0\n");
        let e = parse_config(&text).unwrap_err().to_string();
        assert!(e.contains("datko.p") && e.contains("p > 0"), "{e}");
    }

    #[test]
    fn unknown_key_gets_suggestion() {
        let text = format!("{MINIMAL}\n[temper]\nepsilonn = 0.1\n");
        let e = parse_config(&text).unwrap_err().to_string();
        assert!(e.contains("epsilonn") && e.contains("did you mean `epsilon`"), "{e}");
        let text = MINIMAL.replace("weights", "weigths");
        assert!(parse_config(&text).unwrap_err().to_string().contains("unknown field"));
    }

    #[test]
    fn kind_must_match_time() {
        let text = MINIMAL.replace("kind = \"lyapunov\"", "kind = \"flow\"");
        let e = parse_config(&text).unwrap_err().to_string();
        assert!(e.contains("system.roof"), "{e}");
    }

    #[test]
    fn bad_matrix_names_key() {
        let text = r#"
kind = "uniform"
[system]
type = "full-shift"
weights = ["0.5", "0.5"]
[generator]
type = "locally-constant"
matrices = [[["0.5", "0.1"], ["0", "x"]], [["1", "0"], ["0", "1"]]]
"#;
        let e = parse_config(text).unwrap_err().to_string();
        assert!(e.contains("generator.matrices"), "{e}");
    }

    #[test]
    fn exact_uniform_needs_supported_generator() {
        let text = r#"
kind = "uniform"
[system]
type = "rotation"
angle = "0.3"
[generator]
type = "closed-form"
dim = 1
entries = ["0.5 + 0.1*cos(2*pi*x)"]
"#;
        let e = parse_config(text).unwrap_err().to_string();
        assert!(e.contains("uniform.mode"), "{e}");
    }

    #[test]
    fn intervals_set_parses() {
        let text = r#"
kind = "induce"
[system]
type = "rotation"
angle = "0.25"
[generator]
type = "scalar"
value = "0.5"
[induce]
set = { intervals = [["0", "0.25"]] }
"#;
        let c = parse_config(text).unwrap();
        assert_eq!(c.induce.set, SetSpec::Intervals(vec![("0".into(), "0.25".into())]));
        assert_eq!(parse_config(&c.canonical()).unwrap(), c);
    }
}
