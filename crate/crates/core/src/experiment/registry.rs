//! Built-in experiment templates, one per stability statement.

use super::config::{parse_config, ConfigError, ExperimentConfig, UniformMode};
use serde::Serialize;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Template {
    pub name: &'static str,
    /// The statement the template exercises.
    pub statement: &'static str,
    /// TOML config text.
    #[serde(skip)]
    pub text: &'static str,
}

impl Template {
    pub fn config(&self) -> Result<ExperimentConfig, ConfigError> {
        parse_config(self.text)
    }
}

macro_rules! template {
    ($name:literal, $statement:literal) => {
        Template {
            name: $name,
            statement: $statement,
            text: include_str!(concat!("../../templates/", $name, ".toml")),
        }
    };
}

/// Every built-in template.
pub fn registry_list() -> Vec<Template> {
    vec![
        template!(
            "discrete-forward",
            "maps: a negative exponent gives finite p-sums bounded by C(q)||x||"
        ),
        template!("discrete-divergent", "maps: a positive exponent makes the p-sums diverge"),
        template!(
            "discrete-converse",
            "maps: finite p-sums give an adapted norm under which the induced cocycle contracts, and a negative exponent"
        ),
        template!(
            "tempering",
            "maps: a negative exponent gives a tempered T with ||A(q,n)|| <= T(q)e^((lambda+eps)n)"
        ),
        template!(
            "uniform-contractive",
            "maps: a negative maximal growth rate gives ||A(q,n)|| <= De^(-lambda n) uniformly"
        ),
        template!("uniform-expanding", "maps: an expanding periodic orbit rules out uniform stability"),
        template!(
            "flow-forward",
            "semi-flows: a negative exponent gives finite p-integrals bounded by C(q)||x||"
        ),
        template!(
            "flow-converse",
            "semi-flows: finite p-integrals bound the p-sums of the time-one map"
        ),
        template!(
            "flow-uniform",
            "semi-flows: uniform decay certified from grid maxima of ||A(q,t)||"
        ),
        template!("lyapunov", "largest Lyapunov exponent over a subshift of finite type"),
    ]
}

pub fn find_template(name: &str) -> Option<Template> {
    registry_list().into_iter().find(|t| t.name == name)
}

impl ExperimentConfig {
    /// The same experiment with every budget cut to a quick check.
    pub fn smoke(&self) -> ExperimentConfig {
        let mut c = self.clone();
        c.lyapunov.orbits = c.lyapunov.orbits.min(4);
        c.lyapunov.n_max = c.lyapunov.n_max.min(512);
        c.lyapunov.t_max = c.lyapunov.t_max.min(16.0);
        c.datko.points = c.datko.points.min(4);
        c.datko.directions = c.datko.directions.min(2);
        c.datko.n_max = c.datko.n_max.min(4096);
        c.datko.envelope_horizon = c.datko.envelope_horizon.min(1024);
        c.induce.points = c.induce.points.min(4);
        c.induce.returns = c.induce.returns.min(10);
        c.induce.calibration_samples = c.induce.calibration_samples.min(16);
        c.induce.periodic_max = c.induce.periodic_max.min(4);
        c.induce.transfer_returns = c.induce.transfer_returns.min(200);
        c.induce.transfer_orbits = c.induce.transfer_orbits.min(2);
        c.induce.transfer_tolerance = c.induce.transfer_tolerance.max(0.2);
        c.temper.points = c.temper.points.min(2);
        c.temper.horizon = c.temper.horizon.min(256);
        c.temper.envelope_horizon = c.temper.envelope_horizon.min(1024);
        c.temper.drift_n_max = c.temper.drift_n_max.min(256);
        c.temper.slope_tolerance = c.temper.slope_tolerance.max(0.2);
        if c.uniform.mode == UniformMode::Exact {
            c.uniform.n_max = c.uniform.n_max.min(10);
        }
        c.uniform.points = c.uniform.points.min(64);
        c.flow.points = c.flow.points.min(2);
        c.flow.directions = c.flow.directions.min(1);
        c.flow.n_max = c.flow.n_max.min(256);
        c.flow.bound_samples = c.flow.bound_samples.min(8);
        c.flow.t_budget = c.flow.t_budget.min(4);
        c.flow.grid = c.flow.grid.min(8);
        c.flow.periods = c.flow.periods.min(2);
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::{run_experiment, ExperimentKind, Verdict};
    use std::collections::HashSet;

    #[test]
    fn templates_load() {
        let list = registry_list();
        assert!(list.len() >= 7);
        let names: HashSet<_> = list.iter().map(|t| t.name).collect();
        assert_eq!(names.len(), list.len());
        let mut kinds = HashSet::new();
        for t in &list {
            let c = t.config().unwrap_or_else(|e| panic!("{}: {e}", t.name));
            c.smoke().validate().unwrap();
            kinds.insert(c.kind.name());
        }
        for k in [
            ExperimentKind::Lyapunov,
            ExperimentKind::Datko,
            ExperimentKind::Induce,
            ExperimentKind::Temper,
            ExperimentKind::Uniform,
            ExperimentKind::Flow,
        ] {
            assert!(kinds.contains(k.name()), "no template for {}", k.name());
        }
    }

    #[test]
    fn expected_smoke_verdicts() {
        let dir = tempfile::tempdir().unwrap();
        let expect = [
            ("discrete-divergent", Verdict::Negative),
            ("uniform-contractive", Verdict::Positive),
            ("uniform-expanding", Verdict::Negative),
        ];
        for (name, verdict) in expect {
            let c = find_template(name).unwrap().config().unwrap().smoke();
            let r = run_experiment(&c, &dir.path().join(name)).unwrap();
            assert_eq!(r.verdict, verdict, "{name}: {}", r.reason);
        }
    }
}
