//! Seeded experiment runs with JSON and CSV outputs.
//!
//! [`run_experiment`] dispatches a validated [`ExperimentConfig`] into the
//! analysis modules and writes `verdict.json` plus one CSV per series into
//! the output directory. File contents depend only on the canonical config
//! and the crate version.

pub mod config;
pub mod registry;

pub use config::{load_config, parse_config, ConfigError, ExperimentConfig, ExperimentKind};
pub use registry::{find_template, registry_list, Template};

use crate::cocycle::CocycleHandle;
use crate::datko::{
    check_discretization_bound, datko_field_experiment, random_directions, DatkoError, FieldOptions, FieldStatus,
    FieldSummary,
};
use crate::induced::{
    build_induced_orbit, calibrate_certificate, exponent_transfer_check, induced_contraction_check,
    one_step_contraction_check, sample_in_set, InducedError, SLACK_TOLERANCE,
};
use crate::lyapunov::{closed_form_exponent, estimate_exponent, estimate_exponent_flow, sample_starts, LyapunovError, LyapunovEstimate};
use crate::tempering::{build_tempered_envelope, drift_check, TemperError};
use crate::uniform::{decide_uniform_stability, decide_uniform_stability_flow, Decision, Sampling, StabilityCertificate, UniformError};
use config::UniformMode;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::path::Path;
use std::time::Instant;
use thiserror::Error;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Tolerance on log-domain excesses in the tempering checks.
const LOG_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    /// The stability property was observed.
    Positive,
    /// The property fails, with a witness.
    Negative,
    Inconclusive,
    /// An inequality that must hold was observed to fail.
    Violated,
}

impl Verdict {
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Positive => 0,
            Verdict::Negative => 2,
            Verdict::Inconclusive => 3,
            Verdict::Violated => 1,
        }
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot write {path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Lyapunov(#[from] LyapunovError),
    #[error(transparent)]
    Datko(#[from] DatkoError),
    #[error(transparent)]
    Induced(#[from] InducedError),
    #[error(transparent)]
    Temper(#[from] TemperError),
    #[error(transparent)]
    Uniform(#[from] UniformError),
    #[error(transparent)]
    Cocycle(#[from] crate::cocycle::CocycleError),
}

impl ExperimentError {
    /// Short machine-readable class for error reports.
    pub fn code(&self) -> &'static str {
        match self {
            ExperimentError::Config(_) => "config",
            ExperimentError::Io { .. } => "io",
            ExperimentError::Lyapunov(_) => "lyapunov",
            ExperimentError::Datko(_) => "datko",
            ExperimentError::Induced(_) => "induce",
            ExperimentError::Temper(_) => "temper",
            ExperimentError::Uniform(_) => "uniform",
            ExperimentError::Cocycle(_) => "cocycle",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub kind: ExperimentKind,
    /// SHA-256 of the canonical config text.
    pub config_hash: String,
    pub version: String,
    pub seed: u64,
    /// Not written to any output file.
    pub wall_time_ms: u64,
    pub verdict: Verdict,
    pub exit_code: i32,
    pub reason: String,
    pub outputs: Vec<OutputFile>,
}

/// One CSV series with documented columns.
struct Table {
    name: &'static str,
    columns: &'static [(&'static str, &'static str)],
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &'static str, columns: &'static [(&'static str, &'static str)]) -> Self {
        Table {
            name,
            columns,
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }

    fn doc(&self) -> Value {
        let cols: Vec<Value> = self
            .columns
            .iter()
            .map(|(name, meaning)| json!({ "name": name, "meaning": meaning }))
            .collect();
        json!({ "file": self.file_name(), "columns": cols })
    }

    fn to_bytes(&self) -> Result<Vec<u8>, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.columns.iter().map(|c| c.0))?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.into_inner().map_err(|e| e.into_error().into())
    }
}

struct Outcome {
    verdict: Verdict,
    reason: String,
    result: Value,
    tables: Vec<Table>,
}

impl Outcome {
    fn bare(verdict: Verdict, reason: impl Into<String>, result: Value) -> Self {
        Outcome {
            verdict,
            reason: reason.into(),
            result,
            tables: Vec::new(),
        }
    }
}

fn num(x: f64) -> String {
    x.to_string()
}

/// Hex SHA-256 of the canonical config text.
pub fn config_hash(config: &ExperimentConfig) -> String {
    hex::encode(Sha256::digest(config.canonical().as_bytes()))
}

/// Execute `config` and write its outputs into `out_dir`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<RunRecord, ExperimentError> {
    let started = Instant::now();
    config.validate()?;
    let handle = config.build_handle()?;
    let outcome = match config.kind {
        ExperimentKind::Lyapunov => run_lyapunov(config, &handle)?,
        ExperimentKind::Datko => run_datko(config, &handle)?,
        ExperimentKind::Induce => run_induce(config, &handle)?,
        ExperimentKind::Temper => run_temper(config, &handle)?,
        ExperimentKind::Uniform => run_uniform(config, &handle)?,
        ExperimentKind::Flow => run_flow(config, &handle)?,
    };
    let hash = config_hash(config);
    let io = |path: &Path, e: &dyn std::fmt::Display| ExperimentError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    std::fs::create_dir_all(out_dir).map_err(|e| io(out_dir, &e))?;
    let files: Vec<Value> = outcome.tables.iter().map(Table::doc).collect();
    let document = json!({
        "kind": config.kind,
        "version": VERSION,
        "config_hash": hash,
        "seed": config.seed,
        "verdict": outcome.verdict,
        "exit_code": outcome.verdict.exit_code(),
        "reason": outcome.reason,
        "series": files,
        "result": outcome.result,
    });
    let mut payloads = vec![(
        "verdict.json".to_string(),
        serde_json::to_vec_pretty(&document).expect("json value serializes"),
    )];
    for t in &outcome.tables {
        let bytes = t.to_bytes().map_err(|e| io(&out_dir.join(t.file_name()), &e))?;
        payloads.push((t.file_name(), bytes));
    }
    let mut outputs = Vec::with_capacity(payloads.len());
    for (name, bytes) in payloads {
        let path = out_dir.join(&name);
        std::fs::write(&path, &bytes).map_err(|e| io(&path, &e))?;
        outputs.push(OutputFile {
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
    }
    Ok(RunRecord {
        kind: config.kind,
        config_hash: hash,
        version: VERSION.to_string(),
        seed: config.seed,
        wall_time_ms: started.elapsed().as_millis() as u64,
        verdict: outcome.verdict,
        exit_code: outcome.verdict.exit_code(),
        reason: outcome.reason,
        outputs,
    })
}

fn estimate(config: &ExperimentConfig, handle: &CocycleHandle) -> Result<LyapunovEstimate, LyapunovError> {
    let l = &config.lyapunov;
    if handle.is_continuous() {
        estimate_exponent_flow(handle, l.orbits, l.t_max, config.seed)
    } else {
        estimate_exponent(handle, l.orbits, l.n_max, config.seed)
    }
}

/// Sign of the exponent, undecided within twice the orbit dispersion.
fn sign_verdict(value: f64, dispersion: f64) -> (Verdict, String) {
    if value == f64::NEG_INFINITY {
        (Verdict::Positive, "sampled products vanish: exponent is -inf".into())
    } else if value.is_nan() || value.abs() <= (2.0 * dispersion).max(1e-12) {
        (
            Verdict::Inconclusive,
            format!("exponent {value} is within the dispersion band ±{}", 2.0 * dispersion),
        )
    } else if value < 0.0 {
        (Verdict::Positive, format!("exponent {value} < 0"))
    } else {
        (Verdict::Negative, format!("exponent {value} > 0"))
    }
}

fn exponent_json(est: &LyapunovEstimate, handle: &CocycleHandle) -> Value {
    json!({
        "value": est.value,
        "dispersion": est.dispersion,
        "horizon": est.horizon,
        "degenerate": est.degenerate,
        "time_one_value": est.time_one_value,
        "closed_form": closed_form_exponent(handle).ok().map(|c| c.value),
    })
}

fn run_lyapunov(config: &ExperimentConfig, handle: &CocycleHandle) -> Result<Outcome, ExperimentError> {
    let est = estimate(config, handle)?;
    let (verdict, reason) = sign_verdict(est.value, est.dispersion);
    let mut table = Table::new(
        "trajectory",
        &[
            ("time", "checkpoint n or t"),
            ("mean", "mean over orbits of (1/t) log ||A(q,t)||"),
            ("dispersion", "population standard deviation of the orbit rates"),
        ],
    );
    for p in &est.trajectory {
        table.push(vec![num(p.time), num(p.mean), num(p.dispersion)]);
    }
    let mut result = exponent_json(&est, handle);
    result["trajectory"] = serde_json::to_value(&est.trajectory).expect("serializes");
    Ok(Outcome {
        verdict,
        reason,
        result,
        tables: vec![table],
    })
}

fn field_verdict(summary: &FieldSummary) -> (Verdict, String) {
    match summary.status {
        FieldStatus::Convergent => (
            Verdict::Positive,
            format!("exponent {} < 0 and every p-sum converged", summary.lambda),
        ),
        FieldStatus::Divergent => (
            Verdict::Negative,
            format!(
                "exponent {} > 0 and {:.1}% of the p-sums diverge",
                summary.lambda,
                100.0 * summary.diverged_fraction
            ),
        ),
        FieldStatus::Inconclusive => (
            Verdict::Inconclusive,
            format!("exponent {} is within the dispersion band", summary.lambda),
        ),
        FieldStatus::Violated => (
            Verdict::Violated,
            format!(
                "sums contradict the exponent sign: converged {:.3}, diverged {:.3}, bound violations {}",
                summary.converged_fraction, summary.diverged_fraction, summary.bound_violations
            ),
        ),
    }
}

fn run_datko(config: &ExperimentConfig, handle: &CocycleHandle) -> Result<Outcome, ExperimentError> {
    let est = estimate(config, handle)?;
    let d = &config.datko;
    let summary = datko_field_experiment(
        handle,
        est.value,
        est.dispersion,
        &FieldOptions {
            p: d.p,
            points: d.points,
            directions: d.directions,
            seed: config.seed,
            datko: d.options(),
            envelope_horizon: d.envelope_horizon,
        },
    )?;
    let (verdict, reason) = field_verdict(&summary);
    let mut table = Table::new(
        "datko",
        &[
            ("q_id", "sampled base point"),
            ("x_id", "sampled unit direction"),
            ("S", "p-sum (sum_n ||A(q,n)x||^p)^(1/p), truncated"),
            ("tail_bound", "bound on the neglected tail of S"),
            ("converged", "tail certified below tolerance"),
        ],
    );
    for pt in &summary.points {
        for (j, dir) in pt.report.directions.iter().enumerate() {
            table.push(vec![
                pt.point_id.to_string(),
                j.to_string(),
                num(dir.value),
                num(dir.tail_bound),
                dir.converged.to_string(),
            ]);
        }
    }
    let result = json!({ "exponent": exponent_json(&est, handle), "field": summary });
    Ok(Outcome {
        verdict,
        reason,
        result,
        tables: vec![table],
    })
}

fn run_induce(config: &ExperimentConfig, handle: &CocycleHandle) -> Result<Outcome, ExperimentError> {
    let i = &config.induce;
    let opts = config.datko.options();
    let system = handle.base();
    let set = i.set.build(system)?;
    let est = estimate(config, handle)?;
    let exponent = exponent_json(&est, handle);
    let cert = match calibrate_certificate(handle, &set, i.p, i.calibration_samples, i.periodic_max, config.seed, &opts) {
        Ok(c) => c,
        Err(InducedError::NotConverged(q)) => {
            return Ok(Outcome::bare(
                Verdict::Negative,
                format!("p-sum diverges at {q}: no adapted norm"),
                json!({ "exponent": exponent }),
            ))
        }
        Err(e) => return Err(e.into()),
    };
    let starts = sample_in_set(system, &set, i.points, config.seed.wrapping_add(1))?;
    let dirs = random_directions(handle.dim(), i.points, config.seed.wrapping_add(1));
    let checked = starts
        .par_iter()
        .zip(dirs.par_iter())
        .map(|(q, x)| {
            let mut record = build_induced_orbit(handle, q, &set, i.returns)?;
            let one = one_step_contraction_check(handle, q, record.return_times[0], x, &cert, &opts)?;
            let check = induced_contraction_check(handle, &mut record, &cert, x, i.returns, &opts)?;
            Ok((record, check, one))
        })
        .collect::<Result<Vec<_>, InducedError>>();
    let checked = match checked {
        Ok(c) => c,
        Err(e @ InducedError::RecurrenceNotObserved { .. }) => {
            return Ok(Outcome::bare(Verdict::Inconclusive, e.to_string(), json!({ "exponent": exponent })))
        }
        Err(e @ InducedError::SandwichViolated { .. }) => {
            return Ok(Outcome::bare(Verdict::Violated, e.to_string(), json!({ "exponent": exponent })))
        }
        Err(e) => return Err(e.into()),
    };
    let transfer_starts = sample_in_set(system, &set, i.transfer_orbits, config.seed.wrapping_add(2))?;
    let records = transfer_starts
        .par_iter()
        .map(|q| build_induced_orbit(handle, q, &set, i.transfer_returns))
        .collect::<Result<Vec<_>, InducedError>>()?;
    let transfer = exponent_transfer_check(&records, est.value, set.measure());

    let mut table = Table::new(
        "induce",
        &[
            ("orbit_id", "sampled start in the set"),
            ("n", "induced step"),
            ("tau_n", "time of the n-th return"),
            ("log_norm", "log ||induced product at step n||"),
            ("slack", "smaller of the adapted-norm and operator-norm relative slacks at step n"),
        ],
    );
    let mut one_step_min = f64::INFINITY;
    let mut min_slack = f64::INFINITY;
    for (id, (record, check, one)) in checked.iter().enumerate() {
        one_step_min = one_step_min.min(*one);
        min_slack = min_slack.min(check.min_slack);
        for n in 0..=record.returns() {
            let tau = if n == 0 { 0 } else { record.return_times[n - 1] };
            let slack = check.adapted_slacks[n].min(check.operator_slacks[n]);
            table.push(vec![
                id.to_string(),
                n.to_string(),
                tau.to_string(),
                num(record.product(n).log_norm()),
                num(slack),
            ]);
        }
    }
    let mut transfer_table = Table::new(
        "transfer",
        &[
            ("orbit_id", "sampled start in the set"),
            ("returns", "number of returns n"),
            ("tau_n", "time of the n-th return"),
            ("induced_rate", "(1/n) log ||induced product at step n||"),
            ("kac_ratio", "tau_n / n"),
        ],
    );
    for (id, r) in records.iter().enumerate() {
        transfer_table.push(vec![
            id.to_string(),
            r.returns().to_string(),
            r.return_times.last().copied().unwrap_or(0).to_string(),
            num(r.induced_rate()),
            num(r.kac_ratio()),
        ]);
    }
    let contraction_holds = min_slack >= SLACK_TOLERANCE && one_step_min >= SLACK_TOLERANCE;
    let (verdict, reason) = if !contraction_holds {
        (
            Verdict::Violated,
            format!("contraction slack {} below {SLACK_TOLERANCE}", min_slack.min(one_step_min)),
        )
    } else if !(transfer.residual <= i.transfer_tolerance) {
        (
            Verdict::Inconclusive,
            format!("transfer residual {} exceeds {}", transfer.residual, i.transfer_tolerance),
        )
    } else {
        (
            Verdict::Positive,
            format!(
                "induced steps contract by gamma = {} under K = {}; transfer residual {}",
                cert.gamma, cert.k, transfer.residual
            ),
        )
    };
    let result = json!({
        "exponent": exponent,
        "set_measure": set.measure(),
        "expected_return_time": 1.0 / set.measure(),
        "certificate": { "k": cert.k, "gamma": cert.gamma, "p": cert.p, "samples": cert.samples },
        "one_step_min_slack": one_step_min,
        "min_slack": min_slack,
        "transfer": transfer,
    });
    Ok(Outcome {
        verdict,
        reason,
        result,
        tables: vec![table, transfer_table],
    })
}

fn run_temper(config: &ExperimentConfig, handle: &CocycleHandle) -> Result<Outcome, ExperimentError> {
    let t = &config.temper;
    let est = estimate(config, handle)?;
    let exponent = exponent_json(&est, handle);
    let (sign, why) = sign_verdict(est.value, est.dispersion);
    if sign != Verdict::Positive {
        return Ok(Outcome::bare(sign, format!("{why}: no tempered decay bound"), json!({ "exponent": exponent })));
    }
    // vanishing products satisfy every bound; any finite rate will do
    let lambda = if est.value.is_finite() { est.value } else { -1.0 };
    let epsilon = t.epsilon.unwrap_or(lambda.abs() / 2.0);
    let starts = sample_starts(handle.base(), t.points, config.seed);
    let runs = starts
        .par_iter()
        .map(|q| {
            let env = build_tempered_envelope(handle, q, lambda, epsilon, t.horizon, t.envelope_horizon)?;
            let drift = drift_check(handle, q, lambda, epsilon, t.drift_n_max, t.envelope_horizon)?;
            Ok((env, drift))
        })
        .collect::<Result<Vec<_>, TemperError>>();
    let runs = match runs {
        Ok(r) => r,
        Err(e @ (TemperError::Unconverged(_) | TemperError::HorizonTooSmall { .. })) => {
            return Ok(Outcome::bare(Verdict::Inconclusive, e.to_string(), json!({ "exponent": exponent })))
        }
        Err(e) => return Err(e.into()),
    };
    let mut table = Table::new(
        "temper",
        &[
            ("point_id", "sampled base point q"),
            ("n", "orbit position"),
            ("log_c_bar", "log of the envelope C(f^n q)"),
            ("log_t", "log of the tempered bound T(f^n q)"),
        ],
    );
    let mut drift_table = Table::new(
        "drift",
        &[
            ("point_id", "sampled base point q"),
            ("n", "orbit position"),
            ("log_c_bar", "log of the envelope C(f^n q)"),
        ],
    );
    let (mut decay, mut growth, mut step, mut rate, mut pairs) = (f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0f64, 0);
    for (id, (env, drift)) in runs.iter().enumerate() {
        decay = decay.max(env.max_decay_excess);
        growth = growth.max(env.max_growth_excess);
        step = step.max(drift.max_step_excess);
        rate = rate.max(drift.final_rate.abs());
        pairs += env.pairs_checked;
        for (n, (c, lt)) in env.log_c_bar.iter().zip(&env.log_t).enumerate() {
            table.push(vec![id.to_string(), n.to_string(), num(*c), num(*lt)]);
        }
        for (n, c) in drift.log_c_bar.iter().enumerate() {
            drift_table.push(vec![id.to_string(), n.to_string(), num(*c)]);
        }
    }
    let (verdict, reason) = if decay > LOG_TOLERANCE {
        (Verdict::Violated, format!("decay bound exceeded by {decay} (log)"))
    } else if growth > LOG_TOLERANCE {
        (Verdict::Violated, format!("tempering bound exceeded by {growth} (log)"))
    } else if step > LOG_TOLERANCE {
        (Verdict::Violated, format!("one-step drift bound exceeded by {step} (log)"))
    } else if rate > t.slope_tolerance {
        (
            Verdict::Inconclusive,
            format!("drift rate {rate} exceeds {} at n = {}", t.slope_tolerance, t.drift_n_max),
        )
    } else {
        (
            Verdict::Positive,
            format!("both tempered inequalities hold at {pairs} pairs; drift rate {rate}"),
        )
    };
    let result = json!({
        "exponent": exponent,
        "lambda": lambda,
        "epsilon": epsilon,
        "pairs_checked": pairs,
        "max_decay_excess": decay,
        "max_growth_excess": growth,
        "max_step_excess": step,
        "max_drift_rate": rate,
    });
    Ok(Outcome {
        verdict,
        reason,
        result,
        tables: vec![table, drift_table],
    })
}

fn certificate_verdict(cert: &StabilityCertificate) -> (Verdict, String) {
    match cert.decision {
        Decision::UniformlyStable => match &cert.verification {
            Some(v) if v.violations > 0 => (
                Verdict::Violated,
                format!("certificate fails at {} of {} checked products", v.violations, v.checked),
            ),
            Some(v) => (
                Verdict::Positive,
                format!("uniformly stable; bound verified on {} products", v.checked),
            ),
            None => (Verdict::Positive, "uniformly stable; verification skipped at this size".into()),
        },
        Decision::NotUniformlyStable => (
            Verdict::Negative,
            format!("not uniformly stable: periodic rate {} >= 0", cert.max_lower),
        ),
        Decision::Inconclusive => (
            Verdict::Inconclusive,
            format!("growth rate bracketed in [{}, {}]", cert.max_lower, cert.min_upper),
        ),
    }
}

fn growth_tables(cert: &StabilityCertificate, name: &'static str, periodic: &'static str) -> Vec<Table> {
    let mut upper = Table::new(
        name,
        &[
            ("n", "horizon"),
            ("a_n", "max over the base of log ||A(q,n)||"),
            ("rate", "a_n / n"),
        ],
    );
    for b in &cert.upper_bounds {
        upper.push(vec![num(b.n), num(b.a_n), num(b.rate)]);
    }
    let mut lower = Table::new(
        periodic,
        &[
            ("orbit", "periodic orbit"),
            ("period", "period (or return time)"),
            ("rate", "log spectral radius over the period / period"),
        ],
    );
    for r in &cert.lower_bounds {
        lower.push(vec![r.orbit.clone(), num(r.period), num(r.rate)]);
    }
    vec![upper, lower]
}

fn run_uniform(config: &ExperimentConfig, handle: &CocycleHandle) -> Result<Outcome, ExperimentError> {
    let u = &config.uniform;
    let sampling = match u.mode {
        UniformMode::Exact => Sampling::Exact,
        UniformMode::Sampled => Sampling::Sampled {
            points: u.points,
            seed: config.seed,
        },
    };
    let cert = decide_uniform_stability(handle, u.n_max, u.periods, sampling)?;
    let (verdict, reason) = certificate_verdict(&cert);
    let tables = growth_tables(&cert, "uniform", "periodic");
    Ok(Outcome {
        verdict,
        reason,
        result: json!({ "certificate": cert }),
        tables,
    })
}

fn run_flow(config: &ExperimentConfig, handle: &CocycleHandle) -> Result<Outcome, ExperimentError> {
    let f = &config.flow;
    let opts = f.options();
    let est = estimate(config, handle)?;
    let summary = datko_field_experiment(
        handle,
        est.value,
        est.dispersion,
        &FieldOptions {
            p: f.p,
            points: f.points,
            directions: f.directions,
            seed: config.seed,
            datko: opts,
            envelope_horizon: f.envelope_horizon,
        },
    )?;
    let (mut verdict, mut reason) = field_verdict(&summary);
    let mut discretization: Vec<Option<(f64, f64, f64)>> = vec![None; f.points * f.directions];
    let mut bound_json = Value::Null;
    if summary.status == FieldStatus::Convergent {
        let bound = handle.fit_exponential_bound(f.bound_samples, f.bound_horizon, config.seed)?;
        bound_json = json!({ "k": bound.k, "omega": bound.omega });
        let starts = sample_starts(handle.base(), f.points, config.seed);
        let dirs = random_directions(handle.dim(), f.directions, config.seed);
        let pairs: Vec<(usize, usize)> = (0..f.points).flat_map(|i| (0..f.directions).map(move |j| (i, j))).collect();
        discretization = pairs
            .par_iter()
            .map(|&(i, j)| {
                let c = check_discretization_bound(handle, &starts[i], &dirs[j], f.p, &bound, &opts)?;
                Ok(Some((c.discrete, c.slack, c.scale)))
            })
            .collect::<Result<Vec<_>, DatkoError>>()?;
        let worst = discretization
            .iter()
            .flatten()
            .map(|(_, slack, scale)| slack / scale.max(1.0))
            .fold(f64::INFINITY, f64::min);
        if worst < -LOG_TOLERANCE {
            verdict = Verdict::Violated;
            reason = format!("discretization inequality fails: relative slack {worst}");
        }
    }
    let uniform = decide_uniform_stability_flow(handle, f.t_budget, f.grid, f.periods, config.seed)?;
    if uniform.decision == Decision::UniformlyStable && summary.status == FieldStatus::Divergent {
        verdict = Verdict::Violated;
        reason = "uniform certificate contradicts divergent p-integrals".into();
    }
    let mut table = Table::new(
        "flow",
        &[
            ("point_id", "sampled base point q"),
            ("x_id", "sampled unit direction x"),
            ("integral", "p-integral (int_0^inf ||A(q,t)x||^p dt)^(1/p), truncated"),
            ("discrete", "p-sum over integer times; empty unless the integrals converge"),
            ("slack", "(K^p e^(omega p) integral^p + ||x||^p) - discrete^p; empty unless the integrals converge"),
            ("converged", "integral tail certified below tolerance"),
        ],
    );
    for pt in &summary.points {
        for (j, dir) in pt.report.directions.iter().enumerate() {
            let disc = discretization[pt.point_id * f.directions + j];
            table.push(vec![
                pt.point_id.to_string(),
                j.to_string(),
                num(dir.value),
                disc.map_or(String::new(), |d| num(d.0)),
                disc.map_or(String::new(), |d| num(d.1)),
                dir.converged.to_string(),
            ]);
        }
    }
    let mut tables = vec![table];
    tables.extend(growth_tables(&uniform, "flow_uniform", "flow_periodic"));
    let result = json!({
        "exponent": exponent_json(&est, handle),
        "field": summary,
        "exponential_bound": bound_json,
        "uniform": uniform,
    });
    Ok(Outcome {
        verdict,
        reason,
        result,
        tables,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(kind: &str, a: &str) -> ExperimentConfig {
        parse_config(&format!(
            r#"
kind = "{kind}"
seed = 7
[system]
type = "full-shift"
weights = ["0.5", "0.5"]
[generator]
type = "scalar"
value = "{a}"
[lyapunov]
n_max = 256
orbits = 4
[datko]
points = 4
directions = 2
"#
        ))
        .unwrap()
    }

    #[test]
    fn lyapunov_constant() {
        let dir = tempfile::tempdir().unwrap();
        let r = run_experiment(&scalar("lyapunov", "0.5"), dir.path()).unwrap();
        assert_eq!(r.verdict, Verdict::Positive);
        assert_eq!(r.exit_code, 0);
        let doc: Value = serde_json::from_slice(&std::fs::read(dir.path().join("verdict.json")).unwrap()).unwrap();
        let v = doc["result"]["value"].as_f64().unwrap();
        assert!((v - 0.5f64.ln()).abs() < 1e-9);
        assert!(doc["result"]["trajectory"].as_array().unwrap().len() > 1);
        let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
        assert!(csv.starts_with("time,mean,dispersion\n"));
    }

    #[test]
    fn datko_divergence_has_own_status() {
        let dir = tempfile::tempdir().unwrap();
        let r = run_experiment(&scalar("datko", "2"), dir.path()).unwrap();
        assert_eq!(r.verdict, Verdict::Negative);
        assert_eq!(r.exit_code, 2);
        let r = run_experiment(&scalar("datko", "0.5"), dir.path()).unwrap();
        assert_eq!(r.verdict, Verdict::Positive);
        let csv = std::fs::read_to_string(dir.path().join("datko.csv")).unwrap();
        assert_eq!(csv.lines().count(), 1 + 4 * 2);
        assert!(csv.starts_with("q_id,x_id,S,tail_bound,converged\n"));
    }

    #[test]
    fn repeat_runs_are_identical() {
        let c = scalar("datko", "0.5");
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let ra = run_experiment(&c, a.path()).unwrap();
        let rb = run_experiment(&c, b.path()).unwrap();
        let hashes = |r: &RunRecord| r.outputs.iter().map(|o| o.sha256.clone()).collect::<Vec<_>>();
        assert_eq!(hashes(&ra), hashes(&rb));
        assert_eq!(ra.config_hash, rb.config_hash);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(Verdict::Positive.exit_code(), 0);
        assert_eq!(Verdict::Violated.exit_code(), 1);
        assert_eq!(Verdict::Negative.exit_code(), 2);
        assert_eq!(Verdict::Inconclusive.exit_code(), 3);
    }
}
