//! Adapted norms, contraction on a level set and the induced cocycle.
//!
//! For a stable cocycle `‖x‖_{q,p} = (Σ_n ‖𝒜(q,n)x‖^p)^{1/p}` is a norm at
//! every `q` with `‖x‖ ≤ ‖x‖_{q,p} ≤ C(q)‖x‖`. On a set `E` where `C ≤ K`
//! every step of the cocycle contracts the adapted norm by
//! `γ = (1 − K^{−p})^{1/p}`. Returning to `E` gives the induced cocycle
//! `𝒜̄(q,n) = 𝒜(q,τ_n(q))`, which is then uniformly contracting.

use crate::base::{BaseError, BasePoint, BaseSystem, MeasurableSet};
use crate::cocycle::{CocycleError, CocycleHandle};
use crate::datko::{datko_sum, operator_sum, DatkoError, DatkoOptions};
use crate::linalg::{ScaledMatrix, ScaledVector, Vector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest number of base steps spent waiting for returns.
pub const RETURN_STEP_CAP: u64 = 1_000_000;
/// Relative margin applied to the sampled maximum of `C(q)`.
pub const K_MARGIN: f64 = 0.01;
/// Slacks above this negative value count as satisfied.
pub const SLACK_TOLERANCE: f64 = -1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InducedError {
    #[error(transparent)]
    Cocycle(#[from] CocycleError),
    #[error(transparent)]
    Datko(#[from] DatkoError),
    #[error("point {0} is not in the set")]
    NotInSet(String),
    #[error("recurrence not observed: {returns} returns after {steps} steps")]
    RecurrenceNotObserved { returns: usize, steps: u64 },
    #[error("invalid certificate: {0}")]
    InvalidCertificate(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("adapted norm not converged at {0}")]
    NotConverged(String),
    #[error("sandwich violated at {point}: {detail}")]
    SandwichViolated { point: String, detail: String },
}

impl From<BaseError> for InducedError {
    fn from(e: BaseError) -> Self {
        InducedError::Cocycle(e.into())
    }
}

/// `‖x‖_{q,p}` with the bound used for the sandwich check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptedNormValue {
    pub point: String,
    pub x: Vec<f64>,
    pub p: f64,
    pub value: f64,
    pub log_value: f64,
    pub terms: u64,
    /// Upper bound `(Σ_n ‖𝒜(q,n)‖^p)^{1/p} ≥ C(q)`.
    pub c_bound: f64,
}

/// Adapted norm of `x` at `q`; zero for `x = 0`.
pub fn adapted_norm(
    handle: &CocycleHandle,
    q: &BasePoint,
    x: &Vector,
    p: f64,
    opts: &DatkoOptions,
) -> Result<AdaptedNormValue, InducedError> {
    let c = operator_sum(handle, q, p, opts)?;
    if !c.converged {
        return Err(InducedError::NotConverged(q.to_string()));
    }
    let c_bound = c.value + c.tail_bound;
    let norm = x.norm();
    if norm == 0.0 {
        handle.check_dim(x)?;
        return Ok(AdaptedNormValue {
            point: q.to_string(),
            x: x.as_slice().to_vec(),
            p,
            value: 0.0,
            log_value: f64::NEG_INFINITY,
            terms: 0,
            c_bound,
        });
    }
    let report = datko_sum(handle, q, x, p, opts)?;
    let d = &report.directions[0];
    if !d.converged {
        return Err(InducedError::NotConverged(q.to_string()));
    }
    if d.value < norm * (1.0 - 1e-12) || d.value > c_bound * norm * (1.0 + 1e-9) {
        return Err(InducedError::SandwichViolated {
            point: q.to_string(),
            detail: format!("|x| = {norm}, adapted = {}, C bound = {c_bound}", d.value),
        });
    }
    Ok(AdaptedNormValue {
        point: q.to_string(),
        x: x.as_slice().to_vec(),
        p,
        value: d.value,
        log_value: d.log_value,
        terms: d.terms,
        c_bound,
    })
}

/// Log of the adapted norm of a scaled vector, using homogeneity.
fn log_adapted(handle: &CocycleHandle, q: &BasePoint, v: &ScaledVector, p: f64, opts: &DatkoOptions) -> Result<f64, InducedError> {
    if v.is_zero() {
        return Ok(f64::NEG_INFINITY);
    }
    let value = adapted_norm(handle, q, &v.direction(), p, opts)?;
    Ok(value.log_value + v.log_norm())
}

/// `1 − lhs/rhs` from logs; `0` when both vanish.
fn relative_slack(log_lhs: f64, log_rhs: f64) -> f64 {
    if log_lhs == f64::NEG_INFINITY {
        return if log_rhs == f64::NEG_INFINITY { 0.0 } else { 1.0 };
    }
    if log_rhs == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    -(log_lhs - log_rhs).exp_m1()
}

#[derive(Clone, Debug)]
pub struct ContractionCertificate {
    pub set: MeasurableSet,
    pub k: f64,
    pub gamma: f64,
    pub p: f64,
    /// Points used to calibrate `K`.
    pub samples: usize,
    /// Smallest slack recorded by [`ContractionCertificate::record`].
    pub worst_slack: Option<f64>,
}

impl ContractionCertificate {
    /// Certificate for a given bound `K ≥ 1`.
    pub fn new(set: MeasurableSet, k: f64, p: f64) -> Result<Self, InducedError> {
        if !(p > 0.0 && p.is_finite()) {
            return Err(InducedError::InvalidParameter(format!("p = {p} violates p > 0")));
        }
        if !k.is_finite() {
            return Err(InducedError::InvalidCertificate(format!("K = {k} is not finite")));
        }
        if k < 1.0 {
            return Err(InducedError::InvalidCertificate(format!(
                "K = {k} < 1 contradicts |x| <= |x|_q <= C(q)|x|"
            )));
        }
        Ok(ContractionCertificate {
            set,
            k,
            gamma: gamma_from(k, p),
            p,
            samples: 0,
            worst_slack: None,
        })
    }

    /// `log γ`, accurate even when `γ` rounds to one.
    pub fn log_gamma(&self) -> f64 {
        log_gamma_from(self.k, self.p)
    }

    pub fn record(&mut self, slack: f64) {
        self.worst_slack = Some(self.worst_slack.map_or(slack, |w| w.min(slack)));
    }
}

/// `γ = (1 − K^{−p})^{1/p}`.
pub fn gamma_from(k: f64, p: f64) -> f64 {
    (-(-p * k.ln()).exp_m1()).powf(1.0 / p)
}

/// `log γ = log(1 − K^{−p})/p`; `-inf` at `K = 1`.
pub fn log_gamma_from(k: f64, p: f64) -> f64 {
    (-(-p * k.ln()).exp()).ln_1p() / p
}

/// Draw `count` points of `E` by rejection from the invariant measure.
pub fn sample_in_set(system: &BaseSystem, set: &MeasurableSet, count: usize, seed: u64) -> Result<Vec<BasePoint>, InducedError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cap = 1000 * count + 1000;
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count {
        if attempts >= cap {
            return Err(InducedError::InvalidParameter(format!(
                "only {} of {count} points found in the set after {cap} draws",
                out.len()
            )));
        }
        attempts += 1;
        let q = system.sample_with(&mut rng);
        if set.contains(system, &q)? {
            out.push(q);
        }
    }
    Ok(out)
}

/// Calibrate `K` as the sampled maximum of `C(q)` over `E` plus [`K_MARGIN`].
///
/// Samples are drawn from the measure restricted to `E`; on symbolic bases
/// every point of a periodic orbit up to `periodic_max` lying in `E` is added.
pub fn calibrate_certificate(
    handle: &CocycleHandle,
    set: &MeasurableSet,
    p: f64,
    samples: usize,
    periodic_max: usize,
    seed: u64,
    opts: &DatkoOptions,
) -> Result<ContractionCertificate, InducedError> {
    let system = handle.base();
    let mut points = sample_in_set(system, set, samples, seed)?;
    if system.is_symbolic() && periodic_max > 0 {
        for orbit in system.enumerate_periodic_orbits(periodic_max)? {
            let mut q = orbit.start.clone();
            for _ in 0..orbit.period {
                if set.contains(system, &q)? {
                    points.push(q.clone());
                }
                system.step_in_place(&mut q)?;
            }
        }
    }
    let bounds: Vec<f64> = points
        .par_iter()
        .map(|q| {
            let r = operator_sum(handle, q, p, opts)?;
            if r.converged {
                Ok(r.value + r.tail_bound)
            } else {
                Err(InducedError::NotConverged(q.to_string()))
            }
        })
        .collect::<Result<_, InducedError>>()?;
    let max = bounds.iter().copied().fold(1.0, f64::max);
    let mut cert = ContractionCertificate::new(set.clone(), max * (1.0 + K_MARGIN), p)?;
    cert.samples = points.len();
    Ok(cert)
}

/// `γ‖x‖_{q,p} − ‖𝒜(q,m)x‖_{f^m q,p}` for `q ∈ E`.
pub fn one_step_contraction_check(
    handle: &CocycleHandle,
    q: &BasePoint,
    m: u64,
    x: &Vector,
    cert: &ContractionCertificate,
    opts: &DatkoOptions,
) -> Result<f64, InducedError> {
    if m == 0 {
        return Err(InducedError::InvalidParameter("m = 0 violates m >= 1".into()));
    }
    if !cert.set.contains(handle.base(), q)? {
        return Err(InducedError::NotInSet(q.to_string()));
    }
    let here = adapted_norm(handle, q, x, cert.p, opts)?;
    let image = handle.evaluate_product(q, m)?.apply(&ScaledVector::from_vector(x.clone()));
    let there = handle.base().step_n(q, m)?;
    let log_there = log_adapted(handle, &there, &image, cert.p, opts)?;
    Ok(cert.gamma * here.value - log_there.exp())
}

/// Successive returns of one orbit to `E`.
#[derive(Clone, Debug)]
pub struct InducedOrbitRecord {
    pub start: BasePoint,
    /// `τ_1 < τ_2 < …`
    pub return_times: Vec<u64>,
    /// `𝒜̄(q,n)` for `n = 1, 2, …`
    pub products: Vec<ScaledMatrix>,
    /// `f̄^n(q)` for `n = 1, 2, …`
    pub return_points: Vec<BasePoint>,
    /// Adapted norms of `𝒜̄(q,n)x` at `f̄^n q`, `n = 0, 1, …`, filled by
    /// [`induced_contraction_check`].
    pub adapted_norms: Vec<f64>,
}

impl InducedOrbitRecord {
    pub fn returns(&self) -> usize {
        self.return_times.len()
    }

    /// `τ_n / n` at the last recorded return.
    pub fn kac_ratio(&self) -> f64 {
        match self.return_times.last() {
            Some(&t) => t as f64 / self.returns() as f64,
            None => f64::NAN,
        }
    }

    /// `(1/n) log ‖𝒜̄(q,n)‖` at the last recorded return.
    pub fn induced_rate(&self) -> f64 {
        match self.products.last() {
            Some(a) => a.log_norm() / self.returns() as f64,
            None => f64::NAN,
        }
    }

    /// Base point after `n` returns (`n = 0` is the start).
    pub fn point(&self, n: usize) -> &BasePoint {
        if n == 0 {
            &self.start
        } else {
            &self.return_points[n - 1]
        }
    }

    /// `𝒜̄(q,n)`, the identity for `n = 0`.
    pub fn product(&self, n: usize) -> ScaledMatrix {
        if n == 0 {
            ScaledMatrix::identity(self.start_dim())
        } else {
            self.products[n - 1].clone()
        }
    }

    fn start_dim(&self) -> usize {
        self.products.first().map_or(0, ScaledMatrix::dim)
    }
}

/// Follow `q ∈ E` until `n_returns` returns to `E`.
pub fn build_induced_orbit(
    handle: &CocycleHandle,
    q: &BasePoint,
    set: &MeasurableSet,
    n_returns: usize,
) -> Result<InducedOrbitRecord, InducedError> {
    if !handle.is_discrete() {
        return Err(CocycleError::NotDiscrete.into());
    }
    if n_returns == 0 {
        return Err(InducedError::InvalidParameter("n_returns = 0 violates n_returns >= 1".into()));
    }
    let system = handle.base();
    if !set.contains(system, q)? {
        return Err(InducedError::NotInSet(q.to_string()));
    }
    let dim = handle.dim();
    let mut record = InducedOrbitRecord {
        start: q.clone(),
        return_times: Vec::with_capacity(n_returns),
        products: Vec::with_capacity(n_returns),
        return_points: Vec::with_capacity(n_returns),
        adapted_norms: Vec::new(),
    };
    let mut point = q.clone();
    let mut segment = ScaledMatrix::identity(dim);
    let mut induced = ScaledMatrix::identity(dim);
    let mut steps = 0u64;
    while record.returns() < n_returns {
        if steps >= RETURN_STEP_CAP {
            return Err(InducedError::RecurrenceNotObserved {
                returns: record.returns(),
                steps,
            });
        }
        segment.left_mul(&handle.one_step(&point)?);
        system.step_in_place(&mut point)?;
        steps += 1;
        if set.contains(system, &point)? {
            induced.left_mul_scaled(&segment);
            segment = ScaledMatrix::identity(dim);
            record.return_times.push(steps);
            record.products.push(induced.clone());
            record.return_points.push(point.clone());
        }
    }
    Ok(record)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InducedCheck {
    /// Entry `0` is the sandwich slack `1 − ‖x‖_{q,p}/(K‖x‖)`; entry `n ≥ 1`
    /// is `1 − ‖𝒜̄(q,n)x‖_{f̄^n q,p} / (γ^n ‖x‖_{q,p})`.
    pub adapted_slacks: Vec<f64>,
    /// `1 − ‖𝒜̄(q,n)‖ / (Kγ^n)` for `n = 0, 1, …`.
    pub operator_slacks: Vec<f64>,
    pub min_slack: f64,
    pub holds: bool,
}

/// Check `‖𝒜̄(q,n)x‖_{f̄^n q,p} ≤ γ^n ‖x‖_{q,p}` for `n ≤ n_check` and
/// `‖𝒜̄(q,n)‖ ≤ Kγ^n` for every recorded `n`.
pub fn induced_contraction_check(
    handle: &CocycleHandle,
    record: &mut InducedOrbitRecord,
    cert: &ContractionCertificate,
    x: &Vector,
    n_check: usize,
    opts: &DatkoOptions,
) -> Result<InducedCheck, InducedError> {
    handle.check_dim(x)?;
    if x.norm() == 0.0 {
        return Err(DatkoError::ZeroVector.into());
    }
    let log_k = cert.k.ln();
    let log_gamma = cert.log_gamma();
    let n_check = n_check.min(record.returns());
    let start = adapted_norm(handle, &record.start, x, cert.p, opts)?;
    let mut adapted_slacks = vec![relative_slack(start.log_value, log_k + x.norm().ln())];
    let mut adapted_norms = vec![start.log_value];
    let sx = ScaledVector::from_vector(x.clone());
    for n in 1..=n_check {
        let v = record.products[n - 1].apply(&sx);
        let log_lhs = log_adapted(handle, record.point(n), &v, cert.p, opts)?;
        adapted_norms.push(log_lhs);
        adapted_slacks.push(relative_slack(log_lhs, n as f64 * log_gamma + start.log_value));
    }
    let operator_slacks: Vec<f64> = (0..=record.returns())
        .map(|n| {
            let lhs = if n == 0 { 0.0 } else { record.products[n - 1].log_norm() };
            let rhs = if n == 0 { log_k } else { log_k + n as f64 * log_gamma };
            relative_slack(lhs, rhs)
        })
        .collect();
    record.adapted_norms = adapted_norms.into_iter().map(f64::exp).collect();
    let min_slack = adapted_slacks
        .iter()
        .chain(&operator_slacks)
        .copied()
        .fold(f64::INFINITY, f64::min);
    Ok(InducedCheck {
        adapted_slacks,
        operator_slacks,
        min_slack,
        holds: min_slack >= SLACK_TOLERANCE,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferCheck {
    /// Mean of `(1/n) log ‖𝒜̄(q,n)‖` over the records.
    pub induced_exponent: f64,
    /// Mean of `τ_n / n` over the records.
    pub kac_ratio: f64,
    pub measure: f64,
    pub lambda: f64,
    /// `|λ̂ − μ(E)·λ̂(𝒜̄)|`
    pub residual: f64,
    /// `|λ̂ − λ̂(𝒜̄)·n/τ_n|` with the observed return frequency.
    pub kac_residual: f64,
}

/// Compare `λ̂_μ(𝒜)` with `μ(E)` times the induced exponent.
pub fn exponent_transfer_check(records: &[InducedOrbitRecord], lambda: f64, measure: f64) -> TransferCheck {
    let n = records.len() as f64;
    let induced_exponent = records.iter().map(InducedOrbitRecord::induced_rate).sum::<f64>() / n;
    let kac_ratio = records.iter().map(InducedOrbitRecord::kac_ratio).sum::<f64>() / n;
    let observed = records
        .iter()
        .map(|r| r.induced_rate() / r.kac_ratio())
        .sum::<f64>()
        / n;
    TransferCheck {
        induced_exponent,
        kac_ratio,
        measure,
        lambda,
        residual: (lambda - measure * induced_exponent).abs(),
        kac_residual: (lambda - observed).abs(),
    }
}
