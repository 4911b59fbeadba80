//! p-sum and p-integral stability diagnostics.
//!
//! `S_p(q, x) = (Σ_n ‖𝒜(q,n)x‖^p)^{1/p}` is accumulated in the log domain.
//! Summation stops once a geometric envelope fitted to the last
//! [`TAIL_WINDOW`] terms bounds the remaining tail by `tolerance` times the
//! partial sum. The continuous analogue integrates `‖𝒜(q,t)x‖^p` with
//! Simpson's rule on the integrator grid, one unit block at a time.

use crate::cocycle::{CocycleError, CocycleHandle, ExponentialBound, ProductWalk, TimeKind, VectorFlow};
use crate::lyapunov::sample_starts;
use crate::linalg::{LogSumExp, ScaledVector, Vector};
use crate::tempering::{compute_envelope, compute_envelope_flow, TemperError};
use crate::base::BasePoint;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use thiserror::Error;

/// Terms used to fit the geometric tail.
pub const TAIL_WINDOW: usize = 32;
/// Fitted ratios must stay below this value to certify a tail.
pub const MAX_RATIO: f64 = 1.0 - 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatkoError {
    #[error(transparent)]
    Cocycle(#[from] CocycleError),
    #[error(transparent)]
    Temper(#[from] TemperError),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("direction must be nonzero")]
    ZeroVector,
    #[error("not converged: {0}")]
    NotConverged(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatkoOptions {
    /// Required bound on tail / partial sum.
    pub tolerance: f64,
    /// Largest number of terms (unit blocks for integrals).
    pub n_max: u64,
}

impl Default for DatkoOptions {
    fn default() -> Self {
        DatkoOptions {
            tolerance: 1e-12,
            n_max: 1 << 16,
        }
    }
}

impl DatkoOptions {
    fn validate(&self) -> Result<(), DatkoError> {
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(DatkoError::InvalidParameter(format!("tolerance = {} violates tolerance > 0", self.tolerance)));
        }
        if self.n_max < TAIL_WINDOW as u64 {
            return Err(DatkoError::InvalidParameter(format!(
                "n_max = {} violates n_max >= {TAIL_WINDOW}",
                self.n_max
            )));
        }
        Ok(())
    }
}

fn check_p(p: f64) -> Result<(), DatkoError> {
    if p > 0.0 && p.is_finite() {
        Ok(())
    } else {
        Err(DatkoError::InvalidParameter(format!("p = {p} violates p > 0")))
    }
}

/// Result for one direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionReport {
    pub direction: Vec<f64>,
    /// Number of terms (or unit blocks) summed.
    pub terms: u64,
    /// Partial value `S_N = (Σ_{n<N} ‖𝒜(q,n)x‖^p)^{1/p}`.
    pub value: f64,
    pub log_value: f64,
    /// Certified bound on `S_∞ − S_N`; infinite when not converged.
    pub tail_bound: f64,
    pub converged: bool,
    /// Last fitted geometric ratio of the terms.
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatkoReport {
    pub p: f64,
    pub point: String,
    pub directions: Vec<DirectionReport>,
    /// `max_x S / ‖x‖` over the tested directions.
    pub c_estimate: f64,
    pub converged: bool,
}

impl DatkoReport {
    fn from_directions(p: f64, q: &BasePoint, directions: Vec<DirectionReport>) -> Self {
        let c_estimate = directions
            .iter()
            .map(|d| d.value / Vector::from_vec(d.direction.clone()).norm())
            .fold(0.0, f64::max);
        DatkoReport {
            p,
            point: q.to_string(),
            converged: directions.iter().all(|d| d.converged),
            directions,
            c_estimate,
        }
    }
}

/// Log-domain series with geometric tail certification.
#[derive(Clone, Debug)]
struct Series {
    sum: LogSumExp,
    window: VecDeque<f64>,
    terms: u64,
    tolerance: f64,
    log_tail: Option<f64>,
    ratio: Option<f64>,
}

impl Series {
    fn new(tolerance: f64) -> Self {
        Series {
            sum: LogSumExp::default(),
            window: VecDeque::with_capacity(TAIL_WINDOW + 1),
            terms: 0,
            tolerance,
            log_tail: None,
            ratio: None,
        }
    }

    fn done(&self) -> bool {
        self.log_tail.is_some()
    }

    /// Add the next term (as a log); returns true once the tail is certified.
    fn push(&mut self, log_term: f64) -> bool {
        if self.done() {
            return true;
        }
        self.sum.add(log_term);
        self.terms += 1;
        if log_term == f64::NEG_INFINITY {
            // zero is absorbing: every later term vanishes
            self.log_tail = Some(f64::NEG_INFINITY);
            return true;
        }
        self.window.push_back(log_term);
        if self.window.len() > TAIL_WINDOW {
            self.window.pop_front();
        }
        if self.window.len() < TAIL_WINDOW {
            return false;
        }
        let w = TAIL_WINDOW as f64;
        let mean_j = (w - 1.0) / 2.0;
        let mean_y = self.window.iter().sum::<f64>() / w;
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for (j, y) in self.window.iter().enumerate() {
            let dj = j as f64 - mean_j;
            sxy += dj * (y - mean_y);
            sxx += dj * dj;
        }
        let log_r = sxy / sxx;
        self.ratio = Some(log_r.exp());
        if !(log_r < MAX_RATIO.ln()) {
            return false;
        }
        // smallest amplitude with term_j ≤ A r^j across the window
        let log_a = self
            .window
            .iter()
            .enumerate()
            .map(|(j, y)| y - j as f64 * log_r)
            .fold(f64::NEG_INFINITY, f64::max);
        let log_tail = log_a + w * log_r - (-log_r.exp_m1()).ln();
        if log_tail - self.sum.value() <= self.tolerance.ln() {
            self.log_tail = Some(log_tail);
            return true;
        }
        false
    }

    fn report(&self, direction: &Vector, p: f64) -> DirectionReport {
        let log_sum = self.sum.value();
        let log_value = log_sum / p;
        let value = log_value.exp();
        let tail_bound = match self.log_tail {
            Some(t) if t == f64::NEG_INFINITY => 0.0,
            Some(t) => {
                // (Σ + T)^{1/p} − Σ^{1/p}
                let rel = (t - log_sum).exp();
                value * ((rel.ln_1p() / p).exp_m1())
            }
            None => f64::INFINITY,
        };
        DirectionReport {
            direction: direction.iter().copied().collect(),
            terms: self.terms,
            value,
            log_value,
            tail_bound,
            converged: self.done(),
            ratio: self.ratio,
        }
    }
}

fn nonzero(x: &Vector) -> Result<(), DatkoError> {
    if x.iter().all(|v| *v == 0.0) {
        Err(DatkoError::ZeroVector)
    } else {
        Ok(())
    }
}

fn sum_direction(handle: &CocycleHandle, q: &BasePoint, x: &Vector, p: f64, opts: &DatkoOptions) -> Result<DirectionReport, DatkoError> {
    let mut series = Series::new(opts.tolerance);
    let mut v = ScaledVector::from_vector(x.clone());
    let mut point = q.clone();
    while series.terms < opts.n_max {
        if series.push(p * v.log_norm()) {
            break;
        }
        let a = handle.one_step(&point)?;
        v.left_mul(&a);
        handle.base().step_in_place(&mut point).map_err(CocycleError::from)?;
    }
    Ok(series.report(x, p))
}

/// p-sum along the orbit of `q` in direction `x`.
pub fn datko_sum(handle: &CocycleHandle, q: &BasePoint, x: &Vector, p: f64, opts: &DatkoOptions) -> Result<DatkoReport, DatkoError> {
    datko_sum_directions(handle, q, std::slice::from_ref(x), p, opts)
}

/// p-sums for several directions at the same point.
pub fn datko_sum_directions(
    handle: &CocycleHandle,
    q: &BasePoint,
    xs: &[Vector],
    p: f64,
    opts: &DatkoOptions,
) -> Result<DatkoReport, DatkoError> {
    check_p(p)?;
    opts.validate()?;
    if !handle.is_discrete() {
        return Err(CocycleError::NotDiscrete.into());
    }
    let mut out = Vec::with_capacity(xs.len());
    for x in xs {
        handle.check_dim(x)?;
        nonzero(x)?;
        out.push(sum_direction(handle, q, x, p, opts)?);
    }
    Ok(DatkoReport::from_directions(p, q, out))
}

/// `(Σ_n ‖𝒜(q,n)‖^p)^{1/p}`, which bounds `S_p(q,x)/‖x‖` for every `x`.
pub fn operator_sum(handle: &CocycleHandle, q: &BasePoint, p: f64, opts: &DatkoOptions) -> Result<DirectionReport, DatkoError> {
    check_p(p)?;
    opts.validate()?;
    let mut series = Series::new(opts.tolerance);
    let mut walk = ProductWalk::new(handle, q)?;
    while series.terms < opts.n_max {
        if series.push(p * walk.log_norm()) {
            break;
        }
        walk.advance()?;
    }
    let mut report = series.report(&Vector::zeros(0), p);
    report.direction.clear();
    Ok(report)
}

/// Integral and integer-time sum from one integration pass.
struct FlowPass {
    integral: Series,
    discrete: Series,
}

fn flow_pass(
    handle: &CocycleHandle,
    q: &BasePoint,
    x: &Vector,
    p: f64,
    opts: &DatkoOptions,
    need_discrete: bool,
) -> Result<FlowPass, DatkoError> {
    let TimeKind::Continuous { step } = handle.time() else {
        return Err(CocycleError::NotContinuous.into());
    };
    let mut per_unit = (1.0 / step - 1e-9).ceil() as usize;
    if per_unit % 2 == 1 {
        per_unit += 1;
    }
    let h = 1.0 / per_unit as f64;
    let log_w = [(h / 3.0).ln(), (4.0 * h / 3.0).ln(), (2.0 * h / 3.0).ln()];
    let mut flow = VectorFlow::new(handle, q, x.clone(), step)?;
    let mut pass = FlowPass {
        integral: Series::new(opts.tolerance),
        discrete: Series::new(opts.tolerance),
    };
    let mut left = p * flow.state().log_norm();
    for _ in 0..opts.n_max {
        if need_discrete {
            pass.discrete.push(left);
        }
        if pass.integral.done() && (!need_discrete || pass.discrete.done()) {
            break;
        }
        let mut block = LogSumExp::default();
        block.add(log_w[0] + left);
        for k in 1..=per_unit {
            flow.step_by(h)?;
            let f = p * flow.state().log_norm();
            let w = if k == per_unit {
                log_w[0]
            } else if k % 2 == 1 {
                log_w[1]
            } else {
                log_w[2]
            };
            block.add(w + f);
            if k == per_unit {
                left = f;
            }
        }
        pass.integral.push(block.value());
    }
    Ok(pass)
}

fn integral_checks(handle: &CocycleHandle, x: &Vector, p: f64, opts: &DatkoOptions) -> Result<(), DatkoError> {
    check_p(p)?;
    opts.validate()?;
    handle.check_dim(x)?;
    nonzero(x)
}

/// p-integral `(∫_0^∞ ‖𝒜(q,t)x‖^p dt)^{1/p}`; `opts.n_max` counts unit blocks.
pub fn datko_integral(handle: &CocycleHandle, q: &BasePoint, x: &Vector, p: f64, opts: &DatkoOptions) -> Result<DatkoReport, DatkoError> {
    integral_checks(handle, x, p, opts)?;
    let pass = flow_pass(handle, q, x, p, opts, false)?;
    Ok(DatkoReport::from_directions(p, q, vec![pass.integral.report(x, p)]))
}

/// Both sides of the discretization inequality
/// `Σ_{n≥0} ‖𝒜(q,n)x‖^p ≤ K^p e^{ωp} ∫_0^∞ ‖𝒜(q,t)x‖^p dt + ‖x‖^p`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationCheck {
    /// `(Σ ‖𝒜(q,n)x‖^p)^{1/p}`.
    pub discrete: f64,
    /// `(∫ ‖𝒜(q,t)x‖^p dt)^{1/p}`.
    pub continuous: f64,
    /// Right side minus left side, in p-th power units.
    pub slack: f64,
    /// Left side, for relative comparisons.
    pub scale: f64,
}

pub fn check_discretization_bound(
    handle: &CocycleHandle,
    q: &BasePoint,
    x: &Vector,
    p: f64,
    bound: &ExponentialBound,
    opts: &DatkoOptions,
) -> Result<DiscretizationCheck, DatkoError> {
    integral_checks(handle, x, p, opts)?;
    let pass = flow_pass(handle, q, x, p, opts, true)?;
    if !pass.integral.done() || !pass.discrete.done() {
        return Err(DatkoError::NotConverged(format!("discretization ingredients at {q}")));
    }
    let sum = pass.discrete.sum.value().exp();
    let integral = pass.integral.sum.value().exp();
    let rhs = bound.k.powf(p) * (bound.omega * p).exp() * integral + x.norm().powf(p);
    Ok(DiscretizationCheck {
        discrete: sum.powf(1.0 / p),
        continuous: integral.powf(1.0 / p),
        slack: rhs - sum,
        scale: sum,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldStatus {
    /// Negative exponent and every sum converged.
    Convergent,
    /// Positive exponent and at least 99% of the sums diverged.
    Divergent,
    /// Exponent indistinguishable from zero.
    Inconclusive,
    /// The observed sums contradict the sign of the exponent.
    Violated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub point_id: usize,
    pub report: DatkoReport,
    /// Envelope `C̄(q)` when the exponent is negative.
    pub c_bar: Option<f64>,
    /// `C̄(q)/(1 − e^{p(λ+ε)})^{1/p}` (maps) or `C̄(q)/(−p(λ+ε))^{1/p}` (flows).
    pub c_predicted: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSummary {
    pub status: FieldStatus,
    pub lambda: f64,
    pub dispersion: f64,
    pub epsilon: Option<f64>,
    pub p: f64,
    pub points: Vec<PointSummary>,
    pub converged_fraction: f64,
    pub diverged_fraction: f64,
    /// Points whose empirical C(q) exceeds the predicted bound.
    pub bound_violations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldOptions {
    pub p: f64,
    pub points: usize,
    pub directions: usize,
    pub seed: u64,
    pub datko: DatkoOptions,
    /// Horizon for the envelope `C̄`.
    pub envelope_horizon: u64,
}

/// Random unit directions, drawn from a stream independent of the points.
pub fn random_directions(dim: usize, count: usize, seed: u64) -> Vec<Vector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    (0..count)
        .map(|_| loop {
            let v = Vector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
            let n = v.norm();
            if n > 1e-12 {
                break v / n;
            }
        })
        .collect()
}

/// Both directions of the p-sum characterization on sampled data: for a
/// negative exponent every sum converges and `C(q)` is compared with the
/// bound built from the envelope; for a positive exponent the sums diverge.
pub fn datko_field_experiment(
    handle: &CocycleHandle,
    lambda: f64,
    dispersion: f64,
    opts: &FieldOptions,
) -> Result<FieldSummary, DatkoError> {
    check_p(opts.p)?;
    opts.datko.validate()?;
    if opts.points == 0 || opts.directions == 0 {
        return Err(DatkoError::InvalidParameter("points and directions must be >= 1".into()));
    }
    let p = opts.p;
    let undecided = lambda.is_nan() || lambda.abs() <= (2.0 * dispersion).max(1e-12);
    let stable = !undecided && lambda < 0.0;
    let epsilon = stable.then(|| if lambda.is_finite() { lambda.abs() / 2.0 } else { 1.0 });
    let starts = sample_starts(handle.base(), opts.points, opts.seed);
    let directions = random_directions(handle.dim(), opts.directions, opts.seed);
    let continuous = handle.is_continuous();
    let points = starts
        .par_iter()
        .enumerate()
        .map(|(point_id, q)| -> Result<PointSummary, DatkoError> {
            let report = if continuous {
                let reports: Vec<DirectionReport> = directions
                    .iter()
                    .map(|x| datko_integral(handle, q, x, p, &opts.datko).map(|r| r.directions[0].clone()))
                    .collect::<Result<_, _>>()?;
                DatkoReport::from_directions(p, q, reports)
            } else {
                datko_sum_directions(handle, q, &directions, p, &opts.datko)?
            };
            let (c_bar, c_predicted) = match epsilon {
                Some(eps) if lambda.is_finite() => {
                    let rate = lambda + eps;
                    if continuous {
                        let env = compute_envelope_flow(handle, q, lambda, eps, opts.envelope_horizon as f64)?;
                        let c = env.log_value.exp();
                        (Some(c), Some(c / (-p * rate).powf(1.0 / p)))
                    } else {
                        let env = compute_envelope(handle, q, lambda, eps, opts.envelope_horizon)?;
                        let c = env.log_value.exp();
                        (Some(c), Some(c / (-(p * rate).exp_m1()).powf(1.0 / p)))
                    }
                }
                _ => (None, None),
            };
            Ok(PointSummary {
                point_id,
                report,
                c_bar,
                c_predicted,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let total = (points.len() * opts.directions) as f64;
    let converged = points
        .iter()
        .flat_map(|s| &s.report.directions)
        .filter(|d| d.converged)
        .count() as f64;
    let diverged = points
        .iter()
        .flat_map(|s| &s.report.directions)
        .filter(|d| !d.converged && d.ratio.is_some_and(|r| r >= MAX_RATIO))
        .count() as f64;
    let bound_violations = points
        .iter()
        .filter(|s| s.c_predicted.is_some_and(|c| s.report.c_estimate > c * (1.0 + 1e-9)))
        .count();
    let status = if undecided {
        FieldStatus::Inconclusive
    } else if stable {
        if converged == total && bound_violations == 0 {
            FieldStatus::Convergent
        } else {
            FieldStatus::Violated
        }
    } else if diverged >= 0.99 * total {
        FieldStatus::Divergent
    } else {
        FieldStatus::Violated
    };
    Ok(FieldSummary {
        status,
        lambda,
        dispersion,
        epsilon,
        p,
        points,
        converged_fraction: converged / total,
        diverged_fraction: diverged / total,
        bound_violations,
    })
}
