//! Envelopes `C̄(q) = sup_n ‖𝒜(q,n)‖ e^{-n(λ+ε)}` and tempered bounds.
//!
//! The tempered function is the explicit running supremum
//! `T(q) = sup_{k ≤ H} C̄(f^k q) e^{-εk}`, which gives
//! `‖𝒜(q,n)‖ ≤ T(q) e^{(λ+ε)n}` and `T(f^n q) ≤ T(q) e^{εn}` directly.

use crate::base::BasePoint;
use crate::cocycle::{CocycleError, CocycleHandle, PropagatorWalk};
use crate::linalg::{log_spectral_norm, Matrix, ScaledMatrix};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Terms at the end of a scan that must sit below half the supremum.
pub const CERTIFY_WINDOW: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TemperError {
    #[error(transparent)]
    Cocycle(#[from] CocycleError),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("lambda + epsilon = {0} violates lambda + epsilon < 0")]
    NotStable(f64),
    #[error("envelope not certified at orbit position {0}")]
    Unconverged(u64),
    #[error("horizon {horizon} too small: supremum attained at {argmax}, inside the last quarter")]
    HorizonTooSmall { argmax: u64, horizon: u64 },
}

fn check_rate(lambda: f64, epsilon: f64) -> Result<f64, TemperError> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(TemperError::InvalidParameter(format!("epsilon = {epsilon} violates epsilon > 0")));
    }
    let rate = lambda + epsilon;
    if !(rate < 0.0) {
        return Err(TemperError::NotStable(rate));
    }
    Ok(rate)
}

fn check_horizon(n_max: u64) -> Result<(), TemperError> {
    if n_max < 64 {
        return Err(TemperError::InvalidParameter(format!("n_max = {n_max} violates n_max >= 64")));
    }
    Ok(())
}

/// `C̄(q)` truncated at a horizon.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub log_value: f64,
    /// Time at which the supremum is attained.
    pub argmax: f64,
    pub horizon: f64,
    /// The last [`CERTIFY_WINDOW`] terms are below half the supremum.
    pub certified: bool,
}

/// Scan `log‖𝒜(q,n)‖ − n·rate` over `n ≤ N` given the log-norms.
fn envelope_from_logs(logs: impl Iterator<Item = f64>, rate: f64) -> Envelope {
    let mut best = f64::NEG_INFINITY;
    let mut argmax = 0usize;
    let mut terms = Vec::new();
    for (n, l) in logs.enumerate() {
        let t = l - n as f64 * rate;
        if t > best {
            best = t;
            argmax = n;
        }
        terms.push(t);
    }
    let tail_start = terms.len().saturating_sub(CERTIFY_WINDOW);
    let certified = terms[tail_start..].iter().all(|&t| t <= best - std::f64::consts::LN_2);
    Envelope {
        log_value: best,
        argmax: argmax as f64,
        horizon: (terms.len() - 1) as f64,
        certified,
    }
}

/// `C̄(q)` over `n ≤ n_max` for a discrete cocycle.
pub fn compute_envelope(handle: &CocycleHandle, q: &BasePoint, lambda: f64, epsilon: f64, n_max: u64) -> Result<Envelope, TemperError> {
    let rate = check_rate(lambda, epsilon)?;
    check_horizon(n_max)?;
    let orbit = OrbitMatrices::new(handle, q, n_max as usize)?;
    Ok(orbit.envelope(0, n_max as usize, rate))
}

/// `C̄(q)` over the integrator grid for `t ≤ t_max`; certification uses the
/// last [`CERTIFY_WINDOW`] integer times.
pub fn compute_envelope_flow(handle: &CocycleHandle, q: &BasePoint, lambda: f64, epsilon: f64, t_max: f64) -> Result<Envelope, TemperError> {
    let rate = check_rate(lambda, epsilon)?;
    check_horizon(t_max as u64)?;
    let mut walk = PropagatorWalk::new(handle, q)?;
    let (mut best, mut argmax) = (0.0f64, 0.0f64);
    let mut integer_terms = vec![0.0];
    let units = t_max.floor() as usize;
    let per_unit = crate::cocycle::steps_for(1.0, match handle.time() {
        crate::cocycle::TimeKind::Continuous { step } => step,
        _ => return Err(CocycleError::NotContinuous.into()),
    });
    let h = 1.0 / per_unit as f64;
    for u in 0..units {
        for k in 1..=per_unit {
            walk.step_by(h)?;
            let t = u as f64 + k as f64 * h;
            let term = walk.log_norm() - t * rate;
            if term > best {
                best = term;
                argmax = t;
            }
            if k == per_unit {
                integer_terms.push(term);
            }
        }
    }
    let tail_start = integer_terms.len().saturating_sub(CERTIFY_WINDOW);
    Ok(Envelope {
        log_value: best,
        argmax,
        horizon: units as f64,
        certified: integer_terms[tail_start..].iter().all(|&t| t <= best - std::f64::consts::LN_2),
    })
}

/// Generator values `A(f^k q)` along one orbit.
struct OrbitMatrices {
    mats: Vec<Matrix>,
}

impl OrbitMatrices {
    fn new(handle: &CocycleHandle, q: &BasePoint, len: usize) -> Result<Self, CocycleError> {
        if !handle.is_discrete() {
            return Err(CocycleError::NotDiscrete);
        }
        let mut point = q.clone();
        let mut mats = Vec::with_capacity(len);
        for _ in 0..len {
            mats.push(handle.one_step(&point)?);
            handle.base().step_in_place(&mut point)?;
        }
        Ok(OrbitMatrices { mats })
    }

    /// `log‖𝒜(f^j q, n)‖` for `n = 0..=len`.
    fn log_norms(&self, j: usize, len: usize) -> Vec<f64> {
        let dim = self.mats[0].nrows();
        let mut prod = ScaledMatrix::identity(dim);
        let mut out = Vec::with_capacity(len + 1);
        out.push(0.0);
        for a in &self.mats[j..j + len] {
            prod.left_mul(a);
            out.push(prod.log_norm());
        }
        out
    }

    fn envelope(&self, j: usize, len: usize, rate: f64) -> Envelope {
        envelope_from_logs(self.log_norms(j, len).into_iter(), rate)
    }
}

/// Drift of `log C̄` along an orbit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    /// `log C̄(f^n q)` for `n = 0..=n_max`.
    pub log_c_bar: Vec<f64>,
    /// Least-squares slope of `log C̄(f^n q)` against `n`.
    pub slope: f64,
    /// `(1/n_max) log C̄(f^{n_max} q)`.
    pub final_rate: f64,
    /// Largest `log C̄(f^n q) − log C̄(f^{n+1} q) − ψ(f^n q)` with
    /// `ψ(q) = max(0, log‖A(q)‖ − (λ+ε))`; nonpositive when the step bound holds.
    pub max_step_excess: f64,
    /// `max_n ψ(f^n q)` over the scanned orbit.
    pub psi: f64,
}

/// Pointwise bound on the one-step decrease of `log C̄`.
pub fn psi_bound(a: &Matrix, rate: f64) -> f64 {
    (log_spectral_norm(a) - rate).max(0.0)
}

fn least_squares_slope(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    let mean_x = (n - 1.0) / 2.0;
    let mean_y = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in ys.iter().enumerate() {
        let dx = i as f64 - mean_x;
        sxy += dx * (y - mean_y);
        sxx += dx * dx;
    }
    sxy / sxx
}

/// Scan `C̄(f^n q)` for `n ≤ n_max`, each envelope truncated at `envelope_horizon`.
pub fn drift_check(
    handle: &CocycleHandle,
    q: &BasePoint,
    lambda: f64,
    epsilon: f64,
    n_max: u64,
    envelope_horizon: u64,
) -> Result<DriftReport, TemperError> {
    let rate = check_rate(lambda, epsilon)?;
    check_horizon(envelope_horizon)?;
    if n_max < 2 {
        return Err(TemperError::InvalidParameter(format!("n_max = {n_max} violates n_max >= 2")));
    }
    let (n_max, env) = (n_max as usize, envelope_horizon as usize);
    let orbit = OrbitMatrices::new(handle, q, n_max + env + 1)?;
    let mut log_c_bar = Vec::with_capacity(n_max + 1);
    for j in 0..=n_max + 1 {
        let e = orbit.envelope(j, env, rate);
        if !e.certified {
            return Err(TemperError::Unconverged(j as u64));
        }
        log_c_bar.push(e.log_value);
    }
    let mut max_step_excess = f64::NEG_INFINITY;
    let mut psi: f64 = 0.0;
    for j in 0..=n_max {
        let bound = psi_bound(&orbit.mats[j], rate);
        psi = psi.max(bound);
        max_step_excess = max_step_excess.max(log_c_bar[j] - log_c_bar[j + 1] - bound);
    }
    log_c_bar.truncate(n_max + 1);
    Ok(DriftReport {
        slope: least_squares_slope(&log_c_bar),
        final_rate: log_c_bar[n_max] / n_max as f64,
        log_c_bar,
        max_step_excess,
        psi,
    })
}

/// `C̄` and `T` along an orbit, with both tempered inequalities checked for
/// `n ≤ horizon/2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemperedEnvelope {
    pub lambda: f64,
    pub epsilon: f64,
    pub horizon: u64,
    /// `log C̄(f^j q)` for `j = 0..=horizon`.
    pub log_c_bar: Vec<f64>,
    /// `log T(f^j q)` for `j = 0..=horizon`.
    pub log_t: Vec<f64>,
    /// Largest `log‖𝒜(f^j q, n)‖ − log T(f^j q) − (λ+ε)n` over checked pairs.
    pub max_decay_excess: f64,
    /// Largest `log T(f^{j+n} q) − log T(f^j q) − εn` over checked pairs.
    pub max_growth_excess: f64,
    pub pairs_checked: u64,
}

pub fn build_tempered_envelope(
    handle: &CocycleHandle,
    q: &BasePoint,
    lambda: f64,
    epsilon: f64,
    horizon: u64,
    envelope_horizon: u64,
) -> Result<TemperedEnvelope, TemperError> {
    let rate = check_rate(lambda, epsilon)?;
    check_horizon(envelope_horizon)?;
    if horizon < 256 {
        return Err(TemperError::InvalidParameter(format!("horizon = {horizon} violates horizon >= 256")));
    }
    let (hz, env) = (horizon as usize, envelope_horizon as usize);
    let orbit = OrbitMatrices::new(handle, q, hz + env.max(hz / 2))?;
    let mut log_c_bar = Vec::with_capacity(hz + 1);
    for j in 0..=hz {
        let e = orbit.envelope(j, env, rate);
        if !e.certified {
            return Err(TemperError::Unconverged(j as u64));
        }
        log_c_bar.push(e.log_value);
    }
    // log T_j = max(log C̄_j, log T_{j+1} − ε), T_H = C̄_H
    let mut log_t = log_c_bar.clone();
    let mut arg = vec![0usize; hz + 1];
    for j in (0..hz).rev() {
        let from_next = log_t[j + 1] - epsilon;
        if from_next > log_c_bar[j] {
            log_t[j] = from_next;
            arg[j] = arg[j + 1] + 1;
        }
    }
    if arg[0] * 4 > 3 * hz {
        return Err(TemperError::HorizonTooSmall {
            argmax: arg[0] as u64,
            horizon,
        });
    }
    let half = hz / 2;
    let mut max_decay_excess = f64::NEG_INFINITY;
    let mut max_growth_excess = f64::NEG_INFINITY;
    let mut pairs = 0u64;
    for j in 0..=half {
        let logs = orbit.log_norms(j, half);
        for (n, l) in logs.iter().enumerate() {
            max_decay_excess = max_decay_excess.max(l - log_t[j] - rate * n as f64);
            if j + n <= hz {
                max_growth_excess = max_growth_excess.max(log_t[j + n] - log_t[j] - epsilon * n as f64);
            }
            pairs += 1;
        }
    }
    Ok(TemperedEnvelope {
        lambda,
        epsilon,
        horizon,
        log_c_bar,
        log_t,
        max_decay_excess,
        max_growth_excess,
        pairs_checked: pairs,
    })
}
