//! Largest Lyapunov exponent `lim (1/n) log ‖𝒜(q, n)‖`.
//!
//! Estimates average the rate of the full product over sampled orbits and
//! record the convergence trajectory at dyadic checkpoints. Closed forms are
//! available for constant generators and for diagonal families whose
//! Birkhoff averages reduce to integrals against the invariant measure.

use crate::base::{cylinder_measure, rational_approximation, BasePoint, BaseSystem, SystemKind};
use crate::cocycle::{CocycleError, CocycleHandle, GeneratorKind, ProductWalk, PropagatorWalk, TimeKind};
use crate::linalg::{max_real_eigenvalue, spectral_radius, Matrix};
use crate::quadrature::integrate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LyapunovError {
    #[error(transparent)]
    Cocycle(#[from] CocycleError),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateMode {
    MonteCarlo,
    BirkhoffClosedForm,
    ExactConstant,
}

/// Mean and spread of the orbit rates at one checkpoint.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub time: f64,
    pub mean: f64,
    pub dispersion: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    /// Nats per unit time; `-inf` when a sampled product vanished.
    pub value: f64,
    /// Largest time used (`n_max` or `t_max`).
    pub horizon: f64,
    /// Checkpoints at `horizon / 2^k`, ascending.
    pub trajectory: Vec<TrajectoryPoint>,
    /// `orbit_rates[i][j]` is `(1/t_j) log ‖𝒜(q_i, t_j)‖`.
    pub orbit_rates: Vec<Vec<f64>>,
    /// Population standard deviation of the final orbit rates.
    pub dispersion: f64,
    pub mode: EstimateMode,
    /// Some sampled product was exactly zero.
    pub degenerate: bool,
    /// Estimate of the time-one restriction over the same orbits (flows only).
    pub time_one_value: Option<f64>,
}

/// A closed-form exponent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormExponent {
    pub value: f64,
    pub mode: EstimateMode,
}

/// No closed form applies to this cocycle.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("no closed form: {0}")]
pub struct Unavailable(pub String);

/// Mean and population standard deviation. The mean is exact when all
/// values coincide; any `-inf` makes the mean `-inf` with zero spread.
pub(crate) fn mean_and_spread(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, 0.0);
    }
    if values.contains(&f64::NEG_INFINITY) {
        return (f64::NEG_INFINITY, 0.0);
    }
    let n = values.len() as f64;
    let first = values[0];
    let mean = first + values.iter().map(|v| v - first).sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn checkpoints(horizon: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut k = 0;
    loop {
        let t = horizon / 2f64.powi(k);
        if t < 1.0 {
            break;
        }
        out.push(t);
        k += 1;
    }
    out.reverse();
    out
}

/// Orbit starting points, drawn sequentially from one stream keyed by `seed`.
pub(crate) fn sample_starts(system: &BaseSystem, count: usize, seed: u64) -> Vec<BasePoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| system.sample_with(&mut rng)).collect()
}

fn summarize(
    horizon: f64,
    times: &[f64],
    orbit_rates: Vec<Vec<f64>>,
    time_one_value: Option<f64>,
) -> LyapunovEstimate {
    let trajectory: Vec<TrajectoryPoint> = times
        .iter()
        .enumerate()
        .map(|(j, &time)| {
            let column: Vec<f64> = orbit_rates.iter().map(|r| r[j]).collect();
            let (mean, dispersion) = mean_and_spread(&column);
            TrajectoryPoint { time, mean, dispersion }
        })
        .collect();
    let last = *trajectory.last().expect("at least one checkpoint");
    LyapunovEstimate {
        value: last.mean,
        horizon,
        degenerate: orbit_rates.iter().any(|r| r.contains(&f64::NEG_INFINITY)),
        trajectory,
        orbit_rates,
        dispersion: last.dispersion,
        mode: EstimateMode::MonteCarlo,
        time_one_value,
    }
}

/// Monte Carlo estimate of the exponent of a discrete cocycle.
pub fn estimate_exponent(
    handle: &CocycleHandle,
    orbits: usize,
    n_max: u64,
    seed: u64,
) -> Result<LyapunovEstimate, LyapunovError> {
    if n_max < 8 {
        return Err(LyapunovError::InvalidParameter(format!("n_max = {n_max} must be >= 8")));
    }
    if orbits == 0 {
        return Err(LyapunovError::InvalidParameter("orbits must be >= 1".into()));
    }
    if !handle.is_discrete() {
        return Err(CocycleError::NotDiscrete.into());
    }
    let times = checkpoints(n_max as f64);
    let marks: Vec<u64> = times.iter().map(|t| *t as u64).collect();
    let starts = sample_starts(handle.base(), orbits, seed);
    let orbit_rates = starts
        .par_iter()
        .map(|q| -> Result<Vec<f64>, CocycleError> {
            let mut walk = ProductWalk::new(handle, q)?;
            let mut rates = Vec::with_capacity(marks.len());
            for &m in &marks {
                while walk.steps() < m {
                    walk.advance()?;
                }
                rates.push(walk.log_norm() / m as f64);
            }
            Ok(rates)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(summarize(n_max as f64, &times, orbit_rates, None))
}

/// Monte Carlo estimate of the exponent of a continuous cocycle, with the
/// time-one restriction estimated over the same orbits for comparison.
pub fn estimate_exponent_flow(
    handle: &CocycleHandle,
    orbits: usize,
    t_max: f64,
    seed: u64,
) -> Result<LyapunovEstimate, LyapunovError> {
    if !(t_max >= 8.0 && t_max.is_finite()) {
        return Err(LyapunovError::InvalidParameter(format!("t_max = {t_max} must be >= 8")));
    }
    if orbits == 0 {
        return Err(LyapunovError::InvalidParameter("orbits must be >= 1".into()));
    }
    if !handle.is_continuous() {
        return Err(CocycleError::NotContinuous.into());
    }
    let times = checkpoints(t_max);
    let starts = sample_starts(handle.base(), orbits, seed);
    let orbit_rates = starts
        .par_iter()
        .map(|q| -> Result<Vec<f64>, CocycleError> {
            let mut walk = PropagatorWalk::new(handle, q)?;
            let mut rates = Vec::with_capacity(times.len());
            for &t in &times {
                walk.advance_to(t)?;
                rates.push(walk.log_norm() / t);
            }
            Ok(rates)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let discrete = handle.time_one_restriction()?;
    let time_one = estimate_exponent(&discrete, orbits, t_max.floor() as u64, seed)?;
    Ok(summarize(t_max, &times, orbit_rates, Some(time_one.value)))
}

fn log_abs(v: f64) -> f64 {
    if v == 0.0 {
        f64::NEG_INFINITY
    } else {
        v.abs().ln()
    }
}

/// Words of length `depth` with their cylinder measures (zero-measure words
/// dropped).
fn weighted_words(system: &BaseSystem, depth: usize) -> Option<Vec<(usize, f64)>> {
    let k = system.alphabet()?;
    let total = k.checked_pow(depth as u32)?;
    let mut out = Vec::new();
    let mut word = vec![0u8; depth];
    for idx in 0..total {
        let mut r = idx;
        for i in (0..depth).rev() {
            word[i] = (r % k) as u8;
            r /= k;
        }
        let m = cylinder_measure(system, &word)?;
        if m > 0.0 {
            out.push((idx, m));
        }
    }
    Some(out)
}

/// `max_i Σ_w μ[w] f(A_w[i,i])`.
fn diagonal_average(system: &BaseSystem, depth: usize, matrices: &[Matrix], f: impl Fn(f64) -> f64) -> Option<f64> {
    let words = weighted_words(system, depth)?;
    let d = matrices[0].nrows();
    (0..d)
        .map(|i| {
            words.iter().fold(0.0, |acc, &(idx, m)| acc + m * f(matrices[idx][(i, i)]))
        })
        .reduce(f64::max)
}

fn is_ergodic_circle(system: &BaseSystem) -> bool {
    match system.kind() {
        SystemKind::Doubling => true,
        SystemKind::Rotation { angle } => rational_approximation(*angle, 10_000, 1e-12).is_none(),
        _ => false,
    }
}

const PANELS: usize = 64;
const ORDER: usize = 16;

/// Exponent in closed form, or [`Unavailable`] when none applies.
pub fn closed_form_exponent(handle: &CocycleHandle) -> Result<ClosedFormExponent, Unavailable> {
    let generator = handle.generator();
    let d = generator.dim();
    let birkhoff = |value| ClosedFormExponent {
        value,
        mode: EstimateMode::BirkhoffClosedForm,
    };
    match handle.time() {
        TimeKind::Discrete => {
            if let Some(a) = generator.constant_value() {
                let rho = spectral_radius(&a);
                return Ok(ClosedFormExponent {
                    value: log_abs(rho),
                    mode: EstimateMode::ExactConstant,
                });
            }
            if !generator.is_diagonal() {
                return Err(Unavailable("generator is neither constant nor diagonal".into()));
            }
            let base = handle.base();
            match generator.kind() {
                GeneratorKind::LocallyConstant { depth, matrices, .. } => diagonal_average(base, *depth, matrices, log_abs)
                    .map(birkhoff)
                    .ok_or_else(|| Unavailable("measure has no exact cylinder weights".into())),
                GeneratorKind::ClosedForm(entries) if is_ergodic_circle(base) => {
                    let value = (0..d)
                        .map(|i| integrate(|x| log_abs(entries[i * d + i].eval(x, 0.0)), 0.0, 1.0, PANELS, ORDER))
                        .fold(f64::NEG_INFINITY, f64::max);
                    Ok(birkhoff(value))
                }
                _ => Err(Unavailable("no invariant-measure integral for this base".into())),
            }
        }
        TimeKind::Continuous { .. } | TimeKind::TimeOne { .. } => {
            if let Some(g) = generator.constant_value() {
                return Ok(ClosedFormExponent {
                    value: max_real_eigenvalue(&g),
                    mode: EstimateMode::ExactConstant,
                });
            }
            if !generator.is_diagonal() {
                return Err(Unavailable("field is neither constant nor diagonal".into()));
            }
            let (base, roof) = handle
                .base()
                .suspension_parts()
                .ok_or_else(|| Unavailable("flow without a suspension base".into()))?;
            let r = roof
                .as_constant()
                .ok_or_else(|| Unavailable("non-constant roof".into()))?;
            match generator.kind() {
                GeneratorKind::LocallyConstant { depth, matrices, .. } => diagonal_average(base, *depth, matrices, |v| v)
                    .map(birkhoff)
                    .ok_or_else(|| Unavailable("measure has no exact cylinder weights".into())),
                GeneratorKind::ClosedForm(entries) if is_ergodic_circle(base) => {
                    let value = (0..d)
                        .map(|i| {
                            let e = &entries[i * d + i];
                            integrate(|x| integrate(|s| e.eval(x, s), 0.0, r, 8, ORDER), 0.0, 1.0, PANELS, ORDER) / r
                        })
                        .fold(f64::NEG_INFINITY, f64::max);
                    Ok(birkhoff(value))
                }
                _ => Err(Unavailable("no invariant-measure integral for this base".into())),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base::BaseSystem;
    use crate::cocycle::{Generator, DEFAULT_STEP};
    use crate::expr::Expr;

    fn diag(a: f64, b: f64) -> Matrix {
        Matrix::from_diagonal(&crate::linalg::Vector::from_vec(vec![a, b]))
    }

    fn bernoulli_diagonal() -> CocycleHandle {
        let base = BaseSystem::full_shift(vec![0.5, 0.5]).unwrap();
        let g = Generator::locally_constant(2, 1, vec![diag(0.9, 0.2), diag(0.3, 0.8)]).unwrap();
        CocycleHandle::discrete(base, g).unwrap()
    }

    #[test]
    fn constant_scalar_is_exact() {
        let base = BaseSystem::full_shift(vec![0.5, 0.5]).unwrap();
        let h = CocycleHandle::discrete(base, Generator::scalar_identity(0.5, 2)).unwrap();
        let e = estimate_exponent(&h, 8, 64, 1).unwrap();
        for p in &e.trajectory {
            assert!((p.mean - 0.5f64.ln()).abs() < 1e-15);
            assert_eq!(p.dispersion, 0.0);
        }
        assert_eq!(e.trajectory.iter().map(|p| p.time).collect::<Vec<_>>(), vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0]);
        assert_eq!(closed_form_exponent(&h).unwrap().mode, EstimateMode::ExactConstant);
    }

    #[test]
    fn diagonal_bernoulli_matches_closed_form() {
        let h = bernoulli_diagonal();
        let exact = closed_form_exponent(&h).unwrap();
        let oracle = (0.5 * (0.9f64.ln() + 0.3f64.ln())).max(0.5 * (0.2f64.ln() + 0.8f64.ln()));
        assert!((exact.value - oracle).abs() < 1e-15);
        let orbits = 16;
        let n = 1u64 << 14;
        let e = estimate_exponent(&h, orbits, n, 7).unwrap();
        assert!((e.value - oracle).abs() < 0.01);
        let budget = 5.0 / ((orbits as f64) * n as f64).sqrt() + 10.0 / n as f64;
        assert!((e.value - oracle).abs() <= budget);
    }

    #[test]
    fn weighted_scalar_closed_form() {
        let base = BaseSystem::full_shift(vec![0.3, 0.7]).unwrap();
        let g = Generator::locally_constant(2, 1, vec![Matrix::from_element(1, 1, 2.0), Matrix::from_element(1, 1, 0.25)]).unwrap();
        let h = CocycleHandle::discrete(base, g).unwrap();
        let v = closed_form_exponent(&h).unwrap().value;
        assert!((v - (0.3 * 2f64.ln() + 0.7 * 0.25f64.ln())).abs() < 1e-15);
    }

    #[test]
    fn triangular_constant_uses_spectral_radius() {
        let base = BaseSystem::full_shift(vec![1.0]).unwrap();
        let a = Matrix::from_row_slice(2, 2, &[0.5, 1.0, 0.0, 0.5]);
        let h = CocycleHandle::discrete(base, Generator::constant(a).unwrap()).unwrap();
        assert!((closed_form_exponent(&h).unwrap().value - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn rotation_scalar_birkhoff() {
        let base = BaseSystem::rotation((5f64.sqrt() - 1.0) / 2.0).unwrap();
        let g = Generator::closed_form(1, vec![Expr::parse("exp(-1 + 0.5*cos(2*pi*x))").unwrap()]).unwrap();
        let h = CocycleHandle::discrete(base, g).unwrap();
        let exact = closed_form_exponent(&h).unwrap().value;
        assert!((exact + 1.0).abs() < 1e-13);
        let e = estimate_exponent(&h, 4, 4096, 3).unwrap();
        assert!((e.value + 1.0).abs() < 1e-3, "{}", e.value);
    }

    #[test]
    fn dispersion_shrinks_on_doubling_map() {
        let base = BaseSystem::doubling();
        let g = Generator::closed_form(1, vec![Expr::parse("exp(cos(2*pi*x))").unwrap()]).unwrap();
        let h = CocycleHandle::discrete(base, g).unwrap();
        let e = estimate_exponent(&h, 32, 1 << 12, 5).unwrap();
        let spread: Vec<f64> = e.trajectory.iter().map(|p| p.dispersion).collect();
        assert!(spread.last().unwrap() < &(spread[4] / 4.0));
        assert!(e.value.abs() < 0.05);
    }

    #[test]
    fn scale_equivariance() {
        let h = bernoulli_diagonal();
        let a = estimate_exponent(&h, 4, 512, 9).unwrap();
        let b = estimate_exponent(&h.scaled(3.0), 4, 512, 9).unwrap();
        assert!((b.value - a.value - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_product_is_flagged() {
        let base = BaseSystem::full_shift(vec![0.5, 0.5]).unwrap();
        let nil = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let h = CocycleHandle::discrete(base, Generator::constant(nil).unwrap()).unwrap();
        let e = estimate_exponent(&h, 2, 8, 0).unwrap();
        assert!(e.degenerate);
        assert_eq!(e.value, f64::NEG_INFINITY);
    }

    #[test]
    fn rejects_small_budgets() {
        let h = bernoulli_diagonal();
        assert!(estimate_exponent(&h, 1, 7, 0).is_err());
        assert!(estimate_exponent(&h, 0, 8, 0).is_err());
    }

    fn flow(expr: &str) -> CocycleHandle {
        let base = BaseSystem::promote(BaseSystem::rotation((5f64.sqrt() - 1.0) / 2.0).unwrap()).unwrap();
        let g = Generator::closed_form(1, vec![Expr::parse(expr).unwrap()]).unwrap();
        CocycleHandle::continuous(base, g, DEFAULT_STEP).unwrap()
    }

    #[test]
    fn flow_exponents() {
        let h = flow("-1");
        let e = estimate_exponent_flow(&h, 2, 8.0, 1).unwrap();
        assert!((e.value + 1.0).abs() < 1e-8);
        assert!((e.time_one_value.unwrap() - e.value).abs() < 1e-6);
        assert_eq!(closed_form_exponent(&h).unwrap().value, -1.0);

        let alpha = (5f64.sqrt() - 1.0) / 2.0;
        let h = flow(&format!("-1 + sin(2*pi*(x + {alpha:?}*s))"));
        let exact = closed_form_exponent(&h).unwrap().value;
        assert!((exact + 1.0).abs() < 1e-12);
        let e = estimate_exponent_flow(&h, 2, 1024.0, 2).unwrap();
        assert!((e.value + 1.0).abs() < 1e-3, "{}", e.value);
    }
}
