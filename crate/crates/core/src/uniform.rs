//! Uniform exponential stability through the maximal growth
//! `a_n = max_q log ‖𝒜(q,n)‖`.
//!
//! The sequence `a_n` is subadditive, so every `a_n / n` bounds the maximal
//! growth rate `β` from above while every periodic orbit bounds it from
//! below. A negative `a_{n*}` yields constants `D, λ > 0` with
//! `‖𝒜(q,n)‖ ≤ D e^{−λn}` for all `q` and `n`.

use crate::base::{BaseError, BasePoint, BaseSystem, SystemKind};
use crate::cocycle::{CocycleError, CocycleHandle, GeneratorKind, ProductWalk, PropagatorWalk};
use crate::linalg::{max_real_eigenvalue, spectral_radius, Matrix, ScaledMatrix};
use crate::lyapunov::sample_starts;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Longest word length searched in exact mode.
pub const EXACT_MAX_N: usize = 24;
/// Largest number of tree nodes visited by certificate verification.
pub const VERIFY_NODE_LIMIT: u64 = 1 << 26;
/// Samples per unit time in the continuous-time decision.
pub const FLOW_RESOLUTION: usize = 8;
/// Slack allowed for rounding in norm comparisons.
const ROUNDING: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UniformError {
    #[error(transparent)]
    Cocycle(#[from] CocycleError),
    #[error("exact mode unsupported: {0}")]
    Unsupported(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl From<BaseError> for UniformError {
    fn from(e: BaseError) -> Self {
        UniformError::Cocycle(e.into())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decision {
    UniformlyStable,
    NotUniformlyStable,
    Inconclusive,
}

/// How the maximum over the base was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GrowthMode {
    /// True maximum by word enumeration.
    Exact,
    /// Maximum over random points; a lower bound.
    Sampled,
    /// Maximum over a grid of base points; a lower bound.
    Grid,
}

/// Requested way of computing `a_n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampling {
    Exact,
    Sampled { points: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxGrowth {
    pub n: usize,
    pub value: f64,
    pub mode: GrowthMode,
    /// A maximizing cylinder word (exact mode over symbolic bases).
    pub word: Option<Vec<u8>>,
    /// Cylinders or points evaluated.
    pub evaluated: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthBound {
    pub n: f64,
    pub a_n: f64,
    /// `a_n / n`
    pub rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeketeBounds {
    pub mode: GrowthMode,
    pub entries: Vec<GrowthBound>,
    /// Smallest `a_n / n`; an upper bound for `β` in exact mode.
    pub min_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicRate {
    pub orbit: String,
    pub period: f64,
    /// `log ρ(𝒜(q, period)) / period`
    pub rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Witness {
    Stable { n_star: f64, a_star: f64, d: f64, lambda: f64 },
    Unstable { orbit: String, period: f64, rate: f64 },
}

/// Check of `‖𝒜(q,n)‖ ≤ D e^{−λn}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub horizon: f64,
    pub checked: u64,
    pub violations: u64,
    /// Largest `log ‖𝒜(q,n)‖ − (log D − λn)`.
    pub max_excess: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityCertificate {
    pub decision: Decision,
    pub mode: GrowthMode,
    pub witness: Option<Witness>,
    pub upper_bounds: Vec<GrowthBound>,
    pub lower_bounds: Vec<PeriodicRate>,
    pub min_upper: f64,
    pub max_lower: f64,
    pub verification: Option<Verification>,
}

/// Locally-constant generator over a symbolic base, restricted to symbols
/// that start an infinite admissible path.
struct WordModel {
    k: usize,
    depth: usize,
    dim: usize,
    matrices: Vec<Matrix>,
    allowed: Vec<Vec<bool>>,
    essential: Vec<bool>,
}

impl WordModel {
    fn new(handle: &CocycleHandle) -> Result<Self, UniformError> {
        let system = handle.base();
        let GeneratorKind::LocallyConstant { alphabet, depth, matrices } = handle.generator().kind() else {
            return Err(UniformError::Unsupported("generator is not locally constant".into()));
        };
        if !system.is_symbolic() || system.alphabet() != Some(*alphabet) {
            return Err(UniformError::Unsupported("base is not a shift on the generator's alphabet".into()));
        }
        let k = *alphabet;
        let allowed: Vec<Vec<bool>> = (0..k)
            .map(|a| (0..k).map(|b| system.allowed(a as u8, b as u8)).collect())
            .collect();
        let mut essential = vec![true; k];
        loop {
            let next: Vec<bool> = (0..k)
                .map(|a| essential[a] && (0..k).any(|b| allowed[a][b] && essential[b]))
                .collect();
            if next == essential {
                break;
            }
            essential = next;
        }
        Ok(WordModel {
            k,
            depth: *depth,
            dim: handle.dim(),
            matrices: matrices.clone(),
            allowed,
            essential,
        })
    }

    fn successors(&self, word: &[u8]) -> impl Iterator<Item = u8> + '_ {
        let last = word.last().copied();
        (0..self.k as u8).filter(move |&s| {
            self.essential[s as usize] && last.is_none_or(|a| self.allowed[a as usize][s as usize])
        })
    }

    /// Generator value on the window ending at the last symbol of `word`.
    fn window_matrix(&self, word: &[u8]) -> &Matrix {
        let idx = word[word.len() - self.depth..]
            .iter()
            .fold(0usize, |acc, &s| acc * self.k + s as usize);
        &self.matrices[idx]
    }

    /// Steps covered by a word of length `len`.
    fn steps(&self, len: usize) -> usize {
        (len + 1).saturating_sub(self.depth)
    }

    /// Extend `word` by `s`, updating the product once a window is complete.
    fn push(&self, word: &mut Vec<u8>, product: &mut ScaledMatrix, s: u8) {
        word.push(s);
        if word.len() >= self.depth {
            product.left_mul(self.window_matrix(word));
        }
    }

    /// All admissible words of length `len`.
    fn words(&self, len: usize) -> Vec<Vec<u8>> {
        let mut out = vec![Vec::new()];
        for _ in 0..len {
            out = out
                .iter()
                .flat_map(|w| {
                    self.successors(w).map(move |s| {
                        let mut v = w.clone();
                        v.push(s);
                        v
                    })
                })
                .collect();
        }
        out
    }

    fn prefix_len(&self, len: usize) -> usize {
        let mut l = 0;
        let mut count = 1usize;
        while l < len && count < 64 {
            count *= self.k;
            l += 1;
        }
        l
    }

    /// Exact `a_n` by branch and bound, using `known[m] = a_m` for `m < n`.
    fn max_growth(&self, n: usize, known: &[f64]) -> MaxGrowth {
        let len = n + self.depth - 1;
        let prefixes = self.words(self.prefix_len(len));
        let results: Vec<(f64, Vec<u8>, u64)> = prefixes
            .par_iter()
            .map(|prefix| {
                let mut word = Vec::with_capacity(len);
                let mut product = ScaledMatrix::identity(self.dim);
                for &s in prefix {
                    self.push(&mut word, &mut product, s);
                }
                let mut best = (f64::NEG_INFINITY, Vec::new(), 0u64);
                self.search(n, len, known, &mut word, &product, &mut best);
                best
            })
            .collect();
        let mut best = (f64::NEG_INFINITY, Vec::new());
        let mut evaluated = 0;
        for (v, w, c) in results {
            evaluated += c;
            if best.1.is_empty() && !w.is_empty() || v > best.0 {
                best = (v, w);
            }
        }
        MaxGrowth {
            n,
            value: best.0,
            mode: GrowthMode::Exact,
            word: Some(best.1),
            evaluated,
        }
    }

    fn search(
        &self,
        n: usize,
        len: usize,
        known: &[f64],
        word: &mut Vec<u8>,
        product: &ScaledMatrix,
        best: &mut (f64, Vec<u8>, u64),
    ) {
        if word.len() == len {
            best.2 += 1;
            let v = product.log_norm();
            if best.1.is_empty() || v > best.0 {
                best.0 = v;
                best.1 = word.clone();
            }
            return;
        }
        let done = self.steps(word.len());
        if done > 0 && !best.1.is_empty() {
            // ‖𝒜(q,n)‖ ≤ ‖𝒜(f^k q, n−k)‖ ‖𝒜(q,k)‖
            let bound = product.log_norm() + known[n - done];
            if bound < best.0 - ROUNDING {
                return;
            }
        }
        let next: Vec<u8> = self.successors(word).collect();
        for s in next {
            let mut p = product.clone();
            self.push(word, &mut p, s);
            self.search(n, len, known, word, &p, best);
            word.pop();
        }
    }

    /// Check `log ‖𝒜(q,k)‖ ≤ log D − λk` on every cylinder with `k ≤ horizon`.
    fn verify(&self, horizon: usize, log_d: f64, lambda: f64) -> Verification {
        let len = horizon + self.depth - 1;
        let plen = self.prefix_len(len);
        let walk_to = |w: &[u8]| {
            let mut word = Vec::with_capacity(len);
            let mut product = ScaledMatrix::identity(self.dim);
            for &s in w {
                self.push(&mut word, &mut product, s);
            }
            (word, product)
        };
        // nodes shorter than the parallel prefixes are checked once here
        let mut acc = (0u64, 0u64, f64::NEG_INFINITY);
        for l in 1..plen {
            for w in self.words(l) {
                let (word, product) = walk_to(&w);
                self.check(&word, &product, log_d, lambda, &mut acc);
            }
        }
        let parts: Vec<(u64, u64, f64)> = self
            .words(plen)
            .par_iter()
            .map(|prefix| {
                let (mut word, product) = walk_to(prefix);
                let mut acc = (0u64, 0u64, f64::NEG_INFINITY);
                self.check(&word, &product, log_d, lambda, &mut acc);
                self.verify_below(len, &mut word, &product, log_d, lambda, &mut acc);
                acc
            })
            .collect();
        for (c, v, e) in parts {
            acc.0 += c;
            acc.1 += v;
            acc.2 = acc.2.max(e);
        }
        Verification {
            horizon: horizon as f64,
            checked: acc.0,
            violations: acc.1,
            max_excess: acc.2,
        }
    }

    fn check(&self, word: &[u8], product: &ScaledMatrix, log_d: f64, lambda: f64, acc: &mut (u64, u64, f64)) {
        let k = self.steps(word.len());
        if k == 0 {
            return;
        }
        let excess = product.log_norm() - (log_d - lambda * k as f64);
        acc.0 += 1;
        if excess > ROUNDING {
            acc.1 += 1;
        }
        acc.2 = acc.2.max(excess);
    }

    fn verify_below(
        &self,
        len: usize,
        word: &mut Vec<u8>,
        product: &ScaledMatrix,
        log_d: f64,
        lambda: f64,
        acc: &mut (u64, u64, f64),
    ) {
        if word.len() == len {
            return;
        }
        let next: Vec<u8> = self.successors(word).collect();
        for s in next {
            let mut p = product.clone();
            self.push(word, &mut p, s);
            self.check(word, &p, log_d, lambda, acc);
            self.verify_below(len, word, &p, log_d, lambda, acc);
            word.pop();
        }
    }

    /// Nodes in the tree of admissible words up to length `len`.
    fn node_count(&self, len: usize) -> u64 {
        // count paths with a transfer vector, saturating
        let mut counts: Vec<u64> = (0..self.k).map(|s| u64::from(self.essential[s])).collect();
        let mut total: u64 = counts.iter().sum();
        for _ in 1..len {
            counts = (0..self.k)
                .map(|b| {
                    if !self.essential[b] {
                        return 0;
                    }
                    (0..self.k)
                        .filter(|&a| self.allowed[a][b])
                        .fold(0u64, |acc, a| acc.saturating_add(counts[a]))
                })
                .collect();
            total = counts.iter().fold(total, |acc, &c| acc.saturating_add(c));
        }
        total
    }
}

/// Growth source: point-independent, word enumeration or sampled points.
enum Growth {
    Constant(Matrix),
    Words(WordModel),
    Sampled(Vec<BasePoint>),
}

impl Growth {
    fn new(handle: &CocycleHandle, sampling: Sampling) -> Result<Self, UniformError> {
        if !handle.is_discrete() {
            return Err(CocycleError::NotDiscrete.into());
        }
        match sampling {
            Sampling::Exact => match handle.generator().constant_value() {
                Some(m) => Ok(Growth::Constant(m)),
                None => Ok(Growth::Words(WordModel::new(handle)?)),
            },
            Sampling::Sampled { points, seed } => {
                if points == 0 {
                    return Err(UniformError::InvalidParameter("points = 0 violates points >= 1".into()));
                }
                Ok(Growth::Sampled(sample_starts(handle.base(), points, seed)))
            }
        }
    }

    fn mode(&self) -> GrowthMode {
        match self {
            Growth::Sampled(_) => GrowthMode::Sampled,
            _ => GrowthMode::Exact,
        }
    }

    /// `a_1, …, a_n`.
    fn table(&self, handle: &CocycleHandle, n: usize) -> Result<Vec<MaxGrowth>, UniformError> {
        match self {
            Growth::Constant(m) => {
                let mut p = ScaledMatrix::identity(m.nrows());
                Ok((1..=n)
                    .map(|j| {
                        p.left_mul(m);
                        MaxGrowth {
                            n: j,
                            value: p.log_norm(),
                            mode: GrowthMode::Exact,
                            word: None,
                            evaluated: 1,
                        }
                    })
                    .collect())
            }
            Growth::Words(model) => {
                if n > EXACT_MAX_N {
                    return Err(UniformError::InvalidParameter(format!(
                        "n = {n} violates n <= {EXACT_MAX_N} in exact mode"
                    )));
                }
                let mut known = vec![0.0];
                let mut out = Vec::with_capacity(n);
                for j in 1..=n {
                    let g = model.max_growth(j, &known);
                    known.push(g.value);
                    out.push(g);
                }
                Ok(out)
            }
            Growth::Sampled(points) => {
                let rows: Vec<Vec<f64>> = points
                    .par_iter()
                    .map(|q| {
                        let mut walk = ProductWalk::new(handle, q)?;
                        let mut row = Vec::with_capacity(n);
                        for _ in 0..n {
                            walk.advance()?;
                            row.push(walk.log_norm());
                        }
                        Ok(row)
                    })
                    .collect::<Result<_, CocycleError>>()?;
                Ok((0..n)
                    .map(|j| MaxGrowth {
                        n: j + 1,
                        value: rows.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max),
                        mode: GrowthMode::Sampled,
                        word: None,
                        evaluated: rows.len() as u64,
                    })
                    .collect())
            }
        }
    }
}

/// `a_n = max_q log ‖𝒜(q,n)‖`, exact or as a sampled lower bound.
pub fn max_growth(handle: &CocycleHandle, n: usize, sampling: Sampling) -> Result<MaxGrowth, UniformError> {
    if n == 0 {
        return Err(UniformError::InvalidParameter("n = 0 violates n >= 1".into()));
    }
    let growth = Growth::new(handle, sampling)?;
    Ok(growth.table(handle, n)?.pop().expect("n >= 1"))
}

fn bounds_from(table: &[MaxGrowth], n_list: &[usize], mode: GrowthMode) -> FeketeBounds {
    let entries: Vec<GrowthBound> = n_list
        .iter()
        .map(|&n| {
            let a = table[n - 1].value;
            GrowthBound { n: n as f64, a_n: a, rate: a / n as f64 }
        })
        .collect();
    let min_rate = entries.iter().map(|e| e.rate).fold(f64::INFINITY, f64::min);
    FeketeBounds { mode, entries, min_rate }
}

/// `a_n / n` for each `n` in `n_list`.
pub fn fekete_upper_bounds(handle: &CocycleHandle, n_list: &[usize], sampling: Sampling) -> Result<FeketeBounds, UniformError> {
    let Some(&n_max) = n_list.iter().max() else {
        return Err(UniformError::InvalidParameter("n_list must be nonempty".into()));
    };
    if n_list.contains(&0) {
        return Err(UniformError::InvalidParameter("n = 0 violates n >= 1".into()));
    }
    let growth = Growth::new(handle, sampling)?;
    let table = growth.table(handle, n_max)?;
    Ok(bounds_from(&table, n_list, growth.mode()))
}

fn orbit_label(word: &Option<Vec<u8>>, start: &BasePoint) -> String {
    match word {
        Some(w) => w.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(""),
        None => start.to_string(),
    }
}

fn log_spectral_radius(m: &ScaledMatrix) -> f64 {
    if m.is_zero() {
        return f64::NEG_INFINITY;
    }
    let r = spectral_radius(m.unit());
    if r == 0.0 {
        f64::NEG_INFINITY
    } else {
        m.logscale() + r.ln()
    }
}

/// Per-unit-time log spectral radius over every periodic orbit up to
/// `max_period`; each is a lower bound for `β`.
pub fn periodic_lower_bounds(handle: &CocycleHandle, max_period: usize) -> Result<Vec<PeriodicRate>, UniformError> {
    let system = handle.base();
    let orbits = match system.enumerate_periodic_orbits(max_period) {
        Ok(o) => o,
        Err(BaseError::Unsupported(_)) => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    let mut out: Vec<PeriodicRate> = orbits
        .par_iter()
        .map(|o| {
            let product = if handle.is_discrete() {
                handle.evaluate_product(&o.start, o.period as u64)?
            } else {
                handle.evaluate_propagator(&o.start, o.time)?
            };
            Ok(PeriodicRate {
                orbit: orbit_label(&o.word, &o.start),
                period: o.time,
                rate: log_spectral_radius(&product) / o.time,
            })
        })
        .collect::<Result<_, CocycleError>>()?;
    if let Some(m) = handle.generator().constant_value() {
        // every invariant measure has the same exponent
        let rate = if handle.is_discrete() {
            log_spectral_radius(&ScaledMatrix::from_matrix(m))
        } else {
            max_real_eigenvalue(&m)
        };
        out.push(PeriodicRate {
            orbit: "any".into(),
            period: 1.0,
            rate,
        });
    }
    Ok(out)
}

fn unstable_witness(lower: &[PeriodicRate]) -> Option<Witness> {
    lower
        .iter()
        .filter(|r| r.rate >= 0.0)
        .fold(None::<&PeriodicRate>, |best, r| match best {
            Some(b) if b.rate >= r.rate => Some(b),
            _ => Some(r),
        })
        .map(|r| Witness::Unstable {
            orbit: r.orbit.clone(),
            period: r.period,
            rate: r.rate,
        })
}

fn max_rate(lower: &[PeriodicRate]) -> f64 {
    lower.iter().map(|r| r.rate).fold(f64::NEG_INFINITY, f64::max)
}

/// Tri-state decision for a discrete cocycle.
///
/// Stable when some exact `a_{n*} < 0` with `n* ≤ n_budget`; then
/// `λ = −a_{n*}/(2n*)` and `D = exp(max_{n<2n*}(a_n + λn))`.
/// Not stable when a periodic orbit up to `period_budget` has rate `≥ 0`.
pub fn decide_uniform_stability(
    handle: &CocycleHandle,
    n_budget: usize,
    period_budget: usize,
    sampling: Sampling,
) -> Result<StabilityCertificate, UniformError> {
    if n_budget == 0 {
        return Err(UniformError::InvalidParameter("n_budget = 0 violates n_budget >= 1".into()));
    }
    let growth = Growth::new(handle, sampling)?;
    let table = growth.table(handle, n_budget)?;
    let lower = periodic_lower_bounds(handle, period_budget)?;
    let n_list: Vec<usize> = (1..=n_budget).collect();
    let upper = bounds_from(&table, &n_list, growth.mode());
    let mut cert = StabilityCertificate {
        decision: Decision::Inconclusive,
        mode: growth.mode(),
        witness: None,
        upper_bounds: upper.entries,
        lower_bounds: lower,
        min_upper: upper.min_rate,
        max_lower: f64::NEG_INFINITY,
        verification: None,
    };
    cert.max_lower = max_rate(&cert.lower_bounds);
    let n_star = match growth {
        Growth::Sampled(_) => None,
        _ => table.iter().position(|g| g.value < 0.0).map(|i| i + 1),
    };
    if let Some(n_star) = n_star {
        let a_star = table[n_star - 1].value;
        let lambda = -a_star / (2.0 * n_star as f64);
        // for n* ≤ n < 2n*, a_n + λn ≤ a_{n−n*} + λ(n−n*) + (a_{n*} + λn*)
        // and the last term is negative, so the maximum is attained below n*
        let log_d = (1..n_star)
            .map(|n| table[n - 1].value + lambda * n as f64)
            .fold(0.0, f64::max);
        cert.decision = Decision::UniformlyStable;
        cert.witness = Some(Witness::Stable {
            n_star: n_star as f64,
            a_star,
            d: log_d.exp(),
            lambda,
        });
        cert.verification = match &growth {
            Growth::Words(model) if model.node_count(2 * n_star + model.depth - 1) <= VERIFY_NODE_LIMIT => {
                Some(model.verify(2 * n_star, log_d, lambda))
            }
            Growth::Constant(m) => Some(verify_constant(m, 2 * n_star, log_d, lambda)),
            _ => None,
        };
    } else if let Some(w) = unstable_witness(&cert.lower_bounds) {
        cert.decision = Decision::NotUniformlyStable;
        cert.witness = Some(w);
    }
    Ok(cert)
}

fn verify_constant(m: &Matrix, horizon: usize, log_d: f64, lambda: f64) -> Verification {
    let mut p = ScaledMatrix::identity(m.nrows());
    let mut out = Verification {
        horizon: horizon as f64,
        checked: 0,
        violations: 0,
        max_excess: f64::NEG_INFINITY,
    };
    for n in 1..=horizon {
        p.left_mul(m);
        let excess = p.log_norm() - (log_d - lambda * n as f64);
        out.checked += 1;
        out.violations += u64::from(excess > ROUNDING);
        out.max_excess = out.max_excess.max(excess);
    }
    out
}

/// Grid of base points for the continuous-time decision: evenly spaced
/// circle coordinates at height zero, random points otherwise.
pub fn flow_grid(system: &BaseSystem, count: usize, seed: u64) -> Result<Vec<BasePoint>, UniformError> {
    let circle = |s: &BaseSystem| matches!(s.kind(), SystemKind::Rotation { .. });
    if let Some((base, _)) = system.suspension_parts() {
        if circle(base) {
            return (0..count)
                .map(|i| {
                    let b = base.circle_point((i as f64 + 0.5) / count as f64)?;
                    Ok(system.suspended_point(b, 0.0)?)
                })
                .collect();
        }
    } else if circle(system) {
        return (0..count)
            .map(|i| Ok(system.circle_point((i as f64 + 0.5) / count as f64)?))
            .collect();
    }
    Ok(sample_starts(system, count, seed))
}

/// Tri-state decision for a semi-flow cocycle from grid maxima of
/// `log ‖𝒜(q,t)‖`, sampled [`FLOW_RESOLUTION`] times per unit time.
///
/// Stable when the grid maximum at some integer `t* ≤ t_budget` is below
/// `−δ(t*)`, with `δ(t) = t (h L)^4` the integrator error budget for step
/// `h` and sampled generator bound `L`.
pub fn decide_uniform_stability_flow(
    handle: &CocycleHandle,
    t_budget: usize,
    grid: usize,
    period_budget: usize,
    seed: u64,
) -> Result<StabilityCertificate, UniformError> {
    let step = match handle.time() {
        crate::cocycle::TimeKind::Continuous { step } => step,
        _ => return Err(CocycleError::NotContinuous.into()),
    };
    if t_budget == 0 || grid == 0 {
        return Err(UniformError::InvalidParameter("t_budget and grid must be >= 1".into()));
    }
    let points = flow_grid(handle.base(), grid, seed)?;
    let samples = t_budget * FLOW_RESOLUTION;
    let rows: Vec<Vec<f64>> = points
        .par_iter()
        .map(|q| {
            let mut walk = PropagatorWalk::new(handle, q)?;
            let mut row = Vec::with_capacity(samples);
            for j in 1..=samples {
                walk.advance_to(j as f64 / FLOW_RESOLUTION as f64)?;
                row.push(walk.log_norm());
            }
            Ok(row)
        })
        .collect::<Result<_, CocycleError>>()?;
    let sup: Vec<f64> = (0..samples)
        .map(|j| rows.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let time = |j: usize| (j + 1) as f64 / FLOW_RESOLUTION as f64;
    let l = handle.sup_generator_norm(256, seed)?;
    let delta = |t: f64| t * (step * l).powi(4);
    let upper_bounds: Vec<GrowthBound> = (1..=t_budget)
        .map(|t| {
            let a = sup[t * FLOW_RESOLUTION - 1];
            GrowthBound { n: t as f64, a_n: a, rate: a / t as f64 }
        })
        .collect();
    let lower = periodic_lower_bounds(handle, period_budget)?;
    let mut cert = StabilityCertificate {
        decision: Decision::Inconclusive,
        mode: GrowthMode::Grid,
        witness: None,
        min_upper: upper_bounds.iter().map(|b| b.rate).fold(f64::INFINITY, f64::min),
        upper_bounds,
        max_lower: max_rate(&lower),
        lower_bounds: lower,
        verification: None,
    };
    let t_star = (1..=t_budget).find(|&t| sup[t * FLOW_RESOLUTION - 1] < -delta(t as f64));
    if let Some(t_star) = t_star {
        let a_star = sup[t_star * FLOW_RESOLUTION - 1];
        let lambda = -a_star / (2.0 * t_star as f64);
        let log_d = (0..(2 * t_star * FLOW_RESOLUTION).min(samples))
            .map(|j| sup[j] + lambda * time(j))
            .fold(0.0, f64::max);
        let mut v = Verification {
            horizon: t_budget as f64,
            checked: 0,
            violations: 0,
            max_excess: f64::NEG_INFINITY,
        };
        for row in &rows {
            for (j, &x) in row.iter().enumerate() {
                let excess = x - (log_d - lambda * time(j));
                v.checked += 1;
                v.violations += u64::from(excess > ROUNDING);
                v.max_excess = v.max_excess.max(excess);
            }
        }
        cert.decision = Decision::UniformlyStable;
        cert.witness = Some(Witness::Stable {
            n_star: t_star as f64,
            a_star,
            d: log_d.exp(),
            lambda,
        });
        cert.verification = Some(v);
    } else if let Some(w) = unstable_witness(&cert.lower_bounds) {
        cert.decision = Decision::NotUniformlyStable;
        cert.witness = Some(w);
    }
    Ok(cert)
}
