//! Linear cocycles over base systems.
//!
//! A discrete cocycle is determined by its generator `A(q) = 𝒜(q, 1)`;
//! products `𝒜(q, n) = A(f^{n-1} q) ⋯ A(q)` are accumulated as
//! [`ScaledMatrix`] values. A continuous cocycle over a suspension
//! semi-flow is the solution operator of `x' = G(φ_s q) x`, integrated with
//! fixed-step classical Runge–Kutta.

use crate::base::{BaseError, BasePoint, BaseSystem, SystemKind};
use crate::expr::Expr;
use crate::linalg::{logarithmic_norm, spectral_norm, Matrix, ScaledMatrix, ScaledVector, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default integrator step for continuous handles.
pub const DEFAULT_STEP: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CocycleError {
    #[error(transparent)]
    Base(#[from] BaseError),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("generator evaluated to a non-finite matrix at {0}")]
    NonFinite(String),
    #[error("invalid generator: {0}")]
    InvalidGenerator(String),
    #[error("operation needs a discrete-time cocycle")]
    NotDiscrete,
    #[error("operation needs a continuous-time cocycle")]
    NotContinuous,
    #[error("negative time {0}")]
    NegativeTime(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub enum GeneratorKind {
    Constant(Matrix),
    /// One matrix per word of length `depth`; the word `w` has index
    /// `Σ w_i k^{depth-1-i}`.
    LocallyConstant { alphabet: usize, depth: usize, matrices: Vec<Matrix> },
    /// Row-major entries as closed-form expressions in `x` (coordinate) and
    /// `s` (suspension height).
    ClosedForm(Vec<Expr>),
}

/// Matrix-valued function on the base.
#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    dim: usize,
    kind: GeneratorKind,
}

fn check_finite(m: &Matrix, what: &str) -> Result<(), CocycleError> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(CocycleError::NonFinite(what.to_string()))
    }
}

impl Generator {
    pub fn constant(m: Matrix) -> Result<Self, CocycleError> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(CocycleError::InvalidGenerator("matrix must be square and nonempty".into()));
        }
        check_finite(&m, "constant generator")?;
        Ok(Generator {
            dim: m.nrows(),
            kind: GeneratorKind::Constant(m),
        })
    }

    /// `a · Id` in dimension `dim`.
    pub fn scalar_identity(a: f64, dim: usize) -> Self {
        Self::constant(Matrix::identity(dim, dim) * a).expect("finite scalar")
    }

    pub fn locally_constant(alphabet: usize, depth: usize, matrices: Vec<Matrix>) -> Result<Self, CocycleError> {
        if depth == 0 || alphabet == 0 {
            return Err(CocycleError::InvalidGenerator("depth and alphabet must be positive".into()));
        }
        let expected = alphabet.checked_pow(depth as u32).unwrap_or(usize::MAX);
        if matrices.len() != expected {
            return Err(CocycleError::InvalidGenerator(format!(
                "expected {expected} matrices for alphabet {alphabet} and depth {depth}, got {}",
                matrices.len()
            )));
        }
        let dim = matrices[0].nrows();
        for m in &matrices {
            if m.nrows() != dim || m.ncols() != dim {
                return Err(CocycleError::DimensionMismatch {
                    expected: dim,
                    got: m.nrows(),
                });
            }
            check_finite(m, "locally-constant generator")?;
        }
        Ok(Generator {
            dim,
            kind: GeneratorKind::LocallyConstant {
                alphabet,
                depth,
                matrices,
            },
        })
    }

    pub fn closed_form(dim: usize, entries: Vec<Expr>) -> Result<Self, CocycleError> {
        if dim == 0 || entries.len() != dim * dim {
            return Err(CocycleError::InvalidGenerator(format!(
                "expected {} entries for dimension {dim}, got {}",
                dim * dim,
                entries.len()
            )));
        }
        Ok(Generator {
            dim,
            kind: GeneratorKind::ClosedForm(entries),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &GeneratorKind {
        &self.kind
    }

    /// Evaluate at a base point.
    pub fn eval(&self, system: &BaseSystem, q: &BasePoint) -> Result<Matrix, CocycleError> {
        let m = match &self.kind {
            GeneratorKind::Constant(m) => return Ok(m.clone()),
            GeneratorKind::LocallyConstant {
                alphabet,
                depth,
                matrices,
            } => {
                let seq = q
                    .as_symbols()
                    .ok_or_else(|| BaseError::InvalidPoint("locally-constant generator needs a symbolic point".into()))?;
                let mut idx = 0usize;
                for i in 0..*depth {
                    let s = seq.symbol(i) as usize;
                    if s >= *alphabet {
                        return Err(BaseError::InvalidPoint(format!("symbol {s} outside alphabet")).into());
                    }
                    idx = idx * alphabet + s;
                }
                return Ok(matrices[idx].clone());
            }
            GeneratorKind::ClosedForm(entries) => {
                let x = system.coordinate(q);
                let s = system.height(q);
                Matrix::from_row_iterator(self.dim, self.dim, entries.iter().map(|e| e.eval(x, s)))
            }
        };
        check_finite(&m, &q.to_string())?;
        Ok(m)
    }

    /// `c · A`.
    pub fn scaled(&self, c: f64) -> Generator {
        let kind = match &self.kind {
            GeneratorKind::Constant(m) => GeneratorKind::Constant(m * c),
            GeneratorKind::LocallyConstant {
                alphabet,
                depth,
                matrices,
            } => GeneratorKind::LocallyConstant {
                alphabet: *alphabet,
                depth: *depth,
                matrices: matrices.iter().map(|m| m * c).collect(),
            },
            GeneratorKind::ClosedForm(entries) => GeneratorKind::ClosedForm(
                entries
                    .iter()
                    .map(|e| Expr::parse(&format!("({c:?})*({})", e.source())).expect("valid expression"))
                    .collect(),
            ),
        };
        Generator { dim: self.dim, kind }
    }

    /// All values are diagonal matrices.
    pub fn is_diagonal(&self) -> bool {
        let off_diag_zero = |m: &Matrix| {
            (0..self.dim).all(|i| (0..self.dim).all(|j| i == j || m[(i, j)] == 0.0))
        };
        match &self.kind {
            GeneratorKind::Constant(m) => off_diag_zero(m),
            GeneratorKind::LocallyConstant { matrices, .. } => matrices.iter().all(off_diag_zero),
            GeneratorKind::ClosedForm(entries) => {
                (0..self.dim).all(|i| (0..self.dim).all(|j| i == j || entries[i * self.dim + j].is_zero()))
            }
        }
    }

    /// True when the value does not depend on the base point.
    pub fn is_point_independent(&self) -> bool {
        match &self.kind {
            GeneratorKind::Constant(_) => true,
            GeneratorKind::LocallyConstant { matrices, .. } => matrices.windows(2).all(|w| w[0] == w[1]),
            GeneratorKind::ClosedForm(entries) => entries.iter().all(|e| e.is_constant()),
        }
    }

    /// The matrix value when point-independent.
    pub fn constant_value(&self) -> Option<Matrix> {
        if !self.is_point_independent() {
            return None;
        }
        Some(match &self.kind {
            GeneratorKind::Constant(m) => m.clone(),
            GeneratorKind::LocallyConstant { matrices, .. } => matrices[0].clone(),
            GeneratorKind::ClosedForm(entries) => {
                Matrix::from_row_iterator(self.dim, self.dim, entries.iter().map(|e| e.eval(0.0, 0.0)))
            }
        })
    }
}

/// How time enters the cocycle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum TimeKind {
    /// `𝒜(q, n)` built from the generator directly.
    Discrete,
    /// `𝒜(q, t)` solves `x' = G(φ_t q) x`; the generator is the field `G`.
    Continuous { step: f64 },
    /// Restriction of a continuous cocycle to integer times, a discrete
    /// cocycle over `φ₁` whose generator is the time-one propagator.
    TimeOne { step: f64 },
}

/// A cocycle: base system, generator and time structure.
#[derive(Clone, Debug, PartialEq)]
pub struct CocycleHandle {
    base: BaseSystem,
    generator: Generator,
    time: TimeKind,
}

/// Exponential bound `‖𝒜(q,t)‖ ≤ K e^{ωt}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentialBound {
    pub k: f64,
    pub omega: f64,
}

impl CocycleHandle {
    pub fn discrete(base: BaseSystem, generator: Generator) -> Result<Self, CocycleError> {
        if matches!(generator.kind, GeneratorKind::LocallyConstant { .. }) {
            let alphabet_ok = match (&generator.kind, base.alphabet()) {
                (GeneratorKind::LocallyConstant { alphabet, .. }, Some(k)) => *alphabet == k,
                _ => false,
            };
            if !alphabet_ok {
                return Err(CocycleError::InvalidGenerator(
                    "locally-constant generator needs a symbolic base with the same alphabet".into(),
                ));
            }
        }
        Ok(CocycleHandle {
            base,
            generator,
            time: TimeKind::Discrete,
        })
    }

    pub fn continuous(base: BaseSystem, field: Generator, step: f64) -> Result<Self, CocycleError> {
        if !base.is_semi_flow() {
            return Err(BaseError::NotSemiFlow.into());
        }
        if !(step > 0.0 && step <= 0.5) {
            return Err(CocycleError::InvalidGenerator(format!("integrator step {step} outside (0, 0.5]")));
        }
        if let GeneratorKind::LocallyConstant { alphabet, .. } = &field.kind {
            let base_alphabet = base.suspension_parts().and_then(|(b, _)| b.alphabet());
            if base_alphabet != Some(*alphabet) {
                return Err(CocycleError::InvalidGenerator(
                    "locally-constant field needs a symbolic base with the same alphabet".into(),
                ));
            }
        }
        Ok(CocycleHandle {
            base,
            generator: field,
            time: TimeKind::Continuous { step },
        })
    }

    /// The discrete cocycle `n ↦ 𝒜(q, n)` over `φ₁`.
    pub fn time_one_restriction(&self) -> Result<Self, CocycleError> {
        match self.time {
            TimeKind::Continuous { step } => Ok(CocycleHandle {
                base: self.base.clone(),
                generator: self.generator.clone(),
                time: TimeKind::TimeOne { step },
            }),
            _ => Err(CocycleError::NotContinuous),
        }
    }

    pub fn base(&self) -> &BaseSystem {
        &self.base
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    pub fn time(&self) -> TimeKind {
        self.time
    }

    pub fn dim(&self) -> usize {
        self.generator.dim
    }

    pub fn is_discrete(&self) -> bool {
        !matches!(self.time, TimeKind::Continuous { .. })
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self.time, TimeKind::Continuous { .. })
    }

    fn step_size(&self) -> Option<f64> {
        match self.time {
            TimeKind::Continuous { step } | TimeKind::TimeOne { step } => Some(step),
            TimeKind::Discrete => None,
        }
    }

    /// Same cocycle with generator `c·A` (or field `c·G`).
    pub fn scaled(&self, c: f64) -> Self {
        CocycleHandle {
            base: self.base.clone(),
            generator: self.generator.scaled(c),
            time: self.time,
        }
    }

    /// Same cocycle integrated with a different step.
    pub fn with_step(&self, step: f64) -> Result<Self, CocycleError> {
        match self.time {
            TimeKind::Continuous { .. } => Self::continuous(self.base.clone(), self.generator.clone(), step),
            TimeKind::TimeOne { .. } => Self::continuous(self.base.clone(), self.generator.clone(), step)?
                .time_one_restriction(),
            TimeKind::Discrete => Err(CocycleError::NotContinuous),
        }
    }

    /// The one-step matrix `A(q) = 𝒜(q, 1)`.
    pub fn one_step(&self, q: &BasePoint) -> Result<Matrix, CocycleError> {
        match self.time {
            TimeKind::Discrete => self.generator.eval(&self.base, q),
            TimeKind::TimeOne { step } => Ok(self.integrate(q, 1.0, step)?.to_matrix()),
            TimeKind::Continuous { .. } => Err(CocycleError::NotDiscrete),
        }
    }

    /// `𝒜(q, n)`; identity for `n = 0`.
    pub fn evaluate_product(&self, q: &BasePoint, n: u64) -> Result<ScaledMatrix, CocycleError> {
        let mut walk = ProductWalk::new(self, q)?;
        for _ in 0..n {
            walk.advance()?;
        }
        Ok(walk.product)
    }

    /// `𝒜(q, n) x` by repeated matrix–vector products.
    pub fn apply_to_vector(&self, q: &BasePoint, n: u64, x: &Vector) -> Result<ScaledVector, CocycleError> {
        if !self.is_discrete() {
            return Err(CocycleError::NotDiscrete);
        }
        self.check_dim(x)?;
        let mut v = ScaledVector::from_vector(x.clone());
        let mut p = q.clone();
        for _ in 0..n {
            if v.is_zero() {
                break;
            }
            let a = self.one_step(&p)?;
            v.left_mul(&a);
            self.base.step_in_place(&mut p)?;
        }
        Ok(v)
    }

    /// `𝒜(q, t)` for a continuous handle.
    pub fn evaluate_propagator(&self, q: &BasePoint, t: f64) -> Result<ScaledMatrix, CocycleError> {
        match self.time {
            TimeKind::Continuous { step } => self.integrate(q, t, step),
            _ => Err(CocycleError::NotContinuous),
        }
    }

    /// `𝒜(q, t) x` for a continuous handle.
    pub fn apply_to_vector_flow(&self, q: &BasePoint, t: f64, x: &Vector) -> Result<ScaledVector, CocycleError> {
        let TimeKind::Continuous { step } = self.time else {
            return Err(CocycleError::NotContinuous);
        };
        self.check_dim(x)?;
        let mut prop = VectorFlow::new(self, q, x.clone(), step)?;
        prop.advance_to(t)?;
        Ok(prop.state)
    }

    pub(crate) fn check_dim(&self, x: &Vector) -> Result<(), CocycleError> {
        if x.len() != self.dim() {
            return Err(CocycleError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    fn field(&self, q: &BasePoint) -> Result<Matrix, CocycleError> {
        self.generator.eval(&self.base, q)
    }

    /// RK4 solution of `X' = G(φ_s q) X`, `X(0) = Id`, over `[0, t]`.
    fn integrate(&self, q: &BasePoint, t: f64, step: f64) -> Result<ScaledMatrix, CocycleError> {
        if !(t >= 0.0) {
            return Err(CocycleError::NegativeTime(t));
        }
        let mut walk = PropagatorWalk::with_step(self, q, step)?;
        walk.advance_to(t)?;
        Ok(walk.product)
    }

    /// Maximum relative residual of the cocycle law over random splits.
    ///
    /// Discrete handles test `𝒜(q, n+m) = 𝒜(f^m q, n) 𝒜(q, m)` with
    /// `n, m ≤ 24`; continuous handles test `(t, s)` pairs in `[0, 2]` on the
    /// integrator grid.
    pub fn verify_cocycle_law(&self, samples: usize, seed: u64) -> Result<f64, CocycleError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            let q = self.base.sample_with(&mut rng);
            let r = if self.is_discrete() {
                let n = rng.random_range(0..=24u64);
                let m = rng.random_range(0..=24u64);
                self.cocycle_residual(&q, n, m)?
            } else {
                let h = self.step_size().unwrap();
                let grid = (2.0 / h).round() as u64;
                let t = rng.random_range(0..=grid) as f64 * h;
                let s = rng.random_range(0..=grid) as f64 * h;
                self.flow_cocycle_residual(&q, t, s)?
            };
            worst = worst.max(r);
        }
        Ok(worst)
    }

    /// `‖𝒜(q,n+m) − 𝒜(f^m q, n)𝒜(q,m)‖ / ‖𝒜(q,n+m)‖`.
    pub fn cocycle_residual(&self, q: &BasePoint, n: u64, m: u64) -> Result<f64, CocycleError> {
        let whole = self.evaluate_product(q, n + m)?;
        let first = self.evaluate_product(q, m)?;
        let moved = self.base.step_n(q, m)?;
        let second = self.evaluate_product(&moved, n)?;
        Ok(whole.relative_distance(&(&second * &first)))
    }

    /// Continuous analogue of [`cocycle_residual`](Self::cocycle_residual).
    pub fn flow_cocycle_residual(&self, q: &BasePoint, t: f64, s: f64) -> Result<f64, CocycleError> {
        let whole = self.evaluate_propagator(q, t + s)?;
        let first = self.evaluate_propagator(q, s)?;
        let moved = self.base.flow_step(q, s)?;
        let second = self.evaluate_propagator(&moved, t)?;
        Ok(whole.relative_distance(&(&second * &first)))
    }

    /// Points used to approximate suprema over the base: a regular grid for
    /// circle-like coordinates plus measure samples.
    pub fn dense_sample(&self, count: usize, seed: u64) -> Vec<BasePoint> {
        let mut out = Vec::with_capacity(2 * count);
        let grid_base = match self.base.kind() {
            SystemKind::Rotation { .. } => Some((&self.base, 1.0)),
            SystemKind::Suspension { base, roof, .. } => match (base.kind(), roof.as_constant()) {
                (SystemKind::Rotation { .. }, Some(r)) => Some((&**base, r)),
                _ => None,
            },
            _ => None,
        };
        if let Some((circle, roof)) = grid_base {
            let heights = if self.base.is_semi_flow() { 4 } else { 1 };
            for i in 0..count {
                let x = BasePoint::Circle(i as f64 / count as f64);
                for j in 0..heights {
                    if self.base.is_semi_flow() {
                        out.push(BasePoint::Suspended {
                            base: Box::new(x.clone()),
                            height: roof * j as f64 / heights as f64,
                        });
                    } else {
                        let _ = circle;
                        out.push(x.clone());
                    }
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        out.extend((0..count).map(|_| self.base.sample_with(&mut rng)));
        out
    }

    /// `max ‖A(q)‖` (or `max ‖G(q)‖` for fields) over a dense sample.
    pub fn sup_generator_norm(&self, count: usize, seed: u64) -> Result<f64, CocycleError> {
        if let Some(m) = self.generator.constant_value() {
            return Ok(spectral_norm(&m));
        }
        let mut sup: f64 = 0.0;
        for q in self.dense_sample(count, seed) {
            let m = match self.time {
                TimeKind::Discrete => self.generator.eval(&self.base, &q)?,
                _ => self.field(&q)?,
            };
            sup = sup.max(spectral_norm(&m));
        }
        Ok(sup)
    }

    /// Fit `‖𝒜(q,t)‖ ≤ K e^{ωt}` for a continuous handle: `ω` is the largest
    /// logarithmic norm of the field over a dense sample (floored at 0),
    /// `K ≥ 1` the largest excess observed on the sample for `t ≤ t_max`.
    pub fn fit_exponential_bound(&self, samples: usize, t_max: f64, seed: u64) -> Result<ExponentialBound, CocycleError> {
        let TimeKind::Continuous { step } = self.time else {
            return Err(CocycleError::NotContinuous);
        };
        let points = self.dense_sample(samples, seed);
        let mut omega: f64 = 0.0;
        for q in &points {
            omega = omega.max(logarithmic_norm(&self.field(q)?));
        }
        let mut log_k: f64 = 0.0;
        let units = t_max.ceil().max(1.0) as usize;
        for q in points.iter().take(samples.max(1)) {
            let mut walk = PropagatorWalk::with_step(self, q, step)?;
            for u in 1..=units {
                walk.advance_to(u as f64)?;
                log_k = log_k.max(walk.log_norm() - omega * u as f64);
            }
        }
        Ok(ExponentialBound {
            k: log_k.exp() * (1.0 + 1e-9),
            omega,
        })
    }
}

pub(crate) fn steps_for(t: f64, step: f64) -> usize {
    ((t / step) - 1e-9).ceil().max(1.0) as usize
}

/// One RK4 step of `X' = G X` from the point `p`, advancing `p` by `h`.
fn rk4_matrix(handle: &CocycleHandle, p: &mut BasePoint, x: &Matrix, h: f64) -> Result<Matrix, CocycleError> {
    let base = handle.base();
    let g0 = handle.field(p)?;
    let mid = base.flow_step(p, 0.5 * h)?;
    let gm = handle.field(&mid)?;
    base.flow_in_place(p, h)?;
    let g1 = handle.field(p)?;
    let k1 = &g0 * x;
    let k2 = &gm * (x + &k1 * (0.5 * h));
    let k3 = &gm * (x + &k2 * (0.5 * h));
    let k4 = &g1 * (x + &k3 * h);
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

/// Incremental RK4 integration of `X' = G(φ_t q) X`, `X(0) = Id`.
#[derive(Clone, Debug)]
pub struct PropagatorWalk<'a> {
    handle: &'a CocycleHandle,
    point: BasePoint,
    product: ScaledMatrix,
    time: f64,
    step: f64,
}

impl<'a> PropagatorWalk<'a> {
    /// Walk using the handle's own integrator step.
    pub fn new(handle: &'a CocycleHandle, q: &BasePoint) -> Result<Self, CocycleError> {
        let step = handle.step_size().ok_or(CocycleError::NotContinuous)?;
        Self::with_step(handle, q, step)
    }

    fn with_step(handle: &'a CocycleHandle, q: &BasePoint, step: f64) -> Result<Self, CocycleError> {
        handle.base.validate(q)?;
        Ok(PropagatorWalk {
            handle,
            point: q.clone(),
            product: ScaledMatrix::identity(handle.dim()),
            time: 0.0,
            step,
        })
    }

    /// One RK4 step of length `h`.
    pub fn step_by(&mut self, h: f64) -> Result<(), CocycleError> {
        if self.product.is_zero() {
            self.handle.base.flow_in_place(&mut self.point, h)?;
        } else {
            let (unit, exp) = self.product.parts();
            let next = rk4_matrix(self.handle, &mut self.point, unit, h)?;
            self.product = ScaledMatrix::from_parts(next, exp);
        }
        self.time += h;
        Ok(())
    }

    /// Integrate forward to absolute time `t` with steps of at most `step`.
    pub fn advance_to(&mut self, t: f64) -> Result<(), CocycleError> {
        let span = t - self.time;
        if span < -1e-12 {
            return Err(CocycleError::NegativeTime(span));
        }
        if span <= 0.0 {
            return Ok(());
        }
        let n = steps_for(span, self.step);
        let h = span / n as f64;
        for _ in 0..n {
            self.step_by(h)?;
        }
        self.time = t;
        Ok(())
    }

    pub fn product(&self) -> &ScaledMatrix {
        &self.product
    }

    pub fn point(&self) -> &BasePoint {
        &self.point
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn log_norm(&self) -> f64 {
        self.product.log_norm()
    }
}

/// Incremental RK4 integration of `x' = G(φ_t q) x` for a single vector.
pub struct VectorFlow<'a> {
    handle: &'a CocycleHandle,
    point: BasePoint,
    pub(crate) state: ScaledVector,
    time: f64,
    step: f64,
}

impl<'a> VectorFlow<'a> {
    pub fn new(handle: &'a CocycleHandle, q: &BasePoint, x: Vector, step: f64) -> Result<Self, CocycleError> {
        handle.check_dim(&x)?;
        Ok(VectorFlow {
            handle,
            point: q.clone(),
            state: ScaledVector::from_vector(x),
            time: 0.0,
            step,
        })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn state(&self) -> &ScaledVector {
        &self.state
    }

    pub fn point(&self) -> &BasePoint {
        &self.point
    }

    /// One RK4 step of length `h`.
    pub fn step_by(&mut self, h: f64) -> Result<(), CocycleError> {
        if self.state.is_zero() {
            self.handle.base().flow_in_place(&mut self.point, h)?;
            self.time += h;
            return Ok(());
        }
        let base = self.handle.base();
        let (x, exp) = self.state.parts();
        let g0 = self.handle.field(&self.point)?;
        let mid = base.flow_step(&self.point, 0.5 * h)?;
        let gm = self.handle.field(&mid)?;
        base.flow_in_place(&mut self.point, h)?;
        let g1 = self.handle.field(&self.point)?;
        let k1 = &g0 * x;
        let k2 = &gm * (x + &k1 * (0.5 * h));
        let k3 = &gm * (x + &k2 * (0.5 * h));
        let k4 = &g1 * (x + &k3 * h);
        let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        self.state = ScaledVector::from_parts(next, exp);
        self.time += h;
        Ok(())
    }

    /// Integrate forward to absolute time `t` with steps of at most `step`.
    pub fn advance_to(&mut self, t: f64) -> Result<(), CocycleError> {
        let span = t - self.time;
        if span < -1e-12 {
            return Err(CocycleError::NegativeTime(span));
        }
        if span <= 0.0 {
            return Ok(());
        }
        let n = steps_for(span, self.step);
        let h = span / n as f64;
        for _ in 0..n {
            self.step_by(h)?;
        }
        self.time = t;
        Ok(())
    }
}

/// Walks a discrete orbit, maintaining `f^k q` and `𝒜(q, k)`.
#[derive(Clone, Debug)]
pub struct ProductWalk<'a> {
    handle: &'a CocycleHandle,
    point: BasePoint,
    product: ScaledMatrix,
    steps: u64,
}

impl<'a> ProductWalk<'a> {
    pub fn new(handle: &'a CocycleHandle, q: &BasePoint) -> Result<Self, CocycleError> {
        if !handle.is_discrete() {
            return Err(CocycleError::NotDiscrete);
        }
        handle.base.validate(q)?;
        Ok(ProductWalk {
            handle,
            point: q.clone(),
            product: ScaledMatrix::identity(handle.dim()),
            steps: 0,
        })
    }

    /// Multiply in `A(f^k q)` and move to `f^{k+1} q`.
    pub fn advance(&mut self) -> Result<(), CocycleError> {
        if !self.product.is_zero() {
            let a = self.handle.one_step(&self.point)?;
            self.product.left_mul(&a);
        }
        self.handle.base.step_in_place(&mut self.point)?;
        self.steps += 1;
        Ok(())
    }

    pub fn product(&self) -> &ScaledMatrix {
        &self.product
    }

    pub fn point(&self) -> &BasePoint {
        &self.point
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn log_norm(&self) -> f64 {
        self.product.log_norm()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base::Roof;

    fn mat(rows: &[&[f64]]) -> Matrix {
        Matrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
    }

    fn pair_over_two_shift() -> CocycleHandle {
        let base = BaseSystem::full_shift(vec![0.5, 0.5]).unwrap();
        let gen = Generator::locally_constant(
            2,
            1,
            vec![mat(&[&[1.0, 0.5], &[0.25, 2.0]]), mat(&[&[0.3, -1.0], &[0.7, 0.1]])],
        )
        .unwrap();
        CocycleHandle::discrete(base, gen).unwrap()
    }

    #[test]
    fn scalar_power() {
        let base = BaseSystem::full_shift(vec![0.5, 0.5]).unwrap();
        let h = CocycleHandle::discrete(base, Generator::scalar_identity(0.5, 2)).unwrap();
        let q = h.base().sample_point(0);
        let p = h.evaluate_product(&q, 10).unwrap();
        assert!((p.log_norm() - 10.0 * 0.5f64.ln()).abs() < 1e-12);
        let id = h.evaluate_product(&q, 0).unwrap();
        assert_eq!(id, ScaledMatrix::identity(2));
        assert_eq!(id.log_norm(), 0.0);
    }

    #[test]
    fn word_product_matches_direct_product() {
        let h = pair_over_two_shift();
        let GeneratorKind::LocallyConstant { matrices, .. } = h.generator().kind() else { panic!() };
        let q = h.base().point_from_word(&[0, 1, 1, 0], 3).unwrap();
        let direct = &matrices[0] * &matrices[1] * &matrices[1] * &matrices[0];
        let got = h.evaluate_product(&q, 4).unwrap().to_matrix();
        for (a, b) in direct.iter().zip(got.iter()) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn one_step_is_generator() {
        let h = pair_over_two_shift();
        let q = h.base().sample_point(5);
        let a = h.one_step(&q).unwrap();
        let p = h.evaluate_product(&q, 1).unwrap();
        assert!(p.relative_distance(&ScaledMatrix::from_matrix(a)) == 0.0);
    }

    #[test]
    fn diagonal_vector_action() {
        let base = BaseSystem::full_shift(vec![1.0]).unwrap();
        let gen = Generator::constant(mat(&[&[0.5, 0.0], &[0.0, 0.25]])).unwrap();
        let h = CocycleHandle::discrete(base, gen).unwrap();
        let q = h.base().sample_point(1);
        let v = h.apply_to_vector(&q, 4, &Vector::from_vec(vec![1.0, 0.0])).unwrap();
        assert!((v.log_norm() - 4.0 * 0.5f64.ln()).abs() < 1e-14);
        let x = Vector::from_vec(vec![3.0, 4.0]);
        let v0 = h.apply_to_vector(&q, 0, &x).unwrap();
        assert_eq!(v0.to_vector(), x);
        assert!((v0.log_norm() - 5f64.ln()).abs() < 1e-15);
        assert!(matches!(
            h.apply_to_vector(&q, 1, &Vector::zeros(3)),
            Err(CocycleError::DimensionMismatch { expected: 2, got: 3 })
        ));
        let zero = h.apply_to_vector(&q, 3, &Vector::zeros(2)).unwrap();
        assert_eq!(zero.log_norm(), f64::NEG_INFINITY);
    }

    #[test]
    fn vector_action_agrees_with_product() {
        let base = BaseSystem::doubling();
        let entries = ["0.6*cos(2*pi*x)", "0.3", "-0.2*x", "0.5+0.3*sin(2*pi*x)"]
            .iter()
            .map(|s| Expr::parse(s).unwrap())
            .collect();
        let h = CocycleHandle::discrete(base, Generator::closed_form(2, entries).unwrap()).unwrap();
        let q = h.base().sample_point(17);
        let x = Vector::from_vec(vec![0.6, -0.8]);
        let via_vec = h.apply_to_vector(&q, 20, &x).unwrap();
        let via_mat = h.evaluate_product(&q, 20).unwrap().apply(&ScaledVector::from_vector(x));
        let rel = ((via_vec.log_norm() - via_mat.log_norm()).abs()).max(
            (via_vec.direction() - via_mat.direction()).norm(),
        );
        assert!(rel < 1e-10, "{rel}");
    }

    #[test]
    fn cocycle_law_holds_for_sft_products() {
        let base = BaseSystem::sft(vec![vec![true, true], vec![true, false]], None).unwrap();
        let gen = Generator::locally_constant(
            2,
            2,
            vec![
                mat(&[&[0.9, 0.1], &[0.0, 0.4]]),
                mat(&[&[0.2, 0.0], &[0.3, 1.1]]),
                mat(&[&[1.2, -0.3], &[0.2, 0.2]]),
                mat(&[&[0.5, 0.5], &[0.5, 0.5]]),
            ],
        )
        .unwrap();
        let h = CocycleHandle::discrete(base, gen).unwrap();
        assert!(h.verify_cocycle_law(100, 1).unwrap() <= 1e-12);
        let c = CocycleHandle::discrete(
            BaseSystem::full_shift(vec![0.5, 0.5]).unwrap(),
            Generator::constant(mat(&[&[0.3, 2.0], &[-1.0, 0.4]])).unwrap(),
        )
        .unwrap();
        assert!(c.verify_cocycle_law(50, 2).unwrap() <= 1e-13);
    }

    fn scalar_flow(expr: &str) -> CocycleHandle {
        let base = BaseSystem::promote(BaseSystem::rotation(0.1).unwrap()).unwrap();
        let g = Generator::closed_form(1, vec![Expr::parse(expr).unwrap()]).unwrap();
        CocycleHandle::continuous(base, g, DEFAULT_STEP).unwrap()
    }

    #[test]
    fn scalar_decay_propagator() {
        let h = scalar_flow("-1");
        let q = h.base().sample_point(4);
        let p = h.evaluate_propagator(&q, 3.0).unwrap();
        assert!((p.log_norm() + 3.0).abs() < 1e-8);
        assert_eq!(h.evaluate_propagator(&q, 0.0).unwrap(), ScaledMatrix::identity(1));
        assert!(matches!(h.evaluate_propagator(&q, -1.0), Err(CocycleError::NegativeTime(_))));
    }

    #[test]
    fn constant_field_semigroup() {
        let base = BaseSystem::promote(BaseSystem::rotation(0.3).unwrap()).unwrap();
        let g = Generator::constant(mat(&[&[-0.5, 2.0], &[-1.0, -0.2]])).unwrap();
        let h = CocycleHandle::continuous(base, g, DEFAULT_STEP).unwrap();
        let q = h.base().sample_point(9);
        let full = h.evaluate_propagator(&q, 1.0).unwrap();
        let half = h.evaluate_propagator(&q, 0.5).unwrap();
        let twice = &half * &half;
        assert!(full.relative_distance(&twice) <= 1e-8);
        assert!(h.flow_cocycle_residual(&q, 1.3, 0.7).unwrap() <= 1e-8);
        assert!(h.verify_cocycle_law(5, 3).unwrap() <= 1e-8);
    }

    #[test]
    fn quasi_periodic_scalar_matches_closed_form_integral() {
        // x' = sin(2π(q + 0.1 s)) x ⇒ log x(t) = ∫₀ᵗ sin(2π(q+0.1 s)) ds
        let h = scalar_flow("sin(2*pi*(x + 0.1*s))");
        let q = h.base().suspended_point(BasePoint::Circle(0.37), 0.0).unwrap();
        let t: f64 = 7.3;
        let two_pi = 2.0 * std::f64::consts::PI;
        let exact = -((two_pi * (0.37 + 0.1 * t)).cos() - (two_pi * 0.37).cos()) / (two_pi * 0.1);
        let got = h.evaluate_propagator(&q, t).unwrap().log_norm();
        assert!((got - exact).abs() < 1e-9, "{got} vs {exact}");
    }

    #[test]
    fn time_one_restriction_is_discrete() {
        let h = scalar_flow("-1 + sin(2*pi*(x + 0.1*s))");
        let d = h.time_one_restriction().unwrap();
        let q = h.base().sample_point(2);
        let a = d.evaluate_product(&q, 3).unwrap();
        let b = h.evaluate_propagator(&q, 3.0).unwrap();
        assert!(a.relative_distance(&b) < 1e-12);
        assert!(matches!(h.evaluate_product(&q, 1), Err(CocycleError::NotDiscrete)));
    }

    #[test]
    fn exponential_bound_for_constant_decay() {
        let h = scalar_flow("-1");
        let b = h.fit_exponential_bound(8, 4.0, 1).unwrap();
        assert_eq!(b.omega, 0.0);
        assert!(b.k >= 1.0 && b.k < 1.0 + 1e-6);
        let grow = scalar_flow("0.5 + 0.5*cos(2*pi*(x+0.1*s))");
        let b = grow.fit_exponential_bound(32, 3.0, 1).unwrap();
        assert!((b.omega - 1.0).abs() < 1e-3);
        for seed in 0..10 {
            let q = grow.base().sample_point(seed);
            for t in [0.5, 1.0, 2.5] {
                let l = grow.evaluate_propagator(&q, t).unwrap().log_norm();
                assert!(l <= b.k.ln() + b.omega * t + 1e-9);
            }
        }
    }

    #[test]
    fn rejects_mismatched_handles() {
        let shift = BaseSystem::full_shift(vec![0.5, 0.5]).unwrap();
        let g = Generator::scalar_identity(1.0, 1);
        assert!(CocycleHandle::continuous(shift.clone(), g.clone(), 1e-3).is_err());
        let lc = Generator::locally_constant(3, 1, vec![Matrix::identity(1, 1); 3]).unwrap();
        assert!(CocycleHandle::discrete(shift, lc).is_err());
        let roofed = BaseSystem::suspension(BaseSystem::rotation(0.2).unwrap(), Roof::Constant(2.0)).unwrap();
        assert!(CocycleHandle::continuous(roofed, g, 0.0).is_err());
    }
}
