//! Compact base systems: shifts, subshifts of finite type, circle rotations,
//! the doubling map and suspension semi-flows, each with an ergodic measure.

mod periodic;
mod sets;
pub mod symbolic;

pub use periodic::{necklace_count, primitive_period, rational_approximation, PeriodicOrbit};
pub use sets::{Exclusion, MeasurableSet, SetShape};
pub(crate) use sets::cylinder_measure;
pub use symbolic::{SymbolLaw, SymbolSeq};

use crate::expr::Expr;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaseError {
    #[error("invalid system: {0}")]
    InvalidSystem(String),
    #[error("point is not valid for this system: {0}")]
    InvalidPoint(String),
    #[error("system is not a semi-flow")]
    NotSemiFlow,
    #[error("negative flow time {0}")]
    NegativeTime(f64),
    #[error("set and point belong to different kinds of system")]
    IncompatibleSet,
    #[error("operation not supported for {0}")]
    Unsupported(String),
}

/// Ergodic measure attached to a base system.
#[derive(Clone, Debug, PartialEq)]
pub enum Measure {
    /// i.i.d. symbols with the given weights.
    Bernoulli(Vec<f64>),
    /// Stationary Markov chain.
    Markov { matrix: Vec<Vec<f64>>, stationary: Vec<f64> },
    Lebesgue,
    /// Base measure times Lebesgue in the fibre, normalized by the mean roof.
    Suspension,
}

/// Height function of a suspension, evaluated at the base coordinate.
#[derive(Clone, Debug, PartialEq)]
pub enum Roof {
    Constant(f64),
    Closed(Expr),
}

impl Roof {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Roof::Constant(c) => *c,
            Roof::Closed(e) => e.eval(x, 0.0),
        }
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self {
            Roof::Constant(c) => Some(*c),
            Roof::Closed(e) if e.is_constant() => Some(e.eval(0.0, 0.0)),
            Roof::Closed(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SystemKind {
    FullShift { alphabet: usize },
    Sft { transitions: Vec<Vec<bool>> },
    Rotation { angle: f64 },
    Doubling,
    Suspension { base: Box<BaseSystem>, roof: Roof, roof_min: f64, roof_max: f64 },
}

/// A base map (or semi-flow) together with its ergodic measure.
#[derive(Clone, Debug, PartialEq)]
pub struct BaseSystem {
    kind: SystemKind,
    measure: Measure,
    law: Option<SymbolLaw>,
}

/// A point of a base system.
#[derive(Clone, Debug, PartialEq)]
pub enum BasePoint {
    /// Shift, subshift or doubling-map point (binary digits for the latter).
    Symbolic(SymbolSeq),
    /// Point of the circle `[0, 1)`.
    Circle(f64),
    /// Point `(base, height)` of a suspension with `0 ≤ height < roof(base)`.
    Suspended { base: Box<BasePoint>, height: f64 },
}

fn check_weights(w: &[f64], what: &str) -> Result<(), BaseError> {
    if w.is_empty() {
        return Err(BaseError::InvalidSystem(format!("{what}: empty weight vector")));
    }
    if w.iter().any(|&p| !(p.is_finite() && p >= 0.0)) {
        return Err(BaseError::InvalidSystem(format!("{what}: weights must be nonnegative")));
    }
    let total: f64 = w.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(BaseError::InvalidSystem(format!(
            "{what}: weights sum to {total}, expected 1"
        )));
    }
    Ok(())
}

/// Reduce to the canonical representative in `[0, 1)`.
pub fn wrap_unit(x: f64) -> f64 {
    let y = x.rem_euclid(1.0);
    if y >= 1.0 {
        0.0
    } else {
        y
    }
}

/// Stationary vector of a row-stochastic matrix by power iteration on the
/// lazy chain (aperiodicity is not required).
fn stationary_distribution(p: &[Vec<f64>]) -> Vec<f64> {
    let k = p.len();
    let mut pi = vec![1.0 / k as f64; k];
    for _ in 0..100_000 {
        let mut next = vec![0.0; k];
        for a in 0..k {
            for b in 0..k {
                next[b] += pi[a] * p[a][b];
            }
        }
        let lazy: Vec<f64> = pi.iter().zip(&next).map(|(x, y)| 0.5 * (x + y)).collect();
        let diff: f64 = lazy.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        pi = lazy;
        if diff < 1e-16 {
            break;
        }
    }
    let total: f64 = pi.iter().sum();
    pi.iter().map(|x| x / total).collect()
}

impl BaseSystem {
    /// Full shift on `weights.len()` symbols with a Bernoulli measure.
    pub fn full_shift(weights: Vec<f64>) -> Result<Self, BaseError> {
        check_weights(&weights, "Bernoulli")?;
        if weights.len() > 255 {
            return Err(BaseError::InvalidSystem("alphabet larger than 255".into()));
        }
        let law = SymbolLaw {
            initial: weights.clone(),
            rows: vec![weights.clone(); weights.len()],
        };
        Ok(BaseSystem {
            kind: SystemKind::FullShift { alphabet: weights.len() },
            measure: Measure::Bernoulli(weights),
            law: Some(law),
        })
    }

    /// Subshift of finite type. Without an explicit Markov matrix the chain
    /// moves uniformly over allowed transitions.
    pub fn sft(transitions: Vec<Vec<bool>>, markov: Option<Vec<Vec<f64>>>) -> Result<Self, BaseError> {
        let k = transitions.len();
        if k == 0 || k > 255 || transitions.iter().any(|r| r.len() != k) {
            return Err(BaseError::InvalidSystem("transition matrix must be square, 1..=255".into()));
        }
        for (i, row) in transitions.iter().enumerate() {
            if !row.iter().any(|&b| b) {
                return Err(BaseError::InvalidSystem(format!("row {i} of the transition matrix has no 1")));
            }
            if !transitions.iter().any(|r| r[i]) {
                return Err(BaseError::InvalidSystem(format!("column {i} of the transition matrix has no 1")));
            }
        }
        let matrix = match markov {
            Some(m) => {
                if m.len() != k || m.iter().any(|r| r.len() != k) {
                    return Err(BaseError::InvalidSystem("Markov matrix shape mismatch".into()));
                }
                for (i, row) in m.iter().enumerate() {
                    check_weights(row, &format!("Markov row {i}"))?;
                    for (j, &p) in row.iter().enumerate() {
                        if p > 0.0 && !transitions[i][j] {
                            return Err(BaseError::InvalidSystem(format!(
                                "Markov matrix charges forbidden transition {i}->{j}"
                            )));
                        }
                    }
                }
                m
            }
            None => transitions
                .iter()
                .map(|row| {
                    let n = row.iter().filter(|&&b| b).count() as f64;
                    row.iter().map(|&b| if b { 1.0 / n } else { 0.0 }).collect()
                })
                .collect(),
        };
        let stationary = stationary_distribution(&matrix);
        let law = SymbolLaw {
            initial: stationary.clone(),
            rows: matrix.clone(),
        };
        Ok(BaseSystem {
            kind: SystemKind::Sft { transitions },
            measure: Measure::Markov { matrix, stationary },
            law: Some(law),
        })
    }

    /// Rotation `x ↦ x + angle mod 1` with Lebesgue measure.
    pub fn rotation(angle: f64) -> Result<Self, BaseError> {
        if !(0.0..1.0).contains(&angle) {
            return Err(BaseError::InvalidSystem(format!("rotation angle {angle} outside [0,1)")));
        }
        Ok(BaseSystem {
            kind: SystemKind::Rotation { angle },
            measure: Measure::Lebesgue,
            law: None,
        })
    }

    /// Doubling map `x ↦ 2x mod 1` with Lebesgue measure; points are kept as
    /// binary digit sequences.
    pub fn doubling() -> Self {
        BaseSystem {
            kind: SystemKind::Doubling,
            measure: Measure::Lebesgue,
            law: Some(SymbolLaw {
                initial: vec![0.5, 0.5],
                rows: vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            }),
        }
    }

    /// Suspension semi-flow under `roof` over a map.
    pub fn suspension(base: BaseSystem, roof: Roof) -> Result<Self, BaseError> {
        if base.is_semi_flow() {
            return Err(BaseError::InvalidSystem("cannot suspend a semi-flow".into()));
        }
        let (roof_min, roof_max) = match roof.as_constant() {
            Some(c) => (c, c),
            None => {
                let vals: Vec<f64> = (0..4096).map(|i| roof.eval((i as f64 + 0.5) / 4096.0)).collect();
                (
                    vals.iter().copied().fold(f64::INFINITY, f64::min),
                    vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                )
            }
        };
        if !(roof_min.is_finite() && roof_min > 1e-6 && roof_max.is_finite()) {
            return Err(BaseError::InvalidSystem(format!(
                "roof function must be bounded away from 0 (min {roof_min})"
            )));
        }
        Ok(BaseSystem {
            kind: SystemKind::Suspension {
                base: Box::new(base),
                roof,
                roof_min,
                roof_max,
            },
            measure: Measure::Suspension,
            law: None,
        })
    }

    /// The time-1 suspension of a map (roof ≡ 1).
    pub fn promote(base: BaseSystem) -> Result<Self, BaseError> {
        Self::suspension(base, Roof::Constant(1.0))
    }

    pub fn kind(&self) -> &SystemKind {
        &self.kind
    }

    pub fn measure(&self) -> &Measure {
        &self.measure
    }

    pub fn is_semi_flow(&self) -> bool {
        matches!(self.kind, SystemKind::Suspension { .. })
    }

    pub fn is_symbolic(&self) -> bool {
        matches!(
            self.kind,
            SystemKind::FullShift { .. } | SystemKind::Sft { .. } | SystemKind::Doubling
        )
    }

    /// Alphabet size for symbolic systems.
    pub fn alphabet(&self) -> Option<usize> {
        match &self.kind {
            SystemKind::FullShift { alphabet } => Some(*alphabet),
            SystemKind::Sft { transitions } => Some(transitions.len()),
            SystemKind::Doubling => Some(2),
            _ => None,
        }
    }

    pub fn law(&self) -> Option<&SymbolLaw> {
        self.law.as_ref()
    }

    /// Whether `a → b` is an allowed transition.
    pub fn allowed(&self, a: u8, b: u8) -> bool {
        match &self.kind {
            SystemKind::Sft { transitions } => transitions[a as usize][b as usize],
            _ => true,
        }
    }

    pub fn is_admissible(&self, word: &[u8]) -> bool {
        let Some(k) = self.alphabet() else { return false };
        word.iter().all(|&s| (s as usize) < k) && word.windows(2).all(|w| self.allowed(w[0], w[1]))
    }

    pub fn suspension_parts(&self) -> Option<(&BaseSystem, &Roof)> {
        match &self.kind {
            SystemKind::Suspension { base, roof, .. } => Some((base, roof)),
            _ => None,
        }
    }

    /// Point with the given explicit word, completed by a measure-typical tail.
    pub fn point_from_word(&self, word: &[u8], tail_seed: u64) -> Result<BasePoint, BaseError> {
        if !self.is_symbolic() || !self.is_admissible(word) {
            return Err(BaseError::InvalidPoint(format!("word {word:?} is not admissible")));
        }
        let law = self.law.as_ref().expect("symbolic system has a law");
        if let Some(&last) = word.last() {
            if law.rows[last as usize].iter().all(|&p| p == 0.0) {
                return Err(BaseError::InvalidPoint("word cannot be extended".into()));
            }
        }
        Ok(BasePoint::Symbolic(SymbolSeq::with_prefix(word, tail_seed, law)))
    }

    /// The periodic point `word word …`.
    pub fn periodic_point(&self, word: &[u8]) -> Result<BasePoint, BaseError> {
        let mut closed = word.to_vec();
        if let Some(&first) = word.first() {
            closed.push(first);
        }
        if word.is_empty() || !self.is_symbolic() || !self.is_admissible(&closed) {
            return Err(BaseError::InvalidPoint(format!("{word:?} is not a cyclically admissible word")));
        }
        Ok(BasePoint::Symbolic(SymbolSeq::periodic(word)))
    }

    /// A non-generic point: `prefix` followed by a periodic continuation.
    pub fn eventually_periodic_point(&self, prefix: &[u8], word: &[u8]) -> Result<BasePoint, BaseError> {
        let seq = if word.is_empty() { None } else { Some(SymbolSeq::eventually_periodic(prefix, word)) };
        match seq {
            Some(seq) if self.is_symbolic() && self.is_admissible(&seq.prefix(prefix.len() + 2 * word.len() + 1)) => {
                Ok(BasePoint::Symbolic(seq))
            }
            _ => Err(BaseError::InvalidPoint(format!("{prefix:?} then {word:?} is not admissible"))),
        }
    }

    /// Doubling-map point with the binary digits of `x` followed by a
    /// typical tail.
    pub fn doubling_point(&self, x: f64, tail_seed: u64) -> Result<BasePoint, BaseError> {
        if !matches!(self.kind, SystemKind::Doubling) || !(0.0..1.0).contains(&x) {
            return Err(BaseError::InvalidPoint(format!("{x} is not a doubling-map point")));
        }
        let mut digits = Vec::new();
        let mut r = x;
        while r != 0.0 && digits.len() < 1100 {
            r *= 2.0;
            if r >= 1.0 {
                digits.push(1);
                r -= 1.0;
            } else {
                digits.push(0);
            }
        }
        self.point_from_word(&digits, tail_seed)
    }

    pub fn circle_point(&self, x: f64) -> Result<BasePoint, BaseError> {
        if !matches!(self.kind, SystemKind::Rotation { .. }) || !(0.0..1.0).contains(&x) {
            return Err(BaseError::InvalidPoint(format!("{x} is not a circle point")));
        }
        Ok(BasePoint::Circle(x))
    }

    pub fn suspended_point(&self, base: BasePoint, height: f64) -> Result<BasePoint, BaseError> {
        let q = BasePoint::Suspended {
            base: Box::new(base),
            height,
        };
        self.validate(&q)?;
        Ok(q)
    }

    /// Check that `q` is a point of this system.
    pub fn validate(&self, q: &BasePoint) -> Result<(), BaseError> {
        match (&self.kind, q) {
            (SystemKind::Rotation { .. }, BasePoint::Circle(x)) => {
                if (0.0..1.0).contains(x) {
                    Ok(())
                } else {
                    Err(BaseError::InvalidPoint(format!("circle coordinate {x} outside [0,1)")))
                }
            }
            (SystemKind::FullShift { .. } | SystemKind::Sft { .. } | SystemKind::Doubling, BasePoint::Symbolic(s)) => {
                let w: Vec<u8> = s.symbols().collect();
                if self.is_admissible(&w) {
                    Ok(())
                } else {
                    Err(BaseError::InvalidPoint("symbol window is not admissible".into()))
                }
            }
            (SystemKind::Suspension { base, roof, .. }, BasePoint::Suspended { base: b, height }) => {
                base.validate(b)?;
                let r = roof.eval(base.coordinate(b));
                if *height >= 0.0 && *height < r {
                    Ok(())
                } else {
                    Err(BaseError::InvalidPoint(format!("height {height} outside [0, {r})")))
                }
            }
            _ => Err(BaseError::InvalidPoint("point kind does not match system kind".into())),
        }
    }

    /// Scalar coordinate in `[0,1)` used by closed-form generators.
    pub fn coordinate(&self, q: &BasePoint) -> f64 {
        match q {
            BasePoint::Circle(x) => *x,
            BasePoint::Symbolic(s) => s.coordinate(self.alphabet().unwrap_or(2)),
            BasePoint::Suspended { base, .. } => match &self.kind {
                SystemKind::Suspension { base: sys, .. } => sys.coordinate(base),
                _ => 0.0,
            },
        }
    }

    /// Height coordinate (0 for map points).
    pub fn height(&self, q: &BasePoint) -> f64 {
        match q {
            BasePoint::Suspended { height, .. } => *height,
            _ => 0.0,
        }
    }

    /// Draw a point from the ergodic measure; deterministic in `seed`.
    pub fn sample_point(&self, seed: u64) -> BasePoint {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(&mut rng)
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R) -> BasePoint {
        match &self.kind {
            SystemKind::FullShift { .. } | SystemKind::Sft { .. } | SystemKind::Doubling => {
                let seed: u64 = rng.random();
                BasePoint::Symbolic(SymbolSeq::from_seed(seed, self.law.as_ref().unwrap()))
            }
            SystemKind::Rotation { .. } => BasePoint::Circle(wrap_unit(rng.random::<f64>())),
            SystemKind::Suspension {
                base,
                roof,
                roof_max,
                ..
            } => loop {
                let b = base.sample_with(rng);
                let r = roof.eval(base.coordinate(&b));
                let u: f64 = rng.random();
                let h = u * roof_max;
                if h < r {
                    return BasePoint::Suspended {
                        base: Box::new(b),
                        height: h,
                    };
                }
            },
        }
    }

    /// Apply the map once (`φ₁` for suspensions).
    pub fn step(&self, q: &BasePoint) -> Result<BasePoint, BaseError> {
        let mut p = q.clone();
        self.step_in_place(&mut p)?;
        Ok(p)
    }

    pub fn step_in_place(&self, q: &mut BasePoint) -> Result<(), BaseError> {
        match (&self.kind, q) {
            (SystemKind::Rotation { angle }, BasePoint::Circle(x)) => {
                let mut y = *x + angle;
                if y >= 1.0 {
                    y -= 1.0;
                }
                *x = wrap_unit(y);
                Ok(())
            }
            (SystemKind::FullShift { .. } | SystemKind::Sft { .. } | SystemKind::Doubling, BasePoint::Symbolic(s)) => {
                s.shift(self.law.as_ref().unwrap());
                Ok(())
            }
            (SystemKind::Suspension { .. }, q @ BasePoint::Suspended { .. }) => self.flow_in_place(q, 1.0),
            (_, q) => Err(BaseError::InvalidPoint(format!(
                "{} point for {} system",
                q.kind_name(),
                self.kind_name()
            ))),
        }
    }

    /// `n`-fold application of [`step`](Self::step).
    pub fn step_n(&self, q: &BasePoint, n: u64) -> Result<BasePoint, BaseError> {
        let mut p = q.clone();
        for _ in 0..n {
            self.step_in_place(&mut p)?;
        }
        Ok(p)
    }

    /// `φ_t(q)` for a suspension semi-flow.
    pub fn flow_step(&self, q: &BasePoint, t: f64) -> Result<BasePoint, BaseError> {
        let mut p = q.clone();
        self.flow_in_place(&mut p, t)?;
        Ok(p)
    }

    pub fn flow_in_place(&self, q: &mut BasePoint, t: f64) -> Result<(), BaseError> {
        if !(t >= 0.0) {
            return Err(BaseError::NegativeTime(t));
        }
        let SystemKind::Suspension { base, roof, .. } = &self.kind else {
            return Err(BaseError::NotSemiFlow);
        };
        let BasePoint::Suspended { base: b, height } = q else {
            return Err(BaseError::InvalidPoint("expected a suspension point".into()));
        };
        let mut h = *height + t;
        loop {
            let r = roof.eval(base.coordinate(b));
            if h < r {
                break;
            }
            h -= r;
            base.step_in_place(b)?;
        }
        *height = h;
        Ok(())
    }

    /// Periodic orbits up to `max_period`, one representative per orbit.
    pub fn enumerate_periodic_orbits(&self, max_period: usize) -> Result<Vec<PeriodicOrbit>, BaseError> {
        periodic::enumerate(self, max_period)
    }

    pub(crate) fn kind_name(&self) -> &'static str {
        match self.kind {
            SystemKind::FullShift { .. } => "full shift",
            SystemKind::Sft { .. } => "subshift of finite type",
            SystemKind::Rotation { .. } => "circle rotation",
            SystemKind::Doubling => "doubling map",
            SystemKind::Suspension { .. } => "suspension semi-flow",
        }
    }
}

impl BasePoint {
    fn kind_name(&self) -> &'static str {
        match self {
            BasePoint::Symbolic(_) => "symbolic",
            BasePoint::Circle(_) => "circle",
            BasePoint::Suspended { .. } => "suspension",
        }
    }

    pub fn as_symbols(&self) -> Option<&SymbolSeq> {
        match self {
            BasePoint::Symbolic(s) => Some(s),
            BasePoint::Suspended { base, .. } => base.as_symbols(),
            BasePoint::Circle(_) => None,
        }
    }
}

impl fmt::Display for BasePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasePoint::Circle(x) => write!(f, "{x}"),
            BasePoint::Symbolic(s) => {
                for sym in s.symbols().take(16) {
                    write!(f, "{sym}")?;
                }
                write!(f, "…")
            }
            BasePoint::Suspended { base, height } => write!(f, "({base}, {height})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_shift() -> BaseSystem {
        BaseSystem::full_shift(vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn doubling_step_is_exact() {
        let sys = BaseSystem::doubling();
        let q = sys.doubling_point(0.3, 5).unwrap();
        assert_eq!(sys.coordinate(&q), 0.3);
        let p = sys.step(&q).unwrap();
        assert_eq!(sys.coordinate(&p), 0.6);
    }

    #[test]
    fn rotation_step_wraps() {
        let sys = BaseSystem::rotation(0.25).unwrap();
        let q = sys.circle_point(0.9).unwrap();
        let BasePoint::Circle(x) = sys.step(&q).unwrap() else { panic!() };
        assert!((x - 0.15).abs() < 1e-15);
        let fixed = BaseSystem::rotation(0.0).unwrap();
        let q = fixed.sample_point(3);
        assert_eq!(fixed.step(&q).unwrap(), q);
    }

    #[test]
    fn shift_drops_first_symbol() {
        let sys = two_shift();
        let q = sys.point_from_word(&[0, 1, 1], 9).unwrap();
        let p = sys.step(&q).unwrap();
        assert_eq!(p.as_symbols().unwrap().prefix(2), vec![1, 1]);
    }

    #[test]
    fn step_n_matches_repeated_steps() {
        let sys = BaseSystem::sft(vec![vec![true, true], vec![true, false]], None).unwrap();
        let q = sys.sample_point(42);
        let mut p = q.clone();
        for _ in 0..137 {
            p = sys.step(&p).unwrap();
        }
        assert_eq!(sys.step_n(&q, 137).unwrap(), p);
    }

    #[test]
    fn flow_steps_compose() {
        let base = BaseSystem::rotation(0.1).unwrap();
        let sys = BaseSystem::promote(base).unwrap();
        let q = sys.suspended_point(BasePoint::Circle(0.375), 0.0).unwrap();
        assert_eq!(sys.flow_step(&q, 0.0).unwrap(), q);
        let half = sys.flow_step(&q, 0.5).unwrap();
        assert_eq!(half, sys.suspended_point(BasePoint::Circle(0.375), 0.5).unwrap());
        let one = sys.flow_step(&q, 1.0).unwrap();
        let BasePoint::Suspended { base, height } = &one else { panic!() };
        assert_eq!(height, &0.0);
        assert!(matches!(**base, BasePoint::Circle(x) if (x - 0.475).abs() < 1e-15));
        for (t, s) in [(0.25, 0.5), (1.75, 2.5), (3.0, 0.125)] {
            let a = sys.flow_step(&q, t + s).unwrap();
            let b = sys.flow_step(&sys.flow_step(&q, s).unwrap(), t).unwrap();
            assert_eq!(a, b);
        }
        assert_eq!(sys.flow_step(&q, -1.0), Err(BaseError::NegativeTime(-1.0)));
        assert_eq!(two_shift().flow_step(&q, 1.0), Err(BaseError::NotSemiFlow));
    }

    #[test]
    fn rejects_invalid_systems() {
        assert!(BaseSystem::full_shift(vec![0.6, 0.6]).is_err());
        assert!(BaseSystem::full_shift(vec![-0.5, 1.5]).is_err());
        assert!(BaseSystem::sft(vec![vec![true, false], vec![false, false]], None).is_err());
        assert!(BaseSystem::rotation(1.0).is_err());
        let base = BaseSystem::rotation(0.1).unwrap();
        assert!(BaseSystem::suspension(base, Roof::Constant(0.0)).is_err());
    }

    #[test]
    fn invalid_points_are_reported() {
        let sys = two_shift();
        assert!(sys.step(&BasePoint::Circle(0.2)).is_err());
        let sft = BaseSystem::sft(vec![vec![true, true], vec![true, false]], None).unwrap();
        assert!(sft.point_from_word(&[1, 1], 0).is_err());
        assert!(sft.periodic_point(&[1]).is_err());
        assert!(sft.periodic_point(&[0, 1]).is_ok());
    }

    #[test]
    fn markov_stationary_vector() {
        // golden-mean shift with uniform-over-allowed transitions: π = (2/3, 1/3)
        let sft = BaseSystem::sft(vec![vec![true, true], vec![true, false]], None).unwrap();
        let Measure::Markov { stationary, .. } = sft.measure() else { panic!() };
        assert!((stationary[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((stationary[1] - 1.0 / 3.0).abs() < 1e-12);
    }
}
