//! Measurable subsets of base systems: cylinders, interval unions, and
//! full-measure sets described by an explicit exclusion.

use super::{BaseError, BasePoint, BaseSystem, Measure, SystemKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Points removed from a full-measure set.
#[derive(Clone, Debug, PartialEq)]
pub enum Exclusion {
    /// All periodic points with period at most `max_period`.
    PeriodicPoints { max_period: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub enum SetShape {
    Whole,
    /// Sequences starting with the given word.
    Cylinder(Vec<u8>),
    /// Union of half-open intervals `[a, b)` of the circle coordinate.
    Intervals(Vec<(f64, f64)>),
    Excluding { base: Box<SetShape>, exclusion: Exclusion },
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeasurableSet {
    shape: SetShape,
    measure: f64,
    exact: bool,
    samples: Option<usize>,
}

fn merged_length(intervals: &[(f64, f64)]) -> f64 {
    let mut v: Vec<(f64, f64)> = intervals.to_vec();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut total = 0.0;
    let mut cur: Option<(f64, f64)> = None;
    for (a, b) in v {
        cur = match cur {
            Some((ca, cb)) if a <= cb => Some((ca, cb.max(b))),
            Some((ca, cb)) => {
                total += cb - ca;
                Some((a, b))
            }
            None => Some((a, b)),
        };
    }
    if let Some((a, b)) = cur {
        total += b - a;
    }
    total
}

/// Exact measure of a cylinder, if the system's measure allows it.
pub(crate) fn cylinder_measure(system: &BaseSystem, word: &[u8]) -> Option<f64> {
    if word.is_empty() {
        return Some(1.0);
    }
    match system.measure() {
        Measure::Bernoulli(w) => Some(word.iter().map(|&s| w[s as usize]).product()),
        Measure::Markov { matrix, stationary } => {
            let mut m = stationary[word[0] as usize];
            for pair in word.windows(2) {
                m *= matrix[pair[0] as usize][pair[1] as usize];
            }
            Some(m)
        }
        Measure::Lebesgue if matches!(system.kind(), SystemKind::Doubling) => Some(0.5f64.powi(word.len() as i32)),
        _ => None,
    }
}

impl MeasurableSet {
    pub fn whole() -> Self {
        MeasurableSet {
            shape: SetShape::Whole,
            measure: 1.0,
            exact: true,
            samples: None,
        }
    }

    /// Cylinder `[word]` with its exact measure. On a suspension the
    /// cylinder refers to the base point.
    pub fn cylinder(system: &BaseSystem, word: &[u8]) -> Result<Self, BaseError> {
        let target = match system.suspension_parts() {
            Some((base, roof)) if roof.as_constant().is_some() => base,
            Some(_) => return Err(BaseError::Unsupported("cylinders under a non-constant roof".into())),
            None => system,
        };
        if !target.is_symbolic() || !target.is_admissible(word) {
            return Err(BaseError::InvalidPoint(format!("{word:?} is not an admissible cylinder word")));
        }
        let measure = cylinder_measure(target, word).expect("symbolic measure");
        Ok(MeasurableSet {
            shape: SetShape::Cylinder(word.to_vec()),
            measure,
            exact: true,
            samples: None,
        })
    }

    /// Union of half-open intervals of the circle coordinate.
    pub fn intervals(system: &BaseSystem, intervals: Vec<(f64, f64)>) -> Result<Self, BaseError> {
        let target = match system.suspension_parts() {
            Some((base, roof)) if roof.as_constant().is_some() => base,
            Some(_) => return Err(BaseError::Unsupported("intervals under a non-constant roof".into())),
            None => system,
        };
        if !matches!(target.kind(), SystemKind::Rotation { .. } | SystemKind::Doubling) {
            return Err(BaseError::Unsupported(format!("intervals on a {}", target.kind_name())));
        }
        for &(a, b) in &intervals {
            if !(0.0 <= a && a < b && b <= 1.0) {
                return Err(BaseError::InvalidSystem(format!("interval [{a}, {b}) is not inside [0,1)")));
            }
        }
        let measure = merged_length(&intervals);
        Ok(MeasurableSet {
            shape: SetShape::Intervals(intervals),
            measure,
            exact: true,
            samples: None,
        })
    }

    /// `base` minus the periodic points of period ≤ `max_period`. The
    /// removed set is countable, so the measure is unchanged whenever no
    /// periodic orbit is an atom.
    pub fn excluding_periodic(system: &BaseSystem, base: MeasurableSet, max_period: usize) -> Result<Self, BaseError> {
        if !system.is_symbolic() {
            return Err(BaseError::Unsupported(format!(
                "periodic exclusion on a {}",
                system.kind_name()
            )));
        }
        for orbit in system.enumerate_periodic_orbits(max_period)? {
            let word = orbit.word.as_ref().expect("symbolic orbit");
            let mut cycle = word.clone();
            cycle.push(word[0]);
            let atom = match system.measure() {
                Measure::Bernoulli(w) => word.iter().map(|&s| w[s as usize]).product::<f64>(),
                Measure::Markov { matrix, .. } => cycle
                    .windows(2)
                    .map(|p| matrix[p[0] as usize][p[1] as usize])
                    .product::<f64>(),
                _ => 0.5f64.powi(word.len() as i32),
            };
            if atom >= 1.0 {
                return Err(BaseError::Unsupported(format!(
                    "periodic orbit {word:?} is an atom of the measure"
                )));
            }
        }
        Ok(MeasurableSet {
            measure: base.measure,
            exact: base.exact,
            samples: base.samples,
            shape: SetShape::Excluding {
                base: Box::new(base.shape),
                exclusion: Exclusion::PeriodicPoints { max_period },
            },
        })
    }

    /// Monte Carlo estimate of the measure of an arbitrary shape.
    pub fn estimated(system: &BaseSystem, shape: SetShape, samples: usize, seed: u64) -> Result<Self, BaseError> {
        let mut probe = MeasurableSet {
            shape,
            measure: 0.0,
            exact: false,
            samples: Some(samples),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut hits = 0usize;
        for _ in 0..samples {
            let q = system.sample_with(&mut rng);
            if probe.contains(system, &q)? {
                hits += 1;
            }
        }
        probe.measure = hits as f64 / samples.max(1) as f64;
        Ok(probe)
    }

    pub fn shape(&self) -> &SetShape {
        &self.shape
    }

    pub fn measure(&self) -> f64 {
        self.measure
    }

    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub fn sample_count(&self) -> Option<usize> {
        self.samples
    }

    /// Whether `q ∈ E`. Exact for cylinders and interval unions.
    pub fn contains(&self, system: &BaseSystem, q: &BasePoint) -> Result<bool, BaseError> {
        shape_contains(&self.shape, system, q)
    }
}

fn shape_contains(shape: &SetShape, system: &BaseSystem, q: &BasePoint) -> Result<bool, BaseError> {
    if let (Some((base_sys, _)), BasePoint::Suspended { base, .. }) = (system.suspension_parts(), q) {
        if !matches!(shape, SetShape::Whole) {
            return shape_contains(shape, base_sys, base);
        }
    }
    match shape {
        SetShape::Whole => Ok(true),
        SetShape::Cylinder(word) => match q {
            BasePoint::Symbolic(s) if system.is_symbolic() => {
                Ok(word.len() <= s.window_len() && word.iter().enumerate().all(|(i, &w)| s.symbol(i) == w))
            }
            _ => Err(BaseError::IncompatibleSet),
        },
        SetShape::Intervals(list) => {
            let x = match (system.kind(), q) {
                (SystemKind::Rotation { .. }, BasePoint::Circle(x)) => *x,
                (SystemKind::Doubling, BasePoint::Symbolic(_)) => system.coordinate(q),
                _ => return Err(BaseError::IncompatibleSet),
            };
            Ok(list.iter().any(|&(a, b)| a <= x && x < b))
        }
        SetShape::Excluding { base, exclusion } => {
            if !shape_contains(base, system, q)? {
                return Ok(false);
            }
            match exclusion {
                Exclusion::PeriodicPoints { max_period } => Ok(!matches!(
                    q.as_symbols().and_then(|s| s.exact_period()),
                    Some(p) if p <= *max_period
                )),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cylinder_membership() {
        let sys = BaseSystem::full_shift(vec![0.5, 0.5]).unwrap();
        let e = MeasurableSet::cylinder(&sys, &[0]).unwrap();
        assert_eq!(e.measure(), 0.5);
        assert!(e.contains(&sys, &sys.point_from_word(&[0], 1).unwrap()).unwrap());
        assert!(!e.contains(&sys, &sys.point_from_word(&[1], 1).unwrap()).unwrap());
        assert_eq!(e.contains(&sys, &BasePoint::Circle(0.1)), Err(BaseError::IncompatibleSet));
    }

    #[test]
    fn bernoulli_cylinder_measure_is_product() {
        let sys = BaseSystem::full_shift(vec![0.2, 0.3, 0.5]).unwrap();
        let e = MeasurableSet::cylinder(&sys, &[2, 0, 1, 1]).unwrap();
        assert!((e.measure() - 0.5 * 0.2 * 0.3 * 0.3).abs() < 1e-15);
    }

    #[test]
    fn half_open_intervals() {
        let sys = BaseSystem::rotation(0.25).unwrap();
        let e = MeasurableSet::intervals(&sys, vec![(0.0, 0.25)]).unwrap();
        assert!(!e.contains(&sys, &BasePoint::Circle(0.25)).unwrap());
        assert!(e.contains(&sys, &BasePoint::Circle(0.0)).unwrap());
        let u = MeasurableSet::intervals(&sys, vec![(0.0, 0.5), (0.25, 0.75), (0.9, 1.0)]).unwrap();
        assert!((u.measure() - 0.85).abs() < 1e-15);
    }

    #[test]
    fn exclusion_removes_only_periodic_points() {
        let sys = BaseSystem::full_shift(vec![0.5, 0.5]).unwrap();
        let e = MeasurableSet::excluding_periodic(&sys, MeasurableSet::whole(), 4).unwrap();
        assert_eq!(e.measure(), 1.0);
        assert!(!e.contains(&sys, &sys.periodic_point(&[0, 1]).unwrap()).unwrap());
        assert!(e.contains(&sys, &sys.periodic_point(&[0, 0, 0, 0, 1]).unwrap()).unwrap());
        for seed in 0..200 {
            assert!(e.contains(&sys, &sys.sample_point(seed)).unwrap());
        }
        let atomic = BaseSystem::full_shift(vec![1.0, 0.0]).unwrap();
        assert!(MeasurableSet::excluding_periodic(&atomic, MeasurableSet::whole(), 2).is_err());
    }

    #[test]
    fn monte_carlo_estimate_is_flagged() {
        let sys = BaseSystem::rotation(0.1).unwrap();
        let e = MeasurableSet::estimated(&sys, SetShape::Intervals(vec![(0.0, 0.3)]), 20_000, 3).unwrap();
        assert!(!e.is_exact());
        assert_eq!(e.sample_count(), Some(20_000));
        let sigma = (0.3 * 0.7 / 20_000f64).sqrt();
        assert!((e.measure() - 0.3).abs() < 4.0 * sigma);
    }
}
