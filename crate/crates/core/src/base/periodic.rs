//! Periodic-orbit enumeration.

use super::{BaseError, BasePoint, BaseSystem, SystemKind};

#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicOrbit {
    /// Canonical (lexicographically least rotation) word for symbolic systems.
    pub word: Option<Vec<u8>>,
    pub start: BasePoint,
    /// Number of map steps per period.
    pub period: usize,
    /// Flow time per period (equal to `period` for maps).
    pub time: f64,
}

/// Smallest `p` such that `word` is a power of its first `p` symbols.
pub fn primitive_period(word: &[u8]) -> usize {
    let n = word.len();
    (1..=n)
        .find(|&p| n.is_multiple_of(p) && (p..n).all(|i| word[i] == word[i - p]))
        .unwrap_or(n)
}

fn is_least_rotation(word: &[u8]) -> bool {
    let n = word.len();
    (1..n).all(|r| {
        let rotated = word[r..].iter().chain(&word[..r]);
        word.iter().le(rotated)
    })
}

/// Number of primitive necklaces of length `n` over `k` symbols,
/// `(1/n) Σ_{d | n} μ(d) k^{n/d}`.
pub fn necklace_count(k: u64, n: u64) -> u64 {
    fn mobius(mut n: u64) -> i64 {
        let mut result = 1;
        let mut p = 2;
        while p * p <= n {
            if n.is_multiple_of(p) {
                n /= p;
                if n.is_multiple_of(p) {
                    return 0;
                }
                result = -result;
            }
            p += 1;
        }
        if n > 1 {
            result = -result;
        }
        result
    }
    let total: i64 = (1..=n)
        .filter(|d| n.is_multiple_of(*d))
        .map(|d| mobius(d) * (k as i64).pow((n / d) as u32))
        .sum();
    (total / n as i64) as u64
}

/// Best rational `p/q` with `q ≤ max_den` within `tol` of `x`, via
/// continued fractions.
pub fn rational_approximation(x: f64, max_den: u64, tol: f64) -> Option<(u64, u64)> {
    let (mut h0, mut h1) = (0u64, 1u64);
    let (mut k0, mut k1) = (1u64, 0u64);
    let mut r = x;
    for _ in 0..64 {
        let a = r.floor();
        let a_u = a as u64;
        let h2 = a_u.checked_mul(h1)?.checked_add(h0)?;
        let k2 = a_u.checked_mul(k1)?.checked_add(k0)?;
        if k2 > max_den {
            return None;
        }
        if (h2 as f64 / k2 as f64 - x).abs() <= tol {
            return Some((h2, k2));
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        let frac = r - a;
        if frac == 0.0 {
            return None;
        }
        r = 1.0 / frac;
    }
    None
}

fn symbolic_orbits(system: &BaseSystem, max_period: usize) -> Result<Vec<PeriodicOrbit>, BaseError> {
    let k = system.alphabet().expect("symbolic") as u8;
    let mut out = Vec::new();
    for len in 1..=max_period {
        let mut word = Vec::with_capacity(len);
        // DFS over admissible words of length `len`
        fn visit(
            system: &BaseSystem,
            k: u8,
            len: usize,
            word: &mut Vec<u8>,
            out: &mut Vec<PeriodicOrbit>,
        ) -> Result<(), BaseError> {
            if word.len() == len {
                let closes = system.allowed(word[len - 1], word[0]);
                if closes && primitive_period(word) == len && is_least_rotation(word) {
                    out.push(PeriodicOrbit {
                        word: Some(word.clone()),
                        start: system.periodic_point(word)?,
                        period: len,
                        time: len as f64,
                    });
                }
                return Ok(());
            }
            for s in 0..k {
                if word.last().is_none_or(|&a| system.allowed(a, s)) {
                    word.push(s);
                    visit(system, k, len, word, out)?;
                    word.pop();
                }
            }
            Ok(())
        }
        visit(system, k, len, &mut word, &mut out)?;
    }
    Ok(out)
}

/// Representatives per orbit for a rational rotation.
const ROTATION_REPRESENTATIVES: usize = 8;

pub(super) fn enumerate(system: &BaseSystem, max_period: usize) -> Result<Vec<PeriodicOrbit>, BaseError> {
    match system.kind() {
        SystemKind::FullShift { .. } | SystemKind::Sft { .. } | SystemKind::Doubling => {
            symbolic_orbits(system, max_period)
        }
        SystemKind::Rotation { angle } => {
            let Some((_, q)) = rational_approximation(*angle, max_period as u64, 1e-12) else {
                return Ok(Vec::new());
            };
            let q = q as usize;
            // every point has period q; points of [0, 1/q) lie on distinct orbits
            Ok((0..ROTATION_REPRESENTATIVES)
                .map(|j| PeriodicOrbit {
                    word: None,
                    start: BasePoint::Circle(j as f64 / (q * ROTATION_REPRESENTATIVES) as f64),
                    period: q,
                    time: q as f64,
                })
                .collect())
        }
        SystemKind::Suspension { base, roof, .. } => {
            let Some(r) = roof.as_constant() else {
                return Err(BaseError::Unsupported("periodic orbits under a non-constant roof".into()));
            };
            Ok(base
                .enumerate_periodic_orbits(max_period)?
                .into_iter()
                .map(|o| PeriodicOrbit {
                    word: o.word,
                    start: BasePoint::Suspended {
                        base: Box::new(o.start),
                        height: 0.0,
                    },
                    period: o.period,
                    time: o.period as f64 * r,
                })
                .collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force_orbit_count(system: &BaseSystem, len: usize) -> usize {
        // all admissible cyclic words of length `len` that are primitive, divided by len
        let k = system.alphabet().unwrap() as u64;
        let mut count = 0;
        for code in 0..k.pow(len as u32) {
            let word: Vec<u8> = (0..len).map(|i| ((code / k.pow(i as u32)) % k) as u8).collect();
            let mut cyc = word.clone();
            cyc.push(word[0]);
            if system.is_admissible(&cyc) && primitive_period(&word) == len {
                count += 1;
            }
        }
        count / len
    }

    #[test]
    fn full_two_shift_period_two() {
        let sys = BaseSystem::full_shift(vec![0.5, 0.5]).unwrap();
        let orbits = sys.enumerate_periodic_orbits(2).unwrap();
        let words: Vec<Vec<u8>> = orbits.iter().map(|o| o.word.clone().unwrap()).collect();
        assert_eq!(words, vec![vec![0], vec![1], vec![0, 1]]);
    }

    #[test]
    fn counts_match_necklace_formula() {
        for k in 1..=3usize {
            let sys = BaseSystem::full_shift(vec![1.0 / k as f64; k]).unwrap();
            let orbits = sys.enumerate_periodic_orbits(7).unwrap();
            for n in 1..=7 {
                let got = orbits.iter().filter(|o| o.period == n).count() as u64;
                assert_eq!(got, necklace_count(k as u64, n as u64), "k={k} n={n}");
            }
        }
        assert_eq!(necklace_count(2, 2), 1);
    }

    #[test]
    fn golden_mean_shift_matches_brute_force() {
        let sys = BaseSystem::sft(vec![vec![true, true], vec![true, false]], None).unwrap();
        let orbits = sys.enumerate_periodic_orbits(2).unwrap();
        let words: Vec<Vec<u8>> = orbits.iter().map(|o| o.word.clone().unwrap()).collect();
        assert_eq!(words, vec![vec![0], vec![0, 1]]);
        let orbits = sys.enumerate_periodic_orbits(10).unwrap();
        for n in 1..=10 {
            let got = orbits.iter().filter(|o| o.period == n).count();
            assert_eq!(got, brute_force_orbit_count(&sys, n));
        }
        for o in &orbits {
            let w = o.word.as_ref().unwrap();
            let mut cyc = w.clone();
            cyc.push(w[0]);
            assert!(sys.is_admissible(&cyc));
        }
    }

    #[test]
    fn fixed_points_of_k_shift() {
        let sys = BaseSystem::full_shift(vec![0.25; 4]).unwrap();
        assert_eq!(sys.enumerate_periodic_orbits(1).unwrap().len(), 4);
    }

    #[test]
    fn rotations() {
        let irr = BaseSystem::rotation((5f64.sqrt() - 1.0) / 2.0).unwrap();
        assert!(irr.enumerate_periodic_orbits(50).unwrap().is_empty());
        let quarter = BaseSystem::rotation(0.25).unwrap();
        let orbits = quarter.enumerate_periodic_orbits(4).unwrap();
        assert!(!orbits.is_empty());
        for o in &orbits {
            assert_eq!(o.period, 4);
            assert_eq!(quarter.step_n(&o.start, 4).unwrap(), o.start);
        }
        assert!(quarter.enumerate_periodic_orbits(3).unwrap().is_empty());
        assert_eq!(rational_approximation(0.375, 100, 1e-12), Some((3, 8)));
    }
}
