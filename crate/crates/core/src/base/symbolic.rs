//! One-sided symbol sequences with a finite explicit window and a
//! deterministic tail.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::VecDeque;

/// Symbols kept explicitly ahead of the current position.
pub const MIN_WINDOW: usize = 64;

/// Transition law used to extend a sequence past its explicit window.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolLaw {
    pub initial: Vec<f64>,
    /// `rows[a][b]` is the probability of `b` following `a`.
    pub rows: Vec<Vec<f64>>,
}

impl SymbolLaw {
    pub fn alphabet(&self) -> usize {
        self.initial.len()
    }

    fn draw(weights: &[f64], u: f64) -> u8 {
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (i, &w) in weights.iter().enumerate() {
            if w > 0.0 {
                last_positive = i;
                acc += w;
                if u < acc {
                    return i as u8;
                }
            }
        }
        last_positive as u8
    }

    fn next_symbol(&self, prev: Option<u8>, u: f64) -> u8 {
        match prev {
            None => Self::draw(&self.initial, u),
            Some(a) => Self::draw(&self.rows[a as usize], u),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tail {
    /// Symbol at absolute index `j` is drawn from the law using the `j`-th
    /// 64-bit output of a ChaCha stream keyed by `seed`.
    Random { seed: u64, rng: ChaCha8Rng },
    /// Symbol at absolute index `j` is `word[j % word.len()]`.
    Periodic { word: Vec<u8> },
}

/// A point of a one-sided shift space: the symbols from `position` onward
/// of a fixed infinite sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolSeq {
    window: VecDeque<u8>,
    position: u64,
    tail: Tail,
}

impl SymbolSeq {
    /// Sequence whose first `prefix.len()` symbols are given and whose tail
    /// is drawn from the law with `seed`.
    pub fn with_prefix(prefix: &[u8], seed: u64, law: &SymbolLaw) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_word_pos(2 * prefix.len() as u128);
        let mut s = SymbolSeq {
            window: prefix.iter().copied().collect(),
            position: 0,
            tail: Tail::Random { seed, rng },
        };
        s.fill(law);
        s
    }

    /// Sequence fully generated from `seed`.
    pub fn from_seed(seed: u64, law: &SymbolLaw) -> Self {
        Self::with_prefix(&[], seed, law)
    }

    /// The periodic sequence `word word word …`.
    pub fn periodic(word: &[u8]) -> Self {
        assert!(!word.is_empty(), "periodic word must be nonempty");
        let mut s = SymbolSeq {
            window: VecDeque::new(),
            position: 0,
            tail: Tail::Periodic { word: word.to_vec() },
        };
        s.fill_periodic();
        s
    }

    /// The sequence `prefix` followed by `word` repeated; symbols after the
    /// prefix follow `word` at their absolute index.
    pub fn eventually_periodic(prefix: &[u8], word: &[u8]) -> Self {
        assert!(!word.is_empty(), "periodic word must be nonempty");
        let mut s = SymbolSeq {
            window: prefix.iter().copied().collect(),
            position: 0,
            tail: Tail::Periodic { word: word.to_vec() },
        };
        s.fill_periodic();
        s
    }

    fn fill_periodic(&mut self) {
        if let Tail::Periodic { word } = &self.tail {
            while self.window.len() < MIN_WINDOW {
                let j = self.position + self.window.len() as u64;
                self.window.push_back(word[(j % word.len() as u64) as usize]);
            }
        }
    }

    fn fill(&mut self, law: &SymbolLaw) {
        while self.window.len() < MIN_WINDOW {
            let prev = self.window.back().copied();
            match &mut self.tail {
                Tail::Random { rng, .. } => {
                    let u: f64 = rng.random();
                    let sym = law.next_symbol(prev, u);
                    self.window.push_back(sym);
                }
                Tail::Periodic { .. } => {
                    self.fill_periodic();
                    return;
                }
            }
        }
    }

    /// Advance by one symbol (the left shift).
    pub fn shift(&mut self, law: &SymbolLaw) {
        if self.window.len() <= MIN_WINDOW {
            // keep at least one symbol beyond the one being dropped
            let target = self.window.len() + 1;
            while self.window.len() < target {
                let prev = self.window.back().copied();
                match &mut self.tail {
                    Tail::Random { rng, .. } => {
                        let u: f64 = rng.random();
                        self.window.push_back(law.next_symbol(prev, u));
                    }
                    Tail::Periodic { word } => {
                        let j = self.position + self.window.len() as u64;
                        self.window.push_back(word[(j % word.len() as u64) as usize]);
                    }
                }
            }
        }
        self.window.pop_front();
        self.position += 1;
    }

    /// Number of symbols held explicitly.
    pub fn window_len(&self) -> usize {
        self.window.len()
    }

    /// Symbol at offset `i` from the current position; `i < window_len()`.
    pub fn symbol(&self, i: usize) -> u8 {
        self.window[i]
    }

    pub fn prefix(&self, len: usize) -> Vec<u8> {
        self.window.iter().take(len).copied().collect()
    }

    pub fn symbols(&self) -> impl Iterator<Item = u8> + '_ {
        self.window.iter().copied()
    }

    /// Number of shifts applied since construction.
    pub fn position(&self) -> u64 {
        self.position
    }

    /// Minimal period when the whole sequence is periodic.
    pub fn exact_period(&self) -> Option<usize> {
        match &self.tail {
            Tail::Periodic { word } => Some(super::periodic::primitive_period(word)),
            Tail::Random { .. } => None,
        }
    }

    pub fn tail_seed(&self) -> Option<u64> {
        match &self.tail {
            Tail::Random { seed, .. } => Some(*seed),
            Tail::Periodic { .. } => None,
        }
    }

    /// `Σ_i s_i k^{-i-1}` over the window. Binary sequences are truncated to
    /// 53 significant bits, so a double's own expansion maps back to it.
    pub fn coordinate(&self, alphabet: usize) -> f64 {
        if alphabet == 2 {
            let mut m: u64 = 0;
            for i in 0..64 {
                m = (m << 1) | self.window.get(i).copied().unwrap_or(0) as u64;
            }
            let bits = 64 - m.leading_zeros();
            if bits > 53 {
                m &= !((1u64 << (bits - 53)) - 1);
            }
            return m as f64 * 2f64.powi(-64);
        }
        let k = alphabet as f64;
        let mut x = 0.0;
        for i in (0..40.min(self.window.len())).rev() {
            x = (x + self.window[i] as f64) / k;
        }
        if x >= 1.0 {
            1.0 - f64::EPSILON / 2.0
        } else {
            x
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fair() -> SymbolLaw {
        SymbolLaw {
            initial: vec![0.5, 0.5],
            rows: vec![vec![0.5, 0.5], vec![0.5, 0.5]],
        }
    }

    #[test]
    fn tail_is_a_function_of_absolute_index() {
        let law = fair();
        let mut a = SymbolSeq::from_seed(11, &law);
        let original: Vec<u8> = a.symbols().collect();
        for _ in 0..10 {
            a.shift(&law);
        }
        let shifted: Vec<u8> = a.symbols().take(54).collect();
        assert_eq!(&original[10..64], &shifted[..]);
        // same seed, explicit prefix of the generated symbols: identical tail
        let b = SymbolSeq::with_prefix(&original[..5], 11, &law);
        assert_eq!(b.prefix(64), original);
    }

    #[test]
    fn periodic_sequences_repeat() {
        let law = fair();
        let mut s = SymbolSeq::periodic(&[0, 1, 1]);
        assert_eq!(s.prefix(6), vec![0, 1, 1, 0, 1, 1]);
        s.shift(&law);
        assert_eq!(s.prefix(4), vec![1, 1, 0, 1]);
        for _ in 0..200 {
            s.shift(&law);
        }
        assert_eq!(s.prefix(3), vec![0, 1, 1]);
        assert_eq!(s.exact_period(), Some(3));
    }

    #[test]
    fn binary_coordinate_is_exact() {
        let s = SymbolSeq::periodic(&[0, 1]);
        // 0.010101… = 1/3
        assert!((s.coordinate(2) - 1.0 / 3.0).abs() < 2f64.powi(-52));
        assert_eq!(SymbolSeq::periodic(&[1]).coordinate(2), 1.0 - 2f64.powi(-53));
    }
}
