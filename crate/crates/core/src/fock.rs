//! Word bookkeeping for the truncated tensor algebra `⊕_{n ≤ N} H^{⊗n}`.
//!
//! Words are ordered by degree first, then lexicographically inside a degree,
//! so the degree-`n` level occupies the contiguous index range
//! `offset(n) .. offset(n) + d^n` and the rank of a word inside its level is
//! its base-`d` numeral (first letter most significant).

use nalgebra::DVector;
use num_complex::Complex64;
use std::fmt;
use std::ops::Range;

use crate::error::{domain, QfockError, Result};

pub type C64 = Complex64;

/// Coefficients of a vector in the truncated Fock space, indexed by
/// [`FockBasis::word_index`].
pub type FockVector = DVector<C64>;

/// Default cap on the total number of basis vectors.
pub const DEFAULT_BUDGET: usize = 2_000_000;

/// A simple tensor `e_{j1} ⊗ … ⊗ e_{jn}`; the empty word is the vacuum.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Word {
    letters: Vec<usize>,
}

impl Word {
    pub fn new(letters: Vec<usize>, d: usize) -> Result<Self> {
        if let Some(&bad) = letters.iter().find(|&&l| l >= d) {
            return domain(format!("letter {bad} out of range for d = {d}"));
        }
        Ok(Word { letters })
    }

    pub fn vacuum() -> Self {
        Word { letters: Vec::new() }
    }

    pub fn letters(&self) -> &[usize] {
        &self.letters
    }

    pub fn degree(&self) -> usize {
        self.letters.len()
    }

    pub fn is_vacuum(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn reversed(&self) -> Word {
        Word {
            letters: self.letters.iter().rev().copied().collect(),
        }
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.letters.is_empty() {
            return write!(f, "Ω");
        }
        let parts: Vec<String> = self.letters.iter().map(|l| format!("e{l}")).collect();
        write!(f, "{}", parts.join("⊗"))
    }
}

/// Enumeration of all words of degree `≤ N` over `d` letters.
///
/// Immutable after construction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FockBasis {
    d: usize,
    truncation: usize,
    /// `offsets[n]` is the index of the first degree-`n` word; `offsets[N + 1]` is the dimension.
    offsets: Vec<usize>,
    powers: Vec<usize>,
}

impl FockBasis {
    pub fn new(d: usize, truncation: usize) -> Result<Self> {
        Self::with_budget(d, truncation, DEFAULT_BUDGET)
    }

    pub fn with_budget(d: usize, truncation: usize, budget: usize) -> Result<Self> {
        if d == 0 {
            return domain("d must be at least 1");
        }
        let mut powers = Vec::with_capacity(truncation + 2);
        let mut offsets = Vec::with_capacity(truncation + 2);
        let mut p: usize = 1;
        let mut total: usize = 0;
        for n in 0..=truncation + 1 {
            powers.push(p);
            offsets.push(total);
            if n <= truncation {
                total = total.checked_add(p).ok_or_else(|| size_error(d, truncation, budget))?;
                if total > budget {
                    return Err(size_error(d, truncation, budget));
                }
                p = p.saturating_mul(d);
            }
        }
        Ok(FockBasis {
            d,
            truncation,
            offsets,
            powers,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// The truncation degree `N`.
    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn dim(&self) -> usize {
        self.offsets[self.truncation + 1]
    }

    pub fn level_dim(&self, n: usize) -> usize {
        self.powers[n]
    }

    pub fn offset(&self, n: usize) -> usize {
        self.offsets[n]
    }

    pub fn level_range(&self, n: usize) -> Range<usize> {
        self.offsets[n]..self.offsets[n + 1]
    }

    /// Degree of the word stored at a global index.
    pub fn degree_of(&self, index: usize) -> usize {
        match self.offsets.binary_search(&index) {
            Ok(n) => n,
            Err(n) => n - 1,
        }
    }

    pub fn word_index(&self, w: &Word) -> Result<usize> {
        let n = w.degree();
        if n > self.truncation {
            return domain(format!(
                "word of degree {n} exceeds truncation {}",
                self.truncation
            ));
        }
        if let Some(&bad) = w.letters().iter().find(|&&l| l >= self.d) {
            return domain(format!("letter {bad} out of range for d = {}", self.d));
        }
        Ok(self.offsets[n] + self.rank(w.letters()))
    }

    pub fn index_word(&self, index: usize) -> Result<Word> {
        if index >= self.dim() {
            return domain(format!("index {index} out of range (dim {})", self.dim()));
        }
        let n = self.degree_of(index);
        Ok(Word {
            letters: self.letters_of(n, index - self.offsets[n]),
        })
    }

    /// Rank of a letter sequence inside its own level.
    pub fn rank(&self, letters: &[usize]) -> usize {
        letters.iter().fold(0, |acc, &l| acc * self.d + l)
    }

    pub fn letters_of(&self, n: usize, rank: usize) -> Vec<usize> {
        let mut out = vec![0; n];
        self.decode_into(rank, &mut out);
        out
    }

    pub fn decode_into(&self, mut rank: usize, out: &mut [usize]) {
        for slot in out.iter_mut().rev() {
            *slot = rank % self.d;
            rank /= self.d;
        }
    }

    /// Iterate over all words of a given level in rank order.
    pub fn level_words(&self, n: usize) -> impl Iterator<Item = Vec<usize>> + '_ {
        (0..self.powers[n]).map(move |r| self.letters_of(n, r))
    }

    /// Rank of the reversed word, for each rank of level `n`.
    pub fn reversal_permutation(&self, n: usize) -> Vec<usize> {
        let mut buf = vec![0; n];
        (0..self.powers[n])
            .map(|r| {
                self.decode_into(r, &mut buf);
                buf.iter().rev().fold(0, |acc, &l| acc * self.d + l)
            })
            .collect()
    }

    pub fn zero_vector(&self) -> FockVector {
        FockVector::zeros(self.dim())
    }

    pub fn vacuum(&self) -> FockVector {
        let mut v = self.zero_vector();
        v[0] = C64::new(1.0, 0.0);
        v
    }

    pub fn basis_vector(&self, w: &Word) -> Result<FockVector> {
        let mut v = self.zero_vector();
        v[self.word_index(w)?] = C64::new(1.0, 0.0);
        Ok(v)
    }

    pub fn check_vector(&self, v: &FockVector) -> Result<()> {
        if v.len() != self.dim() {
            return domain(format!(
                "vector of length {} does not live on a basis of dimension {}",
                v.len(),
                self.dim()
            ));
        }
        Ok(())
    }

    /// Highest degree carrying a coefficient above `tol` in absolute value (0 for the zero vector).
    pub fn vector_degree(&self, v: &FockVector, tol: f64) -> usize {
        (0..=self.truncation)
            .rev()
            .find(|&n| self.level_range(n).any(|i| v[i].norm() > tol))
            .unwrap_or(0)
    }

    /// Tensor product `u ⊗ v` of two Fock vectors (concatenation of words).
    pub fn tensor(&self, u: &FockVector, v: &FockVector) -> Result<FockVector> {
        self.check_vector(u)?;
        self.check_vector(v)?;
        let needed = self.vector_degree(u, 0.0) + self.vector_degree(v, 0.0);
        if needed > self.truncation {
            return Err(QfockError::Truncation {
                required: needed,
                truncation: self.truncation,
            });
        }
        let mut out = self.zero_vector();
        for a in 0..=self.truncation {
            for b in 0..=self.truncation - a {
                let shift = self.powers[b];
                for ra in 0..self.powers[a] {
                    let x = u[self.offsets[a] + ra];
                    if x == C64::default() {
                        continue;
                    }
                    for rb in 0..self.powers[b] {
                        let y = v[self.offsets[b] + rb];
                        if y != C64::default() {
                            out[self.offsets[a + b] + ra * shift + rb] += x * y;
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Embed a one-particle coordinate vector as a degree-1 Fock vector.
    pub fn one_particle(&self, xi: &DVector<C64>) -> Result<FockVector> {
        if xi.len() != self.d {
            return domain(format!("one-particle vector has length {} ≠ d = {}", xi.len(), self.d));
        }
        if self.truncation == 0 {
            return Err(QfockError::Truncation {
                required: 1,
                truncation: 0,
            });
        }
        let mut v = self.zero_vector();
        for (i, x) in xi.iter().enumerate() {
            v[1 + i] = *x;
        }
        Ok(v)
    }

    /// The simple tensor `x1 ⊗ … ⊗ xn` of one-particle vectors.
    pub fn simple_tensor(&self, factors: &[DVector<C64>]) -> Result<FockVector> {
        let mut acc = self.vacuum();
        for f in factors {
            let e = self.one_particle(f)?;
            acc = self.tensor(&acc, &e)?;
        }
        Ok(acc)
    }
}

fn size_error(d: usize, truncation: usize, budget: usize) -> QfockError {
    let requested = (d as u128)
        .checked_pow(truncation as u32)
        .map(|v| v.min(usize::MAX as u128) as usize)
        .unwrap_or(usize::MAX);
    QfockError::Size {
        what: format!("d^N = {d}^{truncation}"),
        requested,
        budget,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vacuum_only_basis() {
        let b = FockBasis::new(2, 0).unwrap();
        assert_eq!(b.dim(), 1);
        assert_eq!(b.word_index(&Word::vacuum()).unwrap(), 0);
    }

    #[test]
    fn geometric_dimensions() {
        assert_eq!(FockBasis::new(2, 2).unwrap().dim(), 7);
        let direct: usize = (0..=4).map(|n| 3usize.pow(n)).sum();
        assert_eq!(direct, 121);
        assert_eq!(FockBasis::new(3, 4).unwrap().dim(), direct);
    }

    #[test]
    fn small_indices() {
        let b = FockBasis::new(2, 3).unwrap();
        assert_eq!(b.word_index(&Word::new(vec![0], 2).unwrap()).unwrap(), 1);
        assert_eq!(b.word_index(&Word::new(vec![1], 2).unwrap()).unwrap(), 2);
        // offset 3 for degree 2, rank of "10" is 2
        assert_eq!(b.word_index(&Word::new(vec![1, 0], 2).unwrap()).unwrap(), 5);
    }

    #[test]
    fn out_of_range_rejected() {
        let b = FockBasis::new(2, 2).unwrap();
        assert!(Word::new(vec![2], 2).is_err());
        let long = Word::new(vec![0, 0, 0], 2).unwrap();
        assert!(matches!(b.word_index(&long), Err(QfockError::Domain(_))));
        assert!(b.index_word(7).is_err());
    }

    #[test]
    fn budget_is_enforced() {
        let err = FockBasis::with_budget(2, 10, 1000).unwrap_err();
        match err {
            QfockError::Size { requested, budget, what } => {
                assert_eq!(requested, 1024);
                assert_eq!(budget, 1000);
                assert!(what.contains("2^10"));
            }
            e => panic!("unexpected {e:?}"),
        }
        // 2^20 - 1 total vectors fits the default budget, 2^21 - 1 does not
        assert!(FockBasis::new(2, 19).is_ok());
        assert!(FockBasis::new(2, 20).is_err());
    }

    #[test]
    fn levels_are_contiguous_and_ascending() {
        let b = FockBasis::new(3, 3).unwrap();
        for n in 0..3 {
            assert_eq!(b.level_range(n).end, b.level_range(n + 1).start);
            assert_eq!(b.level_range(n).len(), 3usize.pow(n as u32));
        }
        for k in 0..b.dim() {
            let w = b.index_word(k).unwrap();
            assert_eq!(b.degree_of(k), w.degree());
        }
    }

    #[test]
    fn tensor_concatenates() {
        let b = FockBasis::new(2, 3).unwrap();
        let u = b.basis_vector(&Word::new(vec![1], 2).unwrap()).unwrap();
        let v = b.basis_vector(&Word::new(vec![0, 1], 2).unwrap()).unwrap();
        let t = b.tensor(&u, &v).unwrap();
        let w = b.word_index(&Word::new(vec![1, 0, 1], 2).unwrap()).unwrap();
        assert_eq!(t[w], C64::new(1.0, 0.0));
        assert_eq!(t.iter().filter(|c| c.norm() > 0.0).count(), 1);
        assert!(matches!(
            b.tensor(&t, &u),
            Err(QfockError::Truncation { required: 4, truncation: 3 })
        ));
    }

    #[test]
    fn reversal_permutation_is_involution() {
        let b = FockBasis::new(3, 4).unwrap();
        for n in 0..=4 {
            let p = b.reversal_permutation(n);
            for (r, &s) in p.iter().enumerate() {
                assert_eq!(p[s], r);
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn index_round_trip(d in 1usize..5, n in 0usize..6, seed in 0usize..100_000) {
            let b = FockBasis::new(d, n).unwrap();
            let k = seed % b.dim();
            let w = b.index_word(k).unwrap();
            proptest::prop_assert_eq!(b.word_index(&w).unwrap(), k);
        }
    }
}
