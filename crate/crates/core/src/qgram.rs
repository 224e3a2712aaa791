//! Yang–Baxter operator, permutation weights and the deformed Gram blocks.
//!
//! The level-`n` Gram block is `P⁽ⁿ⁾ = Σ_{σ ∈ Sₙ} φ(σ)` where `φ(σ)` is the
//! product `T_{i1}⋯T_{ik}` along a reduced word of `σ` and `T_k` swaps the
//! letters in slots `k, k+1` with weight `q_{ab}`. Two constructions are
//! provided: the factorial-cost sum over `Sₙ` and the level recursion
//! `P⁽ⁿ⁾ = (id ⊗ P⁽ⁿ⁻¹⁾)(id + T₁ + T₁T₂ + … + T₁⋯T_{n−1})`. Both are generic
//! over the scalar so the same code runs in `f64` and in exact rationals.

use nalgebra::{DMatrix, SymmetricEigen};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rayon::prelude::*;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, OnceLock};

use crate::cache::GramCache;
use crate::error::{domain, QfockError, Result};
use crate::fock::{FockBasis, FockVector, C64};

/// Largest degree accepted by the `Sₙ` oracle.
pub const NAIVE_MAX_DEGREE: usize = 8;
/// Largest level size accepted by exact-rational Gram construction.
pub const EXACT_MAX_LEVEL: usize = 4096;
/// Tolerance of the braid self-check in floating mode.
pub const BRAID_TOL: f64 = 1e-12;

/// Symmetric deformation matrix `Q = (q_ij)` with `|q_ij| < 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct QMatrix {
    d: usize,
    entries: Vec<f64>,
    exact: Option<Vec<BigRational>>,
    qmax: f64,
}

impl QMatrix {
    /// Validate and build from rows. Asymmetry and out-of-range entries name the offending pair.
    pub fn new(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        if d == 0 {
            return domain("Q must have at least one row");
        }
        let mut entries = Vec::with_capacity(d * d);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return domain(format!("Q row {i} has length {} (expected {d})", row.len()));
            }
            entries.extend_from_slice(row);
        }
        for i in 0..d {
            for j in 0..d {
                let v = entries[i * d + j];
                if !v.is_finite() || v.abs() >= 1.0 {
                    return domain(format!("q[{i}][{j}] = {v} is not in (-1, 1)"));
                }
                if v != entries[j * d + i] {
                    return domain(format!(
                        "Q is not symmetric: q[{i}][{j}] = {v} but q[{j}][{i}] = {}",
                        entries[j * d + i]
                    ));
                }
            }
        }
        let qmax = entries.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(QMatrix {
            d,
            entries,
            exact: None,
            qmax,
        })
    }

    /// Build from exact rational entries; the float entries are their nearest doubles.
    pub fn from_rationals(rows: &[Vec<BigRational>]) -> Result<Self> {
        let float_rows: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.iter().map(rational_to_f64).collect())
            .collect();
        let d = rows.len();
        for i in 0..d {
            for j in 0..d {
                if rows[i].len() != d || rows[i][j] != rows[j][i] {
                    return domain(format!("Q is not symmetric at ({i}, {j})"));
                }
                if rows[i][j].abs() >= <BigRational as One>::one() {
                    return domain(format!("q[{i}][{j}] = {} is not in (-1, 1)", rows[i][j]));
                }
            }
        }
        let mut q = QMatrix::new(&float_rows)?;
        q.exact = Some(rows.iter().flatten().cloned().collect());
        Ok(q)
    }

    pub fn constant(d: usize, q: f64) -> Result<Self> {
        QMatrix::new(&vec![vec![q; d]; d])
    }

    pub fn zero(d: usize) -> Self {
        QMatrix::constant(d, 0.0).expect("zero matrix is valid")
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.d + j]
    }

    /// `max_{i,j} |q_ij|`.
    pub fn qmax(&self) -> f64 {
        self.qmax
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.d).map(|r| r.to_vec()).collect()
    }

    /// The common value when all entries coincide.
    pub fn constant_value(&self) -> Option<f64> {
        let first = self.entries[0];
        self.entries.iter().all(|&v| v == first).then_some(first)
    }

    pub fn is_constant(&self) -> bool {
        self.constant_value().is_some()
    }

    /// Exact rational entries: the declared rationals, or the exact value of each double.
    pub fn exact_entries(&self) -> Vec<BigRational> {
        match &self.exact {
            Some(e) => e.clone(),
            None => self
                .entries
                .iter()
                .map(|&v| BigRational::from_float(v).expect("finite entry"))
                .collect(),
        }
    }

    /// 64-bit FNV-1a hash of the row-major little-endian `f64` encoding.
    pub fn fnv_hash(&self) -> u64 {
        let bytes: Vec<u8> = self.entries.iter().flat_map(|v| v.to_le_bytes()).collect();
        fnv1a64(&bytes)
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(PRIME))
}

fn rational_to_f64(r: &BigRational) -> f64 {
    use num_traits::ToPrimitive;
    r.to_f64().unwrap_or(f64::NAN)
}

/// Apply `T` in slots `k, k+1` (1-based) to a level-`n` coordinate vector.
pub fn apply_t_k(q: &QMatrix, n: usize, k: usize, v: &[f64]) -> Result<Vec<f64>> {
    if k == 0 || k >= n {
        return domain(format!("slot k = {k} not in [1, {}]", n.saturating_sub(1)));
    }
    let d = q.d();
    let size = d.pow(n as u32);
    if v.len() != size {
        return domain(format!("vector length {} ≠ d^n = {size}", v.len()));
    }
    // slots k-1, k (0-based) carry strides d^{n-k} and d^{n-k-1}
    let hi = d.pow((n - k) as u32);
    let lo = d.pow((n - k - 1) as u32);
    let mut out = vec![0.0; size];
    for (r, &x) in v.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        let a = (r / hi) % d;
        let b = (r / lo) % d;
        let target = r - a * hi - b * lo + b * hi + a * lo;
        out[target] += q.get(a, b) * x;
    }
    Ok(out)
}

pub(crate) trait GramScalar: Clone + Send + Sync {
    fn zero() -> Self;
    fn one() -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn add_mul(&mut self, a: &Self, b: &Self);
    fn add(&mut self, other: &Self);
    fn close(&self, other: &Self) -> bool;
}

impl GramScalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn add_mul(&mut self, a: &Self, b: &Self) {
        *self += a * b;
    }
    fn add(&mut self, other: &Self) {
        *self += other;
    }
    fn close(&self, other: &Self) -> bool {
        (self - other).abs() <= BRAID_TOL * (1.0 + self.abs())
    }
}

impl GramScalar for BigRational {
    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn add_mul(&mut self, a: &Self, b: &Self) {
        if !a.is_zero() && !b.is_zero() {
            *self += a * b;
        }
    }
    fn add(&mut self, other: &Self) {
        if !other.is_zero() {
            *self += other;
        }
    }
    fn close(&self, other: &Self) -> bool {
        self == other
    }
}

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut p: Vec<usize> = (0..n).collect();
    let mut out = vec![p.clone()];
    loop {
        let Some(i) = (1..n).rev().find(|&i| p[i - 1] < p[i]) else {
            break;
        };
        let j = (i..n).rev().find(|&j| p[j] > p[i - 1]).expect("pivot exists");
        p.swap(i - 1, j);
        p[i..].reverse();
        out.push(p.clone());
    }
    out
}

/// Adjacent transpositions (1-based slots) that bubble-sort `perm`.
///
/// Every swap removes exactly one inversion, so the word is reduced.
pub fn bubble_reduced_word(perm: &[usize]) -> Vec<usize> {
    let mut p = perm.to_vec();
    let mut word = Vec::new();
    loop {
        let mut swapped = false;
        for i in 0..p.len().saturating_sub(1) {
            if p[i] > p[i + 1] {
                p.swap(i, i + 1);
                word.push(i + 1);
                swapped = true;
            }
        }
        if !swapped {
            return word;
        }
    }
}

/// A second reduced word for the same element: move `0, 1, 2, …` leftwards in turn.
pub fn selection_reduced_word(perm: &[usize]) -> Vec<usize> {
    let mut p = perm.to_vec();
    let mut word = Vec::new();
    for target in 0..p.len() {
        let mut pos = p.iter().position(|&v| v == target).expect("permutation");
        while pos > target {
            p.swap(pos - 1, pos);
            word.push(pos);
            pos -= 1;
        }
    }
    word
}

/// `φ` of a reduced word acting on a basis word: returns the coefficient and
/// permutes `letters` in place. The rightmost generator acts first.
fn apply_reduced_word<S: GramScalar>(word: &[usize], q: &[S], d: usize, letters: &mut [usize]) -> S {
    let mut coef = S::one();
    for &k in word.iter().rev() {
        let (a, b) = (letters[k - 1], letters[k]);
        coef = coef.mul(&q[a * d + b]);
        letters.swap(k - 1, k);
    }
    coef
}

/// Coordinate action of `φ(σ)` for a single reduced word; the matrix is monomial.
pub fn permutation_weight(q: &QMatrix, word: &[usize], letters: &[usize]) -> (Vec<usize>, f64) {
    let mut l = letters.to_vec();
    let c = apply_reduced_word(word, q.entries(), q.d(), &mut l);
    (l, c)
}

fn rank_of(letters: &[usize], d: usize) -> usize {
    letters.iter().fold(0, |acc, &l| acc * d + l)
}

fn decode(mut rank: usize, d: usize, out: &mut [usize]) {
    for slot in out.iter_mut().rev() {
        *slot = rank % d;
        rank /= d;
    }
}

static NAIVE_PEAK: AtomicUsize = AtomicUsize::new(0);

/// Largest degree the `Sₙ` oracle has been run at in this process.
pub fn naive_peak_degree() -> usize {
    NAIVE_PEAK.load(Ordering::Relaxed)
}

/// Column-major `Σ_σ φ(σ)` with a braid self-check on every (σ, word) pair.
fn naive_gram<S: GramScalar>(q: &[S], d: usize, n: usize) -> Result<Vec<S>> {
    NAIVE_PEAK.fetch_max(n, Ordering::Relaxed);
    let m = d.pow(n as u32);
    let words: Vec<(Vec<usize>, Vec<usize>)> = permutations(n)
        .iter()
        .map(|p| (bubble_reduced_word(p), selection_reduced_word(p)))
        .collect();
    let columns: Vec<Result<Vec<S>>> = (0..m)
        .into_par_iter()
        .map(|col| {
            let mut column = vec![S::zero(); m];
            let mut src = vec![0; n];
            decode(col, d, &mut src);
            let mut la = vec![0; n];
            let mut lb = vec![0; n];
            for (wa, wb) in &words {
                la.copy_from_slice(&src);
                lb.copy_from_slice(&src);
                let ca = apply_reduced_word(wa, q, d, &mut la);
                let cb = apply_reduced_word(wb, q, d, &mut lb);
                if la != lb || !ca.close(&cb) {
                    return Err(QfockError::Consistency(format!(
                        "reduced words {wa:?} and {wb:?} disagree on {src:?}"
                    )));
                }
                column[rank_of(&la, d)].add(&ca);
            }
            Ok(column)
        })
        .collect();
    let mut out = Vec::with_capacity(m * m);
    for c in columns {
        out.extend(c?);
    }
    Ok(out)
}

/// One recursion step: column-major `P⁽ⁿ⁾` from column-major `P⁽ⁿ⁻¹⁾`.
fn recursive_step<S: GramScalar>(q: &[S], d: usize, n: usize, prev: &[S]) -> Vec<S> {
    let m = d.pow(n as u32);
    let p = m / d;
    let mut out = vec![S::zero(); m * m];
    out.par_chunks_mut(m).enumerate().for_each(|(col, column)| {
        let mut w = vec![0; n];
        decode(col, d, &mut w);
        let mut rest = Vec::with_capacity(n);
        for k in 0..n {
            // T₁⋯T_{k} brings letter k to the front, picking up q_{w_k w_b} for b < k
            let a = w[k];
            let mut coef = S::one();
            for &b in &w[..k] {
                coef = coef.mul(&q[a * d + b]);
            }
            rest.clear();
            rest.extend(w.iter().enumerate().filter(|&(i, _)| i != k).map(|(_, &l)| l));
            let src = &prev[rank_of(&rest, d) * p..][..p];
            let dst = &mut column[a * p..][..p];
            for (x, y) in dst.iter_mut().zip(src) {
                x.add_mul(&coef, y);
            }
        }
    });
    out
}

fn identity<S: GramScalar>(m: usize) -> Vec<S> {
    let mut out = vec![S::zero(); m * m];
    for i in 0..m {
        out[i * m + i] = S::one();
    }
    out
}

fn recursive_chain<S: GramScalar>(q: &[S], d: usize, n: usize) -> Vec<Vec<S>> {
    let mut levels = vec![identity::<S>(1)];
    for k in 1..=n {
        let next = recursive_step(q, d, k, &levels[k - 1]);
        levels.push(next);
    }
    levels
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GramMode {
    Naive,
    Recursive,
}

/// Deformed inner-product matrix on the degree-`n` level.
#[derive(Debug)]
pub struct GramBlock {
    n: usize,
    d: usize,
    matrix: DMatrix<f64>,
    mineig: OnceLock<f64>,
}

impl Clone for GramBlock {
    fn clone(&self) -> Self {
        let mineig = OnceLock::new();
        if let Some(v) = self.mineig.get() {
            let _ = mineig.set(*v);
        }
        GramBlock {
            n: self.n,
            d: self.d,
            matrix: self.matrix.clone(),
            mineig,
        }
    }
}

impl GramBlock {
    pub(crate) fn from_matrix(d: usize, n: usize, matrix: DMatrix<f64>) -> Self {
        GramBlock {
            n,
            d,
            matrix,
            mineig: OnceLock::new(),
        }
    }

    fn from_column_major(d: usize, n: usize, data: Vec<f64>) -> Self {
        let m = d.pow(n as u32);
        GramBlock::from_matrix(d, n, DMatrix::from_vec(m, m, data))
    }

    pub fn degree(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Smallest eigenvalue, computed once.
    pub fn mineig(&self) -> f64 {
        *self.mineig.get_or_init(|| {
            if self.matrix.nrows() == 1 {
                return self.matrix[(0, 0)];
            }
            SymmetricEigen::new(self.matrix.clone())
                .eigenvalues
                .iter()
                .fold(f64::INFINITY, |m, &v| m.min(v))
        })
    }

    pub fn max_asymmetry(&self) -> f64 {
        let m = &self.matrix;
        let mut worst = 0.0f64;
        for i in 0..m.nrows() {
            for j in 0..i {
                worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
            }
        }
        worst
    }
}

fn check_level_size(d: usize, n: usize) -> Result<usize> {
    let size = (d as u128).pow(n as u32);
    if size > crate::fock::DEFAULT_BUDGET as u128 {
        return Err(QfockError::Size {
            what: format!("d^n = {d}^{n}"),
            requested: size.min(usize::MAX as u128) as usize,
            budget: crate::fock::DEFAULT_BUDGET,
        });
    }
    Ok(size as usize)
}

pub fn gram_block(q: &QMatrix, n: usize, mode: GramMode) -> Result<GramBlock> {
    let d = q.d();
    check_level_size(d, n)?;
    match mode {
        GramMode::Naive => {
            if n > NAIVE_MAX_DEGREE {
                return domain(format!(
                    "naive Gram is limited to n ≤ {NAIVE_MAX_DEGREE} (requested {n})"
                ));
            }
            Ok(GramBlock::from_column_major(d, n, naive_gram(q.entries(), d, n)?))
        }
        GramMode::Recursive => {
            let mut chain = recursive_chain(q.entries(), d, n);
            Ok(GramBlock::from_column_major(d, n, chain.pop().expect("level n")))
        }
    }
}

/// Recursive Gram blocks for every level `0..=n`.
pub fn gram_levels(q: &QMatrix, n: usize) -> Result<Vec<GramBlock>> {
    let d = q.d();
    check_level_size(d, n)?;
    Ok(recursive_chain(q.entries(), d, n)
        .into_iter()
        .enumerate()
        .map(|(k, data)| GramBlock::from_column_major(d, k, data))
        .collect())
}

/// Gram block over exact rationals.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactGramBlock {
    pub n: usize,
    pub d: usize,
    /// Column-major entries.
    pub entries: Vec<BigRational>,
}

impl ExactGramBlock {
    pub fn size(&self) -> usize {
        self.d.pow(self.n as u32)
    }

    pub fn get(&self, row: usize, col: usize) -> &BigRational {
        &self.entries[col * self.size() + row]
    }

    pub fn is_symmetric(&self) -> bool {
        let m = self.size();
        (0..m).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    pub fn to_f64(&self) -> DMatrix<f64> {
        let m = self.size();
        DMatrix::from_iterator(m, m, self.entries.iter().map(rational_to_f64))
    }
}

pub fn gram_block_exact(q: &QMatrix, n: usize, mode: GramMode) -> Result<ExactGramBlock> {
    let d = q.d();
    let size = check_level_size(d, n)?;
    if size > EXACT_MAX_LEVEL {
        return domain(format!(
            "exact Gram limited to d^n ≤ {EXACT_MAX_LEVEL} (requested {size})"
        ));
    }
    let exact = q.exact_entries();
    let entries = match mode {
        GramMode::Naive => {
            if n > NAIVE_MAX_DEGREE {
                return domain(format!("naive Gram is limited to n ≤ {NAIVE_MAX_DEGREE}"));
            }
            naive_gram(&exact, d, n)?
        }
        GramMode::Recursive => recursive_chain(&exact, d, n).pop().expect("level n"),
    };
    Ok(ExactGramBlock { n, d, entries })
}

/// `[n]_q! = Π_{k=1}^{n} (1 + q + … + q^{k−1})`.
pub fn q_factorial(q: f64, n: usize) -> f64 {
    (1..=n)
        .map(|k| (0..k).map(|j| q.powi(j as i32)).sum::<f64>())
        .product()
}

#[derive(Clone, Debug)]
pub struct PositivityReport {
    /// `(level, smallest eigenvalue)`.
    pub levels: Vec<(usize, f64)>,
    pub floor: f64,
    pub flagged: Vec<usize>,
}

impl PositivityReport {
    pub fn pass(&self) -> bool {
        self.flagged.is_empty()
    }
}

pub const POSITIVITY_FLOOR: f64 = 1e-12;

pub fn gram_positivity_report(q: &QMatrix, n: usize) -> Result<PositivityReport> {
    let levels: Vec<(usize, f64)> = gram_levels(q, n)?
        .iter()
        .map(|g| (g.degree(), g.mineig()))
        .collect();
    let flagged = levels
        .iter()
        .filter(|(_, m)| *m <= POSITIVITY_FLOOR)
        .map(|(k, _)| *k)
        .collect();
    Ok(PositivityReport {
        levels,
        floor: POSITIVITY_FLOOR,
        flagged,
    })
}

/// Lazily extended sequence of recursive Gram blocks, optionally disk-backed.
#[derive(Debug)]
pub struct GramSeries {
    q: QMatrix,
    levels: Mutex<Vec<Arc<GramBlock>>>,
    cache: Option<GramCache>,
    hits: AtomicUsize,
}

impl GramSeries {
    pub fn new(q: QMatrix) -> Self {
        GramSeries {
            q,
            levels: Mutex::new(Vec::new()),
            cache: None,
            hits: AtomicUsize::new(0),
        }
    }

    pub fn with_cache(q: QMatrix, cache: GramCache) -> Self {
        GramSeries {
            cache: Some(cache),
            ..GramSeries::new(q)
        }
    }

    pub fn q(&self) -> &QMatrix {
        &self.q
    }

    pub fn cache_hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn level(&self, n: usize) -> Result<Arc<GramBlock>> {
        let d = self.q.d();
        check_level_size(d, n)?;
        let mut levels = self.levels.lock().expect("gram series lock");
        while levels.len() <= n {
            let k = levels.len();
            if let Some(cache) = &self.cache {
                if let Some(block) = cache.read_block(&self.q, k)? {
                    self.hits.fetch_add(1, Ordering::Relaxed);
                    levels.push(Arc::new(block));
                    continue;
                }
            }
            let data = if k == 0 {
                identity::<f64>(1)
            } else {
                let prev = levels[k - 1].matrix().as_slice().to_vec();
                recursive_step(self.q.entries(), d, k, &prev)
            };
            let block = GramBlock::from_column_major(d, k, data);
            if let Some(cache) = &self.cache {
                cache.write_block(&self.q, &block)?;
            }
            levels.push(Arc::new(block));
        }
        Ok(levels[n].clone())
    }
}

/// `⟨ξ, η⟩ = Σₙ ⟨P⁽ⁿ⁾ξₙ, ηₙ⟩₀`, linear in `ξ`, conjugate-linear in `η`.
pub fn deformed_inner(q: &QMatrix, basis: &FockBasis, xi: &FockVector, eta: &FockVector) -> Result<C64> {
    if basis.d() != q.d() {
        return domain(format!("basis has d = {} but Q has d = {}", basis.d(), q.d()));
    }
    basis.check_vector(xi)?;
    basis.check_vector(eta)?;
    let grams = gram_levels(q, basis.truncation())?;
    let mut acc = C64::default();
    for (n, g) in grams.iter().enumerate() {
        let r = basis.level_range(n);
        let m = g.matrix();
        for (a, ia) in r.clone().enumerate() {
            let e = eta[ia].conj();
            if e == C64::default() {
                continue;
            }
            for (b, ib) in r.clone().enumerate() {
                acc += e * m[(a, b)] * xi[ib];
            }
        }
    }
    Ok(acc)
}

pub fn rational(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::Word;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_q(d: usize, bound: f64, rng: &mut impl Rng) -> QMatrix {
        let mut rows = vec![vec![0.0; d]; d];
        for i in 0..d {
            for j in i..d {
                let v = rng.random_range(-bound..=bound);
                rows[i][j] = v;
                rows[j][i] = v;
            }
        }
        QMatrix::new(&rows).unwrap()
    }

    fn two_by_two() -> QMatrix {
        QMatrix::new(&[vec![0.3, -0.45], vec![-0.45, 0.7]]).unwrap()
    }

    #[test]
    fn qmatrix_validation() {
        let err = QMatrix::new(&[vec![0.1, 0.2], vec![0.3, 0.1]]).unwrap_err();
        assert!(err.to_string().contains("q[0][1]"), "{err}");
        assert!(QMatrix::new(&[vec![1.0]]).is_err());
        let q = two_by_two();
        assert_eq!(q.qmax(), 0.7);
        assert!(!q.is_constant());
        assert_eq!(QMatrix::constant(3, 0.4).unwrap().constant_value(), Some(0.4));
    }

    #[test]
    fn t_k_examples() {
        let q = two_by_two();
        // e0⊗e1 has rank 1 in level 2, e1⊗e0 rank 2
        let v = apply_t_k(&q, 2, 1, &[0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(v, vec![0.0, 0.0, -0.45, 0.0]);
        let free = apply_t_k(&QMatrix::zero(2), 2, 1, &[0.0, 1.0, 0.0, 0.0]).unwrap();
        assert!(free.iter().all(|&x| x == 0.0));
        // n = 3, k = 2: e0⊗e1⊗e1 ↦ q11 e0⊗e1⊗e1 (rank 3)
        let mut e011 = vec![0.0; 8];
        e011[3] = 1.0;
        let w = apply_t_k(&q, 3, 2, &e011).unwrap();
        assert_eq!(w[3], 0.7);
        assert_eq!(w.iter().filter(|&&x| x != 0.0).count(), 1);
        assert!(apply_t_k(&q, 3, 3, &e011).is_err());
        assert!(apply_t_k(&q, 3, 0, &e011).is_err());
    }

    #[test]
    fn low_levels_are_identity() {
        let q = two_by_two();
        for mode in [GramMode::Naive, GramMode::Recursive] {
            assert_eq!(gram_block(&q, 0, mode).unwrap().matrix(), &DMatrix::identity(1, 1));
            assert_eq!(gram_block(&q, 1, mode).unwrap().matrix(), &DMatrix::identity(2, 2));
        }
    }

    #[test]
    fn level_two_entries() {
        // S₂ oracle: P⁽²⁾ = 1 + T
        let q = two_by_two();
        let g = gram_block(&q, 2, GramMode::Naive).unwrap();
        assert_eq!(g.matrix()[(2, 1)], -0.45); // ⟨e0⊗e1, e1⊗e0⟩
        assert_eq!(g.matrix()[(0, 0)], 1.3); // ‖e0⊗e0‖²
        let b = FockBasis::new(2, 2).unwrap();
        let e00 = b.basis_vector(&Word::new(vec![0, 0], 2).unwrap()).unwrap();
        let e01 = b.basis_vector(&Word::new(vec![0, 1], 2).unwrap()).unwrap();
        assert!((deformed_inner(&q, &b, &e00, &e00).unwrap().re - 1.3).abs() < 1e-15);
        let free = QMatrix::zero(2);
        assert_eq!(deformed_inner(&free, &b, &e01, &e00).unwrap(), C64::default());
        assert_eq!(deformed_inner(&q, &b, &b.vacuum(), &b.vacuum()).unwrap(), C64::new(1.0, 0.0));
    }

    #[test]
    fn deformed_inner_rejects_mismatch() {
        let q = two_by_two();
        let b = FockBasis::new(2, 2).unwrap();
        let other = FockBasis::new(2, 3).unwrap();
        assert!(deformed_inner(&q, &b, &other.vacuum(), &b.vacuum()).is_err());
        let b3 = FockBasis::new(3, 2).unwrap();
        assert!(deformed_inner(&q, &b3, &b3.vacuum(), &b3.vacuum()).is_err());
    }

    #[test]
    fn deformed_inner_is_sesquilinear() {
        let q = two_by_two();
        let b = FockBasis::new(2, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut rv = || {
            FockVector::from_fn(b.dim(), |_, _| {
                C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            })
        };
        let (x, y) = (rv(), rv());
        let c = C64::new(0.3, -1.2);
        let lhs = deformed_inner(&q, &b, &(&x * c), &y).unwrap();
        assert!((lhs - c * deformed_inner(&q, &b, &x, &y).unwrap()).norm() < 1e-12);
        let rhs = deformed_inner(&q, &b, &x, &(&y * c)).unwrap();
        assert!((rhs - c.conj() * deformed_inner(&q, &b, &x, &y).unwrap()).norm() < 1e-12);
        let xy = deformed_inner(&q, &b, &x, &y).unwrap();
        let yx = deformed_inner(&q, &b, &y, &x).unwrap();
        assert!((xy - yx.conj()).norm() < 1e-12);
        assert!(deformed_inner(&q, &b, &x, &x).unwrap().re > 0.0);
    }

    #[test]
    fn naive_and_recursive_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            for d in 1..=3 {
                let q = random_q(d, 0.9, &mut rng);
                for n in 0..=4 {
                    let a = gram_block(&q, n, GramMode::Naive).unwrap();
                    let b = gram_block(&q, n, GramMode::Recursive).unwrap();
                    let diff = (a.matrix() - b.matrix()).amax();
                    assert!(diff <= 1e-10, "d={d} n={n} diff={diff}");
                }
            }
        }
    }

    #[test]
    fn braid_consistency_on_s4() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = random_q(3, 0.95, &mut rng);
        let b = FockBasis::new(3, 4).unwrap();
        let perms = permutations(4);
        assert_eq!(perms.len(), 24);
        for p in &perms {
            let wa = bubble_reduced_word(p);
            let wb = selection_reduced_word(p);
            let inversions = (0..4).flat_map(|i| (i + 1..4).map(move |j| (i, j)))
                .filter(|&(i, j)| p[i] > p[j])
                .count();
            assert_eq!(wa.len(), inversions);
            assert_eq!(wb.len(), inversions);
            for w in b.level_words(4) {
                let (ta, ca) = permutation_weight(&q, &wa, &w);
                let (tb, cb) = permutation_weight(&q, &wb, &w);
                assert_eq!(ta, tb);
                assert!((ca - cb).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn braid_relation_for_t() {
        // T₁T₂T₁ = T₂T₁T₂ on level 3
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let q = random_q(2, 0.9, &mut rng);
        for r in 0..8 {
            let mut v = vec![0.0; 8];
            v[r] = 1.0;
            let lhs = apply_t_k(&q, 3, 1, &apply_t_k(&q, 3, 2, &apply_t_k(&q, 3, 1, &v).unwrap()).unwrap()).unwrap();
            let rhs = apply_t_k(&q, 3, 2, &apply_t_k(&q, 3, 1, &apply_t_k(&q, 3, 2, &v).unwrap()).unwrap()).unwrap();
            for (a, b) in lhs.iter().zip(&rhs) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn free_case_is_identity() {
        let q = QMatrix::zero(3);
        for g in gram_levels(&q, 4).unwrap() {
            let m = g.matrix().nrows();
            assert_eq!(g.matrix(), &DMatrix::identity(m, m));
        }
    }

    #[test]
    fn one_letter_gram_is_q_factorial() {
        for &qv in &[0.5, -0.7, 0.9] {
            let q = QMatrix::new(&[vec![qv]]).unwrap();
            let rep = gram_positivity_report(&q, 6).unwrap();
            for (n, m) in rep.levels {
                let direct: f64 = (1..=n).map(|k| (0..k).map(|j| qv.powi(j as i32)).sum::<f64>()).product();
                assert!((m - direct).abs() < 1e-12, "n={n}");
            }
        }
    }

    #[test]
    fn positivity_report() {
        let rep = gram_positivity_report(&QMatrix::zero(2), 4).unwrap();
        assert!(rep.levels.iter().all(|&(_, m)| (m - 1.0).abs() < 1e-14));
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut q = random_q(2, 0.9, &mut rng);
        while (q.qmax() - 0.9).abs() > 1e-12 {
            let mut rows = q.rows();
            rows[0][0] = 0.9;
            q = QMatrix::new(&rows).unwrap();
        }
        let rep = gram_positivity_report(&q, 6).unwrap();
        assert!(rep.pass(), "{:?}", rep.levels);
    }

    #[test]
    fn exact_mode_matches_float() {
        let q = QMatrix::from_rationals(&[
            vec![rational(1, 3), rational(-1, 2)],
            vec![rational(-1, 2), rational(2, 5)],
        ])
        .unwrap();
        for n in 0..=5 {
            let naive = gram_block_exact(&q, n, GramMode::Naive).unwrap();
            let rec = gram_block_exact(&q, n, GramMode::Recursive).unwrap();
            assert_eq!(naive, rec, "n = {n}");
            assert!(rec.is_symmetric());
            let float = gram_block(&q, n, GramMode::Recursive).unwrap();
            assert!((float.matrix() - rec.to_f64()).amax() < 1e-12);
        }
        assert!(gram_block_exact(&QMatrix::zero(2), 13, GramMode::Recursive).is_err());
    }

    #[test]
    fn naive_mode_refuses_large_degree() {
        let q = QMatrix::zero(1);
        assert!(gram_block(&q, 9, GramMode::Naive).is_err());
        assert!(gram_block(&q, 9, GramMode::Recursive).is_ok());
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn series_matches_levels() {
        let q = two_by_two();
        let s = GramSeries::new(q.clone());
        let direct = gram_levels(&q, 5).unwrap();
        for n in (0..=5).rev() {
            assert_eq!(s.level(n).unwrap().matrix(), direct[n].matrix());
        }
    }

    proptest::proptest! {
        #[test]
        fn recursive_is_symmetric(seed in 0u64..1000, d in 1usize..4, n in 0usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let q = random_q(d, 0.95, &mut rng);
            let g = gram_block(&q, n, GramMode::Recursive).unwrap();
            proptest::prop_assert!(g.max_asymmetry() <= 1e-12);
        }
    }
}
