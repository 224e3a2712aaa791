//! Degree-graded operators on the truncated Fock space.
//!
//! A [`BlockOperator`] stores one sparse block per (source level, target
//! level) pair. Creation operators at the top level have no block: the
//! truncation maps them to zero. Every operator carries a `reach`, an upper
//! bound on how far it can raise degree; a product applied to an input of
//! degree `D` is exact as long as `D + reach ≤ N`.

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::{CooMatrix, CscMatrix};
use rand::Rng;
use std::collections::BTreeMap;
use std::fmt;

use crate::error::{domain, QfockError, Result};
use crate::fock::{FockBasis, FockVector, C64};
use crate::model::FockModel;

pub type SparseBlock = CscMatrix<C64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GeneratorKind {
    Creation,
    Annihilation,
    Gaussian,
}

#[derive(Clone)]
pub struct BlockOperator {
    basis: FockBasis,
    blocks: BTreeMap<(usize, usize), SparseBlock>,
    reach: usize,
    label: String,
}

impl fmt::Debug for BlockOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BlockOperator")
            .field("label", &self.label)
            .field("reach", &self.reach)
            .field("blocks", &self.blocks.keys().collect::<Vec<_>>())
            .finish()
    }
}

fn same_basis(a: &FockBasis, b: &FockBasis) -> Result<()> {
    if a.d() != b.d() || a.truncation() != b.truncation() {
        return domain(format!(
            "operators live on different bases (d={}, N={} vs d={}, N={})",
            a.d(),
            a.truncation(),
            b.d(),
            b.truncation()
        ));
    }
    Ok(())
}

fn sparse_add(a: &SparseBlock, b: &SparseBlock) -> SparseBlock {
    a + b
}

impl BlockOperator {
    pub fn zero(basis: &FockBasis, label: impl Into<String>) -> Self {
        BlockOperator {
            basis: basis.clone(),
            blocks: BTreeMap::new(),
            reach: 0,
            label: label.into(),
        }
    }

    pub fn identity(basis: &FockBasis) -> Self {
        let blocks = (0..=basis.truncation())
            .map(|n| ((n, n), CscMatrix::identity(basis.level_dim(n))))
            .collect();
        BlockOperator {
            basis: basis.clone(),
            blocks,
            reach: 0,
            label: "1".into(),
        }
    }

    /// Operator shifting degree by `shift`, given by its action on basis words.
    pub fn from_word_map<F>(basis: &FockBasis, label: impl Into<String>, shift: isize, f: F) -> Self
    where
        F: Fn(&[usize]) -> Vec<(Vec<usize>, C64)>,
    {
        let mut blocks = BTreeMap::new();
        let top = basis.truncation() as isize;
        for n in 0..=basis.truncation() {
            let t = n as isize + shift;
            if t < 0 || t > top {
                continue;
            }
            let t = t as usize;
            let mut coo = CooMatrix::new(basis.level_dim(t), basis.level_dim(n));
            let mut any = false;
            for (col, w) in basis.level_words(n).enumerate() {
                for (target, c) in f(&w) {
                    debug_assert_eq!(target.len(), t);
                    if c != C64::default() {
                        coo.push(basis.rank(&target), col, c);
                        any = true;
                    }
                }
            }
            if any {
                blocks.insert((n, t), CscMatrix::from(&coo));
            }
        }
        BlockOperator {
            basis: basis.clone(),
            blocks,
            reach: shift.max(0) as usize,
            label: label.into(),
        }
    }

    /// Build from dense blocks keyed by (source, target); exact zeros are dropped.
    pub fn from_dense_blocks(
        basis: &FockBasis,
        label: impl Into<String>,
        dense: impl IntoIterator<Item = ((usize, usize), DMatrix<C64>)>,
    ) -> Self {
        let mut blocks = BTreeMap::new();
        let mut reach = 0;
        for ((s, t), m) in dense {
            let sp = CscMatrix::from(&m);
            if sp.nnz() > 0 {
                reach = reach.max(t.saturating_sub(s));
                blocks.insert((s, t), sp);
            }
        }
        BlockOperator {
            basis: basis.clone(),
            blocks,
            reach,
            label: label.into(),
        }
    }

    pub fn basis(&self) -> &FockBasis {
        &self.basis
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn reach(&self) -> usize {
        self.reach
    }

    pub fn blocks(&self) -> &BTreeMap<(usize, usize), SparseBlock> {
        &self.blocks
    }

    pub fn block(&self, src: usize, tgt: usize) -> Option<&SparseBlock> {
        self.blocks.get(&(src, tgt))
    }

    pub fn block_dense(&self, src: usize, tgt: usize) -> DMatrix<C64> {
        match self.blocks.get(&(src, tgt)) {
            Some(b) => DMatrix::from(b),
            None => DMatrix::zeros(self.basis.level_dim(tgt), self.basis.level_dim(src)),
        }
    }

    /// The common degree shift of all blocks, if the operator is homogeneous.
    pub fn shift(&self) -> Option<isize> {
        let mut shifts = self.blocks.keys().map(|&(s, t)| t as isize - s as isize);
        let first = shifts.next()?;
        shifts.all(|s| s == first).then_some(first)
    }

    pub fn apply(&self, v: &FockVector) -> Result<FockVector> {
        self.basis.check_vector(v)?;
        let mut out = self.basis.zero_vector();
        for (&(s, t), b) in &self.blocks {
            let s0 = self.basis.offset(s);
            let t0 = self.basis.offset(t);
            for (j, col) in b.col_iter().enumerate() {
                let x = v[s0 + j];
                if x == C64::default() {
                    continue;
                }
                for (&r, &val) in col.row_indices().iter().zip(col.values()) {
                    out[t0 + r] += val * x;
                }
            }
        }
        Ok(out)
    }

    /// Apply after checking the safe-degree rule for an input of the given degree.
    pub fn apply_safe(&self, v: &FockVector, input_degree: usize) -> Result<FockVector> {
        check_safe(&self.basis, input_degree, self.reach)?;
        self.apply(v)
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &BlockOperator) -> Result<BlockOperator> {
        same_basis(&self.basis, &other.basis)?;
        let mut blocks: BTreeMap<(usize, usize), SparseBlock> = BTreeMap::new();
        for (&(s, m), b) in &other.blocks {
            for (&(m2, t), a) in self.blocks.range((m, 0)..=(m, usize::MAX)) {
                debug_assert_eq!(m, m2);
                let prod = a * b;
                if prod.nnz() == 0 {
                    continue;
                }
                match blocks.remove(&(s, t)) {
                    Some(acc) => blocks.insert((s, t), sparse_add(&acc, &prod)),
                    None => blocks.insert((s, t), prod),
                };
            }
        }
        Ok(BlockOperator {
            basis: self.basis.clone(),
            blocks,
            reach: self.reach + other.reach,
            label: format!("{}·{}", self.label, other.label),
        })
    }

    pub fn compose_all(basis: &FockBasis, factors: &[&BlockOperator]) -> Result<BlockOperator> {
        let mut acc = BlockOperator::identity(basis);
        for f in factors.iter().rev() {
            acc = f.compose(&acc)?;
        }
        Ok(acc)
    }

    fn combine(&self, other: &BlockOperator, sign: f64, label: String) -> Result<BlockOperator> {
        same_basis(&self.basis, &other.basis)?;
        let mut blocks = self.blocks.clone();
        for (&k, b) in &other.blocks {
            let b = b * C64::new(sign, 0.0);
            match blocks.remove(&k) {
                Some(acc) => blocks.insert(k, sparse_add(&acc, &b)),
                None => blocks.insert(k, b),
            };
        }
        Ok(BlockOperator {
            basis: self.basis.clone(),
            blocks,
            reach: self.reach.max(other.reach),
            label,
        })
    }

    pub fn add(&self, other: &BlockOperator) -> Result<BlockOperator> {
        self.combine(other, 1.0, format!("({} + {})", self.label, other.label))
    }

    pub fn sub(&self, other: &BlockOperator) -> Result<BlockOperator> {
        self.combine(other, -1.0, format!("({} − {})", self.label, other.label))
    }

    pub fn scale(&self, c: C64) -> BlockOperator {
        BlockOperator {
            basis: self.basis.clone(),
            blocks: self.blocks.iter().map(|(&k, b)| (k, b * c)).collect(),
            reach: self.reach,
            label: format!("{c}·{}", self.label),
        }
    }

    /// Conjugate transpose in the coordinate (undeformed) product.
    pub fn coordinate_adjoint(&self) -> BlockOperator {
        let blocks = self
            .blocks
            .iter()
            .map(|(&(s, t), b)| {
                let mut tr = b.transpose();
                tr.values_mut().iter_mut().for_each(|v| *v = v.conj());
                ((t, s), tr)
            })
            .collect::<BTreeMap<_, _>>();
        let reach = blocks.keys().map(|&(s, t): &(usize, usize)| t.saturating_sub(s)).max().unwrap_or(0);
        BlockOperator {
            basis: self.basis.clone(),
            blocks,
            reach,
            label: format!("{}^H", self.label),
        }
    }

    /// `J X J` with `J` the antilinear word reversal.
    pub fn j_conjugate(&self) -> BlockOperator {
        let perms: Vec<Vec<usize>> = (0..=self.basis.truncation())
            .map(|n| self.basis.reversal_permutation(n))
            .collect();
        let blocks = self
            .blocks
            .iter()
            .map(|(&(s, t), b)| {
                let mut coo = CooMatrix::new(b.nrows(), b.ncols());
                for (r, c, v) in b.triplet_iter() {
                    coo.push(perms[t][r], perms[s][c], v.conj());
                }
                ((s, t), CscMatrix::from(&coo))
            })
            .collect();
        BlockOperator {
            basis: self.basis.clone(),
            blocks,
            reach: self.reach,
            label: format!("J{}J", self.label),
        }
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let dim = self.basis.dim();
        let mut m = DMatrix::zeros(dim, dim);
        for (&(s, t), b) in &self.blocks {
            let (s0, t0) = (self.basis.offset(s), self.basis.offset(t));
            for (r, c, v) in b.triplet_iter() {
                m[(t0 + r, s0 + c)] += *v;
            }
        }
        m
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.blocks
            .values()
            .flat_map(|b| b.values().iter().map(|v| v.norm()))
            .fold(0.0, f64::max)
    }
}

/// Safe-degree rule: an input of degree `input` may pass through a chain of total reach `reach`.
pub fn check_safe(basis: &FockBasis, input: usize, reach: usize) -> Result<()> {
    if input + reach > basis.truncation() {
        return Err(QfockError::Truncation {
            required: input + reach,
            truncation: basis.truncation(),
        });
    }
    Ok(())
}

fn letter_check(model: &FockModel, i: usize) -> Result<()> {
    if i >= model.d() {
        return domain(format!("letter {i} out of range for d = {}", model.d()));
    }
    Ok(())
}

pub fn creation(model: &FockModel, side: Side, i: usize) -> Result<BlockOperator> {
    letter_check(model, i)?;
    let label = match side {
        Side::Left => format!("l_{i}"),
        Side::Right => format!("r_{i}"),
    };
    Ok(BlockOperator::from_word_map(model.basis(), label, 1, |w| {
        let mut t = Vec::with_capacity(w.len() + 1);
        match side {
            Side::Left => {
                t.push(i);
                t.extend_from_slice(w);
            }
            Side::Right => {
                t.extend_from_slice(w);
                t.push(i);
            }
        }
        vec![(t, C64::new(1.0, 0.0))]
    }))
}

pub fn annihilation(model: &FockModel, side: Side, i: usize) -> Result<BlockOperator> {
    letter_check(model, i)?;
    let label = match side {
        Side::Left => format!("l*_{i}"),
        Side::Right => format!("r*_{i}"),
    };
    let left = side == Side::Left;
    Ok(BlockOperator::from_word_map(model.basis(), label, -1, |w| {
        model.annihilation_terms(left, i, w)
    }))
}

pub fn build_generator(model: &FockModel, side: Side, kind: GeneratorKind, i: usize) -> Result<BlockOperator> {
    match kind {
        GeneratorKind::Creation => creation(model, side, i),
        GeneratorKind::Annihilation => annihilation(model, side, i),
        GeneratorKind::Gaussian => {
            let label = match side {
                Side::Left => format!("s_{i}"),
                Side::Right => format!("s^r_{i}"),
            };
            Ok(creation(model, side, i)?
                .add(&annihilation(model, side, i)?)?
                .with_label(label))
        }
    }
}

/// Creation by a general one-particle vector (linear in `ξ`).
pub fn creation_vec(model: &FockModel, side: Side, xi: &DVector<C64>) -> Result<BlockOperator> {
    combine_letters(model, xi, |i| creation(model, side, i), false)
}

/// Annihilation by a general one-particle vector (conjugate-linear in `ξ`).
pub fn annihilation_vec(model: &FockModel, side: Side, xi: &DVector<C64>) -> Result<BlockOperator> {
    combine_letters(model, xi, |i| annihilation(model, side, i), true)
}

fn combine_letters<F>(model: &FockModel, xi: &DVector<C64>, gen: F, conjugate: bool) -> Result<BlockOperator>
where
    F: Fn(usize) -> Result<BlockOperator>,
{
    if xi.len() != model.d() {
        return domain(format!("vector has length {} ≠ d = {}", xi.len(), model.d()));
    }
    let mut acc = BlockOperator::zero(model.basis(), "0");
    for (i, &c) in xi.iter().enumerate() {
        let c = if conjugate { c.conj() } else { c };
        if c != C64::default() {
            acc = acc.add(&gen(i)?.scale(c))?;
        }
    }
    Ok(acc)
}

/// Adjoint with respect to the deformed product: blocks `G_s⁻¹ X^H G_t`.
pub fn gram_adjoint(model: &FockModel, op: &BlockOperator) -> Result<BlockOperator> {
    let mut dense = Vec::with_capacity(op.blocks().len());
    for (&(s, t), b) in op.blocks() {
        let x = DMatrix::from(b);
        let gt = model.level_gram(t)?;
        let rhs = x.adjoint() * &*gt;
        let adj = model.level_cholesky(s)?.solve(&rhs);
        dense.push(((t, s), adj));
    }
    Ok(BlockOperator::from_dense_blocks(model.basis(), format!("{}†", op.label()), dense))
}

#[derive(Clone, Debug)]
pub struct AdjointReport {
    pub letter: usize,
    pub left_deviation: f64,
    pub right_deviation: f64,
    pub tolerance: f64,
}

impl AdjointReport {
    pub fn pass(&self) -> bool {
        self.left_deviation <= self.tolerance && self.right_deviation <= self.tolerance
    }
}

/// Max over basis pairs of `|⟨c ξ, η⟩ − ⟨ξ, c* η⟩|` for `c = l_i, r_i`.
pub fn gram_adjoint_check(model: &FockModel, i: usize) -> Result<AdjointReport> {
    let mut devs = [0.0f64; 2];
    for (k, side) in [Side::Left, Side::Right].into_iter().enumerate() {
        let c = creation(model, side, i)?;
        let a = annihilation(model, side, i)?;
        for n in 0..model.truncation() {
            let cn = c.block_dense(n, n + 1);
            let an = a.block_dense(n + 1, n);
            let lhs = &*model.level_gram(n + 1)? * cn;
            let rhs = an.adjoint() * &*model.level_gram(n)?;
            devs[k] = devs[k].max((lhs - rhs).camax());
        }
    }
    Ok(AdjointReport {
        letter: i,
        left_deviation: devs[0],
        right_deviation: devs[1],
        tolerance: 1e-9,
    })
}

/// Spectral norm of a dense block; diagonal blocks skip the SVD.
pub fn spectral_norm(m: &DMatrix<C64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let diagonal = m.nrows() == m.ncols()
        && (0..m.nrows()).all(|r| (0..m.ncols()).all(|c| r == c || m[(r, c)] == C64::default()));
    if diagonal {
        return (0..m.nrows()).map(|k| m[(k, k)].norm()).fold(0.0, f64::max);
    }
    m.clone().singular_values().iter().fold(0.0, |a, &b| a.max(b))
}

#[derive(Clone, Debug)]
pub struct CommutatorLevel {
    pub n: usize,
    pub norm: f64,
    pub bound: f64,
    /// Largest off-diagonal entry of the block.
    pub off_diagonal: f64,
    /// Largest deviation of the diagonal from `G₁[i,j] Π_k q_{j w_k}`.
    pub diagonal_residual: f64,
}

#[derive(Clone, Debug)]
pub struct CommutatorBlocks {
    pub i: usize,
    pub j: usize,
    pub levels: Vec<CommutatorLevel>,
    pub blocks: Vec<DMatrix<C64>>,
}

impl CommutatorBlocks {
    pub fn within_bound(&self, slack: f64) -> bool {
        self.levels.iter().all(|l| l.norm <= l.bound + slack)
    }
}

/// Per-level blocks of `l_i* r_j − r_j l_i*` for levels `0..=N−1`.
pub fn commutator_blocks(model: &FockModel, i: usize, j: usize) -> Result<CommutatorBlocks> {
    let ls = annihilation(model, Side::Left, i)?;
    let r = creation(model, Side::Right, j)?;
    let d = ls.compose(&r)?.sub(&r.compose(&ls)?)?;
    let qmax = model.q().qmax();
    let g = model.g1()[(i, j)];
    let mut levels = Vec::new();
    let mut blocks = Vec::new();
    for n in 0..model.truncation() {
        let m = d.block_dense(n, n);
        let mut off = 0.0f64;
        let mut diag = 0.0f64;
        for (col, w) in model.basis().level_words(n).enumerate() {
            let expected = g * w.iter().map(|&b| model.q().get(j, b)).product::<f64>();
            diag = diag.max((m[(col, col)] - expected).norm());
            for row in 0..m.nrows() {
                if row != col {
                    off = off.max(m[(row, col)].norm());
                }
            }
        }
        levels.push(CommutatorLevel {
            n,
            norm: spectral_norm(&m),
            bound: qmax.powi(n as i32),
            off_diagonal: off,
            diagonal_residual: diag,
        });
        blocks.push(m);
    }
    Ok(CommutatorBlocks { i, j, levels, blocks })
}

/// `⟨op₁⋯op_m Ω, Ω⟩`, refusing products whose reach exceeds the truncation.
pub fn vacuum_moment(basis: &FockBasis, ops: &[&BlockOperator]) -> Result<C64> {
    let reach: usize = ops.iter().map(|o| o.reach()).sum();
    check_safe(basis, 0, reach)?;
    let mut v = basis.vacuum();
    for op in ops.iter().rev() {
        same_basis(basis, op.basis())?;
        v = op.apply(&v)?;
    }
    Ok(v[0])
}

/// All pair partitions of `{0..m}` as sorted pairs.
pub fn pair_partitions(m: usize) -> Vec<Vec<(usize, usize)>> {
    fn rec(rest: &[usize], acc: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
        let Some((&first, tail)) = rest.split_first() else {
            out.push(acc.clone());
            return;
        };
        for k in 0..tail.len() {
            acc.push((first, tail[k]));
            let remaining: Vec<usize> = tail.iter().enumerate().filter(|&(i, _)| i != k).map(|(_, &v)| v).collect();
            rec(&remaining, acc, out);
            acc.pop();
        }
    }
    let mut out = Vec::new();
    if m.is_multiple_of(2) {
        rec(&(0..m).collect::<Vec<_>>(), &mut Vec::new(), &mut out);
    }
    out
}

/// Number of pairs `(a,b), (c,e)` with `a < c < b < e`.
pub fn crossings(pairs: &[(usize, usize)]) -> usize {
    let mut count = 0;
    for &(a, b) in pairs {
        for &(c, e) in pairs {
            if a < c && c < b && b < e {
                count += 1;
            }
        }
    }
    count
}

pub const PAIR_PARTITION_MAX_ORDER: usize = 12;

/// `Σ_π q^{cr(π)}` over pair partitions of `{1..order}`.
pub fn pair_partition_moment(q: f64, order: usize) -> Result<f64> {
    if order % 2 == 1 {
        return domain(format!("pair partitions need an even order, got {order}"));
    }
    if order > PAIR_PARTITION_MAX_ORDER {
        return domain(format!("order {order} exceeds {PAIR_PARTITION_MAX_ORDER}"));
    }
    Ok(pair_partitions(order)
        .iter()
        .map(|p| q.powi(crossings(p) as i32))
        .sum())
}

#[derive(Clone, Debug)]
pub struct TracialityReport {
    pub pairs_checked: usize,
    pub max_deviation: f64,
    pub worst: Option<(Vec<usize>, Vec<usize>)>,
    pub tolerance: f64,
}

impl TracialityReport {
    pub fn pass(&self) -> bool {
        self.max_deviation <= self.tolerance
    }
}

/// Random words `a, b` in the left Gaussians; reports `max |φ(ab) − φ(ba)|`.
pub fn traciality_check(model: &FockModel, trials: usize, max_len: usize, rng: &mut impl Rng) -> Result<TracialityReport> {
    let n = model.truncation();
    if max_len == 0 || n < 2 {
        return domain("traciality check needs max_len ≥ 1 and N ≥ 2");
    }
    let gens: Vec<BlockOperator> = (0..model.d())
        .map(|i| build_generator(model, Side::Left, GeneratorKind::Gaussian, i))
        .collect::<Result<_>>()?;
    let mut report = TracialityReport {
        pairs_checked: 0,
        max_deviation: 0.0,
        worst: None,
        tolerance: 1e-8,
    };
    let cap = max_len.min(n - 1);
    for _ in 0..trials {
        let la = rng.random_range(1..=cap);
        let lb = rng.random_range(1..=cap.min(n - la));
        let a: Vec<usize> = (0..la).map(|_| rng.random_range(0..model.d())).collect();
        let b: Vec<usize> = (0..lb).map(|_| rng.random_range(0..model.d())).collect();
        let dev = word_commutator_moment(model.basis(), &gens, &a, &b)?.norm();
        report.pairs_checked += 1;
        if dev > report.max_deviation || report.worst.is_none() {
            report.max_deviation = report.max_deviation.max(dev);
            report.worst = Some((a, b));
        }
    }
    Ok(report)
}

/// `φ(ab) − φ(ba)` for words of generators.
pub fn word_commutator_moment(basis: &FockBasis, gens: &[BlockOperator], a: &[usize], b: &[usize]) -> Result<C64> {
    let ab: Vec<&BlockOperator> = a.iter().chain(b).map(|&k| &gens[k]).collect();
    let ba: Vec<&BlockOperator> = b.iter().chain(a).map(|&k| &gens[k]).collect();
    Ok(vacuum_moment(basis, &ab)? - vacuum_moment(basis, &ba)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::Word;
    use crate::qgram::QMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(n: usize) -> FockModel {
        FockModel::mixed(QMatrix::new(&[vec![0.3, -0.45], vec![-0.45, 0.7]]).unwrap(), n).unwrap()
    }

    fn word(m: &FockModel, l: &[usize]) -> FockVector {
        m.basis().basis_vector(&Word::new(l.to_vec(), m.d()).unwrap()).unwrap()
    }

    #[test]
    fn creation_and_annihilation_examples() {
        let m = model(3);
        let ls = annihilation(&m, Side::Left, 0).unwrap();
        let out = ls.apply(&word(&m, &[1, 0, 0])).unwrap();
        let expected = word(&m, &[1, 0]) * C64::new(-0.45 + -0.45 * 0.3, 0.0);
        assert!((out - expected).camax() < 1e-15);
        let rs = annihilation(&m, Side::Right, 0).unwrap();
        let out = rs.apply(&word(&m, &[0, 1])).unwrap();
        assert!((out - word(&m, &[1]) * C64::new(-0.45, 0.0)).camax() < 1e-15);
        let l1 = creation(&m, Side::Left, 1).unwrap();
        assert_eq!(l1.apply(&word(&m, &[0, 0])).unwrap(), word(&m, &[1, 0, 0]));
        // truncation kills creation at the top level
        assert_eq!(l1.apply(&word(&m, &[0, 0, 0])).unwrap(), m.basis().zero_vector());
        assert_eq!(ls.apply(&m.basis().vacuum()).unwrap(), m.basis().zero_vector());
        assert!(build_generator(&m, Side::Left, GeneratorKind::Creation, 2).is_err());
    }

    #[test]
    fn free_annihilation_keeps_leading_letter() {
        let m = FockModel::mixed(QMatrix::zero(2), 2).unwrap();
        let ls = annihilation(&m, Side::Left, 0).unwrap();
        assert_eq!(ls.apply(&word(&m, &[1, 0])).unwrap(), m.basis().zero_vector());
        assert_eq!(ls.apply(&word(&m, &[0, 1])).unwrap(), word(&m, &[1]));
    }

    #[test]
    fn adjointness_holds() {
        let m = model(5);
        for i in 0..2 {
            let r = gram_adjoint_check(&m, i).unwrap();
            assert!(r.pass(), "{r:?}");
        }
        let free = FockModel::mixed(QMatrix::zero(3), 3).unwrap();
        let r = gram_adjoint_check(&free, 2).unwrap();
        assert_eq!((r.left_deviation, r.right_deviation), (0.0, 0.0));
    }

    #[test]
    fn gram_adjoint_of_creation_is_annihilation() {
        let m = model(4);
        let l = creation(&m, Side::Left, 1).unwrap();
        let adj = gram_adjoint(&m, &l).unwrap();
        let a = annihilation(&m, Side::Left, 1).unwrap();
        assert!((adj.to_dense() - a.to_dense()).camax() < 1e-12);
        assert_eq!(adj.reach(), 0);
    }

    #[test]
    fn commutator_blocks_are_diagonal() {
        let m = model(5);
        for i in 0..2 {
            for j in 0..2 {
                let c = commutator_blocks(&m, i, j).unwrap();
                assert!(c.within_bound(1e-12));
                for l in &c.levels {
                    assert!(l.off_diagonal <= 1e-12 && l.diagonal_residual <= 1e-12);
                    if i != j {
                        assert!(l.norm <= 1e-12);
                    }
                }
                if i == j {
                    assert!((c.levels[0].norm - 1.0).abs() < 1e-15);
                }
            }
        }
        let constant = FockModel::mixed(QMatrix::constant(2, 0.5).unwrap(), 5).unwrap();
        let c = commutator_blocks(&constant, 1, 1).unwrap();
        for l in &c.levels {
            assert!((l.norm - 0.5f64.powi(l.n as i32)).abs() < 1e-12);
        }
    }

    #[test]
    fn pair_partition_counts() {
        assert_eq!(pair_partitions(6).len(), 15);
        assert_eq!(pair_partition_moment(0.3, 2).unwrap(), 1.0);
        assert!((pair_partition_moment(0.3, 4).unwrap() - 2.3).abs() < 1e-15);
        assert_eq!(pair_partition_moment(0.0, 6).unwrap(), 5.0);
        assert_eq!(pair_partition_moment(0.0, 10).unwrap(), 42.0);
        assert_eq!(pair_partition_moment(1.0, 8).unwrap(), 105.0);
        assert!(pair_partition_moment(0.3, 5).is_err());
        assert!(pair_partition_moment(0.3, 14).is_err());
    }

    #[test]
    fn moments_match_pair_partitions() {
        let m = model(10);
        for i in 0..2 {
            let s = build_generator(&m, Side::Left, GeneratorKind::Gaussian, i).unwrap();
            for k in 1..=5 {
                let ops = vec![&s; 2 * k];
                let mom = vacuum_moment(m.basis(), &ops).unwrap();
                let oracle = pair_partition_moment(m.q().get(i, i), 2 * k).unwrap();
                assert!((mom.re - oracle).abs() < 1e-9 && mom.im.abs() < 1e-12, "k={k}");
            }
            let odd = vec![&s; 3];
            assert_eq!(vacuum_moment(m.basis(), &odd).unwrap(), C64::default());
            let too_long = vec![&s; 11];
            assert!(matches!(vacuum_moment(m.basis(), &too_long), Err(QfockError::Truncation { .. })));
        }
    }

    #[test]
    fn traciality_in_mixed_case() {
        let m = model(8);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r = traciality_check(&m, 50, 3, &mut rng).unwrap();
        assert!(r.pass(), "{r:?}");
        assert_eq!(r.pairs_checked, 50);
    }

    #[test]
    fn truncation_consistency() {
        // same moment at N and N + 2 once the safe-degree rule holds
        let a = model(4);
        let b = model(6);
        let word = [0usize, 1, 1, 0];
        let mom = |m: &FockModel| {
            let g: Vec<_> = word
                .iter()
                .map(|&i| build_generator(m, Side::Left, GeneratorKind::Gaussian, i).unwrap())
                .collect();
            vacuum_moment(m.basis(), &g.iter().collect::<Vec<_>>()).unwrap()
        };
        assert_eq!(mom(&a), mom(&b));
    }

    #[test]
    fn j_conjugation_maps_left_to_right() {
        let m = model(4);
        for i in 0..2 {
            let l = creation(&m, Side::Left, i).unwrap().j_conjugate();
            let r = creation(&m, Side::Right, i).unwrap();
            assert_eq!(l.to_dense(), r.to_dense());
            let ls = annihilation(&m, Side::Left, i).unwrap().j_conjugate();
            let rs = annihilation(&m, Side::Right, i).unwrap();
            assert!((ls.to_dense() - rs.to_dense()).camax() < 1e-15);
        }
    }

    #[test]
    fn composition_matches_dense() {
        let m = model(4);
        let a = build_generator(&m, Side::Left, GeneratorKind::Gaussian, 0).unwrap();
        let b = build_generator(&m, Side::Right, GeneratorKind::Annihilation, 1).unwrap();
        let ab = a.compose(&b).unwrap();
        assert_eq!(ab.reach(), 1);
        assert!((ab.to_dense() - a.to_dense() * b.to_dense()).camax() < 1e-14);
        let sum = a.add(&b.scale(C64::new(0.0, 2.0))).unwrap();
        assert!((sum.to_dense() - (a.to_dense() + b.to_dense() * C64::new(0.0, 2.0))).camax() < 1e-15);
        assert_eq!(a.shift(), None);
        assert_eq!(b.shift(), Some(-1));
    }
}
