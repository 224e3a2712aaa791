//! Wick products, the word-reversal conjugation `J` and commutant checks.
//!
//! `W(ξ)` is defined by the vacuum recursion
//! `W(Ω) = 1`, `W(e_j ⊗ η) = s_j W(η) − W(l_j* η)`,
//! so `W(ξ)Ω = ξ` and `W(ξ)` is a polynomial in the left fields. The right
//! version is `J W(Jξ) J` for mixed models and the mirrored recursion
//! `W_r(η ⊗ e) = s_r(e) W_r(η) − W_r(r*(I_r e) η)` with
//! `s_r(e) = r(e) + r*(I_r e)` for Araki–Woods models.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use std::collections::HashMap;

use crate::error::{domain, QfockError, Result};
use crate::fock::{FockBasis, FockVector, C64};
use crate::model::{FockModel, ModelKind};
use crate::ops::{annihilation, annihilation_vec, build_generator, creation, BlockOperator, GeneratorKind, Side};

/// Antilinear word reversal.
pub fn conjugate_j(basis: &FockBasis, xi: &FockVector) -> Result<FockVector> {
    basis.check_vector(xi)?;
    let mut out = basis.zero_vector();
    for n in 0..=basis.truncation() {
        let off = basis.offset(n);
        for (r, p) in basis.reversal_permutation(n).into_iter().enumerate() {
            out[off + p] = xi[off + r].conj();
        }
    }
    Ok(out)
}

/// `I_r = G₁⁻¹ ∘ conj ∘ G₁` applied to a one-particle vector.
pub fn right_conjugation(model: &FockModel, v: &DVector<C64>) -> Result<DVector<C64>> {
    let gv = (model.g1() * v).map(|c| c.conj());
    model
        .g1()
        .clone()
        .lu()
        .solve(&gv)
        .ok_or_else(|| QfockError::Degeneracy("one-particle Gram is singular".into()))
}

#[derive(Clone, Debug)]
pub struct WickOp {
    pub side: Side,
    pub vector: FockVector,
    pub operator: BlockOperator,
}

impl WickOp {
    /// `‖W(ξ)Ω − ξ‖` in coordinates.
    pub fn vacuum_residual(&self) -> Result<f64> {
        let basis = self.operator.basis();
        let out = self.operator.apply(&basis.vacuum())?;
        Ok((out - &self.vector).norm())
    }
}

/// Memoizing builder for left and right Wick products on one model.
pub struct WickEngine<'a> {
    model: &'a FockModel,
    s_left: Vec<BlockOperator>,
    s_right: Vec<BlockOperator>,
    ir_letters: Vec<DVector<C64>>,
    left: HashMap<Vec<usize>, BlockOperator>,
    right: HashMap<Vec<usize>, BlockOperator>,
}

impl<'a> WickEngine<'a> {
    pub fn new(model: &'a FockModel) -> Result<Self> {
        let d = model.d();
        let mut s_left = Vec::with_capacity(d);
        let mut s_right = Vec::with_capacity(d);
        let mut ir_letters = Vec::with_capacity(d);
        for j in 0..d {
            s_left.push(build_generator(model, Side::Left, GeneratorKind::Gaussian, j)?);
            let ej = DVector::from_fn(d, |k, _| if k == j { C64::new(1.0, 0.0) } else { C64::default() });
            let ir = right_conjugation(model, &ej)?;
            let field = creation(model, Side::Right, j)?
                .add(&annihilation_vec(model, Side::Right, &ir)?)?
                .with_label(format!("s^r_{j}"));
            s_right.push(field);
            ir_letters.push(ir);
        }
        Ok(WickEngine {
            model,
            s_left,
            s_right,
            ir_letters,
            left: HashMap::new(),
            right: HashMap::new(),
        })
    }

    pub fn model(&self) -> &FockModel {
        self.model
    }

    /// Left field `s_j = l_j + l_j*`.
    pub fn left_field(&self, j: usize) -> &BlockOperator {
        &self.s_left[j]
    }

    /// Right field `s_r(e_j) = r_j + r*(I_r e_j)`.
    pub fn right_field(&self, j: usize) -> &BlockOperator {
        &self.s_right[j]
    }

    fn check_headroom(&self, degree: usize) -> Result<()> {
        if degree + 1 > self.model.truncation() {
            return Err(QfockError::Truncation {
                required: degree + 1,
                truncation: self.model.truncation(),
            });
        }
        Ok(())
    }

    fn check_letters(&self, letters: &[usize]) -> Result<()> {
        if let Some(&bad) = letters.iter().find(|&&l| l >= self.model.d()) {
            return domain(format!("letter {bad} out of range for d = {}", self.model.d()));
        }
        Ok(())
    }

    /// `W(e_w)` for a basis word.
    pub fn word(&mut self, letters: &[usize]) -> Result<BlockOperator> {
        self.check_letters(letters)?;
        self.check_headroom(letters.len())?;
        self.left_word(letters)
    }

    fn left_word(&mut self, letters: &[usize]) -> Result<BlockOperator> {
        if let Some(op) = self.left.get(letters) {
            return Ok(op.clone());
        }
        let op = match letters.split_first() {
            None => BlockOperator::identity(self.model.basis()),
            Some((&j, rest)) => {
                let inner = self.left_word(rest)?;
                let mut acc = self.s_left[j].compose(&inner)?;
                for (w, c) in self.model.annihilation_terms(true, j, rest) {
                    acc = acc.sub(&self.left_word(&w)?.scale(c))?;
                }
                acc
            }
        };
        let op = op.with_label(format!("W{letters:?}"));
        self.left.insert(letters.to_vec(), op.clone());
        Ok(op)
    }

    /// Right Wick product of a basis word by the mirrored recursion.
    pub fn right_word_recursive(&mut self, letters: &[usize]) -> Result<BlockOperator> {
        self.check_letters(letters)?;
        self.check_headroom(letters.len())?;
        self.right_word(letters)
    }

    fn right_word(&mut self, letters: &[usize]) -> Result<BlockOperator> {
        if let Some(op) = self.right.get(letters) {
            return Ok(op.clone());
        }
        let op = match letters.split_last() {
            None => BlockOperator::identity(self.model.basis()),
            Some((&j, rest)) => {
                let inner = self.right_word(rest)?;
                let mut acc = self.s_right[j].compose(&inner)?;
                let ir = self.ir_letters[j].clone();
                for (k, v) in ir.iter().enumerate() {
                    let c = v.conj();
                    if c == C64::default() {
                        continue;
                    }
                    for (w, t) in self.model.annihilation_terms(false, k, rest) {
                        acc = acc.sub(&self.right_word(&w)?.scale(c * t))?;
                    }
                }
                acc
            }
        };
        let op = op.with_label(format!("W_r{letters:?}"));
        self.right.insert(letters.to_vec(), op.clone());
        Ok(op)
    }

    /// Right Wick product of a basis word as `J W(J e_w) J`.
    pub fn right_word_conjugated(&mut self, letters: &[usize]) -> Result<BlockOperator> {
        let rev: Vec<usize> = letters.iter().rev().copied().collect();
        Ok(self.word(&rev)?.j_conjugate().with_label(format!("W_r{letters:?}")))
    }

    fn combine<F>(&mut self, xi: &FockVector, mut f: F, side: Side) -> Result<WickOp>
    where
        F: FnMut(&mut Self, &[usize]) -> Result<BlockOperator>,
    {
        let basis = self.model.basis().clone();
        basis.check_vector(xi)?;
        self.check_headroom(basis.vector_degree(xi, 0.0))?;
        let mut acc = BlockOperator::zero(&basis, "0");
        for (idx, &c) in xi.iter().enumerate() {
            if c == C64::default() {
                continue;
            }
            let w = basis.index_word(idx)?;
            acc = acc.add(&f(self, w.letters())?.scale(c))?;
        }
        Ok(WickOp {
            side,
            vector: xi.clone(),
            operator: acc,
        })
    }

    pub fn wick(&mut self, xi: &FockVector) -> Result<WickOp> {
        self.combine(xi, |e, w| e.left_word(w), Side::Left)
    }

    /// Right Wick product: conjugation route for mixed models, recursion for Araki–Woods.
    pub fn right_wick(&mut self, xi: &FockVector) -> Result<WickOp> {
        match self.model.kind() {
            ModelKind::Mixed => self.right_wick_conjugated(xi),
            ModelKind::ArakiWoods => self.right_wick_recursive(xi),
        }
    }

    pub fn right_wick_recursive(&mut self, xi: &FockVector) -> Result<WickOp> {
        self.combine(xi, |e, w| e.right_word(w), Side::Right)
    }

    pub fn right_wick_conjugated(&mut self, xi: &FockVector) -> Result<WickOp> {
        self.combine(
            xi,
            |e, w| {
                let rev: Vec<usize> = w.iter().rev().copied().collect();
                Ok(e.left_word(&rev)?.j_conjugate())
            },
            Side::Right,
        )
    }
}

/// Crossing count `#{(a, b) ∈ I₁ × I₂ : b < a}`.
pub fn crossing_count(i1: &[usize], i2: &[usize]) -> usize {
    i1.iter().map(|&a| i2.iter().filter(|&&b| b < a).count()).sum()
}

/// `W(ξ)` from the crossing-statistic sum; requires a constant deformation.
pub fn wick_crossing(model: &FockModel, xi: &FockVector) -> Result<WickOp> {
    let q = model.q().constant_value().ok_or_else(|| {
        QfockError::Unsupported("the crossing formula needs a constant deformation".into())
    })?;
    let basis = model.basis();
    basis.check_vector(xi)?;
    let deg = basis.vector_degree(xi, 0.0);
    if deg + 1 > model.truncation() {
        return Err(QfockError::Truncation {
            required: deg + 1,
            truncation: model.truncation(),
        });
    }
    let d = model.d();
    let cre: Vec<BlockOperator> = (0..d).map(|j| creation(model, Side::Left, j)).collect::<Result<_>>()?;
    let ann: Vec<BlockOperator> = (0..d).map(|j| annihilation(model, Side::Left, j)).collect::<Result<_>>()?;
    let mut acc = BlockOperator::zero(basis, "0");
    for (idx, &c) in xi.iter().enumerate() {
        if c == C64::default() {
            continue;
        }
        let w = basis.index_word(idx)?;
        let letters = w.letters();
        let n = letters.len();
        let mut word_op = BlockOperator::zero(basis, "0");
        for mask in 0u32..(1 << n) {
            let i1: Vec<usize> = (0..n).filter(|&k| mask >> k & 1 == 1).collect();
            let i2: Vec<usize> = (0..n).filter(|&k| mask >> k & 1 == 0).collect();
            let weight = q.powi(crossing_count(&i1, &i2) as i32);
            if weight == 0.0 {
                continue;
            }
            let factors: Vec<&BlockOperator> = i1
                .iter()
                .map(|&k| &cre[letters[k]])
                .chain(i2.iter().map(|&k| &ann[letters[k]]))
                .collect();
            let term = BlockOperator::compose_all(basis, &factors)?;
            word_op = word_op.add(&term.scale(C64::new(weight, 0.0)))?;
        }
        acc = acc.add(&word_op.scale(c))?;
    }
    Ok(WickOp {
        side: Side::Left,
        vector: xi.clone(),
        operator: acc,
    })
}

/// Entrywise distance between two operators on source levels `≤ max_source`.
pub fn operator_distance(a: &BlockOperator, b: &BlockOperator, max_source: usize) -> f64 {
    let basis = a.basis();
    let mut worst = 0.0f64;
    for s in 0..=max_source.min(basis.truncation()) {
        for t in 0..=basis.truncation() {
            let diff: DMatrix<C64> = a.block_dense(s, t) - b.block_dense(s, t);
            worst = worst.max(diff.iter().map(|c| c.norm()).fold(0.0, f64::max));
        }
    }
    worst
}

/// Random vector supported on degrees `lo..=hi`.
pub fn random_vector(basis: &FockBasis, lo: usize, hi: usize, rng: &mut impl Rng) -> FockVector {
    let mut v = basis.zero_vector();
    for n in lo..=hi.min(basis.truncation()) {
        for i in basis.level_range(n) {
            v[i] = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        }
    }
    v
}

#[derive(Clone, Debug)]
pub struct CommutantReport {
    pub trials: usize,
    pub max_norm: f64,
    pub tolerance: f64,
}

impl CommutantReport {
    pub fn pass(&self) -> bool {
        self.max_norm <= self.tolerance
    }
}

/// `max ‖(W(ξ)W_r(η) − W_r(η)W(ξ))v‖` over random `ξ, η, v` of the given degree caps.
pub fn commutant_check(
    model: &FockModel,
    xi_cap: usize,
    eta_cap: usize,
    v_cap: usize,
    trials: usize,
    rng: &mut impl Rng,
) -> Result<CommutantReport> {
    let basis = model.basis().clone();
    let needed = xi_cap + eta_cap + v_cap;
    if needed > basis.truncation() || xi_cap + 1 > basis.truncation() || eta_cap + 1 > basis.truncation() {
        return Err(QfockError::Truncation {
            required: needed.max(xi_cap.max(eta_cap) + 1),
            truncation: basis.truncation(),
        });
    }
    let mut engine = WickEngine::new(model)?;
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let xi = random_vector(&basis, 0, xi_cap, rng);
        let eta = random_vector(&basis, 0, eta_cap, rng);
        let v = random_vector(&basis, 0, v_cap, rng);
        let w = engine.wick(&xi)?.operator;
        let wr = engine.right_wick(&eta)?.operator;
        let a = w.apply(&wr.apply(&v)?)?;
        let b = wr.apply(&w.apply(&v)?)?;
        worst = worst.max(model.norm(&(a - b))?);
    }
    Ok(CommutantReport {
        trials,
        max_norm: worst,
        tolerance: 1e-8,
    })
}
