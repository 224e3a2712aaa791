//! A truncated Fock space together with its deformed inner product.
//!
//! The level-`n` Gram matrix is `G₁^{⊗n} · P⁽ⁿ⁾`, where `G₁` is the
//! one-particle Gram matrix (identity for mixed models) and `P⁽ⁿ⁾` the
//! Yang–Baxter symmetrizer. The two factors commute when Q is constant, which
//! is the only case in which `G₁ ≠ 1` is accepted. Inner products follow
//! `⟨x, y⟩ = y^H G x`, linear in the left argument.

use nalgebra::{Cholesky, DMatrix, Dyn};
use std::sync::{Arc, OnceLock};

use crate::cache::GramCache;
use crate::error::{domain, QfockError, Result};
use crate::fock::{FockBasis, FockVector, C64};
use crate::qgram::{GramSeries, QMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Mixed,
    ArakiWoods,
}

#[derive(Debug)]
pub struct FockModel {
    kind: ModelKind,
    basis: FockBasis,
    q: QMatrix,
    g1: DMatrix<C64>,
    series: GramSeries,
    grams: Vec<OnceLock<Arc<DMatrix<C64>>>>,
    factors: Vec<OnceLock<Arc<Cholesky<C64, Dyn>>>>,
}

impl FockModel {
    pub fn mixed(q: QMatrix, truncation: usize) -> Result<Self> {
        let d = q.d();
        let series = GramSeries::new(q.clone());
        FockModel::build(ModelKind::Mixed, q, DMatrix::identity(d, d), truncation, series)
    }

    pub fn mixed_with_cache(q: QMatrix, truncation: usize, cache: GramCache) -> Result<Self> {
        let d = q.d();
        let series = GramSeries::with_cache(q.clone(), cache);
        FockModel::build(ModelKind::Mixed, q, DMatrix::identity(d, d), truncation, series)
    }

    /// Model with a general Hermitian positive one-particle Gram matrix; Q must be constant.
    pub fn with_one_particle(
        kind: ModelKind,
        q: QMatrix,
        g1: DMatrix<C64>,
        truncation: usize,
        cache: Option<GramCache>,
    ) -> Result<Self> {
        let d = q.d();
        if g1.nrows() != d || g1.ncols() != d {
            return domain(format!("one-particle Gram is {}×{}, expected {d}×{d}", g1.nrows(), g1.ncols()));
        }
        let is_identity = (&g1 - DMatrix::<C64>::identity(d, d)).camax() == 0.0;
        if !is_identity && !q.is_constant() {
            return Err(QfockError::Unsupported(
                "a deformed one-particle product requires constant Q".into(),
            ));
        }
        if (&g1 - g1.adjoint()).camax() > 1e-12 {
            return domain("one-particle Gram is not Hermitian");
        }
        if Cholesky::new(g1.clone()).is_none() {
            return Err(QfockError::Degeneracy("one-particle Gram is not positive definite".into()));
        }
        let series = match cache {
            Some(c) => GramSeries::with_cache(q.clone(), c),
            None => GramSeries::new(q.clone()),
        };
        FockModel::build(kind, q, g1, truncation, series)
    }

    fn build(kind: ModelKind, q: QMatrix, g1: DMatrix<C64>, truncation: usize, series: GramSeries) -> Result<Self> {
        let basis = FockBasis::new(q.d(), truncation)?;
        Ok(FockModel {
            kind,
            basis,
            q,
            g1,
            series,
            grams: (0..=truncation).map(|_| OnceLock::new()).collect(),
            factors: (0..=truncation).map(|_| OnceLock::new()).collect(),
        })
    }

    /// Same data at a different truncation (Gram cache is not shared).
    pub fn retruncated(&self, truncation: usize) -> Result<Self> {
        FockModel::build(self.kind, self.q.clone(), self.g1.clone(), truncation, GramSeries::new(self.q.clone()))
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn basis(&self) -> &FockBasis {
        &self.basis
    }

    pub fn q(&self) -> &QMatrix {
        &self.q
    }

    pub fn d(&self) -> usize {
        self.basis.d()
    }

    pub fn truncation(&self) -> usize {
        self.basis.truncation()
    }

    pub fn g1(&self) -> &DMatrix<C64> {
        &self.g1
    }

    pub fn cache_hits(&self) -> usize {
        self.series.cache_hits()
    }

    fn check_level(&self, n: usize) -> Result<()> {
        if n > self.truncation() {
            return domain(format!("level {n} exceeds truncation {}", self.truncation()));
        }
        Ok(())
    }

    /// Real symmetrizer `P⁽ⁿ⁾`.
    pub fn symmetrizer(&self, n: usize) -> Result<Arc<crate::qgram::GramBlock>> {
        self.check_level(n)?;
        self.series.level(n)
    }

    /// Full level Gram `G₁^{⊗n} P⁽ⁿ⁾`.
    pub fn level_gram(&self, n: usize) -> Result<Arc<DMatrix<C64>>> {
        self.check_level(n)?;
        if let Some(g) = self.grams[n].get() {
            return Ok(g.clone());
        }
        let p = self.series.level(n)?;
        let mut g = p.matrix().map(|x| C64::new(x, 0.0));
        for col in 0..g.ncols() {
            let mut c = g.column(col).into_owned();
            self.apply_one_particle_slotwise(n, c.as_mut_slice());
            g.set_column(col, &c);
        }
        Ok(self.grams[n].get_or_init(|| Arc::new(g)).clone())
    }

    /// Apply `G₁` in every tensor slot of a level-`n` coordinate vector.
    fn apply_one_particle_slotwise(&self, n: usize, v: &mut [C64]) {
        let d = self.d();
        if (&self.g1 - DMatrix::<C64>::identity(d, d)).camax() == 0.0 {
            return;
        }
        let mut tmp = vec![C64::default(); d];
        for slot in 0..n {
            let stride = d.pow((n - 1 - slot) as u32);
            let block = stride * d;
            for start in (0..v.len()).step_by(block) {
                for off in 0..stride {
                    for (a, t) in tmp.iter_mut().enumerate() {
                        *t = (0..d).map(|b| self.g1[(a, b)] * v[start + b * stride + off]).sum();
                    }
                    for (a, t) in tmp.iter().enumerate() {
                        v[start + a * stride + off] = *t;
                    }
                }
            }
        }
    }

    /// Cholesky factor of the level Gram.
    pub fn level_cholesky(&self, n: usize) -> Result<Arc<Cholesky<C64, Dyn>>> {
        self.check_level(n)?;
        if let Some(c) = self.factors[n].get() {
            return Ok(c.clone());
        }
        let g = self.level_gram(n)?;
        let chol = Cholesky::new((*g).clone())
            .ok_or_else(|| QfockError::Degeneracy(format!("level-{n} Gram is not positive definite")))?;
        Ok(self.factors[n].get_or_init(|| Arc::new(chol)).clone())
    }

    /// `⟨x, y⟩`, linear in `x`.
    pub fn inner(&self, x: &FockVector, y: &FockVector) -> Result<C64> {
        self.basis.check_vector(x)?;
        self.basis.check_vector(y)?;
        let mut acc = C64::default();
        for n in 0..=self.truncation() {
            let r = self.basis.level_range(n);
            let yn = y.rows(r.start, r.len());
            if yn.iter().all(|c| *c == C64::default()) {
                continue;
            }
            let xn = x.rows(r.start, r.len());
            if xn.iter().all(|c| *c == C64::default()) {
                continue;
            }
            let g = self.level_gram(n)?;
            acc += (yn.adjoint() * (&*g * xn))[(0, 0)];
        }
        Ok(acc)
    }

    pub fn norm(&self, x: &FockVector) -> Result<f64> {
        Ok(self.inner(x, x)?.re.max(0.0).sqrt())
    }

    /// One-particle product `⟨x, y⟩ = y^H G₁ x`.
    pub fn one_particle_inner(&self, x: &nalgebra::DVector<C64>, y: &nalgebra::DVector<C64>) -> C64 {
        (y.adjoint() * &self.g1 * x)[(0, 0)]
    }

    /// Terms of the left (or right) annihilation by the letter `i` on a basis word.
    pub fn annihilation_terms(&self, left: bool, i: usize, word: &[usize]) -> Vec<(Vec<usize>, C64)> {
        let n = word.len();
        let mut out = Vec::new();
        for k in 0..n {
            let a = word[k];
            let g = self.g1[(i, a)];
            if g == C64::default() {
                continue;
            }
            let others: &mut dyn Iterator<Item = &usize> = if left {
                &mut word[..k].iter()
            } else {
                &mut word[k + 1..].iter()
            };
            let weight: f64 = others.map(|&b| self.q.get(a, b)).product();
            if weight == 0.0 {
                continue;
            }
            let mut rest = word.to_vec();
            rest.remove(k);
            out.push((rest, g * weight));
        }
        out
    }
}
