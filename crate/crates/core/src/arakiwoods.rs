//! Finite almost-periodic q-Araki–Woods models.
//!
//! `H_ℝ = ℝ^m` with its coordinate basis is the letter alphabet. The positive
//! generator `A` is assembled from spectral blocks: an invariant coordinate
//! (eigenvalue 1) or a coordinate pair carrying `f = (e_k − i e_{k+1})/√2`
//! with eigenvalue `λ` and `f̄` with eigenvalue `1/λ`, so `A^{it}` is a real
//! orthogonal group. The one-particle product is `⟨x, y⟩_U = y^H G₁ x` with
//! `G₁ = 2A(1 + A)⁻¹`, and degree `n` carries `G₁^{⊗n}` times the scalar-q
//! symmetrizer.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::Rng;

use crate::cache::GramCache;
use crate::check::Check;
use crate::error::{domain, QfockError, Result};
use crate::fock::{FockVector, C64};
use crate::model::{FockModel, ModelKind};
use crate::ops::{annihilation, annihilation_vec, creation, creation_vec, gram_adjoint, pair_partition_moment, vacuum_moment, BlockOperator, Side};
use crate::qgram::QMatrix;
use crate::wick::{right_conjugation, WickEngine};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SpectralBlock {
    /// One coordinate fixed by `A`.
    Invariant,
    /// Two coordinates carrying the eigenvalue pair `(λ, 1/λ)`.
    Pair { lambda: f64 },
}

impl SpectralBlock {
    fn width(&self) -> usize {
        match self {
            SpectralBlock::Invariant => 1,
            SpectralBlock::Pair { .. } => 2,
        }
    }
}

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn unit(m: usize, k: usize) -> DVector<C64> {
    DVector::from_fn(m, |i, _| if i == k { c(1.0) } else { C64::default() })
}

fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[derive(Debug)]
pub struct AwModel {
    blocks: Vec<SpectralBlock>,
    q: f64,
    a: DMatrix<C64>,
    eigvecs: DMatrix<C64>,
    eigvals: Vec<f64>,
    fock: FockModel,
}

impl AwModel {
    pub fn new(blocks: &[SpectralBlock], q: f64, truncation: usize) -> Result<Self> {
        AwModel::build(blocks, q, truncation, None)
    }

    pub fn with_cache(blocks: &[SpectralBlock], q: f64, truncation: usize, cache: GramCache) -> Result<Self> {
        AwModel::build(blocks, q, truncation, Some(cache))
    }

    fn build(blocks: &[SpectralBlock], q: f64, truncation: usize, cache: Option<GramCache>) -> Result<Self> {
        if blocks.is_empty() {
            return domain("at least one spectral block is required");
        }
        let m: usize = blocks.iter().map(SpectralBlock::width).sum();
        let mut eigvecs = DMatrix::<C64>::zeros(m, m);
        let mut eigvals = Vec::with_capacity(m);
        let mut k = 0;
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for (idx, b) in blocks.iter().enumerate() {
            match *b {
                SpectralBlock::Invariant => {
                    eigvecs[(k, k)] = c(1.0);
                    eigvals.push(1.0);
                }
                SpectralBlock::Pair { lambda } => {
                    if !(lambda.is_finite() && lambda > 0.0) {
                        return domain(format!("block {idx}: eigenvalue {lambda} is not positive"));
                    }
                    eigvecs[(k, k)] = c(h);
                    eigvecs[(k + 1, k)] = C64::new(0.0, -h);
                    eigvecs[(k, k + 1)] = c(h);
                    eigvecs[(k + 1, k + 1)] = C64::new(0.0, h);
                    eigvals.extend([lambda, 1.0 / lambda]);
                }
            }
            k += b.width();
        }
        let a = spectral_function(&eigvecs, &eigvals, |x| x);
        let g1 = spectral_function(&eigvecs, &eigvals, |x| 2.0 * x / (1.0 + x));
        let g1 = (&g1 + g1.adjoint()) * c(0.5);
        let qm = QMatrix::constant(m, q)?;
        let fock = FockModel::with_one_particle(ModelKind::ArakiWoods, qm, g1, truncation, cache)?;
        Ok(AwModel {
            blocks: blocks.to_vec(),
            q,
            a,
            eigvecs,
            eigvals,
            fock,
        })
    }

    pub fn blocks(&self) -> &[SpectralBlock] {
        &self.blocks
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn dim_r(&self) -> usize {
        self.eigvals.len()
    }

    pub fn generator(&self) -> &DMatrix<C64> {
        &self.a
    }

    pub fn eigenvectors(&self) -> &DMatrix<C64> {
        &self.eigvecs
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigvals
    }

    pub fn fock(&self) -> &FockModel {
        &self.fock
    }

    /// `A^p` for real `p`.
    pub fn generator_power(&self, p: f64) -> DMatrix<C64> {
        spectral_function(&self.eigvecs, &self.eigvals, |x| x.powf(p))
    }

    /// `U_t = A^{it}`.
    pub fn unitary_group(&self, t: f64) -> DMatrix<C64> {
        let d = DMatrix::from_diagonal(&DVector::from_iterator(
            self.dim_r(),
            self.eigvals.iter().map(|&x| C64::new(0.0, t * x.ln()).exp()),
        ));
        &self.eigvecs * d * self.eigvecs.adjoint()
    }

    /// `⟨x, y⟩_U` on the one-particle space.
    pub fn aw_inner(&self, x: &DVector<C64>, y: &DVector<C64>) -> C64 {
        self.fock.one_particle_inner(x, y)
    }

    /// Deformed product of two Fock vectors.
    pub fn fock_inner(&self, x: &FockVector, y: &FockVector) -> Result<C64> {
        self.fock.inner(x, y)
    }

    /// Structural invariants: real-part restriction, `U_t` unitarity and reality, `A = 1` degeneration.
    pub fn structure_checks(&self, trials: usize, rng: &mut impl Rng) -> Result<Vec<Check>> {
        let m = self.dim_r();
        let mut real_part = 0.0f64;
        let mut unitarity = 0.0f64;
        let mut reality = 0.0f64;
        for _ in 0..trials {
            let x = DVector::from_fn(m, |_, _| c(rng.random_range(-1.0..1.0)));
            let y = DVector::from_fn(m, |_, _| c(rng.random_range(-1.0..1.0)));
            let euclid: f64 = x.iter().zip(y.iter()).map(|(a, b)| a.re * b.re).sum();
            real_part = real_part.max((self.aw_inner(&x, &y).re - euclid).abs());
            let t = rng.random_range(-3.0..3.0);
            let u = self.unitary_group(t);
            let xc = random_complex(m, rng);
            let yc = random_complex(m, rng);
            let moved = self.aw_inner(&(&u * &xc), &(&u * &yc));
            unitarity = unitarity.max((moved - self.aw_inner(&xc, &yc)).norm());
            reality = reality.max(u.iter().map(|z| z.im.abs()).fold(0.0, f64::max));
        }
        let trivial = AwModel::new(&vec![SpectralBlock::Invariant; m], self.q, 1)?;
        let id_gram = max_abs(&(trivial.fock.g1() - DMatrix::<C64>::identity(m, m)));
        let hrp = trivial.hr_prime_basis()?;
        let hrp_real = hrp
            .iter()
            .flat_map(|v| v.iter().map(|z| z.im.abs()))
            .fold(0.0, f64::max);
        Ok(vec![
            Check::residual("real-part restriction", real_part, 1e-10),
            Check::residual("U_t unitarity", unitarity, 1e-10),
            Check::residual("U_t real orthogonal", reality, 1e-10),
            Check::residual("A = 1 gives undeformed product", id_gram, 1e-10),
            Check::residual("A = 1 gives H_R' = H_R", hrp_real, 1e-10),
        ])
    }

    /// Real basis of `H_ℝ′ = {ξ : Im⟨ξ, e_k⟩_U = 0 for all k}` from the kernel of `[Im G₁ | Re G₁]`.
    pub fn hr_prime_basis(&self) -> Result<Vec<DVector<C64>>> {
        let m = self.dim_r();
        let g = self.fock.g1();
        // Im⟨x + iy, e_k⟩ = (Im G₁ x + Re G₁ y)_k
        let mut sys = DMatrix::<f64>::zeros(m, 2 * m);
        for i in 0..m {
            for j in 0..m {
                sys[(i, j)] = g[(i, j)].im;
                sys[(i, m + j)] = g[(i, j)].re;
            }
        }
        let normal = sys.transpose() * &sys;
        let eig = SymmetricEigen::new(normal);
        let scale = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1.0);
        let kernel: Vec<usize> = (0..2 * m).filter(|&k| eig.eigenvalues[k].abs() <= 1e-12 * scale).collect();
        if kernel.len() != m {
            return Err(QfockError::Degeneracy(format!(
                "H_R' has real dimension {} but H_R has {m}",
                kernel.len()
            )));
        }
        Ok(kernel
            .into_iter()
            .map(|k| {
                let v = eig.eigenvectors.column(k);
                DVector::from_fn(m, |i, _| C64::new(v[i], v[m + i]))
            })
            .collect())
    }

    /// `max_k |Im⟨ξ, e_k⟩_U|`.
    pub fn hr_prime_residual(&self, xi: &DVector<C64>) -> f64 {
        (0..self.dim_r())
            .map(|k| self.aw_inner(xi, &unit(self.dim_r(), k)).im.abs())
            .fold(0.0, f64::max)
    }

    /// Complex conjugation with respect to `H_ℝ′`.
    pub fn right_conjugation(&self, v: &DVector<C64>) -> Result<DVector<C64>> {
        right_conjugation(&self.fock, v)
    }

    /// `|⟨I_r e, f⟩_U|` for random `f ∈ H_ℝ` and `e ⊥ f` drawn from `H_ℝ′ + iH_ℝ′`.
    pub fn ir_orthogonality_check(&self, trials: usize, rng: &mut impl Rng) -> Result<Check> {
        let m = self.dim_r();
        let basis = self.hr_prime_basis()?;
        let mut worst = 0.0f64;
        for _ in 0..trials {
            let f = DVector::from_fn(m, |_, _| c(rng.random_range(-1.0..1.0)));
            let mut e = DVector::<C64>::zeros(m);
            for b in &basis {
                e += b * C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            }
            let proj = self.aw_inner(&e, &f) / self.aw_inner(&f, &f);
            e -= &f * proj;
            let ire = self.right_conjugation(&e)?;
            worst = worst.max(self.aw_inner(&ire, &f).norm());
        }
        Ok(Check::residual("I_r orthogonality", worst, 1e-9))
    }

    /// Commutation relations between left operators over `H_ℝ` and right annihilators over `H_ℝ′`.
    ///
    /// `l*(f) r*(g) = r*(g) l*(f)` and `l(f) r*(g) − r*(g) l(f) = −⟨f, g⟩_U qᵏ` on degree `k`.
    pub fn commutation_checks(&self) -> Result<Vec<Check>> {
        let m = self.dim_r();
        let fock = &self.fock;
        let n = fock.truncation();
        let mut annihilators = 0.0f64;
        let mut mixed = 0.0f64;
        for g in self.hr_prime_basis()? {
            let rs = annihilation_vec(fock, Side::Right, &g)?;
            for k in 0..m {
                let f = unit(m, k);
                let ls = annihilation(fock, Side::Left, k)?;
                let l = creation(fock, Side::Left, k)?;
                let a = ls.compose(&rs)?.sub(&rs.compose(&ls)?)?;
                annihilators = annihilators.max(a.max_abs_entry());
                let b = l.compose(&rs)?.sub(&rs.compose(&l)?)?;
                let fg = self.aw_inner(&f, &g);
                for level in 0..n {
                    let expected = DMatrix::<C64>::identity(fock.basis().level_dim(level), fock.basis().level_dim(level))
                        * (-fg * self.q.powi(level as i32));
                    mixed = mixed.max(max_abs(&(b.block_dense(level, level) - expected)));
                }
            }
        }
        Ok(vec![
            Check::residual("l*(f) r*(g) = r*(g) l*(f)", annihilators, 1e-9),
            Check::residual("[l(f), r*(g)] = -<f,g> q^k", mixed, 1e-9),
        ])
    }

    /// Candidate modular operator `⊕ₙ (A⁻¹)^{⊗n}` on levels `0..=cap`.
    pub fn delta_candidate(&self, cap: usize) -> DMatrix<C64> {
        let inv = self.generator_power(-1.0);
        let blocks: Vec<DMatrix<C64>> = (0..=cap)
            .scan(DMatrix::<C64>::identity(1, 1), |acc, n| {
                if n > 0 {
                    *acc = acc.kronecker(&inv);
                }
                Some(acc.clone())
            })
            .collect();
        block_diagonal(&blocks)
    }
}

fn random_complex(m: usize, rng: &mut impl Rng) -> DVector<C64> {
    DVector::from_fn(m, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

fn spectral_function(v: &DMatrix<C64>, vals: &[f64], f: impl Fn(f64) -> f64) -> DMatrix<C64> {
    let d = DMatrix::from_diagonal(&DVector::from_iterator(vals.len(), vals.iter().map(|&x| c(f(x)))));
    v * d * v.adjoint()
}

fn block_diagonal(blocks: &[DMatrix<C64>]) -> DMatrix<C64> {
    let dim: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(dim, dim);
    let mut off = 0;
    for b in blocks {
        out.view_mut((off, off), (b.nrows(), b.ncols())).copy_from(b);
        off += b.nrows();
    }
    out
}

fn hermitian_power(h: &DMatrix<C64>, p: f64) -> Result<(DMatrix<C64>, f64)> {
    let sym = (h + h.adjoint()) * c(0.5);
    let eig = SymmetricEigen::new(sym);
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if min <= 0.0 {
        return Err(QfockError::Degeneracy(format!("modular operator has eigenvalue {min:e}")));
    }
    let d = DMatrix::from_diagonal(&DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&x| c(x.powf(p))),
    ));
    Ok((&eig.eigenvectors * d * eig.eigenvectors.adjoint(), min))
}

/// Second quantization `⊕ₙ P^{⊗n}` of a one-particle operator.
///
/// `generator`, when given, must commute with `P`.
pub fn second_quantization(fock: &FockModel, p: &DMatrix<C64>, generator: Option<&DMatrix<C64>>) -> Result<BlockOperator> {
    let d = fock.d();
    if p.nrows() != d || p.ncols() != d {
        return domain(format!("one-particle operator is {}×{}, expected {d}×{d}", p.nrows(), p.ncols()));
    }
    if let Some(a) = generator {
        let comm = max_abs(&(p * a - a * p));
        if comm > 1e-10 {
            return Err(QfockError::Precondition(format!(
                "P does not commute with the generator (‖[P, A]‖ = {comm:e})"
            )));
        }
    }
    let columns: Vec<Vec<(usize, C64)>> = (0..d)
        .map(|j| (0..d).filter(|&i| p[(i, j)] != C64::default()).map(|i| (i, p[(i, j)])).collect())
        .collect();
    Ok(BlockOperator::from_word_map(fock.basis(), "F(P)", 0, |w| {
        let mut terms: Vec<(Vec<usize>, C64)> = vec![(Vec::with_capacity(w.len()), c(1.0))];
        for &letter in w {
            let mut next = Vec::with_capacity(terms.len() * columns[letter].len());
            for (prefix, coef) in &terms {
                for &(i, v) in &columns[letter] {
                    let mut t = prefix.clone();
                    t.push(i);
                    next.push((t, coef * v));
                }
            }
            terms = next;
        }
        terms
    }))
}

/// Idempotence and deformed self-adjointness of a second-quantized projection.
pub fn projection_checks(fock: &FockModel, op: &BlockOperator) -> Result<Vec<Check>> {
    let mut idem = 0.0f64;
    let mut selfadj = 0.0f64;
    for n in 0..=fock.truncation() {
        let b = op.block_dense(n, n);
        idem = idem.max(max_abs(&(&b * &b - &b)));
        let g = fock.level_gram(n)?;
        selfadj = selfadj.max(max_abs(&(&*g * &b - b.adjoint() * &*g)));
    }
    Ok(vec![
        Check::residual("F(P) idempotent", idem, 1e-10),
        Check::residual("F(P) self-adjoint", selfadj, 1e-10),
    ])
}

fn rank(m: &DMatrix<C64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().singular_values();
    let top = sv.iter().fold(0.0f64, |a, &b| a.max(b));
    sv.iter().filter(|&&s| s > 1e-10 * top.max(1.0)).count()
}

/// Dimension of `range F(P₁) ∩ range F(P₂)` summed over levels.
pub fn range_intersection_dim(fock: &FockModel, p1: &BlockOperator, p2: &BlockOperator) -> usize {
    (0..=fock.truncation())
        .map(|n| {
            let a = p1.block_dense(n, n);
            let b = p2.block_dense(n, n);
            let mut both = DMatrix::<C64>::zeros(a.nrows(), a.ncols() + b.ncols());
            both.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(&a);
            both.view_mut((0, a.ncols()), (b.nrows(), b.ncols())).copy_from(&b);
            rank(&a) + rank(&b) - rank(&both)
        })
        .sum()
}

#[derive(Clone, Debug)]
pub struct FixedLevel {
    pub n: usize,
    /// Eigen-words whose eigenvalue product is 1.
    pub eigenwords: Vec<Vec<usize>>,
    pub kernel_dim: usize,
    pub projector_residual: f64,
}

/// Fixed vectors of `⊕ₙ (A^{it})^{⊗n}` per level, by eigen-word enumeration and by the kernel of
/// `Σ_slots log A`.
pub fn fixed_vector_subspace(model: &AwModel, max_level: usize) -> Result<Vec<FixedLevel>> {
    let m = model.dim_r();
    let logs: Vec<f64> = model.eigenvalues().iter().map(|x| x.ln()).collect();
    let log_a = spectral_function(model.eigenvectors(), model.eigenvalues(), f64::ln);
    let words = crate::fock::FockBasis::new(m, max_level)?;
    let mut out = Vec::new();
    for n in 0..=max_level {
        let size = words.level_dim(n);
        if size > 1024 {
            return Err(QfockError::Size {
                what: format!("level {n} of dimension {m}^{n}"),
                requested: size,
                budget: 1024,
            });
        }
        let eigenwords: Vec<Vec<usize>> = words
            .level_words(n)
            .filter(|w| w.iter().map(|&k| logs[k]).sum::<f64>().abs() <= 1e-12 * (1.0 + n as f64))
            .collect();
        // span of V^{⊗n} e_u
        let mut span = DMatrix::<C64>::zeros(size, eigenwords.len());
        for (col, u) in eigenwords.iter().enumerate() {
            let mut v = DVector::from_element(1, c(1.0));
            for &k in u {
                v = v.kronecker(&model.eigenvectors().column(k).into_owned());
            }
            span.set_column(col, &v);
        }
        let p_enum = &span * span.adjoint();
        let mut gen = DMatrix::<C64>::zeros(size, size);
        let id = DMatrix::<C64>::identity(m, m);
        for slot in 0..n {
            let mut term = DMatrix::<C64>::identity(1, 1);
            for s in 0..n {
                term = term.kronecker(if s == slot { &log_a } else { &id });
            }
            gen += term;
        }
        let eig = SymmetricEigen::new((&gen + gen.adjoint()) * c(0.5));
        let kernel: Vec<usize> = (0..size).filter(|&k| eig.eigenvalues[k].abs() <= 1e-9).collect();
        let mut kbasis = DMatrix::<C64>::zeros(size, kernel.len());
        for (col, &k) in kernel.iter().enumerate() {
            kbasis.set_column(col, &eig.eigenvectors.column(k));
        }
        let p_kernel = &kbasis * kbasis.adjoint();
        out.push(FixedLevel {
            n,
            eigenwords,
            kernel_dim: kernel.len(),
            projector_residual: max_abs(&(p_enum - p_kernel)),
        });
    }
    Ok(out)
}

/// Tomita data of `xΩ ↦ x*Ω` on the span of words of degree `≤ cap`.
///
/// Antilinear maps are stored as matrices acting on conjugated coordinates:
/// `S v = s_matrix · v̄` and likewise for `jmod`.
#[derive(Clone, Debug)]
pub struct ModularData {
    pub cap: usize,
    pub s_matrix: DMatrix<C64>,
    pub delta: DMatrix<C64>,
    pub delta_sqrt: DMatrix<C64>,
    pub jmod: DMatrix<C64>,
    pub candidate: DMatrix<C64>,
    pub min_eigenvalue: f64,
    pub checks: Vec<Check>,
}

pub fn modular_data(model: &AwModel, cap: usize) -> Result<ModularData> {
    let fock = model.fock();
    if cap + 1 > fock.truncation() {
        return Err(QfockError::Truncation {
            required: cap + 1,
            truncation: fock.truncation(),
        });
    }
    let basis = fock.basis();
    let dim = basis.offset(cap) + basis.level_dim(cap);
    let grams: Vec<DMatrix<C64>> = (0..=cap).map(|n| fock.level_gram(n).map(|g| (*g).clone())).collect::<Result<_>>()?;
    let g = block_diagonal(&grams);
    let chol = Cholesky::new(g.clone()).ok_or_else(|| QfockError::Degeneracy("Gram is not positive definite".into()))?;
    let mut engine = WickEngine::new(fock)?;
    let mut s_matrix = DMatrix::<C64>::zeros(dim, dim);
    let mut wicks = Vec::with_capacity(dim);
    for idx in 0..dim {
        let w = basis.index_word(idx)?;
        let op = engine.word(w.letters())?;
        // vacuum row of W(w): ⟨W(w) y, Ω⟩ = row · y
        let mut row = DVector::<C64>::zeros(dim);
        for s in 0..=cap {
            if let Some(b) = op.block(s, 0) {
                for (_, col, v) in b.triplet_iter() {
                    row[basis.offset(s) + col] = *v;
                }
            }
        }
        let col = chol.solve(&row.map(|z| z.conj()));
        s_matrix.set_column(idx, &col);
        wicks.push(op);
    }
    let g_delta = (s_matrix.adjoint() * &g * &s_matrix).map(|z| z.conj());
    let l = chol.l();
    let l_inv = l.clone().try_inverse().ok_or_else(|| QfockError::Degeneracy("singular Cholesky factor".into()))?;
    let k = &l_inv * &g_delta * l_inv.adjoint();
    let (k_half, min_eigenvalue) = hermitian_power(&k, 0.5)?;
    let (k_mhalf, _) = hermitian_power(&k, -0.5)?;
    let lift = |x: &DMatrix<C64>| l_inv.adjoint() * x * l.adjoint();
    let delta = lift(&k);
    let delta_sqrt = lift(&k_half);
    let delta_msqrt = lift(&k_mhalf);
    let jmod = &s_matrix * delta_msqrt.map(|z| z.conj());
    let candidate = model.delta_candidate(cap);
    let id = DMatrix::<C64>::identity(dim, dim);

    let involution = max_abs(&(&s_matrix * s_matrix.map(|z| z.conj()) - &id));
    let polar = max_abs(&(&jmod * delta_sqrt.map(|z| z.conj()) - &s_matrix));
    let antiunitary = max_abs(&(jmod.adjoint() * &g * &jmod - g.map(|z| z.conj())));
    let j_involution = max_abs(&(&jmod * jmod.map(|z| z.conj()) - &id));
    let cand_scale = max_abs(&candidate).max(1.0);
    let cand = max_abs(&(&delta - &candidate)) / cand_scale;
    let m = model.dim_r();
    let fixes_real = (0..m)
        .map(|k| {
            let mut e = DVector::<C64>::zeros(dim);
            e[1 + k] = c(1.0);
            (&s_matrix * &e - &e).norm()
        })
        .fold(0.0, f64::max);
    // x*Ω from the block Gram adjoint, against J Δ^{1/2} applied to xΩ
    let mut consistency = 0.0f64;
    for (idx, op) in wicks.iter().enumerate() {
        let adj = gram_adjoint(fock, op)?;
        let star = adj.apply(&basis.vacuum())?;
        let mut e = DVector::<C64>::zeros(dim);
        e[idx] = c(1.0);
        let via_polar = &jmod * (delta_sqrt.map(|z| z.conj()) * &e);
        let diff = (0..basis.dim())
            .map(|i| {
                let p = if i < dim { via_polar[i] } else { C64::default() };
                (star[i] - p).norm()
            })
            .fold(0.0, f64::max);
        consistency = consistency.max(diff);
    }
    let checks = vec![
        Check::residual("S^2 = 1", involution, 1e-8),
        Check::at_least("Delta positive definite", min_eigenvalue, 0.0),
        Check::residual("Jmod Delta^1/2 = S", polar, 1e-8),
        Check::residual("Jmod antiunitary", antiunitary, 1e-8),
        Check::residual("Jmod^2 = 1", j_involution, 1e-8),
        Check::residual("S fixes H_R", fixes_real, 1e-9),
        Check::residual("S reproduces x Omega -> x* Omega", consistency, 1e-8),
        Check::residual("Delta = candidate (A^-1)^n", cand, 1e-8),
    ];
    Ok(ModularData {
        cap,
        s_matrix,
        delta,
        delta_sqrt,
        jmod,
        candidate,
        min_eigenvalue,
        checks,
    })
}

fn field(fock: &FockModel, xi: &DVector<C64>) -> Result<BlockOperator> {
    let conj = xi.map(|z| z.conj());
    creation_vec(fock, Side::Left, xi)?.add(&annihilation_vec(fock, Side::Left, &conj)?)
}

/// `max |φ(x y) − φ(y x)|` for `x = W(ξ)` and random products `y` of coordinate fields.
pub fn centralizer_deviation(fock: &FockModel, xi: &DVector<C64>, trials: usize, rng: &mut impl Rng) -> Result<f64> {
    let n = fock.truncation();
    if n < 2 {
        return domain("centralizer check needs N ≥ 2");
    }
    let x = field(fock, xi)?;
    let gens: Vec<BlockOperator> = (0..fock.d())
        .map(|k| field(fock, &unit(fock.d(), k)))
        .collect::<Result<_>>()?;
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let len = rng.random_range(1..=n - 1);
        let word: Vec<&BlockOperator> = (0..len).map(|_| &gens[rng.random_range(0..fock.d())]).collect();
        let mut xy = vec![&x];
        xy.extend(word.iter().copied());
        let mut yx = word.clone();
        yx.push(&x);
        let dev = (vacuum_moment(fock.basis(), &xy)? - vacuum_moment(fock.basis(), &yx)?).norm();
        worst = worst.max(dev);
    }
    Ok(worst)
}

#[derive(Clone, Debug)]
pub struct CentralizerReport {
    pub max_deviation: f64,
    /// `(order, φ(W(ξ₀)^order), pair-partition value)`.
    pub moments: Vec<(usize, f64, f64)>,
    pub checks: Vec<Check>,
}

pub fn centralizer_check(model: &AwModel, xi0: &DVector<C64>, trials: usize, rng: &mut impl Rng) -> Result<CentralizerReport> {
    let fock = model.fock();
    let fixed = (model.generator() * xi0 - xi0).norm();
    if fixed > 1e-10 {
        return Err(QfockError::Precondition(format!("ξ₀ is not fixed by A (‖Aξ₀ − ξ₀‖ = {fixed:e})")));
    }
    let norm2 = model.aw_inner(xi0, xi0).re;
    let max_deviation = centralizer_deviation(fock, xi0, trials, rng)?;
    let x = field(fock, xi0)?;
    let mut moments = Vec::new();
    let mut checks = vec![Check::residual("W(xi0) centralizes the vacuum state", max_deviation, 1e-8)];
    for order in (2..=fock.truncation().min(8)).step_by(2) {
        let ops = vec![&x; order];
        let value = vacuum_moment(fock.basis(), &ops)?;
        let oracle = pair_partition_moment(model.q(), order)? * norm2.powi(order as i32 / 2);
        moments.push((order, value.re, oracle));
        checks.push(Check::equal(format!("phi(W(xi0)^{order})"), value.re, oracle, 1e-9));
    }
    Ok(CentralizerReport {
        max_deviation,
        moments,
        checks,
    })
}

/// Largest `|φ(s_a s_b) − φ(s_b s_a)|` over coordinate letters.
pub fn nontracial_witness(fock: &FockModel) -> Result<(usize, usize, f64)> {
    let gens: Vec<BlockOperator> = (0..fock.d())
        .map(|k| field(fock, &unit(fock.d(), k)))
        .collect::<Result<_>>()?;
    let mut best = (0, 0, 0.0f64);
    for a in 0..fock.d() {
        for b in 0..fock.d() {
            let dev = (vacuum_moment(fock.basis(), &[&gens[a], &gens[b]])?
                - vacuum_moment(fock.basis(), &[&gens[b], &gens[a]])?)
                .norm();
            if dev > best.2 {
                best = (a, b, dev);
            }
        }
    }
    Ok(best)
}

/// Data for the central-vector computation: an invariant unit vector `ξ₀`, a vector
/// `η ∈ H_ℝ′` with `η ⊥ ξ₀` and `Iη ⊥ ξ₀`, and `ξ` in the Fock space over `ℂξ₀`.
#[derive(Clone, Debug)]
pub struct CentralWitness {
    pub xi0: DVector<C64>,
    pub eta: DVector<C64>,
    pub xi: FockVector,
}

impl CentralWitness {
    pub fn lambda(&self) -> C64 {
        self.xi[0]
    }

    pub fn zeta(&self) -> FockVector {
        let mut z = self.xi.clone();
        z[0] = C64::default();
        z
    }

    /// `Σ_k c_k ξ₀^{⊗k}`.
    pub fn xi_from_coefficients(model: &AwModel, xi0: &DVector<C64>, coefficients: &[C64]) -> Result<FockVector> {
        let basis = model.fock().basis();
        let mut out = basis.zero_vector();
        for (k, &ck) in coefficients.iter().enumerate() {
            let t = basis.simple_tensor(&vec![xi0.clone(); k])?;
            out += t * ck;
        }
        Ok(out)
    }

    pub fn validate(&self, model: &AwModel) -> Result<()> {
        let tol = 1e-10;
        let fail = |m: String| Err(QfockError::Precondition(m));
        let norm = model.aw_inner(&self.xi0, &self.xi0).re.sqrt();
        if (norm - 1.0).abs() > tol {
            return fail(format!("‖ξ₀‖ = {norm}"));
        }
        if (model.generator() * &self.xi0 - &self.xi0).norm() > tol {
            return fail("ξ₀ is not fixed by A".into());
        }
        if model.hr_prime_residual(&self.eta) > tol {
            return fail("η is not in H_R'".into());
        }
        if model.aw_inner(&self.eta, &self.xi0).norm() > tol {
            return fail("η is not orthogonal to ξ₀".into());
        }
        let i_eta = self.eta.map(|z| z.conj());
        if model.aw_inner(&i_eta, &self.xi0).norm() > tol {
            return fail("Iη is not orthogonal to ξ₀".into());
        }
        // ξ must be fixed by the second quantization of the projection onto ℂξ₀
        let fock = model.fock();
        let p = &self.xi0 * (self.xi0.adjoint() * fock.g1());
        let fp = second_quantization(fock, &p, None)?;
        let residual = (fp.apply(&self.xi)? - &self.xi).norm();
        if residual > tol {
            return fail(format!("ξ is not in the Fock space over ℂξ₀ (residual {residual:e})"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct CentralReport {
    pub checks: Vec<Check>,
    /// `⟨W_r(η)(η⊗ξ), ξ⟩`, the expansion that the chain equates with `|λ|²‖η‖²`.
    pub chain_pairing: C64,
    pub lambda_sq_eta_sq: f64,
}

pub fn central_chain_check(model: &AwModel, witness: &CentralWitness) -> Result<CentralReport> {
    witness.validate(model)?;
    let fock = model.fock();
    let basis = fock.basis();
    let deg = basis.vector_degree(&witness.xi, 0.0);
    if deg + 1 > fock.truncation() {
        return Err(QfockError::Truncation {
            required: deg + 1,
            truncation: fock.truncation(),
        });
    }
    let mut engine = WickEngine::new(fock)?;
    let eta_v = basis.one_particle(&witness.eta)?;
    let w_xi = engine.wick(&witness.xi)?.operator;
    let w_eta = engine.wick(&eta_v)?.operator;
    let wr_eta = engine.right_wick(&eta_v)?.operator;
    let eta_xi = basis.tensor(&eta_v, &witness.xi)?;
    let norm = |v: &FockVector| fock.norm(v);

    let lhs_i = w_xi.apply(&eta_v)?;
    let literal = norm(&(&lhs_i - &eta_xi))?;
    let via_eta = norm(&(w_eta.apply(&witness.xi)? - &eta_xi))?;
    let commutant = norm(&(&lhs_i - wr_eta.apply(&witness.xi)?))?;

    // W_r(η) self-adjoint on the blocks it reaches exactly
    let mut selfadj = 0.0f64;
    for s in 0..fock.truncation() {
        for t in 0..fock.truncation() {
            let b = wr_eta.block_dense(s, t);
            let bt = wr_eta.block_dense(t, s);
            let lhs = &*fock.level_gram(t)? * &b;
            let rhs = bt.adjoint() * &*fock.level_gram(s)?;
            selfadj = selfadj.max(max_abs(&(lhs - rhs)));
        }
    }

    let lambda = witness.lambda();
    let eta_sq = fock.inner(&eta_v, &eta_v)?.re;
    let zeta = witness.zeta();
    let eta_zeta = basis.tensor(&eta_v, &zeta)?;
    let lhs_ii = fock.inner(&eta_xi, &eta_xi)?.re;
    let rhs_ii = lambda.norm_sqr() * eta_sq + fock.inner(&eta_zeta, &eta_zeta)?.re;
    let lambda_only = basis.tensor(&eta_v, &(basis.vacuum() * lambda))?;
    let lhs_iii = fock.inner(&lambda_only, &lambda_only)?.re;
    let pairing = fock.inner(&wr_eta.apply(&eta_xi)?, &witness.xi)?;

    Ok(CentralReport {
        checks: vec![
            Check::residual("W(xi) eta = eta (x) xi", literal, 1e-9),
            Check::residual("W(eta) xi = eta (x) xi", via_eta, 1e-9),
            Check::residual("W(xi) eta = W_r(eta) xi", commutant, 1e-9),
            Check::residual("W_r(eta) self-adjoint", selfadj, 1e-9),
            Check::equal("|eta (x) xi|^2 = |lambda|^2 |eta|^2 + |eta (x) zeta|^2", lhs_ii, rhs_ii, 1e-9),
            Check::equal("|eta (x) lambda Omega|^2 = |lambda|^2 |eta|^2", lhs_iii, lambda.norm_sqr() * eta_sq, 1e-9),
        ],
        chain_pairing: pairing,
        lambda_sq_eta_sq: lambda.norm_sqr() * eta_sq,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lambda4(n: usize) -> AwModel {
        AwModel::new(&[SpectralBlock::Invariant, SpectralBlock::Pair { lambda: 4.0 }], 0.3, n).unwrap()
    }

    #[test]
    fn generator_is_positive_with_real_group() {
        let m = lambda4(2);
        let a = m.generator();
        assert!((a - a.adjoint()).iter().all(|z| z.norm() < 1e-14));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for c in m.structure_checks(20, &mut rng).unwrap() {
            assert!(c.pass, "{c:?}");
        }
        assert!(AwModel::new(&[SpectralBlock::Pair { lambda: -1.0 }], 0.1, 2).is_err());
    }

    #[test]
    fn deformed_one_particle_values() {
        let m = lambda4(2);
        let e = |k| unit(3, k);
        // invariant vector sees no deformation
        assert!((m.aw_inner(&e(0), &e(0)) - c(1.0)).norm() < 1e-15);
        // pair block: ⟨e₂, e₁⟩_U = i(c₁ − c₂)/2 with c₁ = 2λ/(1+λ), c₂ = 2/(1+λ)
        let expected = C64::new(0.0, 0.5 * (1.6 - 0.4));
        assert!((m.aw_inner(&e(2), &e(1)) - expected).norm() < 1e-14);
        let id = AwModel::new(&[SpectralBlock::Invariant; 2], 0.0, 2).unwrap();
        assert!(max_abs(&(id.fock().g1() - DMatrix::identity(2, 2))) < 1e-15);
    }

    #[test]
    fn hr_prime_has_full_dimension() {
        let m = lambda4(2);
        let basis = m.hr_prime_basis().unwrap();
        assert_eq!(basis.len(), 3);
        for b in &basis {
            assert!(m.hr_prime_residual(b) <= 1e-10);
            let ir = m.right_conjugation(b).unwrap();
            assert!((ir - b).norm() < 1e-10);
        }
        assert!(m.hr_prime_residual(&unit(3, 0)) <= 1e-10);
        // closed form: H_R' = G₁⁻¹ ℝ^m
        let g_inv = m.fock().g1().clone().try_inverse().unwrap();
        for k in 0..3 {
            assert!(m.hr_prime_residual(&g_inv.column(k).into_owned()) <= 1e-12);
        }
    }

    #[test]
    fn ir_orthogonality() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(lambda4(2).ir_orthogonality_check(100, &mut rng).unwrap().pass);
    }

    #[test]
    fn second_quantization_examples() {
        let m = lambda4(3);
        let fock = m.fock();
        let id = second_quantization(fock, &DMatrix::identity(3, 3), Some(m.generator())).unwrap();
        assert_eq!(id.to_dense(), DMatrix::identity(fock.basis().dim(), fock.basis().dim()));
        let zero = second_quantization(fock, &DMatrix::zeros(3, 3), None).unwrap();
        let dense = zero.to_dense();
        assert_eq!(dense[(0, 0)], c(1.0));
        assert_eq!(dense.iter().filter(|z| **z != C64::default()).count(), 1);
        let mut p0 = DMatrix::<C64>::zeros(3, 3);
        p0[(0, 0)] = c(1.0);
        let f = second_quantization(fock, &p0, Some(m.generator())).unwrap();
        assert!(projection_checks(fock, &f).unwrap().iter().all(|c| c.pass));
        let mut p1 = DMatrix::<C64>::zeros(3, 3);
        p1[(1, 1)] = c(1.0);
        assert!(matches!(
            second_quantization(fock, &p1, Some(m.generator())),
            Err(QfockError::Precondition(_))
        ));
    }

    #[test]
    fn fixed_vectors_for_a_pair() {
        let m = AwModel::new(&[SpectralBlock::Pair { lambda: 4.0 }], 0.2, 2).unwrap();
        let levels = fixed_vector_subspace(&m, 3).unwrap();
        assert_eq!(levels[0].eigenwords, vec![Vec::<usize>::new()]);
        assert!(levels[1].eigenwords.is_empty());
        assert_eq!(levels[2].eigenwords, vec![vec![0, 1], vec![1, 0]]);
        assert!(levels[3].eigenwords.is_empty());
        for l in &levels {
            assert_eq!(l.kernel_dim, l.eigenwords.len());
            assert!(l.projector_residual < 1e-9);
        }
    }

    #[test]
    fn modular_data_in_the_free_tracial_case() {
        let m = AwModel::new(&[SpectralBlock::Invariant; 2], 0.0, 3).unwrap();
        let md = modular_data(&m, 2).unwrap();
        let dim = md.delta.nrows();
        assert!(max_abs(&(&md.delta - DMatrix::identity(dim, dim))) < 1e-10);
        // J is the word reversal
        let b = m.fock().basis();
        for n in 0..=2 {
            let perm = b.reversal_permutation(n);
            for (r, &p) in perm.iter().enumerate() {
                assert!((md.jmod[(b.offset(n) + p, b.offset(n) + r)] - c(1.0)).norm() < 1e-10);
            }
        }
        assert!(md.checks.iter().all(|c| c.pass), "{:?}", md.checks);
    }

    #[test]
    fn modular_operator_matches_candidate() {
        let m = lambda4(3);
        let md = modular_data(&m, 2).unwrap();
        for c in &md.checks {
            assert!(c.pass, "{c:?}");
        }
        // degree-1 eigenvalues of Δ: 1 (invariant), 1/4 and 4 (pair)
        let deg1 = md.delta.view((1, 1), (3, 3)).into_owned();
        let mut ev: Vec<f64> = deg1.eigenvalues().map(|v| v.iter().map(|z| z.re).collect()).unwrap_or_else(|| {
            SymmetricEigen::new(deg1.clone()).eigenvalues.iter().copied().collect()
        });
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((ev[0] - 0.25).abs() < 1e-9 && (ev[1] - 1.0).abs() < 1e-9 && (ev[2] - 4.0).abs() < 1e-9, "{ev:?}");
    }

    #[test]
    fn centralizer_and_nontraciality() {
        let m = lambda4(6);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rep = centralizer_check(&m, &unit(3, 0), 50, &mut rng).unwrap();
        assert!(rep.checks.iter().all(|c| c.pass), "{:?}", rep.checks);
        assert!((rep.moments[1].1 - 2.3).abs() < 1e-12);
        let non = centralizer_deviation(m.fock(), &unit(3, 1), 50, &mut rng).unwrap();
        assert!(non > 1e-3);
        assert!(matches!(
            centralizer_check(&m, &unit(3, 1), 5, &mut rng),
            Err(QfockError::Precondition(_))
        ));
        let (_, _, dev) = nontracial_witness(m.fock()).unwrap();
        assert!((dev - 1.2).abs() < 1e-12);
    }

    #[test]
    fn commutation_relations() {
        let m = lambda4(4);
        for c in m.commutation_checks().unwrap() {
            assert!(c.pass, "{c:?}");
        }
    }

    #[test]
    fn central_chain_on_vacuum_and_generator() {
        let m = lambda4(4);
        let xi0 = unit(3, 0);
        let g_inv = m.fock().g1().clone().try_inverse().unwrap();
        let mut eta = g_inv.column(1).into_owned();
        eta /= c(m.aw_inner(&eta, &eta).re.sqrt());
        let vac = CentralWitness {
            xi0: xi0.clone(),
            eta: eta.clone(),
            xi: m.fock().basis().vacuum(),
        };
        let rep = central_chain_check(&m, &vac).unwrap();
        assert!(rep.checks.iter().all(|c| c.pass), "{:?}", rep.checks);
        let xi = CentralWitness::xi_from_coefficients(&m, &xi0, &[c(0.5), c(1.0)]).unwrap();
        let w = CentralWitness { xi0, eta, xi };
        let rep = central_chain_check(&m, &w).unwrap();
        let by_name = |n: &str| rep.checks.iter().find(|c| c.name == n).unwrap().pass;
        assert!(by_name("W(eta) xi = eta (x) xi"));
        assert!(by_name("W(xi) eta = W_r(eta) xi"));
        assert!(by_name("W_r(eta) self-adjoint"));
        assert!(by_name("|eta (x) xi|^2 = |lambda|^2 |eta|^2 + |eta (x) zeta|^2"));
        // W(ξ₀)η = ξ₀⊗η, which differs from η⊗ξ₀
        assert!(!by_name("W(xi) eta = eta (x) xi"));
    }
}
