//! Commutator-expansion harness.
//!
//! For families `a₁..a_r`, `b₁..b_s` of degree-shifting operators with
//! `‖[a_i, b_j]|ₙ‖ ≤ qⁿ`, a subspace `K` kept by `a₁..a_{r−1}` and killed by
//! `a_r`, and `ξ, η ∈ K`, the pairing `⟨a₁*⋯a_r* ξ, b₁⋯b_s η⟩` equals
//! `Σₙ ⟨ξ, Tₙ η⁽ⁿ⁾⟩` with
//! `Tₙ = Σ_{i,j} a_r⋯a_{i+1} b₁⋯b_{j−1} [a_i, b_j] b_{j+1}⋯b_s a_{i−1}⋯a₁`.
//! Every intermediate degree is tracked exactly, and all norms are taken in
//! the deformed product.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use std::sync::Arc;

use crate::check::Check;
use crate::error::{domain, QfockError, Result};
use crate::fock::{FockBasis, FockVector, C64};
use crate::model::FockModel;
use crate::ops::{gram_adjoint, spectral_norm, BlockOperator};

/// Per-level basis-index subsets spanning `K`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KSpec {
    pub levels: Vec<Vec<usize>>,
}

impl KSpec {
    /// Words over the given letters only, i.e. the Fock space over their span.
    pub fn sub_fock(basis: &FockBasis, letters: &[usize]) -> KSpec {
        let levels = (0..=basis.truncation())
            .map(|n| {
                basis
                    .level_words(n)
                    .enumerate()
                    .filter(|(_, w)| w.iter().all(|l| letters.contains(l)))
                    .map(|(r, _)| r)
                    .collect()
            })
            .collect();
        KSpec { levels }
    }

    pub fn full(basis: &FockBasis) -> KSpec {
        KSpec {
            levels: (0..=basis.truncation()).map(|n| (0..basis.level_dim(n)).collect()).collect(),
        }
    }

    /// Largest coordinate of `v` outside `K`.
    pub fn outside(&self, basis: &FockBasis, v: &FockVector) -> f64 {
        let mut worst = 0.0f64;
        for (n, keep) in self.levels.iter().enumerate() {
            let off = basis.offset(n);
            for r in 0..basis.level_dim(n) {
                if keep.binary_search(&r).is_err() {
                    worst = worst.max(v[off + r].norm());
                }
            }
        }
        worst
    }

    /// Random vector of `K` supported on degrees `lo..=hi`.
    pub fn random_vector(&self, basis: &FockBasis, lo: usize, hi: usize, rng: &mut impl Rng) -> FockVector {
        let mut v = basis.zero_vector();
        for n in lo..=hi.min(basis.truncation()) {
            for &r in &self.levels[n] {
                v[basis.offset(n) + r] = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            }
        }
        v
    }
}

#[derive(Clone, Debug)]
pub struct ConvSetup {
    pub label: String,
    pub model: Arc<FockModel>,
    pub a: Vec<BlockOperator>,
    pub b: Vec<BlockOperator>,
    pub k: KSpec,
    pub q: f64,
    pub xi: FockVector,
    pub eta: FockVector,
    a_shift: Vec<isize>,
    b_shift: Vec<isize>,
}

fn unit_shift(op: &BlockOperator, family: &str, idx: usize) -> Result<isize> {
    match op.shift() {
        Some(s @ (1 | -1)) => Ok(s),
        // an operator with no blocks is zero; its shift is irrelevant
        None if op.blocks().is_empty() => Ok(-1),
        other => domain(format!(
            "{family}_{} ({}) must shift degree by exactly ±1, found {other:?}",
            idx + 1,
            op.label()
        )),
    }
}

impl ConvSetup {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        label: impl Into<String>,
        model: Arc<FockModel>,
        a: Vec<BlockOperator>,
        b: Vec<BlockOperator>,
        k: KSpec,
        q: f64,
        xi: FockVector,
        eta: FockVector,
    ) -> Result<Self> {
        if a.is_empty() || b.is_empty() {
            return domain("both operator families must be non-empty");
        }
        if !(q > 0.0 && q < 1.0) {
            return domain(format!("decay constant q = {q} must lie in (0, 1)"));
        }
        let basis = model.basis();
        if k.levels.len() != basis.truncation() + 1 {
            return domain(format!("K lists {} levels, expected {}", k.levels.len(), basis.truncation() + 1));
        }
        for (n, keep) in k.levels.iter().enumerate() {
            if keep.windows(2).any(|w| w[0] >= w[1]) || keep.last().is_some_and(|&r| r >= basis.level_dim(n)) {
                return domain(format!("K level {n}: indices must be sorted, distinct and in range"));
            }
        }
        basis.check_vector(&xi)?;
        basis.check_vector(&eta)?;
        let a_shift = a.iter().enumerate().map(|(i, op)| unit_shift(op, "a", i)).collect::<Result<_>>()?;
        let b_shift = b.iter().enumerate().map(|(j, op)| unit_shift(op, "b", j)).collect::<Result<_>>()?;
        Ok(ConvSetup {
            label: label.into(),
            model,
            a,
            b,
            k,
            q,
            xi,
            eta,
            a_shift,
            b_shift,
        })
    }

    pub fn r(&self) -> usize {
        self.a.len()
    }

    pub fn s(&self) -> usize {
        self.b.len()
    }

    fn basis(&self) -> &FockBasis {
        self.model.basis()
    }

    fn commutator(&self, i: usize, j: usize) -> Result<BlockOperator> {
        self.a[i].compose(&self.b[j])?.sub(&self.b[j].compose(&self.a[i])?)
    }

    /// Levels on which `[a_i, b_j]` is computed without truncation loss.
    fn commutator_levels(&self, i: usize, j: usize) -> std::ops::RangeInclusive<usize> {
        let up = commutator_peak(self.a_shift[i], self.b_shift[j]);
        0..=(self.basis().truncation() as isize - up).max(-1) as usize
    }
}

fn commutator_peak(sa: isize, sb: isize) -> isize {
    [0, sa, sb, sa + sb].into_iter().max().unwrap_or(0)
}

/// Highest degree reached by a chain of shifts starting at `start`; a chain that drops below 0 is zero from there on.
fn peak(start: usize, shifts: impl IntoIterator<Item = isize>) -> usize {
    let mut level = start as isize;
    let mut top = level;
    for s in shifts {
        level += s;
        if level < 0 {
            break;
        }
        top = top.max(level);
    }
    top as usize
}

fn require(basis: &FockBasis, peak: usize) -> Result<()> {
    if peak > basis.truncation() {
        return Err(QfockError::Truncation {
            required: peak,
            truncation: basis.truncation(),
        });
    }
    Ok(())
}

/// Operator norm of a level block `s → t` with respect to the deformed products.
pub fn deformed_block_norm(model: &FockModel, x: &DMatrix<C64>, s: usize, t: usize) -> Result<f64> {
    if x.is_empty() {
        return Ok(0.0);
    }
    let ls = model.level_cholesky(s)?.l();
    let lt = model.level_cholesky(t)?.l();
    // ‖L_tᴴ X L_s⁻ᴴ‖ = ‖L_s⁻¹ Xᴴ L_t‖
    let z = ls
        .solve_lower_triangular(&(x.adjoint() * lt))
        .ok_or_else(|| QfockError::Degeneracy(format!("singular Cholesky factor on level {s}")))?;
    Ok(spectral_norm(&z))
}

fn level_part(basis: &FockBasis, v: &FockVector, n: usize) -> FockVector {
    let mut out = basis.zero_vector();
    for i in basis.level_range(n) {
        out[i] = v[i];
    }
    out
}

#[derive(Clone, Debug)]
pub struct CommutatorDecay {
    pub i: usize,
    pub j: usize,
    /// `(n, ‖[a_i, b_j]|ₙ‖)`.
    pub norms: Vec<(usize, f64)>,
    /// `exp` of the least-squares slope of `log‖·‖` against `n`, over levels with nonzero norm.
    pub fitted_rate: Option<f64>,
}

fn fit_rate(norms: &[(usize, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = norms
        .iter()
        .filter(|(_, v)| *v > 1e-14)
        .map(|&(n, v)| (n as f64, v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some((sxy / sxx).exp())
}

#[derive(Clone, Debug)]
pub struct SetupReport {
    pub decay: Vec<CommutatorDecay>,
    pub checks: Vec<Check>,
}

impl SetupReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn max_fitted_rate(&self) -> Option<f64> {
        self.decay.iter().filter_map(|d| d.fitted_rate).reduce(f64::max)
    }
}

/// Measures every hypothesis of the expansion on the given setup.
pub fn validate_setup(setup: &ConvSetup) -> Result<SetupReport> {
    let model = &*setup.model;
    let basis = model.basis();
    let mut decay = Vec::new();
    let mut excess = f64::NEG_INFINITY;
    for i in 0..setup.r() {
        for j in 0..setup.s() {
            let c = setup.commutator(i, j)?;
            let t_shift = setup.a_shift[i] + setup.b_shift[j];
            let mut norms = Vec::new();
            for n in setup.commutator_levels(i, j) {
                let t = n as isize + t_shift;
                let norm = if t < 0 {
                    0.0
                } else {
                    deformed_block_norm(model, &c.block_dense(n, t as usize), n, t as usize)?
                };
                excess = excess.max(norm - setup.q.powi(n as i32));
                norms.push((n, norm));
            }
            let fitted_rate = fit_rate(&norms);
            decay.push(CommutatorDecay { i, j, norms, fitted_rate });
        }
    }
    let mut invariance = 0.0f64;
    let mut annihilated = 0.0f64;
    for (idx, op) in setup.a.iter().enumerate() {
        for (n, keep) in setup.k.levels.iter().enumerate() {
            for &r in keep {
                let mut e = basis.zero_vector();
                e[basis.offset(n) + r] = C64::new(1.0, 0.0);
                let img = op.apply(&e)?;
                if idx + 1 < setup.r() {
                    invariance = invariance.max(setup.k.outside(basis, &img));
                } else {
                    annihilated = annihilated.max(img.iter().map(|z| z.norm()).fold(0.0, f64::max));
                }
            }
        }
    }
    let support = setup.k.outside(basis, &setup.xi).max(setup.k.outside(basis, &setup.eta));
    let checks = vec![
        Check::at_most("commutator norms <= q^n", excess.max(0.0), 0.0, 1e-10),
        Check::residual("a_i(K) in K for i < r", invariance, 1e-12),
        Check::residual("a_r vanishes on K", annihilated, 1e-12),
        Check::residual("xi, eta supported in K", support, 0.0),
    ];
    Ok(SetupReport { decay, checks })
}

#[derive(Clone, Debug)]
pub struct ExpansionReport {
    pub lhs: C64,
    pub rhs: C64,
    /// `⟨ξ, Tₙ η⁽ⁿ⁾⟩` per level.
    pub per_level: Vec<C64>,
    pub check: Check,
}

struct Term {
    i: usize,
    j: usize,
    /// Level on which the commutator acts, `None` when the chain has already vanished.
    m: Option<usize>,
}

impl ConvSetup {
    /// Factor chain of the `(i, j)` term in application order, with the commutator marked by `None`.
    fn term_chain(&self, i: usize, j: usize) -> Vec<Option<usize>> {
        let mut chain: Vec<Option<usize>> = Vec::new();
        chain.extend((0..i).map(Some));
        chain.extend((j + 1..self.s()).rev().map(|k| Some(self.r() + k)));
        chain.push(None);
        chain.extend((0..j).rev().map(|k| Some(self.r() + k)));
        chain.extend((i + 1..self.r()).map(Some));
        chain
    }

    fn factor(&self, idx: usize) -> (&BlockOperator, isize) {
        if idx < self.r() {
            (&self.a[idx], self.a_shift[idx])
        } else {
            (&self.b[idx - self.r()], self.b_shift[idx - self.r()])
        }
    }

    fn term_shifts(&self, i: usize, j: usize) -> Vec<isize> {
        self.term_chain(i, j)
            .into_iter()
            .flat_map(|f| match f {
                Some(idx) => vec![self.factor(idx).1],
                None => {
                    // internal excursion of the commutator, then its net shift
                    let (sa, sb) = (self.a_shift[i], self.b_shift[j]);
                    let up = commutator_peak(sa, sb);
                    vec![up, sa + sb - up]
                }
            })
            .collect()
    }

    fn term(&self, i: usize, j: usize, n: usize) -> Term {
        let mut level = n as isize;
        for f in self.term_chain(i, j) {
            match f {
                Some(idx) => level += self.factor(idx).1,
                None => {
                    return Term {
                        i,
                        j,
                        m: (level >= 0).then_some(level as usize),
                    }
                }
            }
            if level < 0 {
                break;
            }
        }
        Term { i, j, m: None }
    }

    fn check_degrees(&self) -> Result<()> {
        let basis = self.basis();
        let de = basis.vector_degree(&self.eta, 0.0);
        let dx = basis.vector_degree(&self.xi, 0.0);
        let direct: Vec<isize> = self.b_shift.iter().rev().chain(self.a_shift.iter()).copied().collect();
        require(basis, peak(de, direct))?;
        require(basis, peak(dx, self.a_shift.iter().rev().map(|s| -s)))?;
        for i in 0..self.r() {
            for j in 0..self.s() {
                require(basis, peak(de, self.term_shifts(i, j)))?;
            }
        }
        Ok(())
    }

    fn check_killed(&self) -> Result<()> {
        let mut v = self.eta.clone();
        for op in &self.a {
            v = op.apply(&v)?;
        }
        let norm = self.model.norm(&v)?;
        let scale = 1.0 + self.model.norm(&self.eta)?;
        if norm > 1e-10 * scale {
            return Err(QfockError::Precondition(format!(
                "a_r⋯a_1 η = 0 fails (norm {norm:e})"
            )));
        }
        Ok(())
    }

    fn apply_term(&self, i: usize, j: usize, c: &BlockOperator, v: &FockVector) -> Result<FockVector> {
        let mut v = v.clone();
        for f in self.term_chain(i, j) {
            v = match f {
                Some(idx) => self.factor(idx).0.apply(&v)?,
                None => c.apply(&v)?,
            };
        }
        Ok(v)
    }
}

/// Compares the direct pairing with the assembled commutator expansion.
pub fn tn_expansion_check(setup: &ConvSetup) -> Result<ExpansionReport> {
    setup.check_degrees()?;
    setup.check_killed()?;
    let model = &*setup.model;
    let basis = model.basis();
    let mut x = setup.xi.clone();
    for op in setup.a.iter().rev() {
        x = gram_adjoint(model, op)?.apply(&x)?;
    }
    let mut y = setup.eta.clone();
    for op in setup.b.iter().rev() {
        y = op.apply(&y)?;
    }
    let lhs = model.inner(&x, &y)?;
    let commutators: Vec<Vec<BlockOperator>> = (0..setup.r())
        .map(|i| (0..setup.s()).map(|j| setup.commutator(i, j)).collect::<Result<_>>())
        .collect::<Result<_>>()?;
    let mut per_level = Vec::new();
    for n in 0..=basis.truncation() {
        let part = level_part(basis, &setup.eta, n);
        let mut tn = basis.zero_vector();
        for (i, row) in commutators.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                tn += setup.apply_term(i, j, c, &part)?;
            }
        }
        per_level.push(model.inner(&setup.xi, &tn)?);
    }
    let rhs: C64 = per_level.iter().sum();
    let tol = 1e-9 * (1.0 + lhs.norm());
    Ok(ExpansionReport {
        lhs,
        rhs,
        per_level,
        check: Check::residual(format!("{}: expansion", setup.label), (lhs - rhs).norm(), tol),
    })
}

#[derive(Clone, Debug)]
pub struct BoundReport {
    pub lhs: f64,
    pub constant: f64,
    pub rhs: f64,
    /// `(N₀, Σ_{n≥N₀} qⁿ‖η⁽ⁿ⁾‖, supₙ‖η⁽ⁿ⁾‖ q^{N₀}/(1−q))`.
    pub tails: Vec<(usize, f64, f64)>,
    pub checks: Vec<Check>,
}

impl BoundReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn ratio(&self) -> f64 {
        if self.rhs > 0.0 {
            self.lhs / self.rhs
        } else {
            0.0
        }
    }
}

/// `|⟨a*ξ, bη⟩| ≤ C ‖ξ‖ Σₙ qⁿ‖η⁽ⁿ⁾‖` with a constant built from the factor norms of every term.
pub fn conv_bound_check(setup: &ConvSetup) -> Result<BoundReport> {
    let expansion = tn_expansion_check(setup)?;
    let model = &*setup.model;
    let basis = model.basis();
    let q = setup.q;
    let top = basis.truncation();
    let level_norms: Vec<f64> = (0..=top)
        .map(|n| model.norm(&level_part(basis, &setup.eta, n)))
        .collect::<Result<_>>()?;
    let mut constant = 0.0f64;
    for n in 0..=basis.vector_degree(&setup.eta, 0.0) {
        if level_norms[n] == 0.0 {
            continue;
        }
        for i in 0..setup.r() {
            for j in 0..setup.s() {
                let term = setup.term(i, j, n);
                let Some(m) = term.m else { continue };
                let c = setup.commutator(term.i, term.j)?;
                let mut level = n as isize;
                let mut product = 1.0;
                for f in setup.term_chain(i, j) {
                    if level < 0 {
                        product = 0.0;
                        break;
                    }
                    let (op, shift) = match f {
                        Some(idx) => (setup.factor(idx).0, setup.factor(idx).1),
                        None => (&c, setup.a_shift[i] + setup.b_shift[j]),
                    };
                    let t = level + shift;
                    if t < 0 {
                        product = 0.0;
                        break;
                    }
                    let norm = deformed_block_norm(model, &op.block_dense(level as usize, t as usize), level as usize, t as usize)?;
                    product *= match f {
                        Some(_) => norm,
                        None => norm.max(q.powi(m as i32)),
                    };
                    level = t;
                }
                constant = constant.max(product / q.powi(n as i32));
            }
        }
    }
    constant *= (setup.r() * setup.s()) as f64;
    let weighted: f64 = level_norms.iter().enumerate().map(|(n, v)| q.powi(n as i32) * v).sum();
    let xi_norm = model.norm(&setup.xi)?;
    let rhs = constant * xi_norm * weighted;
    let lhs = expansion.lhs.norm();
    let sup = level_norms.iter().copied().fold(0.0, f64::max);
    let tails: Vec<(usize, f64, f64)> = (0..=top)
        .map(|n0| {
            let tail: f64 = (n0..=top).map(|n| q.powi(n as i32) * level_norms[n]).sum();
            (n0, tail, sup * q.powi(n0 as i32) / (1.0 - q))
        })
        .collect();
    let tail_excess = tails.iter().map(|&(_, t, b)| t - b).fold(f64::NEG_INFINITY, f64::max);
    let checks = vec![
        expansion.check.clone(),
        Check::at_most(format!("{}: bound", setup.label), lhs, rhs, 1e-12),
        Check::at_most(format!("{}: tail", setup.label), tail_excess, 0.0, 1e-12),
    ];
    Ok(BoundReport {
        lhs,
        constant,
        rhs,
        tails,
        checks,
    })
}

#[derive(Clone, Debug)]
pub struct SuiteOutcome {
    pub label: String,
    pub setup: SetupReport,
    pub bound: BoundReport,
}

impl SuiteOutcome {
    pub fn pass(&self) -> bool {
        self.setup.pass() && self.bound.pass()
    }
}

/// Runs validation, expansion and bound on independent setups concurrently.
pub fn run_suite(setups: &[ConvSetup]) -> Vec<Result<SuiteOutcome>> {
    setups
        .par_iter()
        .map(|s| {
            Ok(SuiteOutcome {
                label: s.label.clone(),
                setup: validate_setup(s)?,
                bound: conv_bound_check(s)?,
            })
        })
        .collect()
}

pub mod suite {
    //! Standard setups from right annihilators and left creators.

    use super::*;
    use crate::arakiwoods::{AwModel, SpectralBlock};
    use crate::ops::{annihilation, annihilation_vec, creation, creation_vec, Side};
    use crate::qgram::QMatrix;
    use nalgebra::DVector;

    fn r_star(m: &FockModel, i: usize) -> Result<BlockOperator> {
        annihilation(m, Side::Right, i)
    }

    fn l(m: &FockModel, i: usize) -> Result<BlockOperator> {
        creation(m, Side::Left, i)
    }

    fn l_star(m: &FockModel, i: usize) -> Result<BlockOperator> {
        annihilation(m, Side::Left, i)
    }

    /// Build a setup with random `ξ, η ∈ K` at the largest safe degrees.
    #[allow(clippy::too_many_arguments)]
    pub fn random_setup(
        label: &str,
        model: Arc<FockModel>,
        a: Vec<BlockOperator>,
        b: Vec<BlockOperator>,
        k: KSpec,
        q: f64,
        eta_levels: Option<(usize, usize)>,
        rng: &mut impl Rng,
    ) -> Result<ConvSetup> {
        let basis = model.basis().clone();
        let top = basis.truncation();
        let probe = ConvSetup::new(label, model.clone(), a.clone(), b.clone(), k.clone(), q, basis.zero_vector(), basis.zero_vector())?;
        let max_eta = (0..=top)
            .rev()
            .find(|&d| {
                let mut s = probe.clone();
                s.eta[basis.offset(d)] = C64::new(1.0, 0.0);
                s.check_degrees().is_ok()
            })
            .unwrap_or(0);
        let lifts = probe.a_shift.iter().filter(|&&s| s < 0).count();
        let (lo, hi) = eta_levels.unwrap_or((0, max_eta));
        let xi = k.random_vector(&basis, 0, top - lifts.min(top), rng);
        let eta = k.random_vector(&basis, lo, hi.min(max_eta), rng);
        ConvSetup::new(label, model, a, b, k, q, xi, eta)
    }

    /// At least ten setups over mixed, free, constant-q and Araki–Woods models.
    pub fn standard(rng: &mut impl Rng) -> Result<Vec<ConvSetup>> {
        let mut out = Vec::new();

        let cq = Arc::new(FockModel::mixed(QMatrix::constant(2, 0.5)?, 6)?);
        out.push(random_setup(
            "constant q=0.5, a=r0*, b=l0, K=F(e1)",
            cq.clone(),
            vec![r_star(&cq, 0)?],
            vec![l(&cq, 0)?],
            KSpec::sub_fock(cq.basis(), &[1]),
            0.5,
            None,
            rng,
        )?);
        out.push(random_setup(
            "headline config: constant q=0.5, a=(r1*, r0*), b=(l0, l1), K=F(e1)",
            cq.clone(),
            vec![r_star(&cq, 1)?, r_star(&cq, 0)?],
            vec![l(&cq, 0)?, l(&cq, 1)?],
            KSpec::sub_fock(cq.basis(), &[1]),
            0.5,
            None,
            rng,
        )?);
        out.push(random_setup(
            "constant q=0.5, eta on a single level",
            cq.clone(),
            vec![r_star(&cq, 1)?, r_star(&cq, 0)?],
            vec![l(&cq, 1)?],
            KSpec::sub_fock(cq.basis(), &[1]),
            0.5,
            Some((3, 3)),
            rng,
        )?);

        let q2 = QMatrix::new(&[vec![0.4, -0.3], vec![-0.3, 0.6]])?;
        let mx = Arc::new(FockModel::mixed(q2, 6)?);
        out.push(random_setup(
            "mixed d=2, r=s=2, K=F(e0)",
            mx.clone(),
            vec![r_star(&mx, 0)?, r_star(&mx, 1)?],
            vec![l(&mx, 1)?, l(&mx, 0)?],
            KSpec::sub_fock(mx.basis(), &[0]),
            0.6,
            None,
            rng,
        )?);
        out.push(random_setup(
            "mixed d=2, b with an annihilator",
            mx.clone(),
            vec![r_star(&mx, 0)?, r_star(&mx, 1)?],
            vec![l(&mx, 1)?, l_star(&mx, 0)?],
            KSpec::sub_fock(mx.basis(), &[0]),
            0.6,
            None,
            rng,
        )?);
        out.push(random_setup(
            "mixed d=2, s=3, K=F(e1)",
            mx.clone(),
            vec![r_star(&mx, 0)?],
            vec![l(&mx, 1)?, l(&mx, 1)?, l(&mx, 0)?],
            KSpec::sub_fock(mx.basis(), &[1]),
            0.6,
            None,
            rng,
        )?);

        let q3 = QMatrix::new(&[
            vec![0.2, 0.5, -0.4],
            vec![0.5, -0.3, 0.1],
            vec![-0.4, 0.1, 0.7],
        ])?;
        let m3 = Arc::new(FockModel::mixed(q3, 5)?);
        out.push(random_setup(
            "headline config: mixed d=3, a=(r2*, r2*, r1*), b=(l0, l2), K=F(e2)",
            m3.clone(),
            vec![r_star(&m3, 2)?, r_star(&m3, 2)?, r_star(&m3, 1)?],
            vec![l(&m3, 0)?, l(&m3, 2)?],
            KSpec::sub_fock(m3.basis(), &[2]),
            0.7,
            None,
            rng,
        )?);

        let free = Arc::new(FockModel::mixed(QMatrix::zero(2), 6)?);
        out.push(random_setup(
            "free, disjoint letters",
            free.clone(),
            vec![r_star(&free, 1)?],
            vec![l(&free, 0)?],
            KSpec::sub_fock(free.basis(), &[0]),
            0.5,
            None,
            rng,
        )?);
        out.push(random_setup(
            "free, a=r1*, b=(l0, l1), K=F(e0)",
            free.clone(),
            vec![r_star(&free, 1)?],
            vec![l(&free, 0)?, l(&free, 1)?],
            KSpec::sub_fock(free.basis(), &[0]),
            0.5,
            None,
            rng,
        )?);

        let aw = AwModel::new(&[SpectralBlock::Invariant, SpectralBlock::Pair { lambda: 4.0 }], 0.3, 5)?;
        let awm = Arc::new(aw.fock().retruncated(5)?);
        let g1_inv = awm
            .g1()
            .clone()
            .try_inverse()
            .ok_or_else(|| QfockError::Degeneracy("singular one-particle Gram".into()))?;
        // g = G₁⁻¹e₁ lies in H_R', is orthogonal to e₀ and pairs to 1 with e₁
        let g: DVector<C64> = g1_inv.column(1).into_owned();
        let e = |k: usize| DVector::from_fn(3, |i, _| if i == k { C64::new(1.0, 0.0) } else { C64::default() });
        out.push(random_setup(
            "Araki-Woods lambda=4, a=r*(g), b=l(e1), K=F(e0)",
            awm.clone(),
            vec![annihilation_vec(&awm, Side::Right, &g)?],
            vec![creation_vec(&awm, Side::Left, &e(1))?],
            KSpec::sub_fock(awm.basis(), &[0]),
            0.3,
            None,
            rng,
        )?);
        out.push(random_setup(
            "Araki-Woods lambda=4, a=(r*(e0), r*(g)), b=(l(e1), l(e2)), K=F(e0)",
            awm.clone(),
            vec![annihilation_vec(&awm, Side::Right, &e(0))?, annihilation_vec(&awm, Side::Right, &g)?],
            vec![creation_vec(&awm, Side::Left, &e(1))?, creation_vec(&awm, Side::Left, &e(2))?],
            KSpec::sub_fock(awm.basis(), &[0]),
            0.3,
            None,
            rng,
        )?);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::{annihilation, creation, Side};
    use crate::qgram::QMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn peak_tracking() {
        assert_eq!(peak(2, [1, 1, -1]), 4);
        assert_eq!(peak(0, [-1, 1, 1]), 0);
        assert_eq!(peak(3, [-1, -1]), 3);
    }

    #[test]
    fn constant_q_decay_rate() {
        let m = Arc::new(FockModel::mixed(QMatrix::constant(2, 0.5).unwrap(), 6).unwrap());
        let b = m.basis().clone();
        let s = ConvSetup::new(
            "t",
            m.clone(),
            vec![annihilation(&m, Side::Right, 1).unwrap(), annihilation(&m, Side::Right, 0).unwrap()],
            vec![creation(&m, Side::Left, 0).unwrap(), creation(&m, Side::Left, 1).unwrap()],
            KSpec::sub_fock(&b, &[1]),
            0.5,
            b.zero_vector(),
            b.zero_vector(),
        )
        .unwrap();
        let rep = validate_setup(&s).unwrap();
        assert!(rep.pass(), "{:?}", rep.checks);
        let rate = rep.max_fitted_rate().unwrap();
        assert!((rate - 0.5).abs() < 1e-10, "{rate}");
        // [r0*, l0] is the identity scaled by qⁿ
        let d00 = &rep.decay[2];
        for &(n, v) in &d00.norms {
            assert!((v - 0.5f64.powi(n as i32)).abs() < 1e-12);
        }
    }

    #[test]
    fn free_commutators_vanish_above_vacuum() {
        let m = Arc::new(FockModel::mixed(QMatrix::zero(2), 5).unwrap());
        let b = m.basis().clone();
        let s = ConvSetup::new(
            "t",
            m.clone(),
            vec![annihilation(&m, Side::Right, 1).unwrap()],
            vec![creation(&m, Side::Left, 0).unwrap(), creation(&m, Side::Left, 1).unwrap()],
            KSpec::sub_fock(&b, &[0]),
            0.5,
            b.zero_vector(),
            b.zero_vector(),
        )
        .unwrap();
        let rep = validate_setup(&s).unwrap();
        for d in &rep.decay {
            assert!(d.norms.iter().filter(|(n, _)| *n >= 1).all(|(_, v)| *v == 0.0));
        }
    }

    #[test]
    fn rejects_bad_setups() {
        let m = Arc::new(FockModel::mixed(QMatrix::constant(2, 0.5).unwrap(), 4).unwrap());
        let b = m.basis().clone();
        let s0 = crate::ops::build_generator(&m, Side::Left, crate::ops::GeneratorKind::Gaussian, 0).unwrap();
        let k = KSpec::sub_fock(&b, &[1]);
        assert!(ConvSetup::new("t", m.clone(), vec![s0], vec![creation(&m, Side::Left, 0).unwrap()], k.clone(), 0.5, b.zero_vector(), b.zero_vector()).is_err());
        let a = vec![annihilation(&m, Side::Right, 1).unwrap()];
        let bb = vec![creation(&m, Side::Left, 0).unwrap()];
        assert!(ConvSetup::new("t", m.clone(), a.clone(), bb.clone(), k.clone(), 1.0, b.zero_vector(), b.zero_vector()).is_err());
        // r1* does not kill F(e1)
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let eta = k.random_vector(&b, 1, 2, &mut rng);
        let s = ConvSetup::new("t", m.clone(), a, bb, k.clone(), 0.5, b.zero_vector(), eta).unwrap();
        assert!(matches!(tn_expansion_check(&s), Err(QfockError::Precondition(_))));
        // η too deep for the creation
        let deep = k.random_vector(&b, 4, 4, &mut rng);
        let s = ConvSetup::new("t", m.clone(), vec![annihilation(&m, Side::Right, 0).unwrap()], vec![creation(&m, Side::Left, 0).unwrap()], k, 0.5, b.zero_vector(), deep).unwrap();
        assert!(matches!(tn_expansion_check(&s), Err(QfockError::Truncation { .. })));
    }

    #[test]
    fn standard_suite_passes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let setups = suite::standard(&mut rng).unwrap();
        assert!(setups.len() >= 10);
        let mut nonzero = 0;
        for out in run_suite(&setups) {
            let out = out.unwrap();
            assert!(out.pass(), "{}: {:?} {:?}", out.label, out.setup.checks, out.bound.checks);
            if out.bound.lhs > 1e-8 {
                nonzero += 1;
            }
        }
        assert!(nonzero >= 5, "too many trivial setups");
    }

    #[test]
    fn single_level_reduces_to_one_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let setups = suite::standard(&mut rng).unwrap();
        let s = setups.iter().find(|s| s.label.contains("single level")).unwrap();
        let rep = conv_bound_check(s).unwrap();
        let m = &*s.model;
        let eta3 = m.norm(&level_part(m.basis(), &s.eta, 3)).unwrap();
        let expected = rep.constant * m.norm(&s.xi).unwrap() * 0.5f64.powi(3) * eta3;
        assert!((rep.rhs - expected).abs() <= 1e-12 * expected.max(1.0));
    }
}
