//! Command implementations. Each returns its checks and a free-form data block.

use nalgebra::DVector;
use qfock_core::arakiwoods::{
    centralizer_check, fixed_vector_subspace, modular_data, nontracial_witness, central_chain_check, AwModel,
    SpectralBlock, CentralWitness,
};
use qfock_core::check::Check;
use qfock_core::convlemma::{run_suite, suite, ConvSetup, KSpec};
use qfock_core::model::FockModel;
use qfock_core::ops::{
    annihilation, build_generator, commutator_blocks, creation, gram_adjoint_check, pair_partition_moment,
    traciality_check, vacuum_moment, BlockOperator, GeneratorKind, Side,
};
use qfock_core::qgram::{gram_block, gram_block_exact, NAIVE_MAX_DEGREE};
use qfock_core::wick::{commutant_check, operator_distance, wick_crossing, WickEngine};
use qfock_core::{GramMode, QfockError, Result, C64};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use std::sync::Arc;

use crate::config::{Model, Precision, RunConfig};

pub const COMMANDS: [&str; 13] = [
    "gram",
    "ops",
    "commutator-decay",
    "moments",
    "trace-check",
    "wick",
    "commutant",
    "conv-check",
    "aw-inner",
    "aw-modular",
    "aw-centralizer",
    "aw-thm44",
    "aw-fixed",
];

pub struct Context<'a> {
    pub cfg: &'a RunConfig,
    pub model: &'a Model,
    pub precision: Precision,
    pub rng: ChaCha8Rng,
}

pub type Outcome = (Vec<Check>, Value);

fn unit(m: usize, k: usize) -> DVector<C64> {
    DVector::from_fn(m, |i, _| if i == k { C64::new(1.0, 0.0) } else { C64::default() })
}

fn need_aw<'a>(ctx: &Context<'a>, command: &str) -> Result<&'a AwModel> {
    ctx.model
        .aw()
        .ok_or_else(|| QfockError::Unsupported(format!("{command} needs an araki-woods model")))
}

pub fn dispatch(command: &str, ctx: &mut Context) -> Result<Outcome> {
    if ctx.precision == Precision::Exact && command != "gram" {
        return Err(QfockError::Unsupported(format!("exact precision is available for gram only, not {command}")));
    }
    match command {
        "gram" => gram(ctx),
        "ops" => ops(ctx),
        "commutator-decay" => commutator_decay(ctx),
        "moments" => moments(ctx),
        "trace-check" => trace_check(ctx),
        "wick" => wick(ctx),
        "commutant" => commutant(ctx),
        "conv-check" => conv_check(ctx),
        "aw-inner" => aw_inner(ctx),
        "aw-modular" => aw_modular(ctx),
        "aw-centralizer" => aw_centralizer(ctx),
        "aw-thm44" => aw_thm44(ctx),
        "aw-fixed" => aw_fixed(ctx),
        other => Err(QfockError::Domain(format!("unknown command {other}"))),
    }
}

fn gram(ctx: &mut Context) -> Result<Outcome> {
    let fock = ctx.model.fock();
    let tol = &ctx.cfg.tolerances;
    let q = fock.q().clone();
    let top = fock.truncation();
    let mut checks = Vec::new();
    let mut levels = Vec::new();
    for n in 0..=top {
        let block = fock.symmetrizer(n)?;
        checks.push(Check::at_least(format!("level {n} min eigenvalue"), block.mineig(), tol.positivity));
        checks.push(Check::residual(format!("level {n} symmetric"), block.max_asymmetry(), tol.identity));
        levels.push(json!({"n": n, "size": block.matrix().nrows(), "min_eigenvalue": block.mineig()}));
    }
    let compare = ctx.cfg.params.compare_naive.unwrap_or(top <= 6);
    if compare {
        for n in 0..=top.min(NAIVE_MAX_DEGREE) {
            let naive = gram_block(&q, n, GramMode::Naive)?;
            let diff = (naive.matrix() - fock.symmetrizer(n)?.matrix()).amax();
            checks.push(Check::residual(format!("level {n} naive = recursive"), diff, tol.identity));
        }
    }
    if ctx.precision == Precision::Exact {
        for n in 0..=top {
            if fock.basis().level_dim(n) > 256 {
                break;
            }
            let exact = gram_block_exact(&q, n, GramMode::Recursive)?;
            checks.push(Check::at_least(format!("level {n} exact symmetric"), exact.is_symmetric() as u8 as f64, 1.0));
            let diff = (exact.to_f64() - fock.symmetrizer(n)?.matrix()).amax();
            checks.push(Check::residual(format!("level {n} float = exact"), diff, tol.identity));
            if n <= 4 {
                let naive = gram_block_exact(&q, n, GramMode::Naive)?;
                checks.push(Check::at_least(format!("level {n} exact naive = exact recursive"), (naive == exact) as u8 as f64, 1.0));
            }
        }
    }
    Ok((checks, json!({"levels": levels})))
}

fn ops(ctx: &mut Context) -> Result<Outcome> {
    let fock = ctx.model.fock();
    let mut checks = Vec::new();
    let mut letters = Vec::new();
    for i in 0..fock.d() {
        let rep = gram_adjoint_check(fock, i)?;
        checks.push(Check::residual(format!("l_{i}* is the adjoint of l_{i}"), rep.left_deviation, rep.tolerance));
        checks.push(Check::residual(format!("r_{i}* is the adjoint of r_{i}"), rep.right_deviation, rep.tolerance));
        letters.push(json!({"letter": i, "left": rep.left_deviation, "right": rep.right_deviation}));
    }
    Ok((checks, json!({"adjoint_deviation": letters})))
}

fn pairs(ctx: &Context) -> Vec<(usize, usize)> {
    let d = ctx.model.fock().d();
    match &ctx.cfg.params.pairs {
        Some(p) => p.iter().map(|&[i, j]| (i, j)).collect(),
        None => (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).collect(),
    }
}

fn commutator_decay(ctx: &mut Context) -> Result<Outcome> {
    let fock = ctx.model.fock();
    let slack = ctx.cfg.tolerances.bound;
    let mut checks = Vec::new();
    let mut data = Vec::new();
    for (i, j) in pairs(ctx) {
        if i >= fock.d() || j >= fock.d() {
            return Err(QfockError::Domain(format!("pair ({i}, {j}) out of range for d = {}", fock.d())));
        }
        let blocks = commutator_blocks(fock, i, j)?;
        for l in &blocks.levels {
            checks.push(Check::at_most(format!("[l*_{i}, r_{j}] level {}", l.n), l.norm, l.bound, slack));
        }
        data.push(json!({
            "i": i,
            "j": j,
            "norms": blocks.levels.iter().map(|l| l.norm).collect::<Vec<_>>(),
            "bounds": blocks.levels.iter().map(|l| l.bound).collect::<Vec<_>>(),
            "off_diagonal": blocks.levels.iter().map(|l| l.off_diagonal).fold(0.0, f64::max),
            "diagonal_residual": blocks.levels.iter().map(|l| l.diagonal_residual).fold(0.0, f64::max),
        }));
    }
    Ok((checks, json!({"pairs": data})))
}

fn moments(ctx: &mut Context) -> Result<Outcome> {
    let fock = ctx.model.fock();
    let i = ctx.cfg.params.letter.unwrap_or(0);
    let order = ctx.cfg.params.order.unwrap_or(4);
    if order % 2 == 1 {
        return Err(QfockError::Domain(format!("order {order} is odd")));
    }
    if i >= fock.d() {
        return Err(QfockError::Domain(format!("letter {i} out of range for d = {}", fock.d())));
    }
    let s = build_generator(fock, Side::Left, GeneratorKind::Gaussian, i)?;
    let qii = fock.q().get(i, i);
    // the field W(e_i) has variance ⟨e_i, e_i⟩
    let var = fock.g1()[(i, i)].re;
    let mut checks = Vec::new();
    let mut values = Vec::new();
    for k in (2..=order).step_by(2) {
        let ops = vec![&s; k];
        let value = vacuum_moment(fock.basis(), &ops)?;
        let oracle = pair_partition_moment(qii, k)? * var.powi(k as i32 / 2);
        checks.push(Check::equal(format!("phi(s_{i}^{k})"), value.re, oracle, ctx.cfg.tolerances.identity));
        values.push(json!({"order": k, "moment": value.re, "imaginary": value.im, "pair_partitions": oracle}));
    }
    Ok((checks, json!({"letter": i, "q_ii": qii, "moments": values})))
}

fn trace_check(ctx: &mut Context) -> Result<Outcome> {
    let fock = ctx.model.fock();
    let trials = ctx.cfg.params.trials.unwrap_or(50);
    let max_len = ctx.cfg.params.max_len.unwrap_or(fock.truncation() - 1).max(1);
    let rep = traciality_check(fock, trials, max_len, &mut ctx.rng)?;
    let tracial_expected = match ctx.model.aw() {
        None => true,
        Some(aw) => aw.eigenvalues().iter().all(|&x| (x - 1.0).abs() < 1e-12),
    };
    let mut checks = Vec::new();
    let mut data = json!({
        "pairs_checked": rep.pairs_checked,
        "max_deviation": rep.max_deviation,
        "worst": rep.worst,
    });
    if tracial_expected {
        checks.push(Check::residual("|phi(ab) - phi(ba)|", rep.max_deviation, rep.tolerance));
    } else {
        let (a, b, dev) = nontracial_witness(fock)?;
        checks.push(Check::at_least("non-tracial witness |phi(s_a s_b) - phi(s_b s_a)|", dev, 1e-3));
        data["witness"] = json!({"a": a, "b": b, "deviation": dev});
    }
    Ok((checks, data))
}

fn wick(ctx: &mut Context) -> Result<Outcome> {
    let fock = ctx.model.fock();
    let basis = fock.basis();
    let cap = ctx.cfg.params.cap.unwrap_or(fock.truncation() - 1);
    let tol = ctx.cfg.tolerances.identity;
    let mut engine = WickEngine::new(fock)?;
    let (mut left, mut right, mut crossing) = (0.0f64, 0.0f64, 0.0f64);
    let constant = ctx.model.aw().is_none() && fock.q().is_constant();
    let mut words = 0;
    for n in 0..=cap {
        for w in basis.level_words(n).collect::<Vec<_>>() {
            let mut e = basis.zero_vector();
            e[basis.offset(n) + basis.rank(&w)] = C64::new(1.0, 0.0);
            let op = engine.wick(&e)?;
            left = left.max(op.vacuum_residual()?);
            right = right.max(engine.right_wick(&e)?.vacuum_residual()?);
            if constant {
                let by_crossings = wick_crossing(fock, &e)?.operator;
                crossing = crossing.max(operator_distance(&op.operator, &by_crossings, fock.truncation() - n));
            }
            words += 1;
        }
    }
    let mut checks = vec![
        Check::residual("W(w)Omega = w", left, tol),
        Check::residual("W_r(w)Omega = w", right, tol),
    ];
    if constant {
        checks.push(Check::residual("crossing formula = recursion", crossing, tol));
    }
    Ok((checks, json!({"words": words, "degree_cap": cap})))
}

fn commutant(ctx: &mut Context) -> Result<Outcome> {
    let fock = ctx.model.fock();
    let n = fock.truncation();
    let p = &ctx.cfg.params;
    let xi_cap = p.xi_cap.unwrap_or((n / 3).max(1).min(n - 1));
    let eta_cap = p.eta_cap.unwrap_or((n / 3).max(1).min(n - 1));
    let v_cap = p.v_cap.unwrap_or(n.saturating_sub(xi_cap + eta_cap));
    let trials = p.trials.unwrap_or(30);
    let rep = commutant_check(fock, xi_cap, eta_cap, v_cap, trials, &mut ctx.rng)?;
    Ok((
        vec![Check::residual("||[W(xi), W_r(eta)] v||", rep.max_norm, rep.tolerance)],
        json!({"trials": rep.trials, "max_norm": rep.max_norm, "caps": [xi_cap, eta_cap, v_cap]}),
    ))
}

fn parse_op(fock: &FockModel, spec: &str) -> Result<BlockOperator> {
    let bad = || QfockError::Domain(format!("operator `{spec}`: expected l<i>, l*<i>, r<i> or r*<i>"));
    let (side, rest) = match spec.chars().next() {
        Some('l') => (Side::Left, &spec[1..]),
        Some('r') => (Side::Right, &spec[1..]),
        _ => return Err(bad()),
    };
    let (star, digits) = match rest.strip_prefix('*') {
        Some(d) => (true, d),
        None => (false, rest),
    };
    let i: usize = digits.parse().map_err(|_| bad())?;
    if star {
        annihilation(fock, side, i)
    } else {
        creation(fock, side, i)
    }
}

fn conv_check(ctx: &mut Context) -> Result<Outcome> {
    let p = &ctx.cfg.params;
    let setups: Vec<ConvSetup> = match (&p.a, &p.b) {
        (Some(a), Some(b)) => {
            let fock = ctx.model.fock();
            let model = Arc::new(fock.retruncated(fock.truncation())?);
            let a = a.iter().map(|s| parse_op(&model, s)).collect::<Result<_>>()?;
            let b = b.iter().map(|s| parse_op(&model, s)).collect::<Result<_>>()?;
            let letters = p.k_letters.clone().unwrap_or_else(|| vec![0]);
            let k = KSpec::sub_fock(model.basis(), &letters);
            let qmax = model.q().qmax();
            let decay = p.decay.unwrap_or(if qmax > 0.0 { qmax } else { 0.5 });
            vec![suite::random_setup("configured setup", model, a, b, k, decay, None, &mut ctx.rng)?]
        }
        (None, None) => suite::standard(&mut ctx.rng)?,
        _ => return Err(QfockError::Domain("give both `params.a` and `params.b`, or neither".into())),
    };
    let mut checks = Vec::new();
    let mut data = Vec::new();
    for out in run_suite(&setups) {
        let out = out?;
        checks.extend(out.setup.checks.iter().map(|c| Check {
            name: format!("{}: {}", out.label, c.name),
            ..c.clone()
        }));
        checks.extend(out.bound.checks.iter().cloned());
        data.push(json!({
            "label": out.label,
            "fitted_rate": out.setup.max_fitted_rate(),
            "lhs": out.bound.lhs,
            "rhs": out.bound.rhs,
            "constant": out.bound.constant,
            "ratio": out.bound.ratio(),
        }));
    }
    Ok((checks, json!({"setups": data})))
}

fn aw_inner(ctx: &mut Context) -> Result<Outcome> {
    let aw = need_aw(ctx, "aw-inner")?;
    let trials = ctx.cfg.params.trials.unwrap_or(100);
    let mut checks = aw.structure_checks(trials.min(50), &mut ctx.rng)?;
    checks.push(aw.ir_orthogonality_check(trials, &mut ctx.rng)?);
    let basis = aw.hr_prime_basis()?;
    let residual = basis.iter().map(|b| aw.hr_prime_residual(b)).fold(0.0, f64::max);
    checks.push(Check::residual("H_R' basis vectors pair really with H_R", residual, 1e-10));
    if aw.fock().truncation() >= 2 {
        checks.extend(aw.commutation_checks()?);
    }
    let g1 = aw.fock().g1();
    let gram: Vec<Vec<[f64; 2]>> = (0..g1.nrows())
        .map(|i| (0..g1.ncols()).map(|j| [g1[(i, j)].re, g1[(i, j)].im]).collect())
        .collect();
    let hrp: Vec<Vec<[f64; 2]>> = basis.iter().map(|v| v.iter().map(|z| [z.re, z.im]).collect()).collect();
    Ok((checks, json!({"one_particle_gram": gram, "hr_prime_basis": hrp})))
}

fn aw_modular(ctx: &mut Context) -> Result<Outcome> {
    let aw = need_aw(ctx, "aw-modular")?;
    let cap = ctx.cfg.params.cap.unwrap_or((aw.fock().truncation() - 1).min(3));
    let md = modular_data(aw, cap)?;
    let ev = md.delta.clone().symmetric_eigenvalues();
    Ok((
        md.checks.clone(),
        json!({"cap": cap, "dimension": md.delta.nrows(), "min_eigenvalue": md.min_eigenvalue, "candidate_trace": md.candidate.trace().re, "delta_max_eigenvalue": ev.iter().fold(0.0f64, |a, &b| a.max(b))}),
    ))
}

/// Coordinate index of the first invariant block, or of the block named by `params.xi0`.
fn invariant_coordinate(aw: &AwModel, requested: Option<usize>) -> Result<usize> {
    let mut offset = 0;
    let mut found = None;
    for b in aw.blocks() {
        match b {
            SpectralBlock::Invariant => {
                if requested.is_none_or(|r| r == offset) && found.is_none() {
                    found = Some(offset);
                }
                offset += 1;
            }
            SpectralBlock::Pair { .. } => offset += 2,
        }
    }
    found.ok_or_else(|| QfockError::Precondition("no invariant coordinate for xi0".into()))
}

fn aw_centralizer(ctx: &mut Context) -> Result<Outcome> {
    let aw = need_aw(ctx, "aw-centralizer")?;
    let k = invariant_coordinate(aw, ctx.cfg.params.xi0)?;
    let trials = ctx.cfg.params.trials.unwrap_or(50);
    let rep = centralizer_check(aw, &unit(aw.dim_r(), k), trials, &mut ctx.rng)?;
    let (a, b, dev) = nontracial_witness(aw.fock())?;
    Ok((
        rep.checks.clone(),
        json!({
            "xi0": k,
            "max_deviation": rep.max_deviation,
            "moments": rep.moments.iter().map(|&(o, v, p)| json!({"order": o, "moment": v, "pair_partitions": p})).collect::<Vec<_>>(),
            "nontracial_witness": {"a": a, "b": b, "deviation": dev},
        }),
    ))
}

fn aw_thm44(ctx: &mut Context) -> Result<Outcome> {
    let aw = need_aw(ctx, "aw-thm44")?;
    let m = aw.dim_r();
    let k0 = invariant_coordinate(aw, ctx.cfg.params.xi0)?;
    let j = match ctx.cfg.params.eta_letter {
        Some(j) => j,
        None => (0..m)
            .find(|&j| j != k0)
            .ok_or_else(|| QfockError::Precondition("η needs a coordinate other than ξ₀".into()))?,
    };
    if j >= m {
        return Err(QfockError::Domain(format!("eta_letter {j} out of range for dim {m}")));
    }
    let g_inv = aw
        .fock()
        .g1()
        .clone()
        .try_inverse()
        .ok_or_else(|| QfockError::Degeneracy("singular one-particle Gram".into()))?;
    // G₁⁻¹e_j lies in H_R' and is orthogonal to every e_k with k ≠ j
    let mut eta = g_inv.column(j).into_owned();
    let norm = aw.aw_inner(&eta, &eta).re.sqrt();
    eta /= C64::new(norm, 0.0);
    let coeffs: Vec<C64> = ctx
        .cfg
        .params
        .xi_coefficients
        .clone()
        .unwrap_or_else(|| vec![[0.5, 0.0], [1.0, 0.0]])
        .into_iter()
        .map(|[re, im]| C64::new(re, im))
        .collect();
    let xi0 = unit(m, k0);
    let xi = CentralWitness::xi_from_coefficients(aw, &xi0, &coeffs)?;
    let w = CentralWitness { xi0, eta, xi };
    let rep = central_chain_check(aw, &w)?;
    Ok((
        rep.checks.clone(),
        json!({
            "lambda": [w.lambda().re, w.lambda().im],
            "chain_pairing": [rep.chain_pairing.re, rep.chain_pairing.im],
            "lambda_sq_eta_sq": rep.lambda_sq_eta_sq,
        }),
    ))
}

fn aw_fixed(ctx: &mut Context) -> Result<Outcome> {
    let aw = need_aw(ctx, "aw-fixed")?;
    let max_level = ctx.cfg.params.max_level.unwrap_or(aw.fock().truncation().min(4));
    let levels = fixed_vector_subspace(aw, max_level)?;
    let mut checks = Vec::new();
    let mut data = Vec::new();
    for l in &levels {
        checks.push(Check::equal(
            format!("level {} kernel dimension = eigen-word count", l.n),
            l.kernel_dim as f64,
            l.eigenwords.len() as f64,
            0.0,
        ));
        checks.push(Check::residual(format!("level {} projector agreement", l.n), l.projector_residual, ctx.cfg.tolerances.identity));
        data.push(json!({"n": l.n, "dimension": l.kernel_dim, "eigenwords": l.eigenwords}));
    }
    Ok((checks, json!({"levels": data})))
}
