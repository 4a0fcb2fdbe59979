//! Von Neumann and one-shot conditional entropies, in bits.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{cr, eigvalsh, identity, projector, purify, sqrtm_psd, CMat, CVec, DensityState, PureState, SystemLayout};
use crate::sdp::{fidelity_epigraph, BlockId, Corner, LinOp, Sense, SdpProblem, DEFAULT_MAX_ITER, DEFAULT_TOL};

/// Label used for purifying systems.
pub const PURIFIER: &str = "#purifier";
/// Slack allowed when checking entropy inequalities.
pub const SLACK_TOL: f64 = 1e-4;
/// Eigenvalues below this contribute nothing to the entropy.
const EIG_FLOOR: f64 = 1e-12;

/// `−Tr m log₂ m` from the spectrum of a Hermitian PSD matrix.
pub fn entropy_of_matrix(m: &CMat) -> f64 {
    eigvalsh(m).into_iter().filter(|&l| l > EIG_FLOOR).map(|l| -l * l.log2()).sum::<f64>().max(0.0)
}

pub fn von_neumann(s: &DensityState) -> Result<f64> {
    s.require_normalized()?;
    Ok(entropy_of_matrix(s.matrix()))
}

fn check_labels(s: &DensityState, a: &[&str], b: &[&str]) -> Result<()> {
    if a.is_empty() {
        return Err(Error::InvalidLayout("target system must be non-empty".into()));
    }
    for l in a.iter().chain(b) {
        s.layout().index_of(l)?;
    }
    for l in a {
        if b.contains(l) {
            return Err(Error::InvalidLayout(format!("`{l}` is both target and conditioning system")));
        }
    }
    for (i, l) in a.iter().chain(b).enumerate() {
        if a.iter().chain(b).skip(i + 1).any(|m| m == l) {
            return Err(Error::LabelCollision(l.to_string()));
        }
    }
    Ok(())
}

/// Marginal on `a ∪ b` ordered as `a` then `b`, with the two dimensions.
fn ordered_marginal(s: &DensityState, a: &[&str], b: &[&str]) -> Result<(DensityState, usize, usize)> {
    check_labels(s, a, b)?;
    let keep: Vec<&str> = a.iter().chain(b).copied().collect();
    let m = s.partial_trace(&keep)?.permute(&keep)?;
    let da: usize = a.iter().map(|l| s.layout().dim_of(l)).product::<Result<usize>>()?;
    let db: usize = b.iter().map(|l| s.layout().dim_of(l)).product::<Result<usize>>()?;
    Ok((m, da, db))
}

/// `S(A|B) = S(AB) − S(B)`.
pub fn conditional_entropy(s: &DensityState, a: &[&str], b: &[&str]) -> Result<f64> {
    s.require_normalized()?;
    let (m, _, _) = ordered_marginal(s, a, b)?;
    let sab = entropy_of_matrix(m.matrix());
    let sb = if b.is_empty() { 0.0 } else { entropy_of_matrix(s.partial_trace(b)?.matrix()) };
    Ok(sab - sb)
}

/// `I(A⟩B) = −S(A|B)`.
pub fn coherent_information(s: &DensityState, a: &[&str], b: &[&str]) -> Result<f64> {
    Ok(-conditional_entropy(s, a, b)?)
}

fn fresh_label(layout: &SystemLayout) -> String {
    let mut label = PURIFIER.to_string();
    while layout.contains(&label) {
        label.push('#');
    }
    label
}

fn sdp_value(p: &SdpProblem, context: &str) -> Result<f64> {
    let sol = p.solve(DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    sol.require_optimal(context)?;
    Ok(sol.objective)
}

/// `min Tr σ_B  s.t.  ρ_AB ≤ I_A ⊗ σ_B`, i.e. `2^{−H_min(A|B)}`.
fn min_entropy_program(rho: &CMat, da: usize, db: usize) -> Result<f64> {
    let mut p = SdpProblem::new();
    let sigma = p.add_block(db);
    let slack = p.add_block(da * db);
    p.add_objective(sigma, identity(db))?;
    p.add_matrix_equality(
        vec![(sigma, LinOp::identity_tensor(da, db)), (slack, LinOp::identity(da * db).neg())],
        rho,
    )?;
    sdp_value(&p, "min-entropy")
}

/// `H_min(A|B)`; other subsystems are traced out first.
pub fn h_min(s: &DensityState, a: &[&str], b: &[&str]) -> Result<f64> {
    let (m, da, db) = ordered_marginal(s, a, b)?;
    let v = min_entropy_program(m.matrix(), da, db)?;
    Ok(-v.log2())
}

/// Purification of the `a ∪ b` marginal, with the purifier label.
fn purified_marginal(s: &DensityState, a: &[&str], b: &[&str]) -> Result<(PureState, String)> {
    s.require_normalized()?;
    let (m, _, _) = ordered_marginal(s, a, b)?;
    let label = fresh_label(s.layout());
    Ok((purify(&m, &label)?, label))
}

/// `H_max(A|B) = log₂ max_σ F(ρ_AB, I_A ⊗ σ_B)²`.
///
/// Equal to `−H_min(A|C)` on a purification (see [`h_max_smooth`] at
/// `ε = 0`), but the program lives on `AB` only.
pub fn h_max(s: &DensityState, a: &[&str], b: &[&str]) -> Result<f64> {
    s.require_normalized()?;
    let (m, da, db) = ordered_marginal(s, a, b)?;
    max_entropy_by_fidelity(m.matrix(), da, db)
}

fn check_eps(eps: f64) -> Result<()> {
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::ParameterOutOfRange(format!("smoothing parameter must lie in [0, 1), got {eps}")));
    }
    Ok(())
}

/// Smooth min-entropy program over the purified-distance ball of
/// sub-normalized states; returns `2^{−H^ε_min}`.
fn smooth_min_entropy_program(rho: &CMat, da: usize, db: usize, eps: f64) -> Result<f64> {
    let d = da * db;
    let mut p = SdpProblem::new();
    let sigma = p.add_block(db);
    let slack = p.add_block(d);
    let epi = fidelity_epigraph(&mut p, Corner::Free(d), Corner::Fixed(rho.clone()))?;
    p.add_objective(sigma, identity(db))?;
    // ρ' ≤ I ⊗ σ
    p.add_matrix_equality(
        vec![
            (sigma, LinOp::identity_tensor(da, db)),
            (epi.block, epi.top_left().neg()),
            (slack, LinOp::identity(d).neg()),
        ],
        &CMat::zeros(d, d),
    )?;
    // Tr ρ' ≤ 1
    p.add_constraint(vec![(epi.block, epi.top_left_coeff(&identity(d)))], Sense::Le, 1.0)?;
    // F(ρ', ρ) ≥ √(1 − ε²)
    p.add_constraint(vec![(epi.block, epi.re_trace_coeff())], Sense::Ge, (1.0 - eps * eps).sqrt())?;
    sdp_value(&p, "smooth min-entropy")
}

/// `H^ε_min(A|B)` with the purified-distance smoothing ball. At `ε = 0` the
/// ball is `{ρ}` and the unsmoothed program is used.
pub fn h_min_smooth(s: &DensityState, a: &[&str], b: &[&str], eps: f64) -> Result<f64> {
    check_eps(eps)?;
    s.require_normalized()?;
    let (m, da, db) = ordered_marginal(s, a, b)?;
    let v = if eps == 0.0 {
        min_entropy_program(m.matrix(), da, db)?
    } else {
        smooth_min_entropy_program(m.matrix(), da, db, eps)?
    };
    Ok(-v.log2())
}

/// `H^ε_max(A|B) = −H^ε_min(A|C)` for a purification on `ABC`.
pub fn h_max_smooth(s: &DensityState, a: &[&str], b: &[&str], eps: f64) -> Result<f64> {
    check_eps(eps)?;
    let (psi, c) = purified_marginal(s, a, b)?;
    Ok(-h_min_smooth(&psi.to_density(), a, &[c.as_str()], eps)?)
}

/// Independent evaluation of `H^ε_max(A|B)`.
///
/// For `ε = 0` it uses `2^{H_max(A|B)} = max_σ F(ρ_AB, I_A ⊗ σ_B)²`, which
/// needs no purification. For `ε > 0` it maximizes the Lagrange dual of the
/// smooth min-entropy program, evaluated on the full-rank purification
/// `(√ρ ⊗ U) Σ_i |i⟩|i⟩` with a seeded random unitary `U`.
pub fn h_max_smooth_direct(s: &DensityState, a: &[&str], b: &[&str], eps: f64, seed: u64) -> Result<f64> {
    check_eps(eps)?;
    s.require_normalized()?;
    let (m, da, db) = ordered_marginal(s, a, b)?;
    if eps == 0.0 {
        return max_entropy_by_fidelity(m.matrix(), da, db);
    }
    let d = da * db;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = crate::random::unitary(&mut rng, d);
    let root = sqrtm_psd(m.matrix());
    // |ψ⟩ = Σ_{x,k} (√ρ)_{x,y} U_{k,y} |x⟩|k⟩ over y.
    let w = &root * u.transpose();
    let amp = CVec::from_fn(d * d, |idx, _| w[(idx / d, idx % d)]);
    let full = DensityState::new(SystemLayout::new(vec![("A", da), ("B", db), ("C", d)])?, projector(&amp))?;
    let ac = full.partial_trace(&["A", "C"])?;
    let v = smooth_min_entropy_dual(ac.matrix(), da, d, eps)?;
    Ok(v.log2())
}

/// `max_σ F(ρ, I ⊗ σ)` over states `σ`, returning `log₂ max F²`.
///
/// With `ρ = W W†` and `W` of width `rank ρ`, `F(ρ, τ) = Tr √(W† τ W)`, so
/// the epigraph has corners `I` and `W† (I ⊗ σ) W` of size `rank ρ`.
fn max_entropy_by_fidelity(rho: &CMat, da: usize, db: usize) -> Result<f64> {
    let v = support_isometry(rho);
    let w = &v * sqrtm_psd(&(v.adjoint() * rho * &v));
    let r = w.ncols();
    let lift = LinOp::identity_tensor(da, db);
    let pulled = LinOp::new(db, r, move |m: &CMat| w.adjoint() * lift.apply(m) * &w);
    let mut p = SdpProblem::new();
    let sigma = p.add_block(db);
    p.add_constraint(vec![(sigma, identity(db))], Sense::Eq, 1.0)?;
    let epi = fidelity_epigraph(&mut p, Corner::Fixed(identity(r)), Corner::Linked(vec![(sigma, pulled)]))?;
    p.add_objective(epi.block, -epi.re_trace_coeff())?;
    let f = -sdp_value(&p, "max-entropy fidelity form")?;
    Ok(2.0 * f.log2())
}

/// Lagrange dual of the smooth min-entropy program (a maximization);
/// returns its optimum, equal to `2^{−H^ε_min(A|C)}` by strong duality.
///
/// ```text
/// maximize  s·√(1−ε²) − t − Tr(Z₂₂ ρ)
/// s.t.      Tr_A Y ≤ I,  Z₁₁ ≤ Y + t I,  [[Z₁₁, −s/2 I], [−s/2 I, Z₂₂]] ⪰ 0,
///           Y ⪰ 0,  s, t ≥ 0
/// ```
fn smooth_min_entropy_dual(rho: &CMat, da: usize, dc: usize, eps: f64) -> Result<f64> {
    let d = da * dc;
    // Z₂₂ only meets ρ on its support V, so the bottom corner is kept in
    // support coordinates: [[Z₁₁, −s/2 V], [−s/2 V†, Z₂₂']] ⪰ 0.
    let v = support_isometry(rho);
    let k = v.ncols();
    let mut p = SdpProblem::new();
    let y = p.add_block(d);
    let z = p.add_block(d + k);
    let t = p.add_block(1);
    let s = p.add_block(1);
    let slack_c = p.add_block(dc);
    let slack_z = p.add_block(d);
    let one = CMat::identity(1, 1);

    // Tr_A Y + slack = I
    let ptr = LinOp::new(d, dc, move |m: &CMat| {
        let mut out = CMat::zeros(dc, dc);
        for a in 0..da {
            out += m.view((a * dc, a * dc), (dc, dc));
        }
        out
    });
    p.add_matrix_equality(vec![(y, ptr), (slack_c, LinOp::identity(dc))], &identity(dc))?;

    // Y + t I − Z₁₁ − slack = 0
    let t_to_id = LinOp::new(1, d, move |m: &CMat| identity(d) * m[(0, 0)]);
    p.add_matrix_equality(
        vec![
            (y, LinOp::identity(d)),
            (t, t_to_id),
            (z, LinOp::diag_block(d + k, 0, d).neg()),
            (slack_z, LinOp::identity(d).neg()),
        ],
        &CMat::zeros(d, d),
    )?;

    // Z₂₁ = −s/2 V†, entrywise in real and imaginary parts.
    for i in 0..k {
        for j in 0..d {
            let w = v[(j, i)].conj();
            let mut re = CMat::zeros(d + k, d + k);
            re[(d + i, j)] = cr(0.5);
            re[(j, d + i)] = cr(0.5);
            p.add_constraint(vec![(z, re), (s, &one * cr(0.5 * w.re))], Sense::Eq, 0.0)?;
            let mut im = CMat::zeros(d + k, d + k);
            im[(d + i, j)] = crate::linalg::c(0.0, -0.5);
            im[(j, d + i)] = crate::linalg::c(0.0, 0.5);
            p.add_constraint(vec![(z, im), (s, &one * cr(0.5 * w.im))], Sense::Eq, 0.0)?;
        }
    }

    // Objective (minimize the negation).
    let mut z_obj = CMat::zeros(d + k, d + k);
    z_obj.view_mut((d, d), (k, k)).copy_from(&(v.adjoint() * rho * &v));
    p.add_objective(z, crate::linalg::hermitian_part(&z_obj))?;
    p.add_objective(t, one.clone())?;
    p.add_objective(s, -one * cr((1.0 - eps * eps).sqrt()))?;
    let _: BlockId = slack_c;
    Ok(-sdp_value(&p, "smooth min-entropy dual")?)
}

/// Orthonormal basis of the support of a PSD matrix.
fn support_isometry(m: &CMat) -> CMat {
    let (vals, vecs) = crate::linalg::eigh(m);
    let top = vals.iter().copied().fold(0.0, f64::max);
    let cols: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > 1e-11 * top.max(1e-300)).collect();
    CMat::from_fn(m.nrows(), cols.len(), |i, j| vecs[(i, cols[j])])
}
