//! Degradability and anti-degradability certificates.
//!
//! A channel `N` is anti-degradable when `N = M ∘ N_c` for some CPTP `M`
//! acting on the environment, and degradable when `N_c = M ∘ N`. Both are
//! decided numerically by searching over the Choi matrix of `M`, on which the
//! composition is linear.

use serde::Serialize;

use crate::channels::{choi_apply, spanning_set, ChoiMatrix, QuantumChannel};
use crate::error::{Error, Result};
use crate::linalg::{cr, frobenius, hermitian_part, identity, kron, max_abs, partial_trace_mat, CMat};
use crate::sdp::{BlockId, LinOp, SdpProblem, SdpStatus, DEFAULT_MAX_ITER, DEFAULT_TOL};

pub const DEFAULT_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Antidegradable,
    Degradable,
    NeitherProven,
}

/// Which composition was searched for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `N = M ∘ N_c`, with `M` from the environment to the output.
    EnvironmentToOutput,
    /// `N_c = M ∘ N`, with `M` from the output to the environment.
    OutputToEnvironment,
}

#[derive(Debug, Clone)]
pub struct DegradabilityCertificate {
    pub verdict: Verdict,
    pub map: Option<ChoiMatrix>,
    /// `‖J(M ∘ source) − J(target)‖_F` for the best map found.
    pub residual: f64,
    pub threshold: f64,
    pub direction: Direction,
}

impl DegradabilityCertificate {
    pub fn is_certified(&self) -> bool {
        self.verdict != Verdict::NeitherProven
    }

    /// The witness map as a channel.
    pub fn witness(&self) -> Option<Result<QuantumChannel>> {
        self.map.as_ref().map(QuantumChannel::from_choi)
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::json!({
            "verdict": self.verdict,
            "direction": self.direction,
            "residual": self.residual,
            "threshold": self.threshold,
            "map": self.map.as_ref().map(|m| serde_json::json!({
                "in_dim": m.in_dim(),
                "out_dim": m.out_dim(),
                "choi": crate::linalg::matrix_to_pairs(m.matrix()),
            })),
        })
    }
}

/// Choi matrix of `M ∘ source` as a linear function of `J(M)`.
fn composition_op(source: &QuantumChannel, m_out: usize) -> LinOp {
    let s_in = source.in_dim();
    let s_out = source.out_dim();
    let images: Vec<(usize, usize, CMat)> = (0..s_in)
        .flat_map(|i| (0..s_in).map(move |j| (i, j)))
        .map(|(i, j)| {
            let mut e = CMat::zeros(s_in, s_in);
            e[(i, j)] = cr(1.0);
            (i, j, source.apply(&e))
        })
        .collect();
    LinOp::new(m_out * s_out, m_out * s_in, move |jm: &CMat| {
        let mut out = CMat::zeros(m_out * s_in, m_out * s_in);
        for (i, j, img) in &images {
            let blk = choi_apply(jm, s_out, m_out, img);
            for a in 0..m_out {
                for b in 0..m_out {
                    out[(a * s_in + i, b * s_in + j)] = blk[(a, b)];
                }
            }
        }
        out
    })
}

/// `Tr_out J` for a Choi matrix on `out ⊗ in`.
pub(crate) fn tp_op(m_in: usize, m_out: usize) -> LinOp {
    LinOp::new(m_out * m_in, m_in, move |j: &CMat| partial_trace_mat(j, &[m_out, m_in], &[1]))
}

fn residual_of(op: &LinOp, j: &CMat, target: &CMat) -> f64 {
    frobenius(&(op.apply(j) - target))
}

/// Rescale a nearly trace-preserving PSD Choi matrix so that `Tr_out J = I`
/// holds to machine precision.
pub(crate) fn polish_tp(j: &CMat, m_in: usize, m_out: usize) -> CMat {
    let j = hermitian_part(j);
    let t = partial_trace_mat(&j, &[m_out, m_in], &[1]);
    let (vals, vecs) = crate::linalg::eigh(&t);
    if vals.iter().any(|&v| v <= 0.0) {
        return j;
    }
    // T^{-1/2}, applied on the input factor as (I ⊗ T^{-1/2 ᵀ}).
    let inv_sqrt = &vecs * CMat::from_diagonal(&nalgebra::DVector::from_iterator(
        vals.len(),
        vals.iter().map(|v| cr(1.0 / v.sqrt())),
    )) * vecs.adjoint();
    let k = kron(&identity(m_out), &inv_sqrt.transpose());
    hermitian_part(&(&k * j * k.adjoint()))
}

/// Search for a CPTP `M` with `M ∘ source = target`.
fn search(
    source: &QuantumChannel,
    target: &QuantumChannel,
    threshold: f64,
) -> Result<(Option<ChoiMatrix>, f64)> {
    if source.in_dim() != target.in_dim() {
        return Err(Error::DimensionMismatch("source and target inputs differ".into()));
    }
    crate::linalg::check_cap(source.out_dim() * target.out_dim())?;
    let m_in = source.out_dim();
    let m_out = target.out_dim();
    let comp = composition_op(source, m_out);
    let jt = target.to_choi().matrix().clone();

    // Exact feasibility first.
    let mut p = SdpProblem::new();
    let jb = p.add_block(m_in * m_out);
    p.add_matrix_equality(vec![(jb, comp.clone())], &jt)?;
    p.add_matrix_equality(vec![(jb, tp_op(m_in, m_out))], &identity(m_in))?;
    let sol = p.solve(DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    if sol.status == SdpStatus::Optimal {
        let j = polish_tp(sol.block(jb), m_in, m_out);
        let res = residual_of(&comp, &j, &jt);
        if res <= threshold {
            let choi = ChoiMatrix::new(m_in, m_out, j)?;
            return Ok((Some(choi), res));
        }
    }
    if !matches!(sol.status, SdpStatus::Optimal | SdpStatus::Infeasible | SdpStatus::MaxIter) {
        return Err(Error::Sdp { status: sol.status, context: "degrading map feasibility".into() });
    }

    // Best approximation: minimize Tr W with [[W, R], [R, I]] ⪰ 0, R = L(J) − J_target.
    let (map, res) = least_squares(&comp, &jt, m_in, m_out)?;
    Ok((if res <= threshold { Some(map) } else { None }, res))
}

fn least_squares(comp: &LinOp, jt: &CMat, m_in: usize, m_out: usize) -> Result<(ChoiMatrix, f64)> {
    let d = jt.nrows();
    let mut p = SdpProblem::new();
    let jb = p.add_block(m_in * m_out);
    let q = p.add_block(2 * d);
    p.add_matrix_equality(vec![(jb, tp_op(m_in, m_out))], &identity(m_in))?;
    p.add_matrix_equality(vec![(q, LinOp::diag_block(2 * d, d, d))], &identity(d))?;
    let off_herm = LinOp::new(2 * d, d, move |m: &CMat| {
        (m.view((d, 0), (d, d)) + m.view((0, d), (d, d))) * cr(0.5)
    });
    let off_anti = LinOp::new(2 * d, d, move |m: &CMat| {
        (m.view((d, 0), (d, d)) - m.view((0, d), (d, d))) * crate::linalg::c(0.0, -0.5)
    });
    p.add_matrix_equality(vec![(q, off_herm), (jb, comp.clone().neg())], &(-jt))?;
    p.add_matrix_equality(vec![(q, off_anti)], &CMat::zeros(d, d))?;
    let mut obj = CMat::zeros(2 * d, 2 * d);
    for i in 0..d {
        obj[(i, i)] = cr(1.0);
    }
    p.add_objective(q, obj)?;
    let sol = p.solve(DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    sol.require_optimal("degrading map least squares")?;
    let j = polish_tp(sol.block(jb), m_in, m_out);
    let j = project_cp(&j);
    let res = residual_of(comp, &j, jt);
    let _: BlockId = q;
    Ok((ChoiMatrix::unchecked(m_in, m_out, j), res))
}

pub(crate) fn project_cp(j: &CMat) -> CMat {
    let (vals, vecs) = crate::linalg::eigh(j);
    let d = nalgebra::DVector::from_iterator(vals.len(), vals.iter().map(|v| cr(v.max(0.0))));
    hermitian_part(&(&vecs * CMat::from_diagonal(&d) * vecs.adjoint()))
}

fn certify(
    c: &QuantumChannel,
    direction: Direction,
    threshold: f64,
) -> Result<DegradabilityCertificate> {
    if !(threshold > 0.0) {
        return Err(Error::ParameterOutOfRange(format!("threshold must be positive, got {threshold}")));
    }
    let comp = c.complementary();
    let (source, target, verdict) = match direction {
        Direction::EnvironmentToOutput => (&comp, c, Verdict::Antidegradable),
        Direction::OutputToEnvironment => (c, &comp, Verdict::Degradable),
    };
    let (map, residual) = search(source, target, threshold)?;
    let verdict = if map.is_some() { verdict } else { Verdict::NeitherProven };
    Ok(DegradabilityCertificate { verdict, map, residual, threshold, direction })
}

/// Looks for `M` with `N = M ∘ N_c`.
pub fn certify_antidegradable(c: &QuantumChannel, threshold: f64) -> Result<DegradabilityCertificate> {
    certify(c, Direction::EnvironmentToOutput, threshold)
}

/// Looks for `M` with `N_c = M ∘ N`.
pub fn certify_degradable(c: &QuantumChannel, threshold: f64) -> Result<DegradabilityCertificate> {
    certify(c, Direction::OutputToEnvironment, threshold)
}

/// Largest entrywise deviation between `M ∘ source` and `target` on the
/// matrix units, for the witness in `cert` and the channel it was issued for.
pub fn witness_deviation(c: &QuantumChannel, cert: &DegradabilityCertificate) -> Result<f64> {
    let Some(map) = &cert.map else {
        return Err(Error::Precondition("certificate carries no witness map".into()));
    };
    let comp = c.complementary();
    let (source, target) = match cert.direction {
        Direction::EnvironmentToOutput => (&comp, c),
        Direction::OutputToEnvironment => (c, &comp),
    };
    let mut worst = 0.0f64;
    for x in spanning_set(source.in_dim()) {
        let composed = map.apply(&source.apply(&x));
        worst = worst.max(max_abs(&(composed - target.apply(&x))));
    }
    Ok(worst)
}

/// The witness map as a channel, or an error when there is none.
pub fn witness_channel(cert: &DegradabilityCertificate) -> Result<QuantumChannel> {
    match cert.witness() {
        Some(r) => r,
        None => Err(Error::Precondition("certificate carries no witness map".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{amplitude_damping, erasure, identity_channel};
    use approx::assert_abs_diff_eq;

    #[test]
    fn half_erasure_is_both() {
        let c = erasure(0.5).unwrap();
        let a = certify_antidegradable(&c, DEFAULT_THRESHOLD).unwrap();
        let d = certify_degradable(&c, DEFAULT_THRESHOLD).unwrap();
        assert_eq!(a.verdict, Verdict::Antidegradable);
        assert_eq!(d.verdict, Verdict::Degradable);
        assert!(a.residual <= 1e-6);
        assert!(witness_deviation(&c, &a).unwrap() <= 1e-5);
        assert!(witness_deviation(&c, &d).unwrap() <= 1e-5);
    }

    #[test]
    fn half_erasure_witness_relabels_the_flag_on_block_diagonal_inputs() {
        // The environment holds the flag first; the output holds it last.
        let c = erasure(0.5).unwrap();
        let a = certify_antidegradable(&c, DEFAULT_THRESHOLD).unwrap();
        let m = a.map.as_ref().unwrap();
        let mut flag_e = CMat::zeros(3, 3);
        flag_e[(0, 0)] = cr(1.0);
        let out = m.apply(&flag_e);
        assert_abs_diff_eq!(out[(2, 2)].re, 1.0, epsilon = 1e-6);
        let mut q = CMat::zeros(3, 3);
        q[(1, 1)] = cr(0.3);
        q[(2, 2)] = cr(0.7);
        q[(1, 2)] = crate::linalg::c(0.1, 0.2);
        q[(2, 1)] = crate::linalg::c(0.1, -0.2);
        let out = m.apply(&q);
        assert!(max_abs(&(out.view((0, 0), (2, 2)) - q.view((1, 1), (2, 2)))) < 1e-6);
    }

    #[test]
    fn damping_regimes() {
        let strong = amplitude_damping(0.75).unwrap();
        let cert = certify_antidegradable(&strong, DEFAULT_THRESHOLD).unwrap();
        assert_eq!(cert.verdict, Verdict::Antidegradable);
        assert!(witness_deviation(&strong, &cert).unwrap() <= 1e-5);

        let weak = amplitude_damping(0.25).unwrap();
        let cert = certify_antidegradable(&weak, DEFAULT_THRESHOLD).unwrap();
        assert_eq!(cert.verdict, Verdict::NeitherProven);
        assert!(cert.residual > 1e-3);
        // Minimal Frobenius residual from an independent conic solver.
        assert_abs_diff_eq!(cert.residual, 0.8199552, epsilon = 1e-4);
        assert!(cert.map.is_none());
    }

    #[test]
    fn low_erasure_is_degradable_only() {
        let c = erasure(0.3).unwrap();
        let d = certify_degradable(&c, DEFAULT_THRESHOLD).unwrap();
        assert_eq!(d.verdict, Verdict::Degradable);
        assert!(witness_deviation(&c, &d).unwrap() <= 1e-5);
        let a = certify_antidegradable(&c, DEFAULT_THRESHOLD).unwrap();
        assert_eq!(a.verdict, Verdict::NeitherProven);
    }

    #[test]
    fn identity_is_degradable() {
        let c = identity_channel(2).unwrap();
        let d = certify_degradable(&c, DEFAULT_THRESHOLD).unwrap();
        assert_eq!(d.verdict, Verdict::Degradable);
        let a = certify_antidegradable(&c, DEFAULT_THRESHOLD).unwrap();
        assert_eq!(a.verdict, Verdict::NeitherProven);
    }

    #[test]
    fn witness_is_cptp() {
        let c = amplitude_damping(0.75).unwrap();
        let cert = certify_antidegradable(&c, DEFAULT_THRESHOLD).unwrap();
        let m = cert.map.unwrap();
        assert!(m.tp_deviation() <= 1e-7);
        assert!(m.min_eigenvalue() >= -1e-7);
    }

    #[test]
    fn rejects_bad_threshold() {
        let c = erasure(0.5).unwrap();
        assert!(certify_antidegradable(&c, 0.0).is_err());
    }

    #[test]
    fn certificate_json_has_verdict() {
        let c = erasure(0.5).unwrap();
        let v = certify_antidegradable(&c, DEFAULT_THRESHOLD).unwrap().to_json_value();
        assert_eq!(v["verdict"], "antidegradable");
        assert!(v["map"]["choi"].is_array());
    }
}
