//! Converse bounds for anti-degradable channels and numerical checks of the
//! inequality chains behind them.

use serde::Serialize;

use crate::channels::QuantumChannel;
use crate::codes::{as_strs, env_labels, eval_entgen, eval_private, output_labels, EntGenCode, PrivateCode, CodePerformance, DECODED, GUESS, MESSAGE, REFERENCE};
use crate::degradability::{certify_antidegradable, witness_channel, DegradabilityCertificate, Verdict, DEFAULT_THRESHOLD};
use crate::entropies::{h_max_smooth, h_max_smooth_direct, h_min_smooth, SLACK_TOL};
use crate::error::{Error, Result};
use crate::linalg::{max_abs, DensityState};

/// Slack allowed on every chain inequality.
pub const CHAIN_TOL: f64 = SLACK_TOL;
/// Allowed gap in the two-sided duality step.
pub const DUALITY_TOL: f64 = 2e-4;
/// Largest entrywise gap tolerated between `σ^{X Bⁿ}` and the state obtained
/// by pushing `σ^{X Eⁿ}` through the degrading map.
pub const DEGRADING_TOL: f64 = 1e-5;
/// Seed of the random purification used by the independent max-entropy.
pub const DIRECT_SEED: u64 = 0x5eed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConverseParams {
    pub eps: f64,
    pub delta: Option<f64>,
    pub alpha: f64,
    pub beta: Option<f64>,
}

impl ConverseParams {
    pub fn new(eps: f64, delta: Option<f64>) -> Result<Self> {
        check_unit("eps", eps)?;
        if let Some(d) = delta {
            check_unit("delta", d)?;
        }
        Ok(ConverseParams { eps, delta, alpha: eps.asin(), beta: delta.map(f64::asin) })
    }
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::ParameterOutOfRange(format!("{name} must lie in [0, 1], got {v}")));
    }
    Ok(())
}

/// `δ√(1−ε²) + ε√(1−δ²) < 1`, evaluated literally. Inputs outside `[0, 1]`
/// are rejected (`false`).
pub fn region_check(eps: f64, delta: f64) -> bool {
    if !(0.0..=1.0).contains(&eps) || !(0.0..=1.0).contains(&delta) {
        return false;
    }
    delta * (1.0 - eps * eps).sqrt() + eps * (1.0 - delta * delta).sqrt() < 1.0
}

/// `cos(α + β) = √(1−ε²)√(1−δ²) − εδ`.
fn cos_sum(eps: f64, delta: f64) -> f64 {
    (1.0 - eps * eps).sqrt() * (1.0 - delta * delta).sqrt() - eps * delta
}

/// `α + β < π/2`: the part of the region where the bound is finite.
///
/// The literal inequality of [`region_check`] also holds past the curve,
/// where `α + β > π/2` and `sin(α + β)` decreases again.
pub fn in_region(eps: f64, delta: f64) -> bool {
    region_check(eps, delta) && cos_sum(eps, delta) > 0.0
}

/// `2 log₂(1 / cos(α + β))` bits.
pub fn private_bound(eps: f64, delta: f64) -> Result<f64> {
    check_unit("eps", eps)?;
    check_unit("delta", delta)?;
    if !in_region(eps, delta) {
        return Err(Error::Domain(format!(
            "(eps, delta) = ({eps}, {delta}) is outside the region α + β < π/2; the bound diverges"
        )));
    }
    Ok(-2.0 * cos_sum(eps, delta).log2())
}

/// `log₂(1 / cos(2α))` bits, for `ε < 1/√2`.
pub fn quantum_bound(eps: f64) -> Result<f64> {
    check_unit("eps", eps)?;
    // cos 2α = 1 − 2ε²
    let c = 1.0 - 2.0 * eps * eps;
    if !(c > 0.0) {
        return Err(Error::Domain(format!("eps = {eps} ≥ 1/√2; the bound diverges")));
    }
    Ok(-c.log2())
}

/// Samples `(ε, δ_max(ε))` of the boundary `sin(α + β) = 1` on the grid
/// `ε = 0, step, 2·step, …` up to 1. The boundary itself is excluded from
/// the region, so `δ_max` is a supremum.
pub fn region_curve(step: f64) -> Result<Vec<(f64, f64)>> {
    if !(step > 0.0 && step < 1.0) {
        return Err(Error::ParameterOutOfRange(format!("grid step must lie in (0, 1), got {step}")));
    }
    let count = (1.0 / step + 1e-9).floor() as usize + 1;
    Ok((0..count)
        .map(|k| {
            let eps = (k as f64 * step).min(1.0);
            (eps, (1.0 - eps * eps).max(0.0).sqrt())
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainStep {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs − lhs`.
    pub slack: f64,
    pub pass: bool,
}

impl ChainStep {
    /// `lhs ≤ rhs` up to `tol`.
    pub fn at_most(name: &str, lhs: f64, rhs: f64, tol: f64) -> Self {
        let slack = rhs - lhs;
        ChainStep { name: name.into(), lhs, rhs, slack, pass: slack >= -tol }
    }

    /// `lhs = rhs` up to `tol` in either direction.
    pub fn equal(name: &str, lhs: f64, rhs: f64, tol: f64) -> Self {
        let slack = rhs - lhs;
        ChainStep { name: name.into(), lhs, rhs, slack, pass: slack.abs() <= tol }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainReport {
    pub steps: Vec<ChainStep>,
    pub pass: bool,
    pub tol: f64,
}

impl ChainReport {
    pub fn new(steps: Vec<ChainStep>) -> Self {
        let pass = steps.iter().all(|s| s.pass);
        ChainReport { steps, pass, tol: CHAIN_TOL }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// `H^{sin α}_min(A|B) ≤ H^{sin β}_max(A|B) + log₂(1/cos²(α+β))`.
pub fn verify_lemma1(s: &DensityState, a: &[&str], b: &[&str], alpha: f64, beta: f64) -> Result<ChainReport> {
    if !(alpha >= 0.0 && beta >= 0.0 && alpha + beta < std::f64::consts::FRAC_PI_2) {
        return Err(Error::Domain(format!("need α, β ≥ 0 and α + β < π/2, got α = {alpha}, β = {beta}")));
    }
    s.require_normalized()?;
    let lhs = h_min_smooth(s, a, b, alpha.sin())?;
    let c = (alpha + beta).cos();
    let rhs = h_max_smooth(s, a, b, beta.sin())? - 2.0 * c.log2();
    Ok(ChainReport::new(vec![ChainStep::at_most("hmin_le_hmax_plus_log", lhs, rhs, CHAIN_TOL)]))
}

/// Anti-degradability certificate, or a precondition error.
pub fn require_antidegradable(c: &QuantumChannel) -> Result<DegradabilityCertificate> {
    let cert = certify_antidegradable(c, DEFAULT_THRESHOLD)?;
    if cert.verdict != Verdict::Antidegradable {
        return Err(Error::Precondition(format!(
            "channel is not certified anti-degradable (residual {:.3e})",
            cert.residual
        )));
    }
    Ok(cert)
}

/// Pushes every `E_k` of `s` through the degrading map, producing `B_k`.
fn degrade(s: &DensityState, cert: &DegradabilityCertificate, n: usize) -> Result<DensityState> {
    let w = witness_channel(cert)?;
    let (b_l, e_l) = (output_labels(n), env_labels(n));
    let mut out = s.clone();
    for k in 0..n {
        out = w.apply_to(&out, &e_l[k], &b_l[k])?;
    }
    Ok(out)
}

/// Degraded state of `first ⊗ Eⁿ`, checked against the true `first ⊗ Bⁿ`
/// marginal of `sigma`.
fn degraded_marginal(sigma: &DensityState, first: &str, cert: &DegradabilityCertificate, n: usize) -> Result<DensityState> {
    let mut keep_e = vec![first.to_string()];
    keep_e.extend(env_labels(n));
    let mut keep_b = vec![first.to_string()];
    keep_b.extend(output_labels(n));
    let tau = degrade(&sigma.partial_trace(&as_strs(&keep_e))?.permute(&as_strs(&keep_e))?, cert, n)?;
    let truth = sigma.partial_trace(&as_strs(&keep_b))?.permute(&as_strs(&keep_b))?;
    let gap = max_abs(&(tau.matrix() - truth.matrix()));
    if gap > DEGRADING_TOL {
        return Err(Error::Precondition(format!("degrading map reproduces the output only to {gap:.3e}")));
    }
    Ok(tau)
}

pub fn verify_private_chain(c: &QuantumChannel, code: &PrivateCode) -> Result<ChainReport> {
    let cert = require_antidegradable(c)?;
    let perf = eval_private(c, code)?;
    verify_private_chain_with(code, &cert, &perf)
}

/// The five steps of the private-capacity chain, for a code already
/// evaluated by [`eval_private`].
pub fn verify_private_chain_with(
    code: &PrivateCode,
    cert: &DegradabilityCertificate,
    perf: &CodePerformance,
) -> Result<ChainReport> {
    if cert.verdict != Verdict::Antidegradable {
        return Err(Error::Precondition("certificate does not show anti-degradability".into()));
    }
    let n = code.n();
    let eps = perf.eps;
    let delta = perf
        .delta
        .ok_or_else(|| Error::Precondition("performance carries no privacy value".into()))?;
    let bound = private_bound(eps, delta)?;
    let log_m = (code.messages() as f64).log2();
    let (b_l, e_l) = (output_labels(n), env_labels(n));
    let (b, e) = (as_strs(&b_l), as_strs(&e_l));

    let hmin_e = h_min_smooth(&perf.sigma, &[MESSAGE], &e, delta)?;
    let tau = degraded_marginal(&perf.sigma, MESSAGE, cert, n)?;
    let hmin_b = h_min_smooth(&tau, &[MESSAGE], &b, delta)?;
    let hmax_x = h_max_smooth(&perf.xi, &[MESSAGE], &[GUESS], eps)?;
    let hmax_b = h_max_smooth(&perf.sigma, &[MESSAGE], &b, eps)?;

    Ok(ChainReport::new(vec![
        ChainStep::at_most("log_m_le_hmin_env", log_m, hmin_e, CHAIN_TOL),
        ChainStep::at_most("hmin_env_le_hmin_output", hmin_e, hmin_b, CHAIN_TOL),
        ChainStep::at_most("zero_le_neg_hmax_decoded", 0.0, -hmax_x, CHAIN_TOL),
        ChainStep::at_most("neg_hmax_decoded_le_neg_hmax_output", -hmax_x, -hmax_b, CHAIN_TOL),
        ChainStep::at_most("log_m_le_private_bound", log_m, bound, CHAIN_TOL),
    ]))
}

pub fn verify_quantum_chain(c: &QuantumChannel, code: &EntGenCode) -> Result<ChainReport> {
    let cert = require_antidegradable(c)?;
    let perf = eval_entgen(c, code)?;
    verify_quantum_chain_with(code, &cert, &perf)
}

/// The four steps of the quantum-capacity chain, for a code already
/// evaluated by [`eval_entgen`].
pub fn verify_quantum_chain_with(
    code: &EntGenCode,
    cert: &DegradabilityCertificate,
    perf: &CodePerformance,
) -> Result<ChainReport> {
    if cert.verdict != Verdict::Antidegradable {
        return Err(Error::Precondition("certificate does not show anti-degradability".into()));
    }
    let n = code.n();
    let eps = perf.eps;
    let bound = quantum_bound(eps)?;
    let log_n = (code.dim() as f64).log2();
    let (b_l, e_l) = (output_labels(n), env_labels(n));
    let (b, e) = (as_strs(&b_l), as_strs(&e_l));

    let hmax_a = h_max_smooth(&perf.xi, &[REFERENCE], &[DECODED], eps)?;
    let hmax_b = h_max_smooth_direct(&perf.sigma, &[REFERENCE], &b, eps, DIRECT_SEED)?;
    let hmin_e = h_min_smooth(&perf.sigma, &[REFERENCE], &e, eps)?;
    let tau = degraded_marginal(&perf.sigma, REFERENCE, cert, n)?;
    let hmin_b = h_min_smooth(&tau, &[REFERENCE], &b, eps)?;

    Ok(ChainReport::new(vec![
        ChainStep::at_most("log_n_le_neg_hmax_decoded", log_n, -hmax_a, CHAIN_TOL),
        ChainStep::equal("neg_hmax_output_eq_hmin_env", -hmax_b, hmin_e, DUALITY_TOL),
        ChainStep::at_most("hmin_env_le_hmin_output", hmin_e, hmin_b, CHAIN_TOL),
        ChainStep::at_most("two_log_n_le_twice_quantum_bound", 2.0 * log_n, 2.0 * bound, CHAIN_TOL),
    ]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2};

    #[test]
    fn region_examples() {
        assert!(region_check(0.8, 0.8));
        assert!(!region_check(FRAC_1_SQRT_2, FRAC_1_SQRT_2));
        assert!(!region_check(1.0, 0.0));
        assert!(!region_check(0.0, 1.0));
        assert!(!region_check(-0.1, 0.2));
    }

    #[test]
    fn literal_region_extends_past_the_curve() {
        assert!(region_check(0.99, 0.99));
        assert!(!in_region(0.99, 0.99));
        assert!(private_bound(0.99, 0.99).is_err());
    }

    #[test]
    fn bound_examples() {
        assert_eq!(private_bound(0.0, 0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(private_bound(0.6, 0.6).unwrap(), 3.6730025354342406, epsilon = 1e-12);
        assert_abs_diff_eq!(private_bound(0.99, 0.1).unwrap(), 9.191_222_512_935_294, epsilon = 1e-9);
        assert_eq!(quantum_bound(0.0).unwrap(), 0.0);
        assert_eq!(quantum_bound(0.5).unwrap(), 1.0);
        assert!(matches!(quantum_bound(FRAC_1_SQRT_2 + 1e-9), Err(Error::Domain(_))));
        assert!(matches!(private_bound(0.8, 0.8), Err(Error::Domain(_))));
    }

    #[test]
    fn curve_examples() {
        let c = region_curve(0.5).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c[0], (0.0, 1.0));
        assert_abs_diff_eq!(c[1].1, 0.75f64.sqrt(), epsilon = 1e-15);
        let c = region_curve(0.01).unwrap();
        assert_eq!(c.len(), 101);
        assert!(region_curve(0.0).is_err());
        assert!(region_curve(1.0).is_err());
    }

    #[test]
    fn params_derived_fields() {
        let p = ConverseParams::new(0.6, Some(0.3)).unwrap();
        assert!((p.alpha.sin() - 0.6).abs() < 1e-15);
        assert!((p.beta.unwrap().sin() - 0.3).abs() < 1e-15);
        assert!(ConverseParams::new(1.2, None).is_err());
    }

    #[test]
    fn smoothing_inequality_domain() {
        let s = crate::linalg::PureState::maximally_entangled("A", "B", 2).unwrap().to_density();
        assert!(matches!(verify_lemma1(&s, &["A"], &["B"], FRAC_PI_2 / 2.0, FRAC_PI_2 / 2.0), Err(Error::Domain(_))));
    }

    #[test]
    fn report_json_shape() {
        let r = ChainReport::new(vec![ChainStep::at_most("x", 1.0, 2.0, CHAIN_TOL)]);
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["pass"], true);
        assert_eq!(v["tol"], 1e-4);
        assert_eq!(v["steps"][0]["slack"], 1.0);
        assert_eq!(v["steps"][0].as_object().unwrap().len(), 5);
    }
}
