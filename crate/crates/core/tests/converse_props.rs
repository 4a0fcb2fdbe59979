use convlab::channels::{erasure, identity_channel};
use convlab::codes::{candidate, eval_private, ranked_code_search, CodeInstance, CodeShape, DecoderRule, EntGenCode, PrivateCode};
use convlab::converse::{
    private_bound, quantum_bound, region_curve, verify_private_chain, verify_quantum_chain, ChainReport,
};
use convlab::Error;
use proptest::prelude::*;
use std::f64::consts::FRAC_PI_2;

fn private_code(c: &convlab::channels::QuantumChannel, messages: usize, index: usize) -> PrivateCode {
    let shape = CodeShape::Private { messages, decoder: DecoderRule::Best };
    match candidate(c, 1, shape, 11, index).unwrap().code {
        CodeInstance::Private(p) => p,
        _ => unreachable!(),
    }
}

fn entgen_code(c: &convlab::channels::QuantumChannel, dim: usize) -> EntGenCode {
    let shape = CodeShape::EntGen { dim, decoder: DecoderRule::Best };
    match candidate(c, 1, shape, 11, 0).unwrap().code {
        CodeInstance::EntGen(e) => e,
        _ => unreachable!(),
    }
}

fn assert_pass(r: &ChainReport) {
    assert!(r.pass, "{}", r.to_json());
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn private_bound_is_finite_and_monotone(a in 0.0f64..1.5, b in 0.0f64..1.5, da in 0.0f64..0.05) {
        prop_assume!(a + b + da < FRAC_PI_2 - 1e-6);
        let (e, d) = (a.sin(), b.sin());
        let v = private_bound(e, d).unwrap();
        prop_assert!(v.is_finite() && v >= 0.0);
        prop_assert!(private_bound((a + da).sin(), d).unwrap() >= v - 1e-12);
        prop_assert!(private_bound(e, (b + da).sin()).unwrap() >= v - 1e-12);
    }

    #[test]
    fn bound_blows_up_at_the_boundary(a in 0.0f64..(FRAC_PI_2 - 1e-3)) {
        let b = FRAC_PI_2 - 1e-3 - a;
        prop_assert!(private_bound(a.sin(), b.sin()).unwrap() > 15.0);
    }

    #[test]
    fn quantum_bound_is_half_the_symmetric_private_bound(a in 0.0f64..(std::f64::consts::FRAC_PI_4 - 1e-3)) {
        let e = a.sin();
        let q = quantum_bound(e).unwrap();
        prop_assert!((q - 0.5 * private_bound(e, e).unwrap()).abs() <= 1e-12);
    }
}

#[test]
fn half_private_bound_on_fifty_points() {
    for k in 0..50 {
        let e = 0.7 * k as f64 / 49.0;
        let q = quantum_bound(e).unwrap();
        assert!((q - 0.5 * private_bound(e, e).unwrap()).abs() <= 1e-12, "eps = {e}");
    }
}

#[test]
fn region_curve_is_symmetric() {
    let curve = region_curve(0.01).unwrap();
    assert_eq!(curve.len(), 101);
    for &(e, d) in &curve {
        assert!(((1.0 - d * d).max(0.0).sqrt() - e).abs() <= 1e-12);
    }
    assert_eq!(curve[0], (0.0, 1.0));
    assert_eq!(curve[100], (1.0, 0.0));
}

#[test]
fn private_chain_holds_on_half_erasure() {
    let c = erasure(0.5).unwrap();
    let shape = CodeShape::Private { messages: 2, decoder: DecoderRule::Best };
    for cand in ranked_code_search(&c, 1, shape, 20, 3).unwrap().iter().take(3) {
        let CodeInstance::Private(code) = &cand.code else { unreachable!() };
        assert_pass(&verify_private_chain(&c, code).unwrap());
    }
}

#[test]
fn single_message_chain_holds() {
    let c = erasure(0.5).unwrap();
    assert_pass(&verify_private_chain(&c, &private_code(&c, 1, 0)).unwrap());
}

#[test]
fn chains_need_antidegradability() {
    let c = erasure(0.3).unwrap();
    assert!(matches!(verify_private_chain(&c, &private_code(&c, 2, 0)), Err(Error::Precondition(_))));
    let id = identity_channel(2).unwrap();
    assert!(matches!(verify_quantum_chain(&id, &entgen_code(&id, 2)), Err(Error::Precondition(_))));
}

#[test]
fn quantum_chain_holds_with_optimal_decoder() {
    let c = erasure(0.5).unwrap();
    let code = entgen_code(&c, 2);
    let eps = convlab::codes::eval_entgen(&c, &code).unwrap().eps;
    assert!(eps >= 0.5, "eps = {eps}");
    assert_pass(&verify_quantum_chain(&c, &code).unwrap());
}

#[test]
fn trivial_entanglement_chain_holds() {
    let c = erasure(0.5).unwrap();
    assert_pass(&verify_quantum_chain(&c, &entgen_code(&c, 1)).unwrap());
}

#[test]
fn chains_are_reproducible() {
    let c = erasure(0.5).unwrap();
    let code = private_code(&c, 2, 1);
    let a = verify_private_chain(&c, &code).unwrap();
    let b = verify_private_chain(&c, &code).unwrap();
    for (x, y) in a.steps.iter().zip(&b.steps) {
        assert!((x.lhs - y.lhs).abs() <= 2e-4 && (x.rhs - y.rhs).abs() <= 2e-4);
    }
}

#[test]
fn padding_does_not_change_the_chain() {
    let c = erasure(0.5).unwrap();
    let code = private_code(&c, 2, 2);
    let one = eval_private(&c, &code).unwrap();
    let padded = code.padded(1, c.out_dim()).unwrap();
    let two = eval_private(&c, &padded).unwrap();
    assert!((one.eps - two.eps).abs() <= 1e-9);
    assert!((one.delta.unwrap() - two.delta.unwrap()).abs() <= 1e-5);
    assert_pass(&verify_private_chain(&c, &padded).unwrap());
}
