use convlab::channels::{amplitude_damping, erasure, tensor, tensor_power, QuantumChannel};
use convlab::degradability::{
    certify_antidegradable, certify_degradable, witness_channel, witness_deviation, Verdict, DEFAULT_THRESHOLD,
};
use convlab::random;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// `X ↦ V N(U X U†) V†`.
fn rotated(c: &QuantumChannel, seed: u64) -> QuantumChannel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = random::unitary(&mut rng, c.in_dim());
    let v = random::unitary(&mut rng, c.out_dim());
    let kraus = c.kraus().iter().map(|k| &v * k * &u).collect();
    QuantumChannel::new(c.in_dim(), c.out_dim(), kraus).unwrap()
}

#[test]
fn witnesses_reproduce_targets() {
    let cases = [
        (erasure(0.5).unwrap(), true),
        (amplitude_damping(0.75).unwrap(), true),
        (erasure(0.3).unwrap(), false),
    ];
    for (c, anti) in cases {
        let cert = if anti { certify_antidegradable(&c, DEFAULT_THRESHOLD) } else { certify_degradable(&c, DEFAULT_THRESHOLD) }
            .unwrap();
        assert!(cert.is_certified());
        assert!(witness_deviation(&c, &cert).unwrap() <= 10.0 * DEFAULT_THRESHOLD);
    }
}

#[test]
fn verdicts_survive_basis_rotations() {
    let cases = [
        (erasure(0.5).unwrap(), Verdict::Antidegradable),
        (amplitude_damping(0.75).unwrap(), Verdict::Antidegradable),
        (amplitude_damping(0.25).unwrap(), Verdict::NeitherProven),
    ];
    for (seed, (c, verdict)) in cases.into_iter().enumerate() {
        let base = certify_antidegradable(&c, DEFAULT_THRESHOLD).unwrap();
        assert_eq!(base.verdict, verdict);
        for k in 0..3 {
            let r = rotated(&c, 10 * seed as u64 + k);
            let cert = certify_antidegradable(&r, DEFAULT_THRESHOLD).unwrap();
            assert_eq!(cert.verdict, verdict, "rotation {k}");
            assert!((cert.residual - base.residual).abs() <= 1e-5 || verdict != Verdict::NeitherProven);
        }
    }
    let c = rotated(&erasure(0.3).unwrap(), 99);
    assert_eq!(certify_degradable(&c, DEFAULT_THRESHOLD).unwrap().verdict, Verdict::Degradable);
}

#[test]
fn per_use_witness_degrades_tensor_power() {
    let c = erasure(0.5).unwrap();
    let cert = certify_antidegradable(&c, DEFAULT_THRESHOLD).unwrap();
    let w = witness_channel(&cert).unwrap();
    let two = tensor_power(&c, 2).unwrap();
    let composed = tensor(&w, &w).unwrap().compose(&two.complementary()).unwrap();
    assert!(composed.action_distance(&two).unwrap() <= 1e-5);
}
