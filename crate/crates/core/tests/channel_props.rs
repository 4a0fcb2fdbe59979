use convlab::channels::{make_channel, ChannelKind, QuantumChannel};
use convlab::entropies::entropy_of_matrix;
use convlab::linalg::{identity, max_abs, projector, CMat, CVec};
use convlab::random;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tp_defect(c: &QuantumChannel) -> f64 {
    let mut sum = CMat::zeros(c.in_dim(), c.in_dim());
    for k in c.kraus() {
        sum += k.adjoint() * k;
    }
    max_abs(&(sum - identity(c.in_dim())))
}

fn zoo() -> impl Strategy<Value = ChannelKind> {
    prop_oneof![
        (0.0..=1.0f64, 2usize..5).prop_map(|(p, d)| ChannelKind::Erasure { p, d }),
        (0.0..=1.0f64, 2usize..4).prop_map(|(p, d)| ChannelKind::Depolarizing { p, d }),
        (0.0..=1.0f64).prop_map(|g| ChannelKind::AmplitudeDamping { g }),
        (1usize..5).prop_map(|d| ChannelKind::Identity { d }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn zoo_choi_is_psd_and_tp(kind in zoo()) {
        let c = make_channel(kind).unwrap();
        prop_assert!(tp_defect(&c) <= 1e-9);
        let j = c.to_choi();
        prop_assert!(j.min_eigenvalue() >= -1e-9);
        prop_assert!(j.tp_deviation() <= 1e-9);
    }

    #[test]
    fn random_channels_are_tp(seed in any::<u64>(), din in 1usize..4, dout in 1usize..4, k in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = random::channel(&mut rng, din, dout, k);
        prop_assert!(tp_defect(&c) <= 1e-9);
        prop_assert!(tp_defect(&c.complementary()) <= 1e-9);
    }

    /// On a pure input the output and environment share their nonzero
    /// spectrum, so the doubly complementary channel has the environment's
    /// output entropy.
    #[test]
    fn double_complementary_entropy(seed in any::<u64>(), kind in zoo()) {
        let c = make_channel(kind).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = CVec::from_fn(c.in_dim(), |_, _| random::gaussian(&mut rng));
        let rho = projector(&v.normalize());
        let cc = c.complementary().complementary();
        let h_env = entropy_of_matrix(&c.complementary().apply(&rho));
        let h_cc_env = entropy_of_matrix(&cc.complementary().apply(&rho));
        prop_assert!((h_env - entropy_of_matrix(&cc.apply(&rho))).abs() <= 1e-8);
        prop_assert!((h_cc_env - entropy_of_matrix(&c.apply(&rho))).abs() <= 1e-8);
    }
}
