use convlab::linalg::{fidelity, purified_distance, trace_distance, DensityState, SystemLayout};
use convlab::random;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn pair(seed: u64, d: usize, rank: usize) -> (DensityState, DensityState) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layout = SystemLayout::single("A", d).unwrap();
    (random::density(&mut rng, layout.clone(), rank), random::density(&mut rng, layout, rank))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn fuchs_van_de_graaf(seed in any::<u64>(), d in 2usize..6, rank in 1usize..6) {
        let (r, s) = pair(seed, d, rank);
        let f = fidelity(&r, &s).unwrap();
        let t = trace_distance(&r, &s).unwrap();
        prop_assert!(1.0 - f <= t + 1e-9);
        prop_assert!(t <= (1.0 - f * f).max(0.0).sqrt() + 1e-9);
    }

    #[test]
    fn distances_are_symmetric(seed in any::<u64>(), d in 2usize..6) {
        let (r, s) = pair(seed, d, d);
        prop_assert!((fidelity(&r, &s).unwrap() - fidelity(&s, &r).unwrap()).abs() <= 1e-12);
        prop_assert!((trace_distance(&r, &s).unwrap() - trace_distance(&s, &r).unwrap()).abs() <= 1e-12);
        prop_assert!((purified_distance(&r, &s).unwrap() - purified_distance(&s, &r).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn partial_trace_undoes_tensor(seed in any::<u64>(), da in 1usize..5, db in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random::density(&mut rng, SystemLayout::single("A", da).unwrap(), da);
        let b = random::density(&mut rng, SystemLayout::single("B", db).unwrap(), db);
        let back = a.tensor(&b).unwrap().partial_trace(&["A"]).unwrap();
        prop_assert!((back.matrix() - a.matrix()).iter().all(|z| z.norm() <= 1e-12));
    }
}

#[test]
fn purified_distance_dominates_trace_distance() {
    for seed in 0..200 {
        let (r, s) = pair(seed, 2 + (seed as usize % 4), 1 + (seed as usize % 3));
        assert!(trace_distance(&r, &s).unwrap() <= purified_distance(&r, &s).unwrap() + 1e-12, "seed {seed}");
    }
}
