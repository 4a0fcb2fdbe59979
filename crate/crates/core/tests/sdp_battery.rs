//! Closed-form benchmark problems for the SDP solver.

use convlab::linalg::{cr, eigvalsh, fidelity_mat, identity, trace_norm_herm, CMat, PureState};
use convlab::random;
use convlab::sdp::{fidelity_by_sdp, LinOp, SdpProblem, SdpSolution, Sense};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-6;

fn hermitian(seed: u64, d: usize) -> CMat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = random::ginibre(&mut rng, d, d);
    (&g + g.adjoint()) * cr(0.5)
}

fn solved(p: &SdpProblem) -> SdpSolution {
    let sol = p.solve_default().unwrap();
    assert!(sol.is_optimal(), "status {:?}", sol.status);
    // Weak duality for a minimization.
    assert!(sol.objective >= sol.dual_objective - TOL * (1.0 + sol.objective.abs()));
    sol
}

/// `min ⟨c, X⟩` over density matrices.
fn min_over_states(c: &CMat) -> f64 {
    let d = c.nrows();
    let mut p = SdpProblem::new();
    let x = p.add_block(d);
    p.add_objective(x, c.clone()).unwrap();
    p.add_constraint(vec![(x, identity(d))], Sense::Eq, 1.0).unwrap();
    solved(&p).objective
}

fn min_entropy_value(d: usize) -> f64 {
    let rho = PureState::maximally_entangled("A", "B", d).unwrap().to_density();
    let mut p = SdpProblem::new();
    let sigma = p.add_block(d);
    let slack = p.add_block(d * d);
    p.add_objective(sigma, identity(d)).unwrap();
    p.add_matrix_equality(
        vec![(sigma, LinOp::identity_tensor(d, d)), (slack, LinOp::identity(d * d).neg())],
        rho.matrix(),
    )
    .unwrap();
    solved(&p).objective
}

#[test]
fn smallest_eigenvalue() {
    for (seed, d) in [(1, 4), (2, 8), (3, 16)] {
        let h = hermitian(seed, d);
        let exact = eigvalsh(&h)[0];
        let got = min_over_states(&h);
        assert!((got - exact).abs() <= TOL, "d = {d}: {got} vs {exact}");
    }
}

#[test]
fn largest_eigenvalue_dim_32() {
    let h = hermitian(4, 32);
    let exact = *eigvalsh(&h).last().unwrap();
    let got = -min_over_states(&(-&h));
    assert!((got - exact).abs() <= TOL, "{got} vs {exact}");
}

#[test]
fn trace_norm_by_splitting() {
    let h = hermitian(5, 6);
    let mut p = SdpProblem::new();
    let pos = p.add_block(6);
    let neg = p.add_block(6);
    p.add_objective(pos, identity(6)).unwrap();
    p.add_objective(neg, identity(6)).unwrap();
    p.add_matrix_equality(vec![(pos, LinOp::identity(6)), (neg, LinOp::identity(6).neg())], &h).unwrap();
    let got = solved(&p).objective;
    assert!((got - trace_norm_herm(&h)).abs() <= TOL);
}

#[test]
fn maximally_entangled_min_entropy() {
    for d in [2, 3, 4] {
        let got = min_entropy_value(d);
        assert!((got - d as f64).abs() <= TOL, "d = {d}: {got}");
    }
}

#[test]
fn unit_diagonal_maximizes_entry_sum() {
    let d = 5;
    let mut p = SdpProblem::new();
    let x = p.add_block(d);
    p.add_objective(x, -CMat::from_element(d, d, cr(1.0))).unwrap();
    for i in 0..d {
        let mut e = CMat::zeros(d, d);
        e[(i, i)] = cr(1.0);
        p.add_constraint(vec![(x, e)], Sense::Eq, 1.0).unwrap();
    }
    let got = solved(&p).objective;
    assert!((got + (d * d) as f64).abs() <= TOL);
}

#[test]
fn qubit_fidelity() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let layout = convlab::SystemLayout::single("A", 2).unwrap();
    let r = random::density(&mut rng, layout.clone(), 2);
    let s = random::density(&mut rng, layout, 2);
    let got = fidelity_by_sdp(r.matrix(), s.matrix()).unwrap();
    assert!((got - fidelity_mat(r.matrix(), s.matrix())).abs() <= TOL);
}

#[test]
fn resolving_is_bit_identical() {
    let h = hermitian(7, 8);
    let mut p = SdpProblem::new();
    let x = p.add_block(8);
    p.add_objective(x, h).unwrap();
    p.add_constraint(vec![(x, identity(8))], Sense::Eq, 1.0).unwrap();
    let a = p.solve_default().unwrap();
    let b = p.solve_default().unwrap();
    assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    assert_eq!(a.iterations, b.iterations);
    assert_eq!(a.block(x), b.block(x));
}
