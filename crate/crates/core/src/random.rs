//! Seeded random states, unitaries and channels.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::channels::QuantumChannel;
use crate::linalg::{cr, trace, CMat, CVec, DensityState, PureState, SystemLayout, C64};

pub fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * (0.5f64).sqrt()
}

pub fn ginibre<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| gaussian(rng))
}

/// Haar-random pure state.
pub fn pure<R: Rng + ?Sized>(rng: &mut R, layout: SystemLayout) -> PureState {
    let d = layout.dim();
    let v = CVec::from_fn(d, |_, _| gaussian(rng));
    PureState::normalized(layout, v).expect("gaussian vector is nonzero")
}

/// Random normalized state of the given rank (induced measure).
pub fn density<R: Rng + ?Sized>(rng: &mut R, layout: SystemLayout, rank: usize) -> DensityState {
    let d = layout.dim();
    let g = ginibre(rng, d, rank.max(1));
    let m = &g * g.adjoint();
    let t = trace(&m).re;
    DensityState::new(layout, m * cr(1.0 / t)).expect("Wishart matrix is a valid state")
}

/// Haar-random unitary via QR with phase correction.
pub fn unitary<R: Rng + ?Sized>(rng: &mut R, d: usize) -> CMat {
    isometry(rng, d, d)
}

/// Random isometry `V: C^cols → C^rows` (`rows ≥ cols`).
pub fn isometry<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMat {
    assert!(rows >= cols);
    let g = ginibre(rng, rows, cols);
    orthonormalize(&g)
}

/// Gram–Schmidt orthonormalization of the columns of `g` with the
/// convention that the triangular factor has positive diagonal.
pub fn orthonormalize(g: &CMat) -> CMat {
    let qr = g.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let mut q = q.columns(0, g.ncols()).into_owned();
    for k in 0..g.ncols() {
        let d = r[(k, k)];
        let n = d.norm();
        if n > 0.0 {
            let phase = d / cr(n);
            for i in 0..q.nrows() {
                q[(i, k)] *= phase;
            }
        }
    }
    q
}

/// Random channel with `kraus` operators from a random Stinespring isometry.
///
/// The Kraus count is raised to `⌈in_dim/out_dim⌉` when smaller, the least
/// number for which a trace-preserving map exists.
pub fn channel<R: Rng + ?Sized>(rng: &mut R, in_dim: usize, out_dim: usize, kraus: usize) -> QuantumChannel {
    let kraus = kraus.max(in_dim.div_ceil(out_dim));
    let v = isometry(rng, out_dim * kraus, in_dim);
    QuantumChannel::from_isometry(&v, out_dim, kraus).expect("isometry gives a channel")
}
