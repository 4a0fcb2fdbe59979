//! Dense complex Hermitian linear algebra on labeled tensor-product spaces.
//!
//! Every matrix function (square roots, absolute values, logarithms) goes
//! through a single Hermitian eigendecomposition kernel, [`eigh`]. States are
//! validated on construction and rejected, never repaired, when they fail the
//! positivity or trace tolerances.

use std::collections::HashSet;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Smallest eigenvalue tolerated in a positive semidefinite state.
pub const PSD_TOL: f64 = 1e-10;
/// Allowed deviation between the trace and the stated normalization.
pub const TRACE_TOL: f64 = 1e-10;
/// Allowed deviation from unit norm for pure states.
pub const NORM_TOL: f64 = 1e-12;
/// Allowed anti-Hermitian part, relative to the matrix scale.
pub const HERMITIAN_TOL: f64 = 1e-10;

const DEFAULT_MAX_DIM: usize = 256;

/// Cap on the total Hilbert-space dimension of any state or channel.
///
/// Defaults to 256 and can be overridden with the `CONVLAB_MAX_DIM`
/// environment variable (read once per process).
pub fn max_dim() -> usize {
    static CAP: OnceLock<usize> = OnceLock::new();
    *CAP.get_or_init(|| {
        std::env::var("CONVLAB_MAX_DIM")
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|&v| v > 0)
            .unwrap_or(DEFAULT_MAX_DIM)
    })
}

pub(crate) fn check_cap(dim: usize) -> Result<()> {
    let cap = max_dim();
    if dim > cap {
        Err(Error::DimensionCap { dim, cap })
    } else {
        Ok(())
    }
}

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn cr(re: f64) -> C64 {
    C64::new(re, 0.0)
}

// ---------------------------------------------------------------------------
// Kernels
// ---------------------------------------------------------------------------

/// Hermitian eigendecomposition with eigenvalues sorted ascending.
///
/// Only the Hermitian part of `m` is used.
pub fn eigh(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "eigh: matrix must be square");
    if n == 0 {
        return (Vec::new(), CMat::zeros(0, 0));
    }
    let herm = hermitian_part(m);
    let eig = herm.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMat::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

/// Eigenvalues only, ascending.
pub fn eigvalsh(m: &CMat) -> Vec<f64> {
    let n = m.nrows();
    if n == 0 {
        return Vec::new();
    }
    let mut v: Vec<f64> = hermitian_part(m).symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * cr(0.5)
}

/// Apply a real function to the spectrum of a Hermitian matrix.
pub fn herm_fn(m: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let (vals, vecs) = eigh(m);
    let mut scaled = vecs.clone();
    for (k, &l) in vals.iter().enumerate() {
        let fl = cr(f(l));
        for r in 0..scaled.nrows() {
            scaled[(r, k)] *= fl;
        }
    }
    scaled * vecs.adjoint()
}

/// Square root of a PSD matrix; eigenvalues are clipped at zero first.
pub fn sqrtm_psd(m: &CMat) -> CMat {
    herm_fn(m, |l| l.max(0.0).sqrt())
}

/// Trace norm of a Hermitian matrix.
pub fn trace_norm_herm(m: &CMat) -> f64 {
    eigvalsh(m).iter().map(|l| l.abs()).sum()
}

pub fn trace(m: &CMat) -> C64 {
    m.diagonal().iter().copied().sum()
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn identity(d: usize) -> CMat {
    CMat::identity(d, d)
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Projector onto a vector, `|v><v|`.
pub fn projector(v: &CVec) -> CMat {
    v * v.adjoint()
}

/// Computational basis vector `|i>` in dimension `d`.
pub fn ket(d: usize, i: usize) -> CVec {
    let mut v = CVec::zeros(d);
    v[i] = cr(1.0);
    v
}

fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * dims[k + 1];
    }
    s
}

/// Offsets into the full index space for every joint index of the chosen
/// subsystems, enumerated in row-major order over `which`.
fn offsets(dims: &[usize], which: &[usize]) -> Vec<usize> {
    let st = strides(dims);
    let mut out = vec![0usize];
    for &k in which {
        let mut next = Vec::with_capacity(out.len() * dims[k]);
        for &o in &out {
            for x in 0..dims[k] {
                next.push(o + x * st[k]);
            }
        }
        out = next;
    }
    out
}

/// Partial trace of a matrix over every subsystem not listed in `keep`.
/// `keep` holds subsystem indices in increasing order.
pub fn partial_trace_mat(m: &CMat, dims: &[usize], keep: &[usize]) -> CMat {
    let traced: Vec<usize> = (0..dims.len()).filter(|k| !keep.contains(k)).collect();
    let ok = offsets(dims, keep);
    let ot = offsets(dims, &traced);
    let dk = ok.len();
    let mut out = CMat::zeros(dk, dk);
    for i in 0..dk {
        for j in 0..dk {
            let mut acc = C64::new(0.0, 0.0);
            for &t in &ot {
                acc += m[(ok[i] + t, ok[j] + t)];
            }
            out[(i, j)] = acc;
        }
    }
    out
}

/// Index map for reordering subsystems: `map[new] = old`, where the new
/// ordering lists old subsystem indices in `order`.
pub fn permutation_map(dims: &[usize], order: &[usize]) -> Vec<usize> {
    offsets(dims, order)
}

pub fn permute_mat(m: &CMat, dims: &[usize], order: &[usize]) -> CMat {
    let map = permutation_map(dims, order);
    let n = map.len();
    CMat::from_fn(n, n, |a, b| m[(map[a], map[b])])
}

pub fn permute_vec(v: &CVec, dims: &[usize], order: &[usize]) -> CVec {
    let map = permutation_map(dims, order);
    CVec::from_fn(map.len(), |a, _| v[map[a]])
}

// ---------------------------------------------------------------------------
// Layouts and states
// ---------------------------------------------------------------------------

/// Ordered list of labeled subsystems. Order is significant: it fixes the
/// Kronecker ordering of every matrix defined on the layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(String, usize)>", into = "Vec<(String, usize)>")]
pub struct SystemLayout {
    subsystems: Vec<(String, usize)>,
}

impl TryFrom<Vec<(String, usize)>> for SystemLayout {
    type Error = Error;
    fn try_from(v: Vec<(String, usize)>) -> Result<Self> {
        SystemLayout::new(v)
    }
}

impl From<SystemLayout> for Vec<(String, usize)> {
    fn from(l: SystemLayout) -> Self {
        l.subsystems
    }
}

impl SystemLayout {
    pub fn new<S: Into<String>>(subsystems: Vec<(S, usize)>) -> Result<Self> {
        let subsystems: Vec<(String, usize)> =
            subsystems.into_iter().map(|(l, d)| (l.into(), d)).collect();
        let mut seen = HashSet::new();
        for (label, d) in &subsystems {
            if label.is_empty() {
                return Err(Error::InvalidLayout("empty subsystem label".into()));
            }
            if *d == 0 {
                return Err(Error::InvalidLayout(format!("subsystem `{label}` has dimension 0")));
            }
            if !seen.insert(label.clone()) {
                return Err(Error::LabelCollision(label.clone()));
            }
        }
        let layout = SystemLayout { subsystems };
        check_cap(layout.dim())?;
        Ok(layout)
    }

    /// Single-subsystem layout.
    pub fn single(label: &str, dim: usize) -> Result<Self> {
        Self::new(vec![(label, dim)])
    }

    pub fn dim(&self) -> usize {
        self.subsystems.iter().map(|(_, d)| d).product()
    }

    pub fn len(&self) -> usize {
        self.subsystems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsystems.is_empty()
    }

    pub fn subsystems(&self) -> &[(String, usize)] {
        &self.subsystems
    }

    pub fn labels(&self) -> Vec<&str> {
        self.subsystems.iter().map(|(l, _)| l.as_str()).collect()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.subsystems.iter().map(|(_, d)| *d).collect()
    }

    pub fn contains(&self, label: &str) -> bool {
        self.subsystems.iter().any(|(l, _)| l == label)
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.subsystems
            .iter()
            .position(|(l, _)| l == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn dim_of(&self, label: &str) -> Result<usize> {
        Ok(self.subsystems[self.index_of(label)?].1)
    }

    /// Concatenation; labels must be disjoint.
    pub fn concat(&self, other: &SystemLayout) -> Result<Self> {
        let mut v = self.subsystems.clone();
        v.extend(other.subsystems.iter().cloned());
        Self::new(v)
    }

    fn indices_sorted(&self, labels: &[&str]) -> Result<Vec<usize>> {
        let mut idx = Vec::with_capacity(labels.len());
        for l in labels {
            let i = self.index_of(l)?;
            if idx.contains(&i) {
                return Err(Error::LabelCollision(l.to_string()));
            }
            idx.push(i);
        }
        idx.sort_unstable();
        Ok(idx)
    }

    fn select(&self, idx: &[usize]) -> SystemLayout {
        SystemLayout { subsystems: idx.iter().map(|&i| self.subsystems[i].clone()).collect() }
    }

    fn order_of(&self, labels: &[&str]) -> Result<Vec<usize>> {
        if labels.len() != self.len() {
            return Err(Error::LayoutMismatch(format!(
                "permutation lists {} labels, layout has {}",
                labels.len(),
                self.len()
            )));
        }
        let mut order = Vec::with_capacity(labels.len());
        for l in labels {
            let i = self.index_of(l)?;
            if order.contains(&i) {
                return Err(Error::LabelCollision(l.to_string()));
            }
            order.push(i);
        }
        Ok(order)
    }
}

/// A possibly sub-normalized density operator on a labeled layout.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityState {
    layout: SystemLayout,
    matrix: CMat,
    normalization: f64,
}

impl DensityState {
    /// Validates Hermiticity, positivity (min eigenvalue ≥ −1e−10) and a trace
    /// in (0, 1 + 1e−10]. The stored matrix is the exact Hermitian part.
    pub fn new(layout: SystemLayout, matrix: CMat) -> Result<Self> {
        let d = layout.dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "matrix is {}x{}, layout dimension is {d}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Parse("matrix contains non-finite entries".into()));
        }
        let scale = max_abs(&matrix).max(1.0);
        let dev = max_abs(&(&matrix - matrix.adjoint()));
        if dev > HERMITIAN_TOL * scale {
            return Err(Error::NotHermitian(dev));
        }
        let matrix = hermitian_part(&matrix);
        let min_eig = eigvalsh(&matrix).first().copied().unwrap_or(0.0);
        if min_eig < -PSD_TOL {
            return Err(Error::NotPsd(min_eig));
        }
        let tr = trace(&matrix).re;
        if !(tr > 0.0) || tr > 1.0 + TRACE_TOL {
            return Err(Error::InvalidTrace(tr));
        }
        Ok(DensityState { layout, matrix, normalization: tr })
    }

    /// Convenience constructor from `(label, dim)` pairs.
    pub fn from_parts<S: Into<String>>(subsystems: Vec<(S, usize)>, matrix: CMat) -> Result<Self> {
        Self::new(SystemLayout::new(subsystems)?, matrix)
    }

    pub fn maximally_mixed(layout: SystemLayout) -> Result<Self> {
        let d = layout.dim();
        Self::new(layout, identity(d) * cr(1.0 / d as f64))
    }

    /// `|i><i|` on a single subsystem.
    pub fn basis(label: &str, dim: usize, i: usize) -> Result<Self> {
        if i >= dim {
            return Err(Error::ParameterOutOfRange(format!("basis index {i} ≥ dimension {dim}")));
        }
        Self::new(SystemLayout::single(label, dim)?, projector(&ket(dim, i)))
    }

    pub fn layout(&self) -> &SystemLayout {
        &self.layout
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    pub fn is_normalized(&self) -> bool {
        (self.normalization - 1.0).abs() <= TRACE_TOL
    }

    pub fn require_normalized(&self) -> Result<()> {
        if self.is_normalized() {
            Ok(())
        } else {
            Err(Error::NotNormalized(self.normalization))
        }
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        eigvalsh(&self.matrix)
    }

    /// Same matrix under new labels (dimensions must agree).
    pub fn relabel(&self, layout: SystemLayout) -> Result<Self> {
        if layout.dims() != self.layout.dims() {
            return Err(Error::LayoutMismatch("relabel must keep subsystem dimensions".into()));
        }
        Ok(DensityState { layout, matrix: self.matrix.clone(), normalization: self.normalization })
    }

    pub fn tensor(&self, other: &DensityState) -> Result<Self> {
        tensor_product(self, other)
    }

    pub fn partial_trace(&self, keep: &[&str]) -> Result<Self> {
        partial_trace(self, keep)
    }

    pub fn permute(&self, order: &[&str]) -> Result<Self> {
        let ord = self.layout.order_of(order)?;
        let dims = self.layout.dims();
        Ok(DensityState {
            layout: self.layout.select(&ord),
            matrix: permute_mat(&self.matrix, &dims, &ord),
            normalization: self.normalization,
        })
    }

    /// Apply a linear map `X ↦ K X K†`-style unitary conjugation on the whole space.
    pub fn conjugate(&self, u: &CMat) -> Result<Self> {
        Self::new(self.layout.clone(), u * &self.matrix * u.adjoint())
    }
}

/// A unit vector on a labeled layout.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    layout: SystemLayout,
    amplitudes: CVec,
}

impl PureState {
    pub fn new(layout: SystemLayout, amplitudes: CVec) -> Result<Self> {
        if amplitudes.len() != layout.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{} amplitudes for layout dimension {}",
                amplitudes.len(),
                layout.dim()
            )));
        }
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::NotUnitNorm(norm));
        }
        Ok(PureState { layout, amplitudes })
    }

    /// Rescales a nonzero vector to unit norm.
    pub fn normalized(layout: SystemLayout, amplitudes: CVec) -> Result<Self> {
        let n = amplitudes.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::NotUnitNorm(n));
        }
        Self::new(layout, amplitudes / cr(n))
    }

    /// `Σ_i |i>|i> / √d` on two subsystems of dimension `d`.
    pub fn maximally_entangled(first: &str, second: &str, d: usize) -> Result<Self> {
        let layout = SystemLayout::new(vec![(first, d), (second, d)])?;
        let mut v = CVec::zeros(d * d);
        let amp = cr(1.0 / (d as f64).sqrt());
        for i in 0..d {
            v[i * d + i] = amp;
        }
        Self::new(layout, v)
    }

    pub fn layout(&self) -> &SystemLayout {
        &self.layout
    }

    pub fn amplitudes(&self) -> &CVec {
        &self.amplitudes
    }

    pub fn to_density(&self) -> DensityState {
        DensityState {
            layout: self.layout.clone(),
            matrix: projector(&self.amplitudes),
            normalization: self.amplitudes.norm_squared(),
        }
    }

    pub fn permute(&self, order: &[&str]) -> Result<Self> {
        let ord = self.layout.order_of(order)?;
        let dims = self.layout.dims();
        Ok(PureState {
            layout: self.layout.select(&ord),
            amplitudes: permute_vec(&self.amplitudes, &dims, &ord),
        })
    }

    pub fn relabel(&self, layout: SystemLayout) -> Result<Self> {
        if layout.dims() != self.layout.dims() {
            return Err(Error::LayoutMismatch("relabel must keep subsystem dimensions".into()));
        }
        Ok(PureState { layout, amplitudes: self.amplitudes.clone() })
    }

    /// Reduced state on `keep`.
    pub fn marginal(&self, keep: &[&str]) -> Result<DensityState> {
        partial_trace(&self.to_density(), keep)
    }
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

pub fn tensor_product(a: &DensityState, b: &DensityState) -> Result<DensityState> {
    let layout = a.layout.concat(&b.layout)?;
    DensityState::new(layout, kron(&a.matrix, &b.matrix))
}

pub fn partial_trace(s: &DensityState, keep: &[&str]) -> Result<DensityState> {
    if keep.is_empty() {
        return Err(Error::InvalidLayout("partial trace must keep at least one subsystem".into()));
    }
    let idx = s.layout.indices_sorted(keep)?;
    let m = partial_trace_mat(&s.matrix, &s.layout.dims(), &idx);
    let m = hermitian_part(&m);
    let tr = trace(&m).re;
    Ok(DensityState { layout: s.layout.select(&idx), matrix: m, normalization: tr })
}

fn same_layout(r: &DensityState, s: &DensityState) -> Result<()> {
    if r.layout != s.layout {
        return Err(Error::LayoutMismatch(format!(
            "{:?} vs {:?}",
            r.layout.subsystems(),
            s.layout.subsystems()
        )));
    }
    Ok(())
}

/// `‖√r √s‖₁` without the sub-normalization correction.
///
/// Summed singular values of `√r √s`; going through the eigenvalues of
/// `√r s √r` would turn rounding noise `ν` into spurious fidelity `√ν`.
pub fn fidelity_mat(r: &CMat, s: &CMat) -> f64 {
    let m = sqrtm_psd(r) * sqrtm_psd(s);
    m.singular_values().iter().sum()
}

/// Generalized fidelity `‖√r √s‖₁ + √((1 − Tr r)(1 − Tr s))`, clamped to [0, 1].
pub fn fidelity(r: &DensityState, s: &DensityState) -> Result<f64> {
    same_layout(r, s)?;
    let f = fidelity_mat(&r.matrix, &s.matrix);
    let defect = ((1.0 - r.normalization).max(0.0) * (1.0 - s.normalization).max(0.0)).sqrt();
    Ok((f + defect).clamp(0.0, 1.0))
}

/// `½‖r − s‖₁`.
pub fn trace_distance(r: &DensityState, s: &DensityState) -> Result<f64> {
    same_layout(r, s)?;
    Ok((0.5 * trace_norm_herm(&(&r.matrix - &s.matrix))).clamp(0.0, 1.0))
}

/// `√(1 − F²)` with the generalized fidelity.
pub fn purified_distance(r: &DensityState, s: &DensityState) -> Result<f64> {
    let f = fidelity(r, s)?;
    Ok((1.0 - f * f).max(0.0).sqrt())
}

/// Eigenvalues above this are kept when purifying.
const RANK_TOL: f64 = 1e-12;

/// Canonical purification `Σ_i √λ_i |e_i>|i>`; the purifying subsystem has
/// dimension equal to the numerical rank of `s`.
pub fn purify(s: &DensityState, new_label: &str) -> Result<PureState> {
    s.require_normalized()?;
    if s.layout.contains(new_label) {
        return Err(Error::LabelCollision(new_label.to_string()));
    }
    let (vals, vecs) = eigh(&s.matrix);
    let kept: Vec<usize> = (0..vals.len()).rev().filter(|&i| vals[i] > RANK_TOL).collect();
    let rank = kept.len().max(1);
    let d = s.dim();
    let mut amp = CVec::zeros(d * rank);
    for (k, &i) in kept.iter().enumerate() {
        let w = cr(vals[i].max(0.0).sqrt());
        for a in 0..d {
            amp[a * rank + k] = vecs[(a, i)] * w;
        }
    }
    let layout = s.layout.concat(&SystemLayout::single(new_label, rank)?)?;
    PureState::normalized(layout, amp)
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

/// Row-major `[re, im]` pairs.
pub fn matrix_to_pairs(m: &CMat) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let z = m[(i, j)];
            out.push([z.re, z.im]);
        }
    }
    out
}

pub fn matrix_from_pairs(rows: usize, cols: usize, pairs: &[[f64; 2]]) -> Result<CMat> {
    if pairs.len() != rows * cols {
        return Err(Error::Parse(format!(
            "expected {} matrix entries for {rows}x{cols}, found {}",
            rows * cols,
            pairs.len()
        )));
    }
    Ok(CMat::from_fn(rows, cols, |i, j| {
        let [re, im] = pairs[i * cols + j];
        C64::new(re, im)
    }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateJson {
    pub subsystems: Vec<(String, usize)>,
    pub matrix: Vec<[f64; 2]>,
}

impl DensityState {
    pub fn to_json_value(&self) -> StateJson {
        StateJson {
            subsystems: self.layout.subsystems.clone(),
            matrix: matrix_to_pairs(&self.matrix),
        }
    }

    pub fn from_json_value(j: &StateJson) -> Result<Self> {
        let layout = SystemLayout::new(j.subsystems.clone())?;
        let d = layout.dim();
        Self::new(layout, matrix_from_pairs(d, d, &j.matrix)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_json_value()).expect("state serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let j: StateJson = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_json_value(&j)
    }
}
