//! Small dense semidefinite programs over Hermitian variables.
//!
//! Problems are stated as
//!
//! ```text
//! minimize   Σ_b ⟨C_b, Z_b⟩
//! subject to Σ_b ⟨A_ib, Z_b⟩ (=, ≤, ≥) r_i,   Z_b ⪰ 0 (Hermitian)
//! ```
//!
//! Each Hermitian block is embedded as the real symmetric block
//! `[[Re Z, −Im Z], [Im Z, Re Z]]`, so `⟨A, Z⟩ = ½⟨Ã, Z̃⟩`. Inequalities get
//! scalar slack blocks. The real problem is solved by an infeasible-start
//! primal-dual interior-point method (HKM direction, Mehrotra
//! predictor-corrector) after removing dependent constraints. When it does
//! not converge a phase-1 problem, `min ‖A(Z) − b‖ s.t. Z ⪰ 0`, is solved by
//! accelerated projected gradient to tell infeasible problems apart from
//! merely hard ones.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{cr, matrix_to_pairs, CMat, C64};

pub const DEFAULT_TOL: f64 = 1e-7;
pub const DEFAULT_MAX_ITER: usize = 500;
/// Phase-1 residual above which a problem is declared infeasible.
pub const INFEASIBILITY_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Sense {
    Eq,
    Le,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockId(pub usize);

/// A linear map from one block's matrix space to `out_dim × out_dim` matrices.
#[derive(Clone)]
pub struct LinOp {
    in_dim: usize,
    out_dim: usize,
    f: Arc<dyn Fn(&CMat) -> CMat + Send + Sync>,
}

impl std::fmt::Debug for LinOp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "LinOp({} -> {})", self.in_dim, self.out_dim)
    }
}

impl LinOp {
    pub fn new(in_dim: usize, out_dim: usize, f: impl Fn(&CMat) -> CMat + Send + Sync + 'static) -> Self {
        LinOp { in_dim, out_dim, f: Arc::new(f) }
    }

    pub fn identity(d: usize) -> Self {
        Self::new(d, d, |x| x.clone())
    }

    /// The diagonal sub-block starting at `offset` of a `total`-dimensional block.
    pub fn diag_block(total: usize, offset: usize, size: usize) -> Self {
        assert!(offset + size <= total);
        Self::new(total, size, move |x| x.view((offset, offset), (size, size)).into_owned())
    }

    /// `X ↦ I_left ⊗ X`.
    pub fn identity_tensor(left: usize, d: usize) -> Self {
        let id = CMat::identity(left, left);
        Self::new(d, left * d, move |x| id.kronecker(x))
    }

    /// `X ↦ X ⊗ I_right`.
    pub fn tensor_identity(d: usize, right: usize) -> Self {
        let id = CMat::identity(right, right);
        Self::new(d, d * right, move |x| x.kronecker(&id))
    }

    pub fn scaled(self, k: f64) -> Self {
        let inner = self.f.clone();
        Self::new(self.in_dim, self.out_dim, move |x| inner(x) * cr(k))
    }

    pub fn neg(self) -> Self {
        self.scaled(-1.0)
    }

    /// `self ∘ first`.
    pub fn after(self, first: LinOp) -> Self {
        assert_eq!(first.out_dim, self.in_dim);
        let (a, b) = (self.f.clone(), first.f.clone());
        Self::new(first.in_dim, self.out_dim, move |x| a(&b(x)))
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn apply(&self, x: &CMat) -> CMat {
        (self.f)(x)
    }
}

#[derive(Debug, Clone, Serialize)]
struct Constraint {
    /// `(block, Hermitian coefficient)`.
    #[serde(serialize_with = "ser_coeffs")]
    coeffs: Vec<(BlockId, CMat)>,
    sense: Sense,
    rhs: f64,
}

fn ser_coeffs<S: serde::Serializer>(v: &[(BlockId, CMat)], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for (b, m) in v {
        seq.serialize_element(&(b.0, matrix_to_pairs(m)))?;
    }
    seq.end()
}

/// Problem builder. Block dimensions are Hermitian (complex) dimensions.
#[derive(Debug, Clone, Default)]
pub struct SdpProblem {
    blocks: Vec<usize>,
    objective: Vec<Option<CMat>>,
    constraints: Vec<Constraint>,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SdpStatus,
    /// Primal blocks in the Hermitian (complex) form.
    pub blocks: Vec<CMat>,
    pub objective: f64,
    pub dual_objective: f64,
    /// `‖A(Z) − b‖₂` in the original units.
    pub primal_residual: f64,
    /// Relative gap `|p − d| / (1 + |p| + |d|)`.
    pub dual_gap: f64,
    pub iterations: usize,
}

impl SdpSolution {
    pub fn block(&self, id: BlockId) -> &CMat {
        &self.blocks[id.0]
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SdpStatus::Optimal
    }

    /// Error unless optimal.
    pub fn require_optimal(&self, context: &str) -> Result<&Self> {
        if self.is_optimal() {
            Ok(self)
        } else {
            Err(Error::Sdp { status: self.status, context: context.to_string() })
        }
    }
}

/// Orthonormal Hermitian basis element `k` of dimension `d` applied as a
/// functional: returns `Tr(H_k Y)` for an arbitrary `Y`.
fn herm_basis_functional(d: usize, k: usize, y: &CMat) -> C64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    if k < d {
        return y[(k, k)];
    }
    let idx = k - d;
    let pair = idx / 2;
    // Enumerate pairs j < l in row-major order.
    let (mut j, mut rem) = (0usize, pair);
    while rem >= d - 1 - j {
        rem -= d - 1 - j;
        j += 1;
    }
    let l = j + 1 + rem;
    if idx.is_multiple_of(2) {
        (y[(l, j)] + y[(j, l)]) * cr(s)
    } else {
        (y[(l, j)] - y[(j, l)]) * C64::new(0.0, s)
    }
}

impl SdpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_block(&mut self, dim: usize) -> BlockId {
        assert!(dim > 0, "block dimension must be positive");
        self.blocks.push(dim);
        self.objective.push(None);
        BlockId(self.blocks.len() - 1)
    }

    pub fn block_dims(&self) -> &[usize] {
        &self.blocks
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    fn check_coeff(&self, b: BlockId, m: &CMat) -> Result<()> {
        let d = *self
            .blocks
            .get(b.0)
            .ok_or_else(|| Error::DimensionMismatch(format!("unknown block {}", b.0)))?;
        if m.nrows() != d || m.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "coefficient is {}x{}, block {} has dimension {d}",
                m.nrows(),
                m.ncols(),
                b.0
            )));
        }
        let dev = crate::linalg::max_abs(&(m - m.adjoint()));
        if dev > 1e-12 * crate::linalg::max_abs(m).max(1.0) {
            return Err(Error::NotHermitian(dev));
        }
        Ok(())
    }

    /// Adds `⟨c, Z_b⟩` to the minimization objective.
    pub fn add_objective(&mut self, b: BlockId, c: CMat) -> Result<()> {
        self.check_coeff(b, &c)?;
        let c = crate::linalg::hermitian_part(&c);
        let slot = &mut self.objective[b.0];
        *slot = Some(match slot.take() {
            Some(prev) => prev + c,
            None => c,
        });
        Ok(())
    }

    pub fn add_constraint(&mut self, coeffs: Vec<(BlockId, CMat)>, sense: Sense, rhs: f64) -> Result<()> {
        let mut clean = Vec::with_capacity(coeffs.len());
        for (b, m) in coeffs {
            self.check_coeff(b, &m)?;
            clean.push((b, crate::linalg::hermitian_part(&m)));
        }
        self.constraints.push(Constraint { coeffs: clean, sense, rhs });
        Ok(())
    }

    /// `Σ_t op_t(Z_{b_t}) = rhs` as a Hermitian matrix identity, expanded into
    /// one real constraint per element of an orthonormal Hermitian basis.
    /// Every `op_t` must map Hermitian matrices to Hermitian matrices.
    pub fn add_matrix_equality(&mut self, terms: Vec<(BlockId, LinOp)>, rhs: &CMat) -> Result<()> {
        let d_out = rhs.nrows();
        for (b, op) in &terms {
            let d = *self
                .blocks
                .get(b.0)
                .ok_or_else(|| Error::DimensionMismatch(format!("unknown block {}", b.0)))?;
            if op.in_dim != d || op.out_dim != d_out {
                return Err(Error::DimensionMismatch(format!(
                    "operator {:?} does not map block of dimension {d} to {d_out}",
                    op
                )));
            }
        }
        // Images of matrix units |a><b| for each term.
        let images: Vec<Vec<CMat>> = terms
            .iter()
            .map(|(_, op)| {
                let d = op.in_dim;
                let mut imgs = Vec::with_capacity(d * d);
                for a in 0..d {
                    for b in 0..d {
                        let mut e = CMat::zeros(d, d);
                        e[(a, b)] = cr(1.0);
                        imgs.push(op.apply(&e));
                    }
                }
                imgs
            })
            .collect();
        for k in 0..d_out * d_out {
            let mut coeffs = Vec::with_capacity(terms.len());
            for ((b, op), imgs) in terms.iter().zip(&images) {
                let d = op.in_dim;
                let mut cm = CMat::zeros(d, d);
                for a in 0..d {
                    for bb in 0..d {
                        // Tr(C J) = Σ C_ba J_ab  ⇒  C_ba = Tr(H_k op(E_ab)).
                        cm[(bb, a)] = herm_basis_functional(d_out, k, &imgs[a * d + bb]);
                    }
                }
                coeffs.push((*b, crate::linalg::hermitian_part(&cm)));
            }
            let rhs_k = herm_basis_functional(d_out, k, rhs).re;
            self.constraints.push(Constraint { coeffs, sense: Sense::Eq, rhs: rhs_k });
        }
        Ok(())
    }

    /// JSON dump for debugging. Not a stable format.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Dump<'a> {
            blocks: &'a [usize],
            objective: Vec<Option<Vec<[f64; 2]>>>,
            constraints: &'a [Constraint],
        }
        let objective = self.objective.iter().map(|o| o.as_ref().map(matrix_to_pairs)).collect();
        serde_json::to_string(&Dump { blocks: &self.blocks, objective, constraints: &self.constraints })
            .expect("problem serializes")
    }

    pub fn solve(&self, tol: f64, max_iter: usize) -> Result<SdpSolution> {
        solve(self, tol, max_iter)
    }

    pub fn solve_default(&self) -> Result<SdpSolution> {
        solve(self, DEFAULT_TOL, DEFAULT_MAX_ITER)
    }
}

// ---------------------------------------------------------------------------
// Real-embedded interior-point solver
// ---------------------------------------------------------------------------

type Mat = DMatrix<f64>;

#[derive(Debug, Clone, Copy)]
struct Entry {
    blk: usize,
    r: usize,
    c: usize,
    v: f64,
}

struct RealProblem {
    dims: Vec<usize>,
    rows: Vec<Vec<Entry>>,
    b: Vec<f64>,
    c: Vec<Mat>,
}

/// Adds `scale · ½ C̃` for the real embedding `C̃ = [[Re C, −Im C], [Im C, Re C]]`.
fn embed_coeff(m: &CMat, blk: usize, scale: f64, acc: &mut Vec<Entry>) {
    let d = m.nrows();
    let h = 0.5 * scale;
    for j in 0..d {
        for i in 0..d {
            let z = m[(i, j)];
            if z.re != 0.0 {
                acc.push(Entry { blk, r: i, c: j, v: h * z.re });
                acc.push(Entry { blk, r: i + d, c: j + d, v: h * z.re });
            }
            if z.im != 0.0 {
                acc.push(Entry { blk, r: i + d, c: j, v: h * z.im });
                acc.push(Entry { blk, r: i, c: j + d, v: -h * z.im });
            }
        }
    }
}

fn compact(mut row: Vec<Entry>) -> Vec<Entry> {
    row.sort_by_key(|e| (e.blk, e.c, e.r));
    let mut out: Vec<Entry> = Vec::with_capacity(row.len());
    for e in row {
        match out.last_mut() {
            Some(last) if (last.blk, last.r, last.c) == (e.blk, e.r, e.c) => last.v += e.v,
            _ => out.push(e),
        }
    }
    out.retain(|e| e.v != 0.0);
    out
}

impl RealProblem {
    fn build(p: &SdpProblem) -> Self {
        let mut dims: Vec<usize> = p.blocks.iter().map(|d| 2 * d).collect();
        let n_slack = p.constraints.iter().filter(|c| c.sense != Sense::Eq).count();
        dims.extend(std::iter::repeat_n(1, n_slack));
        let mut c: Vec<Mat> = dims.iter().map(|&d| Mat::zeros(d, d)).collect();
        for (bi, obj) in p.objective.iter().enumerate() {
            if let Some(m) = obj {
                let mut acc = Vec::new();
                embed_coeff(m, bi, 1.0, &mut acc);
                for e in acc {
                    c[bi][(e.r, e.c)] += e.v;
                }
            }
        }
        let mut rows = Vec::with_capacity(p.constraints.len());
        let mut b = Vec::with_capacity(p.constraints.len());
        let mut slack = p.blocks.len();
        for con in &p.constraints {
            let mut acc = Vec::new();
            for (blk, m) in &con.coeffs {
                embed_coeff(m, blk.0, 1.0, &mut acc);
            }
            let sign = match con.sense {
                Sense::Eq => 0.0,
                Sense::Le => 1.0,
                Sense::Ge => -1.0,
            };
            if sign != 0.0 {
                acc.push(Entry { blk: slack, r: 0, c: 0, v: sign });
                slack += 1;
            }
            rows.push(compact(acc));
            b.push(con.rhs);
        }
        RealProblem { dims, rows, b, c }
    }

    fn zeros(&self) -> Vec<Mat> {
        self.dims.iter().map(|&d| Mat::zeros(d, d)).collect()
    }

    fn apply_a(&self, x: &[Mat]) -> Vec<f64> {
        self.rows.iter().map(|row| row.iter().map(|e| e.v * x[e.blk][(e.r, e.c)]).sum()).collect()
    }

    fn apply_at(&self, y: &[f64]) -> Vec<Mat> {
        let mut out = self.zeros();
        for (row, &yi) in self.rows.iter().zip(y) {
            if yi != 0.0 {
                for e in row {
                    out[e.blk][(e.r, e.c)] += e.v * yi;
                }
            }
        }
        out
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn mnorm(v: &[Mat]) -> f64 {
    v.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt()
}

fn mdot(a: &[Mat], b: &[Mat]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn sym(m: Mat) -> Mat {
    (&m + m.transpose()) * 0.5
}

fn project_psd(m: &Mat) -> Mat {
    if m.nrows() == 1 {
        return Mat::from_element(1, 1, m[(0, 0)].max(0.0));
    }
    let eig = sym(m.clone()).symmetric_eigen();
    let d = m.nrows();
    let mut p = Mat::zeros(d, d);
    for k in 0..d {
        let l = eig.eigenvalues[k];
        if l > 0.0 {
            let col = eig.eigenvectors.column(k);
            p.ger(l, &col, &col, 1.0);
        }
    }
    p
}

/// Largest `α ≤ cap` with `x + α dx ⪰ 0`, assuming `x ≻ 0`.
fn max_step(x: &[Mat], dx: &[Mat], cap: f64) -> f64 {
    let mut alpha = cap;
    for (xb, db) in x.iter().zip(dx) {
        let lmin = if xb.nrows() == 1 {
            db[(0, 0)] / xb[(0, 0)]
        } else {
            let Some(ch) = xb.clone().cholesky() else { return 0.0 };
            let l = ch.l();
            let Some(t) = l.solve_lower_triangular(db) else { return 0.0 };
            let Some(w) = l.solve_lower_triangular(&t.transpose()) else { return 0.0 };
            sym(w).symmetric_eigen().eigenvalues.min()
        };
        if lmin < 0.0 {
            alpha = alpha.min(-1.0 / lmin);
        }
    }
    alpha
}

fn inverse_spd(m: &Mat) -> Option<Mat> {
    if m.nrows() == 1 {
        let v = m[(0, 0)];
        return (v > 0.0).then(|| Mat::from_element(1, 1, 1.0 / v));
    }
    m.clone().cholesky().map(|c| sym(c.inverse()))
}

/// Removes linearly dependent rows. Returns `Err(residual)` when a dependent
/// row's right-hand side is inconsistent with the rows it depends on.
fn drop_dependent_rows(rp: &mut RealProblem) -> std::result::Result<(), f64> {
    let offsets: Vec<usize> = rp
        .dims
        .iter()
        .scan(0, |acc, d| {
            let o = *acc;
            *acc += d * d;
            Some(o)
        })
        .collect();
    let n: usize = rp.dims.iter().map(|d| d * d).sum();
    let mut basis: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut keep = Vec::with_capacity(rp.rows.len());
    let mut worst = 0.0f64;
    for (row, &bi) in rp.rows.iter().zip(&rp.b) {
        let mut v = vec![0.0; n];
        for e in row {
            v[offsets[e.blk] + e.c * rp.dims[e.blk] + e.r] += e.v;
        }
        let mut rhs = bi;
        let n0 = norm(&v);
        for (q, qb) in &basis {
            let k: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            if k != 0.0 {
                v.iter_mut().zip(q).for_each(|(a, b)| *a -= k * b);
                rhs -= k * qb;
            }
        }
        let nr = norm(&v);
        if nr > 1e-9 * n0.max(1e-300) {
            v.iter_mut().for_each(|a| *a /= nr);
            basis.push((v, rhs / nr));
            keep.push(true);
        } else {
            worst = worst.max(rhs.abs());
            keep.push(false);
        }
    }
    let mut it = keep.iter();
    rp.rows.retain(|_| *it.next().unwrap());
    let mut it = keep.iter();
    rp.b.retain(|_| *it.next().unwrap());
    if worst > INFEASIBILITY_THRESHOLD {
        Err(worst)
    } else {
        Ok(())
    }
}

/// Schur complement `M_ij = ⟨A_i, X A_j Z⁻¹⟩`.
fn schur(rp: &RealProblem, by_block: &[Vec<(usize, Vec<Entry>)>], x: &[Mat], zinv: &[Mat]) -> Mat {
    let m = rp.rows.len();
    let mut out = Mat::zeros(m, m);
    for (k, rows) in by_block.iter().enumerate() {
        let d = rp.dims[k];
        let xk = &x[k];
        let zk = &zinv[k];
        for (j, ej) in rows {
            // W = X A_j Z⁻¹ restricted to what the other rows read.
            let mut xa = Mat::zeros(d, d);
            let mut cols: Vec<usize> = Vec::new();
            for e in ej {
                for p in 0..d {
                    xa[(p, e.c)] += xk[(p, e.r)] * e.v;
                }
                if !cols.contains(&e.c) {
                    cols.push(e.c);
                }
            }
            let mut w = Mat::zeros(d, d);
            for &s in &cols {
                for q in 0..d {
                    let zsq = zk[(s, q)];
                    if zsq != 0.0 {
                        for p in 0..d {
                            w[(p, q)] += xa[(p, s)] * zsq;
                        }
                    }
                }
            }
            for (i, ei) in rows {
                if i < j {
                    continue;
                }
                let v: f64 = ei.iter().map(|e| e.v * w[(e.c, e.r)]).sum();
                out[(*i, *j)] += v;
            }
        }
    }
    for i in 0..m {
        for j in 0..i {
            out[(j, i)] = out[(i, j)];
        }
    }
    out
}

struct Iterate {
    x: Vec<Mat>,
    y: Vec<f64>,
    z: Vec<Mat>,
}

struct Metrics {
    pinf: f64,
    dinf: f64,
    gap: f64,
    pobj: f64,
    dobj: f64,
}

impl Metrics {
    fn worst(&self) -> f64 {
        self.pinf.max(self.dinf).max(self.gap)
    }
}

fn metrics(rp: &RealProblem, it: &Iterate, nb: f64, nc: f64) -> Metrics {
    let ax = rp.apply_a(&it.x);
    let pinf = ax.iter().zip(&rp.b).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() / (1.0 + nb);
    let aty = rp.apply_at(&it.y);
    let mut dres = 0.0;
    for k in 0..rp.dims.len() {
        dres += (&rp.c[k] - &aty[k] - &it.z[k]).norm_squared();
    }
    let dinf = dres.sqrt() / (1.0 + nc);
    let pobj = mdot(&rp.c, &it.x);
    let dobj = rp.b.iter().zip(&it.y).map(|(a, b)| a * b).sum::<f64>();
    let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
    Metrics { pinf, dinf, gap, pobj, dobj }
}

/// Accelerated projected gradient on `½‖A(X) − b‖²` over the PSD cone.
fn phase1(rp: &RealProblem, max_iter: usize) -> (f64, Vec<Mat>) {
    let m = rp.rows.len();
    // Power iteration for ‖A‖², padded for safety.
    let mut v = vec![1.0 / (m.max(1) as f64).sqrt(); m];
    let mut lip = 1.0;
    for _ in 0..100 {
        let w = rp.apply_a(&rp.apply_at(&v));
        let nw = norm(&w);
        if nw == 0.0 {
            break;
        }
        lip = nw;
        v = w.iter().map(|x| x / nw).collect();
    }
    let step = 1.0 / (1.2 * lip);
    let residual = |x: &[Mat]| {
        let ax = rp.apply_a(x);
        ax.iter().zip(&rp.b).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    };
    let mut x = rp.zeros();
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut best = residual(&x);
    let mut best_x = x.clone();
    let mut last = f64::INFINITY;
    for it in 0..max_iter {
        let ay = rp.apply_a(&y);
        let r: Vec<f64> = ay.iter().zip(&rp.b).map(|(a, b)| a - b).collect();
        let g = rp.apply_at(&r);
        let x_new: Vec<Mat> = y.iter().zip(&g).map(|(yb, gb)| project_psd(&(yb - gb * step))).collect();
        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_new;
        y = x_new.iter().zip(&x).map(|(a, b)| a + (a - b) * beta).collect();
        x = x_new;
        t = t_new;
        if it % 25 == 0 {
            let r = residual(&x);
            if r < best {
                best = r;
                best_x.clone_from(&x);
            }
            if best < 1e-10 {
                break;
            }
            if it % 500 == 0 && it > 0 {
                if best > 1e-4 && best > 0.999 * last {
                    break;
                }
                last = best;
            }
        }
    }
    (best, best_x)
}

fn unembed(x: &Mat) -> CMat {
    let d = x.nrows() / 2;
    CMat::from_fn(d, d, |i, j| {
        let re = 0.5 * (x[(i, j)] + x[(i + d, j + d)]);
        let im = 0.5 * (x[(i + d, j)] - x[(i, j + d)]);
        C64::new(re, im)
    })
}

/// Solve to relative tolerance `tol` on primal infeasibility, dual
/// infeasibility and duality gap, with at most `max_iter` interior-point
/// iterations (capped at 500).
pub fn solve(p: &SdpProblem, tol: f64, max_iter: usize) -> Result<SdpSolution> {
    if !(tol > 0.0) {
        return Err(Error::ParameterOutOfRange(format!("tolerance must be positive, got {tol}")));
    }
    let mut rp = RealProblem::build(p);
    let herm = p.blocks.len();

    let make_solution = |status, x: &[Mat], obj: f64, dobj: f64, res: f64, gap: f64, iters: usize| SdpSolution {
        status,
        blocks: x[..herm].iter().map(unembed).collect(),
        objective: obj,
        dual_objective: dobj,
        primal_residual: res,
        dual_gap: gap,
        iterations: iters,
    };

    // Empty rows with a nonzero right-hand side are infeasible outright.
    let mut trivial = 0.0f64;
    for (row, &bi) in rp.rows.iter().zip(&rp.b) {
        if row.is_empty() {
            trivial = trivial.max(bi.abs());
        }
    }
    let original_rhs = rp.b.clone();
    let original_rows = rp.rows.clone();
    let orig_residual = |x: &[Mat]| -> f64 {
        original_rows
            .iter()
            .zip(&original_rhs)
            .map(|(row, bi)| (row.iter().map(|e| e.v * x[e.blk][(e.r, e.c)]).sum::<f64>() - bi).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    if trivial > INFEASIBILITY_THRESHOLD {
        let x = rp.zeros();
        return Ok(make_solution(SdpStatus::Infeasible, &x, 0.0, 0.0, trivial, f64::INFINITY, 0));
    }
    {
        let mut it = rp.rows.iter().map(|r| !r.is_empty()).collect::<Vec<_>>().into_iter();
        let keep: Vec<bool> = it.by_ref().collect();
        let mut k1 = keep.iter();
        rp.rows.retain(|_| *k1.next().unwrap());
        let mut k2 = keep.iter();
        rp.b.retain(|_| *k2.next().unwrap());
    }

    // Row normalization.
    for (row, bi) in rp.rows.iter_mut().zip(rp.b.iter_mut()) {
        let nr = row.iter().map(|e| e.v * e.v).sum::<f64>().sqrt();
        row.iter_mut().for_each(|e| e.v /= nr);
        *bi /= nr;
    }
    if let Err(res) = drop_dependent_rows(&mut rp) {
        let x = rp.zeros();
        return Ok(make_solution(SdpStatus::Infeasible, &x, 0.0, 0.0, res, f64::INFINITY, 0));
    }

    // Global scaling of b and c.
    let sb = norm(&rp.b).max(1.0);
    let sc = mnorm(&rp.c).max(1.0);
    rp.b.iter_mut().for_each(|v| *v /= sb);
    rp.c.iter_mut().for_each(|m| *m /= sc);
    let nb = norm(&rp.b);
    let nc = mnorm(&rp.c);
    let m = rp.rows.len();
    let nu: f64 = rp.dims.iter().map(|&d| d as f64).sum();

    let mut by_block: Vec<Vec<(usize, Vec<Entry>)>> = vec![Vec::new(); rp.dims.len()];
    for (i, row) in rp.rows.iter().enumerate() {
        let mut start = 0;
        while start < row.len() {
            let blk = row[start].blk;
            let mut end = start;
            while end < row.len() && row[end].blk == blk {
                end += 1;
            }
            by_block[blk].push((i, row[start..end].to_vec()));
            start = end;
        }
    }

    let init: Vec<Mat> = rp.dims.iter().map(|&d| Mat::identity(d, d) * (d as f64).sqrt().max(1.0)).collect();
    let mut cur = Iterate { x: init.clone(), y: vec![0.0; m], z: init };
    let to_original = |x: &[Mat]| x.iter().map(|b| b * sb).collect::<Vec<Mat>>();

    let iter_cap = max_iter.min(500);
    let trace = std::env::var_os("CONVLAB_SDP_TRACE").is_some();
    let mut best: Option<(f64, Vec<Mat>, Metrics)> = None;
    let mut status = SdpStatus::MaxIter;
    let mut iters = 0;
    let mut short_steps = 0;
    let mut diverging = false;

    for it in 0..=iter_cap {
        let met = metrics(&rp, &cur, nb, nc);
        if trace {
            eprintln!(
                "it {it:3} pinf {:.2e} dinf {:.2e} gap {:.2e} pobj {:.9} dobj {:.9}",
                met.pinf, met.dinf, met.gap, met.pobj, met.dobj
            );
        }
        let w = met.worst();
        if best.as_ref().is_none_or(|(bw, _, _)| w < *bw) {
            best = Some((w, cur.x.clone(), met));
        }
        iters = it;
        if w <= tol {
            status = SdpStatus::Optimal;
            break;
        }
        if it == iter_cap {
            break;
        }
        let xnorm = mnorm(&cur.x);
        let ynorm = norm(&cur.y);
        if xnorm > 1e10 || ynorm > 1e10 {
            diverging = true;
            break;
        }

        let zinv: Option<Vec<Mat>> = cur.z.iter().map(inverse_spd).collect();
        let Some(zinv) = zinv else { break };
        let mu = mdot(&cur.x, &cur.z) / nu;

        let ax = rp.apply_a(&cur.x);
        let rp_res: Vec<f64> = rp.b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let aty = rp.apply_at(&cur.y);
        let rd: Vec<Mat> = (0..rp.dims.len()).map(|k| &rp.c[k] - &aty[k] - &cur.z[k]).collect();

        let mut schur_m = schur(&rp, &by_block, &cur.x, &zinv);
        let diag_max = (0..m).map(|i| schur_m[(i, i)]).fold(0.0, f64::max);
        let chol = {
            let mut reg = 0.0;
            loop {
                if let Some(ch) = schur_m.clone().cholesky() {
                    break Some(ch);
                }
                reg = if reg == 0.0 { 1e-14 * diag_max.max(1e-300) } else { reg * 100.0 };
                if reg > 1e-4 * diag_max.max(1e-300) {
                    break None;
                }
                for i in 0..m {
                    schur_m[(i, i)] += reg;
                }
            }
        };
        let Some(chol) = chol else { break };

        // X r_d Z⁻¹, shared by both solves.
        let xrdz: Vec<Mat> = (0..rp.dims.len()).map(|k| &cur.x[k] * &rd[k] * &zinv[k]).collect();
        let a_xrdz = rp.apply_a(&xrdz);

        let direction = |rc: &[Mat]| -> (Vec<Mat>, Vec<f64>, Vec<Mat>) {
            let a_rc = rp.apply_a(rc);
            let rhs: Vec<f64> = (0..m).map(|i| rp_res[i] - a_rc[i] + a_xrdz[i]).collect();
            let dy = if m > 0 {
                chol.solve(&DVector::from_column_slice(&rhs)).as_slice().to_vec()
            } else {
                Vec::new()
            };
            let atdy = rp.apply_at(&dy);
            let dz: Vec<Mat> = (0..rp.dims.len()).map(|k| &rd[k] - &atdy[k]).collect();
            let dx: Vec<Mat> =
                (0..rp.dims.len()).map(|k| &rc[k] - sym(&cur.x[k] * &dz[k] * &zinv[k])).collect();
            (dx, dy, dz)
        };

        // Predictor.
        let rc_aff: Vec<Mat> = cur.x.iter().map(|x| -x).collect();
        let (dx_a, _, dz_a) = direction(&rc_aff);
        let ap = max_step(&cur.x, &dx_a, 1.0);
        let ad = max_step(&cur.z, &dz_a, 1.0);
        let mu_aff = (0..rp.dims.len())
            .map(|k| (&cur.x[k] + &dx_a[k] * ap).dot(&(&cur.z[k] + &dz_a[k] * ad)))
            .sum::<f64>()
            / nu;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // Corrector.
        let rc: Vec<Mat> = (0..rp.dims.len())
            .map(|k| &zinv[k] * (sigma * mu) - &cur.x[k] - sym(&dx_a[k] * &dz_a[k] * &zinv[k]))
            .collect();
        let (dx, dy, dz) = direction(&rc);
        let tau = 0.98;
        let ap = (tau * max_step(&cur.x, &dx, f64::INFINITY)).min(1.0);
        let ad = (tau * max_step(&cur.z, &dz, f64::INFINITY)).min(1.0);
        if ap < 1e-8 && ad < 1e-8 {
            short_steps += 1;
            if short_steps >= 3 {
                break;
            }
        } else {
            short_steps = 0;
        }
        for k in 0..rp.dims.len() {
            cur.x[k] += &dx[k] * ap;
            cur.z[k] += &dz[k] * ad;
            cur.x[k] = sym(std::mem::replace(&mut cur.x[k], Mat::zeros(0, 0)));
            cur.z[k] = sym(std::mem::replace(&mut cur.z[k], Mat::zeros(0, 0)));
        }
        for i in 0..m {
            cur.y[i] += ad * dy[i];
        }
    }

    let (_, bx, bm) = best.expect("at least one iterate");
    let scale_obj = sc * sb;
    if status == SdpStatus::Optimal {
        let xo = to_original(&bx);
        let res = orig_residual(&xo);
        return Ok(make_solution(status, &xo, bm.pobj * scale_obj, bm.dobj * scale_obj, res, bm.gap, iters));
    }

    // Not converged: phase 1 decides between infeasible and merely hard.
    let (_, p1x) = phase1(&rp, 20_000);
    let p1o = to_original(&p1x);
    let p1_res = orig_residual(&p1o);
    if p1_res > INFEASIBILITY_THRESHOLD {
        return Ok(make_solution(SdpStatus::Infeasible, &p1o, f64::NAN, f64::NAN, p1_res, f64::INFINITY, iters));
    }
    let xo = to_original(&bx);
    let res = orig_residual(&xo);
    let unbounded = diverging && bm.pobj < -1e3 && cur.x.iter().map(|b| b.norm()).sum::<f64>() > 1e6;
    let status = if unbounded { SdpStatus::Unbounded } else { SdpStatus::MaxIter };
    Ok(make_solution(status, &xo, bm.pobj * scale_obj, bm.dobj * scale_obj, res, bm.gap, iters))
}

// ---------------------------------------------------------------------------
// Fidelity epigraph
// ---------------------------------------------------------------------------

/// How one diagonal corner of a fidelity block is tied down.
#[derive(Clone, Debug)]
pub enum Corner {
    /// Equal to a fixed PSD matrix.
    Fixed(CMat),
    /// Left free; other constraints refer to it through [`FidelityEpigraph::top_left`]
    /// or [`FidelityEpigraph::bottom_right`].
    Free(usize),
    /// Equal to `Σ op(Z_b)`.
    Linked(Vec<(BlockId, LinOp)>),
}

impl Corner {
    fn dim(&self) -> Result<usize> {
        match self {
            Corner::Fixed(m) => Ok(m.nrows()),
            Corner::Free(d) => Ok(*d),
            Corner::Linked(terms) => terms
                .first()
                .map(|(_, op)| op.out_dim())
                .ok_or_else(|| Error::DimensionMismatch("linked corner needs at least one term".into())),
        }
    }
}

/// Eigenvalues below this (relative to the largest) are outside the support.
const SUPPORT_TOL: f64 = 1e-11;

/// Block `[[r, X], [X†, s]] ⪰ 0`; the maximum of `Re Tr X` over it is `F(r, s)`.
///
/// A fixed corner is stored restricted to its support `V`, i.e. the block
/// holds `V† m V`, and the off-diagonal part is `X = U X' V†` for the
/// support isometries `U`, `V` of the two corners.
#[derive(Clone, Debug)]
pub struct FidelityEpigraph {
    pub block: BlockId,
    pub dim: usize,
    top: CMat,
    bottom: CMat,
}

fn embed_corner(total: usize, offset: usize, iso: CMat) -> LinOp {
    let k = iso.ncols();
    LinOp::new(total, iso.nrows(), move |x| &iso * x.view((offset, offset), (k, k)) * iso.adjoint())
}

impl FidelityEpigraph {
    fn total(&self) -> usize {
        self.top.ncols() + self.bottom.ncols()
    }

    /// The top-left corner in the original coordinates.
    pub fn top_left(&self) -> LinOp {
        embed_corner(self.total(), 0, self.top.clone())
    }

    /// The bottom-right corner in the original coordinates.
    pub fn bottom_right(&self) -> LinOp {
        embed_corner(self.total(), self.top.ncols(), self.bottom.clone())
    }

    /// Coefficient `C` with `⟨C, block⟩ = ⟨m, top-left corner⟩`.
    pub fn top_left_coeff(&self, m: &CMat) -> CMat {
        let kr = self.top.ncols();
        let mut out = CMat::zeros(self.total(), self.total());
        out.view_mut((0, 0), (kr, kr)).copy_from(&(self.top.adjoint() * m * &self.top));
        crate::linalg::hermitian_part(&out)
    }

    /// Coefficient `C` with `⟨C, block⟩ = ⟨m, bottom-right corner⟩`.
    pub fn bottom_right_coeff(&self, m: &CMat) -> CMat {
        let (kr, ks) = (self.top.ncols(), self.bottom.ncols());
        let mut out = CMat::zeros(self.total(), self.total());
        out.view_mut((kr, kr), (ks, ks)).copy_from(&(self.bottom.adjoint() * m * &self.bottom));
        crate::linalg::hermitian_part(&out)
    }

    /// Coefficient `C` with `⟨C, block⟩ = Re Tr X`.
    pub fn re_trace_coeff(&self) -> CMat {
        let (kr, ks) = (self.top.ncols(), self.bottom.ncols());
        // Re Tr(U X' V†) = Re Tr(W X') with W = V† U.
        let w = self.bottom.adjoint() * &self.top * cr(0.5);
        let mut m = CMat::zeros(kr + ks, kr + ks);
        m.view_mut((kr, 0), (ks, kr)).copy_from(&w);
        m.view_mut((0, kr), (kr, ks)).copy_from(&w.adjoint());
        m
    }
}

fn support(m: &CMat) -> CMat {
    let (vals, vecs) = crate::linalg::eigh(m);
    let top = vals.iter().copied().fold(0.0, f64::max);
    let cols: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > SUPPORT_TOL * top.max(1e-300)).collect();
    if cols.is_empty() {
        return CMat::zeros(m.nrows(), 0);
    }
    CMat::from_fn(m.nrows(), cols.len(), |i, j| vecs[(i, cols[j])])
}

/// Adds the fidelity block and the constraints tying its corners.
pub fn fidelity_epigraph(p: &mut SdpProblem, r: Corner, s: Corner) -> Result<FidelityEpigraph> {
    let d = r.dim()?;
    if s.dim()? != d {
        return Err(Error::DimensionMismatch(format!("fidelity corners have dimensions {d} and {}", s.dim()?)));
    }
    let iso = |c: &Corner| match c {
        Corner::Fixed(m) => support(m),
        _ => CMat::identity(d, d),
    };
    let (top, bottom) = (iso(&r), iso(&s));
    let (kr, ks) = (top.ncols(), bottom.ncols());
    // A zero corner forces X = 0: keep a one-dimensional placeholder block.
    let block = p.add_block((kr + ks).max(1));
    if kr + ks == 0 {
        p.add_constraint(vec![(block, CMat::identity(1, 1))], Sense::Eq, 0.0)?;
    }
    let epi = FidelityEpigraph { block, dim: d, top, bottom };
    for (corner, offset, basis) in [(r, 0, epi.top.clone()), (s, kr, epi.bottom.clone())] {
        let k = basis.ncols();
        let raw = LinOp::diag_block((kr + ks).max(1), offset, k);
        match corner {
            Corner::Free(_) => {}
            Corner::Fixed(m) => {
                if k > 0 {
                    let reduced = basis.adjoint() * m * &basis;
                    p.add_matrix_equality(vec![(block, raw)], &crate::linalg::hermitian_part(&reduced))?;
                }
            }
            Corner::Linked(terms) => {
                let op = embed_corner(kr + ks, offset, basis);
                let mut all = vec![(block, op)];
                all.extend(terms.into_iter().map(|(b, o)| (b, o.neg())));
                p.add_matrix_equality(all, &CMat::zeros(d, d))?;
            }
        }
    }
    Ok(epi)
}

/// `F(r, s)` computed through the epigraph SDP.
pub fn fidelity_by_sdp(r: &CMat, s: &CMat) -> Result<f64> {
    let mut p = SdpProblem::new();
    let epi = fidelity_epigraph(&mut p, Corner::Fixed(r.clone()), Corner::Fixed(s.clone()))?;
    if epi.top.ncols() + epi.bottom.ncols() == 0 {
        return Ok(0.0);
    }
    p.add_objective(epi.block, -epi.re_trace_coeff())?;
    let sol = p.solve_default()?;
    sol.require_optimal("fidelity epigraph")?;
    Ok(-sol.objective)
}
