//! Quantum channels as Kraus sets, with Choi and Stinespring forms.
//!
//! Conventions:
//! - Choi matrices live on `out ⊗ in`: `J = Σ_ij N(|i><j|) ⊗ |i><j|`.
//! - Stinespring: `V|φ> = Σ_k (K_k|φ>) ⊗ |k>_E`, so rows of `V` are indexed
//!   by `(o, k) ↦ o·env + k`.
//! - Erasure: the output is the input space plus one flag dimension at the
//!   last index.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    check_cap, cr, eigh, eigvalsh, identity, max_abs, partial_trace_mat, permute_mat, CMat, DensityState,
    SystemLayout, C64,
};

/// Trace-preservation tolerance for Kraus sets and Choi matrices.
pub const TP_TOL: f64 = 1e-9;
/// Most negative Choi eigenvalue accepted as completely positive.
pub const CP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct QuantumChannel {
    in_dim: usize,
    out_dim: usize,
    kraus: Vec<CMat>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChoiMatrix {
    in_dim: usize,
    out_dim: usize,
    matrix: CMat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StinespringIsometry {
    in_dim: usize,
    out_dim: usize,
    env_dim: usize,
    matrix: CMat,
}

/// Named channel families.
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelKind {
    /// Erasure with probability `p` on a `d`-dimensional input.
    Erasure { p: f64, d: usize },
    /// `ρ ↦ (1 − p)ρ + p·Tr(ρ)·I/d`.
    Depolarizing { p: f64, d: usize },
    /// Qubit amplitude damping with decay probability `g`.
    AmplitudeDamping { g: f64 },
    Identity { d: usize },
    FromKraus { in_dim: usize, out_dim: usize, kraus: Vec<CMat> },
}

fn check_prob(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::ParameterOutOfRange(format!("{name} = {v} is not in [0, 1]")));
    }
    Ok(())
}

fn check_dim(d: usize) -> Result<()> {
    if d == 0 {
        return Err(Error::ParameterOutOfRange("dimension must be at least 1".into()));
    }
    check_cap(d)
}

/// `X^a Z^b` on `C^d`.
fn weyl(d: usize, a: usize, b: usize) -> CMat {
    let omega = 2.0 * std::f64::consts::PI / d as f64;
    let mut w = CMat::zeros(d, d);
    for j in 0..d {
        let phase = C64::from_polar(1.0, omega * (b * j) as f64);
        w[((j + a) % d, j)] = phase;
    }
    w
}

pub fn make_channel(kind: ChannelKind) -> Result<QuantumChannel> {
    match kind {
        ChannelKind::Erasure { p, d } => {
            check_prob("p", p)?;
            check_dim(d + 1)?;
            let mut kraus = Vec::with_capacity(d + 1);
            let mut keep = CMat::zeros(d + 1, d);
            for i in 0..d {
                keep[(i, i)] = cr((1.0 - p).sqrt());
            }
            kraus.push(keep);
            for i in 0..d {
                let mut k = CMat::zeros(d + 1, d);
                k[(d, i)] = cr(p.sqrt());
                kraus.push(k);
            }
            QuantumChannel::new(d, d + 1, kraus)
        }
        ChannelKind::Depolarizing { p, d } => {
            check_prob("p", p)?;
            check_dim(d)?;
            let dd = (d * d) as f64;
            let mut kraus = Vec::with_capacity(d * d);
            for a in 0..d {
                for b in 0..d {
                    let w = if a == 0 && b == 0 { 1.0 - p + p / dd } else { p / dd };
                    kraus.push(weyl(d, a, b) * cr(w.sqrt()));
                }
            }
            QuantumChannel::new(d, d, kraus)
        }
        ChannelKind::AmplitudeDamping { g } => {
            check_prob("g", g)?;
            let mut k0 = CMat::zeros(2, 2);
            k0[(0, 0)] = cr(1.0);
            k0[(1, 1)] = cr((1.0 - g).sqrt());
            let mut k1 = CMat::zeros(2, 2);
            k1[(0, 1)] = cr(g.sqrt());
            QuantumChannel::new(2, 2, vec![k0, k1])
        }
        ChannelKind::Identity { d } => {
            check_dim(d)?;
            QuantumChannel::new(d, d, vec![identity(d)])
        }
        ChannelKind::FromKraus { in_dim, out_dim, kraus } => QuantumChannel::new(in_dim, out_dim, kraus),
    }
}

pub fn erasure(p: f64) -> Result<QuantumChannel> {
    make_channel(ChannelKind::Erasure { p, d: 2 })
}

pub fn depolarizing(p: f64) -> Result<QuantumChannel> {
    make_channel(ChannelKind::Depolarizing { p, d: 2 })
}

pub fn amplitude_damping(g: f64) -> Result<QuantumChannel> {
    make_channel(ChannelKind::AmplitudeDamping { g })
}

pub fn identity_channel(d: usize) -> Result<QuantumChannel> {
    make_channel(ChannelKind::Identity { d })
}

/// `Tr_in[J (I_out ⊗ Xᵀ)]`: the action of the (not necessarily CPTP) map with
/// Choi matrix `j` on `x`. Linear in both arguments.
pub fn choi_apply(j: &CMat, in_dim: usize, out_dim: usize, x: &CMat) -> CMat {
    let mut out = CMat::zeros(out_dim, out_dim);
    for a in 0..out_dim {
        for b in 0..out_dim {
            let mut acc = C64::new(0.0, 0.0);
            for i in 0..in_dim {
                for k in 0..in_dim {
                    acc += j[(a * in_dim + i, b * in_dim + k)] * x[(i, k)];
                }
            }
            out[(a, b)] = acc;
        }
    }
    out
}

impl QuantumChannel {
    pub fn new(in_dim: usize, out_dim: usize, kraus: Vec<CMat>) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::ParameterOutOfRange("channel dimensions must be positive".into()));
        }
        check_cap(in_dim)?;
        check_cap(out_dim)?;
        if kraus.is_empty() {
            return Err(Error::ParameterOutOfRange("a channel needs at least one Kraus operator".into()));
        }
        for k in &kraus {
            if k.nrows() != out_dim || k.ncols() != in_dim {
                return Err(Error::DimensionMismatch(format!(
                    "Kraus operator is {}x{}, expected {out_dim}x{in_dim}",
                    k.nrows(),
                    k.ncols()
                )));
            }
        }
        let mut sum = CMat::zeros(in_dim, in_dim);
        for k in &kraus {
            sum += k.adjoint() * k;
        }
        let dev = max_abs(&(sum - identity(in_dim)));
        if !(dev <= TP_TOL) {
            return Err(Error::NotTracePreserving(dev));
        }
        Ok(QuantumChannel { in_dim, out_dim, kraus })
    }

    /// Channel from a Stinespring isometry with rows ordered `(out, env)`.
    pub fn from_isometry(v: &CMat, out_dim: usize, env_dim: usize) -> Result<Self> {
        if v.nrows() != out_dim * env_dim {
            return Err(Error::DimensionMismatch(format!(
                "isometry has {} rows, expected {out_dim}·{env_dim}",
                v.nrows()
            )));
        }
        let in_dim = v.ncols();
        let kraus = (0..env_dim)
            .map(|e| CMat::from_fn(out_dim, in_dim, |o, i| v[(o * env_dim + e, i)]))
            .collect();
        Self::new(in_dim, out_dim, kraus)
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn env_dim(&self) -> usize {
        self.kraus.len()
    }

    pub fn kraus(&self) -> &[CMat] {
        &self.kraus
    }

    /// Action on an arbitrary `in_dim × in_dim` matrix.
    pub fn apply(&self, x: &CMat) -> CMat {
        assert_eq!(x.nrows(), self.in_dim, "input dimension mismatch");
        let mut out = CMat::zeros(self.out_dim, self.out_dim);
        for k in &self.kraus {
            out += k * x * k.adjoint();
        }
        out
    }

    pub fn apply_state(&self, s: &DensityState, out_label: &str) -> Result<DensityState> {
        if s.layout().len() != 1 {
            return Err(Error::LayoutMismatch("apply_state expects a single-subsystem state".into()));
        }
        let label = s.layout().labels()[0].to_string();
        self.apply_to(s, &label, out_label)
    }

    /// Apply the channel to one subsystem of a state; the subsystem keeps its
    /// position and is renamed `out_label`.
    pub fn apply_to(&self, s: &DensityState, label: &str, out_label: &str) -> Result<DensityState> {
        let layout = s.layout();
        let pos = layout.index_of(label)?;
        if layout.dims()[pos] != self.in_dim {
            return Err(Error::DimensionMismatch(format!(
                "subsystem `{label}` has dimension {}, channel input is {}",
                layout.dims()[pos],
                self.in_dim
            )));
        }
        if out_label != label && layout.contains(out_label) {
            return Err(Error::LabelCollision(out_label.to_string()));
        }
        let mut new_subs: Vec<(String, usize)> = layout.subsystems().to_vec();
        new_subs[pos] = (out_label.to_string(), self.out_dim);
        let new_layout = SystemLayout::new(new_subs)?;
        let dims = layout.dims();
        let n = dims.len();
        // Bring the target to the front, act with K ⊗ I, move it back.
        let mut order = vec![pos];
        order.extend((0..n).filter(|&k| k != pos));
        let front = permute_mat(s.matrix(), &dims, &order);
        let rest: usize = dims.iter().enumerate().filter(|(k, _)| *k != pos).map(|(_, d)| d).product();
        let id = identity(rest);
        let mut out = CMat::zeros(self.out_dim * rest, self.out_dim * rest);
        for k in &self.kraus {
            let big = k.kronecker(&id);
            out += &big * &front * big.adjoint();
        }
        let mut out_dims = vec![self.out_dim];
        out_dims.extend((0..n).filter(|&k| k != pos).map(|k| dims[k]));
        let mut inverse = vec![0usize; n];
        for (new_pos, &old) in order.iter().enumerate() {
            inverse[old] = new_pos;
        }
        let back = permute_mat(&out, &out_dims, &inverse);
        DensityState::new(new_layout, back)
    }

    pub fn to_choi(&self) -> ChoiMatrix {
        let (din, dout) = (self.in_dim, self.out_dim);
        let mut j = CMat::zeros(din * dout, din * dout);
        for k in &self.kraus {
            let w = nalgebra::DVector::from_fn(din * dout, |r, _| k[(r / din, r % din)]);
            j += &w * w.adjoint();
        }
        ChoiMatrix { in_dim: din, out_dim: dout, matrix: crate::linalg::hermitian_part(&j) }
    }

    pub fn from_choi(j: &ChoiMatrix) -> Result<Self> {
        j.validate()?;
        let (din, dout) = (j.in_dim, j.out_dim);
        let (vals, vecs) = eigh(&j.matrix);
        let top = vals.last().copied().unwrap_or(0.0).max(0.0);
        let mut kraus = Vec::new();
        for (idx, &l) in vals.iter().enumerate().rev() {
            if l <= 1e-13 * top.max(1.0) {
                continue;
            }
            let s = cr(l.sqrt());
            kraus.push(CMat::from_fn(dout, din, |o, i| vecs[(o * din + i, idx)] * s));
        }
        if kraus.is_empty() {
            return Err(Error::NotCompletelyPositive(0.0));
        }
        Self::new(din, dout, kraus)
    }

    pub fn stinespring(&self) -> StinespringIsometry {
        let env = self.env_dim();
        let v = CMat::from_fn(self.out_dim * env, self.in_dim, |r, i| self.kraus[r % env][(r / env, i)]);
        StinespringIsometry { in_dim: self.in_dim, out_dim: self.out_dim, env_dim: env, matrix: v }
    }

    /// Complementary channel: swap the output and environment legs of the
    /// Stinespring isometry.
    pub fn complementary(&self) -> QuantumChannel {
        let v = self.stinespring();
        let swapped = v.swapped_legs();
        QuantumChannel::from_isometry(&swapped, v.env_dim, v.out_dim)
            .expect("complementary of a valid channel is a channel")
    }

    /// `self ∘ first`: apply `first`, then `self`.
    pub fn compose(&self, first: &QuantumChannel) -> Result<QuantumChannel> {
        compose(self, first)
    }

    /// Equivalent channel with the minimal number of Kraus operators.
    pub fn minimal(&self) -> QuantumChannel {
        QuantumChannel::from_choi(&self.to_choi()).unwrap_or_else(|_| self.clone())
    }

    /// Largest entrywise difference between the actions of two channels on
    /// the matrix units `|i><j|`, which span all inputs.
    pub fn action_distance(&self, other: &QuantumChannel) -> Result<f64> {
        if self.in_dim != other.in_dim || self.out_dim != other.out_dim {
            return Err(Error::DimensionMismatch("channels have different shapes".into()));
        }
        let mut worst = 0.0f64;
        for x in spanning_set(self.in_dim) {
            worst = worst.max(max_abs(&(self.apply(&x) - other.apply(&x))));
        }
        Ok(worst)
    }
}

/// Matrix units `|i><j|` of dimension `d`.
pub fn spanning_set(d: usize) -> Vec<CMat> {
    let mut out = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            let mut e = CMat::zeros(d, d);
            e[(i, j)] = cr(1.0);
            out.push(e);
        }
    }
    out
}

/// `f ∘ g` (apply `g` first).
pub fn compose(f: &QuantumChannel, g: &QuantumChannel) -> Result<QuantumChannel> {
    if g.out_dim != f.in_dim {
        return Err(Error::DimensionMismatch(format!(
            "cannot compose: inner output {} ≠ outer input {}",
            g.out_dim, f.in_dim
        )));
    }
    let mut kraus = Vec::with_capacity(f.kraus.len() * g.kraus.len());
    for a in &f.kraus {
        for b in &g.kraus {
            kraus.push(a * b);
        }
    }
    QuantumChannel::new(g.in_dim, f.out_dim, kraus)
}

/// `a ⊗ b` acting on `in_a ⊗ in_b`.
pub fn tensor(a: &QuantumChannel, b: &QuantumChannel) -> Result<QuantumChannel> {
    check_cap(a.in_dim * b.in_dim)?;
    check_cap(a.out_dim * b.out_dim)?;
    let mut kraus = Vec::with_capacity(a.kraus.len() * b.kraus.len());
    for x in &a.kraus {
        for y in &b.kraus {
            kraus.push(x.kronecker(y));
        }
    }
    QuantumChannel::new(a.in_dim * b.in_dim, a.out_dim * b.out_dim, kraus)
}

pub fn tensor_power(c: &QuantumChannel, n: usize) -> Result<QuantumChannel> {
    if n == 0 {
        return Err(Error::ParameterOutOfRange("tensor power needs n ≥ 1".into()));
    }
    let cap = crate::linalg::max_dim();
    let grows = |d: usize| d.checked_pow(n as u32).filter(|&v| v <= cap);
    let (Some(_), Some(_)) = (grows(c.in_dim), grows(c.out_dim)) else {
        let worst = c.in_dim.max(c.out_dim).saturating_pow(n as u32);
        return Err(Error::DimensionCap { dim: worst, cap });
    };
    let mut acc = c.clone();
    for _ in 1..n {
        acc = tensor(&acc, c)?;
    }
    Ok(acc)
}

impl ChoiMatrix {
    /// Validates PSD and `Tr_out J = I_in`.
    pub fn new(in_dim: usize, out_dim: usize, matrix: CMat) -> Result<Self> {
        let j = ChoiMatrix { in_dim, out_dim, matrix };
        j.validate()?;
        Ok(ChoiMatrix { matrix: crate::linalg::hermitian_part(&j.matrix), ..j })
    }

    /// No validation; used for witness candidates that are checked separately.
    pub fn unchecked(in_dim: usize, out_dim: usize, matrix: CMat) -> Self {
        ChoiMatrix { in_dim, out_dim, matrix }
    }

    fn validate(&self) -> Result<()> {
        let n = self.in_dim * self.out_dim;
        if self.matrix.nrows() != n || self.matrix.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "Choi matrix is {}x{}, expected {n}x{n}",
                self.matrix.nrows(),
                self.matrix.ncols()
            )));
        }
        let min = eigvalsh(&self.matrix).first().copied().unwrap_or(0.0);
        if min < -CP_TOL {
            return Err(Error::NotCompletelyPositive(min));
        }
        let dev = self.tp_deviation();
        if !(dev <= TP_TOL) {
            return Err(Error::NotTracePreserving(dev));
        }
        Ok(())
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    /// `max |Tr_out J − I|`.
    pub fn tp_deviation(&self) -> f64 {
        let t = partial_trace_mat(&self.matrix, &[self.out_dim, self.in_dim], &[1]);
        max_abs(&(t - identity(self.in_dim)))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        eigvalsh(&self.matrix).first().copied().unwrap_or(0.0)
    }

    pub fn rank(&self, tol: f64) -> usize {
        eigvalsh(&self.matrix).iter().filter(|&&l| l > tol).count()
    }

    pub fn apply(&self, x: &CMat) -> CMat {
        choi_apply(&self.matrix, self.in_dim, self.out_dim, x)
    }
}

impl StinespringIsometry {
    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn env_dim(&self) -> usize {
        self.env_dim
    }

    /// `max |V†V − I|`.
    pub fn isometry_defect(&self) -> f64 {
        max_abs(&(self.matrix.adjoint() * &self.matrix - identity(self.in_dim)))
    }

    /// Rows reordered from `(out, env)` to `(env, out)`.
    pub fn swapped_legs(&self) -> CMat {
        let (o, e) = (self.out_dim, self.env_dim);
        CMat::from_fn(o * e, self.in_dim, |r, i| {
            let (env, out) = (r / o, r % o);
            self.matrix[(out * e + env, i)]
        })
    }
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KrausJson {
    pub in_dim: usize,
    pub out_dim: usize,
    pub kraus: Vec<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZooJson {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
}

/// Either an explicit Kraus set or a named zoo channel.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChannelJson {
    Kraus(KrausJson),
    Zoo(ZooJson),
}

impl ZooJson {
    pub fn to_kind(&self) -> Result<ChannelKind> {
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| Error::Parse(format!("channel kind `{}` needs parameter `{name}`", self.kind)))
        };
        let d = self.d.unwrap_or(2);
        Ok(match self.kind.as_str() {
            "erasure" => ChannelKind::Erasure { p: need(self.p, "p")?, d },
            "depolarizing" => ChannelKind::Depolarizing { p: need(self.p, "p")?, d },
            "amplitude_damping" => ChannelKind::AmplitudeDamping { g: need(self.g.or(self.p), "g")? },
            "identity" => ChannelKind::Identity { d },
            other => return Err(Error::Parse(format!("unknown channel kind `{other}`"))),
        })
    }
}

impl ChannelJson {
    pub fn build(&self) -> Result<QuantumChannel> {
        match self {
            ChannelJson::Zoo(z) => make_channel(z.to_kind()?),
            ChannelJson::Kraus(k) => {
                let kraus = k
                    .kraus
                    .iter()
                    .map(|pairs| crate::linalg::matrix_from_pairs(k.out_dim, k.in_dim, pairs))
                    .collect::<Result<Vec<_>>>()?;
                QuantumChannel::new(k.in_dim, k.out_dim, kraus)
            }
        }
    }
}

impl QuantumChannel {
    pub fn to_json_value(&self) -> KrausJson {
        KrausJson {
            in_dim: self.in_dim,
            out_dim: self.out_dim,
            kraus: self.kraus.iter().map(crate::linalg::matrix_to_pairs).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_json_value()).expect("channel serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let j: ChannelJson = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        j.build()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{projector, CVec};
    use crate::random;
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn plus() -> CMat {
        let v = CVec::from_vec(vec![cr(0.5f64.sqrt()), cr(0.5f64.sqrt())]);
        projector(&v)
    }

    #[test]
    fn identity_preserves_plus() {
        let id = identity_channel(2).unwrap();
        assert!(max_abs(&(id.apply(&plus()) - plus())) < 1e-15);
    }

    #[test]
    fn erasure_on_maximally_mixed() {
        let e = erasure(0.5).unwrap();
        let out = e.apply(&(identity(2) * cr(0.5)));
        let expect = CMat::from_diagonal(&DVector::from_vec(vec![cr(0.25), cr(0.25), cr(0.5)]));
        assert!(max_abs(&(out - expect)) < 1e-15);
        assert_eq!(e.out_dim(), 3);
    }

    #[test]
    fn full_amplitude_damping_resets() {
        let ad = amplitude_damping(1.0).unwrap();
        let one = CMat::from_diagonal(&DVector::from_vec(vec![cr(0.0), cr(1.0)]));
        let zero = CMat::from_diagonal(&DVector::from_vec(vec![cr(1.0), cr(0.0)]));
        assert!(max_abs(&(ad.apply(&one) - zero)) < 1e-15);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(erasure(1.5), Err(Error::ParameterOutOfRange(_))));
        assert!(matches!(amplitude_damping(-0.1), Err(Error::ParameterOutOfRange(_))));
        assert!(identity_channel(0).is_err());
        let bad = vec![identity(2) * cr(0.9)];
        assert!(matches!(QuantumChannel::new(2, 2, bad), Err(Error::NotTracePreserving(_))));
    }

    #[test]
    fn zoo_is_trace_preserving_with_valid_choi() {
        let zoo = vec![
            erasure(0.0).unwrap(),
            erasure(0.3).unwrap(),
            erasure(1.0).unwrap(),
            depolarizing(0.4).unwrap(),
            depolarizing(1.0).unwrap(),
            make_channel(ChannelKind::Depolarizing { p: 0.7, d: 3 }).unwrap(),
            amplitude_damping(0.25).unwrap(),
            amplitude_damping(0.75).unwrap(),
            identity_channel(3).unwrap(),
        ];
        for c in zoo {
            let j = c.to_choi();
            assert!(j.min_eigenvalue() > -1e-12);
            assert!(j.tp_deviation() < 1e-12);
            assert!(ChoiMatrix::new(j.in_dim(), j.out_dim(), j.matrix().clone()).is_ok());
        }
    }

    #[test]
    fn fully_depolarizing_replaces_with_maximally_mixed() {
        let c = depolarizing(1.0).unwrap();
        let out = c.apply(&plus());
        assert!(max_abs(&(out - identity(2) * cr(0.5))) < 1e-15);
    }

    #[test]
    fn choi_of_identity() {
        let j = identity_channel(2).unwrap().to_choi();
        assert_abs_diff_eq!(crate::linalg::trace(j.matrix()).re, 2.0, epsilon = 1e-15);
        let phi = crate::linalg::PureState::maximally_entangled("A", "B", 2).unwrap();
        let expect = projector(phi.amplitudes()) * cr(2.0);
        assert!(max_abs(&(j.matrix() - expect)) < 1e-15);
    }

    #[test]
    fn choi_round_trip_on_random_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let c = random::channel(&mut rng, 2, 2, 3);
        let j = c.to_choi();
        let back = QuantumChannel::from_choi(&j).unwrap();
        assert!(c.action_distance(&back).unwrap() <= 1e-9);
        assert_eq!(back.env_dim(), j.rank(1e-10));
    }

    #[test]
    fn from_choi_rejects_negative_eigenvalue() {
        let mut m = identity_channel(2).unwrap().to_choi().matrix().clone();
        // |01><01| is orthogonal to the maximally entangled vector.
        m[(1, 1)] = cr(-0.1);
        m[(2, 2)] = cr(0.1);
        let j = ChoiMatrix::unchecked(2, 2, m);
        assert!(matches!(QuantumChannel::from_choi(&j), Err(Error::NotCompletelyPositive(_))));
    }

    #[test]
    fn stinespring_identity() {
        let v = identity_channel(3).unwrap().stinespring();
        assert_eq!(v.env_dim(), 1);
        assert!(max_abs(&(v.matrix() - identity(3))) < 1e-15);
    }

    #[test]
    fn stinespring_reproduces_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let c = random::channel(&mut rng, 2, 3, 2);
        let v = c.stinespring();
        assert!(v.isometry_defect() <= 1e-10);
        for x in spanning_set(2) {
            let big = v.matrix() * &x * v.matrix().adjoint();
            let traced = partial_trace_mat(&big, &[3, 2], &[0]);
            assert!(max_abs(&(traced - c.apply(&x))) <= 1e-9);
        }
    }

    #[test]
    fn erasure_environment_is_erasure_with_moved_flag() {
        let p = 0.5;
        let comp = erasure(p).unwrap().complementary();
        // Environment index 0 plays the flag; move it to the end.
        let perm = CMat::from_fn(3, 3, |r, c| cr(if (r + 1) % 3 == c { 1.0 } else { 0.0 }));
        for x in spanning_set(2) {
            let env = &perm * comp.apply(&x) * perm.adjoint();
            assert!(max_abs(&(env - erasure(1.0 - p).unwrap().apply(&x))) < 1e-12);
        }
    }

    #[test]
    fn complementary_of_erasure_is_erasure_with_flipped_probability() {
        for p in [0.1, 0.3, 0.8] {
            let comp = erasure(p).unwrap().complementary();
            let perm = CMat::from_fn(3, 3, |r, c| cr(if (r + 1) % 3 == c { 1.0 } else { 0.0 }));
            let target = erasure(1.0 - p).unwrap();
            for x in spanning_set(2) {
                let env = &perm * comp.apply(&x) * perm.adjoint();
                assert!(max_abs(&(env - target.apply(&x))) < 1e-12);
            }
        }
    }

    #[test]
    fn complementary_of_identity_forgets() {
        let comp = identity_channel(3).unwrap().complementary();
        assert_eq!(comp.out_dim(), 1);
        for x in spanning_set(3) {
            let out = comp.apply(&x);
            assert_abs_diff_eq!(out[(0, 0)].re, crate::linalg::trace(&x).re, epsilon = 1e-15);
        }
    }

    #[test]
    fn complementary_outputs_share_spectrum_on_pure_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = random::channel(&mut rng, 2, 3, 2);
        let comp = c.complementary();
        for _ in 0..5 {
            let psi = random::pure(&mut rng, SystemLayout::single("A", 2).unwrap());
            let rho = projector(psi.amplitudes());
            let sb = crate::entropies::entropy_of_matrix(&c.apply(&rho));
            let se = crate::entropies::entropy_of_matrix(&comp.apply(&rho));
            assert_abs_diff_eq!(sb, se, epsilon = 1e-9);
        }
    }

    #[test]
    fn double_complementary_matches_original_on_pure_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let c = random::channel(&mut rng, 2, 2, 3);
        let cc = c.complementary().complementary();
        let env = c.complementary();
        for _ in 0..5 {
            let psi = random::pure(&mut rng, SystemLayout::single("A", 2).unwrap());
            let rho = projector(psi.amplitudes());
            let a = crate::entropies::entropy_of_matrix(&cc.apply(&rho));
            let b = crate::entropies::entropy_of_matrix(&env.apply(&rho));
            assert_abs_diff_eq!(a, b, epsilon = 1e-8);
        }
    }

    #[test]
    fn compose_with_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let c = random::channel(&mut rng, 2, 3, 2);
        let left = compose(&identity_channel(3).unwrap(), &c).unwrap();
        let right = compose(&c, &identity_channel(2).unwrap()).unwrap();
        assert!(left.action_distance(&c).unwrap() < 1e-9);
        assert!(right.action_distance(&c).unwrap() < 1e-9);
    }

    #[test]
    fn damping_composes_multiplicatively() {
        let ad = amplitude_damping(0.5).unwrap();
        let twice = compose(&ad, &ad).unwrap();
        assert!(twice.action_distance(&amplitude_damping(0.75).unwrap()).unwrap() < 1e-9);
    }

    #[test]
    fn compose_rejects_mismatch() {
        let e = erasure(0.5).unwrap();
        assert!(matches!(compose(&e, &e), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn tensor_power_dimensions_and_action() {
        let e = erasure(0.5).unwrap();
        let e2 = tensor_power(&e, 2).unwrap();
        assert_eq!((e2.in_dim(), e2.out_dim()), (4, 9));
        for x in spanning_set(2) {
            for y in spanning_set(2) {
                let joint = e2.apply(&x.kronecker(&y));
                let parallel = e.apply(&x).kronecker(&e.apply(&y));
                assert!(max_abs(&(joint - parallel)) < 1e-9);
            }
        }
    }

    #[test]
    fn tensor_power_respects_cap() {
        let e = erasure(0.5).unwrap();
        assert!(matches!(tensor_power(&e, 6), Err(Error::DimensionCap { .. })));
    }

    #[test]
    fn apply_to_subsystem_matches_kron() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let c = random::channel(&mut rng, 2, 3, 2);
        let s = random::density(&mut rng, SystemLayout::new(vec![("R", 2), ("A", 2), ("Q", 2)]).unwrap(), 8);
        let out = c.apply_to(&s, "A", "B").unwrap();
        assert_eq!(out.layout().labels(), vec!["R", "B", "Q"]);
        let full = make_channel(ChannelKind::FromKraus {
            in_dim: 8,
            out_dim: 12,
            kraus: c
                .kraus()
                .iter()
                .map(|k| identity(2).kronecker(k).kronecker(&identity(2)))
                .collect(),
        })
        .unwrap();
        assert!(max_abs(&(full.apply(s.matrix()) - out.matrix())) < 1e-12);
    }

    #[test]
    fn choi_apply_matches_kraus_action() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let c = random::channel(&mut rng, 3, 2, 4);
        let j = c.to_choi();
        for x in spanning_set(3) {
            assert!(max_abs(&(j.apply(&x) - c.apply(&x))) < 1e-12);
        }
    }

    #[test]
    fn json_forms() {
        let zoo = QuantumChannel::from_json(r#"{"kind":"erasure","p":0.5}"#).unwrap();
        assert_eq!(zoo, erasure(0.5).unwrap());
        let ad = QuantumChannel::from_json(r#"{"kind":"amplitude_damping","g":0.25}"#).unwrap();
        assert_eq!(ad, amplitude_damping(0.25).unwrap());
        let text = zoo.to_json();
        assert!(text.starts_with(r#"{"in_dim":2,"out_dim":3,"kraus":"#));
        assert_eq!(QuantumChannel::from_json(&text).unwrap(), zoo);
        assert!(QuantumChannel::from_json(r#"{"kind":"bogus","p":0.5}"#).is_err());
    }
}
