//! Entanglement-generation and private classical codes over `n` channel uses.
//!
//! Subsystems are labelled per use: inputs `A1..An`, outputs `B1..Bn`,
//! environments `E1..En`. The reference of an entanglement-generation code is
//! `R` and its decoded system `A`; a private code sends messages `X'` and
//! decodes into `X`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{ChoiMatrix, KrausJson, QuantumChannel};
use crate::degradability::{polish_tp, project_cp, tp_op};
use crate::error::{Error, Result};
use crate::linalg::{
    check_cap, cr, fidelity_mat, hermitian_part, identity, kron, matrix_from_pairs, matrix_to_pairs, projector,
    purified_distance, trace, CMat, CVec, DensityState, PureState, StateJson, SystemLayout,
};
use crate::random;
use crate::sdp::{fidelity_epigraph, Corner, LinOp, SdpProblem, Sense};

pub const REFERENCE: &str = "R";
pub const DECODED: &str = "A";
pub const MESSAGE: &str = "X'";
pub const GUESS: &str = "X";

pub fn input_labels(n: usize) -> Vec<String> {
    (1..=n).map(|k| format!("A{k}")).collect()
}

pub fn output_labels(n: usize) -> Vec<String> {
    (1..=n).map(|k| format!("B{k}")).collect()
}

pub fn env_labels(n: usize) -> Vec<String> {
    (1..=n).map(|k| format!("E{k}")).collect()
}

pub(crate) fn as_strs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

#[derive(Debug, Clone)]
pub struct EntGenCode {
    n: usize,
    psi: PureState,
    decoder: QuantumChannel,
}

impl EntGenCode {
    /// `psi` lives on `A1..An ⊗ R` (any order); the decoder maps `B1..Bn → A`
    /// with `|A| = |R|`.
    pub fn new(n: usize, psi: PureState, decoder: QuantumChannel) -> Result<Self> {
        if n == 0 {
            return Err(Error::ParameterOutOfRange("a code needs n ≥ 1 channel uses".into()));
        }
        let mut order = input_labels(n);
        order.push(REFERENCE.to_string());
        if psi.layout().len() != n + 1 {
            return Err(Error::LayoutMismatch(format!("code input must be on {order:?}")));
        }
        let psi = psi.permute(&as_strs(&order))?;
        let dims = psi.layout().dims();
        if dims[..n].iter().any(|&d| d != dims[0]) {
            return Err(Error::DimensionMismatch("all channel inputs must have the same dimension".into()));
        }
        if decoder.out_dim() != dims[n] {
            return Err(Error::DimensionMismatch(format!(
                "decoder output {} differs from reference dimension {}",
                decoder.out_dim(),
                dims[n]
            )));
        }
        Ok(EntGenCode { n, psi, decoder })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `N = |A| = |R|`.
    pub fn dim(&self) -> usize {
        self.decoder.out_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.psi.layout().dims()[0]
    }

    pub fn psi(&self) -> &PureState {
        &self.psi
    }

    pub fn decoder(&self) -> &QuantumChannel {
        &self.decoder
    }

    pub fn with_decoder(&self, decoder: QuantumChannel) -> Result<Self> {
        Self::new(self.n, self.psi.clone(), decoder)
    }
}

#[derive(Debug, Clone)]
pub struct PrivateCode {
    n: usize,
    encoders: Vec<DensityState>,
    decoder: QuantumChannel,
}

impl PrivateCode {
    /// One normalized state on `A1..An` per message; the decoder maps
    /// `B1..Bn → X` with `|X| = M`.
    pub fn new(n: usize, encoders: Vec<DensityState>, decoder: QuantumChannel) -> Result<Self> {
        if n == 0 {
            return Err(Error::ParameterOutOfRange("a code needs n ≥ 1 channel uses".into()));
        }
        if encoders.is_empty() {
            return Err(Error::ParameterOutOfRange("a private code needs at least one message".into()));
        }
        let order = input_labels(n);
        let mut canon = Vec::with_capacity(encoders.len());
        for nu in encoders {
            nu.require_normalized()?;
            if nu.layout().len() != n {
                return Err(Error::LayoutMismatch(format!("encoder states must be on {order:?}")));
            }
            canon.push(nu.permute(&as_strs(&order))?);
        }
        let dims = canon[0].layout().dims();
        if dims.iter().any(|&d| d != dims[0]) || canon.iter().any(|nu| nu.layout().dims() != dims) {
            return Err(Error::DimensionMismatch("encoder states must share one input dimension".into()));
        }
        if decoder.out_dim() != canon.len() {
            return Err(Error::DimensionMismatch(format!(
                "decoder output {} differs from message count {}",
                decoder.out_dim(),
                canon.len()
            )));
        }
        Ok(PrivateCode { n, encoders: canon, decoder })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn messages(&self) -> usize {
        self.encoders.len()
    }

    pub fn input_dim(&self) -> usize {
        self.encoders[0].layout().dims()[0]
    }

    pub fn encoders(&self) -> &[DensityState] {
        &self.encoders
    }

    pub fn decoder(&self) -> &QuantumChannel {
        &self.decoder
    }

    /// The same code with messages relabelled by `perm` (message `m` becomes
    /// `perm[m]`) on both encoder and decoder.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let m = self.messages();
        let mut seen = vec![false; m];
        if perm.len() != m || perm.iter().any(|&p| p >= m || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::ParameterOutOfRange("not a permutation of the messages".into()));
        }
        let mut enc = self.encoders.clone();
        for (old, &new) in perm.iter().enumerate() {
            enc[new] = self.encoders[old].clone();
        }
        let p = CMat::from_fn(m, m, |i, j| if perm[j] == i { cr(1.0) } else { cr(0.0) });
        let kraus = self.decoder.kraus().iter().map(|k| &p * k).collect();
        let dec = QuantumChannel::new(self.decoder.in_dim(), m, kraus)?;
        Self::new(self.n, enc, dec)
    }

    /// Pads the code with `extra` unused channel uses: the extra inputs are
    /// fixed to `|0⟩` and the decoder discards the extra outputs.
    pub fn padded(&self, extra: usize, out_dim: usize) -> Result<Self> {
        let din = self.input_dim();
        let mut zero = CMat::zeros(din, din);
        zero[(0, 0)] = cr(1.0);
        let n = self.n + extra;
        let labels = input_labels(n);
        let mut enc = Vec::with_capacity(self.messages());
        for nu in &self.encoders {
            let mut m = nu.matrix().clone();
            for _ in 0..extra {
                m = kron(&m, &zero);
            }
            let layout = SystemLayout::new(labels.iter().map(|l| (l.clone(), din)).collect())?;
            enc.push(DensityState::new(layout, m)?);
        }
        let rest = out_dim.pow(extra as u32);
        let mut kraus = Vec::new();
        for k in self.decoder.kraus() {
            for j in 0..rest {
                let bra = CMat::from_fn(1, rest, |_, c| if c == j { cr(1.0) } else { cr(0.0) });
                kraus.push(kron(k, &bra));
            }
        }
        let dec = QuantumChannel::new(self.decoder.in_dim() * rest, self.messages(), kraus)?;
        Self::new(n, enc, dec)
    }
}

/// Achieved error and privacy, with the states the converse chains need.
#[derive(Debug, Clone)]
pub struct CodePerformance {
    pub eps: f64,
    pub delta: Option<f64>,
    /// Environment state attaining `delta`.
    pub omega: Option<CMat>,
    /// Ent-gen: the pure `σ^{R Bⁿ Eⁿ}`. Private: `σ^{Bⁿ Eⁿ X'}`.
    pub sigma: DensityState,
    /// Ent-gen: `ξ^{AR}`. Private: `ξ^{X X'}`.
    pub xi: DensityState,
}

/// `(V ⊗ I)` applied to subsystem `label`, which splits into `out`.
fn dilate_pure(psi: &PureState, label: &str, v: &CMat, out: [(&str, usize); 2]) -> Result<PureState> {
    let mut order = vec![label];
    order.extend(psi.layout().labels().into_iter().filter(|l| *l != label));
    let front = psi.permute(&order)?;
    let rest = front.layout().dim() / v.ncols();
    let amp = kron(v, &identity(rest)) * front.amplitudes();
    let mut subs: Vec<(String, usize)> = out.iter().map(|(l, d)| (l.to_string(), *d)).collect();
    subs.extend(front.layout().subsystems()[1..].iter().cloned());
    PureState::normalized(SystemLayout::new(subs)?, amp)
}

fn dilate_density(s: &DensityState, label: &str, v: &CMat, out: [(&str, usize); 2]) -> Result<DensityState> {
    let mut order = vec![label];
    order.extend(s.layout().labels().into_iter().filter(|l| *l != label));
    let front = s.permute(&order)?;
    let rest = front.layout().dim() / v.ncols();
    let big = kron(v, &identity(rest));
    let m = hermitian_part(&(&big * front.matrix() * big.adjoint()));
    let mut subs: Vec<(String, usize)> = out.iter().map(|(l, d)| (l.to_string(), *d)).collect();
    subs.extend(front.layout().subsystems()[1..].iter().cloned());
    DensityState::new(SystemLayout::new(subs)?, m)
}

fn check_channel_input(c: &QuantumChannel, din: usize) -> Result<()> {
    if c.in_dim() != din {
        return Err(Error::DimensionMismatch(format!(
            "code inputs have dimension {din}, channel input is {}",
            c.in_dim()
        )));
    }
    Ok(())
}

/// `σ^{R B1..Bn E1..En}` for an ent-gen code.
pub fn entgen_output(c: &QuantumChannel, code: &EntGenCode) -> Result<PureState> {
    check_channel_input(c, code.input_dim())?;
    let n = code.n;
    let (b, e) = (c.out_dim(), c.env_dim());
    check_cap(code.dim() * b.pow(n as u32) * e.pow(n as u32))?;
    let v = c.stinespring().matrix().clone();
    let (a_l, b_l, e_l) = (input_labels(n), output_labels(n), env_labels(n));
    let mut psi = code.psi.clone();
    for k in 0..n {
        psi = dilate_pure(&psi, &a_l[k], &v, [(&b_l[k], b), (&e_l[k], e)])?;
    }
    let mut order = vec![REFERENCE.to_string()];
    order.extend(b_l);
    order.extend(e_l);
    psi.permute(&as_strs(&order))
}

/// Merge `B1..Bn` of a state ordered `[first, B1..Bn]` into one system.
fn merged(s: &DensityState, first: (&str, usize), n: usize, b: usize) -> Result<DensityState> {
    let mut order = vec![first.0.to_string()];
    order.extend(output_labels(n));
    let s = s.permute(&as_strs(&order))?;
    DensityState::new(SystemLayout::new(vec![(first.0, first.1), ("#B", b.pow(n as u32))])?, s.matrix().clone())
}

pub fn eval_entgen(c: &QuantumChannel, code: &EntGenCode) -> Result<CodePerformance> {
    let big = entgen_output(c, code)?;
    let n = code.n;
    let big_d = big.to_density();
    let mut keep = vec![REFERENCE.to_string()];
    keep.extend(output_labels(n));
    let srb = big_d.partial_trace(&as_strs(&keep))?;
    let joined = merged(&srb, (REFERENCE, code.dim()), n, c.out_dim())?;
    let xi = code.decoder.apply_to(&joined, "#B", DECODED)?.permute(&[DECODED, REFERENCE])?;
    let target = PureState::maximally_entangled(DECODED, REFERENCE, code.dim())?.to_density();
    let eps = purified_distance(&target, &xi)?.clamp(0.0, 1.0);
    Ok(CodePerformance { eps, delta: None, omega: None, sigma: big_d, xi })
}

/// `σ_m^{B1..Bn E1..En}` for each message.
fn private_outputs(c: &QuantumChannel, code: &PrivateCode) -> Result<Vec<DensityState>> {
    check_channel_input(c, code.input_dim())?;
    let n = code.n;
    let (b, e) = (c.out_dim(), c.env_dim());
    check_cap(code.messages() * b.pow(n as u32) * e.pow(n as u32))?;
    let v = c.stinespring().matrix().clone();
    let (a_l, b_l, e_l) = (input_labels(n), output_labels(n), env_labels(n));
    let mut order = b_l.clone();
    order.extend(e_l.iter().cloned());
    code.encoders
        .iter()
        .map(|nu| {
            let mut s = nu.clone();
            for k in 0..n {
                s = dilate_density(&s, &a_l[k], &v, [(&b_l[k], b), (&e_l[k], e)])?;
            }
            s.permute(&as_strs(&order))
        })
        .collect()
}

/// `Σ_m (1/M) blocks[m] ⊗ |m⟩⟨m|` with the classical register last.
fn classical_mixture(blocks: &[CMat], mut subs: Vec<(String, usize)>, register: &str) -> Result<DensityState> {
    let m = blocks.len();
    let d = blocks[0].nrows();
    let mut out = CMat::zeros(d * m, d * m);
    for (k, blk) in blocks.iter().enumerate() {
        for i in 0..d {
            for j in 0..d {
                out[(i * m + k, j * m + k)] = blk[(i, j)] / cr(m as f64);
            }
        }
    }
    subs.push((register.to_string(), m));
    DensityState::new(SystemLayout::new(subs)?, out)
}

/// `Σ_m (1/M) |m⟩⟨m|^X ⊗ |m⟩⟨m|^{X'}`.
pub fn ideal_classical(m: usize) -> Result<DensityState> {
    let blocks: Vec<CMat> = (0..m)
        .map(|k| {
            let mut p = CMat::zeros(m, m);
            p[(k, k)] = cr(1.0);
            p
        })
        .collect();
    classical_mixture(&blocks, vec![(GUESS.to_string(), m)], MESSAGE)
}

pub fn eval_private(c: &QuantumChannel, code: &PrivateCode) -> Result<CodePerformance> {
    let n = code.n;
    let m = code.messages();
    let outs = private_outputs(c, code)?;
    let b_l = output_labels(n);
    let e_l = env_labels(n);
    let mut subs: Vec<(String, usize)> = b_l.iter().map(|l| (l.clone(), c.out_dim())).collect();
    subs.extend(e_l.iter().map(|l| (l.clone(), c.env_dim())));
    let sigma = classical_mixture(&outs.iter().map(|s| s.matrix().clone()).collect::<Vec<_>>(), subs, MESSAGE)?;

    let decoded: Vec<CMat> = outs
        .iter()
        .map(|s| {
            let sb = s.partial_trace(&as_strs(&b_l))?;
            Ok(code.decoder.apply(sb.matrix()))
        })
        .collect::<Result<_>>()?;
    let xi = classical_mixture(&decoded, vec![(GUESS.to_string(), m)], MESSAGE)?;
    let eps = purified_distance(&xi, &ideal_classical(m)?)?.clamp(0.0, 1.0);

    let envs: Vec<CMat> = outs
        .iter()
        .map(|s| Ok(s.partial_trace(&as_strs(&e_l))?.matrix().clone()))
        .collect::<Result<_>>()?;
    let (f, omega) = best_environment_fidelity(&envs)?;
    let delta = (1.0 - f * f).max(0.0).sqrt();
    Ok(CodePerformance { eps, delta: Some(delta), omega: Some(omega), sigma, xi })
}

/// `max_ω Σ_m (1/M) F(env_m, ω)` over states `ω`, which is the fidelity
/// between `Σ_m (1/M) env_m ⊗ |m⟩⟨m|` and `ω ⊗ I/M`.
///
/// The returned value is recomputed at the cleaned-up optimizer, so it is
/// attained by the returned `ω`.
pub fn best_environment_fidelity(envs: &[CMat]) -> Result<(f64, CMat)> {
    let m = envs.len();
    let d = envs[0].nrows();
    let eval = |w: &CMat| envs.iter().map(|e| fidelity_mat(e, w)).sum::<f64>() / m as f64;
    if d == 1 {
        let w = identity(1);
        return Ok((eval(&w), w));
    }
    let mut p = SdpProblem::new();
    let w = p.add_block(d);
    p.add_constraint(vec![(w, identity(d))], Sense::Eq, 1.0)?;
    let mut epis = Vec::with_capacity(m);
    for e in envs {
        let epi = fidelity_epigraph(&mut p, Corner::Fixed(e.clone()), Corner::Linked(vec![(w, LinOp::identity(d))]))?;
        epis.push(epi);
    }
    for epi in &epis {
        p.add_objective(epi.block, -epi.re_trace_coeff() * cr(1.0 / m as f64))?;
    }
    let sol = p.solve_default()?;
    sol.require_optimal("environment fidelity")?;
    let omega = clean_state(sol.block(w));
    Ok((eval(&omega).min(1.0), omega))
}

/// Nearest PSD unit-trace matrix by clipping the spectrum.
fn clean_state(m: &CMat) -> CMat {
    let p = project_cp(&hermitian_part(m));
    let t = trace(&p).re;
    if t > 0.0 {
        p * cr(1.0 / t)
    } else {
        identity(m.nrows()) * cr(1.0 / m.nrows() as f64)
    }
}

/// Measure-and-prepare channel `X ↦ Σ_m Tr(E_m X) |m⟩⟨m|`.
pub fn povm_decoder(effects: &[CMat]) -> Result<QuantumChannel> {
    let m = effects.len();
    if m == 0 {
        return Err(Error::ParameterOutOfRange("a measurement needs at least one effect".into()));
    }
    let d = effects[0].nrows();
    let mut kraus = Vec::with_capacity(m * d);
    for (k, e) in effects.iter().enumerate() {
        let root = crate::linalg::sqrtm_psd(&hermitian_part(e));
        for j in 0..d {
            let mut op = CMat::zeros(m, d);
            for col in 0..d {
                op[(k, col)] = root[(j, col)];
            }
            kraus.push(op);
        }
    }
    QuantumChannel::new(d, m, kraus)
}

/// Pretty-good measurement for the ensemble `{(1/M, states[m])}`; the part
/// of the space outside the joint support is assigned to message 0.
pub fn pretty_good_decoder(states: &[CMat]) -> Result<QuantumChannel> {
    let d = states[0].nrows();
    let mut s = CMat::zeros(d, d);
    for r in states {
        s += r;
    }
    let (vals, vecs) = crate::linalg::eigh(&s);
    let top = vals.iter().copied().fold(0.0, f64::max);
    let mut inv_sqrt = CMat::zeros(d, d);
    let mut outside = CMat::zeros(d, d);
    for (i, &l) in vals.iter().enumerate() {
        let v = vecs.column(i).into_owned();
        if l > 1e-12 * top.max(1e-300) {
            inv_sqrt += projector(&v) * cr(1.0 / l.sqrt());
        } else {
            outside += projector(&v);
        }
    }
    let mut effects: Vec<CMat> = states.iter().map(|r| hermitian_part(&(&inv_sqrt * r * &inv_sqrt))).collect();
    effects[0] += outside;
    povm_decoder(&effects)
}

/// Linear functional `J ↦ ⟨Φ|(D ⊗ I)(σ^{BR})|Φ⟩` on the decoder Choi matrix
/// (ordered `A ⊗ Bⁿ`), as a Hermitian coefficient `C` with value `Tr(C J)`.
fn entanglement_fidelity_coeff(srb: &DensityState, nd: usize) -> CMat {
    // With σ ordered (R, B) and R identified with A, C = σᵀ / N.
    srb.matrix().transpose() * cr(1.0 / nd as f64)
}

/// Best CPTP decoder for the given channel and input, by maximizing the
/// entanglement fidelity `F(Φ^{AR}, ξ^{AR})²` over decoder Choi matrices.
pub fn optimal_entgen_decoder(c: &QuantumChannel, code: &EntGenCode) -> Result<(ChoiMatrix, f64)> {
    let n = code.n;
    let nd = code.dim();
    let big = entgen_output(c, code)?.to_density();
    let mut keep = vec![REFERENCE.to_string()];
    keep.extend(output_labels(n));
    let srb = big.partial_trace(&as_strs(&keep))?.permute(&as_strs(&keep))?;
    let db = c.out_dim().pow(n as u32);
    let coeff = entanglement_fidelity_coeff(&srb, nd);

    let mut p = SdpProblem::new();
    let jb = p.add_block(nd * db);
    p.add_matrix_equality(vec![(jb, tp_op(db, nd))], &identity(db))?;
    p.add_objective(jb, -coeff)?;
    let sol = p.solve_default()?;
    sol.require_optimal("optimal decoder")?;
    let j = polish_tp(&project_cp(sol.block(jb)), db, nd);
    let choi = ChoiMatrix::new(db, nd, j)?;
    let dec = QuantumChannel::from_choi(&choi)?;
    let perf = eval_entgen(c, &code.with_decoder(dec)?)?;
    Ok((choi, perf.eps))
}

/// Convenience wrapper: the code with its decoder replaced by the optimal one.
pub fn with_optimal_decoder(c: &QuantumChannel, code: &EntGenCode) -> Result<(EntGenCode, CodePerformance)> {
    let (choi, _) = optimal_entgen_decoder(c, code)?;
    let better = code.with_decoder(QuantumChannel::from_choi(&choi)?)?;
    let perf = eval_entgen(c, &better)?;
    Ok((better, perf))
}

// ---------------------------------------------------------------------------
// Random search
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum DecoderRule {
    /// SDP-optimal decoder for ent-gen codes; pretty-good measurement for
    /// private codes.
    Best,
    /// Random channel with the given number of Kraus operators.
    Random { kraus: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CodeShape {
    /// Maximally entangled input on a random `N`-dimensional subspace of `A'ⁿ`.
    EntGen { dim: usize, decoder: DecoderRule },
    /// Haar-random pure encodings, one per message.
    Private { messages: usize, decoder: DecoderRule },
}

#[derive(Debug, Clone)]
pub enum CodeInstance {
    EntGen(EntGenCode),
    Private(PrivateCode),
}

#[derive(Debug, Clone)]
pub struct Candidate {
    /// Trial index; together with the seed it regenerates the code.
    pub index: usize,
    pub code: CodeInstance,
    pub performance: CodePerformance,
}

/// Independent random stream for one trial.
pub fn trial_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// The candidate code of trial `index`, evaluated.
pub fn candidate(c: &QuantumChannel, n: usize, shape: CodeShape, seed: u64, index: usize) -> Result<Candidate> {
    let mut rng = trial_rng(seed, index);
    let din = c.in_dim();
    let dn = din.checked_pow(n as u32).ok_or(Error::DimensionCap { dim: usize::MAX, cap: crate::linalg::max_dim() })?;
    check_cap(dn)?;
    let bn = c.out_dim().pow(n as u32);
    let a_l = input_labels(n);
    match shape {
        CodeShape::EntGen { dim, decoder } => {
            if dim == 0 || dim > dn {
                return Err(Error::ParameterOutOfRange(format!("code dimension {dim} not in 1..={dn}")));
            }
            let v = random::isometry(&mut rng, dn, dim);
            let amp = CVec::from_fn(dn * dim, |idx, _| v[(idx / dim, idx % dim)] / cr((dim as f64).sqrt()));
            let mut subs: Vec<(String, usize)> = a_l.iter().map(|l| (l.clone(), din)).collect();
            subs.push((REFERENCE.to_string(), dim));
            let psi = PureState::normalized(SystemLayout::new(subs)?, amp)?;
            let dec = match decoder {
                DecoderRule::Random { kraus } => random::channel(&mut rng, bn, dim, kraus.max(1)),
                DecoderRule::Best => identity_like(bn, dim)?,
            };
            let code = EntGenCode::new(n, psi, dec)?;
            let (code, performance) = match decoder {
                DecoderRule::Best => with_optimal_decoder(c, &code)?,
                DecoderRule::Random { .. } => {
                    let perf = eval_entgen(c, &code)?;
                    (code, perf)
                }
            };
            Ok(Candidate { index, code: CodeInstance::EntGen(code), performance })
        }
        CodeShape::Private { messages, decoder } => {
            if messages == 0 {
                return Err(Error::ParameterOutOfRange("a private code needs at least one message".into()));
            }
            let layout = SystemLayout::new(a_l.iter().map(|l| (l.clone(), din)).collect())?;
            let enc: Vec<DensityState> =
                (0..messages).map(|_| random::pure(&mut rng, layout.clone()).to_density()).collect();
            let placeholder = identity_like(bn, messages)?;
            let code = PrivateCode::new(n, enc, placeholder)?;
            let dec = match decoder {
                DecoderRule::Random { kraus } => random::channel(&mut rng, bn, messages, kraus.max(1)),
                DecoderRule::Best => {
                    let outs = private_outputs(c, &code)?;
                    let b_l = output_labels(n);
                    let states = outs
                        .iter()
                        .map(|s| Ok(s.partial_trace(&as_strs(&b_l))?.matrix().clone()))
                        .collect::<Result<Vec<_>>>()?;
                    pretty_good_decoder(&states)?
                }
            };
            let code = PrivateCode::new(n, code.encoders, dec)?;
            let performance = eval_private(c, &code)?;
            Ok(Candidate { index, code: CodeInstance::Private(code), performance })
        }
    }
}

/// Any channel `d_in → d_out`; used as a placeholder before the real decoder
/// is known.
fn identity_like(d_in: usize, d_out: usize) -> Result<QuantumChannel> {
    let mut kraus = Vec::with_capacity(d_in);
    for j in 0..d_in {
        let mut k = CMat::zeros(d_out, d_in);
        k[(j % d_out, j)] = cr(1.0);
        kraus.push(k);
    }
    QuantumChannel::new(d_in, d_out, kraus)
}

fn rank_key(c: &Candidate) -> (f64, f64, usize) {
    (c.performance.eps, c.performance.delta.unwrap_or(0.0), c.index)
}

/// All `trials` candidates, sorted by `(ε, δ)` and then trial index.
/// Trials run in parallel on independent streams, so the result only
/// depends on the seed.
pub fn ranked_code_search(
    c: &QuantumChannel,
    n: usize,
    shape: CodeShape,
    trials: usize,
    seed: u64,
) -> Result<Vec<Candidate>> {
    if trials == 0 {
        return Err(Error::ParameterOutOfRange("random search needs at least one trial".into()));
    }
    let mut all = (0..trials)
        .into_par_iter()
        .map(|i| candidate(c, n, shape, seed, i))
        .collect::<Result<Vec<_>>>()?;
    all.sort_by(|a, b| {
        let (x, y) = (rank_key(a), rank_key(b));
        x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)).then(x.2.cmp(&y.2))
    });
    Ok(all)
}

pub fn random_code_search(c: &QuantumChannel, n: usize, shape: CodeShape, trials: usize, seed: u64) -> Result<Candidate> {
    Ok(ranked_code_search(c, n, shape, trials, seed)?.swap_remove(0))
}

/// Seeded permutation of `0..m`.
pub fn random_permutation<R: Rng + ?Sized>(rng: &mut R, m: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..m).collect();
    p.shuffle(rng);
    p
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PureJson {
    pub subsystems: Vec<(String, usize)>,
    pub amplitudes: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CodeJson {
    EntGen { n: usize, psi: PureJson, decoder: KrausJson },
    Private { n: usize, encoders: Vec<StateJson>, decoder: KrausJson },
}

fn decoder_from_json(k: &KrausJson) -> Result<QuantumChannel> {
    let kraus = k
        .kraus
        .iter()
        .map(|p| matrix_from_pairs(k.out_dim, k.in_dim, p))
        .collect::<Result<Vec<_>>>()?;
    QuantumChannel::new(k.in_dim, k.out_dim, kraus)
}

impl CodeInstance {
    pub fn to_json_value(&self) -> CodeJson {
        match self {
            CodeInstance::EntGen(c) => CodeJson::EntGen {
                n: c.n,
                psi: PureJson {
                    subsystems: c.psi.layout().subsystems().to_vec(),
                    amplitudes: matrix_to_pairs(&CMat::from_column_slice(
                        c.psi.amplitudes().len(),
                        1,
                        c.psi.amplitudes().as_slice(),
                    )),
                },
                decoder: c.decoder.to_json_value(),
            },
            CodeInstance::Private(c) => CodeJson::Private {
                n: c.n,
                encoders: c.encoders.iter().map(DensityState::to_json_value).collect(),
                decoder: c.decoder.to_json_value(),
            },
        }
    }

    pub fn from_json_value(j: &CodeJson) -> Result<Self> {
        match j {
            CodeJson::EntGen { n, psi, decoder } => {
                let layout = SystemLayout::new(psi.subsystems.clone())?;
                let d = layout.dim();
                let amp = matrix_from_pairs(d, 1, &psi.amplitudes)?;
                let psi = PureState::new(layout, amp.column(0).into_owned())?;
                Ok(CodeInstance::EntGen(EntGenCode::new(*n, psi, decoder_from_json(decoder)?)?))
            }
            CodeJson::Private { n, encoders, decoder } => {
                let enc = encoders.iter().map(DensityState::from_json_value).collect::<Result<Vec<_>>>()?;
                Ok(CodeInstance::Private(PrivateCode::new(*n, enc, decoder_from_json(decoder)?)?))
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_json_value()).expect("code serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let j: CodeJson = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_json_value(&j)
    }
}
