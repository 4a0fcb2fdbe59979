use convlab::channels::{ChannelJson, QuantumChannel, ZooJson};
use convlab::codes::{candidate, ranked_code_search, trial_rng, CodeInstance, CodeShape, DecoderRule};
use convlab::converse::{
    private_bound, require_antidegradable, verify_lemma1, verify_private_chain_with, verify_quantum_chain_with, ChainStep,
    CHAIN_TOL, DUALITY_TOL,
};
use convlab::entropies::{h_max_smooth_direct, h_min_smooth};
use convlab::linalg::{purify, SystemLayout};
use convlab::{random, Error, Result};
use rayon::prelude::*;
use serde::Deserialize;
use serde_json::{json, Value};
use std::f64::consts::PI;

pub const SUITES: [&str; 4] = ["lemma1", "duality", "private-chain", "quantum-chain"];

/// Stream offsets keep the suites' random draws apart.
const DUALITY_STREAM: usize = 1 << 32;

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub channel: ChannelJson,
    pub lemma1_states: usize,
    pub duality_states: usize,
    pub trials: usize,
    pub messages: usize,
    pub dim: usize,
    pub top: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            channel: ChannelJson::Zoo(ZooJson { kind: "erasure".into(), p: Some(0.5), g: None, d: None }),
            lemma1_states: 100,
            duality_states: 10,
            trials: 1000,
            messages: 2,
            dim: 2,
            top: 5,
        }
    }
}

pub struct SuiteOutput {
    pub lines: Vec<Value>,
    pub pass: bool,
}

fn two_qubits() -> SystemLayout {
    SystemLayout::new(vec![("A", 2), ("B", 2)]).expect("fixed layout")
}

fn summary(suite: &str, items: &[Value]) -> SuiteOutput {
    let failures = items.iter().filter(|v| v["pass"] != json!(true)).count();
    let mut lines = items.to_vec();
    lines.push(json!({ "suite": suite, "summary": true, "items": items.len(), "failures": failures, "pass": failures == 0 }));
    SuiteOutput { lines, pass: failures == 0 }
}

pub fn lemma1(cfg: &VerifyConfig, seed: u64) -> Result<SuiteOutput> {
    let pairs = [(0.0, 0.0), (PI / 8.0, PI / 8.0), (PI / 6.0, PI / 12.0)];
    let items = (0..cfg.lemma1_states * pairs.len())
        .into_par_iter()
        .map(|k| {
            let (i, (alpha, beta)) = (k / pairs.len(), pairs[k % pairs.len()]);
            let s = random::density(&mut trial_rng(seed, i), two_qubits(), 4);
            let r = verify_lemma1(&s, &["A"], &["B"], alpha, beta)?;
            Ok(json!({ "suite": "lemma1", "item": k, "state": i, "alpha": alpha, "beta": beta, "steps": r.steps, "pass": r.pass }))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summary("lemma1", &items))
}

pub fn duality(cfg: &VerifyConfig, seed: u64) -> Result<SuiteOutput> {
    let eps_grid = [0.0, 0.1, 0.3];
    let items = (0..cfg.duality_states * eps_grid.len())
        .into_par_iter()
        .map(|k| {
            let (i, eps) = (k / eps_grid.len(), eps_grid[k % eps_grid.len()]);
            let s = random::density(&mut trial_rng(seed, DUALITY_STREAM + i), two_qubits(), 4);
            let psi = purify(&s, "C")?.to_density();
            let hmax = h_max_smooth_direct(&s, &["A"], &["B"], eps, seed.wrapping_add(i as u64))?;
            let hmin = h_min_smooth(&psi, &["A"], &["C"], eps)?;
            let step = ChainStep::equal("hmax_direct_eq_neg_hmin_purification", hmax, -hmin, DUALITY_TOL);
            Ok(json!({ "suite": "duality", "item": k, "state": i, "eps": eps, "steps": [&step], "pass": step.pass }))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summary("duality", &items))
}

pub fn private_chain(c: &QuantumChannel, cfg: &VerifyConfig, seed: u64) -> Result<SuiteOutput> {
    let cert = require_antidegradable(c)?;
    let shape = CodeShape::Private { messages: cfg.messages, decoder: DecoderRule::Best };
    let ranked = ranked_code_search(c, 1, shape, cfg.trials, seed)?;
    let log_m = (cfg.messages as f64).log2();

    let mut in_region = 0usize;
    let mut violations = 0usize;
    let mut min_slack = f64::INFINITY;
    for cand in &ranked {
        let delta = cand.performance.delta.expect("private codes carry a privacy value");
        if let Ok(b) = private_bound(cand.performance.eps, delta) {
            in_region += 1;
            let slack = b - log_m;
            min_slack = min_slack.min(slack);
            if slack < -CHAIN_TOL {
                violations += 1;
            }
        }
    }
    let mut items = vec![json!({
        "suite": "private-chain",
        "item": 0,
        "check": "bound_holds_on_every_code",
        "trials": cfg.trials,
        "in_region": in_region,
        "violations": violations,
        "min_slack": if in_region > 0 { json!(min_slack) } else { Value::Null },
        "pass": violations == 0,
    })];
    let top: Vec<Value> = ranked
        .iter()
        .take(cfg.top)
        .enumerate()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(rank, cand)| {
            let CodeInstance::Private(code) = &cand.code else { unreachable!() };
            let r = verify_private_chain_with(code, &cert, &cand.performance)?;
            Ok(json!({
                "suite": "private-chain",
                "item": rank + 1,
                "trial": cand.index,
                "eps": cand.performance.eps,
                "delta": cand.performance.delta,
                "steps": r.steps,
                "pass": r.pass,
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    items.extend(top);
    Ok(summary("private-chain", &items))
}

pub fn quantum_chain(c: &QuantumChannel, cfg: &VerifyConfig, seed: u64) -> Result<SuiteOutput> {
    let cert = require_antidegradable(c)?;
    let shape = CodeShape::EntGen { dim: cfg.dim, decoder: DecoderRule::Best };
    let cand = candidate(c, 1, shape, seed, 0)?;
    let CodeInstance::EntGen(code) = &cand.code else { unreachable!() };
    let r = verify_quantum_chain_with(code, &cert, &cand.performance)?;
    let item = json!({
        "suite": "quantum-chain",
        "item": 0,
        "dim": cfg.dim,
        "eps": cand.performance.eps,
        "steps": r.steps,
        "pass": r.pass,
    });
    Ok(summary("quantum-chain", &[item]))
}

pub fn run(name: &str, cfg: &VerifyConfig, seed: u64) -> Result<SuiteOutput> {
    let channel = || cfg.channel.build();
    match name {
        "lemma1" => lemma1(cfg, seed),
        "duality" => duality(cfg, seed),
        "private-chain" => private_chain(&channel()?, cfg, seed),
        "quantum-chain" => quantum_chain(&channel()?, cfg, seed),
        "all" => {
            let mut lines = Vec::new();
            let mut pass = true;
            for s in SUITES {
                let out = run(s, cfg, seed)?;
                pass &= out.pass;
                lines.extend(out.lines);
            }
            lines.push(json!({ "suite": "all", "summary": true, "pass": pass }));
            Ok(SuiteOutput { lines, pass })
        }
        other => Err(Error::Parse(format!("unknown suite `{other}`"))),
    }
}
