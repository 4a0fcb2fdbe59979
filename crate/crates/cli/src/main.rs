mod output;
mod suites;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use convlab::channels::{ChannelJson, QuantumChannel, ZooJson};
use convlab::codes::{eval_entgen, eval_private, ranked_code_search, CodeInstance, CodeShape, DecoderRule};
use convlab::converse::{
    in_region, private_bound, quantum_bound, region_curve, require_antidegradable, verify_private_chain_with,
    verify_quantum_chain_with, ConverseParams,
};
use convlab::degradability::{certify_antidegradable, certify_degradable, witness_deviation, Verdict, DEFAULT_THRESHOLD};
use convlab::entropies::{conditional_entropy, h_max, h_max_smooth, h_min, h_min_smooth};
use convlab::{DensityState, Error};
use serde_json::{json, Value};

use output::{record, sig9, Meta};
use suites::VerifyConfig;

#[derive(Parser)]
#[command(name = "convlab", version, about = "One-shot converse bounds and their numerical verification")]
struct Cli {
    /// Seed for every random draw; recorded in all outputs.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Display unit for entropies and bounds.
    #[arg(long, global = true, value_enum, default_value_t = Units::Bits)]
    units: Units,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Units {
    Bits,
    Nats,
}

impl Units {
    fn show(self, bits: f64) -> f64 {
        match self {
            Units::Bits => bits,
            Units::Nats => bits * std::f64::consts::LN_2,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Units::Bits => "bits",
            Units::Nats => "nats",
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a converse bound.
    Bound {
        #[command(subcommand)]
        kind: BoundKind,
    },
    /// Write the region boundary δ_max(ε) as CSV.
    Region {
        #[arg(long)]
        step: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Certify a channel as anti-degradable or degradable.
    Certify {
        #[command(flatten)]
        channel: ChannelArgs,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
    },
    /// One-shot conditional entropy of a state file.
    Entropy {
        #[arg(value_enum)]
        measure: Measure,
        #[arg(long)]
        state: PathBuf,
        /// Comma-separated target subsystems.
        #[arg(long)]
        target: String,
        /// Comma-separated conditioning subsystems (may be empty).
        #[arg(long, default_value = "")]
        cond: String,
        /// Smoothing parameter (purified distance).
        #[arg(long, default_value_t = 0.0)]
        eps: f64,
    },
    /// Seeded random code search; prints the best codes.
    Search {
        #[arg(value_enum)]
        family: CodeKind,
        #[command(flatten)]
        channel: ChannelArgs,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// Messages (private) or code dimension (quantum).
        #[arg(long, default_value_t = 2)]
        size: usize,
        #[arg(long, default_value_t = 1)]
        uses: usize,
        #[arg(long, default_value_t = 5)]
        top: usize,
    },
    /// Evaluate a code file and optionally run its converse chain.
    Evaluate {
        #[arg(long)]
        code: PathBuf,
        #[command(flatten)]
        channel: ChannelArgs,
        #[arg(long)]
        chain: bool,
    },
    /// Run a verification suite, one JSON object per line.
    Verify {
        #[arg(value_enum)]
        suite: Suite,
        /// JSON overrides of the suite defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
    },
}

#[derive(Subcommand)]
enum BoundKind {
    Private {
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        delta: f64,
    },
    Quantum {
        #[arg(long)]
        eps: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Measure {
    Hmin,
    Hmax,
    /// Conditional von Neumann entropy.
    Vn,
}

#[derive(Clone, Copy, ValueEnum)]
enum CodeKind {
    Private,
    Quantum,
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Lemma1,
    Duality,
    PrivateChain,
    QuantumChain,
    All,
}

impl Suite {
    fn name(self) -> &'static str {
        match self {
            Suite::Lemma1 => "lemma1",
            Suite::Duality => "duality",
            Suite::PrivateChain => "private-chain",
            Suite::QuantumChain => "quantum-chain",
            Suite::All => "all",
        }
    }
}

#[derive(Args)]
struct ChannelArgs {
    /// Channel file (Kraus or named form).
    #[arg(long, conflicts_with = "kind")]
    channel: Option<PathBuf>,
    /// Named channel: erasure, depolarizing, amplitude_damping, identity.
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    g: Option<f64>,
    #[arg(long)]
    d: Option<usize>,
}

enum Failure {
    Usage(String),
    Domain { reason: String, message: String },
    Verification,
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Domain { .. } => 2,
            Failure::Verification => 3,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match &e {
            Error::Domain(_) | Error::Precondition(_) | Error::Sdp { .. } | Error::DimensionCap { .. } => {
                Failure::Domain { reason: kind_of(&e).into(), message: e.to_string() }
            }
            _ => Failure::Usage(e.to_string()),
        }
    }
}

fn kind_of(e: &Error) -> &'static str {
    match e {
        Error::Domain(_) => "domain",
        Error::Precondition(_) => "precondition",
        Error::Sdp { .. } => "solver",
        Error::DimensionCap { .. } => "dimension_cap",
        _ => "input",
    }
}

fn read_input(meta: &mut Meta, path: &Path) -> Result<String, Failure> {
    let bytes = fs::read(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    meta.add_input(&path.display().to_string(), &bytes);
    String::from_utf8(bytes).map_err(|_| Failure::Usage(format!("{} is not UTF-8", path.display())))
}

fn build_channel(meta: &mut Meta, a: &ChannelArgs) -> Result<QuantumChannel, Failure> {
    if let Some(path) = &a.channel {
        return Ok(QuantumChannel::from_json(&read_input(meta, path)?)?);
    }
    let kind = a.kind.clone().ok_or_else(|| Failure::Usage("give --channel FILE or --kind NAME".into()))?;
    Ok(ChannelJson::Zoo(ZooJson { kind, p: a.p, g: a.g, d: a.d }).build()?)
}

fn labels(list: &str) -> Vec<&str> {
    list.split(',').map(str::trim).filter(|s| !s.is_empty()).collect()
}

fn print(meta: &Meta, body: Value) {
    println!("{}", record(meta, body));
}

fn bound(meta: &Meta, units: Units, kind: &BoundKind) -> Result<(), Failure> {
    match *kind {
        BoundKind::Private { eps, delta } => {
            let p = ConverseParams::new(eps, Some(delta))?;
            if !in_region(eps, delta) {
                return Err(Failure::Domain {
                    reason: "alpha + beta ≥ π/2".into(),
                    message: format!("(eps, delta) = ({eps}, {delta}) lies outside the region; the bound diverges"),
                });
            }
            let b = private_bound(eps, delta)?;
            print(meta, json!({
                "command": "bound", "kind": "private", "eps": eps, "delta": delta,
                "alpha": p.alpha, "beta": p.beta, "in_region": true,
                "value": units.show(b), "units": units.name(),
            }));
        }
        BoundKind::Quantum { eps } => {
            let p = ConverseParams::new(eps, None)?;
            let b = quantum_bound(eps).map_err(|e| Failure::Domain { reason: "eps ≥ 1/√2".into(), message: e.to_string() })?;
            print(meta, json!({
                "command": "bound", "kind": "quantum", "eps": eps,
                "alpha": p.alpha, "in_region": true,
                "value": units.show(b), "units": units.name(),
            }));
        }
    }
    Ok(())
}

fn region(meta: &Meta, step: f64, out: &Path) -> Result<(), Failure> {
    let curve = region_curve(step)?;
    let write = || -> Result<(), Box<dyn std::error::Error>> {
        let mut w = csv::Writer::from_path(out)?;
        w.write_record(["eps", "delta_max"])?;
        for &(e, d) in &curve {
            w.write_record([sig9(e), sig9(d)])?;
        }
        w.flush()?;
        Ok(())
    };
    write().map_err(|e| Failure::Usage(format!("cannot write {}: {e}", out.display())))?;
    print(meta, json!({ "command": "region", "step": step, "rows": curve.len(), "out": out.display().to_string() }));
    Ok(())
}

fn certify(meta: &mut Meta, a: &ChannelArgs, threshold: f64) -> Result<(), Failure> {
    if !(threshold > 0.0) {
        return Err(Failure::Usage("--threshold must be positive".into()));
    }
    let c = build_channel(meta, a)?;
    meta.tolerances.insert("certify", threshold);
    let mut cert = certify_antidegradable(&c, threshold)?;
    if cert.verdict == Verdict::NeitherProven {
        let deg = certify_degradable(&c, threshold)?;
        if deg.verdict == Verdict::Degradable {
            cert = deg;
        }
    }
    let deviation = if cert.map.is_some() { Some(witness_deviation(&c, &cert)?) } else { None };
    let mut body = cert.to_json_value();
    body["command"] = json!("certify");
    body["witness_deviation"] = json!(deviation);
    print(meta, body);
    Ok(())
}

fn entropy(meta: &mut Meta, units: Units, m: Measure, state: &Path, target: &str, cond: &str, eps: f64) -> Result<(), Failure> {
    if !(0.0..1.0).contains(&eps) {
        return Err(Failure::Usage(format!("--eps must lie in [0, 1), got {eps}")));
    }
    let s = DensityState::from_json(&read_input(meta, state)?)?;
    let (a, b) = (labels(target), labels(cond));
    let v = match m {
        Measure::Hmin if eps > 0.0 => h_min_smooth(&s, &a, &b, eps)?,
        Measure::Hmin => h_min(&s, &a, &b)?,
        Measure::Hmax if eps > 0.0 => h_max_smooth(&s, &a, &b, eps)?,
        Measure::Hmax => h_max(&s, &a, &b)?,
        Measure::Vn => conditional_entropy(&s, &a, &b)?,
    };
    let name = match m {
        Measure::Hmin => "hmin",
        Measure::Hmax => "hmax",
        Measure::Vn => "vn",
    };
    print(meta, json!({
        "command": "entropy", "measure": name, "target": a, "cond": b, "eps": eps,
        "value": units.show(v), "units": units.name(),
    }));
    Ok(())
}

fn performance_json(inst: &CodeInstance, eps: f64, delta: Option<f64>) -> Value {
    let bound = match (inst, delta) {
        (CodeInstance::Private(_), Some(d)) => private_bound(eps, d).ok(),
        (CodeInstance::EntGen(_), _) => quantum_bound(eps).ok(),
        _ => None,
    };
    json!({ "eps": eps, "delta": delta, "bound": bound })
}

fn search(meta: &mut Meta, kind: CodeKind, a: &ChannelArgs, trials: usize, size: usize, n: usize, top: usize) -> Result<(), Failure> {
    let c = build_channel(meta, a)?;
    let shape = match kind {
        CodeKind::Private => CodeShape::Private { messages: size, decoder: DecoderRule::Best },
        CodeKind::Quantum => CodeShape::EntGen { dim: size, decoder: DecoderRule::Best },
    };
    let ranked = ranked_code_search(&c, n, shape, trials, meta.seed)?;
    for (rank, cand) in ranked.iter().take(top).enumerate() {
        let mut body = performance_json(&cand.code, cand.performance.eps, cand.performance.delta);
        body["command"] = json!("search");
        body["rank"] = json!(rank);
        body["trial"] = json!(cand.index);
        body["code"] = serde_json::to_value(cand.code.to_json_value()).expect("code serializes");
        print(meta, body);
    }
    Ok(())
}

fn evaluate(meta: &mut Meta, code: &Path, a: &ChannelArgs, chain: bool) -> Result<(), Failure> {
    let inst = CodeInstance::from_json(&read_input(meta, code)?)?;
    let c = build_channel(meta, a)?;
    let (perf, report) = match &inst {
        CodeInstance::Private(p) => {
            let perf = eval_private(&c, p)?;
            let r = if chain { Some(verify_private_chain_with(p, &require_antidegradable(&c)?, &perf)?) } else { None };
            (perf, r)
        }
        CodeInstance::EntGen(q) => {
            let perf = eval_entgen(&c, q)?;
            let r = if chain { Some(verify_quantum_chain_with(q, &require_antidegradable(&c)?, &perf)?) } else { None };
            (perf, r)
        }
    };
    let mut body = performance_json(&inst, perf.eps, perf.delta);
    body["command"] = json!("evaluate");
    if let Some(r) = &report {
        body["steps"] = json!(r.steps);
        body["pass"] = json!(r.pass);
    }
    print(meta, body);
    match report {
        Some(r) if !r.pass => Err(Failure::Verification),
        _ => Ok(()),
    }
}

fn verify(meta: &mut Meta, suite: Suite, config: Option<&Path>, trials: Option<usize>) -> Result<(), Failure> {
    let mut cfg = match config {
        Some(p) => serde_json::from_str::<VerifyConfig>(&read_input(meta, p)?)
            .map_err(|e| Failure::Usage(format!("bad config: {e}")))?,
        None => VerifyConfig::default(),
    };
    if let Some(t) = trials {
        cfg.trials = t;
    }
    let out = suites::run(suite.name(), &cfg, meta.seed)?;
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    for line in out.lines {
        writeln!(lock, "{}", record(meta, line)).map_err(|e| Failure::Usage(e.to_string()))?;
    }
    if out.pass {
        Ok(())
    } else {
        Err(Failure::Verification)
    }
}

fn run(cli: &Cli, meta: &mut Meta) -> Result<(), Failure> {
    match &cli.command {
        Command::Bound { kind } => bound(meta, cli.units, kind),
        Command::Region { step, out } => region(meta, *step, out),
        Command::Certify { channel, threshold } => certify(meta, channel, *threshold),
        Command::Entropy { measure, state, target, cond, eps } => {
            entropy(meta, cli.units, *measure, state, target, cond, *eps)
        }
        Command::Search { family, channel, trials, size, uses, top } => search(meta, *family, channel, *trials, *size, *uses, *top),
        Command::Evaluate { code, channel, chain } => evaluate(meta, code, channel, *chain),
        Command::Verify { suite, config, trials } => verify(meta, *suite, config.as_deref(), *trials),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let mut meta = Meta::new(cli.seed, &argv);
    match run(&cli, &mut meta) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(msg) => {
                    eprintln!("error: {msg}");
                    print(&meta, json!({ "error": { "code": 1, "reason": "usage", "message": msg } }));
                }
                Failure::Domain { reason, message } => {
                    eprintln!("error: {message}");
                    print(&meta, json!({ "error": { "code": 2, "reason": reason, "message": message } }));
                }
                Failure::Verification => eprintln!("error: verification failed"),
            }
            ExitCode::from(f.code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn argument_definitions_are_consistent() {
        Cli::command().debug_assert();
    }
}
