use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_rational::BigRational;
use serde_json::{json, Value};

use qpolar::channel::batch_rng;
use qpolar::circuit::{build, CodeCircuit, Family, SublayerKind};
use qpolar::montecarlo::{config_hash, genie_stats, random_roles, simulate, time_interleaved, DecoderKind, McConfig, BER_HEADER, DEFAULT_BATCH};
use qpolar::oracle::{erasure_genie_exhaustive, oracle_check};
use qpolar::polarization::{
    bec_density_evolution, bec_density_evolution_exact, degenerate_bound, select_channels, union_bound, ChannelStats, FreezeRule,
    FrozenMap, Role,
};
use qpolar::ChannelModel;

const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (", env!("QPOLAR_GIT_DESCRIBE"), ")");

const SUBCOMMANDS: [&str; 6] = ["polarize", "select", "simulate", "oracle-check", "bench", "export-circuit"];

#[derive(Parser)]
#[command(name = "qpolar", version = VERSION, about = "Quantum polar and branching-MERA code simulator", args_override_self = true)]
struct Cli {
    /// Master seed; every random draw derives from it.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Flat key=value file with defaults for any flag; the command line wins.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Cmd {
    /// Per-wire genie error rates as a stats CSV.
    Polarize(PolarizeArgs),
    /// Pick data wires from a stats CSV and write a frozen map.
    Select(SelectArgs),
    /// Honest decoding against a frozen map; appends one BER row.
    Simulate(SimulateArgs),
    /// Check the contraction decoder against brute force on a small code.
    OracleCheck(OracleArgs),
    /// Decode timing across code sizes.
    Bench(BenchArgs),
    /// Write the encoding circuit.
    ExportCircuit(CodeArgs),
}

#[derive(Args, Clone, Copy)]
struct CodeArgs {
    #[arg(long, default_value = "polar")]
    family: Family,
    /// Circuit levels; n = 2^L.
    #[arg(long = "L", id = "L")]
    levels: usize,
}

#[derive(Args)]
struct PolarizeArgs {
    #[command(flatten)]
    code: CodeArgs,
    /// depol:p (X, Y, Z each p/3), depolrate:p (each p/4), xz:px,pz, pauli:pI,pX,pY,pZ or erasure:eps
    #[arg(long)]
    channel: ChannelModel,
    #[arg(long, default_value = "standard")]
    decoder: DecoderKind,
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    /// Density evolution instead of sampling (polar family, erasure channel).
    #[arg(long)]
    exact: bool,
    #[arg(long, default_value_t = DEFAULT_BATCH)]
    batch: u64,
}

#[derive(Args)]
struct SelectArgs {
    /// Stats CSV from `polarize`.
    #[arg(long)]
    stats: PathBuf,
    /// Number of data wires.
    #[arg(long, conflicts_with = "rate")]
    k: Option<usize>,
    /// Encoding rate; rate * n must be an integer.
    #[arg(long)]
    rate: Option<f64>,
    #[arg(long, default_value = "freeze-worse")]
    rule: FreezeRule,
    /// Metadata for the map; taken from the stats file when absent.
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    channel: Option<String>,
    #[arg(long)]
    decoder: Option<String>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    code: CodeArgs,
    #[arg(long)]
    channel: ChannelModel,
    #[arg(long, default_value = "standard")]
    decoder: DecoderKind,
    /// Frozen map JSON from `select`.
    #[arg(long)]
    frozen: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    #[arg(long, default_value_t = DEFAULT_BATCH)]
    batch: u64,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    code: CodeArgs,
    #[arg(long)]
    channel: ChannelModel,
    #[arg(long, default_value = "standard")]
    decoder: DecoderKind,
    /// Random schedule states to compare.
    #[arg(long, default_value_t = 1000)]
    states: u64,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value = "polar")]
    family: Family,
    /// Comma-separated circuit levels.
    #[arg(long = "Ls", id = "Ls", value_delimiter = ',', default_values_t = [10, 14])]
    levels: Vec<usize>,
    #[arg(long, default_value = "depol:0.05")]
    channel: ChannelModel,
    #[arg(long, default_value = "standard")]
    decoder: DecoderKind,
    /// Timing rounds; each round decodes every size at least once.
    #[arg(long, default_value_t = 20)]
    reps: usize,
    /// Fraction of data wires in the random frozen maps.
    #[arg(long, default_value_t = 0.5)]
    rate: f64,
    /// Allowed factor over the n log n growth between the smallest and largest size.
    #[arg(long, default_value_t = 1.1)]
    slack: f64,
}

#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<Usage>().is_some() {
        return 2;
    }
    match e.downcast_ref::<qpolar::Error>() {
        Some(qpolar::Error::InvalidConfig(_) | qpolar::Error::Parse(_)) => 2,
        _ => 1,
    }
}

/// Splice `--config` file entries in right after the subcommand name, ahead of
/// every flag from the command line so those override them.
fn merge_config(args: Vec<String>) -> Result<Vec<String>> {
    let mut path = None;
    for (i, a) in args.iter().enumerate() {
        if a == "--config" {
            path = args.get(i + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let Some(path) = path else { return Ok(args) };
    let Some(sub) = args.iter().skip(1).position(|a| SUBCOMMANDS.contains(&a.as_str())).map(|i| i + 1) else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path).map_err(|e| usage(format!("config file {path}: {e}")))?;
    let mut extra = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("{path}:{}: expected key=value", ln + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        match v {
            "true" => extra.push(format!("--{k}")),
            "false" => {}
            _ => extra.push(format!("--{k}={v}")),
        }
    }
    let mut out = vec![args[0].clone(), args[sub].clone()];
    out.extend(extra);
    out.extend(args[1..sub].iter().cloned());
    out.extend(args[sub + 1..].iter().cloned());
    Ok(out)
}

fn main() -> ExitCode {
    let args = match merge_config(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.cmd {
        Cmd::Polarize(a) => polarize(cli, a),
        Cmd::Select(a) => select(cli, a),
        Cmd::Simulate(a) => simulate_cmd(cli, a),
        Cmd::OracleCheck(a) => oracle(cli, a),
        Cmd::Bench(a) => bench(cli, a),
        Cmd::ExportCircuit(a) => export(cli, a),
    }
}

fn circuit(code: &CodeArgs) -> Result<CodeCircuit> {
    build(code.family, code.levels).map_err(|e| usage(e.to_string()))
}

fn mc(cli: &Cli, trials: u64, batch: u64) -> Result<McConfig> {
    if trials == 0 {
        return Err(usage("--trials must be positive"));
    }
    Ok(McConfig { trials, seed: cli.seed, batch_size: batch.max(1), threads: cli.threads })
}

fn write_out(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => Ok(io::stdout().write_all(text.as_bytes())?),
    }
}

/// `<out>.meta.json` next to a written output.
fn sidecar(cli: &Cli, cfg: &Value, hash: &str) -> Result<()> {
    if let Some(p) = &cli.out {
        let mut name = p.clone().into_os_string();
        name.push(".meta.json");
        let meta = json!({ "config": cfg, "config_hash": hash, "version": VERSION });
        fs::write(&name, serde_json::to_string_pretty(&meta)? + "\n")
            .with_context(|| format!("writing {}", PathBuf::from(&name).display()))?;
    }
    Ok(())
}

fn polarize(cli: &Cli, a: &PolarizeArgs) -> Result<()> {
    let c = circuit(&a.code)?;
    let de = a.exact || (a.decoder == DecoderKind::ErasureExact && a.code.family == Family::Polar);
    let stats = if de {
        let ChannelModel::Erasure { eps } = a.channel else {
            return Err(usage("density evolution needs an erasure channel"));
        };
        if a.code.family != Family::Polar {
            return Err(usage("density evolution covers the polar family only"));
        }
        bec_density_evolution(a.code.levels, eps)?
    } else {
        genie_stats(&c, &a.channel, a.decoder, &mc(cli, a.trials, a.batch)?)?
    };
    let cfg = json!({
        "command": "polarize",
        "family": a.code.family.to_string(),
        "L": a.code.levels,
        "channel": a.channel.to_string(),
        "decoder": a.decoder.to_string(),
        "exact": de,
        "trials": if de { 0 } else { a.trials },
        "seed": cli.seed,
        "batch": a.batch,
    });
    let hash = config_hash(&cfg)?;
    let text = match cli.format {
        Format::Csv => {
            let mut buf = Vec::new();
            stats.write_csv(
                &mut buf,
                &[
                    ("config_hash", hash.clone()),
                    ("family", a.code.family.to_string()),
                    ("L", a.code.levels.to_string()),
                    ("channel", a.channel.to_string()),
                    ("decoder", a.decoder.to_string()),
                ],
            )?;
            String::from_utf8(buf)?
        }
        Format::Json => {
            let v = json!({
                "config_hash": hash,
                "n": stats.n(),
                "trials": stats.trials,
                "err_x": stats.err_x,
                "err_z": stats.err_z,
            });
            serde_json::to_string_pretty(&v)? + "\n"
        }
    };
    write_out(cli.out.as_deref(), &text)?;
    sidecar(cli, &cfg, &hash)
}

fn select(cli: &Cli, a: &SelectArgs) -> Result<()> {
    let text = fs::read_to_string(&a.stats).map_err(|e| usage(format!("{}: {e}", a.stats.display())))?;
    let meta: BTreeMap<&str, &str> = text
        .lines()
        .filter_map(|l| l.strip_prefix('#'))
        .filter_map(|l| l.trim().split_once('='))
        .collect();
    let stats = ChannelStats::read_csv(text.as_bytes())?;
    let n = stats.n();
    let k = match (a.k, a.rate) {
        (Some(k), None) => k,
        (None, Some(r)) => {
            let kf = r * n as f64;
            if !(0.0..=1.0).contains(&r) || (kf - kf.round()).abs() > 1e-9 {
                return Err(usage(format!("rate {r} does not give a whole number of data wires for n = {n}")));
            }
            kf.round() as usize
        }
        _ => return Err(usage("give exactly one of --k and --rate")),
    };
    if k > n {
        return Err(usage(format!("k = {k} exceeds n = {n}")));
    }
    let roles = select_channels(&stats, k, a.rule)?;
    let field = |flag: &Option<String>, key: &str| flag.clone().unwrap_or_else(|| meta.get(key).unwrap_or(&"").to_string());
    let map = FrozenMap {
        n,
        k,
        channel: field(&a.channel, "channel"),
        family: field(&a.family, "family"),
        decoder: field(&a.decoder, "decoder"),
        roles,
    };
    let ub = union_bound(&stats, &map.roles)?;
    let db = degenerate_bound(&stats);
    let cfg = json!({
        "command": "select",
        "stats_hash": meta.get("config_hash"),
        "k": k,
        "rule": format!("{:?}", a.rule),
    });
    let hash = config_hash(&cfg)?;
    write_out(cli.out.as_deref(), &(map.to_json()? + "\n"))?;
    sidecar(cli, &cfg, &hash)?;
    println!("union_bound={} degenerate_bound={}", ub.raw, db);
    Ok(())
}

fn simulate_cmd(cli: &Cli, a: &SimulateArgs) -> Result<()> {
    let c = circuit(&a.code)?;
    let text = fs::read_to_string(&a.frozen).map_err(|e| usage(format!("{}: {e}", a.frozen.display())))?;
    let map = FrozenMap::from_json(&text).map_err(|e| usage(format!("{}: {e}", a.frozen.display())))?;
    if map.n != c.n {
        return Err(usage(format!("frozen map is for n = {} but the code has n = {}", map.n, c.n)));
    }
    if !map.family.is_empty() && map.family != a.code.family.to_string() {
        return Err(usage(format!("frozen map is for the {} family", map.family)));
    }
    let rec = simulate(&c, &a.channel, a.decoder, &map.roles, &mc(cli, a.trials, a.batch)?)?;
    let cfg = json!({
        "command": "simulate",
        "family": a.code.family.to_string(),
        "L": a.code.levels,
        "channel": a.channel.to_string(),
        "decoder": a.decoder.to_string(),
        "trials": a.trials,
        "seed": cli.seed,
        "batch": a.batch,
        "roles": map.roles,
    });
    let hash = config_hash(&cfg)?;
    match cli.format {
        Format::Csv => {
            let body = format!("# config_hash={hash}\n{}\n", rec.csv_row());
            match &cli.out {
                Some(p) => {
                    let fresh = fs::metadata(p).map(|m| m.len() == 0).unwrap_or(true);
                    let mut f = fs::OpenOptions::new()
                        .create(true)
                        .append(true)
                        .open(p)
                        .with_context(|| format!("opening {}", p.display()))?;
                    if fresh {
                        writeln!(f, "{BER_HEADER}")?;
                    }
                    f.write_all(body.as_bytes())?;
                }
                None => print!("{BER_HEADER}\n{body}"),
            }
        }
        Format::Json => {
            let mut v = serde_json::to_value(&rec)?;
            v["config_hash"] = json!(hash);
            write_out(cli.out.as_deref(), &(serde_json::to_string_pretty(&v)? + "\n"))?;
        }
    }
    sidecar(cli, &cfg, &hash)
}

fn oracle(cli: &Cli, a: &OracleArgs) -> Result<()> {
    if a.code.levels > 3 {
        return Err(usage("oracle-check needs L <= 3"));
    }
    let c = circuit(&a.code)?;
    let (pass, report) = match a.channel {
        ChannelModel::Erasure { eps } => {
            if a.code.family != Family::Polar {
                return Err(usage("the erasure check compares with density evolution, which covers the polar family only"));
            }
            let e = BigRational::from_float(eps).ok_or_else(|| usage("eps is not finite"))?;
            let got = erasure_genie_exhaustive(&c, &e)?;
            let want = bec_density_evolution_exact(a.code.levels, &e);
            let pass = got == want;
            (pass, json!({ "check": "erasure-exhaustive", "patterns": 1u64 << c.n, "wires": c.n, "exact_match": pass }))
        }
        ChannelModel::Pauli { .. } => {
            if a.decoder == DecoderKind::ErasureExact {
                return Err(usage("erasure-exact needs an erasure channel"));
            }
            let r = oracle_check(&c, &[a.channel.pauli_probs()], a.decoder.schedule(), a.states, cli.seed)?;
            let pass = r.passed(a.tol);
            let mut v = serde_json::to_value(&r)?;
            v["check"] = json!("brute-force");
            (pass, v)
        }
    };
    let verdict = if pass { "pass" } else { "fail" };
    let text = match cli.format {
        Format::Json => {
            let mut v = report;
            v["result"] = json!(verdict);
            serde_json::to_string_pretty(&v)? + "\n"
        }
        Format::Csv => {
            let Value::Object(m) = report else { unreachable!() };
            let mut s: Vec<String> = m.iter()
                .map(|(k, v)| match v {
                    Value::String(s) => format!("{k}={s}"),
                    _ => format!("{k}={v}"),
                })
                .collect();
            s.push(format!("result={verdict}"));
            s.join(" ") + "\n"
        }
    };
    write_out(cli.out.as_deref(), &text)?;
    if pass {
        Ok(())
    } else {
        Err(anyhow!("decoder disagrees with the reference"))
    }
}

fn bench(cli: &Cli, a: &BenchArgs) -> Result<()> {
    if a.levels.is_empty() {
        return Err(usage("--Ls is empty"));
    }
    if a.decoder == DecoderKind::ErasureExact || a.channel.is_erasure() {
        return Err(usage("bench times the contraction decoder on a Pauli channel"));
    }
    let circuits = a
        .levels
        .iter()
        .map(|&l| build(a.family, l).map_err(|e| usage(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let codes: Vec<(&CodeCircuit, Vec<Role>)> = circuits
        .iter()
        .map(|c| {
            let k = (a.rate * c.n as f64).round() as usize;
            (c, random_roles(&mut batch_rng(cli.seed, c.levels as u64), c.n, k.min(c.n)))
        })
        .collect();
    let ts = time_interleaved(&codes, &a.channel, a.decoder.schedule(), a.reps, cli.seed)?;
    let mut csv = String::from("L,n,family,decoder,min_seconds,median_seconds,mean_seconds,failed\n");
    for (c, t) in circuits.iter().zip(&ts) {
        csv += &format!(
            "{},{},{},{},{:.6e},{:.6e},{:.6e},{}\n",
            c.levels,
            c.n,
            a.family,
            a.decoder,
            t.min(),
            t.median(),
            t.mean(),
            t.failed
        );
    }
    write_out(cli.out.as_deref(), &csv)?;
    let monotone = ts.windows(2).all(|w| w[0].median() <= w[1].median());
    if let (Some(c0), Some(c1)) = (circuits.first(), circuits.last()) {
        if circuits.len() > 1 {
            let nlogn = |c: &CodeCircuit| c.n as f64 * c.levels as f64;
            let growth = nlogn(c1) / nlogn(c0);
            let ratio = ts[ts.len() - 1].median() / ts[0].median();
            let limit = growth * a.slack;
            let ok = ratio <= limit && monotone;
            eprintln!(
                "ratio={ratio:.2} nlogn_ratio={growth:.2} limit={limit:.2} monotone={monotone} verdict={}",
                if ok { "ok" } else { "slow" }
            );
        }
    }
    Ok(())
}

fn export(cli: &Cli, a: &CodeArgs) -> Result<()> {
    let c = circuit(a)?;
    let text = match cli.format {
        Format::Json => c.to_json()? + "\n",
        Format::Csv => {
            let mut s = String::from("sublayer,scale,kind,control,target\n");
            for (i, l) in c.layers.iter().enumerate() {
                let kind = match l.kind {
                    SublayerKind::Disentangler => "disentangler",
                    SublayerKind::Tree => "tree",
                };
                for g in &l.gates {
                    s += &format!("{i},{},{kind},{},{}\n", l.scale, g.control, g.target);
                }
            }
            s
        }
    };
    write_out(cli.out.as_deref(), &text)
}
