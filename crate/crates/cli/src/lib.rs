//! Command-line front end.

pub mod commands;
pub mod config;

use clap::{Args, Parser, Subcommand};
use qfock_core::cache::{GramCache, VerifyStatus};
use qfock_core::check::Check;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use config::{Precision, RunConfig};

/// Exit status for configuration and argument errors.
pub const USAGE_EXIT: i32 = 2;

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

#[derive(Parser, Debug)]
#[command(name = "qfock", version, about = "Truncated q-Fock space verification suites")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Gram blocks, positivity and the naive oracle
    Gram(RunArgs),
    /// Adjointness of creation and annihilation operators
    Ops(RunArgs),
    /// Per-level commutator norms against q^n
    CommutatorDecay(RunArgs),
    /// Gaussian moments against the pair-partition sum
    Moments(RunArgs),
    /// Traciality of the vacuum state
    TraceCheck(RunArgs),
    /// Wick products on basis words
    Wick(RunArgs),
    /// Left and right Wick products commute
    Commutant(RunArgs),
    /// Commutator expansion and its bound
    ConvCheck(RunArgs),
    /// Araki-Woods inner product, H_R' and I_r
    AwInner(RunArgs),
    /// Araki-Woods modular data
    AwModular(RunArgs),
    /// Centralizer of the vacuum state
    AwCentralizer(RunArgs),
    /// Central-vector computation chain
    AwThm44(RunArgs),
    /// Fixed vectors of the second-quantized group
    AwFixed(RunArgs),
    /// Gram cache administration
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    precision: Option<Precision>,
}

#[derive(Subcommand, Debug)]
enum CacheAction {
    List(CacheArgs),
    Verify(CacheArgs),
    Purge(CacheArgs),
}

#[derive(Args, Debug)]
struct CacheArgs {
    #[arg(long)]
    cache: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct CheckRecord {
    pub name: String,
    /// `null` when the value is not finite.
    pub lhs: Option<f64>,
    pub rhs: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

impl From<&Check> for CheckRecord {
    fn from(c: &Check) -> Self {
        let finite = |v: f64| v.is_finite().then_some(v);
        CheckRecord {
            name: c.name.clone(),
            lhs: finite(c.lhs),
            rhs: finite(c.rhs),
            tolerance: c.tolerance,
            pass: c.pass,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub command: String,
    pub config: Value,
    pub seed: Option<u64>,
    pub precision: Option<Precision>,
    pub checks: Vec<CheckRecord>,
    pub data: Value,
    pub errors: Vec<String>,
    pub timings: BTreeMap<String, f64>,
    pub versions: BTreeMap<String, String>,
    pub cache_hits: usize,
    pub overall_pass: bool,
}

fn versions() -> BTreeMap<String, String> {
    BTreeMap::from([
        ("qfock-cli".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ("report-format".to_string(), "1".to_string()),
    ])
}

/// Run a verification command described by a config file.
fn run_command(name: &str, args: &RunArgs) -> Result<Report, UsageError> {
    let start = Instant::now();
    let cfg = RunConfig::load(&args.config)?;
    if let Some(c) = &cfg.command {
        if c != name {
            return Err(UsageError(format!(
                "invalid config field `command`: config is for `{c}` but `{name}` was requested"
            )));
        }
    }
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    let precision = args.precision.or(cfg.precision).unwrap_or_default();
    let cache_dir = args.cache.clone().or_else(|| cfg.cache.clone());
    let cache = match &cache_dir {
        Some(dir) => Some(GramCache::new(dir).map_err(|e| UsageError(format!("cache directory {}: {e}", dir.display())))?),
        None => None,
    };
    let mut timings = BTreeMap::new();
    let mut errors = Vec::new();
    let mut checks = Vec::new();
    let mut data = Value::Null;
    let mut cache_hits = 0;
    let setup = Instant::now();
    match cfg.build_model(cache) {
        Ok(model) => {
            timings.insert("model_seconds".into(), setup.elapsed().as_secs_f64());
            let mut ctx = commands::Context {
                cfg: &cfg,
                model: &model,
                precision,
                rng: ChaCha8Rng::seed_from_u64(seed),
            };
            let run = Instant::now();
            match commands::dispatch(name, &mut ctx) {
                Ok((c, d)) => {
                    checks = c;
                    data = d;
                }
                Err(e) => {
                    errors.push(e.to_string());
                    checks.push(Check::failed(format!("{name} completed"), 0.0));
                }
            }
            timings.insert("command_seconds".into(), run.elapsed().as_secs_f64());
            cache_hits = model.fock().cache_hits();
        }
        Err(e) => {
            errors.push(e.to_string());
            checks.push(Check::failed("model construction", 0.0));
        }
    }
    timings.insert("total_seconds".into(), start.elapsed().as_secs_f64());
    let overall_pass = !checks.is_empty() && checks.iter().all(|c| c.pass);
    Ok(Report {
        command: name.to_string(),
        config: serde_json::to_value(&cfg).unwrap_or(Value::Null),
        seed: Some(seed),
        precision: Some(precision),
        checks: checks.iter().map(CheckRecord::from).collect(),
        data,
        errors,
        timings,
        versions: versions(),
        cache_hits,
        overall_pass,
    })
}

fn cache_admin(action: &CacheAction) -> Result<(Value, bool, Option<PathBuf>), UsageError> {
    let (name, args) = match action {
        CacheAction::List(a) => ("list", a),
        CacheAction::Verify(a) => ("verify", a),
        CacheAction::Purge(a) => ("purge", a),
    };
    let cache = GramCache::new(&args.cache).map_err(|e| UsageError(format!("cache directory {}: {e}", args.cache.display())))?;
    let io = |e: qfock_core::QfockError| UsageError(format!("cache {name}: {e}"));
    let (body, pass) = match action {
        CacheAction::List(_) => {
            let (entries, warnings) = cache.list().map_err(io)?;
            let rows: Vec<Value> = entries
                .iter()
                .map(|e| json!({"path": e.path, "d": e.d, "n": e.n, "hash": format!("{:016x}", e.hash)}))
                .collect();
            (json!({"entries": rows, "warnings": warnings}), true)
        }
        CacheAction::Verify(_) => {
            let outcomes = cache.verify().map_err(io)?;
            let mut pass = true;
            let rows: Vec<Value> = outcomes
                .iter()
                .map(|o| {
                    let (status, detail) = match &o.status {
                        VerifyStatus::Ok => ("ok", String::new()),
                        VerifyStatus::HashMismatch(m) => {
                            pass = false;
                            ("hash-mismatch", m.clone())
                        }
                        VerifyStatus::Unreadable(m) => ("unreadable", m.clone()),
                    };
                    json!({"path": o.path, "status": status, "detail": detail})
                })
                .collect();
            (json!({"files": rows}), pass)
        }
        CacheAction::Purge(_) => {
            let removed = cache.purge().map_err(io)?;
            (json!({"removed": removed}), true)
        }
    };
    let report = json!({
        "command": format!("cache {name}"),
        "cache": args.cache,
        "result": body,
        "versions": versions(),
        "overall_pass": pass,
    });
    Ok((report, pass, args.out.clone()))
}

fn emit(report: &Value, out: Option<&Path>) -> Result<(), UsageError> {
    let text = serde_json::to_string_pretty(report).map_err(|e| UsageError(e.to_string()))?;
    match out {
        Some(path) => std::fs::write(path, text + "\n").map_err(|e| UsageError(format!("cannot write {}: {e}", path.display()))),
        None => {
            use std::io::Write;
            // a closed pipe is not an error worth reporting
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            Ok(())
        }
    }
}

/// Parse arguments, run, and return the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { USAGE_EXIT } else { 0 };
        }
    };
    let result = match &cli.command {
        Command::Cache { action } => cache_admin(action).and_then(|(report, pass, out)| {
            emit(&report, out.as_deref())?;
            Ok(pass)
        }),
        other => {
            let (name, args) = named(other);
            run_command(name, args).and_then(|report| {
                let pass = report.overall_pass;
                let value = serde_json::to_value(&report).map_err(|e| UsageError(e.to_string()))?;
                emit(&value, args.out.as_deref())?;
                if args.out.is_some() {
                    let failed = report.checks.iter().filter(|c| !c.pass).count();
                    println!(
                        "{name}: {} ({} checks, {failed} failed)",
                        if pass { "pass" } else { "FAIL" },
                        report.checks.len()
                    );
                }
                Ok(pass)
            })
        }
    };
    match result {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("qfock: {e}");
            USAGE_EXIT
        }
    }
}

fn named(c: &Command) -> (&'static str, &RunArgs) {
    match c {
        Command::Gram(a) => ("gram", a),
        Command::Ops(a) => ("ops", a),
        Command::CommutatorDecay(a) => ("commutator-decay", a),
        Command::Moments(a) => ("moments", a),
        Command::TraceCheck(a) => ("trace-check", a),
        Command::Wick(a) => ("wick", a),
        Command::Commutant(a) => ("commutant", a),
        Command::ConvCheck(a) => ("conv-check", a),
        Command::AwInner(a) => ("aw-inner", a),
        Command::AwModular(a) => ("aw-modular", a),
        Command::AwCentralizer(a) => ("aw-centralizer", a),
        Command::AwThm44(a) => ("aw-thm44", a),
        Command::AwFixed(a) => ("aw-fixed", a),
        Command::Cache { .. } => unreachable!("cache is handled separately"),
    }
}
