//! `schrolab` command-line driver.
//!
//! Exit codes: 0 on success, 1 on usage or configuration errors, 2 when a
//! property check fails.

mod commands;
mod report;
mod specs;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use commands::*;
use report::Outcome;

#[derive(Parser, Debug)]
#[command(name = "schrolab", version = report::VERSION, about = "Critical radius, Agmon geometry, adapted weight classes and Schrödinger kernels on grids")]
#[command(args_override_self = true, propagate_version = true)]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory for the JSON report and CSV tables; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON object of option values for the subcommand; explicit flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true, env = "SCHROLAB_WORKERS")]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Critical radius field of a potential.
    Rho(RhoArgs),
    /// Agmon distance from one source.
    Agmon(AgmonArgs),
    /// Geometry checks of the Agmon metric.
    AgmonSuite(AgmonSuiteArgs),
    /// Class constant traces of one weight.
    WeightClass(ClassArgs),
    /// Inclusion chain across weight classes.
    Experiment(ExperimentArgs),
    /// Point values of a closed-form kernel.
    Kernel(KernelArgs),
    /// Finite-difference heat kernel of a 1-D potential.
    Heat1d(Heat1dArgs),
    /// Adapted maximal function of a test field.
    Maximal(MaximalArgs),
    /// Heat maximal function of a test field.
    Heat(HeatArgs),
    /// Weighted norm lower bound of a constant-potential Riesz transform.
    Riesz(RieszArgs),
    /// Weighted norm lower bound of an operator.
    NormBound(NormBoundArgs),
    /// Property suites with pass/fail verdicts.
    Verify(VerifyArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Rho(_) => "rho",
            Command::Agmon(_) => "agmon",
            Command::AgmonSuite(_) => "agmon-suite",
            Command::WeightClass(_) => "weight-class",
            Command::Experiment(_) => "experiment",
            Command::Kernel(_) => "kernel",
            Command::Heat1d(_) => "heat1d",
            Command::Maximal(_) => "maximal",
            Command::Heat(_) => "heat",
            Command::Riesz(_) => "riesz",
            Command::NormBound(_) => "norm-bound",
            Command::Verify(_) => "verify",
        }
    }

    fn config(&self) -> Value {
        match self {
            Command::Rho(a) => json!(a),
            Command::Agmon(a) => json!(a),
            Command::AgmonSuite(a) => json!(a),
            Command::WeightClass(a) => json!(a),
            Command::Experiment(a) => json!(a),
            Command::Kernel(a) => json!(a),
            Command::Heat1d(a) => json!(a),
            Command::Maximal(a) => json!(a),
            Command::Heat(a) => json!(a),
            Command::Riesz(a) => json!(a),
            Command::NormBound(a) => json!(a),
            Command::Verify(a) => json!(a),
        }
    }

    fn run(&self, seed: u64) -> schrolab::Result<Outcome> {
        match self {
            Command::Rho(a) => rho(a, seed),
            Command::Agmon(a) => agmon(a),
            Command::AgmonSuite(a) => agmon_suite(a, seed),
            Command::WeightClass(a) => weight_class(a, seed),
            Command::Experiment(a) => experiment(a, seed),
            Command::Kernel(a) => kernel(a),
            Command::Heat1d(a) => heat1d(a),
            Command::Maximal(a) => maximal(a, seed),
            Command::Heat(a) => heat(a, seed),
            Command::Riesz(a) => riesz(a, seed),
            Command::NormBound(a) => norm_bound(a, seed),
            Command::Verify(a) => verify(a, seed),
        }
    }
}

const GLOBAL_VALUED: [&str; 4] = ["--seed", "--out", "--config", "--workers"];

/// Position of the subcommand token in `argv`.
fn subcommand_index(argv: &[OsString]) -> Option<usize> {
    let mut i = 1;
    while i < argv.len() {
        let a = argv[i].to_string_lossy();
        if GLOBAL_VALUED.contains(&a.as_ref()) {
            i += 2;
        } else if a.starts_with('-') {
            i += 1;
        } else {
            return Some(i);
        }
    }
    None
}

/// Turns a JSON object into `--key value` tokens. Global keys go before the
/// subcommand, the rest right after it, so explicit flags later in `argv` win.
fn merge_config(argv: &[OsString], text: &str) -> Result<Vec<OsString>, String> {
    let v: Value = serde_json::from_str(text).map_err(|e| format!("config is not valid JSON: {e}"))?;
    let Value::Object(map) = v else {
        return Err("config must be a JSON object".into());
    };
    let (mut global, mut local) = (Vec::new(), Vec::new());
    for (k, v) in map {
        let flag = format!("--{}", k.replace('_', "-"));
        let dest = if GLOBAL_VALUED.contains(&flag.as_str()) { &mut global } else { &mut local };
        match v {
            Value::Null | Value::Bool(false) => {}
            Value::Bool(true) => dest.push(OsString::from(flag)),
            Value::String(s) => dest.extend([OsString::from(flag), OsString::from(s)]),
            Value::Number(n) => dest.extend([OsString::from(flag), OsString::from(n.to_string())]),
            other => return Err(format!("config key `{k}`: unsupported value {other}")),
        }
    }
    let at = subcommand_index(argv).ok_or("no subcommand given")?;
    let mut out = vec![argv[0].clone()];
    out.extend(global);
    out.extend(argv[1..=at].iter().cloned());
    out.extend(local);
    out.extend(argv[at + 1..].iter().cloned());
    Ok(out)
}

fn parse(argv: &[OsString]) -> Result<Cli, ExitCode> {
    let first = Cli::try_parse_from(argv).map_err(clap_exit)?;
    let Some(path) = &first.config else {
        return Ok(first);
    };
    let text = std::fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read config {}: {e}", path.display());
        ExitCode::from(1)
    })?;
    let merged = merge_config(argv, &text).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(1)
    })?;
    Cli::try_parse_from(&merged).map_err(clap_exit)
}

fn clap_exit(e: clap::Error) -> ExitCode {
    use clap::error::ErrorKind;
    let _ = e.print();
    match e.kind() {
        ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => ExitCode::SUCCESS,
        _ => ExitCode::from(1),
    }
}

fn set_workers(n: Option<usize>) -> Result<(), String> {
    let Some(n) = n else {
        return Ok(());
    };
    if n == 0 {
        return Err("--workers must be positive".into());
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())?;
    #[cfg(not(feature = "parallel"))]
    log::info!("built without the parallel feature; ignoring {n} worker(s)");
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let argv: Vec<OsString> = std::env::args_os().collect();
    let cli = match parse(&argv) {
        Ok(c) => c,
        Err(code) => return code,
    };
    if let Err(e) = set_workers(cli.workers) {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    let outcome = match cli.command.run(cli.seed) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let name = cli.command.name();
    let env = report::envelope(name, cli.command.config(), cli.seed, outcome.result);
    if let Err(e) = report::emit(name, &env, &outcome.tables, cli.out.as_deref()) {
        eprintln!("error: cannot write report: {e}");
        return ExitCode::from(1);
    }
    if outcome.failed {
        eprintln!("{name}: property check failed");
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(s: &[&str]) -> Vec<OsString> {
        s.iter().map(OsString::from).collect()
    }

    #[test]
    fn config_tokens_precede_explicit_flags() {
        let argv = args(&["schrolab", "--seed", "3", "verify", "--suite", "mehler"]);
        let merged = merge_config(&argv, r#"{"suite": "all", "quick": true, "seed": 9}"#).unwrap();
        let cli = Cli::try_parse_from(&merged).unwrap();
        assert_eq!(cli.seed, 3);
        match cli.command {
            Command::Verify(v) => {
                assert_eq!(v.suite, "mehler");
                assert!(v.quick);
            }
            _ => panic!("wrong subcommand"),
        }
    }

    #[test]
    fn config_rejects_non_objects() {
        assert!(merge_config(&args(&["schrolab", "verify"]), "[1]").is_err());
        assert!(merge_config(&args(&["schrolab", "verify"]), "{").is_err());
    }

    #[test]
    fn subcommand_after_globals() {
        assert_eq!(subcommand_index(&args(&["s", "--out", "d", "--quick", "rho"])), Some(4));
        assert_eq!(subcommand_index(&args(&["s", "--seed", "1"])), None);
    }
}
