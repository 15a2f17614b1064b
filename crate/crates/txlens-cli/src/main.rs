//! Command line front end: `txlens analyze` runs one transaction through
//! the full pipeline and prints a risk summary, `txlens eval` scores the
//! detector against a labeled fixture corpus.
//!
//! Configuration comes from a `.env` file or the process environment
//! (`MODEL_1..N`, `EXPLORER_API_URL`, `TXLENS_OUT_DIR`, ...); flags override
//! the environment. Exit codes: 0 safe, 1 suspicious, 2 malicious, 10 and
//! up for operational failures.

use std::collections::HashMap;
use std::path::PathBuf;
use std::process::exit;
use std::time::Duration;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use txlens::config::{build_backends, BackendSpec, EnvConfig};
use txlens::consensus::ConsensusConfig;
use txlens::eval::{load_manifest, run_eval};
use txlens::features::GasThresholds;
use txlens::ingest::TraceSource;
use txlens::llm::DEFAULT_SECTION_BUDGET;
use txlens::pipeline::{exit_code_for_label, run_analysis, AnalysisTarget, RunConfig};
use txlens::util::ExecMode;

const CONFIG_EXIT: i32 = 10;

#[derive(Parser)]
#[command(name = "txlens", version, about = "Pre-signing risk analysis for EVM transactions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze one transaction and print its risk verdict.
    Analyze(AnalyzeArgs),
    /// Replay a labeled corpus and report precision/recall/F1.
    Eval(EvalArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    /// A transaction already mined, referenced by hash.
    Historical,
    /// A prospective call simulated before signing.
    Simulate,
}

#[derive(Args)]
struct CommonArgs {
    /// Threat database directory (addresses.txt, domains.txt, tags.json,
    /// patterns.json) or a single database file. Repeatable.
    #[arg(long, value_name = "PATH")]
    db: Vec<PathBuf>,

    /// Evidence weight config file.
    #[arg(long, value_name = "FILE")]
    weights: Option<PathBuf>,

    /// Storage slot hint file for state-change classification.
    #[arg(long, value_name = "FILE")]
    hints: Option<PathBuf>,

    /// Model backend spec, `remote:<name>@<url>` or `scripted:<path>`.
    /// Repeatable; when given, replaces the MODEL_1..N environment set.
    #[arg(long = "models", value_name = "SPEC")]
    models: Vec<String>,

    /// Report output directory. Overrides TXLENS_OUT_DIR.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Self-reflection rounds before falling back to the weighted vote.
    #[arg(long, value_name = "M", default_value_t = 3)]
    max_rounds: u32,

    /// Primary model name. Defaults to the first configured model.
    #[arg(long, value_name = "NAME")]
    primary: Option<String>,

    /// Model request timeout in seconds.
    #[arg(long, value_name = "SECS", default_value_t = 30)]
    timeout_secs: u64,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long, value_enum, default_value = "historical")]
    mode: Mode,

    /// Transaction hash (historical mode).
    #[arg(long, value_name = "HASH")]
    tx: Option<String>,

    /// Target contract address (simulate mode).
    #[arg(long, value_name = "ADDR")]
    to: Option<String>,

    /// Canonical function signature, e.g. "approve(address,uint256)".
    #[arg(long, value_name = "SIGNATURE")]
    sig: Option<String>,

    /// Call argument, repeatable in declaration order (simulate mode).
    #[arg(long = "args", value_name = "VALUE")]
    args: Vec<String>,

    /// Trace source: fixture:<path>, local:<path>, simulator:<url>, or
    /// explorer:<url>. Defaults to EXPLORER_API_URL (historical) or
    /// SIMULATOR_URL (simulate).
    #[arg(long, value_name = "SPEC")]
    trace: Option<String>,

    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct EvalArgs {
    /// Case manifest: [{"fixture": path, "ground_truth": "PHISHING"|"BENIGN"}].
    #[arg(long, value_name = "FILE")]
    cases: PathBuf,

    /// Independent evaluation runs to aggregate.
    #[arg(long, value_name = "N", default_value_t = 3)]
    runs: u32,

    /// Analyze cases one at a time instead of on the worker pool.
    #[arg(long)]
    sequential: bool,

    /// Worker pool size. Overrides TXLENS_WORKERS.
    #[arg(long, value_name = "N")]
    workers: Option<usize>,

    #[command(flatten)]
    common: CommonArgs,
}

fn fail_config(message: impl std::fmt::Display) -> ! {
    eprintln!("txlens: config: {message}");
    exit(CONFIG_EXIT);
}

/// Expands `--db` arguments: directories contribute every recognized
/// database file they contain, plain files pass through unchanged.
fn expand_db_paths(raw: &[PathBuf]) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for path in raw {
        if path.is_dir() {
            let mut found = false;
            for name in ["addresses.txt", "domains.txt", "tags.json", "patterns.json"] {
                let candidate = path.join(name);
                if candidate.is_file() {
                    out.push(candidate);
                    found = true;
                }
            }
            if !found {
                fail_config(format_args!(
                    "database directory {} holds no recognized files",
                    path.display()
                ));
            }
        } else {
            out.push(path.clone());
        }
    }
    out
}

fn model_specs(common: &CommonArgs, env: &EnvConfig) -> Vec<BackendSpec> {
    let specs: Vec<BackendSpec> = if common.models.is_empty() {
        env.models.clone()
    } else {
        common
            .models
            .iter()
            .map(|raw| BackendSpec::parse(raw).unwrap_or_else(|e| fail_config(e)))
            .collect()
    };
    if specs.len() < 2 {
        fail_config(format_args!(
            "need at least 2 model backends, got {} (set MODEL_1.. or pass --models)",
            specs.len()
        ));
    }
    specs
}

fn run_config(common: &CommonArgs, env: &EnvConfig, out_override: Option<PathBuf>) -> RunConfig {
    let specs = model_specs(common, env);
    let api_keys: &HashMap<usize, String> = &env.model_api_keys;
    let backends = build_backends(&specs, api_keys).unwrap_or_else(|e| fail_config(e));

    let primary = match &common.primary {
        Some(name) => {
            if !specs.iter().any(|s| s.name() == name) {
                fail_config(format_args!("--primary {name:?} is not a configured model"));
            }
            name.clone()
        }
        None => specs[0].name().to_string(),
    };
    let mut consensus = ConsensusConfig::new(backends.len(), &primary);
    consensus.max_rounds = common.max_rounds;

    RunConfig {
        db_paths: expand_db_paths(&common.db),
        weights_path: common.weights.clone(),
        hints_path: common.hints.clone(),
        backends,
        consensus,
        section_budget: env.prompt_section_budget.unwrap_or(DEFAULT_SECTION_BUDGET),
        timeout: Duration::from_secs(common.timeout_secs),
        out_dir: out_override.or_else(|| common.out.clone()).or_else(|| env.out_dir.clone()),
        explorer_api_url: env.explorer_api_url.clone(),
        explorer_api_key: env.explorer_api_key.clone(),
        recent_timestamps: None,
        gas_thresholds: GasThresholds::default(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
    }
}

fn trace_source(args: &AnalyzeArgs, env: &EnvConfig) -> TraceSource {
    if let Some(spec) = &args.trace {
        let source = TraceSource::parse_spec(spec).unwrap_or_else(|e| fail_config(e));
        let key = match &source {
            TraceSource::RemoteSimulator { .. } => env.simulator_api_key.clone(),
            TraceSource::ChainExplorer { .. } => env.explorer_api_key.clone(),
            _ => None,
        };
        return source.with_api_key(key);
    }
    let (kind, url, key) = match args.mode {
        Mode::Historical => ("explorer", &env.explorer_api_url, &env.explorer_api_key),
        Mode::Simulate => ("simulator", &env.simulator_url, &env.simulator_api_key),
    };
    match url {
        Some(url) => TraceSource::parse_spec(&format!("{kind}:{url}"))
            .unwrap_or_else(|e| fail_config(e))
            .with_api_key(key.clone()),
        None => fail_config(format_args!(
            "no trace source: pass --trace or set {}",
            if matches!(args.mode, Mode::Historical) { "EXPLORER_API_URL" } else { "SIMULATOR_URL" }
        )),
    }
}

fn analysis_target(args: &AnalyzeArgs) -> AnalysisTarget {
    match args.mode {
        Mode::Historical => {
            let reference = match (&args.tx, &args.trace) {
                (Some(tx), _) => tx.clone(),
                // A fixture or recorded simulator file identifies itself.
                (None, Some(spec)) if !spec.starts_with("explorer:") => spec.clone(),
                _ => fail_config("historical mode requires --tx <hash>"),
            };
            AnalysisTarget::Historical { reference }
        }
        Mode::Simulate => {
            let to = args
                .to
                .as_deref()
                .unwrap_or_else(|| fail_config("simulate mode requires --to <addr>"));
            let sig = args
                .sig
                .as_deref()
                .unwrap_or_else(|| fail_config("simulate mode requires --sig <signature>"));
            let to = to.parse().unwrap_or_else(|e| {
                fail_config(format_args!("bad --to address {to:?}: {e}"))
            });
            AnalysisTarget::Simulate {
                to,
                signature: sig.to_string(),
                args: args.args.clone(),
            }
        }
    }
}

fn cmd_analyze(args: AnalyzeArgs, env: &EnvConfig) -> i32 {
    let cfg = run_config(&args.common, env, None);
    let source = trace_source(&args, env);
    let target = analysis_target(&args);
    match run_analysis(&cfg, &source, &target) {
        Ok(outcome) => {
            println!("{}", outcome.summary_text);
            if let Some(path) = &outcome.report_path {
                println!("report: {}", path.display());
            }
            exit_code_for_label(outcome.report.risk)
        }
        Err(err) => {
            eprintln!("txlens: {err}");
            err.exit_code()
        }
    }
}

fn cmd_eval(args: EvalArgs, env: &EnvConfig) -> i32 {
    let cfg = run_config(&args.common, env, None);
    let cases = match load_manifest(&args.cases) {
        Ok(cases) => cases,
        Err(err) => fail_config(err),
    };
    let mode = if args.sequential {
        ExecMode::Sequential
    } else {
        ExecMode::Parallel { workers: args.workers.or(env.workers) }
    };
    match run_eval(&cases, args.runs, &cfg, mode) {
        Ok(metrics) => {
            for (i, run) in metrics.per_run.iter().enumerate() {
                println!(
                    "run {}: tp={} fp={} fn={} precision={:.4} recall={:.4} f1={:.4}",
                    i + 1,
                    run.true_positives,
                    run.false_positives,
                    run.false_negatives,
                    run.precision,
                    run.recall,
                    run.f1
                );
            }
            println!("precision: {}", metrics.precision);
            println!("recall:    {}", metrics.recall);
            println!("f1:        {}", metrics.f1);
            for warning in &metrics.warnings {
                eprintln!("txlens: warning: {warning}");
            }
            0
        }
        Err(err) => {
            eprintln!("txlens: eval: {err}");
            CONFIG_EXIT
        }
    }
}

fn main() {
    dotenvy::dotenv().ok();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .try_init()
        .ok();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => CONFIG_EXIT,
            };
            err.print().ok();
            exit(code);
        }
    };

    let env = EnvConfig::from_env().unwrap_or_else(|e| fail_config(e));
    let code = match cli.command {
        Command::Analyze(args) => cmd_analyze(args, &env),
        Command::Eval(args) => cmd_eval(args, &env),
    };
    exit(code);
}
