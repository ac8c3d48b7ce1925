//! Command-line front end: run simulations, replay logs against the reference
//! oracle, and emit metric reports.
//!
//! Exit codes: 0 ok, 2 input error, 3 simulation assertion, 4 oracle mismatch.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use turnflow_core::engine::Policy;
use turnflow_core::logfmt::{parse_log, write_log, LogRecord, MetaRecord};
use turnflow_core::metrics::{self, aggregate, compare, PolicyReport, BIN_MS};
use turnflow_core::model::EngineConfig;
use turnflow_core::oracle::verify_log;
use turnflow_core::sim::corpus::default_corpus;
use turnflow_core::sim::run_corpus;
use turnflow_core::sim::scenario::{LatencyModel, Scenario};
use turnflow_core::validate::validate_event_stream;

const EXIT_INPUT: u8 = 2;
const EXIT_ASSERT: u8 = 3;
const EXIT_DIVERGE: u8 = 4;

struct CmdError {
    code: u8,
    message: String,
}

impl CmdError {
    fn input(message: impl Into<String>) -> Self {
        Self { code: EXIT_INPUT, message: message.into() }
    }

    fn assert(message: impl Into<String>) -> Self {
        Self { code: EXIT_ASSERT, message: message.into() }
    }

    fn diverge(message: impl Into<String>) -> Self {
        Self { code: EXIT_DIVERGE, message: message.into() }
    }
}

type CmdResult = Result<(), CmdError>;

#[derive(Parser)]
#[command(name = "turnflow", version, about = "Turn-taking coordination simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate scenarios under one policy and write per-scenario logs.
    Run(RunArgs),
    /// Re-feed a log's inputs through the engine and reference interpreter.
    Replay(ReplayArgs),
    /// Compute response-time and interruption metrics from logs.
    Report(ReportArgs),
    /// Compare metrics between two sets of logs.
    Compare(CompareArgs),
    /// Print the fully resolved configuration.
    DumpConfig(ConfigArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PolicyArg {
    Proposed,
    Baseline,
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat TOML file with EngineConfig/LatencyModel field names.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Baseline endpointing silence (also used when replaying baseline logs).
    #[arg(long)]
    silence_ms: Option<u64>,
    /// Override language-model preparation latency.
    #[arg(long)]
    llm_ms: Option<u64>,
    /// Override speech-synthesis preparation latency.
    #[arg(long)]
    tts_ms: Option<u64>,
    /// Override the ASR partial hypothesis period.
    #[arg(long)]
    asr_partial_period_ms: Option<u64>,
    /// Override the ASR final result lag.
    #[arg(long)]
    asr_final_lag_ms: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (JSON); repeatable.
    #[arg(long = "scenario")]
    scenarios: Vec<PathBuf>,
    /// Additionally generate N scenarios from the built-in seeded corpus.
    #[arg(long)]
    gen_corpus: Option<usize>,
    #[arg(long, value_enum, default_value = "proposed")]
    policy: PolicyArg,
    /// Master seed; per-scenario seeds are derived from it and the scenario id.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for logs and the aggregate report.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct ReplayArgs {
    /// Log files to verify; repeatable.
    logs: Vec<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    Table,
    Machine,
    Histogram,
}

#[derive(Args)]
struct ReportArgs {
    /// Log files; repeatable. All logs must cover the same scenario set.
    logs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "table")]
    format: ReportFormat,
    /// Optional output path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// First set of log files (comma-separated or repeated).
    #[arg(long = "a", required = true, value_delimiter = ',')]
    a: Vec<PathBuf>,
    /// Second set of log files.
    #[arg(long = "b", required = true, value_delimiter = ',')]
    b: Vec<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Replay(args) => cmd_replay(args),
        Command::Report(args) => cmd_report(args),
        Command::Compare(args) => cmd_compare(args),
        Command::DumpConfig(args) => cmd_dump_config(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

// --- configuration ----------------------------------------------------------

/// Resolved configuration: defaults, overlaid by the file, then by flags.
struct Resolved {
    engine: EngineConfig,
    latency: LatencyModel,
    silence_ms: u64,
}

fn resolve_config(args: &ConfigArgs) -> Result<Resolved, CmdError> {
    let mut engine_tbl = to_table(&EngineConfig::default())?;
    let mut latency_tbl = to_table(&LatencyModel::default())?;
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path)
            .map_err(|e| CmdError::input(format!("{}: {e}", path.display())))?;
        let file: toml::Table = toml::from_str(&text)
            .map_err(|e| CmdError::input(format!("{}: {e}", path.display())))?;
        for (key, value) in file {
            if engine_tbl.contains_key(&key) {
                engine_tbl.insert(key, value);
            } else if latency_tbl.contains_key(&key) {
                latency_tbl.insert(key, value);
            } else {
                return Err(CmdError::input(format!(
                    "{}: unknown configuration key `{key}`",
                    path.display()
                )));
            }
        }
    }
    let mut latency: LatencyModel = from_table(latency_tbl)?;
    let engine: EngineConfig = from_table(engine_tbl)?;
    if let Some(v) = args.llm_ms {
        latency.llm_ms = v;
    }
    if let Some(v) = args.tts_ms {
        latency.tts_ms = v;
    }
    if let Some(v) = args.asr_partial_period_ms {
        latency.asr_partial_period_ms = v;
    }
    if let Some(v) = args.asr_final_lag_ms {
        latency.asr_final_lag_ms = v;
    }
    Ok(Resolved { engine, latency, silence_ms: args.silence_ms.unwrap_or(1000) })
}

fn to_table<T: serde::Serialize>(value: &T) -> Result<toml::Table, CmdError> {
    match toml::Value::try_from(value) {
        Ok(toml::Value::Table(t)) => Ok(t),
        Ok(_) => Err(CmdError::input("configuration is not a table")),
        Err(e) => Err(CmdError::input(e.to_string())),
    }
}

fn from_table<T: serde::de::DeserializeOwned>(table: toml::Table) -> Result<T, CmdError> {
    toml::Value::Table(table)
        .try_into()
        .map_err(|e| CmdError::input(format!("invalid configuration: {e}")))
}

fn policy_of(arg: PolicyArg, silence_ms: u64) -> Policy {
    match arg {
        PolicyArg::Proposed => Policy::Proposed,
        PolicyArg::Baseline => Policy::Baseline { silence_ms },
    }
}

// --- output helpers ---------------------------------------------------------

/// Write via a temp file in the target directory, then rename into place.
fn write_atomic(path: &Path, contents: &str) -> Result<(), CmdError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .map_err(|e| CmdError::input(format!("{}: {e}", dir.display())))?;
    tmp.write_all(contents.as_bytes())
        .map_err(|e| CmdError::input(format!("{}: {e}", path.display())))?;
    tmp.persist(path).map_err(|e| CmdError::input(format!("{}: {e}", path.display())))?;
    Ok(())
}

fn emit(out: Option<&Path>, contents: &str) -> Result<(), CmdError> {
    match out {
        Some(path) => write_atomic(path, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

// --- run --------------------------------------------------------------------

fn cmd_run(args: RunArgs) -> CmdResult {
    let resolved = resolve_config(&args.config)?;
    let policy = policy_of(args.policy, resolved.silence_ms);

    // parse everything before simulating anything: no partial outputs
    let mut scenarios: Vec<Scenario> = Vec::new();
    for path in &args.scenarios {
        let text = fs::read_to_string(path)
            .map_err(|e| CmdError::input(format!("{}: {e}", path.display())))?;
        let scn: Scenario = serde_json::from_str(&text)
            .map_err(|e| CmdError::input(format!("{}: {e}", path.display())))?;
        scn.validate().map_err(|e| CmdError::input(format!("{}: {e}", path.display())))?;
        scenarios.push(scn);
    }
    if let Some(n) = args.gen_corpus {
        scenarios.extend(default_corpus(args.seed, n));
    }
    if scenarios.is_empty() {
        return Err(CmdError::input("nothing to run: pass --scenario and/or --gen-corpus"));
    }

    let run = run_corpus(&scenarios, args.seed, &policy, &resolved.engine, &resolved.latency)
        .map_err(CmdError::assert)?;

    fs::create_dir_all(&args.out)
        .map_err(|e| CmdError::input(format!("{}: {e}", args.out.display())))?;
    let mut logs = Vec::new();
    for (id, log) in &run {
        let path = args.out.join(format!("{id}.{}.jsonl", policy.name()));
        write_atomic(&path, &write_log(log))?;
        logs.push(log.clone());
    }
    let report = aggregate(&logs).map_err(|e| CmdError::assert(e.to_string()))?;
    let rendered = metrics::render_report(policy.name(), &report);
    write_atomic(&args.out.join("report.txt"), &rendered)?;
    print!("{rendered}");
    Ok(())
}

// --- replay -----------------------------------------------------------------

fn load_log(path: &Path) -> Result<Vec<LogRecord>, CmdError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CmdError::input(format!("{}: {e}", path.display())))?;
    parse_log(&text).map_err(|e| CmdError::input(format!("{}: {e}", path.display())))
}

fn meta_of(log: &[LogRecord], path: &Path) -> Result<(String, String), CmdError> {
    log.iter()
        .find_map(|r| match r {
            LogRecord::Meta(MetaRecord::RunMeta { scenario_id, policy, .. }) => {
                Some((scenario_id.clone(), policy.clone()))
            }
            _ => None,
        })
        .ok_or_else(|| CmdError::input(format!("{}: missing RunMeta record", path.display())))
}

fn cmd_replay(args: ReplayArgs) -> CmdResult {
    if args.logs.is_empty() {
        return Err(CmdError::input("no log files given"));
    }
    let resolved = resolve_config(&args.config)?;
    for path in &args.logs {
        let log = load_log(path)?;
        let (_, policy_name) = meta_of(&log, path)?;
        let policy = match policy_name.as_str() {
            "proposed" => Policy::Proposed,
            "baseline" => Policy::Baseline { silence_ms: resolved.silence_ms },
            other => {
                return Err(CmdError::input(format!(
                    "{}: unknown policy `{other}` in RunMeta",
                    path.display()
                )))
            }
        };
        let violations = validate_event_stream(&log, resolved.engine.frame_period_ms);
        if !violations.is_empty() {
            let lines: Vec<String> =
                violations.iter().map(|v| format!("record {}: {}", v.index, v.message)).collect();
            return Err(CmdError::assert(format!("{}: {}", path.display(), lines.join("; "))));
        }
        verify_log(&log, &resolved.engine, &policy)
            .map_err(|e| CmdError::diverge(format!("{}: {e}", path.display())))?;
        println!("{}: ok", path.display());
    }
    Ok(())
}

// --- report / compare -------------------------------------------------------

struct Grouped {
    /// policy name -> logs, with a consistent scenario set across policies
    by_policy: BTreeMap<String, Vec<Vec<LogRecord>>>,
}

fn group_logs(paths: &[PathBuf]) -> Result<Grouped, CmdError> {
    if paths.is_empty() {
        return Err(CmdError::input("no log files given"));
    }
    let mut by_policy: BTreeMap<String, Vec<Vec<LogRecord>>> = BTreeMap::new();
    let mut scenarios: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for path in paths {
        let log = load_log(path)?;
        let (scenario_id, policy) = meta_of(&log, path)?;
        scenarios.entry(policy.clone()).or_default().push(scenario_id);
        by_policy.entry(policy).or_default().push(log);
    }
    let mut sets: Vec<Vec<String>> = scenarios
        .values()
        .map(|ids| {
            let mut ids = ids.clone();
            ids.sort();
            ids
        })
        .collect();
    sets.dedup();
    if sets.len() > 1 {
        return Err(CmdError::input(
            "mixed corpora: the policies cover different scenario sets".to_string(),
        ));
    }
    Ok(Grouped { by_policy })
}

fn policy_reports(g: &Grouped) -> Result<Vec<(String, PolicyReport)>, CmdError> {
    g.by_policy
        .iter()
        .map(|(name, logs)| {
            let rep = aggregate(logs)
                .map_err(|e| CmdError::assert(format!("policy {name}: {e}")))?;
            Ok((name.clone(), rep))
        })
        .collect()
}

fn cmd_report(args: ReportArgs) -> CmdResult {
    let grouped = group_logs(&args.logs)?;
    let reports = policy_reports(&grouped)?;
    let mut out = String::new();
    match args.format {
        ReportFormat::Table => {
            for (name, rep) in &reports {
                out.push_str(&metrics::render_report(name, rep));
            }
            if let [(_, a), (_, b)] = &reports[..] {
                out.push_str(&metrics::render_compare(&compare(a.clone(), b.clone())));
            }
        }
        ReportFormat::Machine => {
            for (name, rep) in &reports {
                let mut record = serde_json::Map::new();
                record.insert("policy".into(), name.as_str().into());
                let value = serde_json::to_value(rep)
                    .map_err(|e| CmdError::assert(e.to_string()))?;
                record.insert("metrics".into(), value);
                out.push_str(&serde_json::Value::Object(record).to_string());
                out.push('\n');
            }
        }
        ReportFormat::Histogram => {
            for (name, rep) in &reports {
                out.push_str(&format!("# {name}\n"));
                for (bin, count) in &rep.response.histogram {
                    out.push_str(&format!("{}\t{count}\n", bin + BIN_MS as i64 / 2));
                }
            }
        }
    }
    emit(args.out.as_deref(), &out)
}

fn cmd_compare(args: CompareArgs) -> CmdResult {
    let a = policy_reports(&group_logs(&args.a)?)?;
    let b = policy_reports(&group_logs(&args.b)?)?;
    let one = |side: &str, reports: &[(String, PolicyReport)]| -> Result<PolicyReport, CmdError> {
        match reports {
            [(_, rep)] => Ok(rep.clone()),
            _ => Err(CmdError::input(format!("side {side} must hold exactly one policy"))),
        }
    };
    let rep_a = one("a", &a)?;
    let rep_b = one("b", &b)?;
    print!("{}", metrics::render_compare(&compare(rep_a, rep_b)));
    Ok(())
}

// --- dump-config ------------------------------------------------------------

fn cmd_dump_config(args: ConfigArgs) -> CmdResult {
    let resolved = resolve_config(&args)?;
    let mut table = to_table(&resolved.engine)?;
    table.extend(to_table(&resolved.latency)?);
    let text = toml::to_string(&toml::Value::Table(table))
        .map_err(|e| CmdError::input(e.to_string()))?;
    print!("{text}");
    Ok(())
}
