//! Command-line entry point wiring the whole pipeline together:
//! `generate`, `train`, `evaluate`, `serve`, `monitor` and
//! `simulate-routing`.
//!
//! Every subcommand accepts `--seed` and `--config`; values in a JSON
//! config file override command-line flags. Exit codes: 0 success,
//! 1 usage error, 2 data error, 3 internal error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::eval::EvalReport;
use crate::featurize::VectorizerKind;
use crate::ingest::{load_logs, record_to_jsonl, DateHour, QueryLogRecord};
use crate::labeling::{classify_index, ClassScheme, Resource};
use crate::model::{Hyperparameters, ModelKind};
use crate::pipeline::{train_models, PipelineConfig};
use crate::repo::{list_versions, load_bundle, save_bundle, VersionSpec};
use crate::router::{
    simulate, workload_from_records, BundlePredictor, ClusterConfig, CostPredictor,
    OraclePredictor, RoutingPolicy,
};
use crate::serving::{serve, ServeOptions};
use crate::synth::{default_spec, generate_with_end, WorkloadSpec, DEFAULT_END_DATEHOUR};

#[derive(Parser)]
#[command(
    name = "sqlcost",
    version,
    about = "Forecast SQL query CPU and memory cost classes from query text"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic query request log (JSONL)
    Generate(GenerateArgs),
    /// Train CPU and memory cost models from request logs
    Train(TrainArgs),
    /// Evaluate stored model bundles against a log file
    Evaluate(EvaluateArgs),
    /// Serve cost predictions over HTTP with hot reload
    Serve(ServeArgs),
    /// Run the windowed drift monitor with automated retraining
    Monitor(MonitorArgs),
    /// Compare routing policies on a simulated cluster federation
    SimulateRouting(SimulateArgs),
}

pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Train(args) => cmd_train(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Serve(args) => cmd_serve(args),
        Command::Monitor(args) => cmd_monitor(args),
        Command::SimulateRouting(args) => cmd_simulate(args),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_data_error() {
                2
            } else {
                3
            }
        }
    }
}

fn read_config<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let raw = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&raw)
        .map_err(|e| Error::Config(format!("cannot parse {}: {e}", path.display())))
}

fn parse_datehour(s: &str) -> Result<DateHour> {
    s.parse()
}

/// Render one per-resource report in the style of the training tables.
fn render_report(title: &str, scheme: &ClassScheme, report: &EvalReport) -> String {
    let labels = scheme.labels();
    let mut out = format!(
        "{title}: accuracy {:.2}% (n={})\n",
        report.accuracy * 100.0,
        report.n
    );
    out.push_str("  class         precision  recall\n");
    for (i, label) in labels.iter().enumerate() {
        out.push_str(&format!(
            "  {label:<12}  {:>9.2}  {:>6.2}\n",
            report.precision[i], report.recall[i]
        ));
    }
    out
}

// ---------------------------------------------------------------- generate

#[derive(Args)]
struct GenerateArgs {
    /// Output file; `-` writes JSONL to stdout
    #[arg(long, default_value = "-")]
    out: String,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Workload spec JSON (template pool, class mixes, correlation,
    /// noise); defaults to the built-in workload
    #[arg(long)]
    config: Option<PathBuf>,
    /// Datehour (YYYYMMDDHH) the generated stream ends at
    #[arg(long, default_value = DEFAULT_END_DATEHOUR)]
    end_hour: String,
}

fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let spec: WorkloadSpec = match &args.config {
        Some(path) => read_config(path)?,
        None => default_spec(),
    };
    let end = parse_datehour(&args.end_hour)?;
    let records = generate_with_end(&spec, args.n, args.seed, end)?;

    let mut lines = String::with_capacity(records.len() * 160);
    for record in &records {
        lines.push_str(&record_to_jsonl(record));
        lines.push('\n');
    }
    if args.out == "-" {
        std::io::stdout().write_all(lines.as_bytes())?;
    } else {
        fs::write(&args.out, lines)?;
    }

    // class mix summary on stderr so the data stream stays clean
    let cpu_scheme = ClassScheme::cpu_default();
    let mem_scheme = ClassScheme::memory_default();
    let mut cpu_counts = [0usize; 3];
    let mut mem_counts = [0usize; 3];
    for r in &records {
        cpu_counts[classify_index(r.cpu_time_ms, &cpu_scheme)] += 1;
        mem_counts[classify_index(r.peak_memory_bytes, &mem_scheme)] += 1;
    }
    eprintln!(
        "generated {} records (seed {}): cpu classes {:?}, memory classes {:?}",
        records.len(),
        args.seed,
        cpu_counts,
        mem_counts
    );
    Ok(())
}

// ------------------------------------------------------------------- train

#[derive(Args)]
struct TrainArgs {
    /// Request log file (JSONL, or CSV by extension)
    #[arg(long)]
    logs: PathBuf,
    /// Model repository directory
    #[arg(long)]
    repo: PathBuf,
    #[arg(long, default_value = "gbt")]
    model: ModelKind,
    #[arg(long, default_value = "tfidf")]
    vectorizer: VectorizerKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Hyperparameter grid JSON (array of candidates); defaults to the
    /// model's documented defaults
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Reference "now" (YYYYMMDDHH) for the log window; defaults to
    /// the newest datehour in the file
    #[arg(long)]
    now: Option<String>,
    #[arg(long, default_value_t = 90)]
    window_days: u32,
    #[arg(long, default_value_t = 3)]
    folds: usize,
    #[arg(long, default_value_t = 2)]
    min_df: u32,
    #[arg(long, default_value_t = 50_000)]
    max_features: usize,
    /// JSON config overriding any of the flags above
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct TrainConfigFile {
    model: Option<ModelKind>,
    vectorizer: Option<VectorizerKind>,
    seed: Option<u64>,
    grid: Option<Vec<Hyperparameters>>,
    now: Option<String>,
    window_days: Option<u32>,
    folds: Option<usize>,
    min_df: Option<u32>,
    max_features: Option<usize>,
    train_fraction: Option<f64>,
    cpu_boundaries: Option<[u64; 2]>,
    mem_boundaries: Option<[u64; 2]>,
}

fn load_window(logs: &Path, now: Option<&str>, window_days: u32) -> Result<Vec<QueryLogRecord>> {
    // With no explicit reference point, anchor the window at the
    // newest record so archived files stay trainable.
    let now = match now {
        Some(s) => parse_datehour(s)?,
        None => {
            let all = load_logs(logs, DateHour::from_parts(9999, 12, 31, 23)?, u32::MAX / 24)?;
            all.records
                .iter()
                .map(|r| r.datehour)
                .max()
                .expect("load_logs rejects empty files")
        }
    };
    let loaded = load_logs(logs, now, window_days)?;
    if loaded.skipped > 0 {
        eprintln!("skipped {} malformed log lines", loaded.skipped);
    }
    Ok(loaded.records)
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let overrides: TrainConfigFile = match &args.config {
        Some(path) => read_config(path)?,
        None => TrainConfigFile::default(),
    };
    let model = overrides.model.unwrap_or(args.model);
    let vectorizer = overrides.vectorizer.unwrap_or(args.vectorizer);
    let seed = overrides.seed.unwrap_or(args.seed);
    let now = overrides.now.clone().or(args.now);
    let window_days = overrides.window_days.unwrap_or(args.window_days);

    let grid = match (&overrides.grid, &args.grid) {
        (Some(grid), _) => grid.clone(),
        (None, Some(path)) => read_config(path)?,
        (None, None) => vec![Hyperparameters::defaults_for(model)],
    };
    if grid.iter().any(|hp| hp.kind() != model) {
        return Err(Error::Config(format!(
            "grid contains candidates for a different model than `{model}`"
        )));
    }

    let records = load_window(&args.logs, now.as_deref(), window_days)?;

    let mut cfg = PipelineConfig::new(model, vectorizer, seed);
    cfg.grid = grid;
    cfg.folds = overrides.folds.unwrap_or(args.folds);
    cfg.min_df = overrides.min_df.unwrap_or(args.min_df);
    cfg.max_features = overrides.max_features.unwrap_or(args.max_features);
    if let Some(fraction) = overrides.train_fraction {
        cfg.train_fraction = fraction;
    }
    if let Some(boundaries) = overrides.cpu_boundaries {
        cfg.cpu_scheme = ClassScheme::new(Resource::Cpu, boundaries)?;
    }
    if let Some(boundaries) = overrides.mem_boundaries {
        cfg.mem_scheme = ClassScheme::new(Resource::Memory, boundaries)?;
    }

    let output = train_models(&records, &cfg)?;
    println!(
        "trained {model}+{vectorizer} on {} records ({} train / {} test, vocabulary {}) in {:.1}s",
        records.len(),
        output.n_train,
        output.n_test,
        output.vocabulary_size,
        output.elapsed.as_secs_f64()
    );
    println!(
        "class distribution: cpu {:?}, memory {:?}",
        output.distribution.cpu_counts, output.distribution.mem_counts
    );
    for (name, outcome) in [
        ("CPU time model", &output.cpu),
        ("Peak memory model", &output.memory),
    ] {
        println!(
            "cross-validation ({} folds): mean accuracy {:?}",
            outcome.cv.folds, outcome.cv.candidate_mean_accuracy
        );
        if let Some(loss) = outcome.fit.final_loss() {
            println!("final training loss: {loss:.6}");
        }
        if let crate::model::cv::FitDetail::Logistic(fit) = &outcome.fit {
            if !fit.converged {
                eprintln!(
                    "warning: logistic fit did not converge (loss stalled with a large gradient)"
                );
            }
        }
        print!(
            "{}",
            render_report(name, &outcome.bundle.scheme, &outcome.test_report)
        );
    }

    let cpu_version = save_bundle(&args.repo, &output.cpu.bundle)?;
    let mem_version = save_bundle(&args.repo, &output.memory.bundle)?;
    println!(
        "saved bundles: cpu v{cpu_version}, memory v{mem_version} in {}",
        args.repo.display()
    );
    Ok(())
}

// ---------------------------------------------------------------- evaluate

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    logs: PathBuf,
    #[arg(long)]
    repo: PathBuf,
    /// cpu, memory or both
    #[arg(long, default_value = "both")]
    resource: String,
    /// Bundle version number or `latest`
    #[arg(long, default_value = "latest")]
    version: String,
    #[arg(long)]
    now: Option<String>,
    #[arg(long, default_value_t = 90)]
    window_days: u32,
    /// Print the full evaluation reports as JSON
    #[arg(long)]
    json: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct EvaluateConfigFile {
    resource: Option<String>,
    version: Option<String>,
    now: Option<String>,
    window_days: Option<u32>,
    json: Option<bool>,
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let overrides: EvaluateConfigFile = match &args.config {
        Some(path) => read_config(path)?,
        None => EvaluateConfigFile::default(),
    };
    let resource = overrides.resource.unwrap_or(args.resource);
    let version: VersionSpec = overrides.version.unwrap_or(args.version).parse()?;
    let now = overrides.now.or(args.now);
    let window_days = overrides.window_days.unwrap_or(args.window_days);
    let as_json = overrides.json.unwrap_or(args.json);

    let resources: Vec<Resource> = match resource.as_str() {
        "cpu" => vec![Resource::Cpu],
        "memory" => vec![Resource::Memory],
        "both" => vec![Resource::Cpu, Resource::Memory],
        other => {
            return Err(Error::Config(format!(
                "unknown resource `{other}` (expected cpu, memory or both)"
            )))
        }
    };
    let records = load_window(&args.logs, now.as_deref(), window_days)?;

    for resource in resources {
        let bundle = load_bundle(&args.repo, resource, version)?;
        let window = crate::drift::window_from_records(&records, &bundle.scheme, 0);
        let report = crate::drift::evaluate_window(&bundle, &window)?;
        if as_json {
            println!("{}", serde_json::to_string(&report)?);
        } else {
            let title = format!("{} model v{}", resource, bundle.version);
            print!("{}", render_report(&title, &bundle.scheme, &report));
        }
    }
    Ok(())
}

// ------------------------------------------------------------------- serve

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    repo: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: String,
    #[arg(long, default_value_t = 8)]
    workers: usize,
    /// Stop after this many seconds (runs until killed when absent)
    #[arg(long)]
    duration_secs: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ServeConfigFile {
    bind: Option<String>,
    workers: Option<usize>,
    duration_secs: Option<u64>,
}

fn cmd_serve(args: ServeArgs) -> Result<()> {
    let overrides: ServeConfigFile = match &args.config {
        Some(path) => read_config(path)?,
        None => ServeConfigFile::default(),
    };
    let bind = overrides.bind.unwrap_or(args.bind);
    let workers = overrides.workers.unwrap_or(args.workers);
    let duration = overrides.duration_secs.or(args.duration_secs);

    let handle = serve(&args.repo, &bind, ServeOptions { workers })?;
    let (cpu_version, mem_version) = handle.versions();
    println!(
        "serving on http://{} (cpu v{cpu_version}, memory v{mem_version})",
        handle.addr()
    );
    for info in list_versions(&args.repo, Resource::Cpu)? {
        println!(
            "  cpu v{}: trained {} accuracy {:.4}",
            info.version, info.trained_at, info.accuracy
        );
    }
    match duration {
        Some(secs) => {
            std::thread::sleep(std::time::Duration::from_secs(secs));
            handle.shutdown();
        }
        None => loop {
            std::thread::sleep(std::time::Duration::from_secs(3600));
        },
    }
    Ok(())
}

// ----------------------------------------------------------------- monitor

#[derive(Args)]
struct MonitorArgs {
    #[arg(long)]
    repo: PathBuf,
    #[arg(long, default_value_t = 8)]
    windows: usize,
    /// Window index at which the synthetic workload drifts
    #[arg(long)]
    drift_at: Option<usize>,
    #[arg(long, default_value_t = 0.5)]
    severity: f64,
    #[arg(long, default_value_t = 5000)]
    window_size: usize,
    #[arg(long, default_value_t = 0.9)]
    threshold: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Workload spec JSON for the synthetic stream
    #[arg(long)]
    config: Option<PathBuf>,
}

fn cmd_monitor(args: MonitorArgs) -> Result<()> {
    let spec: WorkloadSpec = match &args.config {
        Some(path) => read_config(path)?,
        None => default_spec(),
    };
    let cfg = crate::drift::MonitorConfig {
        windows: args.windows,
        drift_at: args.drift_at,
        severity: args.severity,
        window_size: args.window_size,
        threshold: args.threshold,
        seed: args.seed,
    };
    let outcome = crate::drift::run_monitor(&args.repo, &spec, &cfg)?;
    for report in &outcome.reports {
        println!("{}", serde_json::to_string(report)?);
    }
    for event in &outcome.events {
        println!(
            "retrained at window {}: cpu v{}, memory v{}",
            event.window_index, event.cpu_version, event.mem_version
        );
    }
    eprint!("{}", crate::drift::render_history_table(&outcome.reports));
    Ok(())
}

// --------------------------------------------------------------- simulate

#[derive(Args)]
struct SimulateArgs {
    /// Request log to replay; generated synthetically when absent
    #[arg(long)]
    logs: Option<PathBuf>,
    /// Repository with trained bundles backing the predicted_cost
    /// policy; the oracle stands in when absent
    #[arg(long)]
    repo: Option<PathBuf>,
    /// round_robin, least_loaded, predicted_cost or all
    #[arg(long, default_value = "all")]
    policy: String,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 4)]
    clusters: usize,
    #[arg(long, default_value_t = 8)]
    slots: usize,
    #[arg(long, default_value_t = 4)]
    heavy_cap: usize,
    #[arg(long, default_value_t = 4)]
    arrivals_per_tick: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Scenario JSON overriding the cluster flags
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct SimulateConfigFile {
    policy: Option<String>,
    n: Option<usize>,
    clusters: Option<usize>,
    slots: Option<usize>,
    heavy_cap: Option<usize>,
    arrivals_per_tick: Option<usize>,
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let overrides: SimulateConfigFile = match &args.config {
        Some(path) => read_config(path)?,
        None => SimulateConfigFile::default(),
    };
    let policy_name = overrides.policy.unwrap_or(args.policy);
    let n = overrides.n.unwrap_or(args.n);
    let config = ClusterConfig {
        clusters: overrides.clusters.unwrap_or(args.clusters),
        slots: overrides.slots.unwrap_or(args.slots),
        heavy_cap: overrides.heavy_cap.unwrap_or(args.heavy_cap),
    };
    let arrivals_per_tick = overrides.arrivals_per_tick.unwrap_or(args.arrivals_per_tick);

    let records = match &args.logs {
        Some(path) => load_window(path, None, u32::MAX / 24)?,
        None => crate::synth::generate(&default_spec(), n, args.seed)?,
    };
    let cpu_scheme = ClassScheme::cpu_default();
    let mem_scheme = ClassScheme::memory_default();
    let workload = workload_from_records(&records, arrivals_per_tick, &cpu_scheme, &mem_scheme);

    let policies: Vec<RoutingPolicy> = match policy_name.as_str() {
        "all" => vec![
            RoutingPolicy::RoundRobin,
            RoutingPolicy::LeastLoaded,
            RoutingPolicy::PredictedCost,
        ],
        name => vec![name.parse()?],
    };

    let bundles = match &args.repo {
        Some(repo) => Some((
            load_bundle(repo, Resource::Cpu, VersionSpec::Latest)?,
            load_bundle(repo, Resource::Memory, VersionSpec::Latest)?,
        )),
        None => None,
    };

    for policy in policies {
        let (predictor, kind): (Box<dyn CostPredictor>, &str) = match (&bundles, policy) {
            (Some((cpu, memory)), RoutingPolicy::PredictedCost) => {
                (Box::new(BundlePredictor { cpu, memory }), "trained")
            }
            _ => (Box::new(OraclePredictor), "oracle"),
        };
        let report = simulate(&workload, &config, policy, predictor.as_ref())?;
        let mut value = serde_json::to_value(&report)?;
        value["predictor"] = serde_json::Value::String(kind.to_string());
        println!("{value}");
        // print the oracle bound alongside the trained run
        if matches!(policy, RoutingPolicy::PredictedCost) && bundles.is_some() {
            let oracle = simulate(&workload, &config, policy, &OraclePredictor)?;
            let mut value = serde_json::to_value(&oracle)?;
            value["predictor"] = serde_json::Value::String("oracle".to_string());
            println!("{value}");
        }
    }
    Ok(())
}
