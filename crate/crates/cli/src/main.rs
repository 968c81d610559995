//! `edgehome`: dataset tooling, offline evaluation and the assistant service.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use edgehome_core::backend::{load_backend, BackendConfig};
use edgehome_core::baseline::{BaselineClassifier, TrainParams};
use edgehome_core::eval::dataset::write_records;
use edgehome_core::eval::report::{parse_reports, regressions};
use edgehome_core::eval::synth::{class_test_counts, generate_records, SynthSpec};
use edgehome_core::eval::{
    benchmark_latency, emit_report, evaluate_slot_intent, export_training_corpus, load_dataset, stratified_split,
    stratified_subset, training_samples, Allocation, BaselineSystem, ConversationSample, EmbeddingTable, LlmSystem,
    MetricsReport, ReportFormat, SimilarityScorer, Split, SplitSpec, TokenEmbeddingScorer,
};
use edgehome_service::ServiceConfig;
use serde_json::json;

/// Exit status when `--compare` finds a regression.
const REGRESSION_EXIT: u8 = 2;

#[derive(Parser)]
#[command(
    name = "edgehome",
    version,
    about = "On-device home assistant: evaluation bench and service"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic conversation corpus with the published class mix.
    Synth(SynthArgs),
    /// Compute a stratified train/test split and print its summary.
    Split(SplitCmd),
    /// Write the train and test halves of a split as conversation files.
    Export(ExportArgs),
    /// Train the TF-IDF + linear one-vs-rest baseline.
    TrainBaseline(TrainArgs),
    /// Score a backend or a trained baseline on the test split.
    Eval(EvalArgs),
    /// Measure per-query latency of a backend.
    Bench(BenchArgs),
    /// Run the HTTP assistant service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Conversation records: a JSON array, `{"conversations": [...]}` or JSONL.
    #[arg(long, short = 'd')]
    dataset: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Work on a class-stratified sample of about this many records.
    #[arg(long)]
    subset: Option<usize>,
}

#[derive(Args)]
struct SplitArgs {
    /// Test share of every class. Without it the published per-class test
    /// counts are used (or 0.2 for the baseline).
    #[arg(long)]
    fraction: Option<f64>,
    /// Minimum test records per class with `--fraction`.
    #[arg(long, default_value_t = 0)]
    floor: usize,
    /// Drop records with more than one action before splitting.
    #[arg(long)]
    exclude_multi_intent: bool,
}

impl SplitArgs {
    /// The baseline split is always by fraction with multi-intent records
    /// removed.
    fn spec(&self, seed: u64, baseline: bool) -> SplitSpec {
        let allocation = match (self.fraction, baseline) {
            (Some(fraction), _) => Allocation::Fraction {
                fraction,
                floor: self.floor,
            },
            (None, true) => Allocation::Fraction {
                fraction: 0.2,
                floor: self.floor,
            },
            (None, false) => Allocation::PerClass(class_test_counts()),
        };
        SplitSpec {
            seed,
            allocation,
            exclude_multi_intent: self.exclude_multi_intent || baseline,
        }
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, short = 'o')]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Scale the class mix to about this many records (default: full size).
    #[arg(long)]
    total: Option<usize>,
    #[arg(long)]
    multi_intent_rate: Option<f64>,
}

#[derive(Args)]
struct SplitCmd {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    split: SplitArgs,
    /// Also write the summary here.
    #[arg(long, short = 'o')]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    split: SplitArgs,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    split: SplitArgs,
    /// Where to write the model.
    #[arg(long, short = 'o')]
    out: PathBuf,
    #[arg(long, default_value_t = TrainParams::default().epochs)]
    epochs: usize,
    #[arg(long, default_value_t = TrainParams::default().learning_rate)]
    learning_rate: f64,
    #[arg(long, default_value_t = TrainParams::default().lambda)]
    lambda: f64,
    #[command(flatten)]
    reports: ReportArgs,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    json_report: Option<PathBuf>,
    #[arg(long)]
    markdown_report: Option<PathBuf>,
    /// A previous JSON report; exit with status 2 if accuracy dropped or any
    /// error class grew.
    #[arg(long)]
    compare: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    split: SplitArgs,
    /// Backend config file (TOML).
    #[arg(long, required_unless_present = "baseline", conflicts_with = "baseline")]
    backend: Option<PathBuf>,
    /// A model written by `train-baseline`.
    #[arg(long)]
    baseline: Option<PathBuf>,
    /// Override the backend's worker thread count.
    #[arg(long)]
    worker_threads: Option<usize>,
    /// Only the first N test samples.
    #[arg(long)]
    samples: Option<usize>,
    /// Score every loaded record instead of a test split.
    #[arg(long)]
    no_split: bool,
    /// Word vectors for reply similarity, one `token v1 v2 ...` per line.
    /// Without it, hashed vectors are used.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    no_similarity: bool,
    #[command(flatten)]
    reports: ReportArgs,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    split: SplitArgs,
    #[arg(long)]
    backend: PathBuf,
    #[arg(long)]
    worker_threads: Option<usize>,
    /// Measured queries, taken from the start of the test split.
    #[arg(long, default_value_t = 10)]
    samples: usize,
    #[arg(long)]
    json_report: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    /// Service config file (TOML) with a `[backend]` table.
    #[arg(long, short = 'c')]
    config: PathBuf,
    #[arg(long)]
    bind: Option<SocketAddr>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Synth(args) => synth(args),
        Command::Split(args) => split(args),
        Command::Export(args) => export(args),
        Command::TrainBaseline(args) => train_baseline(args),
        Command::Eval(args) => eval(args),
        Command::Bench(args) => bench(args),
        Command::Serve(args) => serve(args),
    }
}

fn synth(args: SynthArgs) -> Result<ExitCode> {
    let mut spec = match args.total {
        Some(total) => SynthSpec::scaled(args.seed, total),
        None => SynthSpec::full(args.seed),
    };
    if let Some(rate) = args.multi_intent_rate {
        spec.multi_intent_rate = rate;
    }
    let records = generate_records(&spec);
    write_records(&args.out, &records).with_context(|| format!("writing {}", args.out.display()))?;
    log::info!("wrote {} records to {}", records.len(), args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn load_samples(data: &DataArgs, baseline: bool) -> Result<Vec<ConversationSample>> {
    let dataset = load_dataset(&data.dataset).with_context(|| format!("loading {}", data.dataset.display()))?;
    if !dataset.quarantined.is_empty() {
        log::warn!("{} records quarantined", dataset.quarantined.len());
        for q in dataset.quarantined.iter().take(5) {
            log::warn!("  record {}: {:?}", q.index, q.reason);
        }
    }
    let samples = match data.subset {
        Some(n) => stratified_subset(&dataset.samples, n, data.seed, baseline)?,
        None => dataset.samples,
    };
    log::info!("{} samples loaded", samples.len());
    Ok(samples)
}

fn make_split(data: &DataArgs, split: &SplitArgs, baseline: bool) -> Result<Split> {
    let samples = load_samples(data, baseline)?;
    let split = stratified_split(&samples, &split.spec(data.seed, baseline))?;
    log::info!(
        "split {}: {} train, {} test, {} excluded",
        split.summary.fingerprint,
        split.summary.train,
        split.summary.test,
        split.summary.excluded
    );
    Ok(split)
}

fn split(args: SplitCmd) -> Result<ExitCode> {
    let split = make_split(&args.data, &args.split, false)?;
    let json = serde_json::to_string_pretty(&split.summary)?;
    if let Some(out) = &args.out {
        std::fs::write(out, &json).with_context(|| format!("writing {}", out.display()))?;
    }
    println!("{json}");
    Ok(ExitCode::SUCCESS)
}

fn export(args: ExportArgs) -> Result<ExitCode> {
    let split = make_split(&args.data, &args.split, false)?;
    let manifest = export_training_corpus(&split, &args.out_dir)
        .with_context(|| format!("writing to {}", args.out_dir.display()))?;
    println!("{}", serde_json::to_string_pretty(&manifest)?);
    Ok(ExitCode::SUCCESS)
}

fn train_baseline(args: TrainArgs) -> Result<ExitCode> {
    let split = make_split(&args.data, &args.split, true)?;
    let params = TrainParams {
        epochs: args.epochs,
        learning_rate: args.learning_rate,
        lambda: args.lambda,
        seed: args.data.seed,
    };
    let model = BaselineClassifier::fit(&training_samples(&split.train), &params)?;
    model
        .save(&args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    log::info!(
        "model with {} labels written to {}",
        model.model.labels().len(),
        args.out.display()
    );
    let mut report = evaluate_slot_intent(&BaselineSystem { classifier: &model }, &split.test, None).report;
    report.split = Some(split.summary);
    finish_report(report, &args.reports)
}

fn read_backend_config(path: &Path, worker_threads: Option<usize>) -> Result<BackendConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg: BackendConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    resolve_paths(&mut cfg, path);
    if let Some(n) = worker_threads {
        cfg.worker_threads = n;
    }
    Ok(cfg)
}

/// File paths inside a config are relative to the config file.
fn resolve_paths(cfg: &mut BackendConfig, config_path: &Path) {
    let base = config_path.parent().unwrap_or(Path::new("."));
    for p in [&mut cfg.script_path, &mut cfg.model_path].into_iter().flatten() {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
}

fn eval(args: EvalArgs) -> Result<ExitCode> {
    let is_baseline = args.baseline.is_some();
    let (mut samples, summary) = if args.no_split {
        (load_samples(&args.data, is_baseline)?, None)
    } else {
        let split = make_split(&args.data, &args.split, is_baseline)?;
        (split.test, Some(split.summary))
    };
    if let Some(n) = args.samples {
        samples.truncate(n);
    }
    let scorer: Option<Box<dyn SimilarityScorer>> = match (&args.embeddings, args.no_similarity) {
        (_, true) => None,
        (Some(path), false) => Some(Box::new(TokenEmbeddingScorer::new(
            EmbeddingTable::load(path).with_context(|| format!("loading {}", path.display()))?,
        ))),
        (None, false) => Some(Box::new(TokenEmbeddingScorer::default())),
    };

    let mut report = if let Some(path) = &args.baseline {
        let model = BaselineClassifier::load(path).with_context(|| format!("loading {}", path.display()))?;
        evaluate_slot_intent(&BaselineSystem { classifier: &model }, &samples, scorer.as_deref()).report
    } else {
        let path = args.backend.as_deref().expect("clap requires --backend or --baseline");
        let cfg = read_backend_config(path, args.worker_threads)?;
        let (handle, load_seconds) = load_backend(&cfg)?;
        log::info!("{} loaded in {load_seconds:.2}s", handle.descriptor().label());
        evaluate_slot_intent(&LlmSystem::new(&handle), &samples, scorer.as_deref()).report
    };
    report.split = summary;
    finish_report(report, &args.reports)
}

fn finish_report(report: MetricsReport, args: &ReportArgs) -> Result<ExitCode> {
    let reports = std::slice::from_ref(&report);
    if let Some(path) = &args.json_report {
        std::fs::write(path, emit_report(reports, ReportFormat::Json))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    let markdown = emit_report(reports, ReportFormat::Markdown);
    if let Some(path) = &args.markdown_report {
        std::fs::write(path, &markdown).with_context(|| format!("writing {}", path.display()))?;
    }
    println!("{markdown}");

    let Some(path) = &args.compare else {
        return Ok(ExitCode::SUCCESS);
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let previous = parse_reports(&text).with_context(|| format!("parsing {}", path.display()))?;
    let Some(previous) = previous.iter().find(|r| r.system == report.system).or(previous.first()) else {
        bail!("{} holds no reports", path.display());
    };
    let found = regressions(&report, previous);
    if found.is_empty() {
        log::info!("no regressions against {}", path.display());
        return Ok(ExitCode::SUCCESS);
    }
    for r in &found {
        eprintln!("regression: {r}");
    }
    Ok(ExitCode::from(REGRESSION_EXIT))
}

fn bench(args: BenchArgs) -> Result<ExitCode> {
    let split = make_split(&args.data, &args.split, false)?;
    let cfg = read_backend_config(&args.backend, args.worker_threads)?;
    let result = benchmark_latency(&cfg, &split.test, args.samples)?;
    let s = &result.stats;
    println!("| Model | CPU | T/Q (s) | Load (s) |");
    println!("|---|---|---|---|");
    println!(
        "| {} | {} | {:.2} ± {:.2} | {:.2} |",
        cfg.model.label(),
        s.worker_threads,
        s.mean_seconds,
        s.std_seconds,
        s.load_seconds
    );
    if let Some(path) = &args.json_report {
        let json = json!({
            "model": cfg.model,
            "latency": s,
            "per_query_seconds": result.per_query_seconds,
            "split": split.summary,
        });
        std::fs::write(path, serde_json::to_string_pretty(&json)?)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn serve(args: ServeArgs) -> Result<ExitCode> {
    let text = std::fs::read_to_string(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    let mut config: ServiceConfig =
        toml::from_str(&text).with_context(|| format!("parsing {}", args.config.display()))?;
    resolve_paths(&mut config.backend, &args.config);
    if let Some(bind) = args.bind {
        config.bind = bind;
    }
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(edgehome_service::serve(config))?;
    Ok(ExitCode::SUCCESS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn baseline_split_is_fraction_without_multi_intent() {
        let args = SplitArgs {
            fraction: None,
            floor: 0,
            exclude_multi_intent: false,
        };
        let spec = args.spec(3, true);
        assert_eq!(
            spec.allocation,
            Allocation::Fraction {
                fraction: 0.2,
                floor: 0
            }
        );
        assert!(spec.exclude_multi_intent);
        let llm = args.spec(3, false);
        assert_eq!(llm.allocation, Allocation::PerClass(class_test_counts()));
        assert!(!llm.exclude_multi_intent);
    }

    #[test]
    fn relative_script_paths_follow_the_config() {
        let mut cfg: BackendConfig = toml::from_str("kind = \"scripted\"\nscript_path = \"replies.json\"").unwrap();
        resolve_paths(&mut cfg, Path::new("/etc/edgehome/backend.toml"));
        assert_eq!(cfg.script_path.unwrap(), PathBuf::from("/etc/edgehome/replies.json"));
    }
}
