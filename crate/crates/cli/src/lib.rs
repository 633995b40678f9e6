//! The `nlixy` command line: validate and summarize datasets, build
//! intervention sets, evaluate models and render reports.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use rayon::prelude::*;
use thiserror::Error;

use nlixy_core::dataset::{
    dataset_stats, load_benchmark, load_dataset_files, validate_dataset, Dataset, DatasetError, DatasetFormat,
    DatasetPaths, LabeledPair, LoadOptions,
};
use nlixy_core::effects::{accuracy_two_class, estimate_effect_with, AccuracyEntry, EffectError, ModelEffectProfile};
use nlixy_core::intervention::{
    build_intervention_set, read_set, standard_schemas, write_set, InterventionError, InterventionSet, Pairing,
    SchemaId,
};
use nlixy_core::natlog::Label2;
use nlixy_core::prediction::{
    CacheProvider, CachedProvider, HardLabelRule, LabelMapping, NliInput, PredictionCache, PredictionError,
    PredictionProvider,
};
use nlixy_core::remote::{RemoteConfig, RemoteProvider};
use nlixy_core::report::{
    read_results, render_report, render_schema_summary, write_results, ModelResult, ReportError, ReportFormat,
    RunMetadata, RunResults, SetSummary,
};
use nlixy_core::synthetic::{PolicyKind, SyntheticPolicy};

pub const RESULTS_FILE: &str = "results.jsonl";

#[derive(Debug, Parser)]
#[command(
    name = "nlixy",
    version,
    about = "Causal sensitivity and robustness measurement for NLI models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load and validate a dataset; exit 0 iff it has no errors.
    Validate(DatasetArgs),
    /// Print dataset counts by monotonicity, relation and gold label.
    Stats(DatasetArgs),
    /// Build the four intervention sets and write I0.jsonl to I3.jsonl.
    BuildInterventions(BuildArgs),
    /// Estimate all four effects for each model and write results and reports.
    Evaluate(EvaluateArgs),
    /// Re-render reports from a stored results file.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DatasetArgs {
    /// Flat dataset file (one rendered example per line).
    #[arg(long, conflicts_with_all = ["contexts", "word_pairs"])]
    pub dataset: Option<PathBuf>,
    /// Context template file (components format).
    #[arg(long, requires = "word_pairs")]
    pub contexts: Option<PathBuf>,
    /// Word pair file (components format).
    #[arg(long, requires = "contexts")]
    pub word_pairs: Option<PathBuf>,
    /// Dataset format; inferred from the path flags when omitted.
    #[arg(long)]
    pub format: Option<DatasetFormat>,
    /// Read every word pair in the opposite direction.
    #[arg(long)]
    pub swap_pair_orientation: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SamplingArgs {
    #[arg(long, default_value_t = 400)]
    pub seed_count: usize,
    #[arg(long, default_value_t = 13)]
    pub rng_seed: u64,
    #[arg(long, default_value_t = Pairing::AllCandidates)]
    pub pairing: Pairing,
    /// Thread count for set construction and model evaluation.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct BuildArgs {
    #[command(flatten)]
    pub dataset: DatasetArgs,
    #[command(flatten)]
    pub sampling: SamplingArgs,
    /// Output directory for the set files.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub dataset: DatasetArgs,
    #[command(flatten)]
    pub sampling: SamplingArgs,
    /// Model spec: synthetic:<kind>[:<param>], cache:<path>:<model_id> or
    /// remote:<address>:<model_id>. Repeatable.
    #[arg(long = "model", required = true)]
    pub models: Vec<String>,
    /// Directory holding previously built I0.jsonl to I3.jsonl.
    #[arg(long)]
    pub interventions: Option<PathBuf>,
    /// Prediction cache file shared by remote models (created if absent).
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Report formats to write (table, csv, json). Repeatable.
    #[arg(long = "report-format", default_values_t = [ReportFormat::Table])]
    pub report_formats: Vec<ReportFormat>,
    /// Labelled benchmark for two-class accuracy, as `path` or `name=path`. Repeatable.
    #[arg(long = "benchmark")]
    pub benchmarks: Vec<String>,
    /// JSON object mapping native label names to entailment/non-entailment.
    #[arg(long)]
    pub label_mapping: Option<PathBuf>,
    #[arg(long, default_value_t = HardLabelRule::ArgmaxThenMap, value_parser = parse_rule)]
    pub hard_label_rule: HardLabelRule,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 4)]
    pub max_in_flight: usize,
    /// Per-request timeout for remote models, in seconds.
    #[arg(long, default_value_t = 120)]
    pub timeout_secs: u64,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Results file written by `evaluate`.
    #[arg(long)]
    pub results: PathBuf,
    #[arg(long = "report-format", default_values_t = [ReportFormat::Table])]
    pub report_formats: Vec<ReportFormat>,
    /// Directory to write report files to; prints to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_rule(s: &str) -> Result<HardLabelRule, String> {
    s.parse()
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Provider(String),
    #[error("{0}")]
    Config(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Data(_) => 1,
            CliError::Io(_) => 2,
            CliError::Provider(_) => 3,
            CliError::Config(_) => 4,
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Io { .. } => CliError::Io(e.to_string()),
            DatasetError::Validation(ref r) => CliError::Data(format!("{e}\n{}", r.render())),
            DatasetError::Parse { .. } => CliError::Data(e.to_string()),
        }
    }
}

impl From<InterventionError> for CliError {
    fn from(e: InterventionError) -> Self {
        match e {
            InterventionError::Io(_) => CliError::Io(e.to_string()),
            InterventionError::ZeroSeedCount => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Parsed `--model` argument.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Synthetic(PolicyKind),
    Cache { path: PathBuf, model_id: String },
    Remote { address: String, model_id: String },
}

impl ModelSpec {
    /// Identifier used for error rows before a provider exists.
    pub fn display_id(&self) -> String {
        match self {
            ModelSpec::Synthetic(kind) => format!("synthetic:{kind}"),
            ModelSpec::Cache { model_id, .. } | ModelSpec::Remote { model_id, .. } => model_id.clone(),
        }
    }
}

impl std::str::FromStr for ModelSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (scheme, rest) = s
            .split_once(':')
            .ok_or_else(|| format!("model spec {s:?} has no provider prefix"))?;
        let location_and_id = |what: &str| -> Result<(String, String), String> {
            match rest.rsplit_once(':') {
                Some((loc, id)) if !loc.is_empty() && !id.is_empty() => Ok((loc.to_string(), id.to_string())),
                _ => Err(format!("model spec {s:?} must look like {scheme}:<{what}>:<model_id>")),
            }
        };
        match scheme {
            "synthetic" => Ok(ModelSpec::Synthetic(rest.parse()?)),
            "cache" => {
                let (path, model_id) = location_and_id("path")?;
                Ok(ModelSpec::Cache {
                    path: PathBuf::from(path),
                    model_id,
                })
            }
            "remote" => {
                let (address, model_id) = location_and_id("address")?;
                Ok(ModelSpec::Remote { address, model_id })
            }
            other => Err(format!("unknown provider {other:?} in model spec {s:?}")),
        }
    }
}

pub fn run(cli: Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Validate(args) => cmd_validate(&args, stdout),
        Command::Stats(args) => cmd_stats(&args, stdout),
        Command::BuildInterventions(args) => cmd_build(&args, stdout),
        Command::Evaluate(args) => cmd_evaluate(&args, stdout),
        Command::Report(args) => cmd_report(&args, stdout),
    }
}

fn out_err(e: io::Error) -> CliError {
    CliError::Io(format!("writing output: {e}"))
}

fn dataset_paths(args: &DatasetArgs) -> Result<DatasetPaths, CliError> {
    let inferred = match (&args.dataset, &args.contexts, &args.word_pairs) {
        (Some(_), None, None) => DatasetFormat::Flat,
        (None, Some(_), Some(_)) => DatasetFormat::Components,
        _ => {
            return Err(CliError::Config(
                "give either --dataset or both --contexts and --word-pairs".into(),
            ))
        }
    };
    if let Some(f) = args.format {
        if f != inferred {
            return Err(CliError::Config(format!(
                "--format {f:?} does not match the dataset flags given"
            )));
        }
    }
    Ok(match (&args.dataset, &args.contexts, &args.word_pairs) {
        (Some(p), _, _) => DatasetPaths::Flat(p.clone()),
        (_, Some(c), Some(w)) => DatasetPaths::Components {
            contexts: c.clone(),
            word_pairs: w.clone(),
        },
        _ => unreachable!("checked above"),
    })
}

fn load(args: &DatasetArgs) -> Result<Dataset, CliError> {
    let paths = dataset_paths(args)?;
    let options = LoadOptions {
        swap_pair_orientation: args.swap_pair_orientation,
    };
    let loaded = load_dataset_files(&paths, options)?;
    for w in &loaded.report.warnings {
        warn!("{w}");
    }
    Ok(loaded.dataset)
}

fn cmd_validate(args: &DatasetArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let paths = dataset_paths(args)?;
    let options = LoadOptions {
        swap_pair_orientation: args.swap_pair_orientation,
    };
    let report = match load_dataset_files(&paths, options) {
        Ok(loaded) => {
            let mut report = loaded.report;
            report.merge(validate_dataset(&loaded.dataset));
            report
        }
        Err(DatasetError::Validation(report)) => report,
        Err(e) => return Err(e.into()),
    };
    let text = report.render();
    if report.is_ok() {
        stdout.write_all(text.as_bytes()).map_err(out_err)?;
        Ok(())
    } else {
        Err(CliError::Data(text.trim_end().to_string()))
    }
}

fn cmd_stats(args: &DatasetArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let d = load(args)?;
    stdout.write_all(dataset_stats(&d).render().as_bytes()).map_err(out_err)
}

fn thread_pool(workers: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        if n == 0 {
            return Err(CliError::Config("--workers must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| CliError::Config(e.to_string()))
}

fn set_path(dir: &Path, id: SchemaId) -> PathBuf {
    dir.join(format!("{id}.jsonl"))
}

fn build_all(d: &Dataset, s: &SamplingArgs) -> Result<Vec<InterventionSet>, CliError> {
    if s.seed_count == 0 {
        return Err(CliError::Config("--seed-count must be at least 1".into()));
    }
    let pool = thread_pool(s.workers)?;
    pool.install(|| {
        standard_schemas()
            .iter()
            .map(|schema| {
                build_intervention_set(d, schema, s.seed_count, s.rng_seed, s.pairing).map_err(CliError::from)
            })
            .collect()
    })
}

fn write_sets(sets: &[InterventionSet], dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    for set in sets {
        let path = set_path(dir, set.schema.id);
        let file = File::create(&path).map_err(|e| io_err(&path, e))?;
        let mut w = BufWriter::new(file);
        write_set(set, &mut w)
            .and_then(|_| w.flush())
            .map_err(|e| io_err(&path, e))?;
    }
    Ok(())
}

fn summaries(sets: &[InterventionSet]) -> Vec<SetSummary> {
    sets.iter()
        .map(|s| SetSummary {
            schema_id: s.schema.id,
            summary: s.summary,
        })
        .collect()
}

fn warn_empty(sets: &[InterventionSet]) {
    for s in sets.iter().filter(|s| s.is_empty()) {
        warn!("{} has no pairs: no seed example had a candidate partner", s.schema.id);
        eprintln!("warning: {} has no pairs", s.schema.id);
    }
}

fn cmd_build(args: &BuildArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let d = load(&args.dataset)?;
    let sets = build_all(&d, &args.sampling)?;
    write_sets(&sets, &args.out)?;
    warn_empty(&sets);
    stdout
        .write_all(render_schema_summary(&summaries(&sets)).as_bytes())
        .map_err(out_err)
}

fn read_sets(dir: &Path, d: &Dataset) -> Result<Vec<InterventionSet>, CliError> {
    standard_schemas()
        .iter()
        .map(|schema| {
            let path = set_path(dir, schema.id);
            let file = File::open(&path).map_err(|e| io_err(&path, e))?;
            let set = read_set(BufReader::new(file), d)
                .map_err(|e| CliError::from(e).with_context(&path.display().to_string()))?;
            if set.schema.id != schema.id {
                return Err(CliError::Data(format!(
                    "{} holds schema {}, expected {}",
                    path.display(),
                    set.schema.id,
                    schema.id
                )));
            }
            Ok(set)
        })
        .collect()
}

impl CliError {
    fn with_context(self, ctx: &str) -> Self {
        match self {
            CliError::Data(m) => CliError::Data(format!("{ctx}: {m}")),
            CliError::Io(m) => CliError::Io(format!("{ctx}: {m}")),
            CliError::Provider(m) => CliError::Provider(format!("{ctx}: {m}")),
            CliError::Config(m) => CliError::Config(format!("{ctx}: {m}")),
        }
    }
}

struct Benchmark {
    name: String,
    rows: Vec<LabeledPair>,
}

fn load_benchmarks(specs: &[String]) -> Result<Vec<Benchmark>, CliError> {
    specs
        .iter()
        .map(|spec| {
            let (name, path) = match spec.split_once('=') {
                Some((n, p)) if !n.is_empty() => (n.to_string(), PathBuf::from(p)),
                _ => {
                    let path = PathBuf::from(spec);
                    let name = path
                        .file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_else(|| spec.clone());
                    (name, path)
                }
            };
            let file = File::open(&path).map_err(|e| io_err(&path, e))?;
            let rows = load_benchmark(BufReader::new(file), &path.display().to_string())?;
            if rows.is_empty() {
                return Err(CliError::Data(format!("benchmark {} is empty", path.display())));
            }
            Ok(Benchmark { name, rows })
        })
        .collect()
}

struct EvalContext<'a> {
    sets: &'a [InterventionSet],
    benchmarks: &'a [Benchmark],
    overrides: &'a BTreeMap<String, Label2>,
    rule: HardLabelRule,
    shared_cache: Option<&'a Arc<PredictionCache>>,
    args: &'a EvaluateArgs,
}

fn provider_for(spec: &ModelSpec, cx: &EvalContext<'_>) -> Result<Box<dyn PredictionProvider>, PredictionError> {
    Ok(match spec {
        ModelSpec::Synthetic(kind) => Box::new(SyntheticPolicy::new(kind.clone())),
        ModelSpec::Cache { path, model_id } => {
            let cache = Arc::new(PredictionCache::open_read_only(path)?);
            Box::new(CacheProvider::new(cache, model_id.clone())?)
        }
        ModelSpec::Remote { address, model_id } => {
            let mut config = RemoteConfig::new(address.clone(), model_id.clone());
            config.batch_size = cx.args.batch_size;
            config.max_in_flight = cx.args.max_in_flight;
            config.timeout = Duration::from_secs(cx.args.timeout_secs);
            let remote = RemoteProvider::connect(config)?;
            let cache = cx
                .shared_cache
                .cloned()
                .unwrap_or_else(|| Arc::new(PredictionCache::in_memory()));
            Box::new(CachedProvider::new(remote, cache, cx.args.batch_size))
        }
    })
}

fn evaluate_model(spec: &ModelSpec, cx: &EvalContext<'_>) -> Result<ModelEffectProfile, String> {
    let provider = provider_for(spec, cx).map_err(|e| e.to_string())?;
    let mapping = LabelMapping::with_overrides(provider.label_space(), cx.overrides).map_err(|e| e.to_string())?;
    let estimates = cx
        .sets
        .iter()
        .map(|set| estimate_effect_with(set, provider.as_ref(), &mapping, cx.rule))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let mut accuracies = Vec::new();
    for b in cx.benchmarks {
        let items: Vec<(NliInput<'_>, Label2)> = b
            .rows
            .iter()
            .map(|r| {
                (
                    NliInput::Text {
                        premise: &r.premise,
                        hypothesis: &r.hypothesis,
                    },
                    r.gold,
                )
            })
            .collect();
        match accuracy_two_class(&items, provider.as_ref(), &mapping, cx.rule) {
            Ok(accuracy) => accuracies.push(AccuracyEntry {
                dataset: b.name.clone(),
                accuracy,
                n: items.len(),
            }),
            Err(EffectError::Prediction(PredictionError::Unstructured { .. })) => {
                warn!(
                    "{} cannot score free text; skipping benchmark {}",
                    provider.model_id(),
                    b.name
                );
            }
            Err(e) => return Err(e.to_string()),
        }
    }
    ModelEffectProfile::from_estimates(estimates, accuracies).map_err(|e| e.to_string())
}

fn cmd_evaluate(args: &EvaluateArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let specs: Vec<ModelSpec> = args
        .models
        .iter()
        .map(|m| m.parse().map_err(CliError::Config))
        .collect::<Result<_, _>>()?;
    if args.batch_size == 0 || args.max_in_flight == 0 {
        return Err(CliError::Config(
            "--batch-size and --max-in-flight must be at least 1".into(),
        ));
    }
    let overrides = match &args.label_mapping {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            LabelMapping::parse_overrides(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => BTreeMap::new(),
    };
    let benchmarks = load_benchmarks(&args.benchmarks)?;
    let d = load(&args.dataset)?;
    let sets = match &args.interventions {
        Some(dir) => read_sets(dir, &d)?,
        None => {
            let sets = build_all(&d, &args.sampling)?;
            write_sets(&sets, &args.out)?;
            sets
        }
    };
    warn_empty(&sets);
    if let Some(empty) = sets.iter().find(|s| s.is_empty()) {
        return Err(CliError::Data(format!(
            "{} has no pairs, so {} cannot be estimated",
            empty.schema.id,
            empty.schema.target_effect.label()
        )));
    }
    let shared_cache = match &args.cache {
        Some(path) => Some(Arc::new(PredictionCache::open(path).map_err(|e| match e {
            PredictionError::Io(io) => io_err(path, io),
            other => CliError::Data(format!("{}: {other}", path.display())),
        })?)),
        None => None,
    };
    let cx = EvalContext {
        sets: &sets,
        benchmarks: &benchmarks,
        overrides: &overrides,
        rule: args.hard_label_rule,
        shared_cache: shared_cache.as_ref(),
        args,
    };
    let pool = thread_pool(args.sampling.workers)?;
    let models: Vec<ModelResult> = pool.install(|| {
        specs
            .par_iter()
            .map(|spec| match evaluate_model(spec, &cx) {
                Ok(profile) => {
                    info!("evaluated {}", profile.model_id);
                    ModelResult::Profile(profile)
                }
                Err(message) => {
                    warn!("{} failed: {message}", spec.display_id());
                    ModelResult::Failed {
                        model_id: spec.display_id(),
                        message,
                    }
                }
            })
            .collect()
    });

    let first = &sets[0];
    let results = RunResults {
        metadata: RunMetadata {
            rng_seed: first.rng_seed,
            seed_count: first.seed_count_requested,
            pairing: first.pairing,
            hard_label_rule: args.hard_label_rule,
            dataset: dataset_stats(&d),
            interventions: summaries(&sets),
        },
        models,
    };
    fs::create_dir_all(&args.out).map_err(|e| io_err(&args.out, e))?;
    let results_path = args.out.join(RESULTS_FILE);
    let mut w = BufWriter::new(File::create(&results_path).map_err(|e| io_err(&results_path, e))?);
    write_results(&results, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| io_err(&results_path, e))?;
    write_reports(&results, &args.report_formats, Some(&args.out), stdout)?;

    let failed = results
        .models
        .iter()
        .filter(|m| matches!(m, ModelResult::Failed { .. }))
        .count();
    if failed == results.models.len() {
        return Err(CliError::Provider(format!("all {failed} model(s) failed")));
    }
    Ok(())
}

/// Writes `report.<ext>` per format into `dir`; the first format is also
/// printed to `stdout`. Without `dir`, every format is printed.
fn write_reports(
    results: &RunResults,
    formats: &[ReportFormat],
    dir: Option<&Path>,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    for (i, format) in formats.iter().enumerate() {
        let text = render_report(results, *format)?;
        match dir {
            Some(dir) => {
                let path = dir.join(format!("report.{}", format.extension()));
                fs::write(&path, &text).map_err(|e| io_err(&path, e))?;
                if i == 0 {
                    stdout.write_all(text.as_bytes()).map_err(out_err)?;
                }
            }
            None => stdout.write_all(text.as_bytes()).map_err(out_err)?,
        }
    }
    Ok(())
}

fn cmd_report(args: &ReportArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let file = File::open(&args.results).map_err(|e| io_err(&args.results, e))?;
    let results = read_results(BufReader::new(file))?;
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    write_reports(&results, &args.report_formats, args.out.as_deref(), stdout)
}
