//! `vsmquant`: fetch corpora, run cross-validated experiments, sweep grids and
//! render reports.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};
use thiserror::Error;
use vsmquant::classify::{ClassifierKind, Model};
use vsmquant::corpus::{corpus_stats, load_corpus, make_folds_with, Corpus, CorpusError, CorpusFormat};
use vsmquant::eval::{
    config_key, csv_record, run_cv, sweep, write_atomic, write_csv, EvalError, ExperimentReport,
    PipelineConfig, Representation, ResultStore, Variant, CSV_HEADER,
};
use vsmquant::vsm::IdfMode;

mod fetch;
mod manifest;
mod report;
mod svg;

use manifest::RunManifest;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("dataset `{0}` is not listed in the manifest")]
    UnknownDataset(String),
    #[error("dataset `{name}`: file {} not found; run `vsmquant fetch` or fix the manifest entry", path.display())]
    MissingDataset { name: String, path: PathBuf },
    #[error("dataset `{name}`: {source}")]
    Dataset {
        name: String,
        #[source]
        source: CorpusError,
    },
    #[error("dataset `{name}`: sha256 mismatch, expected {expected}, found {found}")]
    ChecksumMismatch {
        name: String,
        expected: String,
        found: String,
    },
    #[error("dataset `{name}`: download failed: {reason}")]
    DownloadFailure { name: String, reason: String },
    #[error("result store is empty")]
    EmptyStore,
    #[error("{0} sweep configuration(s) failed")]
    SweepFailures(usize),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Parser)]
#[command(name = "vsmquant", version, about = "Reduced-precision TF-IDF text classification experiments")]
struct Cli {
    /// Directory holding downloaded datasets; relative manifest paths
    /// resolve here instead of next to the manifest.
    #[arg(long, global = true, env = "VSMQUANT_CACHE")]
    cache_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Download or copy datasets and verify checksums and counts.
    Fetch(FetchArgs),
    /// Print corpus statistics.
    Stats(StatsArgs),
    /// Cross-validate one configuration.
    Run(RunArgs),
    /// Cross-validate every configuration of the manifest grid.
    Sweep(SweepArgs),
    /// Render tables and SVG charts from a result store.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct DatasetSelect {
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Dataset name from the manifest (repeatable).
    #[arg(long = "dataset")]
    datasets: Vec<String>,
    /// A corpus file used directly instead of a manifest entry.
    #[arg(long, conflicts_with_all = ["manifest", "datasets"])]
    corpus: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FetchArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long = "dataset")]
    datasets: Vec<String>,
    /// Local directory to copy missing files from instead of downloading.
    #[arg(long)]
    mirror: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct StatsArgs {
    #[command(flatten)]
    select: DatasetSelect,
    /// Emit JSON instead of a text table.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    select: DatasetSelect,
    #[arg(long)]
    variant: Variant,
    #[arg(long = "clf")]
    classifier: ClassifierKind,
    #[arg(long)]
    bits: Option<u32>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long, value_parser = parse_idf)]
    idf_mode: Option<IdfMode>,
    #[arg(long)]
    class_weighting: bool,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    stratified: bool,
    /// Output directory (JSON report store plus `runs.csv`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Refit a linear model on the whole corpus and write its weights here.
    #[arg(long)]
    dump_weights: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long = "dataset")]
    datasets: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    jobs: Option<usize>,
    /// Overrides the manifest seed list.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    #[arg(long, value_parser = parse_idf)]
    idf_mode: Option<IdfMode>,
    #[arg(long)]
    class_weighting: Option<bool>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Sweep or run output directory (its `store/` is read).
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn parse_idf(s: &str) -> Result<IdfMode, String> {
    match s {
        "paper-literal" | "paper" => Ok(IdfMode::PaperLiteral),
        "smoothed" => Ok(IdfMode::Smoothed),
        _ => Err(format!("unknown idf mode `{s}` (paper-literal, smoothed)")),
    }
}

fn usage_error(kind: ErrorKind, msg: impl std::fmt::Display) -> ! {
    Cli::command().error(kind, msg).exit()
}

fn load_selected(
    select: &DatasetSelect,
    cache: Option<&Path>,
) -> Result<(Option<RunManifest>, Vec<(String, Corpus)>), CliError> {
    if let Some(path) = &select.corpus {
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "corpus".into());
        let corpus = load_corpus(path, CorpusFormat::default())
            .map_err(|source| CliError::Dataset { name: name.clone(), source })?;
        return Ok((None, vec![(name, corpus)]));
    }
    let Some(mpath) = &select.manifest else {
        usage_error(ErrorKind::MissingRequiredArgument, "either --manifest or --corpus is required");
    };
    let manifest = RunManifest::load(mpath)?;
    let names = manifest.select(&select.datasets)?;
    let corpora = names
        .into_iter()
        .map(|n| manifest.load_dataset(&n, cache).map(|c| (n, c)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((Some(manifest), corpora))
}

fn cmd_fetch(args: &FetchArgs, cache: Option<&Path>) -> Result<(), CliError> {
    let manifest = RunManifest::load(&args.manifest)?;
    let mut failed = 0;
    for name in manifest.select(&args.datasets)? {
        match fetch::fetch_dataset(&manifest, &name, cache, args.mirror.as_deref()) {
            Ok(r) => {
                println!(
                    "{}: {} documents, {} classes ({:?}) at {}",
                    r.name,
                    r.documents,
                    r.classes,
                    r.source,
                    r.path.display()
                );
                for m in &r.mismatches {
                    println!("{}: count mismatch: {m:?}", r.name);
                }
                if !r.mismatches.is_empty() {
                    failed += 1;
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                failed += 1;
            }
        }
    }
    if failed > 0 {
        return Err(CliError::Manifest(format!("{failed} dataset(s) failed verification")));
    }
    Ok(())
}

fn cmd_stats(args: &StatsArgs, cache: Option<&Path>) -> Result<(), CliError> {
    let (_, corpora) = load_selected(&args.select, cache)?;
    let mut all = serde_json::Map::new();
    for (name, corpus) in &corpora {
        let s = corpus_stats(corpus)?;
        if args.json {
            all.insert(name.clone(), serde_json::to_value(&s).expect("plain data"));
        } else {
            println!(
                "{name}: classes {} documents {} vocabulary {} mean length {:.1} smallest {} largest {} mean class {:.1} std {:.1} relative std {:.2}",
                s.classes,
                s.documents,
                s.vocabulary,
                s.mean_doc_length,
                s.smallest_class,
                s.largest_class,
                s.mean_class_size,
                s.class_size_std,
                s.relative_std
            );
        }
    }
    if args.json {
        println!("{}", serde_json::to_string_pretty(&all).expect("plain data"));
    }
    Ok(())
}

fn append_csv_row(path: &Path, report: &ExperimentReport) -> Result<(), CliError> {
    let exists = path.exists();
    let file = fs::OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::Writer::from_writer(file);
    if !exists {
        w.write_record(CSV_HEADER).map_err(std::io::Error::from)?;
    }
    w.write_record(csv_record(report)).map_err(std::io::Error::from)?;
    w.flush()?;
    Ok(())
}

fn cmd_run(args: &RunArgs, cache: Option<&Path>) -> Result<(), CliError> {
    let v = args.variant;
    // validated before any data is read
    if v.uses_bits() != args.bits.is_some() {
        let msg = if v.uses_bits() {
            format!("--variant {v} requires --bits")
        } else {
            format!("--variant {v} does not take --bits")
        };
        usage_error(ErrorKind::MissingRequiredArgument, msg);
    }
    if v.uses_svd() != args.k.is_some() {
        let msg = if v.uses_svd() {
            format!("--variant {v} requires --k")
        } else {
            format!("--variant {v} does not take --k")
        };
        usage_error(ErrorKind::MissingRequiredArgument, msg);
    }
    let shape = PipelineConfig {
        bits: args.bits,
        k: args.k,
        lambda: args.lambda.unwrap_or(1.0),
        ..PipelineConfig::new(v, args.classifier)
    };
    if let Err(e) = shape.validate() {
        usage_error(ErrorKind::InvalidValue, e);
    }
    if args.select.corpus.is_none() && args.select.datasets.len() != 1 {
        usage_error(ErrorKind::MissingRequiredArgument, "run needs exactly one --dataset or a --corpus");
    }
    let (manifest, corpora) = load_selected(&args.select, cache)?;
    let (name, corpus) = &corpora[0];
    let m = manifest.as_ref();
    let config = PipelineConfig {
        variant: v,
        bits: args.bits,
        k: args.k,
        classifier: args.classifier,
        seed: args.seed.or(m.map(|m| m.seeds[0])).unwrap_or(0),
        idf_mode: args.idf_mode.or(m.map(|m| m.idf_mode)).unwrap_or_default(),
        class_weighting: args.class_weighting || m.is_some_and(|m| m.class_weighting),
        lambda: args.lambda.or(m.map(|m| m.lambda)).unwrap_or(1.0),
    };
    if let Err(e) = config.validate() {
        usage_error(ErrorKind::InvalidValue, e);
    }
    let n_folds = args.folds.or(m.map(|m| m.n_folds)).unwrap_or(5);
    let stratified = args.stratified || m.is_some_and(|m| m.stratified);
    let folds = make_folds_with(corpus, n_folds, config.seed, stratified)?;
    let out = args
        .out
        .clone()
        .or(m.and_then(|m| m.output_dir.clone()))
        .unwrap_or_else(|| PathBuf::from("results"));
    let store = ResultStore::open(out.join("store"))?;
    let mut report = run_cv(corpus, &config, &folds)?;
    report.dataset = name.clone();
    store.put(&config_key(name, &config, &folds), &report)?;
    append_csv_row(&out.join("runs.csv"), &report)?;
    for f in &report.folds {
        for (class, objective) in &f.non_converged {
            eprintln!(
                "warning: fold {} class {class}: solver hit the iteration cap at objective {objective}",
                f.fold
            );
        }
    }
    println!(
        "{name} {v} {}: macro F1 {:.4} (std {:.4}), micro accuracy {:.4} (std {:.4})",
        config.classifier,
        report.mean.macro_f1,
        report.std.macro_f1,
        report.mean.micro_accuracy,
        report.std.micro_accuracy
    );
    if let Some(path) = &args.dump_weights {
        let docs: Vec<&vsmquant::Document> = corpus.documents().iter().collect();
        let (rep, features) = Representation::fit(&docs, &config)?;
        let (model, _) = Model::fit(
            config.classifier,
            features,
            &corpus.label_ids(),
            corpus.n_classes(),
            config.lambda,
            config.class_weighting,
            config.seed,
        )
        .map_err(EvalError::from)?;
        let Model::Linear(linear) = model else {
            usage_error(ErrorKind::InvalidValue, "--dump-weights needs --clf logistic or svm");
        };
        let mut text = linear.dump_weights();
        if matches!(config.variant, Variant::Tfidf | Variant::Quant) {
            text.push_str("# columns\n");
            for (i, t) in rep.tfidf.terms().iter().enumerate() {
                text.push_str(&format!("# {i} {t}\n"));
            }
        }
        write_atomic(path, text.as_bytes())?;
    }
    Ok(())
}

fn cmd_sweep(args: &SweepArgs, cache: Option<&Path>) -> Result<(), CliError> {
    let manifest = RunManifest::load(&args.manifest)?;
    let names = manifest.select(&args.datasets)?;
    let seeds = if args.seeds.is_empty() { manifest.seeds.clone() } else { args.seeds.clone() };
    let out = args
        .out
        .clone()
        .or(manifest.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("results"));
    let store = ResultStore::open(out.join("store"))?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = args.jobs {
        pool = pool.num_threads(j.max(1));
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Io(std::io::Error::other(e.to_string())))?;
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for name in &names {
        let corpus = manifest.load_dataset(name, cache)?;
        for m in manifest.entry(name)?.verify(&corpus) {
            eprintln!("warning: {name}: count mismatch: {m:?}");
        }
        for &seed in &seeds {
            let folds = make_folds_with(&corpus, manifest.n_folds, seed, manifest.stratified)?;
            let base = PipelineConfig {
                seed,
                idf_mode: args.idf_mode.unwrap_or(manifest.idf_mode),
                class_weighting: args.class_weighting.unwrap_or(manifest.class_weighting),
                lambda: manifest.lambda,
                ..PipelineConfig::new(Variant::Tfidf, ClassifierKind::Knn1)
            };
            let grid = manifest.grid.expand(&base);
            eprintln!("{name} seed {seed}: {} configurations", grid.len());
            let outcome = pool.install(|| sweep(name, &corpus, &folds, &grid, Some(&store)));
            eprintln!(
                "{name} seed {seed}: {} computed, {} reused, {} failed",
                outcome.computed,
                outcome.reused,
                outcome.failures.len()
            );
            reports.extend(outcome.reports);
            failures.extend(outcome.failures);
        }
    }
    let mut csv = Vec::new();
    write_csv(&reports, &mut csv)?;
    write_atomic(&out.join("sweep.csv"), &csv)?;
    let failure_json = serde_json::to_vec_pretty(&failures).map_err(EvalError::from)?;
    write_atomic(&out.join("failures.json"), &failure_json)?;
    for f in &failures {
        eprintln!(
            "failed: {} {} {} b={:?} k={:?}: {}",
            f.dataset, f.config.variant, f.config.classifier, f.config.bits, f.config.k, f.message
        );
    }
    println!("{} reports written to {}", reports.len(), out.display());
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::SweepFailures(failures.len()))
    }
}

fn cmd_report(args: &ReportArgs) -> Result<(), CliError> {
    let dir = args.results.join("store");
    if !dir.is_dir() {
        return Err(CliError::EmptyStore);
    }
    let reports = ResultStore::open(dir)?.load_all()?;
    let files = report::generate(&reports, &args.out)?;
    println!("{} files written to {}", files.len(), args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cache = cli.cache_dir.as_deref();
    let result = match &cli.command {
        Command::Fetch(a) => cmd_fetch(a, cache),
        Command::Stats(a) => cmd_stats(a, cache),
        Command::Run(a) => cmd_run(a, cache),
        Command::Sweep(a) => cmd_sweep(a, cache),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = std::io::stdout().flush();
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(1)
        }
    }
}
