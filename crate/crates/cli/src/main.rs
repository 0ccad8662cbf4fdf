use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde_json::json;

use sense_geometry::corpus::{
    build_distributions, default_stopwords, entropy_band, filter_candidates, load_corpus,
    load_stopwords,
};
use sense_geometry::embeddings::RelatednessNorm;
use sense_geometry::error::{Error, Result};
use sense_geometry::human::{calibrate_threshold, NullModel};
use sense_geometry::pipeline::stages::{band_name, to_json, write_text};
use sense_geometry::pipeline::{
    compare_matrix_sets, run_pipeline_with, validate_config, LambdaSetting, ModelMetric, Report,
    RunConfig, RunOptions, Stage,
};
use sense_geometry::relatedness::load_matrix_dir;
use sense_geometry::stats::{bundled_pair_labels, load_pair_labels};

/// Word-sense relatedness from embedding geometry and spatial-arrangement
/// judgments.
#[derive(Parser)]
#[command(name = "sense-geometry", version)]
struct Cli {
    /// Log filter when RUST_LOG is unset (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "warn")]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Read a tokens file and print corpus counts as JSON.
    Ingest {
        #[arg(long)]
        tokens: PathBuf,
    },
    /// Per-lemma sense entropy, bands and model-free baselines.
    Entropy(EntropyArgs),
    /// List stimulus candidates with a bounded number of senses.
    SelectStimuli(SelectArgs),
    /// Sense-centroid relatedness matrices.
    Centroids(CentroidArgs),
    /// Cross-validated sense classification and confusion matrices.
    Classify(ClassifyArgs),
    /// Screen participants and aggregate human relatedness matrices.
    Human(HumanArgs),
    /// Correlate human matrices with a directory of model matrices.
    Compare(CompareArgs),
    /// Projections, dendrograms and heatmaps for selected lemmas.
    Viz(VizArgs),
    /// Run every stage a config file allows.
    Run(RunArgs),
    /// Monte Carlo exclusion thresholds under random placements.
    CalibrateThresholds(CalibrateArgs),
}

/// Options shared by the stage subcommands.
#[derive(Args)]
struct Common {
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Config override as a dotted key, e.g. `compare.resamples=200`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Print the merged configuration and exit.
    #[arg(long)]
    print_effective_config: bool,
}

#[derive(Args)]
struct EntropyArgs {
    #[arg(long)]
    tokens: PathBuf,
    /// Stopword list; a bundled list is used otherwise.
    #[arg(long)]
    stopwords: Option<PathBuf>,
    #[arg(long)]
    min_senses: Option<usize>,
    #[arg(long)]
    max_senses: Option<usize>,
    /// Entropy (nats) above which a lemma is high entropy.
    #[arg(long)]
    threshold: Option<f64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long)]
    tokens: PathBuf,
    #[arg(long)]
    stopwords: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    min_senses: usize,
    #[arg(long, default_value_t = 7)]
    max_senses: usize,
    #[arg(long, default_value_t = 1.5)]
    threshold: f64,
    /// CSV destination; standard output otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormArg {
    Max,
    Minmax,
}

#[derive(Args)]
struct CentroidArgs {
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    tokens: PathBuf,
    #[arg(long, value_enum)]
    relatedness_norm: Option<NormArg>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    tokens: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    folds: Option<usize>,
    /// Penalty strength, or `auto` for one over the training-set size.
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    min_tokens: Option<usize>,
    /// Master seed for the fold split.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct HumanArgs {
    #[arg(long)]
    placements: PathBuf,
    /// Comma-separated shared lemmas (`word.pos`); inferred when omitted.
    #[arg(long, value_delimiter = ',')]
    shared: Option<Vec<String>>,
    /// Participants drawn per lemma; 0 keeps everyone.
    #[arg(long)]
    subsample: Option<usize>,
    /// Comma-separated participants removed by the language criterion.
    #[arg(long, value_delimiter = ',')]
    language_excluded: Option<Vec<String>>,
    /// Master seed for subsampling.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Cosine,
    Confusion,
}

#[derive(Args)]
struct CompareArgs {
    /// Directory of aggregated human matrices.
    #[arg(long)]
    human: PathBuf,
    /// Directory of model matrices (centroid or confusion).
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value = "cosine")]
    mode: ModeArg,
    /// Pair-labels CSV; the bundled labels are used otherwise.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Skip the polysemy and homonymy analysis.
    #[arg(long, conflicts_with = "labels")]
    no_labels: bool,
    /// Master seed for the bootstrap interval and random-placement baseline; required.
    #[arg(long)]
    seed: Option<u64>,
    /// Config override as a dotted `compare.*` key.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Report destination.
    #[arg(long, default_value = "report.json")]
    out: PathBuf,
}

#[derive(Args)]
struct VizArgs {
    /// Lemma as `word.pos`; repeat for several.
    #[arg(long, required = true)]
    lemma: Vec<String>,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    tokens: PathBuf,
    #[arg(long)]
    perplexity: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    /// Master seed for t-SNE.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct RunArgs {
    /// TOML config; relative paths in it are resolved against its directory.
    #[arg(long)]
    config: PathBuf,
    /// Config override as a dotted key, e.g. `classifier.folds=4`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Reuse stage records from an earlier run with identical settings and
    /// inputs.
    #[arg(long)]
    resume: bool,
    /// Print the merged configuration and exit.
    #[arg(long)]
    print_effective_config: bool,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long, default_value_t = 1000)]
    draws: usize,
    /// Seed for the simulated placements.
    #[arg(long)]
    seed: u64,
    /// Sense counts of the shared trials, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "3,3,3,3,3,3")]
    holdout_senses: Vec<usize>,
    #[arg(long, default_value_t = 105)]
    participants: usize,
    #[arg(long, default_value_t = 92.0)]
    holdout_percentile: f64,
    /// Sense counts of the repeated trials, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "3,4")]
    repeat_senses: Vec<usize>,
    #[arg(long, default_value_t = 70.0)]
    repeat_percentile: f64,
    /// JSON destination; standard output otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn base_config(common: &Common) -> Result<RunConfig> {
    let cwd = std::env::current_dir().map_err(|e| Error::io(".", e))?;
    let mut cfg = RunConfig::from_toml("", &common.set, &cwd)?;
    cfg.out_dir = common.out.clone();
    Ok(cfg)
}

/// Runs `stage` (with prerequisites) unless only the config was requested.
fn run_stage(cfg: RunConfig, stage: Stage, common: &Common) -> Result<()> {
    let cfg = RunConfig {
        stages: vec![stage],
        ..cfg
    };
    execute(&cfg, common.print_effective_config, RunOptions::default())
}

fn execute(cfg: &RunConfig, print_config: bool, opts: RunOptions) -> Result<()> {
    if print_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let report = run_pipeline_with(cfg, opts)?;
    summarize(cfg, &report);
    Ok(())
}

fn summarize(cfg: &RunConfig, report: &Report) {
    let stages: Vec<&str> = report.stages.iter().map(|s| s.name()).collect();
    println!("stages: {}", stages.join(", "));
    if let Some(c) = &report.comparison {
        let r = &c.section.cosine.result;
        println!("cosine spearman r = {:.4} (n = {})", r.r, r.n);
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    println!("report: {}", cfg.out_dir.join("report.json").display());
}

fn ingest(tokens: &Path) -> Result<()> {
    let corpus = load_corpus(tokens)?;
    let dists = build_distributions(&corpus);
    let sentences: BTreeSet<u64> = corpus.iter().map(|t| t.sentence_id).collect();
    let senses: BTreeSet<&str> = corpus.iter().map(|t| t.sense_key.as_str()).collect();
    let word_types: BTreeSet<&str> = dists.keys().map(|l| l.word_type()).collect();
    let summary = json!({
        "tokens": corpus.len(),
        "sentences": sentences.len(),
        "lemmas": dists.len(),
        "word_types": word_types.len(),
        "sense_keys": senses.len(),
    });
    print!("{}", to_json(&summary));
    Ok(())
}

fn select_stimuli(a: &SelectArgs) -> Result<()> {
    if a.max_senses < a.min_senses {
        return Err(Error::Config(format!(
            "--max-senses {} is below --min-senses {}",
            a.max_senses, a.min_senses
        )));
    }
    let corpus = load_corpus(&a.tokens)?;
    let stopwords = match &a.stopwords {
        Some(p) => load_stopwords(p)?,
        None => default_stopwords(),
    };
    let dists = build_distributions(&corpus);
    let candidates = filter_candidates(&dists, &stopwords, a.min_senses, Some(a.max_senses));
    let mut csv = String::from("lemma,n_tokens,n_senses,entropy,band\n");
    for (lemma, h) in &candidates {
        let d = &dists[lemma];
        let _ = writeln!(
            csv,
            "{lemma},{},{},{h:.6},{}",
            d.total(),
            d.n_senses(),
            band_name(entropy_band(*h, a.threshold))
        );
    }
    match &a.out {
        Some(p) => fs::write(p, csv).map_err(|e| Error::io(p, e))?,
        None => print!("{csv}"),
    }
    info!("{} candidates", candidates.len());
    Ok(())
}

fn compare(a: &CompareArgs) -> Result<()> {
    let seed = a
        .seed
        .ok_or_else(|| Error::Config("--seed is required for bootstrap intervals".into()))?;
    let cwd = std::env::current_dir().map_err(|e| Error::io(".", e))?;
    let overrides: Vec<String> = a.set.iter().map(|s| format!("compare.{s}")).collect();
    let cfg = RunConfig::from_toml("", &overrides, &cwd)?;
    let issues: Vec<String> = validate_config(&cfg)
        .iter()
        .filter(|i| i.field.starts_with("compare."))
        .map(|i| i.to_string())
        .collect();
    if !issues.is_empty() {
        return Err(Error::Config(issues.join("; ")));
    }
    let human = load_matrix_dir(&a.human)?;
    let model = load_matrix_dir(&a.model)?;
    let labels = match (&a.labels, a.no_labels) {
        (_, true) => None,
        (Some(p), false) => Some(load_pair_labels(p)?),
        (None, false) => Some(bundled_pair_labels()),
    };
    let metric = match a.mode {
        ModeArg::Cosine => ModelMetric::Cosine,
        ModeArg::Confusion => ModelMetric::Confusion,
    };
    let out = compare_matrix_sets(
        &human,
        &model,
        metric,
        labels.as_deref(),
        &cfg.compare,
        seed,
    )?;
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    let r = &out.comparison.result;
    println!(
        "{} spearman r = {:.4} [{:.4}, {:.4}] (n = {})",
        metric.name(),
        r.r,
        r.ci_low,
        r.ci_high,
        r.n
    );
    let parent = a.out.parent().unwrap_or(Path::new(""));
    let name = a
        .out
        .file_name()
        .ok_or_else(|| Error::Config(format!("--out {} is not a file path", a.out.display())))?;
    write_text(parent, &name.to_string_lossy(), &to_json(&out))
}

fn calibrate(a: &CalibrateArgs) -> Result<()> {
    let start = Instant::now();
    let holdout = NullModel::Holdout {
        senses_per_trial: a.holdout_senses.clone(),
        n_participants: a.participants,
    };
    let repeat = NullModel::Repeat {
        senses_per_trial: a.repeat_senses.clone(),
    };
    let holdout_threshold = calibrate_threshold(&holdout, a.holdout_percentile, a.draws, a.seed)?;
    let repeat_threshold = calibrate_threshold(&repeat, a.repeat_percentile, a.draws, a.seed)?;
    let out = json!({
        "seed": a.seed,
        "draws": a.draws,
        "holdout": {
            "model": holdout,
            "percentile": a.holdout_percentile,
            "threshold": holdout_threshold,
        },
        "repeat": {
            "model": repeat,
            "percentile": a.repeat_percentile,
            "threshold": repeat_threshold,
        },
    });
    info!("calibration took {:.2?}", start.elapsed());
    let text = to_json(&out);
    match &a.out {
        Some(p) => fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Ingest { tokens } => ingest(&tokens),
        Command::Entropy(a) => {
            let mut cfg = base_config(&a.common)?;
            cfg.inputs.tokens = Some(a.tokens);
            cfg.inputs.stopwords = a.stopwords.or(cfg.inputs.stopwords);
            cfg.corpus.min_senses = a.min_senses.unwrap_or(cfg.corpus.min_senses);
            cfg.corpus.max_senses = a.max_senses.or(cfg.corpus.max_senses);
            cfg.corpus.entropy_threshold = a.threshold.unwrap_or(cfg.corpus.entropy_threshold);
            run_stage(cfg, Stage::Entropy, &a.common)
        }
        Command::SelectStimuli(a) => select_stimuli(&a),
        Command::Centroids(a) => {
            let mut cfg = base_config(&a.common)?;
            cfg.inputs.tokens = Some(a.tokens);
            cfg.inputs.embeddings = Some(a.embeddings);
            if let Some(n) = a.relatedness_norm {
                cfg.compare.norm = match n {
                    NormArg::Max => RelatednessNorm::Max,
                    NormArg::Minmax => RelatednessNorm::MinMax,
                };
            }
            run_stage(cfg, Stage::Centroids, &a.common)
        }
        Command::Classify(a) => {
            let mut cfg = base_config(&a.common)?;
            cfg.seed = a.seed.or(cfg.seed);
            cfg.inputs.tokens = Some(a.tokens);
            cfg.inputs.embeddings = Some(a.embeddings);
            let k = &mut cfg.classifier;
            k.folds = a.folds.unwrap_or(k.folds);
            k.min_tokens = a.min_tokens.unwrap_or(k.min_tokens);
            if let Some(l) = a.lambda {
                k.lambda = match l.parse::<f64>() {
                    Ok(v) => LambdaSetting::Number(v),
                    Err(_) => LambdaSetting::Text(l),
                };
            }
            run_stage(cfg, Stage::Classify, &a.common)
        }
        Command::Human(a) => {
            let mut cfg = base_config(&a.common)?;
            cfg.seed = a.seed.or(cfg.seed);
            cfg.inputs.placements = Some(a.placements);
            let h = &mut cfg.human;
            h.shared = a.shared.or(h.shared.take());
            h.subsample = a.subsample.unwrap_or(h.subsample);
            if let Some(ids) = a.language_excluded {
                h.language_excluded = ids;
            }
            run_stage(cfg, Stage::Human, &a.common)
        }
        Command::Compare(a) => compare(&a),
        Command::Viz(a) => {
            let mut cfg = base_config(&a.common)?;
            cfg.seed = a.seed.or(cfg.seed);
            cfg.inputs.tokens = Some(a.tokens);
            cfg.inputs.embeddings = Some(a.embeddings);
            cfg.viz.lemmas = a.lemma;
            cfg.viz.perplexity = a.perplexity.or(cfg.viz.perplexity);
            cfg.viz.iterations = a.iterations.unwrap_or(cfg.viz.iterations);
            run_stage(cfg, Stage::Viz, &a.common)
        }
        Command::Run(a) => {
            let mut cfg = RunConfig::load(&a.config, &a.set)?;
            cfg.seed = a.seed.or(cfg.seed);
            if let Some(out) = a.out {
                cfg.out_dir = out;
            }
            let opts = RunOptions { resume: a.resume };
            execute(&cfg, a.print_effective_config, opts)
        }
        Command::CalibrateThresholds(a) => calibrate(&a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(&cli.log_level))
        .format_timestamp(None)
        .init();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.kind().exit_code())
        }
    }
}
