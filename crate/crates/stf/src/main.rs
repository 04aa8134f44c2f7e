//! Command-line front end: generate synthetic data, fit models, detect and
//! forecast communities, score partitions, search hyperparameters, and
//! measure fitting cost against input size.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use stf::bench::{run_bench, BenchConfig};
use stf::communities::{detect_communities_with, DetectOptions};
use stf::error::{Error, Result};
use stf::factorization::{fit, GradientMode, Hyperparameters};
use stf::io::{
    atomic_write, format_sig, load_checkpoint, load_dataset, load_labels_file, parse_key_values,
    save_checkpoint, save_dataset, save_labels_dir, save_labels_dir_from, write_dense_tsv,
    write_jsonl, Checkpoint,
};
use stf::metrics::LabeledClustering;
use stf::prediction::{
    predict_communities, predict_embedding, FallbackPolicy, ForecastOptions, TrackPolicy,
};
use stf::synthetic::{generate, SyntheticConfig};
use stf::tuner::{tune, Direction, SearchSpace, SearchStrategy, TuneOptions};

#[derive(Parser)]
#[command(name = "stf", version, about = "Temporal network factorization toolkit")]
struct Cli {
    /// Worker threads (0 = one per core). Results never depend on this.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Shorthand for --threads 1; removes scheduling variance entirely.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Significant digits in printed numbers.
    #[arg(long, global = true, default_value_t = 6)]
    precision: usize,
    /// Base seed for every randomized stage.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with planted drifting communities.
    Generate(GenerateArgs),
    /// Fit the factor model on a dataset and write a checkpoint.
    Fit(FitArgs),
    /// Cluster a checkpoint's embeddings into per-snapshot communities.
    Detect(DetectArgs),
    /// Forecast communities one or more snapshots past the fitted history.
    Predict(PredictArgs),
    /// Score predicted labels against a dataset's ground truth.
    Evaluate(EvaluateArgs),
    /// Search hyperparameters, scoring each trial by silhouette.
    Tune(TuneArgs),
    /// Measure fit time against node count and fit a scaling curve.
    Bench(BenchArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Dataset directory to create.
    #[arg(long)]
    output: PathBuf,
    /// Optional key=value file supplying any of the knobs below; explicit
    /// flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Node count [default: 500].
    #[arg(long)]
    nodes: Option<usize>,
    /// Distinct edges per snapshot [default: 2000].
    #[arg(long)]
    edges: Option<usize>,
    /// Planted group count [default: 5].
    #[arg(long)]
    groups: Option<usize>,
    /// Snapshot count [default: 3].
    #[arg(long)]
    timestamps: Option<usize>,
    /// Probability an edge stays inside its group [default: 0.75].
    #[arg(long)]
    intra_fraction: Option<f64>,
    /// Vocabulary owned by each group [default: 5].
    #[arg(long)]
    words_per_group: Option<usize>,
    /// Tokens each node emits per snapshot [default: 20].
    #[arg(long)]
    tokens_per_node: Option<usize>,
    /// Probability a token lands in another group's word block [default: 0.1].
    #[arg(long)]
    word_crossover: Option<f64>,
    /// Per-node probability of switching groups between snapshots
    /// [default: 0.05].
    #[arg(long)]
    transition_prob: Option<f64>,
    /// Cap on the fraction of nodes that switch per transition [default: 0.1].
    #[arg(long)]
    max_transition_fraction: Option<f64>,
}

#[derive(Copy, Clone, ValueEnum)]
enum GradientModeArg {
    Exact,
    OneSided,
}

impl From<GradientModeArg> for GradientMode {
    fn from(v: GradientModeArg) -> GradientMode {
        match v {
            GradientModeArg::Exact => GradientMode::Exact,
            GradientModeArg::OneSided => GradientMode::OneSided,
        }
    }
}

#[derive(Args)]
struct FitArgs {
    /// Dataset directory.
    #[arg(long)]
    input: PathBuf,
    /// Checkpoint file to write.
    #[arg(long)]
    output: PathBuf,
    /// Gradient step size.
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
    /// Weight of the content reconstruction term.
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    /// Ridge penalty on the factors.
    #[arg(long, default_value_t = 1e-5)]
    lambda1: f64,
    /// Temporal smoothness penalty.
    #[arg(long, default_value_t = 1e-4)]
    lambda2: f64,
    /// Embedding dimension.
    #[arg(long, default_value_t = 10)]
    rank: usize,
    #[arg(long, default_value_t = 1000)]
    max_iters: usize,
    /// Relative objective change that stops fitting early.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Sampled zeros per observed entry; 0 evaluates every coordinate.
    #[arg(long, default_value_t = 1.0)]
    neg_sample_ratio: f64,
    #[arg(long, value_enum, default_value_t = GradientModeArg::Exact)]
    gradient_mode: GradientModeArg,
    /// Also write the objective trace, one value per line.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct DetectArgs {
    /// Checkpoint file from `fit`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    clusters: usize,
    /// Directory for per-snapshot label files.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    #[arg(long, default_value_t = 300)]
    max_iters: usize,
    /// Scale embedding rows to unit length before clustering.
    #[arg(long)]
    normalize: bool,
}

#[derive(Copy, Clone, ValueEnum)]
enum FallbackArg {
    LastValue,
    Mean,
}

#[derive(Copy, Clone, ValueEnum)]
enum PolicyArg {
    /// Track coordinates that are nonzero in some snapshot.
    Embedding,
    /// Track all coordinates of nodes with at least one observed edge
    /// (needs --input).
    Adjacency,
}

#[derive(Args)]
struct PredictArgs {
    /// Checkpoint file from `fit`.
    #[arg(long)]
    model: PathBuf,
    /// Snapshots past the fitted history to forecast.
    #[arg(long, default_value_t = 1)]
    horizon: usize,
    #[arg(long)]
    clusters: usize,
    /// Directory for the forecast label file and embedding, both named by
    /// the absolute timestamp they describe.
    #[arg(long)]
    output: PathBuf,
    /// Autoregression order (default: min(2, T - 2)).
    #[arg(long)]
    order: Option<usize>,
    /// Drop the intercept from the per-coordinate autoregressions.
    #[arg(long)]
    no_intercept: bool,
    #[arg(long, value_enum, default_value_t = FallbackArg::LastValue)]
    fallback: FallbackArg,
    #[arg(long, value_enum, default_value_t = PolicyArg::Embedding)]
    policy: PolicyArg,
    /// Dataset directory; required by --policy adjacency.
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Dataset directory carrying ground-truth labels.
    #[arg(long)]
    dataset: PathBuf,
    /// Directory of predicted label files.
    #[arg(long)]
    labels: PathBuf,
    /// Compare this ground-truth snapshot (1-based) ...
    #[arg(long, requires = "pred_timestamp")]
    truth_timestamp: Option<usize>,
    /// ... against this predicted label file (1-based).
    #[arg(long, requires = "truth_timestamp")]
    pred_timestamp: Option<usize>,
    /// Also write the scores as JSON.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Copy, Clone, ValueEnum)]
enum StrategyArg {
    Grid,
    Random,
}

#[derive(Copy, Clone, ValueEnum)]
enum DirectionArg {
    Maximize,
    Minimize,
}

#[derive(Args)]
struct TuneArgs {
    /// Dataset directory.
    #[arg(long)]
    input: PathBuf,
    /// JSON file with the search axes (defaults to the built-in grid).
    #[arg(long)]
    space: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = StrategyArg::Grid)]
    strategy: StrategyArg,
    /// Trial cap; grid search runs the whole grid without it, random search
    /// requires it.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long, value_enum, default_value_t = DirectionArg::Maximize)]
    direction: DirectionArg,
    /// Fitting iterations per trial.
    #[arg(long, default_value_t = 200)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 1.0)]
    neg_sample_ratio: f64,
    #[arg(long, value_enum, default_value_t = GradientModeArg::Exact)]
    gradient_mode: GradientModeArg,
    /// Write the full trial log as JSON lines.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Node counts to measure.
    #[arg(long, value_delimiter = ',', default_value = "250,500,1000,2000")]
    nodes: Vec<usize>,
    /// Fitting iterations per measurement.
    #[arg(long, default_value_t = 1000)]
    iterations: usize,
    #[arg(long, default_value_t = 2)]
    rank: usize,
    #[arg(long, default_value_t = 3)]
    timestamps: usize,
    #[arg(long, default_value_t = 5)]
    groups: usize,
    /// Edges per snapshot = factor * nodes.
    #[arg(long, default_value_t = 4)]
    edge_factor: usize,
    /// Also write the full report as JSON.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let threads = if cli.deterministic { 1 } else { cli.threads };
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::InvalidInput(format!("thread pool setup failed: {e}")))?;
    }
    let precision = cli.precision.max(1);
    let seed = cli.seed;
    match cli.command {
        Command::Generate(args) => cmd_generate(args, seed),
        Command::Fit(args) => cmd_fit(args, seed, precision),
        Command::Detect(args) => cmd_detect(args, seed, precision),
        Command::Predict(args) => cmd_predict(args, seed, precision),
        Command::Evaluate(args) => cmd_evaluate(args, precision),
        Command::Tune(args) => cmd_tune(args, seed, precision),
        Command::Bench(args) => cmd_bench(args, seed, precision),
    }
}

/// Keys a generate config file may set, mirroring the flags.
const GENERATE_KEYS: [&str; 10] = [
    "nodes",
    "edges",
    "groups",
    "timestamps",
    "intra_fraction",
    "words_per_group",
    "tokens_per_node",
    "word_crossover",
    "transition_prob",
    "max_transition_fraction",
];

fn cmd_generate(args: GenerateArgs, seed: u64) -> Result<()> {
    let file = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.display().to_string(),
                source: e,
            })?;
            let map = parse_key_values(path, &text)?;
            if let Some(key) = map.keys().find(|k| !GENERATE_KEYS.contains(&k.as_str())) {
                return Err(Error::Corrupt {
                    path: path.display().to_string(),
                    message: format!("unknown key {key}"),
                });
            }
            map
        }
        None => Default::default(),
    };
    fn merge<T: std::str::FromStr>(
        flag: Option<T>,
        file: &std::collections::HashMap<String, String>,
        key: &str,
        default: T,
    ) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = flag {
            return Ok(v);
        }
        match file.get(key) {
            Some(raw) => raw.parse().map_err(|e| {
                Error::InvalidInput(format!("config key {key}: bad value {raw:?} ({e})"))
            }),
            None => Ok(default),
        }
    }
    let d = SyntheticConfig::default();
    let cfg = SyntheticConfig {
        nodes: merge(args.nodes, &file, "nodes", d.nodes)?,
        edges_per_snapshot: merge(args.edges, &file, "edges", d.edges_per_snapshot)?,
        groups: merge(args.groups, &file, "groups", d.groups)?,
        timestamps: merge(args.timestamps, &file, "timestamps", d.timestamps)?,
        intra_fraction: merge(args.intra_fraction, &file, "intra_fraction", d.intra_fraction)?,
        words_per_group: merge(args.words_per_group, &file, "words_per_group", d.words_per_group)?,
        tokens_per_node: merge(args.tokens_per_node, &file, "tokens_per_node", d.tokens_per_node)?,
        word_crossover: merge(args.word_crossover, &file, "word_crossover", d.word_crossover)?,
        transition_prob: merge(args.transition_prob, &file, "transition_prob", d.transition_prob)?,
        max_transition_fraction: merge(
            args.max_transition_fraction,
            &file,
            "max_transition_fraction",
            d.max_transition_fraction,
        )?,
        seed,
    };
    let data = generate(&cfg)?;
    save_dataset(&args.output, &data.network, Some(&data.labels))?;
    println!(
        "generate: {} nodes, {} edges x {} snapshots, {} groups, {} terms -> {}",
        cfg.nodes,
        cfg.edges_per_snapshot,
        cfg.timestamps,
        cfg.groups,
        cfg.term_count(),
        args.output.display()
    );
    Ok(())
}

fn cmd_fit(args: FitArgs, seed: u64, precision: usize) -> Result<()> {
    let dataset = load_dataset(&args.input)?;
    let hp = Hyperparameters {
        alpha: args.alpha,
        beta: args.beta,
        lambda1: args.lambda1,
        lambda2: args.lambda2,
        rank: args.rank,
        max_iters: args.max_iters,
        tol: args.tol,
        neg_sample_ratio: args.neg_sample_ratio,
        seed,
        gradient_mode: args.gradient_mode.into(),
    };
    let outcome = fit(&dataset.network, &hp)?;
    save_checkpoint(&args.output, &Checkpoint::from_outcome(&outcome, &hp))?;
    if let Some(path) = &args.trace {
        let mut text = String::new();
        for v in &outcome.trace {
            text.push_str(&format_sig(*v, precision));
            text.push('\n');
        }
        atomic_write(path, text.as_bytes())?;
    }
    println!(
        "fit: rank {} on {} nodes x {} snapshots; {} iterations; objective {} -> {} -> {}",
        hp.rank,
        dataset.network.node_count(),
        dataset.network.timestamps(),
        outcome.iterations,
        format_sig(outcome.initial_objective(), precision),
        format_sig(outcome.final_objective(), precision),
        args.output.display()
    );
    Ok(())
}

fn cmd_detect(args: DetectArgs, seed: u64, precision: usize) -> Result<()> {
    let model = load_checkpoint(&args.model)?.into_model()?;
    let opts = DetectOptions {
        restarts: args.restarts,
        max_iters: args.max_iters,
        normalize_rows: args.normalize,
    };
    let assignment = detect_communities_with(&model, args.clusters, seed, &opts)?;
    save_labels_dir(&args.output, &assignment.labels)?;
    println!(
        "detect: {} clusters over {} snapshots; inertia {} -> {}",
        args.clusters,
        assignment.labels.len(),
        format_sig(assignment.inertia, precision),
        args.output.display()
    );
    Ok(())
}

fn cmd_predict(args: PredictArgs, seed: u64, precision: usize) -> Result<()> {
    let model = load_checkpoint(&args.model)?.into_model()?;
    let policy = match args.policy {
        PolicyArg::Embedding => TrackPolicy::NonzeroEmbedding,
        PolicyArg::Adjacency => {
            let input = args.input.as_ref().ok_or_else(|| {
                Error::InvalidInput("--policy adjacency needs --input for the edges".into())
            })?;
            TrackPolicy::active_nodes(&load_dataset(input)?.network)
        }
    };
    let opts = ForecastOptions {
        order: args.order,
        intercept: !args.no_intercept,
        fallback: match args.fallback {
            FallbackArg::LastValue => FallbackPolicy::LastValue,
            FallbackArg::Mean => FallbackPolicy::Mean,
        },
        policy,
    };
    let assignment = predict_communities(&model, args.horizon, &opts, args.clusters, seed)?;
    let future_t = model.timestamps() + args.horizon;
    save_labels_dir_from(&args.output, future_t, &assignment.labels)?;
    let forecast = predict_embedding(&model, args.horizon, &opts)?;
    write_dense_tsv(
        &args.output.join(format!("embedding_t{future_t}.tsv")),
        &forecast,
    )?;
    println!(
        "predict: t={} from {} fitted snapshots, {} clusters; inertia {} -> {}",
        future_t,
        model.timestamps(),
        args.clusters,
        format_sig(assignment.inertia, precision),
        args.output.display()
    );
    Ok(())
}

#[derive(serde::Serialize)]
struct EvalRecord {
    truth_timestamp: usize,
    pred_timestamp: usize,
    purity: f64,
    jaccard: f64,
}

fn cmd_evaluate(args: EvaluateArgs, precision: usize) -> Result<()> {
    let dataset = load_dataset(&args.dataset)?;
    let truth = dataset.labels.ok_or_else(|| {
        Error::InvalidInput(format!(
            "dataset {} carries no ground-truth labels",
            args.dataset.display()
        ))
    })?;
    let t_count = truth.len();
    let pairs: Vec<(usize, usize)> = match (args.truth_timestamp, args.pred_timestamp) {
        (Some(tt), Some(pt)) => vec![(tt, pt)],
        _ => (1..=t_count).map(|t| (t, t)).collect(),
    };
    let nodes = dataset.network.node_count();
    let mut records = Vec::with_capacity(pairs.len());
    for (tt, pt) in pairs {
        if tt == 0 || tt > t_count {
            return Err(Error::InvalidInput(format!(
                "truth timestamp {tt} outside 1..={t_count}"
            )));
        }
        let predicted = load_labels_file(&args.labels.join(format!("labels_t{pt}.tsv")), nodes)?;
        let scored = LabeledClustering::new(predicted, truth[tt - 1].clone())?;
        let record = EvalRecord {
            truth_timestamp: tt,
            pred_timestamp: pt,
            purity: scored.purity(),
            jaccard: scored.jaccard()?,
        };
        println!(
            "evaluate: truth t={} vs predicted t={}: purity {} jaccard {}",
            tt,
            pt,
            format_sig(record.purity, precision),
            format_sig(record.jaccard, precision)
        );
        records.push(record);
    }
    if records.len() > 1 {
        let mean_p = records.iter().map(|r| r.purity).sum::<f64>() / records.len() as f64;
        let mean_j = records.iter().map(|r| r.jaccard).sum::<f64>() / records.len() as f64;
        println!(
            "evaluate: mean over {} snapshots: purity {} jaccard {}",
            records.len(),
            format_sig(mean_p, precision),
            format_sig(mean_j, precision)
        );
    }
    if let Some(path) = args.output {
        let mut text = serde_json::to_string_pretty(&records)
            .map_err(|e| Error::InvalidInput(format!("score serialization failed: {e}")))?;
        text.push('\n');
        atomic_write(&path, text.as_bytes())?;
    }
    Ok(())
}

fn cmd_tune(args: TuneArgs, seed: u64, precision: usize) -> Result<()> {
    let dataset = load_dataset(&args.input)?;
    let space: SearchSpace = match &args.space {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.display().to_string(),
                source: e,
            })?;
            serde_json::from_str(&text).map_err(|e| Error::Corrupt {
                path: path.display().to_string(),
                message: e.to_string(),
            })?
        }
        None => SearchSpace::default(),
    };
    let opts = TuneOptions {
        strategy: match args.strategy {
            StrategyArg::Grid => SearchStrategy::Grid,
            StrategyArg::Random => SearchStrategy::Random,
        },
        budget: args.budget,
        direction: match args.direction {
            DirectionArg::Maximize => Direction::Maximize,
            DirectionArg::Minimize => Direction::Minimize,
        },
        seed,
        base: Hyperparameters {
            max_iters: args.max_iters,
            tol: args.tol,
            neg_sample_ratio: args.neg_sample_ratio,
            seed,
            gradient_mode: args.gradient_mode.into(),
            ..Hyperparameters::default()
        },
    };
    let outcome = tune(&dataset.network, &space, &opts)?;
    let best = &outcome.best;
    println!(
        "tune: {} trials; best #{} score {}: alpha {} beta {} lambda1 {} lambda2 {} rank {} clusters {}",
        outcome.trials.len(),
        best.index,
        format_sig(best.score.unwrap_or(f64::NAN), precision),
        format_sig(best.config.alpha, precision),
        format_sig(best.config.beta, precision),
        format_sig(best.config.lambda1, precision),
        format_sig(best.config.lambda2, precision),
        best.config.rank,
        best.config.clusters
    );
    if let Some(path) = args.output {
        write_jsonl(&path, &outcome.trials)?;
        println!("tune: trial log -> {}", path.display());
    }
    Ok(())
}

fn cmd_bench(args: BenchArgs, seed: u64, precision: usize) -> Result<()> {
    let cfg = BenchConfig {
        node_counts: args.nodes,
        iterations: args.iterations,
        rank: args.rank,
        timestamps: args.timestamps,
        groups: args.groups,
        edge_factor: args.edge_factor,
        seed,
    };
    let report = run_bench(&cfg)?;
    for p in &report.points {
        println!(
            "bench: n {} -> {} s (objective {})",
            p.nodes,
            format_sig(p.seconds, precision),
            format_sig(p.final_objective, precision)
        );
    }
    let [c0, c1, c2] = report.fit.raw_coeffs();
    let n_max = report.points.iter().map(|p| p.nodes).max().unwrap() as f64;
    println!(
        "bench: t(n) = {} + {} n + {} n^2; r2 {}; quadratic term dominates at n={}: {}",
        format_sig(c0, precision),
        format_sig(c1, precision),
        format_sig(c2, precision),
        format_sig(report.fit.r_squared, precision),
        n_max,
        report.fit.quadratic_dominates_at(n_max)
    );
    if let Some(path) = args.output {
        let mut text = serde_json::to_string_pretty(&report)
            .map_err(|e| Error::InvalidInput(format!("report serialization failed: {e}")))?;
        text.push('\n');
        atomic_write(&path, text.as_bytes())?;
    }
    Ok(())
}
