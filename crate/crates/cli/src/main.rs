//! Command-line front end of the `meshlabel` crate.
//!
//! Exit codes: 0 on success, 1 for bad input or usage, 2 for internal faults.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "meshlabel", version, about = "Label the exterior parts of building meshes")]
struct Cli {
    /// Log progress (repeat for debug output). `RUST_LOG` takes precedence.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Drop colors or interior subgroups, detect duplicates, optionally sample points.
    Preprocess(PreprocessArgs),
    /// Poisson-disk sample a building's surface.
    Sample(SampleArgs),
    /// Build the relation graph of a building.
    Graph(GraphArgs),
    /// Train the network on graph files.
    Train(TrainArgs),
    /// Label every subgroup of a building with a trained checkpoint.
    Predict(PredictArgs),
    /// Point-to-mesh transfer and graph-cuts refinement.
    #[command(subcommand)]
    Baseline(BaselineCommand),
    /// Part IoU, shape IoU and accuracy of predictions.
    Eval(EvalArgs),
    /// Write synthetic labeled buildings and a split manifest.
    Fixtures(FixturesArgs),
    /// Run every stage over a split manifest with caching.
    Pipeline(PipelineArgs),
}

#[derive(Args, Debug)]
struct PreprocessArgs {
    /// Input mesh (`.obj` with optional `.labels.json` sidecar).
    #[arg(long)]
    input: PathBuf,
    /// Output directory.
    #[arg(long)]
    output: PathBuf,
    /// Write duplicate classes to `duplicates.json`.
    #[arg(long)]
    dedup: bool,
    #[arg(long)]
    remove_interior: bool,
    /// Also write `points.bin` with this many samples.
    #[arg(long)]
    sample: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Drop vertex colors.
    #[arg(long)]
    no_color: bool,
    #[arg(long, default_value_t = 50)]
    viewpoints: usize,
    #[arg(long, default_value_t = 10)]
    samples_per_triangle: usize,
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 100_000)]
    budget: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Layout {
    Directed,
    Symmetric,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Obb {
    Free,
    Upright,
}

#[derive(Args, Debug)]
struct GraphArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    points: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Comma-separated subset of prox,support,sim,contain, or all / none.
    #[arg(long, default_value = "all")]
    edges: String,
    /// zero, geom or file:<path>.
    #[arg(long, default_value = "geom")]
    backbone: String,
    #[arg(long, value_enum, default_value_t = Layout::Directed)]
    layout: Layout,
    #[arg(long, value_enum, default_value_t = Obb::Free)]
    obb: Obb,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Training graphs.
    #[arg(long, num_args = 1.., required = true)]
    graphs: Vec<PathBuf>,
    /// Validation graphs for model selection (defaults to the training graphs).
    #[arg(long, num_args = 1..)]
    val: Vec<PathBuf>,
    /// Checkpoint to write.
    #[arg(long)]
    output: PathBuf,
    /// Training log (JSON lines); defaults to `<output>.log.jsonl`.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Run configuration supplying model and training settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    graph: PathBuf,
    /// Building the graph was built from (for subgroup names).
    #[arg(long)]
    building: PathBuf,
    /// Predictions JSON to write.
    #[arg(long)]
    output: PathBuf,
    /// Building id recorded in the predictions; defaults to the file stem.
    #[arg(long)]
    id: Option<String>,
    /// Also write per-subgroup probabilities.
    #[arg(long)]
    probs: Option<PathBuf>,
    /// Also write per-triangle probabilities (input for graph cuts).
    #[arg(long)]
    triangle_probs: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Granularity {
    Triangle,
    Subgroup,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Pool {
    Avg,
    Max,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Solver {
    AlphaExpansion,
    Icm,
}

#[derive(Subcommand, Debug)]
enum BaselineCommand {
    /// Transfer per-point probabilities to triangles or subgroups.
    Pool(PoolArgs),
    /// Refine per-triangle probabilities with graph cuts.
    Graphcuts(GraphCutsArgs),
    /// Fit the linear point classifier and write per-point probabilities.
    PointClassifier(PointClassifierArgs),
}

#[derive(Args, Debug)]
struct PoolArgs {
    /// Per-point probability file.
    #[arg(long)]
    probs: PathBuf,
    #[arg(long)]
    points: PathBuf,
    #[arg(long)]
    building: PathBuf,
    #[arg(long, value_enum, default_value_t = Granularity::Triangle)]
    granularity: Granularity,
    #[arg(long, value_enum, default_value_t = Pool::Avg)]
    mode: Pool,
    /// Pooled probability file to write.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct GraphCutsArgs {
    /// Buildings to refine.
    #[arg(long, num_args = 1.., required = true)]
    building: Vec<PathBuf>,
    /// Per-triangle probabilities, one file per building.
    #[arg(long, num_args = 1.., required = true)]
    probs: Vec<PathBuf>,
    /// Smoothness weight.
    #[arg(long, conflicts_with = "grid", required_unless_present = "grid")]
    lambda: Option<f64>,
    /// Comma-separated λ candidates, chosen by part IoU on the labeled validation buildings.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    #[arg(long, num_args = 1.., requires = "grid")]
    val_building: Vec<PathBuf>,
    #[arg(long, num_args = 1.., requires = "grid")]
    val_probs: Vec<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    angle_clamp: f64,
    #[arg(long, value_enum, default_value_t = Solver::AlphaExpansion)]
    method: Solver,
    #[arg(long, default_value_t = 20)]
    max_cycles: usize,
    /// Output directory; one `<stem>.labels.json` per building.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct PointClassifierArgs {
    /// Labeled training buildings.
    #[arg(long, num_args = 1.., required = true)]
    train_building: Vec<PathBuf>,
    /// Point sets of the training buildings, same order.
    #[arg(long, num_args = 1.., required = true)]
    train_points: Vec<PathBuf>,
    #[arg(long)]
    building: PathBuf,
    #[arg(long)]
    points: PathBuf,
    #[arg(long, default_value = "geom")]
    backbone: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-point probability file to write.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TrackArg {
    Mesh,
    Point,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long, value_enum)]
    track: TrackArg,
    /// Predictions: subgroup JSON or triangle labels (mesh), point probabilities (point).
    #[arg(long, num_args = 1.., required = true)]
    pred: Vec<PathBuf>,
    /// Ground-truth buildings, same order as `--pred`.
    #[arg(long, num_args = 1.., required = true)]
    gt: Vec<PathBuf>,
    /// Point sets, required for the point track.
    #[arg(long, num_args = 1..)]
    points: Vec<PathBuf>,
    /// Also write `<prefix>.txt` and `<prefix>.kv`.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FixturesArgs {
    /// stacked-boxes, row-houses, tower-with-windows, duplicate-stress,
    /// interior-stress, or the corpora `catalog` and `ablation`.
    #[arg(long)]
    kind: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Buildings assigned to training; the rest go to validation then test.
    #[arg(long)]
    train: Option<usize>,
    #[arg(long, default_value_t = 0)]
    validation: usize,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct PipelineArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Run configuration (JSON); missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    output: PathBuf,
    /// Cache directory; overrides `MESHLABEL_CACHE`.
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    edges: Option<String>,
    #[arg(long)]
    backbone: Option<String>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    no_color: bool,
    #[arg(long)]
    baseline: bool,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<meshlabel::Error>() {
            return if e.is_user_error() { 1 } else { 2 };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() || cause.downcast_ref::<serde_json::Error>().is_some() {
            return 1;
        }
        if cause.downcast_ref::<commands::UsageError>().is_some() {
            return 1;
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
