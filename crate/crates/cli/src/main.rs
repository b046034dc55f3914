use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

mod commands;

#[derive(Parser, Debug, Serialize)]
#[command(
    name = "bdmrf",
    version,
    about = "Simulate, check and learn block directed Markov random fields"
)]
struct Cli {
    /// Seed for every random stream of this run.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads; 0 uses all cores.
    #[arg(long, global = true, env = "BDMRF_THREADS", default_value_t = 0)]
    #[serde(skip)]
    threads: usize,

    /// Suppress the reproducibility header and progress logging.
    #[arg(long, short, global = true)]
    #[serde(skip)]
    quiet: bool,

    /// Where to write the JSON run summary. Defaults to a file next to the
    /// main output, or stdout when the command has no output file.
    #[arg(long, global = true)]
    #[serde(skip)]
    summary: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
enum Command {
    /// Draw i.i.d. rows from a model with the block Gibbs sampler.
    Simulate(SimulateArgs),
    /// Run the normalizability rules on a model.
    Check(SpecArgs),
    /// Fit one penalized graph.
    Fit(FitArgs),
    /// Fit a whole regularization path.
    Path(PathArgs),
    /// Score a regularization path against a true model.
    Roc(RocArgs),
    /// Choose the penalty by stability selection and fit it.
    Stars(StarsArgs),
    /// Compare a small model against exact enumeration.
    Oracle(OracleArgs),
    /// Merge aberration and expression tables into a dataset.
    Prepare(PrepareArgs),
    /// Run a simulation study described by a manifest.
    Experiment(ExperimentArgs),
    /// Write or list built-in lattice models.
    Preset(PresetArgs),
}

#[derive(Args, Debug, Serialize)]
struct SpecArgs {
    /// Model spec (JSON).
    #[arg(long)]
    spec: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Number of rows.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    #[arg(long, default_value_t = 500)]
    burn_in: usize,
    #[arg(long, default_value_t = 10)]
    thin: usize,
    /// Rows drawn from each chain.
    #[arg(long, default_value_t = 1)]
    rows_per_chain: usize,
    /// Start chains from random states instead of fixed ones.
    #[arg(long)]
    random_init: bool,
    /// Sample even if the model fails the normalizability check.
    #[arg(long)]
    force: bool,
    /// Output dataset (CSV).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize, Clone)]
struct DataArgs {
    /// Model spec giving the skeleton; its parameters are ignored.
    #[arg(long)]
    spec: PathBuf,
    /// Dataset (CSV).
    #[arg(long)]
    data: PathBuf,
    /// Read 0/1 in bernoulli_pm columns as -1/+1.
    #[arg(long)]
    recode01: bool,
}

#[derive(Args, Debug, Serialize, Clone)]
struct SolverArgs {
    #[arg(long, value_enum, default_value_t = Rule::And)]
    rule: Rule,
    #[arg(long, default_value_t = 2000)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-7)]
    tol: f64,
    /// Scale predictor statistics to unit variance.
    #[arg(long)]
    standardize: bool,
    /// Keep Poisson-Poisson coefficients nonpositive.
    #[arg(long)]
    project_nonpositive: bool,
}

#[derive(Args, Debug, Serialize, Clone)]
struct GridArgs {
    /// Grid size.
    #[arg(long, default_value_t = 30)]
    k: usize,
    /// Smallest penalty as a fraction of the largest.
    #[arg(long, default_value_t = 0.01)]
    ratio: f64,
    /// Fixed mu / lambda; derived from block sizes when absent.
    #[arg(long)]
    coupling: Option<f64>,
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize)]
enum Rule {
    And,
    Or,
}

#[derive(Args, Debug, Serialize)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Intra-block penalty.
    #[arg(long)]
    lambda: f64,
    /// Inter-block penalty; defaults to lambda times the block-size coupling.
    #[arg(long)]
    mu: Option<f64>,
    /// Fitted model (JSON); diagnostics go next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct PathArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    grid: GridArgs,
    /// Path summary (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize)]
enum Class {
    Pooled,
    Intra,
    Inter,
}

#[derive(Args, Debug, Serialize)]
struct RocArgs {
    /// True model; its skeleton is used for fitting.
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    recode01: bool,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, value_enum, default_value_t = Class::Pooled)]
    class: Class,
    /// Recovery table (CSV) with an AUC footer.
    #[arg(long)]
    out: PathBuf,
    /// Also draw the curve (SVG).
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct StarsArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, default_value_t = 0.01)]
    beta: f64,
    #[arg(long, default_value_t = 20)]
    subsamples: usize,
    /// Rows per subsample; defaults to min(10 sqrt(n), 0.8 n).
    #[arg(long)]
    subsample_size: Option<usize>,
    /// Fitted model at the chosen penalty (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize)]
enum Against {
    Formula,
    Gibbs,
}

#[derive(Args, Debug, Serialize)]
struct OracleArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, value_enum, default_value_t = Against::Formula)]
    against: Against,
    /// Rows drawn for the Gibbs comparison.
    #[arg(long, default_value_t = 50_000)]
    samples: usize,
    #[arg(long, default_value_t = 500)]
    burn_in: usize,
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize)]
enum ExprFamily {
    Tpoisson,
    Poisson,
}

#[derive(Args, Debug, Serialize)]
struct PrepareArgs {
    /// Binary table: sample id column, then one 0/1 column per aberration.
    #[arg(long, required_unless_present = "write_lookalike")]
    aberrations: Option<PathBuf>,
    /// Count table: sample id column, then one column per gene.
    #[arg(long, required_unless_present = "write_lookalike")]
    expression: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    min_prevalence: f64,
    #[arg(long, default_value_t = 0.02)]
    top_variance: f64,
    #[arg(long, value_enum, default_value_t = ExprFamily::Tpoisson)]
    expression_family: ExprFamily,
    /// Output dataset (CSV).
    #[arg(long, required_unless_present = "write_lookalike")]
    out_data: Option<PathBuf>,
    /// Output skeleton model (JSON).
    #[arg(long, required_unless_present = "write_lookalike")]
    out_spec: Option<PathBuf>,
    /// Instead of preparing, write the synthetic lookalike tables to this
    /// directory.
    #[arg(long, conflicts_with_all = ["aberrations", "expression"])]
    write_lookalike: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct ExperimentArgs {
    #[arg(long)]
    manifest: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct PresetArgs {
    /// Preset name; see `--list`.
    #[arg(long, required_unless_present = "list")]
    name: Option<String>,
    /// Lattice side length.
    #[arg(long)]
    side: Option<usize>,
    #[arg(long, required_unless_present = "list")]
    out: Option<PathBuf>,
    #[arg(long)]
    list: bool,
}

impl Cli {
    fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).unwrap_or_default();
        hex::encode(&Sha256::digest(json.as_bytes())[..8])
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            eprintln!("error: cannot configure {} threads: {e}", cli.threads);
            return ExitCode::FAILURE;
        }
    }
    if !cli.quiet {
        eprintln!(
            "# bdmrf {} | seed {} | threads {} | config {}",
            env!("CARGO_PKG_VERSION"),
            cli.seed,
            rayon::current_num_threads(),
            cli.config_hash()
        );
    }
    let outcome = commands::run(&cli);
    let status = if outcome.ok { "ok" } else { "error" };
    let summary = serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "command": commands::name(&cli.command),
        "seed": cli.seed,
        "config_hash": cli.config_hash(),
        "status": status,
        "error": outcome.error,
        "result": outcome.result,
    });
    let text = serde_json::to_string_pretty(&summary).unwrap_or_default() + "\n";
    match cli.summary.clone().or(outcome.summary_path) {
        Some(path) => {
            if let Err(e) = std::fs::write(&path, text) {
                eprintln!("error: cannot write summary {}: {e}", path.display());
                return ExitCode::FAILURE;
            }
        }
        None => print!("{text}"),
    }
    if let Some(e) = &outcome.error {
        eprintln!("error: {e}");
    }
    if outcome.ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
