mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use connlab::experiments::ThresholdMode;

/// Graph-connectivity transformer experiments.
#[derive(Parser)]
#[command(name = "connlab", version)]
struct Cli {
    /// Worker threads for per-graph fan-out; defaults to the machine's parallelism.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a graph dataset into a JSONL file.
    Gen(GenArgs),
    /// Train one model from a JSON config (or a previous run's manifest).
    Train(RunArgs),
    /// Per-distance accuracy table of a checkpoint.
    Probe(ProbeArgs),
    /// Project each weight onto span{I, J} per block.
    Project(ProjectArgs),
    /// Consistency of a checkpoint under node relabelings.
    Equiv(EquivArgs),
    /// Search long chains for a graph the checkpoint gets wrong.
    Falsify(FalsifyArgs),
    /// Train one model per sweep value.
    Sweep(SweepArgs),
}

#[derive(Args)]
pub struct GenArgs {
    /// Distribution JSON, or `@path` to read it from a file.
    #[arg(long)]
    pub dist: String,
    #[arg(long)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct RunArgs {
    /// Experiment config JSON or a `manifest.json` from an earlier run.
    #[arg(long)]
    pub config: PathBuf,
    /// Parent of the per-run output directory.
    #[arg(long, default_value = "runs")]
    pub out_root: PathBuf,
    /// Suppress per-step progress on stderr.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Threshold {
    HalfProb,
    StrictPositive,
}

impl From<Threshold> for ThresholdMode {
    fn from(t: Threshold) -> Self {
        match t {
            Threshold::HalfProb => ThresholdMode::HalfProb,
            Threshold::StrictPositive => ThresholdMode::StrictPositive,
        }
    }
}

#[derive(Args)]
pub struct ProbeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Distribution of probe graphs; defaults to ER(n, 0.2).
    #[arg(long)]
    pub dist: Option<String>,
    #[arg(long, default_value_t = 4096)]
    pub graphs: usize,
    #[arg(long, value_enum, default_value = "half-prob")]
    pub threshold: Threshold,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the table as CSV instead of JSON.
    #[arg(long)]
    pub csv: bool,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct ProjectArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub csv: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct EquivArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub dist: Option<String>,
    #[arg(long, default_value_t = connlab::equivariance::DEFAULT_NUM_GRAPHS)]
    pub graphs: usize,
    #[arg(long, default_value_t = connlab::equivariance::DEFAULT_NUM_PERMS)]
    pub perms: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also score every layer's hidden state.
    #[arg(long)]
    pub layerwise: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct FalsifyArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Depth whose capacity sets the chain lengths; defaults to the model's.
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long, value_enum, default_value = "half-prob")]
    pub threshold: Threshold,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum SweepKind {
    /// Restrict training graphs to diameter <= each value.
    Diam,
    /// Mix within- and beyond-capacity graphs with each fraction q.
    Rho,
}

#[derive(Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, value_enum)]
    pub kind: SweepKind,
    /// Comma-separated sweep values; defaults depend on the kind.
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<f64>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let core = err.chain().find_map(|c| c.downcast_ref::<connlab::Error>());
    match core {
        Some(e) if e.is_numeric() => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(w) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(w).build_global() {
            eprintln!("error: --workers: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Gen(a) => commands::gen(&a),
        Command::Train(a) => commands::train(&a),
        Command::Probe(a) => commands::probe(&a),
        Command::Project(a) => commands::project(&a),
        Command::Equiv(a) => commands::equiv(&a),
        Command::Falsify(a) => commands::falsify(&a),
        Command::Sweep(a) => commands::sweep(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
