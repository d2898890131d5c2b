//! `snn`: data generation, training, evaluation and verification for state
//! neural networks.

mod commands;
mod config;
mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::Task;

#[derive(Parser)]
#[command(name = "snn", about = "State neural network toolkit", disable_version_flag = true)]
struct Cli {
    /// Print artifact and file-format versions.
    #[arg(long)]
    version: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an episode dataset.
    Gen(GenArgs),
    /// Build topology documents.
    #[command(subcommand)]
    Topology(TopologyCommand),
    /// Summarize a topology, dataset or checkpoint file.
    Inspect {
        path: PathBuf,
    },
    /// Train a network on a dataset.
    Train(TrainArgs),
    /// Score a checkpoint.
    Eval(EvalArgs),
    /// Run invariant suites.
    Verify(VerifyArgs),
    /// Dump a per-step state trace of one episode.
    Probe(ProbeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
pub enum GenKind {
    Pavlov,
    Pong,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Side {
    Train,
    Heldout,
}

#[derive(Args)]
pub struct GenArgs {
    #[arg(value_enum)]
    kind: GenKind,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Pavlov: input bit-flip probability.
    #[arg(long)]
    noise: Option<f64>,
    /// Pavlov: food, bell, two pairings, one bell test.
    #[arg(long)]
    paper_exact: bool,
    /// Pavlov: draw only from one side of the length-combination split.
    #[arg(long, value_enum)]
    split: Option<Side>,
    #[arg(long, default_value_t = 0.25)]
    split_fraction: f64,
    #[arg(long, default_value_t = 7)]
    split_salt: u64,
    /// Pong: episode length cap.
    #[arg(long)]
    max_steps: Option<usize>,
    /// Pong: probability of a random expert action.
    #[arg(long)]
    expert_noise: Option<f64>,
}

#[derive(Subcommand)]
enum TopologyCommand {
    /// Layered random network: inputs to hidden, sparse hidden recurrence,
    /// hidden to outputs.
    Random(RandomArgs),
}

#[derive(Args)]
pub struct RandomArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    inputs: Option<usize>,
    #[arg(long)]
    outputs: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    density: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// rate or lif
    #[arg(long)]
    model: Option<String>,
    /// none, hebbian or stdp
    #[arg(long)]
    rule: Option<String>,
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    topology: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    eval_data: Option<PathBuf>,
    #[arg(long)]
    run_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    task: Option<Task>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Continue from a checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Accept a checkpoint whose hashes do not match.
    #[arg(long)]
    force: bool,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Metric {
    Acquisition,
    Pong,
    Loss,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_enum)]
    metric: Metric,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    rollouts: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
pub struct VerifyArgs {
    /// gradcheck, tbptt, oracle, plasticity-signs, determinism, lif or all
    suite: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
pub struct ProbeArgs {
    #[arg(long, conflicts_with = "topology")]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    topology: Option<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0)]
    episode: usize,
    /// Network steps per recorded step.
    #[arg(long, default_value_t = 1)]
    ticks: usize,
    /// Plastic-edge snapshot stride; 0 disables.
    #[arg(long, default_value_t = 1)]
    edge_stride: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

fn main() {
    let cli = Cli::parse();
    if cli.version {
        print!("{}", commands::version_text());
        return;
    }
    let Some(command) = cli.command else {
        eprintln!("error: a subcommand is required (see --help)");
        std::process::exit(error::USAGE);
    };
    let result = match command {
        Command::Gen(a) => commands::gen(a),
        Command::Topology(TopologyCommand::Random(a)) => commands::random_topology(a),
        Command::Inspect { path } => commands::inspect(&path),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Verify(a) => commands::verify(a),
        Command::Probe(a) => commands::probe(a),
    };
    if let Err(f) = result {
        eprintln!("error: {f}");
        std::process::exit(f.code);
    }
}
