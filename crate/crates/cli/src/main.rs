mod bench;
mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ovir_core::Strategy;

use crate::config::Overrides;

#[derive(Parser, Debug)]
#[command(name = "ovir", version, about = "Open-vocabulary 3D instance fusion and retrieval")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic scene directory.
    Synth(SynthArgs),
    /// Fuse a scene's frames into bank and index snapshots.
    Fuse(FuseArgs),
    /// Rank the instances of an index against a query embedding.
    Query(QueryArgs),
    /// Score index snapshots against ground truth.
    Eval(EvalArgs),
    /// Paint every instance of an index over its scene cloud.
    ExportPly(ExportPlyArgs),
    /// Time per-frame fusion and the scoring cost model.
    Bench(BenchArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum NoisePreset {
    None,
    Benchmark,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub objects: usize,
    #[arg(long, default_value_t = 64)]
    pub feature_dim: usize,
    #[arg(long, default_value_t = 60)]
    pub frames: usize,
    #[arg(long, value_enum, default_value_t = NoisePreset::None)]
    pub noise: NoisePreset,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct FuseArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Args, Debug)]
pub struct QueryArgs {
    /// Index snapshot (`.ovi`).
    #[arg(long)]
    pub index: PathBuf,
    /// Query embedding (`.qe`).
    #[arg(long)]
    pub query: PathBuf,
    #[arg(short, long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = Strategy::Clustered)]
    pub strategy: Strategy,
    /// Ranking JSON; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Colored PLY with the top-k masks painted; needs `--scene`.
    #[arg(long, requires = "scene")]
    pub ply: Option<PathBuf>,
    #[arg(long)]
    pub scene: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Index snapshots, one per scene.
    #[arg(long, required = true, num_args = 1..)]
    pub index: Vec<PathBuf>,
    /// Ground-truth JSON files, paired with `--index` by position.
    #[arg(long, required = true, num_args = 1..)]
    pub gt: Vec<PathBuf>,
    /// Directories of `<category>.qe` files: one shared, or one per scene.
    #[arg(long, required = true, num_args = 1..)]
    pub queries: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Args, Debug)]
pub struct ExportPlyArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub repetitions: usize,
    /// Report JSON; the table always goes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Skip the regions x instances scaling table.
    #[arg(long)]
    pub no_scaling: bool,
    #[command(flatten)]
    pub overrides: Overrides,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Err(e) = config::init_threads() {
        return output::fail(&e);
    }
    let result = match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Fuse(a) => commands::fuse(&a),
        Command::Query(a) => commands::query(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::ExportPly(a) => commands::export_ply(&a),
        Command::Bench(a) => bench::run(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => output::fail(&e),
    }
}
