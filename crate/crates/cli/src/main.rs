//! `mtgw`: sampling, fringe, sin-tree, lattice and planar-map experiments.
//!
//! Exit codes: 0 when every configured gate passes, 1 when a gate fails or a
//! run aborts, 2 for configuration errors. Errors are reported as one JSON
//! object on stderr.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "mtgw", version, about = "Multi-type Galton-Watson trees and Boltzmann planar maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw conditioned trees and write them as JSON lines.
    Sample(SampleArgs),
    /// Compare extended fringes at uniform kappa-vertices with their limit law.
    Fringe(FringeArgs),
    /// Draw truncated size-biased (sin) trees.
    SinTree(SinTreeArgs),
    /// Lattice constants and local limit diagnostics of a two-type model.
    Llt(LltArgs),
    /// Sample Boltzmann planar maps and compare local balls across draws.
    MapSample(MapSampleArgs),
    /// Run the acceptance matrix.
    Suite(SuiteArgs),
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// Offspring model as JSON.
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 1)]
    root: u32,
    /// `none`, `total=N` or `types=T:K,T:K`.
    #[arg(long, default_value = "none")]
    condition: String,
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long)]
    seed: u64,
    /// Rejection attempts per draw.
    #[arg(long, default_value_t = 1_000_000)]
    budget: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FringeArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 1)]
    root: u32,
    #[arg(long)]
    condition: String,
    #[arg(long, default_value_t = 1)]
    kappa: u32,
    /// Depth of the extended fringe, counted in kappa-vertices.
    #[arg(long, default_value_t = 0)]
    h: usize,
    #[arg(long, default_value_t = 200)]
    draws: usize,
    #[arg(long)]
    seed: u64,
    /// Pointed trees up to this size get their own row.
    #[arg(long, default_value_t = 7)]
    max_size: usize,
    /// Gate on the largest absolute error.
    #[arg(long, default_value_t = 0.05)]
    tol: f64,
    #[arg(long, default_value_t = 1_000_000)]
    budget: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SinTreeArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 1)]
    kappa: u32,
    /// Type of the marked spine end; defaults to kappa.
    #[arg(long)]
    gamma: Option<u32>,
    #[arg(long, default_value_t = 3)]
    depth: usize,
    #[arg(long, default_value_t = 1)]
    draws: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct LltArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    n: u64,
    /// The fertile type; the other type must be infertile.
    #[arg(long, default_value_t = 1)]
    fertile: u32,
    /// Use exact rational arithmetic for the size law.
    #[arg(long)]
    exact: bool,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MapSampleArgs {
    /// Vertex weight of the dual map.
    #[arg(long, default_value_t = 1.0)]
    t: f64,
    #[arg(long, default_value_t = 500)]
    n: u64,
    /// What `n` counts; only `edges` is supported.
    #[arg(long, default_value = "edges")]
    unit: String,
    #[arg(long, default_value_t = 800)]
    draws: usize,
    #[arg(long, default_value_t = 2)]
    radius: u32,
    #[arg(long)]
    seed: u64,
    /// Compare balls of the face-weighted map instead of its dual.
    #[arg(long)]
    primal: bool,
    /// Gate on the total variation between the two halves.
    #[arg(long, default_value_t = 0.1)]
    tol: f64,
    #[arg(long, default_value_t = 50_000_000)]
    budget: u64,
    /// Ball table as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sampled maps as JSON lines.
    #[arg(long)]
    maps: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SuiteArgs {
    /// Half the draws, twice the tolerances.
    #[arg(long)]
    quick: bool,
    #[arg(long, default_value_t = 20240601)]
    seed: u64,
    /// Comma-separated criterion ids; all by default.
    #[arg(long, value_delimiter = ',')]
    only: Vec<u32>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return output::fail(&commands::Failure::config(e.to_string())),
    };
    if let Err(f) = commands::init_threads() {
        return output::fail(&f);
    }
    let result = match cli.command {
        Command::Sample(a) => commands::sample(a),
        Command::Fringe(a) => commands::fringe(a),
        Command::SinTree(a) => commands::sin_tree(a),
        Command::Llt(a) => commands::llt(a),
        Command::MapSample(a) => commands::map_sample(a),
        Command::Suite(a) => commands::suite(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(f) => output::fail(&f),
    }
}
