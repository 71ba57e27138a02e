use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

/// Exact infinite-width NTK matrices of edge-of-chaos (a,b)-ReLU networks.
///
/// Every run is determined by its flags. Datasets are sampled from the unit
/// sphere with seed `--seed + i` for dataset `i` (default base seed 2024).
/// The worker count comes from EOC_NTK_THREADS (or --threads) and never
/// changes the output.
#[derive(Debug, Parser)]
#[command(name = "eoc-ntk", version)]
pub struct Cli {
    /// Worker threads; defaults to all cores.
    #[arg(long, env = "EOC_NTK_THREADS", global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct Activation {
    /// Slope coefficient a of phi(s) = a s + b |s|.
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    a: f64,
    /// Absolute-value coefficient b of phi(s) = a s + b |s|.
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    b: f64,
}

#[derive(Debug, Args)]
pub struct Output {
    /// Output file (directory for sweep-depth); stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Debug, Args)]
pub struct DataSource {
    /// Number of points sampled from the unit sphere.
    #[arg(long, default_value_t = 32)]
    n: usize,
    /// Ambient dimension of the sampled points.
    #[arg(long, default_value_t = 16)]
    dim: usize,
    /// Base seed.
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    /// Append this constant coordinate to every point.
    #[arg(long)]
    bias: Option<f64>,
    /// Read points from a CSV file (one point per line) instead of sampling.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a unit-sphere dataset.
    Dataset {
        #[command(flatten)]
        source: DataSource,
        #[command(flatten)]
        output: Output,
    },
    /// Layer-by-layer cosine, squared distance, inverse distance and u_k of
    /// one input pair.
    Maps {
        #[command(flatten)]
        act: Activation,
        /// First-layer cosine.
        #[arg(long, allow_negative_numbers = true, conflicts_with = "w")]
        rho: Option<f64>,
        /// First-layer inverse cosine distance.
        #[arg(long)]
        w: Option<f64>,
        #[arg(long, default_value_t = 10)]
        depth: usize,
        #[command(flatten)]
        output: Output,
    },
    /// Compare closed-form dual functions with quadrature on a cosine grid.
    DualCheck {
        /// Order of the Gauss rules.
        #[arg(long, default_value_t = 64)]
        order: usize,
        #[command(flatten)]
        output: Output,
    },
    /// Mean condition number of the limiting NTK against depth.
    SweepDepth {
        /// Single activation; the eight canonical ones when omitted.
        #[arg(long, allow_negative_numbers = true, requires = "b")]
        a: Option<f64>,
        #[arg(long, allow_negative_numbers = true, requires = "a")]
        b: Option<f64>,
        /// Sweep the eight activations with delta = 1/8, 2/8, ..., 1.
        #[arg(long, conflicts_with_all = ["a", "b"])]
        all_deltas: bool,
        #[arg(long, default_value_t = 32)]
        n: usize,
        #[arg(long, default_value_t = 16)]
        dim: usize,
        /// Number of datasets averaged.
        #[arg(long, default_value_t = 100)]
        seeds: usize,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        #[arg(long)]
        bias: Option<f64>,
        /// First depth.
        #[arg(long, default_value_t = 4)]
        depth: usize,
        /// Last depth.
        #[arg(long, default_value_t = 64)]
        depth_max: usize,
        #[command(flatten)]
        output: Output,
    },
    /// Spectrum of the limiting NTK with the reference quantities and exact
    /// inequalities.
    Spectrum {
        #[command(flatten)]
        act: Activation,
        #[command(flatten)]
        source: DataSource,
        #[arg(long, default_value_t = 64)]
        depth: usize,
        /// Output width m_l.
        #[arg(long, default_value_t = 1)]
        ml: usize,
        #[command(flatten)]
        output: Output,
    },
    /// Scan the depth-propagation estimate and the two-sided bound on u_k.
    VerifyBounds {
        /// Single activation; the eight canonical ones when omitted.
        #[arg(long, allow_negative_numbers = true, requires = "b")]
        a: Option<f64>,
        #[arg(long, allow_negative_numbers = true, requires = "a")]
        b: Option<f64>,
        #[arg(long, conflicts_with_all = ["a", "b"])]
        all_deltas: bool,
        /// Deepest layer of the u_k scan.
        #[arg(long, default_value_t = 1000)]
        depth_max: usize,
        /// Deepest layer of the propagation scan.
        #[arg(long, default_value_t = 10_000)]
        propagation_depth: usize,
        #[command(flatten)]
        output: Output,
    },
    /// Convergence of the finite-width NTK to the limiting one.
    Empirical {
        #[command(flatten)]
        act: Activation,
        #[arg(long, default_value_t = 4)]
        n: usize,
        #[arg(long, default_value_t = 8)]
        dim: usize,
        #[arg(long, default_value_t = 3)]
        depth: usize,
        /// Hidden widths.
        #[arg(long, value_delimiter = ',', default_value = "64,256,1024,4096")]
        widths: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        #[command(flatten)]
        output: Output,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
