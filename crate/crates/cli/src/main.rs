//! `wtfbf`: synthesize weighted tensorized fractional Brownian textures and
//! check them against numerical oracles.
//!
//! Exit codes: 0 success, 2 invalid parameters or usage, 3 numerical
//! non-convergence, 4 I/O failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use wtfbf::io::OutputFormat;
use wtfbf::oracle::QuadratureSpec;
use wtfbf::{Error, FieldParams, GridSpec};

pub const EXIT_PARAM: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;
pub const EXIT_IO: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "wtfbf", version, about = "Weighted tensorized fractional Brownian field textures")]
pub struct Cli {
    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Synthesize fields and write them with a manifest.
    Generate(GenerateArgs),
    /// Moment table of a synthesized batch (field, increments, rescaled).
    Stats(StatsArgs),
    /// Quadrature and exact-law oracles, printed as JSON.
    #[command(subcommand)]
    Oracle(OracleCommand),
    /// Repeat the run recorded in a manifest into a new directory.
    Rerun(RerunArgs),
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    #[arg(long)]
    pub alpha: f64,
    #[arg(long)]
    pub hurst: f64,
    /// Operator-scaling exponent of the first axis; needs --beta2.
    #[arg(long, requires = "beta2")]
    pub beta1: Option<f64>,
    #[arg(long, requires = "beta1")]
    pub beta2: Option<f64>,
}

impl ModelArgs {
    pub fn params(&self) -> Result<FieldParams, Error> {
        let anisotropy = self.beta1.zip(self.beta2);
        Ok(wtfbf::validate(self.alpha, self.hurst, anisotropy)?)
    }
}

#[derive(Args, Debug, Clone)]
pub struct QuadArgs {
    #[arg(long, default_value_t = QuadratureSpec::default().octave_min, allow_negative_numbers = true)]
    pub octave_min: i32,
    #[arg(long, default_value_t = QuadratureSpec::default().octave_max, allow_negative_numbers = true)]
    pub octave_max: i32,
    #[arg(long, default_value_t = QuadratureSpec::default().nodes_per_cell)]
    pub nodes: usize,
    #[arg(long, default_value_t = QuadratureSpec::default().target_rel_tol)]
    pub tol: f64,
}

impl QuadArgs {
    pub fn spec(&self) -> Result<QuadratureSpec, Error> {
        let spec = QuadratureSpec {
            octave_min: self.octave_min,
            octave_max: self.octave_max,
            nodes_per_cell: self.nodes,
            target_rel_tol: self.tol,
        };
        spec.check()?;
        Ok(spec)
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormatArg {
    Raw,
    Pgm,
    Png,
}

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Raw => OutputFormat::Raw,
            FormatArg::Pgm => OutputFormat::Pgm,
            FormatArg::Png => OutputFormat::Png,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Grid resolution M; fields have (M+1)² points.
    #[arg(long, default_value_t = 512)]
    pub size: usize,
    /// Base seed; sample i uses a seed derived from it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub samples: u64,
    #[arg(long, env = "WTFBF_OUT_DIR", default_value = "wtfbf-out")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Raw)]
    pub format: FormatArg,
}

impl GenerateArgs {
    pub fn grid(&self) -> Result<GridSpec, Error> {
        Ok(GridSpec::new(self.size)?)
    }
}

#[derive(Args, Debug, Clone)]
pub struct StatsArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 512)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub samples: u64,
    /// Increment lag in grid units (default: M/2 on both axes).
    #[arg(long, num_args = 2, value_names = ["L1", "L2"])]
    pub lag: Option<Vec<usize>>,
    /// Dyadic rescaling factor a of the third population.
    #[arg(long, default_value_t = 2)]
    pub rescale: usize,
    /// Add exact-law and quadrature columns.
    #[arg(long)]
    pub oracle: bool,
    #[command(flatten)]
    pub quad: QuadArgs,
    #[arg(long, env = "WTFBF_OUT_DIR", default_value = "wtfbf-out")]
    pub out: PathBuf,
}

#[derive(Subcommand, Debug)]
pub enum OracleCommand {
    /// E[X_x X_y] by quadrature.
    Cov {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, num_args = 2, allow_negative_numbers = true, required = true)]
        x: Vec<f64>,
        /// Second point (default: x).
        #[arg(long, num_args = 2, allow_negative_numbers = true)]
        y: Option<Vec<f64>>,
        #[command(flatten)]
        quad: QuadArgs,
    },
    /// E|ΔX_h|² by quadrature.
    Inc {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, num_args = 2, allow_negative_numbers = true, required = true)]
        h: Vec<f64>,
        #[command(flatten)]
        quad: QuadArgs,
    },
    /// Constant of the increment-variance bound.
    C1 {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        quad: QuadArgs,
    },
    /// Exact variance (or covariance) of the generator output at grid indices.
    Discrete {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 512)]
        size: usize,
        #[arg(long, num_args = 2, required = true)]
        point: Vec<usize>,
        #[arg(long, num_args = 2)]
        with: Option<Vec<usize>>,
    },
    /// Fractional Brownian sheet covariance.
    Fbs {
        #[arg(long)]
        hurst: f64,
        #[arg(long, num_args = 2, allow_negative_numbers = true, required = true)]
        x: Vec<f64>,
        #[arg(long, num_args = 2, allow_negative_numbers = true)]
        y: Option<Vec<f64>>,
        #[command(flatten)]
        quad: QuadArgs,
    },
    /// One exact Gaussian draw on the n×n grid {1/n, ..., 1}².
    Exact {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 5)]
        grid: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        quad: QuadArgs,
    },
}

#[derive(Args, Debug, Clone)]
pub struct RerunArgs {
    pub manifest: PathBuf,
    #[arg(long, env = "WTFBF_OUT_DIR", default_value = "wtfbf-out")]
    pub out: PathBuf,
}

pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Param(_) | Error::InvalidInput(_) | Error::LagOutOfRange { .. } | Error::RescaleFactor { .. } | Error::OnAxis { .. } => {
            EXIT_PARAM
        }
        Error::NonConvergence { .. } | Error::Divergent(_) | Error::NotFactorizable { .. } => EXIT_NUMERIC,
        Error::Io(_) | Error::Image(_) | Error::Json(_) | Error::Format(_) => EXIT_IO,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_PARAM);
        }
    }
    let arguments = commands::recorded_arguments(std::env::args().skip(1));
    match commands::run(cli.command, arguments) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
