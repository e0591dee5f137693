//! `mslca` — robust multiple-set linear canonical analysis from the shell.
//!
//! Subcommands cover the whole pipeline: loss constants, synthetic data,
//! robust estimation, the canonical decomposition, influence diagnostics,
//! the non-correlation test, and a seeded Monte Carlo simulator. All
//! randomness is derived from `--seed`, so identical invocations produce
//! byte-identical output, independent of thread count.
//!
//! Exit codes: 0 success; 1 domain error (singular data, degenerate
//! spectrum, …); 2 usage or I/O error.

mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

/// Application-level error split by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Estimation/analysis failure on valid input (exit 1).
    Domain(String),
    /// Missing/unreadable/malformed files or arguments (exit 2).
    Io(String),
}

#[derive(Parser)]
#[command(
    name = "mslca",
    version,
    about = "Robust multiple-set linear canonical analysis",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Gaussian,
    Student,
}

#[derive(Clone, Copy, ValueEnum)]
enum SimMode {
    Null,
    Power,
}

#[derive(Clone, Copy, ValueEnum)]
enum IfWhat {
    /// Influence on the canonical matrix T.
    #[value(name = "T")]
    T,
    /// Influence on the j-th canonical coefficient.
    #[value(name = "rho")]
    Rho,
    /// Influence on the j-th coefficient direction.
    #[value(name = "alpha")]
    Alpha,
    /// Influence on the scatter functional.
    #[value(name = "V")]
    V,
}

#[derive(Subcommand)]
enum Command {
    /// Tune the loss for a dimension and print c, b0, gamma1, gamma2, beta3.
    Constants {
        /// Ambient dimension q.
        #[arg(long)]
        dim: usize,
        /// Breakdown point in (0, 0.5].
        #[arg(long, default_value_t = 0.5)]
        breakdown: f64,
        /// Output file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample synthetic data from the independent-blocks model.
    Generate {
        /// Block dimensions, comma-separated (e.g. 2,3).
        #[arg(long, value_delimiter = ',')]
        blocks: Vec<usize>,
        #[arg(long, value_enum, default_value = "gaussian")]
        family: FamilyArg,
        /// Student degrees of freedom (required with --family student).
        #[arg(long)]
        df: Option<f64>,
        /// Number of observations.
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Contamination as `eps,point-file`; the file holds one
        /// comma-separated q-vector. Rows are replaced by the point
        /// independently with probability eps.
        #[arg(long)]
        contaminate: Option<String>,
        /// Output CSV (header x1..xq).
        #[arg(long)]
        out: PathBuf,
    },
    /// Robust location/scatter fit of a CSV sample (treated as one block).
    Estimate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        breakdown: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Elementary subsample candidates.
        #[arg(long, default_value_t = 500)]
        subsamples: usize,
        /// Candidates refined to convergence.
        #[arg(long, default_value_t = 10)]
        keep_best: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full canonical analysis: robust fit plus the spectral solution.
    Mslca {
        #[arg(long)]
        input: PathBuf,
        /// Block dimensions, comma-separated; must sum to the column count.
        #[arg(long, value_delimiter = ',')]
        blocks: Vec<usize>,
        #[arg(long, default_value_t = 0.5)]
        breakdown: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        subsamples: usize,
        #[arg(long, default_value_t = 10)]
        keep_best: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Analytic influence of a point on the fitted functionals.
    Influence {
        /// Model file: JSON {"v": [[..]], "blocks": [..], "breakdown": r}.
        #[arg(long)]
        model: PathBuf,
        /// Evaluation point, comma-separated (deviation from the center).
        #[arg(long, allow_hyphen_values = true, conflicts_with = "bound")]
        x: Option<String>,
        /// Component index (1-based) for --what rho|alpha.
        #[arg(long, default_value_t = 1)]
        j: usize,
        /// Which influence function to evaluate.
        #[arg(long, value_enum, default_value = "T")]
        what: IfWhat,
        /// Print the sup-norm ceiling of the T influence instead.
        #[arg(long)]
        bound: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Chi-square test of mutual non-correlation between the blocks.
    Test {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_delimiter = ',')]
        blocks: Vec<usize>,
        #[arg(long, default_value_t = 0.5)]
        breakdown: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        subsamples: usize,
        #[arg(long, default_value_t = 10)]
        keep_best: usize,
        /// Normalize with the literal first-moment formula on raw norms
        /// instead of the variance-consistent plug-in.
        #[arg(long)]
        kappa_raw: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo calibration/power runs of the test; CSV out.
    Simulate {
        #[arg(long, value_enum)]
        mode: SimMode,
        #[arg(long, value_delimiter = ',')]
        blocks: Vec<usize>,
        /// Observations per replicate.
        #[arg(long)]
        n: usize,
        /// Number of replicates.
        #[arg(long)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.5)]
        breakdown: f64,
        /// Lighter fit settings than `estimate`: simulation replicates are
        /// clean by construction and don't need deep subsampling.
        #[arg(long, default_value_t = 50)]
        subsamples: usize,
        #[arg(long, default_value_t = 3)]
        keep_best: usize,
        /// Worker threads; defaults to MSLCA_THREADS or all cores. Results
        /// do not depend on this value.
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Domain(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
