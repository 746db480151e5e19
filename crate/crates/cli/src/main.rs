//! `fadecast` — experiment orchestration for the fading-prediction toolkit.
//!
//! Every output file is self-describing: `#`-prefixed header comments carry
//! the tool version, the full configuration, the seed, and (where relevant)
//! the model fingerprint. Outputs contain no timestamps, so identical
//! invocations produce byte-identical files.
//!
//! Exit codes: 0 success, 2 usage (clap), 3 I/O, 4 file/config format,
//! 5 model/table fingerprint mismatch, 6 numeric failure, 1 anything else.

mod commands;
mod config;
mod sweep;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "fadecast", version, about = "Fading channel prediction experiments")]
struct Cli {
    /// Worker threads for trial-parallel operations (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a correlated fading trace.
    GenChannel {
        /// Maximum Doppler frequency in Hz.
        #[arg(long)]
        fd: f64,
        /// Sample period in seconds.
        #[arg(long)]
        ts: f64,
        /// Number of samples.
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Output format: csv (idx,re,im) or bin (little-endian f64 pairs).
        #[arg(long, default_value = "csv")]
        format: String,
    },
    /// Train the channel predictor.
    Train {
        /// Flat key=value file overriding preset fields.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Hyperparameter preset: paper (published values) or desk.
        #[arg(long, default_value = "paper")]
        preset: String,
        /// Training Doppler in Hz.
        #[arg(long, default_value_t = 10.0)]
        fd: f64,
        /// Dataset size in sequences (default: twice the per-epoch visits).
        #[arg(long)]
        dataset_count: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output model file.
        #[arg(long)]
        out: PathBuf,
        /// Optional per-epoch loss report (CSV).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Predict future coefficients from a window of estimates.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Input CSV (idx,re,im) holding exactly the predictor window.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        n_preds: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the achieved-MSE lookup table.
    BuildLut {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// Horizon grid, range a:step:b or comma list.
        #[arg(long, default_value = "5:5:100")]
        n_grid: String,
        /// Doppler grid (Hz).
        #[arg(long, default_value = "5:5:100")]
        d_grid: String,
        /// SNR grid (dB).
        #[arg(long, default_value = "0:10:30")]
        snr_grid: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a BER/MSE sweep for one receiver scheme.
    RunBer {
        #[arg(long)]
        model: PathBuf,
        /// Lookup table (required by adaptive, datadriven, ar2).
        #[arg(long)]
        lut: Option<PathBuf>,
        /// Constellation: 4qam, 16qam, or 64qam.
        #[arg(long = "mod", default_value = "4qam")]
        modulation: String,
        #[arg(long)]
        fd: f64,
        /// Eb/N0 sweep in dB, range a:step:b or comma list.
        #[arg(long)]
        ebn0: String,
        /// Scheme: fixed, adaptive, datadriven, ar2, lmmse-li, perfect.
        #[arg(long)]
        scheme: String,
        /// Horizon for the fixed/perfect schemes; data count for lmmse-li.
        #[arg(long)]
        n_preds: Option<usize>,
        /// Data blocks per pilot block for the datadriven scheme.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 2000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the CPSC block-transmission sweep.
    RunCpsc {
        #[arg(long)]
        model: PathBuf,
        /// Frame length.
        #[arg(long, default_value_t = 128)]
        n: usize,
        /// Channel taps.
        #[arg(long, default_value_t = 2)]
        l: usize,
        /// Pilot sequences per frame.
        #[arg(long = "np", default_value_t = 2)]
        n_p: usize,
        #[arg(long, default_value_t = 50.0)]
        fd: f64,
        /// SNR sweep in dB, range a:step:b or comma list.
        #[arg(long)]
        snr: String,
        /// Use the true channel instead of predictions.
        #[arg(long, default_value_t = false)]
        perfect_csi: bool,
        #[arg(long, default_value_t = 2000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Merge sweep CSVs into one plot-ready table.
    Report {
        /// Input CSVs (all must share one schema).
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global().is_err() {
            eprintln!("fadecast: thread pool already initialized");
        }
    }
    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("fadecast: {err:#}");
            ExitCode::from(commands::exit_code_for(&err))
        }
    }
}
