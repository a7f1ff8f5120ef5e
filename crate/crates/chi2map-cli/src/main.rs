//! `chi2map`: feature maps for the chi-squared and exp-chi-squared kernels.
//!
//! Exit codes: 0 success, 2 validation error, 3 I/O error, 4 numerical
//! failure.

mod bench;
mod data;
mod learn;
mod util;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "chi2map", version, about = "Explicit feature maps for chi-squared kernels")]
struct Cli {
    /// Cap the worker thread pool (0 = one worker per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit direct-series parameters to the value distribution of a matrix.
    FitParams(data::FitParamsArgs),
    /// Embed histograms with the direct or Chebyshev series.
    Embed(data::EmbedArgs),
    /// Lift an embedded matrix with a random Fourier basis.
    Rf(data::RfArgs),
    /// Accumulate moments out-of-core and report the PCA spectrum.
    PcaFit(learn::PcaFitArgs),
    /// Train a ridge model end to end (single- or multi-kernel).
    Train(learn::TrainArgs),
    /// Score histograms with a trained model.
    Predict(learn::PredictArgs),
    /// Calibrate per-class scores to a common order statistic.
    Calibrate(learn::CalibrateArgs),
    /// Approximation error of the scalar chi-squared series vs term count.
    BenchChi2Error(bench::BenchChi2Args),
    /// Gram-matrix error of the full pipeline vs the exact exp-chi2 kernel.
    BenchKernelError(bench::BenchKernelArgs),
    /// Synthetic-task accuracy: approximate pipeline vs exact-Gram ridge.
    End2end(bench::End2endArgs),
}

fn main() {
    let cli = Cli::parse();
    if cli.threads > 0 {
        // ignore failure: the global pool may already be initialized
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global();
    }
    let result = match cli.command {
        Command::FitParams(args) => data::fit_params_cmd(args),
        Command::Embed(args) => data::embed_cmd(args),
        Command::Rf(args) => data::rf_cmd(args),
        Command::PcaFit(args) => learn::pca_fit_cmd(args),
        Command::Train(args) => learn::train_cmd(args),
        Command::Predict(args) => learn::predict_cmd(args),
        Command::Calibrate(args) => learn::calibrate_cmd(args),
        Command::BenchChi2Error(args) => bench::bench_chi2_cmd(args),
        Command::BenchKernelError(args) => bench::bench_kernel_cmd(args),
        Command::End2end(args) => bench::end2end_cmd(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
