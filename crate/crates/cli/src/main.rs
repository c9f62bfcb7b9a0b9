//! `ifedavg` — experiment driver for the tabular federated-learning lab.
//!
//! Subcommands: `train` (benchmark a dataset), `report` (heatmaps and
//! significance flags from a finished run), `synthetic` (end-to-end shift
//! detection on a generated federation), `summarize` (roll up a metrics CSV).
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or config error.

mod commands;

use clap::{Args, Parser, Subcommand};
use ifedavg_core::Error;

#[derive(Parser)]
#[command(name = "ifedavg", version, about = "Federated learning lab for tabular data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one or more algorithms on a CSV dataset and write artifacts.
    Train(TrainArgs),
    /// Build heatmap/flag reports from a finished run directory.
    Report(ReportArgs),
    /// Generate a synthetic federation, inject shifts, train, and report
    /// whether each injected mutation was detected.
    Synthetic(SyntheticArgs),
    /// Aggregate a metrics CSV into mean/worst/seed-SD summaries.
    Summarize(SummarizeArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset CSV (header row; empty cells are missing values).
    #[arg(long)]
    dataset: Option<std::path::PathBuf>,
    /// Optional key=value config file; command-line flags win.
    #[arg(long)]
    config: Option<std::path::PathBuf>,
    /// Optional schema file (column kinds, client/target column names).
    #[arg(long)]
    schema: Option<std::path::PathBuf>,
    /// Comma-separated list of algorithms to run (default: ifedavg, or the
    /// config file's choice).
    #[arg(long)]
    algorithm: Option<String>,
    #[arg(long)]
    rounds: Option<usize>,
    /// Comma-separated seed list.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    /// APFL mixing coefficient.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    /// Output-layer personalization: none|bias|weight|both|scalar-weight.
    #[arg(long)]
    fout: Option<String>,
    /// per-client|global.
    #[arg(long)]
    standardize: Option<String>,
    /// Fit standardization statistics on training rows only.
    #[arg(long)]
    fit_train_only: bool,
    /// Shift spec: inline mutations (`;`-separated) or `@file`.
    #[arg(long)]
    inject: Option<String>,
    /// Evaluate every k rounds into trace.csv.
    #[arg(long)]
    eval_every: Option<usize>,
    /// Client-phase worker threads (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory (default: `out`, or the config file's choice).
    #[arg(long)]
    out: Option<std::path::PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// A finished `<out>/<seed>/<algorithm>` run directory, or the output
    /// root when combined with --average-seeds.
    #[arg(long)]
    run: std::path::PathBuf,
    /// Layer to report (b_in|w_in|b_out|w_out|all).
    #[arg(long, default_value = "all")]
    layer: String,
    /// Significance threshold in standard deviations.
    #[arg(long, default_value_t = 2.0)]
    threshold: f64,
    /// Run the target-flip check on the w_out layer.
    #[arg(long)]
    detect_flip: bool,
    /// Average personal layers across all seeds under the output root
    /// (requires --algorithm to locate the runs).
    #[arg(long)]
    average_seeds: bool,
    /// Algorithm name, used with --average-seeds.
    #[arg(long)]
    algorithm: Option<String>,
    /// Report directory (defaults to `<run>/report`).
    #[arg(long)]
    out: Option<std::path::PathBuf>,
}

#[derive(Args)]
struct SyntheticArgs {
    #[arg(long, default_value_t = 8)]
    clients: usize,
    #[arg(long, default_value_t = 2000)]
    samples: usize,
    #[arg(long, default_value_t = 10)]
    features: usize,
    /// Comma-separated label-model coefficients (default: all ones).
    #[arg(long)]
    weights: Option<String>,
    /// Comma-separated indices of features emitted as binary indicators.
    #[arg(long)]
    binary_features: Option<String>,
    /// Shift spec: inline mutations (`;`-separated) or `@file`.
    #[arg(long)]
    inject: Option<String>,
    #[arg(long, default_value_t = 200)]
    rounds: usize,
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Output-layer personalization: none|bias|weight|both|scalar-weight.
    #[arg(long)]
    fout: Option<String>,
    #[arg(long, default_value_t = 2.0)]
    threshold: f64,
    #[arg(long)]
    threads: Option<usize>,
    /// Also write training artifacts and heatmap reports here.
    #[arg(long)]
    out: Option<std::path::PathBuf>,
}

#[derive(Args)]
struct SummarizeArgs {
    /// A metrics CSV produced by `train` or `synthetic`.
    #[arg(long)]
    metrics: std::path::PathBuf,
    /// Where to write the summary CSV (defaults next to the input).
    #[arg(long)]
    out: Option<std::path::PathBuf>,
}

fn main() {
    // die quietly when stdout is a closed pipe (e.g. piped into `head`)
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => commands::train(args),
        Command::Report(args) => commands::report(args),
        Command::Synthetic(args) => commands::synthetic(args),
        Command::Summarize(args) => commands::summarize(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        let code = match e {
            Error::Config(_) => 2,
            _ => 1,
        };
        std::process::exit(code);
    }
}
