//! Subcommand implementations and the clap command tree.

mod analyze;
mod eval_ood;
mod fit;
mod gen_data;
mod sweep;
mod train;

use std::path::Path;

use clap::{Parser, Subcommand};
use ndarray::Array2;

use icla_core::{data, Error, Result};

pub use analyze::AnalyzeArgs;
pub use eval_ood::EvalOodArgs;
pub use fit::FitArgs;
pub use gen_data::GenDataArgs;
pub use sweep::SweepArgs;
pub use train::TrainArgs;

/// Uncertainty-estimation toolkit: last-layer Laplace posteriors with
/// interchangeable curvature (including identity curvature), OOD and
/// calibration evaluation, and analysis sweeps.
#[derive(Parser)]
#[command(name = "icla-kit", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate synthetic datasets and OOD sets as CSV
    GenData(GenDataArgs),
    /// Train an MLP by MAP estimation and write a model file
    Train(TrainArgs),
    /// Fit a posterior (curvature + marginal-likelihood lambda) on validation data
    Fit(FitArgs),
    /// Score ID/OOD data, compute AUROC and calibration, write a JSON report
    EvalOod(EvalOodArgs),
    /// Fit the diagonal empirical Fisher and export its spectrum
    Analyze(AnalyzeArgs),
    /// Run a lambda / fisher-alpha / separability sweep over seeds
    Sweep(SweepArgs),
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(args) => gen_data::run(args),
        Command::Train(args) => train::run(args),
        Command::Fit(args) => fit::run(args),
        Command::EvalOod(args) => eval_ood::run(args),
        Command::Analyze(args) => analyze::run(args),
        Command::Sweep(args) => sweep::run(args),
    }
}

/// Loads an OOD feature matrix from either an unlabeled features CSV or a
/// labeled dataset CSV (labels ignored).
pub(crate) fn load_any_features(path: &Path) -> Result<Array2<f64>> {
    let head = {
        let text = std::fs::read_to_string(path)?;
        text.lines().next().unwrap_or_default().to_string()
    };
    if head.trim_end().ends_with(",label") {
        Ok(data::load_csv(path)?.features().clone())
    } else {
        data::load_features_csv(path)
    }
}

/// One float per line; blank lines are skipped.
pub(crate) fn read_score_file(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let v: f64 = trimmed.parse().map_err(|_| Error::CsvParse {
            line: i as u64 + 1,
            message: format!("cannot parse score '{trimmed}'"),
        })?;
        out.push(v);
    }
    if out.is_empty() {
        return Err(Error::Data(format!("score file {} is empty", path.display())));
    }
    Ok(out)
}

pub(crate) fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}
