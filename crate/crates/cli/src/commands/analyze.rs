use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use icla_core::curvature::{fit_diag_ef, spectrum};
use icla_core::{data, Result};

use crate::format;

#[derive(Args)]
pub struct AnalyzeArgs {
    /// Model file from `train`
    #[arg(long)]
    pub model: PathBuf,
    /// Labeled CSV the Fisher is fitted on
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    /// Eigenvalue CSV (index,eigenvalue), descending
    #[arg(long)]
    pub out_csv: PathBuf,
    /// Summary JSON (mean eigenvalue, top-1% trace mass)
    #[arg(long)]
    pub out_json: PathBuf,
}

#[derive(Serialize)]
struct SpectrumFile {
    schema_version: u32,
    kind: String,
    curvature: String,
    d: usize,
    n_samples: usize,
    mean_eigenvalue: f64,
    tail_mass_top1pct: f64,
}

pub fn run(args: AnalyzeArgs) -> Result<()> {
    let (model, _) = format::load_model(&args.model)?;
    let ds = data::load_csv(&args.data)?;
    let est = fit_diag_ef(&model, &ds, args.batch_size)?;
    let stats = spectrum(&est)?;
    let mut csv = BufWriter::new(File::create(&args.out_csv)?);
    stats.write_csv(&mut csv)?;
    let summary = SpectrumFile {
        schema_version: format::SCHEMA_VERSION,
        kind: "spectrum".into(),
        curvature: "diag_ef".into(),
        d: est.d,
        n_samples: est.n_samples,
        mean_eigenvalue: stats.mean_eigenvalue,
        tail_mass_top1pct: stats.tail_mass_top1pct,
    };
    format::write_json(&summary, &args.out_json)?;
    println!(
        "wrote {} ({} eigenvalues) and {} (mean {:.6e}, top-1% mass {:.4})",
        args.out_csv.display(),
        stats.eigenvalues.len(),
        args.out_json.display(),
        stats.mean_eigenvalue,
        stats.tail_mass_top1pct
    );
    Ok(())
}
