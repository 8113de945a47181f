use std::path::PathBuf;

use clap::Args;

use icla_core::{data, MarglikConfig, Result};

use crate::format;
use crate::pipeline::{fit_posterior, Method};

#[derive(Args)]
pub struct FitArgs {
    /// Model file from `train`
    #[arg(long)]
    pub model: PathBuf,
    /// Labeled validation CSV for curvature fitting and lambda selection
    #[arg(long)]
    pub val: PathBuf,
    /// One of llla-ef, llla-ggn, llla-kfac, icla, icla-zero
    #[arg(long)]
    pub method: String,
    #[arg(long, default_value_t = 0.1)]
    pub marglik_lr: f64,
    #[arg(long, default_value_t = 100)]
    pub marglik_steps: usize,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_init: f64,
    /// Batch size of the curvature fit
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(short, long)]
    pub out: PathBuf,
}

pub fn run(args: FitArgs) -> Result<()> {
    let (model, _) = format::load_model(&args.model)?;
    let val = data::load_csv(&args.val)?;
    let method: Method = args.method.parse()?;
    let mcfg = MarglikConfig {
        lr: args.marglik_lr,
        steps: args.marglik_steps,
        lambda_init: args.lambda_init,
    };
    let (posterior, outcome) = fit_posterior(&model, &val, method, &mcfg, args.batch_size)?;
    format::save_posterior(&posterior, method.as_str(), Some(&outcome), &args.out)?;
    let first = outcome.evidence.first().expect("non-empty trajectory");
    let last = outcome.evidence.last().expect("non-empty trajectory");
    println!(
        "wrote {} (method {}, lambda {:.6}, evidence {first:.4} -> {last:.4} over {} steps, {} clamp events)",
        args.out.display(),
        method.as_str(),
        posterior.lambda(),
        outcome.evidence.len() - 1,
        outcome.clamp_events
    );
    Ok(())
}
