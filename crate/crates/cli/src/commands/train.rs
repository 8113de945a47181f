use std::path::PathBuf;

use clap::Args;

use icla_core::nn::{classification_accuracy, loss_and_grad, train_map, AsamConfig, TrainConfig};
use icla_core::{data, Result, Task};

use crate::format;

#[derive(Args)]
pub struct TrainArgs {
    /// Labeled training CSV
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated layer widths including input and output, e.g. 2,20,20,2
    #[arg(long, value_delimiter = ',')]
    pub arch: Vec<usize>,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub lr_final: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 0.0)]
    pub fisher_penalty_alpha: f64,
    /// Train with ASAM (two-step adaptive sharpness-aware updates)
    #[arg(long)]
    pub asam: bool,
    #[arg(long, default_value_t = 0.5)]
    pub asam_rho: f64,
    #[arg(long, default_value_t = 0.01)]
    pub asam_eta: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub out: PathBuf,
}

impl TrainArgs {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr_initial: self.lr,
            lr_final: self.lr_final,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            fisher_penalty_alpha: self.fisher_penalty_alpha,
            asam: self.asam.then_some(AsamConfig { rho: self.asam_rho, eta: self.asam_eta }),
            seed: self.seed,
        }
    }
}

pub fn run(args: TrainArgs) -> Result<()> {
    let ds = data::load_csv(&args.data)?;
    let cfg = args.train_config();
    let model = train_map(&ds, &args.arch, &cfg)?;
    format::save_model(&model, Some(args.seed), &args.out)?;
    let (loss, _) = loss_and_grad(&model, &ds, cfg.weight_decay)?;
    match model.task() {
        Task::Classification { .. } => {
            let acc = classification_accuracy(&model, &ds)?;
            println!(
                "wrote {} (train loss {loss:.6}, accuracy {acc:.4})",
                args.out.display()
            );
        }
        Task::Regression => {
            println!("wrote {} (train loss {loss:.6})", args.out.display());
        }
    }
    Ok(())
}
