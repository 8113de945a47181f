use std::path::PathBuf;

use clap::{Args, Subcommand};

use icla_core::{data, Result};

#[derive(Args)]
pub struct GenDataArgs {
    #[command(subcommand)]
    pub generator: Generator,
}

#[derive(Subcommand)]
pub enum Generator {
    /// Two interleaved semicircle classes with Gaussian noise
    HalfMoons {
        #[arg(long, default_value_t = 400)]
        n: usize,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// y = sin(x) + noise regression data
    Sinusoid {
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long, default_value_t = -4.0, allow_hyphen_values = true)]
        x_min: f64,
        #[arg(long, default_value_t = 4.0)]
        x_max: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Gaussian class clusters with separability controlled by radius/sigma
    Blobs {
        #[arg(long, default_value_t = 5)]
        classes: usize,
        #[arg(long, default_value_t = 200)]
        n_per_class: usize,
        #[arg(long, default_value_t = 4.0)]
        radius: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Unlabeled outlier ring around the half-moons centroid
    Outliers {
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 3.0)]
        radius: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Unlabeled ring/shell around the origin (far-OOD for blobs)
    Ring {
        #[arg(long, default_value_t = 100)]
        k: usize,
        #[arg(long, default_value_t = 9.0)]
        radius: f64,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        out: PathBuf,
    },
}

pub fn run(args: GenDataArgs) -> Result<()> {
    let (path, rows) = match args.generator {
        Generator::HalfMoons { n, noise, seed, out } => {
            let ds = data::gen_half_moons(n, noise, seed)?;
            data::save_csv(&ds, &out)?;
            (out, ds.len())
        }
        Generator::Sinusoid { n, noise, x_min, x_max, seed, out } => {
            let ds = data::gen_sinusoid(n, noise, (x_min, x_max), seed)?;
            data::save_csv(&ds, &out)?;
            (out, ds.len())
        }
        Generator::Blobs { classes, n_per_class, radius, sigma, dim, seed, out } => {
            let ds = data::gen_blobs(classes, n_per_class, radius, sigma, dim, seed)?;
            data::save_csv(&ds, &out)?;
            (out, ds.len())
        }
        Generator::Outliers { k, radius, seed, out } => {
            let pts = data::gen_outliers(k, radius, seed)?;
            data::save_features_csv(&pts, &out)?;
            (out, pts.nrows())
        }
        Generator::Ring { k, radius, dim, seed, out } => {
            let center = vec![0.0; dim];
            let pts = data::gen_ring(k, radius, &center, seed)?;
            data::save_features_csv(&pts, &out)?;
            (out, pts.nrows())
        }
    };
    println!("wrote {} ({rows} rows)", path.display());
    Ok(())
}
