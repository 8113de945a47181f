use std::path::PathBuf;

use clap::Args;

use icla_core::metrics::auroc;
use icla_core::{data, Error, Result};

use crate::commands::{file_stem, load_any_features, read_score_file};
use crate::format;
use crate::pipeline::{evaluate, OodSource, Score};
use crate::report::ReportFile;

#[derive(Args)]
pub struct EvalOodArgs {
    /// Model file from `train`
    #[arg(long)]
    pub model: PathBuf,
    /// Posterior file from `fit`; omit to evaluate the plain MAP softmax
    #[arg(long)]
    pub posterior: Option<PathBuf>,
    /// Labeled ID test CSV
    #[arg(long)]
    pub id_test: PathBuf,
    /// OOD feature CSV; pass once (single source) or twice (near, far)
    #[arg(long = "ood", required = true)]
    pub ood: Vec<PathBuf>,
    /// OOD score: entropy (probit-adjusted, default), raw-entropy
    /// (MAP softmax), or max-prob (1 - max probability)
    #[arg(long, default_value = "entropy")]
    pub score: String,
    /// ECE bin count
    #[arg(long, default_value_t = 15)]
    pub bins: usize,
    /// Treat --id-test and --ood as plain score files (one float per line)
    #[arg(long)]
    pub scores_from: bool,
    /// Seed recorded in the report
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Method label override for the report
    #[arg(long)]
    pub label: Option<String>,
    #[arg(short, long)]
    pub out: PathBuf,
}

pub fn run(args: EvalOodArgs) -> Result<()> {
    if args.ood.is_empty() || args.ood.len() > 2 {
        return Err(Error::InvalidParameter(format!(
            "pass --ood once (single source) or twice (near, far), got {}",
            args.ood.len()
        )));
    }
    let source_names: Vec<String> = args.ood.iter().map(|p| file_stem(p)).collect();

    if args.scores_from {
        let id_scores = read_score_file(&args.id_test)?;
        let mut aurocs = Vec::new();
        for path in &args.ood {
            aurocs.push(auroc(&id_scores, &read_score_file(path)?)?);
        }
        let report = ReportFile::scores_only(
            args.label.unwrap_or_else(|| "scores".into()),
            args.seed,
            &aurocs,
            source_names,
        );
        format::write_json(&report, &args.out)?;
        println!("wrote {} (auroc {:?})", args.out.display(), aurocs);
        return Ok(());
    }

    let (model, _) = format::load_model(&args.model)?;
    let (posterior, method_name) = match &args.posterior {
        Some(path) => {
            let (post, spec) = format::load_posterior(path)?;
            if post.d() != model.last_layer_dim() {
                return Err(Error::ShapeMismatch(format!(
                    "posterior dimension {} != model last-layer dimension {}",
                    post.d(),
                    model.last_layer_dim()
                )));
            }
            let w = model.last_layer_flat();
            let drift = post
                .w_map()
                .iter()
                .zip(w.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if drift > 1e-12 {
                return Err(Error::Data(format!(
                    "posterior was fitted on different parameters (max deviation {drift:e})"
                )));
            }
            (Some(post), spec.method)
        }
        None => (None, "map".to_string()),
    };
    let method_name = args.label.unwrap_or(method_name);
    let id_test = data::load_csv(&args.id_test)?;
    let score: Score = args.score.parse()?;
    let mut sources = Vec::new();
    for path in &args.ood {
        sources.push(OodSource { name: file_stem(path), features: load_any_features(path)? });
    }
    let report = evaluate(
        &model,
        posterior.as_ref(),
        &id_test,
        &sources,
        score,
        args.bins,
        &method_name,
        args.seed,
    )?;
    let file = ReportFile::from_eval(&report, source_names, Vec::new());
    format::write_json(&file, &args.out)?;
    let auroc_text = match (report.auroc, report.near_auroc, report.far_auroc) {
        (Some(a), _, _) => format!("auroc {a:.4}"),
        (_, Some(n), Some(f)) => format!("near {n:.4} far {f:.4}"),
        _ => String::new(),
    };
    println!(
        "wrote {} (method {method_name}, {auroc_text}, ece {:.4}, nll {:.4}, brier {:.4}, mccs {:.4})",
        args.out.display(),
        report.ece,
        report.nll,
        report.brier,
        report.mccs
    );
    Ok(())
}
