//! OOD detection and calibration metrics, the MCCS separability measure, and
//! the ICLA-vs-LLLA performance gap. All functions here are pure.

use ndarray::ArrayView2;

use crate::curvature::SpectrumStats;
use crate::error::{Error, Result};

/// Pair-count threshold below which AUROC enumerates all pairs exactly;
/// larger inputs use the tie-corrected rank-sum formula.
const AUROC_PAIR_LIMIT: usize = 1_000_000;

/// Result bundle of one seeded evaluation run.
#[derive(Clone, Debug)]
pub struct EvalReport {
    pub method_name: String,
    /// AUROC for a single OOD source.
    pub auroc: Option<f64>,
    pub near_auroc: Option<f64>,
    pub far_auroc: Option<f64>,
    pub ece: f64,
    pub nll: f64,
    pub brier: f64,
    pub mccs: f64,
    /// Prior precision of the evaluated posterior (absent for plain MAP).
    pub lambda: Option<f64>,
    pub seed: u64,
    pub spectrum: Option<SpectrumStats>,
}

fn check_scores(scores: &[f64], what: &str) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::InvalidParameter(format!("{what} scores are empty")));
    }
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("non-finite {what} score")));
    }
    Ok(())
}

/// Probability that a random OOD score exceeds a random ID score, ties
/// counting one half (OOD is the positive class; higher score = more OOD).
pub fn auroc(id_scores: &[f64], ood_scores: &[f64]) -> Result<f64> {
    check_scores(id_scores, "id")?;
    check_scores(ood_scores, "ood")?;
    let (n, m) = (id_scores.len(), ood_scores.len());
    if n.saturating_mul(m) <= AUROC_PAIR_LIMIT {
        let mut wins = 0.0;
        for &o in ood_scores {
            for &i in id_scores {
                if o > i {
                    wins += 1.0;
                } else if o == i {
                    wins += 0.5;
                }
            }
        }
        Ok(wins / (n as f64 * m as f64))
    } else {
        // Mann-Whitney rank sum with average ranks for ties
        let mut all: Vec<(f64, bool)> = id_scores
            .iter()
            .map(|&s| (s, false))
            .chain(ood_scores.iter().map(|&s| (s, true)))
            .collect();
        all.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite scores"));
        let mut rank_sum_ood = 0.0;
        let mut i = 0;
        while i < all.len() {
            let mut j = i;
            while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
                j += 1;
            }
            // ranks are 1-based; tied values share the average rank
            let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
            for entry in &all[i..=j] {
                if entry.1 {
                    rank_sum_ood += avg_rank;
                }
            }
            i = j + 1;
        }
        let u = rank_sum_ood - (m as f64 * (m as f64 + 1.0)) / 2.0;
        Ok(u / (n as f64 * m as f64))
    }
}

fn check_probs_labels(probs: &ArrayView2<f64>, labels: &[usize]) -> Result<()> {
    if probs.nrows() == 0 {
        return Err(Error::InvalidParameter("no predictions".into()));
    }
    if probs.nrows() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} probability rows but {} labels",
            probs.nrows(),
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= probs.ncols()) {
        return Err(Error::Data(format!(
            "label {bad} out of range for {} classes",
            probs.ncols()
        )));
    }
    if probs.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite probability".into()));
    }
    Ok(())
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Expected calibration error with equal-width confidence bins
/// ((t-1)/T, t/T]; empty bins contribute zero.
pub fn ece(probs: ArrayView2<f64>, labels: &[usize], n_bins: usize) -> Result<f64> {
    check_probs_labels(&probs, labels)?;
    if n_bins == 0 {
        return Err(Error::InvalidParameter("n_bins must be >= 1".into()));
    }
    let n = probs.nrows();
    let mut bin_count = vec![0usize; n_bins];
    let mut bin_conf = vec![0.0; n_bins];
    let mut bin_acc = vec![0.0; n_bins];
    for (i, row) in probs.rows().into_iter().enumerate() {
        let row = row.to_vec();
        let pred = argmax(&row);
        let conf = row[pred];
        // smallest t with conf <= t/T, evaluated with the same division the
        // bin edges are defined by
        let mut bin = n_bins - 1;
        for t in 1..=n_bins {
            if conf <= t as f64 / n_bins as f64 {
                bin = t - 1;
                break;
            }
        }
        bin_count[bin] += 1;
        bin_conf[bin] += conf;
        if pred == labels[i] {
            bin_acc[bin] += 1.0;
        }
    }
    let mut total = 0.0;
    for t in 0..n_bins {
        if bin_count[t] > 0 {
            let w = bin_count[t] as f64 / n as f64;
            let acc = bin_acc[t] / bin_count[t] as f64;
            let conf = bin_conf[t] / bin_count[t] as f64;
            total += w * (acc - conf).abs();
        }
    }
    Ok(total)
}

/// Mean negative log probability of the true class, floored at 1e-12.
pub fn nll(probs: ArrayView2<f64>, labels: &[usize]) -> Result<f64> {
    check_probs_labels(&probs, labels)?;
    let mut total = 0.0;
    for (i, row) in probs.rows().into_iter().enumerate() {
        total -= row[labels[i]].max(1e-12).ln();
    }
    Ok(total / probs.nrows() as f64)
}

/// Mean squared distance between the probability vector and the one-hot
/// label (summed over classes).
pub fn brier(probs: ArrayView2<f64>, labels: &[usize]) -> Result<f64> {
    check_probs_labels(&probs, labels)?;
    let mut total = 0.0;
    for (i, row) in probs.rows().into_iter().enumerate() {
        for (c, &p) in row.iter().enumerate() {
            let y = if c == labels[i] { 1.0 } else { 0.0 };
            total += (p - y) * (p - y);
        }
    }
    Ok(total / probs.nrows() as f64)
}

/// Mean class-wise cosine similarity: the average cosine over every pair of
/// feature vectors drawn from two different classes. Low values mean well
/// separated classes.
pub fn mccs(features: ArrayView2<f64>, labels: &[usize]) -> Result<f64> {
    if features.nrows() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} feature rows but {} labels",
            features.nrows(),
            labels.len()
        )));
    }
    let n_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    if n_classes < 2 {
        return Err(Error::InvalidParameter("mccs needs at least 2 classes".into()));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    if by_class.iter().any(|c| c.is_empty()) {
        return Err(Error::InvalidParameter(
            "mccs needs at least one feature per class".into(),
        ));
    }
    let norms: Vec<f64> = features
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    if norms.contains(&0.0) {
        return Err(Error::InvalidParameter("zero-norm feature vector".into()));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for a in 0..n_classes {
        for b in a + 1..n_classes {
            for &i in &by_class[a] {
                let fi = features.row(i);
                for &j in &by_class[b] {
                    let fj = features.row(j);
                    let dot: f64 = fi.iter().zip(fj.iter()).map(|(x, y)| x * y).sum();
                    total += dot / (norms[i] * norms[j]);
                    count += 1;
                }
            }
        }
    }
    Ok(total / count as f64)
}

/// Average of the near- and far-OOD AUROC differences between ICLA and LLLA.
pub fn performance_gap(icla_near: f64, icla_far: f64, llla_near: f64, llla_far: f64) -> f64 {
    ((icla_near - llla_near) + (icla_far - llla_far)) / 2.0
}
