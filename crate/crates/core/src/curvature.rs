//! Last-layer curvature estimates and their spectral statistics.
//!
//! Every fitter works on the feature-major last-layer parameter vector of
//! d = C*(L+1) entries (see the `nn` module docs) and uses the same batch
//! aggregation: per-batch sums of the per-sample quantity, then the mean over
//! batches. With `batch_size >= n` this reduces to the plain sum over the
//! dataset. K-FAC is the exception — its factors are means over samples.

use ndarray::{Array1, Array2};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::linalg;
use crate::nn::{check_compat, MlpModel};
use crate::Task;

/// Size cap for dense d x d oracles.
pub const ORACLE_DIM_LIMIT: usize = 4096;

/// Tag for the five curvature representations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CurvatureKind {
    DiagEf,
    DiagGgn,
    Kfac,
    FullEf,
    Zero,
}

impl CurvatureKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CurvatureKind::DiagEf => "diag_ef",
            CurvatureKind::DiagGgn => "diag_ggn",
            CurvatureKind::Kfac => "kfac",
            CurvatureKind::FullEf => "full_ef",
            CurvatureKind::Zero => "zero",
        }
    }
}

/// Representation-specific payload of a curvature estimate.
#[derive(Clone, Debug)]
pub enum CurvaturePayload {
    /// Diagonal of the empirical Fisher.
    DiagEf(Array1<f64>),
    /// Diagonal of the generalized Gauss-Newton block.
    DiagGgn(Array1<f64>),
    /// Kronecker factors: `a` is the (L+1)x(L+1) second moment of the
    /// bias-augmented penultimate activation, `b` the CxC second moment of
    /// the output-space log-likelihood gradient. The represented matrix is
    /// `kron_expand(a, b)`.
    Kfac { a: Array2<f64>, b: Array2<f64> },
    /// Full d x d empirical Fisher (dense oracle).
    FullEf(Array2<f64>),
    /// H = 0 exactly (identity-curvature posteriors).
    Zero,
}

/// A last-layer Hessian approximation.
#[derive(Clone, Debug)]
pub struct CurvatureEstimate {
    pub payload: CurvaturePayload,
    /// Last-layer parameter count C*(L+1).
    pub d: usize,
    /// Samples consumed by the fit (0 for the zero kind).
    pub n_samples: usize,
}

impl CurvatureEstimate {
    pub fn zero(d: usize) -> Self {
        Self { payload: CurvaturePayload::Zero, d, n_samples: 0 }
    }

    pub fn kind(&self) -> CurvatureKind {
        match &self.payload {
            CurvaturePayload::DiagEf(_) => CurvatureKind::DiagEf,
            CurvaturePayload::DiagGgn(_) => CurvatureKind::DiagGgn,
            CurvaturePayload::Kfac { .. } => CurvatureKind::Kfac,
            CurvaturePayload::FullEf(_) => CurvatureKind::FullEf,
            CurvaturePayload::Zero => CurvatureKind::Zero,
        }
    }

    /// Dense d x d matrix represented by this estimate. Guarded by
    /// [`ORACLE_DIM_LIMIT`]; intended for cross-checks and small problems.
    pub fn dense(&self) -> Result<Array2<f64>> {
        if self.d > ORACLE_DIM_LIMIT {
            return Err(Error::OracleScale { limit: ORACLE_DIM_LIMIT, got: self.d });
        }
        Ok(match &self.payload {
            CurvaturePayload::DiagEf(diag) | CurvaturePayload::DiagGgn(diag) => {
                Array2::from_diag(diag)
            }
            CurvaturePayload::Kfac { a, b } => kron_expand(a, b)?,
            CurvaturePayload::FullEf(m) => m.clone(),
            CurvaturePayload::Zero => Array2::zeros((self.d, self.d)),
        })
    }

    /// Eigenvalues of the represented matrix, in no particular order.
    /// Diagonal kinds are their entries; K-FAC spectra are the pairwise
    /// products of the factor eigenvalues.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        match &self.payload {
            CurvaturePayload::DiagEf(diag) | CurvaturePayload::DiagGgn(diag) => {
                Ok(diag.to_vec())
            }
            CurvaturePayload::Kfac { a, b } => {
                let ea = linalg::symmetric_eigenvalues(a)?;
                let eb = linalg::symmetric_eigenvalues(b)?;
                let mut out = Vec::with_capacity(ea.len() * eb.len());
                for &x in &ea {
                    for &y in &eb {
                        out.push(x * y);
                    }
                }
                Ok(out)
            }
            CurvaturePayload::FullEf(m) => linalg::symmetric_eigenvalues(m),
            CurvaturePayload::Zero => Ok(vec![0.0; self.d]),
        }
    }
}

/// Eigenvalue summary of a curvature estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumStats {
    /// Descending, clamped at zero (the represented matrices are PSD up to
    /// rounding in the eigensolver).
    pub eigenvalues: Vec<f64>,
    pub mean_eigenvalue: f64,
    /// Fraction of the trace carried by the top ceil(d/100) eigenvalues.
    pub tail_mass_top1pct: f64,
}

impl SpectrumStats {
    /// Two-column CSV `index,eigenvalue`, descending.
    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "index,eigenvalue")?;
        for (i, v) in self.eigenvalues.iter().enumerate() {
            writeln!(w, "{i},{v:?}")?;
        }
        Ok(())
    }
}

fn batch_ranges(n: usize, batch_size: usize) -> Vec<(usize, usize)> {
    (0..n.div_ceil(batch_size))
        .map(|b| (b * batch_size, ((b + 1) * batch_size).min(n)))
        .collect()
}

fn validate_fit_inputs(
    model: &MlpModel,
    ds: &LabeledDataset,
    batch_size: usize,
) -> Result<()> {
    check_compat(model, ds)?;
    if ds.is_empty() {
        return Err(Error::Data("curvature fit needs a non-empty dataset".into()));
    }
    if batch_size == 0 {
        return Err(Error::InvalidParameter("batch_size must be >= 1".into()));
    }
    Ok(())
}

/// Diagonal empirical Fisher: per batch, the summed element-wise squares of
/// the per-sample last-layer log-likelihood gradients; the result is the mean
/// over batches.
pub fn fit_diag_ef(
    model: &MlpModel,
    ds: &LabeledDataset,
    batch_size: usize,
) -> Result<CurvatureEstimate> {
    validate_fit_inputs(model, ds, batch_size)?;
    let d = model.last_layer_dim();
    let c = model.output_dim();
    let ranges = batch_ranges(ds.len(), batch_size);
    let mut acc = Array1::<f64>::zeros(d);
    for &(start, end) in &ranges {
        let mut batch_acc = Array1::<f64>::zeros(d);
        for i in start..end {
            let (delta, nu_hat) = model.delta_and_nu_hat(ds.feature_row(i), ds.label(i));
            for (l, &h) in nu_hat.iter().enumerate() {
                for (cc, &dc) in delta.iter().enumerate() {
                    let g = h * dc;
                    batch_acc[l * c + cc] += g * g;
                }
            }
        }
        acc += &batch_acc;
    }
    acc /= ranges.len() as f64;
    Ok(CurvatureEstimate { payload: CurvaturePayload::DiagEf(acc), d, n_samples: ds.len() })
}

/// Diagonal of the last-layer GGN block J^T (diag(p) - p p^T) J, aggregated
/// like [`fit_diag_ef`]. Classification only.
pub fn fit_diag_ggn(
    model: &MlpModel,
    ds: &LabeledDataset,
    batch_size: usize,
) -> Result<CurvatureEstimate> {
    validate_fit_inputs(model, ds, batch_size)?;
    if model.task() == Task::Regression {
        return Err(Error::Unsupported(
            "diag-GGN is classification-only (the regression block J^T J is out of scope)".into(),
        ));
    }
    let d = model.last_layer_dim();
    let c = model.output_dim();
    let ranges = batch_ranges(ds.len(), batch_size);
    let mut acc = Array1::<f64>::zeros(d);
    for &(start, end) in &ranges {
        let mut batch_acc = Array1::<f64>::zeros(d);
        for i in start..end {
            let probs = model.map_probs(ds.feature_row(i))?;
            let fwd = model.forward(ds.feature_row(i))?;
            let mut nu_hat = fwd.penultimate.to_vec();
            nu_hat.push(1.0);
            for (l, &h) in nu_hat.iter().enumerate() {
                for (cc, &p) in probs.iter().enumerate() {
                    batch_acc[l * c + cc] += h * h * p * (1.0 - p);
                }
            }
        }
        acc += &batch_acc;
    }
    acc /= ranges.len() as f64;
    Ok(CurvatureEstimate { payload: CurvaturePayload::DiagGgn(acc), d, n_samples: ds.len() })
}

/// K-FAC factors of the last layer: A is the mean outer product of the
/// bias-augmented penultimate activation, B the mean outer product of the
/// output-space log-likelihood gradient.
pub fn fit_kfac_last_layer(model: &MlpModel, ds: &LabeledDataset) -> Result<CurvatureEstimate> {
    validate_fit_inputs(model, ds, 1)?;
    let l1 = model.penultimate_width() + 1;
    let c = model.output_dim();
    let d = model.last_layer_dim();
    let mut a = Array2::<f64>::zeros((l1, l1));
    let mut b = Array2::<f64>::zeros((c, c));
    for i in 0..ds.len() {
        let (delta, nu_hat) = model.delta_and_nu_hat(ds.feature_row(i), ds.label(i));
        for p in 0..l1 {
            for q in 0..l1 {
                a[[p, q]] += nu_hat[p] * nu_hat[q];
            }
        }
        for p in 0..c {
            for q in 0..c {
                b[[p, q]] += delta[p] * delta[q];
            }
        }
    }
    let n = ds.len() as f64;
    a /= n;
    b /= n;
    Ok(CurvatureEstimate { payload: CurvaturePayload::Kfac { a, b }, d, n_samples: ds.len() })
}

/// Full empirical Fisher of the last layer (dense oracle, d <= 4096), with
/// the same per-batch-sum / mean-over-batches normalization as
/// [`fit_diag_ef`] so their diagonals match.
pub fn fit_full_ef_last_layer(
    model: &MlpModel,
    ds: &LabeledDataset,
    batch_size: usize,
) -> Result<CurvatureEstimate> {
    validate_fit_inputs(model, ds, batch_size)?;
    let d = model.last_layer_dim();
    if d > ORACLE_DIM_LIMIT {
        return Err(Error::OracleScale { limit: ORACLE_DIM_LIMIT, got: d });
    }
    let c = model.output_dim();
    let ranges = batch_ranges(ds.len(), batch_size);
    let mut acc = Array2::<f64>::zeros((d, d));
    let mut g = vec![0.0; d];
    for &(start, end) in &ranges {
        let mut batch_acc = Array2::<f64>::zeros((d, d));
        for i in start..end {
            let (delta, nu_hat) = model.delta_and_nu_hat(ds.feature_row(i), ds.label(i));
            for (l, &h) in nu_hat.iter().enumerate() {
                for (cc, &dc) in delta.iter().enumerate() {
                    g[l * c + cc] = h * dc;
                }
            }
            // one product per (p, q) pair keeps the matrix exactly symmetric
            for p in 0..d {
                batch_acc[[p, p]] += g[p] * g[p];
                for q in p + 1..d {
                    let v = g[p] * g[q];
                    batch_acc[[p, q]] += v;
                    batch_acc[[q, p]] += v;
                }
            }
        }
        acc += &batch_acc;
    }
    acc /= ranges.len() as f64;
    Ok(CurvatureEstimate { payload: CurvaturePayload::FullEf(acc), d, n_samples: ds.len() })
}

/// Kronecker product of two square matrices; block (i, j) is `a[i][j] * b`.
pub fn kron_expand(a: &Array2<f64>, b: &Array2<f64>) -> Result<Array2<f64>> {
    if a.nrows() != a.ncols() || b.nrows() != b.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "kron_expand needs square factors, got {}x{} and {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let (m, n) = (a.nrows(), b.nrows());
    let mut out = Array2::zeros((m * n, m * n));
    for i in 0..m {
        for j in 0..m {
            let aij = a[[i, j]];
            for k in 0..n {
                for l in 0..n {
                    out[[i * n + k, j * n + l]] = aij * b[[k, l]];
                }
            }
        }
    }
    Ok(out)
}

/// Eigenvalue summary; kinds with structure use it (diagonal entries, K-FAC
/// factor products) instead of a dense decomposition.
pub fn spectrum(curv: &CurvatureEstimate) -> Result<SpectrumStats> {
    let mut eigenvalues = curv.eigenvalues()?;
    if eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite eigenvalue".into()));
    }
    // PSD up to eigensolver rounding
    for v in &mut eigenvalues {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    eigenvalues.sort_by(|a, b| b.partial_cmp(a).expect("finite eigenvalues"));
    let d = eigenvalues.len();
    let trace: f64 = eigenvalues.iter().sum();
    let mean_eigenvalue = trace / d as f64;
    let k = d.div_ceil(100).max(1);
    let tail_mass_top1pct = if trace > 0.0 {
        eigenvalues[..k.min(d)].iter().sum::<f64>() / trace
    } else {
        0.0
    };
    Ok(SpectrumStats { eigenvalues, mean_eigenvalue, tail_mass_top1pct })
}
