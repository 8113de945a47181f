//! Last-layer Gaussian posteriors and linearized predictive distributions.
//!
//! A posterior is the MAP last-layer parameters plus a precision matrix
//! H + lambda*I, where H is any [`CurvatureEstimate`]; the zero kind gives the
//! identity-curvature posterior lambda*I. The prior precision lambda is
//! selected by fixed-step gradient ascent on the Laplace evidence in the
//! lambda^2 parametrization ([`marglik_optimize`]).
//!
//! Predictive distributions are linearized: mean at the MAP outputs,
//! covariance J P^-1 J^T with J the C x d Jacobian of the outputs w.r.t. the
//! last-layer parameters. Under the feature-major flattening J is
//! `nu_hat^T (x) I_C`, so identity-scaled precision gives the closed form
//! ((||nu||^2 + 1) / lambda) * I_C.

use ndarray::{Array1, Array2};

use crate::curvature::{self, CurvatureEstimate, CurvaturePayload};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::linalg;
use crate::nn::{check_compat, MlpModel};
use crate::Task;

/// Floor applied when a gradient step drives lambda^2 non-positive.
const LAMBDA_SQ_FLOOR: f64 = 1e-8;

/// Gaussian posterior over the flattened last-layer parameters.
#[derive(Clone, Debug)]
pub struct PosteriorSpec {
    w_map: Array1<f64>,
    curvature: CurvatureEstimate,
    lambda: f64,
}

impl PosteriorSpec {
    pub fn w_map(&self) -> &Array1<f64> {
        &self.w_map
    }

    pub fn curvature(&self) -> &CurvatureEstimate {
        &self.curvature
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn d(&self) -> usize {
        self.w_map.len()
    }

    /// True when the precision is exactly lambda*I.
    pub fn is_identity_precision(&self) -> bool {
        matches!(self.curvature.payload, CurvaturePayload::Zero)
    }

    /// Dense precision H + lambda*I (small-d oracle).
    pub fn precision_dense(&self) -> Result<Array2<f64>> {
        let mut p = self.curvature.dense()?;
        for i in 0..self.d() {
            p[[i, i]] += self.lambda;
        }
        Ok(p)
    }
}

/// Builds H + lambda*I over the given MAP parameters; zero-kind curvature
/// yields the identity-curvature posterior.
pub fn build_posterior(
    w_map: Array1<f64>,
    curvature: CurvatureEstimate,
    lambda: f64,
) -> Result<PosteriorSpec> {
    if lambda.is_nan() || lambda <= 0.0 || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "lambda must be a positive finite real, got {lambda}"
        )));
    }
    if curvature.d != w_map.len() {
        return Err(Error::ShapeMismatch(format!(
            "curvature dimension {} != parameter count {}",
            curvature.d,
            w_map.len()
        )));
    }
    if w_map.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite MAP parameter".into()));
    }
    Ok(PosteriorSpec { w_map, curvature, lambda })
}

/// Settings for the evidence ascent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarglikConfig {
    /// Step size on lambda^2.
    pub lr: f64,
    pub steps: usize,
    pub lambda_init: f64,
}

impl Default for MarglikConfig {
    fn default() -> Self {
        Self { lr: 0.1, steps: 100, lambda_init: 1.0 }
    }
}

impl MarglikConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr < 0.0 || !self.lr.is_finite() {
            return Err(Error::InvalidParameter("marglik lr must be >= 0".into()));
        }
        if self.steps == 0 {
            return Err(Error::InvalidParameter("marglik needs at least 1 step".into()));
        }
        if self.lambda_init.is_nan() || self.lambda_init <= 0.0 {
            return Err(Error::InvalidParameter("lambda_init must be > 0".into()));
        }
        Ok(())
    }
}

/// Result of [`marglik_optimize`]: the selected lambda and the evidence
/// trajectory (initial value, then one entry per step).
#[derive(Clone, Debug)]
pub struct MarglikOutcome {
    pub lambda: f64,
    pub evidence: Vec<f64>,
    /// Number of steps where lambda^2 had to be clamped back to positive.
    pub clamp_events: usize,
}

/// Lambda-dependent evidence terms. The zero (unfitted) curvature kind
/// contributes no log-det term, which leaves the closed-form optimum
/// lambda* = d / ||w||^2; fitted kinds use the full
/// -(1/2) sum log(h_i + lambda).
fn lambda_terms(eigs: Option<&[f64]>, d: usize, norm2: f64, lambda: f64) -> f64 {
    let mut e = 0.5 * d as f64 * lambda.ln() - 0.5 * lambda * norm2;
    if let Some(h) = eigs {
        e -= 0.5 * h.iter().map(|&x| (x.max(0.0) + lambda).ln()).sum::<f64>();
    }
    e
}

fn lambda_terms_grad(eigs: Option<&[f64]>, d: usize, norm2: f64, lambda: f64) -> f64 {
    let mut g = 0.5 * d as f64 / lambda - 0.5 * norm2;
    if let Some(h) = eigs {
        g -= 0.5 * h.iter().map(|&x| 1.0 / (x.max(0.0) + lambda)).sum::<f64>();
    }
    g
}

fn curvature_eigs(curv: &CurvatureEstimate) -> Result<Option<Vec<f64>>> {
    match curv.payload {
        CurvaturePayload::Zero => Ok(None),
        _ => Ok(Some(curv.eigenvalues()?)),
    }
}

/// Laplace evidence log p(D) at the given lambda: data log-likelihood at the
/// MAP minus the prior/occam terms (additive constants dropped).
pub fn laplace_evidence(
    curv: &CurvatureEstimate,
    w_map: &Array1<f64>,
    loglik_total: f64,
    lambda: f64,
) -> Result<f64> {
    let eigs = curvature_eigs(curv)?;
    let norm2 = w_map.iter().map(|v| v * v).sum();
    Ok(loglik_total + lambda_terms(eigs.as_deref(), w_map.len(), norm2, lambda))
}

/// Analytic d(evidence)/d(lambda).
pub fn laplace_evidence_grad(
    curv: &CurvatureEstimate,
    w_map: &Array1<f64>,
    lambda: f64,
) -> Result<f64> {
    let eigs = curvature_eigs(curv)?;
    let norm2 = w_map.iter().map(|v| v * v).sum();
    Ok(lambda_terms_grad(eigs.as_deref(), w_map.len(), norm2, lambda))
}

/// Fixed-step gradient ascent on the evidence in the lambda^2 parametrization
/// for `cfg.steps` updates, starting from `cfg.lambda_init`. A step driving
/// lambda^2 non-positive is clamped to 1e-8 and counted in the outcome.
pub fn marglik_optimize(
    model: &MlpModel,
    curv: &CurvatureEstimate,
    ds: &LabeledDataset,
    cfg: &MarglikConfig,
) -> Result<MarglikOutcome> {
    cfg.validate()?;
    check_compat(model, ds)?;
    if ds.is_empty() {
        return Err(Error::Data("marglik needs a non-empty dataset".into()));
    }
    if curv.d != model.last_layer_dim() {
        return Err(Error::ShapeMismatch(format!(
            "curvature dimension {} != last-layer dimension {}",
            curv.d,
            model.last_layer_dim()
        )));
    }
    let w_map = model.last_layer_flat();
    let norm2: f64 = w_map.iter().map(|v| v * v).sum();
    let d = w_map.len();
    let eigs = curvature_eigs(curv)?;
    let loglik = crate::nn::total_loglik(model, ds)?;
    let mut m = cfg.lambda_init * cfg.lambda_init;
    let mut clamp_events = 0;
    let mut evidence = Vec::with_capacity(cfg.steps + 1);
    evidence.push(loglik + lambda_terms(eigs.as_deref(), d, norm2, m.sqrt()));
    for _ in 0..cfg.steps {
        let lambda = m.sqrt();
        // chain rule: d/d(lambda^2) = d/d(lambda) / (2 lambda)
        let h = lambda_terms_grad(eigs.as_deref(), d, norm2, lambda) / (2.0 * lambda);
        m += cfg.lr * h;
        if m <= 0.0 {
            m = LAMBDA_SQ_FLOOR;
            clamp_events += 1;
        }
        evidence.push(loglik + lambda_terms(eigs.as_deref(), d, norm2, m.sqrt()));
    }
    Ok(MarglikOutcome { lambda: m.sqrt(), evidence, clamp_events })
}

/// Identity-curvature posterior fit: fit the diagonal empirical Fisher on the
/// validation data (skipped entirely for the zero variant), select lambda by
/// [`marglik_optimize`] with that curvature, then discard the curvature and
/// return the lambda*I posterior.
pub fn icla_fit(
    model: &MlpModel,
    val: &LabeledDataset,
    cfg: &MarglikConfig,
    zero_variant: bool,
    batch_size: usize,
) -> Result<(PosteriorSpec, MarglikOutcome)> {
    let d = model.last_layer_dim();
    let h = if zero_variant {
        CurvatureEstimate::zero(d)
    } else {
        curvature::fit_diag_ef(model, val, batch_size)?
    };
    let outcome = marglik_optimize(model, &h, val, cfg)?;
    let posterior = build_posterior(
        model.last_layer_flat(),
        CurvatureEstimate::zero(d),
        outcome.lambda,
    )?;
    Ok((posterior, outcome))
}

/// Per-input output Gaussian.
#[derive(Clone, Debug)]
pub struct PredictiveDistribution {
    /// MAP outputs (C logits, or one regression value).
    pub mean: Array1<f64>,
    /// C x C symmetric PSD covariance.
    pub covariance: Array2<f64>,
}

impl PredictiveDistribution {
    /// Scalar variance of a one-dimensional distribution.
    pub fn variance(&self) -> f64 {
        self.covariance[[0, 0]]
    }
}

/// Linearized predictive distribution: mean = MAP outputs, covariance
/// J P^-1 J^T computed per curvature structure (closed form for the identity
/// precision, per-entry sums for diagonals, factor eigendecompositions for
/// K-FAC, dense solve for the full Fisher).
pub fn predictive(
    model: &MlpModel,
    post: &PosteriorSpec,
    x: &[f64],
) -> Result<PredictiveDistribution> {
    if post.d() != model.last_layer_dim() {
        return Err(Error::ShapeMismatch(format!(
            "posterior dimension {} != model last-layer dimension {}",
            post.d(),
            model.last_layer_dim()
        )));
    }
    let fwd = model.forward(x)?;
    let c = model.output_dim();
    let mut nu_hat = fwd.penultimate.to_vec();
    nu_hat.push(1.0);
    let lambda = post.lambda;
    let covariance = match &post.curvature.payload {
        CurvaturePayload::Zero => {
            let nu2: f64 = nu_hat.iter().map(|v| v * v).sum();
            Array2::eye(c) * (nu2 / lambda)
        }
        CurvaturePayload::DiagEf(h) | CurvaturePayload::DiagGgn(h) => {
            // J has a single nonzero block per class, so the covariance is
            // diagonal: sum_l nu_hat_l^2 / (h[(l,c)] + lambda)
            let mut cov = Array2::zeros((c, c));
            for cc in 0..c {
                let mut v = 0.0;
                for (l, &hh) in nu_hat.iter().enumerate() {
                    v += hh * hh / (h[l * c + cc] + lambda);
                }
                cov[[cc, cc]] = v;
            }
            cov
        }
        CurvaturePayload::Kfac { a, b } => {
            let (sa, ua) = linalg::symmetric_eigen(a)?;
            let (sb, ub) = linalg::symmetric_eigen(b)?;
            // project nu_hat onto A's eigenbasis
            let l1 = nu_hat.len();
            let mut proj = vec![0.0; l1];
            for (i, p) in proj.iter_mut().enumerate() {
                for (l, &h) in nu_hat.iter().enumerate() {
                    *p += ua[[l, i]] * h;
                }
            }
            let mut cov = Array2::zeros((c, c));
            for (i, &pi) in proj.iter().enumerate() {
                let si = sa[i].max(0.0);
                for (j, &sj) in sb.iter().enumerate() {
                    let denom = si * sj.max(0.0) + lambda;
                    let w = pi * pi / denom;
                    for p in 0..c {
                        for q in 0..c {
                            cov[[p, q]] += w * ub[[p, j]] * ub[[q, j]];
                        }
                    }
                }
            }
            cov
        }
        CurvaturePayload::FullEf(_) => {
            let precision = post.precision_dense()?;
            let d = post.d();
            // J^T: column c has nu_hat in its class-c stripes
            let mut jt = Array2::zeros((d, c));
            for (l, &h) in nu_hat.iter().enumerate() {
                for cc in 0..c {
                    jt[[l * c + cc, cc]] = h;
                }
            }
            let solved = linalg::spd_solve(&precision, &jt)?;
            let mut cov = Array2::zeros((c, c));
            for p in 0..c {
                for q in 0..c {
                    let mut v = 0.0;
                    for (l, &h) in nu_hat.iter().enumerate() {
                        v += h * solved[[l * c + p, q]];
                    }
                    cov[[p, q]] = v;
                }
            }
            // exact symmetry despite solver rounding
            for p in 0..c {
                for q in p + 1..c {
                    let s = 0.5 * (cov[[p, q]] + cov[[q, p]]);
                    cov[[p, q]] = s;
                    cov[[q, p]] = s;
                }
            }
            cov
        }
    };
    Ok(PredictiveDistribution { mean: fwd.logits, covariance })
}

/// Regression predictive: the linearized variance plus fixed observation
/// noise sigma_obs^2.
pub fn regression_predictive(
    model: &MlpModel,
    post: &PosteriorSpec,
    x: &[f64],
    sigma_obs: f64,
) -> Result<PredictiveDistribution> {
    if model.task() != Task::Regression {
        return Err(Error::Unsupported(
            "regression_predictive needs a regression model".into(),
        ));
    }
    if sigma_obs < 0.0 {
        return Err(Error::InvalidParameter("sigma_obs must be >= 0".into()));
    }
    let mut dist = predictive(model, post, x)?;
    dist.covariance[[0, 0]] += sigma_obs * sigma_obs;
    Ok(dist)
}

/// Mean-field probit-adjusted softmax: each logit is scaled by
/// 1 / sqrt(1 + (pi/8) * var_c) before the softmax.
pub fn predict_proba(dist: &PredictiveDistribution) -> Result<Array1<f64>> {
    let c = dist.mean.len();
    if c < 2 {
        return Err(Error::Unsupported(
            "predict_proba needs a classification distribution".into(),
        ));
    }
    if dist.covariance.nrows() != c || dist.covariance.ncols() != c {
        return Err(Error::ShapeMismatch(format!(
            "covariance is {}x{} for {c} classes",
            dist.covariance.nrows(),
            dist.covariance.ncols()
        )));
    }
    let kappa = std::f64::consts::PI / 8.0;
    let mut scaled = Vec::with_capacity(c);
    for cc in 0..c {
        let var = dist.covariance[[cc, cc]];
        if var < -1e-9 || !var.is_finite() {
            return Err(Error::Numeric(format!(
                "predictive variance {var} for class {cc}"
            )));
        }
        let var = var.max(0.0);
        scaled.push(dist.mean[cc] / (1.0 + kappa * var).sqrt());
    }
    let m = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|z| (z - m).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(Array1::from_vec(exps.into_iter().map(|e| e / total).collect()))
}

/// Shannon entropy -sum p ln p in nats, with 0 ln 0 = 0.
pub fn entropy_score(p: &[f64]) -> Result<f64> {
    if p.is_empty() {
        return Err(Error::InvalidParameter("empty probability vector".into()));
    }
    let mut total = 0.0;
    let mut h = 0.0;
    for &v in p {
        if v < 0.0 || !v.is_finite() {
            return Err(Error::InvalidParameter(format!("invalid probability {v}")));
        }
        total += v;
        if v > 0.0 {
            h -= v * v.ln();
        }
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "probabilities sum to {total}, expected 1"
        )));
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curvature::{fit_diag_ef, fit_kfac_last_layer};
    use approx::assert_relative_eq;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy(n_classes: usize, n: usize, dim: usize, seed: u64) -> LabeledDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let flat: Vec<f64> = (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..n_classes)).collect();
        LabeledDataset::classification(
            Array2::from_shape_vec((n, dim), flat).unwrap(),
            labels,
            n_classes,
            "toy",
        )
        .unwrap()
    }

    #[test]
    fn build_posterior_precisions() {
        let zero = build_posterior(array![0.1, 0.2, 0.3], CurvatureEstimate::zero(3), 2.0).unwrap();
        assert_eq!(zero.precision_dense().unwrap(), Array2::eye(3) * 2.0);
        assert!(zero.is_identity_precision());

        let diag = CurvatureEstimate {
            payload: CurvaturePayload::DiagEf(array![1.0, 0.0, 4.0]),
            d: 3,
            n_samples: 1,
        };
        let post = build_posterior(array![0.0, 0.0, 0.0], diag, 1.0).unwrap();
        assert_eq!(
            post.precision_dense().unwrap(),
            Array2::from_diag(&array![2.0, 1.0, 5.0])
        );

        assert!(build_posterior(array![0.0], CurvatureEstimate::zero(1), 0.0).is_err());
        assert!(build_posterior(array![0.0], CurvatureEstimate::zero(2), 1.0).is_err());
    }

    #[test]
    fn kfac_posterior_precision_matches_manual_kron() {
        let model = MlpModel::init(&[2, 3, 2], Task::Classification { classes: 2 }, 5).unwrap();
        let ds = toy(2, 4, 2, 6);
        let kfac = fit_kfac_last_layer(&model, &ds).unwrap();
        let CurvaturePayload::Kfac { a, b } = kfac.payload.clone() else { panic!("kind") };
        let lambda = 0.7;
        let post = build_posterior(model.last_layer_flat(), kfac, lambda).unwrap();
        let dense = post.precision_dense().unwrap();
        // manual Kronecker expansion, independent of kron_expand
        let (m, n) = (a.nrows(), b.nrows());
        for i in 0..m {
            for k in 0..n {
                for j in 0..m {
                    for l in 0..n {
                        let mut expected = a[[i, j]] * b[[k, l]];
                        if i * n + k == j * n + l {
                            expected += lambda;
                        }
                        assert!((dense[[i * n + k, j * n + l]] - expected).abs() < 1e-10);
                    }
                }
            }
        }
    }

    fn unit_norm_last_layer_model() -> MlpModel {
        // last layer of ones: ||w_map||^2 = d
        let layers = vec![
            (array![[0.3, -0.2], [0.1, 0.4], [0.0, 0.2]], array![0.1, -0.1, 0.0]),
            (
                Array2::from_elem((2, 3), 1.0),
                ndarray::Array1::from_elem(2, 1.0),
            ),
        ];
        MlpModel::from_parts(&layers, Task::Classification { classes: 2 }).unwrap()
    }

    #[test]
    fn marglik_converges_to_closed_form_for_zero_curvature() {
        let model = unit_norm_last_layer_model();
        let d = model.last_layer_dim();
        let norm2: f64 = model.last_layer_flat().iter().map(|v| v * v).sum();
        assert_relative_eq!(norm2, d as f64);
        let ds = toy(2, 12, 2, 3);
        let cfg = MarglikConfig { lr: 0.1, steps: 200, lambda_init: 1.0 };
        let out =
            marglik_optimize(&model, &CurvatureEstimate::zero(d), &ds, &cfg).unwrap();
        // closed form lambda* = d / ||w||^2 = 1
        assert!((out.lambda - 1.0).abs() < 1e-3, "lambda = {}", out.lambda);
        assert_eq!(out.clamp_events, 0);
    }

    #[test]
    fn marglik_trajectory_non_decreasing_toward_closed_form() {
        // gradient ascent on the zero-curvature evidence climbs monotonically
        // until it is within 1e-6 of the closed-form optimum
        let model = unit_norm_last_layer_model();
        let d = model.last_layer_dim();
        let ds = toy(2, 10, 2, 21);
        let cfg = MarglikConfig { lr: 0.1, steps: 2000, lambda_init: 2.0 };
        let curv = CurvatureEstimate::zero(d);
        let out = marglik_optimize(&model, &curv, &ds, &cfg).unwrap();
        let w = model.last_layer_flat();
        let loglik = crate::nn::total_loglik(&model, &ds).unwrap();
        let norm2: f64 = w.iter().map(|v| v * v).sum();
        let optimum = laplace_evidence(&curv, &w, loglik, d as f64 / norm2).unwrap();
        for pair in out.evidence.windows(2) {
            if optimum - pair[0] > 1e-6 {
                assert!(
                    pair[1] >= pair[0],
                    "evidence decreased from {} to {} while {} below optimum",
                    pair[0],
                    pair[1],
                    optimum - pair[0]
                );
            }
        }
        assert!((out.evidence.last().unwrap() - optimum).abs() < 1e-6);
    }

    #[test]
    fn marglik_zero_lr_returns_init() {
        let model = unit_norm_last_layer_model();
        let ds = toy(2, 5, 2, 4);
        let cfg = MarglikConfig { lr: 0.0, steps: 1, lambda_init: 2.5 };
        let out = marglik_optimize(
            &model,
            &CurvatureEstimate::zero(model.last_layer_dim()),
            &ds,
            &cfg,
        )
        .unwrap();
        assert_eq!(out.lambda, 2.5);
    }

    #[test]
    fn evidence_gradient_matches_finite_differences() {
        let model = MlpModel::init(&[2, 4, 3], Task::Classification { classes: 3 }, 9).unwrap();
        let ds = toy(3, 10, 2, 10);
        let w = model.last_layer_flat();
        let diag = fit_diag_ef(&model, &ds, 4).unwrap();
        let kfac = fit_kfac_last_layer(&model, &ds).unwrap();
        for curv in [&diag, &kfac] {
            for &lambda in &[0.5, 1.0, 3.0] {
                let g = laplace_evidence_grad(curv, &w, lambda).unwrap();
                let h = 1e-5 * lambda;
                let ep = laplace_evidence(curv, &w, 0.0, lambda + h).unwrap();
                let em = laplace_evidence(curv, &w, 0.0, lambda - h).unwrap();
                let numeric = (ep - em) / (2.0 * h);
                assert!(
                    (g - numeric).abs() / g.abs().max(numeric.abs()) < 1e-6,
                    "{:?} at lambda {lambda}: {g} vs {numeric}",
                    curv.kind()
                );
            }
        }
    }

    #[test]
    fn marglik_is_invariant_to_sample_order() {
        let model = MlpModel::init(&[2, 4, 2], Task::Classification { classes: 2 }, 11).unwrap();
        let ds = toy(2, 10, 2, 12);
        let curv = fit_diag_ef(&model, &ds, 5).unwrap();
        let cfg = MarglikConfig::default();
        let a = marglik_optimize(&model, &curv, &ds, &cfg).unwrap();
        let reversed: Vec<usize> = (0..ds.len()).rev().collect();
        let ds_rev = ds.subset(&reversed, "rev").unwrap();
        let b = marglik_optimize(&model, &curv, &ds_rev, &cfg).unwrap();
        assert_eq!(a.lambda, b.lambda);
    }

    #[test]
    fn icla_fit_returns_identity_posterior() {
        let model = MlpModel::init(&[2, 5, 3], Task::Classification { classes: 3 }, 13).unwrap();
        let ds = toy(3, 20, 2, 14);
        let cfg = MarglikConfig::default();
        let (post, out) = icla_fit(&model, &ds, &cfg, false, 8).unwrap();
        assert!(post.is_identity_precision());
        assert!(post.lambda() > 0.0);
        assert_eq!(post.lambda(), out.lambda);

        let (post_zero, _) = icla_fit(&model, &ds, &cfg, true, 8).unwrap();
        assert!(post_zero.is_identity_precision());
        assert!(post_zero.lambda() > 0.0);

        // re-running is exactly reproducible
        let (post2, _) = icla_fit(&model, &ds, &cfg, false, 8).unwrap();
        assert_eq!(post.lambda(), post2.lambda());
    }

    #[test]
    fn icla_predictive_closed_form() {
        // nu = (sqrt 2, 1) so ||nu||^2 = 3; lambda = 2 gives covariance 2 I
        let layers = vec![
            (array![[1.0, 0.0], [0.0, 1.0]], array![0.0, 0.0]),
            (array![[0.5, -0.5], [0.25, 0.75]], array![0.1, -0.2]),
        ];
        let model = MlpModel::from_parts(&layers, Task::Classification { classes: 2 }).unwrap();
        let post = build_posterior(
            model.last_layer_flat(),
            CurvatureEstimate::zero(model.last_layer_dim()),
            2.0,
        )
        .unwrap();
        let x = [2.0f64.sqrt(), 1.0];
        let dist = predictive(&model, &post, &x).unwrap();
        let fwd = model.forward(&x).unwrap();
        assert_eq!(dist.mean, fwd.logits);
        for p in 0..2 {
            for q in 0..2 {
                let expected = if p == q { 2.0 } else { 0.0 };
                assert!((dist.covariance[[p, q]] - expected).abs() < 1e-10);
            }
        }
    }

    /// Dense-arithmetic oracle: J inv(P) J^T computed with explicit matrices.
    fn dense_predictive_cov(model: &MlpModel, post: &PosteriorSpec, x: &[f64]) -> Array2<f64> {
        let fwd = model.forward(x).unwrap();
        let mut nu_hat = fwd.penultimate.to_vec();
        nu_hat.push(1.0);
        let c = model.output_dim();
        let d = post.d();
        let precision = post.precision_dense().unwrap();
        let mut jt = Array2::zeros((d, c));
        for (l, &h) in nu_hat.iter().enumerate() {
            for cc in 0..c {
                jt[[l * c + cc, cc]] = h;
            }
        }
        let solved = crate::linalg::spd_solve(&precision, &jt).unwrap();
        let mut cov = Array2::zeros((c, c));
        for p in 0..c {
            for q in 0..c {
                let mut v = 0.0;
                for (l, &h) in nu_hat.iter().enumerate() {
                    v += h * solved[[l * c + p, q]];
                }
                cov[[p, q]] = v;
            }
        }
        cov
    }

    #[test]
    fn diag_and_kfac_predictives_match_dense_oracle() {
        let model = MlpModel::init(&[2, 4, 3], Task::Classification { classes: 3 }, 15).unwrap();
        let ds = toy(3, 12, 2, 16);
        let w = model.last_layer_flat();
        let posteriors = [
            build_posterior(w.clone(), fit_diag_ef(&model, &ds, 4).unwrap(), 0.8).unwrap(),
            build_posterior(w.clone(), fit_kfac_last_layer(&model, &ds).unwrap(), 0.8).unwrap(),
        ];
        for post in &posteriors {
            for i in 0..4 {
                let x = ds.feature_row(i);
                let dist = predictive(&model, post, x).unwrap();
                let oracle = dense_predictive_cov(&model, post, x);
                for (a, b) in dist.covariance.iter().zip(oracle.iter()) {
                    assert!((a - b).abs() < 1e-10, "{:?}: {a} vs {b}", post.curvature.kind());
                }
            }
        }
    }

    #[test]
    fn icla_variance_strictly_decreases_in_lambda() {
        let model = MlpModel::init(&[2, 4, 3], Task::Classification { classes: 3 }, 17).unwrap();
        let d = model.last_layer_dim();
        let x = [0.4, -0.9];
        let mut last = f64::INFINITY;
        for &lambda in &[0.5, 1.0, 2.0, 4.0] {
            let post =
                build_posterior(model.last_layer_flat(), CurvatureEstimate::zero(d), lambda)
                    .unwrap();
            let dist = predictive(&model, &post, &x).unwrap();
            let v = dist.covariance[[0, 0]];
            assert!(v < last, "variance not decreasing at lambda {lambda}");
            last = v;
        }
    }

    #[test]
    fn regression_predictive_cases() {
        // zero hidden weights: nu = 0, so the epistemic term is the bias
        // column alone, 1/lambda
        let layers = vec![
            (Array2::zeros((3, 1)), ndarray::Array1::zeros(3)),
            (array![[0.4, -0.2, 0.1]], array![0.3]),
        ];
        let model = MlpModel::from_parts(&layers, Task::Regression).unwrap();
        let d = model.last_layer_dim();
        let sigma = 0.1;
        let post =
            build_posterior(model.last_layer_flat(), CurvatureEstimate::zero(d), 1.0).unwrap();
        let dist = regression_predictive(&model, &post, &[0.5], sigma).unwrap();
        assert_relative_eq!(dist.variance(), 1.0 + sigma * sigma, max_relative = 1e-12);
        assert_relative_eq!(dist.mean[0], 0.3, max_relative = 1e-12);

        // enormous lambda: variance tends to sigma^2
        let post_wide =
            build_posterior(model.last_layer_flat(), CurvatureEstimate::zero(d), 1e12).unwrap();
        let dist = regression_predictive(&model, &post_wide, &[0.5], sigma).unwrap();
        assert!((dist.variance() - sigma * sigma).abs() < 1e-10);
    }

    #[test]
    fn regression_predictive_matches_dense_oracle() {
        let model = MlpModel::init(&[1, 5, 1], Task::Regression, 18).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let n = 8;
        let flat: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let targets: Vec<f64> = flat.iter().map(|x| x.sin()).collect();
        let ds = LabeledDataset::regression(
            Array2::from_shape_vec((n, 1), flat).unwrap(),
            targets,
            "sin",
        )
        .unwrap();
        let curv = fit_diag_ef(&model, &ds, 4).unwrap();
        let post = build_posterior(model.last_layer_flat(), curv, 0.5).unwrap();
        let x = [0.3];
        let dist = regression_predictive(&model, &post, &x, 0.0).unwrap();
        let oracle = dense_predictive_cov(&model, &post, &x);
        assert!((dist.variance() - oracle[[0, 0]]).abs() < 1e-10);
    }

    #[test]
    fn predict_proba_cases() {
        // zero covariance reduces to the plain softmax
        let dist = PredictiveDistribution {
            mean: array![1.0, -0.5, 0.2],
            covariance: Array2::zeros((3, 3)),
        };
        let p = predict_proba(&dist).unwrap();
        let exps = [0.0f64, -1.5, -0.8].map(f64::exp);
        let total: f64 = exps.iter().sum();
        for (a, e) in p.iter().zip(exps.iter().map(|e| e / total)) {
            assert_relative_eq!(*a, e, max_relative = 1e-12);
        }
        assert!((p.sum() - 1.0).abs() < 1e-12);

        // hand case: var = (8/pi)*3 scales the first logit by 1/2
        let dist = PredictiveDistribution {
            mean: array![1.0, 0.0],
            covariance: Array2::from_diag(&array![8.0 / std::f64::consts::PI * 3.0, 0.0]),
        };
        let p = predict_proba(&dist).unwrap();
        let e0 = 0.5f64.exp() / (0.5f64.exp() + 1.0);
        assert_relative_eq!(p[0], e0, max_relative = 1e-12);

        // isotropic covariance preserves the argmax
        let dist = PredictiveDistribution {
            mean: array![0.3, 2.0, -1.0],
            covariance: Array2::eye(3) * 5.0,
        };
        let p = predict_proba(&dist).unwrap();
        assert_eq!(
            p.iter().enumerate().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap().0,
            1
        );

        // variance below tolerance is an error
        let dist = PredictiveDistribution {
            mean: array![0.0, 0.0],
            covariance: Array2::from_diag(&array![-1e-3, 0.0]),
        };
        assert!(matches!(predict_proba(&dist), Err(Error::Numeric(_))));
    }

    #[test]
    fn entropy_cases() {
        assert_eq!(entropy_score(&[1.0, 0.0, 0.0]).unwrap(), 0.0);
        let c = 5;
        let uniform = vec![1.0 / c as f64; c];
        assert_relative_eq!(
            entropy_score(&uniform).unwrap(),
            (c as f64).ln(),
            max_relative = 1e-12
        );
        assert_relative_eq!(mixed_entropy(), 0.5623351446188083, max_relative = 1e-12);
        assert!(entropy_score(&[-0.1, 1.1]).is_err());
        assert!(entropy_score(&[0.4, 0.4]).is_err());
    }

    fn mixed_entropy() -> f64 {
        entropy_score(&[0.75, 0.25]).unwrap()
    }
}
