//! Small feed-forward networks trained by MAP estimation.
//!
//! Architecture is fixed to dense layers with ReLU on all hidden layers and a
//! linear final layer; classification uses a softmax likelihood, regression a
//! unit-variance Gaussian (so the data loss is half the mean squared error).
//! Training is plain mini-batch SGD with momentum, a cosine-annealed learning
//! rate, weight decay on weights (biases excluded), and optionally either a
//! Fisher penalty or ASAM — never both in one run.
//!
//! Two flat parameter orderings are used:
//!
//! - the *full* parameter vector (`params`, gradients from [`loss_and_grad`]
//!   and [`GradScope::AllParams`]): layers in order, each as its row-major
//!   weight matrix followed by its biases;
//! - the *last-layer* vector of d = C*(L+1) entries
//!   ([`MlpModel::last_layer_flat`], [`GradScope::LastLayer`], and everything
//!   in the curvature/laplace modules): feature-major — for each penultimate
//!   feature l the C class weights (index `l*C + c`), then the C biases
//!   (index `L*C + c`). This is the column-major vectorization of the
//!   bias-augmented last-layer matrix `[W | b]`, which is what makes the
//!   K-FAC factor product line up with the full empirical Fisher.

mod backprop;
mod scalar;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::data::{LabeledDataset, SampleLabel, Task};
use crate::error::{Error, Result};

pub(crate) use backprop::{forward_acts, loglik_delta, stable_softmax, Arch};
use scalar::Dual;

/// Dense ReLU network with a linear final layer.
#[derive(Clone, Debug)]
pub struct MlpModel {
    theta: Vec<f64>,
    arch: Arch,
    widths: Vec<usize>,
    task: Task,
    bias_mask: Vec<bool>,
}

/// Logits (or the scalar regression output) plus the penultimate activation.
#[derive(Clone, Debug)]
pub struct ForwardResult {
    pub logits: Array1<f64>,
    pub penultimate: Array1<f64>,
}

/// ASAM perturbation parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AsamConfig {
    pub rho: f64,
    pub eta: f64,
}

impl Default for AsamConfig {
    fn default() -> Self {
        Self { rho: 0.5, eta: 0.01 }
    }
}

/// MAP training hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_initial: f64,
    pub lr_final: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub fisher_penalty_alpha: f64,
    pub asam: Option<AsamConfig>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 32,
            lr_initial: 0.1,
            lr_final: 1e-6,
            momentum: 0.9,
            weight_decay: 1e-4,
            fisher_penalty_alpha: 0.0,
            asam: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch_size must be >= 1".into()));
        }
        if self.lr_initial.is_nan() || self.lr_initial <= 0.0 || self.lr_final.is_nan() || self.lr_final <= 0.0 {
            return Err(Error::InvalidParameter("learning rates must be > 0".into()));
        }
        if self.lr_final > self.lr_initial {
            return Err(Error::InvalidParameter("lr_final must be <= lr_initial".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidParameter("momentum must be in [0, 1)".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::InvalidParameter("weight_decay must be >= 0".into()));
        }
        if self.fisher_penalty_alpha < 0.0 {
            return Err(Error::InvalidParameter(
                "fisher_penalty_alpha must be >= 0".into(),
            ));
        }
        if self.fisher_penalty_alpha > 0.0 && self.asam.is_some() {
            return Err(Error::InvalidParameter(
                "fisher penalty and ASAM cannot both be active in one run".into(),
            ));
        }
        if let Some(asam) = &self.asam {
            if asam.rho.is_nan() || asam.rho <= 0.0 {
                return Err(Error::InvalidParameter("asam rho must be > 0".into()));
            }
            if asam.eta < 0.0 {
                return Err(Error::InvalidParameter("asam eta must be >= 0".into()));
            }
        }
        Ok(())
    }
}

/// Which parameters a per-sample gradient covers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradScope {
    /// All parameters, in the full flat ordering.
    AllParams,
    /// Last-layer parameters only, in the feature-major ordering.
    LastLayer,
}

fn build_bias_mask(arch: &Arch) -> Vec<bool> {
    let mut mask = vec![false; arch.param_count()];
    for k in 0..arch.n_layers() {
        let (out, _) = arch.dims[k];
        let b = arch.bias_offset(k);
        for m in &mut mask[b..b + out] {
            *m = true;
        }
    }
    mask
}

impl MlpModel {
    /// Seeded initialization: every layer's weights and biases are drawn
    /// uniformly from [-1/sqrt(fan_in), 1/sqrt(fan_in)) with ChaCha8(seed).
    /// `widths` lists the input width, the hidden widths (at least one), and
    /// the output width.
    pub fn init(widths: &[usize], task: Task, seed: u64) -> Result<Self> {
        Self::validate_widths(widths, task)?;
        let arch = Arch::from_widths(widths);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut theta = Vec::with_capacity(arch.param_count());
        for &(out, inp) in &arch.dims {
            let bound = 1.0 / (inp as f64).sqrt();
            for _ in 0..out * (inp + 1) {
                theta.push(rng.random_range(-bound..bound));
            }
        }
        let bias_mask = build_bias_mask(&arch);
        Ok(Self { theta, arch, widths: widths.to_vec(), task, bias_mask })
    }

    /// Builds a model from explicit layer matrices; consecutive dimensions
    /// must chain and every value must be finite.
    pub fn from_parts(layers: &[(Array2<f64>, Array1<f64>)], task: Task) -> Result<Self> {
        if layers.len() < 2 {
            return Err(Error::InvalidParameter(
                "need at least one hidden layer".into(),
            ));
        }
        let mut widths = vec![layers[0].0.ncols()];
        for (w, b) in layers {
            if w.nrows() != b.len() {
                return Err(Error::ShapeMismatch(format!(
                    "weight rows {} != bias length {}",
                    w.nrows(),
                    b.len()
                )));
            }
            if w.ncols() != *widths.last().expect("non-empty") {
                return Err(Error::ShapeMismatch(format!(
                    "layer input {} does not chain with previous output {}",
                    w.ncols(),
                    widths.last().expect("non-empty")
                )));
            }
            widths.push(w.nrows());
        }
        Self::validate_widths(&widths, task)?;
        let arch = Arch::from_widths(&widths);
        let mut theta = Vec::with_capacity(arch.param_count());
        for (w, b) in layers {
            theta.extend(w.iter().copied());
            theta.extend(b.iter().copied());
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite parameter value".into()));
        }
        let bias_mask = build_bias_mask(&arch);
        Ok(Self { theta, arch, widths, task, bias_mask })
    }

    fn validate_widths(widths: &[usize], task: Task) -> Result<()> {
        if widths.len() < 3 {
            return Err(Error::InvalidParameter(
                "architecture needs input, at least one hidden, and output widths".into(),
            ));
        }
        if widths.contains(&0) {
            return Err(Error::InvalidParameter("zero-width layer".into()));
        }
        let out = *widths.last().expect("non-empty");
        match task {
            Task::Classification { classes } => {
                if classes < 2 {
                    return Err(Error::InvalidParameter(
                        "classification needs at least 2 classes".into(),
                    ));
                }
                if out != classes {
                    return Err(Error::ShapeMismatch(format!(
                        "output width {out} != {classes} classes"
                    )));
                }
            }
            Task::Regression => {
                if out != 1 {
                    return Err(Error::ShapeMismatch(format!(
                        "regression needs output width 1, got {out}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("non-empty")
    }

    /// Penultimate width L.
    pub fn penultimate_width(&self) -> usize {
        self.widths[self.widths.len() - 2]
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn layer_widths(&self) -> &[usize] {
        &self.widths
    }

    /// Full flat parameter vector (layer-major, weights row-major then biases).
    pub fn params(&self) -> &[f64] {
        &self.theta
    }

    pub fn param_count(&self) -> usize {
        self.theta.len()
    }

    pub fn set_params(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.theta.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} parameters, got {}",
                self.theta.len(),
                theta.len()
            )));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite parameter value".into()));
        }
        self.theta.copy_from_slice(theta);
        Ok(())
    }

    /// Layer matrices as (weights out x in, bias) copies.
    pub fn layers(&self) -> Vec<(Array2<f64>, Array1<f64>)> {
        (0..self.arch.n_layers())
            .map(|k| {
                let (out, inp) = self.arch.dims[k];
                let w_off = self.arch.weight_offset(k);
                let b_off = self.arch.bias_offset(k);
                let w = Array2::from_shape_vec(
                    (out, inp),
                    self.theta[w_off..w_off + out * inp].to_vec(),
                )
                .expect("layer shape");
                let b = Array1::from_vec(self.theta[b_off..b_off + out].to_vec());
                (w, b)
            })
            .collect()
    }

    /// Number of last-layer parameters d = C*(L+1).
    pub fn last_layer_dim(&self) -> usize {
        self.output_dim() * (self.penultimate_width() + 1)
    }

    /// Last-layer parameters in the feature-major ordering: entry `l*C + c`
    /// is the weight from feature l to class c for l < L, and `L*C + c` is
    /// the class-c bias.
    pub fn last_layer_flat(&self) -> Array1<f64> {
        let k = self.arch.n_layers() - 1;
        let (c_out, l_in) = self.arch.dims[k];
        let w_off = self.arch.weight_offset(k);
        let b_off = self.arch.bias_offset(k);
        let mut flat = Vec::with_capacity(c_out * (l_in + 1));
        for l in 0..l_in {
            for c in 0..c_out {
                flat.push(self.theta[w_off + c * l_in + l]);
            }
        }
        for c in 0..c_out {
            flat.push(self.theta[b_off + c]);
        }
        Array1::from_vec(flat)
    }

    /// Deterministic forward pass; logits are exactly `W nu + b`.
    pub fn forward(&self, x: &[f64]) -> Result<ForwardResult> {
        if x.len() != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "input length {} != input_dim {}",
                x.len(),
                self.input_dim()
            )));
        }
        let acts = forward_acts::<f64>(&self.theta, &self.arch, x);
        let n = acts.len();
        Ok(ForwardResult {
            logits: Array1::from_vec(acts[n - 1].clone()),
            penultimate: Array1::from_vec(acts[n - 2].clone()),
        })
    }

    /// Gradient delta at the outputs together with the bias-augmented
    /// penultimate vector; the feature-major last-layer gradient of one
    /// sample's log-likelihood is their outer product `nu_hat[l] * delta[c]`.
    pub(crate) fn delta_and_nu_hat(&self, x: &[f64], label: SampleLabel) -> (Vec<f64>, Vec<f64>) {
        let acts = forward_acts::<f64>(&self.theta, &self.arch, x);
        let n = acts.len();
        let (_, delta) = loglik_delta(&acts[n - 1], label);
        let mut nu_hat = acts[n - 2].clone();
        nu_hat.push(1.0);
        (delta, nu_hat)
    }

    /// Softmax class probabilities of the MAP logits.
    pub fn map_probs(&self, x: &[f64]) -> Result<Array1<f64>> {
        match self.task {
            Task::Classification { .. } => {
                let fwd = self.forward(x)?;
                Ok(Array1::from_vec(stable_softmax(
                    fwd.logits.as_slice().expect("contiguous"),
                )))
            }
            Task::Regression => Err(Error::Unsupported(
                "map_probs is classification-only".into(),
            )),
        }
    }
}

pub(crate) fn check_compat(model: &MlpModel, ds: &LabeledDataset) -> Result<()> {
    if ds.dim() != model.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "dataset dim {} != model input_dim {}",
            ds.dim(),
            model.input_dim()
        )));
    }
    match (model.task(), ds.task()) {
        (Task::Classification { classes: mc }, Task::Classification { classes: dc }) => {
            // a subset file may simply not contain the highest class index
            if dc > mc {
                return Err(Error::Data(format!(
                    "dataset has {dc} classes but model only {mc}"
                )));
            }
        }
        (Task::Regression, Task::Regression) => {}
        (m, d) => {
            return Err(Error::Data(format!(
                "task mismatch: model {m:?}, dataset {d:?}"
            )));
        }
    }
    Ok(())
}

fn all_rows(ds: &LabeledDataset) -> Vec<usize> {
    (0..ds.len()).collect()
}

/// Mean negative log-likelihood plus (weight_decay/2)*||weights||^2 (biases
/// excluded from decay), together with its exact gradient.
pub fn loss_and_grad(
    model: &MlpModel,
    ds: &LabeledDataset,
    weight_decay: f64,
) -> Result<(f64, Vec<f64>)> {
    check_compat(model, ds)?;
    if weight_decay < 0.0 {
        return Err(Error::InvalidParameter("weight_decay must be >= 0".into()));
    }
    Ok(objective_grad(
        &model.theta,
        &model.arch,
        &model.bias_mask,
        ds,
        &all_rows(ds),
        weight_decay,
        0.0,
    ))
}

/// Per-sample gradients of log p(y_n | x_n) (no weight decay), one row per
/// sample. See the module docs for the two flat orderings.
pub fn per_sample_loglik_grads(
    model: &MlpModel,
    ds: &LabeledDataset,
    scope: GradScope,
) -> Result<Array2<f64>> {
    check_compat(model, ds)?;
    let n = ds.len();
    match scope {
        GradScope::AllParams => {
            let p = model.param_count();
            let mut out = Array2::zeros((n, p));
            for i in 0..n {
                let acts = forward_acts::<f64>(&model.theta, &model.arch, ds.feature_row(i));
                let (_, delta) = loglik_delta(acts.last().expect("outputs"), ds.label(i));
                let mut grad = vec![0.0; p];
                backprop::accumulate_backward(&model.theta, &model.arch, &acts, delta, &mut grad);
                out.row_mut(i).assign(&Array1::from_vec(grad));
            }
            Ok(out)
        }
        GradScope::LastLayer => {
            let c_out = model.output_dim();
            let d = model.last_layer_dim();
            let mut out = Array2::zeros((n, d));
            for i in 0..n {
                let (delta, nu_hat) = model.delta_and_nu_hat(ds.feature_row(i), ds.label(i));
                let mut row = out.row_mut(i);
                for (l, &h) in nu_hat.iter().enumerate() {
                    for (c, &dc) in delta.iter().enumerate() {
                        row[l * c_out + c] = h * dc;
                    }
                }
            }
            Ok(out)
        }
    }
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn fisher_penalty_theta(
    theta: &[f64],
    arch: &Arch,
    ds: &LabeledDataset,
    rows: &[usize],
    alpha: f64,
) -> (f64, Vec<f64>) {
    let p = theta.len();
    if alpha == 0.0 {
        return (0.0, vec![0.0; p]);
    }
    let (_, gbar) = backprop::mean_loglik_and_grad::<f64>(theta, arch, ds, rows);
    let norm = l2_norm(&gbar);
    // subgradient convention: exactly zero mean gradient gives a zero penalty
    // gradient instead of a division blowup
    if norm == 0.0 {
        return (0.0, vec![0.0; p]);
    }
    let dual_theta: Vec<Dual> = theta
        .iter()
        .zip(&gbar)
        .map(|(&v, &g)| Dual::new(v, g / norm))
        .collect();
    let (_, gdual) = backprop::mean_loglik_and_grad::<Dual>(&dual_theta, arch, ds, rows);
    let grads = gdual.iter().map(|d| alpha * d.t).collect();
    (alpha * norm, grads)
}

/// Fisher penalty alpha * ||mean batch log-likelihood gradient||_2 and its
/// exact parameter gradient (forward-over-reverse second pass).
pub fn fisher_penalty(
    model: &MlpModel,
    ds: &LabeledDataset,
    alpha: f64,
) -> Result<(f64, Vec<f64>)> {
    check_compat(model, ds)?;
    if alpha < 0.0 {
        return Err(Error::InvalidParameter("alpha must be >= 0".into()));
    }
    Ok(fisher_penalty_theta(
        &model.theta,
        &model.arch,
        ds,
        &all_rows(ds),
        alpha,
    ))
}

fn objective_grad(
    theta: &[f64],
    arch: &Arch,
    bias_mask: &[bool],
    ds: &LabeledDataset,
    rows: &[usize],
    weight_decay: f64,
    fisher_alpha: f64,
) -> (f64, Vec<f64>) {
    let (mean_ll, mut grad) = backprop::mean_loglik_and_grad::<f64>(theta, arch, ds, rows);
    let mut loss = -mean_ll;
    for g in &mut grad {
        *g = -*g;
    }
    if weight_decay > 0.0 {
        for ((g, &t), &is_bias) in grad.iter_mut().zip(theta).zip(bias_mask) {
            if !is_bias {
                loss += 0.5 * weight_decay * t * t;
                *g += weight_decay * t;
            }
        }
    }
    if fisher_alpha > 0.0 {
        let (penalty, pgrad) = fisher_penalty_theta(theta, arch, ds, rows, fisher_alpha);
        loss += penalty;
        for (g, pg) in grad.iter_mut().zip(pgrad) {
            *g += pg;
        }
    }
    (loss, grad)
}

/// Loss at theta plus the gradient evaluated at the ASAM-perturbed point
/// theta + rho * T^2 g / ||T g|| with T = |theta| + eta.
#[allow(clippy::too_many_arguments)]
fn asam_gradient(
    theta: &[f64],
    arch: &Arch,
    bias_mask: &[bool],
    ds: &LabeledDataset,
    rows: &[usize],
    rho: f64,
    eta: f64,
    weight_decay: f64,
) -> (f64, Vec<f64>) {
    let (loss, g0) = objective_grad(theta, arch, bias_mask, ds, rows, weight_decay, 0.0);
    let t: Vec<f64> = theta.iter().map(|&v| v.abs() + eta).collect();
    let tg_norm = t
        .iter()
        .zip(&g0)
        .map(|(ti, gi)| (ti * gi) * (ti * gi))
        .sum::<f64>()
        .sqrt();
    if tg_norm == 0.0 {
        return (loss, g0);
    }
    let perturbed: Vec<f64> = theta
        .iter()
        .zip(&t)
        .zip(&g0)
        .map(|((&v, &ti), &gi)| v + rho * ti * ti * gi / tg_norm)
        .collect();
    let (_, g1) = objective_grad(&perturbed, arch, bias_mask, ds, rows, weight_decay, 0.0);
    (loss, g1)
}

/// One standalone ASAM update on the data term (no weight decay, no
/// momentum): ascend to the scaled worst-case perturbation, take the gradient
/// there, descend from the unperturbed parameters.
pub fn asam_step(
    model: &MlpModel,
    ds: &LabeledDataset,
    rho: f64,
    eta: f64,
    lr: f64,
) -> Result<MlpModel> {
    check_compat(model, ds)?;
    if rho.is_nan() || rho <= 0.0 {
        return Err(Error::InvalidParameter("rho must be > 0".into()));
    }
    if eta < 0.0 {
        return Err(Error::InvalidParameter("eta must be >= 0".into()));
    }
    if lr.is_nan() || lr <= 0.0 {
        return Err(Error::InvalidParameter("lr must be > 0".into()));
    }
    let rows = all_rows(ds);
    let (_, g) = asam_gradient(
        &model.theta,
        &model.arch,
        &model.bias_mask,
        ds,
        &rows,
        rho,
        eta,
        0.0,
    );
    let mut out = model.clone();
    for (t, gi) in out.theta.iter_mut().zip(g) {
        *t -= lr * gi;
    }
    Ok(out)
}

/// Cosine-annealed learning rate over `total_steps` updates; equals
/// `lr_initial` at step 0 and `lr_final` at the last step.
pub fn cosine_lr(step: usize, total_steps: usize, lr_initial: f64, lr_final: f64) -> f64 {
    if total_steps <= 1 {
        return lr_initial;
    }
    let frac = step as f64 / (total_steps - 1) as f64;
    lr_final + (lr_initial - lr_final) * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos())
}

/// Trains a seeded model by mini-batch SGD with momentum, cosine-annealed
/// learning rate, weight decay, and optionally the Fisher penalty or ASAM.
/// Fully deterministic given the config seed; `epochs == 0` returns the
/// seeded initialization unchanged.
pub fn train_map(
    ds: &LabeledDataset,
    widths: &[usize],
    cfg: &TrainConfig,
) -> Result<MlpModel> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::Data("training dataset is empty".into()));
    }
    if widths.first() != Some(&ds.dim()) {
        return Err(Error::ShapeMismatch(format!(
            "architecture input width {:?} != dataset dim {}",
            widths.first(),
            ds.dim()
        )));
    }
    let mut model = MlpModel::init(widths, ds.task(), cfg.seed)?;
    if cfg.epochs == 0 {
        return Ok(model);
    }
    // stream 1 keeps the shuffle sequence independent of the init draws
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let n = ds.len();
    let n_batches = n.div_ceil(cfg.batch_size);
    let total_steps = cfg.epochs * n_batches;
    let mut velocity = vec![0.0; model.param_count()];
    let mut perm: Vec<usize> = (0..n).collect();
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        perm.shuffle(&mut rng);
        for batch in perm.chunks(cfg.batch_size) {
            let lr = cosine_lr(step, total_steps, cfg.lr_initial, cfg.lr_final);
            let (loss, grad) = match &cfg.asam {
                Some(asam) => asam_gradient(
                    &model.theta,
                    &model.arch,
                    &model.bias_mask,
                    ds,
                    batch,
                    asam.rho,
                    asam.eta,
                    cfg.weight_decay,
                ),
                None => objective_grad(
                    &model.theta,
                    &model.arch,
                    &model.bias_mask,
                    ds,
                    batch,
                    cfg.weight_decay,
                    cfg.fisher_penalty_alpha,
                ),
            };
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged { epoch });
            }
            for ((v, g), t) in velocity.iter_mut().zip(grad).zip(model.theta.iter_mut()) {
                *v = cfg.momentum * *v + g;
                *t -= lr * *v;
            }
            step += 1;
        }
    }
    Ok(model)
}

/// Fraction of samples whose argmax logit matches the label.
pub fn classification_accuracy(model: &MlpModel, ds: &LabeledDataset) -> Result<f64> {
    check_compat(model, ds)?;
    let labels = ds
        .class_labels()
        .ok_or_else(|| Error::Unsupported("accuracy is classification-only".into()))?;
    let mut correct = 0;
    for (i, &label) in labels.iter().enumerate() {
        let fwd = model.forward(ds.feature_row(i))?;
        let logits = fwd.logits.as_slice().expect("contiguous");
        let pred = logits
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite logits"))
            .map(|(i, _)| i)
            .expect("non-empty logits");
        if pred == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / ds.len() as f64)
}

/// Sum of per-sample log-likelihoods at the current parameters.
pub fn total_loglik(model: &MlpModel, ds: &LabeledDataset) -> Result<f64> {
    check_compat(model, ds)?;
    let mut total = 0.0;
    for i in 0..ds.len() {
        let acts = forward_acts::<f64>(&model.theta, &model.arch, ds.feature_row(i));
        let (ll, _) = loglik_delta(acts.last().expect("outputs"), ds.label(i));
        total += ll;
    }
    Ok(total)
}
