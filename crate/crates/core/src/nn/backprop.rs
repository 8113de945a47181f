//! Generic forward/backward passes over a flat parameter vector.
//!
//! Layout of the flat vector: layers in order, each layer contributing its
//! weight matrix row-major (out x in) followed by its bias vector. The
//! separate, feature-major *last-layer* ordering used by the curvature and
//! Laplace modules is assembled in [`super`], not here.

use crate::data::SampleLabel;

use super::scalar::Real;

#[derive(Clone, Debug)]
pub(crate) struct Arch {
    /// (out, in) per layer.
    pub dims: Vec<(usize, usize)>,
}

impl Arch {
    pub fn from_widths(widths: &[usize]) -> Self {
        let dims = widths.windows(2).map(|w| (w[1], w[0])).collect();
        Self { dims }
    }

    pub fn n_layers(&self) -> usize {
        self.dims.len()
    }

    pub fn param_count(&self) -> usize {
        self.dims.iter().map(|&(o, i)| o * (i + 1)).sum()
    }

    /// Start of layer `k`'s weights in the flat vector.
    pub fn weight_offset(&self, k: usize) -> usize {
        self.dims[..k].iter().map(|&(o, i)| o * (i + 1)).sum()
    }

    pub fn bias_offset(&self, k: usize) -> usize {
        let (o, i) = self.dims[k];
        self.weight_offset(k) + o * i
    }
}

fn relu<S: Real>(x: S) -> S {
    let zero = S::lift(0.0);
    if x > zero {
        x
    } else {
        zero
    }
}

/// Activations per layer: `acts[0]` is the lifted input, `acts[k]` the output
/// of layer k-1 (ReLU for hidden layers, linear for the final one).
pub(crate) fn forward_acts<S: Real>(theta: &[S], arch: &Arch, x: &[f64]) -> Vec<Vec<S>> {
    let n_layers = arch.n_layers();
    let mut acts: Vec<Vec<S>> = Vec::with_capacity(n_layers + 1);
    acts.push(x.iter().map(|&v| S::lift(v)).collect());
    for k in 0..n_layers {
        let (out, inp) = arch.dims[k];
        let w = &theta[arch.weight_offset(k)..];
        let b = &theta[arch.bias_offset(k)..];
        let prev = &acts[k];
        let mut z = Vec::with_capacity(out);
        for o in 0..out {
            let mut s = b[o];
            let row = &w[o * inp..(o + 1) * inp];
            for (wi, ai) in row.iter().zip(prev.iter()) {
                s = s + *wi * *ai;
            }
            z.push(if k + 1 < n_layers { relu(s) } else { s });
        }
        acts.push(z);
    }
    acts
}

pub(crate) fn stable_softmax<S: Real>(logits: &[S]) -> Vec<S> {
    let mut m = logits[0];
    for &z in &logits[1..] {
        if z > m {
            m = z;
        }
    }
    let exps: Vec<S> = logits.iter().map(|&z| (z - m).exp()).collect();
    let mut total = S::lift(0.0);
    for &e in &exps {
        total = total + e;
    }
    exps.into_iter().map(|e| e / total).collect()
}

/// Log-likelihood of one sample and its gradient w.r.t. the network outputs.
///
/// Classification: log softmax at the true class, delta = onehot - softmax.
/// Regression (unit-variance Gaussian, constant dropped): -(f-y)^2/2,
/// delta = y - f.
pub(crate) fn loglik_delta<S: Real>(outputs: &[S], label: SampleLabel) -> (S, Vec<S>) {
    match label {
        SampleLabel::Class(y) => {
            let mut m = outputs[0];
            for &z in &outputs[1..] {
                if z > m {
                    m = z;
                }
            }
            let mut total = S::lift(0.0);
            let shifted: Vec<S> = outputs.iter().map(|&z| z - m).collect();
            for &z in &shifted {
                total = total + z.exp();
            }
            let lse = m + total.ln();
            let loglik = outputs[y] - lse;
            let delta = outputs
                .iter()
                .enumerate()
                .map(|(c, &z)| {
                    let p = (z - lse).exp();
                    if c == y {
                        S::lift(1.0) - p
                    } else {
                        -p
                    }
                })
                .collect();
            (loglik, delta)
        }
        SampleLabel::Value(y) => {
            let r = S::lift(y) - outputs[0];
            let half = S::lift(0.5);
            (-(r * r * half), vec![r])
        }
    }
}

/// Accumulates the parameter gradient of a per-sample scalar whose gradient
/// w.r.t. the network outputs is `delta`. `acts` must come from
/// [`forward_acts`] on the same `theta`.
pub(crate) fn accumulate_backward<S: Real>(
    theta: &[S],
    arch: &Arch,
    acts: &[Vec<S>],
    delta: Vec<S>,
    grad: &mut [S],
) {
    let zero = S::lift(0.0);
    let mut d = delta;
    for k in (0..arch.n_layers()).rev() {
        let (out, inp) = arch.dims[k];
        let w_off = arch.weight_offset(k);
        let b_off = arch.bias_offset(k);
        let prev = &acts[k];
        for o in 0..out {
            let di = d[o];
            grad[b_off + o] = grad[b_off + o] + di;
            let row = w_off + o * inp;
            for j in 0..inp {
                grad[row + j] = grad[row + j] + di * prev[j];
            }
        }
        if k > 0 {
            let mut d_prev = vec![zero; inp];
            for (o, &di) in d.iter().enumerate().take(out) {
                let row = w_off + o * inp;
                for j in 0..inp {
                    d_prev[j] = d_prev[j] + theta[row + j] * di;
                }
            }
            // ReLU mask: prev holds post-activation values
            for (dp, &a) in d_prev.iter_mut().zip(prev.iter()) {
                if a <= zero {
                    *dp = zero;
                }
            }
            d = d_prev;
        }
    }
}

/// Mean log-likelihood over the given sample rows and its parameter gradient.
pub(crate) fn mean_loglik_and_grad<S: Real>(
    theta: &[S],
    arch: &Arch,
    ds: &crate::data::LabeledDataset,
    rows: &[usize],
) -> (S, Vec<S>) {
    let mut grad = vec![S::lift(0.0); theta.len()];
    let mut total = S::lift(0.0);
    for &i in rows {
        let acts = forward_acts(theta, arch, ds.feature_row(i));
        let (ll, delta) = loglik_delta(acts.last().expect("outputs"), ds.label(i));
        total = total + ll;
        accumulate_backward(theta, arch, &acts, delta, &mut grad);
    }
    let scale = S::lift(1.0 / rows.len() as f64);
    for g in &mut grad {
        *g = *g * scale;
    }
    (total * scale, grad)
}
