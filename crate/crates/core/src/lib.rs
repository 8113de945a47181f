//! Last-layer Laplace approximation toolkit.
//!
//! The crate is organized around a small pipeline:
//!
//! - [`data`]: seeded synthetic dataset generators (half-moons, sinusoid,
//!   separability-controlled blobs), deterministic splits, CSV import/export.
//! - [`nn`]: small feed-forward networks trained by MAP estimation with
//!   optional Fisher-penalty or ASAM regularization, plus exact per-sample
//!   gradients of the log-likelihood.
//! - [`curvature`]: last-layer Hessian approximations (diagonal empirical
//!   Fisher, diagonal GGN, K-FAC, full empirical Fisher as a small-scale
//!   oracle) and their spectral statistics.
//! - [`laplace`]: Gaussian posteriors over the last layer — standard
//!   curvature + λI, or identity curvature λI (ICLA) — with marginal
//!   likelihood optimization of λ and linearized predictive distributions.
//! - [`metrics`]: OOD detection AUROC, calibration measures (ECE, NLL,
//!   Brier), the mean class-wise cosine similarity (MCCS) separability
//!   measure, and the ICLA-vs-LLLA performance gap.
//!
//! Everything is deterministic given the seeds in the public APIs; models
//! are immutable during evaluation and all evaluation entry points are pure,
//! so they can be called concurrently on disjoint inputs.

pub mod curvature;
pub mod data;
pub mod error;
pub mod laplace;
pub mod metrics;
pub mod nn;
pub(crate) mod linalg;

pub use curvature::{CurvatureEstimate, CurvaturePayload, SpectrumStats};
pub use data::{LabeledDataset, Labels, Task};
pub use error::{Error, Result};
pub use laplace::{MarglikConfig, MarglikOutcome, PosteriorSpec, PredictiveDistribution};
pub use metrics::EvalReport;
pub use nn::{AsamConfig, ForwardResult, MlpModel, TrainConfig};
