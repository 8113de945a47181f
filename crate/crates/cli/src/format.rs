//! Versioned JSON file formats for models and posteriors.
//!
//! Both formats are single documents with `"schema_version": 1`, flattened
//! parameters as decimal floats with round-trip precision, and a `kind` tag
//! (`"model"` / `"posterior"`). serde_json writes shortest round-trip float
//! representations, so save/load is lossless and re-running a command
//! produces byte-identical files.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use icla_core::curvature::{CurvatureEstimate, CurvaturePayload};
use icla_core::laplace::{build_posterior, MarglikOutcome, PosteriorSpec};
use icla_core::{Error, MlpModel, Result, Task};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TaskSpec {
    Classification { classes: usize },
    Regression,
}

impl From<Task> for TaskSpec {
    fn from(task: Task) -> Self {
        match task {
            Task::Classification { classes } => TaskSpec::Classification { classes },
            Task::Regression => TaskSpec::Regression,
        }
    }
}

impl From<&TaskSpec> for Task {
    fn from(spec: &TaskSpec) -> Self {
        match spec {
            TaskSpec::Classification { classes } => Task::Classification { classes: *classes },
            TaskSpec::Regression => Task::Regression,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LayerSpec {
    /// Row-major out x in.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub kind: String,
    pub task: TaskSpec,
    pub input_dim: usize,
    pub layer_widths: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    /// Training seed the parameters came from, for provenance.
    pub train_seed: Option<u64>,
}

impl ModelFile {
    pub fn from_model(model: &MlpModel, train_seed: Option<u64>) -> Self {
        let layers = model
            .layers()
            .into_iter()
            .map(|(w, b)| LayerSpec {
                weights: w.rows().into_iter().map(|r| r.to_vec()).collect(),
                bias: b.to_vec(),
            })
            .collect();
        Self {
            schema_version: SCHEMA_VERSION,
            kind: "model".into(),
            task: model.task().into(),
            input_dim: model.input_dim(),
            layer_widths: model.layer_widths().to_vec(),
            layers,
            train_seed,
        }
    }

    pub fn into_model(self) -> Result<MlpModel> {
        let mut layers = Vec::with_capacity(self.layers.len());
        for spec in &self.layers {
            let out = spec.weights.len();
            let inp = spec.weights.first().map_or(0, Vec::len);
            if spec.weights.iter().any(|row| row.len() != inp) {
                return Err(Error::ShapeMismatch("ragged weight matrix".into()));
            }
            let flat: Vec<f64> = spec.weights.iter().flatten().copied().collect();
            let w = Array2::from_shape_vec((out, inp), flat)
                .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
            layers.push((w, Array1::from_vec(spec.bias.clone())));
        }
        MlpModel::from_parts(&layers, (&self.task).into())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CurvatureSpec {
    Zero,
    DiagEf { diag: Vec<f64>, n_samples: usize },
    DiagGgn { diag: Vec<f64>, n_samples: usize },
    Kfac { a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, n_samples: usize },
    FullEf { matrix: Vec<Vec<f64>>, n_samples: usize },
}

fn to_matrix(rows: &[Vec<f64>], what: &str) -> Result<Array2<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(Error::ShapeMismatch(format!("ragged {what} matrix")));
    }
    Array2::from_shape_vec((n, m), rows.iter().flatten().copied().collect())
        .map_err(|e| Error::ShapeMismatch(e.to_string()))
}

fn from_matrix(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

impl CurvatureSpec {
    pub fn from_estimate(est: &CurvatureEstimate) -> Self {
        match &est.payload {
            CurvaturePayload::Zero => CurvatureSpec::Zero,
            CurvaturePayload::DiagEf(d) => {
                CurvatureSpec::DiagEf { diag: d.to_vec(), n_samples: est.n_samples }
            }
            CurvaturePayload::DiagGgn(d) => {
                CurvatureSpec::DiagGgn { diag: d.to_vec(), n_samples: est.n_samples }
            }
            CurvaturePayload::Kfac { a, b } => CurvatureSpec::Kfac {
                a: from_matrix(a),
                b: from_matrix(b),
                n_samples: est.n_samples,
            },
            CurvaturePayload::FullEf(m) => {
                CurvatureSpec::FullEf { matrix: from_matrix(m), n_samples: est.n_samples }
            }
        }
    }

    pub fn into_estimate(&self, d: usize) -> Result<CurvatureEstimate> {
        let (payload, n_samples) = match self {
            CurvatureSpec::Zero => (CurvaturePayload::Zero, 0),
            CurvatureSpec::DiagEf { diag, n_samples } => {
                (CurvaturePayload::DiagEf(Array1::from_vec(diag.clone())), *n_samples)
            }
            CurvatureSpec::DiagGgn { diag, n_samples } => {
                (CurvaturePayload::DiagGgn(Array1::from_vec(diag.clone())), *n_samples)
            }
            CurvatureSpec::Kfac { a, b, n_samples } => (
                CurvaturePayload::Kfac { a: to_matrix(a, "kfac A")?, b: to_matrix(b, "kfac B")? },
                *n_samples,
            ),
            CurvatureSpec::FullEf { matrix, n_samples } => {
                (CurvaturePayload::FullEf(to_matrix(matrix, "full_ef")?), *n_samples)
            }
        };
        let est = CurvatureEstimate { payload, d, n_samples };
        match &est.payload {
            CurvaturePayload::DiagEf(v) | CurvaturePayload::DiagGgn(v) if v.len() != d => {
                Err(Error::ShapeMismatch(format!(
                    "curvature diagonal has {} entries, expected {d}",
                    v.len()
                )))
            }
            CurvaturePayload::FullEf(m) if m.nrows() != d || m.ncols() != d => {
                Err(Error::ShapeMismatch(format!(
                    "curvature matrix is {}x{}, expected {d}x{d}",
                    m.nrows(),
                    m.ncols()
                )))
            }
            _ => Ok(est),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MarglikSummary {
    pub steps: usize,
    pub evidence_initial: f64,
    pub evidence_final: f64,
    pub clamp_events: usize,
}

impl MarglikSummary {
    pub fn from_outcome(out: &MarglikOutcome) -> Self {
        Self {
            steps: out.evidence.len().saturating_sub(1),
            evidence_initial: *out.evidence.first().expect("non-empty trajectory"),
            evidence_final: *out.evidence.last().expect("non-empty trajectory"),
            clamp_events: out.clamp_events,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PosteriorFile {
    pub schema_version: u32,
    pub kind: String,
    /// Method label (map, llla-ef, llla-ggn, llla-kfac, icla, icla-zero).
    pub method: String,
    pub d: usize,
    pub lambda: f64,
    pub w_map: Vec<f64>,
    pub curvature: CurvatureSpec,
    pub marglik: Option<MarglikSummary>,
}

impl PosteriorFile {
    pub fn from_posterior(
        post: &PosteriorSpec,
        method: &str,
        marglik: Option<&MarglikOutcome>,
    ) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            kind: "posterior".into(),
            method: method.into(),
            d: post.d(),
            lambda: post.lambda(),
            w_map: post.w_map().to_vec(),
            curvature: CurvatureSpec::from_estimate(post.curvature()),
            marglik: marglik.map(MarglikSummary::from_outcome),
        }
    }

    pub fn into_posterior(&self) -> Result<PosteriorSpec> {
        let curv = self.curvature.into_estimate(self.d)?;
        build_posterior(Array1::from_vec(self.w_map.clone()), curv, self.lambda)
    }
}

fn check_header(version: u32, kind: &str, expected: &str) -> Result<()> {
    if version != SCHEMA_VERSION {
        return Err(Error::Data(format!(
            "unsupported schema_version {version}, expected {SCHEMA_VERSION}"
        )));
    }
    if kind != expected {
        return Err(Error::Data(format!(
            "file kind is '{kind}', expected '{expected}'"
        )));
    }
    Ok(())
}

pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| Error::Data(format!("json encode: {e}")))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn save_model(model: &MlpModel, train_seed: Option<u64>, path: impl AsRef<Path>) -> Result<()> {
    write_json(&ModelFile::from_model(model, train_seed), path)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(MlpModel, ModelFile)> {
    let file = File::open(path)?;
    let spec: ModelFile = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::Data(format!("model file: {e}")))?;
    check_header(spec.schema_version, &spec.kind, "model")?;
    let model = spec.clone().into_model()?;
    Ok((model, spec))
}

pub fn save_posterior(
    post: &PosteriorSpec,
    method: &str,
    marglik: Option<&MarglikOutcome>,
    path: impl AsRef<Path>,
) -> Result<()> {
    write_json(&PosteriorFile::from_posterior(post, method, marglik), path)
}

pub fn load_posterior(path: impl AsRef<Path>) -> Result<(PosteriorSpec, PosteriorFile)> {
    let file = File::open(path)?;
    let spec: PosteriorFile = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::Data(format!("posterior file: {e}")))?;
    check_header(spec.schema_version, &spec.kind, "posterior")?;
    let post = spec.into_posterior()?;
    Ok((post, spec))
}
