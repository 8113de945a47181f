//! Seeded synthetic dataset generators, deterministic splits, and CSV IO.
//!
//! All generators are pure functions of their arguments including the seed
//! (ChaCha8 keyed by the seed), so identical calls produce identical data on
//! every platform.
//!
//! CSV schema for labeled data: header `f0,f1,...,f{D-1},label`, UTF-8, one
//! sample per line, LF line endings. Features (and regression targets) are
//! written with full round-trip precision and always carry a decimal point or
//! exponent; classification labels are bare non-negative integers. The label
//! column type is inferred on load from that distinction. Unlabeled matrices
//! (e.g. outlier sets) use the same schema without the `label` column.

use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};

/// Prediction task a dataset (and a model) is built for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Classification { classes: usize },
    Regression,
}

/// Label storage for a dataset.
#[derive(Clone, Debug, PartialEq)]
pub enum Labels {
    /// Class indices in `[0, n_classes)`.
    Classes { values: Vec<usize>, n_classes: usize },
    /// Real-valued regression targets.
    Values(Vec<f64>),
}

/// One sample's label.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SampleLabel {
    Class(usize),
    Value(f64),
}

/// A feature matrix with labels. Features are stored row-major (one sample
/// per row) in standard layout.
#[derive(Clone, Debug)]
pub struct LabeledDataset {
    features: Array2<f64>,
    labels: Labels,
    name: String,
}

impl LabeledDataset {
    pub fn classification(
        features: Array2<f64>,
        labels: Vec<usize>,
        n_classes: usize,
        name: impl Into<String>,
    ) -> Result<Self> {
        if n_classes == 0 {
            return Err(Error::InvalidParameter("n_classes must be >= 1".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::Data(format!(
                "label {bad} out of range for {n_classes} classes"
            )));
        }
        Self::build(features, Labels::Classes { values: labels, n_classes }, name.into())
    }

    pub fn regression(
        features: Array2<f64>,
        targets: Vec<f64>,
        name: impl Into<String>,
    ) -> Result<Self> {
        if let Some(bad) = targets.iter().find(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite regression target {bad}")));
        }
        Self::build(features, Labels::Values(targets), name.into())
    }

    fn build(features: Array2<f64>, labels: Labels, name: String) -> Result<Self> {
        let n = features.nrows();
        if n == 0 {
            return Err(Error::Data("dataset is empty".into()));
        }
        let n_labels = match &labels {
            Labels::Classes { values, .. } => values.len(),
            Labels::Values(values) => values.len(),
        };
        if n_labels != n {
            return Err(Error::ShapeMismatch(format!(
                "{n} feature rows but {n_labels} labels"
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite feature entry".into()));
        }
        let features = to_standard_layout(features);
        Ok(Self { features, labels, name })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Feature dimensionality D.
    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn task(&self) -> Task {
        match &self.labels {
            Labels::Classes { n_classes, .. } => Task::Classification { classes: *n_classes },
            Labels::Values(_) => Task::Regression,
        }
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    /// Row `i` as a contiguous slice.
    pub fn feature_row(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.features.as_slice().expect("standard layout")[i * d..(i + 1) * d]
    }

    pub fn label(&self, i: usize) -> SampleLabel {
        match &self.labels {
            Labels::Classes { values, .. } => SampleLabel::Class(values[i]),
            Labels::Values(values) => SampleLabel::Value(values[i]),
        }
    }

    pub fn class_labels(&self) -> Option<&[usize]> {
        match &self.labels {
            Labels::Classes { values, .. } => Some(values),
            Labels::Values(_) => None,
        }
    }

    pub fn targets(&self) -> Option<&[f64]> {
        match &self.labels {
            Labels::Values(values) => Some(values),
            Labels::Classes { .. } => None,
        }
    }

    /// New dataset from the given row indices, in the given order.
    pub fn subset(&self, indices: &[usize], name: impl Into<String>) -> Result<Self> {
        let d = self.dim();
        let mut flat = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            flat.extend_from_slice(self.feature_row(i));
        }
        let features = Array2::from_shape_vec((indices.len(), d), flat)
            .expect("consistent subset shape");
        let labels = match &self.labels {
            Labels::Classes { values, n_classes } => Labels::Classes {
                values: indices.iter().map(|&i| values[i]).collect(),
                n_classes: *n_classes,
            },
            Labels::Values(values) => {
                Labels::Values(indices.iter().map(|&i| values[i]).collect())
            }
        };
        Self::build(features, labels, name.into())
    }
}

fn to_standard_layout(a: Array2<f64>) -> Array2<f64> {
    if a.as_slice().is_some() {
        a
    } else {
        a.as_standard_layout().to_owned()
    }
}

/// Centroid of the noiseless half-moons figure (midpoint of the two arc
/// centroids); outlier rings are centered here.
pub const MOONS_CENTROID: [f64; 2] = [0.5, 0.25];

/// Two interleaved unit semicircles with Gaussian coordinate noise.
///
/// Class 0 is the upper unit semicircle centered at the origin; class 1 is
/// the lower arc offset by (1.0, 0.5). With an odd `n`, class 0 receives the
/// extra sample.
pub fn gen_half_moons(n: usize, noise: f64, seed: u64) -> Result<LabeledDataset> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("n = {n}, need n >= 2")));
    }
    if noise < 0.0 {
        return Err(Error::InvalidParameter("noise must be >= 0".into()));
    }
    let n0 = n / 2 + n % 2;
    let n1 = n / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut flat = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    let arc = |i: usize, count: usize| -> f64 {
        if count <= 1 {
            0.0
        } else {
            std::f64::consts::PI * i as f64 / (count - 1) as f64
        }
    };
    for i in 0..n0 {
        let t = arc(i, n0);
        let (nx, ny): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
        flat.push(t.cos() + noise * nx);
        flat.push(t.sin() + noise * ny);
        labels.push(0);
    }
    for i in 0..n1 {
        let t = arc(i, n1);
        let (nx, ny): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
        flat.push(1.0 - t.cos() + noise * nx);
        flat.push(0.5 - t.sin() + noise * ny);
        labels.push(1);
    }
    let features = Array2::from_shape_vec((n, 2), flat).expect("moons shape");
    LabeledDataset::classification(features, labels, 2, "half-moons")
}

/// `k` outlier points placed at seeded uniform angles on a circle of the
/// given radius around [`MOONS_CENTROID`]. Returns an unlabeled k x 2 matrix.
pub fn gen_outliers(k: usize, radius: f64, seed: u64) -> Result<Array2<f64>> {
    if k < 1 {
        return Err(Error::InvalidParameter("k must be >= 1".into()));
    }
    if radius <= 0.0 {
        return Err(Error::InvalidParameter("radius must be > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut flat = Vec::with_capacity(2 * k);
    for _ in 0..k {
        let a = rng.random_range(0.0..std::f64::consts::TAU);
        flat.push(MOONS_CENTROID[0] + radius * a.cos());
        flat.push(MOONS_CENTROID[1] + radius * a.sin());
    }
    Ok(Array2::from_shape_vec((k, 2), flat).expect("outlier shape"))
}

/// Regression dataset y = sin(x) + noise, x uniform on `x_range`.
pub fn gen_sinusoid(n: usize, noise: f64, x_range: (f64, f64), seed: u64) -> Result<LabeledDataset> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("n = {n}, need n >= 2")));
    }
    let (lo, hi) = x_range;
    if hi.is_nan() || lo.is_nan() || hi <= lo {
        return Err(Error::InvalidParameter(format!(
            "degenerate x range [{lo}, {hi}]"
        )));
    }
    if noise < 0.0 {
        return Err(Error::InvalidParameter("noise must be >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut flat = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for _ in 0..n {
        let x = rng.random_range(lo..hi);
        let e: f64 = rng.sample(StandardNormal);
        flat.push(x);
        targets.push(x.sin() + noise * e);
    }
    let features = Array2::from_shape_vec((n, 1), flat).expect("sinusoid shape");
    LabeledDataset::regression(features, targets, "sinusoid")
}

/// Isotropic Gaussian class clusters with means at `radius` times unit
/// directions: evenly spread on the circle for `dim == 2`, seeded
/// Gram-Schmidt-orthonormalized random directions otherwise. Separability is
/// controlled by the radius/sigma ratio.
pub fn gen_blobs(
    classes: usize,
    n_per_class: usize,
    radius: f64,
    sigma: f64,
    dim: usize,
    seed: u64,
) -> Result<LabeledDataset> {
    if classes < 2 {
        return Err(Error::InvalidParameter("need at least 2 classes".into()));
    }
    if dim < 2 {
        return Err(Error::InvalidParameter("need dim >= 2".into()));
    }
    if n_per_class < 1 {
        return Err(Error::InvalidParameter("n_per_class must be >= 1".into()));
    }
    if sigma <= 0.0 {
        return Err(Error::InvalidParameter("sigma must be > 0".into()));
    }
    if radius < 0.0 {
        return Err(Error::InvalidParameter("radius must be >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut means: Vec<Vec<f64>> = Vec::with_capacity(classes);
    if dim == 2 {
        for k in 0..classes {
            let a = std::f64::consts::TAU * k as f64 / classes as f64;
            means.push(vec![radius * a.cos(), radius * a.sin()]);
        }
    } else {
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(classes);
        while basis.len() < classes {
            let mut v: Vec<f64> = (0..dim).map(|_| normal.sample(&mut rng)).collect();
            if basis.len() < dim {
                for b in &basis {
                    let dot: f64 = v.iter().zip(b).map(|(a, b)| a * b).sum();
                    for (vi, bi) in v.iter_mut().zip(b) {
                        *vi -= dot * bi;
                    }
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-9 {
                continue;
            }
            for vi in &mut v {
                *vi /= norm;
            }
            basis.push(v);
        }
        means = basis
            .into_iter()
            .map(|u| u.into_iter().map(|x| radius * x).collect())
            .collect();
    }
    let n = classes * n_per_class;
    let mut flat = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for (k, mean) in means.iter().enumerate() {
        for _ in 0..n_per_class {
            for m in mean {
                flat.push(m + sigma * normal.sample(&mut rng));
            }
            labels.push(k);
        }
    }
    let features = Array2::from_shape_vec((n, dim), flat).expect("blobs shape");
    LabeledDataset::classification(features, labels, classes, "blobs")
}

/// `k` points on the sphere/circle of the given radius around `center`
/// (seeded random directions). Used as a far-OOD source for blob datasets.
pub fn gen_ring(k: usize, radius: f64, center: &[f64], seed: u64) -> Result<Array2<f64>> {
    if k < 1 {
        return Err(Error::InvalidParameter("k must be >= 1".into()));
    }
    if radius <= 0.0 {
        return Err(Error::InvalidParameter("radius must be > 0".into()));
    }
    let dim = center.len();
    if dim < 1 {
        return Err(Error::InvalidParameter("center must be non-empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut flat = Vec::with_capacity(k * dim);
    for _ in 0..k {
        loop {
            let v: Vec<f64> = (0..dim).map(|_| normal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-12 {
                continue;
            }
            flat.extend(v.iter().zip(center).map(|(x, c)| c + radius * x / norm));
            break;
        }
    }
    Ok(Array2::from_shape_vec((k, dim), flat).expect("ring shape"))
}

/// Seeded permutation followed by contiguous slicing into train/val/test,
/// class-stratified for classification datasets.
pub fn split(
    ds: &LabeledDataset,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset, LabeledDataset)> {
    let (ft, fv, fe) = fractions;
    if ft <= 0.0 || fv <= 0.0 || fe <= 0.0 {
        return Err(Error::InvalidParameter(
            "all split fractions must be positive".into(),
        ));
    }
    if (ft + fv + fe - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "split fractions sum to {}, expected 1",
            ft + fv + fe
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_idx = Vec::new();
    let mut val_idx = Vec::new();
    let mut test_idx = Vec::new();
    let mut assign = |indices: &mut Vec<usize>, rng: &mut ChaCha8Rng| {
        indices.shuffle(rng);
        let n = indices.len();
        let n_tr = ((ft * n as f64).round() as usize).min(n);
        let n_va = ((fv * n as f64).round() as usize).min(n - n_tr);
        train_idx.extend_from_slice(&indices[..n_tr]);
        val_idx.extend_from_slice(&indices[n_tr..n_tr + n_va]);
        test_idx.extend_from_slice(&indices[n_tr + n_va..]);
    };
    match ds.labels() {
        Labels::Classes { values, n_classes } => {
            for c in 0..*n_classes {
                let mut idx: Vec<usize> = (0..ds.len()).filter(|&i| values[i] == c).collect();
                assign(&mut idx, &mut rng);
            }
        }
        Labels::Values(_) => {
            let mut idx: Vec<usize> = (0..ds.len()).collect();
            assign(&mut idx, &mut rng);
        }
    }
    if train_idx.is_empty() || val_idx.is_empty() || test_idx.is_empty() {
        return Err(Error::InvalidParameter(
            "split produces an empty part; adjust fractions or dataset size".into(),
        ));
    }
    let name = ds.name();
    Ok((
        ds.subset(&train_idx, format!("{name}-train"))?,
        ds.subset(&val_idx, format!("{name}-val"))?,
        ds.subset(&test_idx, format!("{name}-test"))?,
    ))
}

fn from_csv_error(e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            _ => Error::Data("unknown csv io error".into()),
        }
    } else {
        let line = e.position().map(|p| p.line()).unwrap_or(0);
        Error::CsvParse { line, message: e.to_string() }
    }
}

/// Full round-trip float formatting; always carries `.` or an exponent so a
/// written regression label can never be re-read as a class index.
fn fmt_float(v: f64) -> String {
    format!("{v:?}")
}

fn feature_header(d: usize) -> Vec<String> {
    (0..d).map(|i| format!("f{i}")).collect()
}

/// Writes a labeled dataset in the documented CSV schema.
pub fn save_csv(ds: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(from_csv_error)?;
    let mut header = feature_header(ds.dim());
    header.push("label".into());
    w.write_record(&header).map_err(from_csv_error)?;
    for i in 0..ds.len() {
        let mut rec: Vec<String> = ds.feature_row(i).iter().map(|&v| fmt_float(v)).collect();
        rec.push(match ds.label(i) {
            SampleLabel::Class(c) => c.to_string(),
            SampleLabel::Value(v) => fmt_float(v),
        });
        w.write_record(&rec).map_err(from_csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes an unlabeled feature matrix (header `f0..f{D-1}`, no label column).
pub fn save_features_csv(features: &Array2<f64>, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(from_csv_error)?;
    w.write_record(feature_header(features.ncols()))
        .map_err(from_csv_error)?;
    for row in features.rows() {
        let rec: Vec<String> = row.iter().map(|&v| fmt_float(v)).collect();
        w.write_record(&rec).map_err(from_csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn is_integer_token(tok: &str) -> bool {
    !tok.is_empty() && tok.bytes().all(|b| b.is_ascii_digit())
}

fn validate_feature_header(headers: &[&str]) -> Result<()> {
    for (i, h) in headers.iter().enumerate() {
        if *h != format!("f{i}") {
            return Err(Error::CsvParse {
                line: 1,
                message: format!("expected column 'f{i}', found '{h}'"),
            });
        }
    }
    Ok(())
}

struct RawRows {
    dim: usize,
    flat: Vec<f64>,
    tail: Vec<(String, u64)>,
    n: usize,
}

fn read_rows(path: &Path, labeled: bool) -> Result<RawRows> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(from_csv_error)?;
    let headers = rdr.headers().map_err(from_csv_error)?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    if labeled {
        if cols.len() < 2 || cols[cols.len() - 1] != "label" {
            return Err(Error::CsvParse {
                line: 1,
                message: "expected header f0,...,f{D-1},label".into(),
            });
        }
        validate_feature_header(&cols[..cols.len() - 1])?;
    } else {
        if cols.is_empty() {
            return Err(Error::CsvParse { line: 1, message: "empty header".into() });
        }
        validate_feature_header(&cols)?;
    }
    let dim = cols.len() - usize::from(labeled);
    let mut flat = Vec::new();
    let mut tail = Vec::new();
    let mut n = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(from_csv_error)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        for (i, f) in rec.iter().take(dim).enumerate() {
            let v: f64 = f.trim().parse().map_err(|_| Error::CsvParse {
                line,
                message: format!("column f{i}: cannot parse '{f}' as a float"),
            })?;
            if !v.is_finite() {
                return Err(Error::Data(format!("non-finite feature at line {line}")));
            }
            flat.push(v);
        }
        if labeled {
            tail.push((rec[dim].trim().to_string(), line));
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::Data("dataset is empty".into()));
    }
    Ok(RawRows { dim, flat, tail, n })
}

/// Loads a labeled dataset, inferring classification vs regression from the
/// label column: bare non-negative integers mean class indices, floats mean
/// regression targets. A mixture of the two forms is rejected.
pub fn load_csv(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let rows = read_rows(path, true)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    let features = Array2::from_shape_vec((rows.n, rows.dim), rows.flat).expect("csv shape");
    let all_int = rows.tail.iter().all(|(t, _)| is_integer_token(t));
    if all_int {
        let mut labels = Vec::with_capacity(rows.n);
        for (tok, line) in &rows.tail {
            labels.push(tok.parse::<usize>().map_err(|_| Error::CsvParse {
                line: *line,
                message: format!("cannot parse label '{tok}'"),
            })?);
        }
        let n_classes = labels.iter().copied().max().unwrap_or(0) + 1;
        LabeledDataset::classification(features, labels, n_classes, name)
    } else {
        let any_int = rows.tail.iter().any(|(t, _)| is_integer_token(t));
        if any_int {
            return Err(Error::Data(
                "mixed label types: both integer and float labels present".into(),
            ));
        }
        let mut targets = Vec::with_capacity(rows.n);
        for (tok, line) in &rows.tail {
            let v: f64 = tok.parse().map_err(|_| Error::CsvParse {
                line: *line,
                message: format!("cannot parse label '{tok}' as a float"),
            })?;
            if !v.is_finite() {
                return Err(Error::Data(format!("non-finite target at line {line}")));
            }
            targets.push(v);
        }
        LabeledDataset::regression(features, targets, name)
    }
}

/// Loads an unlabeled feature matrix (header `f0..f{D-1}`).
pub fn load_features_csv(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let rows = read_rows(path.as_ref(), false)?;
    Ok(Array2::from_shape_vec((rows.n, rows.dim), rows.flat).expect("csv shape"))
}
