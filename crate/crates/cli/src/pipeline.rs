//! End-to-end experiment pipelines shared by the subcommands and the
//! acceptance suite: posterior fitting per method, OOD scoring, report
//! assembly, and the three sweep kinds.

use std::collections::BTreeMap;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use serde::Serialize;

use icla_core::curvature::{fit_diag_ef, fit_diag_ggn, fit_kfac_last_layer, spectrum};
use icla_core::data::{gen_blobs, gen_half_moons, gen_outliers, gen_ring, split, LabeledDataset};
use icla_core::laplace::{
    build_posterior, icla_fit, marglik_optimize, predict_proba, predictive, entropy_score,
    MarglikOutcome, PosteriorSpec,
};
use icla_core::metrics::{auroc, brier, ece, mccs, nll, performance_gap, EvalReport};
use icla_core::nn::{train_map, TrainConfig};
use icla_core::{Error, MarglikConfig, MlpModel, Result, Task};

/// Posterior construction methods exposed on the CLI.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Map,
    LllaEf,
    LllaGgn,
    LllaKfac,
    Icla,
    IclaZero,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Map => "map",
            Method::LllaEf => "llla-ef",
            Method::LllaGgn => "llla-ggn",
            Method::LllaKfac => "llla-kfac",
            Method::Icla => "icla",
            Method::IclaZero => "icla-zero",
        }
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "map" => Ok(Method::Map),
            "llla-ef" => Ok(Method::LllaEf),
            "llla-ggn" => Ok(Method::LllaGgn),
            "llla-kfac" => Ok(Method::LllaKfac),
            "icla" => Ok(Method::Icla),
            "icla-zero" => Ok(Method::IclaZero),
            other => Err(Error::InvalidParameter(format!(
                "unknown method '{other}' (expected map, llla-ef, llla-ggn, llla-kfac, icla, icla-zero)"
            ))),
        }
    }
}

/// OOD score assigned to each input (higher = more OOD).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Score {
    /// Probit-adjusted predictive entropy (default).
    Entropy,
    /// Entropy of the raw MAP softmax, ignoring the posterior.
    RawEntropy,
    /// One minus the maximum class probability.
    MaxProb,
}

impl FromStr for Score {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "entropy" => Ok(Score::Entropy),
            "raw-entropy" => Ok(Score::RawEntropy),
            "max-prob" => Ok(Score::MaxProb),
            other => Err(Error::InvalidParameter(format!(
                "unknown score '{other}' (expected entropy, raw-entropy, or max-prob)"
            ))),
        }
    }
}

/// Fits the posterior for a method on the validation data: the named
/// curvature plus a marglik-selected lambda, or the identity-curvature
/// variants. `map` has no posterior and is rejected here.
pub fn fit_posterior(
    model: &MlpModel,
    val: &LabeledDataset,
    method: Method,
    mcfg: &MarglikConfig,
    fit_batch: usize,
) -> Result<(PosteriorSpec, MarglikOutcome)> {
    let w_map = model.last_layer_flat();
    match method {
        Method::Map => Err(Error::Unsupported(
            "map is a point estimate; evaluate it without a posterior".into(),
        )),
        Method::Icla => icla_fit(model, val, mcfg, false, fit_batch),
        Method::IclaZero => icla_fit(model, val, mcfg, true, fit_batch),
        Method::LllaEf | Method::LllaGgn | Method::LllaKfac => {
            let curv = match method {
                Method::LllaEf => fit_diag_ef(model, val, fit_batch)?,
                Method::LllaGgn => fit_diag_ggn(model, val, fit_batch)?,
                Method::LllaKfac => fit_kfac_last_layer(model, val)?,
                _ => unreachable!(),
            };
            let out = marglik_optimize(model, &curv, val, mcfg)?;
            let post = build_posterior(w_map, curv, out.lambda)?;
            Ok((post, out))
        }
    }
}

/// Class probabilities for one input: probit-adjusted posterior predictive,
/// or the raw MAP softmax when no posterior is given.
pub fn class_probs(
    model: &MlpModel,
    posterior: Option<&PosteriorSpec>,
    x: &[f64],
) -> Result<Array1<f64>> {
    match posterior {
        Some(post) => predict_proba(&predictive(model, post, x)?),
        None => model.map_probs(x),
    }
}

fn score_probs(
    model: &MlpModel,
    posterior: Option<&PosteriorSpec>,
    x: &[f64],
    score: Score,
) -> Result<Array1<f64>> {
    match score {
        // raw scoring deliberately bypasses the posterior
        Score::RawEntropy => model.map_probs(x),
        _ => class_probs(model, posterior, x),
    }
}

fn score_of(probs: &Array1<f64>, score: Score) -> Result<f64> {
    match score {
        Score::Entropy | Score::RawEntropy => {
            entropy_score(probs.as_slice().expect("contiguous"))
        }
        Score::MaxProb => {
            Ok(1.0 - probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
        }
    }
}

/// OOD-ness scores for every row of `xs`.
pub fn ood_scores(
    model: &MlpModel,
    posterior: Option<&PosteriorSpec>,
    xs: &Array2<f64>,
    score: Score,
) -> Result<Vec<f64>> {
    if xs.ncols() != model.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "OOD features have dim {}, model expects {}",
            xs.ncols(),
            model.input_dim()
        )));
    }
    let d = xs.ncols();
    let flat = xs.as_slice().ok_or_else(|| {
        Error::ShapeMismatch("feature matrix is not contiguous".into())
    })?;
    let mut out = Vec::with_capacity(xs.nrows());
    for i in 0..xs.nrows() {
        let probs = score_probs(model, posterior, &flat[i * d..(i + 1) * d], score)?;
        out.push(score_of(&probs, score)?);
    }
    Ok(out)
}

/// MCCS of the model's penultimate features over a labeled dataset. Rows
/// whose feature vector is exactly zero (all ReLUs off) are dropped; classes
/// left empty are removed, and at least two classes must survive.
pub fn penultimate_mccs(model: &MlpModel, ds: &LabeledDataset) -> Result<f64> {
    let labels = ds
        .class_labels()
        .ok_or_else(|| Error::Unsupported("mccs needs a classification dataset".into()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut kept_labels = Vec::new();
    for (i, &label) in labels.iter().enumerate() {
        let fwd = model.forward(ds.feature_row(i))?;
        let v = fwd.penultimate.to_vec();
        if v.iter().map(|x| x * x).sum::<f64>() > 0.0 {
            rows.push(v);
            kept_labels.push(label);
        }
    }
    if rows.is_empty() {
        return Err(Error::Data("all penultimate features are zero".into()));
    }
    // compact the surviving class indices
    let mut present: Vec<usize> = kept_labels.clone();
    present.sort_unstable();
    present.dedup();
    if present.len() < 2 {
        return Err(Error::Data(
            "fewer than two classes have nonzero penultimate features".into(),
        ));
    }
    let remap: BTreeMap<usize, usize> =
        present.iter().enumerate().map(|(new, &old)| (old, new)).collect();
    let compact: Vec<usize> = kept_labels.iter().map(|l| remap[l]).collect();
    let dim = rows[0].len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let feats = Array2::from_shape_vec((flat.len() / dim, dim), flat)
        .expect("consistent feature rows");
    mccs(feats.view(), &compact)
}

/// A named OOD feature set.
pub struct OodSource {
    pub name: String,
    pub features: Array2<f64>,
}

/// Runs the full evaluation: entropy (or max-prob) scores on the ID test set
/// and every OOD source, AUROC per source, calibration on ID, MCCS of the
/// penultimate features. One OOD source fills `auroc`; two fill
/// `near_auroc`/`far_auroc` in the order given.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    model: &MlpModel,
    posterior: Option<&PosteriorSpec>,
    id_test: &LabeledDataset,
    oods: &[OodSource],
    score: Score,
    n_bins: usize,
    method_name: &str,
    seed: u64,
) -> Result<EvalReport> {
    let classes = match model.task() {
        Task::Classification { classes } => classes,
        Task::Regression => {
            return Err(Error::Unsupported(
                "eval-ood needs a classification model".into(),
            ))
        }
    };
    if oods.is_empty() || oods.len() > 2 {
        return Err(Error::InvalidParameter(format!(
            "expected 1 (single) or 2 (near, far) OOD sources, got {}",
            oods.len()
        )));
    }
    let labels = id_test
        .class_labels()
        .ok_or_else(|| Error::Data("ID test set must be a labeled classification CSV".into()))?;
    let mut probs = Array2::zeros((id_test.len(), classes));
    let mut id_scores = Vec::with_capacity(id_test.len());
    for i in 0..id_test.len() {
        let x = id_test.feature_row(i);
        let p = class_probs(model, posterior, x)?;
        id_scores.push(score_of(&score_probs(model, posterior, x, score)?, score)?);
        probs.row_mut(i).assign(&p);
    }
    let mut aurocs = Vec::with_capacity(oods.len());
    for ood in oods {
        let scores = ood_scores(model, posterior, &ood.features, score)?;
        aurocs.push(auroc(&id_scores, &scores)?);
    }
    let (single, near, far) = match aurocs.len() {
        1 => (Some(aurocs[0]), None, None),
        _ => (None, Some(aurocs[0]), Some(aurocs[1])),
    };
    Ok(EvalReport {
        method_name: method_name.to_string(),
        auroc: single,
        near_auroc: near,
        far_auroc: far,
        ece: ece(probs.view(), labels, n_bins)?,
        nll: nll(probs.view(), labels)?,
        brier: brier(probs.view(), labels)?,
        mccs: penultimate_mccs(model, id_test)?,
        lambda: posterior.map(PosteriorSpec::lambda),
        seed,
        spectrum: None,
    })
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len(), "spearman needs paired inputs");
    let rank = |v: &[f64]| -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).expect("finite values"));
        let mut ranks = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + 1 + j + 1) as f64 / 2.0;
            for &k in &idx[i..=j] {
                ranks[k] = avg;
            }
            i = j + 1;
        }
        ranks
    };
    let rx = rank(xs);
    let ry = rank(ys);
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

/// Blob dataset shape shared by the sweep pipelines.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct BlobSpec {
    pub classes: usize,
    pub n_per_class: usize,
    pub radius: f64,
    pub sigma: f64,
    pub dim: usize,
}

#[derive(Clone, Copy, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DatasetSpec {
    HalfMoons { n: usize, noise: f64 },
    Blobs(BlobSpec),
}

impl DatasetSpec {
    fn generate(&self, seed: u64) -> Result<LabeledDataset> {
        match self {
            DatasetSpec::HalfMoons { n, noise } => gen_half_moons(*n, *noise, seed),
            DatasetSpec::Blobs(b) => {
                gen_blobs(b.classes, b.n_per_class, b.radius, b.sigma, b.dim, seed)
            }
        }
    }

    fn with_radius(&self, radius: f64) -> Self {
        match self {
            DatasetSpec::Blobs(b) => DatasetSpec::Blobs(BlobSpec { radius, ..*b }),
            other => *other,
        }
    }
}

/// Clusters at the directions bisecting the gaps between the training
/// classes: the odd-label half of a 2C-class draw with the same radius and
/// sigma. Two-dimensional blobs only (higher dimensions have no fixed gap
/// directions).
pub fn rotated_gap_ood(spec: &BlobSpec, n_per_direction: usize, seed: u64) -> Result<Array2<f64>> {
    if spec.dim != 2 {
        return Err(Error::Unsupported(
            "rotated-gap OOD is defined for dim = 2 blobs".into(),
        ));
    }
    let all = gen_blobs(2 * spec.classes, n_per_direction, spec.radius, spec.sigma, 2, seed)?;
    let labels = all.class_labels().expect("blobs are classification");
    let rows: Vec<usize> = (0..all.len()).filter(|&i| labels[i] % 2 == 1).collect();
    Ok(all.subset(&rows, "rotated-gap-ood")?.features().clone())
}

/// Sweep kinds exposed by `icla-kit sweep`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepKind {
    Lambda,
    FisherAlpha,
    Separability,
}

impl SweepKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepKind::Lambda => "lambda",
            SweepKind::FisherAlpha => "fisher-alpha",
            SweepKind::Separability => "separability",
        }
    }

    /// Name of the grid column in reports.
    pub fn grid_name(&self) -> &'static str {
        match self {
            SweepKind::Lambda => "lambda",
            SweepKind::FisherAlpha => "alpha",
            SweepKind::Separability => "radius",
        }
    }
}

impl FromStr for SweepKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lambda" => Ok(SweepKind::Lambda),
            "fisher-alpha" => Ok(SweepKind::FisherAlpha),
            "separability" => Ok(SweepKind::Separability),
            other => Err(Error::InvalidParameter(format!(
                "unknown sweep kind '{other}' (expected lambda, fisher-alpha, separability)"
            ))),
        }
    }
}

/// Everything a sweep needs beyond its grid.
#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub kind: SweepKind,
    pub grid: Vec<f64>,
    pub seeds: Vec<u64>,
    pub dataset: DatasetSpec,
    /// Hidden-layer widths of the trained networks.
    pub hidden: Vec<usize>,
    /// Template training config; the per-run seed is substituted in.
    pub train: TrainConfig,
    pub marglik: MarglikConfig,
    pub fit_batch: usize,
    pub score: Score,
    /// When set, the dataset/split/OOD draws use this fixed seed and the run
    /// seeds only vary training; otherwise the run seed drives everything.
    pub fixed_data_seed: Option<u64>,
    /// Per-class size of the freshly drawn ID evaluation set (blob kinds).
    pub eval_per_class: usize,
    /// Sample count for ring/outlier OOD sources.
    pub ood_size: usize,
    /// Far-OOD ring lives at radius + this many sigmas (blobs).
    pub ood_ring_sigmas: f64,
    /// Radial OOD clusters for the lambda sweep sit at radius + this offset.
    pub ood_radius_offset: f64,
    /// Outlier ring radius for half-moons.
    pub moons_ood_radius: f64,
}

pub type MetricMap = BTreeMap<String, f64>;

#[derive(Clone, Debug, Serialize)]
pub struct SeedRun {
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub metrics: MetricMap,
}

#[derive(Clone, Debug, Serialize)]
pub struct Aggregate {
    pub mean: f64,
    /// Sample standard deviation over seeds (0 for a single seed).
    pub std: f64,
    pub n: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct GridPoint {
    pub grid_value: f64,
    pub runs: Vec<SeedRun>,
    pub aggregates: BTreeMap<String, Aggregate>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepResult {
    pub schema_version: u32,
    pub kind: &'static str,
    pub grid_name: &'static str,
    pub grid: Vec<f64>,
    pub seeds: Vec<u64>,
    pub dataset: DatasetSpec,
    pub points: Vec<GridPoint>,
    /// Marglik-selected entry for the lambda sweep (grid_value holds the
    /// mean selected lambda).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub marglik: Option<GridPoint>,
    /// Kind-specific summary values (e.g. Spearman correlations).
    pub extras: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

fn aggregate(runs: &[SeedRun]) -> BTreeMap<String, Aggregate> {
    let mut keys: Vec<String> = Vec::new();
    for run in runs {
        for k in run.metrics.keys() {
            if !keys.contains(k) {
                keys.push(k.clone());
            }
        }
    }
    let mut out = BTreeMap::new();
    for key in keys {
        let values: Vec<f64> = runs.iter().filter_map(|r| r.metrics.get(&key)).copied().collect();
        if values.is_empty() {
            continue;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        out.insert(key, Aggregate { mean, std, n });
    }
    out
}

struct SweepData {
    train: LabeledDataset,
    val: LabeledDataset,
    test: LabeledDataset,
    id_eval: Array2<f64>,
    near: Option<Array2<f64>>,
    far: Option<Array2<f64>>,
    single_ood: Option<Array2<f64>>,
}

impl SweepConfig {
    fn data_seed(&self, run_seed: u64) -> u64 {
        self.fixed_data_seed.unwrap_or(run_seed)
    }

    /// Generates the dataset, splits, and OOD/eval sets for one grid point.
    fn prepare(&self, grid_value: f64, run_seed: u64) -> Result<SweepData> {
        let data_seed = self.data_seed(run_seed);
        let dataset = match self.kind {
            SweepKind::Separability => self.dataset.with_radius(grid_value),
            _ => self.dataset,
        };
        let ds = dataset.generate(data_seed)?;
        let (train, val, test) = split(&ds, (0.6, 0.2, 0.2), data_seed)?;
        let ood_seed = data_seed.wrapping_add(1000);
        let eval_seed = data_seed.wrapping_add(2000);
        match dataset {
            DatasetSpec::Blobs(b) => {
                let id_eval =
                    gen_blobs(b.classes, self.eval_per_class, b.radius, b.sigma, b.dim, eval_seed)?
                        .features()
                        .clone();
                match self.kind {
                    SweepKind::Lambda => {
                        // radial extrapolation along the class directions
                        let ood = gen_blobs(
                            b.classes,
                            self.ood_size.div_ceil(b.classes),
                            b.radius + self.ood_radius_offset,
                            b.sigma,
                            b.dim,
                            ood_seed,
                        )?
                        .features()
                        .clone();
                        Ok(SweepData {
                            train,
                            val,
                            test,
                            id_eval,
                            near: None,
                            far: None,
                            single_ood: Some(ood),
                        })
                    }
                    _ => {
                        let near = rotated_gap_ood(
                            &b,
                            self.ood_size.div_ceil(b.classes),
                            ood_seed,
                        )?;
                        let center = vec![0.0; b.dim];
                        let far = gen_ring(
                            self.ood_size,
                            b.radius + self.ood_ring_sigmas * b.sigma,
                            &center,
                            ood_seed,
                        )?;
                        Ok(SweepData {
                            train,
                            val,
                            test,
                            id_eval,
                            near: Some(near),
                            far: Some(far),
                            single_ood: None,
                        })
                    }
                }
            }
            DatasetSpec::HalfMoons { .. } => {
                let ood = gen_outliers(self.ood_size, self.moons_ood_radius, ood_seed)?;
                let id_eval = val.features().clone();
                Ok(SweepData {
                    train,
                    val,
                    test,
                    id_eval,
                    near: None,
                    far: None,
                    single_ood: Some(ood),
                })
            }
        }
    }

    fn widths_for(&self, ds: &LabeledDataset, classes: usize) -> Vec<usize> {
        let mut w = vec![ds.dim()];
        w.extend_from_slice(&self.hidden);
        w.push(classes);
        w
    }
}

/// Per-run metrics of the gap pipeline (fisher-alpha / separability kinds).
fn gap_run(cfg: &SweepConfig, grid_value: f64, run_seed: u64) -> Result<MetricMap> {
    let data = cfg.prepare(grid_value, run_seed)?;
    let classes = match data.train.task() {
        Task::Classification { classes } => classes,
        Task::Regression => {
            return Err(Error::Unsupported("sweeps need classification data".into()))
        }
    };
    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = run_seed;
    if cfg.kind == SweepKind::FisherAlpha {
        train_cfg.fisher_penalty_alpha = grid_value;
    }
    let widths = cfg.widths_for(&data.train, classes);
    let model = train_map(&data.train, &widths, &train_cfg)?;
    let (icla_post, icla_out) = fit_posterior(&model, &data.val, Method::Icla, &cfg.marglik, cfg.fit_batch)?;
    let (ef_post, ef_out) = fit_posterior(&model, &data.val, Method::LllaEf, &cfg.marglik, cfg.fit_batch)?;
    let near = data.near.as_ref().expect("gap pipeline has a near source");
    let far = data.far.as_ref().expect("gap pipeline has a far source");
    let id_icla = ood_scores(&model, Some(&icla_post), &data.id_eval, cfg.score)?;
    let id_ef = ood_scores(&model, Some(&ef_post), &data.id_eval, cfg.score)?;
    let icla_near = auroc(&id_icla, &ood_scores(&model, Some(&icla_post), near, cfg.score)?)?;
    let icla_far = auroc(&id_icla, &ood_scores(&model, Some(&icla_post), far, cfg.score)?)?;
    let ef_near = auroc(&id_ef, &ood_scores(&model, Some(&ef_post), near, cfg.score)?)?;
    let ef_far = auroc(&id_ef, &ood_scores(&model, Some(&ef_post), far, cfg.score)?)?;
    let gap = performance_gap(icla_near, icla_far, ef_near, ef_far);
    let mccs_value = penultimate_mccs(&model, &data.test)?;
    let train_spectrum = spectrum(&fit_diag_ef(&model, &data.train, cfg.fit_batch)?)?;
    let mut m = MetricMap::new();
    m.insert("auroc_icla_near".into(), icla_near);
    m.insert("auroc_icla_far".into(), icla_far);
    m.insert("auroc_llla_near".into(), ef_near);
    m.insert("auroc_llla_far".into(), ef_far);
    m.insert("gap".into(), gap);
    m.insert("mccs".into(), mccs_value);
    m.insert("mean_eigenvalue".into(), train_spectrum.mean_eigenvalue);
    m.insert("tail_mass_top1pct".into(), train_spectrum.tail_mass_top1pct);
    m.insert("lambda_icla".into(), icla_out.lambda);
    m.insert("lambda_llla".into(), ef_out.lambda);
    Ok(m)
}

/// Per-seed lambda-sweep runs: one training, then an AUROC per grid value
/// plus the marglik-selected entry. Scores are computed on the validation
/// split against the single OOD source.
fn lambda_runs(cfg: &SweepConfig, run_seed: u64) -> Result<(Vec<MetricMap>, MetricMap)> {
    let data = cfg.prepare(0.0, run_seed)?;
    let classes = match data.train.task() {
        Task::Classification { classes } => classes,
        Task::Regression => {
            return Err(Error::Unsupported("sweeps need classification data".into()))
        }
    };
    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = run_seed;
    let widths = cfg.widths_for(&data.train, classes);
    let model = train_map(&data.train, &widths, &train_cfg)?;
    let ood = data.single_ood.as_ref().expect("lambda sweep has one OOD source");
    let d = model.last_layer_dim();
    let mut per_grid = Vec::with_capacity(cfg.grid.len());
    for &lambda in &cfg.grid {
        let post = build_posterior(
            model.last_layer_flat(),
            icla_core::CurvatureEstimate::zero(d),
            lambda,
        )?;
        let id = ood_scores(&model, Some(&post), data.val.features(), cfg.score)?;
        let a = auroc(&id, &ood_scores(&model, Some(&post), ood, cfg.score)?)?;
        let mut m = MetricMap::new();
        m.insert("auroc".into(), a);
        per_grid.push(m);
    }
    let (post, out) = fit_posterior(&model, &data.val, Method::Icla, &cfg.marglik, cfg.fit_batch)?;
    let id = ood_scores(&model, Some(&post), data.val.features(), cfg.score)?;
    let a = auroc(&id, &ood_scores(&model, Some(&post), ood, cfg.score)?)?;
    let mut m = MetricMap::new();
    m.insert("auroc".into(), a);
    m.insert("lambda".into(), out.lambda);
    Ok((per_grid, m))
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let threads = match std::env::var("ICLA_KIT_THREADS") {
        Ok(v) => v.parse::<usize>().map_err(|_| {
            Error::InvalidParameter(format!("ICLA_KIT_THREADS must be a positive integer, got '{v}'"))
        })?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))
}

/// Runs a full sweep. Independent (grid, seed) jobs execute in parallel
/// (capped by ICLA_KIT_THREADS); per-job failures are recorded per point and
/// only a fully failed sweep is an error.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    use rayon::prelude::*;

    if cfg.grid.is_empty() || cfg.seeds.is_empty() {
        return Err(Error::InvalidParameter("sweep needs a grid and seeds".into()));
    }
    let pool = thread_pool()?;
    let mut points: Vec<GridPoint>;
    let mut marglik_point = None;
    let mut warnings = Vec::new();
    match cfg.kind {
        SweepKind::Lambda => {
            type LambdaSeedResult = (u64, Result<(Vec<MetricMap>, MetricMap)>);
            let results: Vec<LambdaSeedResult> = pool.install(|| {
                cfg.seeds
                    .par_iter()
                    .map(|&seed| (seed, lambda_runs(cfg, seed)))
                    .collect()
            });
            let mut grid_runs: Vec<Vec<SeedRun>> = vec![Vec::new(); cfg.grid.len()];
            let mut marglik_runs = Vec::new();
            for (seed, result) in results {
                match result {
                    Ok((per_grid, marglik)) => {
                        for (i, metrics) in per_grid.into_iter().enumerate() {
                            grid_runs[i].push(SeedRun { seed, error: None, metrics });
                        }
                        marglik_runs.push(SeedRun { seed, error: None, metrics: marglik });
                    }
                    Err(e) => {
                        warnings.push(format!("seed {seed}: {e}"));
                        for runs in &mut grid_runs {
                            runs.push(SeedRun {
                                seed,
                                error: Some(e.to_string()),
                                metrics: MetricMap::new(),
                            });
                        }
                        marglik_runs.push(SeedRun {
                            seed,
                            error: Some(e.to_string()),
                            metrics: MetricMap::new(),
                        });
                    }
                }
            }
            points = Vec::with_capacity(cfg.grid.len());
            for (i, &g) in cfg.grid.iter().enumerate() {
                let runs = std::mem::take(&mut grid_runs[i]);
                let aggregates = aggregate(&runs);
                points.push(GridPoint { grid_value: g, runs, aggregates });
            }
            let aggregates = aggregate(&marglik_runs);
            let lambda_mean = aggregates.get("lambda").map(|a| a.mean).unwrap_or(f64::NAN);
            if marglik_runs.iter().any(|r| r.error.is_none()) {
                marglik_point = Some(GridPoint {
                    grid_value: lambda_mean,
                    runs: marglik_runs,
                    aggregates,
                });
            }
        }
        SweepKind::FisherAlpha | SweepKind::Separability => {
            let jobs: Vec<(usize, f64, u64)> = cfg
                .grid
                .iter()
                .enumerate()
                .flat_map(|(i, &g)| cfg.seeds.iter().map(move |&s| (i, g, s)))
                .collect();
            let results: Vec<(usize, u64, Result<MetricMap>)> = pool.install(|| {
                jobs.par_iter()
                    .map(|&(i, g, s)| (i, s, gap_run(cfg, g, s)))
                    .collect()
            });
            let mut grid_runs: Vec<Vec<SeedRun>> = vec![Vec::new(); cfg.grid.len()];
            for (i, seed, result) in results {
                match result {
                    Ok(metrics) => grid_runs[i].push(SeedRun { seed, error: None, metrics }),
                    Err(e) => {
                        warnings.push(format!(
                            "{} {} seed {seed}: {e}",
                            cfg.kind.grid_name(),
                            cfg.grid[i]
                        ));
                        grid_runs[i].push(SeedRun {
                            seed,
                            error: Some(e.to_string()),
                            metrics: MetricMap::new(),
                        });
                    }
                }
            }
            points = Vec::with_capacity(cfg.grid.len());
            for (i, &g) in cfg.grid.iter().enumerate() {
                let runs = std::mem::take(&mut grid_runs[i]);
                let aggregates = aggregate(&runs);
                points.push(GridPoint { grid_value: g, runs, aggregates });
            }
        }
    }
    let any_ok = points.iter().any(|p| p.runs.iter().any(|r| r.error.is_none()));
    if !any_ok {
        return Err(Error::Data(format!(
            "all sweep runs failed; first failure: {}",
            warnings.first().cloned().unwrap_or_default()
        )));
    }
    let mut extras = BTreeMap::new();
    if cfg.kind == SweepKind::Separability {
        let pairs: Vec<(f64, f64)> = points
            .iter()
            .filter_map(|p| {
                let m = p.aggregates.get("mccs")?;
                let g = p.aggregates.get("gap")?;
                Some((m.mean, g.mean))
            })
            .collect();
        if pairs.len() >= 2 {
            let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            extras.insert("spearman_mccs_gap".into(), spearman(&xs, &ys));
        }
    }
    Ok(SweepResult {
        schema_version: crate::format::SCHEMA_VERSION,
        kind: cfg.kind.as_str(),
        grid_name: cfg.kind.grid_name(),
        grid: cfg.grid.clone(),
        seeds: cfg.seeds.clone(),
        dataset: cfg.dataset,
        points,
        marglik: marglik_point,
        extras,
        warnings,
    })
}

/// Two-row-per-point CSV of the aggregates (grid value, then
/// `<metric>_mean`/`<metric>_std` per metric, columns sorted by name).
pub fn sweep_csv(result: &SweepResult) -> String {
    let mut keys: Vec<String> = Vec::new();
    for p in &result.points {
        for k in p.aggregates.keys() {
            if !keys.contains(k) {
                keys.push(k.clone());
            }
        }
    }
    keys.sort();
    let mut out = String::new();
    out.push_str(result.grid_name);
    out.push_str(",n_seeds_ok");
    for k in &keys {
        out.push_str(&format!(",{k}_mean,{k}_std"));
    }
    out.push('\n');
    for p in &result.points {
        let n_ok = p.runs.iter().filter(|r| r.error.is_none()).count();
        out.push_str(&format!("{:?},{n_ok}", p.grid_value));
        for k in &keys {
            match p.aggregates.get(k) {
                Some(a) => out.push_str(&format!(",{:?},{:?}", a.mean, a.std)),
                None => out.push_str(",,"),
            }
        }
        out.push('\n');
    }
    out
}
