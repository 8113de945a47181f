//! JSON report schema for `eval-ood` (schema_version 1). Every field of the
//! evaluation bundle is present; inapplicable ones are null.

use serde::Serialize;

use icla_core::curvature::SpectrumStats;
use icla_core::metrics::EvalReport;

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumSummary {
    pub n_eigenvalues: usize,
    pub mean_eigenvalue: f64,
    pub tail_mass_top1pct: f64,
}

impl From<&SpectrumStats> for SpectrumSummary {
    fn from(s: &SpectrumStats) -> Self {
        Self {
            n_eigenvalues: s.eigenvalues.len(),
            mean_eigenvalue: s.mean_eigenvalue,
            tail_mass_top1pct: s.tail_mass_top1pct,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ReportFile {
    pub schema_version: u32,
    pub method_name: String,
    pub seed: u64,
    pub auroc: Option<f64>,
    pub near_auroc: Option<f64>,
    pub far_auroc: Option<f64>,
    pub ece: Option<f64>,
    pub nll: Option<f64>,
    pub brier: Option<f64>,
    pub mccs: Option<f64>,
    pub lambda: Option<f64>,
    pub ood_sources: Vec<String>,
    pub spectrum: Option<SpectrumSummary>,
    pub warnings: Vec<String>,
}

impl ReportFile {
    pub fn from_eval(report: &EvalReport, ood_sources: Vec<String>, warnings: Vec<String>) -> Self {
        Self {
            schema_version: crate::format::SCHEMA_VERSION,
            method_name: report.method_name.clone(),
            seed: report.seed,
            auroc: report.auroc,
            near_auroc: report.near_auroc,
            far_auroc: report.far_auroc,
            ece: Some(report.ece),
            nll: Some(report.nll),
            brier: Some(report.brier),
            mccs: Some(report.mccs),
            lambda: report.lambda,
            ood_sources,
            spectrum: report.spectrum.as_ref().map(SpectrumSummary::from),
            warnings,
        }
    }

    /// Report for score-file inputs: AUROC only, calibration fields null.
    pub fn scores_only(
        method_name: String,
        seed: u64,
        aurocs: &[f64],
        ood_sources: Vec<String>,
    ) -> Self {
        let (auroc, near, far) = match aurocs.len() {
            1 => (Some(aurocs[0]), None, None),
            _ => (None, Some(aurocs[0]), Some(aurocs[1])),
        };
        Self {
            schema_version: crate::format::SCHEMA_VERSION,
            method_name,
            seed,
            auroc,
            near_auroc: near,
            far_auroc: far,
            ece: None,
            nll: None,
            brier: None,
            mccs: None,
            lambda: None,
            ood_sources,
            spectrum: None,
            warnings: Vec::new(),
        }
    }
}
