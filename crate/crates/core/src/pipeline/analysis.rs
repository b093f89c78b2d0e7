//! Stage-by-stage analysis of a landmark dataset.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::AnalysisConfig;
use super::dataset::LandmarkSample;
use crate::elliptical::EllipticalModel;
use crate::error::{Error, ErrorCategory, Result};
use crate::estimators::{
    center_sample, orient_to_sample, estimate, flipflop, gram_matrices, reconstruct_mean_form_truncated,
    sample_moments, EntryDiagnostic, EstimatorOptions, FlipFlopOptions, MomEstimate,
};
use crate::form::{bootstrap_test_with, BootstrapOptions, FormDifferenceResult};
use crate::linalg::{from_rows, sorted_symmetric_eigen, Mat, Vector, DEFAULT_RANK_TOL};
use crate::rng::stage_seed;
use crate::selection::{build_selection_report, ModelFit, SelectionReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipFlopSummary {
    pub iterations: usize,
    pub converged: bool,
    /// Frobenius changes per iteration, kept in verbose mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAnalysis {
    pub name: String,
    pub n: usize,
    #[serde(with = "crate::linalg::serde_rows")]
    pub bbar: Mat,
    pub estimate: MomEstimate,
    /// `diag(S)^(-1/2) S diag(S)^(-1/2)` of the row covariance estimate.
    #[serde(with = "crate::linalg::serde_rows::option")]
    pub correlation: Option<Mat>,
    /// Numerical rank of the estimated `mu mu^T` before truncation to `D`.
    pub mean_form_rank: Option<usize>,
    pub flipflop: Option<FlipFlopSummary>,
    /// Entry variances `Var(b_ij)`, kept in verbose mode.
    #[serde(default, skip_serializing_if = "Option::is_none", with = "crate::linalg::serde_rows::option")]
    pub entry_variances: Option<Mat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub x: String,
    pub y: String,
    pub result: FormDifferenceResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageError {
    pub stage: String,
    pub category: ErrorCategory,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub model: EllipticalModel,
    pub model_label: String,
    pub config: AnalysisConfig,
    pub groups: Vec<GroupAnalysis>,
    pub comparisons: Vec<PairComparison>,
    pub selection: Option<SelectionReport>,
    pub errors: Vec<StageError>,
}

impl AnalysisReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    /// Worst category over the failed stages.
    pub fn worst_category(&self) -> Option<ErrorCategory> {
        let rank = |c: ErrorCategory| match c {
            ErrorCategory::Numeric => 0,
            ErrorCategory::Data => 1,
            ErrorCategory::Usage => 2,
        };
        self.errors.iter().map(|e| e.category).max_by_key(|&c| rank(c))
    }

    pub fn group(&self, name: &str) -> Option<&GroupAnalysis> {
        self.groups.iter().find(|g| g.name == name)
    }
}

/// Correlation form of a covariance matrix; `None` if a variance is not
/// positive.
pub fn correlation(s: &Mat) -> Option<Mat> {
    let d = s.diagonal();
    if d.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return None;
    }
    let inv = d.map(|v| 1.0 / v.sqrt());
    let mut r = Mat::from_fn(s.nrows(), s.ncols(), |i, j| s[(i, j)] * inv[i] * inv[j]);
    r.fill_diagonal(1.0);
    Some(r)
}

/// Clips negative eigenvalues, for use as a starting value.
fn psd_part(a: &Mat) -> Mat {
    let (values, vectors) = sorted_symmetric_eigen(a);
    let clipped = Vector::from_iterator(values.len(), values.iter().map(|v| v.max(0.0)));
    &vectors * Mat::from_diagonal(&clipped) * vectors.transpose()
}

struct Runner<'a> {
    cfg: &'a AnalysisConfig,
    errors: Vec<StageError>,
}

impl Runner<'_> {
    fn stage<T>(&mut self, stage: impl Into<String>, r: Result<T>) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                self.errors.push(StageError {
                    stage: stage.into(),
                    category: e.category(),
                    message: e.to_string(),
                });
                None
            }
        }
    }

    fn estimator_options(&self) -> EstimatorOptions {
        EstimatorOptions {
            root_rule: self.cfg.root_rule,
            ..Default::default()
        }
    }

    fn fit_group(&mut self, g: &LandmarkSample, model: &EllipticalModel) -> Option<(GroupAnalysis, Vec<Mat>)> {
        let d = g.d();
        let centered = self.stage(format!("center:{}", g.name), center_sample(&g.specimens))?;
        let sm = self.stage(format!("moments:{}", g.name), sample_moments(&gram_matrices(&centered)))?;
        let mut est = self.stage(
            format!("estimate:{}", g.name),
            estimate(&sm, model, d, self.cfg.case, &self.estimator_options()),
        )?;
        if !self.cfg.verbose {
            est.diagnostics.entries.retain(|e: &EntryDiagnostic| e.flagged);
        }
        let complete = self
            .stage(format!("estimate:{}", g.name), est.check_complete())
            .is_some();
        let mut rank = None;
        if complete {
            if let Some(rec) = self.stage(
                format!("reconstruct:{}", g.name),
                reconstruct_mean_form_truncated(&est.m, d, DEFAULT_RANK_TOL),
            ) {
                est.diagnostics.clipped_eigenvalues = rec.clipped.clone();
                est.diagnostics.spilled_mass = Some(rec.spilled_mass);
                rank = Some(rec.rank);
                est.mu = self.stage(format!("reconstruct:{}", g.name), orient_to_sample(&rec.mu, &centered));
            }
        }
        Some((
            GroupAnalysis {
                name: g.name.clone(),
                n: sm.n,
                correlation: correlation(&est.sigma_k),
                bbar: sm.bbar.clone(),
                estimate: est,
                mean_form_rank: rank,
                flipflop: None,
                entry_variances: self.cfg.verbose.then(|| sm.variance_matrix()),
            },
            centered,
        ))
    }

    fn run_flipflop(&mut self, ga: &mut GroupAnalysis, centered: &[Mat]) {
        let Some(mu) = ga.estimate.mu.clone() else { return };
        let ff = self.cfg.flipflop;
        let opts = FlipFlopOptions {
            eps1: ff.eps1,
            eps2: ff.eps2,
            max_iter: ff.max_iter,
            ..Default::default()
        };
        let stage = format!("flipflop:{}", ga.name);
        let result = flipflop(centered, &mu, &psd_part(&ga.estimate.sigma_k), &opts);
        if let Some(res) = self.stage(stage.clone(), result) {
            if !res.converged {
                self.stage::<()>(
                    stage,
                    Err(Error::Numeric(format!("flip-flop did not converge in {} iterations", res.iterations))),
                );
            }
            ga.estimate.sigma_d = Some(res.sigma_d);
            ga.flipflop = Some(FlipFlopSummary {
                iterations: res.iterations,
                converged: res.converged,
                trace: self.cfg.verbose.then_some(res.trace),
            });
        }
    }
}

/// Reads the selection-stage reference shapes listed in the config.
pub fn load_references(cfg: &AnalysisConfig) -> Result<Vec<(String, Mat)>> {
    cfg.selection
        .references
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
            let rows: Vec<Vec<f64>> = serde_json::from_str(&text)
                .map_err(|e| Error::Data(format!("{}: reference shape must be a JSON array of rows: {e}", p.display())))?;
            let label = p
                .file_stem()
                .and_then(|s| s.to_str())
                .map_or_else(|| p.display().to_string(), str::to_string);
            Ok((label, from_rows(&rows, 0)?))
        })
        .collect()
}

/// Runs every stage, recording failures and keeping whatever completed.
pub fn run_analysis(data: &[LandmarkSample], cfg: &AnalysisConfig) -> AnalysisReport {
    let mut run = Runner { cfg, errors: Vec::new() };
    let model = cfg.model;
    run.stage("config", cfg.validate());
    run.stage("dataset", super::dataset::validate(data));

    let mut groups = Vec::new();
    for g in data {
        if let Some((mut ga, centered)) = run.fit_group(g, &model) {
            if cfg.flipflop.enabled {
                run.run_flipflop(&mut ga, &centered);
            }
            groups.push(ga);
        }
    }

    let mut comparisons = Vec::new();
    for a in 0..data.len() {
        for b in (a + 1)..data.len() {
            let (x, y) = (&data[a], &data[b]);
            let label = format!("{}~{}", x.name, y.name);
            let opts = BootstrapOptions {
                boot_size: cfg.bootstrap.size,
                seed: stage_seed(cfg.bootstrap.seed, &format!("bootstrap:{label}")),
                case: cfg.case,
                estimator: run.estimator_options(),
                ..Default::default()
            };
            let res = bootstrap_test_with(&x.specimens, &y.specimens, &model, &opts);
            if let Some(result) = run.stage(format!("bootstrap:{label}"), res) {
                comparisons.push(PairComparison {
                    x: x.name.clone(),
                    y: y.name.clone(),
                    result,
                });
            }
        }
    }

    let selection = if cfg.selection.models.is_empty() {
        None
    } else {
        select(&mut run, data, cfg)
    };

    AnalysisReport {
        model,
        model_label: model.label(),
        config: cfg.clone(),
        groups,
        comparisons,
        selection,
        errors: run.errors,
    }
}

fn select(run: &mut Runner, data: &[LandmarkSample], cfg: &AnalysisConfig) -> Option<SelectionReport> {
    let references = run.stage("selection:references", load_references(cfg))?;
    let opts = run.estimator_options();
    let fits: Vec<Result<ModelFit>> = cfg
        .selection
        .models
        .par_iter()
        .map(|m| {
            let groups = data
                .iter()
                .map(|g| {
                    let sm = sample_moments(&gram_matrices(&center_sample(&g.specimens)?))?;
                    let est = estimate(&sm, m, g.d(), cfg.case, &opts)?;
                    est.check_complete()?;
                    Ok((g.name.clone(), est))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ModelFit { label: m.label(), groups })
        })
        .collect();
    let mut ok = Vec::new();
    for (m, f) in cfg.selection.models.iter().zip(fits) {
        if let Some(fit) = run.stage(format!("selection:{}", m.label()), f) {
            ok.push(fit);
        }
    }
    if ok.is_empty() {
        return None;
    }
    let control = cfg.selection.control.as_deref();
    run.stage("selection", build_selection_report(&ok, &references, control))
}

/// Runs [`run_analysis`] on a dataset file.
pub fn run_analysis_on(path: &Path, cfg: &AnalysisConfig) -> Result<AnalysisReport> {
    let data = super::dataset::load_dataset(path, super::dataset::DataFormat::from_path(path))?;
    Ok(run_analysis(&data, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn correlation_has_unit_diagonal() {
        let s = Mat::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 9.0]);
        let r = correlation(&s).unwrap();
        assert_eq!(r[(0, 0)], 1.0);
        assert_eq!(r[(1, 1)], 1.0);
        assert!((r[(0, 1)] - 1.0 / 6.0).abs() < 1e-15);
        assert!(correlation(&Mat::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0])).is_none());
    }

    #[test]
    fn psd_part_clips() {
        let a = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -2.0]);
        let p = psd_part(&a);
        assert!((p - Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).amax() < 1e-15);
    }
}
