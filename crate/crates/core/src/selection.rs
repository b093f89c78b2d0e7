//! Distances between covariance estimates and between mean shapes, the
//! coefficient-of-variation criterion and the model-selection report.

use nalgebra::linalg::SVD;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{reconstruct_mean_form_truncated, MomEstimate};
use crate::linalg::{centering_matrix, check_symmetric, psd_sqrt, Mat, DEFAULT_RANK_TOL};

/// Optimal orthogonal `R` for `min ||a - b R||_F`. With `rotation_only` the
/// determinant is forced to `+1`.
fn best_orthogonal(a: &Mat, b: &Mat, rotation_only: bool) -> Result<Mat> {
    let svd = SVD::new(b.transpose() * a, true, true);
    let mut u = svd.u.ok_or_else(|| Error::Numeric("SVD failed".into()))?;
    let v_t = svd.v_t.ok_or_else(|| Error::Numeric("SVD failed".into()))?;
    if rotation_only && (&u * &v_t).determinant() < 0.0 {
        let smallest = svd.singular_values.imin();
        u.column_mut(smallest).neg_mut();
    }
    Ok(u * v_t)
}

/// Procrustes size-and-shape distance `min_R ||L1 - L2 R||_F` between PSD
/// matrices, with `L` the symmetric square roots.
pub fn cov_distance(s1: &Mat, s2: &Mat) -> Result<f64> {
    if s1.shape() != s2.shape() {
        return Err(Error::Dimension(format!("{:?} vs {:?}", s1.shape(), s2.shape())));
    }
    check_symmetric(s1)?;
    check_symmetric(s2)?;
    let l1 = psd_sqrt(s1);
    let l2 = psd_sqrt(s2);
    let r = best_orthogonal(&l1, &l2, false)?;
    Ok((l1 - l2 * r).norm())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ShapeMode {
    /// Rotations only.
    #[default]
    Rotation,
    /// Rotations and reflections.
    Reflection,
}

fn preshape(mu: &Mat) -> Result<Mat> {
    if mu.nrows() < 2 || mu.ncols() == 0 {
        return Err(Error::Dimension(format!("configuration is {}x{}", mu.nrows(), mu.ncols())));
    }
    let z = centering_matrix(mu.nrows()) * mu;
    let size = z.norm();
    if !size.is_finite() || size <= 0.0 {
        return Err(Error::Data("configuration has zero size".into()));
    }
    Ok(z / size)
}

/// Riemannian shape distance in `[0, pi/2]`, invariant to translation,
/// rotation and positive scaling.
pub fn shape_distance(mu1: &Mat, mu2: &Mat) -> Result<f64> {
    shape_distance_with(mu1, mu2, ShapeMode::Rotation)
}

pub fn shape_distance_with(mu1: &Mat, mu2: &Mat, mode: ShapeMode) -> Result<f64> {
    if mu1.shape() != mu2.shape() {
        return Err(Error::Dimension(format!("{:?} vs {:?}", mu1.shape(), mu2.shape())));
    }
    let z1 = preshape(mu1)?;
    let z2 = preshape(mu2)?;
    let r = best_orthogonal(&z1, &z2, mode == ShapeMode::Rotation)?;
    // arccos of the singular-value sum loses half the digits near zero; the
    // chord length gives the same angle stably.
    let chord = (z1 - z2 * r).norm();
    Ok(2.0 * (chord / 2.0).min(1.0).asin())
}

/// `100 * sd / mean` with the population standard deviation.
pub fn cv_of(values: &[f64]) -> Result<f64> {
    if values.is_empty() || values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidParameter(format!("CV needs finite nonnegative values, got {values:?}")));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return Err(Error::InvalidParameter("CV is undefined when all distances are zero".into()));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(100.0 * var.sqrt() / mean)
}

/// CV of the two distances to the control group, in percent.
pub fn cv_criterion(d_sc: f64, d_lc: f64) -> Result<f64> {
    cv_of(&[d_sc, d_lc])
}

/// Estimates for one model, one entry per group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFit {
    pub label: String,
    pub groups: Vec<(String, MomEstimate)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledMatrix {
    pub labels: Vec<String>,
    #[serde(with = "crate::linalg::serde_rows")]
    pub values: Mat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub models: Vec<String>,
    pub control: Option<String>,
    /// Over all `model/group` pairs.
    pub cov_dist: LabeledMatrix,
    /// Per model; `None` when there is no control or no other group.
    pub cv_pct: Vec<Option<f64>>,
    /// Over all `model/group` mean shapes followed by the references.
    pub shape_dist: LabeledMatrix,
}

impl SelectionReport {
    /// Model with the smallest CV, if any is defined.
    pub fn best_model(&self) -> Option<&str> {
        self.models
            .iter()
            .zip(&self.cv_pct)
            .filter_map(|(m, cv)| cv.map(|c| (m, c)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(m, _)| m.as_str())
    }
}

fn mean_shape(est: &MomEstimate, d: usize) -> Result<Mat> {
    match &est.mu {
        Some(mu) => Ok(mu.clone()),
        None => Ok(reconstruct_mean_form_truncated(&est.m, d, DEFAULT_RANK_TOL)?.mu),
    }
}

/// Pairwise distances over every `(model, group)` estimate. With `control`
/// set, each model's CV is taken over the distances of its other groups to
/// the control group.
pub fn build_selection_report(
    fits: &[ModelFit],
    references: &[(String, Mat)],
    control: Option<&str>,
) -> Result<SelectionReport> {
    let first = fits.first().ok_or_else(|| Error::Data("no model fits to compare".into()))?;
    let names: Vec<&str> = first.groups.iter().map(|(g, _)| g.as_str()).collect();
    if names.is_empty() {
        return Err(Error::Data(format!("model {} has no groups", first.label)));
    }
    let (k, d) = {
        let est = &first.groups[0].1;
        let d = est.mu.as_ref().map(|m| m.ncols()).or(est.sigma_d.as_ref().map(|s| s.nrows())).unwrap_or(est.diagnostics.d);
        (est.sigma_k.nrows(), d)
    };
    for fit in fits {
        let have: Vec<&str> = fit.groups.iter().map(|(g, _)| g.as_str()).collect();
        for name in &names {
            if !have.contains(name) {
                return Err(Error::Data(format!("model {} is missing group {name}", fit.label)));
            }
        }
        if have.len() != names.len() {
            return Err(Error::Data(format!("model {} has groups {have:?}, expected {names:?}", fit.label)));
        }
        if fit.groups.iter().any(|(_, e)| e.sigma_k.nrows() != k) {
            return Err(Error::Dimension(format!("model {} has a different K", fit.label)));
        }
    }
    if let Some(c) = control {
        if !names.contains(&c) {
            return Err(Error::Data(format!("control group {c} not found")));
        }
    }

    let mut cov_labels = Vec::new();
    let mut covs = Vec::new();
    let mut shape_labels = Vec::new();
    let mut shapes = Vec::new();
    for fit in fits {
        for name in &names {
            let est = &fit.groups.iter().find(|(g, _)| g == name).expect("checked above").1;
            let label = format!("{}/{}", fit.label, name);
            cov_labels.push(label.clone());
            covs.push(est.sigma_k.clone());
            shape_labels.push(label);
            shapes.push(mean_shape(est, d)?);
        }
    }
    for (label, mu) in references {
        if mu.shape() != (k, d) {
            return Err(Error::Dimension(format!(
                "reference {label} is {}x{}, expected {k}x{d}",
                mu.nrows(),
                mu.ncols()
            )));
        }
        shape_labels.push(label.clone());
        shapes.push(mu.clone());
    }

    let cov_dist = pairwise(&covs, cov_distance)?;
    let shape_dist = pairwise(&shapes, shape_distance)?;

    let g = names.len();
    let cv_pct = (0..fits.len())
        .map(|m| {
            let Some(c) = control else { return Ok(None) };
            let ci = names.iter().position(|n| *n == c).expect("checked above");
            let dists: Vec<f64> = (0..g).filter(|&j| j != ci).map(|j| cov_dist[(m * g + ci, m * g + j)]).collect();
            if dists.is_empty() || dists.iter().all(|&x| x == 0.0) {
                return Ok(None);
            }
            cv_of(&dists).map(Some)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(SelectionReport {
        models: fits.iter().map(|f| f.label.clone()).collect(),
        control: control.map(str::to_string),
        cov_dist: LabeledMatrix {
            labels: cov_labels,
            values: cov_dist,
        },
        cv_pct,
        shape_dist: LabeledMatrix {
            labels: shape_labels,
            values: shape_dist,
        },
    })
}

fn pairwise(items: &[Mat], dist: impl Fn(&Mat, &Mat) -> Result<f64>) -> Result<Mat> {
    let n = items.len();
    let mut out = Mat::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = dist(&items[i], &items[j])?;
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}
