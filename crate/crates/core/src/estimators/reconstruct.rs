//! Principal-coordinate reconstruction of a mean form from `M = mu mu^T`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_symmetric, sorted_symmetric_eigen, spectral_nonsingular, Mat};

/// Result of a truncated reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction {
    /// `K x D` coordinates.
    #[serde(with = "crate::linalg::serde_rows")]
    pub mu: Mat,
    /// Numerical rank of `M` before truncation.
    pub rank: usize,
    /// Sum of the positive eigenvalues beyond the leading `D`.
    pub spilled_mass: f64,
    /// Negative eigenvalues of `M` (all of them, whatever their size).
    pub clipped: Vec<f64>,
}

/// `V1 diag(sqrt(lambda))` from the nonsingular spectral part of `M`.
/// Errors if `M` has a significant negative eigenvalue or rank above `d`.
pub fn reconstruct_mean_form(m: &Mat, d: usize, rank_tol: f64) -> Result<Mat> {
    let sp = spectral_nonsingular(m, rank_tol)?;
    let q = sp.values.len();
    if q > d {
        let spilled = sp.values.iter().skip(d).sum();
        return Err(Error::RankExceeded {
            rank: q,
            max_rank: d,
            spilled,
        });
    }
    let mut mu = Mat::zeros(m.nrows(), d);
    for c in 0..q {
        mu.set_column(c, &(sp.vectors.column(c) * sp.values[c].sqrt()));
    }
    fix_column_signs(&mut mu);
    Ok(mu)
}

/// Best rank-`d` PSD reconstruction: keeps the `d` largest positive
/// eigenvalues, reporting what was dropped instead of failing.
pub fn reconstruct_mean_form_truncated(m: &Mat, d: usize, rank_tol: f64) -> Result<Reconstruction> {
    check_symmetric(m)?;
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("mean-form Gram estimate has non-finite entries".into()));
    }
    let (values, vectors) = sorted_symmetric_eigen(m);
    let tol = rank_tol * values.amax().max(f64::MIN_POSITIVE);
    let rank = values.iter().filter(|&&l| l > tol).count();
    let clipped: Vec<f64> = values.iter().copied().filter(|&l| l < 0.0).collect();
    let spilled_mass = values.iter().skip(d).filter(|&&l| l > 0.0).sum();
    let mut mu = Mat::zeros(m.nrows(), d);
    for c in 0..d.min(rank) {
        mu.set_column(c, &(vectors.column(c) * values[c].sqrt()));
    }
    fix_column_signs(&mut mu);
    Ok(Reconstruction {
        mu,
        rank,
        spilled_mass,
        clipped,
    })
}

/// Makes the largest-magnitude entry of every column positive.
pub fn fix_column_signs(mu: &mut Mat) {
    for c in 0..mu.ncols() {
        let col = mu.column(c);
        let mut best = 0.0_f64;
        for &x in col.iter() {
            if x.abs() > best.abs() {
                best = x;
            }
        }
        if best < 0.0 {
            mu.column_mut(c).neg_mut();
        }
    }
}
