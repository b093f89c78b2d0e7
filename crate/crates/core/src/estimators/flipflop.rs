//! Alternating estimation of a separable covariance `Sigma_D (x) Sigma_K` for
//! residuals `X_i - mu` with a fixed mean.

use nalgebra::linalg::SVD;
use nalgebra::Cholesky;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{centering_matrix, sorted_symmetric_eigen, sym_ginverse, symmetrize, Mat, DEFAULT_RANK_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlipFlopOptions {
    /// Tolerance on the Frobenius change of `Sigma_D`.
    pub eps1: f64,
    /// Tolerance on the Frobenius change of `Sigma_K`.
    pub eps2: f64,
    pub max_iter: usize,
    pub rank_tol: f64,
}

impl Default for FlipFlopOptions {
    fn default() -> Self {
        Self {
            eps1: 5e-6,
            eps2: 5e-6,
            max_iter: 500,
            rank_tol: DEFAULT_RANK_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipFlopResult {
    #[serde(with = "crate::linalg::serde_rows")]
    pub sigma_k: Mat,
    /// Normalised to `tr(Sigma_D) = D`.
    #[serde(with = "crate::linalg::serde_rows")]
    pub sigma_d: Mat,
    pub iterations: usize,
    pub converged: bool,
    /// Frobenius changes `(Sigma_D, Sigma_K)` per iteration.
    pub trace: Vec<(f64, f64)>,
}

/// Runs the alternating updates from `sigma_k_init` and `Sigma_D = I`.
pub fn flipflop(centered: &[Mat], mu: &Mat, sigma_k_init: &Mat, opts: &FlipFlopOptions) -> Result<FlipFlopResult> {
    let d = mu.ncols();
    flipflop_from(centered, mu, sigma_k_init, &Mat::identity(d, d), opts)
}

/// Runs the alternating updates from a given pair of starting values.
pub fn flipflop_from(
    centered: &[Mat],
    mu: &Mat,
    sigma_k_init: &Mat,
    sigma_d_init: &Mat,
    opts: &FlipFlopOptions,
) -> Result<FlipFlopResult> {
    let (k, d) = mu.shape();
    if centered.is_empty() {
        return Err(Error::Data("flip-flop needs at least one specimen".into()));
    }
    if let Some(bad) = centered.iter().position(|x| x.shape() != (k, d)) {
        return Err(Error::Dimension(format!("specimen {} does not match the {k}x{d} mean", bad + 1)));
    }
    if sigma_k_init.shape() != (k, k) || sigma_d_init.shape() != (d, d) {
        return Err(Error::Dimension("flip-flop starting values have the wrong shape".into()));
    }
    if !(opts.eps1 > 0.0 && opts.eps2 > 0.0) || opts.max_iter == 0 {
        return Err(Error::InvalidParameter("flip-flop needs positive tolerances and max_iter".into()));
    }
    let n = centered.len() as f64;
    let residuals: Vec<Mat> = centered.iter().map(|x| x - mu).collect();
    let mut sigma_k = symmetrize(sigma_k_init);
    let mut sigma_d = symmetrize(sigma_d_init);
    let mut trace = Vec::new();

    for iter in 1..=opts.max_iter {
        let k_inv = sym_ginverse(&sigma_k, opts.rank_tol)?;
        let mut next_d = Mat::zeros(d, d);
        for e in &residuals {
            next_d += e.transpose() * &k_inv * e;
        }
        next_d = symmetrize(&(next_d / (n * k as f64)));
        let scale = next_d.trace() / d as f64;
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Numeric(format!("column covariance update has trace {}", scale * d as f64)));
        }
        next_d /= scale;
        let min_eig = sorted_symmetric_eigen(&next_d).0.min();
        if min_eig <= 0.0 {
            return Err(Error::Numeric(format!(
                "column covariance lost positive definiteness (min eigenvalue {min_eig:e}) at iteration {iter}"
            )));
        }
        let d_inv = Cholesky::new(next_d.clone())
            .ok_or_else(|| Error::Numeric("column covariance is not positive definite".into()))?
            .inverse();
        let mut next_k = Mat::zeros(k, k);
        for e in &residuals {
            next_k += e * &d_inv * e.transpose();
        }
        next_k = symmetrize(&(next_k / (n * d as f64)));

        let delta_d = (&next_d - &sigma_d).norm();
        let delta_k = (&next_k - &sigma_k).norm();
        trace.push((delta_d, delta_k));
        sigma_d = next_d;
        sigma_k = next_k;
        if delta_d <= opts.eps1 && delta_k <= opts.eps2 {
            return Ok(FlipFlopResult {
                sigma_k,
                sigma_d,
                iterations: iter,
                converged: true,
                trace,
            });
        }
    }
    Ok(FlipFlopResult {
        sigma_k,
        sigma_d,
        iterations: opts.max_iter,
        converged: false,
        trace,
    })
}

/// Orthogonal `G` minimising `||x G - target||_F` (reflections allowed).
pub fn procrustes_rotation(x: &Mat, target: &Mat) -> Result<Mat> {
    let cross = x.transpose() * target;
    let svd = SVD::new(cross, true, true);
    let u = svd.u.ok_or_else(|| Error::Numeric("SVD failed".into()))?;
    let v_t = svd.v_t.ok_or_else(|| Error::Numeric("SVD failed".into()))?;
    Ok(u * v_t)
}

/// Orients a reconstructed mean form, known only up to an orthogonal
/// transform, onto the mean of the centered specimens. The specimens keep
/// their own coordinates so the column covariance is estimated in them.
///
/// The mean form is centered first: an entrywise `M` estimate need not have
/// zero row sums, and a residual along the ones vector sits in the null
/// space of the row covariance, where the flip-flop would amplify it.
pub fn orient_to_sample(mu: &Mat, centered: &[Mat]) -> Result<Mat> {
    let Some(first) = centered.first() else {
        return Err(Error::Data("no specimens to orient against".into()));
    };
    if let Some(bad) = centered.iter().position(|x| x.shape() != mu.shape()) {
        return Err(Error::Dimension(format!(
            "specimen {} is {:?}, mean form is {:?}",
            bad + 1,
            centered[bad].shape(),
            mu.shape()
        )));
    }
    let mut mean = Mat::zeros(first.nrows(), first.ncols());
    for x in centered {
        mean += x;
    }
    mean /= centered.len() as f64;
    let mu = centering_matrix(mu.nrows()) * mu;
    Ok(&mu * procrustes_rotation(&mu, &mean)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elliptical::{sample_matrix_elliptical, EllipticalModel, MatrixEllipticalSpec};
    use crate::linalg::centering_matrix;
    use approx::assert_relative_eq;

    fn setup(sigma_d: Mat, n: usize, seed: u64) -> (Vec<Mat>, Mat, Mat) {
        let h = centering_matrix(6);
        let mu = &h * Mat::from_row_slice(6, 2, &[0.0, 0.0, 2.0, 0.0, 3.0, 1.5, 2.0, 3.0, 0.0, 3.0, -1.0, 1.5]);
        let raw = Mat::from_fn(6, 6, |i, j| if i == j { 0.04 } else { 0.01 / (1.0 + (i as f64 - j as f64).abs()) });
        let sigma_k = &h * raw * &h;
        let spec = MatrixEllipticalSpec::new(mu.clone(), sigma_k.clone(), sigma_d, EllipticalModel::Gaussian);
        (sample_matrix_elliptical(&spec, n, seed).unwrap(), mu, sigma_k)
    }

    #[test]
    fn recovers_identity_column_covariance() {
        let (xs, mu, sigma_k) = setup(Mat::identity(2, 2), 5000, 11);
        let res = flipflop(&xs, &mu, &Mat::identity(6, 6), &FlipFlopOptions::default()).unwrap();
        assert!(res.converged);
        assert!(res.iterations <= 150, "{} iterations", res.iterations);
        assert_relative_eq!(res.sigma_d.trace(), 2.0, epsilon = 1e-12);
        let rel = (&res.sigma_d - Mat::identity(2, 2)).norm() / 2f64.sqrt();
        assert!(rel < 0.05, "relative error {rel}");
        let rel_k = (&res.sigma_k - &sigma_k).norm() / sigma_k.norm();
        assert!(rel_k < 0.1, "sigma_k relative error {rel_k}");
    }

    #[test]
    fn recovers_negative_column_correlation() {
        let sd = Mat::from_row_slice(2, 2, &[1.0, -0.2, -0.2, 1.0]);
        let (xs, mu, _) = setup(sd, 5000, 12);
        let res = flipflop(&xs, &mu, &Mat::identity(6, 6), &FlipFlopOptions::default()).unwrap();
        assert!(res.sigma_d[(0, 1)] < 0.0);
        assert!((res.sigma_d[(0, 1)] + 0.2).abs() < 0.1);
    }

    #[test]
    fn fixed_point_is_stationary() {
        let (xs, mu, _) = setup(Mat::identity(2, 2), 500, 13);
        let tight = FlipFlopOptions {
            eps1: 1e-15,
            eps2: 1e-15,
            max_iter: 5000,
            ..Default::default()
        };
        let first = flipflop(&xs, &mu, &Mat::identity(6, 6), &tight).unwrap();
        let again = flipflop_from(&xs, &mu, &first.sigma_k, &first.sigma_d, &FlipFlopOptions::default()).unwrap();
        assert_eq!(again.iterations, 1);
        let (dd, dk) = again.trace[0];
        assert!(dd < 1e-12 && dk < 1e-12, "{dd:e} {dk:e}");
    }

    #[test]
    fn non_convergence_is_flagged() {
        let (xs, mu, _) = setup(Mat::identity(2, 2), 200, 14);
        let opts = FlipFlopOptions {
            max_iter: 1,
            ..Default::default()
        };
        let res = flipflop(&xs, &mu, &(Mat::identity(6, 6) * 50.0), &opts).unwrap();
        assert!(!res.converged);
        assert_eq!(res.iterations, 1);
    }

    #[test]
    fn procrustes_undoes_rotations_and_reflections() {
        let x = Mat::from_row_slice(3, 2, &[1.0, 0.0, -0.5, 0.8, -0.5, -0.8]);
        let t = 0.7_f64;
        let rot = Mat::from_row_slice(2, 2, &[t.cos(), -t.sin(), t.sin(), t.cos()]);
        let refl = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        for g in [rot.clone(), &rot * &refl] {
            let moved = &x * &g;
            let back = &moved * procrustes_rotation(&moved, &x).unwrap();
            assert_relative_eq!(back, x, epsilon = 1e-12);
            // a mean form found only up to g is put back in the sample frame
            let sample = [x.clone() * 1.1, x.clone() * 0.9];
            assert_relative_eq!(orient_to_sample(&moved, &sample).unwrap(), x, epsilon = 1e-12);
        }
    }
}
