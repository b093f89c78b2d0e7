//! Monte Carlo sampler for matrix elliptical laws, `X = mu + R A U B` with
//! `A A^T = Sigma_K`, `B^T B = Sigma_D` and `U` uniform on the unit sphere of
//! the `q x D` matrices (`q` the rank of `Sigma_K`).

use nalgebra::Cholesky;
use rand::Rng;
use rand_distr::{Beta, ChiSquared, Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{EllipticalModel, MomentConstants};
use crate::error::{Error, Result};
use crate::linalg::{spectral_nonsingular, Mat, DEFAULT_RANK_TOL};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixEllipticalSpec {
    #[serde(with = "crate::linalg::serde_rows")]
    pub mu: Mat,
    #[serde(with = "crate::linalg::serde_rows")]
    pub sigma_k: Mat,
    #[serde(with = "crate::linalg::serde_rows")]
    pub sigma_d: Mat,
    pub model: EllipticalModel,
}

struct Factors {
    /// K x q with A A^T = sigma_k
    a: Mat,
    /// D x D with B^T B = sigma_d
    b: Mat,
}

impl MatrixEllipticalSpec {
    pub fn new(mu: Mat, sigma_k: Mat, sigma_d: Mat, model: EllipticalModel) -> Self {
        Self {
            mu,
            sigma_k,
            sigma_d,
            model,
        }
    }

    pub fn k(&self) -> usize {
        self.mu.nrows()
    }

    pub fn d(&self) -> usize {
        self.mu.ncols()
    }

    /// Numerical rank of `sigma_k`.
    pub fn rank_k(&self) -> Result<usize> {
        Ok(spectral_nonsingular(&self.sigma_k, DEFAULT_RANK_TOL)?.values.len())
    }

    /// Dimension of the underlying spherical law: `rank(Sigma_K) * D`.
    pub fn effective_dim(&self) -> Result<usize> {
        Ok(self.rank_k()? * self.d())
    }

    /// Moment constants realised by [`sample_matrix_elliptical`].
    pub fn moment_constants(&self) -> Result<MomentConstants> {
        self.model.moment_constants_in_dim(self.effective_dim()?)
    }

    /// Moment constants realised by [`sample_independent_columns`].
    pub fn column_moment_constants(&self) -> Result<MomentConstants> {
        self.model.moment_constants_in_dim(self.rank_k()?)
    }

    fn factors(&self) -> Result<Factors> {
        let (k, d) = self.mu.shape();
        if k == 0 || d == 0 {
            return Err(Error::Dimension("empty mean matrix".into()));
        }
        if self.sigma_k.shape() != (k, k) || self.sigma_d.shape() != (d, d) {
            return Err(Error::Dimension(format!(
                "mu is {k}x{d} but sigma_K is {}x{} and sigma_D is {}x{}",
                self.sigma_k.nrows(),
                self.sigma_k.ncols(),
                self.sigma_d.nrows(),
                self.sigma_d.ncols()
            )));
        }
        self.model.validate()?;
        let sp = spectral_nonsingular(&self.sigma_k, DEFAULT_RANK_TOL)?;
        if sp.values.is_empty() {
            return Err(Error::InvalidParameter("sigma_K is zero".into()));
        }
        let root = sp.values.map(f64::sqrt);
        let a = &sp.vectors * Mat::from_diagonal(&root);
        crate::linalg::check_symmetric(&self.sigma_d)?;
        let chol = Cholesky::new(self.sigma_d.clone()).ok_or_else(|| {
            Error::InvalidParameter("sigma_D is not positive definite".into())
        })?;
        Ok(Factors {
            a,
            b: chol.l().transpose(),
        })
    }
}

/// Squared radius `R^2` of a `p`-dimensional spherical law with this generator.
pub fn sample_radius_sq<R: Rng + ?Sized>(model: &EllipticalModel, p: usize, rng: &mut R) -> Result<f64> {
    model.validate_dim(p)?;
    let half_p = p as f64 / 2.0;
    let draw = |shape: f64, scale: f64, rng: &mut R| -> Result<f64> {
        Gamma::new(shape, scale)
            .map(|g| g.sample(rng))
            .map_err(|e| Error::InvalidParameter(format!("gamma({shape}, {scale}): {e}")))
    };
    Ok(match *model {
        EllipticalModel::Gaussian => draw(half_p, 2.0, rng)?,
        EllipticalModel::Kotz { n, r, s } => {
            // R^(2s) ~ Gamma((2N + p - 2) / 2s, rate r)
            let t = draw((2.0 * n + p as f64 - 2.0) / (2.0 * s), 1.0 / r, rng)?;
            t.powf(1.0 / s)
        }
        EllipticalModel::StudentT { m } => {
            let chi = ChiSquared::new(m).map_err(|e| Error::InvalidParameter(e.to_string()))?;
            draw(half_p, 2.0, rng)? * m / chi.sample(rng)
        }
        EllipticalModel::PearsonII { m } => Beta::new(half_p, m + 1.0)
            .map_err(|e| Error::InvalidParameter(e.to_string()))?
            .sample(rng),
        EllipticalModel::PearsonVII { n, m } => m * draw(half_p, 1.0, rng)? / draw(n - half_p, 1.0, rng)?,
    })
}

fn normal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Draws `n` matrices from the matrix elliptical law in `spec`.
pub fn sample_matrix_elliptical(spec: &MatrixEllipticalSpec, n: usize, seed: u64) -> Result<Vec<Mat>> {
    sample_matrix_elliptical_with(spec, n, &mut rng_from_seed(seed))
}

pub fn sample_matrix_elliptical_with<R: Rng + ?Sized>(
    spec: &MatrixEllipticalSpec,
    n: usize,
    rng: &mut R,
) -> Result<Vec<Mat>> {
    let f = spec.factors()?;
    let q = f.a.ncols();
    let d = spec.d();
    let p = q * d;
    spec.model.validate_dim(p)?;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let z = normal_matrix(q, d, rng);
        let scaled = match spec.model {
            EllipticalModel::Gaussian => z,
            EllipticalModel::StudentT { m } => {
                // normal over chi mixture
                let chi = ChiSquared::new(m).map_err(|e| Error::InvalidParameter(e.to_string()))?;
                z * (m / chi.sample(rng)).sqrt()
            }
            _ => {
                let norm = z.norm();
                let r = sample_radius_sq(&spec.model, p, rng)?.sqrt();
                z * (r / norm)
            }
        };
        out.push(&spec.mu + &f.a * scaled * &f.b);
    }
    Ok(out)
}

/// Draws `n` matrices whose columns are independent `K`-variate elliptical
/// vectors, column `d` having scale `sigma_D[d,d] * Sigma_K`. Requires a
/// diagonal `sigma_D`.
pub fn sample_independent_columns(spec: &MatrixEllipticalSpec, n: usize, seed: u64) -> Result<Vec<Mat>> {
    sample_independent_columns_with(spec, n, &mut rng_from_seed(seed))
}

pub fn sample_independent_columns_with<R: Rng + ?Sized>(
    spec: &MatrixEllipticalSpec,
    n: usize,
    rng: &mut R,
) -> Result<Vec<Mat>> {
    let d = spec.d();
    for i in 0..d {
        for j in 0..d {
            if i != j && spec.sigma_d[(i, j)] != 0.0 {
                return Err(Error::InvalidParameter(
                    "independent columns need a diagonal sigma_D".into(),
                ));
            }
        }
    }
    let f = spec.factors()?;
    let q = f.a.ncols();
    spec.model.validate_dim(q)?;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut x = spec.mu.clone();
        for col in 0..d {
            let z = normal_matrix(q, 1, rng);
            let scale = match spec.model {
                EllipticalModel::Gaussian => 1.0,
                _ => (sample_radius_sq(&spec.model, q, rng)? / z.norm_squared()).sqrt(),
            };
            let y = &f.a * z * (scale * spec.sigma_d[(col, col)].sqrt());
            x.set_column(col, &(x.column(col) + y.column(0)));
        }
        out.push(x);
    }
    Ok(out)
}
