//! Maximum likelihood for an unconstrained elliptical model of `vec X`.
//!
//! With scatter `S = sum (vec X_i - vec Xbar)(vec X_i - vec Xbar)^T`, the
//! estimate of the scale matrix is `lambda* S` where `lambda*` maximises
//! `h*(lambda) = lambda^(-nKD/2) h(KD / lambda)`, `h` being the generator in
//! dimension `nKD`.

use serde::{Deserialize, Serialize};

use crate::elliptical::EllipticalModel;
use crate::error::{Error, Result};
use crate::linalg::{vec, Mat};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleResult {
    /// Sample mean, `K x D`.
    #[serde(with = "crate::linalg::serde_rows")]
    pub mu_hat: Mat,
    /// `lambda* S`, `KD x KD`.
    #[serde(with = "crate::linalg::serde_rows")]
    pub xi_hat: Mat,
    pub lambda: f64,
    /// Factor `f` such that `f S` is unbiased for the covariance scale.
    pub unbiased_scale: f64,
    /// The scatter matrix `S`.
    #[serde(with = "crate::linalg::serde_rows")]
    pub scatter: Mat,
}

/// Log of the profile `h*(lambda)` for `n` specimens in dimension `KD`.
pub fn log_profile(model: &EllipticalModel, lambda: f64, n: usize, kd: usize) -> Result<f64> {
    let dim = n * kd;
    let kdf = kd as f64;
    Ok(-(dim as f64) / 2.0 * lambda.ln() + model.log_generator(kdf / lambda, dim)?)
}

/// Maximises [`log_profile`] over `lambda > 0`: a grid scan in `ln lambda`
/// followed by golden-section refinement and a slope bisection.
pub fn maximize_profile(model: &EllipticalModel, n: usize, kd: usize) -> Result<f64> {
    let f = |t: f64| log_profile(model, t.exp(), n, kd).unwrap_or(f64::NEG_INFINITY);
    let (lo, hi, steps) = (-40.0_f64, 40.0_f64, 1600usize);
    let h = (hi - lo) / steps as f64;
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for i in 0..=steps {
        let v = f(lo + i as f64 * h);
        if v > best_v {
            best_v = v;
            best = i;
        }
    }
    if !best_v.is_finite() || best == 0 || best == steps {
        return Err(Error::Numeric(
            "could not bracket the maximum of the likelihood profile".into(),
        ));
    }
    let (mut a, mut b) = (lo + (best - 1) as f64 * h, lo + (best + 1) as f64 * h);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-6 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    // Function values are flat near the optimum, so the last digits come
    // from bisection on the sign of a five-point slope.
    let slope = |t: f64| {
        let h = 1e-3;
        8.0 * (f(t + h) - f(t - h)) - (f(t + 2.0 * h) - f(t - 2.0 * h))
    };
    let (mut a, mut b) = (a - 1e-6, b + 1e-6);
    if slope(a) > 0.0 && slope(b) < 0.0 {
        while b - a > 1e-13 {
            let m = 0.5 * (a + b);
            if slope(m) > 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
    }
    Ok(((a + b) / 2.0).exp())
}

pub fn mle_unconstrained(sample: &[Mat], model: &EllipticalModel) -> Result<MleResult> {
    let first = sample.first().ok_or_else(|| Error::Data("empty sample".into()))?;
    let (k, d) = first.shape();
    if sample.iter().any(|x| x.shape() != (k, d)) {
        return Err(Error::Dimension("specimens differ in shape".into()));
    }
    let n = sample.len();
    let kd = k * d;
    if n <= kd {
        return Err(Error::Data(format!("need more specimens than K*D = {kd}, got {n}")));
    }
    let nf = n as f64;
    let mut mu_hat = Mat::zeros(k, d);
    for x in sample {
        mu_hat += x;
    }
    mu_hat /= nf;
    let vbar = vec(&mu_hat);
    let mut scatter = Mat::zeros(kd, kd);
    for x in sample {
        let dev = vec(x) - &vbar;
        scatter.ger(1.0, &dev, &dev, 1.0);
    }
    let lambda = maximize_profile(model, n, kd)?;
    let c0 = model.moment_constants_in_dim(n * kd)?.c0;
    Ok(MleResult {
        mu_hat,
        xi_hat: &scatter * lambda,
        lambda,
        unbiased_scale: 1.0 / ((nf - 1.0) * c0),
        scatter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elliptical::{sample_matrix_elliptical, MatrixEllipticalSpec};
    use approx::assert_relative_eq;

    #[test]
    fn gaussian_profile_maximum_is_one_over_n() {
        for (n, kd) in [(10, 4), (57, 6), (500, 12)] {
            let lambda = maximize_profile(&EllipticalModel::Gaussian, n, kd).unwrap();
            assert_relative_eq!(lambda, 1.0 / n as f64, max_relative = 1e-10);
        }
    }

    #[test]
    fn gaussian_estimates() {
        let spec = MatrixEllipticalSpec::new(
            Mat::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0]),
            Mat::identity(3, 3),
            Mat::identity(2, 2),
            EllipticalModel::Gaussian,
        );
        let xs = sample_matrix_elliptical(&spec, 4000, 21).unwrap();
        let r = mle_unconstrained(&xs, &EllipticalModel::Gaussian).unwrap();
        assert_relative_eq!(r.unbiased_scale, 1.0 / 3999.0, max_relative = 1e-12);
        assert_relative_eq!(r.xi_hat, &r.scatter / 4000.0, max_relative = 1e-10);
        assert!((&r.mu_hat - &spec.mu).amax() < 4.0 / 4000f64.sqrt());
        let unbiased = &r.scatter * r.unbiased_scale;
        assert!((unbiased - Mat::identity(6, 6)).amax() < 0.1);
    }

    #[test]
    fn t_unbiased_scale_uses_c0() {
        let spec = MatrixEllipticalSpec::new(Mat::zeros(2, 1), Mat::identity(2, 2), Mat::identity(1, 1), EllipticalModel::StudentT { m: 10.0 });
        let xs = sample_matrix_elliptical(&spec, 100, 3).unwrap();
        let r = mle_unconstrained(&xs, &spec.model).unwrap();
        assert_relative_eq!(r.unbiased_scale, 1.0 / (99.0 * 1.25), max_relative = 1e-12);
    }

    #[test]
    fn too_few_specimens() {
        let xs = vec![Mat::zeros(3, 2); 6];
        assert!(mle_unconstrained(&xs, &EllipticalModel::Gaussian).is_err());
    }
}
