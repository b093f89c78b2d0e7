//! Centering, Gram matrices and the first two sample moments of `B`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{centering_matrix, vec, Mat};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMoments {
    /// Mean Gram matrix, `K x K`.
    #[serde(with = "crate::linalg::serde_rows")]
    pub bbar: Mat,
    /// Covariance of `vec B` with divisor `n`, `K^2 x K^2`.
    #[serde(with = "crate::linalg::serde_rows")]
    pub s: Mat,
    pub n: usize,
}

impl SampleMoments {
    pub fn k(&self) -> usize {
        self.bbar.nrows()
    }

    /// Variance of `b_ij`, read from diagonal entry `j K + i` of `S`.
    pub fn entry_variance(&self, i: usize, j: usize) -> f64 {
        let t = j * self.k() + i;
        self.s[(t, t)]
    }

    /// The `K x K` matrix of entry variances.
    pub fn variance_matrix(&self) -> Mat {
        let k = self.k();
        Mat::from_fn(k, k, |i, j| self.entry_variance(i, j))
    }
}

fn check_shapes(sample: &[Mat]) -> Result<(usize, usize)> {
    let first = sample
        .first()
        .ok_or_else(|| Error::Data("empty sample".into()))?;
    let shape = first.shape();
    for (idx, x) in sample.iter().enumerate() {
        if x.shape() != shape {
            return Err(Error::Dimension(format!(
                "specimen {} is {}x{}, expected {}x{}",
                idx + 1,
                x.nrows(),
                x.ncols(),
                shape.0,
                shape.1
            )));
        }
    }
    Ok(shape)
}

/// `X_i -> H_K X_i` for every specimen.
pub fn center_sample(sample: &[Mat]) -> Result<Vec<Mat>> {
    let (k, _) = check_shapes(sample)?;
    let h = centering_matrix(k);
    Ok(sample.iter().map(|x| &h * x).collect())
}

/// `B_i = X_i X_i^T` for every (centered) specimen.
pub fn gram_matrices(centered: &[Mat]) -> Vec<Mat> {
    centered.iter().map(|x| x * x.transpose()).collect()
}

/// Mean and divisor-`n` covariance of `vec B_i`.
pub fn sample_moments(grams: &[Mat]) -> Result<SampleMoments> {
    let (k, kk) = check_shapes(grams)?;
    if k != kk {
        return Err(Error::Dimension(format!("Gram matrices must be square, got {k}x{kk}")));
    }
    let n = grams.len();
    if n < 2 {
        return Err(Error::Data(format!("need at least 2 specimens, got {n}")));
    }
    let nf = n as f64;
    let mut bbar = Mat::zeros(k, k);
    for b in grams {
        bbar += b;
    }
    bbar /= nf;
    let vbar = vec(&bbar);
    let mut s = Mat::zeros(k * k, k * k);
    for b in grams {
        let dev = vec(b) - &vbar;
        s.ger(1.0, &dev, &dev, 1.0);
    }
    s /= nf;
    Ok(SampleMoments { bbar, s, n })
}

/// Sample moments of the Gram matrices of the centered specimens.
pub fn sample_moments_of(sample: &[Mat]) -> Result<SampleMoments> {
    sample_moments(&gram_matrices(&center_sample(sample)?))
}
