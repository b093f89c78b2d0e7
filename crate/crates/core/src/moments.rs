//! Analytic moments of `vec Y` and of the Gram matrix `B = Y Y^T` for
//! `Y = mu + Z` with `Cov(vec Z) = c0 (Theta (x) Sigma)`.
//!
//! Every fourth moment follows from
//! `E(z_a z_b z_c z_d) = kappa0 (W_ab W_cd + W_ac W_bd + W_ad W_bc)`,
//! `W = Theta (x) Sigma`, which holds for any elliptical `Z`.

use serde::{Deserialize, Serialize};

use crate::elliptical::MomentConstants;
use crate::error::{Error, Result};
use crate::linalg::{box_plus, check_symmetric, commutation_matrix, khatri_rao, kron, vec, BlockPartition, Mat};

/// Largest `K * D` for which [`moment4_vecY`] is materialised.
pub const MAX_MOMENT4_DIM: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMoments {
    /// K x D mean.
    #[serde(with = "crate::linalg::serde_rows")]
    pub mu: Mat,
    /// K x K row scale.
    #[serde(with = "crate::linalg::serde_rows")]
    pub sigma: Mat,
    /// D x D column scale.
    #[serde(with = "crate::linalg::serde_rows")]
    pub theta: Mat,
    pub c0: f64,
    pub kappa0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentPair {
    #[serde(with = "crate::linalg::serde_rows")]
    pub expected_b: Mat,
    #[serde(with = "crate::linalg::serde_rows")]
    pub cov_vec_b: Mat,
}

/// How the columns of `Y` relate to each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dependence {
    /// One matrix elliptical law for the whole of `Y`.
    Dependent,
    /// Independent elliptical columns.
    Independent,
}

impl ModelMoments {
    pub fn new(mu: Mat, sigma: Mat, theta: Mat, constants: MomentConstants) -> Result<Self> {
        let m = Self {
            mu,
            sigma,
            theta,
            c0: constants.c0,
            kappa0: constants.kappa0,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn k(&self) -> usize {
        self.mu.nrows()
    }

    pub fn d(&self) -> usize {
        self.mu.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let (k, d) = self.mu.shape();
        if self.sigma.shape() != (k, k) || self.theta.shape() != (d, d) {
            return Err(Error::Dimension(format!(
                "mu is {k}x{d} but sigma is {}x{} and theta is {}x{}",
                self.sigma.nrows(),
                self.sigma.ncols(),
                self.theta.nrows(),
                self.theta.ncols()
            )));
        }
        check_symmetric(&self.sigma)?;
        check_symmetric(&self.theta)?;
        if !(self.c0.is_finite() && self.kappa0.is_finite()) {
            return Err(Error::InvalidParameter("moment constants must be finite".into()));
        }
        Ok(())
    }

    /// `mu Theta mu^T`, assembled as the block sum of `Theta (.) vec(mu) vec(mu)^T`.
    pub fn weighted_mean_outer(&self) -> Mat {
        let (k, d) = self.mu.shape();
        let vm = vec(&self.mu);
        let outer = &vm * vm.transpose();
        let weighted = khatri_rao(&self.theta, &outer, BlockPartition::square(1, d))
            .expect("theta and vec(mu) vec(mu)^T share a D x D block grid");
        box_plus(&weighted, BlockPartition::square(k, d)).expect("KD x KD splits into K x K blocks")
    }
}

fn identity_plus_commutation(k: usize) -> Mat {
    Mat::identity(k * k, k * k) + commutation_matrix(k, k)
}

/// `E(vec Y vec^T Y) = c0 (Theta (x) Sigma) + vec(mu) vec^T(mu)`.
#[allow(non_snake_case)]
pub fn moment2_vecY(m: &ModelMoments) -> Result<Mat> {
    m.validate()?;
    let vm = vec(&m.mu);
    Ok(kron(&m.theta, &m.sigma) * m.c0 + &vm * vm.transpose())
}

/// `E(vec Y vec^T Y (x) vec Y vec^T Y)`, size `(KD)^2 x (KD)^2`.
#[allow(non_snake_case)]
pub fn moment4_vecY(m: &ModelMoments) -> Result<Mat> {
    m.validate()?;
    let n = m.k() * m.d();
    if n > MAX_MOMENT4_DIM {
        return Err(Error::Unsupported(format!(
            "fourth moment of vec Y is only materialised for KD <= {MAX_MOMENT4_DIM}, got {n}"
        )));
    }
    let w = kron(&m.theta, &m.sigma);
    let vm = vec(&m.mu);
    let mm = &vm * vm.transpose();
    let vw = vec(&w);
    let vmm = vec(&mm);
    let ik = identity_plus_commutation(n);

    let quartic = (&ik * kron(&w, &w) + &vw * vw.transpose()) * m.kappa0;
    let cross = (&ik * (kron(&mm, &w) + kron(&w, &mm)) + &vw * vmm.transpose() + &vmm * vw.transpose()) * m.c0;
    Ok(quartic + cross + kron(&mm, &mm))
}

/// Column moments `(E(y_d y_s^T), E(y_d y_s^T (x) y_d y_s^T))` for 0-based
/// column indices `d`, `s`.
pub fn pair_moment(m: &ModelMoments, d: usize, s: usize) -> Result<(Mat, Mat)> {
    m.validate()?;
    let dd = m.d();
    if d >= dd || s >= dd {
        return Err(Error::Index(format!("column pair ({d}, {s}) with D = {dd}")));
    }
    let k = m.k();
    let sig = &m.sigma;
    let th = &m.theta;
    let mu_d = m.mu.column(d).into_owned();
    let mu_s = m.mu.column(s).into_owned();
    let mds = &mu_d * mu_s.transpose();
    let mdd = &mu_d * mu_d.transpose();
    let mss = &mu_s * mu_s.transpose();
    let vs = vec(sig);
    let ik = identity_plus_commutation(k);
    let (t_ds, t_dd, t_ss) = (th[(d, s)], th[(d, d)], th[(s, s)]);

    let first = sig * (m.c0 * t_ds) + &mds;
    let quartic = (&ik * kron(sig, sig) * (t_ds * t_ds) + &vs * vs.transpose() * (t_dd * t_ss)) * m.kappa0;
    let cross = (&ik * (kron(&mds, sig) + kron(sig, &mds)) * t_ds
        + &vs * vec(&mss).transpose() * t_dd
        + vec(&mdd) * vs.transpose() * t_ss)
        * m.c0;
    Ok((first, quartic + cross + kron(&mds, &mds)))
}

/// `E(B)` and `Cov(vec B)` when `Y` follows one matrix elliptical law.
pub fn moments_b_dependent(m: &ModelMoments) -> Result<MomentPair> {
    m.validate()?;
    let tr = m.theta.trace();
    let tr2 = (&m.theta * &m.theta).trace();
    Ok(assemble(m, tr, tr2, tr * tr))
}

/// `E(B)` and `Cov(vec B)` when the columns of `Y` are independent.
/// `theta` must be diagonal.
pub fn moments_b_independent(m: &ModelMoments) -> Result<MomentPair> {
    m.validate()?;
    let d = m.d();
    for i in 0..d {
        for j in 0..d {
            if i != j && m.theta[(i, j)] != 0.0 {
                return Err(Error::InvalidParameter(
                    "independent columns require a diagonal theta".into(),
                ));
            }
        }
    }
    let tr = m.theta.trace();
    let tr2 = (&m.theta * &m.theta).trace();
    Ok(assemble(m, tr, tr2, tr2))
}

pub fn moments_b(m: &ModelMoments, dep: Dependence) -> Result<MomentPair> {
    match dep {
        Dependence::Dependent => moments_b_dependent(m),
        Dependence::Independent => moments_b_independent(m),
    }
}

// (I + K_K){kappa0 tr(Theta^2) Sigma (x) Sigma + c0 [G (x) Sigma + Sigma (x) G]}
//   + (kappa0 - c0^2) w vec(Sigma) vec^T(Sigma),  G = mu Theta mu^T
fn assemble(m: &ModelMoments, tr: f64, tr2: f64, w: f64) -> MomentPair {
    let k = m.k();
    let g = m.weighted_mean_outer();
    let expected_b = &m.sigma * (m.c0 * tr) + &m.mu * m.mu.transpose();
    let vs = vec(&m.sigma);
    let inner = kron(&m.sigma, &m.sigma) * (m.kappa0 * tr2) + (kron(&g, &m.sigma) + kron(&m.sigma, &g)) * m.c0;
    let cov_vec_b = identity_plus_commutation(k) * inner + &vs * vs.transpose() * ((m.kappa0 - m.c0 * m.c0) * w);
    MomentPair { expected_b, cov_vec_b }
}

/// Mean and variance of the single entry `b_ij` (0-based, symmetric in `i`, `j`).
pub fn entry_moments(m: &ModelMoments, i: usize, j: usize, dep: Dependence) -> Result<(f64, f64)> {
    m.validate()?;
    let k = m.k();
    if i >= k || j >= k {
        return Err(Error::Index(format!("entry ({i}, {j}) with K = {k}")));
    }
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    if dep == Dependence::Independent {
        // reuse the diagonal check
        moments_b_independent(m)?;
    }
    let tr = m.theta.trace();
    let tr2 = (&m.theta * &m.theta).trace();
    let w = match dep {
        Dependence::Dependent => tr * tr,
        Dependence::Independent => tr2,
    };
    let s = &m.sigma;
    let g = m.weighted_mean_outer();
    let mean = m.c0 * tr * s[(i, j)] + m.mu.row(i).dot(&m.mu.row(j));
    let var = m.kappa0 * tr2 * (s[(i, i)] * s[(j, j)] + s[(i, j)] * s[(i, j)])
        + (m.kappa0 - m.c0 * m.c0) * w * s[(i, j)] * s[(i, j)]
        + m.c0 * (g[(j, j)] * s[(i, i)] + g[(i, i)] * s[(j, j)] + 2.0 * g[(i, j)] * s[(i, j)]);
    Ok((mean, var))
}
