//! Euclidean form matrices, form-difference matrices and the bootstrap test
//! of equal mean forms.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::elliptical::EllipticalModel;
use crate::error::{Error, Result};
use crate::estimators::{
    estimate, reconstruct_mean_form_truncated, sample_moments_of, EstimatorCase, EstimatorOptions,
};
use crate::linalg::{Mat, DEFAULT_RANK_TOL};
use crate::rng::{indexed_seed, rng_from_seed};

/// Inter-landmark Euclidean distances, `K x K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormMatrix {
    #[serde(with = "crate::linalg::serde_rows")]
    pub dist: Mat,
}

pub fn form_matrix(x: &Mat) -> Result<FormMatrix> {
    let k = x.nrows();
    if k < 2 {
        return Err(Error::Dimension(format!("a form needs at least 2 landmarks, got {k}")));
    }
    let mut dist = Mat::zeros(k, k);
    for i in 0..k {
        for j in (i + 1)..k {
            let v = (x.row(i) - x.row(j)).norm();
            dist[(i, j)] = v;
            dist[(j, i)] = v;
        }
    }
    Ok(FormMatrix { dist })
}

/// Entrywise quotient of two form matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormDifference {
    #[serde(with = "crate::linalg::serde_rows")]
    pub values: Mat,
    /// Pairs `(i, j)`, `i < j`, whose denominator vanished under a nonzero
    /// numerator. Those entries hold `+inf`.
    pub degenerate: Vec<(usize, usize)>,
}

/// `F(mu_x) / F(mu_y)` entrywise, with `0/0 = 0`.
pub fn fdm(mu_x: &Mat, mu_y: &Mat) -> Result<FormDifference> {
    if mu_x.nrows() != mu_y.nrows() {
        return Err(Error::Dimension(format!(
            "mean forms have {} and {} landmarks",
            mu_x.nrows(),
            mu_y.nrows()
        )));
    }
    let fx = form_matrix(mu_x)?.dist;
    let fy = form_matrix(mu_y)?.dist;
    let k = fx.nrows();
    let mut values = Mat::zeros(k, k);
    let mut degenerate = Vec::new();
    for i in 0..k {
        for j in (i + 1)..k {
            let (a, b) = (fx[(i, j)], fy[(i, j)]);
            let q = if b != 0.0 {
                a / b
            } else if a == 0.0 {
                0.0
            } else {
                degenerate.push((i, j));
                f64::INFINITY
            };
            values[(i, j)] = q;
            values[(j, i)] = q;
        }
    }
    Ok(FormDifference { values, degenerate })
}

/// Ratio of the largest to the smallest off-diagonal entry.
pub fn t_statistic(fdm: &Mat) -> Result<f64> {
    let k = fdm.nrows();
    if k < 2 || fdm.ncols() != k {
        return Err(Error::Dimension(format!("need a square matrix with K >= 2, got {}x{}", k, fdm.ncols())));
    }
    let mut lo = f64::INFINITY;
    let mut hi = 0.0_f64;
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            let v = fdm[(i, j)];
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::Numeric(format!(
                    "form-difference entry ({},{}) is {v}; forms are degenerate",
                    i + 1,
                    j + 1
                )));
            }
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    Ok(hi / lo)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub boot_size: usize,
    pub seed: u64,
    pub case: EstimatorCase,
    pub estimator: EstimatorOptions,
    /// Largest tolerated share of failed replicates.
    pub max_failure_rate: f64,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self {
            boot_size: 100,
            seed: 0,
            case: EstimatorCase::default(),
            estimator: EstimatorOptions::default(),
            max_failure_rate: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormDifferenceResult {
    #[serde(with = "crate::linalg::serde_rows")]
    pub fdm: Mat,
    pub t_obs: f64,
    /// Statistics of the successful replicates, in replicate order.
    pub boot_t: Vec<f64>,
    /// `(raw_count + 1) / (boot_t.len() + 1)`.
    pub p_value: f64,
    pub boot_size: usize,
    /// Number of replicates with `T >= t_obs`.
    pub raw_count: usize,
    pub n_failed: usize,
}

/// Mean form of one group: centering, sample moments, moment estimate and a
/// rank-`D` reconstruction.
pub fn estimate_mean_form(
    sample: &[Mat],
    model: &EllipticalModel,
    case: EstimatorCase,
    opts: &EstimatorOptions,
) -> Result<Mat> {
    let d = sample
        .first()
        .ok_or_else(|| Error::Data("empty group".into()))?
        .ncols();
    let sm = sample_moments_of(sample)?;
    let est = estimate(&sm, model, d, case, opts)?;
    est.check_complete()?;
    Ok(reconstruct_mean_form_truncated(&est.m, d, DEFAULT_RANK_TOL)?.mu)
}

fn t_between(x: &[Mat], y: &[Mat], model: &EllipticalModel, opts: &BootstrapOptions) -> Result<(Mat, f64)> {
    let mx = estimate_mean_form(x, model, opts.case, &opts.estimator)?;
    let my = estimate_mean_form(y, model, opts.case, &opts.estimator)?;
    let f = fdm(&mx, &my)?;
    let t = t_statistic(&f.values)?;
    Ok((f.values, t))
}

/// Bootstrap test with default options apart from the case, size and seed.
pub fn bootstrap_test(
    group_x: &[Mat],
    group_y: &[Mat],
    model: &EllipticalModel,
    case: EstimatorCase,
    boot_size: usize,
    seed: u64,
) -> Result<FormDifferenceResult> {
    let opts = BootstrapOptions {
        boot_size,
        seed,
        case,
        ..Default::default()
    };
    bootstrap_test_with(group_x, group_y, model, &opts)
}

/// Null replicates draw both pseudo-groups, with replacement and at their
/// original sizes, from the pooled specimens.
pub fn bootstrap_test_with(
    group_x: &[Mat],
    group_y: &[Mat],
    model: &EllipticalModel,
    opts: &BootstrapOptions,
) -> Result<FormDifferenceResult> {
    if opts.boot_size == 0 {
        return Err(Error::InvalidParameter("bootstrap size must be at least 1".into()));
    }
    let (nx, ny) = (group_x.len(), group_y.len());
    let shape = group_x
        .first()
        .or(group_y.first())
        .ok_or_else(|| Error::Data("both groups are empty".into()))?
        .shape();
    if group_x.iter().chain(group_y).any(|m| m.shape() != shape) {
        return Err(Error::Dimension("specimens differ in shape across groups".into()));
    }
    let k = shape.0;
    if nx < k || ny < k {
        return Err(Error::Data(format!("each group needs at least K = {k} specimens, got {nx} and {ny}")));
    }
    let (fdm_obs, t_obs) = t_between(group_x, group_y, model, opts)?;

    let pooled: Vec<&Mat> = group_x.iter().chain(group_y).collect();
    let total = pooled.len();
    let outcomes: Vec<Result<f64>> = (0..opts.boot_size)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng_from_seed(indexed_seed(opts.seed, b as u64));
            let mut draw = |n: usize| -> Vec<Mat> {
                (0..n).map(|_| pooled[rng.random_range(0..total)].clone()).collect()
            };
            let x = draw(nx);
            let y = draw(ny);
            t_between(&x, &y, model, opts).map(|(_, t)| t)
        })
        .collect();

    let mut boot_t = Vec::with_capacity(opts.boot_size);
    let mut reasons = Vec::new();
    for (b, r) in outcomes.into_iter().enumerate() {
        match r {
            Ok(t) => boot_t.push(t),
            Err(e) => reasons.push(format!("replicate {}: {e}", b + 1)),
        }
    }
    let n_failed = reasons.len();
    if n_failed as f64 > opts.max_failure_rate * opts.boot_size as f64 {
        return Err(Error::Numeric(format!(
            "{n_failed} of {} bootstrap replicates failed; first: {}",
            opts.boot_size,
            reasons.iter().take(3).cloned().collect::<Vec<_>>().join(" | ")
        )));
    }
    let raw_count = boot_t.iter().filter(|&&t| t >= t_obs).count();
    let p_value = (raw_count + 1) as f64 / (boot_t.len() + 1) as f64;
    Ok(FormDifferenceResult {
        fdm: fdm_obs,
        t_obs,
        boot_t,
        p_value,
        boot_size: opts.boot_size,
        raw_count,
        n_failed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elliptical::{sample_matrix_elliptical, MatrixEllipticalSpec};
    use crate::linalg::centering_matrix;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn rotation(t: f64) -> Mat {
        Mat::from_row_slice(2, 2, &[t.cos(), -t.sin(), t.sin(), t.cos()])
    }

    #[test]
    fn unit_segment() {
        let f = form_matrix(&Mat::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0])).unwrap();
        assert_eq!(f.dist[(0, 1)], 1.0);
        assert_eq!(f.dist[(1, 0)], 1.0);
    }

    #[test]
    fn equilateral_triangle() {
        let h = 3f64.sqrt() / 2.0;
        let f = form_matrix(&Mat::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.0, 0.5, h])).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 0.0 } else { 1.0 };
                assert_relative_eq!(f.dist[(i, j)], want, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn single_landmark_rejected() {
        assert!(form_matrix(&Mat::zeros(1, 2)).is_err());
    }

    #[test]
    fn hand_computed_triangles() {
        // 3-4-5 right triangle against the unit right isosceles triangle.
        let x = Mat::from_row_slice(3, 2, &[0.0, 0.0, 3.0, 0.0, 0.0, 4.0]);
        let y = Mat::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        let f = fdm(&x, &y).unwrap();
        assert!(f.degenerate.is_empty());
        assert_relative_eq!(f.values[(0, 1)], 3.0, epsilon = 1e-15);
        assert_relative_eq!(f.values[(0, 2)], 4.0, epsilon = 1e-15);
        assert_relative_eq!(f.values[(1, 2)], 5.0 / 2f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(t_statistic(&f.values).unwrap(), 4.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn self_quotient_and_scaling() {
        let mu = Mat::from_row_slice(4, 2, &[0.0, 0.0, 2.0, 0.1, 2.5, 1.7, -0.3, 1.1]);
        let same = fdm(&mu, &mu).unwrap().values;
        let scaled = fdm(&(&mu * 2.5), &mu).unwrap().values;
        for i in 0..4 {
            for j in 0..4 {
                let one = if i == j { 0.0 } else { 1.0 };
                assert_eq!(same[(i, j)], one);
                assert_relative_eq!(scaled[(i, j)], 2.5 * one, epsilon = 1e-14);
            }
        }
        assert_eq!(t_statistic(&same).unwrap(), 1.0);
    }

    #[test]
    fn degenerate_denominator_is_flagged() {
        let x = Mat::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        let y = Mat::from_row_slice(3, 2, &[0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let f = fdm(&x, &y).unwrap();
        assert_eq!(f.degenerate, vec![(0, 1)]);
        assert!(f.values[(0, 1)].is_infinite());
        assert!(t_statistic(&f.values).is_err());
        // 0/0 = 0 is not a flag but still makes T undefined
        let g = fdm(&y, &y).unwrap();
        assert!(g.degenerate.is_empty());
        assert_eq!(g.values[(0, 1)], 0.0);
        assert!(t_statistic(&g.values).is_err());
    }

    #[test]
    fn t_of_simple_spread() {
        let f = Mat::from_row_slice(3, 3, &[0.0, 2.0, 0.5, 2.0, 0.0, 1.0, 0.5, 1.0, 0.0]);
        assert_eq!(t_statistic(&f).unwrap(), 4.0);
    }

    fn config(k: usize) -> impl Strategy<Value = Mat> {
        proptest::collection::vec(-5.0..5.0f64, k * 2).prop_map(move |v| Mat::from_row_slice(k, 2, &v))
    }

    proptest! {
        #[test]
        fn rigid_motion_invariance(x in config(5), t in 0.0..6.3f64, a in -3.0..3.0f64, b in -3.0..3.0f64, reflect: bool) {
            let mut g = rotation(t);
            if reflect {
                g.column_mut(1).neg_mut();
            }
            let mut moved = &x * g;
            for mut row in moved.row_iter_mut() {
                row[0] += a;
                row[1] += b;
            }
            let f0 = form_matrix(&x).unwrap().dist;
            let f1 = form_matrix(&moved).unwrap().dist;
            prop_assert!((f0 - f1).amax() < 1e-12);
        }

        #[test]
        fn scaling_doubles_distances(x in config(4)) {
            let f0 = form_matrix(&x).unwrap().dist;
            let f2 = form_matrix(&(&x * 2.0)).unwrap().dist;
            prop_assert!((f0 * 2.0 - f2).amax() < 1e-12);
        }

        #[test]
        fn reciprocal_quotients(x in config(4), y in config(4)) {
            let a = fdm(&x, &y).unwrap();
            let b = fdm(&y, &x).unwrap();
            prop_assume!(a.degenerate.is_empty() && b.degenerate.is_empty());
            prop_assume!(a.values.iter().enumerate().all(|(t, &v)| t % 5 == 0 || v > 1e-9));
            let prod = a.values.component_mul(&b.values);
            for i in 0..4 {
                for j in 0..4 {
                    let want = if i == j { 0.0 } else { 1.0 };
                    prop_assert!((prod[(i, j)] - want).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn t_at_least_one_and_scale_free(x in config(4), y in config(4), c in 0.1..10.0f64) {
            let f = fdm(&x, &y).unwrap().values;
            if let Ok(t) = t_statistic(&f) {
                prop_assert!(t >= 1.0);
                let ts = t_statistic(&fdm(&(&x * c), &y).unwrap().values).unwrap();
                prop_assert!((ts - t).abs() <= 1e-9 * t);
            }
        }
    }

    fn groups(n: usize, seed: u64) -> (Vec<Mat>, Vec<Mat>) {
        let h = centering_matrix(5);
        let mu = &h * Mat::from_row_slice(5, 2, &[0.0, 0.0, 3.0, 0.0, 3.5, 2.0, 1.0, 3.0, -1.0, 1.5]);
        let spec = MatrixEllipticalSpec::new(mu, &h * 0.02 * &h, Mat::identity(2, 2), EllipticalModel::Gaussian);
        (
            sample_matrix_elliptical(&spec, n, seed).unwrap(),
            sample_matrix_elliptical(&spec, n, seed + 1000).unwrap(),
        )
    }

    #[test]
    fn identical_groups_sit_at_the_bottom() {
        let (x, _) = groups(20, 4);
        let r = bootstrap_test(&x, &x, &EllipticalModel::Gaussian, EstimatorCase::DependentExact, 40, 9).unwrap();
        assert_eq!(r.t_obs, 1.0);
        assert_eq!(r.n_failed, 0);
        assert_eq!(r.raw_count, 40);
        assert!(r.p_value > 0.5);
    }

    #[test]
    fn deterministic_under_seed() {
        let (x, y) = groups(15, 5);
        let a = bootstrap_test(&x, &y, &EllipticalModel::Gaussian, EstimatorCase::DependentExact, 30, 1).unwrap();
        let b = bootstrap_test(&x, &y, &EllipticalModel::Gaussian, EstimatorCase::DependentExact, 30, 1).unwrap();
        assert_eq!(a, b);
        assert!(a.p_value > 0.0 && a.p_value <= 1.0);
        assert_eq!(a.boot_t.len() + a.n_failed, 30);
    }

    #[test]
    fn too_few_specimens() {
        let (x, y) = groups(15, 6);
        let err = bootstrap_test(&x[..4], &y, &EllipticalModel::Gaussian, EstimatorCase::DependentExact, 10, 1);
        assert!(matches!(err, Err(Error::Data(_))));
        assert!(bootstrap_test(&x, &y, &EllipticalModel::Gaussian, EstimatorCase::DependentExact, 0, 1).is_err());
    }
}
