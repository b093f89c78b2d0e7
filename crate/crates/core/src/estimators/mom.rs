//! Closed-form moment estimators of `(M, Sigma_K)` from the mean and the
//! entrywise variances of the Gram matrices, for `Sigma_D = I`.
//!
//! Each diagonal entry solves `P s_ii^2 + Q s_ii - v_ii = 0` and each
//! off-diagonal entry `R s_ij^2 + L s_ij + (T_ij - v_ij) = 0`, where `v_ij` is
//! the sample variance of `b_ij`; then `m_ij = bbar_ij - D c0 s_ij`.

use serde::{Deserialize, Serialize};

use super::sample::SampleMoments;
use crate::elliptical::{EllipticalModel, MomentConstants};
use crate::error::{Error, Result};
use crate::linalg::Mat;

/// Which coefficient set to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorCase {
    /// Dependent columns with the coefficients of the reference closed-form set.
    Dependent,
    /// Dependent columns with coefficients re-derived from the entry variance
    /// `Var(b_ij)` of one matrix elliptical law.
    #[default]
    DependentExact,
    /// Independent elliptical columns.
    Independent,
}

impl EstimatorCase {
    /// Dimension at which the model's moment constants are evaluated for
    /// `K` landmarks in `D` dimensions (centered data lose one landmark's worth
    /// of rank).
    pub fn law_dimension(&self, k: usize, d: usize) -> usize {
        match self {
            EstimatorCase::Dependent | EstimatorCase::DependentExact => (k - 1) * d,
            EstimatorCase::Independent => k - 1,
        }
    }

    pub fn constants(&self, model: &EllipticalModel, k: usize, d: usize) -> Result<MomentConstants> {
        if k < 2 {
            return Err(Error::Dimension(format!("need at least 2 landmarks, got {k}")));
        }
        model.moment_constants_in_dim(self.law_dimension(k, d))
    }
}

/// How to pick between the two roots of an off-diagonal quadratic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RootRule {
    /// Always the `+sqrt` root.
    Plus,
    /// The `+sqrt` root unless it violates `|s_ij| <= sqrt(s_ii s_jj)` while
    /// the `-sqrt` root does not.
    #[default]
    Admissible,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorOptions {
    pub root_rule: RootRule,
    /// Scale of the tolerance under which `P` or `R` count as zero; the
    /// tolerance is `scale * D * max(1, c0^2, kappa0)`.
    pub branch_tol_scale: f64,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        Self {
            root_rule: RootRule::Admissible,
            branch_tol_scale: 1e-10,
        }
    }
}

/// The leading coefficients `P` and `R` (free of data).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeadingCoefficients {
    pub p: f64,
    pub r: f64,
}

pub fn leading_coefficients(case: EstimatorCase, c: MomentConstants, d: usize) -> LeadingCoefficients {
    let df = d as f64;
    let (k0, c2) = (c.kappa0, c.c0 * c.c0);
    match case {
        EstimatorCase::Dependent => {
            let shared = df * (2.0 * k0 - (1.0 + 2.0 * (2.0 - df)) * c2);
            LeadingCoefficients {
                p: df * (k0 - 2.0 * c2) + shared,
                r: shared,
            }
        }
        EstimatorCase::DependentExact => LeadingCoefficients {
            p: df * ((2.0 + df) * k0 - (4.0 + df) * c2),
            r: df * ((1.0 + df) * k0 - (2.0 + df) * c2),
        },
        EstimatorCase::Independent => LeadingCoefficients {
            p: df * (3.0 * k0 - 5.0 * c2),
            r: df * (2.0 * k0 - 3.0 * c2),
        },
    }
}

fn linear_diag(case: EstimatorCase, c0: f64, d: usize, bii: f64) -> f64 {
    match case {
        EstimatorCase::Dependent => 2.0 * c0 * (3.0 - d as f64) * bii,
        _ => 4.0 * c0 * bii,
    }
}

fn linear_off(case: EstimatorCase, c0: f64, d: usize, bij: f64) -> f64 {
    match case {
        EstimatorCase::Dependent => 2.0 * (2.0 - d as f64) * c0 * bij,
        _ => 2.0 * c0 * bij,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Quadratic,
    /// Leading coefficient treated as zero.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Root {
    Plus,
    Minus,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryDiagnostic {
    pub i: usize,
    pub j: usize,
    pub branch: Branch,
    pub root: Option<Root>,
    pub discriminant: Option<f64>,
    /// Set when the chosen root is not the `+sqrt` one, or no admissible root exists.
    pub flagged: bool,
}

/// An entry for which the estimating equation had no usable solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryFailure {
    pub i: usize,
    pub j: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub case: EstimatorCase,
    pub constants: MomentConstants,
    pub d: usize,
    pub p: f64,
    pub r: f64,
    pub branch_tol: f64,
    pub p_branch: Branch,
    pub r_branch: Branch,
    pub entries: Vec<EntryDiagnostic>,
    pub failures: Vec<EntryFailure>,
    /// Negative eigenvalues of `M` clipped during reconstruction.
    pub clipped_eigenvalues: Vec<f64>,
    /// Positive eigenvalue mass of `M` beyond the leading `D`.
    pub spilled_mass: Option<f64>,
}

impl Diagnostics {
    pub fn flagged_entries(&self) -> usize {
        self.entries.iter().filter(|e| e.flagged).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomEstimate {
    /// Estimate of `mu mu^T`.
    #[serde(with = "crate::linalg::serde_rows")]
    pub m: Mat,
    /// Estimate of `Sigma_K`.
    #[serde(with = "crate::linalg::serde_rows")]
    pub sigma_k: Mat,
    /// Reconstructed mean form, when available.
    #[serde(with = "crate::linalg::serde_rows::option")]
    pub mu: Option<Mat>,
    /// Column covariance from the flip-flop stage, when run.
    #[serde(with = "crate::linalg::serde_rows::option")]
    pub sigma_d: Option<Mat>,
    pub diagnostics: Diagnostics,
}

impl MomEstimate {
    pub fn is_complete(&self) -> bool {
        self.diagnostics.failures.is_empty()
    }

    /// Turns per-entry failures into an error.
    pub fn check_complete(&self) -> Result<()> {
        if self.is_complete() {
            Ok(())
        } else {
            Err(Error::EntryFailures(self.diagnostics.failures.clone()))
        }
    }
}

/// Estimator with the reference dependent-case coefficients.
pub fn estimate_dependent(sm: &SampleMoments, model: &EllipticalModel, d: usize) -> Result<MomEstimate> {
    estimate(sm, model, d, EstimatorCase::Dependent, &EstimatorOptions::default())
}

/// Dependent-case estimator with re-derived coefficients.
pub fn estimate_dependent_exact(sm: &SampleMoments, model: &EllipticalModel, d: usize) -> Result<MomEstimate> {
    estimate(sm, model, d, EstimatorCase::DependentExact, &EstimatorOptions::default())
}

/// Estimator for independent columns.
pub fn estimate_independent(sm: &SampleMoments, model: &EllipticalModel, d: usize) -> Result<MomEstimate> {
    estimate(sm, model, d, EstimatorCase::Independent, &EstimatorOptions::default())
}

pub fn estimate(
    sm: &SampleMoments,
    model: &EllipticalModel,
    d: usize,
    case: EstimatorCase,
    opts: &EstimatorOptions,
) -> Result<MomEstimate> {
    let c = case.constants(model, sm.k(), d)?;
    estimate_with_constants(sm, c, d, case, opts)
}

pub fn estimate_with_constants(
    sm: &SampleMoments,
    c: MomentConstants,
    d: usize,
    case: EstimatorCase,
    opts: &EstimatorOptions,
) -> Result<MomEstimate> {
    if d == 0 {
        return Err(Error::Dimension("D must be positive".into()));
    }
    if !(c.c0.is_finite() && c.kappa0.is_finite() && c.c0 > 0.0) {
        return Err(Error::InvalidParameter(format!("bad moment constants {c:?}")));
    }
    let k = sm.k();
    let df = d as f64;
    let lead = leading_coefficients(case, c, d);
    let branch_tol = opts.branch_tol_scale * df * 1f64.max(c.c0 * c.c0).max(c.kappa0);
    let p_branch = if lead.p.abs() <= branch_tol { Branch::Linear } else { Branch::Quadratic };
    let r_branch = if lead.r.abs() <= branch_tol { Branch::Linear } else { Branch::Quadratic };

    let mut sigma = Mat::from_element(k, k, f64::NAN);
    let mut entries = Vec::new();
    let mut failures = Vec::new();
    let bbar = &sm.bbar;

    for i in 0..k {
        let v = sm.entry_variance(i, i);
        let q = linear_diag(case, c.c0, d, bbar[(i, i)]);
        let mut diag = EntryDiagnostic {
            i,
            j: i,
            branch: p_branch,
            root: None,
            discriminant: None,
            flagged: false,
        };
        match p_branch {
            Branch::Linear => {
                if q == 0.0 {
                    failures.push(fail(i, i, "linear coefficient Q is zero in the P = 0 branch"));
                } else {
                    sigma[(i, i)] = v / q;
                    diag.root = Some(Root::Linear);
                }
            }
            Branch::Quadratic => {
                let disc = q * q + 4.0 * lead.p * v;
                diag.discriminant = Some(disc);
                if disc < 0.0 || !disc.is_finite() {
                    failures.push(fail(i, i, &format!("negative discriminant {disc:e}")));
                } else {
                    let root = disc.sqrt();
                    let plus = (root - q) / (2.0 * lead.p);
                    let minus = (-root - q) / (2.0 * lead.p);
                    if plus >= 0.0 {
                        sigma[(i, i)] = plus;
                        diag.root = Some(Root::Plus);
                    } else if minus >= 0.0 {
                        sigma[(i, i)] = minus;
                        diag.root = Some(Root::Minus);
                        diag.flagged = true;
                    } else {
                        sigma[(i, i)] = plus;
                        diag.root = Some(Root::Plus);
                        diag.flagged = true;
                    }
                }
            }
        }
        entries.push(diag);
    }

    let t_coef = df * (c.kappa0 - 2.0 * c.c0 * c.c0);
    for j in 0..k {
        for i in 0..j {
            let (sii, sjj) = (sigma[(i, i)], sigma[(j, j)]);
            if sii.is_nan() || sjj.is_nan() {
                failures.push(fail(i, j, "depends on a failed diagonal entry"));
                continue;
            }
            let v = sm.entry_variance(i, j);
            let t = t_coef * sii * sjj + c.c0 * (bbar[(j, j)] * sii + bbar[(i, i)] * sjj);
            let l = linear_off(case, c.c0, d, bbar[(i, j)]);
            let mut diag = EntryDiagnostic {
                i,
                j,
                branch: r_branch,
                root: None,
                discriminant: None,
                flagged: false,
            };
            let value = match r_branch {
                Branch::Linear => {
                    if l == 0.0 {
                        failures.push(fail(i, j, "linear coefficient is zero in the R = 0 branch"));
                        None
                    } else {
                        diag.root = Some(Root::Linear);
                        Some((v - t) / l)
                    }
                }
                Branch::Quadratic => {
                    let disc = l * l / 4.0 - lead.r * (t - v);
                    diag.discriminant = Some(disc);
                    if disc < 0.0 || !disc.is_finite() {
                        failures.push(fail(i, j, &format!("negative discriminant {disc:e}")));
                        None
                    } else {
                        let root = disc.sqrt();
                        let plus = (root - l / 2.0) / lead.r;
                        let minus = (-root - l / 2.0) / lead.r;
                        let (value, which, flagged) = pick_root(plus, minus, sii, sjj, opts.root_rule);
                        diag.root = Some(which);
                        diag.flagged = flagged;
                        Some(value)
                    }
                }
            };
            if let Some(x) = value {
                sigma[(i, j)] = x;
                sigma[(j, i)] = x;
            }
            entries.push(diag);
        }
    }

    let m = Mat::from_fn(k, k, |i, j| bbar[(i, j)] - df * c.c0 * sigma[(i, j)]);
    Ok(MomEstimate {
        m,
        sigma_k: sigma,
        mu: None,
        sigma_d: None,
        diagnostics: Diagnostics {
            case,
            constants: c,
            d,
            p: lead.p,
            r: lead.r,
            branch_tol,
            p_branch,
            r_branch,
            entries,
            failures,
            clipped_eigenvalues: Vec::new(),
            spilled_mass: None,
        },
    })
}

fn fail(i: usize, j: usize, reason: &str) -> EntryFailure {
    EntryFailure {
        i,
        j,
        reason: reason.to_string(),
    }
}

fn pick_root(plus: f64, minus: f64, sii: f64, sjj: f64, rule: RootRule) -> (f64, Root, bool) {
    if rule == RootRule::Plus {
        return (plus, Root::Plus, false);
    }
    let bound = (sii.max(0.0) * sjj.max(0.0)).sqrt() * (1.0 + 1e-12);
    let plus_ok = plus.abs() <= bound;
    let minus_ok = minus.abs() <= bound;
    match (plus_ok, minus_ok) {
        (true, _) => (plus, Root::Plus, false),
        (false, true) => (minus, Root::Minus, true),
        (false, false) => {
            if minus.abs() < plus.abs() {
                (minus, Root::Minus, true)
            } else {
                (plus, Root::Plus, true)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::{entry_moments, Dependence, ModelMoments};
    use approx::assert_relative_eq;

    fn gaussian() -> MomentConstants {
        MomentConstants::GAUSSIAN
    }

    /// Sample moments whose entries equal the population values.
    fn population(mm: &ModelMoments, dep: Dependence) -> SampleMoments {
        let k = mm.k();
        let mut s = Mat::zeros(k * k, k * k);
        let mut bbar = Mat::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                let (e, v) = entry_moments(mm, i, j, dep).unwrap();
                bbar[(i, j)] = e;
                s[(j * k + i, j * k + i)] = v;
            }
        }
        SampleMoments { bbar, s, n: 1000 }
    }

    fn truth() -> (Mat, Mat) {
        let mu = Mat::from_row_slice(4, 2, &[-1.5, -0.5, 1.0, -1.0, 1.2, 0.9, -0.7, 0.6]);
        let h = crate::linalg::centering_matrix(4);
        let mu = &h * mu;
        let raw = Mat::from_row_slice(4, 4, &[
            0.05, 0.01, 0.0, -0.01,
            0.01, 0.04, 0.005, 0.0,
            0.0, 0.005, 0.06, 0.01,
            -0.01, 0.0, 0.01, 0.05,
        ]);
        (mu, &h * raw * &h)
    }

    #[test]
    fn reference_coefficients_for_gaussian() {
        let l2 = leading_coefficients(EstimatorCase::Dependent, gaussian(), 2);
        assert_eq!(l2.p, 0.0);
        let l3 = leading_coefficients(EstimatorCase::Dependent, gaussian(), 3);
        assert_relative_eq!(l3.p, 6.0, epsilon = 1e-12);
        assert_relative_eq!(l3.r, 9.0, epsilon = 1e-12);
        for d in 1..6 {
            let li = leading_coefficients(EstimatorCase::Independent, gaussian(), d);
            assert_relative_eq!(li.p, -2.0 * d as f64, epsilon = 1e-12);
            assert_relative_eq!(li.r, -(d as f64), epsilon = 1e-12);
            // the two exact sets coincide when kappa0 = c0^2
            let le = leading_coefficients(EstimatorCase::DependentExact, gaussian(), d);
            assert_relative_eq!(le.p, li.p, epsilon = 1e-12);
            assert_relative_eq!(le.r, li.r, epsilon = 1e-12);
        }
    }

    #[test]
    fn gaussian_d2_uses_linear_branch() {
        let (mu, sigma) = truth();
        let mm = ModelMoments::new(mu, sigma, Mat::identity(2, 2), gaussian()).unwrap();
        let sm = population(&mm, Dependence::Dependent);
        let est = estimate_dependent(&sm, &EllipticalModel::Gaussian, 2).unwrap();
        assert_eq!(est.diagnostics.p_branch, Branch::Linear);
        for i in 0..4 {
            let q = 2.0 * sm.bbar[(i, i)];
            assert_relative_eq!(est.sigma_k[(i, i)], sm.entry_variance(i, i) / q, epsilon = 1e-14);
            assert_eq!(est.diagnostics.entries[i].root, Some(Root::Linear));
        }
    }

    #[test]
    fn exact_estimators_recover_population_values() {
        let (mu, sigma) = truth();
        let m_true = &mu * mu.transpose();
        let cases = [
            (EstimatorCase::DependentExact, Dependence::Dependent, MomentConstants { c0: 4.0 / 3.0, kappa0: 5.0 / 3.0 }),
            (EstimatorCase::DependentExact, Dependence::Dependent, gaussian()),
            (EstimatorCase::Independent, Dependence::Independent, MomentConstants { c0: 4.0 / 3.0, kappa0: 8.0 / 3.0 }),
            (EstimatorCase::Independent, Dependence::Independent, gaussian()),
        ];
        for (case, dep, c) in cases {
            let mm = ModelMoments::new(mu.clone(), sigma.clone(), Mat::identity(2, 2), c).unwrap();
            let sm = population(&mm, dep);
            let est = estimate_with_constants(&sm, c, 2, case, &EstimatorOptions::default()).unwrap();
            est.check_complete().unwrap();
            assert_relative_eq!(est.sigma_k, sigma, epsilon = 1e-9);
            assert_relative_eq!(est.m, m_true, epsilon = 1e-9);
        }
    }

    #[test]
    fn plus_root_rule_can_pick_the_wrong_root() {
        let (mu, sigma) = truth();
        let mm = ModelMoments::new(mu.clone(), sigma.clone(), Mat::identity(2, 2), gaussian()).unwrap();
        let sm = population(&mm, Dependence::Dependent);
        let opts = EstimatorOptions {
            root_rule: RootRule::Plus,
            ..Default::default()
        };
        let est = estimate_with_constants(&sm, gaussian(), 2, EstimatorCase::DependentExact, &opts).unwrap();
        let m_true = &mu * mu.transpose();
        // wherever m_ij < 0 the + root maps m_ij to -m_ij
        let mut wrong = 0;
        for j in 0..4 {
            for i in 0..j {
                if m_true[(i, j)] < 0.0 {
                    assert_relative_eq!(est.m[(i, j)], -m_true[(i, j)], epsilon = 1e-9);
                    wrong += 1;
                }
            }
        }
        assert!(wrong > 0);
    }

    #[test]
    fn mean_identity_holds_for_every_entry() {
        let (mu, sigma) = truth();
        let c = MomentConstants { c0: 1.5, kappa0: 4.5 };
        let mm = ModelMoments::new(mu, sigma, Mat::identity(2, 2), c).unwrap();
        let sm = population(&mm, Dependence::Dependent);
        for case in [EstimatorCase::Dependent, EstimatorCase::DependentExact, EstimatorCase::Independent] {
            let est = estimate_with_constants(&sm, c, 2, case, &EstimatorOptions::default()).unwrap();
            for i in 0..4 {
                for j in 0..4 {
                    let s = est.sigma_k[(i, j)];
                    if s.is_finite() {
                        assert_relative_eq!(est.m[(i, j)] + 2.0 * c.c0 * s, sm.bbar[(i, j)], epsilon = 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn negative_discriminant_is_a_per_entry_failure() {
        let k = 3;
        let bbar = Mat::identity(k, k);
        let mut s = Mat::identity(k * k, k * k) * 0.1;
        // Q^2 + 4 P v < 0 needs P v < -Q^2/4; Gaussian independent P = -4, Q = 4
        s[(0, 0)] = 5.0;
        // small variance for b_12 so that its own discriminant stays positive
        s[(7, 7)] = 0.01;
        s[(5, 5)] = 0.01;
        let sm = SampleMoments { bbar, s, n: 10 };
        let est = estimate_with_constants(&sm, gaussian(), 2, EstimatorCase::Independent, &EstimatorOptions::default()).unwrap();
        let failed: Vec<(usize, usize)> = est.diagnostics.failures.iter().map(|f| (f.i, f.j)).collect();
        assert!(failed.contains(&(0, 0)));
        assert!(est.sigma_k[(0, 0)].is_nan());
        assert!(est.sigma_k[(1, 1)].is_finite());
        assert!(est.sigma_k[(1, 2)].is_finite());
        assert!(est.sigma_k[(0, 1)].is_nan());
        assert!(matches!(est.check_complete(), Err(Error::EntryFailures(_))));
    }

    #[test]
    fn degenerate_branch_continuity() {
        // sweep kappa0 across the P = 0 point of the reference set at D = 2
        let sm = SampleMoments {
            bbar: Mat::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]),
            s: Mat::identity(4, 4) * 0.3,
            n: 100,
        };
        // P = 2(k - 2) + 2(2k - 1) = 6k - 6 vanishes at kappa0 = 1 for c0 = 1
        let at_zero = estimate_with_constants(&sm, gaussian(), 2, EstimatorCase::Dependent, &EstimatorOptions::default()).unwrap();
        for eps in [1e-4, -1e-4, 1e-6, -1e-6] {
            let c = MomentConstants { c0: 1.0, kappa0: 1.0 + eps };
            let near = estimate_with_constants(&sm, c, 2, EstimatorCase::Dependent, &EstimatorOptions::default()).unwrap();
            assert_eq!(near.diagnostics.p_branch, Branch::Quadratic);
            let diff = (near.sigma_k[(0, 0)] - at_zero.sigma_k[(0, 0)]).abs();
            assert!(diff < 100.0 * eps.abs(), "eps {eps}: diff {diff}");
        }
    }

    #[test]
    fn reference_d2_r_zero_without_linear_term_errors() {
        // D = 2 makes the reference linear coefficient vanish; with R = 0 too
        // the off-diagonal equation has no solution
        let c = MomentConstants { c0: 1.0, kappa0: 0.5 };
        let lead = leading_coefficients(EstimatorCase::Dependent, c, 2);
        assert_relative_eq!(lead.r, 0.0, epsilon = 1e-15);
        let sm = SampleMoments {
            bbar: Mat::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]),
            s: Mat::identity(4, 4) * 0.3,
            n: 100,
        };
        let est = estimate_with_constants(&sm, c, 2, EstimatorCase::Dependent, &EstimatorOptions::default()).unwrap();
        assert_eq!(est.diagnostics.r_branch, Branch::Linear);
        assert!(est.diagnostics.failures.iter().any(|f| (f.i, f.j) == (0, 1)));
    }
}
