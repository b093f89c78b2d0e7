//! Density-generator families of elliptical laws.
//!
//! A `p`-dimensional elliptical vector with generator `h` has density
//! proportional to `h(z^T z)` after standardisation. Writing `z = R u` with
//! `u` uniform on the unit sphere, the moment constants are
//! `c0 = E(R^2) / p` and `kappa0 = E(R^4) / (p (p + 2))`, so that a standardised
//! marginal has variance `c0` and fourth moment `3 kappa0`.
//!
//! For Kotz and Pearson families the constants depend on `p`.
//! [`EllipticalModel::moment_constants`] gives the univariate values, and
//! [`EllipticalModel::moment_constants_in_dim`] the values for a law of
//! dimension `p`.

mod sampler;

pub use sampler::{
    sample_independent_columns, sample_independent_columns_with, sample_matrix_elliptical,
    sample_matrix_elliptical_with, sample_radius_sq, MatrixEllipticalSpec,
};

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Default upper bound on the derivative order in [`kotz_h_derivative`].
pub const DEFAULT_DERIVATIVE_CAP: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum EllipticalModel {
    Gaussian,
    /// Generator proportional to `y^(N-1) exp(-r y^s)`.
    Kotz {
        #[serde(rename = "N")]
        n: f64,
        r: f64,
        s: f64,
    },
    /// Multivariate t with `m` degrees of freedom.
    #[serde(rename = "t", alias = "student_t")]
    StudentT { m: f64 },
    /// Generator proportional to `(1 - y)^m` on `[0, 1]`.
    #[serde(rename = "pearson_ii")]
    PearsonII { m: f64 },
    /// Generator proportional to `(1 + y/m)^(-N)`.
    #[serde(rename = "pearson_vii")]
    PearsonVII {
        #[serde(rename = "N")]
        n: f64,
        m: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentConstants {
    pub c0: f64,
    pub kappa0: f64,
}

impl MomentConstants {
    pub const GAUSSIAN: MomentConstants = MomentConstants { c0: 1.0, kappa0: 1.0 };
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

fn finite_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be finite and positive, got {v}")))
    }
}

impl EllipticalModel {
    /// Kotz law that coincides with the Gaussian.
    pub const KOTZ_GAUSSIAN: EllipticalModel = EllipticalModel::Kotz { n: 1.0, r: 0.5, s: 1.0 };

    pub fn family(&self) -> &'static str {
        match self {
            EllipticalModel::Gaussian => "gaussian",
            EllipticalModel::Kotz { .. } => "kotz",
            EllipticalModel::StudentT { .. } => "t",
            EllipticalModel::PearsonII { .. } => "pearson_ii",
            EllipticalModel::PearsonVII { .. } => "pearson_vii",
        }
    }

    /// Short human-readable label, e.g. `kotz(N=2,r=0.5,s=1)`.
    pub fn label(&self) -> String {
        self.to_string()
    }

    /// Checks the parameter ranges that every use of the family needs.
    pub fn validate(&self) -> Result<()> {
        match *self {
            EllipticalModel::Gaussian => Ok(()),
            EllipticalModel::Kotz { n, r, s } => {
                finite_positive("kotz r", r)?;
                finite_positive("kotz s", s)?;
                if !n.is_finite() {
                    return Err(invalid("kotz N must be finite"));
                }
                Ok(())
            }
            EllipticalModel::StudentT { m } => finite_positive("t degrees of freedom m", m),
            EllipticalModel::PearsonII { m } => {
                if m.is_finite() && m > -1.0 {
                    Ok(())
                } else {
                    Err(invalid(format!("pearson II requires m > -1, got {m}")))
                }
            }
            EllipticalModel::PearsonVII { n, m } => {
                finite_positive("pearson VII m", m)?;
                finite_positive("pearson VII N", n)
            }
        }
    }

    /// Checks that the generator is normalisable in dimension `p`.
    pub fn validate_dim(&self, p: usize) -> Result<()> {
        self.validate()?;
        if p == 0 {
            return Err(invalid("dimension must be positive"));
        }
        let pf = p as f64;
        match *self {
            EllipticalModel::Kotz { n, .. } if 2.0 * n + pf - 2.0 <= 0.0 => Err(invalid(format!(
                "kotz requires 2N + p - 2 > 0 (N = {n}, p = {p})"
            ))),
            EllipticalModel::PearsonVII { n, .. } if n <= pf / 2.0 => Err(invalid(format!(
                "pearson VII requires N > p/2 (N = {n}, p = {p})"
            ))),
            _ => Ok(()),
        }
    }

    /// Univariate moment constants `(c0, kappa0)`.
    pub fn moment_constants(&self) -> Result<MomentConstants> {
        self.moment_constants_in_dim(1)
    }

    /// Moment constants of the `p`-dimensional law with this generator.
    pub fn moment_constants_in_dim(&self, p: usize) -> Result<MomentConstants> {
        self.validate_dim(p)?;
        let pf = p as f64;
        match *self {
            EllipticalModel::Gaussian => Ok(MomentConstants::GAUSSIAN),
            EllipticalModel::Kotz { n, r, s } => {
                let a = (2.0 * n + pf - 2.0) / (2.0 * s);
                let lg = ln_gamma(a);
                let c0 = (ln_gamma(a + 1.0 / s) - lg - r.ln() / s).exp() / pf;
                let kappa0 = (ln_gamma(a + 2.0 / s) - lg - 2.0 * r.ln() / s).exp() / (pf * (pf + 2.0));
                Ok(MomentConstants { c0, kappa0 })
            }
            EllipticalModel::StudentT { m } => {
                if m <= 4.0 {
                    return Err(invalid(format!(
                        "t needs m > 4 for a finite fourth moment, got {m}"
                    )));
                }
                Ok(MomentConstants {
                    c0: m / (m - 2.0),
                    kappa0: m * m / ((m - 2.0) * (m - 4.0)),
                })
            }
            EllipticalModel::PearsonII { m } => {
                let a = pf + 2.0 * m + 2.0;
                Ok(MomentConstants {
                    c0: 1.0 / a,
                    kappa0: 1.0 / (a * (a + 2.0)),
                })
            }
            EllipticalModel::PearsonVII { n, m } => {
                let a = 2.0 * n - pf - 2.0;
                if a - 2.0 <= 0.0 {
                    return Err(invalid(format!(
                        "pearson VII needs 2N - p - 4 > 0 for a finite fourth moment (N = {n}, p = {p})"
                    )));
                }
                Ok(MomentConstants {
                    c0: m / a,
                    kappa0: m * m / (a * (a - 2.0)),
                })
            }
        }
    }

    /// `ln h(y)` for the generator normalised in dimension `dim`.
    /// Returns `-inf` outside the support.
    pub fn log_generator(&self, y: f64, dim: usize) -> Result<f64> {
        self.validate_dim(dim)?;
        if y.is_nan() || y < 0.0 {
            return Err(invalid(format!("generator argument must be nonnegative, got {y}")));
        }
        let p = dim as f64;
        let half_p = p / 2.0;
        Ok(match *self {
            EllipticalModel::Gaussian => -half_p * (2.0 * PI).ln() - y / 2.0,
            EllipticalModel::Kotz { n, r, s } => kotz_log_norm(n, r, s, p) + xlogy(n - 1.0, y) - r * y.powf(s),
            EllipticalModel::StudentT { m } => {
                ln_gamma((m + p) / 2.0) - ln_gamma(m / 2.0) - half_p * (m * PI).ln()
                    - (m + p) / 2.0 * (y / m).ln_1p()
            }
            EllipticalModel::PearsonII { m } => {
                if y > 1.0 {
                    f64::NEG_INFINITY
                } else {
                    ln_gamma(half_p + m + 1.0) - ln_gamma(m + 1.0) - half_p * PI.ln() + xlogy(m, 1.0 - y)
                }
            }
            EllipticalModel::PearsonVII { n, m } => {
                ln_gamma(n) - ln_gamma(n - half_p) - half_p * (m * PI).ln() - n * (y / m).ln_1p()
            }
        })
    }
}

/// `a * ln(y)` with the convention `0 * ln 0 = 0`.
fn xlogy(a: f64, y: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a * y.ln()
    }
}

fn kotz_log_norm(n: f64, r: f64, s: f64, p: f64) -> f64 {
    let a = (2.0 * n + p - 2.0) / (2.0 * s);
    s.ln() + a * r.ln() + ln_gamma(p / 2.0) - p / 2.0 * PI.ln() - ln_gamma(a)
}

/// Normalised generator `h(y)` in dimension `dim`.
pub fn generator_eval(model: &EllipticalModel, y: f64, dim: usize) -> Result<f64> {
    Ok(model.log_generator(y, dim)?.exp())
}

/// Moment constants, see [`EllipticalModel::moment_constants`].
pub fn moment_constants(model: &EllipticalModel) -> Result<MomentConstants> {
    model.moment_constants()
}

/// `k`-th derivative of the normalised Kotz generator at `y > 0`, with the
/// default order cap.
pub fn kotz_h_derivative(model: &EllipticalModel, y: f64, k: usize, dim: usize) -> Result<f64> {
    kotz_h_derivative_capped(model, y, k, dim, DEFAULT_DERIVATIVE_CAP)
}

pub fn kotz_h_derivative_capped(
    model: &EllipticalModel,
    y: f64,
    k: usize,
    dim: usize,
    cap: usize,
) -> Result<f64> {
    let EllipticalModel::Kotz { n, r, s } = *model else {
        return Err(Error::Unsupported(format!(
            "generator derivatives are implemented for kotz only, got {}",
            model.family()
        )));
    };
    model.validate_dim(dim)?;
    if k > cap {
        return Err(Error::Unsupported(format!(
            "derivative order {k} exceeds the cap {cap}"
        )));
    }
    if !(y > 0.0 && y.is_finite()) {
        return Err(invalid(format!("derivative point must be positive, got {y}")));
    }
    let norm = kotz_log_norm(n, r, s, dim as f64).exp();
    let e = (-r * y.powf(s)).exp();
    if s == 1.0 {
        // h^(k) = C (-r)^k y^(N-1) e^(-ry) [1 + sum_m C(k,m) (N-1)_m (-ry)^(-m)]
        let mut bracket = 1.0;
        let mut binom = 1.0;
        for m in 1..=k {
            binom *= (k - m + 1) as f64 / m as f64;
            bracket += binom * falling(n - 1.0, m) * (-r * y).powi(-(m as i32));
        }
        return Ok(norm * (-r).powi(k as i32) * y.powf(n - 1.0) * e * bracket);
    }
    // Leibniz over y^(N-1) * exp(-r y^s); the exponential factor through
    // Faa di Bruno with inner derivatives f^(i) = -r (s)_i y^(s-i).
    let inner: Vec<f64> = (0..=k).map(|i| -r * falling(s, i) * y.powf(s - i as f64)).collect();
    let mut total = 0.0;
    let mut binom = 1.0;
    for j in 0..=k {
        if j > 0 {
            binom *= (k - j + 1) as f64 / j as f64;
        }
        let outer = falling(n - 1.0, k - j) * y.powf(n - 1.0 - (k - j) as f64);
        total += binom * outer * exp_composite_derivative(j, &inner);
    }
    Ok(norm * e * total)
}

/// Falling factorial `a (a-1) ... (a-m+1)`.
fn falling(a: f64, m: usize) -> f64 {
    (0..m).map(|i| a - i as f64).product()
}

/// `d^j/dy^j exp(f) / exp(f)` as a sum over integer partitions of `j`,
/// `inner[i]` holding `f^(i)(y)`.
fn exp_composite_derivative(j: usize, inner: &[f64]) -> f64 {
    if j == 0 {
        return 1.0;
    }
    let mut total = 0.0;
    let mut mult = vec![0usize; j + 1];
    partitions(j, j, &mut mult, &mut |v| {
        // j! / prod(v_i! (i!)^v_i) * prod f^(i)^v_i
        let mut term = factorial(j);
        for (i, &vi) in v.iter().enumerate().skip(1) {
            if vi > 0 {
                term /= factorial(vi) * factorial(i).powi(vi as i32);
                term *= inner[i].powi(vi as i32);
            }
        }
        total += term;
    });
    total
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// Enumerates multiplicity vectors `v` with `sum i v_i = rest`, parts at most `max`.
fn partitions(rest: usize, max: usize, mult: &mut Vec<usize>, visit: &mut impl FnMut(&[usize])) {
    if rest == 0 {
        visit(mult);
        return;
    }
    for part in (1..=max.min(rest)).rev() {
        mult[part] += 1;
        partitions(rest - part, part, mult, visit);
        mult[part] -= 1;
    }
}

impl fmt::Display for EllipticalModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            EllipticalModel::Gaussian => write!(f, "gaussian"),
            EllipticalModel::Kotz { n, r, s } => write!(f, "kotz(N={n},r={r},s={s})"),
            EllipticalModel::StudentT { m } => write!(f, "t(m={m})"),
            EllipticalModel::PearsonII { m } => write!(f, "pearson_ii(m={m})"),
            EllipticalModel::PearsonVII { n, m } => write!(f, "pearson_vii(N={n},m={m})"),
        }
    }
}

/// Parses `gaussian`, `kotz:N=2,r=0.5,s=1`, `t:m=8`, `pearson_ii:m=1`,
/// `pearson_vii:N=4,m=2`, or the JSON form of the enum.
impl FromStr for EllipticalModel {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let text = text.trim();
        if text.starts_with('{') || text.starts_with('"') {
            return serde_json::from_str(text).map_err(|e| invalid(format!("model spec: {e}")));
        }
        let (family, params) = match text.split_once(':') {
            Some((f, p)) => (f.trim(), p.trim()),
            None => (text, ""),
        };
        let mut values = std::collections::BTreeMap::new();
        for pair in params.split(',').filter(|p| !p.trim().is_empty()) {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| invalid(format!("expected key=value in model spec, got '{pair}'")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| invalid(format!("non-numeric value in model spec: '{pair}'")))?;
            values.insert(k.trim().to_string(), v);
        }
        let mut take = |key: &str| {
            values
                .remove(key)
                .ok_or_else(|| invalid(format!("model '{family}' needs parameter {key}")))
        };
        let model = match family.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => EllipticalModel::Gaussian,
            "kotz" => EllipticalModel::Kotz {
                n: take("N")?,
                r: take("r")?,
                s: take("s")?,
            },
            "t" | "student_t" => EllipticalModel::StudentT { m: take("m")? },
            "pearson_ii" => EllipticalModel::PearsonII { m: take("m")? },
            "pearson_vii" => EllipticalModel::PearsonVII {
                n: take("N")?,
                m: take("m")?,
            },
            other => return Err(invalid(format!("unknown model family '{other}'"))),
        };
        if let Some(extra) = values.keys().next() {
            return Err(invalid(format!("unexpected parameter '{extra}' for {family}")));
        }
        model.validate()?;
        Ok(model)
    }
}
