//! Analytic results for the chi-square acceptance region: the truncated
//! variance factor `v_a`, percent-reduction-in-variance formulas, and the
//! special functions they rest on.
//!
//! Everything here is a pure function of its arguments. Domain violations are
//! programming errors and panic; fallible, data-dependent work lives in the
//! other modules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAX_ITER: usize = 2000;
const REL_EPS: f64 = 1e-16;

/// Natural log of the gamma function, Lanczos approximation (g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    #[allow(clippy::excessive_precision)]
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    assert!(x > 0.0 && x.is_finite(), "ln_gamma requires finite x > 0, got {x}");
    if x < 0.5 {
        // reflection keeps the Lanczos sum in its accurate range
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let z = x - 1.0;
    let mut acc = COEF[0];
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let t = z + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized lower incomplete gamma P(b, c) = γ(b, c) / Γ(b).
///
/// Series expansion for c < b + 1, Lentz continued fraction for the upper
/// tail otherwise. Requires b > 0 and c ≥ 0.
pub fn lower_incomplete_gamma_regularized(b: f64, c: f64) -> f64 {
    assert!(b > 0.0 && b.is_finite(), "shape must be finite and positive, got {b}");
    assert!(c >= 0.0 && !c.is_nan(), "bound must be nonnegative, got {c}");
    if c == 0.0 {
        return 0.0;
    }
    if c.is_infinite() {
        return 1.0;
    }
    if c < b + 1.0 {
        gamma_p_series(b, c)
    } else {
        1.0 - gamma_q_continued_fraction(b, c)
    }
}

fn ln_prefactor(b: f64, c: f64) -> f64 {
    b * c.ln() - c - ln_gamma(b)
}

fn gamma_p_series(b: f64, c: f64) -> f64 {
    let mut denom = b;
    let mut term = 1.0 / b;
    let mut sum = term;
    for _ in 0..MAX_ITER {
        denom += 1.0;
        term *= c / denom;
        sum += term;
        if term.abs() < sum.abs() * REL_EPS {
            break;
        }
    }
    (sum * ln_prefactor(b, c).exp()).min(1.0)
}

fn gamma_q_continued_fraction(b: f64, c: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut denom = c + 1.0 - b;
    let mut frac_c = 1.0 / TINY;
    let mut frac_d = 1.0 / denom;
    let mut h = frac_d;
    for i in 1..=MAX_ITER {
        let an = -(i as f64) * (i as f64 - b);
        denom += 2.0;
        frac_d = an * frac_d + denom;
        if frac_d.abs() < TINY {
            frac_d = TINY;
        }
        frac_c = denom + an / frac_c;
        if frac_c.abs() < TINY {
            frac_c = TINY;
        }
        frac_d = 1.0 / frac_d;
        let delta = frac_d * frac_c;
        h *= delta;
        if (delta - 1.0).abs() < REL_EPS {
            break;
        }
    }
    (h * ln_prefactor(b, c).exp()).min(1.0)
}

/// P(χ²_k ≤ x).
pub fn chi2_cdf(k: usize, x: f64) -> f64 {
    assert!(k >= 1, "degrees of freedom must be at least 1");
    assert!(x >= 0.0 && !x.is_nan(), "chi2_cdf requires x >= 0, got {x}");
    lower_incomplete_gamma_regularized(k as f64 / 2.0, x / 2.0)
}

/// Inverse of [`chi2_cdf`] in its first argument, by bracketed bisection.
pub fn chi2_quantile(k: usize, p: f64) -> f64 {
    assert!(k >= 1, "degrees of freedom must be at least 1");
    assert!((0.0..1.0).contains(&p), "quantile needs p in [0, 1), got {p}");
    if p == 0.0 {
        return 0.0;
    }
    let mut hi = k as f64;
    while chi2_cdf(k, hi) < p {
        hi *= 2.0;
        assert!(hi.is_finite(), "quantile bracket diverged");
    }
    let mut lo = 0.0;
    while hi - lo > 1e-13 * (1.0 + hi) {
        let mid = 0.5 * (lo + hi);
        if chi2_cdf(k, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Variance factor of a mean difference after conditioning on the
/// acceptance region {M ≤ a}:
///
/// v_a = (2/k) · γ(k/2 + 1, a/2) / γ(k/2, a/2) = P(χ²_{k+2} ≤ a) / P(χ²_k ≤ a).
///
/// Both forms are evaluated and must agree to 1e-10; the CDF-ratio form is
/// returned. `a = 0` yields the limiting value 0 (exact-balance criterion);
/// an infinite threshold yields 1 (no acceptance restriction).
pub fn v_a(k: usize, a: f64) -> f64 {
    assert!(k >= 1, "v_a needs at least one covariate");
    assert!(a >= 0.0 && !a.is_nan(), "threshold must be nonnegative, got {a}");
    if a == 0.0 {
        return 0.0;
    }
    if a.is_infinite() {
        return 1.0;
    }
    let b = k as f64 / 2.0;
    let c = a / 2.0;
    let p_k = lower_incomplete_gamma_regularized(b, c);
    if p_k == 0.0 {
        // the acceptance region holds no representable mass; use the small-a limit
        return a / (k as f64 + 2.0);
    }
    let p_k2 = lower_incomplete_gamma_regularized(b + 1.0, c);
    let cdf_ratio = p_k2 / p_k;
    let gamma_ratio = (2.0 / k as f64) * (ln_gamma(b + 1.0) - ln_gamma(b)).exp() * p_k2 / p_k;
    assert!(
        (cdf_ratio - gamma_ratio).abs() <= 1e-10,
        "v_a cross-check failed at k={k}, a={a}: {cdf_ratio} vs {gamma_ratio}"
    );
    cdf_ratio
}

/// E(M | M ≤ a) when M ~ χ²_k: equal to 2·γ(k/2+1, a/2)/γ(k/2, a/2) = k·v_a.
pub fn expected_m_truncated(k: usize, a: f64) -> f64 {
    assert!(k >= 1);
    assert!(a >= 0.0 && !a.is_nan());
    if a == 0.0 {
        return 0.0;
    }
    if a.is_infinite() {
        return k as f64;
    }
    let b = k as f64 / 2.0;
    let c = a / 2.0;
    let p_k = lower_incomplete_gamma_regularized(b, c);
    if p_k == 0.0 {
        return k as f64 * (a / (k as f64 + 2.0));
    }
    let p_k2 = lower_incomplete_gamma_regularized(b + 1.0, c);
    let e = 2.0 * (ln_gamma(b + 1.0) - ln_gamma(b)).exp() * p_k2 / p_k;
    let identity = k as f64 * v_a(k, a);
    assert!(
        (e - identity).abs() <= 1e-10 * identity.max(1.0),
        "truncated-mean identity failed at k={k}, a={a}: {e} vs {identity}"
    );
    e
}

/// Percent reduction in variance of each covariate mean difference under the
/// acceptance region {M ≤ a}: 100·(1 − v_a).
pub fn priv_covariate(k: usize, a: f64) -> f64 {
    100.0 * (1.0 - v_a(k, a))
}

/// Percent reduction in variance of the mean-difference effect estimate,
/// 100·(1 − v_a)·R², where R² is the squared multiple correlation between
/// outcome and covariates within a treatment group.
pub fn priv_tau(k: usize, a: f64, r_squared: f64) -> f64 {
    assert!(
        (0.0..=1.0).contains(&r_squared),
        "r_squared must lie in [0, 1], got {r_squared}"
    );
    priv_covariate(k, a) * r_squared
}

/// Percent reduction in variance from covariance adjustment of a completely
/// randomized experiment that realized distance `m_observed`:
/// 100·((1 + m/n)·R² − m/n).
pub fn priv_regression(m_observed: f64, n: usize, r_squared: f64) -> f64 {
    assert!(
        m_observed >= 0.0 && m_observed.is_finite(),
        "observed distance must be finite and nonnegative"
    );
    assert!(n >= 1, "sample size must be positive");
    assert!((0.0..=1.0).contains(&r_squared));
    let ratio = m_observed / n as f64;
    100.0 * ((1.0 + ratio) * r_squared - ratio)
}

/// Inputs accepted by the analytic summary: exactly one of `threshold` / `p_a`
/// fixes the acceptance region; the rest are optional extras.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TheoryInputs {
    pub k: usize,
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub p_a: Option<f64>,
    #[serde(default)]
    pub r_squared: Option<f64>,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub m_observed: Option<f64>,
}

/// All analytic quantities derivable from [`TheoryInputs`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TheorySummary {
    pub k: usize,
    #[serde(
        serialize_with = "crate::ser::serialize_extended",
        deserialize_with = "crate::ser::deserialize_extended"
    )]
    pub threshold: f64,
    pub p_a: f64,
    pub v_a: f64,
    pub expected_m_truncated: f64,
    pub priv_covariate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub priv_tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub priv_regression: Option<f64>,
}

impl TheoryInputs {
    pub fn resolve(&self) -> Result<TheorySummary> {
        if self.k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        let threshold = match (self.threshold, self.p_a) {
            (Some(_), Some(_)) => {
                return Err(Error::InvalidArgument(
                    "give either a threshold or an acceptance probability, not both".into(),
                ))
            }
            (None, None) => {
                return Err(Error::InvalidArgument(
                    "either a threshold or an acceptance probability is required".into(),
                ))
            }
            (Some(a), None) => {
                if a < 0.0 || a.is_nan() {
                    return Err(Error::InvalidArgument(format!(
                        "threshold must be nonnegative, got {a}"
                    )));
                }
                a
            }
            (None, Some(p)) => {
                if !(0.0 < p && p <= 1.0) {
                    return Err(Error::InvalidArgument(format!(
                        "acceptance probability must lie in (0, 1], got {p}"
                    )));
                }
                if p == 1.0 {
                    f64::INFINITY
                } else {
                    chi2_quantile(self.k, p)
                }
            }
        };
        if let Some(r2) = self.r_squared {
            if !(0.0..=1.0).contains(&r2) {
                return Err(Error::InvalidArgument(format!(
                    "r_squared must lie in [0, 1], got {r2}"
                )));
            }
        }
        let p_a = if threshold.is_infinite() {
            1.0
        } else {
            chi2_cdf(self.k, threshold)
        };
        let v = v_a(self.k, threshold);
        let priv_regression = match (self.m_observed, self.n, self.r_squared) {
            (Some(m), Some(n), Some(r2)) => {
                if m < 0.0 || !m.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "observed distance must be finite and nonnegative, got {m}"
                    )));
                }
                if n == 0 {
                    return Err(Error::InvalidArgument("n must be positive".into()));
                }
                Some(priv_regression(m, n, r2))
            }
            _ => None,
        };
        Ok(TheorySummary {
            k: self.k,
            threshold,
            p_a,
            v_a: v,
            expected_m_truncated: expected_m_truncated(self.k, threshold),
            priv_covariate: priv_covariate(self.k, threshold),
            priv_tau: self.r_squared.map(|r2| priv_tau(self.k, threshold, r2)),
            priv_regression,
        })
    }
}

/// One cell of the covariate-reduction surface over (k, p_a).
#[derive(Debug, Clone, Serialize)]
pub struct CovariatePrivCell {
    pub k: usize,
    pub p_a: f64,
    pub threshold: f64,
    pub priv_covariate: f64,
}

/// One cell of the effect-estimate reduction surface over (p_a, k, R²).
#[derive(Debug, Clone, Serialize)]
pub struct TauPrivCell {
    pub p_a: f64,
    pub k: usize,
    pub r_squared: f64,
    pub threshold: f64,
    pub priv_tau: f64,
}

pub fn covariate_priv_grid(ks: &[usize], p_as: &[f64]) -> Vec<CovariatePrivCell> {
    let mut rows = Vec::with_capacity(ks.len() * p_as.len());
    for &k in ks {
        for &p in p_as {
            let threshold = if p >= 1.0 { f64::INFINITY } else { chi2_quantile(k, p) };
            rows.push(CovariatePrivCell {
                k,
                p_a: p,
                threshold,
                priv_covariate: priv_covariate(k, threshold),
            });
        }
    }
    rows
}

pub fn tau_priv_grid(ks: &[usize], p_as: &[f64], r_squareds: &[f64]) -> Vec<TauPrivCell> {
    let mut rows = Vec::with_capacity(ks.len() * p_as.len() * r_squareds.len());
    for &p in p_as {
        for &k in ks {
            let threshold = if p >= 1.0 { f64::INFINITY } else { chi2_quantile(k, p) };
            for &r2 in r_squareds {
                rows.push(TauPrivCell {
                    p_a: p,
                    k,
                    r_squared: r2,
                    threshold,
                    priv_tau: priv_tau(k, threshold, r2),
                });
            }
        }
    }
    rows
}
