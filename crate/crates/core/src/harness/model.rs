//! Synthetic data generators for the experiments: covariate draws and a
//! constant-effect linear outcome model with a tunable covariate-explained
//! variance share.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};

use crate::balance::CovariateMatrix;
use crate::error::{Error, Result};
use crate::inference::OutcomeVector;

/// n×k matrix of independent standard normal covariates.
pub fn gaussian_matrix(n: usize, k: usize, rng: &mut impl Rng) -> CovariateMatrix {
    let data = DMatrix::from_fn(n, k, |_, _| rng.sample(StandardNormal));
    CovariateMatrix::from_matrix(data, None).expect("generated matrix is well formed")
}

/// Two standard normal covariates with population correlation `rho`.
pub fn correlated_gaussian_pair(n: usize, rho: f64, rng: &mut impl Rng) -> CovariateMatrix {
    assert!(rho.abs() < 1.0);
    let spare = (1.0 - rho * rho).sqrt();
    let mut data = DMatrix::zeros(n, 2);
    for i in 0..n {
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        data[(i, 0)] = a;
        data[(i, 1)] = rho * a + spare * b;
    }
    CovariateMatrix::from_matrix(data, None).expect("generated matrix is well formed")
}

/// n×k matrix of independent Student-t covariates (heavy tails).
pub fn student_t_matrix(n: usize, k: usize, df: f64, rng: &mut impl Rng) -> CovariateMatrix {
    let t = StudentT::new(df).expect("degrees of freedom must be positive");
    let data = DMatrix::from_fn(n, k, |_, _| t.sample(rng));
    CovariateMatrix::from_matrix(data, None).expect("generated matrix is well formed")
}

/// Constant-effect linear outcome model: the control outcome is
/// intercept + x·slopes + σ_e·ε and treatment adds `tau` to every unit.
#[derive(Debug, Clone)]
pub struct LinearOutcomeModel {
    pub intercept: f64,
    pub slopes: Vec<f64>,
    pub tau: f64,
    pub sigma_e: f64,
}

impl LinearOutcomeModel {
    /// Choose σ_e so the covariate-explained share of the control-outcome
    /// variance hits `r_squared` on this covariate sample. The boundary
    /// cases keep one code path honest: 0 drops the slopes entirely and 1
    /// removes the noise.
    pub fn for_target_r_squared(
        x: &CovariateMatrix,
        slopes: Vec<f64>,
        tau: f64,
        r_squared: f64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&r_squared) {
            return Err(Error::InvalidArgument(format!(
                "target R² must lie in [0, 1], got {r_squared}"
            )));
        }
        if slopes.len() != x.n_covariates() {
            return Err(Error::DimensionMismatch(format!(
                "{} slopes for {} covariates",
                slopes.len(),
                x.n_covariates()
            )));
        }
        if r_squared == 0.0 {
            return Ok(LinearOutcomeModel {
                intercept: 0.0,
                slopes: vec![0.0; slopes.len()],
                tau,
                sigma_e: 1.0,
            });
        }
        let predictor: Vec<f64> = (0..x.n_units())
            .map(|i| (0..x.n_covariates()).map(|j| x.value(i, j) * slopes[j]).sum())
            .collect();
        let explained = super::stats::variance(&predictor);
        if explained == 0.0 {
            return Err(Error::InvalidArgument(
                "the linear predictor is constant; no positive R² is reachable".into(),
            ));
        }
        let sigma_e = (explained * (1.0 - r_squared) / r_squared).sqrt();
        Ok(LinearOutcomeModel {
            intercept: 0.0,
            slopes,
            tau,
            sigma_e,
        })
    }

    /// Draw one fixed set of potential outcomes for these covariates.
    pub fn realize(&self, x: &CovariateMatrix, rng: &mut impl Rng) -> Result<PotentialOutcomes> {
        if self.slopes.len() != x.n_covariates() {
            return Err(Error::DimensionMismatch(format!(
                "{} slopes for {} covariates",
                self.slopes.len(),
                x.n_covariates()
            )));
        }
        let control: Vec<f64> = (0..x.n_units())
            .map(|i| {
                let lin: f64 = (0..x.n_covariates())
                    .map(|j| x.value(i, j) * self.slopes[j])
                    .sum();
                let noise: f64 = rng.sample(StandardNormal);
                self.intercept + lin + self.sigma_e * noise
            })
            .collect();
        let treated = control.iter().map(|c| c + self.tau).collect();
        Ok(PotentialOutcomes { control, treated })
    }
}

/// A fixed finite population of potential outcomes.
#[derive(Debug, Clone)]
pub struct PotentialOutcomes {
    pub control: Vec<f64>,
    pub treated: Vec<f64>,
}

impl PotentialOutcomes {
    pub fn n(&self) -> usize {
        self.control.len()
    }

    /// The population average treatment effect.
    pub fn average_effect(&self) -> f64 {
        self.treated
            .iter()
            .zip(&self.control)
            .map(|(t, c)| t - c)
            .sum::<f64>()
            / self.n() as f64
    }

    /// The outcomes revealed by an assignment.
    pub fn observe(&self, w: &crate::balance::Assignment) -> Result<OutcomeVector> {
        if w.n() != self.n() {
            return Err(Error::DimensionMismatch(format!(
                "{} assignment entries for {} units",
                w.n(),
                self.n()
            )));
        }
        OutcomeVector::new(
            (0..self.n())
                .map(|i| {
                    if w.is_treated(i) {
                        self.treated[i]
                    } else {
                        self.control[i]
                    }
                })
                .collect(),
        )
    }
}
