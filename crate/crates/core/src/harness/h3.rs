//! Variance reduction for the difference-in-means effect estimate. When
//! outcomes are linear in the covariates plus noise, rerandomization cuts
//! the estimator's variance by the fraction (1 - v_a) R², leaves its mean
//! at the population effect, and compares favourably with adjusting for
//! the covariates after a single unrestricted randomization.

use serde::Serialize;

use crate::balance::BalanceContext;
use crate::criteria::calibrate_threshold_asymptotic;
use crate::error::Result;
use crate::harness::model::{gaussian_matrix, LinearOutcomeModel};
use crate::harness::report::{ExperimentReport, ReportRow, Tolerance};
use crate::harness::stats::{mean, ols_r_squared, variance};
use crate::inference::estimate_tau;
use crate::sampler::{default_max_proposals, draw_assignment, rerandomize, RngSpec};
use crate::theory::{priv_regression, priv_tau, v_a};

#[derive(Debug, Clone, Serialize)]
pub struct Config {
    pub n: usize,
    pub k: usize,
    pub p_a: f64,
    pub r_squared: f64,
    pub tau: f64,
    pub reps: u64,
    pub zero_r2_reps: u64,
    pub seed: RngSpec,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            n: 1000,
            k: 2,
            p_a: 0.1,
            r_squared: 0.5,
            tau: 1.0,
            reps: 2000,
            zero_r2_reps: 30_000,
            seed: RngSpec::new(103),
        }
    }
}

pub fn run(cfg: &Config) -> Result<ExperimentReport> {
    let cal = calibrate_threshold_asymptotic(cfg.k, cfg.p_a)?;
    let criterion = cal.criterion();
    let shrink = v_a(cfg.k, cal.threshold);

    let x = gaussian_matrix(cfg.n, cfg.k, &mut cfg.seed.substream(0).rng());
    let ctx = BalanceContext::new(&x, cfg.n / 2)?;
    let model = LinearOutcomeModel::for_target_r_squared(
        &x,
        vec![1.0; cfg.k],
        cfg.tau,
        cfg.r_squared,
    )?;
    let po = model.realize(&x, &mut cfg.seed.substream(1).rng())?;
    let r2_realized = ols_r_squared(&po.control, &x);

    let budget = default_max_proposals(Some(cfg.p_a));
    let mut tau_rerand = Vec::with_capacity(cfg.reps as usize);
    let mut tau_pure = Vec::with_capacity(cfg.reps as usize);
    let mut m_pure = Vec::with_capacity(cfg.reps as usize);
    for i in 0..cfg.reps {
        let design = rerandomize(&ctx, &criterion, cfg.seed.substream(1000 + i), budget)?;
        let y = po.observe(&design.assignment)?;
        tau_rerand.push(estimate_tau(&y, &design.assignment)?);

        let w = draw_assignment(
            cfg.n,
            cfg.n / 2,
            &mut cfg.seed.substream(1_000_000 + i).rng(),
        )?;
        let y = po.observe(&w)?;
        tau_pure.push(estimate_tau(&y, &w)?);
        m_pure.push(ctx.mahalanobis(&w)?);
    }

    let var_rerand = variance(&tau_rerand);
    let var_pure = variance(&tau_pure);
    let measured_priv = 100.0 * (1.0 - var_rerand / var_pure);
    // each variance carries relative MC error sqrt(2/reps); the ratio roughly
    // doubles it
    let priv_se = 100.0 * (var_rerand / var_pure) * (4.0 / cfg.reps as f64).sqrt();

    let mut rows = Vec::new();
    rows.push(ReportRow::evaluate(
        "priv_tau_nominal",
        measured_priv,
        priv_tau(cfg.k, cal.threshold, cfg.r_squared),
        Tolerance::AbsolutePoints { points: 5.0 },
        Some(priv_se),
        cfg.reps,
    ));
    rows.push(ReportRow::evaluate(
        "priv_tau_realized",
        measured_priv,
        100.0 * (1.0 - shrink) * r2_realized,
        Tolerance::AbsolutePoints { points: 5.0 },
        Some(priv_se),
        cfg.reps,
    ));
    let z_rerand = (mean(&tau_rerand) - cfg.tau) / (var_rerand / cfg.reps as f64).sqrt();
    rows.push(ReportRow::evaluate(
        "unbiased_rerand_z",
        z_rerand,
        0.0,
        Tolerance::AbsolutePoints { points: 3.0 },
        Some(1.0),
        cfg.reps,
    ));
    let z_pure = (mean(&tau_pure) - cfg.tau) / (var_pure / cfg.reps as f64).sqrt();
    rows.push(ReportRow::evaluate(
        "unbiased_pure_z",
        z_pure,
        0.0,
        Tolerance::AbsolutePoints { points: 3.0 },
        Some(1.0),
        cfg.reps,
    ));
    // post-hoc covariate adjustment after one unrestricted draw removes
    // (1 + M/n)·R² − M/n percent of variance given the realized distance M;
    // averaged over the distances actually drawn, design-stage balancing at
    // this acceptance rate concedes under three points to it
    let regression_priv = priv_regression(mean(&m_pure), cfg.n, cfg.r_squared);
    rows.push(ReportRow::evaluate(
        "rerand_vs_regression_floor",
        100.0 * (1.0 - shrink) * cfg.r_squared,
        regression_priv - 3.0,
        Tolerance::GreaterThan,
        None,
        cfg.reps,
    ));

    // with no covariate signal in the outcome there is nothing to reduce
    let noise_model = LinearOutcomeModel::for_target_r_squared(
        &x,
        vec![1.0; cfg.k],
        cfg.tau,
        0.0,
    )?;
    let po_noise = noise_model.realize(&x, &mut cfg.seed.substream(2).rng())?;
    let mut noise_rerand = Vec::with_capacity(cfg.zero_r2_reps as usize);
    let mut noise_pure = Vec::with_capacity(cfg.zero_r2_reps as usize);
    for i in 0..cfg.zero_r2_reps {
        let design = rerandomize(&ctx, &criterion, cfg.seed.substream(3_000_000 + i), budget)?;
        noise_rerand.push(estimate_tau(&po_noise.observe(&design.assignment)?, &design.assignment)?);
        let w = draw_assignment(
            cfg.n,
            cfg.n / 2,
            &mut cfg.seed.substream(4_000_000 + i).rng(),
        )?;
        noise_pure.push(estimate_tau(&po_noise.observe(&w)?, &w)?);
    }
    rows.push(ReportRow::evaluate(
        "priv_tau_zero_r2",
        100.0 * (1.0 - variance(&noise_rerand) / variance(&noise_pure)),
        0.0,
        Tolerance::AbsolutePoints { points: 3.0 },
        Some(100.0 * (4.0 / cfg.zero_r2_reps as f64).sqrt()),
        cfg.zero_r2_reps,
    ));

    Ok(ExperimentReport::from_rows(
        "h3",
        serde_json::to_value(cfg).expect("config serializes"),
        rows,
        cfg.seed,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduced_size_run_is_deterministic_and_unbiased() {
        let cfg = Config {
            n: 200,
            reps: 200,
            zero_r2_reps: 500,
            ..Config::default()
        };
        let report = run(&cfg).unwrap();
        let again = run(&cfg).unwrap();
        assert_eq!(
            serde_json::to_string(&report).unwrap(),
            serde_json::to_string(&again).unwrap()
        );
        // the PRIV rows are too noisy at 200 reps to gate on; the bias and
        // comparison rows are not
        assert!(report.row("unbiased_rerand_z").unwrap().passed, "{report}");
        assert!(report.row("unbiased_pure_z").unwrap().passed, "{report}");
        assert!(
            report.row("rerand_vs_regression_floor").unwrap().passed,
            "{report}"
        );
    }
}
