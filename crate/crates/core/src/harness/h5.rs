//! A three-unit counterexample, computed exactly. Demanding perfect
//! covariate balance while letting the treated-group size vary admits two
//! assignments whose effect estimates both equal 1/2, yet the population
//! effect is 1/3: balance enforcement alone does not buy unbiasedness.
//! Fixing the group size does not rescue it here either — the acceptable
//! set shrinks to a single assignment with the same estimate.

use serde_json::json;

use crate::balance::{BalanceContext, CovariateMatrix};
use crate::criteria::BalanceCriterion;
use crate::error::Result;
use crate::harness::model::PotentialOutcomes;
use crate::harness::report::{ExperimentReport, ReportRow, Tolerance};
use crate::inference::estimate_tau;
use crate::sampler::{enumerate_assignments, RngSpec};

const X: [f64; 3] = [0.0, 1.0, 2.0];
const TREATED: [f64; 3] = [1.0, 1.0, 0.0];
const CONTROL: [f64; 3] = [0.0, 0.0, 1.0];

pub fn run() -> Result<ExperimentReport> {
    let x = CovariateMatrix::from_column(&X)?;
    let po = PotentialOutcomes {
        control: CONTROL.to_vec(),
        treated: TREATED.to_vec(),
    };
    let perfect_balance = BalanceCriterion::mahalanobis_threshold(0.0)?;

    // every assignment with one or two treated units whose group means on x
    // coincide exactly
    let mut estimates = Vec::new();
    for n_treated in [1usize, 2] {
        let ctx = BalanceContext::new(&x, n_treated)?;
        for w in enumerate_assignments(3, n_treated, 10)? {
            if perfect_balance.evaluate(&ctx, &w)? {
                estimates.push((estimate_tau(&po.observe(&w)?, &w)?, n_treated));
            }
        }
    }
    let case_i_count = estimates.len() as f64;
    let case_i_mean = estimates.iter().map(|(t, _)| t).sum::<f64>() / case_i_count;
    let fixed: Vec<f64> = estimates
        .iter()
        .filter(|(_, n_t)| *n_t == 2)
        .map(|(t, _)| *t)
        .collect();
    let case_ii_mean = fixed.iter().sum::<f64>() / fixed.len() as f64;
    let tau = po.average_effect();

    let rows = vec![
        ReportRow::evaluate("population_effect", tau, 1.0 / 3.0, Tolerance::Exact, None, 3),
        ReportRow::evaluate(
            "case_i_acceptable_count",
            case_i_count,
            2.0,
            Tolerance::Exact,
            None,
            6,
        ),
        ReportRow::evaluate(
            "case_i_mean_estimate",
            case_i_mean,
            0.5,
            Tolerance::Exact,
            None,
            2,
        ),
        ReportRow::evaluate(
            "case_ii_acceptable_count",
            fixed.len() as f64,
            1.0,
            Tolerance::Exact,
            None,
            3,
        ),
        ReportRow::evaluate(
            "case_ii_mean_estimate",
            case_ii_mean,
            0.5,
            Tolerance::Exact,
            None,
            1,
        ),
        ReportRow::evaluate(
            "bias_magnitude",
            (case_i_mean - tau).abs(),
            1.0 / 6.0,
            Tolerance::AbsolutePoints { points: 1e-12 },
            None,
            2,
        ),
    ];

    Ok(ExperimentReport::from_rows(
        "h5",
        json!({
            "x": X,
            "treated_outcomes": TREATED,
            "control_outcomes": CONTROL,
        }),
        rows,
        RngSpec::new(0),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_row_is_exact_and_the_bias_is_one_sixth() {
        let report = run().unwrap();
        assert!(report.passed, "{report}");
        assert_eq!(report.row("case_i_acceptable_count").unwrap().measured, 2.0);
        assert_eq!(report.row("case_i_mean_estimate").unwrap().measured, 0.5);
        assert_eq!(report.row("case_ii_mean_estimate").unwrap().measured, 0.5);
        let again = run().unwrap();
        assert_eq!(
            serde_json::to_string(&report).unwrap(),
            serde_json::to_string(&again).unwrap()
        );
    }
}
