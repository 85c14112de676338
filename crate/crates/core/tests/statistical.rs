//! Monte Carlo calibration checks at realistic sizes: the empirical and
//! asymptotic threshold calibrations must agree with each other and with the
//! acceptance rates they promise on a fresh design of n = 100 normal units.

use rerand::balance::BalanceContext;
use rerand::criteria::{
    calibrate_threshold_asymptotic, calibrate_threshold_empirical, BalanceCriterion,
};
use rerand::harness::model::gaussian_matrix;
use rerand::sampler::{estimate_acceptance, RngSpec};

#[test]
fn empirical_calibration_matches_asymptotic_threshold() {
    let x = gaussian_matrix(100, 2, &mut RngSpec::new(2001).rng());
    let ctx = BalanceContext::new(&x, 50).unwrap();

    let asymptotic = calibrate_threshold_asymptotic(2, 0.1).unwrap();
    let empirical =
        calibrate_threshold_empirical(&ctx, 0.1, 100_000, RngSpec::new(2001).substream(1))
            .unwrap();

    assert!(
        (empirical.threshold / asymptotic.threshold - 1.0).abs() <= 0.05,
        "empirical threshold {} strays more than 5% from asymptotic {}",
        empirical.threshold,
        asymptotic.threshold
    );
    assert!((empirical.p_a_achieved - 0.1).abs() <= 0.01);
}

#[test]
fn asymptotic_calibration_achieves_target_acceptance() {
    let x = gaussian_matrix(100, 2, &mut RngSpec::new(2002).rng());
    let ctx = BalanceContext::new(&x, 50).unwrap();

    for (i, p_a) in [0.01, 0.1, 0.5].into_iter().enumerate() {
        let cal = calibrate_threshold_asymptotic(2, p_a).unwrap();
        let criterion = BalanceCriterion::mahalanobis_threshold(cal.threshold).unwrap();
        let estimate = estimate_acceptance(
            &ctx,
            &criterion,
            100_000,
            RngSpec::new(2002).substream(1 + i as u64),
        )
        .unwrap();
        assert!(
            (estimate.estimate / p_a - 1.0).abs() <= 0.15,
            "acceptance {} strays more than 15% from target {p_a}",
            estimate.estimate
        );
    }
}

#[test]
fn acceptance_estimate_is_self_consistent_with_calibration() {
    let x = gaussian_matrix(100, 2, &mut RngSpec::new(2003).rng());
    let ctx = BalanceContext::new(&x, 50).unwrap();

    let cal = calibrate_threshold_asymptotic(2, 0.1).unwrap();
    let criterion = BalanceCriterion::mahalanobis_threshold(cal.threshold).unwrap();
    let estimate =
        estimate_acceptance(&ctx, &criterion, 100_000, RngSpec::new(2003).substream(1)).unwrap();

    assert!((estimate.estimate - 0.10).abs() <= 0.01);
    assert!(estimate.std_error > 0.0 && estimate.std_error < 0.005);
    assert_eq!(estimate.draws, 100_000);
    assert_eq!(estimate.accepted, (estimate.estimate * 100_000.0).round() as u64);
}
