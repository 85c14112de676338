//! Assignment generation: uniform draws over fixed-size treatment splits,
//! rejection sampling against a balance criterion, exhaustive enumeration for
//! small designs, and acceptance-rate estimation.
//!
//! Randomness is fully specified by an [`RngSpec`] (seed plus stream).
//! Callers that fan work out across threads give each unit of work its own
//! sub-stream and combine results in a fixed order, so every artifact is
//! byte-identical across runs and thread counts.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::balance::{Assignment, BalanceContext};
use crate::criteria::BalanceCriterion;
use crate::error::{Error, Result};

/// Largest support size `enumerate_assignments` will agree to walk by default.
pub const DEFAULT_ENUMERATION_CEILING: u64 = 10_000_000;

/// A reproducible randomness source: a seed selecting the generator and a
/// stream index selecting one of 2⁶⁴ independent sequences under that seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngSpec {
    pub seed: u64,
    pub stream: u64,
}

impl RngSpec {
    pub fn new(seed: u64) -> Self {
        RngSpec { seed, stream: 0 }
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        RngSpec { seed, stream }
    }

    /// The generator identity for a parallel unit of work, `offset` streams away.
    pub fn substream(self, offset: u64) -> Self {
        RngSpec {
            seed: self.seed,
            stream: self.stream.wrapping_add(offset),
        }
    }

    pub fn rng(self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

fn check_split(n: usize, n_treated: usize) -> Result<()> {
    if n < 2 || n_treated == 0 || n_treated >= n {
        return Err(Error::InvalidArgument(format!(
            "need 1 ≤ n_treated < n with n ≥ 2, got {n_treated} of {n}"
        )));
    }
    Ok(())
}

/// One uniform draw from the C(n, n_treated) fixed-size assignments, via
/// Floyd's subset-sampling algorithm (n_treated generator calls, one
/// allocation).
pub fn draw_assignment(
    n: usize,
    n_treated: usize,
    rng: &mut impl Rng,
) -> Result<Assignment> {
    check_split(n, n_treated)?;
    let mut flags = vec![false; n];
    for j in n - n_treated..n {
        let pick = rng.random_range(0..=j);
        if flags[pick] {
            flags[j] = true;
        } else {
            flags[pick] = true;
        }
    }
    Assignment::new(flags)
}

/// Number of fixed-size assignments, saturating at `u128::MAX` when the
/// binomial coefficient overflows.
pub fn count_assignments(n: usize, n_treated: usize) -> Result<u128> {
    check_split(n, n_treated)?;
    let k = n_treated.min(n - n_treated) as u128;
    let n = n as u128;
    let mut count: u128 = 1;
    for i in 1..=k {
        // C(n, i) stays integral, so the division after each step is exact
        count = match count.checked_mul(n - k + i) {
            Some(c) => c / i,
            None => return Ok(u128::MAX),
        };
    }
    Ok(count)
}

/// Lexicographic walk over every fixed-size assignment.
pub struct AssignmentEnumeration {
    n: usize,
    indices: Vec<usize>,
    done: bool,
}

impl Iterator for AssignmentEnumeration {
    type Item = Assignment;

    fn next(&mut self) -> Option<Assignment> {
        if self.done {
            return None;
        }
        let mut flags = vec![false; self.n];
        for &unit in &self.indices {
            flags[unit] = true;
        }
        let out = Assignment::new(flags).expect("enumerated splits are always valid");

        let k = self.indices.len();
        let mut i = k;
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.indices[i] < self.n - k + i {
                self.indices[i] += 1;
                for j in i + 1..k {
                    self.indices[j] = self.indices[j - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    }
}

/// Every fixed-size assignment in lexicographic order, refusing supports
/// larger than `ceiling`.
pub fn enumerate_assignments(
    n: usize,
    n_treated: usize,
    ceiling: u64,
) -> Result<AssignmentEnumeration> {
    let support = count_assignments(n, n_treated)?;
    if support > ceiling as u128 {
        return Err(Error::EnumerationTooLarge { support, ceiling });
    }
    Ok(AssignmentEnumeration {
        n,
        indices: (0..n_treated).collect(),
        done: false,
    })
}

/// A proposal budget matched to the target acceptance rate: enough draws that
/// exhausting them is overwhelming evidence the criterion is far tighter than
/// intended.
pub fn default_max_proposals(p_a_target: Option<f64>) -> u64 {
    const FLOOR: u64 = 1_000_000;
    match p_a_target {
        Some(p) if p > 0.0 && p <= 1.0 => FLOOR.max((1000.0 / p).ceil() as u64),
        _ => FLOOR,
    }
}

/// An accepted design: the assignment, how many proposals it took, and enough
/// provenance (criterion and randomness spec) to reproduce or audit it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignResult {
    pub assignment: Assignment,
    pub proposals: u64,
    pub accepted_m: f64,
    pub criterion: serde_json::Value,
    pub seed: RngSpec,
}

/// Draw assignments until the criterion accepts one. Fails with a
/// one-sided 95% upper bound on the acceptance probability (the rule of
/// three) if the budget runs out.
pub fn rerandomize(
    ctx: &BalanceContext,
    criterion: &BalanceCriterion,
    rng: RngSpec,
    max_proposals: u64,
) -> Result<DesignResult> {
    if max_proposals == 0 {
        return Err(Error::InvalidArgument("max_proposals must be at least 1".into()));
    }
    let mut generator = rng.rng();
    for proposals in 1..=max_proposals {
        let w = draw_assignment(ctx.n_units(), ctx.n_treated(), &mut generator)?;
        if criterion.evaluate(ctx, &w)? {
            let accepted_m = ctx.mahalanobis(&w)?;
            return Ok(DesignResult {
                assignment: w,
                proposals,
                accepted_m,
                criterion: criterion.to_json(),
                seed: rng,
            });
        }
    }
    Err(Error::ProposalBudgetExhausted {
        proposals: max_proposals,
        bound: 3.0 / max_proposals as f64,
    })
}

/// A batch of accepted assignments, one per requested simulation.
#[derive(Debug, Clone)]
pub struct AcceptableSample {
    pub assignments: Vec<Assignment>,
    pub proposals_generated: u64,
}

/// Run `count` independent rejection samplers, one sub-stream each, in
/// parallel. Results are combined in stream order, so the output is
/// byte-identical regardless of thread count.
pub fn sample_acceptable(
    ctx: &BalanceContext,
    criterion: &BalanceCriterion,
    count: u64,
    rng: RngSpec,
    max_proposals: u64,
) -> Result<AcceptableSample> {
    use rayon::prelude::*;

    if count == 0 {
        return Err(Error::InvalidArgument("sampling needs count ≥ 1".into()));
    }
    if max_proposals == 0 {
        return Err(Error::InvalidArgument("max_proposals must be at least 1".into()));
    }
    let sims: Result<Vec<(Assignment, u64)>> = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut generator = rng.substream(i).rng();
            for proposals in 1..=max_proposals {
                let w = draw_assignment(ctx.n_units(), ctx.n_treated(), &mut generator)?;
                if criterion.evaluate(ctx, &w)? {
                    return Ok((w, proposals));
                }
            }
            Err(Error::ProposalBudgetExhausted {
                proposals: max_proposals,
                bound: 3.0 / max_proposals as f64,
            })
        })
        .collect();
    let sims = sims?;
    let proposals_generated = sims.iter().map(|(_, p)| p).sum();
    Ok(AcceptableSample {
        assignments: sims.into_iter().map(|(w, _)| w).collect(),
        proposals_generated,
    })
}

/// A Monte Carlo estimate of P(φ accepts) under uniform assignment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AcceptanceEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub draws: u64,
    pub accepted: u64,
}

pub fn estimate_acceptance(
    ctx: &BalanceContext,
    criterion: &BalanceCriterion,
    draws: u64,
    rng: RngSpec,
) -> Result<AcceptanceEstimate> {
    if draws == 0 {
        return Err(Error::InvalidArgument("acceptance estimation needs draws ≥ 1".into()));
    }
    let mut generator = rng.rng();
    let mut accepted: u64 = 0;
    for _ in 0..draws {
        let w = draw_assignment(ctx.n_units(), ctx.n_treated(), &mut generator)?;
        if criterion.evaluate(ctx, &w)? {
            accepted += 1;
        }
    }
    if accepted == 0 {
        log::warn!(
            "criterion {} accepted none of {draws} draws; it may be infeasible",
            criterion.describe()
        );
    }
    let estimate = accepted as f64 / draws as f64;
    Ok(AcceptanceEstimate {
        estimate,
        std_error: (estimate * (1.0 - estimate) / draws as f64).sqrt(),
        draws,
        accepted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::balance::CovariateMatrix;
    use crate::criteria::calibrate_threshold_empirical;
    use crate::theory::chi2_cdf;
    use proptest::prelude::*;
    use std::collections::HashMap;

    fn context(values: &[f64], n_treated: usize) -> BalanceContext {
        let x = CovariateMatrix::from_column(values).unwrap();
        BalanceContext::new(&x, n_treated).unwrap()
    }

    #[test]
    fn assignment_counts() {
        assert_eq!(count_assignments(4, 2).unwrap(), 6);
        assert_eq!(count_assignments(12, 6).unwrap(), 924);
        assert_eq!(count_assignments(30, 15).unwrap(), 155_117_520);
        assert_eq!(count_assignments(200, 100).unwrap(), u128::MAX);
        assert!(count_assignments(4, 0).is_err());
        assert!(count_assignments(4, 4).is_err());
        assert!(count_assignments(1, 1).is_err());
    }

    #[test]
    fn enumeration_is_exhaustive_and_ordered() {
        let all: Vec<Assignment> = enumerate_assignments(5, 2, 100).unwrap().collect();
        assert_eq!(all.len(), 10);
        assert_eq!(all[0].indicators(), vec![1, 1, 0, 0, 0]);
        assert_eq!(all[9].indicators(), vec![0, 0, 0, 1, 1]);
        let distinct: std::collections::HashSet<Vec<u8>> =
            all.iter().map(|w| w.indicators()).collect();
        assert_eq!(distinct.len(), 10);
        assert!(all.iter().all(|w| w.n_treated() == 2));
    }

    #[test]
    fn enumeration_respects_ceiling() {
        assert!(matches!(
            enumerate_assignments(30, 15, DEFAULT_ENUMERATION_CEILING),
            Err(Error::EnumerationTooLarge { support: 155_117_520, .. })
        ));
        assert!(enumerate_assignments(12, 6, 924).is_ok());
        assert!(enumerate_assignments(12, 6, 923).is_err());
    }

    #[test]
    fn draws_are_uniform_over_the_support() {
        let mut rng = RngSpec::new(13).rng();
        let draws = 100_000usize;
        let mut counts: HashMap<Vec<u8>, u64> = HashMap::new();
        for _ in 0..draws {
            let w = draw_assignment(6, 3, &mut rng).unwrap();
            *counts.entry(w.indicators()).or_insert(0) += 1;
        }
        assert_eq!(counts.len(), 20, "every split should appear");
        let expected = draws as f64 / 20.0;
        let stat: f64 = counts
            .values()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        let p = 1.0 - chi2_cdf(19, stat);
        assert!(p > 0.001, "uniformity rejected: stat {stat:.2}, p {p:.5}");
    }

    #[test]
    fn identical_specs_reproduce_identical_designs() {
        let ctx = context(&[-1.3, 0.4, 2.2, -0.8, 1.1, 0.0, -2.1, 0.9, 1.7, -0.5], 5);
        let criterion = BalanceCriterion::mahalanobis_threshold(0.5).unwrap();
        let spec = RngSpec::with_stream(99, 4);
        let a = rerandomize(&ctx, &criterion, spec, 10_000).unwrap();
        let b = rerandomize(&ctx, &criterion, spec, 10_000).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );

        let other = rerandomize(&ctx, &criterion, spec.substream(1), 10_000).unwrap();
        let differs = other.assignment.indicators() != a.assignment.indicators()
            || other.proposals != a.proposals;
        assert!(differs, "distinct streams should not replay the same run");
    }

    #[test]
    fn unrestricted_criterion_accepts_the_first_proposal() {
        let ctx = context(&[0.0, 1.0, 2.0, 3.0], 2);
        let design =
            rerandomize(&ctx, &BalanceCriterion::unrestricted(), RngSpec::new(5), 100).unwrap();
        assert_eq!(design.proposals, 1);
        assert_eq!(design.criterion["threshold"], "inf");
        assert!(design.accepted_m.is_finite());
    }

    #[test]
    fn exhausted_budget_reports_an_acceptance_bound() {
        let ctx = context(&[0.0, 1.0, 2.0, 3.0], 2);
        let never = BalanceCriterion::user_predicate("never", true, |_, _| false);
        match rerandomize(&ctx, &never, RngSpec::new(5), 50) {
            Err(Error::ProposalBudgetExhausted { proposals, bound }) => {
                assert_eq!(proposals, 50);
                assert!((bound - 0.06).abs() < 1e-12);
            }
            other => panic!("expected budget exhaustion, got {other:?}"),
        }
        assert!(rerandomize(&ctx, &never, RngSpec::new(5), 0).is_err());
    }

    #[test]
    fn accepted_designs_satisfy_the_threshold() {
        let values: Vec<f64> = (0..20).map(|i| (i as f64 * 0.7).sin() * 2.0).collect();
        let ctx = context(&values, 10);
        let criterion = BalanceCriterion::mahalanobis_threshold(0.3).unwrap();
        for seed in 0..8 {
            let design = rerandomize(&ctx, &criterion, RngSpec::new(seed), 100_000).unwrap();
            assert!(design.accepted_m <= 0.3, "seed {seed}: {}", design.accepted_m);
        }
    }

    #[test]
    fn acceptance_estimates_match_the_calibrated_rate() {
        let ctx = context(
            &[-1.3, 0.4, 2.2, -0.8, 1.1, 0.0, -2.1, 0.9, 1.7, -0.5, 0.3, -1.4],
            6,
        );
        let cal = calibrate_threshold_empirical(&ctx, 0.3, 50_000, RngSpec::new(21)).unwrap();
        let est = estimate_acceptance(&ctx, &cal.criterion(), 20_000, RngSpec::new(22)).unwrap();
        assert!(
            (est.estimate - cal.p_a_achieved).abs() < 0.02,
            "estimate {} vs achieved {}",
            est.estimate,
            cal.p_a_achieved
        );
        assert!(est.std_error > 0.0);

        let all = estimate_acceptance(&ctx, &BalanceCriterion::unrestricted(), 100, RngSpec::new(1))
            .unwrap();
        assert_eq!(all.estimate, 1.0);
        assert_eq!(all.std_error, 0.0);

        let never = BalanceCriterion::user_predicate("never", true, |_, _| false);
        let none = estimate_acceptance(&ctx, &never, 100, RngSpec::new(1)).unwrap();
        assert_eq!(none.estimate, 0.0);
        assert_eq!(none.accepted, 0);
    }

    #[test]
    fn parallel_sampling_is_deterministic_and_stream_ordered() {
        let ctx = context(&[-1.3, 0.4, 2.2, -0.8, 1.1, 0.0, -2.1, 0.9, 1.7, -0.5], 5);
        let criterion = BalanceCriterion::mahalanobis_threshold(0.5).unwrap();
        let spec = RngSpec::new(33);
        let a = sample_acceptable(&ctx, &criterion, 64, spec, 100_000).unwrap();
        let b = sample_acceptable(&ctx, &criterion, 64, spec, 100_000).unwrap();
        let flat = |s: &AcceptableSample| -> Vec<Vec<u8>> {
            s.assignments.iter().map(|w| w.indicators()).collect()
        };
        assert_eq!(flat(&a), flat(&b));
        assert_eq!(a.proposals_generated, b.proposals_generated);

        // element i replays the one-shot sampler on sub-stream i
        let solo = rerandomize(&ctx, &criterion, spec.substream(17), 100_000).unwrap();
        assert_eq!(a.assignments[17].indicators(), solo.assignment.indicators());
        assert!(a.proposals_generated >= 64);
    }

    #[test]
    fn proposal_budget_defaults() {
        assert_eq!(default_max_proposals(None), 1_000_000);
        assert_eq!(default_max_proposals(Some(0.5)), 1_000_000);
        assert_eq!(default_max_proposals(Some(1e-4)), 10_000_000);
        assert_eq!(default_max_proposals(Some(-1.0)), 1_000_000);
    }

    #[test]
    fn distinct_streams_diverge_immediately() {
        let mut a = RngSpec::with_stream(7, 0).rng();
        let mut b = RngSpec::with_stream(7, 1).rng();
        assert_ne!(a.random::<u64>(), b.random::<u64>());
    }

    proptest! {
        #[test]
        fn drawn_assignments_have_the_requested_split(
            n in 2usize..40,
            seed in 0u64..1000,
            frac in 0.01f64..0.99,
        ) {
            let n_treated = ((n as f64 * frac) as usize).clamp(1, n - 1);
            let w = draw_assignment(n, n_treated, &mut RngSpec::new(seed).rng()).unwrap();
            prop_assert_eq!(w.n(), n);
            prop_assert_eq!(w.n_treated(), n_treated);
            prop_assert!(w.n_control() >= 1);
        }

        #[test]
        fn enumeration_length_matches_the_count(n in 2usize..10, n_treated in 1usize..9) {
            prop_assume!(n_treated < n);
            let support = count_assignments(n, n_treated).unwrap();
            let listed = enumerate_assignments(n, n_treated, 1000).unwrap().count();
            prop_assert_eq!(listed as u128, support);
        }
    }
}
