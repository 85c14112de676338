//! Randomization inference for the treatment effect: tests and confidence
//! intervals that condition on the acceptance criterion by simulating (or
//! enumerating) only assignments the criterion accepts.

use serde::{Deserialize, Serialize};

use crate::balance::{Assignment, BalanceContext};
use crate::criteria::BalanceCriterion;
use crate::error::{Error, Result};
use crate::sampler::{enumerate_assignments, sample_acceptable, RngSpec};

/// Observed outcomes, one finite value per unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OutcomeVector {
    values: Vec<f64>,
}

impl OutcomeVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("outcome vector is empty".into()));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "outcomes must be finite, got {bad}"
            )));
        }
        Ok(OutcomeVector { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tail {
    TwoSided,
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    MonteCarlo,
    Exact,
}

fn check_lengths(ctx: &BalanceContext, y: &OutcomeVector, w: &Assignment) -> Result<()> {
    if y.len() != ctx.n_units() || w.n() != ctx.n_units() {
        return Err(Error::DimensionMismatch(format!(
            "{} outcomes and {} assignment entries for {} units",
            y.len(),
            w.n(),
            ctx.n_units()
        )));
    }
    if w.n_treated() != ctx.n_treated() {
        return Err(Error::InvalidArgument(format!(
            "assignment treats {} units but the design fixes {}",
            w.n_treated(),
            ctx.n_treated()
        )));
    }
    Ok(())
}

fn diff_means_outcome(y: &[f64], w: &Assignment) -> f64 {
    let mut treated_sum = 0.0;
    let mut control_sum = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        if w.is_treated(i) {
            treated_sum += yi;
        } else {
            control_sum += yi;
        }
    }
    treated_sum / w.n_treated() as f64 - control_sum / w.n_control() as f64
}

/// Difference in mean outcomes, treated minus control.
pub fn estimate_tau(y: &OutcomeVector, w: &Assignment) -> Result<f64> {
    if y.len() != w.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} outcomes for {} assignment entries",
            y.len(),
            w.n()
        )));
    }
    Ok(diff_means_outcome(y.values(), w))
}

/// The two-sample (Neyman) standard error √(s²_t/n_t + s²_c/n_c). Needs at
/// least two units per arm.
pub fn classical_se(y: &OutcomeVector, w: &Assignment) -> Result<f64> {
    if y.len() != w.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} outcomes for {} assignment entries",
            y.len(),
            w.n()
        )));
    }
    if w.n_treated() < 2 || w.n_control() < 2 {
        return Err(Error::InvalidArgument(
            "the classical standard error needs at least two units per arm".into(),
        ));
    }
    let mut sum = [0.0f64; 2];
    let mut count = [0usize; 2];
    for (i, &yi) in y.values().iter().enumerate() {
        let g = w.is_treated(i) as usize;
        sum[g] += yi;
        count[g] += 1;
    }
    let mean = [sum[0] / count[0] as f64, sum[1] / count[1] as f64];
    let mut ss = [0.0f64; 2];
    for (i, &yi) in y.values().iter().enumerate() {
        let g = w.is_treated(i) as usize;
        ss[g] += (yi - mean[g]).powi(2);
    }
    let var_c = ss[0] / (count[0] - 1) as f64;
    let var_t = ss[1] / (count[1] - 1) as f64;
    Ok((var_t / count[1] as f64 + var_c / count[0] as f64).sqrt())
}

fn tail_count(sims: &[f64], observed: f64, tail: Tail) -> u64 {
    sims.iter()
        .filter(|&&t| match tail {
            Tail::TwoSided => t.abs() >= observed.abs(),
            Tail::Lower => t <= observed,
            Tail::Upper => t >= observed,
        })
        .count() as u64
}

/// A randomization test outcome. For the Monte Carlo method `draws_requested`
/// is the number of simulations and the p-value carries the add-one
/// correction; for the exact method `draws_requested` is the support size,
/// `draws_accepted` the acceptable-set size, and the p-value is a plain
/// fraction of that set (the observed assignment is one of its members).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestReport {
    pub estimate: f64,
    pub p_value: f64,
    pub tail: Tail,
    pub method: TestMethod,
    pub draws_requested: u64,
    pub draws_accepted: u64,
    pub proposals_generated: u64,
    pub criterion: serde_json::Value,
    pub seed: Option<RngSpec>,
}

fn require_observed_acceptable(
    ctx: &BalanceContext,
    criterion: &BalanceCriterion,
    w_obs: &Assignment,
) -> Result<()> {
    if !criterion.evaluate(ctx, w_obs)? {
        return Err(Error::CriterionNotSatisfied {
            criterion: criterion.describe(),
        });
    }
    Ok(())
}

/// Test the sharp null of no effect by re-estimating τ̂ over `n_sims`
/// criterion-accepted assignments. The null distribution conditions on
/// acceptance, so the observed assignment must itself be acceptable.
#[allow(clippy::too_many_arguments)]
pub fn randomization_test(
    ctx: &BalanceContext,
    criterion: &BalanceCriterion,
    y: &OutcomeVector,
    w_obs: &Assignment,
    tail: Tail,
    n_sims: u64,
    rng: RngSpec,
    max_proposals: u64,
) -> Result<TestReport> {
    check_lengths(ctx, y, w_obs)?;
    require_observed_acceptable(ctx, criterion, w_obs)?;
    let estimate = diff_means_outcome(y.values(), w_obs);
    let sample = sample_acceptable(ctx, criterion, n_sims, rng, max_proposals)?;
    let sims: Vec<f64> = sample
        .assignments
        .iter()
        .map(|w| diff_means_outcome(y.values(), w))
        .collect();
    let extreme = tail_count(&sims, estimate, tail);
    Ok(TestReport {
        estimate,
        p_value: (1 + extreme) as f64 / (1 + n_sims) as f64,
        tail,
        method: TestMethod::MonteCarlo,
        draws_requested: n_sims,
        draws_accepted: n_sims,
        proposals_generated: sample.proposals_generated,
        criterion: criterion.to_json(),
        seed: Some(rng),
    })
}

/// The exact version of [`randomization_test`]: walks every assignment with
/// the observed group sizes, keeps the acceptable ones, and computes the
/// p-value over that full set.
pub fn randomization_test_exact(
    ctx: &BalanceContext,
    criterion: &BalanceCriterion,
    y: &OutcomeVector,
    w_obs: &Assignment,
    tail: Tail,
    enumeration_ceiling: u64,
) -> Result<TestReport> {
    check_lengths(ctx, y, w_obs)?;
    require_observed_acceptable(ctx, criterion, w_obs)?;
    let estimate = diff_means_outcome(y.values(), w_obs);
    let mut support: u64 = 0;
    let mut sims = Vec::new();
    for w in enumerate_assignments(ctx.n_units(), w_obs.n_treated(), enumeration_ceiling)? {
        support += 1;
        if criterion.evaluate(ctx, &w)? {
            sims.push(diff_means_outcome(y.values(), &w));
        }
    }
    if sims.is_empty() {
        return Err(Error::EmptyAcceptableSet {
            criterion: criterion.describe(),
        });
    }
    let extreme = tail_count(&sims, estimate, tail);
    Ok(TestReport {
        estimate,
        p_value: extreme as f64 / sims.len() as f64,
        tail,
        method: TestMethod::Exact,
        draws_requested: support,
        draws_accepted: sims.len() as u64,
        proposals_generated: support,
        criterion: criterion.to_json(),
        seed: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalSide {
    Lower,
    Upper,
}

/// One probe of the p-value curve during interval inversion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BisectionTrace {
    pub side: IntervalSide,
    pub tau0: f64,
    pub p_value: f64,
}

/// A confidence interval from inverting the two-sided randomization test
/// over constant-shift nulls.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntervalReport {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub estimate: f64,
    pub method: TestMethod,
    pub draws_accepted: u64,
    pub proposals_generated: u64,
    pub trace: Vec<BisectionTrace>,
    pub criterion: serde_json::Value,
    pub seed: Option<RngSpec>,
}

/// The p-value curve τ₀ ↦ p(τ₀) under common random numbers: every null is
/// scored against the same set of acceptable assignments, which makes the
/// curve piecewise constant and cheap to probe.
///
/// Under the constant-shift null τ = τ₀ the imputed outcomes are
/// y − τ₀·w_obs + τ₀·w, so the simulated estimate is A − τ₀·o + τ₀ with
/// A = τ̂(y, w) and o = τ̂(w_obs, w); centering removes the +τ₀ from both
/// sides, leaving |A − τ₀·o| against |τ̂_obs − τ₀|.
struct PValueCurve {
    pairs: Vec<(f64, f64)>,
    tau_obs: f64,
    add_one: bool,
}

impl PValueCurve {
    fn build(y: &[f64], w_obs: &Assignment, assignments: &[Assignment], add_one: bool) -> Self {
        let z: Vec<f64> = w_obs.flags().iter().map(|&t| t as u8 as f64).collect();
        let pairs = assignments
            .iter()
            .map(|w| (diff_means_outcome(y, w), diff_means_outcome(&z, w)))
            .collect();
        PValueCurve {
            pairs,
            tau_obs: diff_means_outcome(y, w_obs),
            add_one,
        }
    }

    fn p_at(&self, tau0: f64) -> f64 {
        let observed = (self.tau_obs - tau0).abs();
        let extreme = self
            .pairs
            .iter()
            .filter(|(a, o)| (a - tau0 * o).abs() >= observed)
            .count();
        if self.add_one {
            (1 + extreme) as f64 / (1 + self.pairs.len()) as f64
        } else {
            extreme as f64 / self.pairs.len() as f64
        }
    }
}

fn invert_side(
    curve: &PValueCurve,
    alpha: f64,
    step: f64,
    side: IntervalSide,
    trace: &mut Vec<BisectionTrace>,
) -> Result<f64> {
    let inner = curve.tau_obs;
    let direction = match side {
        IntervalSide::Lower => -1.0,
        IntervalSide::Upper => 1.0,
    };
    // a p-value plateau exactly equal to α must fall outside the region no
    // matter how 1 − level rounded; plateau spacing is ≥ 1/(draws+1), far
    // coarser than this guard
    let cut = alpha + 1e-12;
    let probe = |tau0: f64, trace: &mut Vec<BisectionTrace>| {
        let p_value = curve.p_at(tau0);
        trace.push(BisectionTrace { side, tau0, p_value });
        p_value
    };
    let mut outer = inner + direction * step;
    let mut p_outer = probe(outer, trace);
    if p_outer > cut {
        outer = inner + direction * step * 4.0;
        p_outer = probe(outer, trace);
        if p_outer > cut {
            return Err(Error::BracketFailed {
                at: outer,
                p_at: p_outer,
            });
        }
    }
    let mut keep = inner;
    let mut drop = outer;
    let tolerance = 1e-10 * (1.0 + inner.abs() + step);
    for _ in 0..200 {
        if (drop - keep).abs() <= tolerance {
            break;
        }
        let mid = 0.5 * (keep + drop);
        if probe(mid, trace) > cut {
            keep = mid;
        } else {
            drop = mid;
        }
    }
    Ok(0.5 * (keep + drop))
}

fn check_level(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    Ok(1.0 - level)
}

fn bracket_step(y: &OutcomeVector, w_obs: &Assignment) -> f64 {
    match classical_se(y, w_obs) {
        Ok(se) if se > 0.0 => 6.0 * se,
        _ => 1.0,
    }
}

fn invert_curve(
    curve: &PValueCurve,
    alpha: f64,
    step: f64,
) -> Result<(f64, f64, Vec<BisectionTrace>)> {
    let mut trace = Vec::new();
    let lower = invert_side(curve, alpha, step, IntervalSide::Lower, &mut trace)?;
    let upper = invert_side(curve, alpha, step, IntervalSide::Upper, &mut trace)?;
    Ok((lower, upper, trace))
}

/// Invert the two-sided Monte Carlo randomization test into a confidence
/// interval for a constant treatment effect.
#[allow(clippy::too_many_arguments)]
pub fn confidence_interval(
    ctx: &BalanceContext,
    criterion: &BalanceCriterion,
    y: &OutcomeVector,
    w_obs: &Assignment,
    level: f64,
    n_sims: u64,
    rng: RngSpec,
    max_proposals: u64,
) -> Result<IntervalReport> {
    let alpha = check_level(level)?;
    check_lengths(ctx, y, w_obs)?;
    require_observed_acceptable(ctx, criterion, w_obs)?;
    let sample = sample_acceptable(ctx, criterion, n_sims, rng, max_proposals)?;
    let curve = PValueCurve::build(y.values(), w_obs, &sample.assignments, true);
    let (lower, upper, trace) = invert_curve(&curve, alpha, bracket_step(y, w_obs))?;
    Ok(IntervalReport {
        lower,
        upper,
        level,
        estimate: curve.tau_obs,
        method: TestMethod::MonteCarlo,
        draws_accepted: n_sims,
        proposals_generated: sample.proposals_generated,
        trace,
        criterion: criterion.to_json(),
        seed: Some(rng),
    })
}

/// The exact version of [`confidence_interval`], inverting the enumerated
/// test over the full acceptable set.
pub fn confidence_interval_exact(
    ctx: &BalanceContext,
    criterion: &BalanceCriterion,
    y: &OutcomeVector,
    w_obs: &Assignment,
    level: f64,
    enumeration_ceiling: u64,
) -> Result<IntervalReport> {
    let alpha = check_level(level)?;
    check_lengths(ctx, y, w_obs)?;
    require_observed_acceptable(ctx, criterion, w_obs)?;
    let mut support: u64 = 0;
    let mut acceptable = Vec::new();
    for w in enumerate_assignments(ctx.n_units(), w_obs.n_treated(), enumeration_ceiling)? {
        support += 1;
        if criterion.evaluate(ctx, &w)? {
            acceptable.push(w);
        }
    }
    if acceptable.is_empty() {
        return Err(Error::EmptyAcceptableSet {
            criterion: criterion.describe(),
        });
    }
    let curve = PValueCurve::build(y.values(), w_obs, &acceptable, false);
    let (lower, upper, trace) = invert_curve(&curve, alpha, bracket_step(y, w_obs))?;
    Ok(IntervalReport {
        lower,
        upper,
        level,
        estimate: curve.tau_obs,
        method: TestMethod::Exact,
        draws_accepted: acceptable.len() as u64,
        proposals_generated: support,
        trace,
        criterion: criterion.to_json(),
        seed: None,
    })
}
