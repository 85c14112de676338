//! Acceptance criteria over assignments: which treatment splits count as
//! "balanced enough" to run. A criterion is a deterministic predicate
//! φ(x, w) ∈ {accept, reject}; rejection sampling in the sampler module keeps
//! drawing until φ accepts.

use std::fmt;
use std::sync::Arc;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::balance::{Assignment, BalanceContext};
use crate::error::{Error, Result};
use crate::sampler::{count_assignments, draw_assignment, enumerate_assignments, RngSpec};
use crate::theory::chi2_quantile;

/// Fewest probe draws accepted by the empirical calibrator.
pub const MIN_CALIBRATION_DRAWS: u64 = 1000;

const MIRROR_EXHAUSTIVE_LIMIT: u128 = 20_000;

type PredicateFn = Arc<dyn Fn(&BalanceContext, &Assignment) -> bool + Send + Sync>;

/// An opaque user-supplied predicate. Serialization records only its name;
/// such criteria cannot be reconstructed from JSON.
#[derive(Clone)]
pub struct UserPredicate {
    name: String,
    affinely_invariant: bool,
    predicate: PredicateFn,
}

impl UserPredicate {
    pub fn new(
        name: impl Into<String>,
        affinely_invariant: bool,
        predicate: impl Fn(&BalanceContext, &Assignment) -> bool + Send + Sync + 'static,
    ) -> Self {
        UserPredicate {
            name: name.into(),
            affinely_invariant,
            predicate: Arc::new(predicate),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

impl fmt::Debug for UserPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UserPredicate")
            .field("name", &self.name)
            .field("affinely_invariant", &self.affinely_invariant)
            .finish_non_exhaustive()
    }
}

/// A balance acceptance criterion.
#[derive(Debug, Clone)]
pub enum BalanceCriterion {
    /// Accept when M ≤ threshold. The threshold may be infinite (accept all),
    /// so "no restriction" needs no separate code path.
    MahalanobisThreshold { threshold: f64 },
    /// Accept when |d_j| ≤ bounds[j] for every covariate j.
    Caliper { bounds: Vec<f64> },
    /// Accept when every child accepts. An empty conjunction accepts.
    Conjunction(Vec<BalanceCriterion>),
    /// Accept when the user predicate returns true.
    UserPredicate(UserPredicate),
}

impl BalanceCriterion {
    pub fn mahalanobis_threshold(threshold: f64) -> Result<Self> {
        if threshold.is_nan() || threshold < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "threshold must be nonnegative, got {threshold}"
            )));
        }
        if threshold == 0.0 {
            log::warn!("threshold 0 accepts only exactly balanced assignments");
        }
        Ok(BalanceCriterion::MahalanobisThreshold { threshold })
    }

    /// The accept-everything criterion (an infinite threshold).
    pub fn unrestricted() -> Self {
        BalanceCriterion::MahalanobisThreshold {
            threshold: f64::INFINITY,
        }
    }

    pub fn caliper(bounds: Vec<f64>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::InvalidArgument("caliper needs at least one bound".into()));
        }
        for (j, &b) in bounds.iter().enumerate() {
            if b <= 0.0 || !b.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "caliper bound {} must be a positive real, got {b}",
                    j + 1
                )));
            }
        }
        Ok(BalanceCriterion::Caliper { bounds })
    }

    pub fn conjunction(children: Vec<BalanceCriterion>) -> Self {
        BalanceCriterion::Conjunction(children)
    }

    pub fn user_predicate(
        name: impl Into<String>,
        affinely_invariant: bool,
        predicate: impl Fn(&BalanceContext, &Assignment) -> bool + Send + Sync + 'static,
    ) -> Self {
        BalanceCriterion::UserPredicate(UserPredicate::new(name, affinely_invariant, predicate))
    }

    /// Whether acceptance decisions survive invertible affine maps of the
    /// covariates. True for the Mahalanobis region by construction, declared
    /// by the author for user predicates, and false for calipers.
    pub fn is_affinely_invariant(&self) -> bool {
        match self {
            BalanceCriterion::MahalanobisThreshold { .. } => true,
            BalanceCriterion::Caliper { .. } => false,
            BalanceCriterion::Conjunction(children) => {
                children.iter().all(|c| c.is_affinely_invariant())
            }
            BalanceCriterion::UserPredicate(p) => p.affinely_invariant,
        }
    }

    /// Evaluate φ(x, w).
    pub fn evaluate(&self, ctx: &BalanceContext, w: &Assignment) -> Result<bool> {
        match self {
            BalanceCriterion::MahalanobisThreshold { threshold } => {
                if threshold.is_infinite() {
                    // skip the distance so the accept-all case stays valid
                    // even for degenerate-direction diffs
                    return Ok(true);
                }
                Ok(ctx.mahalanobis(w)? <= *threshold)
            }
            BalanceCriterion::Caliper { bounds } => {
                if bounds.len() != ctx.n_covariates() {
                    return Err(Error::DimensionMismatch(format!(
                        "{} caliper bounds for {} covariates",
                        bounds.len(),
                        ctx.n_covariates()
                    )));
                }
                let d = ctx.diff_in_means(w)?;
                Ok(d.iter().zip(bounds).all(|(dj, bj)| dj.abs() <= *bj))
            }
            BalanceCriterion::Conjunction(children) => {
                for child in children {
                    if !child.evaluate(ctx, w)? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            BalanceCriterion::UserPredicate(p) => Ok((p.predicate)(ctx, w)),
        }
    }

    /// Short human-readable form for diagnostics.
    pub fn describe(&self) -> String {
        match self {
            BalanceCriterion::MahalanobisThreshold { threshold } => {
                if threshold.is_infinite() {
                    "M ≤ ∞ (unrestricted)".to_string()
                } else {
                    format!("M ≤ {threshold:.6}")
                }
            }
            BalanceCriterion::Caliper { bounds } => {
                let list = bounds
                    .iter()
                    .map(|b| format!("{b:.6}"))
                    .collect::<Vec<_>>()
                    .join(", ");
                format!("caliper({list})")
            }
            BalanceCriterion::Conjunction(children) => {
                let list = children
                    .iter()
                    .map(|c| c.describe())
                    .collect::<Vec<_>>()
                    .join("; ");
                format!("all({list})")
            }
            BalanceCriterion::UserPredicate(p) => format!("predicate {:?}", p.name),
        }
    }

    /// The criterion as a JSON document (variant tag plus parameters).
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("criterion serialization cannot fail")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        serde_json::from_value(value.clone())
            .map_err(|e| Error::CriterionFromJson(e.to_string()))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum CriterionRepr {
    MahalanobisThreshold {
        #[serde(
            serialize_with = "crate::ser::serialize_extended",
            deserialize_with = "crate::ser::deserialize_extended"
        )]
        threshold: f64,
    },
    Caliper {
        bounds: Vec<f64>,
    },
    Conjunction {
        criteria: Vec<CriterionRepr>,
    },
    UserPredicate {
        name: String,
        affinely_invariant: bool,
    },
}

impl From<&BalanceCriterion> for CriterionRepr {
    fn from(c: &BalanceCriterion) -> Self {
        match c {
            BalanceCriterion::MahalanobisThreshold { threshold } => {
                CriterionRepr::MahalanobisThreshold { threshold: *threshold }
            }
            BalanceCriterion::Caliper { bounds } => CriterionRepr::Caliper {
                bounds: bounds.clone(),
            },
            BalanceCriterion::Conjunction(children) => CriterionRepr::Conjunction {
                criteria: children.iter().map(CriterionRepr::from).collect(),
            },
            BalanceCriterion::UserPredicate(p) => CriterionRepr::UserPredicate {
                name: p.name.clone(),
                affinely_invariant: p.affinely_invariant,
            },
        }
    }
}

impl TryFrom<CriterionRepr> for BalanceCriterion {
    type Error = Error;

    fn try_from(repr: CriterionRepr) -> Result<Self> {
        match repr {
            CriterionRepr::MahalanobisThreshold { threshold } => {
                BalanceCriterion::mahalanobis_threshold(threshold)
            }
            CriterionRepr::Caliper { bounds } => BalanceCriterion::caliper(bounds),
            CriterionRepr::Conjunction { criteria } => Ok(BalanceCriterion::Conjunction(
                criteria
                    .into_iter()
                    .map(BalanceCriterion::try_from)
                    .collect::<Result<_>>()?,
            )),
            CriterionRepr::UserPredicate { name, .. } => Err(Error::CriterionFromJson(format!(
                "user predicate {name:?} is opaque and cannot be reconstructed"
            ))),
        }
    }
}

impl Serialize for BalanceCriterion {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        CriterionRepr::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for BalanceCriterion {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = CriterionRepr::deserialize(d)?;
        BalanceCriterion::try_from(repr).map_err(D::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMethod {
    ChiSquareAsymptotic,
    Empirical,
}

/// A calibrated acceptance threshold together with how it was obtained.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationResult {
    #[serde(
        serialize_with = "crate::ser::serialize_extended",
        deserialize_with = "crate::ser::deserialize_extended"
    )]
    pub threshold: f64,
    pub p_a_target: f64,
    pub p_a_achieved: f64,
    pub method: CalibrationMethod,
    pub draws_used: u64,
}

impl CalibrationResult {
    pub fn criterion(&self) -> BalanceCriterion {
        BalanceCriterion::MahalanobisThreshold {
            threshold: self.threshold,
        }
    }
}

fn check_p_a(p_a: f64) -> Result<()> {
    if !(p_a > 0.0 && p_a <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "acceptance probability must lie in (0, 1], got {p_a}"
        )));
    }
    Ok(())
}

/// Threshold with asymptotic acceptance probability p_a: the p_a quantile of
/// χ²_k. p_a = 1 yields the infinite sentinel.
pub fn calibrate_threshold_asymptotic(k: usize, p_a: f64) -> Result<CalibrationResult> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    check_p_a(p_a)?;
    let threshold = if p_a == 1.0 {
        f64::INFINITY
    } else {
        chi2_quantile(k, p_a)
    };
    Ok(CalibrationResult {
        threshold,
        p_a_target: p_a,
        p_a_achieved: p_a,
        method: CalibrationMethod::ChiSquareAsymptotic,
        draws_used: 0,
    })
}

/// Threshold from the empirical distance distribution: the ⌈p_a·draws⌉-th
/// smallest M over uniformly drawn assignments. Exact in the enumeration
/// limit; preferable when n is small or covariates are heavy-tailed.
pub fn calibrate_threshold_empirical(
    ctx: &BalanceContext,
    p_a: f64,
    draws: u64,
    rng: RngSpec,
) -> Result<CalibrationResult> {
    check_p_a(p_a)?;
    if p_a == 1.0 {
        return Ok(CalibrationResult {
            threshold: f64::INFINITY,
            p_a_target: 1.0,
            p_a_achieved: 1.0,
            method: CalibrationMethod::Empirical,
            draws_used: 0,
        });
    }
    if draws < MIN_CALIBRATION_DRAWS {
        return Err(Error::InvalidArgument(format!(
            "empirical calibration needs at least {MIN_CALIBRATION_DRAWS} draws, got {draws}"
        )));
    }
    let mut generator = rng.rng();
    let n = ctx.n_units();
    let n_t = ctx.n_treated();
    let mut distances = Vec::with_capacity(draws as usize);
    for _ in 0..draws {
        let w = draw_assignment(n, n_t, &mut generator)?;
        distances.push(ctx.mahalanobis(&w)?);
    }
    distances.sort_unstable_by(|a, b| a.partial_cmp(b).expect("distances are never NaN"));
    if distances[0] == distances[draws as usize - 1] {
        return Err(Error::DegenerateCalibration { draws });
    }
    // guard against p_a·draws landing epsilon above an integer
    let rank = ((p_a * draws as f64) - 1e-9).ceil().max(1.0) as usize;
    let threshold = distances[rank.min(draws as usize) - 1];
    let accepted = distances.partition_point(|&m| m <= threshold);
    Ok(CalibrationResult {
        threshold,
        p_a_target: p_a,
        p_a_achieved: accepted as f64 / draws as f64,
        method: CalibrationMethod::Empirical,
        draws_used: draws,
    })
}

/// Whether φ treats the two group labels symmetrically: φ(x, w) = φ(x, 1−w).
/// Exhaustive when the support is small, probed on random draws otherwise.
/// Only defined for equal group sizes.
pub fn is_mirror_symmetric(
    criterion: &BalanceCriterion,
    ctx: &BalanceContext,
    probe_draws: u64,
    rng: RngSpec,
) -> Result<bool> {
    let n = ctx.n_units();
    let n_t = ctx.n_treated();
    if 2 * n_t != n {
        return Err(Error::InvalidArgument(format!(
            "mirror symmetry is defined for equal group sizes, got {n_t} of {n}"
        )));
    }
    let support = count_assignments(n, n_t)?;
    if support <= MIRROR_EXHAUSTIVE_LIMIT {
        for w in enumerate_assignments(n, n_t, MIRROR_EXHAUSTIVE_LIMIT as u64)? {
            if criterion.evaluate(ctx, &w)? != criterion.evaluate(ctx, &w.mirrored())? {
                return Ok(false);
            }
        }
        return Ok(true);
    }
    let mut generator = rng.rng();
    for _ in 0..probe_draws {
        let w = draw_assignment(n, n_t, &mut generator)?;
        if criterion.evaluate(ctx, &w)? != criterion.evaluate(ctx, &w.mirrored())? {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::balance::CovariateMatrix;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn three_point_context() -> BalanceContext {
        let x = CovariateMatrix::from_column(&[0.0, 1.0, 2.0]).unwrap();
        BalanceContext::new(&x, 1).unwrap()
    }

    fn twelve_unit_context() -> BalanceContext {
        let x = CovariateMatrix::from_column(&[
            -1.3, 0.4, 2.2, -0.8, 1.1, 0.0, -2.1, 0.9, 1.7, -0.5, 0.3, -1.4,
        ])
        .unwrap();
        BalanceContext::new(&x, 6).unwrap()
    }

    #[test]
    fn asymptotic_calibration_two_covariates() {
        let cal = calibrate_threshold_asymptotic(2, 0.1).unwrap();
        assert_relative_eq!(cal.threshold, -2.0 * 0.9f64.ln(), epsilon = 1e-9);
        assert_eq!(cal.p_a_achieved, 0.1);
        assert_eq!(cal.method, CalibrationMethod::ChiSquareAsymptotic);

        let open = calibrate_threshold_asymptotic(3, 1.0).unwrap();
        assert!(open.threshold.is_infinite());

        assert!(calibrate_threshold_asymptotic(0, 0.1).is_err());
        assert!(calibrate_threshold_asymptotic(2, 0.0).is_err());
        assert!(calibrate_threshold_asymptotic(2, 1.5).is_err());
        assert!(calibrate_threshold_asymptotic(2, f64::NAN).is_err());
    }

    #[test]
    fn empirical_calibration_matches_enumerated_quantile() {
        let ctx = twelve_unit_context();
        // exact lower quantile over the full support of 924 assignments
        let mut all: Vec<f64> = enumerate_assignments(12, 6, 1000)
            .unwrap()
            .map(|w| ctx.mahalanobis(&w).unwrap())
            .collect();
        all.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        let exact = all[(0.5f64 * 924.0).ceil() as usize - 1];
        // ties at the threshold can push the exact accepted fraction past the
        // nominal rate, so anchor on the support fraction rather than 0.5
        let exact_fraction = all.partition_point(|&m| m <= exact) as f64 / 924.0;

        let cal =
            calibrate_threshold_empirical(&ctx, 0.5, 200_000, RngSpec::new(41)).unwrap();
        assert_eq!(cal.threshold, exact);
        assert!((cal.p_a_achieved - exact_fraction).abs() < 0.01);
        assert!(exact_fraction >= 0.5);
        assert_eq!(cal.method, CalibrationMethod::Empirical);
        assert_eq!(cal.draws_used, 200_000);
    }

    #[test]
    fn empirical_calibration_validation() {
        let ctx = twelve_unit_context();
        assert!(calibrate_threshold_empirical(&ctx, 0.5, 10, RngSpec::new(1)).is_err());
        assert!(calibrate_threshold_empirical(&ctx, 0.0, 5000, RngSpec::new(1)).is_err());

        let open = calibrate_threshold_empirical(&ctx, 1.0, 5000, RngSpec::new(1)).unwrap();
        assert!(open.threshold.is_infinite());
        assert_eq!(open.p_a_achieved, 1.0);

        // two units admit exactly two mirror-image splits with identical M
        let tiny = CovariateMatrix::from_column(&[0.0, 1.0]).unwrap();
        let tiny_ctx = BalanceContext::new(&tiny, 1).unwrap();
        assert!(matches!(
            calibrate_threshold_empirical(&tiny_ctx, 0.5, 2000, RngSpec::new(1)),
            Err(Error::DegenerateCalibration { .. })
        ));
    }

    #[test]
    fn threshold_evaluation_is_inclusive() {
        let ctx = three_point_context();
        let w = Assignment::from_indicators(&[0, 1, 1]).unwrap();
        let m = ctx.mahalanobis(&w).unwrap();
        let at = BalanceCriterion::mahalanobis_threshold(m).unwrap();
        assert!(at.evaluate(&ctx, &w).unwrap());
        let below = BalanceCriterion::mahalanobis_threshold(m * 0.999).unwrap();
        assert!(!below.evaluate(&ctx, &w).unwrap());
        assert!(BalanceCriterion::unrestricted().evaluate(&ctx, &w).unwrap());
    }

    #[test]
    fn zero_threshold_accepts_only_exact_balance() {
        let ctx = three_point_context();
        let zero = BalanceCriterion::mahalanobis_threshold(0.0).unwrap();
        assert!(zero
            .evaluate(&ctx, &Assignment::from_indicators(&[1, 0, 1]).unwrap())
            .unwrap());
        assert!(!zero
            .evaluate(&ctx, &Assignment::from_indicators(&[0, 1, 1]).unwrap())
            .unwrap());
    }

    #[test]
    fn caliper_evaluation_and_validation() {
        let x = CovariateMatrix::from_rows(
            &[vec![0.0, 2.0], vec![1.0, 1.0], vec![2.0, 0.0], vec![3.0, 3.0]],
            None,
        )
        .unwrap();
        let ctx = BalanceContext::new(&x, 2).unwrap();
        let w = Assignment::from_indicators(&[1, 0, 0, 1]).unwrap();
        let d = ctx.diff_in_means(&w).unwrap();

        let loose = BalanceCriterion::caliper(vec![d[0].abs() + 0.1, d[1].abs() + 0.1]).unwrap();
        assert!(loose.evaluate(&ctx, &w).unwrap());
        let tight_second =
            BalanceCriterion::caliper(vec![d[0].abs() + 0.1, d[1].abs() * 0.5 + 1e-12]).unwrap();
        assert!(d[1].abs() > 0.0);
        assert!(!tight_second.evaluate(&ctx, &w).unwrap());

        let wrong_len = BalanceCriterion::caliper(vec![1.0]).unwrap();
        assert!(wrong_len.evaluate(&ctx, &w).is_err());

        assert!(BalanceCriterion::caliper(vec![]).is_err());
        assert!(BalanceCriterion::caliper(vec![0.0]).is_err());
        assert!(BalanceCriterion::caliper(vec![-1.0]).is_err());
        assert!(BalanceCriterion::caliper(vec![f64::INFINITY]).is_err());
        assert!(BalanceCriterion::mahalanobis_threshold(-0.1).is_err());
    }

    #[test]
    fn conjunction_semantics() {
        let ctx = three_point_context();
        let w = Assignment::from_indicators(&[0, 1, 1]).unwrap();
        let yes = BalanceCriterion::unrestricted();
        let no = BalanceCriterion::user_predicate("never", true, |_, _| false);
        assert!(BalanceCriterion::conjunction(vec![])
            .evaluate(&ctx, &w)
            .unwrap());
        assert!(BalanceCriterion::conjunction(vec![yes.clone(), yes.clone()])
            .evaluate(&ctx, &w)
            .unwrap());
        assert!(!BalanceCriterion::conjunction(vec![yes, no])
            .evaluate(&ctx, &w)
            .unwrap());
    }

    #[test]
    fn affine_invariance_declarations() {
        assert!(BalanceCriterion::unrestricted().is_affinely_invariant());
        assert!(!BalanceCriterion::caliper(vec![0.5]).unwrap().is_affinely_invariant());
        let mixed = BalanceCriterion::conjunction(vec![
            BalanceCriterion::unrestricted(),
            BalanceCriterion::caliper(vec![0.5]).unwrap(),
        ]);
        assert!(!mixed.is_affinely_invariant());
        assert!(BalanceCriterion::user_predicate("declared", true, |_, _| true)
            .is_affinely_invariant());
    }

    #[test]
    fn criterion_json_round_trips() {
        let m = BalanceCriterion::mahalanobis_threshold(0.25).unwrap();
        let json = m.to_json();
        assert_eq!(json["type"], "mahalanobis_threshold");
        assert_eq!(json["threshold"], 0.25);
        let back = BalanceCriterion::from_json(&json).unwrap();
        assert_eq!(back.to_json(), json);

        let open = BalanceCriterion::unrestricted();
        let json = open.to_json();
        assert_eq!(json["threshold"], "inf");
        let back = BalanceCriterion::from_json(&json).unwrap();
        assert!(matches!(
            back,
            BalanceCriterion::MahalanobisThreshold { threshold } if threshold.is_infinite()
        ));

        let nested = BalanceCriterion::conjunction(vec![
            BalanceCriterion::mahalanobis_threshold(1.5).unwrap(),
            BalanceCriterion::caliper(vec![0.1, 0.3]).unwrap(),
        ]);
        let json = nested.to_json();
        let back = BalanceCriterion::from_json(&json).unwrap();
        assert_eq!(back.to_json(), json);
        assert_eq!(json["criteria"][1]["bounds"][1], 0.3);
    }

    #[test]
    fn criterion_json_rejects_bad_documents() {
        for doc in [
            serde_json::json!({"type": "mahalanobis_threshold", "threshold": -2.0}),
            serde_json::json!({"type": "caliper", "bounds": [0.2, -0.1]}),
            serde_json::json!({"type": "caliper", "bounds": []}),
            serde_json::json!({"type": "volcano"}),
            serde_json::json!({"type": "mahalanobis_threshold", "threshold": "wide"}),
        ] {
            assert!(BalanceCriterion::from_json(&doc).is_err(), "accepted {doc}");
        }

        // user predicates serialize by name only and do not come back
        let pred = BalanceCriterion::user_predicate("custom", false, |_, _| true);
        let json = pred.to_json();
        assert_eq!(json["type"], "user_predicate");
        assert_eq!(json["name"], "custom");
        assert!(matches!(
            BalanceCriterion::from_json(&json),
            Err(Error::CriterionFromJson(_))
        ));
    }

    #[test]
    fn mirror_symmetry_checks() {
        let ctx = twelve_unit_context();
        let spec = RngSpec::new(7);
        let m = BalanceCriterion::mahalanobis_threshold(0.8).unwrap();
        assert!(is_mirror_symmetric(&m, &ctx, 1000, spec).unwrap());
        let cal = BalanceCriterion::caliper(vec![0.9]).unwrap();
        assert!(is_mirror_symmetric(&cal, &ctx, 1000, spec).unwrap());
        // a one-sided rule prefers treated-low assignments and breaks symmetry
        let one_sided = BalanceCriterion::user_predicate("treated below control", false, |c, w| {
            c.diff_in_means(w).map(|d| d[0] <= 0.1).unwrap_or(false)
        });
        assert!(!is_mirror_symmetric(&one_sided, &ctx, 1000, spec).unwrap());

        let uneven = BalanceContext::new(ctx.covariates(), 5).unwrap();
        assert!(is_mirror_symmetric(&m, &uneven, 1000, spec).is_err());
    }

    proptest! {
        #[test]
        fn singleton_conjunction_is_transparent(
            bits in proptest::collection::vec(0u8..2, 12),
            threshold in 0.01f64..4.0,
        ) {
            let ones = bits.iter().filter(|&&b| b == 1).count();
            prop_assume!((1..=11).contains(&ones));
            let ctx = twelve_unit_context();
            let w = Assignment::from_indicators(&bits).unwrap();
            let child = BalanceCriterion::mahalanobis_threshold(threshold).unwrap();
            let wrapped = BalanceCriterion::conjunction(vec![child.clone()]);
            prop_assert_eq!(
                child.evaluate(&ctx, &w).unwrap(),
                wrapped.evaluate(&ctx, &w).unwrap()
            );
        }

        #[test]
        fn caliper_json_round_trips(bounds in proptest::collection::vec(1e-6f64..1e6, 1..6)) {
            let c = BalanceCriterion::caliper(bounds).unwrap();
            let back = BalanceCriterion::from_json(&c.to_json()).unwrap();
            prop_assert_eq!(back.to_json(), c.to_json());
        }
    }
}
