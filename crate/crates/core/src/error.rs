use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by balance evaluation, calibration, sampling, and inference.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("covariates carry no balance information: covariance rank is 0 after the tolerance cut")]
    DegenerateCovariates,

    #[error(
        "no acceptable assignment in {proposals} proposals \
         (acceptance probability is plausibly below {bound:.2e}); \
         relax the criterion or raise the proposal budget"
    )]
    ProposalBudgetExhausted { proposals: u64, bound: f64 },

    #[error("support of {support} assignments exceeds the enumeration ceiling of {ceiling}")]
    EnumerationTooLarge { support: u128, ceiling: u64 },

    #[error("degenerate balance distribution: all {draws} probe draws gave the same distance")]
    DegenerateCalibration { draws: u64 },

    #[error("the observed assignment fails the balance criterion {criterion}")]
    CriterionNotSatisfied { criterion: String },

    #[error("no assignment satisfies the criterion {criterion} within the enumerated support")]
    EmptyAcceptableSet { criterion: String },

    #[error(
        "confidence bracket failed: p({at}) = {p_at} is still above alpha after widening once; \
         the interval endpoint lies outside the search range"
    )]
    BracketFailed { at: f64, p_at: f64 },

    #[error("criterion cannot be reconstructed from JSON: {0}")]
    CriterionFromJson(String),
}

impl Error {
    /// True for failures that mean "the request was infeasible at this budget"
    /// rather than "the inputs were malformed".
    pub fn is_feasibility(&self) -> bool {
        matches!(
            self,
            Error::ProposalBudgetExhausted { .. }
                | Error::EnumerationTooLarge { .. }
                | Error::EmptyAcceptableSet { .. }
                | Error::BracketFailed { .. }
        )
    }
}
