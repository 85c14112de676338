use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use rerand::inference::Tail;
use rerand::sampler::RngSpec;

#[derive(Parser)]
#[command(
    name = "rerand",
    version,
    about = "Covariate-balanced randomization for experiments: design, calibration, and randomization inference"
)]
pub struct Cli {
    /// Cap the worker pool (default: one worker per logical CPU)
    #[arg(long, global = true, value_name = "COUNT")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Draw a treatment assignment, redrawing until the balance criterion accepts one
    Design(DesignArgs),
    /// Turn a target acceptance probability into a Mahalanobis threshold
    Calibrate(CalibrateArgs),
    /// Randomization test of the sharp null, conditioning on the design's criterion
    Test(TestArgs),
    /// Confidence interval for a constant effect by inverting the randomization test
    Ci(CiArgs),
    /// Analytic variance-reduction quantities, single or as a CSV surface
    Theory(TheoryArgs),
    /// Run the built-in Monte Carlo experiments that check the library against theory
    Simulate(SimulateArgs),
    /// Walk every assignment of a small design, optionally filtered by a criterion
    Enumerate(EnumerateArgs),
}

/// Column transformations applied while ingesting a covariate CSV.
#[derive(Args, Serialize)]
pub struct TransformArgs {
    /// Column holding unit identifiers (excluded from the covariates)
    #[arg(long, value_name = "NAME")]
    pub id_col: Option<String>,

    /// Append squared columns; bare flag squares every covariate
    #[arg(long, value_name = "NAME", num_args = 0.., value_delimiter = ',')]
    pub squares: Option<Vec<String>>,

    /// Append pairwise products given as "a*b"; bare flag crosses every pair
    #[arg(long, value_name = "A*B", num_args = 0.., value_delimiter = ',')]
    pub interactions: Option<Vec<String>>,
}

/// Criterion selection: an explicit JSON document or a calibrated threshold.
#[derive(Args, Serialize)]
pub struct CriterionArgs {
    /// Balance criterion as inline JSON or a path to a JSON file
    #[arg(long, value_name = "JSON|PATH")]
    pub criterion: Option<String>,

    /// Target acceptance probability; calibrates a Mahalanobis threshold
    #[arg(long, value_name = "PROB", conflicts_with = "criterion")]
    pub p_a: Option<f64>,

    /// How to calibrate the threshold from --p-a
    #[arg(long, value_enum, default_value_t = CalibrationMode::Asymptotic)]
    pub calibration: CalibrationMode,

    /// Simulated assignments backing empirical calibration
    #[arg(long, value_name = "COUNT", default_value_t = 100_000)]
    pub calibration_draws: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CalibrationMode {
    /// Chi-square quantile at the covariance rank
    Asymptotic,
    /// Order statistic of simulated distances on this exact design
    Empirical,
}

/// Root randomness: every subcommand derives its draws from a documented
/// sub-stream of this (seed, stream) pair, so one seed never reuses the
/// same sequence across design and analysis.
#[derive(Args, Serialize)]
pub struct SeedArgs {
    /// Seed selecting the deterministic generator
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Stream index under the seed
    #[arg(long, default_value_t = 0)]
    pub stream: u64,
}

impl SeedArgs {
    pub fn spec(&self) -> RngSpec {
        RngSpec::with_stream(self.seed, self.stream)
    }
}

#[derive(Args, Serialize)]
pub struct DesignArgs {
    /// Covariate CSV: header row, one numeric column per covariate
    #[arg(long, value_name = "PATH")]
    pub covariates: PathBuf,

    #[command(flatten)]
    #[serde(flatten)]
    pub transform: TransformArgs,

    /// Treated-group size (default: half the units; the count must then be even)
    #[arg(long, value_name = "COUNT")]
    pub n_treated: Option<usize>,

    #[command(flatten)]
    #[serde(flatten)]
    pub criterion: CriterionArgs,

    #[command(flatten)]
    #[serde(flatten)]
    pub seed: SeedArgs,

    /// Proposal budget (default: scaled from the target acceptance probability)
    #[arg(long, value_name = "COUNT")]
    pub max_proposals: Option<u64>,

    /// Where to write the design JSON (stdout when omitted)
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,

    /// Also write the assignment as CSV (unit_id, treated)
    #[arg(long, value_name = "PATH")]
    pub assignment_csv: Option<PathBuf>,
}

#[derive(Args, Serialize)]
pub struct CalibrateArgs {
    /// Covariate count for asymptotic calibration
    #[arg(long, value_name = "COUNT", conflicts_with = "covariates")]
    pub k: Option<usize>,

    /// Target acceptance probability
    #[arg(long, value_name = "PROB")]
    pub p_a: f64,

    /// Covariate CSV; switches to empirical calibration on this exact design
    #[arg(long, value_name = "PATH")]
    pub covariates: Option<PathBuf>,

    #[command(flatten)]
    #[serde(flatten)]
    pub transform: TransformArgs,

    /// Treated-group size for empirical calibration (default: half the units)
    #[arg(long, value_name = "COUNT")]
    pub n_treated: Option<usize>,

    /// Simulated assignments backing empirical calibration
    #[arg(long, value_name = "COUNT", default_value_t = 100_000)]
    pub draws: u64,

    #[command(flatten)]
    #[serde(flatten)]
    pub seed: SeedArgs,

    /// Where to write the calibration JSON (stdout when omitted)
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
pub struct TestArgs {
    /// Design file produced by `rerand design`
    #[arg(long, value_name = "PATH")]
    pub design: PathBuf,

    /// Outcome CSV
    #[arg(long, value_name = "PATH")]
    pub outcomes: PathBuf,

    /// Column holding unit identifiers in the outcome file (joined to the design's ids)
    #[arg(long, value_name = "NAME")]
    pub id_col: Option<String>,

    /// Column holding the outcome (required when several candidates exist)
    #[arg(long, value_name = "NAME")]
    pub outcome_col: Option<String>,

    /// Override the design's criterion (inline JSON or path)
    #[arg(long, value_name = "JSON|PATH")]
    pub criterion: Option<String>,

    /// Which tail of the randomization distribution to score
    #[arg(long, value_enum, default_value_t = TailArg::TwoSided)]
    pub tail: TailArg,

    /// Simulated acceptable assignments behind the Monte Carlo p-value
    #[arg(long, default_value_t = 999, value_name = "COUNT")]
    pub n_sims: u64,

    /// Enumerate the full acceptable set instead of sampling
    #[arg(long)]
    pub exact: bool,

    /// Largest assignment support the exact method will enumerate
    #[arg(long, default_value_t = 10_000, value_name = "COUNT")]
    pub ceiling: u64,

    /// Proposal budget per simulated draw (default: scaled heuristic)
    #[arg(long, value_name = "COUNT")]
    pub max_proposals: Option<u64>,

    #[command(flatten)]
    #[serde(flatten)]
    pub seed: SeedArgs,

    /// Where to write the test report JSON (stdout when omitted)
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
pub struct CiArgs {
    /// Design file produced by `rerand design`
    #[arg(long, value_name = "PATH")]
    pub design: PathBuf,

    /// Outcome CSV
    #[arg(long, value_name = "PATH")]
    pub outcomes: PathBuf,

    /// Column holding unit identifiers in the outcome file (joined to the design's ids)
    #[arg(long, value_name = "NAME")]
    pub id_col: Option<String>,

    /// Column holding the outcome (required when several candidates exist)
    #[arg(long, value_name = "NAME")]
    pub outcome_col: Option<String>,

    /// Override the design's criterion (inline JSON or path)
    #[arg(long, value_name = "JSON|PATH")]
    pub criterion: Option<String>,

    /// Confidence level in (0, 1)
    #[arg(long, default_value_t = 0.95, value_name = "LEVEL")]
    pub level: f64,

    /// Simulated acceptable assignments behind each inverted test
    #[arg(long, default_value_t = 999, value_name = "COUNT")]
    pub n_sims: u64,

    /// Enumerate the full acceptable set instead of sampling
    #[arg(long)]
    pub exact: bool,

    /// Largest assignment support the exact method will enumerate
    #[arg(long, default_value_t = 10_000, value_name = "COUNT")]
    pub ceiling: u64,

    /// Proposal budget per simulated draw (default: scaled heuristic)
    #[arg(long, value_name = "COUNT")]
    pub max_proposals: Option<u64>,

    #[command(flatten)]
    #[serde(flatten)]
    pub seed: SeedArgs,

    /// Where to write the interval report JSON (stdout when omitted)
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailArg {
    TwoSided,
    Lower,
    Upper,
}

impl From<TailArg> for Tail {
    fn from(tail: TailArg) -> Tail {
        match tail {
            TailArg::TwoSided => Tail::TwoSided,
            TailArg::Lower => Tail::Lower,
            TailArg::Upper => Tail::Upper,
        }
    }
}

#[derive(Args, Serialize)]
pub struct TheoryArgs {
    /// Covariate count
    #[arg(long, value_name = "COUNT")]
    pub k: Option<usize>,

    /// Acceptance probability fixing the threshold
    #[arg(long, value_name = "PROB")]
    pub p_a: Option<f64>,

    /// Mahalanobis threshold given directly instead of via --p-a
    #[arg(long, value_name = "A", conflicts_with = "p_a")]
    pub threshold: Option<f64>,

    /// Squared outcome-covariate correlation for effect-estimate reductions
    #[arg(long, value_name = "R2")]
    pub r2: Option<f64>,

    /// Sample size for the regression-adjustment comparison
    #[arg(long, value_name = "COUNT")]
    pub n: Option<usize>,

    /// Observed balance distance for the regression-adjustment comparison
    #[arg(long, value_name = "M")]
    pub m: Option<f64>,

    /// Emit an analytic surface as CSV instead of a single summary
    #[arg(
        long,
        value_enum,
        value_name = "SURFACE",
        conflicts_with_all = ["k", "p_a", "threshold", "r2", "n", "m"]
    )]
    pub grid: Option<GridKind>,

    /// Covariate counts spanning the surface
    #[arg(long, value_delimiter = ',', value_name = "K,...", requires = "grid")]
    pub ks: Option<Vec<usize>>,

    /// Acceptance probabilities spanning the surface
    #[arg(long, value_delimiter = ',', value_name = "P,...", requires = "grid")]
    pub p_as: Option<Vec<f64>>,

    /// Squared correlations spanning the effect-estimate surface
    #[arg(long, value_delimiter = ',', value_name = "R2,...", requires = "grid")]
    pub r2s: Option<Vec<f64>>,

    /// Where to write the output (stdout when omitted)
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridKind {
    /// Percent variance reduction of each covariate mean difference over (k, p_a)
    CovariatePriv,
    /// Percent variance reduction of the effect estimate over (p_a, k, R²)
    TauPriv,
}

#[derive(Args, Serialize)]
pub struct SimulateArgs {
    /// Experiment identifier (h1..h7) or "all"
    #[arg(value_name = "ID")]
    pub id: String,

    /// Replace the experiment's pinned seed
    #[arg(long)]
    pub seed: Option<u64>,

    /// Stream index under --seed
    #[arg(long, default_value_t = 0, requires = "seed")]
    pub stream: u64,

    /// Also write the report(s) as JSON
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
pub struct EnumerateArgs {
    /// Covariate CSV: header row, one numeric column per covariate
    #[arg(long, value_name = "PATH")]
    pub covariates: PathBuf,

    #[command(flatten)]
    #[serde(flatten)]
    pub transform: TransformArgs,

    /// Treated-group size (default: half the units; the count must then be even)
    #[arg(long, value_name = "COUNT")]
    pub n_treated: Option<usize>,

    /// Balance criterion to evaluate on each assignment (inline JSON or path)
    #[arg(long, value_name = "JSON|PATH")]
    pub criterion: Option<String>,

    /// Largest assignment support to walk
    #[arg(long, default_value_t = 10_000, value_name = "COUNT")]
    pub ceiling: u64,

    /// Print one CSV line per assignment instead of the summary
    #[arg(long)]
    pub list: bool,

    /// Where to write the output (stdout when omitted)
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}
