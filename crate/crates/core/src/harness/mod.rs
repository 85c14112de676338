//! Monte Carlo experiments that check the library's behavior against the
//! variance-reduction theory: each experiment fixes a design, simulates it
//! under a pinned seed, and reports measured-versus-target rows. Every run
//! with the same configuration produces byte-identical reports.

pub mod model;
pub mod report;
pub mod stats;

pub mod h1;
pub mod h2;
pub mod h3;
pub mod h4;
pub mod h5;
pub mod h6;
pub mod h7;

pub use report::{ExperimentReport, ReportRow, Tolerance};

use crate::balance::BalanceContext;
use crate::error::Result;
use crate::sampler::{draw_assignment, RngSpec};

/// The runnable experiment identifiers, in presentation order.
pub const EXPERIMENT_IDS: [&str; 7] = ["h1", "h2", "h3", "h4", "h5", "h6", "h7"];

/// Run one experiment by identifier with its default configuration, the
/// seed replaced by `seed` when given.
pub fn run_by_id(id: &str, seed: Option<RngSpec>) -> Result<ExperimentReport> {
    match id {
        "h1" => {
            let mut cfg = h1::Config::default();
            if let Some(s) = seed {
                cfg.seed = s;
            }
            h1::run(&cfg)
        }
        "h2" => {
            let mut cfg = h2::Config::default();
            if let Some(s) = seed {
                cfg.seed = s;
            }
            h2::run(&cfg)
        }
        "h3" => {
            let mut cfg = h3::Config::default();
            if let Some(s) = seed {
                cfg.seed = s;
            }
            h3::run(&cfg)
        }
        "h4" => {
            let mut cfg = h4::Config::default();
            if let Some(s) = seed {
                cfg.seed = s;
            }
            h4::run(&cfg)
        }
        "h5" => h5::run(),
        "h6" => {
            let mut cfg = h6::Config::default();
            if let Some(s) = seed {
                cfg.seed = s;
            }
            h6::run(&cfg)
        }
        "h7" => {
            let mut cfg = h7::Config::default();
            if let Some(s) = seed {
                cfg.seed = s;
            }
            h7::run(&cfg)
        }
        other => Err(crate::error::Error::InvalidArgument(format!(
            "unknown experiment {other:?}; expected one of {EXPERIMENT_IDS:?}"
        ))),
    }
}

/// Mean differences, standardized mean differences, and balance distances
/// for a batch of uniformly drawn assignments.
pub(crate) struct DiffSample {
    /// Per-covariate mean differences, one inner vector per covariate.
    pub d: Vec<Vec<f64>>,
    /// Per-direction standardized differences, one inner vector per
    /// whitened direction.
    pub z: Vec<Vec<f64>>,
    pub m: Vec<f64>,
}

pub(crate) fn sample_diffs(ctx: &BalanceContext, draws: u64, rng: RngSpec) -> Result<DiffSample> {
    let k = ctx.n_covariates();
    let rank = ctx.rank();
    let mut generator = rng.rng();
    let mut d = vec![Vec::with_capacity(draws as usize); k];
    let mut z = vec![Vec::with_capacity(draws as usize); rank];
    let mut m = Vec::with_capacity(draws as usize);
    for _ in 0..draws {
        let w = draw_assignment(ctx.n_units(), ctx.n_treated(), &mut generator)?;
        let dv = ctx.diff_in_means(&w)?;
        let zv = ctx.standardized_diff(&dv, w.n_treated());
        for j in 0..k {
            d[j].push(dv[j]);
        }
        for j in 0..rank {
            z[j].push(zv[j]);
        }
        m.push(zv.norm_squared());
    }
    Ok(DiffSample { d, z, m })
}

pub(crate) fn select(values: &[f64], keep: &[bool]) -> Vec<f64> {
    values
        .iter()
        .zip(keep)
        .filter_map(|(&v, &k)| k.then_some(v))
        .collect()
}
