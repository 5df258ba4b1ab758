//! Simulation of right-censored Cox cohorts and Monte Carlo verification of
//! the concentration and oracle bounds.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gram_re::BruteForceOptions;
use crate::solver::SolverOptions;
use crate::weights::WeightConfig;

pub mod simulate;
pub mod sweep;
pub mod verify;

pub use simulate::{
    expected_compensators, expected_extended_gram, expected_gram, replicate_rng, representable_gamma,
    simulate_cohort, CovariateLaw, SimDesign,
};
pub use sweep::{rate_sweep, RateCell, RateSlope, RateSweep};
pub use verify::{verify_bernstein, verify_fast_oracle, verify_slow_oracle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Claim {
    Bernstein,
    SlowOracle,
    FastOracle,
    Selection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleMode {
    /// `α_0` known, only `β` fitted.
    KnownBaseline,
    /// `(β, γ)` fitted jointly.
    Full,
}

/// One probabilistic claim tested over replicates.
///
/// `pass` holds when the violation rate is at most `bound + 3·se`, with
/// `se = √(rate(1−rate)/evaluated)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub evaluated: usize,
    pub violations: usize,
    pub excluded: usize,
    pub rate: f64,
    pub se: f64,
    pub bound: f64,
    pub raw_bound: f64,
    /// The clamped bound is below one.
    pub informative: bool,
    pub pass: bool,
}

fn rate_and_se(violations: usize, evaluated: usize) -> (f64, f64) {
    if evaluated == 0 {
        return (0.0, 0.0);
    }
    let r = violations as f64 / evaluated as f64;
    (r, (r * (1.0 - r) / evaluated as f64).sqrt())
}

fn within(rate: f64, se: f64, bound: f64) -> bool {
    rate <= bound + 3.0 * se + 1e-12
}

impl Check {
    pub fn new(name: impl Into<String>, violations: usize, evaluated: usize, excluded: usize, raw_bound: f64) -> Self {
        let (rate, se) = rate_and_se(violations, evaluated);
        let bound = if raw_bound.is_nan() { 1.0 } else { raw_bound.clamp(0.0, 1.0) };
        Self {
            name: name.into(),
            evaluated,
            violations,
            excluded,
            rate,
            se,
            bound,
            raw_bound,
            informative: bound < 1.0,
            pass: within(rate, se, bound),
        }
    }

    /// Worst case over several statistics sharing one bound; passes only if
    /// every statistic passes on its own.
    pub fn worst(name: impl Into<String>, counts: &[usize], evaluated: usize, raw_bound: f64) -> Self {
        let worst = counts.iter().copied().max().unwrap_or(0);
        let mut check = Self::new(name, worst, evaluated, 0, raw_bound);
        check.pass = counts.iter().all(|&c| {
            let (r, se) = rate_and_se(c, evaluated);
            within(r, se, check.bound)
        });
        check
    }
}

/// Per-replicate numbers behind a report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplicateTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl ReplicateTable {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let csv_err = |e: csv::Error| Error::Csv {
            row: 0,
            reason: e.to_string(),
        };
        w.write_record(&self.columns).map_err(csv_err)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|&v| {
                if v.fract() == 0.0 && v.abs() < 1e15 {
                    format!("{}", v as i64)
                } else {
                    format!("{v:?}")
                }
            }))
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub claim: Claim,
    pub mode: Option<OracleMode>,
    pub replicates: usize,
    pub design: SimDesign,
    pub time_bins: usize,
    pub config: WeightConfig,
    pub checks: Vec<Check>,
    pub non_converged: usize,
    pub summary: BTreeMap<String, f64>,
    pub pass: bool,
    /// Where the per-replicate CSV was written, if anywhere.
    pub artifacts: Option<String>,
    #[serde(skip)]
    pub table: ReplicateTable,
}

impl VerificationReport {
    fn finish(mut self) -> Self {
        self.pass = self.checks.iter().all(|c| c.pass);
        self
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Settings shared by the oracle verifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleOptions {
    pub zeta: f64,
    /// Sparsity level; the support size of the oracle point when absent.
    pub s: Option<usize>,
    /// Multiplies the data-driven weights.
    pub weight_scale: f64,
    pub solver: SolverOptions,
    /// Search effort for the RE constant of the expected Gram matrix.
    pub expected_re: BruteForceOptions,
    /// Search effort for the per-replicate empirical RE bracket.
    pub replicate_re: BruteForceOptions,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            zeta: 3.0,
            s: None,
            weight_scale: 1.0,
            solver: SolverOptions {
                kkt_tol: 1e-8,
                ..SolverOptions::default()
            },
            expected_re: BruteForceOptions::default(),
            replicate_re: BruteForceOptions {
                starts: 2,
                iterations: 50,
                seed: 0x5eed,
            },
        }
    }
}

impl OracleOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.zeta.is_finite() && self.zeta > 0.0) {
            return Err(Error::InvalidParameter(format!("zeta must be positive, got {}", self.zeta)));
        }
        if !(self.weight_scale.is_finite() && self.weight_scale > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "weight_scale must be positive, got {}",
                self.weight_scale
            )));
        }
        if self.s == Some(0) {
            return Err(Error::InvalidParameter("s must be positive".into()));
        }
        self.solver.validate()
    }
}
