//! Mean divergence of the fitted intensity over a grid of sample sizes and
//! dictionary sizes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::TruthEvaluator;
use crate::model::DictionaryPair;
use crate::solver::{fit, fit_known_baseline};
use crate::weights::{penalty_weights, WeightConfig};

use super::simulate::SimDesign;
use super::{OracleMode, OracleOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCell {
    pub n: usize,
    pub m: usize,
    pub replicates: usize,
    pub non_converged: usize,
    pub mean_kullback: f64,
    pub se_kullback: f64,
}

/// Least-squares slope of `log(mean K̃_n)` against `log n` at fixed `M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSlope {
    pub m: usize,
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSweep {
    pub mode: OracleMode,
    pub time_bins: usize,
    pub config: WeightConfig,
    pub cells: Vec<RateCell>,
    pub slopes: Vec<RateSlope>,
}

impl RateSweep {
    pub fn cell(&self, n: usize, m: usize) -> Option<&RateCell> {
        self.cells.iter().find(|c| c.n == n && c.m == m)
    }
}

fn slope(points: &[(f64, f64)]) -> f64 {
    let k = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
    let my = points.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// `base` supplies the truth, censoring and seed; `p` takes each value of
/// `m_grid` (coordinate dictionary, `β_0` padded or truncated) and `n` each
/// value of `n_grid`.
pub fn rate_sweep(
    base: &SimDesign,
    n_grid: &[usize],
    m_grid: &[usize],
    time_bins: usize,
    cfg: &WeightConfig,
    replicates: usize,
    mode: OracleMode,
    opts: &OracleOptions,
) -> Result<RateSweep> {
    cfg.validate()?;
    opts.validate()?;
    if n_grid.is_empty() || m_grid.is_empty() || replicates < 2 || time_bins == 0 {
        return Err(Error::InvalidParameter(
            "need non-empty grids, at least two replicates and positive time_bins".into(),
        ));
    }
    let quad = opts.solver.quadrature;
    let mut cells = Vec::new();
    for &m in m_grid {
        for &n in n_grid {
            let design = base.with_dimension(m).with_n(n);
            let covs = design.design_covariates()?;
            let truth = design.true_intensity()?;
            let values: Vec<Option<f64>> = (0..replicates)
                .into_par_iter()
                .map(|r| {
                    let cohort = design.simulate_replicate(&covs, r as u64)?;
                    let dicts = DictionaryPair::coordinates_and_histogram(&cohort, time_bins)?;
                    let w = penalty_weights(&cohort, &dicts, cfg)?.scaled(opts.weight_scale);
                    let (res, ev) = match mode {
                        OracleMode::KnownBaseline => (
                            fit_known_baseline(&cohort, &dicts, &truth.baseline, &w, &opts.solver),
                            TruthEvaluator::known_baseline(&cohort, &truth, &dicts, &quad)?,
                        ),
                        OracleMode::Full => (
                            fit(&cohort, &dicts, &w, &opts.solver),
                            TruthEvaluator::new(&cohort, &truth, &dicts, &quad)?,
                        ),
                    };
                    match res {
                        Ok(f) if f.converged => Ok(Some(ev.kullback(&f.coeffs)?)),
                        _ => Ok(None),
                    }
                })
                .collect::<Result<_>>()?;
            let ok: Vec<f64> = values.iter().flatten().copied().collect();
            let k = ok.len() as f64;
            let mean = ok.iter().sum::<f64>() / k;
            let var = ok.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
            cells.push(RateCell {
                n,
                m,
                replicates,
                non_converged: replicates - ok.len(),
                mean_kullback: mean,
                se_kullback: (var / k).sqrt(),
            });
        }
    }
    let slopes = m_grid
        .iter()
        .map(|&m| {
            let pts: Vec<(f64, f64)> = cells
                .iter()
                .filter(|c| c.m == m)
                .map(|c| ((c.n as f64).ln(), c.mean_kullback.ln()))
                .collect();
            RateSlope {
                m,
                slope: if pts.len() >= 2 { slope(&pts) } else { f64::NAN },
            }
        })
        .collect();
    Ok(RateSweep {
        mode,
        time_bins,
        config: *cfg,
        cells,
        slopes,
    })
}
