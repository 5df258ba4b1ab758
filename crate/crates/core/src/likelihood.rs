//! The total empirical log-likelihood `C_n`, its gradient, and the
//! diagnostics that need the true intensity: the empirical Kullback
//! divergence, the weighted empirical norm, martingale statistics, and the
//! self-concordance sandwich.
//!
//! Every time integral runs over a [`TimeGrid`] whose cells never straddle a
//! discontinuity of the time dictionary (or of the true baseline), so the
//! exact rule is one node per piece and the midpoint rule refines each piece.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Coefficients, Cohort, DictionaryPair, TrueIntensity};
use crate::weights::phi;

/// Linear predictors above this magnitude are reported instead of overflowing.
pub const OVERFLOW_GUARD: f64 = 500.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureScheme {
    ExactPiecewiseConstant,
    CompositeMidpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureRule {
    pub scheme: QuadratureScheme,
    /// Midpoint cells per unit of time; ignored by the exact scheme.
    pub grid_points_per_unit: usize,
}

impl Default for QuadratureRule {
    fn default() -> Self {
        Self::exact()
    }
}

impl QuadratureRule {
    pub fn exact() -> Self {
        Self {
            scheme: QuadratureScheme::ExactPiecewiseConstant,
            grid_points_per_unit: 64,
        }
    }

    pub fn midpoint(grid_points_per_unit: usize) -> Result<Self> {
        let rule = Self {
            scheme: QuadratureScheme::CompositeMidpoint,
            grid_points_per_unit,
        };
        rule.validate()?;
        Ok(rule)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scheme == QuadratureScheme::CompositeMidpoint && self.grid_points_per_unit < 64 {
            return Err(Error::InvalidParameter(format!(
                "midpoint rule needs at least 64 points per unit, got {}",
                self.grid_points_per_unit
            )));
        }
        Ok(())
    }
}

/// Partition of `[0, τ]` into integration cells.
#[derive(Debug, Clone)]
pub struct TimeGrid {
    tau: f64,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl TimeGrid {
    /// Cells never cross a breakpoint; the midpoint rule subdivides each piece.
    pub fn new(tau: f64, breakpoints: &[f64], quad: &QuadratureRule) -> Result<Self> {
        quad.validate()?;
        let mut pts: Vec<f64> = breakpoints
            .iter()
            .copied()
            .filter(|&t| t > 0.0 && t < tau)
            .collect();
        pts.push(0.0);
        pts.push(tau);
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        for w in pts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let pieces = match quad.scheme {
                QuadratureScheme::ExactPiecewiseConstant => 1,
                QuadratureScheme::CompositeMidpoint => {
                    ((b - a) * quad.grid_points_per_unit as f64).ceil().max(1.0) as usize
                }
            };
            let h = (b - a) / pieces as f64;
            for k in 0..pieces {
                lo.push(a + k as f64 * h);
                hi.push(if k + 1 == pieces { b } else { a + (k + 1) as f64 * h });
            }
        }
        Ok(Self { tau, lo, hi })
    }

    pub fn len(&self) -> usize {
        self.lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.is_empty()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn lo(&self, c: usize) -> f64 {
        self.lo[c]
    }

    pub fn hi(&self, c: usize) -> f64 {
        self.hi[c]
    }

    pub fn mid(&self, c: usize) -> f64 {
        0.5 * (self.lo[c] + self.hi[c])
    }

    pub fn width(&self, c: usize) -> f64 {
        self.hi[c] - self.lo[c]
    }

    /// Complete cells inside `[0, end]`, and the partial cell `(midpoint, width)` if any.
    pub fn coverage(&self, end: f64) -> (usize, Option<(f64, f64)>) {
        let full = self.hi.partition_point(|&h| h <= end);
        if full < self.len() && end > self.lo[full] {
            let a = self.lo[full];
            (full, Some((0.5 * (a + end), end - a)))
        } else {
            (full, None)
        }
    }
}

fn check_scheme(dicts: &DictionaryPair, truth: Option<&TrueIntensity>, quad: &QuadratureRule) -> Result<()> {
    if quad.scheme == QuadratureScheme::ExactPiecewiseConstant {
        if !dicts.time.is_piecewise_constant() {
            return Err(Error::Quadrature(
                "the exact rule needs a piecewise-constant time dictionary".into(),
            ));
        }
        if let Some(t) = truth {
            if !t.baseline.is_piecewise_constant() {
                return Err(Error::Quadrature(
                    "the exact rule needs a piecewise-constant baseline hazard".into(),
                ));
            }
        }
    }
    Ok(())
}

/// Precomputed cohort × dictionary quantities for fast evaluation of `C_n`.
///
/// An optional fixed log-baseline offset `o(t)` is added to the time part; it
/// carries a known baseline or a frozen `γ`.
#[derive(Debug, Clone)]
pub struct Design {
    n: usize,
    m: usize,
    nt: usize,
    grid: TimeGrid,
    x: Vec<f64>,
    theta_cells: Vec<f64>,
    full_cells: Vec<usize>,
    tail_width: Vec<f64>,
    tail_mid: Vec<f64>,
    tail_theta: Vec<f64>,
    jump_count: Vec<f64>,
    x_jump_mean: Vec<f64>,
    theta_jump_mean: Vec<f64>,
    offset_cells: Vec<f64>,
    offset_tail: Vec<f64>,
    offset_jump_mean: f64,
}

impl Design {
    pub fn new(cohort: &Cohort, dicts: &DictionaryPair, quad: &QuadratureRule) -> Result<Self> {
        Self::with_breakpoints(cohort, dicts, quad, &[])
    }

    /// Adds extra grid breakpoints, e.g. the discontinuities of a true baseline.
    pub fn with_breakpoints(
        cohort: &Cohort,
        dicts: &DictionaryPair,
        quad: &QuadratureRule,
        extra: &[f64],
    ) -> Result<Self> {
        check_scheme(dicts, None, quad)?;
        let tau = dicts.time.tau();
        if (tau - cohort.horizon()).abs() > 1e-12 * tau.max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "time dictionary horizon {tau} differs from the cohort horizon {}",
                cohort.horizon()
            )));
        }
        let mut bps = dicts.time.breakpoints();
        bps.extend_from_slice(extra);
        let grid = TimeGrid::new(tau, &bps, quad)?;
        let n = cohort.len();
        let m = dicts.covariate.len();
        let nt = dicts.time.len();
        let x = dicts.covariate.design_matrix(cohort);
        if let Some(v) = x.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("covariate dictionary value {v}")));
        }
        let theta_at = |t: f64, out: &mut Vec<f64>| {
            for k in 0..nt {
                out.push(dicts.time.eval(k, t));
            }
        };
        let mut theta_cells = Vec::with_capacity(grid.len() * nt);
        for c in 0..grid.len() {
            theta_at(grid.mid(c), &mut theta_cells);
        }
        let mut full_cells = Vec::with_capacity(n);
        let mut tail_width = Vec::with_capacity(n);
        let mut tail_mid = Vec::with_capacity(n);
        let mut tail_theta = Vec::with_capacity(n * nt);
        let mut jump_count = Vec::with_capacity(n);
        let mut x_jump_mean = vec![0.0; m];
        let mut theta_jump_mean = vec![0.0; nt];
        for (i, obs) in cohort.observations().iter().enumerate() {
            let (full, tail) = grid.coverage(obs.at_risk_end);
            full_cells.push(full);
            let (mid, w) = tail.unwrap_or((0.0, 0.0));
            tail_mid.push(mid);
            tail_width.push(w);
            theta_at(mid, &mut tail_theta);
            let count = obs.jump_count() as f64;
            jump_count.push(count);
            for j in 0..m {
                x_jump_mean[j] += x[i * m + j] * count;
            }
            for &s in &obs.jump_times {
                for (k, acc) in theta_jump_mean.iter_mut().enumerate() {
                    *acc += dicts.time.eval(k, s);
                }
            }
        }
        let inv_n = 1.0 / n as f64;
        x_jump_mean.iter_mut().for_each(|v| *v *= inv_n);
        theta_jump_mean.iter_mut().for_each(|v| *v *= inv_n);
        let cells = grid.len();
        Ok(Self {
            n,
            m,
            nt,
            grid,
            x,
            theta_cells,
            full_cells,
            tail_width,
            tail_mid,
            tail_theta,
            jump_count,
            x_jump_mean,
            theta_jump_mean,
            offset_cells: vec![0.0; cells],
            offset_tail: vec![0.0; n],
            offset_jump_mean: 0.0,
        })
    }

    /// Install a fixed log-baseline offset `o(t)`.
    pub fn set_offset(&mut self, cohort: &Cohort, offset: impl Fn(f64) -> f64) -> Result<()> {
        self.offset_cells = (0..self.grid.len()).map(|c| offset(self.grid.mid(c))).collect();
        self.offset_tail = (0..self.n)
            .map(|i| if self.tail_width[i] > 0.0 { offset(self.tail_mid[i]) } else { 0.0 })
            .collect();
        let total: f64 = cohort
            .observations()
            .iter()
            .flat_map(|o| o.jump_times.iter())
            .map(|&s| offset(s))
            .sum();
        self.offset_jump_mean = total / self.n as f64;
        let all = self
            .offset_cells
            .iter()
            .chain(&self.offset_tail)
            .chain(std::iter::once(&self.offset_jump_mean));
        if let Some(v) = all.into_iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("log-baseline offset {v}")));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn covariate_dim(&self) -> usize {
        self.m
    }

    pub fn time_dim(&self) -> usize {
        self.nt
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// Row-major `n × M` matrix of `f_j(Z_i)`.
    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn jump_counts(&self) -> &[f64] {
        &self.jump_count
    }

    fn subject_predictors(&self, beta: &[f64]) -> Result<Vec<f64>> {
        let m = self.m;
        (0..self.n)
            .map(|i| {
                let row = &self.x[i * m..(i + 1) * m];
                let f: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
                guard(f)
            })
            .collect()
    }

    fn time_predictors(&self, gamma: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let nt = self.nt;
        let cells = (0..self.grid.len())
            .map(|c| {
                let th = &self.theta_cells[c * nt..(c + 1) * nt];
                let g = self.offset_cells[c] + th.iter().zip(gamma).map(|(a, b)| a * b).sum::<f64>();
                guard(g)
            })
            .collect::<Result<Vec<_>>>()?;
        let tails = (0..self.n)
            .map(|i| {
                if self.tail_width[i] == 0.0 {
                    return Ok(0.0);
                }
                let th = &self.tail_theta[i * nt..(i + 1) * nt];
                guard(self.offset_tail[i] + th.iter().zip(gamma).map(|(a, b)| a * b).sum::<f64>())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((cells, tails))
    }

    fn check(&self, beta: &[f64], gamma: &[f64]) -> Result<()> {
        if beta.len() != self.m {
            return Err(Error::DimensionMismatch {
                what: "beta",
                expected: self.m,
                got: beta.len(),
            });
        }
        if gamma.len() != self.nt {
            return Err(Error::DimensionMismatch {
                what: "gamma",
                expected: self.nt,
                got: gamma.len(),
            });
        }
        if beta.iter().chain(gamma).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("coefficients".into()));
        }
        Ok(())
    }

    /// `C_n` and, when requested, its gradient `[∂β; ∂γ]`.
    pub fn evaluate(&self, beta: &[f64], gamma: &[f64], want_grad: bool) -> Result<(f64, Option<Vec<f64>>)> {
        self.check(beta, gamma)?;
        let (n, m, nt) = (self.n, self.m, self.nt);
        let inv_n = 1.0 / n as f64;
        let f = self.subject_predictors(beta)?;
        let (g_cells, g_tail) = self.time_predictors(gamma)?;
        let cells = self.grid.len();
        let e_cells: Vec<f64> = (0..cells).map(|c| g_cells[c].exp() * self.grid.width(c)).collect();
        let mut prefix = vec![0.0; cells + 1];
        for c in 0..cells {
            prefix[c + 1] = prefix[c] + e_cells[c];
        }
        let mut jump_term = self.offset_jump_mean;
        jump_term += gamma.iter().zip(&self.theta_jump_mean).map(|(a, b)| a * b).sum::<f64>();
        let mut compensator = 0.0;
        let mut ef = Vec::with_capacity(n);
        let mut e_tail = Vec::with_capacity(n);
        let mut integral = Vec::with_capacity(n);
        for i in 0..n {
            jump_term += inv_n * self.jump_count[i] * f[i];
            let et = if self.tail_width[i] > 0.0 {
                g_tail[i].exp() * self.tail_width[i]
            } else {
                0.0
            };
            let e = f[i].exp();
            let int = prefix[self.full_cells[i]] + et;
            compensator += e * int;
            ef.push(e);
            e_tail.push(et);
            integral.push(int);
        }
        let value = -jump_term + inv_n * compensator;
        if !value.is_finite() {
            return Err(Error::NonFinite("negative log-likelihood".into()));
        }
        if !want_grad {
            return Ok((value, None));
        }
        let mut grad = vec![0.0; m + nt];
        for j in 0..m {
            grad[j] = -self.x_jump_mean[j];
        }
        for i in 0..n {
            let w = inv_n * ef[i] * integral[i];
            let row = &self.x[i * m..(i + 1) * m];
            for j in 0..m {
                grad[j] += w * row[j];
            }
        }
        if nt > 0 {
            // survivors[c] = Σ e^{f_i} over subjects whose complete cells include c
            let mut bucket = vec![0.0; cells + 1];
            for i in 0..n {
                bucket[self.full_cells[i]] += ef[i];
            }
            let mut survivors = vec![0.0; cells];
            let mut acc = 0.0;
            for c in (0..cells).rev() {
                acc += bucket[c + 1];
                survivors[c] = acc;
            }
            let g = &mut grad[m..];
            for (k, gk) in g.iter_mut().enumerate() {
                *gk = -self.theta_jump_mean[k];
            }
            for c in 0..cells {
                let w = inv_n * e_cells[c] * survivors[c];
                if w == 0.0 {
                    continue;
                }
                let th = &self.theta_cells[c * nt..(c + 1) * nt];
                for k in 0..nt {
                    g[k] += w * th[k];
                }
            }
            for i in 0..n {
                if e_tail[i] == 0.0 {
                    continue;
                }
                let w = inv_n * ef[i] * e_tail[i];
                let th = &self.tail_theta[i * nt..(i + 1) * nt];
                for k in 0..nt {
                    g[k] += w * th[k];
                }
            }
        }
        Ok((value, Some(grad)))
    }
}

fn guard(v: f64) -> Result<f64> {
    if !v.is_finite() {
        return Err(Error::NonFinite(format!("linear predictor {v}")));
    }
    if v.abs() > OVERFLOW_GUARD {
        return Err(Error::Overflow {
            value: v,
            limit: OVERFLOW_GUARD,
        });
    }
    Ok(v)
}

/// `C_n(λ_{β,γ})`.
pub fn neg_log_likelihood(
    cohort: &Cohort,
    dicts: &DictionaryPair,
    coeffs: &Coefficients,
    quad: &QuadratureRule,
) -> Result<f64> {
    coeffs.check_dims(dicts)?;
    let design = Design::new(cohort, dicts, quad)?;
    Ok(design.evaluate(&coeffs.beta, &coeffs.gamma, false)?.0)
}

/// Gradient of `C_n` as `[∂β; ∂γ]`.
pub fn grad_neg_log_likelihood(
    cohort: &Cohort,
    dicts: &DictionaryPair,
    coeffs: &Coefficients,
    quad: &QuadratureRule,
) -> Result<Vec<f64>> {
    coeffs.check_dims(dicts)?;
    let design = Design::new(cohort, dicts, quad)?;
    Ok(design
        .evaluate(&coeffs.beta, &coeffs.gamma, true)?
        .1
        .expect("gradient requested"))
}

/// Diagnostics against a known true intensity, precomputed once per cohort.
#[derive(Debug, Clone)]
pub struct TruthEvaluator {
    design: Design,
    log_alpha_cells: Vec<f64>,
    log_alpha_tail: Vec<f64>,
    f0: Vec<f64>,
    jumps_theta: Vec<Vec<f64>>,
    known_baseline: bool,
}

impl TruthEvaluator {
    pub fn new(
        cohort: &Cohort,
        truth: &TrueIntensity,
        dicts: &DictionaryPair,
        quad: &QuadratureRule,
    ) -> Result<Self> {
        check_scheme(dicts, Some(truth), quad)?;
        let tau = cohort.horizon();
        let design = Design::with_breakpoints(cohort, dicts, quad, &truth.baseline.breakpoints(tau))?;
        let grid = design.grid();
        let log_alpha_cells: Vec<f64> = (0..grid.len())
            .map(|c| truth.baseline.log_rate(grid.mid(c)))
            .collect();
        let log_alpha_tail: Vec<f64> = (0..design.n)
            .map(|i| {
                if design.tail_width[i] > 0.0 {
                    truth.baseline.log_rate(design.tail_mid[i])
                } else {
                    0.0
                }
            })
            .collect();
        if log_alpha_cells.iter().chain(&log_alpha_tail).any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::NonFinite("true baseline on the grid".into()));
        }
        let f0: Vec<f64> = cohort
            .observations()
            .iter()
            .map(|o| truth.relative_risk.eval(&o.covariates))
            .collect();
        if f0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("true relative risk".into()));
        }
        let jumps_theta = cohort
            .observations()
            .iter()
            .map(|o| {
                (0..dicts.time.len())
                    .map(|k| o.jump_times.iter().map(|&s| dicts.time.eval(k, s)).sum())
                    .collect()
            })
            .collect();
        Ok(Self {
            design,
            log_alpha_cells,
            log_alpha_tail,
            f0,
            jumps_theta,
            known_baseline: false,
        })
    }

    /// Evaluator for candidates `α_0(t) e^{f_β(Z)}`: the true baseline is
    /// installed as an offset and an empty `γ` reads as zero.
    pub fn known_baseline(
        cohort: &Cohort,
        truth: &TrueIntensity,
        dicts: &DictionaryPair,
        quad: &QuadratureRule,
    ) -> Result<Self> {
        let mut ev = Self::new(cohort, truth, dicts, quad)?;
        ev.design.set_offset(cohort, |t| truth.baseline.log_rate(t))?;
        ev.known_baseline = true;
        Ok(ev)
    }

    pub fn is_known_baseline(&self) -> bool {
        self.known_baseline
    }

    fn gamma_of<'a>(&self, coeffs: &'a Coefficients) -> std::borrow::Cow<'a, [f64]> {
        if self.known_baseline && coeffs.gamma.is_empty() {
            std::borrow::Cow::Owned(vec![0.0; self.design.nt])
        } else {
            std::borrow::Cow::Borrowed(&coeffs.gamma)
        }
    }

    pub fn design(&self) -> &Design {
        &self.design
    }

    /// Sum over subjects of `∫ F(Δ(t), λ_0(t, Z_i)) Y_i dt`, divided by `n`,
    /// where `Δ = log λ_{β,γ} − log λ_0`.
    fn integrate(&self, coeffs: &Coefficients, integrand: impl Fn(f64, f64) -> f64) -> Result<f64> {
        let d = &self.design;
        let gamma = self.gamma_of(coeffs);
        d.check(&coeffs.beta, &gamma)?;
        let f = d.subject_predictors(&coeffs.beta)?;
        let (g_cells, g_tail) = d.time_predictors(&gamma)?;
        let mut total = 0.0;
        for i in 0..d.n {
            let b = f[i] - self.f0[i];
            let mut acc = 0.0;
            for c in 0..d.full_cells[i] {
                let log_l0 = self.log_alpha_cells[c] + self.f0[i];
                let delta = g_cells[c] - self.log_alpha_cells[c] + b;
                acc += d.grid.width(c) * integrand(delta, log_l0.exp());
            }
            if d.tail_width[i] > 0.0 {
                let log_l0 = self.log_alpha_tail[i] + self.f0[i];
                let delta = g_tail[i] - self.log_alpha_tail[i] + b;
                acc += d.tail_width[i] * integrand(delta, log_l0.exp());
            }
            total += acc;
        }
        Ok(total / d.n as f64)
    }

    /// `K̃_n(λ_0, λ_{β,γ})`; the integrand `λ_0 Φ(Δ)` is non-negative pointwise.
    pub fn kullback(&self, coeffs: &Coefficients) -> Result<f64> {
        self.integrate(coeffs, |delta, l0| l0 * phi(delta))
    }

    /// `‖log λ_{β,γ} − log λ_0‖²_{n,Λ}`.
    pub fn log_ratio_norm_sq(&self, coeffs: &Coefficients) -> Result<f64> {
        self.integrate(coeffs, |delta, l0| l0 * delta * delta)
    }

    /// `‖log λ_{β,γ} − log λ_0‖_{n,∞}` over subjects and all grid nodes in `[0, τ]`.
    pub fn sup_log_ratio(&self, coeffs: &Coefficients) -> Result<f64> {
        let d = &self.design;
        let gamma = self.gamma_of(coeffs);
        d.check(&coeffs.beta, &gamma)?;
        let f = d.subject_predictors(&coeffs.beta)?;
        let (g_cells, g_tail) = d.time_predictors(&gamma)?;
        let b: Vec<f64> = f.iter().zip(&self.f0).map(|(a, b)| a - b).collect();
        let (b_min, b_max) = b
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let (a_min, a_max) = g_cells
            .iter()
            .zip(&self.log_alpha_cells)
            .map(|(g, la)| g - la)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        let mut sup = (a_max + b_max).abs().max((a_min + b_min).abs());
        for i in 0..d.n {
            if d.tail_width[i] > 0.0 {
                sup = sup.max((g_tail[i] - self.log_alpha_tail[i] + b[i]).abs());
            }
        }
        Ok(sup)
    }

    /// `Λ_i(τ) = ∫ λ_0(t, Z_i) Y_i(t) dt` per subject.
    pub fn compensators(&self) -> Vec<f64> {
        let d = &self.design;
        (0..d.n)
            .map(|i| {
                let mut acc = 0.0;
                for c in 0..d.full_cells[i] {
                    acc += d.grid.width(c) * self.log_alpha_cells[c].exp();
                }
                if d.tail_width[i] > 0.0 {
                    acc += d.tail_width[i] * self.log_alpha_tail[i].exp();
                }
                acc * self.f0[i].exp()
            })
            .collect()
    }

    /// `(1/n) Σ_i ∫ θ_k θ_l λ_0 Y_i dt` and `(1/n) Σ_i f_j(Z_i) ∫ θ_k λ_0 Y_i dt`.
    ///
    /// Returns `(compensators, per-subject ∫ θ_k λ_0 Y_i dt, γ-γ block)`.
    pub(crate) fn time_moments(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let d = &self.design;
        let nt = d.nt;
        let mut theta_int = vec![0.0; d.n * nt];
        let mut block = vec![0.0; nt * nt];
        let inv_n = 1.0 / d.n as f64;
        for i in 0..d.n {
            let scale = self.f0[i].exp();
            let mut add = |w: f64, th: &[f64], row: &mut [f64]| {
                for k in 0..nt {
                    row[k] += w * th[k];
                    for l in 0..nt {
                        block[k * nt + l] += inv_n * w * th[k] * th[l];
                    }
                }
            };
            let row = &mut theta_int[i * nt..(i + 1) * nt];
            for c in 0..d.full_cells[i] {
                let w = d.grid.width(c) * self.log_alpha_cells[c].exp() * scale;
                add(w, &d.theta_cells[c * nt..(c + 1) * nt], row);
            }
            if d.tail_width[i] > 0.0 {
                let w = d.tail_width[i] * self.log_alpha_tail[i].exp() * scale;
                add(w, &d.tail_theta[i * nt..(i + 1) * nt], row);
            }
        }
        (self.compensators(), theta_int, block)
    }

    /// `(η, ν)`: `η_j = (1/n) Σ_i f_j(Z_i)[N_i(τ) − Λ_i(τ)]`,
    /// `ν_k = (1/n) Σ_i [Σ_s θ_k(s) − ∫ θ_k λ_0 Y_i dt]`.
    pub fn martingale_statistics(&self) -> (Vec<f64>, Vec<f64>) {
        let d = &self.design;
        let (m, nt) = (d.m, d.nt);
        let inv_n = 1.0 / d.n as f64;
        let (comp, theta_int, _) = self.time_moments();
        let mut eta = vec![0.0; m];
        let mut nu = vec![0.0; nt];
        for i in 0..d.n {
            let resid = d.jump_count[i] - comp[i];
            for j in 0..m {
                eta[j] += inv_n * d.x[i * m + j] * resid;
            }
            for k in 0..nt {
                nu[k] += inv_n * (self.jumps_theta[i][k] - theta_int[i * nt + k]);
            }
        }
        (eta, nu)
    }

    pub fn sandwich(&self, coeffs: &Coefficients) -> Result<SandwichCheck> {
        let radius = self.sup_log_ratio(coeffs)?;
        let norm_sq = self.log_ratio_norm_sq(coeffs)?;
        let kl = self.kullback(coeffs)?;
        let (lo, hi) = sandwich_ratios(radius);
        let lhs = lo * norm_sq;
        let rhs = hi * norm_sq;
        let slack = 1e-10 * (1.0 + rhs.abs());
        Ok(SandwichCheck {
            lhs,
            kl,
            rhs,
            radius_used: radius,
            holds: lhs <= kl + slack && kl <= rhs + slack,
        })
    }
}

/// `φ(t) = e^{−t} + t − 1`.
pub fn phi_self_concordant(t: f64) -> f64 {
    phi(-t)
}

/// `(φ(ρ)/ρ², φ(−ρ)/ρ²)`, with the common limit `1/2` at `ρ = 0`.
pub fn sandwich_ratios(radius: f64) -> (f64, f64) {
    if radius < 1e-6 {
        // φ(t)/t² = 1/2 − t/6 + t²/24 − ...
        let r = radius;
        (0.5 - r / 6.0 + r * r / 24.0, 0.5 + r / 6.0 + r * r / 24.0)
    } else {
        let r2 = radius * radius;
        (phi_self_concordant(radius) / r2, phi_self_concordant(-radius) / r2)
    }
}

/// `ξ = φ(2)/4`.
pub fn xi() -> f64 {
    phi_self_concordant(2.0) / 4.0
}

/// `ξ' = φ(−2)/4`.
pub fn xi_prime() -> f64 {
    phi_self_concordant(-2.0) / 4.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SandwichConstants {
    pub radius: f64,
    pub mu_prime: f64,
    pub mu_double_prime: f64,
}

impl SandwichConstants {
    pub fn new(radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sandwich radius must be positive, got {radius}"
            )));
        }
        let (mu_prime, mu_double_prime) = sandwich_ratios(radius);
        Ok(Self {
            radius,
            mu_prime,
            mu_double_prime,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SandwichCheck {
    pub lhs: f64,
    pub kl: f64,
    pub rhs: f64,
    pub radius_used: f64,
    pub holds: bool,
}

/// `K̃_n(λ_0, λ_{β,γ})`.
pub fn empirical_kullback(
    cohort: &Cohort,
    truth: &TrueIntensity,
    dicts: &DictionaryPair,
    coeffs: &Coefficients,
    quad: &QuadratureRule,
) -> Result<f64> {
    TruthEvaluator::new(cohort, truth, dicts, quad)?.kullback(coeffs)
}

/// `‖h‖_{n,Λ}`; `h` is sampled at the grid nodes, so it should be piecewise
/// constant on the grid under the exact rule.
pub fn weighted_empirical_norm(
    cohort: &Cohort,
    truth: &TrueIntensity,
    h: impl Fn(f64, &[f64]) -> f64,
    quad: &QuadratureRule,
) -> Result<f64> {
    if quad.scheme == QuadratureScheme::ExactPiecewiseConstant && !truth.baseline.is_piecewise_constant() {
        return Err(Error::Quadrature(
            "the exact rule needs a piecewise-constant baseline hazard".into(),
        ));
    }
    let tau = cohort.horizon();
    let grid = TimeGrid::new(tau, &truth.baseline.breakpoints(tau), quad)?;
    let mut total = 0.0;
    for obs in cohort.observations() {
        let z = &obs.covariates;
        let (full, tail) = grid.coverage(obs.at_risk_end);
        let node = |t: f64, w: f64| {
            let v = h(t, z);
            w * v * v * truth.intensity(t, z)
        };
        let mut acc = 0.0;
        for c in 0..full {
            acc += node(grid.mid(c), grid.width(c));
        }
        if let Some((mid, w)) = tail {
            acc += node(mid, w);
        }
        total += acc;
    }
    let value = total / cohort.len() as f64;
    if !value.is_finite() {
        return Err(Error::NonFinite("weighted empirical norm".into()));
    }
    Ok(value.sqrt())
}

/// `(η, ν)` martingale statistics at `τ`.
pub fn martingale_statistics(
    cohort: &Cohort,
    truth: &TrueIntensity,
    dicts: &DictionaryPair,
    quad: &QuadratureRule,
) -> Result<(Vec<f64>, Vec<f64>)> {
    Ok(TruthEvaluator::new(cohort, truth, dicts, quad)?.martingale_statistics())
}

/// Two-sided comparison of `K̃_n` with the weighted norm of the log-ratio.
pub fn sandwich_check(
    cohort: &Cohort,
    truth: &TrueIntensity,
    dicts: &DictionaryPair,
    coeffs: &Coefficients,
    quad: &QuadratureRule,
) -> Result<SandwichCheck> {
    TruthEvaluator::new(cohort, truth, dicts, quad)?.sandwich(coeffs)
}
