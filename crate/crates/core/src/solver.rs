//! Weighted-ℓ1 penalized minimization of `C_n` by monotone accelerated
//! proximal gradient with backtracking.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{Design, QuadratureRule};
use crate::model::{BaselineHazard, Coefficients, Cohort, DictionaryPair};
use crate::weights::PenaltyWeights;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    pub max_iters: usize,
    pub kkt_tol: f64,
    pub initial_step: f64,
    pub backtrack_factor: f64,
    pub armijo_constant: f64,
    pub acceleration: bool,
    /// Multiplies every weight.
    pub global_scale: f64,
    /// Freeze `γ` at these values and optimize `β` only.
    pub fix_gamma: Option<Vec<f64>>,
    pub quadrature: QuadratureRule,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            kkt_tol: 1e-7,
            initial_step: 1.0,
            backtrack_factor: 0.5,
            armijo_constant: 1e-4,
            acceleration: true,
            global_scale: 1.0,
            fix_gamma: None,
            quadrature: QuadratureRule::exact(),
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.max_iters == 0 {
            return bad("max_iters must be positive".into());
        }
        if !(self.kkt_tol > 0.0 && self.initial_step > 0.0 && self.armijo_constant > 0.0) {
            return bad("tolerances and the initial step must be positive".into());
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return bad(format!("backtrack_factor must lie in (0, 1), got {}", self.backtrack_factor));
        }
        if !(self.global_scale >= 0.0 && self.global_scale.is_finite()) {
            return bad(format!("global_scale must be non-negative, got {}", self.global_scale));
        }
        self.quadrature.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub coeffs: Coefficients,
    /// Smooth part plus the penalty on the optimized coordinates.
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub active_beta: Vec<usize>,
    pub active_gamma: Vec<usize>,
    /// Effective weights after the global scale.
    pub omega: Vec<f64>,
    pub delta: Vec<f64>,
}

/// A convex differentiable function of a flat parameter vector.
pub trait SmoothObjective {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64], want_grad: bool) -> Result<(f64, Option<Vec<f64>>)>;
}

/// `C_n` in `[β; γ]`.
pub struct FullObjective<'a> {
    pub design: &'a Design,
}

impl SmoothObjective for FullObjective<'_> {
    fn dim(&self) -> usize {
        self.design.covariate_dim() + self.design.time_dim()
    }

    fn eval(&self, x: &[f64], want_grad: bool) -> Result<(f64, Option<Vec<f64>>)> {
        let m = self.design.covariate_dim();
        self.design.evaluate(&x[..m], &x[m..], want_grad)
    }
}

/// `C_n` in `β` with `γ` held fixed.
pub struct BetaObjective<'a> {
    pub design: &'a Design,
    pub gamma: Vec<f64>,
}

impl SmoothObjective for BetaObjective<'_> {
    fn dim(&self) -> usize {
        self.design.covariate_dim()
    }

    fn eval(&self, x: &[f64], want_grad: bool) -> Result<(f64, Option<Vec<f64>>)> {
        let (v, g) = self.design.evaluate(x, &self.gamma, want_grad)?;
        let m = self.design.covariate_dim();
        Ok((v, g.map(|mut g| {
            g.truncate(m);
            g
        })))
    }
}

/// `sign(z) max(|z| − t, 0)`.
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

fn penalty(x: &[f64], w: &[f64]) -> f64 {
    x.iter().zip(w).map(|(a, b)| a.abs() * b).sum()
}

/// Largest subgradient-optimality violation over coordinates.
pub fn kkt_residual(x: &[f64], grad: &[f64], w: &[f64]) -> f64 {
    x.iter()
        .zip(grad)
        .zip(w)
        .map(|((&xj, &gj), &wj)| {
            if xj == 0.0 {
                (gj.abs() - wj).max(0.0)
            } else {
                (gj + wj * xj.signum()).abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Output of [`minimize`].
#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Minimize `f(x) + Σ w_j |x_j|` from `x0`.
pub fn minimize(f: &dyn SmoothObjective, w: &[f64], x0: Vec<f64>, opts: &SolverOptions) -> Result<Minimum> {
    opts.validate()?;
    let d = f.dim();
    if w.len() != d || x0.len() != d {
        return Err(Error::DimensionMismatch {
            what: "solver dimension",
            expected: d,
            got: w.len().min(x0.len()),
        });
    }
    let mut x = x0;
    let (fx0, gx0) = f.eval(&x, true)?;
    let mut fx = fx0;
    let mut gx = gx0.expect("gradient requested");
    let mut big_f = fx + penalty(&x, w);
    let mut kkt = kkt_residual(&x, &gx, w);
    if kkt <= opts.kkt_tol {
        return Ok(Minimum {
            x,
            objective: big_f,
            kkt_residual: kkt,
            iterations: 0,
            converged: true,
        });
    }
    let mut lip = 1.0 / opts.initial_step;
    let mut y = x.clone();
    let mut fy = fx;
    let mut gy = gx.clone();
    let mut t = 1.0_f64;
    let mut iterations = 0;
    let mut stalls = 0;
    while iterations < opts.max_iters {
        iterations += 1;
        let at_x = y == x;
        lip *= opts.backtrack_factor;
        // backtracking on the quadratic upper bound around y
        let (z, fz, gz) = loop {
            let z: Vec<f64> = (0..d)
                .map(|j| soft_threshold(y[j] - gy[j] / lip, w[j] / lip))
                .collect();
            let trial = match f.eval(&z, true) {
                Ok((v, g)) => Some((v, g.expect("gradient requested"))),
                Err(Error::Overflow { .. }) | Err(Error::NonFinite(_)) => None,
                Err(e) => return Err(e),
            };
            if let Some((fz, gz)) = trial {
                let lin: f64 = (0..d).map(|j| gy[j] * (z[j] - y[j])).sum();
                let dist = sq_dist(&z, &y);
                let bound = fy + lin + 0.5 * lip * dist;
                // curvature along the step, immune to cancellation in f
                let curv: f64 = (0..d).map(|j| (gz[j] - gy[j]) * (z[j] - y[j])).sum();
                if fz <= bound + 1e-14 * (1.0 + fy.abs()) && curv <= lip * dist {
                    break (z, fz, gz);
                }
            }
            lip /= opts.backtrack_factor;
            if !lip.is_finite() || lip > 1e300 {
                return Err(Error::NonFinite("step size collapsed during backtracking".into()));
            }
        };
        let big_fz = fz + penalty(&z, w);
        let step_sq = sq_dist(&z, &y);
        let decrease = big_fz <= big_f - opts.armijo_constant * lip * step_sq
            || (at_x && big_fz <= big_f + 1e-13 * (1.0 + big_f.abs()));
        if decrease {
            let moved = sq_dist(&z, &x);
            let x_prev = std::mem::replace(&mut x, z);
            fx = fz;
            gx = gz;
            big_f = big_fz;
            kkt = kkt_residual(&x, &gx, w);
            if kkt <= opts.kkt_tol {
                return Ok(Minimum {
                    x,
                    objective: big_f,
                    kkt_residual: kkt,
                    iterations,
                    converged: true,
                });
            }
            if moved == 0.0 {
                stalls += 1;
                if stalls > 50 {
                    break;
                }
            } else {
                stalls = 0;
            }
            if opts.acceleration {
                // restart when the momentum points against the last step
                let against: f64 = (0..d).map(|j| (y[j] - x[j]) * (x[j] - x_prev[j])).sum();
                if against > 0.0 {
                    t = 1.0;
                    y = x.clone();
                    fy = fx;
                    gy = gx.clone();
                    continue;
                }
                let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
                let beta = (t - 1.0) / t_next;
                t = t_next;
                let y_new: Vec<f64> = (0..d).map(|j| x[j] + beta * (x[j] - x_prev[j])).collect();
                if y_new == x {
                    y = y_new;
                    fy = fx;
                    gy = gx.clone();
                } else {
                    match f.eval(&y_new, true) {
                        Ok((v, g)) => {
                            y = y_new;
                            fy = v;
                            gy = g.expect("gradient requested");
                        }
                        Err(Error::Overflow { .. }) | Err(Error::NonFinite(_)) => {
                            t = 1.0;
                            y = x.clone();
                            fy = fx;
                            gy = gx.clone();
                        }
                        Err(e) => return Err(e),
                    }
                }
            } else {
                y = x.clone();
                fy = fx;
                gy = gx.clone();
            }
        } else {
            // keep x, drop the momentum
            t = 1.0;
            if at_x {
                stalls += 1;
                if stalls > 50 {
                    break;
                }
            }
            y = x.clone();
            fy = fx;
            gy = gx.clone();
        }
    }
    Ok(Minimum {
        x,
        objective: big_f,
        kkt_residual: kkt,
        iterations,
        converged: false,
    })
}

fn effective_weights(weights: &PenaltyWeights, dicts: &DictionaryPair, scale: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if weights.omega.len() != dicts.covariate.len() {
        return Err(Error::DimensionMismatch {
            what: "omega",
            expected: dicts.covariate.len(),
            got: weights.omega.len(),
        });
    }
    if weights.delta.len() != dicts.time.len() {
        return Err(Error::DimensionMismatch {
            what: "delta",
            expected: dicts.time.len(),
            got: weights.delta.len(),
        });
    }
    if weights.omega.iter().chain(&weights.delta).any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidParameter("weights must be finite and non-negative".into()));
    }
    let omega = weights.omega.iter().map(|w| w * scale).collect();
    let delta = weights.delta.iter().map(|w| w * scale).collect();
    Ok((omega, delta))
}

fn support(v: &[f64]) -> Vec<usize> {
    v.iter()
        .enumerate()
        .filter(|(_, &x)| x != 0.0)
        .map(|(j, _)| j)
        .collect()
}

fn fit_with_design(
    design: &Design,
    weights: &PenaltyWeights,
    dicts: &DictionaryPair,
    opts: &SolverOptions,
    init: Option<&Coefficients>,
) -> Result<FitResult> {
    opts.validate()?;
    let (omega, delta) = effective_weights(weights, dicts, opts.global_scale)?;
    let m = dicts.covariate.len();
    let nt = dicts.time.len();
    if let Some(c) = init {
        c.check_dims(dicts)?;
    }
    match &opts.fix_gamma {
        Some(gamma) => {
            if gamma.len() != nt {
                return Err(Error::DimensionMismatch {
                    what: "fixed gamma",
                    expected: nt,
                    got: gamma.len(),
                });
            }
            let obj = BetaObjective {
                design,
                gamma: gamma.clone(),
            };
            let x0 = init.map(|c| c.beta.clone()).unwrap_or_else(|| vec![0.0; m]);
            let min = minimize(&obj, &omega, x0, opts)?;
            Ok(FitResult {
                active_beta: support(&min.x),
                active_gamma: support(gamma),
                coeffs: Coefficients {
                    beta: min.x,
                    gamma: gamma.clone(),
                },
                objective: min.objective,
                kkt_residual: min.kkt_residual,
                iterations: min.iterations,
                converged: min.converged,
                omega,
                delta,
            })
        }
        None => {
            let obj = FullObjective { design };
            let w: Vec<f64> = omega.iter().chain(&delta).copied().collect();
            let x0 = init.map(|c| c.to_flat()).unwrap_or_else(|| vec![0.0; m + nt]);
            let min = minimize(&obj, &w, x0, opts)?;
            let coeffs = Coefficients::from_flat(&min.x, m);
            Ok(FitResult {
                active_beta: support(&coeffs.beta),
                active_gamma: support(&coeffs.gamma),
                coeffs,
                objective: min.objective,
                kkt_residual: min.kkt_residual,
                iterations: min.iterations,
                converged: min.converged,
                omega,
                delta,
            })
        }
    }
}

/// The weighted Lasso estimator, started at zero.
pub fn fit(cohort: &Cohort, dicts: &DictionaryPair, weights: &PenaltyWeights, opts: &SolverOptions) -> Result<FitResult> {
    let design = Design::new(cohort, dicts, &opts.quadrature)?;
    fit_with_design(&design, weights, dicts, opts, None)
}

/// Same as [`fit`] on a prebuilt design, optionally warm-started.
pub fn fit_design(
    design: &Design,
    dicts: &DictionaryPair,
    weights: &PenaltyWeights,
    opts: &SolverOptions,
    init: Option<&Coefficients>,
) -> Result<FitResult> {
    fit_with_design(design, weights, dicts, opts, init)
}

/// Design whose time part is the known `log α_0`.
pub fn known_baseline_design(
    cohort: &Cohort,
    dicts: &DictionaryPair,
    baseline: &BaselineHazard,
    quad: &QuadratureRule,
) -> Result<Design> {
    baseline.validate()?;
    if quad.scheme == crate::likelihood::QuadratureScheme::ExactPiecewiseConstant
        && !baseline.is_piecewise_constant()
    {
        return Err(Error::Quadrature(
            "the exact rule needs a piecewise-constant baseline hazard".into(),
        ));
    }
    let mut design = Design::with_breakpoints(cohort, dicts, quad, &baseline.breakpoints(cohort.horizon()))?;
    design.set_offset(cohort, |t| baseline.log_rate(t))?;
    Ok(design)
}

/// The estimator with `α_0` known: only `β` is fitted. The returned `γ` is
/// empty; the intensity is `α_0(t) exp(f_β(Z))`.
pub fn fit_known_baseline(
    cohort: &Cohort,
    dicts: &DictionaryPair,
    baseline: &BaselineHazard,
    weights: &PenaltyWeights,
    opts: &SolverOptions,
) -> Result<FitResult> {
    let design = known_baseline_design(cohort, dicts, baseline, &opts.quadrature)?;
    fit_known_baseline_design(&design, dicts, weights, opts, None)
}

/// [`fit_known_baseline`] on a design from [`known_baseline_design`].
pub fn fit_known_baseline_design(
    design: &Design,
    dicts: &DictionaryPair,
    weights: &PenaltyWeights,
    opts: &SolverOptions,
    init: Option<&[f64]>,
) -> Result<FitResult> {
    opts.validate()?;
    let (omega, _) = effective_weights(weights, dicts, opts.global_scale)?;
    let m = dicts.covariate.len();
    let obj = BetaObjective {
        design,
        gamma: vec![0.0; dicts.time.len()],
    };
    let x0 = init.map(|b| b.to_vec()).unwrap_or_else(|| vec![0.0; m]);
    if x0.len() != m {
        return Err(Error::DimensionMismatch {
            what: "beta",
            expected: m,
            got: x0.len(),
        });
    }
    let min = minimize(&obj, &omega, x0, opts)?;
    Ok(FitResult {
        active_beta: support(&min.x),
        active_gamma: Vec::new(),
        coeffs: Coefficients {
            beta: min.x,
            gamma: Vec::new(),
        },
        objective: min.objective,
        kkt_residual: min.kkt_residual,
        iterations: min.iterations,
        converged: min.converged,
        omega,
        delta: Vec::new(),
    })
}

/// Warm-started fits over descending global scales.
pub fn regularization_path(
    cohort: &Cohort,
    dicts: &DictionaryPair,
    weights: &PenaltyWeights,
    scales: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<FitResult>> {
    if scales.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::InvalidParameter("scales must be sorted in descending order".into()));
    }
    let design = Design::new(cohort, dicts, &opts.quadrature)?;
    let mut out: Vec<FitResult> = Vec::with_capacity(scales.len());
    for &scale in scales {
        let o = SolverOptions {
            global_scale: scale,
            ..opts.clone()
        };
        let init = out.last().map(|r| r.coeffs.clone());
        out.push(fit_with_design(&design, weights, dicts, &o, init.as_ref())?);
    }
    Ok(out)
}
