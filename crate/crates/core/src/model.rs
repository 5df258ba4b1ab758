//! Cohorts of counting-process observations, the covariate and time
//! dictionaries, and the candidate log-intensities built from them.
//!
//! A candidate intensity is `λ_{β,γ}(t, Z) = exp(Σ_k γ_k θ_k(t) + Σ_j β_j f_j(Z))`,
//! where the `f_j` come from a [`CovariateDictionary`] and the `θ_k` from a
//! [`TimeDictionary`].

use std::fmt;
use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of grid points used to approximate the sup norm of a custom time function.
pub const SUP_NORM_GRID: usize = 10_001;

/// One subject: covariates, the jump times of `N_i`, and the end of the
/// single at-risk window `[0, at_risk_end]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountingObservation {
    pub covariates: Vec<f64>,
    pub jump_times: Vec<f64>,
    pub at_risk_end: f64,
}

impl CountingObservation {
    pub fn new(covariates: Vec<f64>, jump_times: Vec<f64>, at_risk_end: f64) -> Self {
        Self {
            covariates,
            jump_times,
            at_risk_end,
        }
    }

    /// Right-censored subject observed until `time`; `event` marks a jump at `time`.
    pub fn right_censored(covariates: Vec<f64>, time: f64, event: bool) -> Self {
        let jump_times = if event { vec![time] } else { Vec::new() };
        Self::new(covariates, jump_times, time)
    }

    /// `N_i(τ)`.
    pub fn jump_count(&self) -> usize {
        self.jump_times.len()
    }

    /// Length of the at-risk window clipped to the horizon.
    pub fn at_risk_length(&self, tau: f64) -> f64 {
        self.at_risk_end.min(tau).max(0.0)
    }

    fn validate(&self, index: usize, tau: f64, p: usize) -> Result<()> {
        let bad = |reason: String| Error::InvalidObservation { index, reason };
        if self.covariates.len() != p {
            return Err(bad(format!(
                "expected {p} covariates, found {}",
                self.covariates.len()
            )));
        }
        if let Some(z) = self.covariates.iter().find(|z| !z.is_finite()) {
            return Err(bad(format!("non-finite covariate {z}")));
        }
        if !self.at_risk_end.is_finite() || self.at_risk_end < 0.0 {
            return Err(bad(format!("invalid at-risk end {}", self.at_risk_end)));
        }
        if self.at_risk_end > tau {
            return Err(bad(format!(
                "at-risk end {} exceeds the horizon {tau}",
                self.at_risk_end
            )));
        }
        let mut prev = f64::NEG_INFINITY;
        for &s in &self.jump_times {
            if !s.is_finite() || s < 0.0 {
                return Err(bad(format!("invalid jump time {s}")));
            }
            if s <= prev {
                return Err(bad("jump times must be strictly increasing".into()));
            }
            if s > self.at_risk_end {
                return Err(bad(format!(
                    "jump at {s} after the at-risk end {}",
                    self.at_risk_end
                )));
            }
            prev = s;
        }
        Ok(())
    }
}

/// `n` observations on the common horizon `[0, τ]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cohort {
    observations: Vec<CountingObservation>,
    horizon: f64,
}

impl Cohort {
    pub fn new(observations: Vec<CountingObservation>, horizon: f64) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::EmptyCohort);
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        let p = observations[0].covariates.len();
        for (i, obs) in observations.iter().enumerate() {
            obs.validate(i, horizon, p)?;
        }
        Ok(Self {
            observations,
            horizon,
        })
    }

    pub fn observations(&self) -> &[CountingObservation] {
        &self.observations
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Number of covariates per subject.
    pub fn covariate_dim(&self) -> usize {
        self.observations[0].covariates.len()
    }

    /// `N̄ = (1/n) Σ_i N_i(τ)`.
    pub fn mean_jump_count(&self) -> f64 {
        let total: usize = self.observations.iter().map(|o| o.jump_count()).sum();
        total as f64 / self.len() as f64
    }

    /// `Ȳ = (1/n) Σ_i ∫_0^τ Y_i(t) dt`.
    pub fn mean_at_risk_time(&self) -> f64 {
        let total: f64 = self
            .observations
            .iter()
            .map(|o| o.at_risk_length(self.horizon))
            .sum();
        total / self.len() as f64
    }

    /// Largest at-risk end; estimation is only identified up to this time.
    pub fn max_at_risk_end(&self) -> f64 {
        self.observations
            .iter()
            .map(|o| o.at_risk_end)
            .fold(0.0, f64::max)
    }

    /// Parse the `time,status,z1,...,zp` format. `tau` defaults to the largest time.
    pub fn read_csv<R: Read>(reader: R, tau: Option<f64>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Csv {
                row: 1,
                reason: e.to_string(),
            })?
            .clone();
        if headers.len() < 2 || &headers[0] != "time" || &headers[1] != "status" {
            return Err(Error::Csv {
                row: 1,
                reason: "header must start with `time,status`".into(),
            });
        }
        for (j, h) in headers.iter().enumerate().skip(2) {
            if h != format!("z{}", j - 1) {
                return Err(Error::Csv {
                    row: 1,
                    reason: format!("expected column `z{}`, found `{h}`", j - 1),
                });
            }
        }
        let p = headers.len() - 2;
        let mut observations = Vec::new();
        for (k, record) in rdr.records().enumerate() {
            // header is row 1
            let row = k + 2;
            let record = record.map_err(|e| Error::Csv {
                row,
                reason: e.to_string(),
            })?;
            if record.len() != p + 2 {
                return Err(Error::Csv {
                    row,
                    reason: format!("expected {} fields, found {}", p + 2, record.len()),
                });
            }
            let parse = |idx: usize| -> Result<f64> {
                let v: f64 = record[idx].parse().map_err(|_| Error::Csv {
                    row,
                    reason: format!("cannot parse `{}` in column {}", &record[idx], &headers[idx]),
                })?;
                if !v.is_finite() {
                    return Err(Error::Csv {
                        row,
                        reason: format!("non-finite value in column {}", &headers[idx]),
                    });
                }
                Ok(v)
            };
            let time = parse(0)?;
            if time < 0.0 {
                return Err(Error::Csv {
                    row,
                    reason: format!("negative time {time}"),
                });
            }
            let event = match &record[1] {
                "0" => false,
                "1" => true,
                other => {
                    return Err(Error::Csv {
                        row,
                        reason: format!("status must be 0 or 1, found `{other}`"),
                    })
                }
            };
            let covariates = (2..p + 2).map(parse).collect::<Result<Vec<_>>>()?;
            observations.push(CountingObservation::right_censored(covariates, time, event));
        }
        if observations.is_empty() {
            return Err(Error::EmptyCohort);
        }
        let max_time = observations
            .iter()
            .map(|o| o.at_risk_end)
            .fold(0.0, f64::max);
        let tau = tau.unwrap_or(max_time);
        // a subject followed past τ is at risk on the whole window
        for obs in &mut observations {
            if obs.at_risk_end > tau {
                obs.at_risk_end = tau;
                obs.jump_times.retain(|&s| s <= tau);
            }
        }
        Cohort::new(observations, tau)
    }

    /// Write the right-censored CSV format. Subjects with more than one jump cannot be encoded.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let p = self.covariate_dim();
        let mut header = vec!["time".to_string(), "status".to_string()];
        header.extend((1..=p).map(|j| format!("z{j}")));
        let to_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
        wtr.write_record(&header).map_err(to_err)?;
        for (i, obs) in self.observations.iter().enumerate() {
            let status = match obs.jump_times.as_slice() {
                [] => "0",
                [s] if *s == obs.at_risk_end => "1",
                _ => {
                    return Err(Error::InvalidObservation {
                        index: i,
                        reason: "not a right-censored record".into(),
                    })
                }
            };
            let mut row = vec![format!("{}", obs.at_risk_end), status.to_string()];
            row.extend(obs.covariates.iter().map(|z| format!("{z}")));
            wtr.write_record(&row).map_err(to_err)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

type CovariateFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type TimeFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// One element `f_j` of the covariate dictionary.
#[derive(Clone)]
pub enum CovariateFunction {
    /// `f(Z) = Z_index` (zero-based).
    Coordinate(usize),
    Custom { name: String, f: CovariateFn },
}

impl CovariateFunction {
    pub fn custom(name: impl Into<String>, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        CovariateFunction::Custom {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        match self {
            CovariateFunction::Coordinate(j) => z[*j],
            CovariateFunction::Custom { f, .. } => f(z),
        }
    }

    pub fn name(&self) -> String {
        match self {
            CovariateFunction::Coordinate(j) => format!("z{}", j + 1),
            CovariateFunction::Custom { name, .. } => name.clone(),
        }
    }
}

impl fmt::Debug for CovariateFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CovariateFunction({})", self.name())
    }
}

/// How to build a covariate dictionary.
#[derive(Debug, Clone)]
pub enum CovariateDictionarySpec {
    Coordinates { p: usize },
    Custom(Vec<CovariateFunction>),
}

/// The dictionary `F_M` together with the cohort sup norms `‖f_j‖_{n,∞}`.
///
/// Dictionaries must not contain the constant function; the baseline absorbs it.
#[derive(Debug, Clone)]
pub struct CovariateDictionary {
    functions: Vec<CovariateFunction>,
    sup_norms: Vec<f64>,
}

impl CovariateDictionary {
    pub fn build(spec: CovariateDictionarySpec, cohort: &Cohort) -> Result<Self> {
        let functions = match spec {
            CovariateDictionarySpec::Coordinates { p } => {
                if p != cohort.covariate_dim() {
                    return Err(Error::DimensionMismatch {
                        what: "coordinate dictionary size",
                        expected: cohort.covariate_dim(),
                        got: p,
                    });
                }
                (0..p).map(CovariateFunction::Coordinate).collect()
            }
            CovariateDictionarySpec::Custom(fs) => fs,
        };
        Self::from_functions(functions, cohort)
    }

    pub fn coordinates(cohort: &Cohort) -> Result<Self> {
        Self::build(
            CovariateDictionarySpec::Coordinates {
                p: cohort.covariate_dim(),
            },
            cohort,
        )
    }

    pub fn from_functions(functions: Vec<CovariateFunction>, cohort: &Cohort) -> Result<Self> {
        if cohort.is_empty() {
            return Err(Error::EmptyCohort);
        }
        let p = cohort.covariate_dim();
        for f in &functions {
            if let CovariateFunction::Coordinate(j) = f {
                if *j >= p {
                    return Err(Error::DimensionMismatch {
                        what: "coordinate index",
                        expected: p,
                        got: *j + 1,
                    });
                }
            }
        }
        let mut dict = Self {
            functions,
            sup_norms: Vec::new(),
        };
        dict.sup_norms = dict.cohort_sup_norms(cohort)?;
        Ok(dict)
    }

    /// Same functions, sup norms recomputed on another cohort.
    pub fn rebind(&self, cohort: &Cohort) -> Result<Self> {
        Self::from_functions(self.functions.clone(), cohort)
    }

    fn cohort_sup_norms(&self, cohort: &Cohort) -> Result<Vec<f64>> {
        self.functions
            .iter()
            .map(|f| {
                let mut sup = 0.0_f64;
                for obs in cohort.observations() {
                    let v = f.eval(&obs.covariates);
                    if !v.is_finite() {
                        return Err(Error::NonFinite(format!(
                            "dictionary function {} evaluated to {v}",
                            f.name()
                        )));
                    }
                    sup = sup.max(v.abs());
                }
                Ok(sup)
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn functions(&self) -> &[CovariateFunction] {
        &self.functions
    }

    pub fn sup_norms(&self) -> &[f64] {
        &self.sup_norms
    }

    pub fn eval(&self, j: usize, z: &[f64]) -> f64 {
        self.functions[j].eval(z)
    }

    /// `f_β(Z) = Σ_j β_j f_j(Z)`.
    pub fn linear_predictor(&self, beta: &[f64], z: &[f64]) -> Result<f64> {
        if beta.len() != self.len() {
            return Err(Error::DimensionMismatch {
                what: "beta",
                expected: self.len(),
                got: beta.len(),
            });
        }
        Ok(self
            .functions
            .iter()
            .zip(beta)
            .filter(|(_, &b)| b != 0.0)
            .map(|(f, &b)| b * f.eval(z))
            .sum())
    }

    /// Row-major `n × M` matrix of `f_j(Z_i)`.
    pub fn design_matrix(&self, cohort: &Cohort) -> Vec<f64> {
        let m = self.len();
        let mut x = Vec::with_capacity(cohort.len() * m);
        for obs in cohort.observations() {
            x.extend(self.functions.iter().map(|f| f.eval(&obs.covariates)));
        }
        x
    }
}

/// One element `θ_k` of the time dictionary.
#[derive(Clone)]
pub enum TimeFunction {
    /// Indicator of `[lo, hi)`, or `[lo, hi]` when `closed_right`.
    Indicator { lo: f64, hi: f64, closed_right: bool },
    Constant(f64),
    Custom { name: String, f: TimeFn },
}

impl TimeFunction {
    pub fn custom(name: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        TimeFunction::Custom {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TimeFunction::Indicator {
                lo,
                hi,
                closed_right,
            } => {
                let inside = t >= *lo && (t < *hi || (*closed_right && t <= *hi));
                if inside {
                    1.0
                } else {
                    0.0
                }
            }
            TimeFunction::Constant(c) => *c,
            TimeFunction::Custom { f, .. } => f(t),
        }
    }

    pub fn is_piecewise_constant(&self) -> bool {
        !matches!(self, TimeFunction::Custom { .. })
    }

    pub fn name(&self) -> String {
        match self {
            TimeFunction::Indicator {
                lo,
                hi,
                closed_right,
            } => format!("1[{lo},{hi}{}", if *closed_right { "]" } else { ")" }),
            TimeFunction::Constant(c) => format!("const({c})"),
            TimeFunction::Custom { name, .. } => name.clone(),
        }
    }
}

impl fmt::Debug for TimeFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TimeFunction({})", self.name())
    }
}

/// How to build a time dictionary.
#[derive(Debug, Clone)]
pub enum TimeDictionarySpec {
    /// Equal-width indicator bins partitioning `[0, τ]`.
    Histogram { bins: usize, tau: f64 },
    Custom { functions: Vec<TimeFunction>, tau: f64 },
}

/// The dictionary `G_N` on `[0, τ]` with sup norms `‖θ_k‖_∞`.
#[derive(Debug, Clone)]
pub struct TimeDictionary {
    functions: Vec<TimeFunction>,
    tau: f64,
    sup_norms: Vec<f64>,
    piecewise_constant: bool,
}

impl TimeDictionary {
    pub fn build(spec: TimeDictionarySpec) -> Result<Self> {
        match spec {
            TimeDictionarySpec::Histogram { bins, tau } => Self::histogram(bins, tau),
            TimeDictionarySpec::Custom { functions, tau } => Self::from_functions(functions, tau),
        }
    }

    /// Bins are closed-open except the last, which is closed at `τ`.
    pub fn histogram(bins: usize, tau: f64) -> Result<Self> {
        if bins == 0 {
            return Err(Error::InvalidParameter("histogram needs at least one bin".into()));
        }
        check_tau(tau)?;
        let width = tau / bins as f64;
        let functions = (0..bins)
            .map(|k| TimeFunction::Indicator {
                lo: k as f64 * width,
                hi: if k + 1 == bins { tau } else { (k + 1) as f64 * width },
                closed_right: k + 1 == bins,
            })
            .collect();
        Self::from_functions(functions, tau)
    }

    pub fn from_functions(functions: Vec<TimeFunction>, tau: f64) -> Result<Self> {
        check_tau(tau)?;
        let sup_norms = functions
            .iter()
            .map(|f| {
                let sup = match f {
                    TimeFunction::Indicator { lo, hi, .. } => {
                        if hi > lo && *lo <= tau && *hi >= 0.0 {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    TimeFunction::Constant(c) => c.abs(),
                    TimeFunction::Custom { .. } => {
                        let last = (SUP_NORM_GRID - 1) as f64;
                        (0..SUP_NORM_GRID)
                            .map(|i| f.eval(tau * i as f64 / last).abs())
                            .fold(0.0, f64::max)
                    }
                };
                if sup.is_finite() {
                    Ok(sup)
                } else {
                    Err(Error::NonFinite(format!("sup norm of {}", f.name())))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let piecewise_constant = functions.iter().all(|f| f.is_piecewise_constant());
        Ok(Self {
            functions,
            tau,
            sup_norms,
            piecewise_constant,
        })
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn functions(&self) -> &[TimeFunction] {
        &self.functions
    }

    pub fn sup_norms(&self) -> &[f64] {
        &self.sup_norms
    }

    pub fn is_piecewise_constant(&self) -> bool {
        self.piecewise_constant
    }

    pub fn eval(&self, k: usize, t: f64) -> f64 {
        self.functions[k].eval(t)
    }

    /// Discontinuities of the dictionary inside `(0, τ)`.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut pts = Vec::new();
        for f in &self.functions {
            if let TimeFunction::Indicator { lo, hi, .. } = f {
                pts.push(*lo);
                pts.push(*hi);
            }
        }
        pts.retain(|&t| t > 0.0 && t < self.tau);
        pts
    }

    /// `log α_γ(t) = Σ_k γ_k θ_k(t)`.
    pub fn log_baseline(&self, gamma: &[f64], t: f64) -> Result<f64> {
        if gamma.len() != self.len() {
            return Err(Error::DimensionMismatch {
                what: "gamma",
                expected: self.len(),
                got: gamma.len(),
            });
        }
        Ok(self
            .functions
            .iter()
            .zip(gamma)
            .filter(|(_, &g)| g != 0.0)
            .map(|(f, &g)| g * f.eval(t))
            .sum())
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau.is_finite() && tau > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")))
    }
}

/// The two dictionaries used together.
#[derive(Debug, Clone)]
pub struct DictionaryPair {
    pub covariate: CovariateDictionary,
    pub time: TimeDictionary,
}

impl DictionaryPair {
    pub fn new(covariate: CovariateDictionary, time: TimeDictionary) -> Self {
        Self { covariate, time }
    }

    /// Coordinate dictionary plus an equal-width histogram on the cohort horizon.
    pub fn coordinates_and_histogram(cohort: &Cohort, bins: usize) -> Result<Self> {
        Ok(Self::new(
            CovariateDictionary::coordinates(cohort)?,
            TimeDictionary::histogram(bins, cohort.horizon())?,
        ))
    }

    /// `M + N`.
    pub fn dim(&self) -> usize {
        self.covariate.len() + self.time.len()
    }

    /// `log λ_{β,γ}(t, Z)`.
    pub fn log_intensity(&self, coeffs: &Coefficients, t: f64, z: &[f64]) -> Result<f64> {
        let tau = self.time.tau();
        if !(0.0..=tau).contains(&t) {
            return Err(Error::TimeOutOfRange { t, tau });
        }
        Ok(self.time.log_baseline(&coeffs.gamma, t)?
            + self.covariate.linear_predictor(&coeffs.beta, z)?)
    }
}

/// `(β, γ)`; flattened as `[β; γ]` wherever a single vector is needed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl Coefficients {
    pub fn new(beta: Vec<f64>, gamma: Vec<f64>) -> Result<Self> {
        if beta.iter().chain(&gamma).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("coefficients".into()));
        }
        Ok(Self { beta, gamma })
    }

    pub fn zeros(m: usize, n: usize) -> Self {
        Self {
            beta: vec![0.0; m],
            gamma: vec![0.0; n],
        }
    }

    pub fn from_flat(flat: &[f64], m: usize) -> Self {
        Self {
            beta: flat[..m].to_vec(),
            gamma: flat[m..].to_vec(),
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.beta.iter().chain(&self.gamma).copied().collect()
    }

    pub fn check_dims(&self, dicts: &DictionaryPair) -> Result<()> {
        if self.beta.len() != dicts.covariate.len() {
            return Err(Error::DimensionMismatch {
                what: "beta",
                expected: dicts.covariate.len(),
                got: self.beta.len(),
            });
        }
        if self.gamma.len() != dicts.time.len() {
            return Err(Error::DimensionMismatch {
                what: "gamma",
                expected: dicts.time.len(),
                got: self.gamma.len(),
            });
        }
        Ok(())
    }
}

/// Baseline hazard `α_0` of a simulated truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BaselineHazard {
    Constant { rate: f64 },
    /// `rates[k]` on `[edges[k], edges[k+1])`; the last rate continues past the last edge.
    PiecewiseConstant { edges: Vec<f64>, rates: Vec<f64> },
    /// `α_0(t) = (k/λ)(t/λ)^{k-1}`, restricted to `shape >= 1` so it stays bounded on `[0, τ]`.
    Weibull { shape: f64, scale: f64 },
}

impl BaselineHazard {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match self {
            BaselineHazard::Constant { rate } => {
                if !(rate.is_finite() && *rate > 0.0) {
                    return bad(format!("constant hazard must be positive, got {rate}"));
                }
            }
            BaselineHazard::PiecewiseConstant { edges, rates } => {
                if edges.len() != rates.len() + 1 || rates.is_empty() {
                    return bad("piecewise-constant hazard needs len(edges) = len(rates) + 1".into());
                }
                if edges[0] != 0.0 || edges.windows(2).any(|w| !(w[1] > w[0])) {
                    return bad("hazard edges must start at 0 and increase".into());
                }
                if rates.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
                    return bad("hazard rates must be positive".into());
                }
            }
            BaselineHazard::Weibull { shape, scale } => {
                if !(shape.is_finite() && *shape >= 1.0 && scale.is_finite() && *scale > 0.0) {
                    return bad(format!("invalid Weibull hazard shape={shape} scale={scale}"));
                }
            }
        }
        Ok(())
    }

    pub fn rate(&self, t: f64) -> f64 {
        match self {
            BaselineHazard::Constant { rate } => *rate,
            BaselineHazard::PiecewiseConstant { edges, rates } => rates[piece_index(edges, t)],
            BaselineHazard::Weibull { shape, scale } => {
                shape / scale * (t / scale).powf(shape - 1.0)
            }
        }
    }

    pub fn log_rate(&self, t: f64) -> f64 {
        self.rate(t).ln()
    }

    /// `A(t) = ∫_0^t α_0(s) ds`.
    pub fn cumulative(&self, t: f64) -> f64 {
        match self {
            BaselineHazard::Constant { rate } => rate * t,
            BaselineHazard::PiecewiseConstant { edges, rates } => {
                let mut acc = 0.0;
                for (k, &r) in rates.iter().enumerate() {
                    let lo = edges[k];
                    let hi = if k + 1 == rates.len() {
                        f64::INFINITY
                    } else {
                        edges[k + 1]
                    };
                    if t <= lo {
                        break;
                    }
                    acc += r * (t.min(hi) - lo);
                }
                acc
            }
            BaselineHazard::Weibull { shape, scale } => (t / scale).powf(*shape),
        }
    }

    /// Solve `A(t) = h` for `t`.
    pub fn inverse_cumulative(&self, h: f64) -> f64 {
        match self {
            BaselineHazard::Constant { rate } => h / rate,
            BaselineHazard::PiecewiseConstant { edges, rates } => {
                let mut acc = 0.0;
                for (k, &r) in rates.iter().enumerate() {
                    let lo = edges[k];
                    if k + 1 == rates.len() {
                        return lo + (h - acc) / r;
                    }
                    let mass = r * (edges[k + 1] - lo);
                    if acc + mass >= h {
                        return lo + (h - acc) / r;
                    }
                    acc += mass;
                }
                unreachable!("rates is non-empty")
            }
            BaselineHazard::Weibull { shape, scale } => scale * h.powf(1.0 / shape),
        }
    }

    pub fn is_piecewise_constant(&self) -> bool {
        !matches!(self, BaselineHazard::Weibull { .. })
    }

    /// Discontinuities inside `(0, tau)`.
    pub fn breakpoints(&self, tau: f64) -> Vec<f64> {
        match self {
            BaselineHazard::PiecewiseConstant { edges, .. } => edges
                .iter()
                .copied()
                .filter(|&t| t > 0.0 && t < tau)
                .collect(),
            _ => Vec::new(),
        }
    }
}

fn piece_index(edges: &[f64], t: f64) -> usize {
    let last = edges.len() - 2;
    // edges[0] = 0 <= t
    let k = edges.partition_point(|&e| e <= t);
    k.saturating_sub(1).min(last)
}

/// `f_0` in `λ_0(t, Z) = α_0(t) exp(f_0(Z))`.
#[derive(Clone)]
pub enum RelativeRisk {
    Linear(Vec<f64>),
    Custom(CovariateFn),
}

impl RelativeRisk {
    pub fn eval(&self, z: &[f64]) -> f64 {
        match self {
            RelativeRisk::Linear(beta) => beta.iter().zip(z).map(|(b, z)| b * z).sum(),
            RelativeRisk::Custom(f) => f(z),
        }
    }
}

impl fmt::Debug for RelativeRisk {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RelativeRisk::Linear(b) => write!(f, "Linear({b:?})"),
            RelativeRisk::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// The true intensity `λ_0(t, Z) = α_0(t) exp(f_0(Z))`, known only in simulation.
#[derive(Debug, Clone)]
pub struct TrueIntensity {
    pub baseline: BaselineHazard,
    pub relative_risk: RelativeRisk,
}

impl TrueIntensity {
    pub fn new(baseline: BaselineHazard, relative_risk: RelativeRisk) -> Result<Self> {
        baseline.validate()?;
        Ok(Self {
            baseline,
            relative_risk,
        })
    }

    pub fn cox(baseline: BaselineHazard, beta0: Vec<f64>) -> Result<Self> {
        Self::new(baseline, RelativeRisk::Linear(beta0))
    }

    pub fn intensity(&self, t: f64, z: &[f64]) -> f64 {
        self.baseline.rate(t) * self.relative_risk.eval(z).exp()
    }

    pub fn log_intensity(&self, t: f64, z: &[f64]) -> f64 {
        self.baseline.log_rate(t) + self.relative_risk.eval(z)
    }

    /// `A_0 = max_i ∫_0^τ λ_0(s, Z_i) ds`.
    pub fn a0_bound(&self, cohort: &Cohort) -> f64 {
        let mass = self.baseline.cumulative(cohort.horizon());
        cohort
            .observations()
            .iter()
            .map(|o| mass * self.relative_risk.eval(&o.covariates).exp())
            .fold(0.0, f64::max)
    }
}
