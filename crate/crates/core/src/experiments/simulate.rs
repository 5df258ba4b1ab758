//! Right-censored Cox cohorts with a fixed covariate design, and the
//! conditional expectations of the Gram matrices under that design.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gram_re::{assemble_extended, weighted_cross_product, GramMatrix, GramProvenance};
use crate::model::{BaselineHazard, Cohort, CountingObservation, DictionaryPair, TimeFunction, TrueIntensity};

/// Law of each covariate coordinate (iid).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CovariateLaw {
    Uniform { lo: f64, hi: f64 },
}

impl Default for CovariateLaw {
    fn default() -> Self {
        CovariateLaw::Uniform { lo: -1.0, hi: 1.0 }
    }
}

impl CovariateLaw {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            CovariateLaw::Uniform { lo, hi } => rng.random_range(lo..hi),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            CovariateLaw::Uniform { lo, hi } if lo.is_finite() && hi.is_finite() && lo < hi => Ok(()),
            CovariateLaw::Uniform { lo, hi } => {
                Err(Error::InvalidParameter(format!("uniform covariate law needs lo < hi, got [{lo}, {hi}]")))
            }
        }
    }
}

/// Cox model `α_0(t) exp(β_0ᵀZ)` with exponential censoring at rate
/// `censoring_rate` (0 disables it) and administrative censoring at `tau`.
///
/// Covariates are drawn once per design and held fixed across replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimDesign {
    pub n: usize,
    pub p: usize,
    pub beta0: Vec<f64>,
    pub baseline: BaselineHazard,
    #[serde(default)]
    pub covariates: CovariateLaw,
    pub censoring_rate: f64,
    pub tau: f64,
    pub seed: u64,
}

/// Generator for stream `stream` of `seed`; stream 0 draws the covariates,
/// replicate `r` uses stream `r + 1`.
pub fn replicate_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

impl SimDesign {
    /// n=200, p=5, α_0 ≡ 1, τ = 3, about 30% censoring.
    pub fn bernstein_fixture(seed: u64) -> Self {
        Self {
            n: 200,
            p: 5,
            beta0: vec![0.5, -0.5, 0.0, 0.0, 0.0],
            baseline: BaselineHazard::Constant { rate: 1.0 },
            covariates: CovariateLaw::default(),
            censoring_rate: 0.4,
            tau: 3.0,
            seed,
        }
    }

    /// p=8 with three active coefficients, α_0 ≡ 1, τ = 2.
    pub fn well_specified(n: usize, seed: u64) -> Self {
        Self {
            n,
            p: 8,
            beta0: vec![0.8, -0.6, 0.4, 0.0, 0.0, 0.0, 0.0, 0.0],
            baseline: BaselineHazard::Constant { rate: 1.0 },
            covariates: CovariateLaw::default(),
            censoring_rate: 0.2,
            tau: 2.0,
            seed,
        }
    }

    /// p=8, `β_0 = (1, −1, 1, 0, …)`, α_0 ≡ 1, τ = 3; strong enough signal
    /// that small confidence levels give non-trivial fits.
    pub fn fast_regime(n: usize, seed: u64) -> Self {
        Self {
            n,
            p: 8,
            beta0: vec![1.0, -1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            baseline: BaselineHazard::Constant { rate: 1.0 },
            covariates: CovariateLaw::default(),
            censoring_rate: 0.2,
            tau: 3.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::EmptyCohort);
        }
        if self.beta0.len() != self.p {
            return Err(Error::DimensionMismatch {
                what: "beta0",
                expected: self.p,
                got: self.beta0.len(),
            });
        }
        if self.beta0.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFinite("beta0".into()));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::InvalidParameter(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.censoring_rate.is_finite() && self.censoring_rate >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "censoring rate must be non-negative, got {}",
                self.censoring_rate
            )));
        }
        self.covariates.validate()?;
        self.baseline.validate()
    }

    /// Same design with `p` coordinates: `β_0` truncated or padded with zeros.
    pub fn with_dimension(&self, p: usize) -> Self {
        let mut beta0 = self.beta0.clone();
        beta0.resize(p, 0.0);
        Self {
            p,
            beta0,
            ..self.clone()
        }
    }

    pub fn with_n(&self, n: usize) -> Self {
        Self { n, ..self.clone() }
    }

    pub fn true_intensity(&self) -> Result<TrueIntensity> {
        TrueIntensity::cox(self.baseline.clone(), self.beta0.clone())
    }

    pub fn design_covariates(&self) -> Result<Vec<Vec<f64>>> {
        self.validate()?;
        let mut rng = replicate_rng(self.seed, 0);
        Ok((0..self.n)
            .map(|_| (0..self.p).map(|_| self.covariates.sample(&mut rng)).collect())
            .collect())
    }

    /// `R = max_i ‖Z_i‖_2`.
    pub fn covariate_radius(covariates: &[Vec<f64>]) -> f64 {
        covariates
            .iter()
            .map(|z| z.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// Replicate `r` on the fixed covariates.
    pub fn simulate_replicate(&self, covariates: &[Vec<f64>], r: u64) -> Result<Cohort> {
        let mut rng = replicate_rng(self.seed, r + 1);
        self.simulate_with(covariates, &mut rng)
    }

    pub fn simulate_with(&self, covariates: &[Vec<f64>], rng: &mut ChaCha8Rng) -> Result<Cohort> {
        self.validate()?;
        if covariates.len() != self.n {
            return Err(Error::DimensionMismatch {
                what: "covariate rows",
                expected: self.n,
                got: covariates.len(),
            });
        }
        let obs = covariates
            .iter()
            .map(|z| {
                let risk: f64 = self.beta0.iter().zip(z).map(|(b, v)| b * v).sum::<f64>().exp();
                let e: f64 = Exp1.sample(rng);
                let t = self.baseline.inverse_cumulative(e / risk);
                let c = if self.censoring_rate > 0.0 {
                    let u: f64 = Exp1.sample(rng);
                    u / self.censoring_rate
                } else {
                    f64::INFINITY
                };
                let end = c.min(self.tau);
                CountingObservation::right_censored(z.clone(), t.min(end), t <= end)
            })
            .collect();
        Cohort::new(obs, self.tau)
    }
}

/// One cohort (replicate 0) and its true intensity.
pub fn simulate_cohort(design: &SimDesign) -> Result<(Cohort, TrueIntensity)> {
    let covs = design.design_covariates()?;
    Ok((design.simulate_replicate(&covs, 0)?, design.true_intensity()?))
}

fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    let nf = order as f64;
    for i in 0..order {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=order {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = nf * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Nodes and weights on `[0, τ]` respecting every breakpoint; interior nodes only.
fn time_quadrature(tau: f64, breakpoints: &[f64]) -> Vec<(f64, f64)> {
    let mut edges = vec![0.0, tau];
    edges.extend(breakpoints.iter().copied().filter(|&t| t > 0.0 && t < tau));
    edges.sort_by(f64::total_cmp);
    edges.dedup();
    let (x, w) = gauss_legendre(16);
    let sub = 8;
    let mut out = Vec::new();
    for e in edges.windows(2) {
        let h = (e[1] - e[0]) / sub as f64;
        for s in 0..sub {
            let a = e[0] + s as f64 * h;
            for (xi, wi) in x.iter().zip(&w) {
                out.push((a + 0.5 * h * (xi + 1.0), 0.5 * h * wi));
            }
        }
    }
    out
}

/// `P(Y_i(t) = 1 | Z_i)` times `λ_0(t, Z_i)` at each quadrature node.
fn at_risk_intensity(design: &SimDesign, z: &[f64], nodes: &[(f64, f64)]) -> Vec<f64> {
    let risk: f64 = design.beta0.iter().zip(z).map(|(b, v)| b * v).sum::<f64>().exp();
    nodes
        .iter()
        .map(|&(t, _)| {
            design.baseline.rate(t) * risk * (-risk * design.baseline.cumulative(t) - design.censoring_rate * t).exp()
        })
        .collect()
}

fn expected_breakpoints(design: &SimDesign, dicts: &DictionaryPair) -> Vec<f64> {
    let mut bps = dicts.time.breakpoints();
    bps.extend(design.baseline.breakpoints(design.tau));
    bps
}

/// `E[Λ_i(τ) | Z_i]` for each row of the fixed design.
pub fn expected_compensators(design: &SimDesign, covariates: &[Vec<f64>]) -> Result<Vec<f64>> {
    design.validate()?;
    let nodes = time_quadrature(design.tau, &design.baseline.breakpoints(design.tau));
    Ok(covariates
        .iter()
        .map(|z| {
            at_risk_intensity(design, z, &nodes)
                .iter()
                .zip(&nodes)
                .map(|(g, (_, w))| g * w)
                .sum()
        })
        .collect())
}

fn design_rows(dicts: &DictionaryPair, covariates: &[Vec<f64>]) -> Vec<f64> {
    let m = dicts.covariate.len();
    let mut x = Vec::with_capacity(covariates.len() * m);
    for z in covariates {
        x.extend((0..m).map(|j| dicts.covariate.eval(j, z)));
    }
    x
}

/// `E(G_n)` conditionally on the fixed covariates.
pub fn expected_gram(design: &SimDesign, covariates: &[Vec<f64>], dicts: &DictionaryPair) -> Result<GramMatrix> {
    let m = dicts.covariate.len();
    let comp = expected_compensators(design, covariates)?;
    let x = design_rows(dicts, covariates);
    GramMatrix::new(m, weighted_cross_product(&x, &comp, m), GramProvenance::Expected)
}

/// `E(G̃_n)` conditionally on the fixed covariates.
pub fn expected_extended_gram(
    design: &SimDesign,
    covariates: &[Vec<f64>],
    dicts: &DictionaryPair,
) -> Result<GramMatrix> {
    design.validate()?;
    let m = dicts.covariate.len();
    let nt = dicts.time.len();
    let n = covariates.len();
    let nodes = time_quadrature(design.tau, &expected_breakpoints(design, dicts));
    let theta: Vec<Vec<f64>> = nodes
        .iter()
        .map(|&(t, _)| (0..nt).map(|k| dicts.time.eval(k, t)).collect())
        .collect();
    let mut comp = vec![0.0; n];
    let mut theta_int = vec![0.0; n * nt];
    let mut block = vec![0.0; nt * nt];
    for (i, z) in covariates.iter().enumerate() {
        let g = at_risk_intensity(design, z, &nodes);
        for (q, &(_, w)) in nodes.iter().enumerate() {
            let gw = g[q] * w;
            comp[i] += gw;
            for k in 0..nt {
                let a = gw * theta[q][k];
                theta_int[i * nt + k] += a;
                for l in 0..nt {
                    block[k * nt + l] += a * theta[q][l] / n as f64;
                }
            }
        }
    }
    let x = design_rows(dicts, covariates);
    let mut g = assemble_extended(&x, &comp, &theta_int, &block, m, nt);
    g.provenance = GramProvenance::Expected;
    Ok(g)
}

/// Best histogram approximation of `log α_0`: log of the bin average of `α_0`
/// for indicator functions. Exact when `α_0` is constant on every bin.
pub fn representable_gamma(baseline: &BaselineHazard, dicts: &DictionaryPair) -> Result<Vec<f64>> {
    dicts
        .time
        .functions()
        .iter()
        .map(|f| match f {
            TimeFunction::Indicator { lo, hi, .. } => {
                let mass = baseline.cumulative(*hi) - baseline.cumulative(*lo);
                Ok((mass / (hi - lo)).ln())
            }
            _ => Err(Error::InvalidParameter(
                "the representable baseline needs an indicator time dictionary".into(),
            )),
        })
        .collect()
}
