//! Data-driven penalty weights from the empirical Bernstein inequality.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Cohort, DictionaryPair};

/// `Φ(u) = e^u − u − 1`, with a Taylor branch near zero.
pub fn phi(u: f64) -> f64 {
    if u.abs() < 1e-4 {
        let u2 = u * u;
        u2 * (0.5 + u * (1.0 / 6.0 + u * (1.0 / 24.0 + u * (1.0 / 120.0 + u / 720.0))))
    } else {
        u.exp_m1() - u
    }
}

/// Confidence levels and slack constants of the weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightConfig {
    pub x: f64,
    pub y: f64,
    pub epsilon: f64,
    pub epsilon_tilde: f64,
    pub nu: f64,
    pub nu_tilde: f64,
}

impl Default for WeightConfig {
    fn default() -> Self {
        Self {
            x: 20f64.ln(),
            y: 20f64.ln(),
            epsilon: 0.1,
            epsilon_tilde: 0.1,
            nu: 1.0,
            nu_tilde: 1.0,
        }
    }
}

impl WeightConfig {
    pub fn new(x: f64, y: f64, epsilon: f64, epsilon_tilde: f64, nu: f64, nu_tilde: f64) -> Result<Self> {
        let cfg = Self {
            x,
            y,
            epsilon,
            epsilon_tilde,
            nu,
            nu_tilde,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_levels(x: f64, y: f64) -> Result<Self> {
        let cfg = Self {
            x,
            y,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("x", self.x),
            ("y", self.y),
            ("epsilon", self.epsilon),
            ("epsilon_tilde", self.epsilon_tilde),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("nu", self.nu), ("nu_tilde", self.nu_tilde)] {
            if !(v > 0.0 && v < 3.0) {
                return Err(Error::InvalidParameter(format!("{name} must lie in (0, 3), got {v}")));
            }
            if v <= phi(v) {
                return Err(Error::InvalidParameter(format!(
                    "{name} = {v} violates {name} > exp({name}) - {name} - 1"
                )));
            }
        }
        Ok(())
    }

    /// `c = 2√(2(1+ε))`.
    pub fn c(&self) -> f64 {
        2.0 * (2.0 * (1.0 + self.epsilon)).sqrt()
    }

    /// `c̃ = 2√(2(1+ε̃))`.
    pub fn c_tilde(&self) -> f64 {
        2.0 * (2.0 * (1.0 + self.epsilon_tilde)).sqrt()
    }
}

/// Per-function variance records behind the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceRecords {
    pub v_hat: Vec<f64>,
    pub r_hat: Vec<f64>,
    pub w_hat: Vec<f64>,
    pub t_hat: Vec<f64>,
    pub covariate_sup_norms: Vec<f64>,
    pub time_sup_norms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyWeights {
    pub omega: Vec<f64>,
    pub delta: Vec<f64>,
    pub config: WeightConfig,
    pub records: VarianceRecords,
}

impl PenaltyWeights {
    /// Weights given directly, with empty records.
    pub fn from_values(omega: Vec<f64>, delta: Vec<f64>, config: WeightConfig) -> Result<Self> {
        if omega.iter().chain(&delta).any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidParameter("weights must be finite and non-negative".into()));
        }
        Ok(Self {
            omega,
            delta,
            config,
            records: VarianceRecords {
                v_hat: Vec::new(),
                r_hat: Vec::new(),
                w_hat: Vec::new(),
                t_hat: Vec::new(),
                covariate_sup_norms: Vec::new(),
                time_sup_norms: Vec::new(),
            },
        })
    }

    /// Both weight vectors multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.omega.iter_mut().for_each(|w| *w *= factor);
        out.delta.iter_mut().for_each(|w| *w *= factor);
        out
    }

    /// `[ω; δ]`.
    pub fn flat(&self) -> Vec<f64> {
        self.omega.iter().chain(&self.delta).copied().collect()
    }
}

/// `V̂_n(f_j) = (1/n) Σ_i f_j(Z_i)² N_i(τ)` and `R̂_n(θ_k) = (1/n) Σ_i Σ_s θ_k(s)²`.
pub fn observable_variances(cohort: &Cohort, dicts: &DictionaryPair) -> (Vec<f64>, Vec<f64>) {
    let n = cohort.len() as f64;
    let m = dicts.covariate.len();
    let nt = dicts.time.len();
    let mut v = vec![0.0; m];
    let mut r = vec![0.0; nt];
    for obs in cohort.observations() {
        let count = obs.jump_count() as f64;
        if count == 0.0 {
            continue;
        }
        for (j, vj) in v.iter_mut().enumerate() {
            let f = dicts.covariate.eval(j, &obs.covariates);
            *vj += f * f * count;
        }
        for &s in &obs.jump_times {
            for (k, rk) in r.iter_mut().enumerate() {
                let th = dicts.time.eval(k, s);
                *rk += th * th;
            }
        }
    }
    v.iter_mut().for_each(|x| *x /= n);
    r.iter_mut().for_each(|x| *x /= n);
    (v, r)
}

/// `(ν/n)/(ν/n − Φ(ν/n)) · var + (level/n)/(ν/n − Φ(ν/n)) · sup²`.
pub fn variance_proxy(var: f64, sup_norm: f64, nu: f64, level: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::EmptyCohort);
    }
    let u = nu / n as f64;
    let denom = u - phi(u);
    if !(denom > 0.0) {
        return Err(Error::InvalidParameter(format!("nu/n = {u} violates nu/n > Phi(nu/n)")));
    }
    Ok(u / denom * var + (level / n as f64) / denom * sup_norm * sup_norm)
}

/// `(Ŵ^ν, T̂^ν̃)` for all dictionary functions.
pub fn variance_proxies(
    v_hat: &[f64],
    r_hat: &[f64],
    covariate_sup_norms: &[f64],
    time_sup_norms: &[f64],
    config: &WeightConfig,
    n: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if v_hat.len() != covariate_sup_norms.len() {
        return Err(Error::DimensionMismatch {
            what: "covariate sup norms",
            expected: v_hat.len(),
            got: covariate_sup_norms.len(),
        });
    }
    if r_hat.len() != time_sup_norms.len() {
        return Err(Error::DimensionMismatch {
            what: "time sup norms",
            expected: r_hat.len(),
            got: time_sup_norms.len(),
        });
    }
    let w = v_hat
        .iter()
        .zip(covariate_sup_norms)
        .map(|(&v, &s)| variance_proxy(v, s, config.nu, config.x, n))
        .collect::<Result<Vec<_>>>()?;
    let t = r_hat
        .iter()
        .zip(time_sup_norms)
        .map(|(&r, &s)| variance_proxy(r, s, config.nu_tilde, config.y, n))
        .collect::<Result<Vec<_>>>()?;
    Ok((w, t))
}

/// `c √(proxy · level / n) + k · level / n · sup`.
///
/// The weights use `c = 2√(2(1+ε))`, `level = x + log M`, `k = 2/3`; the
/// Bernstein threshold uses `c = √(2(1+ε))`, `level = x`, `k = 1/3`.
pub fn bernstein_threshold(proxy: f64, sup_norm: f64, c: f64, level: f64, k: f64, n: usize) -> f64 {
    let nf = n as f64;
    c * (proxy * level / nf).sqrt() + k * level / nf * sup_norm
}

pub fn penalty_weights(cohort: &Cohort, dicts: &DictionaryPair, config: &WeightConfig) -> Result<PenaltyWeights> {
    config.validate()?;
    let m = dicts.covariate.len();
    let nt = dicts.time.len();
    if m == 0 && nt == 0 {
        return Err(Error::InvalidParameter("both dictionaries are empty".into()));
    }
    let n = cohort.len();
    let f_sup = dicts.covariate.sup_norms().to_vec();
    let t_sup = dicts.time.sup_norms().to_vec();
    if f_sup.iter().chain(&t_sup).any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("dictionary sup norm".into()));
    }
    let (v_hat, r_hat) = observable_variances(cohort, dicts);
    let (w_hat, t_hat) = variance_proxies(&v_hat, &r_hat, &f_sup, &t_sup, config, n)?;
    let level_x = config.x + (m.max(1) as f64).ln();
    let level_y = config.y + (nt.max(1) as f64).ln();
    let omega = w_hat
        .iter()
        .zip(&f_sup)
        .map(|(&w, &s)| bernstein_threshold(w, s, config.c(), level_x, 2.0 / 3.0, n))
        .collect();
    let delta = t_hat
        .iter()
        .zip(&t_sup)
        .map(|(&t, &s)| bernstein_threshold(t, s, config.c_tilde(), level_y, 2.0 / 3.0, n))
        .collect();
    Ok(PenaltyWeights {
        omega,
        delta,
        config: *config,
        records: VarianceRecords {
            v_hat,
            r_hat,
            w_hat,
            t_hat,
            covariate_sup_norms: f_sup,
            time_sup_norms: t_sup,
        },
    })
}

/// `A_{ε,ν} = (2/log(1+ε)) log(2 + A_0(ν/n + Φ(ν/n))/(x/n)) + 1`.
pub fn bernstein_tail_constant(epsilon: f64, nu: f64, a0: f64, n: usize, x: f64) -> Result<f64> {
    if !(a0 > 0.0 && a0.is_finite()) {
        return Err(Error::InvalidParameter(format!("A_0 must be positive, got {a0}")));
    }
    if !(epsilon > 0.0 && x > 0.0) || n == 0 {
        return Err(Error::InvalidParameter("epsilon, x and n must be positive".into()));
    }
    let u = nu / n as f64;
    let arg = 2.0 + a0 * (u + phi(u)) / (x / n as f64);
    Ok(2.0 / (1.0 + epsilon).ln() * arg.ln() + 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CountingObservation, CovariateDictionary, CovariateFunction, TimeDictionary, TimeFunction};

    #[test]
    fn phi_values() {
        assert_eq!(phi(0.0), 0.0);
        assert!((phi(1.0) - (std::f64::consts::E - 2.0)).abs() < 1e-15);
        let tiny = phi(1e-8);
        assert!((tiny / 5e-17 - 1.0).abs() < 1e-8);
        // continuity across the branch
        let a = phi(0.99999e-4);
        let b = phi(1.00001e-4);
        assert!((a - b).abs() / a < 1e-4);
    }

    #[test]
    fn config_validation() {
        assert!(WeightConfig::default().validate().is_ok());
        assert!(WeightConfig::new(1.0, 1.0, 0.1, 0.1, 1.3, 1.0).is_err());
        assert!(WeightConfig::new(1.0, 1.0, 0.1, 0.1, 1.2, 1.0).is_ok());
        assert!(WeightConfig::new(0.0, 1.0, 0.1, 0.1, 1.0, 1.0).is_err());
        assert!(WeightConfig::new(1.0, 1.0, -0.1, 0.1, 1.0, 1.0).is_err());
    }

    #[test]
    fn observable_variance_examples() {
        let obs = vec![
            CountingObservation::right_censored(vec![2.0], 1.0, true),
            CountingObservation::right_censored(vec![5.0], 1.5, false),
        ];
        let c = Cohort::new(obs, 2.0).unwrap();
        let cov = CovariateDictionary::coordinates(&c).unwrap();
        let time = TimeDictionary::from_functions(vec![TimeFunction::Constant(1.0)], 2.0).unwrap();
        let d = DictionaryPair::new(cov, time);
        let (v, r) = observable_variances(&c, &d);
        assert_eq!(v, vec![2.0]);
        assert_eq!(r, vec![c.mean_jump_count()]);

        let none = Cohort::new(
            vec![CountingObservation::right_censored(vec![1.0], 1.0, false)],
            1.0,
        )
        .unwrap();
        let d = DictionaryPair::coordinates_and_histogram(&none, 2).unwrap();
        let (v, r) = observable_variances(&none, &d);
        assert!(v.iter().chain(&r).all(|&x| x == 0.0));
    }

    #[test]
    fn proxy_limits_and_floor() {
        let u = 1e-6;
        let mult = u / (u - phi(u));
        assert!((mult - 1.0).abs() < 1e-4);
        let mut prev = f64::INFINITY;
        for n in [10, 100, 1000, 10_000, 100_000, 1_000_000] {
            let m = variance_proxy(1.0, 0.0, 1.0, 1.0, n).unwrap();
            assert!(m >= 1.0 && m < prev);
            prev = m;
        }
        let w0 = variance_proxy(0.0, 2.0, 1.0, 1.5, 50).unwrap();
        let u = 1.0 / 50.0;
        assert!((w0 - (1.5 / 50.0) / (u - phi(u)) * 4.0).abs() < 1e-15);
        assert!(variance_proxy(1.0, 1.0, 1.0, 1.0, 0).is_err());
    }

    #[test]
    fn weight_homogeneity_and_monotonicity() {
        let obs: Vec<_> = (0..30)
            .map(|i| {
                let z = (i as f64 * 0.37).sin();
                CountingObservation::right_censored(vec![z], 0.5 + 0.05 * i as f64, i % 3 != 0)
            })
            .collect();
        let c = Cohort::new(obs, 2.5).unwrap();
        let single = CovariateDictionary::from_functions(vec![CovariateFunction::Coordinate(0)], &c).unwrap();
        let double = CovariateDictionary::from_functions(
            vec![CovariateFunction::custom("2z", |z| 2.0 * z[0])],
            &c,
        )
        .unwrap();
        let time = TimeDictionary::histogram(3, 2.5).unwrap();
        let cfg = WeightConfig::default();
        let w1 = penalty_weights(&c, &DictionaryPair::new(single.clone(), time.clone()), &cfg).unwrap();
        let w2 = penalty_weights(&c, &DictionaryPair::new(double, time.clone()), &cfg).unwrap();
        assert!((w2.omega[0] - 2.0 * w1.omega[0]).abs() < 1e-14);
        let mut prev = 0.0;
        for x in [0.5, 1.0, 2.0, 4.0] {
            let cfg = WeightConfig::with_levels(x, 1.0).unwrap();
            let w = penalty_weights(&c, &DictionaryPair::new(single.clone(), time.clone()), &cfg).unwrap();
            assert!(w.omega[0] > prev);
            prev = w.omega[0];
        }
    }

    #[test]
    fn tail_constant_limit() {
        let limit = 2.0 / 1.1f64.ln() * 2f64.ln() + 1.0;
        let v = bernstein_tail_constant(0.1, 1.0, 1.0, 100, 1e12).unwrap();
        assert!((v - limit).abs() < 1e-9);
        assert!(bernstein_tail_constant(0.1, 1.0, 1.0, 100, 3.0).unwrap() > 1.0);
        assert!(bernstein_tail_constant(0.1, 1.0, 0.0, 100, 3.0).is_err());
    }
}
