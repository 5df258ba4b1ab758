#![allow(dead_code)]

use intensity_lasso::model::{Coefficients, Cohort, CountingObservation, DictionaryPair};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Right-censored cohort with uniform covariates on `[-1, 1]` and
/// uniform observation times on `(0, τ]`.
pub fn random_cohort(rng: &mut ChaCha8Rng, n: usize, p: usize, tau: f64, event_prob: f64) -> Cohort {
    let obs = (0..n)
        .map(|_| {
            let z: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
            let t = tau * rng.random_range(0.02..1.0);
            CountingObservation::right_censored(z, t, rng.random_bool(event_prob))
        })
        .collect();
    Cohort::new(obs, tau).unwrap()
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seeds for a random cohort: `(seed, n, p, bins)`.
pub fn cohort_params(max_n: usize, max_p: usize, max_bins: usize) -> impl Strategy<Value = (u64, usize, usize, usize)> {
    (any::<u64>(), 2..=max_n, 1..=max_p, 1..=max_bins)
}

pub fn random_coeffs(rng: &mut ChaCha8Rng, m: usize, nt: usize, scale: f64) -> Coefficients {
    let mut draw = |k| (0..k).map(|_| scale * rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
    let beta = draw(m);
    let gamma = draw(nt);
    Coefficients::new(beta, gamma).unwrap()
}

/// Cells of the time partition induced by a piecewise-constant time dictionary.
fn cells(dicts: &DictionaryPair) -> Vec<(f64, f64)> {
    let tau = dicts.time.tau();
    let mut pts = vec![0.0, tau];
    pts.extend(dicts.time.breakpoints());
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    pts.windows(2).map(|w| (w[0], w[1])).collect()
}

/// Feature vector `(f(Z), θ(t))`.
fn features(dicts: &DictionaryPair, z: &[f64], t: f64) -> Vec<f64> {
    let m = dicts.covariate.len();
    let nt = dicts.time.len();
    (0..m)
        .map(|j| dicts.covariate.eval(j, z))
        .chain((0..nt).map(|k| dicts.time.eval(k, t)))
        .collect()
}

/// `C_n`, its gradient and Hessian from the raw counting-process formula,
/// for piecewise-constant time dictionaries.
pub fn oracle_objective(cohort: &Cohort, dicts: &DictionaryPair, x: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
    let d = x.len();
    let n = cohort.len() as f64;
    let cells = cells(dicts);
    let mut value = 0.0;
    let mut grad = DVector::zeros(d);
    let mut hess = DMatrix::zeros(d, d);
    for obs in cohort.observations() {
        let end = obs.at_risk_end.min(cohort.horizon());
        for &(a, b) in &cells {
            let hi = b.min(end);
            if hi <= a {
                continue;
            }
            let phi = DVector::from_vec(features(dicts, &obs.covariates, 0.5 * (a + hi)));
            let eta: f64 = phi.iter().zip(x).map(|(p, c)| p * c).sum();
            let w = (hi - a) * eta.exp();
            value += w;
            grad += w * &phi;
            hess += w * &phi * phi.transpose();
        }
        for &s in &obs.jump_times {
            let phi = DVector::from_vec(features(dicts, &obs.covariates, s));
            let eta: f64 = phi.iter().zip(x).map(|(p, c)| p * c).sum();
            value -= eta;
            grad -= &phi;
        }
    }
    (value / n, grad / n, hess / n)
}

/// Unpenalized minimizer of `C_n` by damped Newton with Armijo backtracking.
pub fn newton_minimum(cohort: &Cohort, dicts: &DictionaryPair) -> (Vec<f64>, f64) {
    let d = dicts.dim();
    let mut x = vec![0.0; d];
    let (mut f, mut g, mut h) = oracle_objective(cohort, dicts, &x);
    for _ in 0..200 {
        if g.amax() < 1e-13 {
            break;
        }
        let step = h.clone().cholesky().expect("positive definite Hessian").solve(&(-&g));
        let slope = g.dot(&step);
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a + t * s).collect();
            let (ft, gt, ht) = oracle_objective(cohort, dicts, &trial);
            if ft <= f + 1e-4 * t * slope || t < 1e-12 {
                x = trial;
                f = ft;
                g = gt;
                h = ht;
                break;
            }
            t *= 0.5;
        }
    }
    (x, f)
}
