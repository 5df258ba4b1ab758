use intensity_lasso::experiments::{expected_gram, SimDesign};
use intensity_lasso::gram_re::{
    gram, re_constant_bruteforce_with, re_probability_bound_raw, BruteForceOptions,
};
use intensity_lasso::likelihood::{QuadratureRule, TruthEvaluator};
use intensity_lasso::model::{BaselineHazard, DictionaryPair};
use rayon::prelude::*;

fn mean_se(v: &[f64]) -> (f64, f64) {
    let k = v.len() as f64;
    let m = v.iter().sum::<f64>() / k;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (k - 1.0);
    (m, (var / k).sqrt())
}

#[test]
fn independent_unit_exponentials_are_censored_half_the_time() {
    let design = SimDesign {
        n: 100_000,
        p: 1,
        beta0: vec![0.0],
        baseline: BaselineHazard::Constant { rate: 1.0 },
        censoring_rate: 1.0,
        tau: 1e3,
        ..SimDesign::well_specified(10, 1)
    };
    let (cohort, _) = intensity_lasso::experiments::simulate_cohort(&design).unwrap();
    let delta: Vec<f64> = cohort.observations().iter().map(|o| o.jump_count() as f64).collect();
    let (m, se) = mean_se(&delta);
    assert!((m - 0.5).abs() <= 3.0 * se, "{m} ± {se}");
}

#[test]
fn piecewise_constant_survival_times_pass_kolmogorov_smirnov() {
    let edges = vec![0.0, 0.4, 1.1, 2.0];
    let rates = vec![0.5, 2.0, 0.8];
    let design = SimDesign {
        n: 10_000,
        p: 1,
        beta0: vec![0.0],
        baseline: BaselineHazard::PiecewiseConstant {
            edges: edges.clone(),
            rates: rates.clone(),
        },
        censoring_rate: 0.0,
        tau: 1e3,
        ..SimDesign::well_specified(10, 8)
    };
    let (cohort, _) = intensity_lasso::experiments::simulate_cohort(&design).unwrap();
    let mut t: Vec<f64> = cohort.observations().iter().map(|o| o.at_risk_end).collect();
    assert!(cohort.observations().iter().all(|o| o.jump_count() == 1));
    t.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let cumulative = |s: f64| {
        let mut h = 0.0;
        for k in 0..rates.len() {
            let hi = if k + 1 == rates.len() { f64::INFINITY } else { edges[k + 1] };
            if s > edges[k] {
                h += rates[k] * (s.min(hi) - edges[k]);
            }
        }
        h
    };
    let n = t.len() as f64;
    let d = t
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let f = 1.0 - (-cumulative(s)).exp();
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    // 1% critical value of the one-sample statistic
    assert!(d < 1.628 / n.sqrt(), "D = {d}");
}

#[test]
fn jump_counts_match_compensators_on_average() {
    let design = SimDesign {
        baseline: BaselineHazard::PiecewiseConstant {
            edges: vec![0.0, 0.5, 1.2],
            rates: vec![0.7, 1.4],
        },
        ..SimDesign::well_specified(200, 31)
    };
    let covs = design.design_covariates().unwrap();
    let truth = design.true_intensity().unwrap();
    let diffs: Vec<f64> = (0..500u64)
        .into_par_iter()
        .map(|r| {
            let c = design.simulate_replicate(&covs, r).unwrap();
            let dicts = DictionaryPair::coordinates_and_histogram(&c, 4).unwrap();
            let ev = TruthEvaluator::new(&c, &truth, &dicts, &QuadratureRule::exact()).unwrap();
            let comp: f64 = ev.compensators().iter().sum::<f64>() / c.len() as f64;
            c.mean_jump_count() - comp
        })
        .collect();
    let (m, se) = mean_se(&diffs);
    assert!(m.abs() <= 3.0 * se, "{m} ± {se}");
}

#[test]
fn martingale_statistics_have_mean_zero() {
    let design = SimDesign::bernstein_fixture(12);
    let covs = design.design_covariates().unwrap();
    let truth = design.true_intensity().unwrap();
    let draws: Vec<(Vec<f64>, Vec<f64>)> = (0..2000u64)
        .into_par_iter()
        .map(|r| {
            let c = design.simulate_replicate(&covs, r).unwrap();
            let dicts = DictionaryPair::coordinates_and_histogram(&c, 4).unwrap();
            TruthEvaluator::new(&c, &truth, &dicts, &QuadratureRule::exact())
                .unwrap()
                .martingale_statistics()
        })
        .collect();
    for j in 0..5 {
        let v: Vec<f64> = draws.iter().map(|d| d.0[j]).collect();
        let (m, se) = mean_se(&v);
        assert!(m.abs() <= 3.0 * se, "eta {j}: {m} ± {se}");
    }
    for k in 0..4 {
        let v: Vec<f64> = draws.iter().map(|d| d.1[k]).collect();
        let (m, se) = mean_se(&v);
        assert!(m.abs() <= 3.0 * se, "nu {k}: {m} ± {se}");
    }
}

#[test]
fn plug_in_gram_is_unbiased() {
    let design = SimDesign {
        n: 50,
        p: 3,
        beta0: vec![0.5, -0.5, 0.0],
        ..SimDesign::well_specified(50, 44)
    };
    let covs = design.design_covariates().unwrap();
    let truth = design.true_intensity().unwrap();
    let q = QuadratureRule::exact();
    let diffs: Vec<Vec<f64>> = (0..2000u64)
        .into_par_iter()
        .map(|r| {
            let c = design.simulate_replicate(&covs, r).unwrap();
            let dicts = DictionaryPair::coordinates_and_histogram(&c, 2).unwrap();
            let plug = gram(&c, &dicts, None, &q).unwrap();
            let exact = gram(&c, &dicts, Some(&truth), &q).unwrap();
            plug.entries.iter().zip(&exact.entries).map(|(a, b)| a - b).collect()
        })
        .collect();
    for e in 0..9 {
        let v: Vec<f64> = diffs.iter().map(|d| d[e]).collect();
        let (m, se) = mean_se(&v);
        assert!(m.abs() <= 3.0 * se, "entry {e}: {m} ± {se}");
    }
}

#[test]
fn empirical_re_constant_rarely_falls_below_its_population_bound() {
    let design = SimDesign {
        n: 300,
        p: 4,
        beta0: vec![0.5, -0.5, 0.0, 0.0],
        ..SimDesign::well_specified(300, 45)
    };
    let covs = design.design_covariates().unwrap();
    let truth = design.true_intensity().unwrap();
    let (s, a0) = (2, 3.0);
    let cohort0 = design.simulate_replicate(&covs, 0).unwrap();
    let dicts0 = DictionaryPair::coordinates_and_histogram(&cohort0, 2).unwrap();
    let expected = expected_gram(&design, &covs, &dicts0).unwrap();
    let kappa0 = re_constant_bruteforce_with(&expected, s, a0, &BruteForceOptions::default())
        .unwrap()
        .kappa;
    let big_a0 = truth.a0_bound(&cohort0);
    let threshold = kappa0 / (2.0 * big_a0).sqrt();
    let l = dicts0.covariate.sup_norms().iter().copied().fold(0.0, f64::max);
    let pi = re_probability_bound_raw(threshold, s, a0, l, design.n, 4).min(1.0);
    let light = BruteForceOptions {
        starts: 4,
        iterations: 100,
        seed: 9,
    };
    let below = (0..500u64)
        .into_par_iter()
        .filter(|&r| {
            let c = design.simulate_replicate(&covs, r).unwrap();
            let dicts = DictionaryPair::coordinates_and_histogram(&c, 2).unwrap();
            let g = gram(&c, &dicts, Some(&truth), &QuadratureRule::exact()).unwrap();
            re_constant_bruteforce_with(&g, s, a0, &light).unwrap().kappa < threshold
        })
        .count();
    assert!(below as f64 / 500.0 <= pi, "{below} below, pi = {pi}");
}
