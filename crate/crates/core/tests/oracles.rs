mod common;

use common::{newton_minimum, oracle_objective};
use intensity_lasso::experiments::{representable_gamma, SimDesign};
use intensity_lasso::gram_re::{re_probability_bound, re_probability_bound_raw};
use intensity_lasso::likelihood::{empirical_kullback, neg_log_likelihood, QuadratureRule};
use intensity_lasso::model::{
    BaselineHazard, Coefficients, Cohort, CountingObservation, CovariateDictionary, DictionaryPair, TimeDictionary,
    TimeFunction, TrueIntensity,
};
use intensity_lasso::solver::{fit, fit_known_baseline, regularization_path, SolverOptions};
use intensity_lasso::weights::{
    bernstein_tail_constant, penalty_weights, phi, variance_proxy, PenaltyWeights, WeightConfig,
};

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn frozen_high_precision_values() {
    // 50-digit evaluations of the closed forms
    assert!(rel(re_probability_bound_raw(0.5, 2, 3.0, 1.0, 100, 10), 199.392_159_317_739_88) < 1e-12);
    assert!(rel(re_probability_bound_raw(0.5, 1, 1.0, 1.0, 20_000, 10), 4.815_248_430_361_404_5e-15) < 1e-12);
    assert_eq!(re_probability_bound(0.5, 2, 3.0, 1.0, 100, 10).unwrap(), 1.0);
    assert!(rel(variance_proxy(2.0, 1.0, 1.0, 1.0, 100).unwrap(), 3.015_126_008_022_174_8) < 1e-12);
    assert!(rel(bernstein_tail_constant(0.1, 1.0, 1.0, 100, 3.0).unwrap(), 18.794_831_109_792_932) < 1e-12);
    assert!(rel(bernstein_tail_constant(0.1, 1.0, 1.0, 100, 1e12).unwrap(), 15.545_081_794_683_438) < 1e-9);
    assert!(rel(phi(1e-8), 5.000_000_016_666_667e-17) < 1e-12);
    assert!(rel(phi(1.0), std::f64::consts::E - 2.0) < 1e-15);
}

#[test]
fn zero_event_weight_matches_closed_form() {
    let obs: Vec<_> = (0..100)
        .map(|i| {
            let mut z = vec![0.0; 10];
            z[i % 10] = if i % 20 < 10 { 1.0 } else { -1.0 };
            CountingObservation::right_censored(z, 1.0, false)
        })
        .collect();
    let cohort = Cohort::new(obs, 1.0).unwrap();
    let dicts = DictionaryPair::coordinates_and_histogram(&cohort, 2).unwrap();
    let cfg = WeightConfig::new(1.0, 1.0, 0.1, 0.1, 1.0, 1.0).unwrap();
    let w = penalty_weights(&cohort, &dicts, &cfg).unwrap();
    for om in &w.omega {
        assert!(rel(*om, 0.562_473_367_932_779_47) < 1e-12, "{om}");
    }
}

#[test]
fn gradient_of_constant_basis_at_zero() {
    // dC/dγ = -(mean jumps - mean at-risk time) at the origin
    let obs = vec![
        CountingObservation::right_censored(vec![0.3], 0.5, true),
        CountingObservation::right_censored(vec![-0.2], 2.0, false),
        CountingObservation::right_censored(vec![0.9], 1.2, true),
    ];
    let cohort = Cohort::new(obs, 2.0).unwrap();
    let dicts = DictionaryPair::new(
        CovariateDictionary::coordinates(&cohort).unwrap(),
        TimeDictionary::from_functions(vec![TimeFunction::Constant(1.0)], 2.0).unwrap(),
    );
    let g = intensity_lasso::likelihood::grad_neg_log_likelihood(
        &cohort,
        &dicts,
        &Coefficients::zeros(1, 1),
        &QuadratureRule::exact(),
    )
    .unwrap();
    assert!((g[1] + (2.0 / 3.0 - 3.7 / 3.0)).abs() < 1e-14);
}

#[test]
fn likelihood_matches_the_counting_process_formula() {
    let design = SimDesign::well_specified(60, 3);
    let covs = design.design_covariates().unwrap();
    let cohort = design.simulate_replicate(&covs, 0).unwrap();
    let dicts = DictionaryPair::coordinates_and_histogram(&cohort, 5).unwrap();
    let x: Vec<f64> = (0..dicts.dim()).map(|k| 0.1 * (k as f64) - 0.4).collect();
    let ours = neg_log_likelihood(&cohort, &dicts, &Coefficients::from_flat(&x, 8), &QuadratureRule::exact()).unwrap();
    let (oracle, _, _) = oracle_objective(&cohort, &dicts, &x);
    assert!((ours - oracle).abs() < 1e-12);
}

/// Cohorts small enough for Newton, with events in every bin.
fn newton_instances(count: usize) -> Vec<(Cohort, DictionaryPair)> {
    let design = SimDesign {
        n: 45,
        p: 3,
        beta0: vec![0.6, -0.4, 0.0],
        censoring_rate: 0.3,
        tau: 2.0,
        ..SimDesign::well_specified(45, 17)
    };
    let covs = design.design_covariates().unwrap();
    let mut out = Vec::new();
    let mut r = 0;
    while out.len() < count {
        let cohort = design.simulate_replicate(&covs, r).unwrap();
        r += 1;
        let dicts = DictionaryPair::coordinates_and_histogram(&cohort, 3).unwrap();
        let enough = (0..3).all(|k| {
            cohort
                .observations()
                .iter()
                .flat_map(|o| o.jump_times.iter())
                .filter(|&&s| dicts.time.eval(k, s) > 0.0)
                .count()
                >= 2
        });
        if enough {
            out.push((cohort, dicts));
        }
    }
    out
}

#[test]
fn unpenalized_fit_matches_newton() {
    let opts = SolverOptions {
        global_scale: 0.0,
        kkt_tol: 1e-9,
        max_iters: 50_000,
        ..SolverOptions::default()
    };
    for (cohort, dicts) in newton_instances(20) {
        let w = PenaltyWeights::from_values(vec![1.0; 3], vec![1.0; 3], WeightConfig::default()).unwrap();
        let f = fit(&cohort, &dicts, &w, &opts).unwrap();
        let (x, value) = newton_minimum(&cohort, &dicts);
        assert!(f.converged);
        assert!((f.objective - value).abs() < 1e-5, "{} vs {}", f.objective, value);
        for (a, b) in f.coeffs.to_flat().iter().zip(&x) {
            assert!((a - b).abs() < 1e-4);
        }
        let path = regularization_path(&cohort, &dicts, &w, &[1.0, 0.0], &opts).unwrap();
        assert!((path[1].objective - value).abs() < 1e-5);
    }
}

#[test]
fn constant_basis_mle_is_events_over_exposure() {
    let design = SimDesign::well_specified(200, 9);
    let covs = design.design_covariates().unwrap();
    let cohort = design.simulate_replicate(&covs, 0).unwrap();
    let dicts = DictionaryPair::new(
        CovariateDictionary::from_functions(Vec::new(), &cohort).unwrap(),
        TimeDictionary::from_functions(vec![TimeFunction::Constant(1.0)], cohort.horizon()).unwrap(),
    );
    let w = PenaltyWeights::from_values(Vec::new(), vec![1.0], WeightConfig::default()).unwrap();
    let opts = SolverOptions {
        global_scale: 0.0,
        ..SolverOptions::default()
    };
    let f = fit(&cohort, &dicts, &w, &opts).unwrap();
    let expected = (cohort.mean_jump_count() / cohort.mean_at_risk_time()).ln();
    assert!((f.coeffs.gamma[0] - expected).abs() < 1e-6);
}

#[test]
fn fit_beats_the_oracle_point() {
    let design = SimDesign {
        n: 500,
        p: 10,
        beta0: vec![0.8, -0.6, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        baseline: BaselineHazard::PiecewiseConstant {
            edges: vec![0.0, 0.5, 1.0, 1.5],
            rates: vec![0.5, 1.0, 1.5],
        },
        tau: 2.0,
        ..SimDesign::well_specified(500, 4)
    };
    let covs = design.design_covariates().unwrap();
    let cohort = design.simulate_replicate(&covs, 0).unwrap();
    let dicts = DictionaryPair::coordinates_and_histogram(&cohort, 8).unwrap();
    let w = penalty_weights(&cohort, &dicts, &WeightConfig::default()).unwrap();
    let f = fit(&cohort, &dicts, &w, &SolverOptions::default()).unwrap();
    assert!(f.converged);
    let gamma = representable_gamma(&design.baseline, &dicts).unwrap();
    let at_truth = Coefficients::new(design.beta0.clone(), gamma).unwrap();
    let smooth = neg_log_likelihood(&cohort, &dicts, &at_truth, &QuadratureRule::exact()).unwrap();
    let pen: f64 = at_truth
        .beta
        .iter()
        .zip(&f.omega)
        .chain(at_truth.gamma.iter().zip(&f.delta))
        .map(|(c, w)| c.abs() * w)
        .sum();
    assert!(f.objective <= smooth + pen);
}

#[test]
fn known_baseline_fit_equals_frozen_gamma_fit() {
    let baseline = BaselineHazard::PiecewiseConstant {
        edges: vec![0.0, 0.5, 1.0, 1.5],
        rates: vec![0.6, 1.2, 0.9],
    };
    let design = SimDesign {
        baseline: baseline.clone(),
        tau: 2.0,
        ..SimDesign::fast_regime(300, 21)
    };
    let covs = design.design_covariates().unwrap();
    let cohort = design.simulate_replicate(&covs, 0).unwrap();
    let dicts = DictionaryPair::coordinates_and_histogram(&cohort, 4).unwrap();
    let w = penalty_weights(&cohort, &dicts, &WeightConfig::with_levels(0.1, 0.1).unwrap())
        .unwrap()
        .scaled(0.5);
    let opts = SolverOptions {
        kkt_tol: 1e-11,
        max_iters: 50_000,
        ..SolverOptions::default()
    };
    let known = fit_known_baseline(&cohort, &dicts, &baseline, &w, &opts).unwrap();
    let frozen = fit(
        &cohort,
        &dicts,
        &w,
        &SolverOptions {
            fix_gamma: Some(representable_gamma(&baseline, &dicts).unwrap()),
            ..opts.clone()
        },
    )
    .unwrap();
    assert!(known.converged && frozen.converged);
    assert!(known.kkt_residual <= 1e-7);
    assert!(known.coeffs.beta.iter().any(|b| *b != 0.0));
    for (a, b) in known.coeffs.beta.iter().zip(&frozen.coeffs.beta) {
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }
    let huge = w.scaled(1e6);
    let zero = fit_known_baseline(&cohort, &dicts, &baseline, &huge, &opts).unwrap();
    assert!(zero.coeffs.beta.iter().all(|b| *b == 0.0));
}

#[test]
fn smaller_penalty_path_point_wins_under_the_smaller_penalty() {
    let design = SimDesign::fast_regime(200, 2);
    let covs = design.design_covariates().unwrap();
    let cohort = design.simulate_replicate(&covs, 0).unwrap();
    let dicts = DictionaryPair::coordinates_and_histogram(&cohort, 4).unwrap();
    let w = penalty_weights(&cohort, &dicts, &WeightConfig::with_levels(0.2, 0.2).unwrap()).unwrap();
    let opts = SolverOptions::default();
    let path = regularization_path(&cohort, &dicts, &w, &[50.0, 2.0, 0.5], &opts).unwrap();
    assert!(path.iter().all(|f| f.converged && f.kkt_residual <= opts.kkt_tol));
    assert!(path[0].coeffs.to_flat().iter().all(|c| *c == 0.0));
    let at_small = |c: &Coefficients| {
        let smooth = neg_log_likelihood(&cohort, &dicts, c, &opts.quadrature).unwrap();
        let flat = c.to_flat();
        let wts: Vec<f64> = path[2].omega.iter().chain(&path[2].delta).copied().collect();
        smooth + flat.iter().zip(&wts).map(|(a, b)| a.abs() * b).sum::<f64>()
    };
    assert!(at_small(&path[2].coeffs) <= at_small(&path[1].coeffs) + 1e-12);
    assert!(at_small(&path[2].coeffs) <= at_small(&path[0].coeffs) + 1e-12);
}

#[test]
fn kullback_of_misspecified_candidates_is_positive() {
    let truth = TrueIntensity::cox(BaselineHazard::Constant { rate: 1.0 }, vec![0.5, 0.0]).unwrap();
    let design = SimDesign {
        n: 50,
        p: 2,
        beta0: vec![0.5, 0.0],
        ..SimDesign::well_specified(50, 5)
    };
    let covs = design.design_covariates().unwrap();
    let cohort = design.simulate_replicate(&covs, 0).unwrap();
    let dicts = DictionaryPair::coordinates_and_histogram(&cohort, 3).unwrap();
    let q = QuadratureRule::exact();
    let exact = Coefficients::new(vec![0.5, 0.0], vec![0.0; 3]).unwrap();
    assert!(empirical_kullback(&cohort, &truth, &dicts, &exact, &q).unwrap().abs() < 1e-10);
    let off = Coefficients::new(vec![0.5, 0.1], vec![0.0; 3]).unwrap();
    assert!(empirical_kullback(&cohort, &truth, &dicts, &off, &q).unwrap() > 0.0);
}
