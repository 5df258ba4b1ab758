use std::fs::File;

use intensity_lasso::experiments::{
    rate_sweep, representable_gamma, simulate_cohort, verify_bernstein, verify_fast_oracle, verify_slow_oracle, Claim,
    SimDesign,
};
use intensity_lasso::gram_re::{gram, re_constant_bruteforce, re_eigen_lower_bound, re_probability_bound, GramProvenance};
use intensity_lasso::likelihood::{neg_log_likelihood, SandwichCheck, TruthEvaluator};
use intensity_lasso::model::{Coefficients, Cohort, DictionaryPair, TrueIntensity};
use intensity_lasso::solver::{fit, FitResult};
use intensity_lasso::weights::{penalty_weights, PenaltyWeights};
use intensity_lasso::Error;
use serde::Serialize;

use crate::config::{ClaimName, CommandName, RunConfig};
use crate::{write_file, write_report, CliError, Status};

struct Loaded {
    cohort: Cohort,
    truth: Option<TrueIntensity>,
}

fn load(c: &RunConfig) -> Result<Loaded, CliError> {
    if let Some(path) = &c.data {
        let file = File::open(path).map_err(|e| CliError::input(format!("cannot open {}: {e}", path.display())))?;
        let cohort =
            Cohort::read_csv(file, c.tau).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        return Ok(Loaded { cohort, truth: None });
    }
    let (cohort, truth) = simulate_cohort(design(c))?;
    Ok(Loaded {
        cohort,
        truth: Some(truth),
    })
}

fn design(c: &RunConfig) -> &SimDesign {
    c.sim.as_ref().expect("resolved configs carry a design")
}

fn write_table(c: &RunConfig, bytes: Vec<u8>) -> Result<(), CliError> {
    match &c.table {
        Some(path) => write_file(path, &bytes),
        None => Ok(()),
    }
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::runtime(e.to_string());
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(&row).map_err(err)?;
    }
    w.into_inner().map_err(|e| CliError::runtime(e.to_string()))
}

pub fn execute(c: &RunConfig) -> Result<Status, CliError> {
    match c.command {
        CommandName::Fit => run_fit(c),
        CommandName::Weights => run_weights(c),
        CommandName::Diagnose => run_diagnose(c),
        CommandName::ReCheck => run_re_check(c),
        CommandName::Simulate => run_simulate(c),
        CommandName::VerifyBernstein => run_verify_bernstein(c),
        CommandName::VerifyOracle => run_verify_oracle(c),
        CommandName::RateSweep => run_rate_sweep(c),
    }
}

#[derive(Serialize)]
struct CohortSummary {
    n: usize,
    p: usize,
    tau: f64,
    events: usize,
    censored_fraction: f64,
    mean_at_risk_time: f64,
}

impl CohortSummary {
    fn of(cohort: &Cohort) -> Self {
        let n = cohort.len();
        let events: usize = cohort.observations().iter().map(|o| o.jump_count()).sum();
        let censored = cohort.observations().iter().filter(|o| o.jump_count() == 0).count();
        Self {
            n,
            p: cohort.covariate_dim(),
            tau: cohort.horizon(),
            events,
            censored_fraction: censored as f64 / n as f64,
            mean_at_risk_time: cohort.mean_at_risk_time(),
        }
    }
}

#[derive(Serialize)]
struct FitOutput {
    cohort: CohortSummary,
    time_bins: usize,
    beta: Vec<f64>,
    gamma: Vec<f64>,
    active_beta: Vec<usize>,
    active_gamma: Vec<usize>,
    objective: f64,
    neg_log_likelihood: f64,
    kkt_residual: f64,
    iterations: usize,
    converged: bool,
    /// Data-driven weights before the global scale.
    weights: PenaltyWeights,
    effective_omega: Vec<f64>,
    effective_delta: Vec<f64>,
}

struct Fitted {
    dicts: DictionaryPair,
    weights: PenaltyWeights,
    fit: FitResult,
    c_n: f64,
}

fn fit_loaded(c: &RunConfig, cohort: &Cohort) -> Result<Fitted, CliError> {
    let dicts = DictionaryPair::coordinates_and_histogram(cohort, c.bins())?;
    let weights = penalty_weights(cohort, &dicts, &c.weights)?;
    let fit = fit(cohort, &dicts, &weights, &c.solver)?;
    let c_n = neg_log_likelihood(cohort, &dicts, &fit.coeffs, &c.solver.quadrature)?;
    Ok(Fitted {
        dicts,
        weights,
        fit,
        c_n,
    })
}

fn fit_output(c: &RunConfig, cohort: &Cohort, f: &Fitted) -> FitOutput {
    FitOutput {
        cohort: CohortSummary::of(cohort),
        time_bins: c.bins(),
        beta: f.fit.coeffs.beta.clone(),
        gamma: f.fit.coeffs.gamma.clone(),
        active_beta: f.fit.active_beta.clone(),
        active_gamma: f.fit.active_gamma.clone(),
        objective: f.fit.objective,
        neg_log_likelihood: f.c_n,
        kkt_residual: f.fit.kkt_residual,
        iterations: f.fit.iterations,
        converged: f.fit.converged,
        weights: f.weights.clone(),
        effective_omega: f.fit.omega.clone(),
        effective_delta: f.fit.delta.clone(),
    }
}

fn fit_status(f: &Fitted) -> Status {
    if f.fit.converged {
        Status::Ok
    } else {
        Status::NotConverged
    }
}

fn coefficient_table(f: &Fitted) -> Result<Vec<u8>, CliError> {
    let cov = f.dicts.covariate.functions().iter().enumerate().map(|(j, func)| {
        vec![
            "covariate".into(),
            j.to_string(),
            func.name(),
            f.fit.coeffs.beta[j].to_string(),
            f.fit.omega[j].to_string(),
        ]
    });
    let time = f.dicts.time.functions().iter().enumerate().map(|(k, func)| {
        vec![
            "time".into(),
            k.to_string(),
            func.name(),
            f.fit.coeffs.gamma[k].to_string(),
            f.fit.delta[k].to_string(),
        ]
    });
    csv_bytes(&["kind", "index", "name", "coefficient", "weight"], cov.chain(time))
}

fn run_fit(c: &RunConfig) -> Result<Status, CliError> {
    let loaded = load(c)?;
    let f = fit_loaded(c, &loaded.cohort)?;
    write_table(c, coefficient_table(&f)?)?;
    let status = fit_status(&f);
    write_report(c, status, fit_output(c, &loaded.cohort, &f))?;
    Ok(status)
}

#[derive(Serialize)]
struct WeightRecord {
    kind: &'static str,
    index: usize,
    name: String,
    sup_norm: f64,
    variance: f64,
    proxy: f64,
    weight: f64,
}

#[derive(Serialize)]
struct WeightsOutput {
    cohort: CohortSummary,
    time_bins: usize,
    weights: PenaltyWeights,
    records: Vec<WeightRecord>,
}

fn run_weights(c: &RunConfig) -> Result<Status, CliError> {
    let loaded = load(c)?;
    let dicts = DictionaryPair::coordinates_and_histogram(&loaded.cohort, c.bins())?;
    let w = penalty_weights(&loaded.cohort, &dicts, &c.weights)?;
    let r = &w.records;
    let mut records: Vec<WeightRecord> = dicts
        .covariate
        .functions()
        .iter()
        .enumerate()
        .map(|(j, f)| WeightRecord {
            kind: "covariate",
            index: j,
            name: f.name(),
            sup_norm: r.covariate_sup_norms[j],
            variance: r.v_hat[j],
            proxy: r.w_hat[j],
            weight: w.omega[j],
        })
        .collect();
    records.extend(dicts.time.functions().iter().enumerate().map(|(k, f)| WeightRecord {
        kind: "time",
        index: k,
        name: f.name(),
        sup_norm: r.time_sup_norms[k],
        variance: r.r_hat[k],
        proxy: r.t_hat[k],
        weight: w.delta[k],
    }));
    let table = csv_bytes(
        &["kind", "index", "name", "sup_norm", "variance", "proxy", "weight"],
        records.iter().map(|r| {
            vec![
                r.kind.to_string(),
                r.index.to_string(),
                r.name.clone(),
                r.sup_norm.to_string(),
                r.variance.to_string(),
                r.proxy.to_string(),
                r.weight.to_string(),
            ]
        }),
    )?;
    write_table(c, table)?;
    write_report(
        c,
        Status::Ok,
        WeightsOutput {
            cohort: CohortSummary::of(&loaded.cohort),
            time_bins: c.bins(),
            weights: w,
            records,
        },
    )?;
    Ok(Status::Ok)
}

#[derive(Serialize)]
struct TruthDiagnostics {
    kullback: f64,
    log_ratio_norm_sq: f64,
    sup_log_ratio: f64,
    sandwich: SandwichCheck,
    kullback_at_zero: f64,
    /// Divergence of the best histogram approximation of the truth.
    kullback_at_oracle: Option<f64>,
}

#[derive(Serialize)]
struct DiagnoseOutput {
    fit: FitOutput,
    neg_log_likelihood_at_zero: f64,
    likelihood_decrease: f64,
    gram_provenance: GramProvenance,
    gram_min_eigenvalue: f64,
    re_eigen_lower_bound: f64,
    truth: Option<TruthDiagnostics>,
}

fn run_diagnose(c: &RunConfig) -> Result<Status, CliError> {
    let loaded = load(c)?;
    let cohort = &loaded.cohort;
    let f = fit_loaded(c, cohort)?;
    let quad = &c.solver.quadrature;
    let zero = Coefficients::zeros(f.dicts.covariate.len(), f.dicts.time.len());
    let c_zero = neg_log_likelihood(cohort, &f.dicts, &zero, quad)?;
    let g = gram(cohort, &f.dicts, loaded.truth.as_ref(), quad)?;
    let truth = match &loaded.truth {
        Some(t) => {
            let ev = TruthEvaluator::new(cohort, t, &f.dicts, quad)?;
            let oracle = representable_gamma(&t.baseline, &f.dicts)
                .ok()
                .map(|gamma| Coefficients::new(design(c).beta0.clone(), gamma))
                .transpose()?;
            Some(TruthDiagnostics {
                kullback: ev.kullback(&f.fit.coeffs)?,
                log_ratio_norm_sq: ev.log_ratio_norm_sq(&f.fit.coeffs)?,
                sup_log_ratio: ev.sup_log_ratio(&f.fit.coeffs)?,
                sandwich: ev.sandwich(&f.fit.coeffs)?,
                kullback_at_zero: ev.kullback(&zero)?,
                kullback_at_oracle: oracle.map(|o| ev.kullback(&o)).transpose()?,
            })
        }
        None => None,
    };
    let status = fit_status(&f);
    let out = DiagnoseOutput {
        neg_log_likelihood_at_zero: c_zero,
        likelihood_decrease: c_zero - f.c_n,
        gram_provenance: g.provenance,
        gram_min_eigenvalue: g.min_eigenvalue(),
        re_eigen_lower_bound: re_eigen_lower_bound(&g),
        truth,
        fit: fit_output(c, cohort, &f),
    };
    write_table(c, coefficient_table(&f)?)?;
    write_report(c, status, out)?;
    Ok(status)
}

#[derive(Serialize)]
struct ReCheckOutput {
    gram_provenance: GramProvenance,
    dim: usize,
    s: usize,
    cone: f64,
    /// `[eigenvalue lower bound, search upper bound]`; the upper end is null past the enumeration guard.
    kappa_bracket: (f64, Option<f64>),
    kappa_for_pi: f64,
    sup_norm: f64,
    pi_n: f64,
    certificate: Option<intensity_lasso::gram_re::RECertificate>,
}

fn run_re_check(c: &RunConfig) -> Result<Status, CliError> {
    let loaded = load(c)?;
    let cohort = &loaded.cohort;
    let dicts = DictionaryPair::coordinates_and_histogram(cohort, c.bins())?;
    let g = gram(cohort, &dicts, loaded.truth.as_ref(), &c.solver.quadrature)?;
    let dim = g.dim;
    let s = c.sparsity.unwrap_or(3).min(dim);
    let lower = re_eigen_lower_bound(&g);
    let (upper, certificate) = match re_constant_bruteforce(&g, s, c.cone) {
        Ok(r) => (Some(r.kappa), r.certificate),
        Err(Error::EnumerationGuard { .. }) => (None, None),
        Err(e) => return Err(e.into()),
    };
    let kappa_for_pi = upper.unwrap_or(lower);
    let sup_norm = dicts.covariate.sup_norms().iter().copied().fold(0.0, f64::max);
    let pi_n = if sup_norm > 0.0 {
        re_probability_bound(kappa_for_pi, s, c.cone, sup_norm, cohort.len(), dim)?
    } else {
        1.0
    };
    let out = ReCheckOutput {
        gram_provenance: g.provenance,
        dim,
        s,
        cone: c.cone,
        kappa_bracket: (lower, upper),
        kappa_for_pi,
        sup_norm,
        pi_n,
        certificate,
    };
    let table = csv_bytes(
        &(0..dim).map(|j| format!("g{j}")).collect::<Vec<_>>().iter().map(String::as_str).collect::<Vec<_>>(),
        g.rows().into_iter().map(|r| r.iter().map(f64::to_string).collect()),
    )?;
    write_table(c, table)?;
    write_report(c, Status::Ok, out)?;
    Ok(Status::Ok)
}

fn run_simulate(c: &RunConfig) -> Result<Status, CliError> {
    let loaded = load(c)?;
    let mut bytes = Vec::new();
    loaded.cohort.write_csv(&mut bytes)?;
    write_table(c, bytes)?;
    write_report(c, Status::Ok, CohortSummary::of(&loaded.cohort))?;
    Ok(Status::Ok)
}

fn finish_verification(c: &RunConfig, report: intensity_lasso::experiments::VerificationReport) -> Result<Status, CliError> {
    let mut bytes = Vec::new();
    report.table.write_csv(&mut bytes)?;
    write_table(c, bytes)?;
    let status = if report.pass { Status::Ok } else { Status::Failed };
    write_report(c, status, report)?;
    Ok(status)
}

fn replicates(c: &RunConfig) -> usize {
    c.replicates.expect("resolved for experiment commands")
}

fn run_verify_bernstein(c: &RunConfig) -> Result<Status, CliError> {
    let report = verify_bernstein(design(c), c.bins(), &c.weights, replicates(c), &c.levels)?;
    finish_verification(c, report)
}

fn run_verify_oracle(c: &RunConfig) -> Result<Status, CliError> {
    let opts = c.oracle_options();
    let (d, r) = (design(c), replicates(c));
    let report = match c.claim.expect("resolved for verify-oracle") {
        ClaimName::Slow => verify_slow_oracle(d, c.bins(), &c.weights, r, c.mode, &opts)?,
        ClaimName::Fast => verify_fast_oracle(d, c.bins(), &c.weights, r, c.mode, Claim::FastOracle, &opts)?,
        ClaimName::Selection => verify_fast_oracle(d, c.bins(), &c.weights, r, c.mode, Claim::Selection, &opts)?,
    };
    finish_verification(c, report)
}

fn run_rate_sweep(c: &RunConfig) -> Result<Status, CliError> {
    let sweep = rate_sweep(
        design(c),
        &c.n_grid,
        &c.m_grid,
        c.bins(),
        &c.weights,
        replicates(c),
        c.mode,
        &c.oracle_options(),
    )?;
    let table = csv_bytes(
        &["n", "m", "replicates", "non_converged", "mean_kullback", "se_kullback"],
        sweep.cells.iter().map(|cell| {
            vec![
                cell.n.to_string(),
                cell.m.to_string(),
                cell.replicates.to_string(),
                cell.non_converged.to_string(),
                cell.mean_kullback.to_string(),
                cell.se_kullback.to_string(),
            ]
        }),
    )?;
    write_table(c, table)?;
    let status = if sweep.cells.iter().any(|cell| cell.non_converged > 0) {
        Status::NotConverged
    } else {
        Status::Ok
    };
    write_report(c, status, sweep)?;
    Ok(status)
}
