use intensity_lasso::experiments::{
    rate_sweep, verify_bernstein, verify_fast_oracle, verify_slow_oracle, Claim, OracleMode, OracleOptions, SimDesign,
};
use intensity_lasso::weights::WeightConfig;

#[test]
fn bernstein_extreme_levels() {
    let design = SimDesign::bernstein_fixture(3);
    let cfg = WeightConfig::default();
    let r = verify_bernstein(&design, 4, &cfg, 2000, &[20.0, 0.1]).unwrap();
    for name in ["eta x=20", "nu x=20"] {
        let c = r.check(name).unwrap();
        assert_eq!(c.violations, 0);
        assert!(c.bound < 1e-6 && c.informative);
    }
    for name in ["eta x=0.1", "nu x=0.1"] {
        let c = r.check(name).unwrap();
        assert!(c.raw_bound > 1.0 && !c.informative && c.pass);
    }
}

#[test]
fn bernstein_exceedance_decreases_with_the_level() {
    let design = SimDesign::bernstein_fixture(4);
    let levels = [0.5, 1.0, 2.0, 4.0];
    let r = verify_bernstein(&design, 4, &WeightConfig::default(), 2000, &levels).unwrap();
    for stat in ["eta", "nu"] {
        let checks: Vec<_> = levels.iter().map(|x| r.check(&format!("{stat} x={x}")).unwrap()).collect();
        for w in checks.windows(2) {
            let se = (w[0].se.powi(2) + w[1].se.powi(2)).sqrt();
            assert!(w[1].rate <= w[0].rate + 3.0 * se, "{} -> {}", w[0].name, w[1].name);
        }
    }
}

#[test]
fn slow_oracle_survives_doubled_weights() {
    let design = SimDesign::well_specified(300, 5);
    let cfg = WeightConfig::with_levels(0.3, 0.3).unwrap();
    let base = OracleOptions::default();
    let doubled = OracleOptions {
        weight_scale: 2.0,
        ..OracleOptions::default()
    };
    for mode in [OracleMode::KnownBaseline, OracleMode::Full] {
        let a = verify_slow_oracle(&design, 4, &cfg, 200, mode, &base).unwrap();
        let b = verify_slow_oracle(&design, 4, &cfg, 200, mode, &doubled).unwrap();
        let (ca, cb) = (a.check("slow-oracle").unwrap(), b.check("slow-oracle").unwrap());
        let se = (ca.se.powi(2) + cb.se.powi(2)).sqrt();
        assert!(cb.rate <= ca.rate + 3.0 * se);
        assert!(a.table.rows.iter().all(|row| row.iter().all(|v| !v.is_nan())));
        assert!(a.pass && b.pass);
    }
}

#[test]
fn fast_oracle_violations_do_not_grow_with_zeta() {
    let design = SimDesign::well_specified(400, 6);
    let cfg = WeightConfig::with_levels(0.1, 0.1).unwrap();
    let mut last: Option<(f64, f64)> = None;
    for zeta in [0.5, 3.0, 20.0] {
        let opts = OracleOptions {
            zeta,
            ..OracleOptions::default()
        };
        let r = verify_fast_oracle(&design, 4, &cfg, 60, OracleMode::KnownBaseline, Claim::FastOracle, &opts).unwrap();
        let c = r.check("fast-oracle").unwrap();
        if let Some((rate, se)) = last {
            assert!(c.rate <= rate + 3.0 * (se * se + c.se * c.se).sqrt());
        }
        last = Some((c.rate, c.se));
        assert!(r.check("kappa-bracket").unwrap().violations == 0);
    }
}

#[test]
fn rate_sweep_error_grows_with_the_dictionary() {
    let base = SimDesign::fast_regime(200, 5);
    let cfg = WeightConfig::with_levels(0.1, 0.1).unwrap();
    let sweep = rate_sweep(
        &base,
        &[200, 400],
        &[4, 8, 16],
        8,
        &cfg,
        100,
        OracleMode::KnownBaseline,
        &OracleOptions::default(),
    )
    .unwrap();
    for n in [200, 400] {
        for w in [4, 8, 16].windows(2) {
            let a = sweep.cell(n, w[0]).unwrap();
            let b = sweep.cell(n, w[1]).unwrap();
            let se = (a.se_kullback.powi(2) + b.se_kullback.powi(2)).sqrt();
            assert!(b.mean_kullback >= a.mean_kullback - 3.0 * se);
        }
    }
    assert!(sweep.cells.iter().all(|c| c.non_converged == 0));
}

#[test]
fn replicate_table_is_written_as_csv() {
    let design = SimDesign::well_specified(100, 5);
    let r = verify_slow_oracle(
        &design,
        4,
        &WeightConfig::default(),
        5,
        OracleMode::Full,
        &OracleOptions::default(),
    )
    .unwrap();
    let mut buf = Vec::new();
    r.table.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 6);
    assert_eq!(text.lines().next().unwrap().split(',').count(), r.table.columns.len());
}
