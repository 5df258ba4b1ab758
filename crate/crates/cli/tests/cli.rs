use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use clap::Parser;
use intensity_lasso_cli::config::{load_config_file, CommandName, RunConfig};
use intensity_lasso_cli::{parse_config, resolve, Cli};
use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_intensity-lasso"));
    c.env_remove("INTENSITY_LASSO_THREADS");
    c
}

fn example() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/example.csv")
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn parsed(args: &[&str]) -> Result<RunConfig, intensity_lasso_cli::CliError> {
    let cli = Cli::try_parse_from(std::iter::once("intensity-lasso").chain(args.iter().copied())).unwrap();
    parse_config(&cli.command)
}

#[test]
fn flags_map_onto_the_config() {
    let c = parsed(&["fit", "--data", "c.csv", "--time-bins", "8", "--x", "3.0"]).unwrap();
    assert_eq!(c.command, CommandName::Fit);
    assert_eq!(c.time_bins, Some(8));
    assert_eq!(c.weights.x, 3.0);
    assert_eq!(c.weights.y, RunConfig::default().weights.y);
    assert_eq!(c.solver, RunConfig::default().solver);
}

#[test]
fn data_or_sim_is_required_and_exclusive() {
    assert_eq!(parsed(&["fit"]).unwrap_err().code, 2);
    let both = parsed(&["fit", "--data", "c.csv", "--sim", "well-specified", "--seed", "1"]);
    assert_eq!(both.unwrap_err().code, 2);
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["fit", "--time-bins", "3"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulation_needs_a_seed() {
    let e = parsed(&["simulate", "--sim", "bernstein"]).unwrap_err();
    assert_eq!(e.code, 2);
    assert!(e.message.contains("seed"));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "time_bins = 5\n[weights]\nx = 1.0\nnu = 0.5\n").unwrap();
    let c = parsed(&["fit", "--data", "c.csv", "--config", cfg.to_str().unwrap(), "--x", "2"]).unwrap();
    assert_eq!(c.weights.x, 2.0);
    assert_eq!(c.weights.nu, 0.5);
    assert_eq!(c.time_bins, Some(5));
}

#[test]
fn unknown_config_keys_are_rejected_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[weights]\nxx = 1.0\n").unwrap();
    let out = run(
        &["fit", "--data", example().to_str().unwrap(), "--config", cfg.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("xx"));
}

#[test]
fn fit_on_the_example_writes_only_the_declared_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &[
            "fit",
            "--data",
            example().to_str().unwrap(),
            "--time-bins",
            "4",
            "--x",
            "0.5",
            "--out",
            "fit.json",
            "--table",
            "coef.csv",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let mut names: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["coef.csv", "fit.json"]);
    let r = json(&dir.path().join("fit.json"));
    assert_eq!(r["status"], "ok");
    assert_eq!(r["version"], env!("CARGO_PKG_VERSION"));
    let res = &r["result"];
    assert_eq!(res["cohort"]["n"], 20);
    let active = res["active_beta"].as_array().unwrap().len() + res["active_gamma"].as_array().unwrap().len();
    assert!(active <= 20);
    assert!(res["converged"].as_bool().unwrap());
    assert!(res["kkt_residual"].as_f64().unwrap() <= 1e-7);
    let csv = std::fs::read_to_string(dir.path().join("coef.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 + 4);
}

#[test]
fn corrupt_rows_are_reported_with_their_number() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = std::fs::read_to_string(example()).unwrap();
    text = text
        .lines()
        .enumerate()
        .map(|(i, l)| if i == 4 { "0.5,1,abc,0.1,0.2" } else { l })
        .collect::<Vec<_>>()
        .join("\n");
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, text).unwrap();
    let out = run(&["fit", "--data", bad.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("row 5"), "{err}");
    assert!(!dir.path().join("fit.json").exists());
}

#[test]
fn report_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.json");
    let out = run(
        &[
            "verify-oracle",
            "--seed",
            "3",
            "--n",
            "150",
            "--claim",
            "slow",
            "--mode",
            "full",
            "--time-bins",
            "4",
            "--replicates",
            "10",
            "--x",
            "0.7",
            "--out",
            report.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let first = json(&report);
    let reloaded = load_config_file(&report).unwrap();
    assert_eq!(resolve(reloaded.clone()).unwrap(), reloaded);
    assert_eq!(serde_json::to_value(&reloaded).unwrap(), first["config"]);
    // rerunning from the report reproduces it byte for byte
    let before = std::fs::read(&report).unwrap();
    let again = run(&["verify-oracle", "--config", report.to_str().unwrap()], dir.path());
    assert_eq!(again.status.code(), Some(0));
    assert_eq!(std::fs::read(&report).unwrap(), before);
}

#[test]
fn verify_bernstein_passes_on_the_default_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &["verify-bernstein", "--seed", "1", "--replicates", "2000", "--out", "b.json", "--table", "b.csv"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&dir.path().join("b.json"));
    assert_eq!(r["result"]["pass"], true);
    assert_eq!(r["config"]["sim"]["n"], 200);
    let rows = std::fs::read_to_string(dir.path().join("b.csv")).unwrap().lines().count();
    // one row per replicate, level and statistic: 3 levels, 5 covariates, 4 bins
    assert_eq!(rows, 1 + 2000 * 3 * 9);
    assert_eq!(r["config"]["time_bins"], 4);
}

#[test]
fn failed_verification_exits_one_and_still_writes_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &[
            "verify-oracle",
            "--claim",
            "selection",
            "--seed",
            "4",
            "--n",
            "200",
            "--time-bins",
            "4",
            "--replicates",
            "30",
            "--out",
            "s.json",
        ],
        dir.path(),
    );
    let r = json(&dir.path().join("s.json"));
    let pass = r["result"]["pass"].as_bool().unwrap();
    assert_eq!(out.status.code(), Some(if pass { 0 } else { 1 }));
    assert_eq!(r["status"], if pass { "ok" } else { "failed" });
}

#[test]
fn simulate_writes_a_readable_cohort() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &["simulate", "--sim", "well-specified", "--n", "60", "--seed", "9", "--table", "c.csv", "--out", "s.json"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let fit = run(&["fit", "--data", "c.csv", "--time-bins", "3", "--out", "f.json"], dir.path());
    assert_eq!(fit.status.code(), Some(0), "{}", String::from_utf8_lossy(&fit.stderr));
    let s = json(&dir.path().join("s.json"));
    let f = json(&dir.path().join("f.json"));
    assert_eq!(s["result"]["events"], f["result"]["cohort"]["events"]);
}

#[test]
fn diagnose_and_re_check_report_their_quantities() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &["diagnose", "--sim", "well-specified", "--n", "200", "--seed", "5", "--x", "0.3", "--out", "d.json"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let d = json(&dir.path().join("d.json"));
    let t = &d["result"]["truth"];
    assert!(t["kullback"].as_f64().unwrap() >= 0.0);
    assert_eq!(t["sandwich"]["holds"], true);
    assert!(d["result"]["likelihood_decrease"].as_f64().unwrap() >= 0.0);

    let out = run(&["diagnose", "--data", example().to_str().unwrap(), "--out", "e.json"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(json(&dir.path().join("e.json"))["result"]["truth"].is_null());

    let out = run(
        &["re-check", "--data", example().to_str().unwrap(), "--sparsity", "2", "--out", "re.json"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let r = json(&dir.path().join("re.json"))["result"].clone();
    let (lo, hi) = (r["kappa_bracket"][0].as_f64().unwrap(), r["kappa_bracket"][1].as_f64().unwrap());
    assert!(lo <= hi + 1e-8);
    let pi = r["pi_n"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&pi));
    assert!(r["certificate"].is_object());
}

#[test]
fn weights_lists_one_record_per_function() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &["weights", "--data", example().to_str().unwrap(), "--time-bins", "5", "--out", "w.json", "--table", "w.csv"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let w = json(&dir.path().join("w.json"));
    let records = w["result"]["records"].as_array().unwrap();
    assert_eq!(records.len(), 8);
    assert!(records.iter().all(|r| r["weight"].as_f64().unwrap() > 0.0));
}

#[test]
fn rate_sweep_and_thread_settings() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "rate-sweep",
        "--seed",
        "6",
        "--n-grid",
        "100,200",
        "--m-grid",
        "4",
        "--replicates",
        "8",
        "--x",
        "0.1",
        "--y",
        "0.1",
    ];
    let one = bin()
        .args(args)
        .args(["--out", "a.json"])
        .env("INTENSITY_LASSO_THREADS", "1")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(one.status.code(), Some(0), "{}", String::from_utf8_lossy(&one.stderr));
    let two = run(&[&args[..], &["--threads", "2", "--out", "b.json"]].concat(), dir.path());
    assert_eq!(two.status.code(), Some(0));
    let (a, b) = (json(&dir.path().join("a.json")), json(&dir.path().join("b.json")));
    assert_eq!(a["config"]["threads"], 1);
    assert_eq!(b["config"]["threads"], 2);
    assert_eq!(a["result"], b["result"]);
    assert_eq!(a["result"]["cells"].as_array().unwrap().len(), 2);

    let bad = bin()
        .args(args)
        .env("INTENSITY_LASSO_THREADS", "many")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn selection_rejects_full_mode() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &["verify-oracle", "--claim", "selection", "--mode", "full", "--seed", "1", "--replicates", "2"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}
