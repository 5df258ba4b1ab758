use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use intensity_lasso::experiments::{OracleMode, OracleOptions, SimDesign};
use intensity_lasso::gram_re::BruteForceOptions;
use intensity_lasso::solver::SolverOptions;
use intensity_lasso::weights::WeightConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const THREADS_ENV: &str = "INTENSITY_LASSO_THREADS";

#[derive(Debug, Parser)]
#[command(name = "intensity-lasso", version, about = "Weighted-Lasso intensity estimation and Monte Carlo verifiers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the weighted Lasso on a cohort.
    Fit(Flags),
    /// Compute the data-driven penalty weights.
    Weights(Flags),
    /// Fit and report likelihood, Gram and (with a simulated truth) divergence diagnostics.
    Diagnose(Flags),
    /// Bracket the restricted-eigenvalue constant of the Gram matrix.
    ReCheck(Flags),
    /// Draw one cohort from a simulation design.
    Simulate(Flags),
    /// Monte Carlo coverage of the empirical Bernstein thresholds.
    VerifyBernstein(Flags),
    /// Monte Carlo check of the oracle inequalities.
    VerifyOracle(Flags),
    /// Mean divergence over a grid of sample sizes and dictionary sizes.
    RateSweep(Flags),
}

impl Command {
    pub fn name(&self) -> CommandName {
        match self {
            Command::Fit(_) => CommandName::Fit,
            Command::Weights(_) => CommandName::Weights,
            Command::Diagnose(_) => CommandName::Diagnose,
            Command::ReCheck(_) => CommandName::ReCheck,
            Command::Simulate(_) => CommandName::Simulate,
            Command::VerifyBernstein(_) => CommandName::VerifyBernstein,
            Command::VerifyOracle(_) => CommandName::VerifyOracle,
            Command::RateSweep(_) => CommandName::RateSweep,
        }
    }

    pub fn flags(&self) -> &Flags {
        match self {
            Command::Fit(f)
            | Command::Weights(f)
            | Command::Diagnose(f)
            | Command::ReCheck(f)
            | Command::Simulate(f)
            | Command::VerifyBernstein(f)
            | Command::VerifyOracle(f)
            | Command::RateSweep(f) => f,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandName {
    #[default]
    Fit,
    Weights,
    Diagnose,
    ReCheck,
    Simulate,
    VerifyBernstein,
    VerifyOracle,
    RateSweep,
}

impl CommandName {
    fn simulates(self) -> bool {
        matches!(
            self,
            CommandName::Simulate | CommandName::VerifyBernstein | CommandName::VerifyOracle | CommandName::RateSweep
        )
    }

    fn default_fixture(self) -> Option<Fixture> {
        match self {
            CommandName::VerifyBernstein => Some(Fixture::Bernstein),
            CommandName::VerifyOracle => Some(Fixture::WellSpecified),
            CommandName::RateSweep => Some(Fixture::FastRegime),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Fixture {
    /// n=200, p=5, 30% censoring.
    Bernstein,
    /// p=8 with three active coefficients.
    WellSpecified,
    /// p=8, constant baseline, τ=3.
    FastRegime,
}

impl Fixture {
    fn design(self, n: Option<usize>, seed: u64) -> SimDesign {
        match self {
            Fixture::Bernstein => {
                let d = SimDesign::bernstein_fixture(seed);
                n.map(|n| d.with_n(n)).unwrap_or(d)
            }
            Fixture::WellSpecified => SimDesign::well_specified(n.unwrap_or(400), seed),
            Fixture::FastRegime => SimDesign::fast_regime(n.unwrap_or(400), seed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ClaimName {
    Slow,
    Fast,
    Selection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeFlag {
    KnownBaseline,
    Full,
}

impl From<ModeFlag> for OracleMode {
    fn from(m: ModeFlag) -> Self {
        match m {
            ModeFlag::KnownBaseline => OracleMode::KnownBaseline,
            ModeFlag::Full => OracleMode::Full,
        }
    }
}

/// Command-line flags; every one overrides the matching config-file key.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// TOML config file, or a JSON report whose `config` is reused.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Right-censored CSV with header `time,status,z1,...,zp`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Simulation fixture.
    #[arg(long, value_enum)]
    pub sim: Option<Fixture>,
    /// Sample size of the fixture.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Observation horizon for --data; defaults to the largest time.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Number of histogram bins of the time dictionary.
    #[arg(long)]
    pub time_bins: Option<usize>,
    #[arg(long)]
    pub x: Option<f64>,
    #[arg(long)]
    pub y: Option<f64>,
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long)]
    pub nu_tilde: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub epsilon_tilde: Option<f64>,
    /// Multiplies every penalty weight.
    #[arg(long)]
    pub scale: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub kkt_tol: Option<f64>,
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Confidence levels for verify-bernstein.
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    pub claim: Option<ClaimName>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeFlag>,
    #[arg(long)]
    pub zeta: Option<f64>,
    /// Sparsity level of the RE constant and the oracle checks.
    #[arg(long)]
    pub sparsity: Option<usize>,
    /// Cone constant of the RE condition.
    #[arg(long)]
    pub cone: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub n_grid: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub m_grid: Option<Vec<usize>>,
    /// Worker threads for the experiments (falls back to INTENSITY_LASSO_THREADS).
    #[arg(long)]
    pub threads: Option<usize>,
    /// JSON report path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-replicate (or per-subject) CSV path.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

/// Oracle verifier settings; the solver comes from [`RunConfig::solver`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSettings {
    pub zeta: f64,
    pub weight_scale: f64,
    pub expected_re: BruteForceOptions,
    pub replicate_re: BruteForceOptions,
}

impl Default for OracleSettings {
    fn default() -> Self {
        let o = OracleOptions::default();
        Self {
            zeta: o.zeta,
            weight_scale: o.weight_scale,
            expected_re: o.expected_re,
            replicate_re: o.replicate_re,
        }
    }
}

/// Fully resolved run description, echoed into every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub command: CommandName,
    pub data: Option<PathBuf>,
    pub tau: Option<f64>,
    /// Shorthand for `sim`; folded into it on resolution.
    pub fixture: Option<Fixture>,
    pub n: Option<usize>,
    pub sim: Option<SimDesign>,
    pub seed: Option<u64>,
    /// Histogram bins; 4 for verify-bernstein and 8 otherwise when absent.
    pub time_bins: Option<usize>,
    pub weights: WeightConfig,
    pub solver: SolverOptions,
    pub oracle: OracleSettings,
    pub replicates: Option<usize>,
    pub levels: Vec<f64>,
    pub claim: Option<ClaimName>,
    pub mode: OracleMode,
    pub sparsity: Option<usize>,
    pub cone: f64,
    pub n_grid: Vec<usize>,
    pub m_grid: Vec<usize>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub table: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: CommandName::Fit,
            data: None,
            tau: None,
            fixture: None,
            n: None,
            sim: None,
            seed: None,
            time_bins: None,
            weights: WeightConfig::default(),
            solver: SolverOptions::default(),
            oracle: OracleSettings::default(),
            replicates: None,
            levels: vec![1.0, 2.0, 4.0],
            claim: None,
            mode: OracleMode::KnownBaseline,
            sparsity: None,
            cone: 3.0,
            n_grid: vec![200, 400, 800],
            m_grid: vec![8],
            threads: None,
            out: None,
            table: None,
        }
    }
}

impl RunConfig {
    pub fn bins(&self) -> usize {
        self.time_bins.expect("resolved configs carry the bin count")
    }

    pub fn oracle_options(&self) -> OracleOptions {
        OracleOptions {
            zeta: self.oracle.zeta,
            s: self.sparsity,
            weight_scale: self.oracle.weight_scale,
            solver: self.solver.clone(),
            expected_re: self.oracle.expected_re,
            replicate_re: self.oracle.replicate_re,
        }
    }
}

fn input(msg: impl Into<String>) -> CliError {
    CliError::input(msg)
}

/// Reads a TOML config, or the `config` object of a JSON report.
pub fn load_config_file(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| input(format!("cannot read {}: {e}", path.display())))?;
    let is_json = path.extension().is_some_and(|e| e == "json");
    if is_json {
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| input(format!("{}: {e}", path.display())))?;
        let value = match value {
            serde_json::Value::Object(mut map) if map.contains_key("config") && map.contains_key("tool") => {
                map.remove("config").expect("checked")
            }
            other => other,
        };
        serde_json::from_value(value).map_err(|e| input(format!("{}: {e}", path.display())))
    } else {
        toml::from_str(&text).map_err(|e| input(format!("{}: {e}", path.display())))
    }
}

/// Config file (if any), then flags, then defaults and validation.
pub fn parse_config(command: &Command) -> Result<RunConfig, CliError> {
    let f = command.flags();
    let mut c = match &f.config {
        Some(p) => load_config_file(p)?,
        None => RunConfig::default(),
    };
    c.command = command.name();
    if f.data.is_some() {
        c.data = f.data.clone();
    }
    if f.sim.is_some() {
        c.fixture = f.sim;
        c.sim = None;
    }
    macro_rules! set {
        ($($flag:ident => $($field:ident).+),* $(,)?) => {
            $(if let Some(v) = &f.$flag { c.$($field).+ = v.clone().into(); })*
        };
    }
    set!(
        x => weights.x,
        y => weights.y,
        nu => weights.nu,
        nu_tilde => weights.nu_tilde,
        epsilon => weights.epsilon,
        epsilon_tilde => weights.epsilon_tilde,
        scale => solver.global_scale,
        max_iters => solver.max_iters,
        kkt_tol => solver.kkt_tol,
        levels => levels,
        zeta => oracle.zeta,
        cone => cone,
        n_grid => n_grid,
        m_grid => m_grid,
        mode => mode,
    );
    macro_rules! set_opt {
        ($($flag:ident),*) => {
            $(if f.$flag.is_some() { c.$flag = f.$flag.clone(); })*
        };
    }
    set_opt!(time_bins, n, seed, tau, replicates, claim, sparsity, threads, out, table);
    if c.threads.is_none() {
        if let Ok(v) = std::env::var(THREADS_ENV) {
            let t = v
                .trim()
                .parse::<usize>()
                .map_err(|_| input(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
            c.threads = Some(t);
        }
    }
    resolve(c)
}

/// Folds shorthands, fills command defaults and validates; idempotent.
pub fn resolve(mut c: RunConfig) -> Result<RunConfig, CliError> {
    if c.sim.is_none() && c.data.is_none() && c.fixture.is_none() {
        c.fixture = c.command.default_fixture();
    }
    let wants_sim = c.fixture.is_some() || c.sim.is_some();
    match (c.data.is_some(), wants_sim) {
        (true, true) => return Err(input("`data` and `sim` are mutually exclusive")),
        (false, false) => return Err(input("one of `data` or `sim` is required")),
        _ => {}
    }
    if c.data.is_some() && c.command.simulates() {
        return Err(input(format!("{:?} needs a simulation design, not `data`", c.command)));
    }
    if wants_sim {
        let seed = c
            .seed
            .ok_or_else(|| input("missing key `seed`: simulation runs need a seed"))?;
        let mut design = match (c.fixture.take(), c.sim.take()) {
            (Some(fx), _) => fx.design(c.n, seed),
            (None, Some(d)) => d,
            (None, None) => unreachable!("checked above"),
        };
        design.seed = seed;
        if let Some(n) = c.n.take() {
            design = design.with_n(n);
        }
        design.validate().map_err(|e| input(format!("sim: {e}")))?;
        c.sim = Some(design);
        if c.tau.is_some() {
            return Err(input("`tau` applies to `data` only; set `sim.tau` instead"));
        }
    } else if c.n.is_some() {
        return Err(input("`n` applies to simulation fixtures only"));
    }
    let bins = c.time_bins.get_or_insert(match c.command {
        CommandName::VerifyBernstein => 4,
        _ => 8,
    });
    if *bins == 0 {
        return Err(input("`time_bins` must be positive"));
    }
    if let Some(t) = c.tau {
        if !(t > 0.0 && t.is_finite()) {
            return Err(input(format!("`tau` must be positive, got {t}")));
        }
    }
    if c.threads == Some(0) {
        return Err(input("`threads` must be positive"));
    }
    if c.replicates.is_none() {
        c.replicates = match c.command {
            CommandName::VerifyBernstein => Some(2000),
            CommandName::VerifyOracle => Some(200),
            CommandName::RateSweep => Some(100),
            _ => None,
        };
    }
    if c.replicates == Some(0) {
        return Err(input("`replicates` must be positive"));
    }
    if c.command == CommandName::VerifyOracle && c.claim.is_none() {
        return Err(input("missing key `claim`: one of slow, fast, selection"));
    }
    if c.levels.is_empty() || c.levels.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
        return Err(input("`levels` must be non-empty and positive"));
    }
    if c.n_grid.is_empty() || c.m_grid.is_empty() {
        return Err(input("`n_grid` and `m_grid` must be non-empty"));
    }
    if !(c.cone > 0.0 && c.cone.is_finite()) {
        return Err(input(format!("`cone` must be positive, got {}", c.cone)));
    }
    c.weights.validate().map_err(|e| input(format!("weights: {e}")))?;
    c.oracle_options().validate().map_err(|e| input(format!("solver/oracle: {e}")))?;
    Ok(c)
}
