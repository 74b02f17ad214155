use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gmm_weights::harness::{
    exceeds_flag_limit, run, run_sweep, write_outputs, RunReport, Scenario, ScenarioConfig, SchemeKind, UpdaterKind,
};
use gmm_weights::TraditionalSigmaForm;

/// Gaussian mixture weight comparison experiments.
#[derive(Parser, Debug)]
#[command(name = "gmm-weights", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Single update of the two-dimensional quadratic measurement problem.
    Avocado(RunArgs),
    /// Ensemble filter tracking a halo orbit from angles-only tracklets.
    Nrho(RunArgs),
    /// Fuzzed check that every weight scheme is exact for linear measurements.
    LinearCheck(LinearArgs),
    /// Traditional against improved weights over several component counts.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum UpdaterArg {
    Ekf,
    Bruf,
    Ukf,
    Ckf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SchemeArg {
    Traditional,
    Improved,
    TraditionalSigma,
    ImprovedSigma,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SigmaFormArg {
    PredictedMean,
    SigmaMixture,
    SigmaLikelihood,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SweepScenario {
    Avocado,
    Nrho,
}

#[derive(Args, Debug)]
struct CommonArgs {
    /// TOML file with a full or partial configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the JSON report here as well as to stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FilterArgs {
    #[arg(long, value_enum)]
    updater: Option<UpdaterArg>,
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    #[arg(long, value_enum)]
    traditional_sigma_form: Option<SigmaFormArg>,
    #[arg(long)]
    monte_carlo: Option<usize>,
    #[arg(long)]
    bruf_steps: Option<usize>,
    #[arg(long)]
    ut_alpha: Option<f64>,
    #[arg(long)]
    ut_beta: Option<f64>,
    #[arg(long)]
    ut_kappa: Option<f64>,
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long)]
    abs_tol: Option<f64>,
    /// Exit with status 2 when more than this fraction of trials is flagged.
    #[arg(long)]
    max_flagged_fraction: Option<f64>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    filter: FilterArgs,
    /// Mixture components (Avocado) or ensemble members (NRHO).
    #[arg(long)]
    components: Option<usize>,
    /// Per-trial CSV of RMSE and SNEES.
    #[arg(long)]
    trial_csv: Option<PathBuf>,
    /// Directory for Avocado density grids, one CSV per field.
    #[arg(long)]
    grid_dump: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct LinearArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    cases: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long, value_enum, default_value = "avocado")]
    scenario: SweepScenario,
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    filter: FilterArgs,
    /// Comma separated component counts.
    #[arg(long, value_delimiter = ',')]
    components: Option<Vec<usize>>,
}

fn load(common: &CommonArgs, scenario: Scenario) -> Result<ScenarioConfig> {
    let mut cfg = match &common.config {
        Some(path) => ScenarioConfig::from_file(path).with_context(|| format!("reading {}", path.display()))?,
        None => ScenarioConfig::default(),
    };
    cfg.scenario = scenario;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if common.output.is_some() {
        cfg.output = common.output.clone();
    }
    Ok(cfg)
}

fn apply_filter(cfg: &mut ScenarioConfig, f: &FilterArgs) {
    if let Some(u) = f.updater {
        cfg.updater = match u {
            UpdaterArg::Ekf => UpdaterKind::Ekf,
            UpdaterArg::Bruf => UpdaterKind::Bruf,
            UpdaterArg::Ukf => UpdaterKind::Ukf,
            UpdaterArg::Ckf => UpdaterKind::Ckf,
        };
    }
    if let Some(s) = f.scheme {
        cfg.scheme = match s {
            SchemeArg::Traditional => SchemeKind::Traditional,
            SchemeArg::Improved => SchemeKind::Improved,
            SchemeArg::TraditionalSigma => SchemeKind::TraditionalSigma,
            SchemeArg::ImprovedSigma => SchemeKind::ImprovedSigma,
        };
    }
    if let Some(form) = f.traditional_sigma_form {
        cfg.traditional_sigma_form = match form {
            SigmaFormArg::PredictedMean => TraditionalSigmaForm::PredictedMean,
            SigmaFormArg::SigmaMixture => TraditionalSigmaForm::SigmaMixture,
            SigmaFormArg::SigmaLikelihood => TraditionalSigmaForm::SigmaLikelihood,
        };
    }
    if f.monte_carlo.is_some() {
        cfg.monte_carlo = f.monte_carlo;
    }
    if let Some(n) = f.bruf_steps {
        cfg.bruf_steps = n;
    }
    cfg.ut_alpha = f.ut_alpha.or(cfg.ut_alpha);
    cfg.ut_beta = f.ut_beta.or(cfg.ut_beta);
    cfg.ut_kappa = f.ut_kappa.or(cfg.ut_kappa);
    if let Some(t) = f.rel_tol {
        cfg.integrator.rel_tol = t;
    }
    if let Some(t) = f.abs_tol {
        cfg.integrator.abs_tol = t;
    }
    if let Some(x) = f.max_flagged_fraction {
        cfg.max_flagged_fraction = x;
    }
}

fn build(command: &Command) -> Result<ScenarioConfig> {
    let cfg = match command {
        Command::Avocado(a) | Command::Nrho(a) => {
            let scenario = if matches!(command, Command::Avocado(_)) {
                Scenario::Avocado
            } else {
                Scenario::Nrho
            };
            let mut cfg = load(&a.common, scenario)?;
            apply_filter(&mut cfg, &a.filter);
            if a.components.is_some() {
                cfg.components = a.components;
            }
            if a.trial_csv.is_some() {
                cfg.trial_csv = a.trial_csv.clone();
            }
            if a.grid_dump.is_some() {
                cfg.grid_dump = a.grid_dump.clone();
            }
            cfg
        }
        Command::LinearCheck(a) => {
            let mut cfg = load(&a.common, Scenario::LinearCheck)?;
            if let Some(n) = a.cases {
                cfg.linear.cases = n;
            }
            if let Some(t) = a.tolerance {
                cfg.linear.tolerance = t;
            }
            cfg
        }
        Command::Sweep(a) => {
            let scenario = match a.scenario {
                SweepScenario::Avocado => Scenario::Avocado,
                SweepScenario::Nrho => Scenario::Nrho,
            };
            let mut cfg = load(&a.common, scenario)?;
            apply_filter(&mut cfg, &a.filter);
            if let Some(counts) = &a.components {
                cfg.sweep.components = counts.clone();
            }
            cfg
        }
    };
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<ExitCode> {
    let cfg = build(&cli.command)?;
    let report = match &cli.command {
        Command::Sweep(_) => {
            let report = RunReport {
                scenario: cfg.scenario,
                seed: cfg.seed,
                records: run_sweep(&cfg)?,
                linear_check: None,
            };
            write_outputs(&cfg, &report, None)?;
            report
        }
        _ => run(&cfg)?,
    };
    println!("{}", report.to_json()?);
    if let Some(check) = &report.linear_check {
        if !check.passed {
            bail!(
                "linear check failed: max discrepancy {:e} exceeds {:e}",
                check.max_discrepancy,
                check.tolerance
            );
        }
    }
    if exceeds_flag_limit(&report.records, cfg.max_flagged_fraction) {
        eprintln!("more than {} of trials were flagged", cfg.max_flagged_fraction);
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
