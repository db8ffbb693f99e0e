use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kstep::config::{ExperimentConfig, InitializerConfig, Preset, SamplerSettings, DEFAULT_GRID_C};
use kstep::error::{Error, Result};
use kstep::harness::{self, Engine};
use kstep::io::{self as kio, DatasetManifest};
use kstep::report;
use kstep_core::data::{
    calibrate_censoring, generate_current_status, generate_right_censored, Scheme, TrueModel,
};
use kstep_core::icm::CurrentStatusProfile;

#[derive(Parser)]
#[command(name = "kstep", version = concat!(env!("CARGO_PKG_VERSION"), " (", env!("KSTEP_GIT_DESCRIBE"), ")"))]
#[command(
    about = "K-step profile-likelihood estimation for Cox models under right censoring and current status data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one dataset and print the K-step trace, estimate and interval as JSON.
    Fit(FitArgs),
    /// Run a replicated simulation experiment.
    Simulate(SimulateArgs),
    /// Draw one dataset from the simulation model.
    Generate(GenerateArgs),
    /// Dump the current-status NPMLE of the cumulative hazard at a fixed theta.
    Hazard(HazardArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Rc,
    Cs,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Rc => Scheme::RightCensored,
            SchemeArg::Cs => Scheme::CurrentStatus,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    Grid,
    Stochastic,
    Sampler,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Table1,
    Table2,
}

#[derive(Clone, Copy, ValueEnum)]
enum StudyArg {
    Experiment,
    Rate,
    Coverage,
}

/// Estimation knobs shared by `fit` and `simulate`.
#[derive(Args)]
struct Knobs {
    /// Censoring scheme.
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    /// Initializer accuracy exponent.
    #[arg(long)]
    psi: Option<f64>,
    /// Convergence-rate exponent of the nuisance estimator.
    #[arg(long)]
    r: Option<f64>,
    /// Constant of the score step s.
    #[arg(long = "cs")]
    c_s: Option<f64>,
    /// Constant of the curvature step t.
    #[arg(long = "ct")]
    c_t: Option<f64>,
    /// Initializer.
    #[arg(long, value_enum)]
    init: Option<InitArg>,
    /// Number of K-step updates, overriding the iteration count.
    #[arg(long)]
    k: Option<usize>,
    /// Interval level is 1 - alpha.
    #[arg(long)]
    alpha: Option<f64>,
    /// Base seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl Knobs {
    fn apply(&self, mut cfg: ExperimentConfig) -> Result<ExperimentConfig> {
        if let Some(s) = self.scheme {
            let s = Scheme::from(s);
            if s != cfg.scheme {
                cfg.scheme = s;
                cfg.initializer = None;
                cfg.psi = None;
                cfg.r = None;
                cfg.target_event_fraction = None;
            }
        }
        if let Some(init) = self.init {
            cfg.initializer = Some(match init {
                InitArg::Grid => InitializerConfig::Grid { c: DEFAULT_GRID_C },
                InitArg::Stochastic => InitializerConfig::Stochastic { c: DEFAULT_GRID_C },
                InitArg::Sampler => InitializerConfig::Sampler(SamplerSettings::default()),
            });
        }
        cfg.psi = self.psi.or(cfg.psi);
        cfg.r = self.r.or(cfg.r);
        cfg.c_s = self.c_s.unwrap_or(cfg.c_s);
        cfg.c_t = self.c_t.unwrap_or(cfg.c_t);
        cfg.k = self.k.or(cfg.k);
        cfg.alpha = self.alpha.unwrap_or(cfg.alpha);
        cfg.base_seed = self.seed.unwrap_or(cfg.base_seed);
        cfg.resolve()
    }
}

#[derive(Args)]
struct FitArgs {
    /// Dataset CSV (`y,delta,z1..zd`), or `-` for stdin.
    #[arg(long)]
    data: PathBuf,
    /// JSON configuration, or `-` for stdin.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    knobs: Knobs,
    /// Output JSON file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the nuisance estimate at the final iterate as CSV (current status only).
    #[arg(long)]
    hazard: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Start from the setup of one of the two reference tables.
    #[arg(long, value_enum, conflicts_with_all = ["config", "columns"])]
    preset: Option<PresetArg>,
    /// JSON configuration, or `-` for stdin.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    knobs: Knobs,
    /// Sample sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    /// Replicates per sample size.
    #[arg(long)]
    replicates: Option<usize>,
    /// Table columns, comma separated.
    #[arg(long, value_delimiter = ',')]
    columns: Option<Vec<String>>,
    /// Which study to run.
    #[arg(long, value_enum, default_value = "experiment")]
    study: StudyArg,
    /// Worker threads; defaults to the available cores.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Exit 0 even when some replicates failed.
    #[arg(long)]
    allow_failures: bool,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    scheme: SchemeArg,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// True regression coefficients, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1.0")]
    theta0: Vec<f64>,
    /// Expected fraction of observations with delta = 1 (default 0.9 for rc, 0.5 for cs).
    #[arg(long)]
    target_event_fraction: Option<f64>,
    /// Output CSV; a `.json` sidecar is written next to it. Stdout when `-`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct HazardArgs {
    /// Current-status dataset CSV, or `-` for stdin.
    #[arg(long)]
    data: PathBuf,
    /// Regression coefficients, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    theta: Vec<f64>,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) if p != Path::new("-") => std::fs::write(p, bytes).map_err(|e| Error::io(p, e)),
        _ => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("serializable");
    v.push(b'\n');
    v
}

fn base_config(config: Option<&Path>, scheme: Option<SchemeArg>) -> Result<ExperimentConfig> {
    match (config, scheme) {
        (Some(p), _) => ExperimentConfig::from_path(p),
        (None, Some(s)) => Ok(ExperimentConfig::new(s.into())),
        (None, None) => Err(Error::config("either --scheme or --config is required")),
    }
}

fn fit(args: FitArgs) -> Result<()> {
    let mut cfg = args
        .knobs
        .apply(base_config(args.config.as_deref(), args.knobs.scheme)?)?;
    let data = kio::read_dataset(&args.data, cfg.scheme)?;
    if cfg.dim() != data.dim() {
        cfg.theta0 = vec![0.0; data.dim()];
        cfg = cfg.resolve()?;
    }
    let (report, engine) = harness::fit_dataset(&data, &cfg, cfg.base_seed)?;
    if let Some(path) = &args.hazard {
        let Engine::CurrentStatus(profile) = &engine else {
            return Err(Error::config(
                "--hazard is available for current-status data only",
            ));
        };
        let mut buf = Vec::new();
        kio::format_hazard(&mut buf, &profile.fit(&report.estimate.theta_k)?.hazard)
            .map_err(|e| Error::io(path, e))?;
        emit(Some(path), &buf)?;
    }
    emit(args.out.as_deref(), &to_json(&report))
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let mut cfg = match args.preset {
        Some(PresetArg::Table1) => Preset::Table1.config(),
        Some(PresetArg::Table2) => Preset::Table2.config(),
        None => base_config(args.config.as_deref(), args.knobs.scheme)?,
    };
    if let Some(n) = args.n {
        cfg.n = n;
    }
    if let Some(r) = args.replicates {
        cfg.replicates = r;
    }
    if args.columns.is_some() {
        cfg.columns = args.columns;
    }
    let cfg = args.knobs.apply(cfg)?;
    let workers = args.workers.unwrap_or_else(harness::default_workers);
    let outcome = match args.study {
        StudyArg::Experiment => harness::run_experiment(&cfg, workers)?,
        StudyArg::Rate => {
            let study = harness::rate_study(&cfg, &cfg.n, workers)?;
            std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
            kio::write_json(&args.out.join("rate.json"), &study.fit)?;
            study.outcome
        }
        StudyArg::Coverage => {
            let study = harness::coverage_study(&cfg, cfg.alpha, workers)?;
            std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
            kio::write_json(&args.out.join("coverage.json"), &study.coverage)?;
            study.outcome
        }
    };
    report::write_outputs(&outcome, &args.out)?;
    let failed = outcome.failures();
    if failed > 0 {
        eprintln!(
            "{failed} of {} replicates failed; see {}",
            outcome.total(),
            cfg.output.replicates
        );
        if !args.allow_failures {
            return Err(Error::ReplicateFailures {
                failed,
                total: outcome.total(),
            });
        }
    }
    Ok(())
}

fn generate(args: GenerateArgs) -> Result<()> {
    let scheme = Scheme::from(args.scheme);
    let cfg = ExperimentConfig {
        n: vec![args.n],
        theta0: args.theta0,
        target_event_fraction: args.target_event_fraction,
        ..ExperimentConfig::new(scheme)
    }
    .resolve()?;
    let probe = TrueModel::new(cfg.theta0.clone(), cfg.eta0, 1.0)?;
    let tn = calibrate_censoring(&probe, cfg.target_event_fraction(), scheme)?;
    let model = TrueModel::new(cfg.theta0.clone(), cfg.eta0, tn)?;
    let data = match scheme {
        Scheme::RightCensored => generate_right_censored(&model, args.n, args.seed)?,
        Scheme::CurrentStatus => generate_current_status(&model, args.n, args.seed)?,
    };
    if args.out == Path::new("-") {
        let mut buf = Vec::new();
        kio::format_dataset(&mut buf, &data).map_err(|e| Error::io("<stdout>", e))?;
        return emit(None, &buf);
    }
    let manifest = DatasetManifest {
        scheme,
        n: args.n,
        d: data.dim(),
        seed: args.seed,
        theta0: model.theta0.clone(),
        tn,
    };
    kio::write_dataset(&args.out, &data, &manifest)
}

fn hazard(args: HazardArgs) -> Result<()> {
    let data = kio::read_dataset(&args.data, Scheme::CurrentStatus)?;
    if args.theta.len() != data.dim() {
        return Err(Error::config(format!(
            "--theta has {} entries but the dataset has {} covariates",
            args.theta.len(),
            data.dim()
        )));
    }
    let profile = CurrentStatusProfile::new(&data, Default::default())?;
    let fit = profile.fit(&args.theta)?;
    if !fit.converged {
        eprintln!("warning: ICM stopped at the iteration limit");
    }
    let mut buf = Vec::new();
    kio::format_hazard(&mut buf, &fit.hazard).map_err(|e| Error::io("<memory>", e))?;
    emit(args.out.as_deref(), &buf)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(a) => fit(a),
        Command::Simulate(a) => simulate(a),
        Command::Generate(a) => generate(a),
        Command::Hazard(a) => hazard(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
