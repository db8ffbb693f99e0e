//! Replicated Monte Carlo experiments: one replicate generates a dataset,
//! initializes, runs the K-step iteration and the full MLE; groups of
//! replicates are aggregated per sample size.

use std::time::Instant;

use kstep_core::cox::RightCensoredProfile;
use kstep_core::data::{
    calibrate_censoring, generate_current_status, generate_right_censored, Dataset, Scheme,
    TrueModel,
};
use kstep_core::icm::{CurrentStatusProfile, IcmConfig};
use kstep_core::init::{grid_search, profile_sampler, stochastic_search, GridSpec, SearchOutcome};
use kstep_core::kstep::{
    confidence_interval, count_iterations, full_mle, kstep, EfficientInfoEstimate, InfoSource,
    KStepTrace, MleResult, Termination,
};
use kstep_core::numdiff::{pi_n, schedule_steps, StepSchedule};
use kstep_core::{ParamBox, ProfileEvaluator};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, InitializerConfig};
use crate::error::{Error, Result};

/// Longest schedule the harness will build.
pub const MAX_STEPS: usize = 64;

/// The profile-likelihood engine for one dataset.
pub enum Engine {
    RightCensored(RightCensoredProfile),
    CurrentStatus(CurrentStatusProfile),
}

impl Engine {
    pub fn new(data: &Dataset, icm: IcmConfig) -> kstep_core::Result<Self> {
        Ok(match data.scheme() {
            Scheme::RightCensored => Engine::RightCensored(RightCensoredProfile::new(data)?),
            Scheme::CurrentStatus => Engine::CurrentStatus(CurrentStatusProfile::new(data, icm)?),
        })
    }

    /// Nuisance fits that stopped at the iteration limit.
    pub fn nonconverged(&self) -> usize {
        match self {
            Engine::RightCensored(_) => 0,
            Engine::CurrentStatus(p) => p.nonconverged(),
        }
    }
}

impl ProfileEvaluator for Engine {
    fn dim(&self) -> usize {
        match self {
            Engine::RightCensored(p) => p.dim(),
            Engine::CurrentStatus(p) => p.dim(),
        }
    }
    fn sample_size(&self) -> usize {
        match self {
            Engine::RightCensored(p) => p.sample_size(),
            Engine::CurrentStatus(p) => p.sample_size(),
        }
    }
    fn log_profile(&self, theta: &[f64]) -> kstep_core::Result<f64> {
        match self {
            Engine::RightCensored(p) => p.log_profile(theta),
            Engine::CurrentStatus(p) => p.log_profile(theta),
        }
    }
}

pub fn parameter_box(cfg: &ExperimentConfig, d: usize) -> kstep_core::Result<ParamBox> {
    ParamBox::symmetric(d, cfg.box_half_width)
}

/// Exponent of the scaled gap `n^e |θ̂_n − θ̂⁽ᴷ⁾|`: `3/4` when `r ≥ 1/2`,
/// otherwise `r + 1/4`.
pub fn gap_exponent(r: f64) -> f64 {
    if r >= 0.5 {
        0.75
    } else {
        r + 0.25
    }
}

/// Number of K-step updates: the override if set, else the iteration count.
pub fn steps_for(cfg: &ExperimentConfig) -> Result<usize> {
    match cfg.k {
        Some(k) => Ok(k),
        None => Ok(count_iterations(cfg.psi(), cfg.r())?),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Initialization {
    pub method: &'static str,
    pub theta: Vec<f64>,
    pub evaluated: usize,
    pub skipped: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accept_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub proposal_sd: Option<f64>,
    #[serde(skip)]
    pub sampler_info: Option<DMatrix<f64>>,
}

impl Initialization {
    fn from_search(method: &'static str, out: SearchOutcome) -> Self {
        Initialization {
            method,
            theta: out.theta,
            evaluated: out.evaluated,
            skipped: out.skipped,
            accept_rate: None,
            proposal_sd: None,
            sampler_info: None,
        }
    }
}

pub fn initialize<E: ProfileEvaluator + ?Sized>(
    pl: &E,
    cfg: &ExperimentConfig,
    bounds: &ParamBox,
    seed: u64,
) -> kstep_core::Result<Initialization> {
    let n = pl.sample_size();
    Ok(match cfg.initializer() {
        InitializerConfig::Grid { c } => {
            let spec = GridSpec::for_sample_size(bounds.clone(), n, cfg.psi(), *c)?;
            Initialization::from_search("grid", grid_search(pl, &spec)?)
        }
        InitializerConfig::Stochastic { c } => Initialization::from_search(
            "stochastic",
            stochastic_search(pl, bounds, cfg.psi(), *c, seed)?,
        ),
        InitializerConfig::Sampler(settings) => {
            let out = profile_sampler(pl, &settings.with_seed(seed), &bounds.center(), bounds)?;
            Initialization {
                method: "sampler",
                theta: out.post_mean,
                evaluated: settings.chain_length + 1,
                skipped: out.failures,
                accept_rate: Some(out.accept_rate),
                proposal_sd: Some(out.final_proposal_sd),
                sampler_info: out.info_estimate,
            }
        }
    })
}

/// Initializer, K-step trace, information estimate and Wald interval for one
/// dataset.
#[derive(Debug, Clone, Serialize)]
pub struct Estimate {
    pub init: Initialization,
    pub trace: KStepTrace,
    pub theta_k: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub info: Option<Vec<Vec<f64>>>,
    pub info_source: InfoSource,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci_lower: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci_upper: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub info_error: Option<String>,
}

pub fn schedule_for(cfg: &ExperimentConfig, n: usize, k: usize) -> Result<StepSchedule> {
    Ok(schedule_steps(
        cfg.psi(),
        cfg.r(),
        n,
        cfg.c_s,
        cfg.c_t,
        MAX_STEPS.max(k),
    )?)
}

pub fn estimate<E: ProfileEvaluator + ?Sized>(
    pl: &E,
    cfg: &ExperimentConfig,
    seed: u64,
) -> kstep_core::Result<Estimate> {
    let bounds = parameter_box(cfg, pl.dim())?;
    let init = initialize(pl, cfg, &bounds, seed)?;
    let k = cfg
        .k
        .map_or_else(|| count_iterations(cfg.psi(), cfg.r()), Ok)?;
    let schedule = schedule_steps(
        cfg.psi(),
        cfg.r(),
        pl.sample_size(),
        cfg.c_s,
        cfg.c_t,
        MAX_STEPS.max(k),
    )?;
    let trace = kstep(pl, &init.theta, &schedule, k, &bounds)?;
    let theta_k = trace.last().to_vec();
    let info = match cfg.info_source() {
        InfoSource::PiAtFinal => pi_n(pl, &theta_k, schedule.terminal().t).and_then(|m| {
            EfficientInfoEstimate::new((&m + m.transpose()) * 0.5, InfoSource::PiAtFinal)
        }),
        InfoSource::ProfileSamplerVariance => init
            .sampler_info
            .clone()
            .ok_or(kstep_core::Error::SingularInformation)
            .and_then(|m| {
                EfficientInfoEstimate::new(
                    (&m + m.transpose()) * 0.5,
                    InfoSource::ProfileSamplerVariance,
                )
            }),
    };
    let mut out = Estimate {
        init,
        trace,
        theta_k,
        info: None,
        info_source: cfg.info_source(),
        ci_lower: None,
        ci_upper: None,
        info_error: None,
    };
    match info.and_then(|info| {
        let ci = confidence_interval(&out.theta_k, &info, pl.sample_size(), cfg.alpha)?;
        Ok((info, ci))
    }) {
        Ok((info, (lo, hi))) => {
            out.info = Some(info.rows());
            out.ci_lower = Some(lo);
            out.ci_upper = Some(hi);
        }
        Err(e) => out.info_error = Some(e.to_string()),
    }
    Ok(out)
}

/// Fit report for a single dataset.
#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub scheme: Scheme,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub estimate: Estimate,
    pub icm_nonconverged: usize,
}

/// Initializer, K-step iteration and interval on one dataset.
pub fn fit_dataset(
    data: &Dataset,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<(FitReport, Engine)> {
    if data.scheme() != cfg.scheme {
        return Err(Error::config(
            "dataset scheme differs from the configured scheme",
        ));
    }
    if data.dim() != cfg.dim() {
        return Err(Error::config(format!(
            "dataset has {} covariates but theta0 has {} entries",
            data.dim(),
            cfg.dim()
        )));
    }
    let engine = Engine::new(data, cfg.icm)?;
    let estimate = estimate(&engine, cfg, seed)?;
    let report = FitReport {
        scheme: data.scheme(),
        n: data.n(),
        d: data.dim(),
        k: estimate.trace.steps_taken(),
        seed,
        estimate,
        icm_nonconverged: engine.nonconverged(),
    };
    Ok((report, engine))
}

/// Everything recorded about one replicate.
#[derive(Debug, Clone, Serialize)]
pub struct ReplicateReport {
    pub n: usize,
    pub replicate: usize,
    pub seed: u64,
    pub iterates: Vec<Vec<f64>>,
    pub termination: Option<Termination>,
    pub mle: Option<MleResult>,
    pub scaled_gap: Option<f64>,
    pub ci_lower: Option<Vec<f64>>,
    pub ci_upper: Option<Vec<f64>>,
    pub covered: Option<bool>,
    pub accept_rate: Option<f64>,
    pub icm_nonconverged: usize,
    /// Why the replicate is excluded from aggregates.
    pub failure: Option<String>,
    pub seconds: f64,
}

impl ReplicateReport {
    pub fn succeeded(&self) -> bool {
        self.failure.is_none()
    }

    pub fn theta_k(&self) -> Option<&[f64]> {
        self.iterates.last().map(|v| v.as_slice())
    }

    fn failed(n: usize, replicate: usize, seed: u64, why: String) -> Self {
        ReplicateReport {
            n,
            replicate,
            seed,
            iterates: Vec::new(),
            termination: None,
            mle: None,
            scaled_gap: None,
            ci_lower: None,
            ci_upper: None,
            covered: None,
            accept_rate: None,
            icm_nonconverged: 0,
            failure: Some(why),
            seconds: 0.0,
        }
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Per-`n` quantities shared by all replicates.
#[derive(Debug, Clone)]
pub struct GroupPlan {
    pub n: usize,
    pub k: usize,
    pub schedule: StepSchedule,
    pub grid_cardinality: Option<usize>,
}

pub fn plan_group(cfg: &ExperimentConfig, n: usize) -> Result<GroupPlan> {
    let k = steps_for(cfg)?;
    let schedule = schedule_for(cfg, n, k)?;
    let grid_cardinality = match cfg.initializer() {
        InitializerConfig::Grid { c } => Some(
            GridSpec::for_sample_size(parameter_box(cfg, cfg.dim())?, n, cfg.psi(), *c)?
                .cardinality(),
        ),
        _ => None,
    };
    Ok(GroupPlan {
        n,
        k,
        schedule,
        grid_cardinality,
    })
}

pub fn replicate_seed(cfg: &ExperimentConfig, replicate: usize) -> u64 {
    cfg.base_seed.wrapping_add(replicate as u64)
}

/// Runs replicate `replicate` at sample size `n` under `model`. Failures are
/// recorded in the report, never raised.
pub fn run_replicate(
    cfg: &ExperimentConfig,
    model: &TrueModel,
    n: usize,
    replicate: usize,
) -> ReplicateReport {
    let start = Instant::now();
    let seed = replicate_seed(cfg, replicate);
    let mut report = match replicate_inner(cfg, model, n, replicate, seed) {
        Ok(r) => r,
        Err(e) => ReplicateReport::failed(n, replicate, seed, e.to_string()),
    };
    report.seconds = start.elapsed().as_secs_f64();
    report
}

fn replicate_inner(
    cfg: &ExperimentConfig,
    model: &TrueModel,
    n: usize,
    replicate: usize,
    seed: u64,
) -> kstep_core::Result<ReplicateReport> {
    let data = match cfg.scheme {
        Scheme::RightCensored => generate_right_censored(model, n, seed)?,
        Scheme::CurrentStatus => generate_current_status(model, n, seed)?,
    };
    let engine = Engine::new(&data, cfg.icm)?;
    let est = estimate(&engine, cfg, seed)?;
    let bounds = parameter_box(cfg, data.dim())?;
    let mle = full_mle(&engine, &bounds, cfg.mle_tol);

    let mut report = ReplicateReport::failed(n, replicate, seed, String::new());
    report.failure = None;
    report.iterates = est.trace.iterates.clone();
    report.termination = Some(est.trace.termination);
    report.accept_rate = est.init.accept_rate;
    report.icm_nonconverged = engine.nonconverged();
    if let (Some(lo), Some(hi)) = (&est.ci_lower, &est.ci_upper) {
        let covered = model
            .theta0
            .iter()
            .zip(lo.iter().zip(hi))
            .all(|(t, (l, h))| l <= t && t <= h);
        report.covered = Some(covered);
        report.ci_lower = Some(lo.clone());
        report.ci_upper = Some(hi.clone());
    }
    let mut why = Vec::new();
    match mle {
        Ok(m) => {
            let gap = distance(&m.theta, &est.theta_k);
            report.scaled_gap = Some((n as f64).powf(gap_exponent(cfg.r())) * gap);
            report.mle = Some(m);
        }
        Err(e) => why.push(format!("full MLE: {e}")),
    }
    match est.trace.termination {
        Termination::ReachedK => {}
        Termination::SingularPi => why.push("singular Pi".to_string()),
        Termination::DomainExit => why.push("iterate left the parameter box".to_string()),
    }
    if report.icm_nonconverged > 0 {
        why.push(format!("{} ICM fits hit max_iter", report.icm_nonconverged));
    }
    if let Some(e) = est.info_error {
        why.push(format!("information: {e}"));
    }
    if !why.is_empty() {
        report.failure = Some(why.join("; "));
    }
    Ok(report)
}

/// Location and spread of one metric over the successful replicates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stat {
    pub name: String,
    pub mean: f64,
    pub median: f64,
    /// Median absolute deviation from the median (unscaled).
    pub mad: f64,
}

fn median(sorted: &[f64]) -> f64 {
    let m = sorted.len();
    if m == 0 {
        f64::NAN
    } else if m % 2 == 1 {
        sorted[m / 2]
    } else {
        0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
    }
}

fn stat(name: String, values: &[f64]) -> Stat {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let med = median(&v);
    let mut dev: Vec<f64> = v.iter().map(|x| (x - med).abs()).collect();
    dev.sort_by(f64::total_cmp);
    Stat {
        name,
        mean: v.iter().sum::<f64>() / v.len() as f64,
        median: med,
        mad: median(&dev),
    }
}

fn coord_name(base: &str, d: usize, j: usize) -> String {
    if d == 1 {
        base.to_string()
    } else {
        format!("{base}.{}", j + 1)
    }
}

/// Scalar metrics of a successful replicate, in a fixed order.
pub fn metrics(report: &ReplicateReport, k: usize) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    let Some(mle) = &report.mle else {
        return out;
    };
    let d = mle.theta.len();
    for (step, it) in report.iterates.iter().enumerate().take(k + 1) {
        for (j, v) in it.iter().enumerate() {
            out.push((coord_name(&format!("theta_{step}"), d, j), *v));
        }
    }
    for (j, v) in mle.theta.iter().enumerate() {
        out.push((coord_name("theta_mle", d, j), *v));
    }
    for (step, it) in report.iterates.iter().enumerate().take(k + 1) {
        out.push((format!("abs_gap_{step}"), distance(it, &mle.theta)));
    }
    if let Some(g) = report.scaled_gap {
        out.push(("scaled_gap".to_string(), g));
    }
    if let Some(c) = report.covered {
        out.push(("covered".to_string(), if c { 1.0 } else { 0.0 }));
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupResult {
    pub n: usize,
    pub k: usize,
    #[serde(skip)]
    pub schedule: StepSchedule,
    pub grid_cardinality: Option<usize>,
    pub reports: Vec<ReplicateReport>,
    pub successes: usize,
    pub failures: usize,
    pub stats: Vec<Stat>,
    pub wall_seconds: f64,
}

impl GroupResult {
    pub fn stat(&self, name: &str) -> Option<&Stat> {
        self.stats.iter().find(|s| s.name == name)
    }

    pub fn mean(&self, name: &str) -> Option<f64> {
        self.stat(name).map(|s| s.mean)
    }
}

pub fn aggregate(plan: GroupPlan, reports: Vec<ReplicateReport>, wall_seconds: f64) -> GroupResult {
    let ok: Vec<&ReplicateReport> = reports
        .iter()
        .filter(|r| r.succeeded() && r.iterates.len() == plan.k + 1)
        .collect();
    let mut stats = Vec::new();
    if let Some(first) = ok.first() {
        let names: Vec<String> = metrics(first, plan.k).into_iter().map(|(n, _)| n).collect();
        let rows: Vec<Vec<(String, f64)>> = ok.iter().map(|r| metrics(r, plan.k)).collect();
        for name in names {
            let values: Vec<f64> = rows
                .iter()
                .filter_map(|row| row.iter().find(|(n, _)| *n == name).map(|(_, v)| *v))
                .collect();
            stats.push(stat(name, &values));
        }
    }
    GroupResult {
        n: plan.n,
        k: plan.k,
        schedule: plan.schedule,
        grid_cardinality: plan.grid_cardinality,
        successes: ok.len(),
        failures: reports.len() - ok.len(),
        reports,
        stats,
        wall_seconds,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentOutcome {
    pub config: ExperimentConfig,
    pub calibrated_tn: f64,
    pub workers: usize,
    pub groups: Vec<GroupResult>,
    pub wall_seconds: f64,
}

impl ExperimentOutcome {
    pub fn failures(&self) -> usize {
        self.groups.iter().map(|g| g.failures).sum()
    }

    pub fn total(&self) -> usize {
        self.groups.iter().map(|g| g.reports.len()).sum()
    }
}

pub fn true_model(cfg: &ExperimentConfig) -> Result<TrueModel> {
    let probe = TrueModel::new(cfg.theta0.clone(), cfg.eta0, 1.0)?;
    let tn = calibrate_censoring(&probe, cfg.target_event_fraction(), cfg.scheme)?;
    Ok(TrueModel::new(cfg.theta0.clone(), cfg.eta0, tn)?)
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::config(format!("cannot start {workers} workers: {e}")))
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Runs every replicate at every `n`. Results are in replicate order and do
/// not depend on `workers`.
pub fn run_experiment(cfg: &ExperimentConfig, workers: usize) -> Result<ExperimentOutcome> {
    let start = Instant::now();
    let model = true_model(cfg)?;
    let threads = pool(workers)?;
    let mut groups = Vec::with_capacity(cfg.n.len());
    for &n in &cfg.n {
        let plan = plan_group(cfg, n)?;
        let t0 = Instant::now();
        let reports: Vec<ReplicateReport> = threads.install(|| {
            (0..cfg.replicates)
                .into_par_iter()
                .map(|i| run_replicate(cfg, &model, n, i))
                .collect()
        });
        groups.push(aggregate(plan, reports, t0.elapsed().as_secs_f64()));
    }
    Ok(ExperimentOutcome {
        config: cfg.clone(),
        calibrated_tn: model.censor_upper,
        workers: workers.max(1),
        groups,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Log-log fit of mean gap against `n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub n: Vec<usize>,
    pub mean_gap: Vec<f64>,
    pub slope: f64,
    /// Bootstrap standard error, resampling replicates within each `n`.
    pub slope_se: f64,
}

pub const BOOTSTRAP_RESAMPLES: usize = 200;
const BOOTSTRAP_SEED: u64 = 0x7261_7465;

fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let my = y.iter().sum::<f64>() / m;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Least-squares slope of `log mean gap` on `log n`.
pub fn fit_rate(n: &[usize], gaps: &[Vec<f64>]) -> Result<RateFit> {
    let mut distinct = n.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 || distinct.len() != n.len() {
        return Err(Error::config(
            "the rate study needs at least 3 distinct sample sizes",
        ));
    }
    if gaps.len() != n.len() || gaps.iter().any(|g| g.is_empty()) {
        return Err(Error::config(
            "every sample size needs at least one successful replicate",
        ));
    }
    let mean = |g: &[f64]| g.iter().sum::<f64>() / g.len() as f64;
    let mean_gap: Vec<f64> = gaps.iter().map(|g| mean(g)).collect();
    if mean_gap.iter().any(|g| !(*g > 0.0)) {
        return Err(Error::Numerical(kstep_core::Error::InvalidArgument(
            "degenerate rate study: a mean gap is zero".into(),
        )));
    }
    let x: Vec<f64> = n.iter().map(|v| (*v as f64).ln()).collect();
    let y: Vec<f64> = mean_gap.iter().map(|g| g.ln()).collect();
    let slope = ls_slope(&x, &y);

    let mut rng = ChaCha8Rng::seed_from_u64(BOOTSTRAP_SEED);
    let mut slopes = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    for _ in 0..BOOTSTRAP_RESAMPLES {
        let yb: Vec<f64> = gaps
            .iter()
            .map(|g| {
                let s: f64 = (0..g.len()).map(|_| g[rng.random_range(0..g.len())]).sum();
                (s / g.len() as f64).ln()
            })
            .collect();
        if yb.iter().all(|v| v.is_finite()) {
            slopes.push(ls_slope(&x, &yb));
        }
    }
    let sm = slopes.iter().sum::<f64>() / slopes.len() as f64;
    let slope_se = (slopes.iter().map(|s| (s - sm) * (s - sm)).sum::<f64>()
        / (slopes.len() - 1) as f64)
        .sqrt();
    Ok(RateFit {
        n: n.to_vec(),
        mean_gap,
        slope,
        slope_se,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RateStudy {
    pub fit: RateFit,
    pub outcome: ExperimentOutcome,
}

/// Runs the experiment over `n_list` and fits the rate of
/// `|θ̂_n − θ̂⁽ᴷ⁾|` in `n`.
pub fn rate_study(cfg: &ExperimentConfig, n_list: &[usize], workers: usize) -> Result<RateStudy> {
    let mut distinct = n_list.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::config(
            "the rate study needs at least 3 distinct sample sizes",
        ));
    }
    let cfg = ExperimentConfig {
        n: distinct,
        ..cfg.clone()
    };
    let outcome = run_experiment(&cfg, workers)?;
    let gaps: Vec<Vec<f64>> = outcome
        .groups
        .iter()
        .map(|g| {
            let name = format!("abs_gap_{}", g.k);
            g.reports
                .iter()
                .filter(|r| r.succeeded())
                .filter_map(|r| {
                    metrics(r, g.k)
                        .into_iter()
                        .find(|(n, _)| *n == name)
                        .map(|(_, v)| v)
                })
                .collect()
        })
        .collect();
    let fit = fit_rate(&cfg.n, &gaps)?;
    Ok(RateStudy { fit, outcome })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coverage {
    pub n: usize,
    pub covered: usize,
    pub total: usize,
    pub fraction: f64,
    /// 95% Wilson score interval for the coverage probability.
    pub wilson: (f64, f64),
}

pub fn wilson_interval(successes: usize, total: usize, z: f64) -> (f64, f64) {
    let m = total as f64;
    let p = successes as f64 / m;
    let denom = 1.0 + z * z / m;
    let centre = (p + z * z / (2.0 * m)) / denom;
    let half = z * (p * (1.0 - p) / m + z * z / (4.0 * m * m)).sqrt() / denom;
    (centre - half, centre + half)
}

#[derive(Debug, Clone, Serialize)]
pub struct CoverageStudy {
    pub alpha: f64,
    pub coverage: Vec<Coverage>,
    pub outcome: ExperimentOutcome,
}

/// Fraction of replicates whose interval covers `θ₀`, per `n`.
pub fn coverage_study(cfg: &ExperimentConfig, alpha: f64, workers: usize) -> Result<CoverageStudy> {
    if cfg.replicates < 100 {
        return Err(Error::config(
            "the coverage study needs at least 100 replicates",
        ));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::config("alpha must lie in (0, 1)"));
    }
    let cfg = ExperimentConfig {
        alpha,
        ..cfg.clone()
    };
    let outcome = run_experiment(&cfg, workers)?;
    let z = kstep_core::normal::quantile(0.975)?;
    let coverage = outcome
        .groups
        .iter()
        .map(|g| {
            let flags: Vec<bool> = g
                .reports
                .iter()
                .filter(|r| r.succeeded())
                .filter_map(|r| r.covered)
                .collect();
            let covered = flags.iter().filter(|c| **c).count();
            Coverage {
                n: g.n,
                covered,
                total: flags.len(),
                fraction: covered as f64 / flags.len() as f64,
                wilson: wilson_interval(covered, flags.len(), z),
            }
        })
        .collect();
    Ok(CoverageStudy {
        alpha,
        coverage,
        outcome,
    })
}
