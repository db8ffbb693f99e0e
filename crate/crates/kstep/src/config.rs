//! Experiment configuration: JSON schema, scheme-dependent defaults and the
//! two table presets.

use std::path::Path;

use kstep_core::data::{CumulativeHazard, Scheme};
use kstep_core::icm::IcmConfig;
use kstep_core::init::SamplerConfig;
use kstep_core::kstep::InfoSource;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Profile-sampler settings; the chain seed is derived per replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSettings {
    pub chain_length: usize,
    pub burn_in: usize,
    pub proposal_sd: f64,
    pub target_accept: (f64, f64),
    pub adapt_toward: f64,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        let d = SamplerConfig::default();
        SamplerSettings {
            chain_length: d.chain_length,
            burn_in: d.burn_in,
            proposal_sd: d.proposal_sd,
            target_accept: d.target_accept,
            adapt_toward: d.adapt_toward,
        }
    }
}

impl SamplerSettings {
    pub fn with_seed(&self, seed: u64) -> SamplerConfig {
        SamplerConfig {
            chain_length: self.chain_length,
            burn_in: self.burn_in,
            proposal_sd: self.proposal_sd,
            target_accept: self.target_accept,
            adapt_toward: self.adapt_toward,
            adapt: true,
            retain_draws: false,
            seed,
        }
    }
}

pub const DEFAULT_GRID_C: f64 = 10.0;

fn default_grid_c() -> f64 {
    DEFAULT_GRID_C
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitializerConfig {
    /// Lattice of cardinality `⌈c n^{dψ}⌉` over the parameter box.
    Grid {
        #[serde(default = "default_grid_c")]
        c: f64,
    },
    /// `⌈c n^{2ψ}⌉` uniform draws over the parameter box.
    Stochastic {
        #[serde(default = "default_grid_c")]
        c: f64,
    },
    /// Posterior mean of the profile sampler started at the box centre.
    Sampler(SamplerSettings),
}

impl InitializerConfig {
    pub fn name(&self) -> &'static str {
        match self {
            InitializerConfig::Grid { .. } => "grid",
            InitializerConfig::Stochastic { .. } => "stochastic",
            InitializerConfig::Sampler(_) => "sampler",
        }
    }
}

/// Starting configurations for the two tables of the reference study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Table1,
    Table2,
}

impl Preset {
    pub fn config(self) -> ExperimentConfig {
        match self {
            Preset::Table1 => ExperimentConfig {
                n: vec![50, 100, 200, 500],
                replicates: 500,
                ..ExperimentConfig::new(Scheme::RightCensored)
            },
            Preset::Table2 => ExperimentConfig {
                n: vec![50, 100, 200, 500],
                replicates: 500,
                ..ExperimentConfig::new(Scheme::CurrentStatus)
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    #[serde(default = "default_table")]
    pub table: String,
    #[serde(default = "default_summary")]
    pub summary: String,
    #[serde(default = "default_replicates")]
    pub replicates: String,
    #[serde(default = "default_manifest")]
    pub manifest: String,
}

fn default_table() -> String {
    "table.csv".into()
}
fn default_summary() -> String {
    "summary.csv".into()
}
fn default_replicates() -> String {
    "replicates.csv".into()
}
fn default_manifest() -> String {
    "manifest.json".into()
}

impl Default for OutputPaths {
    fn default() -> Self {
        OutputPaths {
            table: default_table(),
            summary: default_summary(),
            replicates: default_replicates(),
            manifest: default_manifest(),
        }
    }
}

/// One Monte Carlo study.
///
/// Fields left out of the JSON take scheme-dependent defaults: right-censored
/// studies use the profile sampler with `ψ = r = 1/2`, current-status
/// studies use the lattice with `ψ = 1/4`, `r = 1/3`. [`resolve`] fills them
/// in so the manifest records every value used.
///
/// [`resolve`]: ExperimentConfig::resolve
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scheme: Scheme,
    pub n: Vec<usize>,
    #[serde(default = "default_reps")]
    pub replicates: usize,
    #[serde(default = "default_theta0")]
    pub theta0: Vec<f64>,
    #[serde(default = "default_eta0")]
    pub eta0: CumulativeHazard,
    /// `E[δ]` targeted by the calibration of `t_n`; 0.9 for right censoring,
    /// 0.5 for current status.
    #[serde(default)]
    pub target_event_fraction: Option<f64>,
    #[serde(default)]
    pub initializer: Option<InitializerConfig>,
    #[serde(default)]
    pub psi: Option<f64>,
    #[serde(default)]
    pub r: Option<f64>,
    #[serde(default = "one")]
    pub c_s: f64,
    #[serde(default = "one")]
    pub c_t: f64,
    /// Number of K-step updates; the iteration count formula when absent.
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub info_source: Option<InfoSource>,
    /// The parameter box is `[-h, h]^d`.
    #[serde(default = "default_half_width")]
    pub box_half_width: f64,
    #[serde(default)]
    pub icm: IcmConfig,
    #[serde(default = "default_mle_tol")]
    pub mle_tol: f64,
    #[serde(default = "one_u64")]
    pub base_seed: u64,
    /// Custom table columns, replacing the preset layout.
    #[serde(default)]
    pub columns: Option<Vec<String>>,
    #[serde(default)]
    pub output: OutputPaths,
}

fn default_reps() -> usize {
    100
}
fn default_theta0() -> Vec<f64> {
    vec![1.0]
}
fn default_eta0() -> CumulativeHazard {
    CumulativeHazard::ExpMinusOne
}
fn one() -> f64 {
    1.0
}
fn one_u64() -> u64 {
    1
}
fn default_alpha() -> f64 {
    0.05
}
fn default_half_width() -> f64 {
    5.0
}
fn default_mle_tol() -> f64 {
    1e-8
}

impl ExperimentConfig {
    /// Defaults for `scheme`, with every optional field materialized.
    pub fn new(scheme: Scheme) -> Self {
        ExperimentConfig {
            scheme,
            n: vec![100],
            replicates: default_reps(),
            theta0: default_theta0(),
            eta0: default_eta0(),
            target_event_fraction: None,
            initializer: None,
            psi: None,
            r: None,
            c_s: 1.0,
            c_t: 1.0,
            k: None,
            alpha: default_alpha(),
            info_source: None,
            box_half_width: default_half_width(),
            icm: IcmConfig::default(),
            mle_tol: default_mle_tol(),
            base_seed: 1,
            columns: None,
            output: OutputPaths::default(),
        }
        .resolve()
        .expect("defaults are valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(format!("at `{path}`: {}", e.inner()))
        })?;
        cfg.resolve()
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = if path == Path::new("-") {
            std::io::read_to_string(std::io::stdin()).map_err(|e| Error::io("<stdin>", e))?
        } else {
            std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?
        };
        ExperimentConfig::from_json(&text)
    }

    /// Fills scheme-dependent defaults and validates.
    pub fn resolve(mut self) -> Result<Self> {
        let rc = self.scheme == Scheme::RightCensored;
        self.initializer.get_or_insert_with(|| {
            if rc {
                InitializerConfig::Sampler(SamplerSettings::default())
            } else {
                InitializerConfig::Grid { c: DEFAULT_GRID_C }
            }
        });
        self.target_event_fraction
            .get_or_insert(if rc { 0.9 } else { 0.5 });
        self.psi.get_or_insert(if rc { 0.5 } else { 0.25 });
        self.r.get_or_insert(if rc { 0.5 } else { 1.0 / 3.0 });
        self.info_source.get_or_insert(InfoSource::PiAtFinal);
        self.validate()?;
        Ok(self)
    }

    pub fn initializer(&self) -> &InitializerConfig {
        self.initializer.as_ref().expect("resolved")
    }

    pub fn target_event_fraction(&self) -> f64 {
        self.target_event_fraction.expect("resolved")
    }

    pub fn psi(&self) -> f64 {
        self.psi.expect("resolved")
    }

    pub fn r(&self) -> f64 {
        self.r.expect("resolved")
    }

    pub fn info_source(&self) -> InfoSource {
        self.info_source.expect("resolved")
    }

    pub fn dim(&self) -> usize {
        self.theta0.len()
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::config(m));
        if self.replicates == 0 {
            return bad("replicates must be at least 1");
        }
        if self.n.is_empty() || self.n.iter().any(|&n| n < 10) {
            return bad("n must be a nonempty list of sample sizes >= 10");
        }
        if self.theta0.is_empty() || self.theta0.iter().any(|v| !v.is_finite()) {
            return bad("theta0 must be a nonempty finite vector");
        }
        if !(self.box_half_width > 0.0 && self.box_half_width.is_finite()) {
            return bad("box_half_width must be positive");
        }
        if self.theta0.iter().any(|v| v.abs() >= self.box_half_width) {
            return bad("theta0 must lie inside the parameter box");
        }
        if !(self.target_event_fraction() > 0.0 && self.target_event_fraction() < 1.0) {
            return bad("target_event_fraction must lie in (0, 1)");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha must lie in (0, 1)");
        }
        if !(self.c_s > 0.0 && self.c_t > 0.0 && self.c_s.is_finite() && self.c_t.is_finite()) {
            return bad("c_s and c_t must be positive");
        }
        if !(self.mle_tol > 0.0) {
            return bad("mle_tol must be positive");
        }
        let (psi, r) = (self.psi(), self.r());
        if !(psi > 0.0 && psi <= 0.5) {
            return bad("psi must lie in (0, 1/2]");
        }
        if !(r > 0.25 && r.is_finite()) {
            return bad("r must exceed 1/4");
        }
        match self.initializer() {
            InitializerConfig::Grid { c } => {
                if psi > 0.25 {
                    return bad("the grid initializer needs psi <= 1/4");
                }
                if !(*c > 0.0 && c.is_finite()) {
                    return bad("initializer.c must be positive");
                }
            }
            InitializerConfig::Stochastic { c } => {
                if !(*c > 0.0 && c.is_finite()) {
                    return bad("initializer.c must be positive");
                }
            }
            InitializerConfig::Sampler(s) => {
                s.with_seed(0)
                    .validate()
                    .map_err(|e| Error::config(format!("initializer: {e}")))?;
            }
        }
        if self.info_source() == InfoSource::ProfileSamplerVariance
            && !matches!(self.initializer(), InitializerConfig::Sampler(_))
        {
            return bad("info_source profile_sampler_variance needs the sampler initializer");
        }
        self.icm
            .validate()
            .map_err(|e| Error::config(format!("icm: {e}")))?;
        self.eta0
            .validate()
            .map_err(|e| Error::config(format!("eta0: {e}")))?;
        if let Some(cols) = &self.columns {
            crate::report::check_columns(cols)?;
        }
        for (name, file) in [
            ("table", &self.output.table),
            ("summary", &self.output.summary),
            ("replicates", &self.output.replicates),
            ("manifest", &self.output.manifest),
        ] {
            if file.is_empty() {
                return Err(Error::config(format!("output.{name} must be a file name")));
            }
        }
        Ok(())
    }
}
