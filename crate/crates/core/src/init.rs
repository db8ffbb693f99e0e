//! Starting points for the K-step iteration: lattice search, uniform random
//! search and the profile sampler.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::profile::{ParamBox, ProfileEvaluator};
use crate::{Error, Result};

const SAMPLER_STREAM: u64 = 1;
const SEARCH_STREAM: u64 = 2;

/// Equally spaced lattice over a box, `points_per_axis` nodes per coordinate
/// including both endpoints.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GridSpec {
    bounds: ParamBox,
    points_per_axis: usize,
}

impl GridSpec {
    pub fn new(bounds: ParamBox, points_per_axis: usize) -> Result<Self> {
        if points_per_axis == 0 {
            return Err(Error::EmptyInput);
        }
        Ok(GridSpec {
            bounds,
            points_per_axis,
        })
    }

    /// Lattice with total cardinality at least `⌈c n^{dψ}⌉`, using the
    /// smallest per-axis count that reaches it.
    pub fn for_sample_size(bounds: ParamBox, n: usize, psi: f64, c: f64) -> Result<Self> {
        if !(psi > 0.0 && psi <= 0.25) {
            return Err(Error::arg("grid psi must lie in (0, 1/4]"));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::arg("cardinality constant must be positive"));
        }
        if n == 0 {
            return Err(Error::EmptySample);
        }
        let d = bounds.dim();
        let target = grid_cardinality(n, d, psi, c);
        let mut m = (target as f64).powf(1.0 / d as f64).floor().max(1.0) as usize;
        while m.checked_pow(d as u32).is_some_and(|p| p < target) {
            m += 1;
        }
        while m > 1 && (m - 1).checked_pow(d as u32).is_some_and(|p| p >= target) {
            m -= 1;
        }
        GridSpec::new(bounds, m)
    }

    pub fn bounds(&self) -> &ParamBox {
        &self.bounds
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    pub fn cardinality(&self) -> usize {
        self.points_per_axis.pow(self.bounds.dim() as u32)
    }

    pub fn spacing(&self) -> Vec<f64> {
        let m = self.points_per_axis;
        self.bounds
            .lower()
            .iter()
            .zip(self.bounds.upper())
            .map(|(lo, hi)| {
                if m > 1 {
                    (hi - lo) / (m - 1) as f64
                } else {
                    0.0
                }
            })
            .collect()
    }

    fn node(&self, axis: usize, i: usize) -> f64 {
        let (lo, hi) = (self.bounds.lower()[axis], self.bounds.upper()[axis]);
        let m = self.points_per_axis;
        if m == 1 {
            0.5 * (lo + hi)
        } else if i + 1 == m {
            hi
        } else {
            (lo * (m - 1 - i) as f64 + hi * i as f64) / (m - 1) as f64
        }
    }

    /// All lattice points in lexicographic order.
    pub fn points(&self) -> Vec<Vec<f64>> {
        let d = self.bounds.dim();
        let mut idx = vec![0usize; d];
        let mut out = Vec::with_capacity(self.cardinality());
        loop {
            out.push((0..d).map(|a| self.node(a, idx[a])).collect());
            let mut axis = d;
            loop {
                if axis == 0 {
                    return out;
                }
                axis -= 1;
                idx[axis] += 1;
                if idx[axis] < self.points_per_axis {
                    break;
                }
                idx[axis] = 0;
            }
        }
    }
}

/// `⌈c n^{dψ}⌉`.
pub fn grid_cardinality(n: usize, d: usize, psi: f64, c: f64) -> usize {
    ceil_count(c * (n as f64).powf(d as f64 * psi))
}

/// `⌈c n^{2ψ}⌉`.
pub fn stochastic_cardinality(n: usize, psi: f64, c: f64) -> usize {
    ceil_count(c * (n as f64).powf(2.0 * psi))
}

fn ceil_count(x: f64) -> usize {
    (x - 1e-9).ceil().max(1.0) as usize
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SearchOutcome {
    pub theta: Vec<f64>,
    pub log_profile: f64,
    pub evaluated: usize,
    /// Candidates whose evaluation failed; they take no part in the argmax.
    pub skipped: usize,
}

fn argmax<E, I>(pl: &E, candidates: I) -> Result<SearchOutcome>
where
    E: ProfileEvaluator + ?Sized,
    I: IntoIterator<Item = Vec<f64>>,
{
    let mut best: Option<(Vec<f64>, f64)> = None;
    let (mut evaluated, mut skipped) = (0, 0);
    for theta in candidates {
        evaluated += 1;
        match pl.log_profile(&theta) {
            Ok(v) if v.is_finite() => {
                if best.as_ref().is_none_or(|(_, b)| v > *b) {
                    best = Some((theta, v));
                }
            }
            _ => skipped += 1,
        }
    }
    let (theta, log_profile) = best.ok_or(Error::AllCandidatesFailed)?;
    Ok(SearchOutcome {
        theta,
        log_profile,
        evaluated,
        skipped,
    })
}

/// Maximizes `log pl` over the lattice. Ties go to the lexicographically
/// smallest point.
pub fn grid_search<E: ProfileEvaluator + ?Sized>(pl: &E, spec: &GridSpec) -> Result<SearchOutcome> {
    if spec.bounds.dim() != pl.dim() {
        return Err(Error::DimensionMismatch {
            expected: pl.dim(),
            found: spec.bounds.dim(),
        });
    }
    argmax(pl, spec.points())
}

fn uniform_point(bounds: &ParamBox, rng: &mut ChaCha8Rng) -> Vec<f64> {
    bounds
        .lower()
        .iter()
        .zip(bounds.upper())
        .map(|(lo, hi)| lo + (hi - lo) * rng.random::<f64>())
        .collect()
}

/// Maximizes `log pl` over `⌈c n^{2ψ}⌉` uniform draws on the box.
pub fn stochastic_search<E: ProfileEvaluator + ?Sized>(
    pl: &E,
    bounds: &ParamBox,
    psi: f64,
    c: f64,
    seed: u64,
) -> Result<SearchOutcome> {
    if bounds.dim() != pl.dim() {
        return Err(Error::DimensionMismatch {
            expected: pl.dim(),
            found: bounds.dim(),
        });
    }
    if !(psi > 0.0 && psi <= 0.5) {
        return Err(Error::arg("psi must lie in (0, 1/2]"));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::arg("cardinality constant must be positive"));
    }
    let draws = stochastic_cardinality(pl.sample_size(), psi, c);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SEARCH_STREAM);
    let candidates: Vec<Vec<f64>> = (0..draws)
        .map(|_| uniform_point(bounds, &mut rng))
        .collect();
    argmax(pl, candidates)
}

/// Random-walk Metropolis settings. `chain_length` includes the burn-in.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SamplerConfig {
    pub chain_length: usize,
    pub burn_in: usize,
    /// Initial proposal standard deviation.
    pub proposal_sd: f64,
    pub target_accept: (f64, f64),
    /// Acceptance rate the burn-in adaptation steers toward.
    pub adapt_toward: f64,
    /// Robbins–Monro adaptation of the proposal during burn-in.
    pub adapt: bool,
    pub retain_draws: bool,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            chain_length: 5000,
            burn_in: 1000,
            proposal_sd: 0.5,
            target_accept: (0.2, 0.4),
            adapt_toward: 0.3,
            adapt: true,
            retain_draws: false,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.chain_length {
            return Err(Error::arg("burn_in must be shorter than chain_length"));
        }
        if self.chain_length - self.burn_in < 2 {
            return Err(Error::arg("need at least two retained draws"));
        }
        if !(self.proposal_sd > 0.0 && self.proposal_sd.is_finite()) {
            return Err(Error::arg("proposal_sd must be positive"));
        }
        let (lo, hi) = self.target_accept;
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(Error::arg(
                "target_accept must be an interval inside [0, 1]",
            ));
        }
        if !(self.adapt_toward > 0.0 && self.adapt_toward < 1.0) {
            return Err(Error::arg("adapt_toward must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerOutput {
    pub post_mean: Vec<f64>,
    /// Sample covariance of the retained draws.
    pub post_variance: DMatrix<f64>,
    /// `(post_variance)⁻¹ / n`; `None` when the sample covariance is singular.
    pub info_estimate: Option<DMatrix<f64>>,
    /// Acceptance rate over the retained part of the chain.
    pub accept_rate: f64,
    pub final_proposal_sd: f64,
    /// Proposals rejected because the evaluator failed.
    pub failures: usize,
    /// Acceptance fell outside `[0.05, 0.95]`.
    pub accept_warning: bool,
    pub draws: Option<Vec<Vec<f64>>>,
}

/// Random-walk Metropolis on `exp(log pl(θ))` with a flat prior on the box.
///
/// Proposals are `Normal(θ, sd² I)`; those outside the box are rejected. The
/// proposal scale follows a Robbins–Monro recursion on `log sd` during
/// burn-in and is frozen afterwards.
pub fn profile_sampler<E: ProfileEvaluator + ?Sized>(
    pl: &E,
    cfg: &SamplerConfig,
    start: &[f64],
    bounds: &ParamBox,
) -> Result<SamplerOutput> {
    cfg.validate()?;
    let d = pl.dim();
    if start.len() != d || bounds.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: start.len(),
        });
    }
    if !bounds.contains(start) {
        return Err(Error::arg("sampler start lies outside the parameter box"));
    }
    let mut current = start.to_vec();
    let mut current_lp = pl
        .log_profile(&current)
        .map_err(|e| Error::at(&current, e))?;
    if !current_lp.is_finite() {
        return Err(Error::at(&current, Error::NonFinite));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(SAMPLER_STREAM);

    let kept = cfg.chain_length - cfg.burn_in;
    let mut log_sd = cfg.proposal_sd.ln();
    let mut accepted = 0usize;
    let mut failures = 0usize;
    let mut sum = vec![0.0; d];
    let mut draws = Vec::with_capacity(kept);
    let mut proposal = vec![0.0; d];
    for k in 0..cfg.chain_length {
        let sd = log_sd.exp();
        for (p, c) in proposal.iter_mut().zip(&current) {
            let z: f64 = rng.sample(StandardNormal);
            *p = c + sd * z;
        }
        let u: f64 = rng.random();
        let mut accept = false;
        if bounds.contains(&proposal) {
            match pl.log_profile(&proposal) {
                Ok(lp) if lp.is_finite() => {
                    if u.ln() < lp - current_lp {
                        accept = true;
                        current.copy_from_slice(&proposal);
                        current_lp = lp;
                    }
                }
                _ => failures += 1,
            }
        }
        if k < cfg.burn_in {
            if cfg.adapt {
                let gain = ((k + 1) as f64).powf(-0.6);
                let hit = if accept { 1.0 } else { 0.0 };
                log_sd += gain * (hit - cfg.adapt_toward);
            }
        } else {
            if accept {
                accepted += 1;
            }
            for (s, c) in sum.iter_mut().zip(&current) {
                *s += c;
            }
            draws.push(current.clone());
        }
    }

    let m = kept as f64;
    let post_mean: Vec<f64> = sum.iter().map(|s| s / m).collect();
    let mut cov = DMatrix::zeros(d, d);
    for x in &draws {
        for i in 0..d {
            let di = x[i] - post_mean[i];
            for j in 0..=i {
                cov[(i, j)] += di * (x[j] - post_mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in 0..=i {
            let v = cov[(i, j)] / (m - 1.0);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    let n = pl.sample_size() as f64;
    let info_estimate = cov
        .clone()
        .cholesky()
        .map(|ch| ch.inverse() / n)
        .filter(|m| m.iter().all(|v| v.is_finite()));
    let accept_rate = accepted as f64 / m;
    Ok(SamplerOutput {
        post_mean,
        post_variance: cov,
        info_estimate,
        accept_rate,
        final_proposal_sd: log_sd.exp(),
        failures,
        accept_warning: !(0.05..=0.95).contains(&accept_rate),
        draws: cfg.retain_draws.then_some(draws),
    })
}
