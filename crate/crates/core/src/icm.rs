//! Cox regression with current-status data.
//!
//! At fixed `θ` the log-likelihood
//!
//! ```text
//! Σᵢ δᵢ log(1 − exp(−η(Yᵢ) e^{θᵀZᵢ})) − (1 − δᵢ) e^{θᵀZᵢ} η(Yᵢ)
//! ```
//!
//! is maximized over nondecreasing step functions `η` with jumps at the
//! distinct examination times, by the iterative convex minorant algorithm:
//! a Newton step with diagonal curvature weights, projected onto the monotone
//! cone by weighted pool-adjacent-violators, clamped to `[λ_min, λ_max]`, and
//! damped by step halving so the objective never decreases.
//!
//! The clamps bound the one unbounded direction of the problem: an event at the
//! last examination time pushes `η` towards `+∞` with vanishing gain.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::{Cell, RefCell};

#[allow(unused_imports)]
use num_traits::Float;

use crate::data::{Dataset, Scheme};
use crate::profile::{theta_key, ProfileEvaluator};
use crate::{Error, Result};

/// Right-continuous nondecreasing step function, zero before the first knot.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StepFunction {
    knots: Vec<f64>,
    values: Vec<f64>,
}

impl StepFunction {
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: knots.len(),
                found: values.len(),
            });
        }
        if knots.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::arg("knots must be strictly increasing"));
        }
        if values.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::arg("values must be nondecreasing"));
        }
        Ok(StepFunction { knots, values })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self.knots.partition_point(|k| *k <= t) {
            0 => 0.0,
            i => self.values[i - 1],
        }
    }
}

/// Settings for the inner nuisance maximization.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct IcmConfig {
    /// Stop when a full step changes the objective by less than
    /// `tol · (1 + |objective|)`.
    pub tol: f64,
    pub max_iter: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Maximum number of step halvings per iteration.
    pub damping: u32,
}

impl Default for IcmConfig {
    fn default() -> Self {
        IcmConfig {
            tol: 1e-9,
            max_iter: 1000,
            lambda_min: 1e-8,
            lambda_max: 1e3,
            damping: 30,
        }
    }
}

impl IcmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::arg("icm tol and max_iter must be positive"));
        }
        if !(self.lambda_min > 0.0
            && self.lambda_min < self.lambda_max
            && self.lambda_max.is_finite())
        {
            return Err(Error::arg(
                "icm clamps need 0 < lambda_min < lambda_max < inf",
            ));
        }
        Ok(())
    }
}

/// Lower bound on the curvature weights; keeps linear (censored-only) terms
/// from producing infinite Newton targets.
const MIN_CURVATURE: f64 = 1e-6;

/// Weighted least-squares nondecreasing fit by pool adjacent violators.
pub fn pava(targets: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
    if targets.is_empty() {
        return Err(Error::EmptyInput);
    }
    if targets.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: targets.len(),
            found: weights.len(),
        });
    }
    if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
        return Err(Error::InvalidWeights);
    }
    // (weighted sum, weight, length, mean)
    let mut blocks: Vec<(f64, f64, usize, f64)> = Vec::with_capacity(targets.len());
    for (&y, &w) in targets.iter().zip(weights) {
        let mut block = (w * y, w, 1usize, y);
        while let Some(&(sw, ww, len, mean)) = blocks.last() {
            if mean > block.3 {
                blocks.pop();
                let s = sw + block.0;
                let wt = ww + block.1;
                block = (s, wt, len + block.2, s / wt);
            } else {
                break;
            }
        }
        blocks.push(block);
    }
    let mut out = Vec::with_capacity(targets.len());
    for (_, _, len, mean) in blocks {
        out.extend(core::iter::repeat_n(mean, len));
    }
    Ok(out)
}

/// Current-status data sorted by examination time, with ties grouped into
/// distinct knots.
#[derive(Debug, Clone)]
pub struct CurrentStatusProblem {
    n: usize,
    d: usize,
    knots: Vec<f64>,
    /// Observation ranges per knot: `start[k]..start[k + 1]`.
    start: Vec<usize>,
    delta: Vec<bool>,
    z: Vec<f64>,
}

impl CurrentStatusProblem {
    pub fn new(data: &Dataset) -> Result<Self> {
        if data.scheme() != Scheme::CurrentStatus {
            return Err(Error::SchemeMismatch);
        }
        let obs = data.observations();
        let (n, d) = (data.n(), data.dim());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| obs[a].y.total_cmp(&obs[b].y).then(a.cmp(&b)));
        let mut knots = Vec::new();
        let mut start = Vec::new();
        let mut delta = Vec::with_capacity(n);
        let mut z = Vec::with_capacity(n * d);
        for (pos, &i) in order.iter().enumerate() {
            if knots.last() != Some(&obs[i].y) {
                knots.push(obs[i].y);
                start.push(pos);
            }
            delta.push(obs[i].delta);
            z.extend_from_slice(&obs[i].z);
        }
        start.push(n);
        Ok(CurrentStatusProblem {
            n,
            d,
            knots,
            start,
            delta,
            z,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    fn terms(&self, theta: &[f64]) -> Terms {
        let m = self.knots.len();
        let mut event_c = Vec::new();
        let mut event_start = Vec::with_capacity(m + 1);
        let mut censored_c = vec![0.0; m];
        let mut c_total = 0.0;
        for (k, bounds) in self.start.windows(2).enumerate() {
            event_start.push(event_c.len());
            for i in bounds[0]..bounds[1] {
                let zi = &self.z[i * self.d..(i + 1) * self.d];
                let c = theta.iter().zip(zi).map(|(t, z)| t * z).sum::<f64>().exp();
                c_total += c;
                if self.delta[i] {
                    event_c.push(c);
                } else {
                    censored_c[k] += c;
                }
            }
        }
        event_start.push(event_c.len());
        Terms {
            event_c,
            event_start,
            censored_c,
            c_mean: c_total / self.n as f64,
        }
    }

    fn cold_start(&self, terms: &Terms, cfg: &IcmConfig) -> Vec<f64> {
        let m = self.knots.len();
        let mut freq = Vec::with_capacity(m);
        let mut counts = Vec::with_capacity(m);
        for k in 0..m {
            let total = (self.start[k + 1] - self.start[k]) as f64;
            let events = (terms.event_start[k + 1] - terms.event_start[k]) as f64;
            freq.push(events / total);
            counts.push(total);
        }
        let p = pava(&freq, &counts).expect("nonempty problem");
        p.into_iter()
            .map(|p| {
                let p = p.clamp(0.01, 0.99);
                (-(1.0 - p).ln() / terms.c_mean).clamp(cfg.lambda_min, cfg.lambda_max)
            })
            .collect()
    }
}

/// Per-θ coefficients `c = exp(θᵀz)`, split by status, grouped by knot.
struct Terms {
    event_c: Vec<f64>,
    event_start: Vec<usize>,
    censored_c: Vec<f64>,
    c_mean: f64,
}

impl Terms {
    fn knot_count(&self) -> usize {
        self.censored_c.len()
    }

    fn events(&self, k: usize) -> &[f64] {
        &self.event_c[self.event_start[k]..self.event_start[k + 1]]
    }

    fn objective(&self, x: &[f64]) -> f64 {
        let mut total = 0.0;
        for (k, &xk) in x.iter().enumerate() {
            for &c in self.events(k) {
                total += (-(-xk * c).exp_m1()).ln();
            }
            total -= self.censored_c[k] * xk;
        }
        total
    }

    /// Derivative of the objective along a common value `v` on `knots`.
    fn block_gradient(&self, knots: core::ops::Range<usize>, v: f64) -> f64 {
        let mut g = 0.0;
        for k in knots {
            g -= self.censored_c[k];
            for &c in self.events(k) {
                g += c / (v * c).exp_m1();
            }
        }
        g
    }

    /// Gradient and (floored) negative second derivative at each knot.
    fn derivatives(&self, x: &[f64], grad: &mut [f64], curv: &mut [f64]) {
        for (k, &xk) in x.iter().enumerate() {
            let mut g = -self.censored_c[k];
            let mut h = 0.0;
            for &c in self.events(k) {
                let e = (-xk * c).exp();
                let om = -(-xk * c).exp_m1();
                g += c * e / om;
                h += c * c * e / (om * om);
            }
            grad[k] = g;
            curv[k] = h.max(MIN_CURVATURE);
        }
    }
}

/// Result of the nuisance maximization at one `θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct NpmleFit {
    pub hazard: StepFunction,
    pub log_likelihood: f64,
    pub iterations: usize,
    /// False when `max_iter` was hit; the best iterate is still returned.
    pub converged: bool,
    /// Objective after each accepted outer iteration, starting with the
    /// initial point.
    pub objective_path: Vec<f64>,
}

/// Changes below this fraction of `1 + |objective|` trigger a block step.
const BLOCK_STEP_TRIGGER: f64 = 1e-5;
const BLOCK_BISECTIONS: usize = 60;

/// Maximizes the objective exactly over the common value of each maximal
/// constant block, holding the neighbouring blocks fixed.
///
/// Blocks far up a flat tail of `log(1 - e^{-λc})` move by about `1/c` per
/// Newton step; the block objective is concave, so bisection on its
/// gradient over `[previous block, next block]` finishes the climb at once.
fn block_step(
    terms: &Terms,
    x: &mut [f64],
    cand: &mut [f64],
    cfg: &IcmConfig,
    phi: f64,
) -> Option<f64> {
    let m = x.len();
    cand.copy_from_slice(x);
    let mut end = m;
    while end > 0 {
        let v = cand[end - 1];
        let mut start = end - 1;
        while start > 0 && cand[start - 1] == v {
            start -= 1;
        }
        let lo = if start == 0 {
            cfg.lambda_min
        } else {
            cand[start - 1]
        };
        let hi = if end == m { cfg.lambda_max } else { cand[end] };
        let g = terms.block_gradient(start..end, v);
        let target = if g > 0.0 && v < hi {
            if terms.block_gradient(start..end, hi) >= 0.0 {
                hi
            } else {
                bisect_root(|u| terms.block_gradient(start..end, u), v, hi)
            }
        } else if g < 0.0 && v > lo {
            if terms.block_gradient(start..end, lo) <= 0.0 {
                lo
            } else {
                bisect_root(|u| terms.block_gradient(start..end, u), lo, v)
            }
        } else {
            v
        };
        cand[start..end].iter_mut().for_each(|c| *c = target);
        end = start;
    }
    let value = terms.objective(cand);
    if value > phi {
        x.copy_from_slice(cand);
        Some(value)
    } else {
        None
    }
}

/// Root of a decreasing function on `[a, b]` with `f(a) > 0 > f(b)`, by
/// bisection on the log scale.
fn bisect_root(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (mut lo, mut hi) = (a.ln(), b.ln());
    for _ in 0..BLOCK_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if f(mid.exp()) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi)).exp().clamp(a, b)
}

fn icm(terms: &Terms, mut x: Vec<f64>, cfg: &IcmConfig) -> (Vec<f64>, f64, usize, bool, Vec<f64>) {
    let m = terms.knot_count();
    let mut grad = vec![0.0; m];
    let mut curv = vec![0.0; m];
    let mut target = vec![0.0; m];
    let mut cand = vec![0.0; m];
    let mut phi = terms.objective(&x);
    let mut path = vec![phi];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        terms.derivatives(&x, &mut grad, &mut curv);
        for k in 0..m {
            target[k] = x[k] + grad[k] / curv[k];
        }
        let mut proposal = pava(&target, &curv).expect("positive weights");
        for v in proposal.iter_mut() {
            *v = v.clamp(cfg.lambda_min, cfg.lambda_max);
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=cfg.damping {
            if alpha == 1.0 {
                cand.copy_from_slice(&proposal);
            } else {
                for k in 0..m {
                    cand[k] = x[k] + alpha * (proposal[k] - x[k]);
                }
            }
            let value = terms.objective(&cand);
            if value > phi {
                accepted = Some(value);
                break;
            }
            alpha *= 0.5;
        }
        let Some(value) = accepted else {
            // No ascent left along the projected Newton direction.
            if let Some(v) = block_step(terms, &mut x, &mut cand, cfg, phi) {
                phi = v;
                path.push(phi);
                continue;
            }
            converged = true;
            break;
        };
        let mut change = value - phi;
        core::mem::swap(&mut x, &mut cand);
        phi = value;
        path.push(phi);
        if change <= BLOCK_STEP_TRIGGER * (1.0 + phi.abs()) {
            if let Some(v) = block_step(terms, &mut x, &mut cand, cfg, phi) {
                change += v - phi;
                phi = v;
                path.push(phi);
            }
        }
        if alpha == 1.0 && change <= cfg.tol * (1.0 + phi.abs()) {
            converged = true;
            break;
        }
    }
    (x, phi, iterations, converged, path)
}

fn fit_prepared(
    problem: &CurrentStatusProblem,
    theta: &[f64],
    cfg: &IcmConfig,
    warm: Option<&[f64]>,
) -> Result<NpmleFit> {
    if theta.len() != problem.d {
        return Err(Error::DimensionMismatch {
            expected: problem.d,
            found: theta.len(),
        });
    }
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::arg("theta must be finite"));
    }
    let terms = problem.terms(theta);
    let init = match warm {
        Some(w) if w.len() == problem.knots.len() => w.to_vec(),
        _ => problem.cold_start(&terms, cfg),
    };
    let (values, log_likelihood, iterations, converged, objective_path) = icm(&terms, init, cfg);
    if !log_likelihood.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(NpmleFit {
        hazard: StepFunction {
            knots: problem.knots.clone(),
            values,
        },
        log_likelihood,
        iterations,
        converged,
        objective_path,
    })
}

/// Maximizes the current-status log-likelihood over clamped nondecreasing
/// cumulative hazards at fixed `theta`.
pub fn npmle_hazard_cs(data: &Dataset, theta: &[f64], cfg: &IcmConfig) -> Result<NpmleFit> {
    cfg.validate()?;
    let problem = CurrentStatusProblem::new(data)?;
    fit_prepared(&problem, theta, cfg, None)
}

/// The attained value of [`npmle_hazard_cs`], i.e. `log pl_n(θ)`.
pub fn log_profile_cs(data: &Dataset, theta: &[f64], cfg: &IcmConfig) -> Result<f64> {
    npmle_hazard_cs(data, theta, cfg).map(|f| f.log_likelihood)
}

const CACHE_LIMIT: usize = 1 << 16;

struct WarmState {
    last: Option<Vec<f64>>,
    cache: BTreeMap<Vec<u64>, f64>,
}

/// [`ProfileEvaluator`] for the current-status Cox model.
///
/// Each evaluation starts from the hazard fitted at the previously evaluated
/// `θ`, and values are memoized on the exact bits of `θ` so repeated calls
/// return identical results. The state is not shared: use one evaluator per
/// worker.
pub struct CurrentStatusProfile {
    problem: CurrentStatusProblem,
    cfg: IcmConfig,
    state: RefCell<WarmState>,
    nonconverged: Cell<usize>,
    fits: Cell<usize>,
}

impl CurrentStatusProfile {
    pub fn new(data: &Dataset, cfg: IcmConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(CurrentStatusProfile {
            problem: CurrentStatusProblem::new(data)?,
            cfg,
            state: RefCell::new(WarmState {
                last: None,
                cache: BTreeMap::new(),
            }),
            nonconverged: Cell::new(0),
            fits: Cell::new(0),
        })
    }

    pub fn config(&self) -> &IcmConfig {
        &self.cfg
    }

    /// Fits at `theta` from a cold start, bypassing the warm-start state.
    pub fn fit(&self, theta: &[f64]) -> Result<NpmleFit> {
        fit_prepared(&self.problem, theta, &self.cfg, None)
    }

    /// Number of inner fits that hit `max_iter`.
    pub fn nonconverged(&self) -> usize {
        self.nonconverged.get()
    }

    /// Number of inner fits performed (cache misses).
    pub fn fits(&self) -> usize {
        self.fits.get()
    }
}

impl ProfileEvaluator for CurrentStatusProfile {
    fn dim(&self) -> usize {
        self.problem.d
    }
    fn sample_size(&self) -> usize {
        self.problem.n
    }
    fn log_profile(&self, theta: &[f64]) -> Result<f64> {
        let key = theta_key(theta);
        let warm = {
            let state = self.state.borrow();
            if let Some(v) = state.cache.get(&key) {
                return Ok(*v);
            }
            state.last.clone()
        };
        let fit = fit_prepared(&self.problem, theta, &self.cfg, warm.as_deref())?;
        self.fits.set(self.fits.get() + 1);
        if !fit.converged {
            self.nonconverged.set(self.nonconverged.get() + 1);
        }
        let mut state = self.state.borrow_mut();
        if state.cache.len() >= CACHE_LIMIT {
            state.cache.clear();
        }
        state.cache.insert(key, fit.log_likelihood);
        state.last = Some(fit.hazard.values);
        Ok(fit.log_likelihood)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Observation;

    fn cs(rows: &[(f64, bool, f64)]) -> Dataset {
        Dataset::new(
            Scheme::CurrentStatus,
            rows.iter()
                .map(|&(y, delta, z)| Observation {
                    y,
                    delta,
                    z: vec![z],
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn pava_examples() {
        assert_eq!(
            pava(&[1.0, 2.0, 3.0], &[1.0, 1.0, 1.0]).unwrap(),
            vec![1.0, 2.0, 3.0]
        );
        assert_eq!(pava(&[2.0, 1.0], &[1.0, 1.0]).unwrap(), vec![1.5, 1.5]);
        assert_eq!(
            pava(&[3.0, 1.0, 2.0], &[1.0, 3.0, 1.0]).unwrap(),
            vec![1.5, 1.5, 2.0]
        );
    }

    #[test]
    fn pava_errors() {
        assert_eq!(pava(&[], &[]), Err(Error::EmptyInput));
        assert_eq!(pava(&[1.0], &[0.0]), Err(Error::InvalidWeights));
        assert!(pava(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn single_censored_subject_goes_to_lower_clamp() {
        let cfg = IcmConfig::default();
        for theta in [-1.0, 0.0, 2.0] {
            let fit = npmle_hazard_cs(&cs(&[(0.7, false, 0.5)]), &[theta], &cfg).unwrap();
            assert_eq!(fit.hazard.values(), &[cfg.lambda_min]);
            let c = (theta * 0.5f64).exp();
            assert!((fit.log_likelihood + c * cfg.lambda_min).abs() < 1e-15);
        }
    }

    #[test]
    fn event_then_censored_pools_at_log_two() {
        let cfg = IcmConfig::default();
        let fit =
            npmle_hazard_cs(&cs(&[(1.0, true, 0.0), (2.0, false, 0.0)]), &[0.0], &cfg).unwrap();
        for v in fit.hazard.values() {
            assert!((v - core::f64::consts::LN_2).abs() < 1e-6, "{v}");
        }
        assert!((fit.log_likelihood + 2.0 * core::f64::consts::LN_2).abs() < 1e-9);
        assert!(fit.converged);
    }

    #[test]
    fn censored_then_event_hits_both_clamps() {
        let cfg = IcmConfig::default();
        let fit =
            npmle_hazard_cs(&cs(&[(1.0, false, 0.0), (2.0, true, 0.0)]), &[0.0], &cfg).unwrap();
        let v = fit.hazard.values();
        assert_eq!(v[0], cfg.lambda_min);
        assert!(fit.log_likelihood > -1e-7, "{}", fit.log_likelihood);
        assert_eq!(v[1], cfg.lambda_max);
    }

    #[test]
    fn objective_path_is_monotone() {
        let rows: Vec<(f64, bool, f64)> = (0..40)
            .map(|i| {
                let y = 0.05 + i as f64 * 0.037;
                let z = ((i * 7919) % 97) as f64 / 97.0;
                (y, (i * 31) % 5 < 2 + (i / 14), z)
            })
            .collect();
        let data = cs(&rows);
        let fit = npmle_hazard_cs(&data, &[0.8], &IcmConfig::default()).unwrap();
        assert!(fit.objective_path.windows(2).all(|w| w[1] >= w[0]));
        assert!(fit.hazard.values().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn step_function_evaluation() {
        let f = StepFunction::new(vec![1.0, 2.0], vec![0.5, 0.7]).unwrap();
        assert_eq!(f.eval(0.5), 0.0);
        assert_eq!(f.eval(1.0), 0.5);
        assert_eq!(f.eval(1.5), 0.5);
        assert_eq!(f.eval(9.0), 0.7);
        assert!(StepFunction::new(vec![1.0, 1.0], vec![0.0, 0.0]).is_err());
        assert!(StepFunction::new(vec![1.0, 2.0], vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn evaluator_is_deterministic_under_warm_starts() {
        let rows: Vec<(f64, bool, f64)> = (0..30)
            .map(|i| (0.1 + i as f64 * 0.05, i % 3 != 0, (i % 7) as f64 / 7.0))
            .collect();
        let pl = CurrentStatusProfile::new(&cs(&rows), IcmConfig::default()).unwrap();
        let a = pl.log_profile(&[0.5]).unwrap();
        pl.log_profile(&[1.5]).unwrap();
        let b = pl.log_profile(&[0.5]).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        let cold = pl.fit(&[0.5]).unwrap().log_likelihood;
        assert!((a - cold).abs() < 1e-7 * (1.0 + a.abs()));
    }
}
