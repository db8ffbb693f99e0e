//! Forward-difference profile score `Γ_n`, observed profile information `Π_n`,
//! the remainder-rate function `g_r` and the step-size schedules that drive
//! the K-step iteration.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;

use crate::profile::ProfileEvaluator;
use crate::{Error, Result};

fn eval_at<E: ProfileEvaluator + ?Sized>(pl: &E, theta: &[f64]) -> Result<f64> {
    match pl.log_profile(theta) {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) => Err(Error::at(theta, Error::NonFinite)),
        Err(e) => Err(Error::at(theta, e)),
    }
}

fn check_step(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidStep(h))
    }
}

fn check_dim<E: ProfileEvaluator + ?Sized>(pl: &E, theta: &[f64]) -> Result<()> {
    if theta.len() == pl.dim() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected: pl.dim(),
            found: theta.len(),
        })
    }
}

/// `[Γ_n(θ, s)]ᵢ = (log pl(θ + s vᵢ) − log pl(θ)) / (n s)`, using exactly
/// `d + 1` evaluator calls.
pub fn gamma_n<E: ProfileEvaluator + ?Sized>(pl: &E, theta: &[f64], s: f64) -> Result<Vec<f64>> {
    check_step(s)?;
    check_dim(pl, theta)?;
    let n = pl.sample_size() as f64;
    let base = eval_at(pl, theta)?;
    let mut point = theta.to_vec();
    let mut out = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        point[i] = theta[i] + s;
        out.push((eval_at(pl, &point)? - base) / (n * s));
        point[i] = theta[i];
    }
    Ok(out)
}

/// `[Π_n(θ, t)]ᵢⱼ = −(log pl(θ+vᵢt+vⱼt) + log pl(θ) − log pl(θ+vᵢt) − log pl(θ+vⱼt)) / (n t²)`.
///
/// Each of the `(d² + 3d + 2)/2` distinct points is evaluated once; the
/// result is exactly symmetric.
pub fn pi_n<E: ProfileEvaluator + ?Sized>(pl: &E, theta: &[f64], t: f64) -> Result<DMatrix<f64>> {
    check_step(t)?;
    check_dim(pl, theta)?;
    let d = theta.len();
    let scale = pl.sample_size() as f64 * t * t;
    let base = eval_at(pl, theta)?;
    let mut point = theta.to_vec();
    let mut single = vec![0.0; d];
    for i in 0..d {
        point[i] = theta[i] + t;
        single[i] = eval_at(pl, &point)?;
        point[i] = theta[i];
    }
    let mut out = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            point[i] += t;
            point[j] += t;
            let both = eval_at(pl, &point)?;
            point[i] = theta[i];
            point[j] = theta[j];
            let v = -(both + base - single[i] - single[j]) / scale;
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}

/// Remainder rate of the second-order profile expansion:
///
/// * `1/4 < r < 1/2`: `max(n w³, n^{1−2r} w, n^{1/2−2r})`
/// * `r ≥ 1/2`: `max(n w³, n^{−1/2})`
pub fn g_r(w: f64, n: usize, r: f64) -> Result<f64> {
    RateFunction::new(r)?.eval(w, n)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFunction {
    r: f64,
}

impl RateFunction {
    pub fn new(r: f64) -> Result<Self> {
        if !(r > 0.25) || r.is_nan() {
            return Err(Error::arg("nuisance rate r must exceed 1/4"));
        }
        Ok(RateFunction { r })
    }

    pub fn eval(&self, w: f64, n: usize) -> Result<f64> {
        if n == 0 {
            return Err(Error::EmptySample);
        }
        if !(w >= 0.0) {
            return Err(Error::arg("g_r needs w >= 0"));
        }
        let n = n as f64;
        let cubic = n * w * w * w;
        Ok(if self.r < 0.5 {
            cubic
                .max(n.powf(1.0 - 2.0 * self.r) * w)
                .max(n.powf(0.5 - 2.0 * self.r))
        } else {
            cubic.max(n.powf(-0.5))
        })
    }
}

/// Step sizes `(s, t)` for one K-step update.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StepSizes {
    pub s: f64,
    pub t: f64,
}

/// Rate exponents `(a, b)` with `s = c_s n^{−a}`, `t = c_t n^{−b}`, plus the
/// accuracy exponent `e` of the iterate the step is applied to.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StageExponents {
    pub a: f64,
    pub b: f64,
    pub accuracy: f64,
}

/// Per-step step sizes for the K-step iteration.
///
/// Steps beyond the end reuse the last (terminal) pair.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StepSchedule {
    steps: Vec<StepSizes>,
    exponents: Vec<StageExponents>,
}

impl StepSchedule {
    /// A schedule with explicit step sizes and no rate bookkeeping.
    pub fn fixed(steps: Vec<StepSizes>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::EmptyInput);
        }
        for st in &steps {
            check_step(st.s)?;
            check_step(st.t)?;
        }
        Ok(StepSchedule {
            steps,
            exponents: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn steps(&self) -> &[StepSizes] {
        &self.steps
    }

    pub fn exponents(&self) -> &[StageExponents] {
        &self.exponents
    }

    /// Step sizes for update `k` (zero-based).
    pub fn step(&self, k: usize) -> StepSizes {
        self.steps[k.min(self.steps.len() - 1)]
    }

    pub fn terminal(&self) -> StepSizes {
        *self.steps.last().expect("schedules are nonempty")
    }
}

const EXPONENT_EPS: f64 = 1e-12;

pub(crate) fn check_rates(psi: f64, r: f64) -> Result<()> {
    if !(psi > 0.0 && psi <= 0.5) {
        return Err(Error::arg("psi must lie in (0, 1/2]"));
    }
    if !(r > 0.25) || !r.is_finite() {
        return Err(Error::arg("nuisance rate r must exceed 1/4"));
    }
    Ok(())
}

/// Rate exponents for each update, starting from an `n^ψ`-consistent iterate.
///
/// With `e` the current accuracy exponent (`‖θ⁽ᵏ⁾ − θ̂_n‖ ≍ n^{−e}`):
///
/// * while `e < min(r, 1/2)`: `s ≍ n^{−3e/2}`, `t ≍ n^{−e}`, and
///   `e ← min(3e/2, cap)` with `cap = 1/2` (`r ≥ 1/2`) or `r`;
/// * only when `r < 1/2`, from `n^{−r}` accuracy until `e = 1/2`:
///   `s ≍ n^{−(e/2 + r)}`, `t ≍ n^{−r}`, `e ← min(e/2 + r, 1/2)`;
/// * a terminal step with `(a, b) = (3/4, 1/2)` (`r ≥ 1/2`) or `(r + 1/4, r)`.
pub fn schedule_exponents(psi: f64, r: f64) -> Result<Vec<StageExponents>> {
    check_rates(psi, r)?;
    let mut out = Vec::new();
    let mut e = psi;
    if r >= 0.5 {
        while e < 0.5 - EXPONENT_EPS {
            out.push(StageExponents {
                a: (1.5 * e).min(0.75),
                b: e.min(0.5),
                accuracy: e,
            });
            e = (1.5 * e).min(0.5);
        }
        out.push(StageExponents {
            a: 0.75,
            b: 0.5,
            accuracy: e,
        });
    } else {
        while e < r - EXPONENT_EPS {
            out.push(StageExponents {
                a: (1.5 * e).min(0.75),
                b: e.min(0.5),
                accuracy: e,
            });
            e = (1.5 * e).min(r);
        }
        // The second stage is counted from n^{-r} accuracy, as in the
        // iteration count M.
        e = e.min(r);
        while e < 0.5 - EXPONENT_EPS {
            out.push(StageExponents {
                a: e / 2.0 + r,
                b: r,
                accuracy: e,
            });
            e = (e / 2.0 + r).min(0.5);
        }
        out.push(StageExponents {
            a: r + 0.25,
            b: r,
            accuracy: e,
        });
    }
    Ok(out)
}

/// Materializes [`schedule_exponents`] for sample size `n` with step
/// constants `c_s`, `c_t`. Fails if more than `k_max` steps would be needed.
pub fn schedule_steps(
    psi: f64,
    r: f64,
    n: usize,
    c_s: f64,
    c_t: f64,
    k_max: usize,
) -> Result<StepSchedule> {
    if n == 0 {
        return Err(Error::EmptySample);
    }
    if !(c_s > 0.0 && c_t > 0.0 && c_s.is_finite() && c_t.is_finite()) {
        return Err(Error::arg("step constants must be positive"));
    }
    let exponents = schedule_exponents(psi, r)?;
    if exponents.len() > k_max {
        return Err(Error::arg("schedule needs more steps than k_max"));
    }
    let nf = n as f64;
    let steps = exponents
        .iter()
        .map(|x| StepSizes {
            s: c_s * nf.powf(-x.a),
            t: c_t * nf.powf(-x.b),
        })
        .collect();
    Ok(StepSchedule { steps, exponents })
}
