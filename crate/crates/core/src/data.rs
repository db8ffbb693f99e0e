//! Survival observations, datasets and the synthetic generators for both
//! censoring schemes.
//!
//! Event times follow the proportional hazards model `λ(t | z) = λ(t) e^{θᵀz}`,
//! drawn by inverse transform `T = η₀⁻¹(-log U · e^{-θᵀz})`. Covariates are
//! i.i.d. `Uniform[0, 1]` per coordinate. Censoring (right-censored scheme) or
//! examination (current-status scheme) times are `Uniform[0, t_n]`.

use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Which observation scheme a dataset follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Scheme {
    /// `y = min(T, C)`, `delta = 1{T ≤ C}`.
    #[cfg_attr(feature = "serde", serde(alias = "rc"))]
    RightCensored,
    /// `y` is the examination time, `delta = 1{T ≤ y}`.
    #[cfg_attr(feature = "serde", serde(alias = "cs"))]
    CurrentStatus,
}

/// One subject's record. The meaning of `y` and `delta` depends on the
/// [`Scheme`] of the enclosing [`Dataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub y: f64,
    pub delta: bool,
    pub z: Vec<f64>,
}

/// An immutable, validated sample of observations sharing one scheme and one
/// covariate dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    scheme: Scheme,
    d: usize,
    observations: Vec<Observation>,
}

impl Dataset {
    pub fn new(scheme: Scheme, observations: Vec<Observation>) -> Result<Self> {
        let first = observations.first().ok_or(Error::EmptySample)?;
        let d = first.z.len();
        if d == 0 {
            return Err(Error::InvalidData(
                "covariate dimension must be positive".into(),
            ));
        }
        for (i, obs) in observations.iter().enumerate() {
            if obs.z.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: obs.z.len(),
                });
            }
            if !(obs.y.is_finite() && obs.y >= 0.0) {
                return Err(Error::InvalidData(format!(
                    "observation {i}: time must be finite and nonnegative"
                )));
            }
            if obs.z.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidData(format!(
                    "observation {i}: covariates must be finite"
                )));
            }
        }
        Ok(Dataset {
            scheme,
            d,
            observations,
        })
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn n(&self) -> usize {
        self.observations.len()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn event_fraction(&self) -> f64 {
        let events = self.observations.iter().filter(|o| o.delta).count();
        events as f64 / self.n() as f64
    }
}

/// The true cumulative baseline hazard `η₀`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum CumulativeHazard {
    /// `η₀(t) = eᵗ - 1`, inverted in closed form.
    ExpMinusOne,
    /// `η₀(t) = scale · t^shape`, inverted numerically.
    Power { scale: f64, shape: f64 },
}

const INVERSION_TOL: f64 = 1e-12;
const INVERSION_MAX_T: f64 = 1e12;

impl CumulativeHazard {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            CumulativeHazard::ExpMinusOne => t.exp_m1(),
            CumulativeHazard::Power { scale, shape } => scale * t.powf(shape),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            CumulativeHazard::ExpMinusOne => Ok(()),
            CumulativeHazard::Power { scale, shape } => {
                if scale > 0.0 && shape > 0.0 && scale.is_finite() && shape.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidModel(
                        "power hazard needs positive scale and shape".into(),
                    ))
                }
            }
        }
    }

    /// Solves `η₀(t) = u` for `t ≥ 0`.
    pub fn inverse(&self, u: f64) -> Result<f64> {
        if !(u >= 0.0) || !u.is_finite() {
            return Err(Error::NotInvertible(u));
        }
        match *self {
            CumulativeHazard::ExpMinusOne => Ok(u.ln_1p()),
            _ => self.invert_by_bisection(u),
        }
    }

    fn invert_by_bisection(&self, u: f64) -> Result<f64> {
        if u == 0.0 {
            return Ok(0.0);
        }
        let mut hi = 1.0;
        while self.eval(hi) < u {
            hi *= 2.0;
            if hi > INVERSION_MAX_T {
                return Err(Error::NotInvertible(u));
            }
        }
        let mut lo = 0.0;
        while hi - lo > INVERSION_TOL {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.eval(mid) < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Data-generating model: `θ₀`, `η₀` and the upper end `t_n` of the uniform
/// censoring / examination law.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrueModel {
    pub theta0: Vec<f64>,
    pub eta0: CumulativeHazard,
    pub censor_upper: f64,
}

impl TrueModel {
    pub fn new(theta0: Vec<f64>, eta0: CumulativeHazard, censor_upper: f64) -> Result<Self> {
        let model = TrueModel {
            theta0,
            eta0,
            censor_upper,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta0.is_empty() || self.theta0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel(
                "theta0 must be a nonempty finite vector".into(),
            ));
        }
        if !(self.censor_upper > 0.0 && self.censor_upper.is_finite()) {
            return Err(Error::InvalidModel("censor_upper must be positive".into()));
        }
        self.eta0.validate()
    }

    pub fn dim(&self) -> usize {
        self.theta0.len()
    }

    /// Event time for uniform draw `u ∈ (0, 1]` and covariate `z`.
    pub fn event_time(&self, u: f64, z: &[f64]) -> Result<f64> {
        let lin: f64 = self.theta0.iter().zip(z).map(|(t, z)| t * z).sum();
        self.eta0.inverse(-u.ln() * (-lin).exp())
    }
}

struct Draw {
    z: Vec<f64>,
    t: f64,
    /// Uniform[0, 1] driver of the censoring or examination time.
    v: f64,
}

fn draw_subject(model: &TrueModel, rng: &mut ChaCha8Rng) -> Result<Draw> {
    let z: Vec<f64> = (0..model.dim()).map(|_| rng.random::<f64>()).collect();
    // 1 - [0, 1) keeps u away from zero.
    let u = 1.0 - rng.random::<f64>();
    let v = rng.random::<f64>();
    let t = model.event_time(u, &z)?;
    Ok(Draw { z, t, v })
}

fn generate(model: &TrueModel, n: usize, seed: u64, scheme: Scheme) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::EmptySample);
    }
    model.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut observations = Vec::with_capacity(n);
    for _ in 0..n {
        let Draw { z, t, v } = draw_subject(model, &mut rng)?;
        let c = v * model.censor_upper;
        let obs = match scheme {
            Scheme::RightCensored => Observation {
                y: t.min(c),
                delta: t <= c,
                z,
            },
            Scheme::CurrentStatus => Observation {
                y: c,
                delta: t <= c,
                z,
            },
        };
        observations.push(obs);
    }
    Dataset::new(scheme, observations)
}

/// Right-censored sample: `Y = min(T, C)`, `δ = 1{T ≤ C}`, `C ~ U[0, t_n]`.
/// Fully determined by `(model, n, seed)`.
pub fn generate_right_censored(model: &TrueModel, n: usize, seed: u64) -> Result<Dataset> {
    generate(model, n, seed, Scheme::RightCensored)
}

/// Current-status sample: examination time `Y ~ U[0, t_n]`, `δ = 1{T ≤ Y}`.
pub fn generate_current_status(model: &TrueModel, n: usize, seed: u64) -> Result<Dataset> {
    generate(model, n, seed, Scheme::CurrentStatus)
}

pub const CALIBRATION_DRAWS: usize = 100_000;
const CALIBRATION_SEED: u64 = 0x6361_6c69_6272_6174;
const CALIBRATION_BRACKET: (f64, f64) = (1e-3, 50.0);
const CALIBRATION_TOL: f64 = 0.005;

/// Finds `t_n` such that the Monte Carlo event fraction `E[δ]` is within
/// ±0.005 of `target`, by bisection over `t_n ∈ [10⁻³, 50]`.
///
/// The draws are shared across bisection steps, so the estimate is monotone
/// in `t_n` and the bisection is well defined. Under uniform censoring both
/// schemes share the event indicator `1{T ≤ t_n·V}`.
pub fn calibrate_censoring(model: &TrueModel, target: f64, scheme: Scheme) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::UnattainableTarget {
            target,
            low: 0.0,
            high: 1.0,
        });
    }
    let _ = scheme;
    model.eta0.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(CALIBRATION_SEED);
    let mut draws = Vec::with_capacity(CALIBRATION_DRAWS);
    for _ in 0..CALIBRATION_DRAWS {
        let d = draw_subject(model, &mut rng)?;
        draws.push((d.t, d.v));
    }
    let fraction = |tn: f64| {
        let events = draws.iter().filter(|(t, v)| *t <= tn * v).count();
        events as f64 / CALIBRATION_DRAWS as f64
    };
    let (mut lo, mut hi) = CALIBRATION_BRACKET;
    let (f_lo, f_hi) = (fraction(lo), fraction(hi));
    if f_lo > target + CALIBRATION_TOL || f_hi < target - CALIBRATION_TOL {
        return Err(Error::UnattainableTarget {
            target,
            low: f_lo,
            high: f_hi,
        });
    }
    // Smallest t_n whose event fraction reaches the target.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if fraction(mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let achieved = fraction(hi);
    if (achieved - target).abs() > CALIBRATION_TOL {
        return Err(Error::UnattainableTarget {
            target,
            low: f_lo,
            high: f_hi,
        });
    }
    Ok(hi)
}
