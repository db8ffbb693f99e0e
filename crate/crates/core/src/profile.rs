//! The evaluator abstraction every estimator in this crate works against.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::{Cell, RefCell};

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// A log profile likelihood `θ ↦ log pl_n(θ) = sup_η log lik_n(θ, η)`, with the
/// nuisance maximization already carried out inside [`log_profile`].
///
/// Implementations must be deterministic: equal `θ` bits give equal results.
///
/// [`log_profile`]: ProfileEvaluator::log_profile
pub trait ProfileEvaluator {
    /// Dimension `d` of the parameter of interest.
    fn dim(&self) -> usize;
    /// Number of observations `n` behind the likelihood.
    fn sample_size(&self) -> usize;
    fn log_profile(&self, theta: &[f64]) -> Result<f64>;
}

impl<E: ProfileEvaluator + ?Sized> ProfileEvaluator for &E {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn sample_size(&self) -> usize {
        (**self).sample_size()
    }
    fn log_profile(&self, theta: &[f64]) -> Result<f64> {
        (**self).log_profile(theta)
    }
}

/// Axis-aligned parameter box `Θ = ∏ [lowerᵢ, upperᵢ]`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ParamBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl ParamBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::EmptyInput);
        }
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                found: upper.len(),
            });
        }
        let ok = lower
            .iter()
            .zip(&upper)
            .all(|(lo, hi)| lo.is_finite() && hi.is_finite() && lo < hi);
        if !ok {
            return Err(Error::arg("box bounds must be finite with lower < upper"));
        }
        Ok(ParamBox { lower, upper })
    }

    /// `[-half_width, half_width]^d`.
    pub fn symmetric(d: usize, half_width: f64) -> Result<Self> {
        ParamBox::new(vec![-half_width; d], vec![half_width; d])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (lo, hi))| *x >= *lo && *x <= *hi)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| 0.5 * (lo + hi))
            .collect()
    }

    pub fn clamp(&self, theta: &mut [f64]) {
        for (x, (lo, hi)) in theta.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *x = x.clamp(*lo, *hi);
        }
    }
}

/// Exact quadratic surrogate `log pl(θ) = -n/2 (θ-θ*)ᵀ H (θ-θ*)`.
///
/// Second differences of a quadratic are exact, which makes this the reference
/// model for checking `Π_n`, `Γ_n` and the K-step update in closed form.
#[derive(Debug, Clone)]
pub struct QuadraticProfile {
    n: usize,
    center: DVector<f64>,
    curvature: DMatrix<f64>,
}

impl QuadraticProfile {
    pub fn new(n: usize, center: Vec<f64>, curvature: DMatrix<f64>) -> Result<Self> {
        let d = center.len();
        if curvature.nrows() != d || curvature.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: curvature.nrows(),
            });
        }
        if n == 0 {
            return Err(Error::EmptySample);
        }
        Ok(QuadraticProfile {
            n,
            center: DVector::from_vec(center),
            curvature,
        })
    }

    /// One-dimensional surrogate with unit per-observation curvature.
    pub fn scalar(n: usize, center: f64) -> Self {
        QuadraticProfile::new(n, vec![center], DMatrix::identity(1, 1)).expect("1x1 surrogate")
    }

    pub fn curvature(&self) -> &DMatrix<f64> {
        &self.curvature
    }
}

impl ProfileEvaluator for QuadraticProfile {
    fn dim(&self) -> usize {
        self.center.len()
    }
    fn sample_size(&self) -> usize {
        self.n
    }
    fn log_profile(&self, theta: &[f64]) -> Result<f64> {
        if theta.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: theta.len(),
            });
        }
        let diff = DVector::from_column_slice(theta) - &self.center;
        let q = (&self.curvature * &diff).dot(&diff);
        Ok(-0.5 * self.n as f64 * q)
    }
}

/// Memoizes an evaluator on the exact bit pattern of `θ`.
pub struct CachedProfile<E> {
    inner: E,
    cache: RefCell<BTreeMap<Vec<u64>, f64>>,
    misses: Cell<usize>,
}

impl<E: ProfileEvaluator> CachedProfile<E> {
    pub fn new(inner: E) -> Self {
        CachedProfile {
            inner,
            cache: RefCell::new(BTreeMap::new()),
            misses: Cell::new(0),
        }
    }

    /// Number of calls forwarded to the wrapped evaluator.
    pub fn misses(&self) -> usize {
        self.misses.get()
    }

    pub fn into_inner(self) -> E {
        self.inner
    }
}

pub(crate) fn theta_key(theta: &[f64]) -> Vec<u64> {
    theta.iter().map(|x| x.to_bits()).collect()
}

impl<E: ProfileEvaluator> ProfileEvaluator for CachedProfile<E> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn sample_size(&self) -> usize {
        self.inner.sample_size()
    }
    fn log_profile(&self, theta: &[f64]) -> Result<f64> {
        let key = theta_key(theta);
        if let Some(v) = self.cache.borrow().get(&key) {
            return Ok(*v);
        }
        let v = self.inner.log_profile(theta)?;
        self.misses.set(self.misses.get() + 1);
        self.cache.borrow_mut().insert(key, v);
        Ok(v)
    }
}

/// Counts evaluator calls; used to check evaluation budgets.
pub struct CountingProfile<E> {
    inner: E,
    calls: Cell<usize>,
}

impl<E> CountingProfile<E> {
    pub fn new(inner: E) -> Self {
        CountingProfile {
            inner,
            calls: Cell::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.get()
    }
}

impl<E: ProfileEvaluator> ProfileEvaluator for CountingProfile<E> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn sample_size(&self) -> usize {
        self.inner.sample_size()
    }
    fn log_profile(&self, theta: &[f64]) -> Result<f64> {
        self.calls.set(self.calls.get() + 1);
        self.inner.log_profile(theta)
    }
}
