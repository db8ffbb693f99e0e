//! The K-step profile-likelihood update, iteration counts, Wald intervals and
//! the reference full MLE.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

use crate::normal;
use crate::numdiff::{check_rates, gamma_n, pi_n, StepSchedule, StepSizes};
use crate::optimize::{brent_maximize, nelder_mead_maximize};
use crate::profile::{CachedProfile, ParamBox, ProfileEvaluator};
use crate::{Error, Result};

/// Smallest eigenvalue an information matrix may have and still be used.
pub const MIN_EIGENVALUE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Termination {
    ReachedK,
    /// `Π_n` had an eigenvalue below [`MIN_EIGENVALUE`]; no update was made.
    SingularPi,
    /// An update left the parameter box; it was not recorded.
    DomainExit,
}

/// Record of one K-step run. `iterates` has one more entry than each of the
/// per-update vectors.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KStepTrace {
    pub iterates: Vec<Vec<f64>>,
    pub gammas: Vec<Vec<f64>>,
    /// Row-major `Π_n` used for each update.
    pub pis: Vec<Vec<Vec<f64>>>,
    pub steps_used: Vec<StepSizes>,
    pub termination: Termination,
}

impl KStepTrace {
    pub fn last(&self) -> &[f64] {
        self.iterates
            .last()
            .expect("trace holds the starting point")
    }

    pub fn steps_taken(&self) -> usize {
        self.iterates.len() - 1
    }
}

pub(crate) fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 1 {
        return m[(0, 0)];
    }
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Runs `k` updates `θ ← θ + Π_n(θ, t)⁻¹ Γ_n(θ, s)` with the schedule's
/// per-step `(s, t)`.
///
/// Singular information and box exits end the run early and are reported
/// through [`KStepTrace::termination`]; evaluator failures are errors.
pub fn kstep<E: ProfileEvaluator + ?Sized>(
    pl: &E,
    theta0: &[f64],
    schedule: &StepSchedule,
    k: usize,
    bounds: &ParamBox,
) -> Result<KStepTrace> {
    if theta0.len() != pl.dim() || bounds.dim() != pl.dim() {
        return Err(Error::DimensionMismatch {
            expected: pl.dim(),
            found: theta0.len(),
        });
    }
    let mut trace = KStepTrace {
        iterates: alloc::vec![theta0.to_vec()],
        gammas: Vec::new(),
        pis: Vec::new(),
        steps_used: Vec::new(),
        termination: Termination::ReachedK,
    };
    if !bounds.contains(theta0) {
        trace.termination = Termination::DomainExit;
        return Ok(trace);
    }
    let mut theta = theta0.to_vec();
    for step in 0..k {
        let sizes = schedule.step(step);
        let cached = CachedProfile::new(pl);
        let gamma = gamma_n(&cached, &theta, sizes.s)?;
        let pi = pi_n(&cached, &theta, sizes.t)?;
        let pi = (&pi + pi.transpose()) * 0.5;
        if !(min_eigenvalue(&pi) >= MIN_EIGENVALUE) {
            trace.termination = Termination::SingularPi;
            break;
        }
        let rhs = DVector::from_column_slice(&gamma);
        let delta = match pi.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => {
                trace.termination = Termination::SingularPi;
                break;
            }
        };
        let next: Vec<f64> = theta.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
        if !bounds.contains(&next) {
            trace.termination = Termination::DomainExit;
            break;
        }
        trace.gammas.push(gamma);
        trace.pis.push(rows(&pi));
        trace.steps_used.push(sizes);
        trace.iterates.push(next.clone());
        theta = next;
    }
    Ok(trace)
}

/// `int[x]`: the smallest nonnegative integer `≥ x`. Values within `1e-9` of
/// an integer are treated as that integer.
fn int_ceil(x: f64) -> usize {
    let c = (x - 1e-9).ceil();
    if c > 0.0 {
        c as usize
    } else {
        0
    }
}

/// Number of updates needed for the optimal rate from an `n^ψ`-consistent
/// start:
///
/// * `r ≥ 1/2`: `N = int[log 2ψ / log(2/3)] + 1`
/// * `1/4 < r < 1/2`: `M = int[log(ψ/r) / log(2/3)] + int[log(4r/(4r−1)) / log 2 − 1] + 1`
pub fn count_iterations(psi: f64, r: f64) -> Result<usize> {
    check_rates(psi, r)?;
    let ratio = (2.0f64 / 3.0).ln();
    Ok(if r >= 0.5 {
        int_ceil((2.0 * psi).ln() / ratio) + 1
    } else {
        let first = int_ceil((psi / r).ln() / ratio);
        let second = int_ceil((4.0 * r / (4.0 * r - 1.0)).ln() / 2.0f64.ln() - 1.0);
        first + second + 1
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum InfoSource {
    /// `Π_n` at the final iterate.
    PiAtFinal,
    /// Inverse sample variance of the profile sampler, divided by `n`.
    ProfileSamplerVariance,
}

/// A validated estimate of the per-observation efficient information.
#[derive(Debug, Clone, PartialEq)]
pub struct EfficientInfoEstimate {
    matrix: DMatrix<f64>,
    source: InfoSource,
}

impl EfficientInfoEstimate {
    pub fn new(matrix: DMatrix<f64>, source: InfoSource) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::SingularInformation);
        }
        let scale = matrix.amax().max(1.0);
        if (&matrix - matrix.transpose()).amax() > 1e-12 * scale {
            return Err(Error::arg("information estimate must be symmetric"));
        }
        if !(min_eigenvalue(&matrix) > MIN_EIGENVALUE) {
            return Err(Error::SingularInformation);
        }
        Ok(EfficientInfoEstimate { matrix, source })
    }

    pub fn scalar(value: f64, source: InfoSource) -> Result<Self> {
        EfficientInfoEstimate::new(DMatrix::from_element(1, 1, value), source)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn source(&self) -> InfoSource {
        self.source
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        rows(&self.matrix)
    }
}

/// Coordinate-wise `θ ± z_{1−α/2} sqrt(diag(Ĩ⁻¹) / n)`.
pub fn confidence_interval(
    theta_k: &[f64],
    info: &EfficientInfoEstimate,
    n: usize,
    alpha: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::arg("alpha must lie in (0, 1)"));
    }
    if n == 0 {
        return Err(Error::EmptySample);
    }
    if theta_k.len() != info.matrix.nrows() {
        return Err(Error::DimensionMismatch {
            expected: info.matrix.nrows(),
            found: theta_k.len(),
        });
    }
    let z = normal::quantile(1.0 - alpha / 2.0)?;
    let inv = info
        .matrix
        .clone()
        .cholesky()
        .ok_or(Error::SingularInformation)?
        .inverse();
    let mut lower = Vec::with_capacity(theta_k.len());
    let mut upper = Vec::with_capacity(theta_k.len());
    for (i, th) in theta_k.iter().enumerate() {
        let half = z * (inv[(i, i)] / n as f64).sqrt();
        lower.push(th - half);
        upper.push(th + half);
    }
    Ok((lower, upper))
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MleResult {
    pub theta: Vec<f64>,
    pub log_profile: f64,
    /// The maximizer sits on the box boundary (e.g. monotone likelihood).
    pub on_boundary: bool,
}

const SCAN_POINTS: usize = 21;

/// Maximizes `log pl` over the box: a 21-point scan plus Brent's method for
/// `d = 1`, restarted Nelder–Mead for `d > 1`.
pub fn full_mle<E: ProfileEvaluator + ?Sized>(
    pl: &E,
    bounds: &ParamBox,
    tol: f64,
) -> Result<MleResult> {
    if bounds.dim() != pl.dim() {
        return Err(Error::DimensionMismatch {
            expected: pl.dim(),
            found: bounds.dim(),
        });
    }
    if !(tol > 0.0) {
        return Err(Error::arg("tolerance must be positive"));
    }
    let eval = |theta: &[f64]| pl.log_profile(theta).map_err(|e| Error::at(theta, e));
    let (lower, upper) = (bounds.lower(), bounds.upper());
    let (theta, value) = if pl.dim() == 1 {
        let (lo, hi) = (lower[0], upper[0]);
        let h = (hi - lo) / (SCAN_POINTS - 1) as f64;
        let mut best = (0usize, f64::NEG_INFINITY);
        for i in 0..SCAN_POINTS {
            let x = if i + 1 == SCAN_POINTS {
                hi
            } else {
                lo + h * i as f64
            };
            let v = eval(&[x])?;
            if v > best.1 {
                best = (i, v);
            }
        }
        let centre = lo + h * best.0 as f64;
        let a = (centre - h).max(lo);
        let b = (centre + h).min(hi);
        let (x, fx) = brent_maximize(|x| eval(&[x]), a, b, tol)?;
        let scan_x = if best.0 + 1 == SCAN_POINTS {
            hi
        } else {
            centre
        };
        if best.1 >= fx {
            (alloc::vec![scan_x], best.1)
        } else {
            (alloc::vec![x], fx)
        }
    } else {
        nelder_mead_maximize(eval, &bounds.center(), lower, upper, tol)?
    };
    let on_boundary = theta
        .iter()
        .zip(lower.iter().zip(upper))
        .any(|(x, (lo, hi))| (x - lo).abs() <= 10.0 * tol || (hi - x).abs() <= 10.0 * tol);
    Ok(MleResult {
        theta,
        log_profile: value,
        on_boundary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numdiff::schedule_steps;
    use crate::profile::QuadraticProfile;
    use alloc::vec;

    fn unit_box() -> ParamBox {
        ParamBox::symmetric(1, 5.0).unwrap()
    }

    #[test]
    fn one_step_on_quadratic() {
        let q = QuadraticProfile::scalar(100, 0.3);
        let sched = StepSchedule::fixed(vec![StepSizes { s: 0.01, t: 0.37 }]).unwrap();
        let tr = kstep(&q, &[1.0], &sched, 1, &unit_box()).unwrap();
        assert_eq!(tr.termination, Termination::ReachedK);
        assert!((tr.last()[0] - 0.295).abs() < 1e-12);
        assert!((tr.gammas[0][0] + 0.705).abs() < 1e-12);
        assert!((tr.pis[0][0][0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn two_steps_with_halved_s() {
        let q = QuadraticProfile::scalar(100, 0.3);
        let sched = StepSchedule::fixed(vec![
            StepSizes { s: 0.02, t: 0.1 },
            StepSizes { s: 0.01, t: 0.1 },
        ])
        .unwrap();
        let tr = kstep(&q, &[1.0], &sched, 2, &unit_box()).unwrap();
        assert!((tr.iterates[1][0] - 0.29).abs() < 1e-12);
        assert!((tr.iterates[2][0] - 0.295).abs() < 1e-12);
    }

    #[test]
    fn zero_steps_returns_start() {
        let q = QuadraticProfile::scalar(100, 0.3);
        let sched = StepSchedule::fixed(vec![StepSizes { s: 0.01, t: 0.1 }]).unwrap();
        let tr = kstep(&q, &[1.0], &sched, 0, &unit_box()).unwrap();
        assert_eq!(tr.iterates, vec![vec![1.0]]);
    }

    #[test]
    fn flat_surrogate_is_singular() {
        let flat = QuadraticProfile::new(10, vec![0.0], DMatrix::zeros(1, 1)).unwrap();
        let sched = StepSchedule::fixed(vec![StepSizes { s: 0.01, t: 0.1 }]).unwrap();
        let tr = kstep(&flat, &[1.0], &sched, 3, &unit_box()).unwrap();
        assert_eq!(tr.termination, Termination::SingularPi);
        assert_eq!(tr.steps_taken(), 0);
        assert!(tr.pis.is_empty());
    }

    #[test]
    fn leaving_the_box_stops() {
        let q = QuadraticProfile::scalar(10, 4.9);
        let sched = StepSchedule::fixed(vec![StepSizes { s: 0.01, t: 0.1 }]).unwrap();
        let narrow = ParamBox::new(vec![-1.0], vec![1.0]).unwrap();
        let tr = kstep(&q, &[0.0], &sched, 1, &narrow).unwrap();
        assert_eq!(tr.termination, Termination::DomainExit);
        assert_eq!(tr.iterates.len(), 1);
    }

    #[test]
    fn iteration_counts() {
        assert_eq!(count_iterations(0.5, 0.5).unwrap(), 1);
        assert_eq!(count_iterations(0.5, 2.0).unwrap(), 1);
        assert_eq!(count_iterations(0.25, 1.0 / 3.0).unwrap(), 3);
        assert_eq!(count_iterations(0.25, 0.4).unwrap(), 4);
        assert!(count_iterations(0.0, 0.5).is_err());
        assert!(count_iterations(0.6, 0.5).is_err());
        assert!(count_iterations(0.25, 0.25).is_err());
    }

    #[test]
    fn schedule_length_matches_iteration_count() {
        let mut rs: Vec<f64> = (0..13).map(|i| 0.26 + 0.02 * i as f64).collect();
        rs.push(0.5);
        rs.push(0.75);
        for i in 1..=10 {
            let psi = 0.05 * i as f64;
            for &r in &rs {
                let s = schedule_steps(psi, r, 100, 1.0, 1.0, 64).unwrap();
                assert_eq!(
                    s.len(),
                    count_iterations(psi, r).unwrap(),
                    "psi={psi} r={r}"
                );
                for x in s.exponents() {
                    assert!(x.a > 0.0 && x.a <= 0.75 + 1e-15);
                    assert!(x.b > 0.0 && x.b <= 0.5 + 1e-15);
                }
            }
        }
    }

    #[test]
    fn standard_interval() {
        let info = EfficientInfoEstimate::scalar(1.0, InfoSource::PiAtFinal).unwrap();
        let (lo, hi) = confidence_interval(&[0.0], &info, 100, 0.05).unwrap();
        assert!((lo[0] + 0.195996).abs() < 1e-6 && (hi[0] - 0.195996).abs() < 1e-6);
        let info = EfficientInfoEstimate::scalar(4.0, InfoSource::PiAtFinal).unwrap();
        let (lo, hi) = confidence_interval(&[1.0], &info, 400, 0.32).unwrap();
        assert!((lo[0] - 0.975139).abs() < 1e-6 && (hi[0] - 1.024861).abs() < 1e-6);
        assert!(confidence_interval(&[1.0], &info, 400, 0.0).is_err());
    }

    #[test]
    fn singular_info_is_rejected() {
        assert_eq!(
            EfficientInfoEstimate::scalar(0.0, InfoSource::PiAtFinal),
            Err(Error::SingularInformation)
        );
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(EfficientInfoEstimate::new(m, InfoSource::PiAtFinal).is_err());
    }

    #[test]
    fn mle_of_quadratic() {
        let q = QuadraticProfile::scalar(100, 0.3);
        let m = full_mle(&q, &unit_box(), 1e-8).unwrap();
        assert!((m.theta[0] - 0.3).abs() < 1e-8);
        assert!(!m.on_boundary);
    }

    #[test]
    fn mle_in_two_dimensions() {
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let q = QuadraticProfile::new(50, vec![0.7, -1.2], h).unwrap();
        let m = full_mle(&q, &ParamBox::symmetric(2, 5.0).unwrap(), 1e-8).unwrap();
        assert!(
            (m.theta[0] - 0.7).abs() < 1e-6 && (m.theta[1] + 1.2).abs() < 1e-6,
            "{:?}",
            m.theta
        );
    }
}
