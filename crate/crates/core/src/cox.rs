//! Cox regression with right-censored data.
//!
//! The profile likelihood has the closed form
//!
//! ```text
//! log pl_n(θ) = Σᵢ ( θᵀz₍ᵢ₎ − log Σ_{j ∈ Rᵢ} exp(θᵀz_j) ),   Rᵢ = { j : Y_j ≥ tᵢ }
//! ```
//!
//! summed over observed event times. Tied event times share one risk set
//! (Breslow). Subjects are stored in decreasing order of `Y`, so every risk set
//! is a prefix and one pass with a running log-sum-exp evaluates all of them.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;

use crate::data::{Dataset, Scheme};
use crate::profile::ProfileEvaluator;
use crate::{Error, Result};

/// Distinct event time with its tied events.
#[derive(Debug, Clone, PartialEq)]
pub struct EventGroup {
    pub time: f64,
    /// `|R|`, the number of subjects with `Y ≥ time`.
    pub at_risk: usize,
    /// Number of events observed at `time`.
    pub events: usize,
    /// Sum of the event subjects' covariates.
    pub z_event_sum: Vec<f64>,
}

/// Risk-set structure for evaluating the partial likelihood in `O(n d)`.
#[derive(Debug, Clone)]
pub struct RiskSetIndex {
    n: usize,
    d: usize,
    /// Original subject indices in decreasing order of `Y`.
    order: Vec<usize>,
    /// Covariates in `order`, row-major `n × d`.
    z: Vec<f64>,
    /// Increasing in time.
    groups: Vec<EventGroup>,
}

/// Sorts subjects and records the event groups.
pub fn build_risk_sets(data: &Dataset) -> Result<RiskSetIndex> {
    if data.scheme() != Scheme::RightCensored {
        return Err(Error::SchemeMismatch);
    }
    let obs = data.observations();
    let (n, d) = (data.n(), data.dim());
    if !obs.iter().any(|o| o.delta) {
        return Err(Error::NoEvents);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| obs[b].y.total_cmp(&obs[a].y).then(a.cmp(&b)));

    let mut z = Vec::with_capacity(n * d);
    for &i in &order {
        z.extend_from_slice(&obs[i].z);
    }

    let mut groups = Vec::new();
    let mut pos = 0;
    while pos < n {
        let time = obs[order[pos]].y;
        let mut end = pos;
        let mut events = 0;
        let mut z_event_sum = vec![0.0; d];
        while end < n && obs[order[end]].y == time {
            let o = &obs[order[end]];
            if o.delta {
                events += 1;
                for (acc, v) in z_event_sum.iter_mut().zip(&o.z) {
                    *acc += v;
                }
            }
            end += 1;
        }
        if events > 0 {
            groups.push(EventGroup {
                time,
                at_risk: end,
                events,
                z_event_sum,
            });
        }
        pos = end;
    }
    groups.reverse();
    Ok(RiskSetIndex {
        n,
        d,
        order,
        z,
        groups,
    })
}

impl RiskSetIndex {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Distinct event times in increasing order.
    pub fn groups(&self) -> &[EventGroup] {
        &self.groups
    }

    /// Original indices of the subjects in the risk set of group `k`.
    pub fn risk_set(&self, k: usize) -> &[usize] {
        &self.order[..self.groups[k].at_risk]
    }

    fn row(&self, j: usize) -> &[f64] {
        &self.z[j * self.d..(j + 1) * self.d]
    }

    fn check(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                found: theta.len(),
            });
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::arg("theta must be finite"));
        }
        Ok(())
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Exact log partial likelihood at `theta`.
pub fn log_profile_rc(index: &RiskSetIndex, theta: &[f64]) -> Result<f64> {
    index.check(theta)?;
    let mut shift = f64::NEG_INFINITY;
    let mut sum = 0.0;
    let mut total = 0.0;
    let mut next = index.groups.len();
    for j in 0..index.n {
        let eta = dot(theta, index.row(j));
        if eta > shift {
            sum = sum * (shift - eta).exp() + 1.0;
            shift = eta;
        } else {
            sum += (eta - shift).exp();
        }
        while next > 0 && index.groups[next - 1].at_risk == j + 1 {
            next -= 1;
            let g = &index.groups[next];
            total += dot(theta, &g.z_event_sum) - g.events as f64 * (shift + sum.ln());
        }
    }
    Ok(total)
}

/// Running weighted moments of the covariates over a growing risk set,
/// kept relative to `exp(shift)`.
struct Moments {
    shift: f64,
    s0: f64,
    s1: Vec<f64>,
    s2: Vec<f64>,
}

fn accumulate_moments<F: FnMut(&Moments, &EventGroup)>(
    index: &RiskSetIndex,
    theta: &[f64],
    mut visit: F,
) {
    let d = index.d;
    let mut m = Moments {
        shift: f64::NEG_INFINITY,
        s0: 0.0,
        s1: vec![0.0; d],
        s2: vec![0.0; d * d],
    };
    let mut next = index.groups.len();
    for j in 0..index.n {
        let z = index.row(j);
        let eta = dot(theta, z);
        let w = if eta > m.shift {
            let scale = (m.shift - eta).exp();
            m.s0 *= scale;
            m.s1.iter_mut().for_each(|v| *v *= scale);
            m.s2.iter_mut().for_each(|v| *v *= scale);
            m.shift = eta;
            1.0
        } else {
            (eta - m.shift).exp()
        };
        m.s0 += w;
        for a in 0..d {
            m.s1[a] += w * z[a];
            for b in 0..d {
                m.s2[a * d + b] += w * z[a] * z[b];
            }
        }
        while next > 0 && index.groups[next - 1].at_risk == j + 1 {
            next -= 1;
            visit(&m, &index.groups[next]);
        }
    }
}

/// Gradient `Σᵢ (z₍ᵢ₎ − z̄ᵢ(θ))` of [`log_profile_rc`], not divided by `n`.
pub fn analytic_score_rc(index: &RiskSetIndex, theta: &[f64]) -> Result<Vec<f64>> {
    index.check(theta)?;
    let mut score = vec![0.0; index.d];
    accumulate_moments(index, theta, |m, g| {
        let k = g.events as f64;
        for ((sc, ze), s1) in score.iter_mut().zip(&g.z_event_sum).zip(&m.s1) {
            *sc += ze - k * s1 / m.s0;
        }
    });
    Ok(score)
}

/// Negative Hessian `Σᵢ Vᵢ(θ)` of [`log_profile_rc`], not divided by `n`.
pub fn analytic_info_rc(index: &RiskSetIndex, theta: &[f64]) -> Result<DMatrix<f64>> {
    index.check(theta)?;
    let d = index.d;
    let mut info = DMatrix::zeros(d, d);
    accumulate_moments(index, theta, |m, g| {
        let k = g.events as f64;
        for a in 0..d {
            let mean_a = m.s1[a] / m.s0;
            for b in 0..d {
                let mean_b = m.s1[b] / m.s0;
                info[(a, b)] += k * (m.s2[a * d + b] / m.s0 - mean_a * mean_b);
            }
        }
    });
    Ok(info)
}

/// [`ProfileEvaluator`] for the right-censored Cox model.
#[derive(Debug, Clone)]
pub struct RightCensoredProfile {
    index: RiskSetIndex,
}

impl RightCensoredProfile {
    pub fn new(data: &Dataset) -> Result<Self> {
        Ok(RightCensoredProfile {
            index: build_risk_sets(data)?,
        })
    }

    pub fn index(&self) -> &RiskSetIndex {
        &self.index
    }
}

impl ProfileEvaluator for RightCensoredProfile {
    fn dim(&self) -> usize {
        self.index.d
    }
    fn sample_size(&self) -> usize {
        self.index.n
    }
    fn log_profile(&self, theta: &[f64]) -> Result<f64> {
        log_profile_rc(&self.index, theta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Observation;

    fn rc(rows: &[(f64, bool, f64)]) -> Dataset {
        Dataset::new(
            Scheme::RightCensored,
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

    fn two_point() -> RiskSetIndex {
        build_risk_sets(&rc(&[(1.0, true, 0.0), (2.0, false, 1.0)])).unwrap()
    }

    #[test]
    fn two_point_risk_set() {
        let idx = two_point();
        assert_eq!(idx.groups().len(), 1);
        let mut r = idx.risk_set(0).to_vec();
        r.sort();
        assert_eq!(r, vec![0, 1]);
    }

    #[test]
    fn nested_risk_sets() {
        let idx =
            build_risk_sets(&rc(&[(3.0, true, 0.1), (1.0, true, 0.2), (2.0, true, 0.3)])).unwrap();
        let sizes: Vec<usize> = idx.groups().iter().map(|g| g.at_risk).collect();
        assert_eq!(sizes, vec![3, 2, 1]);
        assert_eq!(idx.risk_set(2), &[0]);
    }

    #[test]
    fn all_censored_is_degenerate() {
        let data = rc(&[(1.0, false, 0.0), (2.0, false, 1.0)]);
        assert_eq!(build_risk_sets(&data).unwrap_err(), Error::NoEvents);
    }

    #[test]
    fn wrong_scheme_is_rejected() {
        let data = Dataset::new(
            Scheme::CurrentStatus,
            vec![Observation {
                y: 1.0,
                delta: true,
                z: vec![0.0],
            }],
        )
        .unwrap();
        assert_eq!(build_risk_sets(&data).unwrap_err(), Error::SchemeMismatch);
    }

    #[test]
    fn two_point_values() {
        let idx = two_point();
        let v = log_profile_rc(&idx, &[0.0]).unwrap();
        assert!((v + core::f64::consts::LN_2).abs() < 1e-15);
        let s = analytic_score_rc(&idx, &[0.0]).unwrap()[0] / 2.0;
        assert!((s + 0.25).abs() < 1e-15);
        let i = analytic_info_rc(&idx, &[0.0]).unwrap()[(0, 0)] / 2.0;
        assert!((i - 0.125).abs() < 1e-15);
    }

    #[test]
    fn breslow_ties_share_the_risk_set() {
        // Two events tied at t=1 with a censored subject also at t=1.
        let idx = build_risk_sets(&rc(&[
            (1.0, true, 0.0),
            (1.0, true, 1.0),
            (1.0, false, 2.0),
        ]))
        .unwrap();
        assert_eq!(idx.groups().len(), 1);
        assert_eq!(idx.groups()[0].events, 2);
        let theta = 0.4f64;
        let expected = theta * 1.0 - 2.0 * (1.0 + theta.exp() + (2.0 * theta).exp()).ln();
        let v = log_profile_rc(&idx, &[theta]).unwrap();
        assert!((v - expected).abs() < 1e-13);
    }

    #[test]
    fn concentrated_weights_kill_information() {
        let idx = two_point();
        for theta in [-30.0, 30.0] {
            let i = analytic_info_rc(&idx, &[theta]).unwrap()[(0, 0)];
            assert!(i < 1e-12, "info at {theta} = {i}");
            assert!(log_profile_rc(&idx, &[theta]).unwrap().is_finite());
        }
    }

    #[test]
    fn large_linear_predictors_do_not_overflow() {
        let idx = build_risk_sets(&rc(&[
            (1.0, true, 900.0),
            (2.0, true, 1000.0),
            (3.0, false, 800.0),
        ]))
        .unwrap();
        let v = log_profile_rc(&idx, &[1.0]).unwrap();
        assert!(v.is_finite());
    }
}
