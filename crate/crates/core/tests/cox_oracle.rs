use kstep_core::cox::{
    analytic_info_rc, analytic_score_rc, build_risk_sets, log_profile_rc, RightCensoredProfile,
};
use kstep_core::data::{Dataset, Observation, Scheme};
use kstep_core::numdiff::{gamma_n, pi_n};
use kstep_testkit::{cox_information, cox_partial_loglik, cox_score};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Sample {
    y: Vec<f64>,
    delta: Vec<bool>,
    z: Vec<Vec<f64>>,
}

impl Sample {
    fn random(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Sample {
        let y: Vec<f64> = (0..n)
            .map(|_| (rng.random::<f64>() * 20.0).round() / 10.0)
            .collect();
        let mut delta: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.7).collect();
        delta[0] = true;
        let z = (0..n)
            .map(|_| (0..d).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect())
            .collect();
        Sample { y, delta, z }
    }

    fn dataset(&self) -> Dataset {
        let obs = (0..self.y.len())
            .map(|i| Observation {
                y: self.y[i],
                delta: self.delta[i],
                z: self.z[i].clone(),
            })
            .collect();
        Dataset::new(Scheme::RightCensored, obs).unwrap()
    }

    fn map_z(&self, f: impl Fn(f64) -> f64) -> Sample {
        Sample {
            y: self.y.clone(),
            delta: self.delta.clone(),
            z: self
                .z
                .iter()
                .map(|zi| zi.iter().map(|v| f(*v)).collect())
                .collect(),
        }
    }
}

#[test]
fn closed_forms_match_direct_summation() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..50 {
        let n = 2 + trial % 49;
        let d = 1 + trial % 3;
        let s = Sample::random(&mut rng, n, d);
        let index = build_risk_sets(&s.dataset()).unwrap();
        let theta: Vec<f64> = (0..d).map(|_| 3.0 * rng.random::<f64>() - 1.5).collect();
        let lp = log_profile_rc(&index, &theta).unwrap();
        assert!((lp - cox_partial_loglik(&s.y, &s.delta, &s.z, &theta)).abs() < 1e-10);
        let score = analytic_score_rc(&index, &theta).unwrap();
        let info = analytic_info_rc(&index, &theta).unwrap();
        let want_score = cox_score(&s.y, &s.delta, &s.z, &theta);
        let want_info = cox_information(&s.y, &s.delta, &s.z, &theta);
        for a in 0..d {
            assert!((score[a] - want_score[a]).abs() < 1e-10);
            for b in 0..d {
                assert!((info[(a, b)] - want_info[a][b]).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn difference_quotients_track_analytic_derivatives() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for trial in 0..50 {
        let n = 5 + trial % 46;
        let s = Sample::random(&mut rng, n, 1);
        let pl = RightCensoredProfile::new(&s.dataset()).unwrap();
        let theta = [2.0 * rng.random::<f64>() - 1.0];
        let nf = n as f64;
        let g = gamma_n(&pl, &theta, 1e-6).unwrap();
        let p = pi_n(&pl, &theta, 1e-4).unwrap();
        let score = analytic_score_rc(pl.index(), &theta).unwrap();
        let info = analytic_info_rc(pl.index(), &theta).unwrap();
        assert!((g[0] - score[0] / nf).abs() < 1e-4);
        assert!((p[(0, 0)] - info[(0, 0)] / nf).abs() < 1e-3);
    }
}

#[test]
fn central_differences_match_the_score() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let s = Sample::random(&mut rng, 30, 2);
        let index = build_risk_sets(&s.dataset()).unwrap();
        let theta = [0.4, -0.8];
        let score = analytic_score_rc(&index, &theta).unwrap();
        let h = 1e-6;
        for a in 0..2 {
            let mut up = theta;
            let mut down = theta;
            up[a] += h;
            down[a] -= h;
            let fd = (log_profile_rc(&index, &up).unwrap()
                - log_profile_rc(&index, &down).unwrap())
                / (2.0 * h);
            assert!(
                (fd - score[a]).abs() <= 1e-6 * score[a].abs().max(1.0),
                "{fd} {}",
                score[a]
            );
        }
    }
}

#[test]
fn location_shift_example() {
    let s = Sample {
        y: vec![1.0, 2.0, 2.5, 3.0],
        delta: vec![true, false, true, true],
        z: vec![vec![0.2], vec![-0.4], vec![0.9], vec![0.1]],
    };
    let base = log_profile_rc(&build_risk_sets(&s.dataset()).unwrap(), &[0.7]).unwrap();
    let shifted = log_profile_rc(
        &build_risk_sets(&s.map_z(|v| v + 5.0).dataset()).unwrap(),
        &[0.7],
    )
    .unwrap();
    assert!((base - shifted).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn location_invariance(seed in 0u64..1000, c in -10.0f64..10.0, theta in -2.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = Sample::random(&mut rng, 25, 1);
        let a = log_profile_rc(&build_risk_sets(&s.dataset()).unwrap(), &[theta]).unwrap();
        let b = log_profile_rc(&build_risk_sets(&s.map_z(|v| v + c).dataset()).unwrap(), &[theta]).unwrap();
        prop_assert!((a - b).abs() < 1e-10, "{} {}", a, b);
    }

    #[test]
    fn scale_equivariance(seed in 0u64..1000, scale in 0.1f64..5.0, negate: bool, theta in -1.0f64..1.0) {
        let a_factor = if negate { -scale } else { scale };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = Sample::random(&mut rng, 25, 1);
        let left = log_profile_rc(&build_risk_sets(&s.map_z(|v| a_factor * v).dataset()).unwrap(), &[theta]).unwrap();
        let right = log_profile_rc(&build_risk_sets(&s.dataset()).unwrap(), &[a_factor * theta]).unwrap();
        prop_assert!((left - right).abs() < 1e-10);
    }

    #[test]
    fn concave_along_lines(seed in 0u64..1000, t0 in -2.0f64..2.0, t1 in -2.0f64..2.0, dir0 in -1.0f64..1.0, dir1 in -1.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = Sample::random(&mut rng, 25, 2);
        let index = build_risk_sets(&s.dataset()).unwrap();
        let h = 1e-3;
        let at = |u: f64| log_profile_rc(&index, &[t0 + u * dir0, t1 + u * dir1]).unwrap();
        let second = at(h) - 2.0 * at(0.0) + at(-h);
        prop_assert!(second <= 1e-8, "{}", second);
    }
}
