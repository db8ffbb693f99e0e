use kstep_core::data::{
    calibrate_censoring, generate_current_status, generate_right_censored, CumulativeHazard,
    Scheme, TrueModel,
};
use kstep_core::Error;
use kstep_testkit::{ks_pvalue, ks_statistic, ks_two_sample, ks_two_sample_critical};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn model(theta: f64, tn: f64) -> TrueModel {
    TrueModel::new(vec![theta], CumulativeHazard::ExpMinusOne, tn).unwrap()
}

fn event_times(m: &TrueModel, z: f64, count: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| m.event_time(1.0 - rng.random::<f64>(), &[z]).unwrap())
        .collect()
}

#[test]
fn inverse_transform_at_a_known_point() {
    let t = model(1.0, 1.0).event_time((-1.0f64).exp(), &[0.0]).unwrap();
    assert!((t - 2f64.ln()).abs() < 1e-15);
}

#[test]
fn covariate_drops_out_at_zero_coefficient() {
    let m = model(0.0, 1.0);
    let a = event_times(&m, 0.0, 10_000, 1);
    let b = event_times(&m, 1.0, 10_000, 2);
    assert!(ks_two_sample(&a, &b) < ks_two_sample_critical(0.05, 10_000, 10_000));
}

#[test]
fn marginal_law_of_event_times() {
    let m = model(1.0, 1.0);
    let z = 0.6f64;
    let ts = event_times(&m, z, 10_000, 3);
    let d = ks_statistic(&ts, |t| 1.0 - (-(t.exp() - 1.0) * z.exp()).exp());
    assert!(ks_pvalue(d, ts.len()) > 0.01, "D = {d}");
}

#[test]
fn power_hazard_inverse_by_bisection() {
    let m = TrueModel::new(
        vec![0.5],
        CumulativeHazard::Power {
            scale: 2.0,
            shape: 1.5,
        },
        1.0,
    )
    .unwrap();
    let ts = event_times(&m, 0.2, 5000, 4);
    let d = ks_statistic(&ts, |t| 1.0 - (-2.0 * t.powf(1.5) * 0.1f64.exp()).exp());
    assert!(ks_pvalue(d, ts.len()) > 0.01, "D = {d}");
}

#[test]
fn examination_at_log_two() {
    let m = model(1.0, 1.0);
    let ts = event_times(&m, 0.0, 10_000, 5);
    let p = ts.iter().filter(|t| **t <= 2f64.ln()).count() as f64 / ts.len() as f64;
    assert!((p - (1.0 - (-1.0f64).exp())).abs() < 0.015, "{p}");
}

#[test]
fn calibrated_event_fraction() {
    let base = model(1.0, 1.0);
    let tn = calibrate_censoring(&base, 0.9, Scheme::RightCensored).unwrap();
    let m = model(1.0, tn);
    let small = generate_right_censored(&m, 10_000, 11).unwrap();
    assert!((small.event_fraction() - 0.9).abs() < 0.02);
    let large = generate_right_censored(&m, 100_000, 12).unwrap();
    assert!(
        (0.895..=0.905).contains(&large.event_fraction()),
        "{}",
        large.event_fraction()
    );

    let half = calibrate_censoring(&base, 0.5, Scheme::RightCensored).unwrap();
    assert!(half < tn);
    let cs = calibrate_censoring(&base, 0.9, Scheme::CurrentStatus).unwrap();
    assert_eq!(cs, tn);
}

#[test]
fn unattainable_targets() {
    let base = model(1.0, 1.0);
    assert!(matches!(
        calibrate_censoring(&base, 1.0, Scheme::RightCensored),
        Err(Error::UnattainableTarget { .. })
    ));
    assert!(calibrate_censoring(&base, 0.0, Scheme::RightCensored).is_err());
}

#[test]
fn generators_are_deterministic() {
    let m = model(1.0, 2.0);
    assert_eq!(
        generate_right_censored(&m, 500, 9).unwrap(),
        generate_right_censored(&m, 500, 9).unwrap()
    );
    assert_eq!(
        generate_current_status(&m, 500, 9).unwrap(),
        generate_current_status(&m, 500, 9).unwrap()
    );
    assert_ne!(
        generate_right_censored(&m, 500, 9).unwrap(),
        generate_right_censored(&m, 500, 10).unwrap()
    );
    assert!(generate_current_status(&m, 0, 9).is_err());
}

#[test]
fn observed_values_are_in_range() {
    let m = model(1.0, 2.0);
    let rc = generate_right_censored(&m, 2000, 1).unwrap();
    let cs = generate_current_status(&m, 2000, 1).unwrap();
    for o in rc.observations().iter().chain(cs.observations()) {
        assert!(o.y >= 0.0 && o.y <= 2.0);
        assert!(o.z.iter().all(|v| (0.0..1.0).contains(v)));
    }
    // Both schemes see the same subjects, so their event indicators agree.
    let same = rc
        .observations()
        .iter()
        .zip(cs.observations())
        .all(|(a, b)| a.delta == b.delta);
    assert!(same);
}
