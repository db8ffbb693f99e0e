//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use kstep::config::{ExperimentConfig, Preset};
use kstep::harness::{self, ExperimentOutcome};
use kstep::report;
use kstep_core::cox::{analytic_info_rc, analytic_score_rc, RightCensoredProfile};
use kstep_core::data::{generate_right_censored, Dataset, Observation, Scheme};
use kstep_core::icm::{log_profile_cs, IcmConfig};
use kstep_core::init::{profile_sampler, SamplerConfig};
use kstep_core::kstep::{count_iterations, full_mle, kstep};
use kstep_core::numdiff::{gamma_n, pi_n, StepSchedule, StepSizes};
use kstep_core::{ParamBox, ProfileEvaluator};
use kstep_testkit::{batch_means_se, cox_information, cox_score, cs_profile_oracle};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BASE_SEED: u64 = 1;

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn workers() -> usize {
    harness::default_workers()
}

/// `log pl(θ) = −n (θ − θ*)² / 2`, written out independently of the library.
struct Parabola {
    n: usize,
    center: f64,
}

impl ProfileEvaluator for Parabola {
    fn dim(&self) -> usize {
        1
    }
    fn sample_size(&self) -> usize {
        self.n
    }
    fn log_profile(&self, theta: &[f64]) -> kstep_core::Result<f64> {
        let u = theta[0] - self.center;
        Ok(-0.5 * self.n as f64 * u * u)
    }
}

fn iteration_counts() -> Check {
    let cases = [
        (0.5, 0.5, 1),
        (0.5, 0.75, 1),
        (0.5, 1.0, 1),
        (0.25, 1.0 / 3.0, 3),
        (0.25, 0.4, 4),
    ];
    let mut detail = Vec::new();
    let mut ok = true;
    for (psi, r, want) in cases {
        let got = count_iterations(psi, r).map_err(|e| e.to_string())?;
        ok &= got == want;
        detail.push(format!("({psi}, {r:.3}) -> {got}"));
    }
    ensure(ok, detail.join(", "))
}

fn quadratic_exactness() -> Check {
    let pl = Parabola {
        n: 100,
        center: 0.3,
    };
    let bounds = ParamBox::symmetric(1, 5.0).unwrap();
    let mut worst_step: f64 = 0.0;
    for (start, s) in [(1.2, 1e-3), (-2.0, 0.05), (0.31, 1e-6)] {
        let sched = StepSchedule::fixed(vec![StepSizes { s, t: 0.1 }]).unwrap();
        let tr = kstep(&pl, &[start], &sched, 1, &bounds).map_err(|e| e.to_string())?;
        worst_step = worst_step.max((tr.last()[0] - (0.3 - s / 2.0)).abs());
    }
    // Π is exact up to the rounding of four log pl values of size |log pl|,
    // amplified by 1/(n t²).
    let mut worst_pi: f64 = 0.0;
    let mut pi_ok = true;
    for theta in [0.3, -1.0, 2.5] {
        for t in [1.0, 0.3, 1e-2, 1e-3] {
            let p = pi_n(&pl, &[theta], t).map_err(|e| e.to_string())?;
            let size = pl.log_profile(&[theta + 2.0 * t]).unwrap().abs().max(1.0);
            let rounding = 16.0 * f64::EPSILON * size / (pl.n as f64 * t * t);
            let err = (p[(0, 0)] - 1.0).abs();
            pi_ok &= err <= rounding.max(1e-12);
            worst_pi = worst_pi.max(err);
        }
    }
    ensure(
        worst_step <= 1e-10 && pi_ok,
        format!("max |θ¹ − (θ* − s/2)| = {worst_step:.2e}, max |Π − 1| = {worst_pi:.2e} (within rounding)"),
    )
}

struct Sample {
    y: Vec<f64>,
    delta: Vec<bool>,
    z: Vec<Vec<f64>>,
}

impl Sample {
    fn dataset(&self, scheme: Scheme) -> Dataset {
        let obs = (0..self.y.len())
            .map(|i| Observation {
                y: self.y[i],
                delta: self.delta[i],
                z: self.z[i].clone(),
            })
            .collect();
        Dataset::new(scheme, obs).unwrap()
    }
}

fn derivative_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(BASE_SEED);
    let (mut worst_g, mut worst_p, mut worst_closed): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for trial in 0..50 {
        let n = 5 + trial % 46;
        let y: Vec<f64> = (0..n)
            .map(|_| (rng.random::<f64>() * 30.0).round() / 10.0)
            .collect();
        let mut delta: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.7).collect();
        delta[0] = true;
        let z: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random::<f64>()]).collect();
        let s = Sample { y, delta, z };
        let pl = RightCensoredProfile::new(&s.dataset(Scheme::RightCensored))
            .map_err(|e| e.to_string())?;
        let theta = [3.0 * rng.random::<f64>() - 1.5];
        let nf = n as f64;
        let score = analytic_score_rc(pl.index(), &theta).map_err(|e| e.to_string())?;
        let info = analytic_info_rc(pl.index(), &theta).map_err(|e| e.to_string())?;
        // The closed forms themselves against direct risk-set summation.
        worst_closed = worst_closed
            .max((score[0] - cox_score(&s.y, &s.delta, &s.z, &theta)[0]).abs())
            .max((info[(0, 0)] - cox_information(&s.y, &s.delta, &s.z, &theta)[0][0]).abs());
        let g = gamma_n(&pl, &theta, 1e-6).map_err(|e| e.to_string())?;
        let p = pi_n(&pl, &theta, 1e-4).map_err(|e| e.to_string())?;
        worst_g = worst_g.max((g[0] - score[0] / nf).abs());
        worst_p = worst_p.max((p[(0, 0)] - info[(0, 0)] / nf).abs());
    }
    ensure(
        worst_g <= 1e-4 && worst_p <= 1e-3 && worst_closed <= 1e-9,
        format!("max |Γ − U/n| = {worst_g:.2e}, max |Π − I/n| = {worst_p:.2e}, closed forms {worst_closed:.1e}"),
    )
}

fn icm_equivalence() -> Check {
    let cfg = IcmConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(BASE_SEED);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    let check = |s: &Sample, theta: f64| -> Result<f64, String> {
        let got = log_profile_cs(&s.dataset(Scheme::CurrentStatus), &[theta], &cfg)
            .map_err(|e| e.to_string())?;
        let want = cs_profile_oracle(
            &s.y,
            &s.delta,
            &s.z,
            &[theta],
            cfg.lambda_min,
            cfg.lambda_max,
        );
        Ok((got - want.log_likelihood).abs())
    };
    for n in 1..=4usize {
        for pattern in 0..(1u32 << n) {
            for _ in 0..3 {
                let s = Sample {
                    y: (0..n).map(|_| 0.1 + 2.9 * rng.random::<f64>()).collect(),
                    delta: (0..n).map(|i| pattern & (1 << i) != 0).collect(),
                    z: (0..n)
                        .map(|_| vec![2.0 * rng.random::<f64>() - 1.0])
                        .collect(),
                };
                for theta in [-1.0, 0.0, 1.0] {
                    worst = worst.max(check(&s, theta)?);
                    cases += 1;
                }
            }
        }
    }
    let pair = Sample {
        y: vec![1.0, 2.0],
        delta: vec![true, false],
        z: vec![vec![0.0], vec![0.0]],
    };
    let closed = log_profile_cs(&pair.dataset(Scheme::CurrentStatus), &[0.0], &cfg)
        .map_err(|e| e.to_string())?;
    let closed_err = (closed + 2.0 * 2f64.ln()).abs();
    ensure(
        cases >= 200 && worst <= 1e-6 && closed_err <= 1e-6,
        format!("{cases} cases, max |ICM − oracle| = {worst:.2e}, closed-form pair error {closed_err:.1e}"),
    )
}

fn group_mean(outcome: &ExperimentOutcome, n: usize, name: &str) -> f64 {
    outcome
        .groups
        .iter()
        .find(|g| g.n == n)
        .and_then(|g| g.mean(name))
        .unwrap_or(f64::NAN)
}

fn table1() -> Check {
    let cfg = ExperimentConfig {
        base_seed: BASE_SEED,
        ..Preset::Table1.config()
    };
    let out = harness::run_experiment(&cfg, workers()).map_err(|e| e.to_string())?;
    let reference = [(50, 1.0222), (100, 1.0344), (200, 0.9979), (500, 0.9974)];
    let mut ok = out.groups.iter().all(|g| g.successes >= 450);
    let mut detail = Vec::new();
    for (n, want) in reference {
        let t1 = group_mean(&out, n, "theta_1");
        let gap = group_mean(&out, n, "scaled_gap");
        ok &= (t1 - want).abs() <= 0.05 && gap < 1.0;
        detail.push(format!("n={n}: θ¹ {t1:.4} (ref {want}), gap {gap:.4}"));
    }
    detail.push(format!("{} failed replicates", out.failures()));
    ensure(ok, detail.join("; "))
}

fn table2() -> Check {
    let cfg = ExperimentConfig {
        n: vec![100, 200],
        replicates: 200,
        base_seed: BASE_SEED,
        ..Preset::Table2.config()
    };
    let out = harness::run_experiment(&cfg, workers()).map_err(|e| e.to_string())?;
    let mut ok = true;
    let mut detail = Vec::new();
    for g in &out.groups {
        let gaps: Vec<f64> = (1..=3)
            .map(|k| g.mean(&format!("abs_gap_{k}")).unwrap_or(f64::NAN))
            .collect();
        let scaled = g.mean("scaled_gap").unwrap_or(f64::NAN);
        ok &= gaps[0] >= gaps[1] && gaps[1] >= gaps[2] && scaled < 2.0 && g.successes >= 100;
        detail.push(format!(
            "n={}: |θᵏ − θ̂| = {:.4}, {:.4}, {:.4}; gap {scaled:.4}; {}/{} ok",
            g.n,
            gaps[0],
            gaps[1],
            gaps[2],
            g.successes,
            g.reports.len()
        ));
    }
    ensure(ok, detail.join("; "))
}

fn rate_scaling() -> Check {
    let cfg = ExperimentConfig {
        replicates: 300,
        base_seed: BASE_SEED,
        ..ExperimentConfig::new(Scheme::RightCensored)
    };
    let study =
        harness::rate_study(&cfg, &[100, 200, 400, 800], workers()).map_err(|e| e.to_string())?;
    let f = &study.fit;
    ensure(
        (-1.0..=-0.5).contains(&f.slope),
        format!(
            "slope {:.4} ± {:.4} over mean gaps {:?}",
            f.slope, f.slope_se, f.mean_gap
        ),
    )
}

fn coverage() -> Check {
    let cfg = ExperimentConfig {
        n: vec![200],
        replicates: 500,
        base_seed: BASE_SEED,
        ..ExperimentConfig::new(Scheme::RightCensored)
    };
    let study = harness::coverage_study(&cfg, 0.05, workers()).map_err(|e| e.to_string())?;
    let c = &study.coverage[0];
    ensure(
        (0.91..=0.98).contains(&c.fraction),
        format!(
            "{}/{} = {:.3}, Wilson [{:.3}, {:.3}]",
            c.covered, c.total, c.fraction, c.wilson.0, c.wilson.1
        ),
    )
}

fn sampler_calibration() -> Check {
    let pl = Parabola {
        n: 100,
        center: 0.3,
    };
    let bounds = ParamBox::symmetric(1, 5.0).unwrap();
    let mut ok = true;
    let mut detail = Vec::new();
    for seed in 0..5u64 {
        let cfg = SamplerConfig {
            retain_draws: true,
            seed: BASE_SEED + seed,
            ..SamplerConfig::default()
        };
        let out = profile_sampler(&pl, &cfg, &[0.0], &bounds).map_err(|e| e.to_string())?;
        let draws: Vec<f64> = out
            .draws
            .as_ref()
            .expect("retained")
            .iter()
            .map(|d| d[0])
            .collect();
        let se = batch_means_se(&draws, 20);
        let z = (out.post_mean[0] - 0.3) / se;
        ok &= (0.2..=0.4).contains(&out.accept_rate) && z.abs() <= 3.0;
        detail.push(format!("accept {:.3}, z {z:+.2}", out.accept_rate));
    }
    ensure(ok, detail.join("; "))
}

fn information_cross_check() -> Check {
    let cfg = ExperimentConfig {
        n: vec![2000],
        base_seed: BASE_SEED,
        ..ExperimentConfig::new(Scheme::RightCensored)
    };
    let model = harness::true_model(&cfg).map_err(|e| e.to_string())?;
    let data = generate_right_censored(&model, 2000, BASE_SEED).map_err(|e| e.to_string())?;
    let pl = RightCensoredProfile::new(&data).map_err(|e| e.to_string())?;
    let bounds = ParamBox::symmetric(1, 5.0).unwrap();
    let mle = full_mle(&pl, &bounds, 1e-8).map_err(|e| e.to_string())?;
    let pi = pi_n(&pl, &mle.theta, 1.0 / 2000f64.sqrt()).map_err(|e| e.to_string())?[(0, 0)];
    let sampler = profile_sampler(
        &pl,
        &SamplerConfig {
            seed: BASE_SEED,
            ..SamplerConfig::default()
        },
        &bounds.center(),
        &bounds,
    )
    .map_err(|e| e.to_string())?;
    let ps = sampler
        .info_estimate
        .ok_or("sampler variance is singular")?[(0, 0)];
    let rel = (ps - pi).abs() / pi;
    ensure(
        rel <= 0.2,
        format!("Î(PS) {ps:.5}, Π {pi:.5}, relative difference {rel:.3}"),
    )
}

fn outputs(cfg: &ExperimentConfig, workers: usize) -> Result<Vec<Vec<u8>>, String> {
    let out = harness::run_experiment(cfg, workers).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    report::write_outputs(&out, dir.path()).map_err(|e| e.to_string())?;
    let o = &cfg.output;
    [&o.table, &o.summary, &o.replicates]
        .iter()
        .map(|name| std::fs::read(dir.path().join(name)).map_err(|e| e.to_string()))
        .collect()
}

fn determinism() -> Check {
    let rc = ExperimentConfig {
        n: vec![50, 100],
        replicates: 12,
        base_seed: BASE_SEED,
        ..ExperimentConfig::new(Scheme::RightCensored)
    };
    let cs = ExperimentConfig {
        n: vec![50, 100],
        replicates: 12,
        base_seed: BASE_SEED,
        ..ExperimentConfig::new(Scheme::CurrentStatus)
    };
    let mut ok = true;
    for cfg in [&rc, &cs] {
        let one = outputs(cfg, 1)?;
        ok &= one == outputs(cfg, 1)? && one == outputs(cfg, 4)?;
    }
    ensure(
        ok,
        "RC and CS outputs identical across reruns and 1 vs 4 workers".to_string(),
    )
}

type Criterion = (u32, &'static str, Duration, fn() -> Check);

fn main() {
    let criteria: [Criterion; 11] = [
        (
            1,
            "iteration counts",
            Duration::from_secs(1),
            iteration_counts,
        ),
        (
            2,
            "quadratic surrogate exactness",
            Duration::from_secs(1),
            quadratic_exactness,
        ),
        (
            3,
            "Cox derivative oracle",
            Duration::from_secs(10),
            derivative_oracle,
        ),
        (
            4,
            "ICM brute-force equivalence",
            Duration::from_secs(120),
            icm_equivalence,
        ),
        (
            5,
            "right-censored table reproduction",
            Duration::from_secs(30 * 60),
            table1,
        ),
        (
            6,
            "current-status table reproduction",
            Duration::from_secs(45 * 60),
            table2,
        ),
        (
            7,
            "rate scaling",
            Duration::from_secs(20 * 60),
            rate_scaling,
        ),
        (
            8,
            "interval coverage",
            Duration::from_secs(15 * 60),
            coverage,
        ),
        (
            9,
            "sampler calibration",
            Duration::from_secs(60),
            sampler_calibration,
        ),
        (
            10,
            "information cross-check",
            Duration::from_secs(5 * 60),
            information_cross_check,
        ),
        (11, "determinism", Duration::from_secs(10 * 60), determinism),
    ];
    let only: Option<u32> = std::env::var("KSTEP_CRITERION")
        .ok()
        .and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (id, name, limit, check) in criteria {
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".to_string()))
        });
        let elapsed = start.elapsed();
        let (pass, mut detail) = match result {
            Ok(d) => (elapsed <= limit, d),
            Err(d) => (false, d),
        };
        if elapsed > limit {
            detail.push_str(&format!("; over the {}s limit", limit.as_secs()));
        }
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {id:>2} {}: {name}: {detail} [{:.1}s]",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
