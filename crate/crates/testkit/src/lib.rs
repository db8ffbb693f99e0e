//! Slow, direct reference computations for checking the estimators.
//!
//! Nothing here shares code with the library crates: each routine is the most
//! literal transcription of its defining formula.

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Breslow log partial likelihood by direct summation over risk sets.
pub fn cox_partial_loglik(y: &[f64], delta: &[bool], z: &[Vec<f64>], theta: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..y.len() {
        if !delta[i] {
            continue;
        }
        let risk: f64 = (0..y.len())
            .filter(|&j| y[j] >= y[i])
            .map(|j| dot(theta, &z[j]).exp())
            .sum();
        total += dot(theta, &z[i]) - risk.ln();
    }
    total
}

fn risk_moments(
    y: &[f64],
    z: &[Vec<f64>],
    theta: &[f64],
    at: f64,
) -> (f64, Vec<f64>, Vec<Vec<f64>>) {
    let d = theta.len();
    let mut s0 = 0.0;
    let mut s1 = vec![0.0; d];
    let mut s2 = vec![vec![0.0; d]; d];
    for j in 0..y.len() {
        if y[j] < at {
            continue;
        }
        let w = dot(theta, &z[j]).exp();
        s0 += w;
        for a in 0..d {
            s1[a] += w * z[j][a];
            for b in 0..d {
                s2[a][b] += w * z[j][a] * z[j][b];
            }
        }
    }
    (s0, s1, s2)
}

/// Score of [`cox_partial_loglik`], not divided by `n`.
pub fn cox_score(y: &[f64], delta: &[bool], z: &[Vec<f64>], theta: &[f64]) -> Vec<f64> {
    let mut u = vec![0.0; theta.len()];
    for i in (0..y.len()).filter(|&i| delta[i]) {
        let (s0, s1, _) = risk_moments(y, z, theta, y[i]);
        for a in 0..theta.len() {
            u[a] += z[i][a] - s1[a] / s0;
        }
    }
    u
}

/// Observed information of [`cox_partial_loglik`], not divided by `n`.
pub fn cox_information(y: &[f64], delta: &[bool], z: &[Vec<f64>], theta: &[f64]) -> Vec<Vec<f64>> {
    let d = theta.len();
    let mut info = vec![vec![0.0; d]; d];
    for i in (0..y.len()).filter(|&i| delta[i]) {
        let (s0, s1, s2) = risk_moments(y, z, theta, y[i]);
        for a in 0..d {
            for b in 0..d {
                info[a][b] += s2[a][b] / s0 - s1[a] * s1[b] / (s0 * s0);
            }
        }
    }
    info
}

/// Exhaustive search over `lo, lo + pitch, …, hi`; the first maximum wins.
pub fn grid_argmax(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, pitch: f64) -> (f64, f64) {
    let steps = ((hi - lo) / pitch).round() as usize;
    let mut best = (lo, f64::NEG_INFINITY);
    for i in 0..=steps {
        let x = if i == steps {
            hi
        } else {
            lo + pitch * i as f64
        };
        let v = f(x);
        if v > best.1 {
            best = (x, v);
        }
    }
    best
}

fn golden_refine(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Current-status log-likelihood contribution of one subject at hazard `lam`.
pub fn cs_term(delta: bool, c: f64, lam: f64) -> f64 {
    if delta {
        (-(-lam * c).exp_m1()).ln()
    } else {
        -lam * c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsOracle {
    pub knots: Vec<f64>,
    pub hazard: Vec<f64>,
    pub log_likelihood: f64,
}

/// Maximum of the current-status log-likelihood over nondecreasing
/// cumulative hazards with values in `[lambda_min, lambda_max]`.
///
/// Enumerates every split of the distinct examination times into contiguous
/// blocks, maximizes each block's common value by a log-spaced grid of pitch
/// `1e-3` refined by golden section, and keeps the best monotone split.
/// Cost is exponential in the number of distinct times.
pub fn cs_profile_oracle(
    y: &[f64],
    delta: &[bool],
    z: &[Vec<f64>],
    theta: &[f64],
    lambda_min: f64,
    lambda_max: f64,
) -> CsOracle {
    let mut knots: Vec<f64> = y.to_vec();
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let m = knots.len();
    assert!(m <= 20, "oracle is exponential in the number of knots");
    let c: Vec<f64> = z.iter().map(|zi| dot(theta, zi).exp()).collect();
    let (ulo, uhi) = (lambda_min.ln(), lambda_max.ln());

    let mut memo = std::collections::HashMap::new();
    let mut block_max = |from: usize, to: usize| -> (f64, f64) {
        *memo.entry((from, to)).or_insert_with(|| {
            let members: Vec<usize> = (0..y.len())
                .filter(|&i| y[i] >= knots[from] && y[i] <= knots[to - 1])
                .collect();
            let f = |u: f64| {
                let lam = u.exp();
                members
                    .iter()
                    .map(|&i| cs_term(delta[i], c[i], lam))
                    .sum::<f64>()
            };
            let (u0, f0) = grid_argmax(f, ulo, uhi, 1e-3);
            let (u1, f1) = golden_refine(&f, (u0 - 1e-3).max(ulo), (u0 + 1e-3).min(uhi));
            if f1 > f0 {
                (u1.exp(), f1)
            } else {
                (u0.exp(), f0)
            }
        })
    };

    let mut best = CsOracle {
        knots: knots.clone(),
        hazard: Vec::new(),
        log_likelihood: f64::NEG_INFINITY,
    };
    for mask in 0u32..(1 << (m - 1)) {
        let mut cuts = vec![0];
        cuts.extend((1..m).filter(|&k| mask & (1 << (k - 1)) != 0));
        cuts.push(m);
        let mut values = Vec::with_capacity(m);
        let mut total = 0.0;
        let mut feasible = true;
        let mut prev = f64::NEG_INFINITY;
        for w in cuts.windows(2) {
            let (lam, v) = block_max(w[0], w[1]);
            if lam < prev {
                feasible = false;
                break;
            }
            prev = lam;
            total += v;
            values.extend(std::iter::repeat_n(lam, w[1] - w[0]));
        }
        if feasible && total > best.log_likelihood {
            best.log_likelihood = total;
            best.hazard = values;
        }
    }
    best
}

/// One-sample Kolmogorov–Smirnov statistic `sup |F_n − F|`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a − F_b|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Large-sample critical value of the two-sample statistic, `c(α) sqrt((n+m)/(nm))`.
pub fn ks_two_sample_critical(alpha: f64, n: usize, m: usize) -> f64 {
    let c = (-0.5 * (alpha / 2.0).ln()).sqrt();
    let (n, m) = (n as f64, m as f64);
    c * ((n + m) / (n * m)).sqrt()
}

/// Asymptotic p-value of the Kolmogorov distribution at statistic `d`.
pub fn ks_pvalue(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lam = (sn + 0.12 + 0.11 / sn) * d;
    let mut sum = 0.0;
    for j in 1..=100 {
        let jf = j as f64;
        let term = 2.0 * (-1f64).powi(j - 1) * (-2.0 * jf * jf * lam * lam).exp();
        sum += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

/// Monte Carlo standard error of the mean of a correlated series by
/// non-overlapping batch means.
pub fn batch_means_se(series: &[f64], batches: usize) -> f64 {
    let len = series.len() / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| series[b * len..(b + 1) * len].iter().sum::<f64>() / len as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (var / batches as f64).sqrt()
}

/// Least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
