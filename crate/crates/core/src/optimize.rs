//! Derivative-free maximizers used for the reference full MLE.

use alloc::vec;
use alloc::vec::Vec;

use crate::Result;

const GOLDEN: f64 = 0.381_966_011_250_105_1;

/// Brent's golden-section / parabolic search for the maximum of `f` on
/// `[lo, hi]`. Returns `(argmax, max)`.
pub fn brent_maximize<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (mut a, mut b) = (lo.min(hi), lo.max(hi));
    let mut x = a + GOLDEN * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = -f(x)?;
    let (mut fw, mut fv) = (fx, fx);
    let (mut d, mut e) = (0.0f64, 0.0f64);
    for _ in 0..500 {
        let xm = 0.5 * (a + b);
        let tol1 = 1e-10 * x.abs() + tol / 3.0;
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            e = d;
            if !(p.abs() >= (0.5 * q * etemp).abs() || p <= q * (a - x) || p >= q * (b - x)) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = tol1.copysign(xm - x);
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= xm { a - x } else { b - x };
            d = GOLDEN * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else {
            x + tol1.copysign(d)
        };
        let fu = -f(u)?;
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    Ok((x, -fx))
}

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, lo), hi) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(*lo, *hi);
    }
}

fn diameter(simplex: &[(Vec<f64>, f64)]) -> f64 {
    let best = &simplex[0].0;
    simplex[1..]
        .iter()
        .map(|(p, _)| {
            p.iter()
                .zip(best)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

fn nelder_mead_once<F>(
    f: &mut F,
    start: &[f64],
    step: &[f64],
    lower: &[f64],
    upper: &[f64],
    tol: f64,
) -> Result<(Vec<f64>, f64)>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let d = start.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
    simplex.push((start.to_vec(), f(start)?));
    for i in 0..d {
        let mut p = start.to_vec();
        p[i] += step[i];
        if p[i] > upper[i] {
            p[i] = start[i] - step[i];
        }
        project(&mut p, lower, upper);
        let v = f(&p)?;
        simplex.push((p, v));
    }
    let sort = |s: &mut Vec<(Vec<f64>, f64)>| s.sort_by(|a, b| b.1.total_cmp(&a.1));
    sort(&mut simplex);
    for _ in 0..20_000 {
        if diameter(&simplex) < tol {
            break;
        }
        let mut centroid = vec![0.0; d];
        for (p, _) in &simplex[..d] {
            for (c, v) in centroid.iter_mut().zip(p) {
                *c += v / d as f64;
            }
        }
        let worst = simplex[d].clone();
        let along = |coef: f64| {
            let mut p: Vec<f64> = centroid
                .iter()
                .zip(&worst.0)
                .map(|(c, w)| c + coef * (c - w))
                .collect();
            project(&mut p, lower, upper);
            p
        };
        let refl = along(1.0);
        let f_refl = f(&refl)?;
        if f_refl > simplex[0].1 {
            let exp = along(2.0);
            let f_exp = f(&exp)?;
            simplex[d] = if f_exp > f_refl {
                (exp, f_exp)
            } else {
                (refl, f_refl)
            };
        } else if f_refl > simplex[d - 1].1 {
            simplex[d] = (refl, f_refl);
        } else {
            let (con, f_con) = if f_refl > worst.1 {
                let p = along(0.5);
                let v = f(&p)?;
                (p, v)
            } else {
                let p = along(-0.5);
                let v = f(&p)?;
                (p, v)
            };
            if f_con > worst.1.max(f_refl) {
                simplex[d] = (con, f_con);
            } else {
                let best = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    let p: Vec<f64> = entry
                        .0
                        .iter()
                        .zip(&best)
                        .map(|(x, b)| b + 0.5 * (x - b))
                        .collect();
                    let v = f(&p)?;
                    *entry = (p, v);
                }
            }
        }
        sort(&mut simplex);
    }
    Ok(simplex.swap_remove(0))
}

/// Nelder–Mead maximization inside a box, restarted from the best vertex
/// until a restart no longer improves.
pub fn nelder_mead_maximize<F>(
    mut f: F,
    start: &[f64],
    lower: &[f64],
    upper: &[f64],
    tol: f64,
) -> Result<(Vec<f64>, f64)>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut step: Vec<f64> = lower
        .iter()
        .zip(upper)
        .map(|(lo, hi)| 0.25 * (hi - lo))
        .collect();
    let mut best = nelder_mead_once(&mut f, start, &step, lower, upper, tol)?;
    for _ in 0..8 {
        step.iter_mut().for_each(|s| *s *= 0.1);
        let next = nelder_mead_once(&mut f, &best.0, &step, lower, upper, tol)?;
        let gain = next.1 - best.1;
        if next.1 >= best.1 {
            best = next;
        }
        if gain <= 1e-12 * (1.0 + best.1.abs()) {
            break;
        }
    }
    Ok(best)
}
