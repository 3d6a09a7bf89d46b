//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use ndarray::Array2;

/// Projects `v` onto `{0 ≤ a ≤ c, yᵀa = 0}` by bisection on the multiplier.
pub fn project_box_hyperplane(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let at = |lam: f64| -> Vec<f64> {
        v.iter()
            .zip(y)
            .map(|(&vi, &yi)| (vi - lam * yi).clamp(0.0, c))
            .collect()
    };
    let g = |a: &[f64]| a.iter().zip(y).map(|(ai, yi)| ai * yi).sum::<f64>();
    let span = v.iter().map(|x| x.abs()).fold(0.0, f64::max) + c + 1.0;
    let (mut lo, mut hi) = (-span, span);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if g(&at(mid)) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Dense SVM dual QP by accelerated projected gradient with restarts.
/// Returns the minimizer of ½ aᵀQa − 1ᵀa over the feasible set.
pub fn qp_oracle(k: &Array2<f64>, y: &[f64], c: f64, iters: usize) -> Vec<f64> {
    let n = y.len();
    let q = Array2::from_shape_fn((n, n), |(i, j)| y[i] * y[j] * k[[i, j]]);
    let lip = (0..n)
        .map(|i| q.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
        .max(1e-12);
    let obj = |a: &[f64]| {
        let qa = q.dot(&ndarray::ArrayView1::from(a));
        0.5 * a.iter().zip(qa.iter()).map(|(x, y)| x * y).sum::<f64>() - a.iter().sum::<f64>()
    };
    let mut a = project_box_hyperplane(&vec![0.0; n], y, c);
    let mut z = a.clone();
    let mut t = 1.0f64;
    let mut f_prev = obj(&a);
    let mut stall = 0;
    for _ in 0..iters {
        if stall > 2000 {
            break;
        }
        let grad = q.dot(&ndarray::ArrayView1::from(&z[..])) - 1.0;
        let step: Vec<f64> = z.iter().zip(grad.iter()).map(|(zi, gi)| zi - gi / lip).collect();
        let next = project_box_hyperplane(&step, y, c);
        let f_next = obj(&next);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        if f_next > f_prev {
            // restart momentum
            z = a.clone();
            t = 1.0;
            continue;
        }
        z = next
            .iter()
            .zip(&a)
            .map(|(n, o)| n + (t - 1.0) / t_next * (n - o))
            .collect();
        stall = if f_prev - f_next < 1e-15 { stall + 1 } else { 0 };
        a = next;
        t = t_next;
        f_prev = f_next;
    }
    a
}

/// Relative error used by the gradient checks.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

pub fn line(name: &str, passed: bool, detail: &str) -> String {
    format!("[{}] {name}: {detail}", if passed { "PASS" } else { "FAIL" })
}
