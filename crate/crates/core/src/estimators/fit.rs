//! Weighted least-squares fit of `1 - (1 - p) exp(-k |tau|)` to a
//! normalized coincidence histogram.

use alloc::format;
use alloc::vec::Vec;

use super::coincidence::{CoincidenceHistogram, NormalizedBin};
use crate::error::{Error, Result};
#[allow(unused_imports)]
use crate::math::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    pub k_hat: f64,
    pub p_hat: f64,
    /// Covariance of `(k, p)`.
    pub covariance: [[f64; 2]; 2],
    /// Square root of the weighted residual sum of squares.
    pub residual_norm: f64,
    pub iterations: usize,
    pub bins_used: usize,
}

impl FitResult {
    pub fn k_stderr(&self) -> f64 {
        self.covariance[0][0].sqrt()
    }

    pub fn p_stderr(&self) -> f64 {
        self.covariance[1][1].sqrt()
    }
}

const MAX_ITERATIONS: usize = 200;

fn model(k: f64, p: f64, tau: f64) -> f64 {
    1.0 - (1.0 - p) * libm::exp(-k * tau.abs())
}

struct Point {
    tau: f64,
    y: f64,
    w: f64,
}

fn chi2(points: &[Point], k: f64, p: f64) -> f64 {
    points
        .iter()
        .map(|q| {
            let r = q.y - model(k, p, q.tau);
            q.w * r * r
        })
        .sum()
}

/// Normal equations `(J^T W J, J^T W r)` at `(k, p)`.
fn normal_equations(points: &[Point], k: f64, p: f64) -> ([[f64; 2]; 2], [f64; 2]) {
    let mut a = [[0.0; 2]; 2];
    let mut g = [0.0; 2];
    for q in points {
        let e = libm::exp(-k * q.tau.abs());
        let jk = (1.0 - p) * q.tau.abs() * e;
        let jp = e;
        let r = q.y - (1.0 - (1.0 - p) * e);
        a[0][0] += q.w * jk * jk;
        a[0][1] += q.w * jk * jp;
        a[1][1] += q.w * jp * jp;
        g[0] += q.w * jk * r;
        g[1] += q.w * jp * r;
    }
    a[1][0] = a[0][1];
    (a, g)
}

fn invert(a: [[f64; 2]; 2]) -> Option<[[f64; 2]; 2]> {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    if !(det.abs() > 0.0) || !det.is_finite() {
        return None;
    }
    Some([
        [a[1][1] / det, -a[0][1] / det],
        [-a[1][0] / det, a[0][0] / det],
    ])
}

/// Starting point: `p` from the bins next to zero delay, `k` from the
/// 1/e crossing refined by a log-linear fit over `|tau| <= 5 / k`.
fn initial_guess(points: &[Point]) -> Result<(f64, f64)> {
    let min_abs = points
        .iter()
        .map(|q| q.tau.abs())
        .fold(f64::INFINITY, f64::min);
    let near: Vec<&Point> = points
        .iter()
        .filter(|q| q.tau.abs() <= min_abs * (1.0 + 1e-9))
        .collect();
    let y0 = near.iter().map(|q| q.y).sum::<f64>() / near.len() as f64;
    let p0 = y0.clamp(0.0, 0.95);
    let depth = 1.0 - p0;
    let mut by_delay: Vec<&Point> = points.iter().collect();
    by_delay.sort_by(|a, b| a.tau.abs().total_cmp(&b.tau.abs()));
    let crossing = by_delay
        .iter()
        .find(|q| 1.0 - q.y < depth / core::f64::consts::E)
        .map(|q| q.tau.abs())
        .ok_or_else(|| Error::Fit("the histogram never recovers toward 1".into()))?;
    let mut k0 = 1.0 / crossing.max(min_abs).max(f64::MIN_POSITIVE);
    // log-linear refinement: ln(1 - y) = ln(1 - p) - k |tau|
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for q in points {
        let d = 1.0 - q.y;
        if q.tau.abs() > 5.0 / k0 || d <= 0.05 * depth {
            continue;
        }
        let x = q.tau.abs();
        let z = libm::log(d);
        let w = q.w * d * d;
        sw += w;
        sx += w * x;
        sy += w * z;
        sxx += w * x * x;
        sxy += w * x * z;
    }
    let det = sw * sxx - sx * sx;
    if det > 0.0 {
        let slope = (sw * sxy - sx * sy) / det;
        if slope < 0.0 && slope.is_finite() {
            k0 = -slope;
        }
    }
    Ok((k0, p0))
}

/// Fits the decay law to the normalized bins of `hist`.
pub fn fit_decay_model(hist: &CoincidenceHistogram) -> Result<FitResult> {
    fit_normalized(&hist.normalized())
}

/// Fits the decay law to already normalized bins.
pub fn fit_normalized(bins: &[NormalizedBin]) -> Result<FitResult> {
    let points: Vec<Point> = bins
        .iter()
        .filter(|b| b.stderr > 0.0 && b.value.is_finite())
        .map(|b| Point {
            tau: b.tau,
            y: b.value,
            w: 1.0 / (b.stderr * b.stderr),
        })
        .collect();
    let nonempty = bins.iter().filter(|b| b.count > 0).count();
    if nonempty < 5 {
        return Err(Error::Fit(format!(
            "{nonempty} nonempty bins, at least 5 are needed"
        )));
    }
    let (mut k, mut p) = initial_guess(&points)?;
    let span = points.iter().map(|q| q.tau.abs()).fold(0.0, f64::max);
    if span * k < 3.0 {
        return Err(Error::Fit(format!(
            "bins reach |tau| = {span} ns, less than 3 decay times (k ~ {k:.4} /ns)"
        )));
    }

    let mut lambda = 1e-3;
    let mut current = chi2(&points, k, p);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let (a, g) = normal_equations(&points, k, p);
        let mut improved = false;
        for _ in 0..60 {
            let damped = [
                [a[0][0] * (1.0 + lambda), a[0][1]],
                [a[1][0], a[1][1] * (1.0 + lambda)],
            ];
            let Some(inv) = invert(damped) else { break };
            let dk = inv[0][0] * g[0] + inv[0][1] * g[1];
            let dp = inv[1][0] * g[0] + inv[1][1] * g[1];
            let nk = (k + dk).max(k * 0.1);
            let np = (p + dp).clamp(0.0, 1.0);
            let trial = chi2(&points, nk, np);
            if trial <= current {
                let step = ((nk - k) / k).abs().max((np - p).abs());
                let drop = current - trial;
                k = nk;
                p = np;
                current = trial;
                lambda = (lambda * 0.3).max(1e-12);
                improved = true;
                if step < 1e-12 || drop <= 1e-15 * current.max(1e-300) {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // no downhill step at any damping: at the minimum
            converged = true;
        }
        if converged {
            break;
        }
    }
    if !converged {
        return Err(Error::Fit(format!(
            "no convergence after {MAX_ITERATIONS} iterations (k = {k}, p = {p}, chi2 = {current})"
        )));
    }
    let (a, _) = normal_equations(&points, k, p);
    let covariance = invert(a).ok_or_else(|| Error::Fit("singular normal matrix".into()))?;
    let (sk, sp) = (covariance[0][0].sqrt(), covariance[1][1].sqrt());
    if !(sk.is_finite() && sp.is_finite()) || sk > 0.5 * k || 1.0 - p < 3.0 * sp {
        return Err(Error::Fit(format!(
            "no decay is resolved: k = {k} +/- {sk}, p = {p} +/- {sp}"
        )));
    }
    Ok(FitResult {
        k_hat: k,
        p_hat: p,
        covariance,
        residual_norm: current.sqrt(),
        iterations,
        bins_used: points.len(),
    })
}
