//! Higher-order correlations from per-frame event counts.

use alloc::format;

use crate::error::{Error, Result};
#[allow(unused_imports)]
use crate::math::Real;

/// `g^(n)` estimate from factorial moments of the per-frame count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GnEstimate {
    pub order: usize,
    pub value: f64,
    pub stderr: f64,
    pub frames: u64,
    pub mean_count: f64,
    /// Frames holding at least `order` events.
    pub nfold_frames: u64,
}

fn falling(c: usize, n: usize) -> f64 {
    (0..n).map(|i| c as f64 - i as f64).product()
}

/// `<c (c-1) ... (c-n+1)> / <c>^n` from `hist[c]` = frames with count `c`.
///
/// The error follows from the delta method on the two sample means. When
/// no frame holds `n` events the error of a single such frame is reported.
pub fn gn_from_histogram(hist: &[u64], n: usize) -> Result<GnEstimate> {
    if n == 0 {
        return Err(Error::param("correlation order must be at least 1"));
    }
    let frames: u64 = hist.iter().sum();
    let total: u64 = hist.iter().enumerate().map(|(c, &h)| c as u64 * h).sum();
    if total == 0 {
        return Err(Error::InsufficientCounts(format!(
            "no events in {frames} frames"
        )));
    }
    let f = frames as f64;
    let (mut ex, mut exx, mut exy, mut eyy) = (0.0, 0.0, 0.0, 0.0);
    let mut nfold = 0;
    for (c, &h) in hist.iter().enumerate() {
        if h == 0 {
            continue;
        }
        let w = h as f64 / f;
        let x = falling(c, n);
        let y = c as f64;
        ex += w * x;
        exx += w * x * x;
        exy += w * x * y;
        eyy += w * y * y;
        if c >= n {
            nfold += h;
        }
    }
    let mu = total as f64 / f;
    let value = ex / libm::pow(mu, n as f64);
    let nf = n as f64;
    let var_x = exx - ex * ex;
    let var_y = eyy - mu * mu;
    let cov = exy - ex * mu;
    let var = |ex: f64, var_x: f64, cov: f64| {
        (var_x / libm::pow(mu, 2.0 * nf)
            + nf * nf * ex * ex * var_y / libm::pow(mu, 2.0 * nf + 2.0)
            - 2.0 * nf * ex * cov / libm::pow(mu, 2.0 * nf + 1.0))
            / f
    };
    let stderr = if nfold == 0 {
        // one frame with exactly n events
        falling(n, n) / f / libm::pow(mu, nf)
    } else {
        var(ex, var_x, cov).max(0.0).sqrt()
    };
    Ok(GnEstimate {
        order: n,
        value,
        stderr,
        frames,
        mean_count: mu,
        nfold_frames: nfold,
    })
}
