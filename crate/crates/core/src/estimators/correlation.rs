//! Zero-delay pair correlation between the two image fields.

use alloc::format;
use alloc::vec;

use super::accum::{FrameAccumulator, RegionCounts};
use super::region::{ObjectRegion, RegionSet};
use crate::error::{Error, Result};
#[allow(unused_imports)]
use crate::math::Real;
use crate::sim::{FrameStack, StackMode};

/// Correlation estimate of one object.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationEstimate {
    pub g2_raw: f64,
    pub g2_baseline: f64,
    pub g2_normalized: f64,
    /// Equals `g2_normalized` until [`background_correct`] is applied.
    pub g2_corrected: f64,
    /// Standard error of `g2_normalized`.
    pub stderr: f64,
    /// Standard error of `g2_corrected`.
    pub stderr_corrected: f64,
    pub n_coincidences: u64,
    pub n_lagged: u64,
    pub n_a: u64,
    pub n_b: u64,
    pub n_frames: u64,
    pub signal_fraction_a: f64,
    pub signal_fraction_b: f64,
}

/// Standard error of the raw pair correlation `n_coinc F / (n_a n_b)`
/// measured over `n_frames` frames. With no coincidences the error of a
/// single coincidence is reported, as a one-sided bound.
pub fn estimate_stderr(n_coinc: u64, n_a: u64, n_b: u64, n_frames: u64) -> f64 {
    if n_a == 0 || n_b == 0 {
        return f64::INFINITY;
    }
    let g2 = n_coinc.max(1) as f64 * n_frames as f64 / (n_a as f64 * n_b as f64);
    g2 * relative_variance(n_coinc, n_a, n_b).sqrt()
}

fn relative_variance(n_coinc: u64, n_a: u64, n_b: u64) -> f64 {
    let inv = |n: u64| if n == 0 { 0.0 } else { 1.0 / n as f64 };
    1.0 / n_coinc.max(1) as f64 + inv(n_a) + inv(n_b)
}

fn signal_fraction(hits: u64, noise: u64) -> f64 {
    if hits == 0 {
        return 0.0;
    }
    ((hits as f64 - noise as f64) / hits as f64).clamp(0.0, 1.0)
}

/// Estimate from accumulated counts. `noise_available` tells whether the
/// region had a noise area; without one the signal fractions are 1.
pub fn correlation_from_counts(
    c: &RegionCounts,
    frames: u64,
    lag: usize,
    noise_available: bool,
) -> Result<CorrelationEstimate> {
    if c.hits_a == 0 || c.hits_b == 0 {
        return Err(Error::InsufficientCounts(format!(
            "{} frames with field-A events and {} with field-B events",
            c.hits_a, c.hits_b
        )));
    }
    if frames <= lag as u64 {
        return Err(Error::InsufficientCounts(format!(
            "{frames} frames do not cover the baseline lag {lag}"
        )));
    }
    if c.lag_ab == 0 {
        return Err(Error::InsufficientCounts(
            "no coincidences at the baseline lag".into(),
        ));
    }
    let f = frames as f64;
    let pairs = (frames - lag as u64) as f64;
    let singles = (c.hits_a as f64 / f) * (c.hits_b as f64 / f);
    // g2 contributed by one coincidence
    let unit_raw = 1.0 / f / singles;
    let g2_raw = c.hits_ab as f64 * unit_raw;
    let g2_baseline = c.lag_ab as f64 / pairs / singles;
    let g2_normalized = g2_raw / g2_baseline;
    let rel = relative_variance(c.hits_ab, c.hits_a, c.hits_b)
        + relative_variance(c.lag_ab, c.hits_a, c.hits_b);
    let stderr = c.hits_ab.max(1) as f64 * unit_raw / g2_baseline * rel.sqrt();
    let (ra, rb) = if noise_available {
        (
            signal_fraction(c.hits_a, c.hits_noise),
            signal_fraction(c.hits_b, c.hits_noise),
        )
    } else {
        (1.0, 1.0)
    };
    Ok(CorrelationEstimate {
        g2_raw,
        g2_baseline,
        g2_normalized,
        g2_corrected: g2_normalized,
        stderr,
        stderr_corrected: stderr,
        n_coincidences: c.hits_ab,
        n_lagged: c.lag_ab,
        n_a: c.hits_a,
        n_b: c.hits_b,
        n_frames: frames,
        signal_fraction_a: ra,
        signal_fraction_b: rb,
    })
}

/// Removes uncorrelated background: with signal fractions `rho_a`, `rho_b`
/// the measured value is `rho_a rho_b g + (1 - rho_a rho_b)`.
pub fn background_correct(est: &CorrelationEstimate) -> Result<CorrelationEstimate> {
    let rho = est.signal_fraction_a * est.signal_fraction_b;
    if !(rho > 0.0) {
        return Err(Error::AllNoise);
    }
    let mut out = est.clone();
    out.g2_corrected = (est.g2_normalized - 1.0) / rho + 1.0;
    out.stderr_corrected = est.stderr / rho;
    Ok(out)
}

/// Streams a binary stack once and estimates the zero-delay correlation of
/// one object.
pub fn estimate_g2_zero(
    stack: &FrameStack,
    region: &ObjectRegion,
    baseline_lag: usize,
) -> Result<CorrelationEstimate> {
    if stack.mode() != StackMode::Binary {
        return Err(Error::Mode {
            expected: StackMode::Binary.name(),
            found: stack.mode().name(),
        });
    }
    let meta = stack.meta();
    let set = RegionSet::new(vec![region.clone()], meta.grid_width, meta.grid_height)?;
    let mut acc = FrameAccumulator::new(1, baseline_lag)?;
    for frame in stack.binary_frames()? {
        acc.push_frame(&set, frame.iter().copied(), [0, 0]);
    }
    correlation_from_counts(
        &acc.counts()[0],
        acc.frames(),
        baseline_lag,
        !region.noise.is_empty(),
    )
}
