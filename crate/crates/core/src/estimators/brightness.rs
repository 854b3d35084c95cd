//! Normalized brightness and brightness grouping.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use super::accum::RegionCounts;
use crate::error::{Error, Result};
#[allow(unused_imports)]
use crate::math::Real;

/// Default group boundaries.
pub const DEFAULT_GROUP_BOUNDARIES: [f64; 3] = [1.25, 2.5, 4.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Brightness {
    pub value: f64,
    pub stderr: f64,
}

/// `B = (<N_A> - <N_noise>) / (T_g I~)` from field-A and noise event counts.
pub fn brightness_from_counts(
    c: &RegionCounts,
    frames: u64,
    gate_ns: f64,
    intensity: f64,
) -> Result<Brightness> {
    if !(intensity > 0.0 && intensity.is_finite()) {
        return Err(Error::Normalization);
    }
    if !(gate_ns > 0.0) {
        return Err(Error::param("gate width must be positive"));
    }
    if frames == 0 {
        return Err(Error::InsufficientCounts("no frames".into()));
    }
    let scale = 1.0 / (frames as f64 * gate_ns * intensity);
    let value = (c.events_a as f64 - c.events_noise as f64) * scale;
    let stderr = ((c.events_a + c.events_noise) as f64).sqrt() * scale;
    Ok(Brightness { value, stderr })
}

/// Mean field-A rate to brightness, for callers that already have rates.
pub fn brightness(mean_a: f64, mean_noise: f64, gate_ns: f64, intensity: f64) -> Result<f64> {
    if !(intensity > 0.0 && intensity.is_finite()) {
        return Err(Error::Normalization);
    }
    if !(gate_ns > 0.0) {
        return Err(Error::param("gate width must be positive"));
    }
    Ok((mean_a - mean_noise) / (gate_ns * intensity))
}

/// Group number (1-based) of `b` under half-open intervals
/// `(-inf, b0), [b0, b1), ..., [b_last, inf)`.
pub fn brightness_group(b: f64, boundaries: &[f64]) -> usize {
    1 + boundaries.iter().take_while(|&&lo| b >= lo).count()
}

/// Sorts object ids into brightness groups.
pub fn group_by_brightness<I>(
    objects: &[(I, f64)],
    boundaries: &[f64],
) -> Result<BTreeMap<usize, Vec<I>>>
where
    I: Clone,
{
    if boundaries.windows(2).any(|w| !(w[0] < w[1])) || boundaries.iter().any(|b| b.is_nan()) {
        return Err(Error::param(format!(
            "group boundaries must increase strictly: {boundaries:?}"
        )));
    }
    let mut groups: BTreeMap<usize, Vec<I>> = BTreeMap::new();
    for (id, b) in objects {
        groups
            .entry(brightness_group(*b, boundaries))
            .or_default()
            .push(id.clone());
    }
    Ok(groups)
}
