//! Start-stop coincidence histograms from two-detector time tags.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::error::{Error, Result};
#[allow(unused_imports)]
use crate::math::Real;
use crate::sim::{FrameStack, TimeTags};

/// Counts of `tau = t_B - t_A` over all A-B photon pairs with
/// `|tau| < window`. Bin `i` covers `[i w, (i + 1) w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceHistogram {
    pub bin_width: f64,
    pub window: f64,
    pub bins: BTreeMap<i64, u64>,
    pub total_pairs: u64,
    /// Detections on each arm and the record length, used to normalize.
    pub n_a: u64,
    pub n_b: u64,
    pub duration: f64,
}

/// One normalized bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedBin {
    /// Bin center, ns.
    pub tau: f64,
    pub count: u64,
    /// Count divided by the uncorrelated expectation.
    pub value: f64,
    /// Poisson error of `value` (a single count when the bin is empty).
    pub stderr: f64,
}

impl CoincidenceHistogram {
    /// Expected count of a bin centered at `tau` for uncorrelated arms.
    pub fn uncorrelated_expectation(&self, tau: f64) -> f64 {
        let overlap = (self.duration - tau.abs()).max(0.0);
        self.n_a as f64 * self.n_b as f64 * self.bin_width * overlap
            / (self.duration * self.duration)
    }

    /// Every bin lying wholly inside the window, empty ones included,
    /// normalized to 1 for uncorrelated light.
    pub fn normalized(&self) -> Vec<NormalizedBin> {
        let lo = libm::ceil(-self.window / self.bin_width) as i64;
        let hi = libm::floor(self.window / self.bin_width) as i64;
        (lo..hi)
            .filter_map(|i| {
                let tau = (i as f64 + 0.5) * self.bin_width;
                let norm = self.uncorrelated_expectation(tau);
                if !(norm > 0.0) {
                    return None;
                }
                let count = self.bins.get(&i).copied().unwrap_or(0);
                Some(NormalizedBin {
                    tau,
                    count,
                    value: count as f64 / norm,
                    stderr: (count.max(1) as f64).sqrt() / norm,
                })
            })
            .collect()
    }
}

/// Builds the histogram from sorted detection times.
pub fn build_coincidence_histogram(
    tags: &TimeTags,
    bin_width: f64,
    window: f64,
) -> Result<CoincidenceHistogram> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(Error::param("bin width must be positive"));
    }
    if !(window > 0.0 && window.is_finite()) {
        return Err(Error::param("coincidence window must be positive"));
    }
    let sorted = |v: &[f64]| v.windows(2).all(|w| w[0] <= w[1]) && v.iter().all(|t| t.is_finite());
    if !sorted(&tags.detector_a) || !sorted(&tags.detector_b) {
        return Err(Error::param("time tags must be finite and sorted"));
    }
    if !(tags.duration_ns > 0.0) {
        return Err(Error::param("record duration must be positive"));
    }
    let mut bins = BTreeMap::new();
    let mut total = 0;
    let b = &tags.detector_b;
    let mut start = 0;
    for &ta in &tags.detector_a {
        while start < b.len() && b[start] - ta <= -window {
            start += 1;
        }
        let mut j = start;
        while j < b.len() && b[j] - ta < window {
            let tau = b[j] - ta;
            *bins.entry(libm::floor(tau / bin_width) as i64).or_insert(0) += 1;
            total += 1;
            j += 1;
        }
    }
    Ok(CoincidenceHistogram {
        bin_width,
        window,
        bins,
        total_pairs: total,
        n_a: tags.detector_a.len() as u64,
        n_b: tags.detector_b.len() as u64,
        duration: tags.duration_ns,
    })
}

/// Frame stacks keep no photon arrival times, so no histogram can be built
/// from them.
pub fn coincidence_histogram_from_stack(_stack: &FrameStack) -> Result<CoincidenceHistogram> {
    Err(Error::Capability(
        "frame stacks carry no photon arrival times; a coincidence histogram needs time tags"
            .into(),
    ))
}
