//! Continuous photon streams recorded by two detectors behind a beam splitter.

use alloc::vec::Vec;

use rand::Rng;

use super::emitter::EmissionProcess;
use super::rng::{self, substream};
use crate::error::{Error, Result};
use crate::model::{EmitterParams, Excitation};

/// Detection times (ns) on the two arms, each sorted ascending.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TimeTags {
    pub detector_a: Vec<f64>,
    pub detector_b: Vec<f64>,
    pub duration_ns: f64,
}

/// Records `duration_ns` of emission from `emitters` identical, independent
/// emitters. Each photon is detected with probability `efficiency` and sent
/// to either arm with equal probability.
pub fn simulate_time_tags(
    emitter: &EmitterParams,
    emitters: usize,
    efficiency: f64,
    duration_ns: f64,
    seed: u64,
) -> Result<TimeTags> {
    emitter.validate()?;
    if !matches!(emitter.excitation, Excitation::Continuous) {
        return Err(Error::param("time-tag streams need continuous excitation"));
    }
    if emitters == 0 {
        return Err(Error::param("at least one emitter is required"));
    }
    if !(efficiency > 0.0 && efficiency <= 1.0) {
        return Err(Error::param("detection efficiency must lie in (0, 1]"));
    }
    if !(duration_ns.is_finite() && duration_ns > 0.0) {
        return Err(Error::param("duration must be positive and finite"));
    }
    let process = EmissionProcess::saturated(emitter.decay_rate_k, emitter.two_photon_prob_p);
    let mut tags = TimeTags {
        duration_ns,
        ..TimeTags::default()
    };
    let mut times = Vec::new();
    for i in 0..emitters {
        let mut rng = substream(seed, rng::DOMAIN_TIME_TAGS, i as u64);
        times.clear();
        process.sample(&mut rng, duration_ns, &mut times);
        for &t in &times {
            if efficiency < 1.0 && rng.random::<f64>() >= efficiency {
                continue;
            }
            if rng.random::<bool>() {
                tags.detector_a.push(t);
            } else {
                tags.detector_b.push(t);
            }
        }
    }
    if emitters > 1 {
        tags.detector_a.sort_by(f64::total_cmp);
        tags.detector_b.sort_by(f64::total_cmp);
    }
    Ok(tags)
}
