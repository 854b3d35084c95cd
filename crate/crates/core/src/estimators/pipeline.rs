//! Stack traversal: thresholding, drift-aware region lookup and per-object
//! accumulation for one or several thresholds at once.

use alloc::vec::Vec;
use core::ops::Range;

use super::accum::FrameAccumulator;
use super::correlation::{background_correct, correlation_from_counts, CorrelationEstimate};
use super::gn::{gn_from_histogram, GnEstimate};
use super::region::{ObjectRegion, RegionSet};
use crate::error::{Error, Result};
use crate::sim::{Frame, FrameStack, StackMode};

/// Threshold grid scanned by default: 650 to 720 in steps of 5.
pub fn default_thresholds() -> Vec<f64> {
    (0..=14).map(|i| 650.0 + 5.0 * i as f64).collect()
}

/// Whole-superpixel displacement of the regions, one shift per segment of
/// `interval` frames.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DriftCorrection {
    pub interval: u64,
    pub shifts: Vec<[i32; 2]>,
}

impl DriftCorrection {
    pub fn none() -> Self {
        Self {
            interval: u64::MAX,
            shifts: Vec::new(),
        }
    }

    pub fn shift(&self, frame: u64) -> [i32; 2] {
        if self.shifts.is_empty() {
            return [0, 0];
        }
        let segment = (frame / self.interval.max(1)) as usize;
        self.shifts[segment.min(self.shifts.len() - 1)]
    }
}

impl Default for DriftCorrection {
    fn default() -> Self {
        Self::none()
    }
}

/// Event at `(x, y)` iff `S > threshold`; the result is a binary stack whose
/// metadata records the threshold.
pub fn binarize(stack: &FrameStack, threshold: f64) -> Result<FrameStack> {
    if stack.mode() != StackMode::Analog {
        return Err(Error::Mode {
            expected: StackMode::Analog.name(),
            found: stack.mode().name(),
        });
    }
    let mut meta = stack.meta().clone();
    meta.mode = StackMode::Binary;
    meta.camera.mode = StackMode::Binary;
    meta.threshold = Some(threshold);
    let mut out = FrameStack::new(meta);
    let mut pixels = Vec::new();
    for frame in stack.analog_frames()? {
        pixels.clear();
        pixels.extend(
            frame
                .iter()
                .filter(|r| r.signal as f64 > threshold)
                .map(|r| r.pixel),
        );
        out.push_binary(&pixels)?;
    }
    Ok(out)
}

/// What to accumulate while streaming a stack.
#[derive(Debug, Clone)]
pub struct ScanPlan {
    pub set: RegionSet,
    pub lag: usize,
    /// One accumulator per entry. `None` keeps every event and is the only
    /// choice for binary stacks; analog stacks need a threshold.
    pub thresholds: Vec<Option<f64>>,
    pub drift: DriftCorrection,
}

impl ScanPlan {
    pub fn new(set: RegionSet, lag: usize) -> Self {
        Self {
            set,
            lag,
            thresholds: alloc::vec![None],
            drift: DriftCorrection::none(),
        }
    }

    pub fn check(&self, mode: StackMode) -> Result<()> {
        if self.lag == 0 {
            return Err(Error::param("baseline lag must be at least one frame"));
        }
        if self.thresholds.is_empty() {
            return Err(Error::param("no thresholds to scan"));
        }
        for t in &self.thresholds {
            match (mode, t) {
                (StackMode::Binary, Some(_)) => {
                    return Err(Error::Capability(
                        "thresholds apply to analog stacks only".into(),
                    ))
                }
                (StackMode::Analog, None) => {
                    return Err(Error::param("an analog stack needs a readout threshold"))
                }
                (StackMode::Analog, Some(t)) if !t.is_finite() => {
                    return Err(Error::param("threshold must be finite"))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn fresh(&self) -> Vec<FrameAccumulator> {
        self.thresholds
            .iter()
            .map(|_| FrameAccumulator::new(self.set.len(), self.lag).expect("lag checked"))
            .collect()
    }

    /// Adds frame number `index`.
    pub fn push(&self, accs: &mut [FrameAccumulator], index: u64, frame: Frame<'_>) {
        let shift = self.drift.shift(index);
        for (acc, threshold) in accs.iter_mut().zip(&self.thresholds) {
            match (frame, threshold) {
                (Frame::Binary(pixels), _) => {
                    acc.push_frame(&self.set, pixels.iter().copied(), shift)
                }
                (Frame::Analog(readouts), t) => {
                    let t = t.unwrap_or(f64::NEG_INFINITY);
                    let events = readouts
                        .iter()
                        .filter(|r| r.signal as f64 > t)
                        .map(|r| r.pixel);
                    acc.push_frame(&self.set, events, shift);
                }
            }
        }
    }

    /// Accumulates frames `range` of an in-memory stack.
    pub fn scan(&self, stack: &FrameStack, range: Range<usize>) -> Result<Vec<FrameAccumulator>> {
        self.check(stack.mode())?;
        let mut accs = self.fresh();
        for i in range {
            self.push(&mut accs, i as u64, stack.frame(i));
        }
        Ok(accs)
    }

    /// Merges chunk results given in frame order.
    pub fn merge(parts: Vec<Vec<FrameAccumulator>>) -> Option<Vec<FrameAccumulator>> {
        let mut iter = parts.into_iter();
        let first = iter.next()?;
        Some(iter.fold(first, |acc, next| {
            acc.into_iter()
                .zip(&next)
                .map(|(a, b)| a.merge(b))
                .collect()
        }))
    }

    /// Background-corrected correlation of region `i`.
    pub fn correlation(&self, acc: &FrameAccumulator, i: usize) -> Result<CorrelationEstimate> {
        let noise = !self.set.regions()[i].noise.is_empty();
        let est = correlation_from_counts(&acc.counts()[i], acc.frames(), self.lag, noise)?;
        background_correct(&est)
    }

    pub fn gn(&self, acc: &FrameAccumulator, i: usize, n: usize) -> Result<GnEstimate> {
        gn_from_histogram(&acc.counts()[i].count_histogram(acc.frames()), n)
    }

    /// Signal-to-noise ratio of region `i`: events in both fields against
    /// the noise area scaled to the same size.
    pub fn snr(&self, acc: &FrameAccumulator, i: usize) -> Option<f64> {
        let r = &self.set.regions()[i];
        if r.noise.is_empty() {
            return None;
        }
        let c = &acc.counts()[i];
        let scale = (r.region_a.len() + r.region_b.len()) as f64 / r.noise.len() as f64;
        let signal = (c.events_a + c.events_b) as f64;
        let noise = c.events_noise as f64 * scale;
        Some(if noise == 0.0 {
            f64::INFINITY
        } else {
            (signal - noise) / noise
        })
    }
}

/// `g^(n)` of one object from the per-frame event count in both fields.
pub fn estimate_gn(stack: &FrameStack, region: &ObjectRegion, n: usize) -> Result<GnEstimate> {
    if stack.mode() != StackMode::Binary {
        return Err(Error::Mode {
            expected: StackMode::Binary.name(),
            found: stack.mode().name(),
        });
    }
    let meta = stack.meta();
    let set = RegionSet::new(
        alloc::vec![region.clone()],
        meta.grid_width,
        meta.grid_height,
    )?;
    let plan = ScanPlan::new(set, 1);
    let accs = plan.scan(stack, 0..stack.frame_count())?;
    plan.gn(&accs[0], 0, n)
}

/// Mean events per superpixel per frame in the two fields of an object;
/// above 0.1 the one-event-per-superpixel collapse biases `g^(n)`.
pub fn occupancy(acc: &FrameAccumulator, set: &RegionSet, i: usize) -> f64 {
    let r = &set.regions()[i];
    let c = &acc.counts()[i];
    (c.events_a + c.events_b) as f64
        / (acc.frames().max(1) as f64 * (r.region_a.len() + r.region_b.len()) as f64)
}

/// Result for one threshold of a scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdPoint {
    pub threshold: f64,
    pub estimate: Result<CorrelationEstimate>,
    pub snr: Option<f64>,
}

/// Threshold maximizing the signal-to-noise ratio; ties go to the higher
/// threshold.
pub fn snr_optimal(points: &[ThresholdPoint]) -> Option<f64> {
    let mut best: Option<(f64, f64)> = None;
    for p in points {
        let Some(snr) = p.snr.filter(|s| !s.is_nan()) else {
            continue;
        };
        match best {
            Some((b, t)) if snr < b || (snr == b && p.threshold <= t) => {}
            _ => best = Some((snr, p.threshold)),
        }
    }
    best.map(|(_, t)| t)
}

/// Threshold minimizing the error of the corrected correlation; ties go to
/// the higher threshold.
pub fn stderr_optimal(points: &[ThresholdPoint]) -> Option<f64> {
    let mut best: Option<(f64, f64)> = None;
    for p in points {
        let Ok(est) = &p.estimate else { continue };
        let err = est.stderr_corrected;
        if err.is_nan() {
            continue;
        }
        match best {
            Some((b, t)) if err > b || (err == b && p.threshold <= t) => {}
            _ => best = Some((err, p.threshold)),
        }
    }
    best.map(|(_, t)| t)
}
