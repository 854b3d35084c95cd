//! Per-region frame statistics with an exact, associative merge.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use super::region::RegionSet;
use crate::error::{Error, Result};
use crate::sim::Pixel;

/// Integer tallies for one object. Rates are derived only when an estimate
/// is requested, so merging chunk results is exact.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RegionCounts {
    /// Frames with at least one event in field A.
    pub hits_a: u64,
    pub hits_b: u64,
    /// Frames with events in both fields.
    pub hits_ab: u64,
    pub hits_noise: u64,
    /// Frame pairs `(i, i + lag)` with an A event in `i` and a B event in
    /// `i + lag`.
    pub lag_ab: u64,
    pub events_a: u64,
    pub events_b: u64,
    pub events_noise: u64,
    /// `count_hist[c - 1]` is the number of frames with `c` events in
    /// field A and field B together.
    pub count_hist: Vec<u64>,
}

impl RegionCounts {
    fn merge(&mut self, other: &RegionCounts) {
        self.hits_a += other.hits_a;
        self.hits_b += other.hits_b;
        self.hits_ab += other.hits_ab;
        self.hits_noise += other.hits_noise;
        self.lag_ab += other.lag_ab;
        self.events_a += other.events_a;
        self.events_b += other.events_b;
        self.events_noise += other.events_noise;
        if self.count_hist.len() < other.count_hist.len() {
            self.count_hist.resize(other.count_hist.len(), 0);
        }
        for (a, b) in self.count_hist.iter_mut().zip(&other.count_hist) {
            *a += b;
        }
    }

    /// Frames with `c` events in A and B, `c = 0, 1, ...`.
    pub fn count_histogram(&self, frames: u64) -> Vec<u64> {
        let nonzero: u64 = self.count_hist.iter().sum();
        let mut hist = Vec::with_capacity(self.count_hist.len() + 1);
        hist.push(frames - nonzero);
        hist.extend_from_slice(&self.count_hist);
        hist
    }
}

/// Scratch buffers for one frame.
#[derive(Debug, Clone, Default)]
struct Scratch {
    touched: Vec<usize>,
    counts: Vec<[u32; 3]>,
    spare: Vec<u32>,
}

/// Streaming statistics over consecutive frames for every region of a
/// [`RegionSet`].
///
/// Each frame's per-region A/B indicators are kept for the first and last
/// `lag` frames, which is all that is needed to count the lagged pairs that
/// straddle the boundary when two consecutive chunks are merged.
#[derive(Debug, Clone)]
pub struct FrameAccumulator {
    lag: usize,
    frames: u64,
    counts: Vec<RegionCounts>,
    head: Vec<Vec<u32>>,
    tail: VecDeque<Vec<u32>>,
    scratch: Scratch,
}

impl PartialEq for FrameAccumulator {
    fn eq(&self, other: &Self) -> bool {
        self.lag == other.lag
            && self.frames == other.frames
            && self.counts == other.counts
            && self.head == other.head
            && self.tail == other.tail
    }
}

/// Packs a region index with its A and B indicator bits.
fn pack(region: usize, a: bool, b: bool) -> u32 {
    ((region as u32) << 2) | ((a as u32) << 1) | b as u32
}

/// Counts regions with an A bit in `earlier` and a B bit in `later`; both
/// lists are sorted by region.
fn count_lagged(earlier: &[u32], later: &[u32], counts: &mut [RegionCounts]) {
    let (mut i, mut j) = (0, 0);
    while i < earlier.len() && j < later.len() {
        let (ri, rj) = (earlier[i] >> 2, later[j] >> 2);
        if ri < rj {
            i += 1;
        } else if rj < ri {
            j += 1;
        } else {
            if earlier[i] & 2 != 0 && later[j] & 1 != 0 {
                counts[ri as usize].lag_ab += 1;
            }
            i += 1;
            j += 1;
        }
    }
}

impl FrameAccumulator {
    pub fn new(regions: usize, lag: usize) -> Result<Self> {
        if lag == 0 {
            return Err(Error::param("baseline lag must be at least one frame"));
        }
        Ok(Self {
            lag,
            frames: 0,
            counts: alloc::vec![RegionCounts::default(); regions],
            head: Vec::new(),
            tail: VecDeque::new(),
            scratch: Scratch::default(),
        })
    }

    pub fn lag(&self) -> usize {
        self.lag
    }

    pub fn frames(&self) -> u64 {
        self.frames
    }

    pub fn counts(&self) -> &[RegionCounts] {
        &self.counts
    }

    /// Adds one frame. `shift` displaces every region by whole superpixels.
    pub fn push_frame<I>(&mut self, set: &RegionSet, events: I, shift: [i32; 2])
    where
        I: IntoIterator<Item = Pixel>,
    {
        debug_assert_eq!(set.len(), self.counts.len());
        let scratch = &mut self.scratch;
        if scratch.counts.len() < set.len() {
            scratch.counts.resize(set.len(), [0; 3]);
        }
        for p in events {
            if let Some((region, role)) = set.locate(p.x, p.y, shift) {
                let c = &mut scratch.counts[region];
                if *c == [0; 3] {
                    scratch.touched.push(region);
                }
                c[role as usize - 1] += 1;
            }
        }
        scratch.touched.sort_unstable();

        let mut hits = core::mem::take(&mut scratch.spare);
        hits.clear();
        for &region in &scratch.touched {
            let [na, nb, nn] = core::mem::take(&mut scratch.counts[region]);
            let c = &mut self.counts[region];
            let (a, b) = (na > 0, nb > 0);
            c.hits_a += a as u64;
            c.hits_b += b as u64;
            c.hits_ab += (a && b) as u64;
            c.hits_noise += (nn > 0) as u64;
            c.events_a += na as u64;
            c.events_b += nb as u64;
            c.events_noise += nn as u64;
            let total = (na + nb) as usize;
            if total > 0 {
                if c.count_hist.len() < total {
                    c.count_hist.resize(total, 0);
                }
                c.count_hist[total - 1] += 1;
            }
            if a || b {
                hits.push(pack(region, a, b));
            }
        }
        scratch.touched.clear();

        // the tail holds the previous min(frames, lag) frames
        if self.tail.len() == self.lag {
            let earlier = self.tail.pop_front().expect("lag is at least one");
            count_lagged(&earlier, &hits, &mut self.counts);
            scratch.spare = earlier;
        }
        if self.head.len() < self.lag {
            self.head.push(hits.clone());
        }
        self.tail.push_back(hits);
        self.frames += 1;
    }

    /// Combines statistics of `self` followed immediately by `next`.
    pub fn merge(mut self, next: &FrameAccumulator) -> Self {
        assert_eq!(self.lag, next.lag, "accumulators use different lags");
        assert_eq!(
            self.counts.len(),
            next.counts.len(),
            "accumulators cover different region sets"
        );
        let lag = self.lag;
        // lagged pairs across the boundary
        let tail_len = self.tail.len();
        for (j, earlier) in self.tail.iter().enumerate() {
            let r = j + lag - tail_len;
            if let Some(later) = next.head.get(r) {
                count_lagged(earlier, later, &mut self.counts);
            }
        }
        for (a, b) in self.counts.iter_mut().zip(&next.counts) {
            a.merge(b);
        }
        for h in &next.head {
            if self.head.len() >= lag {
                break;
            }
            self.head.push(h.clone());
        }
        let keep = lag.saturating_sub(next.tail.len());
        while self.tail.len() > keep {
            self.tail.pop_front();
        }
        self.tail.extend(next.tail.iter().cloned());
        self.frames += next.frames;
        self
    }
}
