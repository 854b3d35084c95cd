//! Chunked parallel drivers. Frames are generated and accumulated in fixed
//! chunks whose results are combined in frame order, so every output is
//! identical to a sequential run whatever the thread count.

use std::io::{Read, Write};
use std::ops::Range;

use photocorr_core::estimators::{FrameAccumulator, ScanPlan};
use photocorr_core::sim::{push_scratch, Frame, FrameScratch, FrameStack, Simulation};
use rayon::prelude::*;

use crate::error::Result;
use crate::store::{StackReader, StackWriter};

/// Frames per work unit.
pub const CHUNK_FRAMES: u64 = 4096;

/// Chunks generated before a batch is written out.
const BATCH_CHUNKS: usize = 64;

fn chunks(total: u64, size: u64) -> Vec<Range<u64>> {
    let size = size.max(1);
    (0..total.div_ceil(size))
        .map(|c| c * size..((c + 1) * size).min(total))
        .collect()
}

fn simulate_chunk(sim: &Simulation, range: Range<u64>) -> FrameStack {
    let mut part = FrameStack::new(sim.meta());
    let mut scratch = FrameScratch::default();
    for f in range {
        sim.simulate_frame(f, &mut scratch);
        push_scratch(&mut part, &scratch);
    }
    part
}

/// Whole stack, control frames included; equal to [`Simulation::run`].
pub fn simulate(sim: &Simulation) -> FrameStack {
    let mut meta = sim.meta();
    meta.control_frames = sim.control_frames();
    let mut stack = FrameStack::new(meta);
    let parts: Vec<FrameStack> = chunks(sim.frame_count(), CHUNK_FRAMES)
        .into_par_iter()
        .map(|r| simulate_chunk(sim, r))
        .collect();
    for part in &parts {
        stack.append(part).expect("chunks share the stack layout");
    }
    stack
}

/// Totals of a streamed simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimSummary {
    pub bytes: u64,
    pub events: u64,
    /// Events per frame in the busiest superpixel.
    pub peak_occupancy: f64,
}

/// Streams a simulated stack to `out` without holding it in memory.
pub fn simulate_to<W: Write>(sim: &Simulation, out: W) -> Result<SimSummary> {
    let mut meta = sim.meta();
    meta.control_frames = sim.control_frames();
    let w = meta.grid_width as usize;
    let mut map = vec![0u64; w * meta.grid_height as usize];
    let mut writer = StackWriter::new(out, &meta, sim.frame_count())?;
    let mut events = 0u64;
    for batch in chunks(sim.frame_count(), CHUNK_FRAMES).chunks(BATCH_CHUNKS) {
        let parts: Vec<FrameStack> = batch
            .par_iter()
            .map(|r| simulate_chunk(sim, r.clone()))
            .collect();
        for part in &parts {
            events += part.event_count() as u64;
            for frame in part.frames() {
                match frame {
                    Frame::Binary(p) => p
                        .iter()
                        .for_each(|q| map[q.y as usize * w + q.x as usize] += 1),
                    Frame::Analog(r) => r
                        .iter()
                        .for_each(|q| map[q.pixel.y as usize * w + q.pixel.x as usize] += 1),
                }
                writer.write_frame(frame)?;
            }
        }
    }
    let peak = map.iter().copied().max().unwrap_or(0);
    Ok(SimSummary {
        bytes: writer.finish()?,
        events,
        peak_occupancy: peak as f64 / sim.frame_count().max(1) as f64,
    })
}

/// Accumulates an in-memory stack in parallel chunks.
pub fn scan(plan: &ScanPlan, stack: &FrameStack) -> Result<Vec<FrameAccumulator>> {
    plan.check(stack.mode())?;
    let n = stack.frame_count() as u64;
    let parts = chunks(n, CHUNK_FRAMES)
        .into_par_iter()
        .map(|r| plan.scan(stack, r.start as usize..r.end as usize))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ScanPlan::merge(parts).unwrap_or_else(|| plan.fresh()))
}

/// Accumulates the remaining frames of a reader in one pass.
pub fn scan_reader<R: Read>(
    plan: &ScanPlan,
    reader: &mut StackReader<R>,
) -> Result<Vec<FrameAccumulator>> {
    plan.check(reader.meta().mode)?;
    let mut accs = plan.fresh();
    while let Some((i, frame)) = reader.next_frame()? {
        plan.push(&mut accs, i, frame);
    }
    Ok(accs)
}

/// Events per superpixel over the remaining frames of a reader, with
/// analog readouts kept only above `threshold`.
pub fn accumulate_map_reader<R: Read>(
    reader: &mut StackReader<R>,
    threshold: Option<f64>,
) -> Result<Vec<u64>> {
    let w = reader.meta().grid_width as usize;
    let mut map = vec![0u64; w * reader.meta().grid_height as usize];
    let t = threshold.unwrap_or(f64::NEG_INFINITY);
    while let Some((_, frame)) = reader.next_frame()? {
        match frame {
            Frame::Binary(p) => {
                for q in p {
                    map[q.y as usize * w + q.x as usize] += 1;
                }
            }
            Frame::Analog(r) => {
                for q in r.iter().filter(|q| q.signal as f64 > t) {
                    map[q.pixel.y as usize * w + q.pixel.x as usize] += 1;
                }
            }
        }
    }
    Ok(map)
}

/// Runs `f` over `items` in parallel and returns the results in input order.
pub fn map_ordered<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(usize, &T) -> U + Sync,
{
    items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect()
}
