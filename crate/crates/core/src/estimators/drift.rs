//! Rigid drift estimates from control frames.

use alloc::format;
use alloc::vec::Vec;

use super::detect::connected_components;
use super::pipeline::DriftCorrection;
use crate::error::{Error, Result};
use crate::sim::ControlFrame;

/// Background level and bright mask of one control frame.
fn bright_mask(counts: &[u32]) -> (f64, f64, Vec<bool>) {
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    let bg = sorted.get(sorted.len() / 2).copied().unwrap_or(0) as f64;
    let level = bg + 5.0 * libm::sqrt(bg + 1.0);
    let mask = counts.iter().map(|&c| c as f64 > level).collect();
    (bg, level, mask)
}

/// Background-subtracted centroid of the pixels above `level` inside a box.
fn window_centroid(
    counts: &[u32],
    width: usize,
    height: usize,
    bbox: [i64; 4],
    bg: f64,
    level: f64,
) -> Option<([f64; 2], f64)> {
    let (mut s, mut sx, mut sy) = (0.0, 0.0, 0.0);
    let x0 = bbox[0].max(0) as usize;
    let y0 = bbox[1].max(0) as usize;
    let x1 = (bbox[2].max(-1) + 1).min(width as i64) as usize;
    let y1 = (bbox[3].max(-1) + 1).min(height as i64) as usize;
    for y in y0..y1 {
        for x in x0..x1 {
            let c = counts[y * width + x] as f64;
            if c > level {
                let wgt = c - bg;
                s += wgt;
                sx += wgt * x as f64;
                sy += wgt * y as f64;
            }
        }
    }
    (s > 0.0).then(|| ([sx / s, sy / s], s))
}

/// Per-segment shifts of the image relative to the first control frame,
/// rounded to whole superpixels.
///
/// Bright spots are found in the first control frame. In every later frame
/// each spot is re-centroided inside a window that follows the previous
/// estimate, and the segment shift is the median displacement over the
/// spots still visible.
pub fn register_drift(
    controls: &[ControlFrame],
    width: u32,
    height: u32,
    interval: u64,
) -> Result<DriftCorrection> {
    let (w, h) = (width as usize, height as usize);
    let Some(first) = controls.first() else {
        return Ok(DriftCorrection::none());
    };
    for c in controls {
        if c.counts.len() != w * h {
            return Err(Error::Registration(format!(
                "control frame at {} has {} values for a {width}x{height} grid",
                c.frame_index,
                c.counts.len()
            )));
        }
    }
    let (bg, level, mask) = bright_mask(&first.counts);
    const MARGIN: i64 = 4;
    let spots: Vec<([i64; 4], [f64; 2])> = connected_components(&mask, w, h)
        .into_iter()
        .filter_map(|comp| {
            let x0 = comp.iter().map(|p| p.x as i64).min()?;
            let x1 = comp.iter().map(|p| p.x as i64).max()?;
            let y0 = comp.iter().map(|p| p.y as i64).min()?;
            let y1 = comp.iter().map(|p| p.y as i64).max()?;
            let bbox = [x0 - MARGIN, y0 - MARGIN, x1 + MARGIN, y1 + MARGIN];
            let (c, _) = window_centroid(&first.counts, w, h, bbox, bg, level)?;
            Some((bbox, c))
        })
        .collect();
    if spots.is_empty() {
        return Err(Error::Registration(format!(
            "control frame at {} is featureless",
            first.frame_index
        )));
    }

    let mut shifts = Vec::with_capacity(controls.len());
    let mut current = [0.0f64, 0.0f64];
    shifts.push([0, 0]);
    for c in &controls[1..] {
        let (bg, level, _) = bright_mask(&c.counts);
        let offset = [
            libm::round(current[0]) as i64,
            libm::round(current[1]) as i64,
        ];
        let mut dx = Vec::new();
        let mut dy = Vec::new();
        for (bbox, c0) in &spots {
            let moved = [
                bbox[0] + offset[0],
                bbox[1] + offset[1],
                bbox[2] + offset[0],
                bbox[3] + offset[1],
            ];
            if let Some((m, _)) = window_centroid(&c.counts, w, h, moved, bg, level) {
                dx.push(m[0] - c0[0]);
                dy.push(m[1] - c0[1]);
            }
        }
        if dx.is_empty() {
            return Err(Error::Registration(format!(
                "control frame at {} is featureless",
                c.frame_index
            )));
        }
        current = [median(&mut dx), median(&mut dy)];
        shifts.push([
            libm::round(current[0]) as i32,
            libm::round(current[1]) as i32,
        ]);
    }
    Ok(DriftCorrection { interval, shifts })
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
