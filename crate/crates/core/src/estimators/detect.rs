//! Automatic object regions from an accumulated count map.

use alloc::vec::Vec;

use super::region::ObjectRegion;
use crate::error::{Error, Result};
use crate::sim::{FrameStack, Pixel};

/// Events per superpixel summed over every frame.
pub fn accumulate_map(stack: &FrameStack) -> Vec<u64> {
    let w = stack.meta().grid_width as usize;
    let mut map = alloc::vec![0u64; w * stack.meta().grid_height as usize];
    for frame in stack.frames() {
        match frame {
            crate::sim::Frame::Binary(p) => {
                for q in p {
                    map[q.y as usize * w + q.x as usize] += 1;
                }
            }
            crate::sim::Frame::Analog(r) => {
                for q in r {
                    map[q.pixel.y as usize * w + q.pixel.x as usize] += 1;
                }
            }
        }
    }
    map
}

fn median(values: &[u64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_unstable();
    let n = v.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        (v[n / 2 - 1] as f64 + v[n / 2] as f64) / 2.0
    }
}

/// Level above which a superpixel counts as bright: five times the median,
/// or five times the mean when most superpixels saw nothing.
pub fn detection_level(map: &[u64]) -> f64 {
    let m = median(map);
    if m > 0.0 {
        5.0 * m
    } else {
        5.0 * map.iter().sum::<u64>() as f64 / map.len().max(1) as f64
    }
}

/// 8-connected components of the superpixels where `mask` is set, in raster
/// order of their first pixel.
pub fn connected_components(mask: &[bool], width: usize, height: usize) -> Vec<Vec<Pixel>> {
    let mut label = alloc::vec![false; mask.len()];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || label[start] {
            continue;
        }
        label[start] = true;
        stack.push(start);
        let mut comp = Vec::new();
        while let Some(i) = stack.pop() {
            let (x, y) = (i % width, i / width);
            comp.push(Pixel::new(x as u16, y as u16));
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= width as i64 || ny >= height as i64 {
                        continue;
                    }
                    let j = ny as usize * width + nx as usize;
                    if mask[j] && !label[j] {
                        label[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        comp.sort_by_key(|p| p.key());
        out.push(comp);
    }
    out
}

fn translate(pixels: &[Pixel], d: [i64; 2], width: usize, height: usize) -> Option<Vec<Pixel>> {
    pixels
        .iter()
        .map(|p| {
            let (x, y) = (p.x as i64 + d[0], p.y as i64 + d[1]);
            (x >= 0 && y >= 0 && x < width as i64 && y < height as i64)
                .then(|| Pixel::new(x as u16, y as u16))
        })
        .collect()
}

/// Finds objects in an accumulated map.
///
/// Bright superpixels form 8-connected components; components smaller than
/// two superpixels are dropped. Each remaining component grows over the
/// connected superpixels more than three standard deviations above the
/// median count, which adds the faint image wings. A component whose translate by
/// `offset_b` meets another component is a field-A image and the other its
/// field-B image; the field-A region is the union of both shapes and the
/// field-B region is its translate. An unpaired component is taken as a
/// field-A image when its translate fits in the grid, otherwise as a
/// field-B image. The noise region is the field-A shape moved to the
/// nearest area free of object light and other regions.
pub fn detect_regions(
    map: &[u64],
    width: u32,
    height: u32,
    offset_b: [f64; 2],
) -> Result<Vec<ObjectRegion>> {
    let (w, h) = (width as usize, height as usize);
    if map.len() != w * h {
        return Err(Error::param("count map does not match the grid"));
    }
    let level = detection_level(map);
    let strong: Vec<bool> = map.iter().map(|&c| c as f64 > level && c > 0).collect();
    let seeds: Vec<Vec<Pixel>> = connected_components(&strong, w, h)
        .into_iter()
        .filter(|c| c.len() >= 2)
        .collect();
    // grow every seed over the connected superpixels that stand out from
    // the background, so that the regions hold the faint PSF wings too
    let bg = median(map);
    let grow = bg + 3.0 * libm::sqrt(bg + 1.0);
    let mut mask: Vec<bool> = map.iter().map(|&c| c as f64 > grow).collect();
    for s in &seeds {
        for p in s {
            mask[p.y as usize * w + p.x as usize] = true;
        }
    }
    let mut seeded = alloc::vec![false; w * h];
    for s in &seeds {
        seeded[s[0].y as usize * w + s[0].x as usize] = true;
    }
    let comps: Vec<Vec<Pixel>> = connected_components(&mask, w, h)
        .into_iter()
        .filter(|c| c.iter().any(|p| seeded[p.y as usize * w + p.x as usize]))
        .collect();
    let off = [
        libm::round(offset_b[0]) as i64,
        libm::round(offset_b[1]) as i64,
    ];
    let mut owner = alloc::vec![usize::MAX; w * h];
    for (i, c) in comps.iter().enumerate() {
        for p in c {
            owner[p.y as usize * w + p.x as usize] = i;
        }
    }
    // superpixels a noise area must avoid: bright ones and their neighbours
    let mut blocked = alloc::vec![false; w * h];
    for (i, &m) in mask.iter().enumerate() {
        if m {
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            for dy in -2..=2 {
                for dx in -2..=2 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx >= 0 && ny >= 0 && nx < w as i64 && ny < h as i64 {
                        blocked[ny as usize * w + nx as usize] = true;
                    }
                }
            }
        }
    }
    let mut claimed = alloc::vec![false; w * h];
    let mut used = alloc::vec![false; comps.len()];
    let mut regions = Vec::new();
    for i in 0..comps.len() {
        if used[i] {
            continue;
        }
        let partner = translate(&comps[i], off, w, h).and_then(|t| {
            t.iter()
                .map(|p| owner[p.y as usize * w + p.x as usize])
                .find(|&j| j != usize::MAX && j != i && !used[j])
        });
        let region_a = match partner {
            Some(j) => {
                used[j] = true;
                let mut a = comps[i].clone();
                if let Some(back) = translate(&comps[j], [-off[0], -off[1]], w, h) {
                    a.extend(back);
                }
                a.sort_by_key(|p| p.key());
                a.dedup();
                a
            }
            None if translate(&comps[i], off, w, h).is_some() => comps[i].clone(),
            None => match translate(&comps[i], [-off[0], -off[1]], w, h) {
                Some(a) => a,
                None => continue,
            },
        };
        used[i] = true;
        let Some(region_b) = translate(&region_a, off, w, h) else {
            continue;
        };
        let free = |pixels: &[Pixel], claimed: &[bool]| {
            pixels
                .iter()
                .all(|p| !claimed[p.y as usize * w + p.x as usize])
        };
        if !free(&region_a, &claimed) || !free(&region_b, &claimed) {
            continue;
        }
        if region_a.iter().any(|p| region_b.contains(p)) {
            continue;
        }
        for p in region_a.iter().chain(&region_b) {
            claimed[p.y as usize * w + p.x as usize] = true;
        }
        let noise = find_noise_area(&region_a, &blocked, &claimed, w, h).unwrap_or_default();
        for p in &noise {
            claimed[p.y as usize * w + p.x as usize] = true;
        }
        regions.push(ObjectRegion {
            id: regions.len() as u32 + 1,
            region_a,
            region_b,
            noise,
        });
    }
    if regions.is_empty() {
        return Err(Error::InsufficientCounts("no objects found".into()));
    }
    Ok(regions)
}

/// Nearest translate of `shape` that avoids blocked and claimed superpixels,
/// searched ring by ring.
fn find_noise_area(
    shape: &[Pixel],
    blocked: &[bool],
    claimed: &[bool],
    w: usize,
    h: usize,
) -> Option<Vec<Pixel>> {
    let reach = w.max(h) as i64;
    for r in 1..reach {
        for dy in -r..=r {
            for dx in -r..=r {
                if dx.abs() != r && dy.abs() != r {
                    continue;
                }
                if let Some(t) = translate(shape, [dx, dy], w, h) {
                    let ok = t.iter().all(|p| {
                        let i = p.y as usize * w + p.x as usize;
                        !blocked[i] && !claimed[i]
                    });
                    if ok {
                        return Some(t);
                    }
                }
            }
        }
    }
    None
}

/// Square regions of half-width `half` around known field-A positions, the
/// matching field-B squares shifted by `offset_b`, and a noise area of the
/// same shape for each object placed away from every square.
pub fn regions_around(
    centers: &[[f64; 2]],
    half: i64,
    offset_b: [f64; 2],
    width: u32,
    height: u32,
) -> Result<Vec<ObjectRegion>> {
    let (w, h) = (width as usize, height as usize);
    let off = [
        libm::round(offset_b[0]) as i64,
        libm::round(offset_b[1]) as i64,
    ];
    let mut regions = Vec::with_capacity(centers.len());
    let mut blocked = alloc::vec![false; w * h];
    let mut claimed = alloc::vec![false; w * h];
    for (i, c) in centers.iter().enumerate() {
        let a = [libm::floor(c[0]) as i64, libm::floor(c[1]) as i64];
        let r = ObjectRegion::squares(i as u32 + 1, a, [a[0] + off[0], a[1] + off[1]], None, half);
        let side = (2 * half + 1) as usize;
        if r.region_a.len() != side * side
            || r.region_b.len() != side * side
            || r.region_a
                .iter()
                .chain(&r.region_b)
                .any(|p| p.x as usize >= w || p.y as usize >= h)
        {
            return Err(Error::param(alloc::format!(
                "object {} at ({}, {}) is too close to the grid edge",
                i + 1,
                c[0],
                c[1]
            )));
        }
        for p in r.region_a.iter().chain(&r.region_b) {
            let (x, y) = (p.x as i64, p.y as i64);
            claimed[y as usize * w + x as usize] = true;
            for dy in -2..=2 {
                for dx in -2..=2 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx >= 0 && ny >= 0 && nx < w as i64 && ny < h as i64 {
                        blocked[ny as usize * w + nx as usize] = true;
                    }
                }
            }
        }
        regions.push(r);
    }
    for r in &mut regions {
        if let Some(noise) = find_noise_area(&r.region_a, &blocked, &claimed, w, h) {
            for p in &noise {
                claimed[p.y as usize * w + p.x as usize] = true;
            }
            r.noise = noise;
        }
    }
    Ok(regions)
}
