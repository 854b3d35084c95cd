//! Object regions and the pixel lookup used while scanning frames.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::sim::Pixel;

/// The two split images of one object plus an empty reference area.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ObjectRegion {
    pub id: u32,
    pub region_a: Vec<Pixel>,
    pub region_b: Vec<Pixel>,
    /// Same size as `region_a`, or empty when no background estimate is
    /// wanted.
    #[cfg_attr(feature = "serde", serde(default))]
    pub noise: Vec<Pixel>,
}

impl ObjectRegion {
    /// Square regions of side `2 r + 1` centered on `a` and `b`.
    pub fn squares(id: u32, a: [i64; 2], b: [i64; 2], noise: Option<[i64; 2]>, r: i64) -> Self {
        let square = |c: [i64; 2]| {
            let mut v = Vec::new();
            for y in c[1] - r..=c[1] + r {
                for x in c[0] - r..=c[0] + r {
                    if (0..=u16::MAX as i64).contains(&x) && (0..=u16::MAX as i64).contains(&y) {
                        v.push(Pixel::new(x as u16, y as u16));
                    }
                }
            }
            v
        };
        Self {
            id,
            region_a: square(a),
            region_b: square(b),
            noise: noise.map(square).unwrap_or_default(),
        }
    }

    /// Mean position of the field-A pixels.
    pub fn center_a(&self) -> [f64; 2] {
        let n = self.region_a.len().max(1) as f64;
        let (sx, sy) = self
            .region_a
            .iter()
            .fold((0.0, 0.0), |(sx, sy), p| (sx + p.x as f64, sy + p.y as f64));
        [sx / n, sy / n]
    }
}

pub(crate) const ROLE_A: u32 = 1;
pub(crate) const ROLE_B: u32 = 2;
pub(crate) const ROLE_NOISE: u32 = 3;

/// Validated, mutually disjoint regions with a per-pixel lookup table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionSet {
    regions: Vec<ObjectRegion>,
    width: u32,
    height: u32,
    lookup: Vec<u32>,
}

impl RegionSet {
    pub fn new(regions: Vec<ObjectRegion>, width: u32, height: u32) -> Result<Self> {
        let mut lookup = alloc::vec![0u32; width as usize * height as usize];
        for (i, r) in regions.iter().enumerate() {
            if r.region_a.is_empty() || r.region_b.is_empty() {
                return Err(Error::param(format!("object {}: empty region", r.id)));
            }
            if !r.noise.is_empty() && r.noise.len() != r.region_a.len() {
                return Err(Error::param(format!(
                    "object {}: noise region has {} superpixels, field A has {}",
                    r.id,
                    r.noise.len(),
                    r.region_a.len()
                )));
            }
            let parts = [
                (&r.region_a, ROLE_A),
                (&r.region_b, ROLE_B),
                (&r.noise, ROLE_NOISE),
            ];
            for (pixels, role) in parts {
                for p in pixels {
                    if p.x as u32 >= width || p.y as u32 >= height {
                        return Err(Error::param(format!(
                            "object {}: superpixel ({}, {}) outside the {width}x{height} grid",
                            r.id, p.x, p.y
                        )));
                    }
                    let slot = &mut lookup[p.y as usize * width as usize + p.x as usize];
                    if *slot != 0 {
                        return Err(Error::param(format!(
                            "object {}: superpixel ({}, {}) belongs to more than one region",
                            r.id, p.x, p.y
                        )));
                    }
                    *slot = ((i as u32 + 1) << 2) | role;
                }
            }
        }
        Ok(Self {
            regions,
            width,
            height,
            lookup,
        })
    }

    pub fn regions(&self) -> &[ObjectRegion] {
        &self.regions
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    /// `(region index, role)` of the region pixel under an event observed at
    /// `(x, y)` while the regions are displaced by `shift`.
    #[inline]
    pub(crate) fn locate(&self, x: u16, y: u16, shift: [i32; 2]) -> Option<(usize, u32)> {
        let rx = x as i64 - shift[0] as i64;
        let ry = y as i64 - shift[1] as i64;
        if rx < 0 || ry < 0 || rx >= self.width as i64 || ry >= self.height as i64 {
            return None;
        }
        let code = self.lookup[ry as usize * self.width as usize + rx as usize];
        (code != 0).then(|| ((code >> 2) as usize - 1, code & 3))
    }
}
