//! In-memory frame stacks.
//!
//! Frames are stored back to back (compressed-row layout): one offset per
//! frame into a flat event vector. Events inside a frame are sorted by
//! `(y, x)` and unique.

use alloc::format;
use alloc::vec::Vec;
use core::ops::Range;

use super::scene::{CameraConfig, DriftModel, ExcitationField, StackMode};
use crate::error::{Error, Result};

/// Superpixel coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Pixel {
    pub x: u16,
    pub y: u16,
}

impl Pixel {
    pub const fn new(x: u16, y: u16) -> Self {
        Self { x, y }
    }

    /// Row-major sort key.
    pub fn key(self) -> u32 {
        ((self.y as u32) << 16) | self.x as u32
    }
}

/// Analog readout of one superpixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Readout {
    pub pixel: Pixel,
    pub signal: f32,
}

/// Dense long-exposure count map used for drift registration.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ControlFrame {
    /// First standard frame of the segment this control frame opens.
    pub frame_index: u64,
    /// Row-major counts, `grid_width * grid_height` entries.
    pub counts: Vec<u32>,
}

/// Acquisition metadata carried with a stack.
#[derive(Debug, Clone, PartialEq)]
pub struct StackMeta {
    pub mode: StackMode,
    pub grid_width: u32,
    pub grid_height: u32,
    pub camera: CameraConfig,
    pub drift: DriftModel,
    pub seed: u64,
    pub scene_digest: u64,
    pub excitation: ExcitationField,
    pub normalization_alpha: f64,
    /// Readout threshold applied when the stack was binarized.
    pub threshold: Option<f64>,
    pub control_frames: Vec<ControlFrame>,
}

impl StackMeta {
    /// Metadata for a stack that did not come from the simulator.
    pub fn bare(mode: StackMode, grid_width: u32, grid_height: u32) -> Self {
        Self {
            mode,
            grid_width,
            grid_height,
            camera: CameraConfig {
                mode,
                ..CameraConfig::default()
            },
            drift: DriftModel::default(),
            seed: 0,
            scene_digest: 0,
            excitation: ExcitationField::default(),
            normalization_alpha: 1.0,
            threshold: None,
            control_frames: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Events {
    Binary(Vec<Pixel>),
    Analog(Vec<Readout>),
}

/// One frame borrowed from a stack.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Frame<'a> {
    Binary(&'a [Pixel]),
    Analog(&'a [Readout]),
}

impl Frame<'_> {
    pub fn len(&self) -> usize {
        match self {
            Frame::Binary(p) => p.len(),
            Frame::Analog(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameStack {
    meta: StackMeta,
    offsets: Vec<usize>,
    events: Events,
}

impl FrameStack {
    pub fn new(meta: StackMeta) -> Self {
        let events = match meta.mode {
            StackMode::Binary => Events::Binary(Vec::new()),
            StackMode::Analog => Events::Analog(Vec::new()),
        };
        Self {
            meta,
            offsets: alloc::vec![0],
            events,
        }
    }

    pub fn meta(&self) -> &StackMeta {
        &self.meta
    }

    pub fn meta_mut(&mut self) -> &mut StackMeta {
        &mut self.meta
    }

    pub fn mode(&self) -> StackMode {
        self.meta.mode
    }

    pub fn frame_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn event_count(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    fn range(&self, i: usize) -> Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn frame(&self, i: usize) -> Frame<'_> {
        let r = self.range(i);
        match &self.events {
            Events::Binary(v) => Frame::Binary(&v[r]),
            Events::Analog(v) => Frame::Analog(&v[r]),
        }
    }

    pub fn frames(&self) -> impl ExactSizeIterator<Item = Frame<'_>> + '_ {
        (0..self.frame_count()).map(move |i| self.frame(i))
    }

    /// Binary frames, or a mode error for analog stacks.
    pub fn binary_frames(&self) -> Result<impl ExactSizeIterator<Item = &[Pixel]> + '_> {
        match &self.events {
            Events::Binary(v) => Ok((0..self.frame_count()).map(move |i| &v[self.range(i)])),
            Events::Analog(_) => Err(Error::Mode {
                expected: "binary",
                found: "analog",
            }),
        }
    }

    pub fn analog_frames(&self) -> Result<impl ExactSizeIterator<Item = &[Readout]> + '_> {
        match &self.events {
            Events::Analog(v) => Ok((0..self.frame_count()).map(move |i| &v[self.range(i)])),
            Events::Binary(_) => Err(Error::Mode {
                expected: "analog",
                found: "binary",
            }),
        }
    }

    fn check_pixel(&self, p: Pixel) -> Result<()> {
        if (p.x as u32) < self.meta.grid_width && (p.y as u32) < self.meta.grid_height {
            Ok(())
        } else {
            Err(Error::param(format!(
                "event ({}, {}) outside the {}x{} grid",
                p.x, p.y, self.meta.grid_width, self.meta.grid_height
            )))
        }
    }

    /// Appends a binary frame. Events may come in any order but must be
    /// unique and inside the grid.
    pub fn push_binary(&mut self, pixels: &[Pixel]) -> Result<()> {
        for &p in pixels {
            self.check_pixel(p)?;
        }
        let Events::Binary(store) = &mut self.events else {
            return Err(Error::Mode {
                expected: "analog",
                found: "binary",
            });
        };
        let start = store.len();
        store.extend_from_slice(pixels);
        store[start..].sort_unstable_by_key(|p| p.key());
        if let Some(w) = store[start..].windows(2).find(|w| w[0] == w[1]) {
            let dup = w[0];
            store.truncate(start);
            return Err(Error::param(format!(
                "duplicate event at ({}, {})",
                dup.x, dup.y
            )));
        }
        self.offsets.push(store.len());
        Ok(())
    }

    pub fn push_analog(&mut self, readouts: &[Readout]) -> Result<()> {
        for r in readouts {
            self.check_pixel(r.pixel)?;
            if !r.signal.is_finite() {
                return Err(Error::param("analog readout is not finite"));
            }
        }
        let Events::Analog(store) = &mut self.events else {
            return Err(Error::Mode {
                expected: "binary",
                found: "analog",
            });
        };
        let start = store.len();
        store.extend_from_slice(readouts);
        store[start..].sort_unstable_by_key(|r| r.pixel.key());
        if let Some(w) = store[start..].windows(2).find(|w| w[0].pixel == w[1].pixel) {
            let dup = w[0].pixel;
            store.truncate(start);
            return Err(Error::param(format!(
                "duplicate readout at ({}, {})",
                dup.x, dup.y
            )));
        }
        self.offsets.push(store.len());
        Ok(())
    }

    /// Appends every frame of `other`, which must share mode and grid.
    pub fn append(&mut self, other: &FrameStack) -> Result<()> {
        if other.meta.mode != self.meta.mode
            || other.meta.grid_width != self.meta.grid_width
            || other.meta.grid_height != self.meta.grid_height
        {
            return Err(Error::param("appended stack has a different mode or grid"));
        }
        let base = self.event_count();
        match (&mut self.events, &other.events) {
            (Events::Binary(a), Events::Binary(b)) => a.extend_from_slice(b),
            (Events::Analog(a), Events::Analog(b)) => a.extend_from_slice(b),
            _ => unreachable!("mode checked above"),
        }
        self.offsets
            .extend(other.offsets[1..].iter().map(|o| o + base));
        Ok(())
    }
}
