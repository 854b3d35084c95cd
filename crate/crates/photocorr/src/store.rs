//! PFS1 (binary events) and PFA1 (analog readouts) stack files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        [u8; 4]   "PFS1" | "PFA1"
//! version      u16
//! grid_width   u32
//! grid_height  u32
//! frame_count  u64
//! mode_flags   u16       bit 0: analog, bit 1: thresholded from analog
//! meta_length  u32
//! metadata     [u8; meta_length]   TOML text
//! frames       frame_count x { event_count u32, event_count x (x u16, y u16[, S f32]) }
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use photocorr_core::sim::{
    CameraConfig, ControlFrame, DriftModel, ExcitationField, Frame, FrameStack, Pixel, Readout,
    StackMeta, StackMode,
};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC_BINARY: [u8; 4] = *b"PFS1";
pub const MAGIC_ANALOG: [u8; 4] = *b"PFA1";
pub const VERSION: u16 = 1;
pub const FLAG_ANALOG: u16 = 1;
pub const FLAG_THRESHOLDED: u16 = 2;
const HEADER_LEN: usize = 28;

/// Fixed-size part of the header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StackFileHeader {
    pub mode: StackMode,
    pub version: u16,
    pub grid_width: u32,
    pub grid_height: u32,
    pub frame_count: u64,
    pub flags: u16,
    pub meta_length: u32,
}

impl StackFileHeader {
    fn encode(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..4].copy_from_slice(match self.mode {
            StackMode::Binary => &MAGIC_BINARY,
            StackMode::Analog => &MAGIC_ANALOG,
        });
        b[4..6].copy_from_slice(&self.version.to_le_bytes());
        b[6..10].copy_from_slice(&self.grid_width.to_le_bytes());
        b[10..14].copy_from_slice(&self.grid_height.to_le_bytes());
        b[14..22].copy_from_slice(&self.frame_count.to_le_bytes());
        b[22..24].copy_from_slice(&self.flags.to_le_bytes());
        b[24..28].copy_from_slice(&self.meta_length.to_le_bytes());
        b
    }

    fn decode(b: &[u8; HEADER_LEN]) -> Result<Self> {
        let mode = match [b[0], b[1], b[2], b[3]] {
            MAGIC_BINARY => StackMode::Binary,
            MAGIC_ANALOG => StackMode::Analog,
            other => {
                return Err(Error::Format(format!(
                    "unrecognized magic {:?}",
                    String::from_utf8_lossy(&other)
                )))
            }
        };
        let u16_at = |i: usize| u16::from_le_bytes([b[i], b[i + 1]]);
        let u32_at = |i: usize| u32::from_le_bytes(b[i..i + 4].try_into().unwrap());
        let header = Self {
            mode,
            version: u16_at(4),
            grid_width: u32_at(6),
            grid_height: u32_at(10),
            frame_count: u64::from_le_bytes(b[14..22].try_into().unwrap()),
            flags: u16_at(22),
            meta_length: u32_at(24),
        };
        if header.version != VERSION {
            return Err(Error::Format(format!(
                "unsupported version {}",
                header.version
            )));
        }
        if header.flags & !(FLAG_ANALOG | FLAG_THRESHOLDED) != 0 {
            return Err(Error::Format(format!(
                "unknown mode flags {:#06x}",
                header.flags
            )));
        }
        if (header.flags & FLAG_ANALOG != 0) != (mode == StackMode::Analog) {
            return Err(Error::Format("mode flags disagree with the magic".into()));
        }
        if header.grid_width == 0
            || header.grid_height == 0
            || header.grid_width > 1 << 16
            || header.grid_height > 1 << 16
        {
            return Err(Error::Format(format!(
                "grid {}x{} is outside 1..=65536",
                header.grid_width, header.grid_height
            )));
        }
        Ok(header)
    }
}

mod hex_u64 {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{v:#018x}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        let s = String::deserialize(d)?;
        let digits = s
            .strip_prefix("0x")
            .ok_or_else(|| D::Error::custom("expected 0x prefix"))?;
        u64::from_str_radix(digits, 16).map_err(D::Error::custom)
    }
}

/// Metadata blob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetaBlob {
    #[serde(with = "hex_u64")]
    seed: u64,
    #[serde(with = "hex_u64")]
    scene_digest: u64,
    normalization_alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    threshold: Option<f64>,
    camera: CameraConfig,
    drift: DriftModel,
    excitation: ExcitationField,
    #[serde(default)]
    control_frames: Vec<ControlFrame>,
}

impl MetaBlob {
    fn from_meta(m: &StackMeta) -> Self {
        Self {
            seed: m.seed,
            scene_digest: m.scene_digest,
            normalization_alpha: m.normalization_alpha,
            threshold: m.threshold,
            camera: m.camera.clone(),
            drift: m.drift.clone(),
            excitation: m.excitation.clone(),
            control_frames: m.control_frames.clone(),
        }
    }

    fn into_meta(self, header: &StackFileHeader) -> StackMeta {
        StackMeta {
            mode: header.mode,
            grid_width: header.grid_width,
            grid_height: header.grid_height,
            camera: self.camera,
            drift: self.drift,
            seed: self.seed,
            scene_digest: self.scene_digest,
            excitation: self.excitation,
            normalization_alpha: self.normalization_alpha,
            threshold: self.threshold,
            control_frames: self.control_frames,
        }
    }
}

fn encode_meta(meta: &StackMeta) -> Result<Vec<u8>> {
    let text = toml::to_string(&MetaBlob::from_meta(meta))
        .map_err(|e| Error::Validation(format!("metadata cannot be encoded: {e}")))?;
    Ok(text.into_bytes())
}

fn check_meta(meta: &StackMeta) -> Result<()> {
    let cells = meta.grid_width as usize * meta.grid_height as usize;
    for c in &meta.control_frames {
        if c.counts.len() != cells {
            return Err(Error::Validation(format!(
                "control frame at {} has {} values for {} superpixels",
                c.frame_index,
                c.counts.len(),
                cells
            )));
        }
    }
    if meta.grid_width == 0 || meta.grid_height == 0 {
        return Err(Error::Validation("empty grid".into()));
    }
    if meta.camera.mode != meta.mode {
        return Err(Error::Validation(format!(
            "camera mode {} disagrees with stack mode {}",
            meta.camera.mode.name(),
            meta.mode.name()
        )));
    }
    Ok(())
}

/// Writes frames one at a time after a header that declares their number.
pub struct StackWriter<W: Write> {
    out: W,
    mode: StackMode,
    width: u32,
    height: u32,
    declared: u64,
    written: u64,
    bytes: u64,
    buf: Vec<u8>,
    keys: Vec<u32>,
}

impl<W: Write> StackWriter<W> {
    pub fn new(mut out: W, meta: &StackMeta, frame_count: u64) -> Result<Self> {
        check_meta(meta)?;
        let blob = encode_meta(meta)?;
        let mut flags = 0;
        if meta.mode == StackMode::Analog {
            flags |= FLAG_ANALOG;
        }
        if meta.threshold.is_some() {
            flags |= FLAG_THRESHOLDED;
        }
        let header = StackFileHeader {
            mode: meta.mode,
            version: VERSION,
            grid_width: meta.grid_width,
            grid_height: meta.grid_height,
            frame_count,
            flags,
            meta_length: u32::try_from(blob.len())
                .map_err(|_| Error::Validation("metadata exceeds 4 GiB".into()))?,
        };
        out.write_all(&header.encode())?;
        out.write_all(&blob)?;
        Ok(Self {
            out,
            mode: meta.mode,
            width: meta.grid_width,
            height: meta.grid_height,
            declared: frame_count,
            written: 0,
            bytes: (HEADER_LEN + blob.len()) as u64,
            buf: Vec::new(),
            keys: Vec::new(),
        })
    }

    fn check(&mut self, pixels: impl Iterator<Item = Pixel>) -> Result<()> {
        if self.written == self.declared {
            return Err(Error::Validation(format!(
                "more than the declared {} frames",
                self.declared
            )));
        }
        self.keys.clear();
        for p in pixels {
            if p.x as u32 >= self.width || p.y as u32 >= self.height {
                return Err(Error::Validation(format!(
                    "frame {}: event ({}, {}) outside the grid",
                    self.written, p.x, p.y
                )));
            }
            self.keys.push(p.key());
        }
        self.keys.sort_unstable();
        if self.keys.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Validation(format!(
                "frame {}: duplicate events",
                self.written
            )));
        }
        Ok(())
    }

    pub fn write_frame(&mut self, frame: Frame<'_>) -> Result<()> {
        self.buf.clear();
        match (frame, self.mode) {
            (Frame::Binary(px), StackMode::Binary) => {
                self.check(px.iter().copied())?;
                self.buf.extend_from_slice(&(px.len() as u32).to_le_bytes());
                for p in px {
                    self.buf.extend_from_slice(&p.x.to_le_bytes());
                    self.buf.extend_from_slice(&p.y.to_le_bytes());
                }
            }
            (Frame::Analog(rs), StackMode::Analog) => {
                self.check(rs.iter().map(|r| r.pixel))?;
                if let Some(r) = rs.iter().find(|r| !r.signal.is_finite()) {
                    return Err(Error::Validation(format!(
                        "frame {}: readout at ({}, {}) is not finite",
                        self.written, r.pixel.x, r.pixel.y
                    )));
                }
                self.buf.extend_from_slice(&(rs.len() as u32).to_le_bytes());
                for r in rs {
                    self.buf.extend_from_slice(&r.pixel.x.to_le_bytes());
                    self.buf.extend_from_slice(&r.pixel.y.to_le_bytes());
                    self.buf.extend_from_slice(&r.signal.to_le_bytes());
                }
            }
            _ => {
                return Err(Error::Validation(
                    "frame mode differs from the stack mode".into(),
                ))
            }
        }
        self.out.write_all(&self.buf)?;
        self.bytes += self.buf.len() as u64;
        self.written += 1;
        Ok(())
    }

    /// Flushes and returns the total byte count.
    pub fn finish(mut self) -> Result<u64> {
        if self.written != self.declared {
            return Err(Error::Validation(format!(
                "{} frames written, {} declared",
                self.written, self.declared
            )));
        }
        self.out.flush()?;
        Ok(self.bytes)
    }
}

/// Encodes a whole stack; returns the number of bytes written.
pub fn write_stack<W: Write>(stack: &FrameStack, out: W) -> Result<u64> {
    let mut w = StackWriter::new(out, stack.meta(), stack.frame_count() as u64)?;
    for frame in stack.frames() {
        w.write_frame(frame)?;
    }
    w.finish()
}

pub fn write_stack_file(stack: &FrameStack, path: &Path) -> Result<u64> {
    let file = File::create(path).map_err(|e| Error::file(path, e))?;
    write_stack(stack, BufWriter::new(file))
}

/// Frame-by-frame reader.
pub struct StackReader<R: Read> {
    src: R,
    header: StackFileHeader,
    meta: StackMeta,
    next: u64,
    raw: Vec<u8>,
    keys: Vec<u32>,
    pixels: Vec<Pixel>,
    readouts: Vec<Readout>,
}

fn read_exact_or<R: Read>(
    src: &mut R,
    buf: &mut [u8],
    what: impl FnOnce() -> String,
) -> Result<()> {
    src.read_exact(buf).map_err(|e| match e.kind() {
        ErrorKind::UnexpectedEof => Error::Corruption(what()),
        _ => Error::Io(e),
    })
}

impl<R: Read> StackReader<R> {
    pub fn new(mut src: R) -> Result<Self> {
        let mut hb = [0u8; HEADER_LEN];
        let mut got = 0;
        while got < HEADER_LEN {
            match src.read(&mut hb[got..]) {
                Ok(0) => break,
                Ok(n) => got += n,
                Err(e) if e.kind() == ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        if got >= 4 {
            // report a wrong magic before a short header
            let magic = [hb[0], hb[1], hb[2], hb[3]];
            if magic != MAGIC_BINARY && magic != MAGIC_ANALOG {
                return Err(Error::Format(format!(
                    "unrecognized magic {:?}",
                    String::from_utf8_lossy(&magic)
                )));
            }
        }
        if got < HEADER_LEN {
            return Err(Error::Corruption(format!(
                "header truncated after {got} of {HEADER_LEN} bytes"
            )));
        }
        let header = StackFileHeader::decode(&hb)?;
        let mut blob = vec![0u8; header.meta_length as usize];
        read_exact_or(&mut src, &mut blob, || "metadata truncated".into())?;
        let text = std::str::from_utf8(&blob)
            .map_err(|e| Error::Format(format!("metadata is not UTF-8: {e}")))?;
        let parsed: MetaBlob =
            toml::from_str(text).map_err(|e| Error::Format(format!("metadata: {e}")))?;
        if (header.flags & FLAG_THRESHOLDED != 0) != parsed.threshold.is_some() {
            return Err(Error::Format(
                "threshold flag disagrees with the metadata".into(),
            ));
        }
        let meta = parsed.into_meta(&header);
        check_meta(&meta)?;
        Ok(Self {
            src,
            header,
            meta,
            next: 0,
            raw: Vec::new(),
            keys: Vec::new(),
            pixels: Vec::new(),
            readouts: Vec::new(),
        })
    }

    pub fn header(&self) -> &StackFileHeader {
        &self.header
    }

    pub fn meta(&self) -> &StackMeta {
        &self.meta
    }

    pub fn frame_count(&self) -> u64 {
        self.header.frame_count
    }

    /// Next frame and its index, or `None` after the last declared frame
    /// once the source is confirmed to hold nothing more.
    pub fn next_frame(&mut self) -> Result<Option<(u64, Frame<'_>)>> {
        let i = self.next;
        if i == self.header.frame_count {
            let mut probe = [0u8; 1];
            loop {
                match self.src.read(&mut probe) {
                    Ok(0) => return Ok(None),
                    Ok(_) => {
                        return Err(Error::Corruption(format!(
                            "bytes follow the {} declared frames",
                            self.header.frame_count
                        )))
                    }
                    Err(e) if e.kind() == ErrorKind::Interrupted => {}
                    Err(e) => return Err(e.into()),
                }
            }
        }
        let mut nb = [0u8; 4];
        read_exact_or(&mut self.src, &mut nb, || format!("truncated in frame {i}"))?;
        let n = u32::from_le_bytes(nb) as usize;
        let cells = self.header.grid_width as u64 * self.header.grid_height as u64;
        if n as u64 > cells {
            return Err(Error::Validation(format!(
                "frame {i}: {n} events exceed the {cells} superpixels"
            )));
        }
        let width = match self.header.mode {
            StackMode::Binary => 4,
            StackMode::Analog => 8,
        };
        self.raw.resize(n * width, 0);
        read_exact_or(&mut self.src, &mut self.raw, || {
            format!("truncated in frame {i}")
        })?;
        self.keys.clear();
        self.pixels.clear();
        self.readouts.clear();
        for chunk in self.raw.chunks_exact(width) {
            let x = u16::from_le_bytes([chunk[0], chunk[1]]);
            let y = u16::from_le_bytes([chunk[2], chunk[3]]);
            if x as u32 >= self.header.grid_width || y as u32 >= self.header.grid_height {
                return Err(Error::Validation(format!(
                    "frame {i}: event ({x}, {y}) outside the grid"
                )));
            }
            let p = Pixel::new(x, y);
            self.keys.push(p.key());
            if width == 8 {
                let signal = f32::from_le_bytes(chunk[4..8].try_into().unwrap());
                if !signal.is_finite() {
                    return Err(Error::Validation(format!(
                        "frame {i}: readout at ({x}, {y}) is not finite"
                    )));
                }
                self.readouts.push(Readout { pixel: p, signal });
            } else {
                self.pixels.push(p);
            }
        }
        self.keys.sort_unstable();
        if let Some(w) = self.keys.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Validation(format!(
                "frame {i}: duplicate event at ({}, {})",
                w[0] & 0xffff,
                w[0] >> 16
            )));
        }
        self.next += 1;
        let frame = match self.header.mode {
            StackMode::Binary => Frame::Binary(&self.pixels),
            StackMode::Analog => Frame::Analog(&self.readouts),
        };
        Ok(Some((i, frame)))
    }

    /// Reads every remaining frame into memory.
    pub fn read_all(mut self) -> Result<FrameStack> {
        let mut stack = FrameStack::new(self.meta.clone());
        while let Some((_, frame)) = self.next_frame()? {
            let res = match frame {
                Frame::Binary(p) => stack.push_binary(p),
                Frame::Analog(r) => stack.push_analog(r),
            };
            res.map_err(|e| Error::Validation(e.to_string()))?;
        }
        Ok(stack)
    }
}

pub fn read_stack<R: Read>(src: R) -> Result<FrameStack> {
    StackReader::new(src)?.read_all()
}

pub fn open_stack(path: &Path) -> Result<StackReader<BufReader<File>>> {
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    StackReader::new(BufReader::with_capacity(1 << 16, file))
}

pub fn read_stack_file(path: &Path) -> Result<FrameStack> {
    open_stack(path)?.read_all()
}

/// Expected byte size of a file from its header and per-frame event counts.
pub fn encoded_len(meta_length: u32, mode: StackMode, events_per_frame: &[u32]) -> u64 {
    let per = match mode {
        StackMode::Binary => 4,
        StackMode::Analog => 8,
    };
    HEADER_LEN as u64
        + meta_length as u64
        + events_per_frame
            .iter()
            .map(|&n| 4 + per * n as u64)
            .sum::<u64>()
}
