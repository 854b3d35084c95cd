//! Scene, camera and drift configuration.

use alloc::format;
use alloc::vec::Vec;

use super::rng::Digest;
use crate::error::{Error, Result};
use crate::model::{EmitterParams, Excitation, GateConfig};

/// Largest grid edge addressable by the 16-bit event coordinates.
pub const MAX_GRID: u32 = 1 << 16;

/// Spatial profile of the excitation intensity `I`, before normalization.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "kebab-case"))]
pub enum ExcitationField {
    Uniform {
        intensity: f64,
    },
    /// `peak * exp(-2 r^2 / waist^2)` around `center`.
    Gaussian {
        center: [f64; 2],
        waist: f64,
        peak: f64,
    },
}

impl ExcitationField {
    pub fn intensity_at(&self, x: f64, y: f64) -> f64 {
        match *self {
            ExcitationField::Uniform { intensity } => intensity,
            ExcitationField::Gaussian {
                center,
                waist,
                peak,
            } => {
                let dx = x - center[0];
                let dy = y - center[1];
                peak * libm::exp(-2.0 * (dx * dx + dy * dy) / (waist * waist))
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            ExcitationField::Uniform { intensity } => intensity.is_finite() && intensity >= 0.0,
            ExcitationField::Gaussian {
                center,
                waist,
                peak,
            } => {
                center.iter().all(|c| c.is_finite())
                    && waist.is_finite()
                    && waist > 0.0
                    && peak.is_finite()
                    && peak >= 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid excitation field {self:?}")))
        }
    }

    fn digest(&self, d: Digest) -> Digest {
        match *self {
            ExcitationField::Uniform { intensity } => d.word(1).real(intensity),
            ExcitationField::Gaussian {
                center,
                waist,
                peak,
            } => d
                .word(2)
                .real(center[0])
                .real(center[1])
                .real(waist)
                .real(peak),
        }
    }
}

impl Default for ExcitationField {
    fn default() -> Self {
        ExcitationField::Uniform { intensity: 1.0 }
    }
}

/// One object: a single emitter or a cluster sharing a position.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct ObjectSpec {
    /// Field-A image center, superpixels.
    pub center: [f64; 2],
    pub emitters: Vec<EmitterParams>,
    /// Gaussian PSF width, superpixels.
    pub psf_sigma: f64,
    /// Emitters share one radiation mode. Direct photon counting sees the same
    /// photon-number statistics either way; the flag is carried as metadata.
    #[cfg_attr(feature = "serde", serde(default))]
    pub same_mode: bool,
}

impl ObjectSpec {
    pub fn cluster(center: [f64; 2], emitter: EmitterParams, m: usize, psf_sigma: f64) -> Self {
        Self {
            center,
            emitters: alloc::vec![emitter; m],
            psf_sigma,
            same_mode: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct SceneSpec {
    pub grid_width: u32,
    pub grid_height: u32,
    pub objects: Vec<ObjectSpec>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub excitation: ExcitationField,
    /// `alpha` in `I~ = alpha I`.
    #[cfg_attr(feature = "serde", serde(default = "one"))]
    pub normalization_alpha: f64,
}

#[cfg(feature = "serde")]
fn one() -> f64 {
    1.0
}

impl SceneSpec {
    /// Normalized excitation intensity `I~ = alpha I` at a position.
    pub fn normalized_intensity(&self, x: f64, y: f64) -> f64 {
        self.normalization_alpha * self.excitation.intensity_at(x, y)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_width == 0
            || self.grid_height == 0
            || self.grid_width > MAX_GRID
            || self.grid_height > MAX_GRID
        {
            return Err(Error::config(format!(
                "grid {}x{} must be between 1 and {MAX_GRID} superpixels per side",
                self.grid_width, self.grid_height
            )));
        }
        self.excitation.validate()?;
        if !(self.normalization_alpha.is_finite() && self.normalization_alpha > 0.0) {
            return Err(Error::config("normalization_alpha must be positive"));
        }
        for (i, obj) in self.objects.iter().enumerate() {
            if obj.emitters.is_empty() {
                return Err(Error::config(format!("object {i} has no emitters")));
            }
            if !(obj.psf_sigma.is_finite() && obj.psf_sigma >= 0.0) {
                return Err(Error::config(format!("object {i}: psf_sigma must be >= 0")));
            }
            let [x, y] = obj.center;
            if !(x >= 0.0 && y >= 0.0 && x < self.grid_width as f64 && y < self.grid_height as f64)
            {
                return Err(Error::config(format!(
                    "object {i} at ({x}, {y}) lies outside the {}x{} grid",
                    self.grid_width, self.grid_height
                )));
            }
            for (j, e) in obj.emitters.iter().enumerate() {
                e.validate()
                    .map_err(|err| Error::config(format!("object {i} emitter {j}: {err}")))?;
            }
        }
        Ok(())
    }

    /// Order-sensitive digest of every field.
    pub fn digest(&self) -> u64 {
        let mut d = Digest::new()
            .word(self.grid_width as u64)
            .word(self.grid_height as u64)
            .real(self.normalization_alpha);
        d = self.excitation.digest(d);
        for obj in &self.objects {
            d = d
                .real(obj.center[0])
                .real(obj.center[1])
                .real(obj.psf_sigma)
                .word(obj.same_mode as u64)
                .word(obj.emitters.len() as u64);
            for e in &obj.emitters {
                d = d
                    .real(e.decay_rate_k)
                    .real(e.two_photon_prob_p)
                    .real(e.brightness_coeff)
                    .real(e.blink_on_rate)
                    .real(e.blink_off_rate)
                    .real(e.bleach_rate);
                d = match &e.excitation {
                    Excitation::Continuous => d.word(0),
                    Excitation::Pulsed { photon_number } => photon_number
                        .probs()
                        .iter()
                        .fold(d.word(1), |d, p| d.real(*p)),
                };
            }
        }
        d.finish()
    }
}

/// Analog readout versus photon-counting (binary) output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum StackMode {
    #[default]
    Binary,
    Analog,
}

impl StackMode {
    pub fn name(self) -> &'static str {
        match self {
            StackMode::Binary => "binary",
            StackMode::Analog => "analog",
        }
    }
}

/// Gated, binned camera behind a beamsplitter that forms two images.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct CameraConfig {
    pub mode: StackMode,
    pub gate: GateConfig,
    /// Physical pixels per superpixel edge. Metadata only.
    pub binning: u32,
    pub quantum_efficiency: f64,
    /// Noise events per superpixel per gate. In analog mode these are noise
    /// readouts above the storage floor.
    pub dark_event_rate: f64,
    pub readout_photon_mean: f64,
    pub readout_photon_sd: f64,
    pub readout_empty_mean: f64,
    pub readout_empty_sd: f64,
    /// Fraction of photons routed to field A.
    pub splitter_ratio: f64,
    /// Position of the field-B image relative to field A, superpixels.
    pub image_offset_b: [f64; 2],
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            mode: StackMode::Binary,
            gate: GateConfig::default(),
            binning: 4,
            quantum_efficiency: 1.0,
            dark_event_rate: 0.0,
            readout_photon_mean: 900.0,
            readout_photon_sd: 100.0,
            readout_empty_mean: 640.0,
            readout_empty_sd: 30.0,
            splitter_ratio: 0.5,
            image_offset_b: [32.0, 0.0],
        }
    }
}

impl CameraConfig {
    pub fn validate(&self) -> Result<()> {
        self.gate
            .validate()
            .map_err(|e| Error::config(format!("camera gate: {e}")))?;
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        unit("quantum_efficiency", self.quantum_efficiency)?;
        unit("splitter_ratio", self.splitter_ratio)?;
        if !(self.dark_event_rate.is_finite() && self.dark_event_rate >= 0.0) {
            return Err(Error::config("dark_event_rate must be >= 0"));
        }
        if self.binning == 0 {
            return Err(Error::config("binning must be >= 1"));
        }
        if !(self.readout_photon_mean > 0.0 && self.readout_empty_mean > 0.0) {
            return Err(Error::config("readout means must be positive"));
        }
        if !(self.readout_photon_sd >= 0.0 && self.readout_empty_sd >= 0.0) {
            return Err(Error::config("readout spreads must be >= 0"));
        }
        if !self.image_offset_b.iter().all(|v| v.is_finite()) {
            return Err(Error::config("image_offset_b must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum DriftKind {
    #[default]
    None,
    RandomWalk,
}

/// Slow rigid displacement of the whole image and the control frames used
/// to track it.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct DriftModel {
    pub kind: DriftKind,
    /// Per-axis random-walk step, superpixels per frame.
    pub step_sd: f64,
    /// Standard frames between control frames.
    pub control_frame_interval: u64,
    /// Gates summed into one control frame.
    pub control_exposure: u64,
}

impl Default for DriftModel {
    fn default() -> Self {
        Self {
            kind: DriftKind::None,
            step_sd: 0.0,
            control_frame_interval: 10_000,
            control_exposure: 10_000,
        }
    }
}

impl DriftModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_sd.is_finite() && self.step_sd >= 0.0) {
            return Err(Error::config("drift step_sd must be >= 0"));
        }
        if self.control_frame_interval == 0 {
            return Err(Error::config("control_frame_interval must be > 0"));
        }
        if self.control_exposure == 0 {
            return Err(Error::config("control_exposure must be > 0"));
        }
        Ok(())
    }

    /// Displacement no realistic walk exceeds over `n_frames` (5 sigma).
    pub fn max_excursion(&self, n_frames: u64) -> f64 {
        match self.kind {
            DriftKind::None => 0.0,
            DriftKind::RandomWalk => 5.0 * self.step_sd * libm::sqrt(n_frames as f64),
        }
    }
}
