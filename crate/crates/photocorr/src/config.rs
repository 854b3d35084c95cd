//! TOML run configurations and region files.

use std::fs;
use std::path::{Path, PathBuf};

use photocorr_core::model::{EmitterParams, PhotonNumberDist};
use photocorr_core::sim::{CameraConfig, DriftModel, ExcitationField, ObjectSpec, SceneSpec};
use serde::Deserialize;

use crate::error::{Error, Result};

fn one() -> f64 {
    1.0
}

fn default_psf() -> f64 {
    1.0
}

/// An object in a configuration file. Emitters are listed explicitly in
/// `emitters`, or given once in `emitter` and repeated `count` times.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectConfig {
    pub center: [f64; 2],
    #[serde(default = "default_psf")]
    pub psf_sigma: f64,
    #[serde(default)]
    pub same_mode: bool,
    #[serde(default)]
    pub emitters: Vec<EmitterParams>,
    pub emitter: Option<EmitterParams>,
    pub count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub grid_width: u32,
    pub grid_height: u32,
    #[serde(default)]
    pub excitation: ExcitationField,
    #[serde(default = "one")]
    pub normalization_alpha: f64,
    #[serde(default)]
    pub objects: Vec<ObjectConfig>,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub seed: Option<u64>,
    pub frames: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    pub baseline_lag: Option<usize>,
    pub thresholds: Option<Vec<f64>>,
    pub gates: Option<Vec<f64>>,
    /// `"auto"` or a region file path, relative to the configuration file.
    pub regions: Option<String>,
    pub group_boundaries: Option<Vec<f64>>,
    /// Object analyzed by the threshold sweep.
    pub object: Option<u32>,
    /// Correct region positions for drift using the control frames.
    pub drift_correction: Option<bool>,
}

/// Two-detector time-tag recording used by the decay fit.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HbtSection {
    pub emitter: EmitterParams,
    #[serde(default = "one_usize")]
    pub emitters: usize,
    #[serde(default = "one")]
    pub efficiency: f64,
    pub duration_ns: f64,
    #[serde(default = "one")]
    pub bin_width_ns: f64,
    pub window_ns: Option<f64>,
}

fn one_usize() -> usize {
    1
}

/// Photon-number distribution for the nonclassicality report.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionSection {
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scene: Option<SceneConfig>,
    #[serde(default)]
    pub camera: CameraConfig,
    #[serde(default)]
    pub drift: DriftModel,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    pub hbt: Option<HbtSection>,
    pub distribution: Option<DistributionSection>,
    #[serde(skip)]
    pub path: PathBuf,
}

impl ObjectConfig {
    fn to_spec(&self, index: usize) -> std::result::Result<ObjectSpec, String> {
        let mut emitters = self.emitters.clone();
        match (&self.emitter, self.count) {
            (Some(e), count) => emitters.extend(std::iter::repeat_n(e.clone(), count.unwrap_or(1))),
            (None, Some(_)) => {
                return Err(format!("scene.objects[{index}]: `count` needs `emitter`"));
            }
            (None, None) => {}
        }
        Ok(ObjectSpec {
            center: self.center,
            emitters,
            psf_sigma: self.psf_sigma,
            same_mode: self.same_mode,
        })
    }
}

impl SceneConfig {
    pub fn to_spec(&self) -> std::result::Result<SceneSpec, String> {
        let objects = self
            .objects
            .iter()
            .enumerate()
            .map(|(i, o)| o.to_spec(i))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(SceneSpec {
            grid_width: self.grid_width,
            grid_height: self.grid_height,
            objects,
            excitation: self.excitation.clone(),
            normalization_alpha: self.normalization_alpha,
        })
    }
}

impl RunConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config {
            path: path.to_owned(),
            message: e.to_string().trim_end().to_owned(),
        })?;
        cfg.path = path.to_owned();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::parse(&text, path)
    }

    fn invalid(&self, message: impl Into<String>) -> Error {
        Error::Config {
            path: self.path.clone(),
            message: message.into(),
        }
    }

    /// Scene, validated together with the camera and drift sections.
    pub fn scene_spec(&self) -> Result<SceneSpec> {
        let scene = self
            .scene
            .as_ref()
            .ok_or_else(|| self.invalid("missing [scene] section"))?;
        let spec = scene.to_spec().map_err(|m| self.invalid(m))?;
        spec.validate()
            .map_err(|e| self.invalid(format!("[scene]: {e}")))?;
        self.camera
            .validate()
            .map_err(|e| self.invalid(format!("[camera]: {e}")))?;
        self.drift
            .validate()
            .map_err(|e| self.invalid(format!("[drift]: {e}")))?;
        Ok(spec)
    }

    pub fn hbt(&self) -> Result<&HbtSection> {
        self.hbt
            .as_ref()
            .ok_or_else(|| self.invalid("missing [hbt] section"))
    }

    pub fn distribution(&self) -> Result<PhotonNumberDist> {
        let d = self
            .distribution
            .as_ref()
            .ok_or_else(|| self.invalid("missing [distribution] section"))?;
        PhotonNumberDist::new(d.probs.clone())
            .map_err(|e| self.invalid(format!("[distribution] probs: {e}")))
    }

    /// Resolves a path written in the configuration relative to its file.
    pub fn relative(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_owned()
        } else {
            self.path.parent().unwrap_or(Path::new(".")).join(p)
        }
    }
}

/// Inclusive rectangle `[x0, y0, x1, y1]`.
pub type Rect = [u16; 4];

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionEntry {
    pub id: u32,
    pub a: Rect,
    /// Defaults to `a` moved by the camera's field-B offset.
    pub b: Option<Rect>,
    pub noise: Option<Rect>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionFile {
    #[serde(default)]
    pub object: Vec<RegionEntry>,
}

fn rect_pixels(r: Rect) -> Vec<photocorr_core::sim::Pixel> {
    let mut v = Vec::new();
    for y in r[1]..=r[3] {
        for x in r[0]..=r[2] {
            v.push(photocorr_core::sim::Pixel::new(x, y));
        }
    }
    v
}

impl RegionFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config {
            path: path.to_owned(),
            message: e.to_string().trim_end().to_owned(),
        })
    }

    pub fn regions(
        &self,
        offset_b: [f64; 2],
        path: &Path,
    ) -> Result<Vec<photocorr_core::estimators::ObjectRegion>> {
        let off = [offset_b[0].round() as i64, offset_b[1].round() as i64];
        self.object
            .iter()
            .map(|e| {
                let bad = |m: String| Error::Config {
                    path: path.to_owned(),
                    message: format!("object {}: {m}", e.id),
                };
                for r in [Some(e.a), e.b, e.noise].into_iter().flatten() {
                    if r[0] > r[2] || r[1] > r[3] {
                        return Err(bad(format!("rectangle {r:?} has x0 > x1 or y0 > y1")));
                    }
                }
                let b = match e.b {
                    Some(b) => b,
                    None => {
                        let shifted = [
                            e.a[0] as i64 + off[0],
                            e.a[1] as i64 + off[1],
                            e.a[2] as i64 + off[0],
                            e.a[3] as i64 + off[1],
                        ];
                        if shifted.iter().any(|&v| !(0..=u16::MAX as i64).contains(&v)) {
                            return Err(bad("field-B rectangle falls outside the grid".into()));
                        }
                        shifted.map(|v| v as u16)
                    }
                };
                Ok(photocorr_core::estimators::ObjectRegion {
                    id: e.id,
                    region_a: rect_pixels(e.a),
                    region_b: rect_pixels(b),
                    noise: e.noise.map(rect_pixels).unwrap_or_default(),
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_field_is_reported_with_position() {
        let text = "[scene]\ngrid_width = 10\ngrid_height = 10\ncolour = 3\n";
        let err = RunConfig::parse(text, Path::new("bad.toml")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bad.toml"), "{msg}");
        assert!(msg.contains("line 4"), "{msg}");
        assert!(msg.contains("colour"), "{msg}");
    }

    #[test]
    fn cluster_shorthand_expands() {
        let text = r#"
[scene]
grid_width = 80
grid_height = 40
[[scene.objects]]
center = [10.5, 10.5]
count = 3
emitter = { decay_rate_k = 0.1, two_photon_prob_p = 0.22, brightness_coeff = 0.01 }
"#;
        let cfg = RunConfig::parse(text, Path::new("c.toml")).unwrap();
        let scene = cfg.scene_spec().unwrap();
        assert_eq!(scene.objects[0].emitters.len(), 3);
        assert_eq!(scene.objects[0].psf_sigma, 1.0);
    }

    #[test]
    fn invalid_values_name_their_section() {
        let text =
            "[scene]\ngrid_width = 10\ngrid_height = 10\n[camera]\nquantum_efficiency = 1.5\n";
        let cfg = RunConfig::parse(text, Path::new("q.toml")).unwrap();
        let msg = cfg.scene_spec().unwrap_err().to_string();
        assert!(
            msg.contains("[camera]") && msg.contains("quantum_efficiency"),
            "{msg}"
        );
    }
}
