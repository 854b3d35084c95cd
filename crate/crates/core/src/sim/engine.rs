//! Frame-stack generation.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use super::emitter::{EmitterTrajectory, GateSampler};
use super::rng::{self, substream};
use super::scene::{CameraConfig, DriftKind, DriftModel, SceneSpec, StackMode};
use super::stack::{ControlFrame, FrameStack, Pixel, Readout, StackMeta};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
struct EmitterSlot {
    object: usize,
    sampler: GateSampler,
    trajectory: EmitterTrajectory,
}

#[derive(Debug, Clone, Copy)]
struct Hit {
    key: u32,
    photon: bool,
    signal: f32,
}

/// Reusable per-thread buffers for [`Simulation::simulate_frame`].
#[derive(Debug, Default, Clone)]
pub struct FrameScratch {
    times: Vec<f64>,
    hits: Vec<Hit>,
    pub pixels: Vec<Pixel>,
    pub readouts: Vec<Readout>,
}

/// A configured acquisition. Every frame is a pure function of the
/// configuration, the master seed and the frame index, so frames may be
/// generated in any order or in parallel.
#[derive(Debug, Clone)]
pub struct Simulation {
    scene: SceneSpec,
    camera: CameraConfig,
    drift: DriftModel,
    n_frames: u64,
    seed: u64,
    emitters: Vec<EmitterSlot>,
    drift_path: Vec<[f64; 2]>,
    noise: Option<Poisson<f64>>,
}

impl Simulation {
    pub fn new(
        scene: &SceneSpec,
        camera: &CameraConfig,
        drift: &DriftModel,
        n_frames: u64,
        seed: u64,
    ) -> Result<Self> {
        scene.validate()?;
        camera.validate()?;
        drift.validate()?;
        if n_frames == 0 {
            return Err(Error::param("at least one frame is required"));
        }
        let (w, h) = (scene.grid_width as f64, scene.grid_height as f64);
        let bound = drift.max_excursion(n_frames);
        for (i, obj) in scene.objects.iter().enumerate() {
            let [x, y] = obj.center;
            let [bx, by] = [x + camera.image_offset_b[0], y + camera.image_offset_b[1]];
            for (fx, fy, field) in [(x, y, "A"), (bx, by, "B")] {
                if fx - bound < 0.0 || fy - bound < 0.0 || fx + bound >= w || fy + bound >= h {
                    return Err(Error::config(format!(
                        "object {i} field-{field} image at ({fx}, {fy}) can leave the grid \
                         (drift bound {bound:.3})"
                    )));
                }
            }
        }

        let duration_s = n_frames as f64 * camera.gate.frame_period_ms * 1e-3;
        let mut emitters = Vec::new();
        for (i, obj) in scene.objects.iter().enumerate() {
            let intensity = scene.normalized_intensity(obj.center[0], obj.center[1]);
            for e in &obj.emitters {
                let g = emitters.len();
                let sampler = GateSampler::new(e, &camera.gate, intensity)
                    .map_err(|err| Error::config(format!("object {i}: {err}")))?;
                let mut rng = substream(seed, rng::blink_domain(g), 0);
                let trajectory = EmitterTrajectory::sample(e, duration_s, &mut rng);
                emitters.push(EmitterSlot {
                    object: i,
                    sampler,
                    trajectory,
                });
            }
        }

        let drift_path = match drift.kind {
            DriftKind::RandomWalk if drift.step_sd > 0.0 => {
                let mut rng = substream(seed, rng::DOMAIN_DRIFT, 0);
                let mut pos = [0.0, 0.0];
                let mut path = Vec::with_capacity(n_frames as usize);
                for _ in 0..n_frames {
                    path.push(pos);
                    pos[0] += drift.step_sd * rng.sample::<f64, _>(StandardNormal);
                    pos[1] += drift.step_sd * rng.sample::<f64, _>(StandardNormal);
                }
                path
            }
            _ => Vec::new(),
        };

        let noise_mean = camera.dark_event_rate * w * h;
        let noise = if noise_mean > 0.0 {
            Some(Poisson::new(noise_mean).map_err(|e| Error::config(format!("{e}")))?)
        } else {
            None
        };

        Ok(Self {
            scene: scene.clone(),
            camera: camera.clone(),
            drift: drift.clone(),
            n_frames,
            seed,
            emitters,
            drift_path,
            noise,
        })
    }

    pub fn frame_count(&self) -> u64 {
        self.n_frames
    }

    pub fn scene(&self) -> &SceneSpec {
        &self.scene
    }

    pub fn camera(&self) -> &CameraConfig {
        &self.camera
    }

    /// Global image displacement during `frame`.
    pub fn drift_offset(&self, frame: u64) -> [f64; 2] {
        self.drift_path
            .get(frame as usize)
            .copied()
            .unwrap_or([0.0, 0.0])
    }

    /// Expected detected photons per gate from one object, both fields,
    /// before losses at the grid edge.
    pub fn expected_object_events(&self, object: usize) -> f64 {
        self.emitters
            .iter()
            .filter(|s| s.object == object)
            .map(|s| s.sampler.mean_collected())
            .sum::<f64>()
            * self.camera.quantum_efficiency
    }

    /// Metadata without control frames.
    pub fn meta(&self) -> StackMeta {
        StackMeta {
            mode: self.camera.mode,
            grid_width: self.scene.grid_width,
            grid_height: self.scene.grid_height,
            camera: self.camera.clone(),
            drift: self.drift.clone(),
            seed: self.seed,
            scene_digest: self.scene.digest(),
            excitation: self.scene.excitation.clone(),
            normalization_alpha: self.scene.normalization_alpha,
            threshold: None,
            control_frames: Vec::new(),
        }
    }

    /// Generates frame `frame` into `scratch.pixels` (binary mode) or
    /// `scratch.readouts` (analog mode), sorted by `(y, x)`.
    pub fn simulate_frame(&self, frame: u64, scratch: &mut FrameScratch) {
        let cam = &self.camera;
        let analog = cam.mode == StackMode::Analog;
        let (w, h) = (self.scene.grid_width, self.scene.grid_height);
        let t_s = frame as f64 * cam.gate.frame_period_ms * 1e-3;
        let [dx, dy] = self.drift_offset(frame);
        scratch.hits.clear();

        for (g, slot) in self.emitters.iter().enumerate() {
            if !slot.trajectory.is_on(t_s) {
                continue;
            }
            let mut rng = substream(self.seed, rng::emitter_domain(g), frame);
            slot.sampler.sample(&mut rng, &mut scratch.times);
            if scratch.times.is_empty() {
                continue;
            }
            let obj = &self.scene.objects[slot.object];
            for _ in 0..scratch.times.len() {
                if cam.quantum_efficiency < 1.0 && rng.random::<f64>() >= cam.quantum_efficiency {
                    continue;
                }
                let mut x = obj.center[0] + dx;
                let mut y = obj.center[1] + dy;
                if rng.random::<f64>() >= cam.splitter_ratio {
                    x += cam.image_offset_b[0];
                    y += cam.image_offset_b[1];
                }
                if obj.psf_sigma > 0.0 {
                    x += obj.psf_sigma * rng.sample::<f64, _>(StandardNormal);
                    y += obj.psf_sigma * rng.sample::<f64, _>(StandardNormal);
                }
                if !(x >= 0.0 && y >= 0.0 && x < w as f64 && y < h as f64) {
                    continue;
                }
                let signal = if analog {
                    (cam.readout_photon_mean
                        + cam.readout_photon_sd * rng.sample::<f64, _>(StandardNormal))
                        as f32
                } else {
                    0.0
                };
                scratch.hits.push(Hit {
                    key: Pixel::new(x as u16, y as u16).key(),
                    photon: true,
                    signal,
                });
            }
        }

        if let Some(noise) = &self.noise {
            let mut rng = substream(self.seed, rng::DOMAIN_NOISE, frame);
            let n = noise.sample(&mut rng) as u64;
            for _ in 0..n {
                let x = rng.random_range(0..w) as u16;
                let y = rng.random_range(0..h) as u16;
                let signal = if analog {
                    (cam.readout_empty_mean
                        + cam.readout_empty_sd * rng.sample::<f64, _>(StandardNormal))
                        as f32
                } else {
                    0.0
                };
                scratch.hits.push(Hit {
                    key: Pixel::new(x, y).key(),
                    photon: false,
                    signal,
                });
            }
        }

        // photon hits first within a superpixel
        scratch
            .hits
            .sort_unstable_by_key(|h| (h.key, !h.photon, h.signal.to_bits()));
        scratch.pixels.clear();
        scratch.readouts.clear();
        let pedestal = cam.readout_empty_mean as f32;
        let mut i = 0;
        while i < scratch.hits.len() {
            let key = scratch.hits[i].key;
            let mut j = i;
            let mut signal = 0.0f32;
            let mut photons = 0;
            while j < scratch.hits.len() && scratch.hits[j].key == key {
                if scratch.hits[j].photon {
                    signal += scratch.hits[j].signal - pedestal;
                    photons += 1;
                }
                j += 1;
            }
            let pixel = Pixel::new((key & 0xffff) as u16, (key >> 16) as u16);
            if analog {
                let signal = if photons > 0 {
                    pedestal + signal
                } else {
                    scratch.hits[i].signal
                };
                scratch.readouts.push(Readout { pixel, signal });
            } else {
                scratch.pixels.push(pixel);
            }
            i = j;
        }
    }

    /// Long-exposure count map summing `accumulate` gates at the scene
    /// position of `frame`. Counts are Poisson around the expected
    /// intensity, which is exact for a sum of many independent gates.
    pub fn render_control_frame(&self, frame: u64, accumulate: u64) -> ControlFrame {
        let cam = &self.camera;
        let (w, h) = (
            self.scene.grid_width as usize,
            self.scene.grid_height as usize,
        );
        let mut expected = alloc::vec![cam.dark_event_rate * accumulate as f64; w * h];
        let t_s = frame as f64 * cam.gate.frame_period_ms * 1e-3;
        let [dx, dy] = self.drift_offset(frame);
        for slot in &self.emitters {
            if !slot.trajectory.is_on(t_s) {
                continue;
            }
            let obj = &self.scene.objects[slot.object];
            let total = slot.sampler.mean_collected() * cam.quantum_efficiency * accumulate as f64;
            let cx = obj.center[0] + dx;
            let cy = obj.center[1] + dy;
            let fields = [
                (cx, cy, cam.splitter_ratio),
                (
                    cx + cam.image_offset_b[0],
                    cy + cam.image_offset_b[1],
                    1.0 - cam.splitter_ratio,
                ),
            ];
            for (fx, fy, share) in fields {
                deposit_gaussian(&mut expected, w, h, fx, fy, obj.psf_sigma, total * share);
            }
        }
        let index = frame / self.drift.control_frame_interval;
        let mut rng = substream(self.seed, rng::DOMAIN_CONTROL, index);
        let counts = expected
            .iter()
            .map(|&lambda| {
                if lambda > 0.0 {
                    Poisson::new(lambda)
                        .map(|d| d.sample(&mut rng) as u32)
                        .unwrap_or(0)
                } else {
                    0
                }
            })
            .collect();
        ControlFrame {
            frame_index: frame,
            counts,
        }
    }

    /// One control frame at the start of every segment.
    pub fn control_frames(&self) -> Vec<ControlFrame> {
        let interval = self.drift.control_frame_interval;
        (0..self.n_frames.div_ceil(interval))
            .map(|j| self.render_control_frame(j * interval, self.drift.control_exposure))
            .collect()
    }

    /// Sequential generation of the whole stack, control frames included.
    pub fn run(&self) -> FrameStack {
        let mut meta = self.meta();
        meta.control_frames = self.control_frames();
        let mut stack = FrameStack::new(meta);
        let mut scratch = FrameScratch::default();
        for frame in 0..self.n_frames {
            self.simulate_frame(frame, &mut scratch);
            push_scratch(&mut stack, &scratch);
        }
        stack
    }
}

/// Appends the frame held in `scratch` to `stack`.
pub fn push_scratch(stack: &mut FrameStack, scratch: &FrameScratch) {
    let res = match stack.mode() {
        StackMode::Binary => stack.push_binary(&scratch.pixels),
        StackMode::Analog => stack.push_analog(&scratch.readouts),
    };
    res.expect("simulated frames are sorted, unique and inside the grid");
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * core::f64::consts::FRAC_1_SQRT_2)
}

/// Adds `total` photons spread by a Gaussian PSF centered at `(cx, cy)`.
fn deposit_gaussian(map: &mut [f64], w: usize, h: usize, cx: f64, cy: f64, sigma: f64, total: f64) {
    if sigma == 0.0 {
        if cx >= 0.0 && cy >= 0.0 && cx < w as f64 && cy < h as f64 {
            map[cy as usize * w + cx as usize] += total;
        }
        return;
    }
    let reach = 8.0 * sigma + 1.0;
    let x0 = libm::floor(cx - reach).max(0.0) as usize;
    let x1 = (libm::ceil(cx + reach).max(0.0) as usize).min(w);
    let y0 = libm::floor(cy - reach).max(0.0) as usize;
    let y1 = (libm::ceil(cy + reach).max(0.0) as usize).min(h);
    let share = |lo: f64, c: f64| normal_cdf((lo + 1.0 - c) / sigma) - normal_cdf((lo - c) / sigma);
    for y in y0..y1 {
        let fy = share(y as f64, cy);
        for x in x0..x1 {
            map[y * w + x] += total * fy * share(x as f64, cx);
        }
    }
}

/// Simulates a complete stack.
pub fn simulate_stack(
    scene: &SceneSpec,
    camera: &CameraConfig,
    drift: &DriftModel,
    n_frames: u64,
    seed: u64,
) -> Result<FrameStack> {
    Ok(Simulation::new(scene, camera, drift, n_frames, seed)?.run())
}
