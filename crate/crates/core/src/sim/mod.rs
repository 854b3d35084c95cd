//! Seeded Monte Carlo generation of gated camera frames.

mod emitter;
mod engine;
mod hbt;
pub mod rng;
mod scene;
mod stack;

pub use emitter::{simulate_gate_photons, EmissionProcess, EmitterTrajectory, GateSampler};
pub use engine::{push_scratch, simulate_stack, FrameScratch, Simulation};
pub use hbt::{simulate_time_tags, TimeTags};
pub use scene::{
    CameraConfig, DriftKind, DriftModel, ExcitationField, ObjectSpec, SceneSpec, StackMode,
    MAX_GRID,
};
pub use stack::{ControlFrame, Frame, FrameStack, Pixel, Readout, StackMeta};
