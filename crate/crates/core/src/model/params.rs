use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// How an emitter is driven during a gate.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "kebab-case"))]
pub enum Excitation {
    /// Continuous pumping at saturation. Emission follows a stationary
    /// process whose pair correlation is `1 - (1-p) exp(-k|tau|)`.
    #[default]
    Continuous,
    /// One excitation pulse at the start of each gate; the number of emitted
    /// photons is drawn from `photon_number`.
    Pulsed { photon_number: PhotonNumberDist },
}

/// Stochastic model of one emitter.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct EmitterParams {
    /// Recovery rate `k` of the pair correlation, 1/ns.
    pub decay_rate_k: f64,
    /// Two-photon probability `p`, the zero-delay value of the pair correlation.
    pub two_photon_prob_p: f64,
    /// Collected photons per ns per unit normalized excitation intensity.
    pub brightness_coeff: f64,
    /// Off -> on switching rate, 1/s.
    #[cfg_attr(feature = "serde", serde(default))]
    pub blink_on_rate: f64,
    /// On -> off switching rate, 1/s.
    #[cfg_attr(feature = "serde", serde(default))]
    pub blink_off_rate: f64,
    /// Irreversible bleaching rate, 1/s.
    #[cfg_attr(feature = "serde", serde(default))]
    pub bleach_rate: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub excitation: Excitation,
}

impl EmitterParams {
    /// A continuously driven emitter with no blinking or bleaching.
    pub fn new(decay_rate_k: f64, two_photon_prob_p: f64, brightness_coeff: f64) -> Self {
        Self {
            decay_rate_k,
            two_photon_prob_p,
            brightness_coeff,
            blink_on_rate: 0.0,
            blink_off_rate: 0.0,
            bleach_rate: 0.0,
            excitation: Excitation::Continuous,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.decay_rate_k.is_finite() && self.decay_rate_k > 0.0) {
            return Err(Error::param(format!(
                "decay rate k must be positive, got {}",
                self.decay_rate_k
            )));
        }
        if !(0.0..=1.0).contains(&self.two_photon_prob_p) {
            return Err(Error::param(format!(
                "two-photon probability p must lie in [0, 1], got {}",
                self.two_photon_prob_p
            )));
        }
        for (name, v) in [
            ("brightness_coeff", self.brightness_coeff),
            ("blink_on_rate", self.blink_on_rate),
            ("blink_off_rate", self.blink_off_rate),
            ("bleach_rate", self.bleach_rate),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::param(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Camera gate timing.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct GateConfig {
    /// Gate width `T_g`, ns.
    pub gate_width_ns: f64,
    /// Time between successive gates, ms.
    pub frame_period_ms: f64,
}

impl GateConfig {
    pub fn new(gate_width_ns: f64, frame_period_ms: f64) -> Self {
        Self {
            gate_width_ns,
            frame_period_ms,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gate_width_ns.is_finite() && self.gate_width_ns > 0.0) {
            return Err(Error::param(format!(
                "gate width must be positive, got {} ns",
                self.gate_width_ns
            )));
        }
        if !(self.frame_period_ms.is_finite() && self.frame_period_ms * 1e6 > self.gate_width_ns) {
            return Err(Error::param(format!(
                "frame period {} ms must exceed the gate width {} ns",
                self.frame_period_ms, self.gate_width_ns
            )));
        }
        Ok(())
    }
}

impl Default for GateConfig {
    /// 10 ns gates at 30 Hz.
    fn default() -> Self {
        Self::new(10.0, 1000.0 / 30.0)
    }
}

/// Finite photon-number distribution `p_0 .. p_max`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "Vec<f64>", into = "Vec<f64>"))]
pub struct PhotonNumberDist {
    probs: Vec<f64>,
}

impl PhotonNumberDist {
    pub const SUM_TOLERANCE: f64 = 1e-12;

    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::param("photon-number distribution is empty"));
        }
        if let Some((k, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !(p.is_finite() && **p >= 0.0))
        {
            return Err(Error::param(format!("p_{k} = {p} is not a probability")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::param(format!("probabilities sum to {sum}, not 1")));
        }
        Ok(Self { probs })
    }

    /// Point mass on `n` photons.
    pub fn fock(n: usize) -> Self {
        let mut probs = alloc::vec![0.0; n + 1];
        probs[n] = 1.0;
        Self { probs }
    }

    /// Empirical distribution from a histogram of per-frame counts.
    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::InsufficientCounts("empty histogram".into()));
        }
        let total = total as f64;
        Self::new(counts.iter().map(|&c| c as f64 / total).collect())
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// `p_k`, zero beyond the stored support.
    pub fn get(&self, k: usize) -> f64 {
        self.probs.get(k).copied().unwrap_or(0.0)
    }

    pub fn max_photons(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn mean(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(k, p)| k as f64 * p)
            .sum()
    }

    /// Distribution of the sum of two independent photon numbers.
    pub fn convolve(&self, other: &Self) -> Self {
        let mut out = alloc::vec![0.0; self.probs.len() + other.probs.len() - 1];
        for (i, a) in self.probs.iter().enumerate() {
            for (j, b) in other.probs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Self { probs: out }
    }
}

impl TryFrom<Vec<f64>> for PhotonNumberDist {
    type Error = Error;

    fn try_from(probs: Vec<f64>) -> Result<Self> {
        Self::new(probs)
    }
}

impl From<PhotonNumberDist> for Vec<f64> {
    fn from(d: PhotonNumberDist) -> Self {
        d.probs
    }
}

/// Beamsplitter model of a finite detection efficiency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossChannel {
    efficiency: f64,
}

impl LossChannel {
    pub fn new(efficiency: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&efficiency) {
            return Err(Error::param(format!(
                "efficiency must lie in [0, 1], got {efficiency}"
            )));
        }
        Ok(Self { efficiency })
    }

    pub fn efficiency(&self) -> f64 {
        self.efficiency
    }

    /// Transmission amplitude `t = sqrt(eta)`.
    pub fn transmission(&self) -> f64 {
        libm::sqrt(self.efficiency)
    }

    /// Reflection amplitude `r = sqrt(1 - eta)`.
    pub fn reflection(&self) -> f64 {
        libm::sqrt(1.0 - self.efficiency)
    }
}
