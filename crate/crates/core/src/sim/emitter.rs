//! Stochastic emitter: photon emission within a gate, blinking and bleaching.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::model::{EmitterParams, Excitation, GateConfig};

/// Stationary two-state emission chain under continuous pumping.
///
/// The emitter is either excited or in the ground state. From the ground
/// state it is excited at rate `a`; from the excited state it emits at rate
/// `a` and, with probability `w`, is left excited (a second photon becomes
/// available immediately). With `a = (k + R p)/2`, `w = p a / k` and the
/// emission rate `R = k / (1 + sqrt(1-p))^2` the intervals between photons
/// form a renewal process whose pair correlation is exactly
/// `1 - (1-p) exp(-k |tau|)`. `R` is the largest rate for which such a chain
/// exists; it is taken as the saturated emission rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmissionProcess {
    rate: f64,
    transition_rate: f64,
    stay_excited: f64,
    excited_fraction: f64,
}

impl EmissionProcess {
    pub fn saturated(decay_rate_k: f64, two_photon_prob_p: f64) -> Self {
        let k = decay_rate_k;
        let p = two_photon_prob_p;
        let root = 1.0 + libm::sqrt(1.0 - p);
        let rate = k / (root * root);
        let transition_rate = 0.5 * (k + rate * p);
        let stay_excited = (p * transition_rate / k).min(1.0);
        Self {
            rate,
            transition_rate,
            stay_excited,
            excited_fraction: 1.0 / (2.0 - stay_excited),
        }
    }

    /// Mean emitted photons per ns.
    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Appends emission times in `[0, window_ns)` for a window that opens in
    /// the stationary state.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, window_ns: f64, out: &mut Vec<f64>) {
        let mut excited = rng.random::<f64>() < self.excited_fraction;
        let mut t = 0.0;
        loop {
            if !excited {
                t += rng.sample::<f64, _>(Exp1) / self.transition_rate;
            }
            t += rng.sample::<f64, _>(Exp1) / self.transition_rate;
            if t >= window_ns {
                return;
            }
            out.push(t);
            excited = self.stay_excited > 0.0 && rng.random::<f64>() < self.stay_excited;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Source {
    Continuous(EmissionProcess),
    Pulsed {
        cumulative: Vec<f64>,
        decay_rate_k: f64,
    },
}

/// Draws the collected photons of one emitter during one gate.
#[derive(Debug, Clone, PartialEq)]
pub struct GateSampler {
    source: Source,
    gate_ns: f64,
    collection: f64,
}

impl GateSampler {
    /// `intensity` is the normalized excitation intensity at the emitter.
    pub fn new(emitter: &EmitterParams, gate: &GateConfig, intensity: f64) -> Result<Self> {
        emitter.validate()?;
        gate.validate()?;
        if !(intensity.is_finite() && intensity >= 0.0) {
            return Err(Error::param(format!(
                "excitation intensity {intensity} is invalid"
            )));
        }
        let collected_per_gate = emitter.brightness_coeff * intensity * gate.gate_width_ns;
        let (source, emitted_per_gate) = match &emitter.excitation {
            Excitation::Continuous => {
                let process =
                    EmissionProcess::saturated(emitter.decay_rate_k, emitter.two_photon_prob_p);
                let emitted = process.rate() * gate.gate_width_ns;
                (Source::Continuous(process), emitted)
            }
            Excitation::Pulsed { photon_number } => {
                let mut acc = 0.0;
                let cumulative = photon_number
                    .probs()
                    .iter()
                    .map(|p| {
                        acc += p;
                        acc
                    })
                    .collect();
                let source = Source::Pulsed {
                    cumulative,
                    decay_rate_k: emitter.decay_rate_k,
                };
                (source, photon_number.mean())
            }
        };
        let collection = if collected_per_gate == 0.0 {
            0.0
        } else {
            collected_per_gate / emitted_per_gate
        };
        if !(collection <= 1.0 + 1e-12) {
            return Err(Error::config(format!(
                "brightness {} x intensity {} asks for {:.4} collected photons per gate, \
                 above the {:.4} the emitter can emit",
                emitter.brightness_coeff, intensity, collected_per_gate, emitted_per_gate
            )));
        }
        Ok(Self {
            source,
            gate_ns: gate.gate_width_ns,
            collection: collection.min(1.0),
        })
    }

    /// Expected collected photons per gate.
    pub fn mean_collected(&self) -> f64 {
        let emitted = match &self.source {
            Source::Continuous(p) => p.rate() * self.gate_ns,
            Source::Pulsed { cumulative, .. } => {
                let mut prev = 0.0;
                cumulative
                    .iter()
                    .enumerate()
                    .map(|(k, c)| {
                        let p = c - prev;
                        prev = *c;
                        k as f64 * p
                    })
                    .sum()
            }
        };
        emitted * self.collection
    }

    /// Replaces `out` with the sorted collected photon times of one gate.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<f64>) {
        out.clear();
        if self.collection == 0.0 {
            return;
        }
        match &self.source {
            Source::Continuous(process) => process.sample(rng, self.gate_ns, out),
            Source::Pulsed {
                cumulative,
                decay_rate_k,
            } => {
                let u: f64 = rng.random();
                let n = cumulative
                    .iter()
                    .position(|&c| u < c)
                    .unwrap_or(cumulative.len() - 1);
                // exponential decay after the pulse, truncated to the gate
                let span = -libm::expm1(-decay_rate_k * self.gate_ns);
                for _ in 0..n {
                    let v: f64 = rng.random();
                    out.push(-libm::log1p(-v * span) / decay_rate_k);
                }
                out.sort_by(f64::total_cmp);
            }
        }
        if self.collection < 1.0 {
            out.retain(|_| rng.random::<f64>() < self.collection);
        }
    }
}

/// Collected photon emission times (ns) of one gate for an emitter under
/// unit normalized excitation.
pub fn simulate_gate_photons<R: Rng + ?Sized>(
    emitter: &EmitterParams,
    gate: &GateConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let sampler = GateSampler::new(emitter, gate, 1.0)?;
    let mut out = Vec::new();
    sampler.sample(rng, &mut out);
    Ok(out)
}

/// On/off telegraph switching plus one-way bleaching, in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct EmitterTrajectory {
    initially_on: bool,
    toggles: Vec<f64>,
    bleached_at: f64,
}

impl EmitterTrajectory {
    pub fn always_on() -> Self {
        Self {
            initially_on: true,
            toggles: Vec::new(),
            bleached_at: f64::INFINITY,
        }
    }

    /// Draws a trajectory covering `[0, duration_s)`; the initial state is
    /// drawn from the stationary on-fraction.
    pub fn sample<R: Rng + ?Sized>(emitter: &EmitterParams, duration_s: f64, rng: &mut R) -> Self {
        let on_rate = emitter.blink_on_rate;
        let off_rate = emitter.blink_off_rate;
        let bleached_at = if emitter.bleach_rate > 0.0 {
            rng.sample::<f64, _>(Exp1) / emitter.bleach_rate
        } else {
            f64::INFINITY
        };
        if on_rate + off_rate == 0.0 {
            return Self {
                bleached_at,
                ..Self::always_on()
            };
        }
        let initially_on = rng.random::<f64>() < on_rate / (on_rate + off_rate);
        let mut toggles = Vec::new();
        let mut on = initially_on;
        let mut t = 0.0;
        let horizon = duration_s.min(bleached_at);
        loop {
            let leave_rate = if on { off_rate } else { on_rate };
            if leave_rate == 0.0 {
                break;
            }
            t += rng.sample::<f64, _>(Exp1) / leave_rate;
            if t >= horizon {
                break;
            }
            toggles.push(t);
            on = !on;
        }
        Self {
            initially_on,
            toggles,
            bleached_at,
        }
    }

    pub fn is_on(&self, t_s: f64) -> bool {
        if t_s >= self.bleached_at {
            return false;
        }
        let flips = self.toggles.partition_point(|&x| x <= t_s);
        self.initially_on ^ (flips % 2 == 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{g2_integrated, PhotonNumberDist};
    use crate::sim::rng::substream;

    /// Gate-integrated g2 from per-gate photon numbers, `<n(n-1)>/<n>^2`.
    fn gate_g2(sampler: &GateSampler, gates: u64, seed: u64) -> (f64, f64, f64) {
        let mut rng = substream(seed, 99, 0);
        let mut buf = Vec::new();
        let (mut s1, mut s2) = (0u64, 0u64);
        for _ in 0..gates {
            sampler.sample(&mut rng, &mut buf);
            let n = buf.len() as u64;
            s1 += n;
            s2 += n * n.saturating_sub(1);
        }
        let m1 = s1 as f64 / gates as f64;
        let m2 = s2 as f64 / gates as f64;
        let g = m2 / (m1 * m1);
        // Poisson error on the pair count dominates
        (g, g / libm::sqrt(s2 as f64 / 2.0), m1)
    }

    #[test]
    fn dark_emitter_emits_nothing() {
        let e = EmitterParams::new(0.1, 0.22, 0.0);
        let mut rng = substream(1, 1, 1);
        for _ in 0..1000 {
            assert!(simulate_gate_photons(&e, &GateConfig::default(), &mut rng)
                .unwrap()
                .is_empty());
        }
    }

    #[test]
    fn saturated_rate_limits() {
        let ideal = EmissionProcess::saturated(0.1, 0.0);
        assert!((ideal.rate() - 0.025).abs() < 1e-15);
        let poisson = EmissionProcess::saturated(0.1, 1.0);
        assert!((poisson.rate() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn collection_above_saturation_is_rejected() {
        let e = EmitterParams::new(0.1, 0.0, 0.03);
        assert!(matches!(
            GateSampler::new(&e, &GateConfig::default(), 1.0),
            Err(Error::Configuration(_))
        ));
    }

    #[test]
    fn gate_integrated_g2_matches_closed_form() {
        for &(p, t_gate) in &[(0.0, 10.0), (0.22, 10.0), (0.22, 40.0), (0.5, 5.0)] {
            let rate = EmissionProcess::saturated(0.1, p).rate();
            let e = EmitterParams::new(0.1, p, rate);
            let gate = GateConfig::new(t_gate, 33.3);
            let sampler = GateSampler::new(&e, &gate, 1.0).unwrap();
            let (g, sigma, mean) = gate_g2(&sampler, 1_000_000, 5);
            let expected = g2_integrated(&e, &gate).unwrap();
            assert!((mean - rate * t_gate).abs() < 0.01 * rate * t_gate + 0.002);
            assert!(
                (g - expected).abs() < 3.0 * sigma,
                "p={p} T={t_gate}: {g} +- {sigma} vs {expected}"
            );
        }
    }

    #[test]
    fn thinning_preserves_normalized_pairs() {
        let rate = EmissionProcess::saturated(0.1, 0.22).rate();
        let e = EmitterParams::new(0.1, 0.22, 0.5 * rate);
        let gate = GateConfig::new(10.0, 33.3);
        let sampler = GateSampler::new(&e, &gate, 1.0).unwrap();
        let (g, sigma, _) = gate_g2(&sampler, 2_000_000, 11);
        let expected = g2_integrated(&e, &gate).unwrap();
        assert!(
            (g - expected).abs() < 3.0 * sigma,
            "{g} +- {sigma} vs {expected}"
        );
    }

    #[test]
    fn pulsed_source_follows_its_photon_number() {
        let dist = PhotonNumberDist::new(alloc::vec![0.7, 0.2, 0.1]).unwrap();
        let mut e = EmitterParams::new(0.1, 0.0, 0.04);
        e.excitation = Excitation::Pulsed {
            photon_number: dist,
        };
        let sampler = GateSampler::new(&e, &GateConfig::default(), 1.0).unwrap();
        assert!((sampler.mean_collected() - 0.4).abs() < 1e-12);
        let mut rng = substream(3, 3, 3);
        let mut buf = Vec::new();
        let mut hist = [0u64; 3];
        for _ in 0..200_000 {
            sampler.sample(&mut rng, &mut buf);
            hist[buf.len()] += 1;
            assert!(buf.iter().all(|&t| (0.0..10.0).contains(&t)));
        }
        let f = |i: usize| hist[i] as f64 / 200_000.0;
        assert!((f(0) - 0.7).abs() < 0.005 && (f(2) - 0.1).abs() < 0.003);
    }

    #[test]
    fn emission_times_lie_in_gate_and_are_sorted() {
        let rate = EmissionProcess::saturated(0.1, 0.22).rate();
        let e = EmitterParams::new(0.1, 0.22, rate);
        let sampler = GateSampler::new(&e, &GateConfig::new(40.0, 33.3), 1.0).unwrap();
        let mut rng = substream(2, 2, 2);
        let mut buf = Vec::new();
        for _ in 0..10_000 {
            sampler.sample(&mut rng, &mut buf);
            assert!(buf.windows(2).all(|w| w[0] <= w[1]));
            assert!(buf.iter().all(|&t| (0.0..40.0).contains(&t)));
        }
    }

    #[test]
    fn blinking_on_fraction() {
        let mut e = EmitterParams::new(0.1, 0.22, 0.0);
        e.blink_on_rate = 3.0;
        e.blink_off_rate = 1.0;
        let mut rng = substream(4, 4, 4);
        let traj = EmitterTrajectory::sample(&e, 20_000.0, &mut rng);
        let on = (0..200_000).filter(|i| traj.is_on(*i as f64 * 0.1)).count();
        let frac = on as f64 / 200_000.0;
        assert!((frac - 0.75).abs() < 0.02, "{frac}");
    }

    #[test]
    fn bleaching_is_permanent() {
        let mut e = EmitterParams::new(0.1, 0.22, 0.0);
        e.bleach_rate = 0.5;
        let mut rng = substream(4, 4, 5);
        let traj = EmitterTrajectory::sample(&e, 1000.0, &mut rng);
        assert!(traj.is_on(0.0));
        assert!(!traj.is_on(500.0));
        assert!(EmitterTrajectory::always_on().is_on(1e12));
    }
}
