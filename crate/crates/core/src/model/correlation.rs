use alloc::format;

use super::params::{EmitterParams, GateConfig};
use crate::error::{Error, Result};

/// Below this `k T_g` the gate-integrated formula is evaluated by its Taylor
/// series; the closed form subtracts two terms of size `2/(k T_g)`.
const SERIES_CUTOFF: f64 = 1e-4;

/// Pair correlation `g2(tau) = 1 - (1-p) exp(-k |tau|)` for photons detected
/// `tau` ns apart.
pub fn g2_pair_time(params: &EmitterParams, tau_ns: f64) -> Result<f64> {
    params.validate()?;
    if tau_ns.is_nan() {
        return Err(Error::param("tau is NaN"));
    }
    let p = params.two_photon_prob_p;
    // p + (1-p)(1 - exp(-k|tau|)), exact at both ends
    let recovered = -libm::expm1(-params.decay_rate_k * libm::fabs(tau_ns));
    Ok(p + (1.0 - p) * recovered)
}

/// The bunching parameter measured with a gate of width `T_g`: the pair
/// correlation averaged over both detection times in `[0, T_g]`.
pub fn g2_integrated(params: &EmitterParams, gate: &GateConfig) -> Result<f64> {
    params.validate()?;
    gate.validate()?;
    let p = params.two_photon_prob_p;
    let window = antibunching_window(params.decay_rate_k * gate.gate_width_ns);
    Ok(p + (1.0 - p) * (1.0 - window))
}

/// `2/x + 2/x^2 (exp(-x) - 1)`, the gate average of `exp(-k|t1 - t2|)`.
pub(crate) fn antibunching_window(x: f64) -> f64 {
    if x < SERIES_CUTOFF {
        // 2 * sum_n (-x)^n / (n+2)!
        1.0 - x / 3.0 + x * x / 12.0 - x * x * x / 60.0
    } else {
        2.0 / x + 2.0 * libm::expm1(-x) / (x * x)
    }
}

/// Bunching parameter of `m` independent, identical emitters.
pub fn g2_m_emitters(g2_single: f64, m: u32) -> Result<f64> {
    if m == 0 {
        return Err(Error::param("emitter count m must be >= 1"));
    }
    if !(g2_single.is_finite() && g2_single >= 0.0) {
        return Err(Error::param(format!(
            "g2_single must be >= 0, got {g2_single}"
        )));
    }
    let m = m as f64;
    Ok((g2_single + (m - 1.0)) / m)
}

/// Real-valued emitter count that maps `g2_single` onto `g2_observed`.
pub fn invert_m(g2_single: f64, g2_observed: f64) -> Result<f64> {
    if !(g2_observed < 1.0) {
        return Err(Error::NoAntibunching { g2: g2_observed });
    }
    if !(g2_single < 1.0) {
        return Err(Error::param(format!(
            "single-emitter g2 must be < 1, got {g2_single}"
        )));
    }
    Ok((1.0 - g2_single) / (1.0 - g2_observed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_emitter() -> EmitterParams {
        EmitterParams::new(0.1, 0.22, 0.0)
    }

    fn gate(t: f64) -> GateConfig {
        GateConfig::new(t, 33.3)
    }

    /// Composite Gauss-Legendre (5 nodes) over `[a, b]` with `panels` panels.
    fn gauss5(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
        const X: [f64; 5] = [
            0.0,
            -0.538_469_310_105_683_1,
            0.538_469_310_105_683_1,
            -0.906_179_845_938_664,
            0.906_179_845_938_664,
        ];
        const W: [f64; 5] = [
            0.568_888_888_888_888_9,
            0.478_628_670_499_366_5,
            0.478_628_670_499_366_5,
            0.236_926_885_056_189_1,
            0.236_926_885_056_189_1,
        ];
        let h = (b - a) / panels as f64;
        let mut sum = 0.0;
        for i in 0..panels {
            let mid = a + (i as f64 + 0.5) * h;
            for (x, w) in X.iter().zip(W) {
                sum += w * f(mid + 0.5 * h * x);
            }
        }
        sum * 0.5 * h
    }

    /// Double integral of the pair correlation over the gate square divided
    /// by `T_g^2`, folded onto the triangle `t2 < t1` where it is smooth.
    fn double_integral_oracle(k: f64, p: f64, t_gate: f64) -> f64 {
        let f = |tau: f64| 1.0 - (1.0 - p) * libm::exp(-k * tau);
        let outer = |t1: f64| gauss5(|t2| f(t1 - t2), 0.0, t1, 40);
        2.0 * gauss5(outer, 0.0, t_gate, 40) / (t_gate * t_gate)
    }

    #[test]
    fn pair_time_examples() {
        let e = reference_emitter();
        assert_eq!(g2_pair_time(&e, 0.0).unwrap(), 0.22);
        assert_eq!(g2_pair_time(&e, f64::INFINITY).unwrap(), 1.0);
        let v = g2_pair_time(&e, 10.0).unwrap();
        assert!((v - (1.0 - 0.78 * libm::exp(-1.0))).abs() < 1e-15);
        assert!((v - 0.713_054).abs() < 1e-6);
        assert_eq!(g2_pair_time(&e, -10.0).unwrap(), v);
    }

    #[test]
    fn pair_time_rejects_bad_params() {
        let mut e = reference_emitter();
        e.decay_rate_k = 0.0;
        assert!(matches!(g2_pair_time(&e, 1.0), Err(Error::Parameter(_))));
        let mut e = reference_emitter();
        e.two_photon_prob_p = 1.5;
        assert!(g2_pair_time(&e, 1.0).is_err());
    }

    #[test]
    fn integrated_examples() {
        let e = reference_emitter();
        let v10 = g2_integrated(&e, &gate(10.0)).unwrap();
        // 1 - 0.78 * 2/e
        assert!((v10 - 0.426_108_0).abs() < 1e-6, "{v10}");
        assert!((v10 - 0.43).abs() < 0.005);
        let v40 = g2_integrated(&e, &gate(40.0)).unwrap();
        assert!((v40 - 0.7057).abs() < 1e-4, "{v40}");
        let tiny = g2_integrated(&e, &gate(1e-9)).unwrap();
        assert!((tiny - 0.22).abs() < 1e-9);
    }

    #[test]
    fn integrated_matches_double_integral() {
        for &(k, p) in &[(0.1, 0.22), (0.1, 0.0), (2.0, 0.5)] {
            for &kt in &[1e-3, 0.01, 0.3, 1.0, 2.5, 7.0, 20.0, 50.0] {
                let t = kt / k;
                let e = EmitterParams::new(k, p, 0.0);
                let closed = g2_integrated(&e, &GateConfig::new(t, 1e3)).unwrap();
                let oracle = double_integral_oracle(k, p, t);
                assert!(
                    (closed - oracle).abs() < 1e-9,
                    "k={k} p={p} kT={kt}: {closed} vs {oracle}"
                );
            }
        }
    }

    #[test]
    fn series_and_closed_form_agree_at_cutoff() {
        let below = antibunching_window(SERIES_CUTOFF * (1.0 - 1e-9));
        let above = antibunching_window(SERIES_CUTOFF);
        assert!((below - above).abs() < 1e-12);
    }

    #[test]
    fn integrated_is_bounded_and_monotone() {
        let e = reference_emitter();
        let mut prev = 0.0;
        for i in 1..2000 {
            let t = i as f64 * 0.05;
            let v = g2_integrated(&e, &gate(t)).unwrap();
            assert!((0.22..=1.0).contains(&v));
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn m_emitter_examples() {
        assert_eq!(g2_m_emitters(0.43, 1).unwrap(), 0.43);
        assert!((g2_m_emitters(0.43, 2).unwrap() - 0.715).abs() < 1e-15);
        assert!((g2_m_emitters(0.43, 4).unwrap() - 0.8575).abs() < 1e-15);
        assert!(g2_m_emitters(0.43, 0).is_err());
        assert!((g2_m_emitters(0.2, 1_000_000).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn invert_m_examples() {
        assert_eq!(invert_m(0.43, 0.43).unwrap(), 1.0);
        assert!((invert_m(0.43, 0.65).unwrap() - 0.57 / 0.35).abs() < 1e-12);
        assert!((invert_m(0.43, 0.85).unwrap() - 3.8).abs() < 1e-12);
        assert!(matches!(
            invert_m(0.43, 1.0),
            Err(Error::NoAntibunching { .. })
        ));
    }

    #[test]
    fn invert_m_undoes_mixing() {
        for m in 1..50 {
            for &g in &[0.0, 0.22, 0.43, 0.9] {
                let mixed = g2_m_emitters(g, m).unwrap();
                let back = invert_m(g, mixed).unwrap();
                assert!((back - m as f64).abs() < 1e-12 * m as f64, "{m} {g} {back}");
            }
        }
    }
}
