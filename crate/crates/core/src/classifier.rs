//! Emitter-count inference from brightness and pair-correlation evidence.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
#[allow(unused_imports)]
use crate::math::Real;

/// Measurements of one object.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectEvidence {
    pub brightness: f64,
    pub brightness_err: f64,
    pub g2: f64,
    pub g2_err: f64,
}

/// Brightness and bunching parameter of a single emitter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleRefs {
    pub brightness: f64,
    pub g2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerdictFlag {
    /// Both channels round to the same count.
    Consistent,
    Inconsistent,
    /// The correlation channel carries no information (`g2 >= 1`); the
    /// verdict rests on brightness alone.
    Indeterminate,
}

impl VerdictFlag {
    pub fn name(self) -> &'static str {
        match self {
            VerdictFlag::Consistent => "consistent",
            VerdictFlag::Inconsistent => "inconsistent",
            VerdictFlag::Indeterminate => "indeterminate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectVerdict {
    pub m_brightness: f64,
    pub m_brightness_err: f64,
    /// `None` when `g2 >= 1`.
    pub m_correlation: Option<f64>,
    pub m_correlation_err: f64,
    /// Inverse-variance weighted combination of the two channels.
    pub m_combined: f64,
    pub m_combined_err: f64,
    pub m_hat: u32,
    /// Gaussian probability of the combined estimate within 0.5 of `m_hat`.
    pub confidence: f64,
    pub flag: VerdictFlag,
}

/// Rounds half-integers up.
fn round_half_up(x: f64) -> f64 {
    libm::floor(x + 0.5)
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * core::f64::consts::FRAC_1_SQRT_2)
}

/// Inverse-variance mean; a channel with zero error takes all the weight.
fn fuse(values: &[(f64, f64)]) -> (f64, f64) {
    if let Some(&(v, _)) = values.iter().find(|(_, e)| *e == 0.0) {
        return (v, 0.0);
    }
    let (mut sw, mut swx) = (0.0, 0.0);
    for &(v, e) in values {
        let w = 1.0 / (e * e);
        sw += w;
        swx += w * v;
    }
    (swx / sw, (1.0 / sw).sqrt())
}

/// Infers the number of emitters of one object.
///
/// Brightness gives `m = B / B1`; the bunching parameter gives
/// `m = (1 - g2_1) / (1 - g2)` by inverting the cluster mixing law.
pub fn classify(e: &ObjectEvidence, refs: &SingleRefs) -> Result<ObjectVerdict> {
    if !(refs.brightness > 0.0 && refs.brightness.is_finite()) {
        return Err(Error::param("single-emitter brightness must be positive"));
    }
    if !(refs.g2 < 1.0 && refs.g2.is_finite()) {
        return Err(Error::param("single-emitter g2 must be below 1"));
    }
    if !(e.brightness.is_finite() && e.g2.is_finite()) {
        return Err(Error::param("object evidence must be finite"));
    }
    if !(e.brightness_err >= 0.0 && e.g2_err >= 0.0) || !e.g2_err.is_finite() {
        return Err(Error::param("errors must be finite and non-negative"));
    }
    let m_b = e.brightness / refs.brightness;
    let m_b_err = e.brightness_err / refs.brightness;
    let depth = 1.0 - refs.g2;
    let (m_c, m_c_err) = if e.g2 < 1.0 {
        let d = 1.0 - e.g2;
        (Some(depth / d), depth / (d * d) * e.g2_err)
    } else {
        (None, f64::INFINITY)
    };
    let (combined, combined_err) = match m_c {
        Some(c) if m_b_err.is_finite() => fuse(&[(m_b, m_b_err), (c, m_c_err)]),
        Some(c) => (c, m_c_err),
        None => (m_b, m_b_err),
    };
    let m_hat = round_half_up(combined).max(1.0);
    let confidence = if combined_err > 0.0 {
        normal_cdf((m_hat + 0.5 - combined) / combined_err)
            - normal_cdf((m_hat - 0.5 - combined) / combined_err)
    } else if (combined - m_hat).abs() < 0.5 || combined < m_hat {
        1.0
    } else {
        0.0
    };
    let flag = match m_c {
        None => VerdictFlag::Indeterminate,
        Some(c) if round_half_up(c).max(1.0) == round_half_up(m_b).max(1.0) => {
            VerdictFlag::Consistent
        }
        Some(_) => VerdictFlag::Inconsistent,
    };
    Ok(ObjectVerdict {
        m_brightness: m_b,
        m_brightness_err: m_b_err,
        m_correlation: m_c,
        m_correlation_err: m_c_err,
        m_combined: combined,
        m_combined_err: combined_err,
        m_hat: m_hat as u32,
        confidence,
        flag,
    })
}

/// Single-emitter references from the objects dimmer than `dim_limit`:
/// the median brightness and the inverse-variance weighted mean `g2`.
pub fn calibrate_single_refs(objects: &[ObjectEvidence], dim_limit: f64) -> Result<SingleRefs> {
    let dim: Vec<&ObjectEvidence> = objects
        .iter()
        .filter(|o| o.brightness < dim_limit && o.brightness.is_finite())
        .collect();
    if dim.is_empty() {
        return Err(Error::Calibration(format!(
            "no object with brightness below {dim_limit}"
        )));
    }
    let mut b: Vec<f64> = dim.iter().map(|o| o.brightness).collect();
    b.sort_by(f64::total_cmp);
    let n = b.len();
    let median = if n % 2 == 1 {
        b[n / 2]
    } else {
        0.5 * (b[n / 2 - 1] + b[n / 2])
    };
    let usable: Vec<(f64, f64)> = dim
        .iter()
        .filter(|o| o.g2.is_finite() && o.g2_err.is_finite())
        .map(|o| (o.g2, o.g2_err))
        .collect();
    if usable.is_empty() {
        return Err(Error::Calibration("dim objects carry no finite g2".into()));
    }
    let g2 = if usable.iter().all(|(_, e)| *e > 0.0) {
        fuse(&usable).0
    } else {
        usable.iter().map(|(g, _)| g).sum::<f64>() / usable.len() as f64
    };
    if !(median > 0.0) {
        return Err(Error::Calibration(format!(
            "median dim brightness {median} is not positive"
        )));
    }
    if !(g2 < 1.0) {
        return Err(Error::Calibration(format!(
            "dim objects show no antibunching (g2 = {g2})"
        )));
    }
    Ok(SingleRefs {
        brightness: median,
        g2,
    })
}

/// Emitter count from the highest significantly nonzero correlation order.
///
/// `estimates` holds `(n, value, err)` for consecutive orders starting at
/// 2. The count is the last order with `value > 3 err`, provided a later
/// order shows the cutoff. Without any significant order, or without an
/// observed cutoff, the count is indeterminate.
pub fn predict_higher_order_verdict(estimates: &[(usize, f64, f64)]) -> Result<u32> {
    if estimates.is_empty() {
        return Err(Error::param("no correlation orders supplied"));
    }
    for (i, &(n, _, err)) in estimates.iter().enumerate() {
        if n != i + 2 {
            return Err(Error::param("orders must be consecutive starting at 2"));
        }
        if !(err >= 0.0) {
            return Err(Error::param(format!("order {n}: invalid error {err}")));
        }
    }
    let significant = |&(_, v, e): &(usize, f64, f64)| v > 3.0 * e;
    let last = estimates.iter().rposition(significant);
    match last {
        None => Err(Error::Indeterminate(
            "no correlation order is significantly nonzero".into(),
        )),
        Some(i) if i + 1 == estimates.len() => Err(Error::Indeterminate(format!(
            "every order up to {} is nonzero; no cutoff observed",
            estimates[i].0
        ))),
        Some(i) => Ok(estimates[i].0 as u32),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(b: f64, g2: f64, g2_err: f64) -> ObjectEvidence {
        ObjectEvidence {
            brightness: b,
            brightness_err: 0.1 * b,
            g2,
            g2_err,
        }
    }

    #[test]
    fn dim_object_is_single() {
        let refs = SingleRefs {
            brightness: 0.74,
            g2: 0.43,
        };
        let v = classify(&ev(0.74, 0.35, 0.1), &refs).unwrap();
        assert_eq!(v.m_hat, 1);
        assert_eq!(v.flag, VerdictFlag::Consistent);
    }

    #[test]
    fn medium_and_bright_objects() {
        let refs = SingleRefs {
            brightness: 1.1,
            g2: 0.43,
        };
        assert_eq!(classify(&ev(2.35, 0.65, 0.1), &refs).unwrap().m_hat, 2);
        let v = classify(&ev(4.91, 0.85, 0.1), &refs).unwrap();
        assert_eq!(v.m_hat, 4);
        assert!(v.confidence > 0.0 && v.confidence <= 1.0);
    }

    #[test]
    fn bunched_object_falls_back_to_brightness() {
        let refs = SingleRefs {
            brightness: 1.0,
            g2: 0.43,
        };
        let v = classify(&ev(3.1, 1.05, 0.1), &refs).unwrap();
        assert_eq!(v.flag, VerdictFlag::Indeterminate);
        assert_eq!(v.m_correlation, None);
        assert_eq!(v.m_hat, 3);
    }

    #[test]
    fn half_integers_round_up() {
        let refs = SingleRefs {
            brightness: 1.0,
            g2: 0.5,
        };
        let e = ObjectEvidence {
            brightness: 2.5,
            brightness_err: 0.0,
            g2: 0.8,
            g2_err: 0.1,
        };
        assert_eq!(classify(&e, &refs).unwrap().m_hat, 3);
    }

    #[test]
    fn invalid_refs_are_rejected() {
        let e = ev(1.0, 0.4, 0.1);
        assert!(classify(
            &e,
            &SingleRefs {
                brightness: 0.0,
                g2: 0.4
            }
        )
        .is_err());
        assert!(classify(
            &e,
            &SingleRefs {
                brightness: 1.0,
                g2: 1.0
            }
        )
        .is_err());
    }

    #[test]
    fn calibration_examples() {
        let r = calibrate_single_refs(&[ev(0.9, 0.43, 0.05)], 1.25).unwrap();
        assert_eq!(
            r,
            SingleRefs {
                brightness: 0.9,
                g2: 0.43
            }
        );
        let r = calibrate_single_refs(
            &[
                ev(0.8, 0.40, 0.05),
                ev(1.0, 0.46, 0.05),
                ev(1.2, 0.43, 0.1),
                ev(3.0, 0.8, 0.1),
            ],
            1.25,
        )
        .unwrap();
        assert_eq!(r.brightness, 1.0);
        assert!((r.g2 - 0.43).abs() < 0.01);
        assert!(matches!(
            calibrate_single_refs(&[ev(2.0, 0.7, 0.1)], 1.25),
            Err(Error::Calibration(_))
        ));
    }

    #[test]
    fn higher_order_examples() {
        assert_eq!(
            predict_higher_order_verdict(&[(2, 0.5, 0.01), (3, 0.0, 0.01)]).unwrap(),
            2
        );
        assert_eq!(
            predict_higher_order_verdict(&[(2, 0.67, 0.01), (3, 0.22, 0.02), (4, 0.001, 0.01)])
                .unwrap(),
            3
        );
        assert!(matches!(
            predict_higher_order_verdict(&[(2, 1.0, 0.01), (3, 1.0, 0.02), (4, 1.0, 0.05)]),
            Err(Error::Indeterminate(_))
        ));
        assert!(matches!(
            predict_higher_order_verdict(&[(2, 0.0, 0.01), (3, 0.0, 0.02)]),
            Err(Error::Indeterminate(_))
        ));
        assert!(predict_higher_order_verdict(&[(3, 0.5, 0.01)]).is_err());
    }

    proptest! {
        #[test]
        fn verdict_is_scale_invariant(
            b in 0.1f64..6.0, rel in 0.01f64..0.5, g2 in 0.0f64..1.3, err in 0.01f64..0.3,
            b1 in 0.3f64..2.0, g21 in 0.0f64..0.9, scale in 0.01f64..100.0,
        ) {
            let e = ObjectEvidence { brightness: b, brightness_err: rel * b, g2, g2_err: err };
            let refs = SingleRefs { brightness: b1, g2: g21 };
            let scaled_e = ObjectEvidence { brightness: b * scale, brightness_err: rel * b * scale, ..e };
            let scaled_r = SingleRefs { brightness: b1 * scale, ..refs };
            let v = classify(&e, &refs).unwrap();
            let w = classify(&scaled_e, &scaled_r).unwrap();
            prop_assert_eq!(v.m_hat, w.m_hat);
            prop_assert_eq!(v.flag, w.flag);
            prop_assert!((v.confidence - w.confidence).abs() < 1e-9);
        }

        #[test]
        fn higher_order_never_exceeds_largest_order(values in proptest::collection::vec((0.0f64..2.0, 0.0f64..0.5), 1..8)) {
            let est: Vec<(usize, f64, f64)> = values.iter().enumerate().map(|(i, &(v, e))| (i + 2, v, e)).collect();
            if let Ok(m) = predict_higher_order_verdict(&est) {
                prop_assert!(m as usize <= est.len() + 1);
                prop_assert!(m >= 2);
            }
        }
    }

    #[test]
    fn empty_estimates_are_rejected() {
        assert!(predict_higher_order_verdict(&[]).is_err());
    }
}
