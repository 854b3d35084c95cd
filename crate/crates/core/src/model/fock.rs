use alloc::vec::Vec;

use super::params::{LossChannel, PhotonNumberDist};
use crate::error::{Error, Result};

/// Absolute tolerance of the chain-inequality comparison.
pub const CHAIN_TOLERANCE: f64 = 1e-12;

/// Tail mass below which Poissonian reference distributions are truncated.
const POISSON_TAIL: f64 = 1e-15;

/// Photon-number distribution after an `N`-photon Fock state passes a loss
/// channel of efficiency `eta`: `C(N,k) eta^k (1-eta)^(N-k)`.
pub fn binomial_loss_dist(n_photons: usize, channel: LossChannel) -> PhotonNumberDist {
    let eta = channel.efficiency();
    let mut probs = Vec::with_capacity(n_photons + 1);
    let mut binom = 1.0_f64;
    for k in 0..=n_photons {
        if k > 0 {
            binom = binom * (n_photons + 1 - k) as f64 / k as f64;
        }
        probs.push(binom * libm::pow(eta, k as f64) * libm::pow(1.0 - eta, (n_photons - k) as f64));
    }
    PhotonNumberDist::new(probs).expect("binomial probabilities are normalized")
}

/// Poisson distribution of mean `lambda`, truncated once the remaining tail
/// mass drops below 1e-15.
pub fn poisson_dist(lambda: f64) -> Result<PhotonNumberDist> {
    check_lambda(lambda)?;
    let mut probs = Vec::new();
    let mut term = libm::exp(-lambda);
    let mut cumulative = 0.0;
    let mut k = 0usize;
    loop {
        probs.push(term);
        cumulative += term;
        k += 1;
        // stop past the mode once the remaining mass is negligible
        if k as f64 > lambda && 1.0 - cumulative < POISSON_TAIL {
            break;
        }
        term *= lambda / k as f64;
        if term == 0.0 && k as f64 > lambda {
            break;
        }
    }
    PhotonNumberDist::new(probs)
}

/// Poisson distribution of mean `lambda` restricted to `0..=k_max`, without
/// renormalization.
pub fn poisson_dist_truncated(lambda: f64, k_max: usize) -> Result<PhotonNumberDist> {
    check_lambda(lambda)?;
    let mut probs = Vec::with_capacity(k_max + 1);
    let mut term = libm::exp(-lambda);
    for k in 0..=k_max {
        if k > 0 {
            term *= lambda / k as f64;
        }
        probs.push(term);
    }
    PhotonNumberDist::new(probs)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::param(alloc::format!(
            "Poisson mean must be >= 0, got {lambda}"
        )));
    }
    Ok(())
}

/// `((k+1)/k) p_{k+1} p_{k-1} / p_k^2`. Values below 1 certify
/// nonclassical light at order `k`; a Poissonian source gives exactly 1.
pub fn klyshko_ratio(dist: &PhotonNumberDist, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::param("klyshko ratio needs k >= 1"));
    }
    let pk = dist.get(k);
    if pk == 0.0 {
        return Err(Error::UndefinedRatio { order: k });
    }
    let kf = k as f64;
    Ok((kf + 1.0) / kf * dist.get(k + 1) * dist.get(k - 1) / (pk * pk))
}

/// Normalized factorial moment `<k(k-1)...(k-n+1)> / <k>^n`.
///
/// Order 0 is 1 by convention.
pub fn factorial_moment_gn(dist: &PhotonNumberDist, n: usize) -> Result<f64> {
    let mean = dist.mean();
    if !(mean > 0.0) {
        return Err(Error::ZeroMean);
    }
    if n == 0 {
        return Ok(1.0);
    }
    let moment: f64 = dist
        .probs()
        .iter()
        .enumerate()
        .skip(n)
        .map(|(k, p)| p * falling_factorial(k, n))
        .sum();
    Ok(moment / libm::pow(mean, n as f64))
}

pub(crate) fn falling_factorial(k: usize, n: usize) -> f64 {
    (0..n).map(|j| (k - j) as f64).product()
}

/// Normalized factorial moments around order `N` and the verdict of
/// `g(N-1) g(N+1) < g(N)^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainCheck {
    pub g_n_minus_1: f64,
    pub g_n: f64,
    pub g_n_plus_1: f64,
    pub nonclassical: bool,
}

pub fn check_chain_inequality(dist: &PhotonNumberDist, order: usize) -> Result<ChainCheck> {
    if order == 0 {
        return Err(Error::param("chain inequality needs order >= 1"));
    }
    let g_n_minus_1 = factorial_moment_gn(dist, order - 1)?;
    let g_n = factorial_moment_gn(dist, order)?;
    let g_n_plus_1 = factorial_moment_gn(dist, order + 1)?;
    Ok(ChainCheck {
        g_n_minus_1,
        g_n,
        g_n_plus_1,
        nonclassical: chain_violated(g_n_minus_1, g_n, g_n_plus_1),
    })
}

/// `g(N)^2 - g(N-1) g(N+1)` must exceed the rounding tolerance, scaled to the
/// size of the compared products so that the test stays meaningful for
/// large `N`, where `g(N) = N!/N^N` is far below 1.
fn chain_violated(g_n_minus_1: f64, g_n: f64, g_n_plus_1: f64) -> bool {
    let lhs = g_n_minus_1 * g_n_plus_1;
    let rhs = g_n * g_n;
    rhs - lhs > CHAIN_TOLERANCE * rhs.max(lhs).max(f64::MIN_POSITIVE)
}

/// Normalized factorial moment of order `n` for a cluster of `m` independent
/// emitters, each with per-gate photon-number distribution `single`.
pub fn predict_gn_cluster(m: usize, single: &PhotonNumberDist, n: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::param("cluster size m must be >= 1"));
    }
    let mut cluster = single.clone();
    for _ in 1..m {
        cluster = cluster.convolve(single);
    }
    factorial_moment_gn(&cluster, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn loss(eta: f64) -> LossChannel {
        LossChannel::new(eta).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn binomial_examples() {
        assert_eq!(binomial_loss_dist(2, loss(0.5)).probs(), &[0.25, 0.5, 0.25]);
        assert_eq!(
            binomial_loss_dist(3, loss(1.0)).probs(),
            &[0.0, 0.0, 0.0, 1.0]
        );
        let d = binomial_loss_dist(1, loss(0.3));
        assert!(close(d.get(0), 0.7, 1e-15) && close(d.get(1), 0.3, 1e-15));
        assert_eq!(
            binomial_loss_dist(4, loss(0.0)).probs(),
            &[1.0, 0.0, 0.0, 0.0, 0.0]
        );
    }

    #[test]
    fn loss_channel_amplitudes() {
        for i in 0..=10 {
            let c = loss(i as f64 / 10.0);
            let t = c.transmission();
            let r = c.reflection();
            assert!(close(t * t + r * r, 1.0, 1e-15));
        }
        assert!(LossChannel::new(1.1).is_err());
        assert!(LossChannel::new(-0.1).is_err());
    }

    #[test]
    fn binomial_normalized_up_to_64() {
        for n in 0..=64 {
            for i in 0..=10 {
                let d = binomial_loss_dist(n, loss(i as f64 / 10.0));
                let sum: f64 = d.probs().iter().sum();
                assert!(close(sum, 1.0, 1e-12), "N={n} eta={i}");
            }
        }
    }

    #[test]
    fn klyshko_examples() {
        let d = binomial_loss_dist(3, loss(0.5));
        assert!(close(klyshko_ratio(&d, 2).unwrap(), 0.5, 1e-15));
        assert!(close(klyshko_ratio(&d, 1).unwrap(), 2.0 / 3.0, 1e-15));
        let poisson = poisson_dist_truncated(0.8, 20).unwrap();
        assert!(close(klyshko_ratio(&poisson, 3).unwrap(), 1.0, 1e-9));
        assert!(matches!(
            klyshko_ratio(&PhotonNumberDist::fock(1), 2),
            Err(Error::UndefinedRatio { order: 2 })
        ));
        assert!(klyshko_ratio(&d, 0).is_err());
    }

    /// Brute-force factorial moment: enumerate the 2^N transmission outcomes
    /// of the N photons instead of using the binomial formula.
    fn brute_force_gn(n_photons: usize, eta: f64, order: usize) -> f64 {
        let mut moment = 0.0;
        let mut mean = 0.0;
        for mask in 0u32..(1 << n_photons) {
            let k = mask.count_ones() as usize;
            let prob = libm::pow(eta, k as f64) * libm::pow(1.0 - eta, (n_photons - k) as f64);
            mean += prob * k as f64;
            if k >= order {
                moment += prob * (0..order).map(|j| (k - j) as f64).product::<f64>();
            }
        }
        moment / libm::pow(mean, order as f64)
    }

    #[test]
    fn factorial_moment_examples() {
        for &eta in &[0.05, 0.3, 0.5, 1.0] {
            let d = binomial_loss_dist(2, loss(eta));
            let g2 = factorial_moment_gn(&d, 2).unwrap();
            assert!(close(g2, 0.5, 1e-12));
            assert!(close(g2, brute_force_gn(2, eta, 2), 1e-12));
        }
        assert_eq!(
            factorial_moment_gn(&binomial_loss_dist(2, loss(0.5)), 3).unwrap(),
            0.0
        );
        let poisson = poisson_dist_truncated(0.8, 20).unwrap();
        assert!(close(factorial_moment_gn(&poisson, 2).unwrap(), 1.0, 1e-9));
        assert_eq!(
            factorial_moment_gn(&PhotonNumberDist::fock(0), 2),
            Err(Error::ZeroMean)
        );
    }

    #[test]
    fn factorial_moments_of_binomial_are_eta_independent() {
        for n_photons in 1..=12 {
            for i in 1..=10 {
                let eta = i as f64 / 10.0;
                let d = binomial_loss_dist(n_photons, loss(eta));
                for order in 1..=n_photons + 2 {
                    let expected = if order > n_photons {
                        0.0
                    } else {
                        falling_factorial(n_photons, order)
                            / libm::pow(n_photons as f64, order as f64)
                    };
                    let got = factorial_moment_gn(&d, order).unwrap();
                    assert!(
                        close(got, expected, 1e-12),
                        "N={n_photons} eta={eta} n={order}"
                    );
                    if n_photons <= 10 {
                        let brute = brute_force_gn(n_photons, eta, order);
                        assert!(close(got, brute, 1e-12));
                    }
                }
            }
        }
    }

    #[test]
    fn chain_examples() {
        let c = check_chain_inequality(&binomial_loss_dist(2, loss(0.4)), 2).unwrap();
        assert!(close(c.g_n_minus_1, 1.0, 1e-12));
        assert!(close(c.g_n, 0.5, 1e-12));
        assert_eq!(c.g_n_plus_1, 0.0);
        assert!(c.nonclassical);

        let poisson = poisson_dist_truncated(1.0, 25).unwrap();
        let c = check_chain_inequality(&poisson, 2).unwrap();
        assert!(!c.nonclassical);

        let c = check_chain_inequality(&PhotonNumberDist::fock(1), 1).unwrap();
        assert_eq!((c.g_n_minus_1, c.g_n, c.g_n_plus_1), (1.0, 1.0, 0.0));
        assert!(c.nonclassical);
    }

    #[test]
    fn chain_holds_for_every_lossy_fock_state() {
        for n_photons in 1..=20 {
            for i in 1..=10 {
                let d = binomial_loss_dist(n_photons, loss(i as f64 / 10.0));
                assert!(check_chain_inequality(&d, n_photons).unwrap().nonclassical);
            }
        }
    }

    #[test]
    fn poisson_truncation() {
        let d = poisson_dist(0.8).unwrap();
        let sum: f64 = d.probs().iter().sum();
        assert!(close(sum, 1.0, 1e-15));
        assert!(d.max_photons() < 30);
        for k in 1..8 {
            assert!(close(klyshko_ratio(&d, k).unwrap(), 1.0, 1e-9));
        }
        assert_eq!(poisson_dist(0.0).unwrap().probs(), &[1.0]);
        assert!(poisson_dist(-1.0).is_err());
    }

    #[test]
    fn cluster_prediction_examples() {
        let single = PhotonNumberDist::new(alloc::vec![0.9, 0.1]).unwrap();
        assert_eq!(predict_gn_cluster(3, &single, 4).unwrap(), 0.0);
        // brute force: enumerate the 2^3 on/off outcomes of three emitters
        let (mut triple, mut mean) = (0.0, 0.0);
        for mask in 0u32..8 {
            let c = mask.count_ones();
            let prob = libm::pow(0.1, c as f64) * libm::pow(0.9, (3 - c) as f64);
            mean += prob * c as f64;
            if c == 3 {
                triple += prob * 6.0;
            }
        }
        let g3 = predict_gn_cluster(3, &single, 3).unwrap();
        assert!(close(g3, triple / (mean * mean * mean), 1e-12));
        assert!(close(g3, 2.0 / 9.0, 1e-12));
        let half = PhotonNumberDist::new(alloc::vec![0.5, 0.5]).unwrap();
        assert_eq!(predict_gn_cluster(1, &half, 2).unwrap(), 0.0);
        assert!(predict_gn_cluster(0, &half, 2).is_err());
    }

    proptest! {
        #[test]
        fn klyshko_identity_on_lossy_fock_states(n_photons in 2usize..=30, eta in 0.01f64..1.0) {
            let d = binomial_loss_dist(n_photons, loss(eta));
            for k in 1..n_photons {
                let r = klyshko_ratio(&d, k).unwrap();
                let expected = (n_photons - k) as f64 / (n_photons - k + 1) as f64;
                prop_assert!(close(r, expected, 1e-12), "N={} k={} eta={} r={}", n_photons, k, eta, r);
            }
        }

        #[test]
        fn chain_holds_for_single_photon_clusters(m in 1usize..=8, q in 0.01f64..=1.0) {
            let single = PhotonNumberDist::new(alloc::vec![1.0 - q, q]).unwrap();
            let mut cluster = single.clone();
            for _ in 1..m {
                cluster = cluster.convolve(&single);
            }
            prop_assert!(check_chain_inequality(&cluster, m).unwrap().nonclassical);
            prop_assert_eq!(predict_gn_cluster(m, &single, m + 1).unwrap(), 0.0);
        }
    }
}
