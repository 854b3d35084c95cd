//! Closed-form photon statistics.
//!
//! Every function here is pure and deterministic. The simulator and the
//! estimators are validated against these formulas.

mod correlation;
mod fock;
mod params;

pub use correlation::{g2_integrated, g2_m_emitters, g2_pair_time, invert_m};
pub use fock::{
    binomial_loss_dist, check_chain_inequality, factorial_moment_gn, klyshko_ratio, poisson_dist,
    poisson_dist_truncated, predict_gn_cluster, ChainCheck, CHAIN_TOLERANCE,
};
pub use params::{EmitterParams, Excitation, GateConfig, LossChannel, PhotonNumberDist};
