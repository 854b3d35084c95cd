use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("no antibunching (g2 = {g2}), emitter count is indeterminate")]
    NoAntibunching { g2: f64 },
    #[error("ratio undefined: p_{order} is zero")]
    UndefinedRatio { order: usize },
    #[error("distribution has zero mean")]
    ZeroMean,
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("wrong stack mode: expected {expected}, found {found}")]
    Mode {
        expected: &'static str,
        found: &'static str,
    },
    #[error("insufficient counts: {0}")]
    InsufficientCounts(String),
    #[error("signal fractions vanish, the region is all noise")]
    AllNoise,
    #[error("brightness normalization is zero or invalid")]
    Normalization,
    #[error("capability missing: {0}")]
    Capability(String),
    #[error("fit failed: {0}")]
    Fit(String),
    #[error("registration failed: {0}")]
    Registration(String),
    #[error("calibration failed: {0}")]
    Calibration(String),
    #[error("indeterminate: {0}")]
    Indeterminate(String),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Configuration(msg.into())
    }
}
