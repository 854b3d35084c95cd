//! Float methods missing from `core`, backed by `libm`.

#[allow(dead_code)]
pub(crate) trait Real {
    fn sqrt(self) -> f64;
}

impl Real for f64 {
    #[inline]
    fn sqrt(self) -> f64 {
        libm::sqrt(self)
    }
}
