//! Standard normal density and distribution functions.
//!
//! Both tails are computed through `erfc`, so `norm_sf(x)` keeps full relative
//! precision for large positive `x` (and `norm_cdf(x)` for large negative `x`).

use core::f64::consts::{FRAC_1_SQRT_2, PI};

/// `1/sqrt(2*pi)`
pub const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * libm::exp(-0.5 * x * x)
}

#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail `1 - Phi(x)`.
#[inline]
pub fn norm_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

#[inline]
pub(crate) fn sqrt_2pi() -> f64 {
    libm::sqrt(2.0 * PI)
}
