//! Scalar float kernels, routed through `libm` on every build.
//!
//! `std` float intrinsics delegate to the platform's C library, whose last-ulp
//! rounding varies across systems; the pure-Rust `libm` implementations make
//! every result of this crate bit-reproducible everywhere (`erfc` has no std
//! counterpart anyway). `sqrt` is correctly rounded by IEEE 754, so the
//! std/libm split below cannot change bits.

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn ln_1p(x: f64) -> f64 {
    libm::log1p(x)
}

#[cfg(feature = "std")]
#[inline]
pub fn sqrt(x: f64) -> f64 {
    f64::sqrt(x)
}

#[cfg(not(feature = "std"))]
#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

/// Integer power by binary exponentiation: deterministic, dependency-free,
/// and identical on every platform.
pub fn powi(x: f64, n: i32) -> f64 {
    let mut base = if n < 0 { 1.0 / x } else { x };
    let mut k = n.unsigned_abs();
    let mut acc = 1.0;
    while k > 0 {
        if k & 1 == 1 {
            acc *= base;
        }
        base *= base;
        k >>= 1;
    }
    acc
}

#[inline]
pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}
