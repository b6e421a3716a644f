//! Standard normal density and tail probabilities in log space.
//!
//! `ln_sf` stays finite far into the upper tail: below the switch point it
//! uses `erfc` directly, above it the Mills ratio is evaluated by a
//! continued fraction and combined with the log density.

use std::f64::consts::FRAC_1_SQRT_2;

/// `ln(1 / sqrt(2 pi))`
pub const LN_INV_SQRT_2PI: f64 = -0.918_938_533_204_672_8;

// erfc keeps full relative precision well past this point; the continued
// fraction below converges in a handful of terms beyond it.
const CF_SWITCH: f64 = 8.0;

pub fn ln_pdf(z: f64) -> f64 {
    LN_INV_SQRT_2PI - 0.5 * z * z
}

pub fn pdf(z: f64) -> f64 {
    ln_pdf(z).exp()
}

/// Upper tail `P(Z >= z)`.
pub fn sf(z: f64) -> f64 {
    0.5 * libm::erfc(z * FRAC_1_SQRT_2)
}

/// Lower tail `P(Z <= z)`.
pub fn cdf(z: f64) -> f64 {
    sf(-z)
}

/// `ln P(Z >= z)` without underflow for large positive `z`.
pub fn ln_sf(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    if z == f64::INFINITY {
        return f64::NEG_INFINITY;
    }
    if z > CF_SWITCH {
        ln_pdf(z) + mills_ratio_cf(z).ln()
    } else if z < -CF_SWITCH {
        // sf(z) = 1 - sf(-z), and sf(-z) is tiny here
        (-sf(-z)).ln_1p()
    } else {
        sf(z).ln()
    }
}

/// `ln P(Z <= z)`.
pub fn ln_cdf(z: f64) -> f64 {
    ln_sf(-z)
}

/// Inverse Mills ratio `phi(z) / P(Z >= z)`, the hazard of the standard normal.
pub fn hazard(z: f64) -> f64 {
    if z > CF_SWITCH {
        1.0 / mills_ratio_cf(z)
    } else {
        (ln_pdf(z) - ln_sf(z)).exp()
    }
}

/// Mills ratio `R(z) = P(Z >= z) / phi(z)` by the Laplace continued fraction
/// `1 / (z + 1 / (z + 2 / (z + 3 / ...)))`, evaluated with modified Lentz.
fn mills_ratio_cf(z: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f = z;
    let mut c = z;
    let mut d = 0.0;
    for k in 1..500 {
        let a = k as f64;
        d = z + a * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = z + a / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    1.0 / f
}

/// Stable `ln(sum(exp(x)))`; `-inf` entries are ignored.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let s: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + s.ln()
}
