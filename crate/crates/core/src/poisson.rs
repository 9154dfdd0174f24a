//! Poisson variates.
//!
//! Small means (< 10) use inversion by sequential search; larger means use
//! Hörmann's transformed rejection with squeeze (PTRS).

use statrs::function::gamma::ln_gamma;

use crate::rng::RngStream;

const INVERSION_LIMIT: f64 = 10.0;

/// Draws one `Poisson(mean)` variate. A nonpositive mean returns 0 without
/// consuming randomness.
#[inline]
pub fn sample(mean: f64, rng: &mut RngStream) -> u64 {
    if mean <= 0.0 {
        0
    } else if mean < INVERSION_LIMIT {
        inversion(mean, rng)
    } else {
        ptrs(mean, rng)
    }
}

fn inversion(mean: f64, rng: &mut RngStream) -> u64 {
    let u = rng.uniform();
    let mut k = 0u64;
    let mut p = (-mean).exp();
    let mut cdf = p;
    // the cap only matters if rounding stalls the cdf just below u
    while u > cdf && k < 1000 {
        k += 1;
        p *= mean / k as f64;
        cdf += p;
    }
    k
}

fn ptrs(mean: f64, rng: &mut RngStream) -> u64 {
    let log_mean = mean.ln();
    let smu = mean.sqrt();
    let b = 0.931 + 2.53 * smu;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let v_r = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = rng.uniform() - 0.5;
        let v = rng.uniform();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + mean + 0.43).floor();
        if us >= 0.07 && v <= v_r {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = (v * inv_alpha / (a / (us * us) + b)).ln();
        let rhs = -mean + k * log_mean - ln_gamma(k + 1.0);
        if lhs <= rhs {
            return k as u64;
        }
    }
}
