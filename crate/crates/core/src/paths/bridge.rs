//! Brownian bridge laws used for exact step-wise sampling.

use crate::special::erfcx;
use std::f64::consts::PI;

/// Probability that a Brownian bridge from `a` to `b` over time `dt`, with
/// variance `var_rate` per unit time, touches 0. Distances to the barrier are
/// `a` and `b`; a non-positive endpoint means the barrier is already reached.
pub fn bridge_hit_probability(a: f64, b: f64, dt: f64, var_rate: f64) -> f64 {
    if a <= 0.0 || b <= 0.0 {
        return 1.0;
    }
    (-2.0 * a * b / (var_rate * dt)).exp()
}

/// Same as [`bridge_hit_probability`] for signed endpoints: a sign change
/// always hits.
#[inline]
pub(crate) fn signed_hit_probability(a: f64, b: f64, dt: f64, var_rate: f64) -> f64 {
    let ab = a * b;
    if ab <= 0.0 {
        1.0
    } else {
        (-2.0 * ab / (var_rate * dt)).exp()
    }
}

/// `E[L | B_0 = a, B_h = b]` for the semimartingale local time at 0 of a
/// standard Brownian bridge (the `L` in `|B| = |a| + ∫ sgn(B) dB + L`).
///
/// The bridge law is `P(L > l) = exp(-((|a| + |b| + l)^2 - (b - a)^2) / 2h)`,
/// which integrates to `sqrt(pi h / 2) erfcx(c / sqrt(2h)) exp(-(|ab| + ab)/h)`
/// with `c = |a| + |b|`.
pub fn bridge_local_time_mean(a: f64, b: f64, h: f64) -> f64 {
    let c = a.abs() + b.abs();
    let expo = (a * b).abs() + a * b;
    (PI * h / 2.0).sqrt() * erfcx(c / (2.0 * h).sqrt()) * (-expo / h).exp()
}

/// `P(L > 0)` for the same bridge.
#[inline]
pub fn bridge_touch_probability(a: f64, b: f64, h: f64) -> f64 {
    (-((a * b).abs() + a * b) / h).exp()
}

/// Inverse-CDF draw of the bridge local time from a uniform `u` in (0, 1).
pub fn sample_bridge_local_time(a: f64, b: f64, h: f64, u: f64) -> f64 {
    let expo = (a * b).abs() + a * b;
    let p0 = (-expo / h).exp();
    if u >= p0 || u <= 0.0 {
        return 0.0;
    }
    let c = a.abs() + b.abs();
    let num = -2.0 * h * u.ln() - 2.0 * expo;
    let root = ((b - a) * (b - a) - 2.0 * h * u.ln()).sqrt();
    (num / (root + c)).max(0.0)
}
