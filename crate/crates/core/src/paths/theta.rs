//! Theta-coupled pairs built from a skew Brownian motion and a time change.
//!
//! With `x = (x1 - x2)/2`, `d = beta1 - beta2` and `beta = d / (2 theta)`, the
//! auxiliary diffusion solves `Z = x + B + d t + beta L(Z)` with `L` the
//! symmetric local time at 0. The clock `alpha(s) = 2s + L_s(Z)/theta` has
//! inverse `A`, and with an independent Brownian motion `B'`
//!
//! ```text
//! M(t)  = (x1 + x2)/2 + B'(t - A(t)) + (beta1 + beta2) t / 2
//! X(t)  = M(t) + Z(A(t))
//! X'(t) = M(t) - Z(A(t))
//! ```
//!
//! `Z` is simulated on a fine grid of step `h`. In the driftless symmetric case
//! each step samples the endpoint and then the bridge local time exactly from
//! its conditional law. In the skew case `|Z|` is stepped as reflected Brownian
//! motion with the same local-time draw, the sign of a step that touched zero
//! is `+` with probability `(1 + beta)/2`, and the drift `d h` is added after
//! the step (a splitting scheme whose error is of order `sqrt(h)`).
//!
//! Local time gained inside a fine step is placed at the zero of the linear
//! interpolant of `Z`. In the `t` clock that zero becomes an interval of
//! length `dL/theta` on which `A` is flat and `Z(A) = 0` exactly, so the two
//! coordinates are bit-equal there. Output times that fall strictly inside a
//! fine step read `|Z|` from a three-dimensional Bessel bridge between the
//! step's end values (or between an end value and the zero), which is the
//! law of a Brownian bridge kept away from 0. Linear interpolation there
//! would lose quadratic variation of order `h` per output point.

use super::bridge::{bridge_touch_probability, sample_bridge_local_time};
use super::{check_start, check_switching, gauss, independent_step, CouplingKind, CouplingParams, PathPair, TimeGrid};
use crate::error::{invalid, Error, Result};
use crate::rng::{stream, streams, SimRng};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Relative width of the zero band for `Z(A(t))`, in units of `sqrt(horizon)`.
pub const TOGETHER_BAND: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkewTimeChange {
    pub theta: f64,
    /// Fine step of the auxiliary diffusion, in its own clock.
    pub fine_dt: f64,
    /// `Z` at the fine nodes `s_k = k * fine_dt`.
    pub z: Vec<f64>,
    /// Symmetric local time of `Z` at 0 at the fine nodes.
    pub local_time: Vec<f64>,
    /// `alpha(s_k) = 2 s_k + local_time[k] / theta`.
    pub alpha: Vec<f64>,
    /// `A(t_i)` on the output grid (times relative to the grid start).
    pub a_inverse: Vec<f64>,
    /// `Z(A(t_i))` on the output grid.
    pub z_at_a: Vec<f64>,
    /// `L(A(t_i)) / theta`, the diagonal occupation implied by the clock.
    pub exact_occupation: Vec<f64>,
}

impl SkewTimeChange {
    /// Linear interpolation of `alpha` between fine nodes.
    pub fn alpha_at(&self, s: f64) -> f64 {
        let k = (s / self.fine_dt).floor();
        if k < 0.0 {
            return 0.0;
        }
        let k = k as usize;
        if k + 1 >= self.alpha.len() {
            let last = self.alpha.len() - 1;
            return self.alpha[last] + 2.0 * (s - last as f64 * self.fine_dt);
        }
        let w = s / self.fine_dt - k as f64;
        self.alpha[k] + w * (self.alpha[k + 1] - self.alpha[k])
    }

    /// `max_i |2 A(t_i) + L(A(t_i))/theta - t_i|`; zero up to rounding because
    /// the inverse is built piecewise from this identity.
    pub fn clock_residual(&self, dt: f64) -> f64 {
        self.a_inverse
            .iter()
            .zip(&self.exact_occupation)
            .enumerate()
            .map(|(i, (a, occ))| (2.0 * a + occ - i as f64 * dt).abs())
            .fold(0.0, f64::max)
    }

    /// `max_i |alpha(A(t_i)) - t_i|` with `alpha` interpolated linearly.
    pub fn max_inverse_gap(&self, dt: f64) -> f64 {
        self.a_inverse
            .iter()
            .enumerate()
            .map(|(i, &a)| (self.alpha_at(a) - i as f64 * dt).abs())
            .fold(0.0, f64::max)
    }

    /// Largest single fine-step increment of `alpha`.
    pub fn max_alpha_step(&self) -> f64 {
        self.alpha.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }
}

struct Rngs {
    z: SimRng,
    local: SimRng,
    common: SimRng,
    bridge: SimRng,
}

impl Rngs {
    fn new(seed: u64) -> Self {
        Self {
            z: stream(seed, streams::DIFFUSION),
            local: stream(seed, streams::LOCAL_TIME),
            common: stream(seed, streams::COMMON),
            bridge: stream(seed, streams::BRIDGE),
        }
    }
}

struct Segment {
    x: Vec<f64>,
    x_prime: Vec<f64>,
    together: Vec<bool>,
    clock: SkewTimeChange,
}

fn local_time_draw(a: f64, b: f64, h: f64, rng: &mut SimRng) -> f64 {
    if bridge_touch_probability(a, b, h) < 1e-18 {
        return 0.0;
    }
    sample_bridge_local_time(a, b, h, rng.random::<f64>())
}

/// `|Z|` at fraction `w` of a fine piece of duration `dur` running from radius
/// `a` to radius `b` without touching 0: a three-dimensional Bessel bridge,
/// read off as the norm of a 3d Brownian bridge whose end direction is drawn
/// from its von Mises-Fisher law given the two radii.
fn bessel_bridge_point(a: f64, b: f64, dur: f64, w: f64, rng: &mut SimRng) -> f64 {
    if !(dur > 0.0) || w <= 0.0 {
        return a;
    }
    if w >= 1.0 {
        return b;
    }
    let kappa = a * b / dur;
    let u = 1.0 - rng.random::<f64>();
    let c = if kappa < 1e-12 {
        2.0 * u - 1.0
    } else {
        (1.0 + (u + (1.0 - u) * (-2.0 * kappa).exp()).ln() / kappa).clamp(-1.0, 1.0)
    };
    let sd = (dur * w * (1.0 - w)).sqrt();
    let p0 = a * (1.0 - w) + b * w * c + sd * gauss(rng);
    let p1 = b * w * (1.0 - c * c).sqrt() + sd * gauss(rng);
    let p2 = sd * gauss(rng);
    (p0 * p0 + p1 * p1 + p2 * p2).sqrt()
}

/// Runs the construction for `n_out` output steps of length `dt_out`.
fn theta_segment(
    x1: f64,
    x2: f64,
    params: &CouplingParams,
    dt_out: f64,
    n_out: usize,
    fine_factor: usize,
    band: f64,
    rngs: &mut Rngs,
) -> Segment {
    let theta = params.theta;
    let span = dt_out * n_out as f64;
    let h = dt_out / (2.0 * fine_factor as f64);
    let sqrt_h = h.sqrt();
    let d = params.beta1 - params.beta2;
    let beta = params.skewness();
    let skew = d != 0.0;

    let cap = n_out * fine_factor + 2;
    let mut z = Vec::with_capacity(cap);
    let mut lt = Vec::with_capacity(cap);
    let mut alpha = Vec::with_capacity(cap);
    let mut zc = 0.5 * (x1 - x2);
    if zc.abs() < band {
        zc = 0.0;
    }
    let (mut l, mut al) = (0.0f64, 0.0f64);
    z.push(zc);
    lt.push(l);
    alpha.push(al);
    while al < span {
        let (next, dl) = if skew {
            let y = zc.abs() + sqrt_h * gauss(&mut rngs.z);
            let dl = local_time_draw(zc.abs(), y, h, &mut rngs.local);
            let sign = if dl > 0.0 || zc == 0.0 {
                if rngs.local.random::<f64>() < 0.5 * (1.0 + beta) { 1.0 } else { -1.0 }
            } else {
                zc.signum()
            };
            (sign * y.abs() + d * h, dl)
        } else {
            let b = zc + sqrt_h * gauss(&mut rngs.z);
            (b, local_time_draw(zc, b, h, &mut rngs.local))
        };
        zc = next;
        l += dl;
        al += 2.0 * h + dl / theta;
        z.push(zc);
        lt.push(l);
        alpha.push(al);
    }

    let mid0 = 0.5 * (x1 + x2);
    let drift = 0.5 * (params.beta1 + params.beta2);
    let mut out = Segment {
        x: Vec::with_capacity(n_out + 1),
        x_prime: Vec::with_capacity(n_out + 1),
        together: Vec::with_capacity(n_out + 1),
        clock: SkewTimeChange {
            theta,
            fine_dt: h,
            z: Vec::new(),
            local_time: Vec::new(),
            alpha: Vec::new(),
            a_inverse: Vec::with_capacity(n_out + 1),
            z_at_a: Vec::with_capacity(n_out + 1),
            exact_occupation: Vec::with_capacity(n_out + 1),
        },
    };
    let last = alpha.len() - 1;
    let mut k = 0usize;
    let (mut u_prev, mut b_prime) = (0.0f64, 0.0f64);
    for i in 0..=n_out {
        let tau = i as f64 * dt_out;
        while k < last && alpha[k + 1] <= tau {
            k += 1;
        }
        let sk = k as f64 * h;
        let (a, zv, lv) = if k == last {
            (sk, z[k], lt[k])
        } else {
            let off = tau - alpha[k];
            let dl = lt[k + 1] - lt[k];
            let (za, zb) = (z[k], z[k + 1]);
            if dl > 0.0 {
                let denom = za.abs() + zb.abs();
                let f = if denom == 0.0 { 0.5 } else { za.abs() / denom };
                let d1 = 2.0 * h * f;
                let ds = dl / theta;
                if off < d1 {
                    let r = bessel_bridge_point(za.abs(), 0.0, f * h, off / d1, &mut rngs.bridge);
                    (sk + 0.5 * off, za.signum() * r, lt[k])
                } else if off < d1 + ds {
                    (sk + f * h, 0.0, lt[k] + theta * (off - d1))
                } else {
                    let o = off - d1 - ds;
                    let d3 = 2.0 * h * (1.0 - f);
                    let zv = if d3 > 0.0 {
                        zb.signum() * bessel_bridge_point(0.0, zb.abs(), (1.0 - f) * h, o / d3, &mut rngs.bridge)
                    } else {
                        zb
                    };
                    (sk + f * h + 0.5 * o, zv, lt[k + 1])
                }
            } else if za * zb > 0.0 {
                let r = bessel_bridge_point(za.abs(), zb.abs(), h, off / (2.0 * h), &mut rngs.bridge);
                (sk + 0.5 * off, za.signum() * r, lt[k])
            } else {
                (sk + 0.5 * off, za + (zb - za) * (off / (2.0 * h)), lt[k])
            }
        };
        let u = tau - a;
        let du = (u - u_prev).max(0.0);
        b_prime += du.sqrt() * gauss(&mut rngs.common);
        u_prev = u;
        let m = mid0 + b_prime + drift * tau;
        let together = zv.abs() < band;
        if together {
            out.x.push(m);
            out.x_prime.push(m);
        } else {
            out.x.push(m + zv);
            out.x_prime.push(m - zv);
        }
        out.together.push(together);
        out.clock.a_inverse.push(a);
        out.clock.z_at_a.push(if together { 0.0 } else { zv });
        out.clock.exact_occupation.push(lv / theta);
    }
    out.clock.z = z;
    out.clock.local_time = lt;
    out.clock.alpha = alpha;
    out
}

fn check_theta_params(params: &CouplingParams, fine_factor: usize) -> Result<()> {
    CouplingParams::new(params.beta1, params.beta2, params.theta)?;
    if params.theta == 0.0 {
        return Err(Error::Inadmissible("theta = 0 is the coalescing pair; use sample_coalescing_pair".into()));
    }
    if fine_factor == 0 {
        return Err(invalid("fine_factor", "must be at least 1"));
    }
    Ok(())
}

/// Theta-coupled pair with drifts `beta1`, `beta2` from `(x1, x2)` on `grid`.
pub fn sample_theta_pair(
    x1: f64,
    x2: f64,
    params: &CouplingParams,
    grid: &TimeGrid,
    fine_factor: usize,
    seed: u64,
) -> Result<(PathPair, SkewTimeChange)> {
    check_start(x1, x2)?;
    check_theta_params(params, fine_factor)?;
    let mut rngs = Rngs::new(seed);
    let band = TOGETHER_BAND * grid.span().sqrt();
    let seg = theta_segment(x1, x2, params, grid.dt, grid.n_steps, fine_factor, band, &mut rngs);
    let pair = PathPair {
        grid: *grid,
        x: seg.x,
        x_prime: seg.x_prime,
        together: seg.together,
        kind: CouplingKind::Theta {
            beta1: params.beta1,
            beta2: params.beta2,
            theta: params.theta,
            fine_factor,
        },
    };
    Ok((pair, seg.clock))
}

/// The (p, theta, n)-coupling: on each interval of length `1/n` a
/// Bernoulli(p) draw selects independent motion, otherwise the pair runs as a
/// driftless theta-coupled pair continued from its current state.
#[allow(clippy::too_many_arguments)]
pub fn sample_ptn_pair(
    x1: f64,
    x2: f64,
    p: f64,
    theta: f64,
    n: usize,
    horizon: f64,
    steps_per_interval: usize,
    fine_factor: usize,
    seed: u64,
) -> Result<PathPair> {
    check_start(x1, x2)?;
    let intervals = check_switching(p, n, horizon, steps_per_interval)?;
    let params = CouplingParams::new(0.0, 0.0, theta)?;
    check_theta_params(&params, fine_factor)?;
    let dt = 1.0 / (n * steps_per_interval) as f64;
    let grid = TimeGrid::new(0.0, dt, intervals * steps_per_interval)?;
    let band = TOGETHER_BAND * horizon.sqrt();
    let mut regimes = stream(seed, streams::REGIMES);
    let mut rngs = Rngs::new(seed);
    let mut pair = PathPair {
        grid,
        x: Vec::with_capacity(grid.len()),
        x_prime: Vec::with_capacity(grid.len()),
        together: Vec::with_capacity(grid.len()),
        kind: CouplingKind::Ptn { p, theta, n, steps_per_interval, fine_factor },
    };
    let (mut x, mut xp) = (x1, x2);
    pair.x.push(x);
    pair.x_prime.push(xp);
    pair.together.push(x.to_bits() == xp.to_bits());
    for _ in 0..intervals {
        if regimes.random::<f64>() < p {
            for _ in 0..steps_per_interval {
                (x, xp) = independent_step(x, xp, dt, &mut rngs.z);
                pair.x.push(x);
                pair.x_prime.push(xp);
                pair.together.push(false);
            }
        } else {
            let seg = theta_segment(x, xp, &params, dt, steps_per_interval, fine_factor, band, &mut rngs);
            pair.x.extend_from_slice(&seg.x[1..]);
            pair.x_prime.extend_from_slice(&seg.x_prime[1..]);
            pair.together.extend_from_slice(&seg.together[1..]);
            x = seg.x[steps_per_interval];
            xp = seg.x_prime[steps_per_interval];
        }
    }
    Ok(pair)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{ks_normal, ks_two_sample, occupation_diagonal, quad_covariation, EstimateWithError};

    fn params(theta: f64) -> CouplingParams {
        CouplingParams::new(0.0, 0.0, theta).unwrap()
    }

    #[test]
    fn rejects_bad_parameters() {
        let g = TimeGrid::uniform(1.0, 16).unwrap();
        assert!(sample_theta_pair(0.0, 0.0, &params(0.0), &g, 8, 1).is_err());
        let bad = CouplingParams { beta1: 3.0, beta2: 0.0, theta: 1.0 };
        assert!(sample_theta_pair(0.0, 0.0, &bad, &g, 8, 1).is_err());
        assert!(sample_theta_pair(0.0, 0.0, &params(1.0), &g, 0, 1).is_err());
    }

    #[test]
    fn driftless_case_runs_a_plain_brownian_z() {
        let g = TimeGrid::uniform(1.0, 32).unwrap();
        let (_, clock) = sample_theta_pair(1.0, 0.0, &params(1.0), &g, 16, 5).unwrap();
        assert_eq!(clock.z[0], 0.5);
        let h = clock.fine_dt;
        let incr: Vec<f64> = clock.z.windows(2).map(|w| (w[1] - w[0]) / h.sqrt()).collect();
        assert!(ks_normal(&incr, 0.0, 1.0, 0.01).unwrap().pass);
    }

    #[test]
    fn clock_invariants_hold() {
        let g = TimeGrid::uniform(1.0, 64).unwrap();
        for seed in 0..20 {
            let (pair, clock) = sample_theta_pair(0.0, 0.0, &params(1.0), &g, 32, seed).unwrap();
            pair.validate().unwrap();
            assert!(clock.clock_residual(g.dt) < 1e-12);
            assert!(clock.local_time.windows(2).all(|w| w[1] >= w[0]));
            assert!(clock.alpha.windows(2).all(|w| w[1] - w[0] >= 2.0 * clock.fine_dt * (1.0 - 1e-12)));
            assert!(clock.a_inverse.windows(2).all(|w| w[1] >= w[0]));
            assert!(clock.max_inverse_gap(g.dt) <= clock.max_alpha_step() + 1e-12);
            // Local time grows only across steps whose bridge came near zero.
            for k in 0..clock.z.len() - 1 {
                if clock.local_time[k + 1] > clock.local_time[k] {
                    let (a, b) = (clock.z[k], clock.z[k + 1]);
                    assert!(a * b <= 0.0 || a.abs().min(b.abs()) < 12.0 * clock.fine_dt.sqrt());
                }
            }
            for i in 0..g.len() {
                assert_eq!(pair.together[i], clock.z_at_a[i] == 0.0);
                let gap = pair.x[i] - pair.x_prime[i];
                assert!((gap - 2.0 * clock.z_at_a[i]).abs() < 1e-12);
            }
        }
    }

    /// Weighted mean of a Brownian bridge point at fraction `w`, with weight
    /// the probability (or density) of the constraint on either side.
    fn weighted_bridge_mean(a: f64, b: f64, dur: f64, w: f64, rng: &mut SimRng) -> f64 {
        let (s1, s2) = (dur * w, dur * (1.0 - w));
        let (mut num, mut den) = (0.0, 0.0);
        for _ in 0..400_000 {
            let x = a + s1.sqrt() * gauss(rng);
            if x <= 0.0 {
                continue;
            }
            let left = -(-2.0 * a * x / s1).exp_m1();
            let right = if b > 0.0 {
                // Bridge to b kept positive; the Gaussian factor to b is
                // folded in because x was drawn from the free motion only.
                (-(x - b) * (x - b) / (2.0 * s2)).exp() * -(-2.0 * x * b / s2).exp_m1()
            } else {
                // First passage at 0 exactly at the end.
                x * (-x * x / (2.0 * s2)).exp()
            };
            num += x * left * right;
            den += left * right;
        }
        num / den
    }

    #[test]
    fn bessel_bridge_points_match_conditioned_brownian_bridges() {
        let mut rng = stream(3, streams::ESTIMATOR);
        for &(a, b, w) in &[(0.3, 0.5, 0.5), (0.05, 0.1, 0.3), (0.4, 0.0, 0.6)] {
            let dur = 0.04;
            let draws: Vec<f64> = (0..100_000).map(|_| bessel_bridge_point(a, b, dur, w, &mut rng)).collect();
            assert!(draws.iter().all(|&r| r >= 0.0));
            let est = EstimateWithError::from_samples(&draws);
            let oracle = weighted_bridge_mean(a, b, dur, w, &mut rng);
            assert!((est.value - oracle).abs() < 4.0 * est.std_error + 2e-3, "{a} {b} {w}: {} vs {oracle}", est.value);
        }
        // A bridge leaving 0 is a bridge into 0 read backwards.
        let fwd: Vec<f64> = (0..50_000).map(|_| bessel_bridge_point(0.0, 0.2, 0.04, 0.3, &mut rng)).collect();
        let back: Vec<f64> = (0..50_000).map(|_| bessel_bridge_point(0.2, 0.0, 0.04, 0.7, &mut rng)).collect();
        assert!(ks_two_sample(&fwd, &back, 0.01).unwrap().pass);
        assert_eq!(bessel_bridge_point(0.3, 0.5, 0.04, 0.0, &mut rng), 0.3);
        assert_eq!(bessel_bridge_point(0.3, 0.5, 0.04, 1.0, &mut rng), 0.5);
    }

    #[test]
    fn deterministic_under_seed() {
        let g = TimeGrid::uniform(1.0, 32).unwrap();
        let a = sample_theta_pair(0.2, -0.1, &params(0.5), &g, 8, 77).unwrap();
        let b = sample_theta_pair(0.2, -0.1, &params(0.5), &g, 8, 77).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn marginals_are_brownian_with_drift() {
        let p = CouplingParams::new(0.5, -0.5, 1.0).unwrap();
        let g = TimeGrid::uniform(1.0, 32).unwrap();
        let mut xs = Vec::new();
        let mut xps = Vec::new();
        for r in 0..4_000u64 {
            let (pair, _) = sample_theta_pair(0.0, 0.0, &p, &g, 16, r).unwrap();
            xs.push(pair.x[32]);
            xps.push(pair.x_prime[32]);
        }
        assert!(ks_normal(&xs, 0.5, 1.0, 0.01).unwrap().pass);
        assert!(ks_normal(&xps, -0.5, 1.0, 0.01).unwrap().pass);
    }

    #[test]
    fn tanaka_and_covariation_relations() {
        let theta = 1.0;
        let g = TimeGrid::uniform(1.0, 64).unwrap();
        let mut gap = Vec::new();
        let mut occ = Vec::new();
        let mut cov = Vec::new();
        for r in 0..4_000u64 {
            let (pair, _) = sample_theta_pair(0.0, 0.0, &params(theta), &g, 32, r).unwrap();
            gap.push(pair.terminal_gap());
            occ.push(occupation_diagonal(&pair));
            cov.push(quad_covariation(&pair));
        }
        let lhs = EstimateWithError::from_samples(&gap);
        let rhs: Vec<f64> = occ.iter().map(|o| 2.0 * theta * o).collect();
        let diff: Vec<f64> = gap.iter().zip(&rhs).map(|(a, b)| a - b).collect();
        let de = EstimateWithError::from_samples(&diff);
        assert!(de.value.abs() < 3.0 * de.std_error, "{lhs:?} {de:?}");
        let cd: Vec<f64> = cov.iter().zip(&occ).map(|(a, b)| a - b).collect();
        let ce = EstimateWithError::from_samples(&cd);
        assert!(ce.value.abs() < 3.0 * ce.std_error, "{ce:?}");
    }

    #[test]
    fn swapping_coordinates_swaps_the_law() {
        let p = CouplingParams::new(0.3, -0.2, 1.0).unwrap();
        let g = TimeGrid::uniform(1.0, 32).unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        for r in 0..3_000u64 {
            a.push(sample_theta_pair(0.4, 0.0, &p, &g, 16, r).unwrap().0.terminal_gap());
            b.push(sample_theta_pair(0.0, 0.4, &p.swapped(), &g, 16, r + 10_000).unwrap().0.terminal_gap());
        }
        assert!(ks_two_sample(&a, &b, 0.01).unwrap().pass);
    }

    #[test]
    fn ptn_degenerate_cases() {
        let pair = sample_ptn_pair(0.0, 0.0, 1.0, 1.0, 8, 1.0, 4, 8, 1).unwrap();
        assert!(pair.together.iter().skip(1).all(|&t| !t));
        let pair = sample_ptn_pair(0.0, 0.0, 0.0, 1.0, 8, 1.0, 4, 8, 1).unwrap();
        pair.validate().unwrap();
        assert!(occupation_diagonal(&pair) > 0.0);
    }
}
