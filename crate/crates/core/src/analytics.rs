//! Closed-form and quadrature evaluation of the special functions attached to
//! coalescing and sticky pairs: the mean-absolute-value gain `kappa`, the
//! expected diagonal occupation `lambda`, and first-passage laws.

use crate::error::{invalid, Result};
use crate::paths::{sample_theta_pair, CouplingParams, TimeGrid};
use crate::quadrature::{adaptive_simpson, adaptive_simpson_split};
use crate::rng::child_seed;
use crate::special::{normal_pdf, normal_sf};
use crate::stats::{occupation_diagonal, EstimateWithError};
use serde::{Deserialize, Serialize};

pub use crate::special::normal_cdf;

/// Absolute tolerance used for the Simpson integrals in this module.
pub const SIMPSON_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalParams {
    pub mean: f64,
    pub variance: f64,
}

impl NormalParams {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !(variance > 0.0) || !variance.is_finite() {
            return Err(invalid("variance", format!("must be positive and finite, got {variance}")));
        }
        if !mean.is_finite() {
            return Err(invalid("mean", "must be finite"));
        }
        Ok(Self { mean, variance })
    }

    pub fn sd(&self) -> f64 {
        self.variance.sqrt()
    }

    /// `E|Y|` for `Y ~ N(mean, variance)` (folded-normal mean).
    pub fn mean_abs(&self) -> f64 {
        let sd = self.sd();
        let a = self.mean.abs() / sd;
        self.mean.abs() + 2.0 * sd * (normal_pdf(a) - a * normal_sf(a))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaQuery {
    pub t: f64,
    pub x: f64,
}

impl KappaQuery {
    pub fn new(t: f64, x: f64) -> Result<Self> {
        check_time(t)?;
        if !x.is_finite() {
            return Err(invalid("x", "must be finite"));
        }
        Ok(Self { t, x })
    }

    pub fn eval(&self) -> f64 {
        kappa_unchecked(self.t, self.x)
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(invalid("t", format!("must be positive and finite, got {t}")));
    }
    Ok(())
}

/// `kappa_t(x) = E|B(2t) + x| - |x|` with `B` a standard Brownian motion.
///
/// With `s = sqrt(2t)` and `a = |x|/s` this is `2s (phi(a) - a (1 - Phi(a)))`,
/// which stays accurate when `|x|` is many standard deviations out.
pub fn kappa(t: f64, x: f64) -> Result<f64> {
    Ok(KappaQuery::new(t, x)?.eval())
}

pub(crate) fn kappa_unchecked(t: f64, x: f64) -> f64 {
    let s = (2.0 * t).sqrt();
    let a = x.abs() / s;
    (2.0 * s * (normal_pdf(a) - a * normal_sf(a))).max(0.0)
}

/// `kappa_t(x)` by direct adaptive quadrature of `E[|x + s Z| - |x|]` over
/// `Z in [-12, 12]`, split at the kink. Independent of the closed form.
pub fn kappa_quadrature(t: f64, x: f64, tol: f64) -> Result<f64> {
    check_time(t)?;
    let s = (2.0 * t).sqrt();
    let kink = -x / s;
    Ok(adaptive_simpson_split(
        |z| ((x + s * z).abs() - x.abs()) * normal_pdf(z),
        -12.0,
        12.0,
        &[kink],
        tol,
    ))
}

/// `P(T_x <= t)` for a Brownian motion with variance `var_rate` per unit time
/// started at `x > 0`, `T_x` its hitting time of zero. Reflection principle:
/// `erfc(x / sqrt(2 var_rate t))`. Negative and zero `t` give 0.
pub fn first_passage_cdf(t: f64, x: f64, var_rate: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(invalid("x", format!("must be positive and finite, got {x}")));
    }
    if !(var_rate > 0.0) || !var_rate.is_finite() {
        return Err(invalid("var_rate", format!("must be positive, got {var_rate}")));
    }
    if t.is_nan() {
        return Err(invalid("t", "is NaN"));
    }
    Ok(first_passage_cdf_unchecked(t, x, var_rate))
}

pub(crate) fn first_passage_cdf_unchecked(t: f64, x: f64, var_rate: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t.is_infinite() {
        return 1.0;
    }
    libm::erfc(x / (2.0 * var_rate * t).sqrt())
}

/// `lambda_t(x)`: expected time by `t` that two coalescing Brownian motions
/// started `x` apart spend together, `E[(t - T_x)^+] = int_0^t P(T_x <= s) ds`.
pub fn lambda_coalescing(t: f64, x: f64) -> Result<f64> {
    check_time(t)?;
    if !(x >= 0.0) || !x.is_finite() {
        return Err(invalid("x", format!("must be non-negative and finite, got {x}")));
    }
    if x == 0.0 {
        return Ok(t);
    }
    Ok(adaptive_simpson(
        |s| first_passage_cdf_unchecked(s, x, 2.0),
        0.0,
        t,
        SIMPSON_TOL,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaThetaConfig {
    pub replicas: usize,
    /// Output grid steps over `[0, t]`.
    pub n_steps: usize,
    pub fine_factor: usize,
    pub seed: u64,
}

impl Default for LambdaThetaConfig {
    fn default() -> Self {
        Self {
            replicas: 2_000,
            n_steps: 256,
            fine_factor: 64,
            seed: 0x1a3b_da7a,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaThetaEstimate {
    /// Grid estimate of the diagonal occupation from the `together` channel.
    pub occupation: EstimateWithError,
    /// The same quantity read off the time change: local time of the
    /// auxiliary diffusion at `A(t)`, divided by theta.
    pub via_local_time: EstimateWithError,
}

/// Monte Carlo estimate of `lambda^theta_t(x)`, the expected diagonal
/// occupation by time `t` of a theta-coupled pair started `x` apart.
pub fn lambda_theta(t: f64, x: f64, theta: f64, cfg: &LambdaThetaConfig) -> Result<LambdaThetaEstimate> {
    check_time(t)?;
    if !(x >= 0.0) || !x.is_finite() {
        return Err(invalid("x", format!("must be non-negative and finite, got {x}")));
    }
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(invalid("theta", format!("must be positive, got {theta}")));
    }
    if cfg.replicas == 0 {
        return Err(invalid("replicas", "must be at least 1"));
    }
    let grid = TimeGrid::new(0.0, t / cfg.n_steps as f64, cfg.n_steps)?;
    let params = CouplingParams::new(0.0, 0.0, theta)?;
    let mut occ = Vec::with_capacity(cfg.replicas);
    let mut via = Vec::with_capacity(cfg.replicas);
    for r in 0..cfg.replicas {
        let (pair, clock) = sample_theta_pair(x, 0.0, &params, &grid, cfg.fine_factor, child_seed(cfg.seed, r as u64))?;
        occ.push(occupation_diagonal(&pair));
        via.push(*clock.exact_occupation.last().expect("non-empty grid"));
    }
    Ok(LambdaThetaEstimate {
        occupation: EstimateWithError::from_samples(&occ),
        via_local_time: EstimateWithError::from_samples(&via),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, streams};
    use rand::Rng;
    use rand_distr::StandardNormal;
    use std::f64::consts::PI;

    /// Closed form of `int_0^t erfc(x / (2 sqrt s)) ds`, derived by
    /// differentiating `(s + x^2/2) erfc(x/(2 sqrt s)) - x sqrt(s/pi) exp(-x^2/(4s))`.
    fn lambda_closed(t: f64, x: f64) -> f64 {
        let u = x / (2.0 * t.sqrt());
        (t + 0.5 * x * x) * libm::erfc(u) - x * (t / PI).sqrt() * (-u * u).exp()
    }

    #[test]
    fn kappa_at_origin_is_two_over_root_pi() {
        let v = kappa(1.0, 0.0).unwrap();
        assert!((v - 2.0 / PI.sqrt()).abs() < 1e-15);
        assert!((v - std::f64::consts::FRAC_2_SQRT_PI).abs() < 1e-15);
    }

    #[test]
    fn kappa_is_even_and_decays() {
        for &x in &[0.1, 1.0, 3.0] {
            assert_eq!(kappa(1.0, x).unwrap(), kappa(1.0, -x).unwrap());
        }
        let mut prev = kappa(1.0, 0.0).unwrap();
        for i in 1..60 {
            let v = kappa(1.0, 0.25 * i as f64).unwrap();
            assert!(v <= prev && v >= 0.0);
            prev = v;
        }
        assert!(kappa(1.0, 40.0).unwrap() < 1e-100);
    }

    #[test]
    fn kappa_matches_quadrature_at_one_one() {
        let closed = kappa(1.0, 1.0).unwrap();
        let quad = kappa_quadrature(1.0, 1.0, 1e-13).unwrap();
        assert!((closed - quad).abs() < 1e-10, "{closed} vs {quad}");
    }

    #[test]
    fn kappa_matches_first_passage_representation() {
        // kappa_t(x) = int_0^t P(T_x in ds) sqrt(4(t - s)/pi)
        //            = int_0^t P(T_x <= s) / sqrt(pi (t - s)) ds, substituting r = t - s to remove the endpoint singularity.
        for &(t, x) in &[(1.0f64, 1.0f64), (0.5, 0.3), (2.0, 2.0)] {
            let rep = adaptive_simpson(
                |r: f64| {
                    let w = r * r;
                    2.0 * first_passage_cdf_unchecked(t - w, x, 2.0) / PI.sqrt()
                },
                0.0,
                t.sqrt(),
                1e-12,
            );
            assert!((rep - kappa(t, x).unwrap()).abs() < 1e-9, "t={t} x={x}");
        }
    }

    #[test]
    fn kappa_rejects_nonpositive_time() {
        assert!(kappa(0.0, 1.0).is_err());
        assert!(kappa(-1.0, 1.0).is_err());
    }

    #[test]
    fn folded_normal_mean() {
        let p = NormalParams::new(0.0, 1.0).unwrap();
        assert!((p.mean_abs() - (2.0 / PI).sqrt()).abs() < 1e-15);
        assert!(NormalParams::new(0.0, 0.0).is_err());
    }

    #[test]
    fn lambda_edge_values() {
        assert_eq!(lambda_coalescing(1.0, 0.0).unwrap(), 1.0);
        assert!(lambda_coalescing(1.0, 100.0).unwrap() < 1e-12);
        assert!(lambda_coalescing(1.0, -1.0).is_err());
    }

    #[test]
    fn lambda_matches_its_closed_form() {
        for &(t, x) in &[(1.0, 1.0), (0.01, 0.1), (10.0, 5.0), (0.1, 1.0)] {
            let v = lambda_coalescing(t, x).unwrap();
            assert!((v - lambda_closed(t, x)).abs() < 1e-10, "t={t} x={x}");
        }
    }

    /// Euler walk of a variance-2 Brownian motion from `x`, with the
    /// bridge-crossing correction between steps, recording `(t - T)^+` and `1(T <= t)`.
    fn mc_first_passage(x: f64, t: f64, replicas: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = stream(seed, streams::ESTIMATOR);
        let steps = 400;
        let dt = t / steps as f64;
        let mut gain = Vec::with_capacity(replicas);
        let mut hit = Vec::with_capacity(replicas);
        for _ in 0..replicas {
            let mut z = x;
            let mut tau = None;
            for i in 0..steps {
                let next = z + (2.0 * dt).sqrt() * rng.sample::<f64, _>(StandardNormal);
                let crossed = next <= 0.0 || rng.random::<f64>() < (-z * next / dt).exp();
                if crossed {
                    tau = Some((i as f64 + 0.5) * dt);
                    break;
                }
                z = next;
            }
            gain.push(tau.map_or(0.0, |s| t - s));
            hit.push(if tau.is_some() { 1.0 } else { 0.0 });
        }
        (gain, hit)
    }

    #[test]
    fn lambda_and_first_passage_match_monte_carlo() {
        let (gain, hit) = mc_first_passage(1.0, 1.0, 100_000, 11);
        let g = EstimateWithError::from_samples(&gain);
        let h = EstimateWithError::from_samples(&hit);
        let lam = lambda_coalescing(1.0, 1.0).unwrap();
        let cdf = first_passage_cdf(1.0, 1.0, 2.0).unwrap();
        // Hitting times are located to within half a step, which adds at most dt/2 of bias to the gain.
        assert!((g.value - lam).abs() < 3.0 * g.std_error + 0.5 / 400.0, "{g:?} vs {lam}");
        assert!((h.value - cdf).abs() < 3.0 * h.std_error, "{h:?} vs {cdf}");
    }

    #[test]
    fn first_passage_limits() {
        assert_eq!(first_passage_cdf(0.0, 1.0, 2.0).unwrap(), 0.0);
        assert_eq!(first_passage_cdf(-1.0, 1.0, 2.0).unwrap(), 0.0);
        assert!(first_passage_cdf(1e12, 1.0, 2.0).unwrap() > 1.0 - 1e-6);
        assert_eq!(first_passage_cdf(f64::INFINITY, 1.0, 2.0).unwrap(), 1.0);
        assert!(first_passage_cdf(1.0, 0.0, 2.0).is_err());
    }

    #[test]
    fn kappa_scaling_and_monotone_limit() {
        for &x in &[0.0, 0.1, 1.0, 5.0] {
            for &t in &[0.01, 0.1, 1.0, 10.0] {
                let lhs = kappa(t, x).unwrap();
                let rhs = t.sqrt() * kappa(1.0, x / t.sqrt()).unwrap();
                assert!((lhs - rhs).abs() < 1e-14 * (1.0 + lhs));
            }
            // t^{-1/2} kappa_t(x) decreases as t decreases.
            let mut prev = f64::INFINITY;
            for j in 0..20 {
                let t = 4f64.powi(-j);
                let v = kappa(t, x).unwrap() / t.sqrt();
                assert!(v <= prev * (1.0 + 1e-14));
                prev = v;
            }
            if x != 0.0 {
                assert!(prev < 1e-6);
            } else {
                assert!((prev - 2.0 / PI.sqrt()).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn comparison_inequality_holds() {
        for &x in &[0.0, 0.1, 1.0, 5.0] {
            for &t in &[0.01, 0.1, 1.0, 10.0] {
                let lhs = (4.0 / (PI * t)).sqrt() * lambda_coalescing(t, x).unwrap();
                assert!(lhs <= kappa(t, x).unwrap() + 1e-12, "t={t} x={x}");
            }
        }
    }
}
