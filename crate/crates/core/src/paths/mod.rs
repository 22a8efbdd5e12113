//! Samplers for coupled pairs of Brownian motions.
//!
//! All samplers are pure functions of their inputs and a seed. Each returns a
//! [`PathPair`] on a [`TimeGrid`] with an explicit `together` channel, set
//! exactly where the two coordinates are bit-equal because of the coupling.

mod bridge;
pub(crate) mod io;
mod theta;

pub use bridge::{
    bridge_hit_probability, bridge_local_time_mean, bridge_touch_probability, sample_bridge_local_time,
};
pub(crate) use bridge::signed_hit_probability;
pub use theta::{sample_ptn_pair, sample_theta_pair, SkewTimeChange};

use crate::error::{invalid, Error, Result};
use crate::rng::{stream, streams, SimRng};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Retry bound for the truncated-normal draws.
pub const MAX_RETRIES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub dt: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, dt: f64, n_steps: usize) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(invalid("dt", format!("must be positive, got {dt}")));
        }
        if !t0.is_finite() {
            return Err(invalid("t0", "must be finite"));
        }
        if n_steps == 0 {
            return Err(invalid("n_steps", "must be at least 1"));
        }
        Ok(Self { t0, dt, n_steps })
    }

    /// Grid over `[0, horizon]` with `n_steps` equal steps.
    pub fn uniform(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon > 0.0) {
            return Err(invalid("horizon", format!("must be positive, got {horizon}")));
        }
        Self::new(0.0, horizon / n_steps.max(1) as f64, n_steps)
    }

    /// Number of grid points, `n_steps + 1`.
    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn span(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    pub fn end(&self) -> f64 {
        self.time(self.n_steps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingParams {
    pub beta1: f64,
    pub beta2: f64,
    pub theta: f64,
}

impl CouplingParams {
    /// Admissible when `|beta1 - beta2| <= 2 theta`; `theta = 0` is the
    /// coalescing case and then requires equal drifts.
    pub fn new(beta1: f64, beta2: f64, theta: f64) -> Result<Self> {
        if !beta1.is_finite() || !beta2.is_finite() || !theta.is_finite() {
            return Err(Error::Inadmissible("parameters must be finite".into()));
        }
        if theta < 0.0 {
            return Err(Error::Inadmissible(format!("theta must be non-negative, got {theta}")));
        }
        if theta == 0.0 && beta1 != beta2 {
            return Err(Error::Inadmissible("theta = 0 requires beta1 = beta2".into()));
        }
        if (beta1 - beta2).abs() > 2.0 * theta {
            return Err(Error::Inadmissible(format!(
                "|beta1 - beta2| = {} exceeds 2 theta = {}",
                (beta1 - beta2).abs(),
                2.0 * theta
            )));
        }
        Ok(Self { beta1, beta2, theta })
    }

    /// Skewness of the auxiliary diffusion, `(beta1 - beta2) / (2 theta)`.
    pub fn skewness(&self) -> f64 {
        if self.theta == 0.0 {
            0.0
        } else {
            (self.beta1 - self.beta2) / (2.0 * self.theta)
        }
    }

    pub fn swapped(&self) -> Self {
        Self { beta1: self.beta2, beta2: self.beta1, theta: self.theta }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CouplingKind {
    Independent,
    Coalescing,
    Pn { p: f64, n: usize, steps_per_interval: usize },
    Theta { beta1: f64, beta2: f64, theta: f64, fine_factor: usize },
    Ptn { p: f64, theta: f64, n: usize, steps_per_interval: usize, fine_factor: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPair {
    pub grid: TimeGrid,
    pub x: Vec<f64>,
    pub x_prime: Vec<f64>,
    pub together: Vec<bool>,
    pub kind: CouplingKind,
}

impl PathPair {
    /// `X - X'` at each grid point.
    pub fn diff(&self) -> Vec<f64> {
        self.x.iter().zip(&self.x_prime).map(|(a, b)| a - b).collect()
    }

    pub fn terminal_gap(&self) -> f64 {
        let n = self.grid.n_steps;
        (self.x[n] - self.x_prime[n]).abs()
    }

    /// Checks array lengths and that `together` implies bit-equality.
    pub fn validate(&self) -> Result<()> {
        let n = self.grid.len();
        if self.x.len() != n || self.x_prime.len() != n || self.together.len() != n {
            return Err(invalid("pair", "array lengths differ from the grid"));
        }
        for i in 0..n {
            if self.together[i] && self.x[i].to_bits() != self.x_prime[i].to_bits() {
                return Err(invalid("pair", format!("together at {i} but coordinates differ")));
            }
        }
        Ok(())
    }

    fn with_capacity(grid: TimeGrid, kind: CouplingKind) -> Self {
        let n = grid.len();
        Self {
            grid,
            x: Vec::with_capacity(n),
            x_prime: Vec::with_capacity(n),
            together: Vec::with_capacity(n),
            kind,
        }
    }

    fn push(&mut self, x: f64, xp: f64) {
        let together = x.to_bits() == xp.to_bits();
        self.x.push(x);
        self.x_prime.push(xp);
        self.together.push(together);
    }
}

#[inline]
pub(crate) fn gauss(rng: &mut SimRng) -> f64 {
    rng.sample(StandardNormal)
}

/// `|Z|` for standard normal `Z` conditioned on `|Z| >= c`.
pub(crate) fn abs_normal_tail(c: f64, rng: &mut SimRng) -> Result<f64> {
    if c < 1.0 {
        for _ in 0..MAX_RETRIES {
            let z = gauss(rng).abs();
            if z >= c {
                return Ok(z);
            }
        }
    } else {
        // Marsaglia's tail method: propose from the Rayleigh-type tail
        // density z exp(-z^2/2) above c and accept with probability c / z.
        for _ in 0..MAX_RETRIES {
            let u: f64 = rng.random();
            let z = (c * c - 2.0 * (1.0 - u).ln()).sqrt();
            if rng.random::<f64>() * z <= c {
                return Ok(z);
            }
        }
    }
    Err(Error::SamplerExhausted { what: "normal tail", retries: MAX_RETRIES })
}

/// One exact step of length `dt` of two unit-variance Brownian motions that
/// coalesce on meeting. Returns the new positions, bit-equal if they met.
///
/// Independent Gaussian increments are proposed; the difference then
/// hits zero inside the step with the bridge probability. On a hit the meeting
/// time is drawn from the first-passage law conditioned on `T <= dt`, and the
/// merged position from the independent half-sum plus the post-merge increment.
pub(crate) fn coalescing_step(x: f64, xp: f64, dt: f64, rng: &mut SimRng) -> Result<(f64, f64)> {
    let sd = dt.sqrt();
    if x.to_bits() == xp.to_bits() {
        let y = x + sd * gauss(rng);
        return Ok((y, y));
    }
    let dx = sd * gauss(rng);
    let dxp = sd * gauss(rng);
    let a = x - xp;
    let b = a + dx - dxp;
    let hit = rng.random::<f64>() < signed_hit_probability(a, b, dt, 2.0);
    if !hit {
        return Ok((x + dx, xp + dxp));
    }
    // T = a^2 / (2 Z^2) for the variance-2 difference; T <= dt iff |Z| >= |a| / sqrt(2 dt).
    let z = abs_normal_tail(a.abs() / (2.0 * dt).sqrt(), rng)?;
    let tau = (a * a / (2.0 * z * z)).min(dt);
    let mid = 0.5 * (x + xp) + (0.5 * tau).sqrt() * gauss(rng);
    let y = mid + (dt - tau).sqrt() * gauss(rng);
    Ok((y, y))
}

#[inline]
pub(crate) fn independent_step(x: f64, xp: f64, dt: f64, rng: &mut SimRng) -> (f64, f64) {
    let sd = dt.sqrt();
    (x + sd * gauss(rng), xp + sd * gauss(rng))
}

fn check_start(x1: f64, x2: f64) -> Result<()> {
    if !x1.is_finite() || !x2.is_finite() {
        return Err(invalid("start", "must be finite"));
    }
    Ok(())
}

/// Two unit-variance Brownian motions from `x1`, `x2` that move independently
/// until they meet and coincide afterwards. Exact in law at grid points.
pub fn sample_coalescing_pair(x1: f64, x2: f64, grid: &TimeGrid, seed: u64) -> Result<PathPair> {
    check_start(x1, x2)?;
    let mut rng = stream(seed, streams::DIFFUSION);
    let mut pair = PathPair::with_capacity(*grid, CouplingKind::Coalescing);
    let (mut x, mut xp) = (x1, x2);
    pair.push(x, xp);
    for _ in 0..grid.n_steps {
        (x, xp) = coalescing_step(x, xp, grid.dt, &mut rng)?;
        pair.push(x, xp);
    }
    Ok(pair)
}

/// Two independent unit-variance Brownian motions.
pub fn sample_independent_pair(x1: f64, x2: f64, grid: &TimeGrid, seed: u64) -> Result<PathPair> {
    check_start(x1, x2)?;
    let mut rng = stream(seed, streams::DIFFUSION);
    let mut pair = PathPair::with_capacity(*grid, CouplingKind::Independent);
    let (mut x, mut xp) = (x1, x2);
    pair.push(x, xp);
    for _ in 0..grid.n_steps {
        (x, xp) = independent_step(x, xp, grid.dt, &mut rng);
        pair.push(x, xp);
    }
    Ok(pair)
}

pub(crate) fn check_switching(p: f64, n: usize, horizon: f64, steps_per_interval: usize) -> Result<usize> {
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid("p", format!("must lie in [0, 1], got {p}")));
    }
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    if steps_per_interval == 0 {
        return Err(invalid("steps_per_interval", "must be at least 1"));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(invalid("horizon", format!("must be positive, got {horizon}")));
    }
    let intervals = horizon * n as f64;
    let rounded = intervals.round();
    if (intervals - rounded).abs() > 1e-9 * intervals.max(1.0) || rounded < 1.0 {
        return Err(invalid("horizon", format!("must be a positive multiple of 1/n = {}", 1.0 / n as f64)));
    }
    Ok(rounded as usize)
}

/// The (p, n)-coupling: on each interval `[k/n, (k+1)/n]` an independent
/// Bernoulli(p) draw `Y_k` selects independent motion (`Y_k = 1`) or
/// coalescing motion (`Y_k = 0`), each sampled exactly on a sub-grid of
/// `steps_per_interval` steps. A pair that coalesced in one interval separates
/// again at the start of an independent interval.
pub fn sample_pn_pair(
    x1: f64,
    x2: f64,
    p: f64,
    n: usize,
    horizon: f64,
    steps_per_interval: usize,
    seed: u64,
) -> Result<PathPair> {
    check_start(x1, x2)?;
    let intervals = check_switching(p, n, horizon, steps_per_interval)?;
    let grid = TimeGrid::new(0.0, 1.0 / (n * steps_per_interval) as f64, intervals * steps_per_interval)?;
    let mut regimes = stream(seed, streams::REGIMES);
    let mut rng = stream(seed, streams::DIFFUSION);
    let mut pair = PathPair::with_capacity(grid, CouplingKind::Pn { p, n, steps_per_interval });
    let (mut x, mut xp) = (x1, x2);
    pair.push(x, xp);
    for _ in 0..intervals {
        let independent = regimes.random::<f64>() < p;
        for _ in 0..steps_per_interval {
            (x, xp) = if independent {
                independent_step(x, xp, grid.dt, &mut rng)
            } else {
                coalescing_step(x, xp, grid.dt, &mut rng)?
            };
            pair.push(x, xp);
        }
    }
    Ok(pair)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::first_passage_cdf;
    use crate::stats::{ks_normal, EstimateWithError};

    #[test]
    fn grid_basics() {
        let g = TimeGrid::new(1.0, 0.25, 4).unwrap();
        assert_eq!(g.len(), 5);
        assert_eq!(g.end(), 2.0);
        assert!(TimeGrid::new(0.0, 0.0, 4).is_err());
    }

    #[test]
    fn admissibility() {
        assert!(CouplingParams::new(0.5, -0.5, 0.5).is_ok());
        assert!(CouplingParams::new(1.0, -0.5, 0.5).is_err());
        assert!(CouplingParams::new(0.1, 0.0, 0.0).is_err());
        assert!(CouplingParams::new(0.0, 0.0, 0.0).is_ok());
        assert!(CouplingParams::new(0.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn coalescing_from_equal_starts_is_one_path() {
        let g = TimeGrid::uniform(1.0, 100).unwrap();
        let pair = sample_coalescing_pair(0.3, 0.3, &g, 1).unwrap();
        assert!(pair.together.iter().all(|&t| t));
        pair.validate().unwrap();
    }

    #[test]
    fn coalescing_stays_merged_and_is_deterministic() {
        let g = TimeGrid::uniform(2.0, 400).unwrap();
        let a = sample_coalescing_pair(0.0, 0.2, &g, 9).unwrap();
        let b = sample_coalescing_pair(0.0, 0.2, &g, 9).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
        let first = a.together.iter().position(|&t| t).expect("meets with high probability");
        assert!(a.together[first..].iter().all(|&t| t));
        for i in first..g.n_steps {
            assert_eq!((a.x[i + 1] - a.x[i]).to_bits(), (a.x_prime[i + 1] - a.x_prime[i]).to_bits());
        }
    }

    #[test]
    fn coalescing_meeting_law_matches_first_passage() {
        let g = TimeGrid::uniform(1.0, 16).unwrap();
        let reps = 100_000;
        let met: Vec<f64> = (0..reps)
            .map(|r| {
                let pair = sample_coalescing_pair(0.5, -0.5, &g, r as u64).unwrap();
                if pair.together[g.n_steps] { 1.0 } else { 0.0 }
            })
            .collect();
        let est = EstimateWithError::from_samples(&met);
        let exact = first_passage_cdf(1.0, 1.0, 2.0).unwrap();
        assert!((est.value - exact).abs() < 3.0 * est.std_error, "{est:?} vs {exact}");
    }

    #[test]
    fn coalescing_marginals_are_brownian() {
        let g = TimeGrid::uniform(1.0, 8).unwrap();
        let mut xs = Vec::new();
        let mut xps = Vec::new();
        for r in 0..10_000u64 {
            let pair = sample_coalescing_pair(0.0, 0.4, &g, r).unwrap();
            xs.push(pair.x[8]);
            xps.push(pair.x_prime[8] - 0.4);
        }
        assert!(ks_normal(&xs, 0.0, 1.0, 0.01).unwrap().pass);
        assert!(ks_normal(&xps, 0.0, 1.0, 0.01).unwrap().pass);
    }

    #[test]
    fn pn_degenerate_cases() {
        let pair = sample_pn_pair(0.0, 0.0, 1.0, 16, 1.0, 4, 3).unwrap();
        assert!(pair.together.iter().skip(1).all(|&t| !t));
        let pair = sample_pn_pair(0.0, 0.0, 0.0, 16, 1.0, 4, 3).unwrap();
        assert!(pair.together.iter().all(|&t| t));
        assert!(sample_pn_pair(0.0, 0.0, 1.5, 16, 1.0, 4, 3).is_err());
        assert!(sample_pn_pair(0.0, 0.0, 0.5, 16, 1.01, 4, 3).is_err());
    }

    #[test]
    fn tail_sampler_respects_truncation() {
        let mut rng = stream(1, streams::DIFFUSION);
        for &c in &[0.0, 0.3, 1.0, 3.0, 12.0] {
            for _ in 0..1000 {
                assert!(abs_normal_tail(c, &mut rng).unwrap() >= c);
            }
        }
    }

    #[test]
    fn tail_sampler_mean_matches_mills_ratio() {
        // E[|Z| | |Z| >= c] = phi(c) / (1 - Phi(c)).
        let mut rng = stream(2, streams::DIFFUSION);
        for &c in &[0.5, 2.0] {
            let s: Vec<f64> = (0..50_000).map(|_| abs_normal_tail(c, &mut rng).unwrap()).collect();
            let est = EstimateWithError::from_samples(&s);
            let exact = crate::special::normal_pdf(c) / crate::special::normal_sf(c);
            assert!((est.value - exact).abs() < 3.0 * est.std_error);
        }
    }
}
