//! N-particle systems: sticky-coalescing systems and the N-point motion of
//! the erosion flow, both built by switching between independent and
//! coalescing motion on intervals of length `1/n`, plus the theta(k:l)
//! parameter families.

use crate::error::{invalid, Error, Result};
use crate::generator::{consistency_check, ThetaFamily};
use crate::paths::{coalescing_step, gauss, signed_hit_probability, CouplingKind, PathPair, TimeGrid};
use crate::rng::{stream, streams, SimRng};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BundleKind {
    Scs { m: usize, theta: f64, n_switch: usize, sub_steps: usize },
    Erosion { theta: f64, n_switch: usize, sub_steps: usize },
    PartialCoalescing { independent: usize, sub_steps: usize },
    /// A two-particle bundle read off a [`PathPair`].
    Pair { coupling: CouplingKind },
}

/// Grid-sampled paths of `N` particles with a cluster label per particle and
/// grid point: the smallest index of a particle at a bit-equal position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathBundle {
    pub grid: TimeGrid,
    /// `paths[i][t]`.
    pub paths: Vec<Vec<f64>>,
    /// `cluster_id[t][i]`.
    pub cluster_id: Vec<Vec<usize>>,
    pub kind: BundleKind,
}

impl PathBundle {
    fn new(grid: TimeGrid, n: usize, kind: BundleKind) -> Self {
        Self {
            grid,
            paths: vec![Vec::with_capacity(grid.len()); n],
            cluster_id: Vec::with_capacity(grid.len()),
            kind,
        }
    }

    pub fn n_paths(&self) -> usize {
        self.paths.len()
    }

    fn push(&mut self, pos: &[f64]) {
        for (p, &v) in self.paths.iter_mut().zip(pos) {
            p.push(v);
        }
        self.cluster_id.push(cluster_labels(pos));
    }

    /// Positions at grid index `t`.
    pub fn state(&self, t: usize) -> Vec<f64> {
        self.paths.iter().map(|p| p[t]).collect()
    }

    pub fn state_into(&self, t: usize, out: &mut [f64]) {
        for (o, p) in out.iter_mut().zip(&self.paths) {
            *o = p[t];
        }
    }

    /// Number of distinct clusters at grid index `t`.
    pub fn cluster_count(&self, t: usize) -> usize {
        self.cluster_id[t].iter().enumerate().filter(|(i, &c)| *i == c).count()
    }

    /// Labels form an equivalence given by bit-equality.
    pub fn validate(&self) -> Result<()> {
        let n = self.grid.len();
        if self.paths.iter().any(|p| p.len() != n) || self.cluster_id.len() != n {
            return Err(invalid("bundle", "lengths differ from the grid"));
        }
        for t in 0..n {
            if self.cluster_id[t] != cluster_labels(&self.state(t)) {
                return Err(invalid("bundle", format!("inconsistent cluster labels at {t}")));
            }
        }
        Ok(())
    }

    /// Columns `t, x_1..x_N, c_1..c_N`.
    pub fn to_csv(&self) -> String {
        let n = self.n_paths();
        let mut s = String::from("t");
        for i in 1..=n {
            let _ = write!(s, ",x_{i}");
        }
        for i in 1..=n {
            let _ = write!(s, ",c_{i}");
        }
        s.push('\n');
        for t in 0..self.grid.len() {
            let _ = write!(s, "{}", self.grid.time(t));
            for p in &self.paths {
                let _ = write!(s, ",{}", p[t]);
            }
            for c in &self.cluster_id[t] {
                let _ = write!(s, ",{}", c + 1);
            }
            s.push('\n');
        }
        s
    }
}

impl From<&PathPair> for PathBundle {
    fn from(pair: &PathPair) -> Self {
        let mut b = PathBundle::new(pair.grid, 2, BundleKind::Pair { coupling: pair.kind });
        for (x, xp) in pair.x.iter().zip(&pair.x_prime) {
            b.push(&[*x, *xp]);
        }
        b
    }
}

fn cluster_labels(pos: &[f64]) -> Vec<usize> {
    (0..pos.len())
        .map(|i| (0..=i).find(|&j| pos[j].to_bits() == pos[i].to_bits()).expect("i matches itself"))
        .collect()
}

/// Per-interval, per-particle Bernoulli(p) indicators `Y_k^i` and the sets
/// `S_k = {i : Y_k^i = 1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchingSchedule {
    pub n: usize,
    pub p: f64,
    pub seed: u64,
    pub y: Vec<Vec<bool>>,
    pub s_sets: Vec<Vec<usize>>,
}

impl SwitchingSchedule {
    /// Draws from the regime stream of `seed`, interval by interval and
    /// particle by particle.
    pub fn draw(n: usize, p: f64, intervals: usize, particles: usize, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(invalid("p", format!("must lie in [0, 1], got {p}")));
        }
        let mut rng = stream(seed, streams::REGIMES);
        let y: Vec<Vec<bool>> = (0..intervals)
            .map(|_| (0..particles).map(|_| rng.random::<f64>() < p).collect())
            .collect();
        let s_sets = y
            .iter()
            .map(|row| row.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect())
            .collect();
        Ok(Self { n, p, seed, y, s_sets })
    }
}

/// One step of length `dt` for the particles in `group`, which coalesce on
/// meeting. Particles at bit-equal positions form a cluster and move as one.
///
/// Two clusters use the exact pair step. With three or more, every cluster
/// proposes an independent Gaussian increment, each pair of clusters (in
/// ascending order of their smallest members) merges when its bridge hits
/// zero, and a merged group takes the proposal of its smallest member.
pub(crate) fn coalescing_group_step(pos: &mut [f64], group: &[usize], dt: f64, rng: &mut SimRng) -> Result<()> {
    let mut roots: Vec<usize> = Vec::with_capacity(group.len());
    let mut owner: Vec<usize> = Vec::with_capacity(group.len());
    for &i in group {
        match roots.iter().position(|&r| pos[r].to_bits() == pos[i].to_bits()) {
            Some(c) => owner.push(c),
            None => {
                owner.push(roots.len());
                roots.push(i);
            }
        }
    }
    let sd = dt.sqrt();
    let new: Vec<f64> = match roots.len() {
        0 => return Ok(()),
        1 => vec![pos[roots[0]] + sd * gauss(rng)],
        2 => {
            let (a, b) = coalescing_step(pos[roots[0]], pos[roots[1]], dt, rng)?;
            vec![a, b]
        }
        m => {
            let prop: Vec<f64> = roots.iter().map(|&r| pos[r] + sd * gauss(rng)).collect();
            let mut parent: Vec<usize> = (0..m).collect();
            fn find(parent: &mut [usize], mut c: usize) -> usize {
                while parent[c] != c {
                    parent[c] = parent[parent[c]];
                    c = parent[c];
                }
                c
            }
            for c in 0..m {
                for d in c + 1..m {
                    let a = pos[roots[c]] - pos[roots[d]];
                    let b = prop[c] - prop[d];
                    let u: f64 = rng.random();
                    if u < signed_hit_probability(a, b, dt, 2.0) {
                        let (rc, rd) = (find(&mut parent, c), find(&mut parent, d));
                        let (lo, hi) = if roots[rc] < roots[rd] { (rc, rd) } else { (rd, rc) };
                        parent[hi] = lo;
                    }
                }
            }
            (0..m).map(|c| prop[find(&mut parent, c)]).collect()
        }
    };
    for (&i, &c) in group.iter().zip(&owner) {
        pos[i] = new[c];
    }
    Ok(())
}

fn check_common(x: &[f64], theta: f64, t_horizon: f64, n_switch: usize, sub_steps: usize) -> Result<(f64, usize)> {
    if x.is_empty() || x.iter().any(|v| !v.is_finite()) {
        return Err(invalid("x", "need at least one finite start"));
    }
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(invalid("theta", format!("must be positive, got {theta}")));
    }
    if n_switch == 0 || sub_steps == 0 {
        return Err(invalid("n_switch/sub_steps", "must be at least 1"));
    }
    let p = switching_probability(theta, n_switch);
    if p > 1.0 {
        return Err(invalid("theta", format!("p = theta sqrt(pi/n) = {p} exceeds 1")));
    }
    let intervals = t_horizon * n_switch as f64;
    let k = intervals.round();
    if !(t_horizon > 0.0) || k < 1.0 || (intervals - k).abs() > 1e-9 * intervals {
        return Err(invalid("t_horizon", format!("must be a positive multiple of 1/{n_switch}")));
    }
    Ok((p, k as usize))
}

/// `p = theta sqrt(pi / n)`.
pub fn switching_probability(theta: f64, n_switch: usize) -> f64 {
    theta * (PI / n_switch as f64).sqrt()
}

fn switching_grid(n_switch: usize, sub_steps: usize, intervals: usize) -> Result<TimeGrid> {
    TimeGrid::new(0.0, 1.0 / (n_switch * sub_steps) as f64, intervals * sub_steps)
}

/// Sticky-coalescing system approximated by switching at rate `n_switch`
/// with `p = theta sqrt(pi/n_switch)`: on each interval a single Bernoulli(p)
/// draw makes the two groups move independently of each other (each still
/// coalescing internally), otherwise all `m + n` particles coalesce together.
/// Coordinates `0..m` are the first group.
pub fn sample_scs(
    starts_w: &[f64],
    starts_wprime: &[f64],
    theta: f64,
    t_horizon: f64,
    n_switch: usize,
    sub_steps: usize,
    seed: u64,
) -> Result<PathBundle> {
    let x: Vec<f64> = starts_w.iter().chain(starts_wprime).copied().collect();
    let (p, intervals) = check_common(&x, theta, t_horizon, n_switch, sub_steps)?;
    let m = starts_w.len();
    let grid = switching_grid(n_switch, sub_steps, intervals)?;
    let mut bundle = PathBundle::new(grid, x.len(), BundleKind::Scs { m, theta, n_switch, sub_steps });
    let mut regimes = stream(seed, streams::REGIMES);
    let mut rng = stream(seed, streams::DIFFUSION);
    let all: Vec<usize> = (0..x.len()).collect();
    let (w, wp) = all.split_at(m);
    let mut pos = x;
    bundle.push(&pos);
    for _ in 0..intervals {
        let apart = regimes.random::<f64>() < p;
        for _ in 0..sub_steps {
            if apart {
                coalescing_group_step(&mut pos, w, grid.dt, &mut rng)?;
                coalescing_group_step(&mut pos, wp, grid.dt, &mut rng)?;
            } else {
                coalescing_group_step(&mut pos, &all, grid.dt, &mut rng)?;
            }
            bundle.push(&pos);
        }
    }
    Ok(bundle)
}

/// N-point motion of the erosion flow by the multi-particle switching
/// construction; returns the bundle and the schedule that drove it.
pub fn sample_npoint_erosion_with_schedule(
    x: &[f64],
    theta: f64,
    t_horizon: f64,
    n_switch: usize,
    sub_steps: usize,
    seed: u64,
) -> Result<(PathBundle, SwitchingSchedule)> {
    let (p, intervals) = check_common(x, theta, t_horizon, n_switch, sub_steps)?;
    let grid = switching_grid(n_switch, sub_steps, intervals)?;
    let schedule = SwitchingSchedule::draw(n_switch, p, intervals, x.len(), seed)?;
    let mut bundle = PathBundle::new(grid, x.len(), BundleKind::Erosion { theta, n_switch, sub_steps });
    let mut rng = stream(seed, streams::DIFFUSION);
    let mut pos = x.to_vec();
    bundle.push(&pos);
    let sd = grid.dt.sqrt();
    let mut rest = Vec::with_capacity(x.len());
    for y in &schedule.y {
        rest.clear();
        rest.extend((0..x.len()).filter(|&i| !y[i]));
        for _ in 0..sub_steps {
            for (i, &free) in y.iter().enumerate() {
                if free {
                    pos[i] += sd * gauss(&mut rng);
                }
            }
            coalescing_group_step(&mut pos, &rest, grid.dt, &mut rng)?;
            bundle.push(&pos);
        }
    }
    Ok((bundle, schedule))
}

/// N-point motion of the erosion flow: on each interval every particle is
/// independently released with probability `p = theta sqrt(pi/n_switch)` and
/// moves on its own; the others coalesce on meeting.
pub fn sample_npoint_erosion(
    x: &[f64],
    theta: f64,
    t_horizon: f64,
    n_switch: usize,
    sub_steps: usize,
    seed: u64,
) -> Result<PathBundle> {
    sample_npoint_erosion_with_schedule(x, theta, t_horizon, n_switch, sub_steps, seed).map(|(b, _)| b)
}

/// Coordinate `k` moves independently; all others coalesce among themselves.
/// `sub_steps` equal steps over `[0, t]`.
pub fn sample_partial_coalescing(x: &[f64], k: usize, t: f64, sub_steps: usize, seed: u64) -> Result<PathBundle> {
    if k >= x.len() {
        return Err(invalid("k", "out of range"));
    }
    let grid = TimeGrid::uniform(t, sub_steps)?;
    let mut bundle = PathBundle::new(grid, x.len(), BundleKind::PartialCoalescing { independent: k, sub_steps });
    let mut rng = stream(seed, streams::DIFFUSION);
    let rest: Vec<usize> = (0..x.len()).filter(|&i| i != k).collect();
    let mut pos = x.to_vec();
    bundle.push(&pos);
    for _ in 0..sub_steps {
        pos[k] += grid.dt.sqrt() * gauss(&mut rng);
        coalescing_group_step(&mut pos, &rest, grid.dt, &mut rng)?;
        bundle.push(&pos);
    }
    Ok(bundle)
}

fn fill_boundary(fam: &mut ThetaFamily, right: f64, left: f64) {
    // theta(k+1:0) = theta(k:0) - theta(k:1), theta(0:l+1) = theta(0:l) - theta(1:l).
    let k_max = fam.k_max;
    fam.set(1, 0, right);
    fam.set(0, 1, left);
    fam.set(0, 0, right + left);
    for k in 1..k_max {
        let v = fam.get(k, 0).expect("in range") - fam.get(k, 1).expect("in range");
        fam.set(k + 1, 0, v);
        let v = fam.get(0, k).expect("in range") - fam.get(1, k).expect("in range");
        fam.set(0, k + 1, v);
    }
}

fn assert_consistent(fam: &ThetaFamily) {
    let rep = consistency_check(fam, fam.k_max - 1);
    assert!(
        rep.consistency.is_empty() && rep.positivity.is_empty(),
        "generated family violates consistency or positivity: {rep:?}"
    );
}

/// Parameters of the erosion flow: `theta(1:1) = theta`, `theta(1:l) =
/// theta(l:1) = theta/2` for `l >= 2`, zero for `k, l >= 2`, and boundary
/// values from the consistency recursion anchored at
/// `theta(1:0) = theta(0:1) = theta/2`, giving `theta(m+1:0) = -m theta/2`.
pub fn erosion_theta_family(theta: f64, k_max: usize) -> Result<ThetaFamily> {
    if !(theta >= 0.0) || !theta.is_finite() {
        return Err(invalid("theta", format!("must be non-negative, got {theta}")));
    }
    if k_max < 1 {
        return Err(invalid("k_max", "must be at least 1"));
    }
    let mut fam = ThetaFamily::zeros(k_max);
    for k in 1..=k_max {
        for l in 1..=k_max {
            let v = match (k, l) {
                (1, 1) => theta,
                (1, _) | (_, 1) => 0.5 * theta,
                _ => 0.0,
            };
            fam.set(k, l, v);
        }
    }
    fill_boundary(&mut fam, 0.5 * theta, 0.5 * theta);
    assert_consistent(&fam);
    Ok(fam)
}

/// Asymmetric family for drifts `beta1`, `beta2`: `theta(1:1) = theta`,
/// `theta(1:l) = (2 theta + beta1 - beta2)/4` and
/// `theta(k:1) = (2 theta + beta2 - beta1)/4` for `k, l >= 2`, zero for
/// `k, l >= 2`, boundary by the recursion from
/// `theta(1:0) = beta1/2 = -theta(0:1)`.
pub fn general_theta_family(theta: f64, beta1: f64, beta2: f64, k_max: usize) -> Result<ThetaFamily> {
    if !(theta >= 0.0) || !theta.is_finite() || !beta1.is_finite() || !beta2.is_finite() {
        return Err(invalid("theta/beta", "must be finite with theta >= 0"));
    }
    if (beta1 - beta2).abs() > 2.0 * theta {
        return Err(Error::Inadmissible(format!("|beta1 - beta2| = {} exceeds 2 theta", (beta1 - beta2).abs())));
    }
    if k_max < 1 {
        return Err(invalid("k_max", "must be at least 1"));
    }
    let mut fam = ThetaFamily::zeros(k_max);
    let right = (2.0 * theta + beta1 - beta2) / 4.0;
    let left = (2.0 * theta + beta2 - beta1) / 4.0;
    for k in 1..=k_max {
        for l in 1..=k_max {
            let v = match (k, l) {
                (1, 1) => theta,
                (1, _) => right,
                (_, 1) => left,
                _ => 0.0,
            };
            fam.set(k, l, v);
        }
    }
    fill_boundary(&mut fam, 0.5 * beta1, -0.5 * beta1);
    assert_consistent(&fam);
    Ok(fam)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{ks_normal, ks_two_sample, EstimateWithError};

    #[test]
    fn pair_bundle_clusters_follow_the_together_channel() {
        use crate::paths::{sample_theta_pair, CouplingParams};
        let g = TimeGrid::uniform(1.0, 64).unwrap();
        let params = CouplingParams::new(0.0, 0.0, 1.0).unwrap();
        let (pair, _) = sample_theta_pair(0.0, 0.0, &params, &g, 16, 9).unwrap();
        let b = PathBundle::from(&pair);
        assert_eq!(b.paths[0], pair.x);
        assert_eq!(b.paths[1], pair.x_prime);
        assert!(pair.together.iter().any(|&t| t) && pair.together.iter().any(|&t| !t));
        for (labels, &t) in b.cluster_id.iter().zip(&pair.together) {
            assert_eq!(labels[1] == labels[0], t);
        }
        assert_eq!(b.kind, BundleKind::Pair { coupling: pair.kind });
    }

    #[test]
    fn erosion_family_values() {
        let f = erosion_theta_family(1.0, 10).unwrap();
        assert_eq!(f.get(1, 1), Some(1.0));
        assert_eq!(f.get(1, 2), Some(0.5));
        assert_eq!(f.get(2, 1), Some(0.5));
        assert_eq!(f.get(3, 4), Some(0.0));
        assert_eq!(f.get(2, 0), Some(-0.5));
        assert_eq!(f.get(3, 0), Some(-1.0));
        assert_eq!(f.get(0, 3), Some(-1.0));
        for m in 1..9 {
            assert_eq!(f.get(m + 1, 0), Some(-(m as f64) / 2.0));
        }
        assert_eq!(f.get(1, 0).unwrap(), f.get(2, 0).unwrap() + f.get(1, 1).unwrap());
    }

    #[test]
    fn general_family_values() {
        let f = general_theta_family(1.0, 0.5, -0.5, 10).unwrap();
        assert_eq!(f.get(1, 1), Some(1.0));
        assert_eq!(f.get(1, 2), Some(0.75));
        assert_eq!(f.get(2, 1), Some(0.25));
        assert_eq!(f.get(1, 0), Some(0.25));
        assert_eq!(f.get(0, 1), Some(-0.25));
        assert!(general_theta_family(1.0, 2.5, 0.0, 10).is_err());
        let sym = general_theta_family(1.0, 0.0, 0.0, 10).unwrap();
        let ero = erosion_theta_family(1.0, 10).unwrap();
        for k in 1..=10 {
            for l in 1..=10 {
                assert_eq!(sym.get(k, l), ero.get(k, l));
            }
        }
        assert_eq!(sym.get(1, 0), Some(0.0));
    }

    #[test]
    fn switching_schedule_sets_match_indicators() {
        let s = SwitchingSchedule::draw(64, 0.3, 50, 4, 9).unwrap();
        for (row, set) in s.y.iter().zip(&s.s_sets) {
            let want: Vec<usize> = (0..4).filter(|&i| row[i]).collect();
            assert_eq!(&want, set);
        }
        assert_eq!(s, SwitchingSchedule::draw(64, 0.3, 50, 4, 9).unwrap());
    }

    #[test]
    fn one_point_motion_is_brownian() {
        let ends: Vec<f64> = (0..4_000u64)
            .map(|r| {
                let b = sample_npoint_erosion(&[0.0], 1.0, 1.0, 64, 2, r).unwrap();
                b.paths[0][b.grid.n_steps]
            })
            .collect();
        assert!(ks_normal(&ends, 0.0, 1.0, 0.01).unwrap().pass);
    }

    #[test]
    fn erosion_rejects_large_p() {
        assert!(sample_npoint_erosion(&[0.0, 0.0], 10.0, 1.0, 16, 2, 1).is_err());
        assert!(sample_npoint_erosion(&[0.0, 0.0], 1.0, 1.03, 16, 2, 1).is_err());
    }

    #[test]
    fn bundles_have_consistent_labels() {
        let b = sample_npoint_erosion(&[0.0, 0.0, 0.1, 0.5], 1.0, 1.0, 64, 4, 3).unwrap();
        b.validate().unwrap();
        let s = sample_scs(&[0.0, 0.0], &[0.0, 0.3], 1.0, 1.0, 64, 4, 3).unwrap();
        s.validate().unwrap();
        // The two W paths start equal and never separate.
        assert!(s.cluster_id.iter().all(|c| c[1] == c[0]));
        assert!(b.to_csv().starts_with("t,x_1,x_2,x_3,x_4,c_1,c_2,c_3,c_4\n"));
    }

    #[test]
    fn mean_cluster_count_grows_with_theta() {
        let mean_count = |theta: f64| {
            let c: Vec<f64> = (0..1_000u64)
                .map(|r| {
                    let b = sample_npoint_erosion(&[0.0; 3], theta, 1.0, 256, 2, r).unwrap();
                    b.cluster_count(b.grid.n_steps) as f64
                })
                .collect();
            EstimateWithError::from_samples(&c).value
        };
        let (a, b, c) = (mean_count(1e-9), mean_count(0.5), mean_count(2.0));
        assert_eq!(a, 1.0);
        assert!(a < b && b < c, "{a} {b} {c}");
    }

    #[test]
    fn coalescing_group_merges_are_permanent() {
        let b = sample_partial_coalescing(&[0.0, 0.1, 0.2, -0.1], 0, 2.0, 400, 8).unwrap();
        b.validate().unwrap();
        for t in 1..b.grid.len() {
            for i in 1..4 {
                for j in 1..4 {
                    if b.cluster_id[t - 1][i] == b.cluster_id[t - 1][j] {
                        assert_eq!(b.cluster_id[t][i], b.cluster_id[t][j]);
                    }
                }
            }
        }
    }

    #[test]
    fn scs_single_pair_matches_pn_pair() {
        let mut a = Vec::new();
        let mut b = Vec::new();
        let p = switching_probability(1.0, 64);
        for r in 0..4_000u64 {
            let s = sample_scs(&[0.0], &[0.2], 1.0, 1.0, 64, 2, r).unwrap();
            a.push((s.paths[0][128] - s.paths[1][128]).abs());
            let q = crate::paths::sample_pn_pair(0.0, 0.2, p, 64, 1.0, 2, r + 50_000).unwrap();
            b.push(q.terminal_gap());
        }
        assert!(ks_two_sample(&a, &b, 0.01).unwrap().pass);
    }
}
