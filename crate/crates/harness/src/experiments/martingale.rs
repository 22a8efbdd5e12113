//! Monte Carlo martingale check of the N-point motion against the generator.

use super::Outcome;
use crate::config::{param, ParamKind::*};
use crate::error::{HarnessError, Result};
use crate::plot::{Plot, Series};
use crate::record::{CriterionReport, Table};
use crate::registry::{Context, Experiment};
use erosion_flow::generator::PwLinear;
use erosion_flow::npoint::{erosion_theta_family, sample_npoint_erosion, PathBundle};
use erosion_flow::paths::{sample_theta_pair, CouplingParams, TimeGrid};
use erosion_flow::special::normal_sf;
use erosion_flow::stats::{martingale_drift_test_many, DriftTestConfig, DriftTestResult};

pub const NPOINT_MARTINGALE: Experiment = Experiment {
    name: "npoint-martingale",
    criteria: &[10],
    title: "erosion N-point motion solves the martingale problem",
    description: "E[f(X(t)) - f(x0) - integral of A f(X(s)) ds] = 0 within z_max standard errors for the erosion N-point motion from the all-zero start: f the pairwise distance sum for each N, and a mixed linear plus pairwise f for the largest N.",
    params: &[
        param("theta", Float, "1.0", "erosion parameter"),
        param("t", Float, "1.0", "horizon"),
        param("ns", IntList, "[2, 3]", "numbers of particles"),
        param("n_switch", Int, "1024", "switching rate"),
        param("sub_steps", Int, "8", "sub-steps per switching interval"),
        param("replicas", Int, "100000", "bundles per N"),
        param("quad_points", Int, "256", "midpoint nodes for the time integral"),
        param("z_max", Float, "3.0", "band in standard errors"),
        param("sensitivity_replicas", Int, "10000", "replicas for the half/double n_switch and exact-pair lines"),
        param("pair_n_steps", Int, "256", "grid of the exact 2 theta pair used for the N = 2 reference line"),
        param("pair_fine_factor", Int, "32", "clock refinement of the exact pair"),
    ],
    run: run_martingale,
};

/// `f(x) = 0.25 + Σ a_i x_i + Σ_{i<j} b_ij |x_i - x_j|` with mixed signs.
fn mixed_function(n: usize) -> Result<PwLinear> {
    let a: Vec<f64> = (0..n).map(|i| [0.5, -1.0, 0.25, 0.75][i % 4]).collect();
    let coeff = [1.5, -0.5, 0.75, 0.25, -0.25, 2.0];
    let mut b = vec![vec![0.0; n]; n];
    let mut k = 0;
    for i in 0..n {
        for j in i + 1..n {
            b[i][j] = coeff[k % coeff.len()];
            k += 1;
        }
    }
    Ok(PwLinear::closed(0.25, a, b)?)
}

fn drift_line(r: &DriftTestResult) -> String {
    format!(
        "drift {:.5} +- {:.5} (E f(X(t)) - f(x0) = {:.5}, compensator {:.5})",
        r.drift.value, r.drift.std_error, r.terminal.value, r.compensator.value
    )
}

fn run_martingale(ctx: &Context) -> Result<Outcome> {
    let p = &ctx.params;
    let theta = p.f64_in("theta", 1e-9, f64::INFINITY)?;
    let t = p.f64_in("t", 1e-9, f64::INFINITY)?;
    let n_switch = p.usize_min("n_switch", 1)?;
    let sub = p.usize_min("sub_steps", 1)?;
    let z_max = p.f64("z_max");
    let level = 2.0 * normal_sf(z_max);
    let ns = p.usizes("ns");
    if ns.iter().any(|&n| n < 2) {
        return Err(HarnessError::param("ns", "need at least two particles"));
    }
    let n_max = *ns.iter().max().expect("non-empty");
    let cfg = |stream: &str, replicas: usize| DriftTestConfig {
        t,
        quad_points: p.usize("quad_points").max(1),
        replicas,
        level,
        seed: ctx.seed(stream),
    };
    let erosion = |n_switch: usize| move |x: &[f64], t: f64, seed: u64| sample_npoint_erosion(x, theta, t, n_switch, sub, seed);

    let mut rep = CriterionReport::new(10, NPOINT_MARTINGALE.title);
    let mut table = Table::new("npoint_martingale", &["n", "function", "n_switch", "replicas", "drift", "std_error", "terminal", "compensator"]);
    let reps = p.usize_min("replicas", 2)?;
    for &n in &ns {
        let fam = erosion_theta_family(theta, n)?;
        let mut fs = vec![PwLinear::pairwise_distance_sum(n)];
        if n == n_max {
            fs.push(mixed_function(n)?);
        }
        let x0 = vec![0.0; n];
        let results = martingale_drift_test_many(&erosion(n_switch), &fs, &fam, &x0, &cfg(&format!("N{n}"), reps))?;
        for (k, r) in results.iter().enumerate() {
            let name = if k == 0 { "pairwise distance sum" } else { "mixed linear and pairwise" };
            let mut report = r.report.clone();
            report.description = format!("N={n}, f={name}: {}", drift_line(r));
            rep.check(report);
            table.push(vec![n as f64, k as f64, n_switch as f64, reps as f64, r.drift.value, r.drift.std_error, r.terminal.value, r.compensator.value]);
        }
    }

    let sr = p.usize_min("sensitivity_replicas", 2)?;
    let fam2 = erosion_theta_family(theta, 2)?;
    let g2 = [PwLinear::pairwise_distance_sum(2)];
    let mut drift_vs_rate = Vec::new();
    for (label, m) in [("half", (n_switch / 2).max(1)), ("base", n_switch), ("double", 2 * n_switch)] {
        let r = martingale_drift_test_many(&erosion(m), &g2, &fam2, &[0.0, 0.0], &cfg(&format!("rate-{label}"), sr))?.remove(0);
        rep.sensitivity(format!("N=2, n_switch {label} ({m}), {sr} replicas: {}", drift_line(&r)));
        drift_vs_rate.push((m as f64, r.drift.value));
        table.push(vec![2.0, 0.0, m as f64, sr as f64, r.drift.value, r.drift.std_error, r.terminal.value, r.compensator.value]);
    }

    // The two-point motion is a 2 theta coupled pair, which has an exact sampler.
    let params = CouplingParams::new(0.0, 0.0, 2.0 * theta)?;
    let grid = TimeGrid::uniform(t, p.usize_min("pair_n_steps", 1)?)?;
    let ff = p.usize_min("pair_fine_factor", 1)?;
    let pair_sampler = move |x: &[f64], _t: f64, seed: u64| {
        let (pair, _) = sample_theta_pair(x[0], x[1], &params, &grid, ff, seed)?;
        Ok(PathBundle::from(&pair))
    };
    let r = martingale_drift_test_many(&pair_sampler, &g2, &fam2, &[0.0, 0.0], &cfg("exact-pair", sr))?.remove(0);
    let mut d = r.report.clone();
    d.description = format!("N=2 via the exact 2 theta pair sampler, {sr} replicas: {}", drift_line(&r));
    rep.diagnostic(d);

    let plot = Plot::new("martingale_drift_vs_rate", "N=2 drift of g", "n_switch", "drift")
        .with(Series::scatter("drift", drift_vs_rate))
        .with(Series::line("zero", vec![((n_switch / 2).max(1) as f64, 0.0), (2.0 * n_switch as f64, 0.0)]));
    let mut bundle_plot = Plot::new("erosion_bundle", "one N-point erosion bundle", "t", "x");
    let b = sample_npoint_erosion(&vec![0.0; n_max], theta, t, n_switch, sub, ctx.seed("bundle-plot"))?;
    let stride = (b.grid.len() / 1000).max(1);
    for (i, path) in b.paths.iter().enumerate() {
        bundle_plot.series.push(Series::line(
            format!("X_{}", i + 1),
            path.iter().enumerate().step_by(stride).map(|(j, &x)| (b.grid.time(j), x)).collect(),
        ));
    }
    Ok(Outcome { reports: vec![rep], tables: vec![table], plots: vec![plot, bundle_plot] })
}
