//! Pair experiments: the (p, n) switching limit, the Tanaka and covariation
//! identities of theta-coupled pairs, and the two-point motion of the
//! erosion flow.

use super::{z_check, Outcome};
use crate::config::{param, ParamKind::*};
use crate::error::Result;
use crate::parallel::ordered_mean;
use crate::plot::{Plot, Series};
use crate::record::{CriterionReport, Table};
use crate::registry::{Context, Experiment};
use erosion_flow::npoint::{sample_npoint_erosion, switching_probability};
use erosion_flow::paths::{sample_pn_pair, sample_theta_pair, CouplingParams, TimeGrid};
use erosion_flow::stats::{
    ks_two_sample, local_time_downcrossing, local_time_tanaka, occupation_diagonal, quad_covariation, EstimateWithError,
    TestReport,
};

pub const COUPLING_LIMIT: Experiment = Experiment {
    name: "coupling-limit",
    criteria: &[6],
    title: "(p, n) switching approaches the theta coupling",
    description: "For (p, n)-coupled pairs started together with p = theta sqrt(pi/n): the ratio of mean local time of X - X' at zero to 2 theta times mean diagonal occupation is within z_max joint standard errors of 1 at the largest n, and |ratio - 1| decreases in n. Local time is the discrete Tanaka sum; the grid downcrossing estimator is reported alongside.",
    params: &[
        param("theta", Float, "1.0", "target coupling"),
        param("t", Float, "1.0", "horizon"),
        param("ns", IntList, "[64, 256, 1024]", "switching rates, increasing"),
        param("replicas", Int, "10000", "pairs per rate"),
        param("steps_per_interval", Int, "8", "exact sub-steps per switching interval"),
        param("eps", Float, "0.01", "downcrossing band for the reported grid estimator"),
        param("z_max", Float, "3.0", "band in joint standard errors"),
        param("sensitivity_replicas", Int, "2000", "replicas for the half/double sub-step lines"),
    ],
    run: run_coupling_limit,
};

struct PnSummary {
    ratio: EstimateWithError,
    down_ratio: EstimateWithError,
    samples: Vec<[f64; 4]>,
}

fn pn_ensemble(ctx: &Context, stream: &str, theta: f64, t: f64, n: usize, spi: usize, eps: f64, replicas: usize) -> Result<PnSummary> {
    let p = switching_probability(theta, n);
    let samples = ctx.replicas(stream, replicas, |_, seed| {
        let pair = sample_pn_pair(0.0, 0.0, p, n, t, spi, seed)?;
        let d = pair.diff();
        Ok([
            local_time_tanaka(&d)?,
            2.0 * theta * occupation_diagonal(&pair),
            local_time_downcrossing(&d, &pair.grid, eps)?,
            pair.terminal_gap(),
        ])
    })?;
    let col = |j: usize| samples.iter().map(|s| s[j]).collect::<Vec<f64>>();
    Ok(PnSummary {
        ratio: EstimateWithError::ratio_of_means(&col(0), &col(1))?,
        down_ratio: EstimateWithError::ratio_of_means(&col(2), &col(1))?,
        samples,
    })
}

fn run_coupling_limit(ctx: &Context) -> Result<Outcome> {
    let p = &ctx.params;
    let theta = p.f64_in("theta", 1e-9, f64::INFINITY)?;
    let t = p.f64_in("t", 1e-9, f64::INFINITY)?;
    let ns = p.usizes("ns");
    let reps = p.usize_min("replicas", 2)?;
    let spi = p.usize_min("steps_per_interval", 1)?;
    let eps = p.f64("eps");
    let z_max = p.f64("z_max");
    let mut rep = CriterionReport::new(6, COUPLING_LIMIT.title);
    let mut summary = Table::new("coupling_limit", &["n", "p", "ratio", "ratio_se", "finite_n_ratio", "downcrossing_ratio", "downcrossing_se"]);
    let mut ensemble = Table::new("coupling_limit_ensemble", &["n", "replica", "local_time", "two_theta_occupation", "downcrossing", "terminal_gap"]);
    let mut deviations = Vec::new();
    let mut last = None;
    for &n in &ns {
        let s = pn_ensemble(ctx, &format!("n{n}"), theta, t, n, spi, eps, reps)?;
        let pn = switching_probability(theta, n);
        let finite_n = 1.0 / (1.0 - pn);
        summary.push(vec![n as f64, pn, s.ratio.value, s.ratio.std_error, finite_n, s.down_ratio.value, s.down_ratio.std_error]);
        for (i, v) in s.samples.iter().enumerate() {
            ensemble.push(vec![n as f64, i as f64, v[0], v[1], v[2], v[3]]);
        }
        rep.diagnostic(z_check(
            s.ratio.z_score(finite_n),
            z_max,
            format!("n={n}: ratio {:.4} vs finite-n value 1/(1-p) = {finite_n:.4} (z)", s.ratio.value),
        ));
        rep.diagnostic(z_check(
            s.down_ratio.z_score(1.0),
            z_max,
            format!("n={n}: grid downcrossing ratio {:.4} (eps={eps}) vs 1 (z)", s.down_ratio.value),
        ));
        deviations.push((n, (s.ratio.value - 1.0).abs()));
        last = Some((n, s.ratio));
    }
    let (n_last, r_last) = last.expect("ns is non-empty");
    rep.check(z_check(
        r_last.z_score(1.0),
        z_max,
        format!("n={n_last}: ratio {:.4} +- {:.4} vs 1 (z)", r_last.value, r_last.std_error),
    ));
    let rise = deviations.windows(2).map(|w| w[1].1 - w[0].1).fold(f64::NEG_INFINITY, f64::max);
    rep.check(TestReport::new(
        if deviations.len() < 2 { 0.0 } else { rise },
        0.0,
        format!("|ratio - 1| decreasing in n: {:?}", deviations.iter().map(|d| format!("n={} {:.4}", d.0, d.1)).collect::<Vec<_>>()),
    ));
    let sr = p.usize_min("sensitivity_replicas", 2)?;
    for (label, s) in [("half", (spi / 2).max(1)), ("double", 2 * spi)] {
        let e = pn_ensemble(ctx, &format!("spi-{label}"), theta, t, n_last, s, eps, sr)?;
        rep.sensitivity(format!(
            "steps_per_interval {label} ({s}) at n={n_last}, {sr} replicas: ratio {:.4} +- {:.4}",
            e.ratio.value, e.ratio.std_error
        ));
    }
    let plot = Plot::new("coupling_limit", "local time / (2 theta occupation)", "n", "ratio")
        .with(Series::scatter("estimate", summary.rows.iter().map(|r| (r[0], r[2])).collect()))
        .with(Series::line("1/(1-p)", summary.rows.iter().map(|r| (r[0], r[4])).collect()))
        .with(Series::line("limit", summary.rows.iter().map(|r| (r[0], 1.0)).collect()));
    Ok(Outcome { reports: vec![rep], tables: vec![summary, ensemble], plots: vec![plot] })
}

pub const THETA_IDENTITIES: Experiment = Experiment {
    name: "theta-pair-identities",
    criteria: &[7, 8],
    title: "Tanaka and covariation identities of theta-coupled pairs",
    description: "Theta-coupled pairs started together: mean |X(t) - X'(t)| equals 2 theta times mean diagonal occupation, and mean realised covariation equals mean occupation, each within z_max standard errors of the paired difference; doubling fine_factor moves each mean by less than max_rel_change.",
    params: &[
        param("thetas", FloatList, "[0.5, 1.0, 2.0]", "coupling strengths"),
        param("t", Float, "1.0", "horizon"),
        param("replicas", Int, "10000", "pairs per ensemble"),
        param("n_steps", Int, "512", "output grid steps"),
        param("fine_factor", Int, "16", "base refinement of the clock grid"),
        param("z_max", Float, "3.0", "band in standard errors"),
        param("max_rel_change", Float, "0.05", "allowed relative change under fine_factor doubling"),
        param("sensitivity_replicas", Int, "2000", "replicas for the half fine_factor line"),
    ],
    run: run_theta_identities,
};

/// Per replica: terminal gap, grid occupation, realised covariation and the
/// occupation read off the clock.
fn theta_ensemble(ctx: &Context, stream: &str, theta: f64, t: f64, n_steps: usize, ff: usize, replicas: usize) -> Result<Vec<[f64; 4]>> {
    let params = CouplingParams::new(0.0, 0.0, theta)?;
    let grid = TimeGrid::uniform(t, n_steps)?;
    ctx.replicas(stream, replicas, |_, seed| {
        let (pair, clock) = sample_theta_pair(0.0, 0.0, &params, &grid, ff, seed)?;
        let via_clock = clock.exact_occupation.last().copied().unwrap_or(0.0);
        Ok([pair.terminal_gap(), occupation_diagonal(&pair), quad_covariation(&pair), via_clock])
    })
}

fn run_theta_identities(ctx: &Context) -> Result<Outcome> {
    let p = &ctx.params;
    let t = p.f64_in("t", 1e-9, f64::INFINITY)?;
    let reps = p.usize_min("replicas", 2)?;
    let n_steps = p.usize_min("n_steps", 1)?;
    let ff = p.usize_min("fine_factor", 1)?;
    let z_max = p.f64("z_max");
    let max_rel = p.f64("max_rel_change");
    let sr = p.usize_min("sensitivity_replicas", 2)?;
    let mut tanaka = CriterionReport::new(7, "Tanaka identity for theta-coupled pairs");
    let mut covar = CriterionReport::new(8, "covariation identity for theta-coupled pairs");
    let mut summary = Table::new(
        "theta_identities",
        &["theta", "fine_factor", "mean_gap", "mean_occupation", "mean_covariation", "tanaka_z", "covariation_z"],
    );
    let mut ensemble = Table::new("theta_identities_ensemble", &["theta", "fine_factor", "replica", "gap", "occupation", "covariation", "clock_occupation"]);
    let mut plot = Plot::new("theta_identities", "mean |X - X'| and 2 theta occupation", "theta", "mean");
    let (mut gap_pts, mut occ_pts) = (Vec::new(), Vec::new());
    for theta in p.f64s("thetas") {
        let mut means = Vec::new();
        for (k, factor) in [ff, 2 * ff].into_iter().enumerate() {
            let e = theta_ensemble(ctx, &format!("theta{theta}-ff{factor}"), theta, t, n_steps, factor, reps)?;
            let tan: Vec<f64> = e.iter().map(|s| s[0] - 2.0 * theta * s[1]).collect();
            let cov: Vec<f64> = e.iter().map(|s| s[2] - s[1]).collect();
            let zt = EstimateWithError::from_samples(&tan).z_score(0.0);
            let zc = EstimateWithError::from_samples(&cov).z_score(0.0);
            let grid_vs_clock: Vec<f64> = e.iter().map(|s| s[1] - s[3]).collect();
            let zo = EstimateWithError::from_samples(&grid_vs_clock).z_score(0.0);
            let m: Vec<f64> = (0..3).map(|j| ordered_mean(&e.iter().map(|s| s[j]).collect::<Vec<_>>())).collect();
            summary.push(vec![theta, factor as f64, m[0], m[1], m[2], zt, zc]);
            for (i, s) in e.iter().enumerate() {
                ensemble.push(vec![theta, factor as f64, i as f64, s[0], s[1], s[2], s[3]]);
            }
            let dt = format!("theta={theta}, fine_factor={factor}: mean |X-X'| {:.4} vs 2 theta occupation {:.4} (z)", m[0], 2.0 * theta * m[1]);
            let dc = format!("theta={theta}, fine_factor={factor}: mean covariation {:.4} vs occupation {:.4} (z)", m[2], m[1]);
            if k == 0 {
                tanaka.check(z_check(zt, z_max, dt));
                covar.check(z_check(zc, z_max, dc));
                gap_pts.push((theta, m[0]));
                occ_pts.push((theta, 2.0 * theta * m[1]));
            } else {
                tanaka.diagnostic(z_check(zt, z_max, dt));
                covar.diagnostic(z_check(zc, z_max, dc));
            }
            let occ_line = format!("theta={theta}, fine_factor={factor}: grid occupation vs clock occupation (z)");
            tanaka.diagnostic(z_check(zo, z_max, occ_line.clone()));
            covar.diagnostic(z_check(zo, z_max, occ_line));
            means.push(m);
        }
        for (j, what) in [(0usize, "mean |X-X'|"), (1, "mean occupation")] {
            let rel = (means[1][j] - means[0][j]).abs() / means[0][j].abs();
            tanaka.check(TestReport::new(rel, max_rel, format!("theta={theta}: relative change of {what} under fine_factor doubling")));
        }
        let half = (ff / 2).max(1);
        let e = theta_ensemble(ctx, &format!("theta{theta}-half"), theta, t, n_steps, half, sr)?;
        let tan: Vec<f64> = e.iter().map(|s| s[0] - 2.0 * theta * s[1]).collect();
        let cov: Vec<f64> = e.iter().map(|s| s[2] - s[1]).collect();
        let line = format!(
            "theta={theta}, fine_factor half ({half}), {sr} replicas: tanaka z {:.2}, covariation z {:.2}",
            EstimateWithError::from_samples(&tan).z_score(0.0),
            EstimateWithError::from_samples(&cov).z_score(0.0)
        );
        tanaka.sensitivity(line.clone());
        covar.sensitivity(line);
    }
    plot.series.push(Series::scatter("mean |X(t)-X'(t)|", gap_pts));
    plot.series.push(Series::scatter("2 theta mean occupation", occ_pts));
    Ok(Outcome { reports: vec![tanaka, covar], tables: vec![summary, ensemble], plots: vec![plot] })
}

pub const TWO_POINT: Experiment = Experiment {
    name: "two-point-motion",
    criteria: &[9],
    title: "two-point motion of the erosion flow is 2 theta coupled",
    description: "Two-sample KS test between the terminal gap of the 2-point erosion motion (switching construction) and of a 2 theta coupled pair, both started together.",
    params: &[
        param("theta", Float, "1.0", "erosion parameter"),
        param("t", Float, "1.0", "horizon"),
        param("n_switch", Int, "1024", "switching rate"),
        param("sub_steps", Int, "8", "sub-steps per switching interval"),
        param("replicas", Int, "10000", "samples per side"),
        param("n_steps", Int, "128", "theta pair output grid"),
        param("fine_factor", Int, "64", "theta pair clock refinement"),
        param("level", Float, "0.01", "test level"),
    ],
    run: run_two_point,
};

fn erosion_gaps(ctx: &Context, stream: &str, theta: f64, t: f64, n_switch: usize, sub_steps: usize, reps: usize) -> Result<Vec<f64>> {
    ctx.replicas(stream, reps, |_, seed| {
        let b = sample_npoint_erosion(&[0.0, 0.0], theta, t, n_switch, sub_steps, seed)?;
        let s = b.state(b.grid.n_steps);
        Ok((s[0] - s[1]).abs())
    })
}

fn ecdf(v: &[f64]) -> Vec<(f64, f64)> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() as f64;
    let step = (s.len() / 400).max(1);
    s.iter().enumerate().step_by(step).map(|(i, &x)| (x, (i + 1) as f64 / m)).collect()
}

fn run_two_point(ctx: &Context) -> Result<Outcome> {
    let p = &ctx.params;
    let theta = p.f64_in("theta", 1e-9, f64::INFINITY)?;
    let t = p.f64_in("t", 1e-9, f64::INFINITY)?;
    let n_switch = p.usize_min("n_switch", 1)?;
    let sub = p.usize_min("sub_steps", 1)?;
    let reps = p.usize_min("replicas", 2)?;
    let level = p.f64_in("level", 1e-9, 0.5)?;
    let erosion = erosion_gaps(ctx, "erosion", theta, t, n_switch, sub, reps)?;
    let params = CouplingParams::new(0.0, 0.0, 2.0 * theta)?;
    let grid = TimeGrid::uniform(t, p.usize_min("n_steps", 1)?)?;
    let ff = p.usize_min("fine_factor", 1)?;
    let pairs = ctx.replicas("theta-pair", reps, |_, seed| Ok(sample_theta_pair(0.0, 0.0, &params, &grid, ff, seed)?.0.terminal_gap()))?;
    let ks = ks_two_sample(&erosion, &pairs, level)?;
    let mut rep = CriterionReport::new(9, TWO_POINT.title);
    rep.check(ks);
    let atom = |v: &[f64]| v.iter().filter(|&&x| x == 0.0).count() as f64 / v.len() as f64;
    rep.diagnostic(TestReport::new(
        (atom(&erosion) - atom(&pairs)).abs(),
        1.0,
        format!("P(gap = 0): erosion {:.4}, 2 theta pair {:.4}", atom(&erosion), atom(&pairs)),
    ));
    for (label, m) in [("half", (n_switch / 2).max(1)), ("double", 2 * n_switch)] {
        let e = erosion_gaps(ctx, &format!("erosion-{label}"), theta, t, m, sub, reps)?;
        let k = ks_two_sample(&e, &pairs, level)?;
        rep.sensitivity(format!("n_switch {label} ({m}): KS {:.4} vs critical {:.4}", k.statistic, k.threshold));
    }
    let mut table = Table::new("two_point_gaps", &["replica", "erosion_gap", "theta_pair_gap"]);
    for (i, (a, b)) in erosion.iter().zip(&pairs).enumerate() {
        table.push(vec![i as f64, *a, *b]);
    }
    let plot = Plot::new("two_point_gaps", "terminal gap CDF", "gap", "CDF")
        .with(Series::line("erosion 2-point", ecdf(&erosion)))
        .with(Series::line("2 theta pair", ecdf(&pairs)));
    Ok(Outcome { reports: vec![rep], tables: vec![table], plots: vec![plot] })
}
