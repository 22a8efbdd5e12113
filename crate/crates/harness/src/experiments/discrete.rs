//! The lattice model: flow property of the discrete kernels, the arrow
//! resampling semigroup, and diffusive scaling of a single walk.

use super::{runtime_check, timed, z_check, Outcome};
use crate::config::{param, ParamKind::*};
use crate::error::Result;
use crate::plot::{Plot, Series};
use crate::record::{CriterionReport, Table};
use crate::registry::{Context, Experiment};
use erosion_flow::lattice::{
    agreement_probability, diffusive_rescale, exact_kernel, kernel_compose, markov_composition_check, sample_arrow_field,
    trace_walk, Window,
};
use erosion_flow::special::normal_cdf;
use erosion_flow::stats::{ks_normal, TestReport};

pub const FLOW_PROPERTY: Experiment = Experiment {
    name: "discrete-flow-property",
    criteria: &[4],
    title: "discrete kernels compose exactly",
    description: "For random arrow fields, extending K_{0,s} to row n by mixing kernels from row s agrees entrywise with the direct dynamic program K_{0,n}.",
    params: &[
        param("fields", Int, "100", "number of random fields"),
        param("half_width", Int, "200", "window is k in [-half_width, half_width - 1]"),
        param("rows", Int, "400", "window is n in [0, rows - 1]"),
        param("qs", FloatList, "[0.6, 0.9]", "agreement probabilities"),
        param("tolerance", Float, "1e-12", "maximum entry difference"),
        param("max_seconds", Float, "30.0", "runtime limit"),
    ],
    run: run_flow,
};

fn run_flow(ctx: &Context) -> Result<Outcome> {
    let p = &ctx.params;
    let half = p.usize_min("half_width", 2)? as i64;
    let rows = p.usize_min("rows", 3)? as i64;
    let window = Window::new(-half, half - 1, 0, rows - 1)?;
    // The support of a kernel from (0, 0) grows one site per row on each side.
    let total = (half - 1).min(rows - 1) as usize;
    let qs = p.f64s("qs");
    let (res, secs) = timed(|| {
        ctx.replicas("fields", p.usize_min("fields", 1)?, |_, seed| {
            let field = sample_arrow_field(window, seed)?;
            let split = 1 + (seed % (total as u64 - 1)) as usize;
            let mut out = vec![split as f64];
            for &q in &qs {
                let direct = exact_kernel(&field, q, (0, 0), total)?;
                let first = exact_kernel(&field, q, (0, 0), split)?;
                let composed = kernel_compose(&first, &field, q, total as i64)?;
                let mass = direct.rows.iter().map(|r| (r.probs.iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max);
                out.push(composed.max_abs_diff(&direct));
                out.push(mass);
            }
            Ok(out)
        })
    });
    let per_field = res?;
    let mut rep = CriterionReport::new(4, FLOW_PROPERTY.title);
    let mut header = vec!["field".to_string(), "split_row".to_string()];
    for q in &qs {
        header.push(format!("max_diff_q{q}"));
        header.push(format!("mass_error_q{q}"));
    }
    let mut table = Table { name: "flow_property".into(), header, rows: Vec::new() };
    for (i, r) in per_field.iter().enumerate() {
        let mut row = vec![i as f64];
        row.extend_from_slice(r);
        table.push(row);
    }
    let mut plot = Plot::new("flow_property", "composition vs direct", "field", "max entry difference");
    for (j, q) in qs.iter().enumerate() {
        let worst = per_field.iter().map(|r| r[1 + 2 * j]).fold(0.0, f64::max);
        let mass = per_field.iter().map(|r| r[2 + 2 * j]).fold(0.0, f64::max);
        rep.check(TestReport::new(
            worst,
            p.f64("tolerance"),
            format!("q={q}: max entry difference over {} fields, {total} rows", per_field.len()),
        ));
        rep.diagnostic(TestReport::new(mass, p.f64("tolerance"), format!("q={q}: max row mass error")));
        plot.series.push(Series::scatter(format!("q={q}"), per_field.iter().enumerate().map(|(i, r)| (i as f64, r[1 + 2 * j])).collect()));
    }
    rep.check(runtime_check(secs, p.f64("max_seconds")));
    Ok(Outcome { reports: vec![rep], tables: vec![table], plots: vec![plot] })
}

pub const SEMIGROUP: Experiment = Experiment {
    name: "dynamics-semigroup",
    criteria: &[5],
    title: "arrow resampling composes as a semigroup",
    description: "Evolving a field for u1 then u2 leaves each arrow agreeing with the original with probability (1 + exp(-2(u1 + u2)))/2; the sites flipped by the first step agree with probability 1 - q(u2).",
    params: &[
        param("half_width", Int, "1000", "window is k in [-half_width, half_width - 1]"),
        param("rows", Int, "1000", "window is n in [0, rows - 1]"),
        param("u1", Float, "0.3", "first dynamics time"),
        param("u2", Float, "0.5", "second dynamics time"),
        param("z_max", Float, "4.0", "band in standard deviations"),
        param("max_seconds", Float, "10.0", "runtime limit"),
    ],
    run: run_semigroup,
};

fn run_semigroup(ctx: &Context) -> Result<Outcome> {
    let p = &ctx.params;
    let half = p.usize_min("half_width", 1)? as i64;
    let window = Window::new(-half, half - 1, 0, p.usize_min("rows", 1)? as i64 - 1)?;
    let (u1, u2) = (p.f64_in("u1", 0.0, f64::INFINITY)?, p.f64_in("u2", 0.0, f64::INFINITY)?);
    let z_max = p.f64("z_max");
    let (res, secs) = timed(|| markov_composition_check(window, u1, u2, ctx.seed("main")));
    let r = res?;
    let mut rep = CriterionReport::new(5, SEMIGROUP.title);
    rep.check(z_check(
        r.z,
        z_max,
        format!("agreement {:.6} vs {:.6} over {} sites (z)", r.agreement, r.expected, r.sites),
    ));
    rep.check(z_check(
        r.flipped_z,
        z_max,
        format!("agreement among first-step flips {:.6} vs {:.6} (z)", r.flipped_agreement, 1.0 - agreement_probability(u2)),
    ));
    rep.check(TestReport::new(r.semigroup_residual, 1e-14, "q(u1) q(u2) + (1-q(u1))(1-q(u2)) = q(u1+u2)"));
    rep.check(runtime_check(secs, p.f64("max_seconds")));
    for (label, v2) in [("half", 0.5 * u2), ("double", 2.0 * u2)] {
        let s = markov_composition_check(window, u1, v2, ctx.seed(label))?;
        rep.sensitivity(format!("u2 {label} ({v2}): agreement {:.6} vs {:.6}, z {:.2}", s.agreement, s.expected, s.z));
    }
    let mut table = Table::new("semigroup", &["u1", "u2", "sites", "agreement", "expected", "z", "flipped_agreement", "flipped_z"]);
    table.push(vec![u1, u2, r.sites as f64, r.agreement, r.expected, r.z, r.flipped_agreement, r.flipped_z]);
    Ok(Outcome { reports: vec![rep], tables: vec![table], plots: vec![] })
}

pub const DONSKER: Experiment = Experiment {
    name: "donsker",
    criteria: &[12],
    title: "rescaled walk is approximately standard normal",
    description: "Terminal value of a walk traced through a random arrow field for n steps, rescaled by sqrt(n), against the standard normal by a Kolmogorov-Smirnov test.",
    params: &[
        param("n", Int, "10000", "walk length"),
        param("replicas", Int, "10000", "independent fields"),
        param("width_sd", Float, "6.0", "window half-width in units of sqrt(n)"),
        param("level", Float, "0.01", "test level"),
        param("sensitivity_replicas", Int, "2000", "replicas for the half/double n lines"),
    ],
    run: run_donsker,
};

fn rescaled_ends(ctx: &Context, stream: &str, n: usize, replicas: usize, width_sd: f64) -> Result<Vec<f64>> {
    let half = (width_sd * (n as f64).sqrt()).ceil() as i64 + 1;
    let window = Window::new(-half, half, 0, n as i64)?;
    let eps = 1.0 / n as f64;
    ctx.replicas(stream, replicas, |_, seed| {
        let field = sample_arrow_field(window, seed)?;
        let walk = trace_walk(&field, (0, 0), n)?;
        Ok(diffusive_rescale(&walk[n..], n as i64, eps)?[0].1)
    })
}

fn run_donsker(ctx: &Context) -> Result<Outcome> {
    let p = &ctx.params;
    let n = p.usize_min("n", 1)?;
    let width = p.f64_in("width_sd", 1.0, 100.0)?;
    let level = p.f64_in("level", 1e-9, 0.5)?;
    let ends = rescaled_ends(ctx, "main", n, p.usize_min("replicas", 2)?, width)?;
    let ks = ks_normal(&ends, 0.0, 1.0, level)?;
    let mut rep = CriterionReport::new(12, DONSKER.title);
    rep.check(ks.clone());
    let sr = p.usize_min("sensitivity_replicas", 2)?;
    for (label, m) in [("half", n / 2), ("double", 2 * n)] {
        let e = rescaled_ends(ctx, label, m.max(1), sr, width)?;
        let k = ks_normal(&e, 0.0, 1.0, level)?;
        rep.sensitivity(format!("n {label} ({m}), {sr} replicas: KS {:.4} vs critical {:.4}", k.statistic, k.threshold));
    }
    let mut table = Table::new("donsker_terminal", &["replica", "x"]);
    for (i, &x) in ends.iter().enumerate() {
        table.push(vec![i as f64, x]);
    }
    let mut sorted = ends.clone();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() as f64;
    let step = (sorted.len() / 400).max(1);
    let ecdf: Vec<(f64, f64)> = sorted.iter().enumerate().step_by(step).map(|(i, &x)| (x, (i + 1) as f64 / m)).collect();
    let phi: Vec<(f64, f64)> = (0..=160).map(|i| -4.0 + 8.0 * i as f64 / 160.0).map(|x| (x, normal_cdf(x))).collect();
    let plot = Plot::new("donsker_ecdf", "rescaled terminal value", "x", "CDF")
        .with(Series::line("empirical", ecdf))
        .with(Series::line("standard normal", phi));
    Ok(Outcome { reports: vec![rep], tables: vec![table], plots: vec![plot] })
}
