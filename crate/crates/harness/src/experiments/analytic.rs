//! Closed-form checks: kappa against quadrature, the small-time limit of the
//! rescaled kappa representation, the lambda/kappa comparison, and the theta
//! family algebra.

use super::{runtime_check, timed, Outcome};
use crate::config::{param, ParamKind::*};
use crate::error::Result;
use crate::plot::{Plot, Series};
use crate::record::{CriterionReport, Table};
use crate::registry::{Context, Experiment};
use erosion_flow::analytics::{kappa, kappa_quadrature, lambda_coalescing};
use erosion_flow::generator::{apply_generator, consistency_check_within, psi_total_closed_form, PwLinear, ThetaFamily};
use erosion_flow::npoint::{erosion_theta_family, general_theta_family};
use erosion_flow::stats::TestReport;
use std::f64::consts::PI;

pub const KAPPA: Experiment = Experiment {
    name: "kappa-closed-form",
    criteria: &[1],
    title: "kappa closed form vs quadrature",
    description: "Maximum absolute deviation of the closed form kappa_t(x) from adaptive quadrature of its defining integral over a (t, x) grid.",
    params: &[
        param("ts", FloatList, "[0.01, 0.1, 1.0, 10.0]", "times"),
        param("xs", FloatList, "[0.0, 0.1, 1.0, 5.0]", "offsets"),
        param("tolerance", Float, "1e-10", "maximum absolute deviation"),
        param("quad_tol", Float, "1e-13", "quadrature tolerance"),
        param("max_seconds", Float, "1.0", "runtime limit"),
    ],
    run: run_kappa,
};

fn run_kappa(ctx: &Context) -> Result<Outcome> {
    let p = &ctx.params;
    let (ts, xs) = (p.f64s("ts"), p.f64s("xs"));
    let quad_tol = p.f64("quad_tol");
    let mut table = Table::new("kappa_grid", &["t", "x", "closed_form", "quadrature", "abs_diff"]);
    let (res, secs) = timed(|| -> Result<f64> {
        let mut worst = 0.0f64;
        for &t in &ts {
            for &x in &xs {
                let c = kappa(t, x)?;
                let q = kappa_quadrature(t, x, quad_tol)?;
                worst = worst.max((c - q).abs());
                table.push(vec![t, x, c, q, (c - q).abs()]);
            }
        }
        Ok(worst)
    });
    let worst = res?;
    let mut rep = CriterionReport::new(1, KAPPA.title);
    rep.check(TestReport::new(worst, p.f64("tolerance"), format!("max |closed form - quadrature| over {} points", ts.len() * xs.len())));
    rep.check(runtime_check(secs, p.f64("max_seconds")));
    let mut plot = Plot::new("kappa_curves", "kappa_t(x)", "x", "kappa");
    for &t in &ts {
        let pts = (0..=200)
            .map(|i| {
                let x = 5.0 * i as f64 / 200.0;
                Ok((x, kappa(t, x)?))
            })
            .collect::<erosion_flow::Result<Vec<_>>>()?;
        plot.series.push(Series::line(format!("t={t}"), pts));
    }
    Ok(Outcome { reports: vec![rep], tables: vec![table], plots: vec![plot] })
}

pub const PSI_LIMIT: Experiment = Experiment {
    name: "psi-monotone-limit",
    criteria: &[2],
    title: "rescaled kappa representation decreases to the generator",
    description: "theta sqrt(pi/t) psi_t g for g the pairwise distance sum at t = 4^-j, j = 0..levels: nonincreasing as t decreases and within tolerance of the generator at the smallest t.",
    params: &[
        param("theta", Float, "1.0", "coupling strength"),
        param("levels", Int, "12", "smallest t is 4^-levels"),
        param("tolerance", Float, "1e-6", "distance to the generator at the smallest t"),
        param("rounding", Float, "1e-12", "relative slack for the monotonicity comparison"),
        param("max_seconds", Float, "1.0", "runtime limit"),
    ],
    run: run_psi,
};

fn psi_sequence(theta: f64, x: &[f64], levels: usize) -> Result<Vec<(f64, f64)>> {
    let g = PwLinear::pairwise_distance_sum(x.len());
    let mut out = Vec::with_capacity(levels + 1);
    for j in 0..=levels {
        let t = 0.25f64.powi(j as i32);
        out.push((t, theta * (PI / t).sqrt() * psi_total_closed_form(&g, x, t)?));
    }
    Ok(out)
}

fn run_psi(ctx: &Context) -> Result<Outcome> {
    let p = &ctx.params;
    let theta = p.f64_in("theta", 1e-12, f64::INFINITY)?;
    let levels = p.usize_min("levels", 1)?;
    let rounding = p.f64("rounding");
    let mut rep = CriterionReport::new(2, PSI_LIMIT.title);
    let mut table = Table::new("psi_sequence", &["n", "t", "rescaled_psi", "generator"]);
    let mut plot = Plot::new("psi_limit", "theta sqrt(pi/t) psi_t g", "log4(1/t)", "value");
    let points: [(&[f64], bool); 3] = [(&[0.0, 0.0], true), (&[0.0, 0.0, 0.0], true), (&[0.0, 0.0, 0.5], false)];
    let (res, secs) = timed(|| -> Result<Vec<(TestReport, TestReport, bool)>> {
        let mut out = Vec::new();
        for (x, gating) in points {
            let n = x.len();
            let seq = psi_sequence(theta, x, levels)?;
            let fam = erosion_theta_family(theta, n)?;
            let gen = apply_generator(&fam, &PwLinear::pairwise_distance_sum(n), x, 0.0)?;
            let scale = seq.iter().map(|v| v.1.abs()).fold(gen.abs(), f64::max).max(1.0);
            let rise = seq.windows(2).map(|w| w[1].1 - w[0].1).fold(f64::NEG_INFINITY, f64::max);
            let last = seq.last().expect("levels >= 1").1;
            for (t, v) in &seq {
                table.push(vec![n as f64, *t, *v, gen]);
            }
            plot.series.push(Series::line(
                format!("x={x:?}"),
                seq.iter().enumerate().map(|(j, v)| (j as f64, v.1)).collect(),
            ));
            out.push((
                TestReport::new(rise, rounding * scale, format!("largest increase as t decreases, x={x:?}")),
                TestReport::new((last - gen).abs(), p.f64("tolerance"), format!("|value at t=4^-{levels} - generator {gen}|, x={x:?}")),
                gating,
            ));
        }
        Ok(out)
    });
    for (mono, lim, gating) in res? {
        if gating {
            rep.check(mono);
            rep.check(lim);
        } else {
            rep.diagnostic(mono);
            rep.diagnostic(lim);
        }
    }
    rep.check(runtime_check(secs, p.f64("max_seconds")));
    Ok(Outcome { reports: vec![rep], tables: vec![table], plots: vec![plot] })
}

pub const COMPARISON: Experiment = Experiment {
    name: "comparison-inequality",
    criteria: &[3],
    title: "lambda/kappa comparison inequality",
    description: "sqrt(4/(pi t)) lambda_t(x) <= kappa_t(x) over a (t, x) grid.",
    params: &[
        param("ts", FloatList, "[0.01, 0.1, 1.0, 10.0]", "times"),
        param("xs", FloatList, "[0.0, 0.1, 1.0, 5.0]", "offsets"),
        param("slack", Float, "1e-12", "allowed excess"),
    ],
    run: run_comparison,
};

fn run_comparison(ctx: &Context) -> Result<Outcome> {
    let p = &ctx.params;
    let mut table = Table::new("comparison_grid", &["t", "x", "scaled_lambda", "kappa", "excess"]);
    let mut worst = f64::NEG_INFINITY;
    let mut violations = 0usize;
    let slack = p.f64("slack");
    for &t in &p.f64s("ts") {
        for &x in &p.f64s("xs") {
            let lhs = (4.0 / (PI * t)).sqrt() * lambda_coalescing(t, x)?;
            let rhs = kappa(t, x)?;
            worst = worst.max(lhs - rhs);
            if lhs - rhs > slack {
                violations += 1;
            }
            table.push(vec![t, x, lhs, rhs, lhs - rhs]);
        }
    }
    let mut rep = CriterionReport::new(3, COMPARISON.title);
    rep.check(TestReport::new(worst, slack, format!("max excess of sqrt(4/(pi t)) lambda over kappa ({violations} violations)")));
    let mut plot = Plot::new("comparison_t1", "t = 1", "x", "value");
    let grid: Vec<f64> = (0..=100).map(|i| 4.0 * i as f64 / 100.0).collect();
    plot.series.push(Series::line("kappa", grid.iter().map(|&x| Ok((x, kappa(1.0, x)?))).collect::<erosion_flow::Result<_>>()?));
    plot.series.push(Series::line(
        "sqrt(4/pi) lambda",
        grid.iter().map(|&x| Ok((x, (4.0 / PI).sqrt() * lambda_coalescing(1.0, x)?))).collect::<erosion_flow::Result<_>>()?,
    ));
    Ok(Outcome { reports: vec![rep], tables: vec![table], plots: vec![plot] })
}

pub const THETA_ALGEBRA: Experiment = Experiment {
    name: "theta-family-algebra",
    criteria: &[11],
    title: "theta family consistency, positivity and boundary-shift invariance",
    description: "Exact consistency and positivity of erosion and general theta families for k + l <= level, and bit-exact invariance of the generator under symmetric boundary shifts.",
    params: &[
        param("erosion_thetas", FloatList, "[0.5, 1.0, 2.0]", "erosion family parameters"),
        param("general", FloatList, "[1.0, 0.5, -0.5, 1.0, 2.0, 0.0]", "flattened (theta, beta1, beta2) triples"),
        param("level", Int, "20", "largest k + l checked"),
        param("shifts", FloatList, "[0.5, -1.25, 3.0]", "dyadic boundary shifts"),
        param("max_seconds", Float, "1.0", "runtime limit"),
    ],
    run: run_theta_algebra,
};

fn shift_test_functions() -> Result<Vec<(PwLinear, Vec<Vec<f64>>)>> {
    let mut out = Vec::new();
    for n in 2..=4 {
        let g = PwLinear::pairwise_distance_sum(n);
        out.push((g, tie_points(n)));
    }
    let mixed = PwLinear::closed(
        0.25,
        vec![0.5, -1.0, 0.25, 0.75],
        vec![
            vec![0.0, 1.5, -0.5, 0.25],
            vec![0.0, 0.0, 0.75, -0.125],
            vec![0.0, 0.0, 0.0, 2.0],
            vec![0.0; 4],
        ],
    )?;
    out.push((mixed.clone(), tie_points(4)));
    out.push((mixed.to_table()?, tie_points(4)));
    Ok(out)
}

fn tie_points(n: usize) -> Vec<Vec<f64>> {
    let base: [[f64; 4]; 6] = [
        [0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 1.0],
        [1.0, 0.0, 1.0, 0.0],
        [0.3, -2.0, 0.3, 0.3],
        [2.0, 1.0, 0.5, -1.0],
        [-0.7, -0.7, 0.4, -0.7],
    ];
    base.iter().map(|b| b[..n].to_vec()).collect()
}

fn run_theta_algebra(ctx: &Context) -> Result<Outcome> {
    let p = &ctx.params;
    let level = p.usize_min("level", 1)?;
    let k_max = level + 1;
    let general = p.f64s("general");
    if !general.len().is_multiple_of(3) {
        return Err(crate::error::HarnessError::param("general", "length must be a multiple of 3"));
    }
    let mut rep = CriterionReport::new(11, THETA_ALGEBRA.title);
    let mut table = Table::new("theta_families", &["kind", "theta", "beta1", "beta2", "relations", "violations"]);
    let (res, secs) = timed(|| -> Result<Vec<TestReport>> {
        let mut fams: Vec<(String, ThetaFamily, [f64; 4])> = Vec::new();
        for &th in &p.f64s("erosion_thetas") {
            fams.push((format!("erosion theta={th}"), erosion_theta_family(th, k_max)?, [0.0, th, 0.0, 0.0]));
        }
        for c in general.chunks(3) {
            fams.push((
                format!("general (theta, beta1, beta2)=({}, {}, {})", c[0], c[1], c[2]),
                general_theta_family(c[0], c[1], c[2], k_max)?,
                [1.0, c[0], c[1], c[2]],
            ));
        }
        let funcs = shift_test_functions()?;
        let mut out = Vec::new();
        for (label, fam, meta) in &fams {
            let cr = consistency_check_within(fam, level, 0.0);
            let mut r = cr.to_test_report();
            r.description = format!("{label}: {}", r.description);
            table.push(vec![meta[0], meta[1], meta[2], meta[3], cr.relations_checked as f64, r.statistic]);
            out.push(r);
            let mut mismatches = 0usize;
            let mut evaluated = 0usize;
            for &delta in &p.f64s("shifts") {
                let shifted = fam.shifted_boundary(delta);
                for (f, pts) in &funcs {
                    for x in pts {
                        let a = apply_generator(fam, f, x, 0.0)?;
                        let b = apply_generator(&shifted, f, x, 0.0)?;
                        evaluated += 1;
                        if a.to_bits() != b.to_bits() {
                            mismatches += 1;
                        }
                    }
                }
            }
            out.push(TestReport::new(
                mismatches as f64,
                0.0,
                format!("{label}: generator bit-identical under symmetric boundary shifts ({evaluated} evaluations)"),
            ));
        }
        Ok(out)
    });
    for r in res? {
        rep.check(r);
    }
    rep.check(runtime_check(secs, p.f64("max_seconds")));
    Ok(Outcome { reports: vec![rep], tables: vec![table], plots: vec![] })
}
