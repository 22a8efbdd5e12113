//! The registered experiments, one per acceptance criterion (the theta-pair
//! identities share one ensemble and one experiment).

mod analytic;
mod coupling;
mod discrete;
mod martingale;

use crate::plot::Plot;
use crate::record::{CriterionReport, Table};
use crate::registry::Experiment;
use erosion_flow::stats::TestReport;
use std::time::Instant;

#[derive(Debug, Default)]
pub struct Outcome {
    pub reports: Vec<CriterionReport>,
    pub tables: Vec<Table>,
    pub plots: Vec<Plot>,
}

pub static ALL: &[Experiment] = &[
    analytic::KAPPA,
    analytic::PSI_LIMIT,
    analytic::COMPARISON,
    discrete::FLOW_PROPERTY,
    discrete::SEMIGROUP,
    coupling::COUPLING_LIMIT,
    coupling::THETA_IDENTITIES,
    coupling::TWO_POINT,
    martingale::NPOINT_MARTINGALE,
    analytic::THETA_ALGEBRA,
    discrete::DONSKER,
];

pub(crate) fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let v = f();
    (v, start.elapsed().as_secs_f64())
}

pub(crate) fn runtime_check(secs: f64, limit: f64) -> TestReport {
    TestReport::new(secs, limit, format!("runtime {secs:.3} s (limit {limit} s)"))
}

/// Two-sided z statistic check `|z| <= z_max`.
pub(crate) fn z_check(z: f64, z_max: f64, what: impl Into<String>) -> TestReport {
    TestReport::new(z.abs(), z_max, what)
}
