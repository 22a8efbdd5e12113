use crate::config::{ExperimentConfig, ParamSpec, Params};
use crate::error::{HarnessError, Result};
use crate::experiments::{self, Outcome};
use crate::parallel::map_replicas;
use crate::plot::emit_plots;
use crate::record::{RunRecord, RESULTS_FILE};
use erosion_flow::rng::derive_seed;
use std::path::Path;
use std::time::Instant;

/// A named experiment and the acceptance criteria it decides.
pub struct Experiment {
    pub name: &'static str,
    pub criteria: &'static [u8],
    pub title: &'static str,
    pub description: &'static str,
    pub params: &'static [ParamSpec],
    pub run: fn(&Context) -> Result<Outcome>,
}

impl std::fmt::Debug for Experiment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Experiment").field("name", &self.name).field("criteria", &self.criteria).finish()
    }
}

/// What an experiment sees while running.
#[derive(Debug, Clone)]
pub struct Context {
    pub name: String,
    pub root_seed: u64,
    pub params: Params,
}

impl Context {
    /// Seed for a single draw on a named stream.
    pub fn seed(&self, stream: &str) -> u64 {
        derive_seed(self.root_seed, &format!("{}/{stream}", self.name), 0)
    }

    /// Runs `replicas` independent replicas on a named stream; results in index order.
    pub fn replicas<T, F>(&self, stream: &str, replicas: usize, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(u64, u64) -> erosion_flow::Result<T> + Sync,
    {
        map_replicas(self.root_seed, &format!("{}/{stream}", self.name), replicas, f)
    }
}

pub fn registry() -> &'static [Experiment] {
    experiments::ALL
}

pub fn find(name: &str) -> Result<&'static Experiment> {
    registry().iter().find(|e| e.name == name).ok_or_else(|| HarnessError::UnknownExperiment(name.to_string()))
}

/// Runs the configured experiment; writes `results.json`, CSV tables and SVG
/// plots when `output_dir` is set.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunRecord> {
    let exp = find(&config.name)?;
    let params = Params::resolve(exp.params, &config.params)?;
    let ctx = Context { name: exp.name.to_string(), root_seed: config.root_seed, params: params.clone() };
    let start = Instant::now();
    let outcome = (exp.run)(&ctx)?;
    let wall_time_s = start.elapsed().as_secs_f64();

    let mut got: Vec<u8> = outcome.reports.iter().map(|r| r.criterion).collect();
    got.sort_unstable();
    let mut want = exp.criteria.to_vec();
    want.sort_unstable();
    assert_eq!(got, want, "experiment {} must report each of its criteria exactly once", exp.name);

    let mut snapshot = config.clone();
    snapshot.params = params.0;
    let mut record = RunRecord {
        pass: outcome.reports.iter().all(|r| r.pass),
        config: snapshot,
        reports: outcome.reports,
        wall_time_s,
        artifacts: Vec::new(),
    };
    if let Some(dir) = &config.output_dir {
        write_artifacts(dir, &outcome.tables, &outcome.plots, &mut record)?;
    }
    Ok(record)
}

fn write_artifacts(
    dir: &Path,
    tables: &[crate::record::Table],
    plots: &[crate::plot::Plot],
    record: &mut RunRecord,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    for t in tables {
        let name = format!("{}.csv", t.name);
        let path = dir.join(&name);
        std::fs::write(&path, t.to_csv()).map_err(|e| HarnessError::io(&path, e))?;
        record.artifacts.push(name);
    }
    for p in emit_plots(plots, dir)? {
        record.artifacts.push(p.file_name().expect("file").to_string_lossy().into_owned());
    }
    record.artifacts.push(RESULTS_FILE.to_string());
    let path = dir.join(RESULTS_FILE);
    std::fs::write(&path, record.to_json()?).map_err(|e| HarnessError::io(&path, e))?;
    Ok(())
}
