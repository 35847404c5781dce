//! Independent simulation jobs and the worker pool that runs them.
//!
//! Each finished job is stored as `jobs/<hash>.json`, written atomically. The
//! hash covers every input of the job, so a later run with the same inputs
//! reuses the file instead of recomputing.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, Result};
use cavity_array::dmrg::{dmrg_run, DmrgConfig, GroundStateResult};
use cavity_array::ed::{ed_lowest_states, EdConfig};
use cavity_array::model::ModelParams;
use cavity_array::observables::{dw_midpoint, filling, DwCurve};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::store::{sha256_hex, write_atomic};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Measure {
    pub midpoint: bool,
    pub curve: bool,
    pub density: bool,
    pub run_log: bool,
    /// Also solve the sector by exact diagonalization.
    pub ed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobSpec {
    pub params: ModelParams,
    pub n_pol: i32,
    pub dmrg: DmrgConfig,
    pub measure: Measure,
}

impl JobSpec {
    pub fn label(&self) -> String {
        format!(
            "t={} g2={} delta={} L={} N={} m={} k={}",
            self.params.t,
            self.params.g2,
            self.params.delta,
            self.params.length,
            self.n_pol,
            self.dmrg.m,
            self.dmrg.target_count
        )
    }

    /// Content hash of the inputs, stable across runs of the same version.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(&(env!("CARGO_PKG_VERSION"), self)).expect("plain data serializes");
        sha256_hex(json.as_bytes())[..20].to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobOutput {
    pub energies: Vec<f64>,
    pub converged: bool,
    pub sweeps: usize,
    pub steps: usize,
    pub max_truncation_error: f64,
    pub midpoint: Option<f64>,
    pub curve: Option<DwCurve>,
    pub density: Option<Vec<f64>>,
    pub run_log: Option<String>,
    pub ed_energies: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StoredJob {
    spec: JobSpec,
    output: JobOutput,
}

fn summarize(run: &GroundStateResult, measure: Measure) -> cavity_array::Result<JobOutput> {
    Ok(JobOutput {
        energies: run.energies.clone(),
        converged: run.converged,
        sweeps: run.sweep_energies.len(),
        steps: run.steps.len(),
        max_truncation_error: run.max_truncation_error(),
        midpoint: if measure.midpoint && run.length >= 2 {
            Some(dw_midpoint(run)?)
        } else {
            None
        },
        curve: if measure.curve {
            Some(DwCurve::measure(run.state(), filling(run))?)
        } else {
            None
        },
        density: if measure.density {
            Some(run.state().density_profile()?)
        } else {
            None
        },
        run_log: measure.run_log.then(|| run.run_log()),
        ed_energies: None,
    })
}

pub fn run_job(spec: &JobSpec) -> Result<JobOutput> {
    let run = dmrg_run(&spec.params, spec.n_pol, &spec.dmrg)?;
    let mut out = summarize(&run, spec.measure)?;
    if spec.measure.ed {
        let ed = ed_lowest_states(&spec.params, spec.n_pol, spec.dmrg.target_count, &EdConfig::default())?;
        out.ed_energies = Some(ed.energies);
    }
    Ok(out)
}

/// Runs jobs on a bounded pool; results come back in input order.
pub struct Runner {
    pub workers: usize,
    /// Where finished jobs are cached; `None` disables caching.
    pub cache: Option<PathBuf>,
}

impl Runner {
    pub fn cache_path(&self, spec: &JobSpec) -> Option<PathBuf> {
        self.cache.as_ref().map(|d| d.join(format!("{}.json", spec.hash())))
    }

    fn cached(path: &Path, spec: &JobSpec) -> Option<JobOutput> {
        let text = std::fs::read_to_string(path).ok()?;
        let stored: StoredJob = serde_json::from_str(&text).ok()?;
        (stored.spec == *spec).then_some(stored.output)
    }

    fn one(&self, spec: &JobSpec) -> std::result::Result<JobOutput, String> {
        let path = self.cache_path(spec);
        if let Some(out) = path.as_deref().and_then(|p| Self::cached(p, spec)) {
            log::info!("cached {}", spec.label());
            return Ok(out);
        }
        let clock = std::time::Instant::now();
        let out = run_job(spec).map_err(|e| format!("{e:#}"))?;
        log::info!("done {} in {:.1}s", spec.label(), clock.elapsed().as_secs_f64());
        if let Some(p) = path {
            let stored = StoredJob {
                spec: spec.clone(),
                output: out.clone(),
            };
            let text = serde_json::to_string(&stored).map_err(|e| e.to_string())?;
            write_atomic(&p, text.as_bytes()).map_err(|e| format!("{e:#}"))?;
        }
        Ok(out)
    }

    pub fn run(&self, specs: &[JobSpec]) -> Result<Vec<std::result::Result<JobOutput, String>>> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| anyhow!("worker pool: {e}"))?;
        log::info!("{} jobs on {} workers", specs.len(), self.workers);
        Ok(pool.install(|| specs.par_iter().map(|s| self.one(s)).collect()))
    }
}
