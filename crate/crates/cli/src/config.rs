//! Run configuration: built-in presets, an optional JSON file, then
//! command-line overrides, applied in that order.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cavity_array::dmrg::DmrgConfig;
use cavity_array::model::ModelParams;
use cavity_array::scaling::Grid;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Point,
    ChargeGapCut,
    NeutralGapCut,
    DwCurve,
    DwScan,
    PhaseGrid,
    EdCheck,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Point => "point",
            Task::ChargeGapCut => "charge-gap-cut",
            Task::NeutralGapCut => "neutral-gap-cut",
            Task::DwCurve => "dw-curve",
            Task::DwScan => "dw-scan",
            Task::PhaseGrid => "phase-grid",
            Task::EdCheck => "ed-check",
        }
    }
}

/// Desk presets finish on a laptop; the larger preset reaches the full sizes
/// and fine grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Desk,
    Paper,
}

/// Everything a task needs. Lists that a task does not use are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub task: Option<Task>,
    /// Base couplings; `L`, `g2`, `t` and `delta` are replaced by the lists below.
    pub model: ModelParams,
    pub dmrg: DmrgConfig,
    pub sizes: Vec<usize>,
    pub g2: Vec<f64>,
    /// Replaces `g2` when present.
    pub g2_grid: Option<Grid>,
    pub t: Vec<f64>,
    pub delta: Vec<f64>,
    /// Kept-state values for convergence studies; empty means `dmrg.m` only.
    pub m: Vec<usize>,
    /// Total polariton number; `None` is unit filling, `N = L`.
    pub n_pol: Option<i32>,
    /// Targeted states for `point` and `ed-check`.
    pub targets: usize,
    pub out: PathBuf,
    pub seed: u64,
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            task: None,
            model: ModelParams::default(),
            dmrg: DmrgConfig::default(),
            sizes: vec![4],
            g2: vec![1.35],
            g2_grid: None,
            t: vec![0.25],
            delta: vec![-2.0],
            m: Vec::new(),
            n_pol: None,
            targets: 1,
            out: PathBuf::from("results"),
            seed: 1,
            workers: 1,
        }
    }
}

fn range(start: usize, stop: usize, step: usize) -> Vec<usize> {
    (start..=stop).step_by(step).collect()
}

impl RunConfig {
    /// Task defaults at the given scale.
    pub fn preset(task: Task, preset: Preset) -> Self {
        let base = Self {
            task: Some(task),
            ..Self::default()
        };
        let paper = preset == Preset::Paper;
        match task {
            Task::Point => Self {
                sizes: vec![if paper { 100 } else { 20 }],
                ..base
            },
            Task::EdCheck => Self {
                sizes: vec![2, 3, 4],
                g2: vec![0.5, 1.35, 1.5],
                ..base
            },
            Task::ChargeGapCut => Self {
                sizes: if paper { range(50, 300, 50) } else { range(20, 100, 20) },
                g2: vec![1.25, 1.3, 1.35, 1.5],
                ..base
            },
            Task::NeutralGapCut => Self {
                sizes: if paper { vec![40, 80, 120] } else { vec![40, 80] },
                g2_grid: Some(if paper {
                    Grid { start: 1.0, stop: 2.2, step: 0.05 }
                } else {
                    Grid { start: 1.0, stop: 2.2, step: 0.3 }
                }),
                m: if paper { vec![40, 80, 120] } else { vec![80] },
                ..base
            },
            Task::DwCurve => Self {
                sizes: vec![if paper { 300 } else { 100 }],
                g2: vec![1.3, 1.35, 1.4, 1.6],
                t: vec![0.05],
                ..base
            },
            Task::DwScan => Self {
                sizes: if paper { range(100, 300, 50) } else { range(40, 160, 40) },
                g2_grid: Some(Grid { start: 1.2, stop: 1.6, step: 0.05 }),
                t: vec![0.05],
                ..base
            },
            Task::PhaseGrid => Self {
                sizes: if paper { range(50, 200, 50) } else { range(20, 80, 20) },
                g2_grid: Some(if paper {
                    Grid { start: 0.5, stop: 2.0, step: 0.05 }
                } else {
                    Grid { start: 0.8, stop: 2.0, step: 0.3 }
                }),
                t: if paper {
                    (1..=6).map(|k| 0.05 * k as f64).collect()
                } else {
                    vec![0.05, 0.25]
                },
                ..base
            },
        }
    }

    /// Replaces every field present in a JSON object.
    pub fn merge_json(self, value: serde_json::Value) -> Result<Self> {
        let serde_json::Value::Object(patch) = value else {
            bail!("config file must hold a JSON object");
        };
        let mut base = serde_json::to_value(&self)?;
        merge(&mut base, serde_json::Value::Object(patch));
        serde_json::from_value(base).context("invalid config")
    }

    pub fn merge_file(self, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        self.merge_json(value)
    }

    pub fn g2_values(&self) -> Result<Vec<f64>> {
        match &self.g2_grid {
            Some(grid) => Ok(grid.values()?),
            None => Ok(self.g2.clone()),
        }
    }

    pub fn m_values(&self) -> Vec<usize> {
        if self.m.is_empty() {
            vec![self.dmrg.m]
        } else {
            self.m.clone()
        }
    }

    /// DMRG settings with the run seed applied.
    pub fn dmrg_config(&self) -> DmrgConfig {
        DmrgConfig {
            seed: self.seed,
            ..self.dmrg.clone()
        }
    }

    /// Model at one point of the parameter lists.
    pub fn params(&self, length: usize, g2: f64, t: f64, delta: f64) -> ModelParams {
        ModelParams {
            length,
            g2,
            t,
            delta,
            ..self.model.clone()
        }
    }

    /// Checks task-specific requirements before any job starts.
    pub fn validate(&self) -> Result<Task> {
        let Some(task) = self.task else {
            bail!("no task selected");
        };
        self.dmrg.validate()?;
        self.model.validate()?;
        let g2 = self.g2_values()?;
        if self.sizes.is_empty() || g2.is_empty() || self.t.is_empty() || self.delta.is_empty() {
            bail!("sizes, g2, t and delta lists must be nonempty");
        }
        if self.workers == 0 {
            bail!("workers must be at least 1");
        }
        if !(1..=2).contains(&self.targets) {
            bail!("targets must be 1 or 2");
        }
        if self.m_values().contains(&0) {
            bail!("kept states must be positive");
        }
        let min_size = *self.sizes.iter().min().expect("nonempty");
        let distinct = {
            let mut s = self.sizes.clone();
            s.sort_unstable();
            s.dedup();
            s.len()
        };
        match task {
            Task::Point => {
                if min_size < 2 {
                    bail!("point needs L >= 2");
                }
            }
            Task::EdCheck => {
                if min_size < 2 || *self.sizes.iter().max().expect("nonempty") > 6 {
                    bail!("ed-check sizes must lie in 2..=6");
                }
            }
            Task::ChargeGapCut => {
                if min_size < 4 || distinct < 3 {
                    bail!("charge-gap-cut needs at least three sizes, all >= 4");
                }
            }
            Task::NeutralGapCut => {
                if min_size < 4 {
                    bail!("neutral-gap-cut needs L >= 4");
                }
            }
            Task::DwCurve => {
                if min_size < 2 {
                    bail!("dw-curve needs L >= 2");
                }
            }
            Task::DwScan => {
                if min_size < 2 || distinct < 4 {
                    bail!("dw-scan needs at least four sizes");
                }
            }
            Task::PhaseGrid => {
                if min_size < 4 || distinct < 4 {
                    bail!("phase-grid needs at least four sizes, all >= 4");
                }
            }
        }
        Ok(task)
    }
}

fn merge(base: &mut serde_json::Value, patch: serde_json::Value) {
    match (base, patch) {
        (serde_json::Value::Object(b), serde_json::Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if v.is_object() && slot.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, p) => *b = p,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_json_keeps_other_fields() {
        let cfg = RunConfig::preset(Task::ChargeGapCut, Preset::Desk)
            .merge_json(serde_json::json!({"dmrg": {"m": 40}, "sizes": [8, 12, 16]}))
            .unwrap();
        assert_eq!(cfg.dmrg.m, 40);
        assert_eq!(cfg.dmrg.n_sweeps_max, DmrgConfig::default().n_sweeps_max);
        assert_eq!(cfg.sizes, vec![8, 12, 16]);
        assert_eq!(cfg.g2, vec![1.25, 1.3, 1.35, 1.5]);
        assert_eq!(cfg.validate().unwrap(), Task::ChargeGapCut);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = RunConfig::default().merge_json(serde_json::json!({"sizez": [4]}));
        assert!(err.is_err());
    }

    #[test]
    fn task_requirements() {
        let mut cfg = RunConfig::preset(Task::ChargeGapCut, Preset::Desk);
        cfg.sizes = vec![4, 6];
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::preset(Task::EdCheck, Preset::Desk);
        cfg.sizes = vec![7];
        assert!(cfg.validate().is_err());
        assert!(RunConfig::default().validate().is_err());
    }

    #[test]
    fn presets_validate() {
        use Task::*;
        for task in [Point, ChargeGapCut, NeutralGapCut, DwCurve, DwScan, PhaseGrid, EdCheck] {
            for preset in [Preset::Desk, Preset::Paper] {
                RunConfig::preset(task, preset).validate().unwrap();
            }
        }
    }
}
