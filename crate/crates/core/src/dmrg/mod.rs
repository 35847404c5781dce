//! Finite-system two-site DMRG at fixed total polariton number.
//!
//! The chain is grown with the infinite-system algorithm (both blocks gain a
//! site per step, the superblock targets the charge closest to the final
//! filling) and then swept back and forth. Blocks carry integer charge labels
//! on every kept state, so the superblock only contains charge-compatible
//! products and the target sector is exact.

pub mod block;
pub mod davidson;
pub mod mps;
pub mod superblock;

use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Chain, Charge, ModelParams};
use block::{Block, Side};
use davidson::{davidson, lanczos, DavidsonParams, Eigenpairs};
pub use mps::MpsState;
use superblock::Superblock;

/// Residual tolerance while growing the chain from random starts.
const WARMUP_SOLVER_TOL: f64 = 1e-4;

/// Infinite-system growth settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Warmup {
    /// Kept states while growing, never above the sweep value `m`; `None`
    /// uses `m`.
    pub kept: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DmrgConfig {
    pub m: usize,
    pub n_sweeps_max: usize,
    /// Per-site ground-energy change between full sweeps that counts as converged.
    pub energy_tol: f64,
    pub target_count: usize,
    pub target_weights: Vec<f64>,
    pub superblock_solver_tol: f64,
    /// Residual tolerance for intermediate steps; the returned states are
    /// always refined to `superblock_solver_tol`.
    pub sweep_solver_tol: f64,
    pub solver_max_iter: usize,
    pub warmup: Warmup,
    pub seed: u64,
}

impl Default for DmrgConfig {
    fn default() -> Self {
        Self {
            m: 80,
            n_sweeps_max: 20,
            energy_tol: 1e-9,
            target_count: 1,
            target_weights: vec![1.0],
            superblock_solver_tol: 1e-9,
            sweep_solver_tol: 1e-4,
            solver_max_iter: 400,
            warmup: Warmup { kept: Some(40) },
            seed: 1,
        }
    }
}

impl DmrgConfig {
    /// Two-target configuration with equal weights.
    pub fn two_targets(self) -> Self {
        Self {
            target_count: 2,
            target_weights: vec![0.5, 0.5],
            ..self
        }
    }

    pub fn with_m(self, m: usize) -> Self {
        Self { m, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 1 {
            return Err(Error::InvalidParameter("m must be at least 1".into()));
        }
        if !(1..=2).contains(&self.target_count) {
            return Err(Error::InvalidParameter(format!(
                "target_count must be 1 or 2, got {}",
                self.target_count
            )));
        }
        if self.target_weights.len() != self.target_count
            || self.target_weights.iter().any(|&w| !(w > 0.0))
            || (self.target_weights.iter().sum::<f64>() - 1.0).abs() > 1e-12
        {
            return Err(Error::InvalidParameter(
                "target weights must be positive, one per target, and sum to 1".into(),
            ));
        }
        if self.warmup.kept == Some(0) {
            return Err(Error::InvalidParameter("warmup kept states must be at least 1".into()));
        }
        if self.n_sweeps_max < 1 {
            return Err(Error::InvalidParameter("n_sweeps_max must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Grow,
    Right,
    Left,
}

/// One superblock diagonalization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRecord {
    pub sweep: usize,
    /// Number of sites in the left block.
    pub position: usize,
    pub direction: Direction,
    /// States kept in the block grown after this step (0 when none was grown).
    pub kept: usize,
    pub truncation_error: f64,
    pub energies: Vec<f64>,
    pub matvecs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    EnergyConverged,
    SweepLimit,
}

#[derive(Debug, Clone)]
pub struct GroundStateResult {
    pub length: usize,
    pub total_charge: Charge,
    /// Total energies of the targeted states, ascending.
    pub energies: Vec<f64>,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub steps: Vec<StepRecord>,
    /// Target energies at the chain center after each full sweep.
    pub sweep_energies: Vec<Vec<f64>>,
    pub states: Vec<MpsState>,
}

impl GroundStateResult {
    pub fn energy(&self) -> f64 {
        self.energies[0]
    }

    pub fn energy_per_site(&self, target: usize) -> f64 {
        self.energies[target] / self.length as f64
    }

    pub fn state(&self) -> &MpsState {
        &self.states[0]
    }

    pub fn max_truncation_error(&self) -> f64 {
        self.steps
            .iter()
            .map(|s| s.truncation_error)
            .fold(0.0, f64::max)
    }

    /// One line per step: sweep, position, direction, kept, truncation error, energy.
    pub fn run_log(&self) -> String {
        let mut out = String::from("sweep,position,direction,kept,truncation_error,energy\n");
        for s in &self.steps {
            out.push_str(&format!(
                "{},{},{:?},{},{:.6e},{}\n",
                s.sweep,
                s.position,
                s.direction,
                s.kept,
                s.truncation_error,
                crate::format_sig(s.energies[0])
            ));
        }
        out
    }
}

pub fn dmrg_run(params: &ModelParams, total_charge: Charge, config: &DmrgConfig) -> Result<GroundStateResult> {
    let chain = Chain::from_params(params)?;
    run_chain(&chain, total_charge, config)
}

/// Runs DMRG on an arbitrary charge-conserving uniform chain.
pub fn run_chain(chain: &Chain, total_charge: Charge, config: &DmrgConfig) -> Result<GroundStateResult> {
    config.validate()?;
    let l = chain.length;
    if l < 2 {
        return Err(Error::InvalidParameter("DMRG needs at least two sites".into()));
    }
    if total_charge < 0 || total_charge > chain.max_charge() * l as Charge {
        return Err(Error::EmptySector(total_charge as i64));
    }
    Engine::new(chain, total_charge, config).run()
}

struct Engine<'a> {
    chain: &'a Chain,
    total: Charge,
    config: &'a DmrgConfig,
    left: Vec<Option<Rc<Block>>>,
    right: Vec<Option<Rc<Block>>>,
    steps: Vec<StepRecord>,
    rng: ChaCha8Rng,
    scratch: Vec<f64>,
}

impl<'a> Engine<'a> {
    fn new(chain: &'a Chain, total: Charge, config: &'a DmrgConfig) -> Self {
        let l = chain.length;
        let mut left = vec![None; l - 1];
        let mut right = vec![None; l - 1];
        left[0] = Some(Rc::new(Block::empty(Side::Left)));
        right[0] = Some(Rc::new(Block::empty(Side::Right)));
        Self {
            chain,
            total,
            config,
            left,
            right,
            steps: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            scratch: Vec::new(),
        }
    }

    fn solver_params(&self, tol: f64) -> DavidsonParams {
        DavidsonParams {
            tol,
            max_iter: self.config.solver_max_iter,
            max_subspace: if self.config.target_count == 1 { 48 } else { 24 },
            dense_below: 64,
        }
    }

    fn step_tol(&self) -> f64 {
        self.config.superblock_solver_tol.max(self.config.sweep_solver_tol)
    }

    fn solve(&mut self, sb: &Superblock<'_>, starts: Vec<Vec<f64>>, tol: f64) -> Result<Eigenpairs> {
        if sb.dim() == 0 {
            return Err(Error::EmptySector(sb.target as i64));
        }
        let k = self.config.target_count;
        if sb.dim() < k {
            return Err(Error::InvalidParameter(format!(
                "superblock sector of dimension {} cannot hold {k} targets",
                sb.dim()
            )));
        }
        let mut starts = starts;
        if starts.is_empty() {
            starts = (0..k)
                .map(|_| (0..sb.dim()).map(|_| self.rng.gen::<f64>() - 0.5).collect())
                .collect();
        }
        let diag = sb.diagonal();
        if log::log_enabled!(log::Level::Trace) {
            let x = &starts[0];
            let nrm: f64 = x.iter().map(|v| v * v).sum::<f64>();
            let mut y = vec![0.0; x.len()];
            sb.apply(x, &mut y, &mut self.scratch);
            let e: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / nrm;
            let r: f64 = x.iter().zip(&y).map(|(a, b)| (b - e * a).powi(2)).sum::<f64>().sqrt() / nrm.sqrt();
            log::trace!("start norm {nrm:.6} rayleigh {e:.12} residual {r:.3e}");
        }
        let params = self.solver_params(tol);
        let scratch = &mut self.scratch;
        let mut apply = |x: &[f64], y: &mut [f64]| sb.apply(x, y, scratch);
        let clock = std::time::Instant::now();
        let result = if k == 1 {
            lanczos(&mut apply, diag.len(), starts.into_iter().next(), params)
        } else {
            davidson(&mut apply, &diag, starts, k, params)
        };
        log::debug!(
            "superblock dim {} matvecs {} in {:.3}s",
            sb.dim(),
            result.matvecs,
            clock.elapsed().as_secs_f64()
        );
        if !result.converged {
            let worst = result.residuals.iter().copied().fold(0.0, f64::max);
            // a stalled but tiny residual is still usable; anything else is a failure
            if !(worst < 1e3 * params.tol) {
                return Err(Error::NotConverged {
                    iterations: result.matvecs,
                    residuals: result.residuals,
                });
            }
            log::warn!("superblock solver stalled at residual {worst:.3e}");
        }
        Ok(result)
    }

    fn warmup_target(&self, len: usize) -> Charge {
        let l = self.chain.length;
        if len == l {
            return self.total;
        }
        let q = (self.total as f64 * len as f64 / l as f64).round() as Charge;
        q.clamp(0, self.chain.max_charge() * len as Charge)
    }

    fn record(&mut self, sweep: usize, position: usize, direction: Direction, eig: &Eigenpairs, kept: usize, trunc: f64) {
        log::debug!(
            "sweep {sweep} pos {position} {direction:?} kept {kept} trunc {trunc:.3e} E {:.12}",
            eig.values[0]
        );
        self.steps.push(StepRecord {
            sweep,
            position,
            direction,
            kept,
            truncation_error: trunc,
            energies: eig.values.clone(),
            matvecs: eig.matvecs,
        });
    }

    fn block(&self, side: Side, len: usize) -> Rc<Block> {
        let v = match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        };
        Rc::clone(v[len].as_ref().expect("block built before use"))
    }

    fn run(mut self) -> Result<GroundStateResult> {
        let l = self.chain.length;
        let weights = self.config.target_weights.clone();
        let warm_m = self.config.warmup.kept.map_or(self.config.m, |k| k.min(self.config.m));

        // infinite-system growth
        let (mut ll, mut lr) = (0usize, 0usize);
        let mut eig;
        loop {
            let len = ll + lr + 2;
            let target = self.warmup_target(len);
            let chain = self.chain;
            let (lb, rb) = (self.block(Side::Left, ll), self.block(Side::Right, lr));
            let sb = Superblock::new(chain, &lb, &rb, target);
            eig = self.solve(&sb, Vec::new(), self.step_tol().max(WARMUP_SOLVER_TOL))?;
            if len == l {
                self.record(0, ll, Direction::Grow, &eig, 0, 0.0);
                break;
            }
            let grow_right = ll + lr + 4 <= l;
            let tl = sb.truncate(Side::Left, &eig.vectors, &weights, warm_m);
            let mut trunc = tl.discarded_weight;
            let kept = tl.block.kept();
            self.left[ll + 1] = Some(Rc::new(tl.block));
            if grow_right {
                let tr = sb.truncate(Side::Right, &eig.vectors, &weights, warm_m);
                trunc = trunc.max(tr.discarded_weight);
                self.right[lr + 1] = Some(Rc::new(tr.block));
            }
            self.record(0, ll, Direction::Grow, &eig, kept, trunc);
            ll += 1;
            if grow_right {
                lr += 1;
            }
        }

        let center = ll;
        let m = self.config.m;
        let mut psi = eig.vectors.clone();
        let mut energies = eig.values.clone();
        let mut sweep_energies: Vec<Vec<f64>> = Vec::new();
        let mut stop = StopReason::SweepLimit;
        let mut direction = Direction::Right;
        let mut sweep = 1;
        if l == 2 {
            sweep_energies.push(energies.clone());
            stop = StopReason::EnergyConverged;
        }
        while l > 2 && sweep <= self.config.n_sweeps_max {
            if direction == Direction::Right && lr == 0 {
                direction = Direction::Left;
            } else if direction == Direction::Left && ll == 0 {
                direction = Direction::Right;
            }
            let chain = self.chain;
            let (lb, rb) = (self.block(Side::Left, ll), self.block(Side::Right, lr));
            let sb = Superblock::new(chain, &lb, &rb, self.total);
            let (kept, trunc, starts, next_ll, next_lr);
            match direction {
                Direction::Right => {
                    let t = sb.truncate(Side::Left, &psi, &weights, m);
                    let next_rb = self.block(Side::Right, lr - 1);
                    let next = Superblock::new(chain, &t.block, &next_rb, self.total);
                    starts = psi.iter().map(|p| sb.predict_right_move(p, &t.block, &next)).collect::<Vec<_>>();
                    kept = t.block.kept();
                    trunc = t.discarded_weight;
                    self.left[ll + 1] = Some(Rc::new(t.block));
                    next_ll = ll + 1;
                    next_lr = lr - 1;
                }
                _ => {
                    let t = sb.truncate(Side::Right, &psi, &weights, m);
                    let next_lb = self.block(Side::Left, ll - 1);
                    let next = Superblock::new(chain, &next_lb, &t.block, self.total);
                    starts = psi.iter().map(|p| sb.predict_left_move(p, &t.block, &next)).collect::<Vec<_>>();
                    kept = t.block.kept();
                    trunc = t.discarded_weight;
                    self.right[lr + 1] = Some(Rc::new(t.block));
                    next_ll = ll - 1;
                    next_lr = lr + 1;
                }
            }
            ll = next_ll;
            lr = next_lr;
            let (lb, rb) = (self.block(Side::Left, ll), self.block(Side::Right, lr));
            let sb = Superblock::new(chain, &lb, &rb, self.total);
            let eig = self.solve(&sb, starts, self.step_tol())?;
            self.record(sweep, ll, direction, &eig, kept, trunc);
            psi = eig.vectors.clone();
            energies = eig.values.clone();

            let back_at_center = ll == center && direction == Direction::Right;
            if back_at_center && self.steps.iter().any(|s| s.sweep == sweep && s.direction == Direction::Left) {
                sweep_energies.push(energies.clone());
                if sweep_energies.len() >= 2 {
                    let prev = sweep_energies[sweep_energies.len() - 2][0];
                    if ((energies[0] - prev) / l as f64).abs() < self.config.energy_tol {
                        stop = StopReason::EnergyConverged;
                        break;
                    }
                }
                sweep += 1;
            }
        }

        let chain = self.chain;
        let (lb, rb) = (self.block(Side::Left, ll), self.block(Side::Right, lr));
        let sb = Superblock::new(chain, &lb, &rb, self.total);
        let last_sweep = self.steps.last().map_or(0, |s| s.sweep);
        let eig = self.solve(&sb, psi, self.config.superblock_solver_tol)?;
        self.record(last_sweep, ll, Direction::Right, &eig, 0, 0.0);
        let psi = eig.vectors.clone();
        let energies = eig.values.clone();
        let left_owned: Vec<Rc<Block>> = (0..=ll).map(|k| self.block(Side::Left, k)).collect();
        let right_owned: Vec<Rc<Block>> = (0..=lr).map(|k| self.block(Side::Right, k)).collect();
        let left_blocks: Vec<&Block> = left_owned.iter().map(|b| &**b).collect();
        let right_blocks: Vec<&Block> = right_owned.iter().map(|b| &**b).collect();
        let states = psi
            .iter()
            .map(|p| MpsState::from_superblock(&left_blocks, &right_blocks, &sb, p))
            .collect();
        Ok(GroundStateResult {
            length: l,
            total_charge: self.total,
            energies,
            converged: stop == StopReason::EnergyConverged,
            stop_reason: stop,
            steps: self.steps,
            sweep_energies,
            states,
        })
    }
}
