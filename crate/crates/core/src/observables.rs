//! Charge gap, neutral gap and the staggered density-density correlator.
//!
//! Energies enter the gaps per site, `e = E / L`, so a gap record's `value` is
//! the size-`L` gap divided by `L`. [`GapRecord::total`] gives the undivided
//! gap, which is the quantity that stays finite in a gapped phase.

use serde::{Deserialize, Serialize};

use crate::dmrg::{dmrg_run, DmrgConfig, GroundStateResult, MpsState};
use crate::error::{Error, Result};
use crate::format_sig;
use crate::model::{Charge, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GapKind {
    Charge,
    Neutral,
}

impl GapKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GapKind::Charge => "charge",
            GapKind::Neutral => "neutral",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRecord {
    pub length: usize,
    pub kind: GapKind,
    /// Gap built from per-site energies.
    pub value: f64,
    /// Per-site energies: `[e(L-1), e(L), e(L+1)]` for a charge gap,
    /// `[e0(L), e1(L)]` for a neutral gap.
    pub inputs: Vec<f64>,
    /// False when any contributing run stopped at the sweep limit.
    pub converged: bool,
    pub max_truncation_error: f64,
}

impl GapRecord {
    /// Charge gap from the total ground energies of the `L-1`, `L`, `L+1` sectors.
    pub fn charge(length: usize, totals: [f64; 3], converged: bool, max_truncation_error: f64) -> Self {
        let inputs: Vec<f64> = totals.iter().map(|e| e / length as f64).collect();
        let mut rec = Self {
            length,
            kind: GapKind::Charge,
            value: 0.0,
            inputs,
            converged,
            max_truncation_error,
        };
        rec.value = rec.recompute();
        rec
    }

    /// Neutral gap from the two lowest total energies of one sector.
    pub fn neutral(length: usize, totals: [f64; 2], converged: bool, max_truncation_error: f64) -> Self {
        let inputs: Vec<f64> = totals.iter().map(|e| e / length as f64).collect();
        let mut rec = Self {
            length,
            kind: GapKind::Neutral,
            value: 0.0,
            inputs,
            converged,
            max_truncation_error,
        };
        rec.value = rec.recompute();
        rec
    }

    /// The gap evaluated again from `inputs`; always equal to `value`.
    pub fn recompute(&self) -> f64 {
        match self.kind {
            GapKind::Charge => {
                let [lo, mid, hi] = [self.inputs[0], self.inputs[1], self.inputs[2]];
                (hi - mid) - (mid - lo)
            }
            GapKind::Neutral => self.inputs[1] - self.inputs[0],
        }
    }

    /// The gap of the whole chain, `L * value`.
    pub fn total(&self) -> f64 {
        self.value * self.length as f64
    }

    pub fn csv_header() -> &'static str {
        "L,kind,value,total,e_minus,e_zero,e_plus,e_excited,converged,max_truncation_error"
    }

    /// One row matching [`GapRecord::csv_header`]; absent inputs are empty.
    pub fn csv_row(&self) -> String {
        let (minus, zero, plus, excited) = match self.kind {
            GapKind::Charge => (
                format_sig(self.inputs[0]),
                format_sig(self.inputs[1]),
                format_sig(self.inputs[2]),
                String::new(),
            ),
            GapKind::Neutral => (
                String::new(),
                format_sig(self.inputs[0]),
                String::new(),
                format_sig(self.inputs[1]),
            ),
        };
        format!(
            "{},{},{},{},{},{},{},{},{},{:.6e}",
            self.length,
            self.kind.as_str(),
            format_sig(self.value),
            format_sig(self.total()),
            minus,
            zero,
            plus,
            excited,
            self.converged,
            self.max_truncation_error
        )
    }
}

fn check_gap_length(length: usize) -> Result<()> {
    if length < 4 {
        return Err(Error::InvalidParameter(format!(
            "gaps need at least 4 sites, got {length}"
        )));
    }
    Ok(())
}

/// Runs the `L-1`, `L` and `L+1` sectors at `params.length` and combines them.
pub fn charge_gap(params: &ModelParams, config: &DmrgConfig) -> Result<GapRecord> {
    let l = params.length;
    check_gap_length(l)?;
    let runs = [-1, 0, 1]
        .map(|dq: Charge| dmrg_run(params, l as Charge + dq, config));
    let [lo, mid, hi] = runs;
    let (lo, mid, hi) = (lo?, mid?, hi?);
    Ok(charge_gap_from_runs(&lo, &mid, &hi))
}

pub fn charge_gap_from_runs(
    lo: &GroundStateResult,
    mid: &GroundStateResult,
    hi: &GroundStateResult,
) -> GapRecord {
    let runs = [lo, mid, hi];
    GapRecord::charge(
        mid.length,
        [lo.energy(), mid.energy(), hi.energy()],
        runs.iter().all(|r| r.converged),
        runs.iter().map(|r| r.max_truncation_error()).fold(0.0, f64::max),
    )
}

/// Two-target run in the unit-filling sector.
pub fn neutral_gap(params: &ModelParams, config: &DmrgConfig) -> Result<GapRecord> {
    let l = params.length;
    check_gap_length(l)?;
    if config.target_count != 2 {
        return Err(Error::InvalidParameter(
            "the neutral gap needs target_count = 2".into(),
        ));
    }
    let run = dmrg_run(params, l as Charge, config)?;
    Ok(neutral_gap_from_run(&run))
}

pub fn neutral_gap_from_run(run: &GroundStateResult) -> GapRecord {
    GapRecord::neutral(
        run.length,
        [run.energies[0], run.energies[1]],
        run.converged,
        run.max_truncation_error(),
    )
}

/// Sites `(i, j)`, counted from 1, placed symmetrically about the chain
/// center with `j - i = r`. When `L - r` is odd the pair leans one site to
/// the right.
pub fn symmetric_pair(length: usize, r: usize) -> Result<(usize, usize)> {
    if r < 1 || r + 1 > length {
        return Err(Error::InvalidParameter(format!(
            "distance {r} out of range for {length} sites"
        )));
    }
    let i = if (length - r) % 2 == 0 {
        (length - r) / 2
    } else {
        (length - r + 1) / 2
    };
    Ok((i, i + r))
}

/// `(-1)^r ⟨(n_i - f)(n_j - f)⟩` at the symmetric pair for distance `r`.
pub fn dw_correlator(state: &MpsState, r: usize, filling: f64) -> Result<f64> {
    let (i, j) = symmetric_pair(state.len(), r)?;
    let n = state.number_op();
    let (i, j) = (i - 1, j - 1);
    let nn = state.two_point(&n, i, &n, j)?;
    let ni = state.local(&n, i)?;
    let nj = state.local(&n, j)?;
    let c = nn - filling * (ni + nj) + filling * filling;
    Ok(if r % 2 == 0 { c } else { -c })
}

/// Distance used for the midpoint correlator.
pub fn midpoint_distance(length: usize) -> usize {
    length / 2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DwPoint {
    pub r: usize,
    pub i: usize,
    pub j: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DwCurve {
    pub length: usize,
    pub filling: f64,
    pub points: Vec<DwPoint>,
    pub midpoint: Option<f64>,
}

impl DwCurve {
    /// Correlator at every distance `1..L`.
    pub fn measure(state: &MpsState, filling: f64) -> Result<Self> {
        let l = state.len();
        Self::measure_at(state, filling, &(1..l).collect::<Vec<_>>())
    }

    /// Correlator at the given distances; the midpoint is filled in when
    /// `L / 2` is among them.
    pub fn measure_at(state: &MpsState, filling: f64, distances: &[usize]) -> Result<Self> {
        let l = state.len();
        let mut points = Vec::with_capacity(distances.len());
        for &r in distances {
            let (i, j) = symmetric_pair(l, r)?;
            points.push(DwPoint {
                r,
                i,
                j,
                value: dw_correlator(state, r, filling)?,
            });
        }
        let mid = midpoint_distance(l);
        let midpoint = points.iter().find(|p| p.r == mid).map(|p| p.value);
        Ok(Self {
            length: l,
            filling,
            points,
            midpoint,
        })
    }

    pub fn csv_header() -> &'static str {
        "L,r,i,j,c_dw"
    }

    pub fn csv_rows(&self) -> Vec<String> {
        self.points
            .iter()
            .map(|p| format!("{},{},{},{},{}", self.length, p.r, p.i, p.j, format_sig(p.value)))
            .collect()
    }
}

/// Unit filling of a run: `N / L`.
pub fn filling(run: &GroundStateResult) -> f64 {
    run.total_charge as f64 / run.length as f64
}

/// `C_DW(L/2)` of a finished run at its own filling.
pub fn dw_midpoint(run: &GroundStateResult) -> Result<f64> {
    dw_correlator(run.state(), midpoint_distance(run.length), filling(run))
}
