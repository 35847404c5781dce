//! Task drivers: expand a configuration into jobs, run them, post-process
//! and write tables.
//!
//! Charge-gap extrapolations use the gap of the whole chain, `L * value`,
//! which stays finite in a gapped phase; the per-site value of every record
//! is written alongside it.

use std::collections::BTreeMap;

use anyhow::{bail, Result};
use cavity_array::format_sig;
use cavity_array::observables::{DwCurve, GapRecord};
use cavity_array::scaling::{
    classify_dw, dw_boundary_scan, extrapolate_gap, locate_critical_g2, BoundaryPoint, DwClass,
    DwClassification, GapPoint, Grid, ScalingSeries,
};
use serde::Serialize;

use crate::config::{RunConfig, Task};
use crate::jobs::{JobOutput, JobSpec, Measure, Runner};
use crate::store::ResultStore;

/// Couplings that identify one point of a cut.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Point {
    pub t: f64,
    pub g2: f64,
    pub delta: f64,
}

impl Point {
    fn csv(&self) -> String {
        format!("{},{},{}", self.t, self.g2, self.delta)
    }
}

const POINT_HEADER: &str = "t,g2,delta";

/// Failed jobs, as `(label, message)`.
#[derive(Debug, Default, Clone)]
pub struct Failures(pub Vec<(String, String)>);

impl Failures {
    fn check<'a>(&mut self, spec: &JobSpec, r: &'a std::result::Result<JobOutput, String>) -> Option<&'a JobOutput> {
        match r {
            Ok(o) => Some(o),
            Err(e) => {
                self.0.push((spec.label(), e.clone()));
                None
            }
        }
    }

    fn note(&mut self, what: String, why: String) {
        self.0.push((what, why));
    }

    fn rows(&self) -> Vec<String> {
        self.0
            .iter()
            .map(|(k, e)| format!("\"{}\",\"{}\"", k.replace('"', "'"), e.replace('"', "'")))
            .collect()
    }
}

fn points(cfg: &RunConfig) -> Result<Vec<Point>> {
    let g2s = cfg.g2_values()?;
    let mut out = Vec::new();
    for &t in &cfg.t {
        for &delta in &cfg.delta {
            for &g2 in &g2s {
                out.push(Point { t, g2, delta });
            }
        }
    }
    Ok(out)
}

fn spec(cfg: &RunConfig, p: Point, length: usize, n_pol: i32, m: usize, targets: usize, measure: Measure) -> JobSpec {
    let mut dmrg = cfg.dmrg_config();
    dmrg.m = m;
    if targets == 2 && dmrg.target_count != 2 {
        dmrg = dmrg.two_targets();
    }
    JobSpec {
        params: cfg.params(length, p.g2, p.t, p.delta),
        n_pol,
        dmrg,
        measure,
    }
}

fn sorted_sizes(cfg: &RunConfig) -> Vec<usize> {
    let mut s = cfg.sizes.clone();
    s.sort_unstable();
    s.dedup();
    s
}

/// Charge gaps on a set of sizes, with optional midpoint correlators taken
/// from the unit-filling runs.
#[derive(Debug, Clone, Serialize)]
pub struct GapSeries {
    pub point: Point,
    pub records: Vec<GapRecord>,
    /// `(L, C_DW(L/2))` from the unit-filling runs, when measured.
    pub midpoints: Vec<(usize, f64)>,
    pub scaling: Option<ScalingSeries>,
}

impl GapSeries {
    /// Extrapolated whole-chain gap and its standard error.
    pub fn extrapolated(&self) -> Option<(f64, f64)> {
        self.scaling.as_ref().map(|s| s.extrapolated())
    }

    /// Significantly positive extrapolated gap.
    pub fn is_gapped(&self) -> bool {
        self.extrapolated().is_some_and(|(a, s)| a > 0.0 && a > 2.0 * s)
    }
}

fn charge_gap_series(
    cfg: &RunConfig,
    runner: &Runner,
    pts: &[Point],
    midpoints: bool,
    failures: &mut Failures,
) -> Result<(Vec<GapSeries>, usize)> {
    let sizes = sorted_sizes(cfg);
    let m = cfg.dmrg.m;
    let mut specs = Vec::new();
    for &p in pts {
        for &l in &sizes {
            for dq in [-1, 0, 1] {
                let measure = Measure {
                    midpoint: midpoints && dq == 0,
                    ..Measure::default()
                };
                specs.push(spec(cfg, p, l, l as i32 + dq, m, 1, measure));
            }
        }
    }
    let results = runner.run(&specs)?;
    let mut out = Vec::new();
    let mut k = 0;
    for &p in pts {
        let mut records = Vec::new();
        let mut mids = Vec::new();
        for &l in &sizes {
            let trio: Vec<Option<&JobOutput>> = (0..3).map(|j| failures.check(&specs[k + j], &results[k + j])).collect();
            k += 3;
            if let [Some(lo), Some(mid), Some(hi)] = trio[..] {
                records.push(GapRecord::charge(
                    l,
                    [lo.energies[0], mid.energies[0], hi.energies[0]],
                    lo.converged && mid.converged && hi.converged,
                    lo.max_truncation_error
                        .max(mid.max_truncation_error)
                        .max(hi.max_truncation_error),
                ));
                if let Some(c) = mid.midpoint {
                    mids.push((l, c));
                }
            }
        }
        let series: Vec<(usize, f64)> = records.iter().map(|r| (r.length, r.total())).collect();
        let scaling = match extrapolate_gap(&series) {
            Ok(s) => Some(s),
            Err(e) => {
                failures.note(format!("extrapolation {}", p.csv()), e.to_string());
                None
            }
        };
        out.push(GapSeries {
            point: p,
            records,
            midpoints: mids,
            scaling,
        });
    }
    Ok((out, specs.len()))
}

/// Critical coupling per `(t, delta)` from the gapped points of a cut.
fn mi_boundaries(series: &[GapSeries], failures: &mut Failures) -> Vec<BoundaryPoint> {
    let mut groups: BTreeMap<(u64, u64), Vec<GapPoint>> = BTreeMap::new();
    let mut order = Vec::new();
    for s in series {
        let key = (s.point.t.to_bits(), s.point.delta.to_bits());
        if !groups.contains_key(&key) {
            order.push((key, s.point.t, s.point.delta));
        }
        let entry = groups.entry(key).or_default();
        if s.is_gapped() {
            let (gap, sigma) = s.extrapolated().expect("gapped implies a fit");
            entry.push(GapPoint { g2: s.point.g2, gap, sigma });
        }
    }
    let mut out = Vec::new();
    for (key, t, delta) in order {
        match locate_critical_g2(t, &groups[&key]) {
            Ok(b) => out.push(b),
            Err(e) => failures.note(format!("critical g2 at t={t} delta={delta}"), e.to_string()),
        }
    }
    out
}

fn gap_rows(series: &[GapSeries]) -> Vec<String> {
    series
        .iter()
        .flat_map(|s| s.records.iter().map(move |r| format!("{},{}", s.point.csv(), r.csv_row())))
        .collect()
}

const EXTRAPOLATION_HEADER: &str =
    "t,g2,delta,sizes,linear_intercept,linear_sigma,quadratic_intercept,quadratic_sigma,intercept_difference,gapped";

fn extrapolation_rows(series: &[GapSeries]) -> Vec<String> {
    series
        .iter()
        .filter_map(|s| {
            let f = s.scaling.as_ref()?;
            Some(format!(
                "{},{},{},{},{},{},{},{}",
                s.point.csv(),
                f.points.len(),
                format_sig(f.linear.intercept()),
                format_sig(f.linear.std_error(0)),
                format_sig(f.quadratic.intercept()),
                format_sig(f.quadratic.std_error(0)),
                format_sig(f.intercept_difference),
                s.is_gapped()
            ))
        })
        .collect()
}

#[derive(Serialize)]
struct FitReport<'a> {
    extrapolations: Vec<FitEntry<'a>>,
    boundaries: &'a [BoundaryPoint],
}

#[derive(Serialize)]
struct FitEntry<'a> {
    point: Point,
    gap: &'static str,
    series: &'a ScalingSeries,
}

fn fit_report(series: &[GapSeries], boundaries: &[BoundaryPoint]) -> Result<String> {
    let report = FitReport {
        extrapolations: series
            .iter()
            .filter_map(|s| {
                Some(FitEntry {
                    point: s.point,
                    gap: "total",
                    series: s.scaling.as_ref()?,
                })
            })
            .collect(),
        boundaries,
    };
    Ok(serde_json::to_string_pretty(&report)?)
}

fn boundary_rows(b: &[BoundaryPoint]) -> Vec<String> {
    b.iter().map(|b| b.csv_row()).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct ChargeGapCut {
    pub series: Vec<GapSeries>,
    pub boundaries: Vec<BoundaryPoint>,
}

pub fn charge_gap_cut(cfg: &RunConfig, runner: &Runner, failures: &mut Failures) -> Result<(ChargeGapCut, usize)> {
    let pts = points(cfg)?;
    let (series, jobs) = charge_gap_series(cfg, runner, &pts, false, failures)?;
    let boundaries = mi_boundaries(&series, failures);
    Ok((ChargeGapCut { series, boundaries }, jobs))
}

impl ChargeGapCut {
    pub fn write(&self, store: &mut ResultStore) -> Result<()> {
        store.write_csv(
            "charge_gaps.csv",
            &format!("{POINT_HEADER},{}", GapRecord::csv_header()),
            &gap_rows(&self.series),
        )?;
        store.write_csv("extrapolations.csv", EXTRAPOLATION_HEADER, &extrapolation_rows(&self.series))?;
        store.write_csv("boundary.csv", BoundaryPoint::csv_header(), &boundary_rows(&self.boundaries))?;
        store.write("fit_report.json", fit_report(&self.series, &self.boundaries)?.as_bytes())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NeutralEntry {
    pub point: Point,
    pub m: usize,
    pub record: GapRecord,
}

pub fn neutral_gap_cut(cfg: &RunConfig, runner: &Runner, failures: &mut Failures) -> Result<(Vec<NeutralEntry>, usize)> {
    let pts = points(cfg)?;
    let sizes = sorted_sizes(cfg);
    let mut keys = Vec::new();
    let mut specs = Vec::new();
    for &p in &pts {
        for &m in &cfg.m_values() {
            for &l in &sizes {
                keys.push((p, m));
                specs.push(spec(cfg, p, l, l as i32, m, 2, Measure::default()));
            }
        }
    }
    let results = runner.run(&specs)?;
    let mut out = Vec::new();
    for ((spec, r), (p, m)) in specs.iter().zip(&results).zip(keys) {
        if let Some(o) = failures.check(spec, r) {
            out.push(NeutralEntry {
                point: p,
                m,
                record: GapRecord::neutral(spec.params.length, [o.energies[0], o.energies[1]], o.converged, o.max_truncation_error),
            });
        }
    }
    Ok((out, specs.len()))
}

fn write_neutral(entries: &[NeutralEntry], store: &mut ResultStore) -> Result<()> {
    let rows: Vec<String> = entries
        .iter()
        .map(|e| format!("{},{},{}", e.point.csv(), e.m, e.record.csv_row()))
        .collect();
    store.write_csv(
        "neutral_gaps.csv",
        &format!("{POINT_HEADER},m,{}", GapRecord::csv_header()),
        &rows,
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct DwEntry {
    pub point: Point,
    pub length: usize,
    pub midpoint: f64,
    pub curve: Option<DwCurve>,
    pub density: Option<Vec<f64>>,
    pub converged: bool,
}

fn dw_runs(cfg: &RunConfig, runner: &Runner, full: bool, failures: &mut Failures) -> Result<(Vec<DwEntry>, usize)> {
    let pts = points(cfg)?;
    let sizes = sorted_sizes(cfg);
    let measure = Measure {
        midpoint: true,
        curve: full,
        density: full,
        ..Measure::default()
    };
    let mut keys = Vec::new();
    let mut specs = Vec::new();
    for &p in &pts {
        for &l in &sizes {
            let n = cfg.n_pol.unwrap_or(l as i32);
            keys.push(p);
            specs.push(spec(cfg, p, l, n, cfg.dmrg.m, 1, measure));
        }
    }
    let results = runner.run(&specs)?;
    let mut out = Vec::new();
    for ((spec, r), p) in specs.iter().zip(&results).zip(keys) {
        if let Some(o) = failures.check(spec, r) {
            out.push(DwEntry {
                point: p,
                length: spec.params.length,
                midpoint: o.midpoint.expect("midpoint requested"),
                curve: o.curve.clone(),
                density: o.density.clone(),
                converged: o.converged,
            });
        }
    }
    Ok((out, specs.len()))
}

const MIDPOINT_HEADER: &str = "t,g2,delta,L,c_dw_mid,converged";

fn midpoint_rows(entries: &[DwEntry]) -> Vec<String> {
    entries
        .iter()
        .map(|e| format!("{},{},{},{}", e.point.csv(), e.length, format_sig(e.midpoint), e.converged))
        .collect()
}

pub fn dw_curve(cfg: &RunConfig, runner: &Runner, failures: &mut Failures) -> Result<(Vec<DwEntry>, usize)> {
    dw_runs(cfg, runner, true, failures)
}

fn write_dw_curves(entries: &[DwEntry], store: &mut ResultStore) -> Result<()> {
    let mut curve_rows = Vec::new();
    let mut density_rows = Vec::new();
    for e in entries {
        if let Some(c) = &e.curve {
            curve_rows.extend(c.csv_rows().into_iter().map(|r| format!("{},{}", e.point.csv(), r)));
        }
        if let Some(d) = &e.density {
            density_rows.extend(
                d.iter()
                    .enumerate()
                    .map(|(i, n)| format!("{},{},{},{}", e.point.csv(), e.length, i + 1, format_sig(*n))),
            );
        }
    }
    store.write_csv("dw_curves.csv", &format!("{POINT_HEADER},{}", DwCurve::csv_header()), &curve_rows)?;
    store.write_csv("densities.csv", &format!("{POINT_HEADER},L,site,n"), &density_rows)?;
    store.write_csv("dw_midpoints.csv", MIDPOINT_HEADER, &midpoint_rows(entries))
}

#[derive(Debug, Clone, Serialize)]
pub struct DwClassEntry {
    pub point: Point,
    pub classification: DwClassification,
}

const CLASS_HEADER: &str = "t,g2,delta,class,amplitude,rate,asymptote,rss_exponential,rss_offset";

fn class_rows(entries: &[DwClassEntry]) -> Vec<String> {
    entries
        .iter()
        .map(|e| {
            let c = &e.classification;
            let (class, amp, rate) = match c.class {
                DwClass::Vanishing { amplitude, rate } => ("vanishing", format_sig(amplitude), format_sig(rate)),
                DwClass::Finite { .. } => ("finite", String::new(), String::new()),
            };
            format!(
                "{},{},{},{},{},{},{}",
                e.point.csv(),
                class,
                amp,
                rate,
                format_sig(c.offset.coefficients[0]),
                format_sig(c.exponential.rss),
                format_sig(c.offset.rss)
            )
        })
        .collect()
}

fn classify_points(pts: &[Point], midpoints: impl Fn(Point) -> Vec<(usize, f64)>, failures: &mut Failures) -> Vec<DwClassEntry> {
    let mut out = Vec::new();
    for &p in pts {
        match classify_dw(&midpoints(p)) {
            Ok(c) => out.push(DwClassEntry {
                point: p,
                classification: c,
            }),
            Err(e) => failures.note(format!("classification {}", p.csv()), e.to_string()),
        }
    }
    out
}

/// First finite point of each `(t, delta)` line of the grid.
fn dw_boundaries(cfg: &RunConfig, classes: &[DwClassEntry], failures: &mut Failures) -> Result<Vec<BoundaryPoint>> {
    let g2s = cfg.g2_values()?;
    let step = match cfg.g2_grid {
        Some(g) => g.step,
        None if g2s.len() > 1 => (g2s[1] - g2s[0]).abs(),
        None => bail!("a boundary scan needs at least two couplings"),
    };
    let grid = Grid {
        start: g2s[0],
        stop: *g2s.last().expect("nonempty"),
        step,
    };
    let mut out = Vec::new();
    for &t in &cfg.t {
        for &delta in &cfg.delta {
            let lookup = |g2: f64| -> cavity_array::Result<bool> {
                classes
                    .iter()
                    .find(|c| c.point.t == t && c.point.delta == delta && (c.point.g2 - g2).abs() < 1e-9)
                    .map(|c| c.classification.class.is_finite())
                    .ok_or_else(|| cavity_array::Error::Fit(format!("no classification at g2={g2}")))
            };
            match dw_boundary_scan(t, &grid, lookup) {
                Ok(r) => match r.boundary {
                    Some(b) => out.push(b),
                    None => failures.note(
                        format!("dw boundary t={t} delta={delta}"),
                        "open: no finite order parameter on the grid".into(),
                    ),
                },
                Err(e) => failures.note(format!("dw boundary t={t} delta={delta}"), e.to_string()),
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct DwScan {
    pub entries: Vec<DwEntry>,
    pub classes: Vec<DwClassEntry>,
    pub boundaries: Vec<BoundaryPoint>,
}

pub fn dw_scan(cfg: &RunConfig, runner: &Runner, failures: &mut Failures) -> Result<(DwScan, usize)> {
    let (entries, jobs) = dw_runs(cfg, runner, false, failures)?;
    let pts = points(cfg)?;
    let classes = classify_points(
        &pts,
        |p| entries.iter().filter(|e| e.point == p).map(|e| (e.length, e.midpoint)).collect(),
        failures,
    );
    // an open boundary is a result of the scan, not a failed job
    let mut notes = Failures::default();
    let boundaries = dw_boundaries(cfg, &classes, &mut notes)?;
    for (k, v) in notes.0 {
        log::info!("{k}: {v}");
    }
    Ok((
        DwScan {
            entries,
            classes,
            boundaries,
        },
        jobs,
    ))
}

impl DwScan {
    pub fn write(&self, store: &mut ResultStore) -> Result<()> {
        store.write_csv("dw_midpoints.csv", MIDPOINT_HEADER, &midpoint_rows(&self.entries))?;
        store.write_csv("dw_classes.csv", CLASS_HEADER, &class_rows(&self.classes))?;
        store.write_csv("boundary.csv", BoundaryPoint::csv_header(), &boundary_rows(&self.boundaries))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Phase {
    MI,
    SF,
    DW,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseGrid {
    pub series: Vec<GapSeries>,
    pub classes: Vec<DwClassEntry>,
    pub labels: Vec<(Point, Phase)>,
    pub boundaries: Vec<BoundaryPoint>,
}

/// DW when the order parameter is finite, else MI when the extrapolated
/// charge gap is significantly positive, else SF.
pub fn phase_grid(cfg: &RunConfig, runner: &Runner, failures: &mut Failures) -> Result<(PhaseGrid, usize)> {
    let pts = points(cfg)?;
    let (series, jobs) = charge_gap_series(cfg, runner, &pts, true, failures)?;
    let classes = classify_points(
        &pts,
        |p| series.iter().find(|s| s.point == p).map(|s| s.midpoints.clone()).unwrap_or_default(),
        failures,
    );
    let mut labels = Vec::new();
    for s in &series {
        let dw = classes
            .iter()
            .find(|c| c.point == s.point)
            .is_some_and(|c| c.classification.class.is_finite());
        let phase = if dw {
            Phase::DW
        } else if s.is_gapped() {
            Phase::MI
        } else {
            Phase::SF
        };
        labels.push((s.point, phase));
    }
    let mi_side: Vec<GapSeries> = series
        .iter()
        .zip(&labels)
        .filter(|(_, l)| l.1 != Phase::DW)
        .map(|(s, _)| s.clone())
        .collect();
    let mut notes = Failures::default();
    let mut boundaries = mi_boundaries(&mi_side, &mut notes);
    boundaries.extend(dw_boundaries(cfg, &classes, &mut notes)?);
    for (k, v) in notes.0 {
        log::info!("{k}: {v}");
    }
    Ok((
        PhaseGrid {
            series,
            classes,
            labels,
            boundaries,
        },
        jobs,
    ))
}

impl PhaseGrid {
    pub fn write(&self, store: &mut ResultStore) -> Result<()> {
        let rows: Vec<String> = self
            .labels
            .iter()
            .zip(&self.series)
            .map(|((p, phase), s)| {
                let (gap, sigma) = s
                    .extrapolated()
                    .map_or((String::new(), String::new()), |(a, e)| (format_sig(a), format_sig(e)));
                let asym = self
                    .classes
                    .iter()
                    .find(|c| c.point == *p)
                    .map_or(String::new(), |c| format_sig(c.classification.offset.coefficients[0]));
                format!("{},{:?},{},{},{}", p.csv(), phase, gap, sigma, asym)
            })
            .collect();
        store.write_csv("phase_grid.csv", "t,g2,delta,phase,gap,gap_sigma,dw_asymptote", &rows)?;
        store.write_csv(
            "charge_gaps.csv",
            &format!("{POINT_HEADER},{}", GapRecord::csv_header()),
            &gap_rows(&self.series),
        )?;
        store.write_csv("extrapolations.csv", EXTRAPOLATION_HEADER, &extrapolation_rows(&self.series))?;
        let mids: Vec<String> = self
            .series
            .iter()
            .flat_map(|s| {
                s.midpoints
                    .iter()
                    .map(move |(l, c)| format!("{},{},{},true", s.point.csv(), l, format_sig(*c)))
            })
            .collect();
        store.write_csv("dw_midpoints.csv", MIDPOINT_HEADER, &mids)?;
        store.write_csv("dw_classes.csv", CLASS_HEADER, &class_rows(&self.classes))?;
        store.write_csv("boundary.csv", BoundaryPoint::csv_header(), &boundary_rows(&self.boundaries))?;
        store.write("fit_report.json", fit_report(&self.series, &self.boundaries)?.as_bytes())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PointEntry {
    pub point: Point,
    pub length: usize,
    pub n_pol: i32,
    pub m: usize,
    pub output: JobOutput,
}

pub fn point(cfg: &RunConfig, runner: &Runner, failures: &mut Failures) -> Result<(Vec<PointEntry>, usize)> {
    let pts = points(cfg)?;
    let sizes = sorted_sizes(cfg);
    let measure = Measure {
        midpoint: true,
        run_log: true,
        ..Measure::default()
    };
    let mut specs = Vec::new();
    for &p in &pts {
        for &m in &cfg.m_values() {
            for &l in &sizes {
                specs.push((p, spec(cfg, p, l, cfg.n_pol.unwrap_or(l as i32), m, cfg.targets, measure)));
            }
        }
    }
    let only: Vec<JobSpec> = specs.iter().map(|s| s.1.clone()).collect();
    let results = runner.run(&only)?;
    let mut out = Vec::new();
    for ((p, spec), r) in specs.iter().zip(&results) {
        if let Some(o) = failures.check(spec, r) {
            out.push(PointEntry {
                point: *p,
                length: spec.params.length,
                n_pol: spec.n_pol,
                m: spec.dmrg.m,
                output: o.clone(),
            });
        }
    }
    Ok((out, only.len()))
}

fn write_points(entries: &[PointEntry], store: &mut ResultStore) -> Result<()> {
    let mut rows = Vec::new();
    for e in entries {
        for (k, en) in e.output.energies.iter().enumerate() {
            rows.push(format!(
                "{},{},{},{},{},{},{},{},{},{:.6e},{}",
                e.point.csv(),
                e.length,
                e.n_pol,
                e.m,
                k,
                format_sig(*en),
                format_sig(en / e.length as f64),
                e.output.converged,
                e.output.sweeps,
                e.output.max_truncation_error,
                e.output.midpoint.map_or(String::new(), format_sig),
            ));
        }
        if let Some(log) = &e.output.run_log {
            let name = format!(
                "logs/run_t{}_g2{}_d{}_L{}_N{}_m{}.csv",
                e.point.t, e.point.g2, e.point.delta, e.length, e.n_pol, e.m
            );
            store.write(&name, log.as_bytes())?;
        }
    }
    store.write_csv(
        "points.csv",
        "t,g2,delta,L,N,m,target,energy,energy_per_site,converged,sweeps,max_truncation_error,c_dw_mid",
        &rows,
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct EdRow {
    pub point: Point,
    pub length: usize,
    pub n_pol: i32,
    pub target: usize,
    pub ed: f64,
    pub dmrg: f64,
}

pub fn ed_check(cfg: &RunConfig, runner: &Runner, failures: &mut Failures) -> Result<(Vec<EdRow>, usize)> {
    let pts = points(cfg)?;
    let sizes = sorted_sizes(cfg);
    let measure = Measure {
        ed: true,
        ..Measure::default()
    };
    let mut specs = Vec::new();
    for &p in &pts {
        for &l in &sizes {
            let sectors: Vec<i32> = match cfg.n_pol {
                Some(n) => vec![n],
                None => vec![l as i32 - 1, l as i32, l as i32 + 1],
            };
            for n in sectors {
                specs.push((p, spec(cfg, p, l, n, cfg.dmrg.m, cfg.targets, measure)));
            }
        }
    }
    let only: Vec<JobSpec> = specs.iter().map(|s| s.1.clone()).collect();
    let results = runner.run(&only)?;
    let mut out = Vec::new();
    for ((p, spec), r) in specs.iter().zip(&results) {
        if let Some(o) = failures.check(spec, r) {
            let ed = o.ed_energies.as_ref().expect("ed requested");
            for (k, (&e, &d)) in ed.iter().zip(&o.energies).enumerate() {
                out.push(EdRow {
                    point: *p,
                    length: spec.params.length,
                    n_pol: spec.n_pol,
                    target: k,
                    ed: e,
                    dmrg: d,
                });
            }
        }
    }
    Ok((out, only.len()))
}

fn write_ed(rows: &[EdRow], store: &mut ResultStore) -> Result<()> {
    let max = rows.iter().map(|r| (r.ed - r.dmrg).abs()).fold(0.0, f64::max);
    let lines: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{},{:.6e},{:.6e}",
                r.point.csv(),
                r.length,
                r.n_pol,
                r.target,
                format_sig(r.ed),
                format_sig(r.dmrg),
                (r.ed - r.dmrg).abs(),
                max
            )
        })
        .collect();
    store.write_csv(
        "ed_check.csv",
        "t,g2,delta,L,N,target,e_ed,e_dmrg,abs_diff,max_abs_diff",
        &lines,
    )
}

/// Outcome of one task invocation.
pub struct Summary {
    pub jobs: usize,
    pub failures: Failures,
}

/// Runs the configured task and writes its tables and manifest.
pub fn run_task(cfg: &RunConfig, fresh: bool) -> Result<Summary> {
    let task = cfg.validate()?;
    let mut store = ResultStore::create(&cfg.out)?;
    let runner = Runner {
        workers: cfg.workers,
        cache: (!fresh).then(|| cfg.out.join("jobs")),
    };
    let mut failures = Failures::default();
    let jobs = match task {
        Task::Point => {
            let (e, n) = point(cfg, &runner, &mut failures)?;
            write_points(&e, &mut store)?;
            n
        }
        Task::EdCheck => {
            let (e, n) = ed_check(cfg, &runner, &mut failures)?;
            write_ed(&e, &mut store)?;
            n
        }
        Task::ChargeGapCut => {
            let (c, n) = charge_gap_cut(cfg, &runner, &mut failures)?;
            c.write(&mut store)?;
            n
        }
        Task::NeutralGapCut => {
            let (e, n) = neutral_gap_cut(cfg, &runner, &mut failures)?;
            write_neutral(&e, &mut store)?;
            n
        }
        Task::DwCurve => {
            let (e, n) = dw_curve(cfg, &runner, &mut failures)?;
            write_dw_curves(&e, &mut store)?;
            n
        }
        Task::DwScan => {
            let (s, n) = dw_scan(cfg, &runner, &mut failures)?;
            s.write(&mut store)?;
            n
        }
        Task::PhaseGrid => {
            let (g, n) = phase_grid(cfg, &runner, &mut failures)?;
            g.write(&mut store)?;
            n
        }
    };
    store.write_csv("failures.csv", "job,error", &failures.rows())?;
    store.finish(cfg, task.as_str(), jobs, failures.0.len())?;
    Ok(Summary { jobs, failures })
}
