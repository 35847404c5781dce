//! Plot-ready column files and gnuplot scripts built from task tables.
//!
//! Every `.dat` file holds one block per series, blocks separated by two
//! blank lines so that gnuplot addresses them with `index`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use crate::store::{read_csv, write_atomic};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Figure {
    /// Phase labels over (g2, t) with boundary points.
    PhaseDiagram,
    /// Whole-chain charge gap against 1/L with fit curves.
    GapScaling,
    /// C_DW(r) curves and the midpoint value against L.
    DwScaling,
    /// Neutral gap against g2 per size and kept-state count.
    NeutralGap,
    /// Midpoint correlator against g2 per detuning.
    Detuning,
}

impl Figure {
    pub fn as_str(self) -> &'static str {
        match self {
            Figure::PhaseDiagram => "phase-diagram",
            Figure::GapScaling => "gap-scaling",
            Figure::DwScaling => "dw-scaling",
            Figure::NeutralGap => "neutral-gap",
            Figure::Detuning => "detuning",
        }
    }

    /// Tables the figure is built from.
    pub fn inputs(self) -> &'static [&'static str] {
        match self {
            Figure::PhaseDiagram => &["phase_grid.csv", "boundary.csv"],
            Figure::GapScaling => &["charge_gaps.csv", "fit_report.json"],
            Figure::DwScaling => &["dw_midpoints.csv", "dw_curves.csv"],
            Figure::NeutralGap => &["neutral_gaps.csv"],
            Figure::Detuning => &["dw_midpoints.csv"],
        }
    }
}

type Row = BTreeMap<String, String>;

fn field<'a>(row: &'a Row, key: &str) -> Result<&'a str> {
    row.get(key)
        .map(String::as_str)
        .with_context(|| format!("missing column {key}"))
}

fn num(row: &Row, key: &str) -> Result<f64> {
    let v = field(row, key)?;
    v.parse().with_context(|| format!("column {key}: not a number: {v:?}"))
}

/// Series keyed by label, each a list of rows of numbers, in label order.
#[derive(Default)]
struct Blocks(BTreeMap<String, Vec<Vec<f64>>>);

impl Blocks {
    fn push(&mut self, label: String, values: Vec<f64>) {
        self.0.entry(label).or_default().push(values);
    }

    fn render(&self, columns: &str) -> String {
        let mut text = String::new();
        for (k, (label, rows)) in self.0.iter().enumerate() {
            if k > 0 {
                text.push_str("\n\n");
            }
            let _ = writeln!(text, "# {label}");
            let _ = writeln!(text, "# {columns}");
            let mut rows = rows.clone();
            rows.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
            for r in rows {
                let cells: Vec<String> = r.iter().map(|v| format!("{v:.10e}")).collect();
                let _ = writeln!(text, "{}", cells.join(" "));
            }
        }
        text
    }

    fn plot_clause(&self, file: &str, using: &str, style: &str) -> Vec<String> {
        self.0
            .keys()
            .enumerate()
            .map(|(k, label)| format!("'{file}' index {k} using {using} {style} title '{label}'"))
            .collect()
    }
}

struct Output {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Output {
    fn file(&mut self, name: &str, text: &str) -> Result<()> {
        let path = self.dir.join(name);
        write_atomic(&path, text.as_bytes())?;
        self.written.push(path);
        Ok(())
    }
}

fn script(title: &str, xlabel: &str, ylabel: &str, extra: &str, clauses: &[String]) -> String {
    format!(
        "set title '{title}'\nset xlabel '{xlabel}'\nset ylabel '{ylabel}'\nset key outside\n{extra}plot {}\n",
        clauses.join(", \\\n     ")
    )
}

fn load(dir: &Path, name: &str) -> Result<Vec<Row>> {
    read_csv(&dir.join(name))
}

/// Writes `plots/<figure>*.dat` and `plots/<figure>.gp` under `dir` and
/// returns the written paths.
pub fn emit_plot_data(dir: &Path, figure: Figure) -> Result<Vec<PathBuf>> {
    let missing: Vec<&str> = figure
        .inputs()
        .iter()
        .copied()
        .filter(|f| !dir.join(f).is_file())
        .collect();
    if !missing.is_empty() {
        bail!(
            "{} needs {} in {}; missing {}",
            figure.as_str(),
            figure.inputs().join(", "),
            dir.display(),
            missing.join(", ")
        );
    }
    let mut out = Output {
        dir: dir.join("plots"),
        written: Vec::new(),
    };
    let name = figure.as_str();
    match figure {
        Figure::PhaseDiagram => {
            let mut phases = Blocks::default();
            for r in load(dir, "phase_grid.csv")? {
                phases.push(field(&r, "phase")?.to_string(), vec![num(&r, "g2")?, num(&r, "t")?]);
            }
            let mut bounds = Blocks::default();
            for r in load(dir, "boundary.csv")? {
                bounds.push(
                    field(&r, "method")?.to_string(),
                    vec![num(&r, "g2_star")?, num(&r, "t")?, num(&r, "uncertainty")?],
                );
            }
            let pf = format!("{name}_points.dat");
            let bf = format!("{name}_boundary.dat");
            out.file(&pf, &phases.render("g2 t"))?;
            out.file(&bf, &bounds.render("g2_star t uncertainty"))?;
            let mut clauses = phases.plot_clause(&pf, "1:2", "with points");
            clauses.extend(bounds.plot_clause(&bf, "1:2:3", "with xerrorbars"));
            out.file(&format!("{name}.gp"), &script("phase diagram", "g2", "t", "", &clauses))?;
        }
        Figure::GapScaling => {
            let mut data = Blocks::default();
            for r in load(dir, "charge_gaps.csv")? {
                let label = format!("t={} g2={} delta={}", field(&r, "t")?, field(&r, "g2")?, field(&r, "delta")?);
                let l = num(&r, "L")?;
                data.push(label, vec![1.0 / l, num(&r, "total")?]);
            }
            let report: serde_json::Value = serde_json::from_str(
                &std::fs::read_to_string(dir.join("fit_report.json")).context("reading fit_report.json")?,
            )?;
            let mut fits = Blocks::default();
            for e in report["extrapolations"].as_array().into_iter().flatten() {
                let p = &e["point"];
                let coord = |k: &str| p[k].as_f64().map_or_else(|| p[k].to_string(), |v| v.to_string());
                let label = format!("t={} g2={} delta={}", coord("t"), coord("g2"), coord("delta"));
                let coefficients = |key: &str| -> Result<Vec<f64>> {
                    e["series"][key]["coefficients"]
                        .as_array()
                        .context("fit coefficients")?
                        .iter()
                        .map(|c| c.as_f64().context("fit coefficient"))
                        .collect()
                };
                let lin = coefficients("linear")?;
                let quad = coefficients("quadratic")?;
                let xmax = e["series"]["points"]
                    .as_array()
                    .into_iter()
                    .flatten()
                    .filter_map(|p| p[0].as_f64())
                    .fold(0.0, f64::max);
                for k in 0..=50 {
                    let x = xmax * k as f64 / 50.0;
                    fits.push(
                        label.clone(),
                        vec![x, lin[0] + lin[1] * x, quad[0] + quad[1] * x + quad[2] * x * x],
                    );
                }
            }
            let df = format!("{name}_data.dat");
            let ff = format!("{name}_fits.dat");
            out.file(&df, &data.render("inv_L total_gap"))?;
            out.file(&ff, &fits.render("inv_L linear quadratic"))?;
            let mut clauses = data.plot_clause(&df, "1:2", "with points");
            clauses.extend(fits.plot_clause(&ff, "1:2", "with lines dt 1"));
            clauses.extend(fits.plot_clause(&ff, "1:3", "with lines dt 2"));
            out.file(
                &format!("{name}.gp"),
                &script("charge gap scaling", "1/L", "L * gap", "set xrange [0:*]\n", &clauses),
            )?;
        }
        Figure::DwScaling => {
            let mut curves = Blocks::default();
            for r in load(dir, "dw_curves.csv")? {
                let label = format!("g2={} L={}", field(&r, "g2")?, field(&r, "L")?);
                curves.push(label, vec![num(&r, "r")?, num(&r, "c_dw")?]);
            }
            let mut mids = Blocks::default();
            for r in load(dir, "dw_midpoints.csv")? {
                let label = format!("t={} g2={}", field(&r, "t")?, field(&r, "g2")?);
                mids.push(label, vec![num(&r, "L")?, num(&r, "c_dw_mid")?]);
            }
            let cf = format!("{name}_curves.dat");
            let mf = format!("{name}_midpoints.dat");
            out.file(&cf, &curves.render("r c_dw"))?;
            out.file(&mf, &mids.render("L c_dw_mid"))?;
            out.file(
                &format!("{name}_curves.gp"),
                &script("C_DW(r)", "r", "C_DW", "", &curves.plot_clause(&cf, "1:2", "with linespoints")),
            )?;
            out.file(
                &format!("{name}.gp"),
                &script(
                    "C_DW(L/2)",
                    "L",
                    "C_DW(L/2)",
                    "set logscale y\n",
                    &mids.plot_clause(&mf, "1:2", "with linespoints"),
                ),
            )?;
        }
        Figure::NeutralGap => {
            let mut data = Blocks::default();
            for r in load(dir, "neutral_gaps.csv")? {
                let label = format!("t={} L={} m={}", field(&r, "t")?, field(&r, "L")?, field(&r, "m")?);
                data.push(label, vec![num(&r, "g2")?, num(&r, "value")?, num(&r, "total")?]);
            }
            let df = format!("{name}.dat");
            out.file(&df, &data.render("g2 per_site total"))?;
            out.file(
                &format!("{name}.gp"),
                &script("neutral gap", "g2", "L * gap", "", &data.plot_clause(&df, "1:3", "with linespoints")),
            )?;
        }
        Figure::Detuning => {
            let mut data = Blocks::default();
            for r in load(dir, "dw_midpoints.csv")? {
                let label = format!("delta={} L={}", field(&r, "delta")?, field(&r, "L")?);
                data.push(label, vec![num(&r, "g2")?, num(&r, "c_dw_mid")?]);
            }
            let df = format!("{name}.dat");
            out.file(&df, &data.render("g2 c_dw_mid"))?;
            out.file(
                &format!("{name}.gp"),
                &script("detuning", "g2", "C_DW(L/2)", "", &data.plot_clause(&df, "1:2", "with linespoints")),
            )?;
        }
    }
    Ok(out.written)
}
