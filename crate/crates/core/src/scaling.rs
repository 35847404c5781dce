//! Finite-size extrapolation and phase-boundary location.
//!
//! All fits are unweighted least squares. Polynomial fits are solved through
//! an SVD of the design matrix; exponential fits are separable, so the linear
//! amplitudes are eliminated and only the rate is searched.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format_sig;

/// Design matrices with a singular-value ratio below this are rejected.
const RANK_TOL: f64 = 1e-12;

/// Smallest asymptote accepted as a nonzero order parameter.
pub const DW_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitKind {
    /// `c0 + c1 x`
    Linear,
    /// `c0 + c1 x + c2 x^2`
    Quadratic,
    /// `c0 exp(-c1 x)`
    Exponential,
    /// `c0 + c1 exp(-c2 x)`
    OffsetExponential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub kind: FitKind,
    pub coefficients: Vec<f64>,
    /// Coefficient covariance, row major. For exponential fits it covers the
    /// amplitudes only, at the fitted rate.
    pub covariance: Vec<Vec<f64>>,
    /// Sum of squared residuals.
    pub rss: f64,
}

impl Fit {
    pub fn eval(&self, x: f64) -> f64 {
        let c = &self.coefficients;
        match self.kind {
            FitKind::Linear => c[0] + c[1] * x,
            FitKind::Quadratic => c[0] + c[1] * x + c[2] * x * x,
            FitKind::Exponential => c[0] * (-c[1] * x).exp(),
            FitKind::OffsetExponential => c[0] + c[1] * (-c[2] * x).exp(),
        }
    }

    pub fn intercept(&self) -> f64 {
        self.coefficients[0]
    }

    pub fn std_error(&self, k: usize) -> f64 {
        self.covariance[k][k].max(0.0).sqrt()
    }

    /// Residual sum for arbitrary coefficients of the same model.
    pub fn rss_with(&self, coefficients: &[f64], points: &[(f64, f64)]) -> f64 {
        let probe = Fit {
            coefficients: coefficients.to_vec(),
            ..self.clone()
        };
        points.iter().map(|&(x, y)| (y - probe.eval(x)).powi(2)).sum()
    }
}

fn rows_to_vec(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

struct Ols {
    coefficients: DVector<f64>,
    covariance: DMatrix<f64>,
    rss: f64,
}

/// Least squares for `design * c ≈ y`. The covariance is the residual
/// estimate `s^2 (X^T X)^-1` plus, when given, the propagation of
/// independent input errors `sigma`.
fn ols(design: DMatrix<f64>, y: &DVector<f64>, sigma: Option<&[f64]>) -> Result<Ols> {
    let (n, p) = design.shape();
    if n < p {
        return Err(Error::Fit(format!("{n} points cannot fix {p} coefficients")));
    }
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin / smax < RANK_TOL {
        return Err(Error::Fit("degenerate design matrix".into()));
    }
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let inv_s = DMatrix::from_diagonal(&svd.singular_values.map(|s| 1.0 / s));
    // pseudo-inverse P with c = P y
    let pinv = v_t.transpose() * &inv_s * u.transpose();
    let coefficients = &pinv * y;
    let residual = y - &design * &coefficients;
    let rss = residual.norm_squared();
    let gram_inv = v_t.transpose() * &inv_s * &inv_s * v_t;
    let mut covariance = if n > p {
        gram_inv * (rss / (n - p) as f64)
    } else {
        DMatrix::zeros(p, p)
    };
    if let Some(sigma) = sigma {
        let d = DMatrix::from_diagonal(&DVector::from_iterator(n, sigma.iter().map(|s| s * s)));
        covariance += &pinv * d * pinv.transpose();
    }
    Ok(Ols {
        coefficients,
        covariance,
        rss,
    })
}

/// Polynomial least squares of the given degree (1 or 2).
pub fn fit_polynomial(points: &[(f64, f64)], degree: usize, sigma: Option<&[f64]>) -> Result<Fit> {
    let kind = match degree {
        1 => FitKind::Linear,
        2 => FitKind::Quadratic,
        _ => return Err(Error::Fit(format!("unsupported degree {degree}"))),
    };
    if let Some(s) = sigma {
        if s.len() != points.len() {
            return Err(Error::Fit("one input error per point is required".into()));
        }
    }
    let design = DMatrix::from_fn(points.len(), degree + 1, |r, c| points[r].0.powi(c as i32));
    let y = DVector::from_iterator(points.len(), points.iter().map(|p| p.1));
    let sol = ols(design, &y, sigma)?;
    Ok(Fit {
        kind,
        coefficients: sol.coefficients.iter().copied().collect(),
        covariance: rows_to_vec(&sol.covariance),
        rss: sol.rss,
    })
}

fn check_finite(points: &[(f64, f64)]) -> Result<()> {
    if points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(Error::Fit("non-finite input".into()));
    }
    Ok(())
}

/// Gap data against `x = 1/L` with linear and quadratic fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingSeries {
    /// `(1/L, gap)`
    pub points: Vec<(f64, f64)>,
    pub linear: Fit,
    pub quadratic: Fit,
    /// `linear intercept - quadratic intercept`
    pub intercept_difference: f64,
}

impl ScalingSeries {
    /// Extrapolated gap of the linear fit and its standard error.
    pub fn extrapolated(&self) -> (f64, f64) {
        (self.linear.intercept(), self.linear.std_error(0))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }
}

/// Fits `a + b/L` and `a + b/L + c/L^2` to `(L, gap)` pairs.
pub fn extrapolate_gap(series: &[(usize, f64)]) -> Result<ScalingSeries> {
    let mut sizes: Vec<usize> = series.iter().map(|p| p.0).collect();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.len() < 3 || sizes.len() != series.len() {
        return Err(Error::Fit("need at least three distinct sizes".into()));
    }
    if sizes[0] == 0 {
        return Err(Error::Fit("size 0 has no inverse".into()));
    }
    let points: Vec<(f64, f64)> = series.iter().map(|&(l, g)| (1.0 / l as f64, g)).collect();
    check_finite(&points)?;
    let linear = fit_polynomial(&points, 1, None)?;
    let quadratic = fit_polynomial(&points, 2, None)?;
    let intercept_difference = linear.intercept() - quadratic.intercept();
    Ok(ScalingSeries {
        points,
        linear,
        quadratic,
        intercept_difference,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryMethod {
    ChargeGapRoot,
    DwFirstNonzero,
}

impl BoundaryMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundaryMethod::ChargeGapRoot => "charge-gap-root",
            BoundaryMethod::DwFirstNonzero => "dw-first-nonzero",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub t: f64,
    pub g2_star: f64,
    pub method: BoundaryMethod,
    /// Always positive.
    pub uncertainty: f64,
}

impl BoundaryPoint {
    pub fn csv_header() -> &'static str {
        "t,g2_star,method,uncertainty"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{}",
            format_sig(self.t),
            format_sig(self.g2_star),
            self.method.as_str(),
            format_sig(self.uncertainty)
        )
    }
}

/// One input of the critical-coupling fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapPoint {
    pub g2: f64,
    pub gap: f64,
    /// Standard error of `gap`; zero when unknown.
    pub sigma: f64,
}

/// Root of a straight line through `(g2, gap)` points.
///
/// The uncertainty combines the scatter about the line with the propagated
/// gap errors. An exact two-point line with no gap errors still reports a
/// positive uncertainty at the rounding level of the root.
pub fn locate_critical_g2(t: f64, points: &[GapPoint]) -> Result<BoundaryPoint> {
    if points.len() < 2 {
        return Err(Error::Fit("need at least two couplings".into()));
    }
    if points.iter().filter(|p| p.gap > 0.0).count() < 2 {
        return Err(Error::Fit("need at least two positive gaps".into()));
    }
    let xy: Vec<(f64, f64)> = points.iter().map(|p| (p.g2, p.gap)).collect();
    check_finite(&xy)?;
    let sigma: Vec<f64> = points.iter().map(|p| p.sigma).collect();
    let fit = fit_polynomial(&xy, 1, Some(&sigma))?;
    let (a, b) = (fit.coefficients[0], fit.coefficients[1]);
    if !(b < 0.0) {
        return Err(Error::Fit(format!(
            "gap does not decrease with g2 (slope {b})"
        )));
    }
    let root = -a / b;
    let c = &fit.covariance;
    // delta method for -a/b
    let var = (c[0][0] + root * root * c[1][1] + 2.0 * root * c[0][1]) / (b * b);
    let uncertainty = var.max(0.0).sqrt().max(root.abs() * f64::EPSILON);
    Ok(BoundaryPoint {
        t,
        g2_star: root,
        method: BoundaryMethod::ChargeGapRoot,
        uncertainty,
    })
}

/// Minimizes a unimodal-ish function of one rate over `[lo, hi]`: a log grid
/// locates the basin, golden-section search refines it.
fn minimize_rate(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    const GRID: usize = 400;
    let (llo, lhi) = (lo.ln(), hi.ln());
    let at = |k: usize| (llo + (lhi - llo) * k as f64 / GRID as f64).exp();
    let mut best = 0;
    let mut best_val = f64::INFINITY;
    for k in 0..=GRID {
        let v = f(at(k));
        if v < best_val {
            best_val = v;
            best = k;
        }
    }
    let (mut a, mut b) = (at(best.saturating_sub(1)), at((best + 1).min(GRID)));
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-15 * b.abs().max(1e-300) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    [at(best), mid]
        .into_iter()
        .min_by(|x, y| f(*x).total_cmp(&f(*y)))
        .expect("two candidates")
}

/// Rate search window for exponential fits, in inverse units of `x`.
const RATE_MIN: f64 = 1e-6;
const RATE_MAX: f64 = 5.0;

fn separable(points: &[(f64, f64)], rate: f64, offset: bool) -> Option<Ols> {
    let x0 = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let cols = if offset { 2 } else { 1 };
    // shifting x by x0 keeps the exponential column O(1)
    let design = DMatrix::from_fn(points.len(), cols, |r, c| {
        let e = (-rate * (points[r].0 - x0)).exp();
        if offset && c == 0 {
            1.0
        } else {
            e
        }
    });
    let y = DVector::from_iterator(points.len(), points.iter().map(|p| p.1));
    let mut sol = ols(design, &y, None).ok()?;
    // undo the shift on the exponential amplitude
    let k = cols - 1;
    let scale = (rate * x0).exp();
    sol.coefficients[k] *= scale;
    for j in 0..cols {
        sol.covariance[(k, j)] *= scale;
        sol.covariance[(j, k)] *= scale;
    }
    Some(sol)
}

fn exponential_fit(points: &[(f64, f64)], offset: bool) -> Result<Fit> {
    let rss = |rate: f64| separable(points, rate, offset).map_or(f64::INFINITY, |s| s.rss);
    let rate = minimize_rate(RATE_MIN, RATE_MAX, rss);
    let sol = separable(points, rate, offset).ok_or_else(|| Error::Fit("ill-conditioned exponential fit".into()))?;
    let mut coefficients: Vec<f64> = sol.coefficients.iter().copied().collect();
    coefficients.push(rate);
    Ok(Fit {
        kind: if offset {
            FitKind::OffsetExponential
        } else {
            FitKind::Exponential
        },
        coefficients,
        covariance: rows_to_vec(&sol.covariance),
        rss: sol.rss,
    })
}

/// `A exp(-b x)` by least squares in linear space.
pub fn fit_exponential(points: &[(f64, f64)]) -> Result<Fit> {
    check_finite(points)?;
    if points.len() < 3 {
        return Err(Error::Fit("need at least three points".into()));
    }
    exponential_fit(points, false)
}

/// `A + B exp(-b x)` by least squares in linear space.
pub fn fit_offset_exponential(points: &[(f64, f64)]) -> Result<Fit> {
    check_finite(points)?;
    if points.len() < 3 {
        return Err(Error::Fit("need at least three points".into()));
    }
    exponential_fit(points, true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum DwClass {
    Vanishing { amplitude: f64, rate: f64 },
    Finite { asymptote: f64 },
}

impl DwClass {
    pub fn is_finite(&self) -> bool {
        matches!(self, DwClass::Finite { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DwClassification {
    pub class: DwClass,
    pub exponential: Fit,
    pub offset: Fit,
}

/// Decides between `A exp(-bL)` decay and saturation at `A' + B' exp(-b'L)`.
///
/// The series is finite when the fitted asymptote exceeds [`DW_FLOOR`] and
/// either the offset model cuts the residual sum by a factor four or the
/// pure exponential hardly decays (`b ΔL < 0.1`) over the sampled sizes.
pub fn classify_dw(series: &[(usize, f64)]) -> Result<DwClassification> {
    let mut sizes: Vec<usize> = series.iter().map(|p| p.0).collect();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.len() < 4 || sizes.len() != series.len() {
        return Err(Error::Fit("need at least four distinct sizes".into()));
    }
    let points: Vec<(f64, f64)> = series.iter().map(|&(l, c)| (l as f64, c)).collect();
    let exponential = fit_exponential(&points)?;
    let offset = fit_offset_exponential(&points)?;
    let span = (sizes[sizes.len() - 1] - sizes[0]) as f64;
    let asymptote = offset.coefficients[0];
    let scale: f64 = points.iter().map(|p| p.1 * p.1).sum();
    let better = exponential.rss > 4.0 * offset.rss + 1e-24 * scale;
    let flat = exponential.coefficients[1] * span < 0.1;
    let class = if asymptote > DW_FLOOR && (better || flat) {
        DwClass::Finite { asymptote }
    } else {
        DwClass::Vanishing {
            amplitude: exponential.coefficients[0],
            rate: exponential.coefficients[1],
        }
    };
    Ok(DwClassification {
        class,
        exponential,
        offset,
    })
}

/// Evenly spaced couplings `start, start + step, ...` up to `stop`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Grid {
    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.step > 0.0) || !(self.stop >= self.start) {
            return Err(Error::InvalidParameter(format!(
                "grid needs step > 0 and stop >= start, got {self:?}"
            )));
        }
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        // rounded to 1e-12 so that 1.2 + 0.05 prints as 1.25
        Ok((0..=n)
            .map(|k| ((self.start + k as f64 * self.step) * 1e12).round() / 1e12)
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    /// `None` when no grid point is finite.
    pub boundary: Option<BoundaryPoint>,
    /// `(g2, finite)` for every point visited, in grid order.
    pub visited: Vec<(f64, bool)>,
}

/// Walks the grid upward and stops at the first coupling whose order
/// parameter is finite. The uncertainty is the grid step.
pub fn dw_boundary_scan(
    t: f64,
    grid: &Grid,
    mut is_finite: impl FnMut(f64) -> Result<bool>,
) -> Result<ScanResult> {
    let mut visited = Vec::new();
    for g2 in grid.values()? {
        let finite = is_finite(g2)?;
        visited.push((g2, finite));
        if finite {
            return Ok(ScanResult {
                boundary: Some(BoundaryPoint {
                    t,
                    g2_star: g2,
                    method: BoundaryMethod::DwFirstNonzero,
                    uncertainty: grid.step,
                }),
                visited,
            });
        }
    }
    Ok(ScanResult {
        boundary: None,
        visited,
    })
}
