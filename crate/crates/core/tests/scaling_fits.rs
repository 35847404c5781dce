use cavity_array::scaling::{
    classify_dw, dw_boundary_scan, extrapolate_gap, fit_exponential, fit_offset_exponential, fit_polynomial,
    locate_critical_g2, BoundaryMethod, DwClass, GapPoint, Grid,
};
use proptest::prelude::*;

/// Closed-form simple regression, used as an independent check.
fn simple_regression(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (my - slope * mx, slope)
}

#[test]
fn linear_gap_is_recovered_exactly() {
    let series: Vec<(usize, f64)> = [20, 40, 60, 80, 100]
        .iter()
        .map(|&l| (l, 0.10 + 0.7 / l as f64))
        .collect();
    let s = extrapolate_gap(&series).unwrap();
    assert!((s.linear.intercept() - 0.10).abs() < 1e-12);
    assert!((s.linear.coefficients[1] - 0.7).abs() < 1e-10);
    assert!(s.intercept_difference.abs() < 1e-11);
}

#[test]
fn quadratic_gap_intercepts() {
    let series: Vec<(usize, f64)> = (40..=100)
        .step_by(10)
        .map(|l| (l, 0.05 + 0.3 / l as f64 + 2.0 / (l * l) as f64))
        .collect();
    let s = extrapolate_gap(&series).unwrap();
    assert!((s.quadratic.intercept() - 0.05).abs() < 1e-10);
    let (a, b) = simple_regression(&s.points);
    assert!((s.linear.intercept() - a).abs() < 1e-12);
    assert!((s.linear.coefficients[1] - b).abs() < 1e-10);
    assert!((s.linear.intercept() - s.quadratic.intercept()).abs() < 1e-3);
    assert!((s.intercept_difference - (a - 0.05)).abs() < 1e-10);
}

#[test]
fn extrapolation_needs_three_sizes() {
    assert!(extrapolate_gap(&[(10, 1.0), (20, 0.5)]).is_err());
    assert!(extrapolate_gap(&[(10, 1.0), (10, 0.9), (20, 0.5)]).is_err());
}

#[test]
fn linear_gap_root() {
    let pts: Vec<GapPoint> = [1.0, 1.1, 1.2, 1.3]
        .iter()
        .map(|&g2| GapPoint { g2, gap: 0.5 * (1.4 - g2), sigma: 0.0 })
        .collect();
    let b = locate_critical_g2(0.25, &pts).unwrap();
    assert!((b.g2_star - 1.4).abs() < 1e-12);
    assert_eq!(b.method, BoundaryMethod::ChargeGapRoot);
    assert!(b.uncertainty > 0.0);
}

#[test]
fn two_point_root() {
    let pts = [
        GapPoint { g2: 1.30, gap: 0.02, sigma: 0.0 },
        GapPoint { g2: 1.35, gap: 0.01, sigma: 0.0 },
    ];
    let b = locate_critical_g2(0.25, &pts).unwrap();
    assert!((b.g2_star - 1.40).abs() < 1e-12);
    assert!(b.uncertainty > 0.0 && b.uncertainty < 1e-12);
}

#[test]
fn gap_errors_widen_the_root() {
    let exact = [
        GapPoint { g2: 1.30, gap: 0.02, sigma: 0.0 },
        GapPoint { g2: 1.35, gap: 0.01, sigma: 0.0 },
    ];
    let noisy = exact.map(|p| GapPoint { sigma: 0.001, ..p });
    let b = locate_critical_g2(0.25, &noisy).unwrap();
    // both ends move independently: sigma * sqrt(1 + r^2) / |slope| with r = 2
    let want = 0.001 * (1.0f64 + 4.0).sqrt() / 0.2;
    assert!((b.uncertainty - want).abs() < 1e-12, "{}", b.uncertainty);
}

#[test]
fn rising_gap_has_no_root() {
    let pts = [
        GapPoint { g2: 1.30, gap: 0.01, sigma: 0.0 },
        GapPoint { g2: 1.35, gap: 0.02, sigma: 0.0 },
    ];
    assert!(locate_critical_g2(0.25, &pts).is_err());
}

#[test]
fn constant_series_is_finite() {
    let series: Vec<(usize, f64)> = (40..=160).step_by(20).map(|l| (l, 0.2)).collect();
    let c = classify_dw(&series).unwrap();
    match c.class {
        DwClass::Finite { asymptote } => assert!((asymptote - 0.2).abs() < 1e-9),
        other => panic!("expected finite, got {other:?}"),
    }
}

#[test]
fn exponential_series_is_vanishing() {
    for (amp, rate) in [(0.253, 0.065), (0.241, 0.032)] {
        let series: Vec<(usize, f64)> = (40..=160)
            .step_by(20)
            .map(|l| (l, amp * (-rate * l as f64).exp()))
            .collect();
        let c = classify_dw(&series).unwrap();
        match c.class {
            DwClass::Vanishing { amplitude, rate: b } => {
                assert!((b - rate).abs() < 1e-8, "rate {b}");
                assert!((amplitude - amp).abs() < 1e-6, "amplitude {amplitude}");
            }
            other => panic!("expected vanishing, got {other:?}"),
        }
    }
}

#[test]
fn saturating_series_is_finite() {
    let series: Vec<(usize, f64)> = (40..=160)
        .step_by(20)
        .map(|l| (l, 0.08 + 0.05 * (-0.04 * l as f64).exp()))
        .collect();
    let c = classify_dw(&series).unwrap();
    match c.class {
        DwClass::Finite { asymptote } => assert!((asymptote - 0.08).abs() < 1e-6, "{asymptote}"),
        other => panic!("expected finite, got {other:?}"),
    }
}

#[test]
fn tiny_asymptote_stays_vanishing() {
    let series: Vec<(usize, f64)> = (40..=160)
        .step_by(20)
        .map(|l| (l, 2e-4 + 0.2 * (-0.05 * l as f64).exp()))
        .collect();
    assert!(!classify_dw(&series).unwrap().class.is_finite());
}

#[test]
fn offset_exponential_recovers_parameters() {
    let pts: Vec<(f64, f64)> = (0..8)
        .map(|k| {
            let x = 20.0 + 15.0 * k as f64;
            (x, -0.3 + 1.5 * (-0.02 * x).exp())
        })
        .collect();
    let f = fit_offset_exponential(&pts).unwrap();
    assert!((f.coefficients[0] + 0.3).abs() < 1e-7);
    assert!((f.coefficients[1] - 1.5).abs() < 1e-6);
    assert!((f.coefficients[2] - 0.02).abs() < 1e-8);
}

#[test]
fn stub_scan_finds_threshold() {
    let grid = Grid { start: 1.0, stop: 1.5, step: 0.05 };
    let r = dw_boundary_scan(0.05, &grid, |g2| Ok(g2 >= 1.2 - 1e-9)).unwrap();
    let b = r.boundary.unwrap();
    assert!((b.g2_star - 1.20).abs() < 1e-12);
    assert_eq!(b.uncertainty, 0.05);
    assert_eq!(b.method, BoundaryMethod::DwFirstNonzero);
    assert_eq!(r.visited.len(), 5);
}

#[test]
fn scan_without_finite_point_is_open() {
    let grid = Grid { start: 1.0, stop: 1.5, step: 0.1 };
    let r = dw_boundary_scan(0.05, &grid, |_| Ok(false)).unwrap();
    assert!(r.boundary.is_none());
    assert_eq!(r.visited.len(), 6);
}

#[test]
fn grid_rejects_bad_step() {
    assert!(Grid { start: 1.0, stop: 1.5, step: 0.0 }.values().is_err());
    assert!(Grid { start: 1.5, stop: 1.0, step: 0.1 }.values().is_err());
}

proptest! {
    #[test]
    fn polynomial_fit_is_a_minimum(
        ys in proptest::collection::vec(-1.0f64..1.0, 6),
        degree in 1usize..=2,
        k in 0usize..3,
        sign in prop::bool::ANY,
    ) {
        let pts: Vec<(f64, f64)> = ys.iter().enumerate().map(|(i, &y)| (1.0 / (20.0 + 20.0 * i as f64), y)).collect();
        let fit = fit_polynomial(&pts, degree, None).unwrap();
        let k = k.min(degree);
        let mut c = fit.coefficients.clone();
        c[k] += if sign { 1e-6 } else { -1e-6 };
        let base = fit.rss_with(&fit.coefficients, &pts);
        let rounding = 1e-14 * pts.iter().map(|p| p.1 * p.1).sum::<f64>();
        prop_assert!(fit.rss_with(&c, &pts) >= base - rounding);
    }

    #[test]
    fn exponential_fit_is_a_minimum(
        amp in 0.05f64..0.5,
        rate in 0.005f64..0.1,
        noise in proptest::collection::vec(-1e-3f64..1e-3, 6),
        k in 0usize..2,
        sign in prop::bool::ANY,
    ) {
        let pts: Vec<(f64, f64)> = noise.iter().enumerate().map(|(i, e)| {
            let l = 40.0 + 20.0 * i as f64;
            (l, amp * (-rate * l).exp() + e)
        }).collect();
        let fit = fit_exponential(&pts).unwrap();
        let mut c = fit.coefficients.clone();
        c[k] += if sign { 1e-6 } else { -1e-6 };
        let base = fit.rss_with(&fit.coefficients, &pts);
        let rounding = 1e-14 * pts.iter().map(|p| p.1 * p.1).sum::<f64>();
        prop_assert!(fit.rss_with(&c, &pts) >= base - rounding);
    }

    #[test]
    fn root_ignores_gap_scale(
        slope in 0.05f64..2.0,
        root in 1.0f64..2.0,
        noise in proptest::collection::vec(-1e-3f64..1e-3, 4),
        scale in 0.01f64..100.0,
    ) {
        let pts: Vec<GapPoint> = noise.iter().enumerate().map(|(i, e)| {
            let g2 = root - 0.3 + 0.05 * i as f64;
            GapPoint { g2, gap: slope * (root - g2) + e * slope, sigma: 0.0 }
        }).collect();
        let scaled: Vec<GapPoint> = pts.iter().map(|p| GapPoint { gap: p.gap * scale, ..*p }).collect();
        let a = locate_critical_g2(0.25, &pts).unwrap();
        let b = locate_critical_g2(0.25, &scaled).unwrap();
        prop_assert!((a.g2_star - b.g2_star).abs() < 1e-10);
    }

    #[test]
    fn scan_is_stable_under_refinement(threshold in 1.0f64..1.5, halvings in 1u32..3) {
        let coarse = Grid { start: 1.0, stop: 1.6, step: 0.1 };
        let fine = Grid { step: 0.1 / 2f64.powi(halvings as i32), ..coarse };
        let stub = |g2: f64| Ok(g2 >= threshold);
        let a = dw_boundary_scan(0.05, &coarse, stub).unwrap().boundary.unwrap();
        let b = dw_boundary_scan(0.05, &fine, stub).unwrap().boundary.unwrap();
        let on_grid = fine.values().unwrap().iter().any(|v| (v - b.g2_star).abs() < 1e-12);
        prop_assert!(on_grid);
        prop_assert!((a.g2_star - b.g2_star).abs() <= coarse.step + 1e-12);
    }
}
