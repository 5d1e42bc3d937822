use std::f64::consts::PI;
use std::sync::Arc;

use fermat_core::causal::{
    arrival_time, causal_character, global_lift, lift_time, lift_time_with, normalize_parameterization, CurveSample,
    LightlikeCurve, SpatialPath,
};
use fermat_core::metric::{catalog, eval_metric, static_spherical, ChartParams, Event, ObserverCurve, SplittingChart};
use fermat_core::Error;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

fn mink() -> SplittingChart {
    catalog("minkowski", &ChartParams::default()).unwrap()
}

/// Time-dependent chart so the lift is not a pure line integral.
fn wavy() -> SplittingChart {
    SplittingChart::new(
        "wavy",
        3,
        Arc::new(|x: &DVector<f64>, t: f64| DMatrix::identity(2, 2) * (1.0 + 0.2 * (t + x[1]).sin().powi(2))),
        Arc::new(|x: &DVector<f64>, t: f64| v(&[0.2 * t.cos(), 0.1 * x[0]])),
    )
    .unwrap()
}

fn sampled(f: impl Fn(f64) -> DVector<f64>, n: usize) -> SpatialPath {
    SpatialPath::new((0..=n).map(|k| k as f64 / n as f64).map(|s| (s, f(s))).collect()).unwrap()
}

fn quarter(n: usize) -> SpatialPath {
    sampled(|s| v(&[(PI * s / 2.0).sin(), 1.0 - (PI * s / 2.0).cos()]), n)
}

#[test]
fn straight_minkowski_lift() {
    let c = lift_time(&mink(), &SpatialPath::polyline(&[v(&[0.0, 0.0]), v(&[1.0, 0.0])]).unwrap(), 0.0).unwrap();
    for smp in c.samples() {
        assert!((smp.z.t - smp.s).abs() < 1e-10);
    }
    let obs = ObserverCurve::new(v(&[1.0, 0.0]), (-1.0, 5.0)).unwrap();
    assert!((arrival_time(&c, &obs, 1e-9).unwrap() - 1.0).abs() < 1e-10);
}

#[test]
fn quarter_circle_arrival_is_arc_length() {
    let c = lift_time(&mink(), &quarter(2000), 0.0).unwrap();
    let obs = ObserverCurve::new(v(&[1.0, 1.0]), (-1.0, 5.0)).unwrap();
    assert!((arrival_time(&c, &obs, 1e-9).unwrap() - PI / 2.0).abs() < 1e-6);
    let rep = causal_character(&mink(), &c).unwrap();
    assert!(rep.max_null_residual < 1e-6 && rep.future_pointing);
}

#[test]
fn shift_enters_the_lift() {
    let c = catalog("conformally_stationary_demo", &ChartParams::default()).unwrap();
    let curve = lift_time(&c, &SpatialPath::polyline(&[v(&[0.0, 0.0]), v(&[1.0, 0.0])]).unwrap(), 0.0).unwrap();
    assert!((curve.end_time() - (0.3 + 1.09f64.sqrt())).abs() < 1e-8);
    let back = lift_time(&c, &SpatialPath::polyline(&[v(&[1.0, 0.0]), v(&[0.0, 0.0])]).unwrap(), 0.0).unwrap();
    assert!((back.end_time() - (-0.3 + 1.09f64.sqrt())).abs() < 1e-8);
}

#[test]
fn standing_still_costs_nothing() {
    let path = SpatialPath::new(vec![
        (0.0, v(&[0.0, 0.0])),
        (0.3, v(&[0.0, 0.0])),
        (0.7, v(&[0.4, 0.3])),
        (1.0, v(&[0.4, 0.3])),
    ])
    .unwrap();
    let c = lift_time(&mink(), &path, 2.0).unwrap();
    assert!((c.end_time() - 2.5).abs() < 1e-12);
    for smp in c.samples().iter().filter(|s| s.s <= 0.3) {
        assert_eq!(smp.z.t, 2.0);
    }
    let rep = causal_character(&mink(), &c).unwrap();
    assert!(rep.future_pointing);
    let constant = LightlikeCurve::constant(Event::from_slice(&[1.0, 1.0], 0.0), 0.0, 1.0);
    let rep = causal_character(&mink(), &constant).unwrap();
    assert_eq!(rep.max_null_residual, 0.0);
    assert!(rep.future_pointing);
}

#[test]
fn time_reversed_curve_is_not_future_pointing() {
    let samples = (0..=10)
        .map(|k| {
            let s = k as f64 / 10.0;
            CurveSample { s, z: Event::from_slice(&[s, 0.0], -s) }
        })
        .collect();
    let c = LightlikeCurve::new(samples).unwrap();
    let rep = causal_character(&mink(), &c).unwrap();
    assert!(!rep.future_pointing);
    assert!(rep.max_null_residual < 1e-12);
}

#[test]
fn lift_is_fourth_order_in_the_substep() {
    // oracle: a much finer lift of the same polyline
    let chart = static_spherical(3, 0.2, 0.2).unwrap();
    let path = SpatialPath::polyline(&[v(&[-2.0, 0.5]), v(&[0.3, 0.6]), v(&[2.0, -0.4])]).unwrap();
    let exact = lift_time_with(&chart, &path, 0.0, 4096).unwrap().end_time();
    let err = |m| (lift_time_with(&chart, &path, 0.0, m).unwrap().end_time() - exact).abs();
    let ratio = err(16) / err(32);
    assert!((ratio - 16.0).abs() < 2.0, "ratio {ratio}");
}

#[test]
fn lift_is_additive_over_concatenation() {
    let chart = wavy();
    let a = SpatialPath::polyline(&[v(&[0.0, 0.0]), v(&[0.5, 0.2]), v(&[0.7, 0.9])]).unwrap();
    let whole = SpatialPath::polyline(&[v(&[0.0, 0.0]), v(&[0.5, 0.2]), v(&[0.7, 0.9]), v(&[1.5, 1.0])]).unwrap();
    let first = lift_time_with(&chart, &a, 0.3, 64).unwrap();
    let second = lift_time_with(
        &chart,
        &SpatialPath::polyline(&[v(&[0.7, 0.9]), v(&[1.5, 1.0])]).unwrap(),
        first.end_time(),
        64,
    )
    .unwrap();
    let full = lift_time_with(&chart, &whole, 0.3, 64).unwrap();
    assert!((second.end_time() - full.end_time()).abs() < 1e-10);
    // extending by a nonconstant arc strictly delays arrival
    assert!(full.end_time() > first.end_time());
}

#[test]
fn lift_leaving_the_domain_reports_the_parameter() {
    let chart = static_spherical(3, 0.2, 0.5).unwrap();
    let path = SpatialPath::polyline(&[v(&[-2.0, 0.0]), v(&[2.0, 0.0])]).unwrap();
    match lift_time(&chart, &path, 0.0) {
        Err(Error::OutOfDomain { s: Some(s), .. }) => assert!(s > 0.3 && s < 0.5, "s = {s}"),
        other => panic!("{other:?}"),
    }
    assert!(matches!(global_lift(&chart, &path, 0.0), Err(Error::OutOfDomain { s: Some(_), .. })));
}

#[test]
fn global_lift_agrees_with_lift_time() {
    for chart in [mink(), wavy(), catalog("conformally_stationary_demo", &ChartParams::default()).unwrap()] {
        let path = quarter(200);
        let a = lift_time(&chart, &path, 0.0).unwrap();
        let b = global_lift(&chart, &path, 0.0).unwrap();
        for (x, y) in a.samples().iter().zip(b.samples()) {
            assert!((x.z.t - y.z.t).abs() < 1e-9);
        }
    }
}

#[test]
fn arrival_time_errors() {
    let c = lift_time(&mink(), &SpatialPath::polyline(&[v(&[0.0, 0.0]), v(&[1.0, 0.0])]).unwrap(), 0.0).unwrap();
    let off = ObserverCurve::new(v(&[1.0, 1e-6]), (-1.0, 5.0)).unwrap();
    assert!(matches!(arrival_time(&c, &off, 1e-9), Err(Error::NotOnObserver { .. })));
    let late = ObserverCurve::new(v(&[1.0, 0.0]), (2.0, 5.0)).unwrap();
    assert!(matches!(arrival_time(&c, &late, 1e-9), Err(Error::OutsideWorldline { .. })));
    assert!(ObserverCurve::new(v(&[1.0, 0.0]), (2.0, 2.0)).is_err());
}

#[test]
fn normalization_makes_time_affine() {
    let path = sampled(|s| v(&[s * s, 0.0]), 400);
    let c = lift_time(&mink(), &path, 0.0).unwrap();
    let n = normalize_parameterization(&mink(), &c, None).unwrap();
    for smp in n.samples() {
        assert!((smp.z.t - smp.s).abs() < 1e-6);
    }
    assert_eq!(n.end(), c.end());
    let straight = lift_time(&mink(), &SpatialPath::polyline(&[v(&[0.0, 0.0]), v(&[1.0, 0.0])]).unwrap(), 0.0).unwrap();
    let again = normalize_parameterization(&mink(), &straight, None).unwrap();
    for (a, b) in again.samples().iter().zip(straight.samples()) {
        assert!((a.s - b.s).abs() < 1e-10);
    }
    let constant = LightlikeCurve::constant(Event::from_slice(&[1.0, 1.0], 0.0), 0.0, 1.0);
    assert!(matches!(
        normalize_parameterization(&mink(), &constant, None),
        Err(Error::DegenerateCurve(_))
    ));
}

fn smooth_path(coef: &[f64]) -> impl Fn(f64) -> DVector<f64> + '_ {
    move |s| {
        v(&[
            2.0 * s + coef[0] * (PI * s).sin() + coef[1] * (2.0 * PI * s).sin(),
            coef[2] * (PI * s).sin() + coef[3] * (3.0 * PI * s).sin(),
        ])
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn arrival_time_is_reparameterization_invariant(
        coef in prop::collection::vec(-0.3f64..0.3, 4),
        warp in 0.7f64..1.5,
        bump in -0.8f64..0.8,
    ) {
        let phi = |s: f64| {
            let u = s.powf(warp);
            u + bump * (2.0 * PI * u).sin() / (2.0 * PI)
        };
        let x = smooth_path(&coef);
        let chart = wavy();
        let a = lift_time(&chart, &sampled(&x, 4000), 0.0).unwrap().end_time();
        let b = lift_time(&chart, &sampled(|s| x(phi(s)), 4000), 0.0).unwrap().end_time();
        prop_assert!((a - b).abs() < 1e-6, "{} vs {}", a, b);
    }

    #[test]
    fn lifted_time_increases_and_stays_null(coef in prop::collection::vec(-0.3f64..0.3, 4)) {
        let chart = wavy();
        let c = lift_time(&chart, &sampled(smooth_path(&coef), 200), 0.0).unwrap();
        for w in c.samples().windows(2) {
            prop_assert!(w[1].z.t > w[0].z.t);
        }
        prop_assert!(causal_character(&chart, &c).unwrap().is_lightlike(1e-6));
        let smp = &c.samples()[57];
        let nxt = &c.samples()[58];
        let dz = (nxt.z.coords() - smp.z.coords()) / (nxt.s - smp.s);
        let mid = Event::from_coords(&((smp.z.coords() + nxt.z.coords()) * 0.5));
        prop_assert!(eval_metric(&chart, &mid, &dz, &dz).unwrap().abs() < 1e-6 * dz.norm_squared());
    }
}
