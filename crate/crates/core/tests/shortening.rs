use fermat_core::causal::{lift_time, SpatialPath};
use fermat_core::jacobi::{analyze_record, RefineOptions};
use fermat_core::metric::{catalog, static_spherical, ChartParams, Event, ObserverCurve, RegionSpec};
use fermat_core::shortening::{
    check_light_convexity, initial_curve, local_fermat_minimizer, multi_start, run_shortening,
    ConvexityOptions, DedupOptions, RayProblem, ShorteningConfig, Side, StartHint,
};
use fermat_core::Error;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

fn minkowski3() -> fermat_core::SplittingChart {
    catalog("minkowski", &ChartParams { dim: Some(4), ..Default::default() }).unwrap()
}

fn small_cfg(n: usize) -> ShorteningConfig {
    ShorteningConfig {
        n_segments: n,
        rho_star: 10.0,
        ..ShorteningConfig::default()
    }
}

#[test]
fn straight_minkowski_ray_is_a_fixed_point() {
    let chart = minkowski3();
    let p = Event::from_slice(&[0.0, 0.0, 0.0], 0.0);
    let obs = ObserverCurve::new(v(&[3.0, 4.0, 0.0]), (-1.0, 100.0)).unwrap();
    let init = initial_curve(&chart, &p, &obs, &StartHint::Straight, 4).unwrap();
    let run = run_shortening(&chart, &init, &obs, &RegionSpec::everywhere(), &small_cfg(2), &RefineOptions::default())
        .unwrap();
    assert!((run.record.tau - 5.0).abs() < 1e-10);
    assert!(run.iterations <= 2);
    assert!(run.tau_history.iter().all(|t| (t - 5.0).abs() < 1e-10));
}

#[test]
fn zigzag_converges_to_the_straight_ray() {
    let chart = minkowski3();
    let p = Event::from_slice(&[0.0, 0.0, 0.0], 0.0);
    let obs = ObserverCurve::new(v(&[4.0, 0.0, 0.0]), (-1.0, 100.0)).unwrap();
    let hint = StartHint::Via {
        points: vec![vec![1.0, 1.0, 0.0], vec![2.0, -1.0, 0.5], vec![3.0, 1.0, 0.0]],
    };
    let init = initial_curve(&chart, &p, &obs, &hint, 4).unwrap();
    for n in [2, 4] {
        let run = run_shortening(&chart, &init, &obs, &RegionSpec::everywhere(), &small_cfg(n), &RefineOptions::default())
            .unwrap();
        assert!((run.record.tau - 4.0).abs() < 1e-8, "N = {n}: {}", run.record.tau);
        for w in run.tau_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-10 * (1.0 + w[0].abs()));
        }
        for k in 0..=10 {
            let x = run.record.position_at(k as f64 / 10.0);
            assert!(x[1].abs() < 1e-5 && x[2].abs() < 1e-5, "{x}");
        }
    }
}

#[test]
fn local_minimizer_on_minkowski_is_the_chord() {
    let chart = minkowski3();
    let q = Event::from_slice(&[0.0, 0.0, 0.0], 1.0);
    let c = local_fermat_minimizer(&chart, &q, &v(&[0.05, 0.02, 0.0]), (0.0, 1.0), &ShorteningConfig::default())
        .unwrap();
    let want = 1.0 + (0.05f64.powi(2) + 0.02f64.powi(2)).sqrt();
    assert!((c.end_time() - want).abs() < 1e-12);
    let same = local_fermat_minimizer(&chart, &q, &v(&[0.0, 0.0, 0.0]), (0.0, 1.0), &ShorteningConfig::default())
        .unwrap();
    assert_eq!(same.end_time(), 1.0);
}

#[test]
fn local_minimizer_is_no_later_than_the_straight_lift() {
    let chart = static_spherical(4, 0.1, 0.2).unwrap();
    let q = Event::from_slice(&[1.0, 0.0, 0.0], 0.0);
    let target = v(&[1.05, 0.06, 0.01]);
    let c = local_fermat_minimizer(&chart, &q, &target, (0.0, 1.0), &ShorteningConfig::default()).unwrap();
    let straight = lift_time(&chart, &SpatialPath::polyline(&[q.x.clone(), target.clone()]).unwrap(), 0.0).unwrap();
    assert!(c.end_time() <= straight.end_time() + 1e-12);
    assert!((&c.end().x - &target).norm() < 1e-9);
}

#[test]
fn pseudo_coercivity_guard_aborts_with_history() {
    let chart = minkowski3();
    let p = Event::from_slice(&[0.0, 0.0, 0.0], 0.0);
    let obs = ObserverCurve::new(v(&[4.0, 0.0, 0.0]), (-1.0, 100.0)).unwrap();
    let init = initial_curve(&chart, &p, &obs, &StartHint::Straight, 4).unwrap();
    let cfg = ShorteningConfig { d_cap: 1.0, ..small_cfg(2) };
    let err = run_shortening(&chart, &init, &obs, &RegionSpec::everywhere(), &cfg, &RefineOptions::default())
        .unwrap_err();
    assert!(matches!(err, Error::PseudoCoercivity { .. }));
    assert!(err.is_guard_abort());
    assert!(!err.tau_history().unwrap().is_empty());
}

#[test]
fn region_guard_aborts_when_the_curve_leaves() {
    let chart = minkowski3();
    let p = Event::from_slice(&[0.0, 0.0, 0.0], 0.0);
    let obs = ObserverCurve::new(v(&[4.0, 0.0, 0.0]), (-1.0, 100.0)).unwrap();
    let hint = StartHint::Via { points: vec![vec![2.0, 3.0, 0.0]] };
    let init = initial_curve(&chart, &p, &obs, &hint, 4).unwrap();
    let region = RegionSpec::ball(v(&[2.0, 0.0, 0.0]), 2.5);
    let err = run_shortening(&chart, &init, &obs, &region, &small_cfg(2), &RefineOptions::default()).unwrap_err();
    assert!(matches!(err, Error::RegionExit { .. }));
}

#[test]
fn observer_window_too_early_is_reported() {
    let chart = minkowski3();
    let p = Event::from_slice(&[0.0, 0.0, 0.0], 0.0);
    let obs = ObserverCurve::new(v(&[4.0, 0.0, 0.0]), (-1.0, 3.0)).unwrap();
    let init = fermat_core::causal::lift_time(
        &chart,
        &SpatialPath::polyline(&[p.x.clone(), obs.x_obs.clone()]).unwrap(),
        0.0,
    )
    .unwrap();
    let err = run_shortening(&chart, &init, &obs, &RegionSpec::everywhere(), &small_cfg(2), &RefineOptions::default())
        .unwrap_err();
    assert!(matches!(err, Error::OutsideWorldline { .. }), "{err:?}");
}

#[test]
fn multi_start_merges_equivalent_starts() {
    let chart = minkowski3();
    let problem = RayProblem {
        chart,
        p: Event::from_slice(&[0.0, 0.0, 0.0], 0.0),
        observer: ObserverCurve::new(v(&[4.0, 0.0, 0.0]), (-1.0, 100.0)).unwrap(),
        region: RegionSpec::everywhere(),
    };
    let hints = vec![
        StartHint::Straight,
        StartHint::Via { points: vec![vec![2.0, 0.5, 0.0]] },
        StartHint::Side { side: Side::Right, center: vec![2.0, 0.0, 0.0], offset: 0.3 },
    ];
    let res = multi_start(
        &problem,
        &hints,
        &small_cfg(2),
        &RefineOptions::default(),
        DedupOptions { tau_tol: 1e-8, radius: 1e-3 },
    );
    assert!(res.failures.is_empty(), "{:?}", res.failures);
    assert_eq!(res.runs.len(), 1);
    assert_eq!(res.runs[0].0, 0);
    assert_eq!(res.duplicates, vec![(1, 0), (2, 0)]);
}

/// Impact parameters of the two images of a weak point lens with source and
/// observer at equal distance `d` on either side, both offset by `y`.
fn thin_lens_impacts(mass: f64, d: f64, y: f64) -> (f64, f64) {
    let be2 = 4.0 * mass * d / 2.0;
    let disc = (y * y / 4.0 + be2).sqrt();
    (y / 2.0 + disc, y / 2.0 - disc)
}

#[test]
fn weak_lens_has_two_images_with_indices_zero_and_one() {
    let (mass, d, y) = (0.01, 10.0, 0.2);
    let chart = static_spherical(4, mass, 0.05).unwrap();
    let problem = RayProblem {
        chart: chart.clone(),
        p: Event::from_slice(&[-d, y, 0.0], 0.0),
        observer: ObserverCurve::new(v(&[d, y, 0.0]), (0.0, 100.0)).unwrap(),
        region: RegionSpec::everywhere(),
    };
    let hints = vec![
        StartHint::Side { side: Side::Left, center: vec![0.0, 0.0, 0.0], offset: 0.6 },
        StartHint::Side { side: Side::Right, center: vec![0.0, 0.0, 0.0], offset: 0.6 },
    ];
    let cfg = ShorteningConfig { n_segments: 4, rho_star: 100.0, d_cap: 100.0, ..Default::default() };
    let res = multi_start(&problem, &hints, &cfg, &RefineOptions::default(), DedupOptions { tau_tol: 1e-8, radius: 1e-2 });
    assert!(res.failures.is_empty(), "{:?}", res.failures);
    assert_eq!(res.runs.len(), 2);
    let (b_plus, b_minus) = thin_lens_impacts(mass, d, y);
    let mut recs: Vec<_> = res.runs.into_iter().map(|(_, r)| r.record).collect();
    for r in &mut recs {
        analyze_record(&chart, r, 1e-6).unwrap();
    }
    let impact = |r: &fermat_core::jacobi::GeodesicRecord| {
        r.samples.iter().min_by(|a, b| a.z[0].abs().total_cmp(&b.z[0].abs())).unwrap().z[1]
    };
    assert!(recs[0].tau < recs[1].tau);
    assert!((impact(&recs[0]) - b_plus).abs() < 0.05 * b_plus, "{}", impact(&recs[0]));
    assert!((impact(&recs[1]) - b_minus).abs() < 0.05 * b_minus.abs(), "{}", impact(&recs[1]));
    assert_eq!(recs[0].index, Some(0));
    assert_eq!(recs[1].index, Some(1));
    assert_eq!(recs[1].conjugate_points[0].multiplicity, 1);
}

#[test]
fn minkowski_ball_is_light_convex() {
    let chart = minkowski3();
    let region = RegionSpec::ball(v(&[0.0, 0.0, 0.0]), 1.0);
    let opts = ConvexityOptions { samples: 40, ..Default::default() };
    let rep = check_light_convexity(&chart, &region, &opts, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
    assert_eq!(rep.violations(), 0);
    assert!(rep.pair_trials > 0 && rep.grazing_trials > 0);
}

#[test]
fn minkowski_annulus_is_not_light_convex() {
    let chart = minkowski3();
    let region = RegionSpec::annulus(v(&[0.0, 0.0, 0.0]), 0.5, 2.0);
    let opts = ConvexityOptions { samples: 40, ..Default::default() };
    let rep = check_light_convexity(&chart, &region, &opts, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
    assert!(rep.violations() > 0);
    assert!(!rep.witnesses.is_empty());
}

/// Photon-sphere radius of the isotropic exterior: the root of d(n r)/dr.
fn photon_sphere(mass: f64) -> f64 {
    let f = |r: f64| {
        let h = 1e-6 * r;
        let nr = |r: f64| fermat_core::metric::isotropic_index(mass, r) * r;
        (nr(r + h) - nr(r - h)) / (2.0 * h)
    };
    let (mut lo, mut hi) = (0.51 * mass, 10.0 * mass);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn exterior_is_light_convex_only_inside_the_photon_sphere() {
    let ps = photon_sphere(1.0);
    assert!((ps - (2.0 + 3f64.sqrt()) / 2.0).abs() < 1e-6);
    let chart = static_spherical(4, 1.0, 0.6).unwrap();
    let opts = ConvexityOptions { samples: 40, horizon: 20.0, ..Default::default() };
    let near = RegionSpec::exterior(v(&[0.0, 0.0, 0.0]), 0.8 * ps);
    let rep = check_light_convexity(&chart, &near, &opts, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    assert_eq!(rep.violations(), 0, "{rep:?}");
    let far = RegionSpec::exterior(v(&[0.0, 0.0, 0.0]), 2.0 * ps);
    let rep = check_light_convexity(&chart, &far, &opts, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    assert!(rep.violations() > 0);
}
