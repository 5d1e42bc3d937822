use nalgebra::{DMatrix, DVector};

use crate::causal::LightlikeCurve;
use crate::error::{Error, Result};
use crate::metric::{
    christoffel_at, null_completion_at, riemann_norm_with, Event, ObserverCurve, SplittingChart,
};
use crate::ode::{self, AdaptiveOptions, Trajectory};

/// Geodesic state at parameter `s`: position `z` and velocity `v = ż`.
#[derive(Clone, Debug, PartialEq)]
pub struct GeodesicSample {
    pub s: f64,
    pub z: DVector<f64>,
    pub v: DVector<f64>,
}

impl GeodesicSample {
    pub fn event(&self) -> Event {
        Event::from_coords(&self.z)
    }
}

#[derive(Clone, Debug)]
pub struct GeodesicTrace {
    pub samples: Vec<GeodesicSample>,
    /// Parameter at which the integration left the chart domain.
    pub exited_at: Option<f64>,
}

/// Right-hand side of `z' = v`, `v' = -Γ(v, v)` on the stacked state `(z, v)`.
pub(crate) fn geodesic_rhs(chart: &SplittingChart) -> impl Fn(&DVector<f64>) -> Result<DVector<f64>> + '_ {
    let n = chart.dim();
    move |y: &DVector<f64>| {
        let z = y.rows(0, n).into_owned();
        let v = y.rows(n, n).into_owned();
        let gam = christoffel_at(chart, &z)?;
        let acc = gam.contract(&v, &v);
        let mut out = DVector::zeros(2 * n);
        out.rows_mut(0, n).copy_from(&v);
        out.rows_mut(n, n).copy_from(&(-acc));
        Ok(out)
    }
}

pub(crate) fn stack(z: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    let n = z.len();
    let mut y = DVector::zeros(2 * n);
    y.rows_mut(0, n).copy_from(z);
    y.rows_mut(n, n).copy_from(v);
    y
}

pub(crate) fn split(y: &DVector<f64>, n: usize) -> (DVector<f64>, DVector<f64>) {
    (y.rows(0, n).into_owned(), y.rows(n, n).into_owned())
}

/// `|g(v,v)| / ||v||_R²`, zero for the zero vector.
pub(crate) fn null_residual(g: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    let r = riemann_norm_with(g, v);
    if r == 0.0 {
        return 0.0;
    }
    v.dot(&(g * v)).abs() / (r * r)
}

fn check_future_null(chart: &SplittingChart, z: &DVector<f64>, v: &DVector<f64>) -> Result<()> {
    let g = chart.metric_at(z)?;
    let res = null_residual(&g, v);
    if res > 1e-10 {
        return Err(Error::NotNull { residual: res });
    }
    if (&g * v)[chart.dim() - 1] >= 0.0 {
        return Err(Error::NotFuturePointing);
    }
    Ok(())
}

/// Fixed-step RK4 integration of the null geodesic with initial data
/// `(z0, v0)` over `[0, length]`. Leaving the chart domain truncates the trace.
pub fn integrate_null_geodesic(
    chart: &SplittingChart,
    z0: &Event,
    v0: &DVector<f64>,
    length: f64,
    step: f64,
) -> Result<GeodesicTrace> {
    let z = z0.coords();
    check_future_null(chart, &z, v0)?;
    integrate_geodesic(chart, &z, v0, length, step)
}

/// Same as [`integrate_null_geodesic`] without the lightlike precondition.
pub fn integrate_geodesic(
    chart: &SplittingChart,
    z0: &DVector<f64>,
    v0: &DVector<f64>,
    length: f64,
    step: f64,
) -> Result<GeodesicTrace> {
    if !(length > 0.0) || !(step > 0.0) {
        return Err(Error::InvalidParams("length and step must be positive".into()));
    }
    let n = chart.dim();
    let f = geodesic_rhs(chart);
    let steps = (length / step).ceil().max(1.0) as usize;
    let h = length / steps as f64;
    let mut y = stack(z0, v0);
    let mut samples = vec![GeodesicSample {
        s: 0.0,
        z: z0.clone(),
        v: v0.clone(),
    }];
    for k in 0..steps {
        let s = if k + 1 == steps { length } else { (k + 1) as f64 * h };
        match ode::rk4_step(&f, &y, h) {
            Ok(next) if chart.contains_coords(&next.rows(0, n).into_owned()) => {
                y = next;
                let (z, v) = split(&y, n);
                samples.push(GeodesicSample { s, z, v });
            }
            Ok(_) | Err(Error::OutOfDomain { .. }) => {
                return Ok(GeodesicTrace {
                    samples,
                    exited_at: Some(k as f64 * h),
                })
            }
            Err(e) => return Err(e),
        }
    }
    Ok(GeodesicTrace {
        samples,
        exited_at: None,
    })
}

/// Options for Newton shooting onto a target spatial point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RefineOptions {
    /// Largest RK4 step in the affine parameter (the geodesic spans `[0, 1]`).
    pub max_step: f64,
    /// Local error tolerance of the step-doubling integrator.
    pub ode_tol: f64,
    /// Accepted endpoint miss, relative to `max(1, chord)`.
    pub miss_tol: f64,
    pub max_newton: usize,
}

impl Default for RefineOptions {
    fn default() -> Self {
        RefineOptions {
            max_step: 1e-3,
            ode_tol: 1e-12,
            miss_tol: 1e-11,
            max_newton: 50,
        }
    }
}

pub(crate) struct Shot {
    pub traj: Trajectory,
    pub miss: f64,
}

fn shoot_once(
    chart: &SplittingChart,
    z0: &DVector<f64>,
    xi: &DVector<f64>,
    opts: &RefineOptions,
) -> Result<Trajectory> {
    let v0 = null_completion_at(chart, z0, xi)?;
    let f = geodesic_rhs(chart);
    ode::integrate_adaptive(
        &f,
        stack(z0, &v0),
        1.0,
        AdaptiveOptions {
            tol: opts.ode_tol,
            h_max: opts.max_step,
            h_min: 1e-9,
        },
    )
}

fn endpoint_x(traj_end: &DVector<f64>, n_space: usize) -> DVector<f64> {
    traj_end.rows(0, n_space).into_owned()
}

/// Newton shooting over the initial spatial direction so that the null
/// geodesic from `z0` reaches the vertical line over `target` at `s = 1`.
/// The Jacobian is a forward difference replayed on the base step grid.
pub(crate) fn shoot_to(
    chart: &SplittingChart,
    z0: &DVector<f64>,
    xi0: DVector<f64>,
    target: &DVector<f64>,
    opts: &RefineOptions,
) -> Result<Shot> {
    let n = chart.spatial_dim();
    let scale = (&target.clone() - z0.rows(0, n)).norm().max(1.0);
    let tol = opts.miss_tol * scale;
    let f = geodesic_rhs(chart);
    let mut xi = xi0;
    let mut traj = shoot_once(chart, z0, &xi, opts)?;
    let mut resid = endpoint_x(traj.last(), n) - target;
    for it in 0..opts.max_newton {
        let miss = resid.norm();
        if miss <= tol {
            return Ok(Shot { traj, miss });
        }
        let steps = traj.steps();
        let base_v = null_completion_at(chart, z0, &xi)?;
        let base = ode::replay(&f, stack(z0, &base_v), &steps)?;
        let base_x = endpoint_x(&base, n);
        let mut jac = DMatrix::zeros(n, n);
        let h = 1e-7 * xi.norm().max(1e-12);
        for j in 0..n {
            let mut xp = xi.clone();
            xp[j] += h;
            let vp = null_completion_at(chart, z0, &xp)?;
            let yp = ode::replay(&f, stack(z0, &vp), &steps)?;
            jac.set_column(j, &((endpoint_x(&yp, n) - &base_x) / h));
        }
        let delta = jac.lu().solve(&(-&resid)).ok_or(Error::RefinementFailure {
            iterations: it,
            miss,
        })?;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let trial = &xi + &delta * lambda;
            if let Ok(tr) = shoot_once(chart, z0, &trial, opts) {
                let r = endpoint_x(tr.last(), n) - target;
                if r.norm() < miss {
                    xi = trial;
                    traj = tr;
                    resid = r;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(Error::RefinementFailure {
                iterations: it,
                miss,
            });
        }
    }
    let miss = resid.norm();
    if miss <= tol {
        return Ok(Shot { traj, miss });
    }
    Err(Error::RefinementFailure {
        iterations: opts.max_newton,
        miss,
    })
}

/// An affinely parameterized lightlike geodesic on `[0, 1]` from the source
/// event to the observer, with its analysis results once computed.
#[derive(Clone, Debug)]
pub struct GeodesicRecord {
    pub samples: Vec<GeodesicSample>,
    /// Arrival time on the observer.
    pub tau: f64,
    /// Spatial distance between the endpoint and the observer line.
    pub endpoint_residual: f64,
    /// Largest per-step defect of the samples against a finer re-integration
    /// of the geodesic equation, relative to `||ż||_R` and the step length.
    pub geodesic_residual: f64,
    /// Largest `|g(ż,ż)| / ||ż||_R²` over samples.
    pub null_residual: f64,
    pub conjugate_points: Vec<super::ConjugatePoint>,
    pub index: Option<usize>,
    pub nondegenerate: Option<bool>,
    pub diagnostics: Vec<String>,
}

impl GeodesicRecord {
    pub fn start(&self) -> Event {
        self.samples[0].event()
    }

    pub fn end(&self) -> Event {
        self.samples.last().unwrap().event()
    }

    /// Spatial position at parameter `s` by linear interpolation of samples.
    pub fn position_at(&self, s: f64) -> DVector<f64> {
        let k = self
            .samples
            .partition_point(|p| p.s <= s)
            .clamp(1, self.samples.len() - 1);
        let (a, b) = (&self.samples[k - 1], &self.samples[k]);
        let f = ((s - a.s) / (b.s - a.s)).clamp(0.0, 1.0);
        &a.z + (&b.z - &a.z) * f
    }
}

fn initial_direction(curve: &LightlikeCurve) -> Result<DVector<f64>> {
    let samples = curve.samples();
    let length: f64 = samples.windows(2).map(|w| (&w[1].z.x - &w[0].z.x).norm()).sum();
    for w in samples.windows(2) {
        let d = &w[1].z.x - &w[0].z.x;
        let norm = d.norm();
        if norm > 0.0 {
            return Ok(d * (length / norm));
        }
    }
    Err(Error::DegenerateCurve("curve has no spatial extent".into()))
}

/// Newton shooting from the start of `curve` onto the observer, seeded with
/// the curve's initial direction and coordinate length.
pub fn refine_geodesic(
    chart: &SplittingChart,
    curve: &LightlikeCurve,
    obs: &ObserverCurve,
    opts: &RefineOptions,
) -> Result<GeodesicRecord> {
    let z0 = curve.start().coords();
    let xi0 = initial_direction(curve)?;
    let shot = shoot_to(chart, &z0, xi0, &obs.x_obs, opts)?;
    let record = record_from_trajectory(chart, &shot.traj, shot.miss)?;
    if !obs.contains_time(record.tau) {
        return Err(Error::OutsideWorldline {
            t: record.tau,
            lo: obs.t_range.0,
            hi: obs.t_range.1,
        });
    }
    Ok(record)
}

pub(crate) fn record_from_trajectory(
    chart: &SplittingChart,
    traj: &Trajectory,
    miss: f64,
) -> Result<GeodesicRecord> {
    let n = chart.dim();
    let samples: Vec<GeodesicSample> = traj
        .s
        .iter()
        .zip(&traj.y)
        .map(|(s, y)| {
            let (z, v) = split(y, n);
            GeodesicSample { s: *s, z, v }
        })
        .collect();
    let f = geodesic_rhs(chart);
    let mut geo_res: f64 = 0.0;
    let mut null_res: f64 = 0.0;
    for (k, smp) in samples.iter().enumerate() {
        let g = chart.metric_at(&smp.z)?;
        null_res = null_res.max(null_residual(&g, &smp.v));
        if k + 1 == samples.len() {
            break;
        }
        let h = samples[k + 1].s - smp.s;
        let mut y = stack(&smp.z, &smp.v);
        for _ in 0..4 {
            y = ode::rk4_step(&f, &y, 0.25 * h)?;
        }
        let (dz, dv) = split(&(y - stack(&samples[k + 1].z, &samples[k + 1].v)), n);
        let speed = riemann_norm_with(&g, &smp.v).max(f64::MIN_POSITIVE);
        let defect = riemann_norm_with(&g, &dz).max(riemann_norm_with(&g, &dv)) / (speed * h);
        geo_res = geo_res.max(defect);
    }
    let tau = samples.last().unwrap().z[n - 1];
    Ok(GeodesicRecord {
        samples,
        tau,
        endpoint_residual: miss,
        geodesic_residual: geo_res,
        null_residual: null_res,
        conjugate_points: Vec::new(),
        index: None,
        nondegenerate: None,
        diagnostics: Vec::new(),
    })
}
