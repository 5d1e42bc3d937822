//! Spatial paths, their lightlike time lifts, and causal diagnostics.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::metric::{null_speed, riemann_norm_with, Event, ObserverCurve, SplittingChart};

/// RK4 substeps per path edge used by [`lift_time`].
pub const DEFAULT_SUBSTEPS: usize = 4;

/// A piecewise-linear spatial path sampled at increasing parameters in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialPath {
    samples: Vec<(f64, DVector<f64>)>,
}

impl SpatialPath {
    pub fn new(samples: Vec<(f64, DVector<f64>)>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::DegenerateCurve("a path needs at least two samples".into()));
        }
        let dim = samples[0].1.len();
        for w in samples.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::DegenerateCurve(format!(
                    "path parameters must increase ({} then {})",
                    w[0].0, w[1].0
                )));
            }
            if w[1].1.len() != dim {
                return Err(Error::DegenerateCurve("mixed sample dimensions".into()));
            }
        }
        Ok(SpatialPath { samples })
    }

    /// Polyline through `points`, parameterized by cumulative chord length.
    pub fn polyline(points: &[DVector<f64>]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::DegenerateCurve("a polyline needs two points".into()));
        }
        let mut cum = vec![0.0];
        for w in points.windows(2) {
            cum.push(cum.last().unwrap() + (&w[1] - &w[0]).norm());
        }
        let total = *cum.last().unwrap();
        let n = points.len();
        let params: Vec<f64> = if total > 0.0 && cum.windows(2).all(|w| w[1] > w[0]) {
            cum.iter().map(|c| c / total).collect()
        } else {
            (0..n).map(|k| k as f64 / (n - 1) as f64).collect()
        };
        SpatialPath::new(params.into_iter().zip(points.iter().cloned()).collect())
    }

    pub fn samples(&self) -> &[(f64, DVector<f64>)] {
        &self.samples
    }

    pub fn start(&self) -> &DVector<f64> {
        &self.samples[0].1
    }

    pub fn end(&self) -> &DVector<f64> {
        &self.samples.last().unwrap().1
    }

    /// Linear interpolation at parameter `s`.
    pub fn at(&self, s: f64) -> DVector<f64> {
        let k = self
            .samples
            .partition_point(|(p, _)| *p <= s)
            .clamp(1, self.samples.len() - 1);
        let (s0, x0) = &self.samples[k - 1];
        let (s1, x1) = &self.samples[k];
        let f = ((s - s0) / (s1 - s0)).clamp(0.0, 1.0);
        x0 + (x1 - x0) * f
    }

    /// Euclidean coordinate length.
    pub fn coordinate_length(&self) -> f64 {
        self.samples
            .windows(2)
            .map(|w| (&w[1].1 - &w[0].1).norm())
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurveSample {
    pub s: f64,
    pub z: Event,
}

/// A piecewise-linear curve in spacetime, usually lightlike.
#[derive(Clone, Debug, PartialEq)]
pub struct LightlikeCurve {
    samples: Vec<CurveSample>,
}

impl LightlikeCurve {
    pub fn new(samples: Vec<CurveSample>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::DegenerateCurve("a curve needs two samples".into()));
        }
        if samples.windows(2).any(|w| !(w[1].s > w[0].s)) {
            return Err(Error::DegenerateCurve("curve parameters must increase".into()));
        }
        Ok(LightlikeCurve { samples })
    }

    /// The constant curve at `z` over `[s0, s1]`.
    pub fn constant(z: Event, s0: f64, s1: f64) -> Self {
        LightlikeCurve {
            samples: vec![CurveSample { s: s0, z: z.clone() }, CurveSample { s: s1, z }],
        }
    }

    /// Joins curves whose parameter ranges abut.
    pub fn concat(parts: &[LightlikeCurve]) -> Result<Self> {
        let mut samples: Vec<CurveSample> = Vec::new();
        for part in parts {
            for smp in &part.samples {
                match samples.last() {
                    Some(last) if smp.s <= last.s => continue,
                    _ => samples.push(smp.clone()),
                }
            }
        }
        LightlikeCurve::new(samples)
    }

    pub fn samples(&self) -> &[CurveSample] {
        &self.samples
    }

    pub fn start(&self) -> &Event {
        &self.samples[0].z
    }

    pub fn end(&self) -> &Event {
        &self.samples.last().unwrap().z
    }

    /// Time coordinate of the endpoint.
    pub fn end_time(&self) -> f64 {
        self.end().t
    }

    pub fn spatial_path(&self) -> Result<SpatialPath> {
        SpatialPath::new(self.samples.iter().map(|c| (c.s, c.z.x.clone())).collect())
    }

    /// Reparameterizes onto `[a, b]` by an affine map of the current parameter.
    pub fn rescaled(&self, a: f64, b: f64) -> Self {
        let s0 = self.samples[0].s;
        let s1 = self.samples.last().unwrap().s;
        LightlikeCurve {
            samples: self
                .samples
                .iter()
                .map(|c| CurveSample {
                    s: a + (b - a) * (c.s - s0) / (s1 - s0),
                    z: c.z.clone(),
                })
                .collect(),
        }
    }

    /// Riemannian length, trapezoid rule on `||ż||_R` per piece.
    pub fn riemann_length(&self, chart: &SplittingChart) -> Result<f64> {
        Ok(self.riemann_pieces(chart)?.iter().sum())
    }

    pub(crate) fn riemann_pieces(&self, chart: &SplittingChart) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.samples.len() - 1);
        let mut g_prev = chart.metric_at(&self.samples[0].z.coords())?;
        for w in self.samples.windows(2) {
            let dz = w[1].z.coords() - w[0].z.coords();
            let g_next = chart.metric_at(&w[1].z.coords())?;
            if dz.iter().all(|v| *v == 0.0) {
                out.push(0.0);
            } else {
                out.push(0.5 * (riemann_norm_with(&g_prev, &dz) + riemann_norm_with(&g_next, &dz)));
            }
            g_prev = g_next;
        }
        Ok(out)
    }
}

/// Lifts a spatial path to the future lightlike curve starting at time `t0`.
pub fn lift_time(chart: &SplittingChart, path: &SpatialPath, t0: f64) -> Result<LightlikeCurve> {
    lift_time_with(chart, path, t0, DEFAULT_SUBSTEPS)
}

pub fn lift_time_with(
    chart: &SplittingChart,
    path: &SpatialPath,
    t0: f64,
    substeps: usize,
) -> Result<LightlikeCurve> {
    lift_edges(chart, path, t0, substeps, |a, d, _g, xdot| null_speed(a, d, xdot))
}

fn lift_edges<R>(
    chart: &SplittingChart,
    path: &SpatialPath,
    t0: f64,
    substeps: usize,
    rate: R,
) -> Result<LightlikeCurve>
where
    R: Fn(&DMatrix<f64>, &DVector<f64>, &DMatrix<f64>, &DVector<f64>) -> f64,
{
    let m = substeps.max(1);
    if path.start().len() != chart.spatial_dim() {
        return Err(Error::InvalidParams(format!(
            "path has {} spatial coordinates, chart has {}",
            path.start().len(),
            chart.spatial_dim()
        )));
    }
    let eval = |x: &DVector<f64>, t: f64, xdot: &DVector<f64>, s: f64| -> Result<f64> {
        let mut z = DVector::zeros(x.len() + 1);
        z.rows_mut(0, x.len()).copy_from(x);
        z[x.len()] = t;
        let g = chart.metric_at(&z).map_err(|e| crate::ode::with_param(e, s))?;
        let n = x.len();
        let a = g.view((0, 0), (n, n)).into_owned();
        let d = g.view((0, n), (n, 1)).column(0).into_owned();
        Ok(rate(&a, &d, &g, xdot))
    };
    let first = &path.samples()[0];
    let mut t = t0;
    let mut samples = vec![CurveSample {
        s: first.0,
        z: Event::new(first.1.clone(), t),
    }];
    eval(&first.1, t, &DVector::zeros(first.1.len()), first.0)?;
    for w in path.samples().windows(2) {
        let (sa, xa) = (&w[0].0, &w[0].1);
        let (sb, xb) = (&w[1].0, &w[1].1);
        let xdot = (xb - xa) / (sb - sa);
        let still = xdot.iter().all(|v| *v == 0.0);
        let h = (sb - sa) / m as f64;
        for k in 0..m {
            let s = sa + k as f64 * h;
            let s_next = if k + 1 == m { *sb } else { s + h };
            let at = |u: f64| xa + &xdot * (u - sa);
            if !still {
                let k1 = eval(&at(s), t, &xdot, s)?;
                let k2 = eval(&at(s + 0.5 * h), t + 0.5 * h * k1, &xdot, s + 0.5 * h)?;
                let k3 = eval(&at(s + 0.5 * h), t + 0.5 * h * k2, &xdot, s + 0.5 * h)?;
                let k4 = eval(&at(s + h), t + h * k3, &xdot, s + h)?;
                t += h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
            }
            let x = if k + 1 == m { xb.clone() } else { at(s_next) };
            eval(&x, t, &xdot, s_next)?;
            samples.push(CurveSample {
                s: s_next,
                z: Event::new(x, t),
            });
        }
    }
    LightlikeCurve::new(samples)
}

/// Arrival time at the observer, after checking the endpoint sits on it.
pub fn arrival_time(curve: &LightlikeCurve, obs: &ObserverCurve, snap_tol: f64) -> Result<f64> {
    let end = curve.end();
    let miss = (&end.x - &obs.x_obs).amax();
    if !(miss <= snap_tol) {
        return Err(Error::NotOnObserver {
            endpoint: end.x.iter().copied().collect(),
            observer: obs.x_obs.iter().copied().collect(),
        });
    }
    if !obs.contains_time(end.t) {
        return Err(Error::OutsideWorldline {
            t: end.t,
            lo: obs.t_range.0,
            hi: obs.t_range.1,
        });
    }
    Ok(end.t)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CausalReport {
    /// Largest `|g(ż,ż)| / ||ż||_R²` over pieces of the curve.
    pub max_null_residual: f64,
    /// True when every moving piece has `g(ż, W) < 0`.
    pub future_pointing: bool,
}

impl CausalReport {
    pub fn is_lightlike(&self, tol: f64) -> bool {
        self.max_null_residual <= tol && self.future_pointing
    }
}

/// Checks null and future-pointing character piece by piece, using the
/// chord of each piece and the metric at its midpoint.
pub fn causal_character(chart: &SplittingChart, curve: &LightlikeCurve) -> Result<CausalReport> {
    let mut worst: f64 = 0.0;
    let mut future = true;
    let n = chart.spatial_dim();
    for w in curve.samples().windows(2) {
        let za = w[0].z.coords();
        let zb = w[1].z.coords();
        let dz = (&zb - &za) / (w[1].s - w[0].s);
        if dz.iter().all(|v| *v == 0.0) {
            continue;
        }
        let g = chart.metric_at(&((&za + &zb) * 0.5))?;
        let norm = riemann_norm_with(&g, &dz);
        if norm == 0.0 {
            continue;
        }
        let gdz = &g * &dz;
        worst = worst.max((gdz.dot(&dz)).abs() / (norm * norm));
        if gdz[n] >= 0.0 {
            future = false;
        }
    }
    Ok(CausalReport {
        max_null_residual: worst,
        future_pointing: future,
    })
}

/// Relabels the parameter so that `g(Y, ż)` is constant, with `Y = W` when
/// no field is given.
pub fn normalize_parameterization(
    chart: &SplittingChart,
    curve: &LightlikeCurve,
    field: Option<&dyn Fn(&Event) -> DVector<f64>>,
) -> Result<LightlikeCurve> {
    let dim = chart.dim();
    let mut weights = Vec::with_capacity(curve.samples().len() - 1);
    for w in curve.samples().windows(2) {
        let za = w[0].z.coords();
        let zb = w[1].z.coords();
        let dz = &zb - &za;
        let mid = (&za + &zb) * 0.5;
        let g = chart.metric_at(&mid)?;
        let y = match field {
            Some(f) => f(&Event::from_coords(&mid)),
            None => {
                let mut e = DVector::zeros(dim);
                e[dim - 1] = 1.0;
                e
            }
        };
        weights.push((y.dot(&(g * dz))).abs());
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateCurve(
            "g(Y, ż) vanishes along the whole curve".into(),
        ));
    }
    let mut acc = 0.0;
    let mut samples = vec![CurveSample {
        s: 0.0,
        z: curve.samples()[0].z.clone(),
    }];
    for (w, smp) in weights.iter().zip(&curve.samples()[1..]) {
        acc += w;
        // keep parameters strictly increasing across constant pieces
        if *w == 0.0 {
            continue;
        }
        samples.push(CurveSample {
            s: (acc / total).min(1.0),
            z: smp.z.clone(),
        });
    }
    samples.last_mut().unwrap().s = 1.0;
    LightlikeCurve::new(samples)
}

/// Lift along the flow of `W` from `(x(0), t0)` using the general null-root
/// formula `σ' = -(g(Y,ẏ) + sqrt(g(Y,ẏ)² - g(Y,Y) g(ẏ,ẏ))) / g(Y,Y)` with
/// `Y = W`, cross-checked against [`lift_time`].
pub fn global_lift(chart: &SplittingChart, path: &SpatialPath, t0: f64) -> Result<LightlikeCurve> {
    let general = lift_edges(chart, path, t0, DEFAULT_SUBSTEPS, |_a, _d, g, xdot| {
        let n = xdot.len();
        let mut ydot = DVector::zeros(n + 1);
        ydot.rows_mut(0, n).copy_from(xdot);
        let gy = g * &ydot;
        let yy = g[(n, n)];
        let yd = gy[n];
        let dd = gy.dot(&ydot);
        let disc = (yd * yd - yy * dd).max(0.0);
        if disc == 0.0 && yd == 0.0 {
            return 0.0;
        }
        -(yd + disc.sqrt()) / yy
    })?;
    let direct = lift_time(chart, path, t0)?;
    let diff = (general.end_time() - direct.end_time()).abs();
    if diff > 1e-9 * (1.0 + direct.end_time().abs()) {
        return Err(Error::LiftMismatch { diff });
    }
    Ok(general)
}
