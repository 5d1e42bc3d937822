//! Splitting charts: spacetime metrics of the form
//! `g = α_ij dx^i dx^j + 2 δ_i dx^i dt - dt²` on `Ω × R`.
//!
//! Coordinates are ordered `(x_1, .., x_{N-1}, t)`, so tangent vectors are
//! `N`-vectors whose last component is the time component. The reference
//! field `W = ∂_t` is the last coordinate vector. Derivatives of the metric
//! (Christoffel symbols, curvature) are central finite differences with the
//! chart's `fd_step`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type AlphaFn = Arc<dyn Fn(&DVector<f64>, f64) -> DMatrix<f64> + Send + Sync>;
pub type DeltaFn = Arc<dyn Fn(&DVector<f64>, f64) -> DVector<f64> + Send + Sync>;
pub type DomainFn = Arc<dyn Fn(&DVector<f64>, f64) -> bool + Send + Sync>;
pub type EventPredicate = Arc<dyn Fn(&Event) -> bool + Send + Sync>;

pub const CATALOG_NAMES: [&str; 5] = [
    "minkowski",
    "static_spherical",
    "conformally_stationary_demo",
    "product_sphere",
    "tabulated",
];

/// A spacetime event: spatial coordinates plus time.
#[derive(Clone, Debug, PartialEq)]
pub struct Event {
    pub x: DVector<f64>,
    pub t: f64,
}

impl Event {
    pub fn new(x: DVector<f64>, t: f64) -> Self {
        Event { x, t }
    }

    pub fn from_slice(x: &[f64], t: f64) -> Self {
        Event {
            x: DVector::from_column_slice(x),
            t,
        }
    }

    /// Full coordinate vector `(x, t)`.
    pub fn coords(&self) -> DVector<f64> {
        let n = self.x.len();
        let mut z = DVector::zeros(n + 1);
        z.rows_mut(0, n).copy_from(&self.x);
        z[n] = self.t;
        z
    }

    pub fn from_coords(z: &DVector<f64>) -> Self {
        let n = z.len() - 1;
        Event {
            x: z.rows(0, n).into_owned(),
            t: z[n],
        }
    }

    pub fn spatial_dim(&self) -> usize {
        self.x.len()
    }
}

#[derive(Clone)]
pub struct SplittingChart {
    name: String,
    dim: usize,
    alpha: AlphaFn,
    delta: DeltaFn,
    domain: DomainFn,
    fd_step: f64,
}

impl fmt::Debug for SplittingChart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SplittingChart")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("fd_step", &self.fd_step)
            .finish()
    }
}

impl SplittingChart {
    /// `dim` is the spacetime dimension N (at least 3).
    pub fn new(name: &str, dim: usize, alpha: AlphaFn, delta: DeltaFn) -> Result<Self> {
        if dim < 3 {
            return Err(Error::InvalidParams(format!(
                "spacetime dimension must be at least 3, got {dim}"
            )));
        }
        Ok(SplittingChart {
            name: name.to_string(),
            dim,
            alpha,
            delta,
            domain: Arc::new(|_, _| true),
            fd_step: 1e-4,
        })
    }

    pub fn with_domain(mut self, domain: DomainFn) -> Self {
        self.domain = domain;
        self
    }

    pub fn with_fd_step(mut self, h: f64) -> Self {
        self.fd_step = h;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spatial_dim(&self) -> usize {
        self.dim - 1
    }

    pub fn fd_step(&self) -> f64 {
        self.fd_step
    }

    pub fn contains(&self, e: &Event) -> bool {
        e.x.len() == self.dim - 1
            && e.t.is_finite()
            && e.x.iter().all(|v| v.is_finite())
            && (self.domain)(&e.x, e.t)
    }

    pub fn contains_coords(&self, z: &DVector<f64>) -> bool {
        let n = self.dim - 1;
        z.len() == self.dim
            && z.iter().all(|v| v.is_finite())
            && (self.domain)(&z.rows(0, n).into_owned(), z[n])
    }

    fn check(&self, x: &DVector<f64>, t: f64) -> Result<()> {
        if x.len() != self.dim - 1 || !t.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(out_of_domain(x, t));
        }
        if !(self.domain)(x, t) {
            return Err(out_of_domain(x, t));
        }
        Ok(())
    }

    pub fn alpha(&self, x: &DVector<f64>, t: f64) -> Result<DMatrix<f64>> {
        self.check(x, t)?;
        Ok((self.alpha)(x, t))
    }

    pub fn delta(&self, x: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        self.check(x, t)?;
        Ok((self.delta)(x, t))
    }

    /// Full metric matrix at coordinates `z = (x, t)`.
    pub fn metric_at(&self, z: &DVector<f64>) -> Result<DMatrix<f64>> {
        let n = self.dim - 1;
        let x = z.rows(0, n).into_owned();
        let t = z[n];
        self.check(&x, t)?;
        let a = (self.alpha)(&x, t);
        let d = (self.delta)(&x, t);
        let mut g = DMatrix::zeros(self.dim, self.dim);
        g.view_mut((0, 0), (n, n)).copy_from(&a);
        for i in 0..n {
            g[(i, n)] = d[i];
            g[(n, i)] = d[i];
        }
        g[(n, n)] = -1.0;
        Ok(g)
    }

    /// Checks symmetry and positive definiteness of `α` at one point.
    pub fn check_alpha(&self, x: &DVector<f64>, t: f64) -> Result<()> {
        let a = self.alpha(x, t)?;
        let scale = a.amax().max(f64::MIN_POSITIVE);
        if (&a - a.transpose()).amax() > 1e-12 * scale {
            return Err(Error::InvalidParams(format!(
                "alpha is not symmetric at {:?}",
                x.as_slice()
            )));
        }
        if a.clone().cholesky().is_none() {
            return Err(Error::DegenerateMetric {
                point: x.iter().copied().chain([t]).collect(),
            });
        }
        Ok(())
    }

    /// Time-reflected chart `t -> -t`: `α'(x,t) = α(x,-t)`, `δ'(x,t) = -δ(x,-t)`.
    /// Future-pointing curves of the reflection are past-pointing curves of
    /// the original with negated time.
    pub fn reflect_time(&self) -> SplittingChart {
        let alpha = self.alpha.clone();
        let delta = self.delta.clone();
        let domain = self.domain.clone();
        SplittingChart {
            name: format!("{}(past)", self.name),
            dim: self.dim,
            alpha: Arc::new(move |x, t| alpha(x, -t)),
            delta: Arc::new(move |x, t| -delta(x, -t)),
            domain: Arc::new(move |x, t| domain(x, -t)),
            fd_step: self.fd_step,
        }
    }
}

fn out_of_domain(x: &DVector<f64>, t: f64) -> Error {
    Error::OutOfDomain {
        point: x.iter().copied().chain([t]).collect(),
        s: None,
    }
}

/// `g(ζ, η)` at event `z`.
pub fn eval_metric(
    chart: &SplittingChart,
    z: &Event,
    zeta: &DVector<f64>,
    eta: &DVector<f64>,
) -> Result<f64> {
    let g = chart.metric_at(&z.coords())?;
    Ok(zeta.dot(&(g * eta)))
}

/// Riemannian inner product `g(ζ,η) + 2 g(W,ζ) g(W,η)` induced by `W = ∂_t`.
pub fn riemann_inner(
    chart: &SplittingChart,
    z: &Event,
    zeta: &DVector<f64>,
    eta: &DVector<f64>,
) -> Result<f64> {
    let g = chart.metric_at(&z.coords())?;
    Ok(riemann_inner_with(&g, zeta, eta))
}

pub(crate) fn riemann_inner_with(g: &DMatrix<f64>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let n = g.nrows() - 1;
    let ga = g * a;
    let wa = ga[n];
    let wb = g.row(n).transpose().dot(b);
    ga.dot(b) + 2.0 * wa * wb
}

pub(crate) fn riemann_norm_with(g: &DMatrix<f64>, a: &DVector<f64>) -> f64 {
    riemann_inner_with(g, a, a).max(0.0).sqrt()
}

/// Future-pointing lightlike completion `(ξ, θ)` of a spatial vector `ξ`.
pub fn null_completion(chart: &SplittingChart, z: &Event, xi: &DVector<f64>) -> Result<DVector<f64>> {
    null_completion_at(chart, &z.coords(), xi)
}

pub(crate) fn null_completion_at(
    chart: &SplittingChart,
    z: &DVector<f64>,
    xi: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n = chart.spatial_dim();
    let x = z.rows(0, n).into_owned();
    let t = z[n];
    let a = chart.alpha(&x, t)?;
    let d = chart.delta(&x, t)?;
    let theta = null_speed(&a, &d, xi);
    let mut v = DVector::zeros(n + 1);
    v.rows_mut(0, n).copy_from(xi);
    v[n] = theta;
    Ok(v)
}

/// `<δ,ξ> + sqrt(<δ,ξ>² + <αξ,ξ>)`, the time rate of a future lightlike
/// vector with spatial part `ξ`.
pub(crate) fn null_speed(a: &DMatrix<f64>, d: &DVector<f64>, xi: &DVector<f64>) -> f64 {
    let dx = d.dot(xi);
    let q = xi.dot(&(a * xi));
    let disc = (dx * dx + q).max(0.0);
    if disc == 0.0 {
        return 0.0;
    }
    dx + disc.sqrt()
}

/// Christoffel symbols of the second kind, stored as `Γ^k_ij`.
#[derive(Clone, Debug)]
pub struct Christoffel {
    n: usize,
    data: Vec<f64>,
}

impl Christoffel {
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.data[(k * self.n + i) * self.n + j]
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// `Γ(a, b)^k = Γ^k_ij a^i b^j`.
    pub fn contract(&self, a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        let mut out = DVector::zeros(n);
        for k in 0..n {
            let base = k * n * n;
            let mut acc = 0.0;
            for i in 0..n {
                let ai = a[i];
                if ai == 0.0 {
                    continue;
                }
                let row = &self.data[base + i * n..base + (i + 1) * n];
                let mut s = 0.0;
                for j in 0..n {
                    s += row[j] * b[j];
                }
                acc += ai * s;
            }
            out[k] = acc;
        }
        out
    }
}

pub fn christoffel(chart: &SplittingChart, z: &Event) -> Result<Christoffel> {
    christoffel_at(chart, &z.coords())
}

pub(crate) fn christoffel_at(chart: &SplittingChart, z: &DVector<f64>) -> Result<Christoffel> {
    let n = chart.dim();
    let h = chart.fd_step();
    let g = chart.metric_at(z)?;
    let ginv = g.clone().try_inverse().ok_or_else(|| Error::DegenerateMetric {
        point: z.iter().copied().collect(),
    })?;
    // dg[c] = ∂_c g
    let mut dg = Vec::with_capacity(n);
    for c in 0..n {
        let mut zp = z.clone();
        let mut zm = z.clone();
        zp[c] += h;
        zm[c] -= h;
        let gp = chart.metric_at(&zp)?;
        let gm = chart.metric_at(&zm)?;
        dg.push((gp - gm) / (2.0 * h));
    }
    // lowered symbols Γ_lij = ½ (∂_i g_lj + ∂_j g_li - ∂_l g_ij)
    let mut low = vec![0.0; n * n * n];
    for l in 0..n {
        for i in 0..n {
            for j in i..n {
                let v = 0.5 * (dg[i][(l, j)] + dg[j][(l, i)] - dg[l][(i, j)]);
                low[(l * n + i) * n + j] = v;
                low[(l * n + j) * n + i] = v;
            }
        }
    }
    let mut data = vec![0.0; n * n * n];
    for k in 0..n {
        for i in 0..n {
            for j in i..n {
                let mut s = 0.0;
                for l in 0..n {
                    s += ginv[(k, l)] * low[(l * n + i) * n + j];
                }
                data[(k * n + i) * n + j] = s;
                data[(k * n + j) * n + i] = s;
            }
        }
    }
    Ok(Christoffel { n, data })
}

/// Riemann tensor `R^a_bcd` with `R(∂_c, ∂_d)∂_b = R^a_bcd ∂_a`.
#[derive(Clone, Debug)]
pub struct RiemannTensor {
    n: usize,
    data: Vec<f64>,
}

impl RiemannTensor {
    pub fn get(&self, a: usize, b: usize, c: usize, d: usize) -> f64 {
        let n = self.n;
        self.data[((a * n + b) * n + c) * n + d]
    }

    /// `R(ζ, v) v`.
    pub fn apply(&self, zeta: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        let mut out = DVector::zeros(n);
        for a in 0..n {
            let mut acc = 0.0;
            for b in 0..n {
                if v[b] == 0.0 {
                    continue;
                }
                for c in 0..n {
                    if zeta[c] == 0.0 {
                        continue;
                    }
                    let base = ((a * n + b) * n + c) * n;
                    let mut s = 0.0;
                    for d in 0..n {
                        s += self.data[base + d] * v[d];
                    }
                    acc += v[b] * zeta[c] * s;
                }
            }
            out[a] = acc;
        }
        out
    }
}

pub(crate) fn riemann_at(chart: &SplittingChart, z: &DVector<f64>) -> Result<RiemannTensor> {
    let n = chart.dim();
    let h = chart.fd_step();
    let gam = christoffel_at(chart, z)?;
    let mut dgam = Vec::with_capacity(n);
    for c in 0..n {
        let mut zp = z.clone();
        let mut zm = z.clone();
        zp[c] += h;
        zm[c] -= h;
        let gp = christoffel_at(chart, &zp)?;
        let gm = christoffel_at(chart, &zm)?;
        let d: Vec<f64> = gp
            .data
            .iter()
            .zip(&gm.data)
            .map(|(p, m)| (p - m) / (2.0 * h))
            .collect();
        dgam.push(d);
    }
    let idx = |k: usize, i: usize, j: usize| (k * n + i) * n + j;
    let mut data = vec![0.0; n * n * n * n];
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    let mut r = dgam[c][idx(a, d, b)] - dgam[d][idx(a, c, b)];
                    for e in 0..n {
                        r += gam.get(a, c, e) * gam.get(e, d, b) - gam.get(a, d, e) * gam.get(e, c, b);
                    }
                    data[((a * n + b) * n + c) * n + d] = r;
                }
            }
        }
    }
    Ok(RiemannTensor { n, data })
}

/// `R(ζ, v) v` at event `z`.
pub fn curvature_apply(
    chart: &SplittingChart,
    z: &Event,
    zeta: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<DVector<f64>> {
    Ok(riemann_at(chart, &z.coords())?.apply(zeta, v))
}

/// The observer: the integral line of `W` over a fixed spatial point.
#[derive(Clone, Debug, PartialEq)]
pub struct ObserverCurve {
    pub x_obs: DVector<f64>,
    pub t_range: (f64, f64),
}

impl ObserverCurve {
    pub fn new(x_obs: DVector<f64>, t_range: (f64, f64)) -> Result<Self> {
        if !(t_range.0 < t_range.1) {
            return Err(Error::InvalidParams(format!(
                "observer time range ({}, {}) is empty",
                t_range.0, t_range.1
            )));
        }
        Ok(ObserverCurve { x_obs, t_range })
    }

    pub fn contains_time(&self, t: f64) -> bool {
        self.t_range.0 < t && t < self.t_range.1
    }
}

#[derive(Clone, Debug)]
pub struct BoundarySample {
    pub point: Event,
    /// Unit normal pointing out of the region, when known.
    pub normal: Option<DVector<f64>>,
}

/// A region `Λ` of the chart, tested event by event.
#[derive(Clone)]
pub struct RegionSpec {
    label: String,
    inside: EventPredicate,
    boundary: Vec<BoundarySample>,
}

impl fmt::Debug for RegionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RegionSpec")
            .field("label", &self.label)
            .field("boundary_samples", &self.boundary.len())
            .finish()
    }
}

const BOUNDARY_SAMPLES: usize = 96;

impl RegionSpec {
    pub fn custom(label: &str, inside: EventPredicate, boundary: Vec<BoundarySample>) -> Self {
        RegionSpec {
            label: label.to_string(),
            inside,
            boundary,
        }
    }

    /// The whole chart domain.
    pub fn everywhere() -> Self {
        RegionSpec::custom("everywhere", Arc::new(|_| true), Vec::new())
    }

    pub fn ball(center: DVector<f64>, radius: f64) -> Self {
        let c = center.clone();
        let boundary = sphere_points(center.len(), BOUNDARY_SAMPLES)
            .into_iter()
            .map(|u| BoundarySample {
                point: Event::new(&center + &u * radius, 0.0),
                normal: Some(u),
            })
            .collect();
        RegionSpec::custom(
            "ball",
            Arc::new(move |e| (&e.x - &c).norm() < radius),
            boundary,
        )
    }

    /// Spatial points strictly farther than `radius` from `center`.
    pub fn exterior(center: DVector<f64>, radius: f64) -> Self {
        let c = center.clone();
        let boundary = sphere_points(center.len(), BOUNDARY_SAMPLES)
            .into_iter()
            .map(|u| BoundarySample {
                point: Event::new(&center + &u * radius, 0.0),
                normal: Some(-u),
            })
            .collect();
        RegionSpec::custom(
            "exterior",
            Arc::new(move |e| (&e.x - &c).norm() > radius),
            boundary,
        )
    }

    pub fn annulus(center: DVector<f64>, r_inner: f64, r_outer: f64) -> Self {
        let c = center.clone();
        let mut boundary = Vec::new();
        for u in sphere_points(center.len(), BOUNDARY_SAMPLES) {
            boundary.push(BoundarySample {
                point: Event::new(&center + &u * r_inner, 0.0),
                normal: Some(-u.clone()),
            });
            boundary.push(BoundarySample {
                point: Event::new(&center + &u * r_outer, 0.0),
                normal: Some(u),
            });
        }
        RegionSpec::custom(
            "annulus",
            Arc::new(move |e| {
                let r = (&e.x - &c).norm();
                r > r_inner && r < r_outer
            }),
            boundary,
        )
    }

    /// Open axis-aligned box.
    pub fn boxed(lo: DVector<f64>, hi: DVector<f64>) -> Self {
        let n = lo.len();
        let mut boundary = Vec::new();
        let per_face = (BOUNDARY_SAMPLES / (2 * n)).max(1);
        for axis in 0..n {
            for (side, sign) in [(lo[axis], -1.0), (hi[axis], 1.0)] {
                for k in 0..per_face {
                    let mut x = (&lo + &hi) * 0.5;
                    // spread samples along the next axis of the face
                    if n > 1 {
                        let other = (axis + 1) % n;
                        let f = (k as f64 + 0.5) / per_face as f64;
                        x[other] = lo[other] + f * (hi[other] - lo[other]);
                    }
                    x[axis] = side;
                    let mut normal = DVector::zeros(n);
                    normal[axis] = sign;
                    boundary.push(BoundarySample {
                        point: Event::new(x, 0.0),
                        normal: Some(normal),
                    });
                }
            }
        }
        let (l, h) = (lo.clone(), hi.clone());
        RegionSpec::custom(
            "box",
            Arc::new(move |e| (0..l.len()).all(|i| e.x[i] > l[i] && e.x[i] < h[i])),
            boundary,
        )
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn contains(&self, e: &Event) -> bool {
        (self.inside)(e)
    }

    pub fn contains_coords(&self, z: &DVector<f64>) -> bool {
        (self.inside)(&Event::from_coords(z))
    }

    pub fn boundary_samples(&self) -> &[BoundarySample] {
        &self.boundary
    }
}

/// Deterministic, roughly uniform unit vectors in `R^dim`.
fn sphere_points(dim: usize, count: usize) -> Vec<DVector<f64>> {
    match dim {
        0 => Vec::new(),
        1 => vec![DVector::from_element(1, 1.0), DVector::from_element(1, -1.0)],
        2 => (0..count)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
                DVector::from_vec(vec![a.cos(), a.sin()])
            })
            .collect(),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
                    let r = (1.0 - z * z).sqrt();
                    let a = golden * k as f64;
                    DVector::from_vec(vec![r * a.cos(), r * a.sin(), z])
                })
                .collect()
        }
        _ => {
            let mut out = Vec::new();
            for i in 0..dim {
                for s in [1.0, -1.0] {
                    let mut u = DVector::zeros(dim);
                    u[i] = s;
                    out.push(u);
                }
            }
            out
        }
    }
}

/// Inline grid data for the `tabulated` chart. `alpha` holds one row-major
/// `(N-1)×(N-1)` matrix per node and `delta` one vector per node; nodes are
/// ordered with the last axis varying fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabulatedGrid {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub shape: Vec<usize>,
    pub alpha: Vec<Vec<f64>>,
    pub delta: Vec<Vec<f64>>,
}

/// Parameters accepted by [`catalog`]. Unused fields are ignored.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fd_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<TabulatedGrid>,
}

/// Builds a named chart.
pub fn catalog(name: &str, params: &ChartParams) -> Result<SplittingChart> {
    let chart = match name {
        "minkowski" => minkowski(params.dim.unwrap_or(3))?,
        "static_spherical" => static_spherical(
            params.dim.unwrap_or(4),
            params.mass.unwrap_or(0.0),
            params.r_min.ok_or_else(|| {
                Error::InvalidParams("static_spherical needs r_min".into())
            })?,
        )?,
        "conformally_stationary_demo" => {
            let dim = params.dim.unwrap_or(3);
            let d = match &params.delta {
                Some(d) => d.clone(),
                None => {
                    let mut d = vec![0.0; dim - 1];
                    d[0] = 0.3;
                    d
                }
            };
            stationary_demo(dim, d)?
        }
        "product_sphere" => {
            if params.dim.is_some_and(|d| d != 3) {
                return Err(Error::InvalidParams("product_sphere has dim 3".into()));
            }
            product_sphere(params.radius.unwrap_or(1.0))?
        }
        "tabulated" => tabulated(params.grid.as_ref().ok_or_else(|| {
            Error::InvalidParams("tabulated chart needs a grid".into())
        })?)?,
        _ => {
            return Err(Error::UnknownChart {
                name: name.to_string(),
                valid: CATALOG_NAMES.iter().map(|s| s.to_string()).collect(),
            })
        }
    };
    match params.fd_step {
        Some(h) if h > 0.0 && h.is_finite() => Ok(chart.with_fd_step(h)),
        Some(h) => Err(Error::InvalidParams(format!("fd_step must be positive, got {h}"))),
        None => Ok(chart),
    }
}

pub fn minkowski(dim: usize) -> Result<SplittingChart> {
    let n = dim.saturating_sub(1);
    SplittingChart::new(
        "minkowski",
        dim,
        Arc::new(move |_, _| DMatrix::identity(n, n)),
        Arc::new(move |_, _| DVector::zeros(n)),
    )
}

/// Optical index of a point mass in isotropic coordinates,
/// `n(r) = (1 + M/2r)³ / (1 - M/2r)`.
pub fn isotropic_index(mass: f64, r: f64) -> f64 {
    let u = mass / (2.0 * r);
    (1.0 + u).powi(3) / (1.0 - u)
}

/// Static spherically symmetric chart with `α = n(r)² I` on `r > r_min`.
pub fn static_spherical(dim: usize, mass: f64, r_min: f64) -> Result<SplittingChart> {
    if !(mass >= 0.0) || !mass.is_finite() {
        return Err(Error::InvalidParams(format!("mass must be >= 0, got {mass}")));
    }
    if !(r_min > 0.5 * mass) || !(r_min > 0.0) {
        return Err(Error::InvalidParams(format!(
            "r_min must exceed max(0, M/2) = {}, got {r_min}",
            0.5 * mass
        )));
    }
    let n = dim.saturating_sub(1);
    SplittingChart::new(
        "static_spherical",
        dim,
        Arc::new(move |x, _| {
            let r = x.norm();
            let k = isotropic_index(mass, r);
            DMatrix::identity(n, n) * (k * k)
        }),
        Arc::new(move |_, _| DVector::zeros(n)),
    )
    .map(|c| c.with_domain(Arc::new(move |x, _| x.norm() > r_min)))
}

pub fn stationary_demo(dim: usize, delta: Vec<f64>) -> Result<SplittingChart> {
    let n = dim.saturating_sub(1);
    if delta.len() != n {
        return Err(Error::InvalidParams(format!(
            "delta has {} entries, expected {n}",
            delta.len()
        )));
    }
    let d = DVector::from_vec(delta);
    SplittingChart::new(
        "conformally_stationary_demo",
        dim,
        Arc::new(move |_, _| DMatrix::identity(n, n)),
        Arc::new(move |_, _| d.clone()),
    )
}

/// `R × S²`: coordinates `(θ, φ, t)` with `α = ρ² diag(1, sin²θ)`.
pub fn product_sphere(radius: f64) -> Result<SplittingChart> {
    if !(radius > 0.0) {
        return Err(Error::InvalidParams(format!("radius must be positive, got {radius}")));
    }
    let r2 = radius * radius;
    SplittingChart::new(
        "product_sphere",
        3,
        Arc::new(move |x, _| {
            let s = x[0].sin();
            DMatrix::from_diagonal(&DVector::from_vec(vec![r2, r2 * s * s]))
        }),
        Arc::new(|_, _| DVector::zeros(2)),
    )
    .map(|c| c.with_domain(Arc::new(|x, _| x[0] > 1e-3 && x[0] < std::f64::consts::PI - 1e-3)))
}

pub fn tabulated(grid: &TabulatedGrid) -> Result<SplittingChart> {
    let n = grid.shape.len();
    if n < 2 || grid.lo.len() != n || grid.hi.len() != n {
        return Err(Error::InvalidParams(
            "tabulated grid needs matching lo/hi/shape of length >= 2".into(),
        ));
    }
    if grid.shape.iter().any(|&s| s < 2) {
        return Err(Error::InvalidParams("each grid axis needs at least 2 nodes".into()));
    }
    if (0..n).any(|i| !(grid.hi[i] > grid.lo[i])) {
        return Err(Error::InvalidParams("grid hi must exceed lo on every axis".into()));
    }
    let nodes: usize = grid.shape.iter().product();
    if grid.alpha.len() != nodes || grid.delta.len() != nodes {
        return Err(Error::InvalidParams(format!(
            "grid has {nodes} nodes but {} alpha and {} delta entries",
            grid.alpha.len(),
            grid.delta.len()
        )));
    }
    let mut alphas = Vec::with_capacity(nodes);
    let mut deltas = Vec::with_capacity(nodes);
    for (k, (a, d)) in grid.alpha.iter().zip(&grid.delta).enumerate() {
        if a.len() != n * n || d.len() != n {
            return Err(Error::InvalidParams(format!("grid node {k} has wrong sizes")));
        }
        let m = DMatrix::from_row_slice(n, n, a);
        if (&m - m.transpose()).amax() > 1e-12 * m.amax() || m.clone().cholesky().is_none() {
            return Err(Error::InvalidParams(format!(
                "alpha at grid node {k} is not symmetric positive definite"
            )));
        }
        alphas.push(m);
        deltas.push(DVector::from_column_slice(d));
    }
    let table = Arc::new(Table {
        lo: grid.lo.clone(),
        hi: grid.hi.clone(),
        shape: grid.shape.clone(),
        alphas,
        deltas,
    });
    let (ta, td, tb) = (table.clone(), table.clone(), table);
    SplittingChart::new(
        "tabulated",
        n + 1,
        Arc::new(move |x, _| ta.interp(x, |k| ta.alphas[k].clone())),
        Arc::new(move |x, _| td.interp(x, |k| td.deltas[k].clone())),
    )
    .map(|c| {
        c.with_domain(Arc::new(move |x, _| {
            (0..tb.lo.len()).all(|i| x[i] > tb.lo[i] && x[i] < tb.hi[i])
        }))
    })
}

struct Table {
    lo: Vec<f64>,
    hi: Vec<f64>,
    shape: Vec<usize>,
    alphas: Vec<DMatrix<f64>>,
    deltas: Vec<DVector<f64>>,
}

impl Table {
    /// Multilinear interpolation of per-node values.
    fn interp<T, F>(&self, x: &DVector<f64>, node: F) -> T
    where
        T: std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
        F: Fn(usize) -> T,
    {
        let n = self.shape.len();
        let mut base = vec![0usize; n];
        let mut frac = vec![0.0; n];
        for i in 0..n {
            let cells = (self.shape[i] - 1) as f64;
            let u = ((x[i] - self.lo[i]) / (self.hi[i] - self.lo[i]) * cells).clamp(0.0, cells);
            let b = (u.floor() as usize).min(self.shape[i] - 2);
            base[i] = b;
            frac[i] = u - b as f64;
        }
        let mut acc: Option<T> = None;
        for corner in 0..(1usize << n) {
            let mut w = 1.0;
            let mut flat = 0usize;
            for i in 0..n {
                let bit = (corner >> i) & 1;
                w *= if bit == 1 { frac[i] } else { 1.0 - frac[i] };
                flat = flat * self.shape[i] + base[i] + bit;
            }
            let term = node(flat) * w;
            acc = Some(match acc {
                Some(a) => a + term,
                None => term,
            });
        }
        acc.expect("grid has at least one corner")
    }
}
