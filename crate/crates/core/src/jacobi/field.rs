use nalgebra::{DMatrix, DVector};

use super::geodesic::GeodesicSample;
use crate::error::{Error, Result};
use crate::metric::{christoffel_at, riemann_at, SplittingChart};
use crate::ode;

/// Jacobi field value and covariant derivative at one parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct JacobiSample {
    pub s: f64,
    pub zeta: DVector<f64>,
    pub dzeta: DVector<f64>,
}

#[derive(Clone, Debug)]
pub struct JacobiSolution {
    pub samples: Vec<JacobiSample>,
}

/// Joint right-hand side for the geodesic and `m` Jacobi fields, stacked as
/// `(z, v, ζ_1, ω_1, .., ζ_m, ω_m)` with `ω = D_s ζ`:
/// `ζ' = ω - Γ(v, ζ)`, `ω' = -R(ζ, v) v - Γ(v, ω)`.
fn jacobi_rhs(
    chart: &SplittingChart,
    m: usize,
) -> impl Fn(&DVector<f64>) -> Result<DVector<f64>> + '_ {
    let n = chart.dim();
    move |y: &DVector<f64>| {
        let z = y.rows(0, n).into_owned();
        let v = y.rows(n, n).into_owned();
        let gam = christoffel_at(chart, &z)?;
        let riem = riemann_at(chart, &z)?;
        let mut out = DVector::zeros(y.len());
        out.rows_mut(0, n).copy_from(&v);
        out.rows_mut(n, n).copy_from(&(-gam.contract(&v, &v)));
        for i in 0..m {
            let off = 2 * n + 2 * n * i;
            let zeta = y.rows(off, n).into_owned();
            let omega = y.rows(off + n, n).into_owned();
            let dz = &omega - gam.contract(&v, &zeta);
            let dw = -riem.apply(&zeta, &v) - gam.contract(&v, &omega);
            out.rows_mut(off, n).copy_from(&dz);
            out.rows_mut(off + n, n).copy_from(&dw);
        }
        Ok(out)
    }
}

fn pack(smp: &GeodesicSample, fields: &[(DVector<f64>, DVector<f64>)]) -> DVector<f64> {
    let n = smp.z.len();
    let mut y = DVector::zeros(2 * n * (1 + fields.len()));
    y.rows_mut(0, n).copy_from(&smp.z);
    y.rows_mut(n, n).copy_from(&smp.v);
    for (i, (a, b)) in fields.iter().enumerate() {
        let off = 2 * n + 2 * n * i;
        y.rows_mut(off, n).copy_from(a);
        y.rows_mut(off + n, n).copy_from(b);
    }
    y
}

fn unpack(y: &DVector<f64>, n: usize, m: usize) -> Vec<(DVector<f64>, DVector<f64>)> {
    (0..m)
        .map(|i| {
            let off = 2 * n + 2 * n * i;
            (y.rows(off, n).into_owned(), y.rows(off + n, n).into_owned())
        })
        .collect()
}

/// Advances `m` fields one interval, starting the geodesic part from the
/// stored sample so the fields ride on exactly the recorded geodesic.
fn advance(
    chart: &SplittingChart,
    smp: &GeodesicSample,
    fields: &[(DVector<f64>, DVector<f64>)],
    h: f64,
) -> Result<Vec<(DVector<f64>, DVector<f64>)>> {
    let f = jacobi_rhs(chart, fields.len());
    let y = ode::rk4_step(&f, &pack(smp, fields), h)?;
    Ok(unpack(&y, smp.z.len(), fields.len()))
}

/// Integrates the Jacobi field with `ζ(0) = zeta0`, `D_s ζ(0) = dzeta0`
/// along the sampled geodesic, on the geodesic's own grid.
pub fn solve_jacobi(
    chart: &SplittingChart,
    geodesic: &[GeodesicSample],
    zeta0: &DVector<f64>,
    dzeta0: &DVector<f64>,
) -> Result<JacobiSolution> {
    let mut state = vec![(zeta0.clone(), dzeta0.clone())];
    let mut samples = vec![JacobiSample {
        s: geodesic[0].s,
        zeta: zeta0.clone(),
        dzeta: dzeta0.clone(),
    }];
    for w in geodesic.windows(2) {
        state = advance(chart, &w[0], &state, w[1].s - w[0].s)?;
        samples.push(JacobiSample {
            s: w[1].s,
            zeta: state[0].0.clone(),
            dzeta: state[0].1.clone(),
        });
    }
    Ok(JacobiSolution { samples })
}

/// Matrix Jacobi solution `J` with `J(0) = 0`, `D_s J(0) = I`, stored on the
/// geodesic grid.
#[derive(Clone, Debug)]
pub struct JacobiFrame {
    pub s: Vec<f64>,
    pub j: Vec<DMatrix<f64>>,
    pub dj: Vec<DMatrix<f64>>,
}

impl JacobiFrame {
    fn columns(&self, k: usize) -> Vec<(DVector<f64>, DVector<f64>)> {
        (0..self.j[k].ncols())
            .map(|c| (self.j[k].column(c).into_owned(), self.dj[k].column(c).into_owned()))
            .collect()
    }
}

fn to_matrices(cols: &[(DVector<f64>, DVector<f64>)]) -> (DMatrix<f64>, DMatrix<f64>) {
    let a: Vec<DVector<f64>> = cols.iter().map(|c| c.0.clone()).collect();
    let b: Vec<DVector<f64>> = cols.iter().map(|c| c.1.clone()).collect();
    (DMatrix::from_columns(&a), DMatrix::from_columns(&b))
}

pub fn jacobi_frame(chart: &SplittingChart, geodesic: &[GeodesicSample]) -> Result<JacobiFrame> {
    let n = chart.dim();
    let mut cols: Vec<(DVector<f64>, DVector<f64>)> = (0..n)
        .map(|i| {
            let mut e = DVector::zeros(n);
            e[i] = 1.0;
            (DVector::zeros(n), e)
        })
        .collect();
    let mut frame = JacobiFrame {
        s: vec![geodesic[0].s],
        j: vec![DMatrix::zeros(n, n)],
        dj: vec![DMatrix::identity(n, n)],
    };
    for w in geodesic.windows(2) {
        cols = advance(chart, &w[0], &cols, w[1].s - w[0].s)?;
        let (j, dj) = to_matrices(&cols);
        frame.s.push(w[1].s);
        frame.j.push(j);
        frame.dj.push(dj);
    }
    Ok(frame)
}

fn frame_at(
    chart: &SplittingChart,
    geodesic: &[GeodesicSample],
    frame: &JacobiFrame,
    s: f64,
) -> Result<DMatrix<f64>> {
    let k = frame.s.partition_point(|p| *p <= s).clamp(1, frame.s.len()) - 1;
    let h = s - frame.s[k];
    if h == 0.0 {
        return Ok(frame.j[k].clone());
    }
    let cols = advance(chart, &geodesic[k], &frame.columns(k), h)?;
    Ok(to_matrices(&cols).0)
}

/// A parameter where a nonzero Jacobi field vanishing at `s = 0` vanishes again.
#[derive(Clone, Debug, PartialEq)]
pub struct ConjugatePoint {
    pub s: f64,
    pub multiplicity: usize,
    /// `σ_min / σ_max` of the Jacobi matrix at `s`.
    pub residual: f64,
}

fn sv_ratio(j: &DMatrix<f64>) -> (f64, Vec<f64>) {
    let sv = j.clone().singular_values();
    let max = sv.max();
    if max == 0.0 {
        return (0.0, vec![0.0; sv.len()]);
    }
    let rel: Vec<f64> = sv.iter().map(|x| x / max).collect();
    (rel.iter().cloned().fold(f64::INFINITY, f64::min), rel)
}

/// Distance in `s` under which detections are merged and an endpoint
/// detection marks the geodesic degenerate.
pub const CONJUGATE_MERGE: f64 = 1e-4;

/// Largest grid ratio `σ_min/σ_max` still refined as a candidate.
const SCAN_DIP: f64 = 0.1;

/// Scans `σ_min/σ_max` of the Jacobi matrix for dips and sign changes of
/// `det J`, then refines each dip by golden-section search. A dip is
/// accepted when the ratio falls below `svd_tol`; its multiplicity is the
/// number of relative singular values below `sqrt(svd_tol)`.
pub fn conjugate_points(
    chart: &SplittingChart,
    geodesic: &[GeodesicSample],
    svd_tol: f64,
) -> Result<Vec<ConjugatePoint>> {
    let frame = jacobi_frame(chart, geodesic)?;
    let n = chart.dim();
    let k_last = frame.s.len() - 1;
    let ratios: Vec<f64> = frame
        .j
        .iter()
        .enumerate()
        .map(|(k, j)| if k == 0 { f64::INFINITY } else { sv_ratio(j).0 })
        .collect();
    let dets: Vec<f64> = frame.j.iter().map(|j| j.determinant()).collect();
    let mut brackets: Vec<(usize, usize)> = Vec::new();
    for k in 1..=k_last {
        let left = ratios[k - 1];
        let right = if k < k_last { ratios[k + 1] } else { f64::INFINITY };
        // flat stretches have roundoff-level local minima; only real dips count
        if ratios[k] <= left && ratios[k] <= right && ratios[k] < SCAN_DIP {
            brackets.push((k - 1, (k + 1).min(k_last)));
        }
        if k >= 2 && dets[k - 1].signum() != dets[k].signum() && dets[k - 1] != 0.0 {
            brackets.push((k - 1, k));
        }
    }
    let mut found: Vec<ConjugatePoint> = Vec::new();
    for (a, b) in brackets {
        let (s_a, s_b) = (frame.s[a], frame.s[b]);
        let eval = |s: f64| -> Result<f64> {
            Ok(sv_ratio(&frame_at(chart, geodesic, &frame, s)?).0)
        };
        let s_star = golden_min(eval, s_a, s_b)?;
        let (ratio, rel) = sv_ratio(&frame_at(chart, geodesic, &frame, s_star)?);
        if ratio < svd_tol {
            let mult_cut = svd_tol.sqrt();
            let multiplicity = rel.iter().filter(|r| **r < mult_cut).count().clamp(1, n - 1);
            found.push(ConjugatePoint {
                s: s_star,
                multiplicity,
                residual: ratio,
            });
        }
    }
    found.sort_by(|a, b| a.s.total_cmp(&b.s));
    let mut merged: Vec<ConjugatePoint> = Vec::new();
    for c in found {
        match merged.last_mut() {
            Some(prev) if (c.s - prev.s).abs() < CONJUGATE_MERGE => {
                if c.residual < prev.residual {
                    *prev = c;
                }
            }
            _ => merged.push(c),
        }
    }
    Ok(merged)
}

fn golden_min<F>(f: F, mut a: f64, mut b: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    // also consider the bracket ends: the minimum may sit on the endpoint s = 1
    let (fa, fb) = (f(a)?, f(b)?);
    for _ in 0..80 {
        if (b - a).abs() < 1e-14 * (1.0 + b.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d)?;
        }
    }
    let mid = 0.5 * (a + b);
    let fm = f(mid)?;
    let mut best = (mid, fm);
    for cand in [(a, fa), (b, fb)] {
        if cand.1 < best.1 {
            best = cand;
        }
    }
    Ok(best.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct IndexReport {
    /// Conjugate points strictly inside the parameter interval, with multiplicity.
    pub mu: usize,
    pub nondegenerate: bool,
    pub points: Vec<ConjugatePoint>,
}

/// Sums multiplicities of conjugate points in `(0, 1)`. A detection within
/// [`CONJUGATE_MERGE`] of the endpoint marks the geodesic degenerate and is
/// not counted.
pub fn geometric_index(points: &[ConjugatePoint], s_end: f64) -> IndexReport {
    let mut mu = 0;
    let mut nondegenerate = true;
    for p in points {
        if (s_end - p.s).abs() < CONJUGATE_MERGE {
            nondegenerate = false;
        } else if p.s < s_end {
            mu += p.multiplicity;
        }
    }
    IndexReport {
        mu,
        nondegenerate,
        points: points.to_vec(),
    }
}

pub(crate) fn check_grid(geodesic: &[GeodesicSample]) -> Result<()> {
    if geodesic.len() < 3 {
        return Err(Error::InvalidParams("geodesic needs at least three samples".into()));
    }
    Ok(())
}
