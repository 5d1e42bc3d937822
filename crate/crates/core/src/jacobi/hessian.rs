use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::geodesic::GeodesicSample;
use crate::error::{Error, Result};
use crate::metric::{christoffel_at, riemann_at, riemann_inner_with, SplittingChart};
use crate::ode;

/// Gram condition number above which the projected basis counts as degenerate.
pub const GRAM_CONDITION_LIMIT: f64 = 1e12;

#[derive(Clone, Debug)]
pub struct HessianReport {
    /// Symmetrized index-form matrix on the sine basis.
    pub matrix: DMatrix<f64>,
    /// `max |H - Hᵀ| / max |H|` before symmetrization.
    pub asymmetry: f64,
    pub gram_condition: f64,
    pub modes: usize,
}

/// Parallel transport of the coordinate frame along the sampled geodesic.
/// Column `a` of entry `k` is `e_a` transported from `s = 0` to `s_k`.
pub fn parallel_frame(chart: &SplittingChart, geodesic: &[GeodesicSample]) -> Result<Vec<DMatrix<f64>>> {
    let n = chart.dim();
    let rhs = |y: &DVector<f64>| -> Result<DVector<f64>> {
        let z = y.rows(0, n).into_owned();
        let v = y.rows(n, n).into_owned();
        let gam = christoffel_at(chart, &z)?;
        let mut out = DVector::zeros(y.len());
        out.rows_mut(0, n).copy_from(&v);
        out.rows_mut(n, n).copy_from(&(-gam.contract(&v, &v)));
        for a in 0..n {
            let off = 2 * n + n * a;
            let e = y.rows(off, n).into_owned();
            out.rows_mut(off, n).copy_from(&(-gam.contract(&v, &e)));
        }
        Ok(out)
    };
    let mut frames = vec![DMatrix::identity(n, n)];
    for w in geodesic.windows(2) {
        let p = frames.last().unwrap();
        let mut y = DVector::zeros(2 * n + n * n);
        y.rows_mut(0, n).copy_from(&w[0].z);
        y.rows_mut(n, n).copy_from(&w[0].v);
        for a in 0..n {
            y.rows_mut(2 * n + n * a, n).copy_from(&p.column(a));
        }
        let y = ode::rk4_step(&rhs, &y, w[1].s - w[0].s)?;
        let mut next = DMatrix::zeros(n, n);
        for a in 0..n {
            next.set_column(a, &y.rows(2 * n + n * a, n));
        }
        frames.push(next);
    }
    Ok(frames)
}

/// `g`-orthonormal vectors orthogonal to both `v` and `y` (the screen).
fn screen_basis(g: &DMatrix<f64>, v: &DVector<f64>, y: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
    let n = g.nrows();
    let b = DMatrix::from_columns(&[v.clone(), y.clone()]);
    let g2 = b.transpose() * g * &b;
    let g2inv = g2.try_inverse().ok_or(Error::BasisDegenerate {
        condition: f64::INFINITY,
    })?;
    let mut out: Vec<DVector<f64>> = Vec::new();
    for i in 0..n {
        let mut u = DVector::zeros(n);
        u[i] = 1.0;
        let mut w = &u - &b * (&g2inv * (b.transpose() * (g * &u)));
        for e in &out {
            let c = e.dot(&(g * &w));
            w -= e * c;
        }
        let norm2 = w.dot(&(g * &w));
        if norm2 > 1e-8 {
            out.push(w / norm2.sqrt());
        }
        if out.len() == n - 2 {
            break;
        }
    }
    if out.len() != n - 2 {
        return Err(Error::BasisDegenerate {
            condition: f64::INFINITY,
        });
    }
    Ok(out)
}

fn trapezoid(s: &[f64], f: &[f64]) -> f64 {
    s.windows(2)
        .zip(f.windows(2))
        .map(|(ds, fv)| 0.5 * (ds[1] - ds[0]) * (fv[0] + fv[1]))
        .sum()
}

/// Index-form matrix of the arrival time on variations `sin(kπs) e_a(s)`,
/// `k = 1..modes`, with `e_a` a parallel screen frame. Each field is
/// projected onto the admissible space by subtracting `μ Y`, where `Y` is the
/// parallel field equal to `W` at the endpoint and
/// `μ(s) = ∫_0^s g(D ζ, ż) / g(Y, ż)`.
pub fn hessian_matrix(
    chart: &SplittingChart,
    geodesic: &[GeodesicSample],
    modes: usize,
) -> Result<HessianReport> {
    super::field::check_grid(geodesic)?;
    let n = chart.dim();
    let frames = parallel_frame(chart, geodesic)?;
    let last = geodesic.len() - 1;
    let mut w_end = DVector::zeros(n);
    w_end[n - 1] = 1.0;
    let coeff_y = frames[last]
        .clone()
        .lu()
        .solve(&w_end)
        .ok_or(Error::BasisDegenerate {
            condition: f64::INFINITY,
        })?;
    let g0 = chart.metric_at(&geodesic[0].z)?;
    let screen0 = screen_basis(&g0, &geodesic[0].v, &(&frames[0] * &coeff_y))?;

    let s: Vec<f64> = geodesic.iter().map(|p| p.s).collect();
    let (s0, s1) = (s[0], s[last]);
    let span = s1 - s0;
    let mut metrics = Vec::with_capacity(geodesic.len());
    let mut riems = Vec::with_capacity(geodesic.len());
    for p in geodesic {
        metrics.push(chart.metric_at(&p.z)?);
        riems.push(riemann_at(chart, &p.z)?);
    }
    let ys: Vec<DVector<f64>> = frames.iter().map(|p| p * &coeff_y).collect();
    let c_vals: Vec<f64> = (0..geodesic.len())
        .map(|k| ys[k].dot(&(&metrics[k] * &geodesic[k].v)))
        .collect();

    // projected fields and derivatives, one Vec per basis element
    let mut zetas: Vec<Vec<DVector<f64>>> = Vec::new();
    let mut dzetas: Vec<Vec<DVector<f64>>> = Vec::new();
    for k in 1..=modes {
        let freq = k as f64 * std::f64::consts::PI;
        for e0 in &screen0 {
            let mut zeta = Vec::with_capacity(s.len());
            let mut dzeta = Vec::with_capacity(s.len());
            let mut weights = Vec::with_capacity(s.len());
            for (idx, p) in geodesic.iter().enumerate() {
                let u = (p.s - s0) / span;
                let e = &frames[idx] * e0;
                let z = &e * (freq * u).sin();
                let dz = &e * (freq * (freq * u).cos() / span);
                let w = dz.dot(&(&metrics[idx] * &p.v)) / c_vals[idx];
                zeta.push(z);
                dzeta.push(dz);
                weights.push(w);
            }
            let mut mu = 0.0;
            for idx in 0..s.len() {
                if idx > 0 {
                    mu += 0.5 * (s[idx] - s[idx - 1]) * (weights[idx - 1] + weights[idx]);
                }
                zeta[idx] -= &ys[idx] * mu;
                dzeta[idx] -= &ys[idx] * weights[idx];
            }
            zetas.push(zeta);
            dzetas.push(dzeta);
        }
    }
    let m = zetas.len();
    let curv: Vec<Vec<DVector<f64>>> = zetas
        .iter()
        .map(|zeta| {
            zeta.iter()
                .enumerate()
                .map(|(idx, z)| riems[idx].apply(z, &geodesic[idx].v))
                .collect()
        })
        .collect();
    let v_end = &geodesic[last].v;
    let g_w_v = (&metrics[last] * v_end)[n - 1];
    let factor = -1.0 / g_w_v;
    let mut h = DMatrix::zeros(m, m);
    let mut gram = DMatrix::zeros(m, m);
    let mut integrand = vec![0.0; s.len()];
    for i in 0..m {
        for j in 0..m {
            for idx in 0..s.len() {
                let g = &metrics[idx];
                integrand[idx] = dzetas[i][idx].dot(&(g * &dzetas[j][idx]))
                    - curv[i][idx].dot(&(g * &zetas[j][idx]));
            }
            h[(i, j)] = factor * trapezoid(&s, &integrand);
            if j >= i {
                for idx in 0..s.len() {
                    integrand[idx] = riemann_inner_with(&metrics[idx], &zetas[i][idx], &zetas[j][idx]);
                }
                let v = trapezoid(&s, &integrand);
                gram[(i, j)] = v;
                gram[(j, i)] = v;
            }
        }
    }
    let scale = h.amax().max(f64::MIN_POSITIVE);
    let asymmetry = (&h - h.transpose()).amax() / scale;
    let sym = (&h + h.transpose()) * 0.5;
    let eig = SymmetricEigen::new(gram).eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    let gram_condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if gram_condition > GRAM_CONDITION_LIMIT {
        return Err(Error::BasisDegenerate {
            condition: gram_condition,
        });
    }
    Ok(HessianReport {
        matrix: sym,
        asymmetry,
        gram_condition,
        modes,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct InertiaReport {
    /// Number of eigenvalues below `-inertia_tol · ||H||`.
    pub index: usize,
    pub eigenvalues: Vec<f64>,
    /// Some eigenvalue lies within `inertia_tol · ||H||` of zero.
    pub degenerate_warning: bool,
}

pub fn morse_index_numeric(h: &DMatrix<f64>, inertia_tol: f64) -> InertiaReport {
    let sym = (h + h.transpose()) * 0.5;
    let mut eigenvalues: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(f64::total_cmp);
    let norm = eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cut = inertia_tol * norm;
    InertiaReport {
        index: eigenvalues.iter().filter(|v| **v < -cut).count(),
        degenerate_warning: eigenvalues.iter().any(|v| v.abs() <= cut),
        eigenvalues,
    }
}
