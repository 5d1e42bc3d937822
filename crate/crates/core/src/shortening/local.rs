//! Local minimizers of the arrival time between an event and a nearby
//! vertical line.

use nalgebra::DVector;

use super::ShorteningConfig;
use crate::causal::{lift_time_with, CurveSample, LightlikeCurve, SpatialPath};
use crate::error::{Error, Result};
use crate::jacobi::{shoot_to, RefineOptions};
use crate::metric::{Event, SplittingChart};

/// One piece of a shortening curve.
#[derive(Clone, Debug)]
pub struct Segment {
    pub curve: LightlikeCurve,
    /// Geodesic velocity at the ends, absent for constant or fallback pieces.
    pub start_tangent: Option<DVector<f64>>,
    pub end_tangent: Option<DVector<f64>>,
    /// True when shooting failed and the coarse polyline lift was kept.
    pub fallback: bool,
}

impl Segment {
    pub fn is_constant(&self) -> bool {
        self.curve.start() == self.curve.end()
    }
}

fn nodes_path(q: &DVector<f64>, nodes: &DVector<f64>, target: &DVector<f64>) -> Result<SpatialPath> {
    let n = q.len();
    let m = nodes.len() / n;
    let mut pts = Vec::with_capacity(m + 2);
    pts.push(q.clone());
    for j in 0..m {
        pts.push(nodes.rows(j * n, n).into_owned());
    }
    pts.push(target.clone());
    SpatialPath::polyline(&pts)
}

struct Coarse {
    nodes: DVector<f64>,
    straight_tau: f64,
    curve: LightlikeCurve,
}

/// Damped gradient descent of the lifted arrival time over the interior
/// nodes of a polyline, started from the straight chord.
fn coarse_descent(
    chart: &SplittingChart,
    q: &Event,
    target: &DVector<f64>,
    cfg: &ShorteningConfig,
) -> Result<Coarse> {
    let n = q.x.len();
    let m = cfg.local_min_grid;
    let chord = (target - &q.x).norm();
    let mut y = DVector::zeros(m * n);
    for j in 0..m {
        let f = (j + 1) as f64 / (m + 1) as f64;
        y.rows_mut(j * n, n).copy_from(&(&q.x + (target - &q.x) * f));
    }
    let arrival = |y: &DVector<f64>| -> Result<f64> {
        let path = nodes_path(&q.x, y, target)?;
        Ok(lift_time_with(chart, &path, q.t, cfg.lift_substeps)?.end_time())
    };
    let straight_tau = arrival(&y)?;
    let mut fy = straight_tau;
    let mut step = 0.1 * chord / (m + 1) as f64;
    let hg = 1e-6 * chord.max(1e-12);
    for _ in 0..cfg.descent_iters {
        if m == 0 {
            break;
        }
        let mut grad = DVector::zeros(m * n);
        let mut ok = true;
        for i in 0..m * n {
            let mut yp = y.clone();
            let mut ym = y.clone();
            yp[i] += hg;
            ym[i] -= hg;
            match (arrival(&yp), arrival(&ym)) {
                (Ok(a), Ok(b)) => grad[i] = (a - b) / (2.0 * hg),
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        let gnorm = grad.norm();
        // below this the difference quotients are roundoff
        let noise = 1e3 * f64::EPSILON * (1.0 + fy.abs()) / hg;
        if !ok || gnorm < noise {
            break;
        }
        let dir = -&grad / gnorm;
        let mut accepted = false;
        for _ in 0..30 {
            let trial = &y + &dir * step;
            if let Ok(ft) = arrival(&trial) {
                if ft <= fy - 1e-4 * step * gnorm {
                    y = trial;
                    fy = ft;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        step *= 2.0;
    }
    let curve = lift_time_with(chart, &nodes_path(&q.x, &y, target)?, q.t, cfg.lift_substeps)?;
    Ok(Coarse {
        nodes: y,
        straight_tau,
        curve,
    })
}

pub(crate) fn minimize_segment(
    chart: &SplittingChart,
    q: &Event,
    target: &DVector<f64>,
    range: (f64, f64),
    cfg: &ShorteningConfig,
) -> Result<Segment> {
    let chord = (target - &q.x).norm();
    if chord <= 1e-14 * (1.0 + q.x.norm()) {
        let mut end = q.clone();
        end.x = target.clone();
        let mut curve = LightlikeCurve::constant(q.clone(), range.0, range.1);
        if end != *q {
            curve = LightlikeCurve::new(vec![
                CurveSample { s: range.0, z: q.clone() },
                CurveSample { s: range.1, z: end },
            ])?;
        }
        return Ok(Segment {
            curve,
            start_tangent: None,
            end_tangent: None,
            fallback: false,
        });
    }
    let coarse = coarse_descent(chart, q, target, cfg)?;
    let n = q.x.len();
    let first = coarse.nodes.rows(0, n).into_owned();
    let first_leg = if cfg.local_min_grid > 0 { &first - &q.x } else { target - &q.x };
    let path_len = coarse.curve.spatial_path()?.coordinate_length();
    let xi0 = if first_leg.norm() > 0.0 {
        &first_leg * (path_len / first_leg.norm())
    } else {
        (target - &q.x).clone()
    };
    let opts = RefineOptions {
        max_step: cfg.segment_max_step,
        ode_tol: 1e-12,
        miss_tol: cfg.shooting_tol,
        max_newton: 30,
    };
    let fallback = |reason: String| -> Result<Segment> {
        Err(Error::LocalMinimizerFailure {
            reason,
            fallback: Box::new(coarse.curve.rescaled(range.0, range.1)),
        })
    };
    let z0 = q.coords();
    let shot = match shoot_to(chart, &z0, xi0, target, &opts) {
        Ok(shot) => shot,
        Err(e) => return fallback(format!("shooting failed: {e}")),
    };
    let dim = chart.dim();
    let tau = shot.traj.last()[dim - 1];
    let slack = 1e-8 * (1.0 + (coarse.straight_tau - q.t).abs());
    if tau > coarse.straight_tau + slack {
        return fallback(format!(
            "shot geodesic arrives at {tau}, later than the straight lift {}",
            coarse.straight_tau
        ));
    }
    let span = range.1 - range.0;
    let mut samples: Vec<CurveSample> = shot
        .traj
        .s
        .iter()
        .zip(&shot.traj.y)
        .map(|(s, y)| CurveSample {
            s: range.0 + span * s,
            z: Event::from_coords(&y.rows(0, dim).into_owned()),
        })
        .collect();
    // land exactly on the target line
    samples.last_mut().unwrap().z.x = target.clone();
    samples.last_mut().unwrap().s = range.1;
    let v_start = shot.traj.y[0].rows(dim, dim).into_owned();
    let v_end = shot.traj.last().rows(dim, dim).into_owned();
    Ok(Segment {
        curve: LightlikeCurve::new(samples)?,
        start_tangent: Some(v_start),
        end_tangent: Some(v_end),
        fallback: false,
    })
}

/// Local minimizer of the arrival time from `q` to the vertical line over
/// `target_x`, parameterized on `range`. A failed shooting stage returns
/// [`Error::LocalMinimizerFailure`] carrying the coarse polyline lift.
pub fn local_fermat_minimizer(
    chart: &SplittingChart,
    q: &Event,
    target_x: &DVector<f64>,
    range: (f64, f64),
    cfg: &ShorteningConfig,
) -> Result<LightlikeCurve> {
    minimize_segment(chart, q, target_x, range, cfg).map(|s| s.curve)
}
