//! Several shortening runs from different initial curves, merged into a
//! deduplicated list sorted by arrival time.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_shortening, sample_path, ShorteningConfig, ShorteningRun};
use crate::causal::{lift_time_with, LightlikeCurve, SpatialPath};
use crate::error::{Error, Result};
use crate::jacobi::RefineOptions;
use crate::metric::{Event, ObserverCurve, RegionSpec, SplittingChart};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

/// How to build an initial spatial path from the source to the observer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StartHint {
    /// The coordinate chord.
    Straight,
    /// Through one point at distance `offset` from `center`, on the given
    /// side of the chord. `Left` is the side the chord itself passes on.
    Side {
        side: Side,
        center: Vec<f64>,
        offset: f64,
    },
    /// Through explicit intermediate points.
    Via { points: Vec<Vec<f64>> },
    /// Around `center` in the plane of the first two coordinates at
    /// `radius`, with `loops` extra full turns.
    Winding {
        center: Vec<f64>,
        radius: f64,
        loops: u32,
        #[serde(default)]
        clockwise: bool,
    },
}

fn perpendicular(chord: &DVector<f64>, toward: &DVector<f64>) -> DVector<f64> {
    let c = chord.normalize();
    let p = toward - &c * c.dot(toward);
    if p.norm() > 1e-12 * (1.0 + toward.norm()) {
        return p.normalize();
    }
    // chord passes through the center: use the first axis not along it
    for i in 0..chord.len() {
        let mut e = DVector::zeros(chord.len());
        e[i] = 1.0;
        let p = &e - &c * c.dot(&e);
        if p.norm() > 0.5 {
            return p.normalize();
        }
    }
    unreachable!("some axis is transverse to a unit vector")
}

pub fn initial_polyline(p: &Event, obs: &ObserverCurve, hint: &StartHint) -> Result<Vec<DVector<f64>>> {
    let a = p.x.clone();
    let b = obs.x_obs.clone();
    let n = a.len();
    let vec_of = |v: &[f64], what: &str| -> Result<DVector<f64>> {
        if v.len() != n {
            return Err(Error::InvalidParams(format!(
                "{what} has {} coordinates, expected {n}",
                v.len()
            )));
        }
        Ok(DVector::from_column_slice(v))
    };
    match hint {
        StartHint::Straight => Ok(vec![a, b]),
        StartHint::Via { points } => {
            let mut pts = vec![a];
            for v in points {
                pts.push(vec_of(v, "via point")?);
            }
            pts.push(b);
            Ok(pts)
        }
        StartHint::Side { side, center, offset } => {
            let c = vec_of(center, "center")?;
            let chord = &b - &a;
            if chord.norm() == 0.0 {
                return Err(Error::InvalidParams("source and observer coincide".into()));
            }
            let mid = (&a + &b) * 0.5;
            let perp = perpendicular(&chord, &(&mid - &c));
            let sign = match side {
                Side::Left => 1.0,
                Side::Right => -1.0,
            };
            Ok(vec![a, &c + perp * (sign * offset), b])
        }
        StartHint::Winding {
            center,
            radius,
            loops,
            clockwise,
        } => {
            if n < 2 {
                return Err(Error::InvalidParams("winding needs two coordinates".into()));
            }
            let c = vec_of(center, "center")?;
            let ang = |x: &DVector<f64>| (x[1] - c[1]).atan2(x[0] - c[0]);
            let tau = 2.0 * std::f64::consts::PI;
            let (ta, tb) = (ang(&a), ang(&b));
            let sweep = if *clockwise {
                -((ta - tb).rem_euclid(tau) + tau * *loops as f64)
            } else {
                (tb - ta).rem_euclid(tau) + tau * *loops as f64
            };
            let steps = ((sweep.abs() / (tau / 16.0)).ceil() as usize).max(2);
            let mut pts = vec![a.clone()];
            for k in 1..steps {
                let f = k as f64 / steps as f64;
                let th = ta + sweep * f;
                let mut x = &a + (&b - &a) * f;
                x[0] = c[0] + radius * th.cos();
                x[1] = c[1] + radius * th.sin();
                pts.push(x);
            }
            pts.push(b);
            Ok(pts)
        }
    }
}

/// Lightlike lift of the hinted polyline from the source event.
pub fn initial_curve(
    chart: &SplittingChart,
    p: &Event,
    obs: &ObserverCurve,
    hint: &StartHint,
    substeps: usize,
) -> Result<LightlikeCurve> {
    let pts = initial_polyline(p, obs, hint)?;
    // densify so the lift is accurate and the region guard sees the path
    let mut dense = vec![pts[0].clone()];
    for w in pts.windows(2) {
        for k in 1..=8 {
            dense.push(&w[0] + (&w[1] - &w[0]) * (k as f64 / 8.0));
        }
    }
    lift_time_with(chart, &SpatialPath::polyline(&dense)?, p.t, substeps)
}

/// The fixed data of one ray search.
#[derive(Clone, Debug)]
pub struct RayProblem {
    pub chart: SplittingChart,
    pub p: Event,
    pub observer: ObserverCurve,
    pub region: RegionSpec,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DedupOptions {
    /// Two rays are duplicates when their arrival times differ by less than
    /// `tau_tol` and their paths stay within `radius` of each other.
    pub tau_tol: f64,
    pub radius: f64,
}

#[derive(Debug)]
pub struct StartFailure {
    pub start: usize,
    pub error: Error,
}

#[derive(Debug, Default)]
pub struct MultiStartResult {
    /// Distinct rays sorted by arrival time, each with its start index.
    pub runs: Vec<(usize, ShorteningRun)>,
    /// `(dropped start, kept start)` pairs.
    pub duplicates: Vec<(usize, usize)>,
    pub failures: Vec<StartFailure>,
}

/// Runs the flow from every hint (in parallel), then drops duplicates in
/// start order and sorts by arrival time. The output does not depend on
/// scheduling.
pub fn multi_start(
    problem: &RayProblem,
    hints: &[StartHint],
    cfg: &ShorteningConfig,
    refine: &RefineOptions,
    dedup: DedupOptions,
) -> MultiStartResult {
    let outcomes: Vec<Result<ShorteningRun>> = hints
        .par_iter()
        .map(|hint| {
            let init = initial_curve(&problem.chart, &problem.p, &problem.observer, hint, cfg.lift_substeps)?;
            run_shortening(&problem.chart, &init, &problem.observer, &problem.region, cfg, refine)
        })
        .collect();
    let mut result = MultiStartResult::default();
    let mut kept: Vec<(usize, ShorteningRun, Vec<DVector<f64>>)> = Vec::new();
    for (i, out) in outcomes.into_iter().enumerate() {
        match out {
            Ok(run) => {
                let path = sample_path(&run.record, 200);
                let dup = kept.iter().find(|(_, other, other_path)| {
                    (other.record.tau - run.record.tau).abs() < dedup.tau_tol
                        && other_path
                            .iter()
                            .zip(&path)
                            .all(|(a, b)| (a - b).norm() < dedup.radius)
                });
                match dup {
                    Some((j, _, _)) => result.duplicates.push((i, *j)),
                    None => kept.push((i, run, path)),
                }
            }
            Err(error) => result.failures.push(StartFailure { start: i, error }),
        }
    }
    kept.sort_by(|a, b| a.1.record.tau.total_cmp(&b.1.record.tau).then(a.0.cmp(&b.0)));
    result.runs = kept.into_iter().map(|(i, r, _)| (i, r)).collect();
    result
}
