//! Monte Carlo probe of light convexity of a region.
//!
//! Two tests, both sampled near the boundary: local minimizers between
//! pairs of nearby interior points must stay inside, and null geodesics
//! launched just inside the boundary, nearly tangent and tilted slightly
//! outward, must not re-enter after leaving. Any hit is a witness of non-convexity; no hits is evidence, not
//! proof.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use super::local::minimize_segment;
use super::ShorteningConfig;
use crate::error::Result;
use crate::jacobi::integrate_geodesic;
use crate::metric::{null_completion, Event, RegionSpec, SplittingChart};

#[derive(Clone, Debug, PartialEq)]
pub struct ConvexityOptions {
    /// Trials of each kind.
    pub samples: usize,
    /// Radius of the sampling balls around boundary points.
    pub rho_star: f64,
    /// Parameter length of each grazing geodesic (launched with unit
    /// coordinate speed).
    pub horizon: f64,
    pub steps: usize,
    /// Outward tilt of the grazing launch direction (tangent of the angle).
    pub tilt: f64,
    pub shortening: ShorteningConfig,
}

impl Default for ConvexityOptions {
    fn default() -> Self {
        ConvexityOptions {
            samples: 200,
            rho_star: 0.1,
            horizon: 10.0,
            steps: 2000,
            tilt: 0.1,
            shortening: ShorteningConfig {
                segment_max_step: 1.0 / 64.0,
                ..ShorteningConfig::default()
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WitnessKind {
    /// Minimizer between two interior points leaves the region.
    Pair,
    /// Null geodesic leaves the region and comes back.
    Grazing,
}

#[derive(Clone, Debug)]
pub struct ConvexityWitness {
    pub kind: WitnessKind,
    pub start: Event,
    pub end: Event,
    /// A sample of the curve outside the region.
    pub outside: Event,
}

#[derive(Clone, Debug, Default)]
pub struct ConvexityReport {
    pub pair_trials: usize,
    pub pair_violations: usize,
    pub grazing_trials: usize,
    pub grazing_violations: usize,
    /// Trials skipped because sampling or minimization failed.
    pub inconclusive: usize,
    pub witnesses: Vec<ConvexityWitness>,
}

impl ConvexityReport {
    pub fn violations(&self) -> usize {
        self.pair_violations + self.grazing_violations
    }
}

fn gaussian<R: Rng>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

fn in_ball<R: Rng>(rng: &mut R, center: &DVector<f64>, radius: f64) -> DVector<f64> {
    let n = center.len();
    let dir = gaussian(rng, n).normalize();
    let r = radius * rng.gen::<f64>().powf(1.0 / n as f64);
    center + dir * r
}

const WITNESS_LIMIT: usize = 16;

pub fn check_light_convexity<R: Rng>(
    chart: &SplittingChart,
    region: &RegionSpec,
    opts: &ConvexityOptions,
    rng: &mut R,
) -> Result<ConvexityReport> {
    let mut report = ConvexityReport::default();
    let boundary = region.boundary_samples();
    if boundary.is_empty() {
        return Ok(report);
    }
    let usable = |x: &DVector<f64>| {
        let e = Event::new(x.clone(), 0.0);
        chart.contains(&e) && region.contains(&e)
    };
    for _ in 0..opts.samples {
        let b = &boundary[rng.gen_range(0..boundary.len())];
        let mut pick = || {
            (0..50)
                .map(|_| in_ball(rng, &b.point.x, opts.rho_star))
                .find(|x| usable(x))
        };
        let (q1, q2) = match (pick(), pick()) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                report.inconclusive += 1;
                continue;
            }
        };
        let start = Event::new(q1, 0.0);
        let seg = match minimize_segment(chart, &start, &q2, (0.0, 1.0), &opts.shortening) {
            Ok(seg) => seg,
            Err(_) => {
                report.inconclusive += 1;
                continue;
            }
        };
        report.pair_trials += 1;
        if let Some(out) = seg.curve.samples().iter().find(|s| !region.contains(&s.z)) {
            report.pair_violations += 1;
            if report.witnesses.len() < WITNESS_LIMIT {
                report.witnesses.push(ConvexityWitness {
                    kind: WitnessKind::Pair,
                    start: seg.curve.start().clone(),
                    end: seg.curve.end().clone(),
                    outside: out.z.clone(),
                });
            }
        }
    }

    let with_normals: Vec<_> = boundary.iter().filter(|b| b.normal.is_some()).collect();
    for _ in 0..if with_normals.is_empty() { 0 } else { opts.samples } {
        let b = with_normals[rng.gen_range(0..with_normals.len())];
        let normal = b.normal.as_ref().unwrap();
        let x0 = &b.point.x - normal * (1e-3 * opts.rho_star);
        if !usable(&x0) {
            report.inconclusive += 1;
            continue;
        }
        let mut dir = gaussian(rng, x0.len());
        dir -= normal * normal.dot(&dir);
        if dir.norm() < 1e-9 {
            report.inconclusive += 1;
            continue;
        }
        let dir = dir.normalize() + normal * opts.tilt;
        let start = Event::new(x0, 0.0);
        let v0 = null_completion(chart, &start, &dir)?;
        let trace = match integrate_geodesic(
            chart,
            &start.coords(),
            &v0,
            opts.horizon,
            opts.horizon / opts.steps as f64,
        ) {
            Ok(t) => t,
            Err(_) => {
                report.inconclusive += 1;
                continue;
            }
        };
        report.grazing_trials += 1;
        let mut left: Option<Event> = None;
        for smp in &trace.samples {
            let e = smp.event();
            let inside = region.contains(&e);
            match (&left, inside) {
                (None, false) => left = Some(e),
                (Some(out), true) => {
                    report.grazing_violations += 1;
                    if report.witnesses.len() < WITNESS_LIMIT {
                        report.witnesses.push(ConvexityWitness {
                            kind: WitnessKind::Grazing,
                            start: start.clone(),
                            end: e,
                            outside: out.clone(),
                        });
                    }
                    break;
                }
                _ => {}
            }
        }
    }
    Ok(report)
}
