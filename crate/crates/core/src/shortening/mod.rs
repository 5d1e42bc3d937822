//! Arrival-time shortening flow.
//!
//! Each round subdivides the current curve into pieces of equal Riemannian
//! length and replaces it twice: first by local minimizers aimed at the
//! vertical lines over the subdivision nodes (`η1`), then by minimizers
//! aimed at the Riemannian midpoints of those pieces and finally the
//! observer (`η2`). Every replacement keeps the start event and cannot
//! arrive later, so the arrival time is nonincreasing. Pieces may collapse
//! to constant curves when a node already sits on its target line.

mod convexity;
mod local;
mod multistart;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

pub use convexity::{check_light_convexity, ConvexityOptions, ConvexityReport, ConvexityWitness, WitnessKind};
pub use local::{local_fermat_minimizer, Segment};
pub use multistart::{
    initial_curve, initial_polyline, multi_start, DedupOptions, MultiStartResult, RayProblem,
    Side, StartFailure, StartHint,
};

use crate::causal::LightlikeCurve;
use crate::error::{Error, Result};
use crate::jacobi::{
    record_from_trajectory, refine_geodesic, GeodesicRecord, RefineOptions,
};
use crate::metric::{riemann_norm_with, Event, ObserverCurve, RegionSpec, SplittingChart};
use local::minimize_segment;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShorteningConfig {
    /// Number of pieces per round (raised when pieces exceed `rho_star`).
    pub n_segments: usize,
    /// Stopping needs a per-round arrival-time decrease below `tau_tol`
    /// together with a largest junction angle below `junction_tol`.
    pub tau_tol: f64,
    pub junction_tol: f64,
    pub max_iters: usize,
    /// Largest Riemannian length of a piece.
    pub rho_star: f64,
    /// Cap on the Riemannian length of the curve.
    pub d_cap: f64,
    /// Interior polyline nodes in the coarse local minimizer.
    pub local_min_grid: usize,
    pub descent_iters: usize,
    pub lift_substeps: usize,
    /// Endpoint miss accepted by segment shooting, relative to `max(1, chord)`.
    pub shooting_tol: f64,
    /// Largest affine step when integrating one piece.
    pub segment_max_step: f64,
    /// Ceiling on the working number of pieces.
    pub max_segments: usize,
}

impl Default for ShorteningConfig {
    fn default() -> Self {
        ShorteningConfig {
            n_segments: 16,
            tau_tol: 1e-8,
            junction_tol: 1e-4,
            max_iters: 2000,
            rho_star: 0.1,
            d_cap: 20.0,
            local_min_grid: 3,
            descent_iters: 20,
            lift_substeps: 4,
            shooting_tol: 1e-11,
            segment_max_step: 1.0 / 16.0,
            max_segments: 512,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Initial,
    Eta1,
    Eta2,
}

#[derive(Clone, Debug)]
pub struct ShorteningState {
    pub segments: Vec<Segment>,
    /// Working number of pieces for the next subdivision.
    pub n_segments: usize,
    pub tau_history: Vec<f64>,
    pub iteration: usize,
    pub phase: Phase,
    pub diagnostics: Vec<String>,
}

impl ShorteningState {
    pub fn initial(curve: LightlikeCurve, n_segments: usize) -> Self {
        let tau = curve.end_time();
        ShorteningState {
            segments: vec![Segment {
                curve,
                start_tangent: None,
                end_tangent: None,
                fallback: false,
            }],
            n_segments,
            tau_history: vec![tau],
            iteration: 0,
            phase: Phase::Initial,
            diagnostics: Vec::new(),
        }
    }

    pub fn curve(&self) -> Result<LightlikeCurve> {
        let parts: Vec<LightlikeCurve> = self.segments.iter().map(|s| s.curve.clone()).collect();
        LightlikeCurve::concat(&parts)
    }

    pub fn tau(&self) -> f64 {
        self.segments.last().unwrap().curve.end_time()
    }

    /// Junction events between consecutive pieces.
    pub fn nodes(&self) -> Vec<Event> {
        let mut out = vec![self.segments[0].curve.start().clone()];
        out.extend(self.segments.iter().map(|s| s.curve.end().clone()));
        out
    }
}

/// Points splitting `curve` into `n` pieces of equal Riemannian length
/// (trapezoid rule on `||ż||_R`). The first and last points are the curve ends.
pub fn subdivide(chart: &SplittingChart, curve: &LightlikeCurve, n: usize) -> Result<Vec<Event>> {
    let pieces = curve.riemann_pieces(chart)?;
    let total: f64 = pieces.iter().sum();
    let samples = curve.samples();
    let mut out = vec![samples[0].z.clone()];
    let mut k = 0;
    let mut acc = 0.0;
    for j in 1..n {
        let goal = total * j as f64 / n as f64;
        while k < pieces.len() - 1 && acc + pieces[k] < goal {
            acc += pieces[k];
            k += 1;
        }
        let f = if pieces[k] > 0.0 {
            ((goal - acc) / pieces[k]).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let a = samples[k].z.coords();
        let b = samples[k + 1].z.coords();
        out.push(Event::from_coords(&(&a + (&b - &a) * f)));
    }
    out.push(samples.last().unwrap().z.clone());
    Ok(out)
}

/// Riemannian midpoint of a curve.
fn midpoint(chart: &SplittingChart, curve: &LightlikeCurve) -> Result<Event> {
    Ok(subdivide(chart, curve, 2)?.swap_remove(1))
}

/// Runs local minimizers from `start` through each target line in turn.
fn chain(
    chart: &SplittingChart,
    start: &Event,
    targets: &[DVector<f64>],
    partition: &[f64],
    cfg: &ShorteningConfig,
    notes: &mut Vec<String>,
) -> Result<Vec<Segment>> {
    let mut q = start.clone();
    let mut out = Vec::with_capacity(targets.len());
    for (i, target) in targets.iter().enumerate() {
        let range = (partition[i], partition[i + 1]);
        let seg = match minimize_segment(chart, &q, target, range, cfg) {
            Ok(seg) => seg,
            Err(Error::LocalMinimizerFailure { reason, fallback }) => {
                notes.push(format!("piece {i}: {reason}; kept coarse curve"));
                Segment {
                    curve: *fallback,
                    start_tangent: None,
                    end_tangent: None,
                    fallback: true,
                }
            }
            Err(e) => return Err(e),
        };
        q = seg.curve.end().clone();
        out.push(seg);
    }
    Ok(out)
}

/// `η1`: minimizers towards the vertical lines over the subdivision nodes of
/// the current curve, the last one towards the observer.
pub fn eta1_step(
    chart: &SplittingChart,
    state: &ShorteningState,
    obs: &ObserverCurve,
    cfg: &ShorteningConfig,
) -> Result<ShorteningState> {
    let n = state.n_segments;
    let nodes = subdivide(chart, &state.curve()?, n)?;
    let mut targets: Vec<DVector<f64>> = nodes[1..n].iter().map(|e| e.x.clone()).collect();
    targets.push(obs.x_obs.clone());
    let partition: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
    let mut notes = Vec::new();
    let segments = chain(chart, &nodes[0], &targets, &partition, cfg, &mut notes)?;
    Ok(next_state(state, segments, Phase::Eta1, notes))
}

/// `η2`: minimizers towards the Riemannian midpoints of the pieces of `state`
/// on the shifted partition `0, 1/2N, 3/2N, .., (2N-1)/2N, 1`.
pub fn eta2_step(
    chart: &SplittingChart,
    state: &ShorteningState,
    obs: &ObserverCurve,
    cfg: &ShorteningConfig,
) -> Result<ShorteningState> {
    let n = state.segments.len();
    let mut targets = Vec::with_capacity(n + 1);
    for seg in &state.segments {
        targets.push(midpoint(chart, &seg.curve)?.x);
    }
    targets.push(obs.x_obs.clone());
    let mut partition = vec![0.0];
    for j in 1..=n {
        partition.push((2 * j - 1) as f64 / (2 * n) as f64);
    }
    partition.push(1.0);
    let mut notes = Vec::new();
    let start = state.segments[0].curve.start().clone();
    let segments = chain(chart, &start, &targets, &partition, cfg, &mut notes)?;
    Ok(next_state(state, segments, Phase::Eta2, notes))
}

fn next_state(
    prev: &ShorteningState,
    segments: Vec<Segment>,
    phase: Phase,
    notes: Vec<String>,
) -> ShorteningState {
    let mut tau_history = prev.tau_history.clone();
    tau_history.push(segments.last().unwrap().curve.end_time());
    let mut diagnostics = prev.diagnostics.clone();
    diagnostics.extend(notes.into_iter().map(|n| format!("round {}: {n}", prev.iteration + 1)));
    ShorteningState {
        segments,
        n_segments: prev.n_segments,
        tau_history,
        iteration: if phase == Phase::Eta2 { prev.iteration + 1 } else { prev.iteration },
        phase,
        diagnostics,
    }
}

fn fd_tangent(curve: &LightlikeCurve, at_end: bool) -> Option<DVector<f64>> {
    let s = curve.samples();
    let (a, b) = if at_end {
        (&s[s.len() - 2], &s[s.len() - 1])
    } else {
        (&s[0], &s[1])
    };
    let d = (b.z.coords() - a.z.coords()) / (b.s - a.s);
    if d.iter().all(|v| *v == 0.0) {
        None
    } else {
        Some(d)
    }
}

/// Largest Riemannian angle between the incoming and outgoing directions
/// at junctions of nonconstant pieces.
pub fn max_junction_angle(chart: &SplittingChart, state: &ShorteningState) -> Result<f64> {
    let moving: Vec<&Segment> = state.segments.iter().filter(|s| !s.is_constant()).collect();
    let mut worst: f64 = 0.0;
    for pair in moving.windows(2) {
        let out_dir = pair[0]
            .end_tangent
            .clone()
            .or_else(|| fd_tangent(&pair[0].curve, true));
        let in_dir = pair[1]
            .start_tangent
            .clone()
            .or_else(|| fd_tangent(&pair[1].curve, false));
        let (a, b) = match (out_dir, in_dir) {
            (Some(a), Some(b)) => (a, b),
            _ => continue,
        };
        let g = chart.metric_at(&pair[0].curve.end().coords())?;
        let (na, nb) = (riemann_norm_with(&g, &a), riemann_norm_with(&g, &b));
        if na == 0.0 || nb == 0.0 {
            continue;
        }
        let (ua, ub) = (a / na, b / nb);
        let diff = riemann_norm_with(&g, &(&ua - &ub));
        let sum = riemann_norm_with(&g, &(&ua + &ub));
        worst = worst.max(2.0 * diff.atan2(sum));
    }
    Ok(worst)
}

fn region_guard(region: &RegionSpec, state: &ShorteningState) -> Result<()> {
    for seg in &state.segments {
        for smp in seg.curve.samples() {
            if !region.contains(&smp.z) {
                return Err(Error::RegionExit {
                    point: smp.z.coords().iter().copied().collect(),
                    tau_history: state.tau_history.clone(),
                });
            }
        }
    }
    Ok(())
}

/// Result of a converged shortening run.
#[derive(Clone, Debug)]
pub struct ShorteningRun {
    pub record: GeodesicRecord,
    pub tau_history: Vec<f64>,
    pub iterations: usize,
    pub final_segments: usize,
    pub final_junction_angle: f64,
    pub diagnostics: Vec<String>,
}

/// Runs the flow from `initial` until the stopping rule holds, then refines
/// the limit to an affinely parameterized geodesic.
pub fn run_shortening(
    chart: &SplittingChart,
    initial: &LightlikeCurve,
    obs: &ObserverCurve,
    region: &RegionSpec,
    cfg: &ShorteningConfig,
    refine: &RefineOptions,
) -> Result<ShorteningRun> {
    let length0 = initial.riemann_length(chart)?;
    let mut state = ShorteningState::initial(initial.clone(), cfg.n_segments.max(1));
    region_guard(region, &state)?;
    if length0 > cfg.d_cap {
        return Err(Error::PseudoCoercivity {
            length: length0,
            cap: cfg.d_cap,
            tau_history: state.tau_history.clone(),
        });
    }
    adapt_segments(&mut state, length0, cfg);
    let slack = |t: f64| 1e-10 * (1.0 + t.abs());
    let mut converged = false;
    let mut junction = f64::INFINITY;
    let mut stalled = 0;
    for _ in 0..cfg.max_iters {
        let tau_before = state.tau();
        let s1 = eta1_step(chart, &state, obs, cfg)?;
        region_guard(region, &s1)?;
        let s1 = if s1.tau() > tau_before + slack(tau_before) {
            let mut kept = state.clone();
            kept.diagnostics.push(format!(
                "round {}: eta1 arrival {} above {}; step rejected",
                state.iteration + 1,
                s1.tau(),
                tau_before
            ));
            kept.phase = Phase::Eta1;
            kept
        } else {
            s1
        };
        let s2 = eta2_step(chart, &s1, obs, cfg)?;
        region_guard(region, &s2)?;
        let mut s2 = if s2.tau() > s1.tau() + slack(s1.tau()) {
            let mut kept = s1.clone();
            kept.diagnostics.push(format!(
                "round {}: eta2 arrival {} above {}; step rejected",
                s1.iteration + 1,
                s2.tau(),
                s1.tau()
            ));
            kept.iteration += 1;
            kept.phase = Phase::Eta2;
            kept
        } else {
            s2
        };
        let length = s2.curve()?.riemann_length(chart)?;
        if length > cfg.d_cap {
            return Err(Error::PseudoCoercivity {
                length,
                cap: cfg.d_cap,
                tau_history: s2.tau_history.clone(),
            });
        }
        adapt_segments(&mut s2, length, cfg);
        let decrease = tau_before - s2.tau();
        junction = max_junction_angle(chart, &s2)?;
        stalled = if decrease <= 0.0 { stalled + 1 } else { 0 };
        state = s2;
        if decrease < cfg.tau_tol && junction < cfg.junction_tol {
            converged = true;
            break;
        }
        if stalled >= 3 {
            state.diagnostics.push("flow stalled with no arrival-time decrease".into());
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            iterations: state.iteration,
            tau_history: state.tau_history,
        });
    }
    let curve = state.curve()?;
    let mut diagnostics = state.diagnostics.clone();
    let record = match refine_geodesic(chart, &curve, obs, refine) {
        Ok(r) => r,
        Err(e @ Error::OutsideWorldline { .. }) => return Err(e),
        Err(e) => {
            diagnostics.push(format!("refinement failed ({e}); returning the flow curve unrefined"));
            unrefined_record(chart, &curve, obs)?
        }
    };
    for smp in &record.samples {
        if !region.contains(&smp.event()) {
            return Err(Error::RegionExit {
                point: smp.z.iter().copied().collect(),
                tau_history: state.tau_history.clone(),
            });
        }
    }
    let mut record = record;
    record.diagnostics.extend(diagnostics.iter().cloned());
    Ok(ShorteningRun {
        record,
        tau_history: state.tau_history,
        iterations: state.iteration,
        final_segments: state.n_segments,
        final_junction_angle: junction,
        diagnostics,
    })
}

fn adapt_segments(state: &mut ShorteningState, length: f64, cfg: &ShorteningConfig) {
    let need = (length / cfg.rho_star).ceil() as usize;
    if need > state.n_segments {
        let n = need.min(cfg.max_segments.max(state.n_segments));
        if n > state.n_segments {
            state.diagnostics.push(format!(
                "raised pieces from {} to {n} (length {length:.6}, rho_star {})",
                state.n_segments, cfg.rho_star
            ));
            state.n_segments = n;
        }
    }
}

/// Record built from the flow curve itself when refinement fails.
fn unrefined_record(
    chart: &SplittingChart,
    curve: &LightlikeCurve,
    obs: &ObserverCurve,
) -> Result<GeodesicRecord> {
    let samples = curve.samples();
    let mut traj = crate::ode::Trajectory {
        s: Vec::new(),
        y: Vec::new(),
    };
    let dim = chart.dim();
    let s0 = samples[0].s;
    let s1 = samples.last().unwrap().s;
    for (k, smp) in samples.iter().enumerate() {
        let (a, b) = if k + 1 < samples.len() {
            (smp, &samples[k + 1])
        } else {
            (&samples[k - 1], smp)
        };
        let v = (b.z.coords() - a.z.coords()) / ((b.s - a.s) / (s1 - s0));
        let mut y = DVector::zeros(2 * dim);
        y.rows_mut(0, dim).copy_from(&smp.z.coords());
        y.rows_mut(dim, dim).copy_from(&v);
        traj.s.push((smp.s - s0) / (s1 - s0));
        traj.y.push(y);
    }
    let miss = (&curve.end().x - &obs.x_obs).norm();
    let mut rec = record_from_trajectory(chart, &traj, miss)?;
    rec.diagnostics.push("unrefined".into());
    Ok(rec)
}

/// Coordinates of a record's path, for distance comparisons.
pub(crate) fn sample_path(record: &GeodesicRecord, count: usize) -> Vec<DVector<f64>> {
    (0..=count)
        .map(|k| record.position_at(k as f64 / count as f64))
        .collect()
}
