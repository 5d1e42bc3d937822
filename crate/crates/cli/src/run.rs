//! Scenario execution: guards, multi-start search, index analysis, Morse audit.

use std::collections::BTreeMap;
use std::time::Instant;

use fermat_core::jacobi::{analyze_record, hessian_matrix, morse_index_numeric, GeodesicRecord, RefineOptions};
use fermat_core::morse::{assemble_series, check_relations, parity_check, Betti, ParityReport, RelationsReport};
use fermat_core::shortening::{
    check_light_convexity, multi_start, ConvexityOptions, ConvexityReport, DedupOptions, RayProblem, WitnessKind,
};
use fermat_core::Event;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;
use crate::scenario::{ParityPolicy, Scenario};

#[derive(Clone, Debug, Serialize)]
pub struct ConjugateSummary {
    pub s: f64,
    pub multiplicity: usize,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct HessianSummary {
    pub modes: usize,
    pub index: usize,
    pub agrees: bool,
    pub asymmetry: f64,
    pub gram_condition: f64,
    pub min_eigenvalue: f64,
    pub degenerate_warning: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct RecordSummary {
    pub id: usize,
    /// Index of the start hint that produced the ray.
    pub start: usize,
    pub tau: f64,
    pub mu: Option<usize>,
    pub nondegenerate: Option<bool>,
    pub conjugate_points: Vec<ConjugateSummary>,
    pub endpoint_residual: f64,
    pub geodesic_residual: f64,
    pub null_residual: f64,
    pub iterations: usize,
    pub final_segments: usize,
    pub final_junction_angle: f64,
    pub tau_history: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hessian: Option<HessianSummary>,
    pub diagnostics: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct FailureSummary {
    pub start: usize,
    pub guard_abort: bool,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_history: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct WitnessSummary {
    pub kind: &'static str,
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    pub outside: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvexitySummary {
    pub region: String,
    pub pair_trials: usize,
    pub pair_violations: usize,
    pub grazing_trials: usize,
    pub grazing_violations: usize,
    pub inconclusive: usize,
    pub witnesses: Vec<WitnessSummary>,
}

#[derive(Clone, Debug, Serialize)]
pub struct LedgerSummary {
    pub counts: BTreeMap<usize, u64>,
    pub betti: BTreeMap<usize, Betti>,
    pub max_degree: usize,
    pub excluded_degenerate: usize,
    pub relations: RelationsReport,
    pub parity: ParityReport,
    pub field: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Guards {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub convexity: Option<ConvexitySummary>,
    /// Starts aborted by the region or coercivity guard.
    pub aborted_starts: Vec<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExitSummary {
    pub code: i32,
    pub reasons: Vec<String>,
    pub warnings: Vec<String>,
}

/// Deterministic part of a run.
#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub scenario: Scenario,
    pub scenario_sha256: String,
    pub direction: &'static str,
    pub records: Vec<RecordSummary>,
    /// `(dropped start, kept start)` pairs.
    pub duplicates: Vec<(usize, usize)>,
    pub failures: Vec<FailureSummary>,
    pub ledger: LedgerSummary,
    pub guards: Guards,
    pub exit: ExitSummary,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Timings {
    pub convexity_s: f64,
    pub search_s: f64,
    pub analysis_s: f64,
    pub hessian_s: f64,
    pub total_s: f64,
}

/// Sampled ray in the original time orientation.
#[derive(Clone, Debug)]
pub struct RayPath {
    pub id: usize,
    /// `(s, x..., t)` rows.
    pub rows: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub report: RunReport,
    pub timings: Timings,
    pub rays: Vec<RayPath>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        self.report.exit.code
    }
}

pub fn scenario_hash(sc: &Scenario) -> String {
    hex::encode(Sha256::digest(sc.to_toml().as_bytes()))
}

fn convexity_summary(region: String, rep: &ConvexityReport, past: bool) -> ConvexitySummary {
    let coords = |e: &Event| {
        let mut v: Vec<f64> = e.coords().iter().copied().collect();
        if past {
            let n = v.len();
            v[n - 1] = -v[n - 1];
        }
        v
    };
    ConvexitySummary {
        region,
        pair_trials: rep.pair_trials,
        pair_violations: rep.pair_violations,
        grazing_trials: rep.grazing_trials,
        grazing_violations: rep.grazing_violations,
        inconclusive: rep.inconclusive,
        witnesses: rep
            .witnesses
            .iter()
            .map(|w| WitnessSummary {
                kind: match w.kind {
                    WitnessKind::Pair => "pair",
                    WitnessKind::Grazing => "grazing",
                },
                start: coords(&w.start),
                end: coords(&w.end),
                outside: coords(&w.outside),
            })
            .collect(),
    }
}

fn time_sign(past: bool) -> f64 {
    if past {
        -1.0
    } else {
        1.0
    }
}

/// Runs a resolved scenario.
pub fn run(sc: &Scenario) -> Result<RunOutcome, CliError> {
    let t_total = Instant::now();
    let mut timings = Timings::default();
    let sign = time_sign(sc.past);
    let base = sc.chart()?;
    let chart = if sc.past { base.reflect_time() } else { base };
    let mut p = sc.source();
    p.t *= sign;
    let mut observer = sc.observer_curve()?;
    if sc.past {
        observer.t_range = (-observer.t_range.1, -observer.t_range.0);
    }
    let region = sc.region.build();
    let cfg = sc.shortening.config();

    let convexity = if sc.checks.convexity {
        let t0 = Instant::now();
        let opts = ConvexityOptions {
            samples: sc.tolerances.convexity_samples,
            rho_star: cfg.rho_star,
            shortening: fermat_core::shortening::ShorteningConfig {
                segment_max_step: 1.0 / 64.0,
                ..cfg.clone()
            },
            ..ConvexityOptions::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
        let rep = check_light_convexity(&chart, &region, &opts, &mut rng)?;
        timings.convexity_s = t0.elapsed().as_secs_f64();
        Some(convexity_summary(region.label().to_string(), &rep, sc.past))
    } else {
        None
    };

    let t0 = Instant::now();
    let problem = RayProblem {
        chart: chart.clone(),
        p,
        observer,
        region,
    };
    let refine = RefineOptions {
        max_step: 1.0 / sc.tolerances.geodesic_steps as f64,
        ..RefineOptions::default()
    };
    let dedup = DedupOptions {
        tau_tol: sc.tolerances.dedup_tau,
        radius: sc.tolerances.dedup_radius.unwrap_or(0.0),
    };
    let found = multi_start(&problem, &sc.starts, &cfg, &refine, dedup);
    timings.search_s = t0.elapsed().as_secs_f64();

    let t0 = Instant::now();
    let mut analysed: Vec<(usize, fermat_core::shortening::ShorteningRun)> = Vec::new();
    for (start, mut run) in found.runs {
        analyze_record(&chart, &mut run.record, sc.tolerances.svd_tol)?;
        analysed.push((start, run));
    }
    timings.analysis_s = t0.elapsed().as_secs_f64();

    let t0 = Instant::now();
    let mut hessians: Vec<Option<HessianSummary>> = Vec::new();
    let mut extra_diag: Vec<Vec<String>> = Vec::new();
    for (_, run) in &analysed {
        let mut diag = Vec::new();
        let h = if sc.checks.hessian_crosscheck {
            match hessian_matrix(&chart, &run.record.samples, sc.tolerances.hessian_modes) {
                Ok(h) => {
                    let inertia = morse_index_numeric(&h.matrix, sc.tolerances.inertia_tol);
                    Some(HessianSummary {
                        modes: h.modes,
                        index: inertia.index,
                        agrees: Some(inertia.index) == run.record.index,
                        asymmetry: h.asymmetry,
                        gram_condition: h.gram_condition,
                        min_eigenvalue: inertia.eigenvalues.first().copied().unwrap_or(f64::NAN),
                        degenerate_warning: inertia.degenerate_warning,
                    })
                }
                Err(e) => {
                    diag.push(format!("hessian cross-check failed: {e}"));
                    None
                }
            }
        } else {
            None
        };
        hessians.push(h);
        extra_diag.push(diag);
    }
    timings.hessian_s = t0.elapsed().as_secs_f64();

    let mut records: Vec<(RecordSummary, Vec<Vec<f64>>)> = analysed
        .into_iter()
        .zip(hessians)
        .zip(extra_diag)
        .map(|(((start, run), hessian), diag)| {
            let rec: &GeodesicRecord = &run.record;
            let rows = rec
                .samples
                .iter()
                .map(|smp| {
                    let mut row = Vec::with_capacity(smp.z.len() + 1);
                    row.push(smp.s);
                    row.extend(smp.z.iter().copied());
                    let n = row.len();
                    row[n - 1] *= sign;
                    row
                })
                .collect();
            let mut diagnostics = run.diagnostics.clone();
            diagnostics.extend(diag);
            let summary = RecordSummary {
                id: 0,
                start,
                tau: sign * rec.tau,
                mu: rec.index,
                nondegenerate: rec.nondegenerate,
                conjugate_points: rec
                    .conjugate_points
                    .iter()
                    .map(|c| ConjugateSummary {
                        s: c.s,
                        multiplicity: c.multiplicity,
                        residual: c.residual,
                    })
                    .collect(),
                endpoint_residual: rec.endpoint_residual,
                geodesic_residual: rec.geodesic_residual,
                null_residual: rec.null_residual,
                iterations: run.iterations,
                final_segments: run.final_segments,
                final_junction_angle: run.final_junction_angle,
                tau_history: run.tau_history.iter().map(|t| sign * t).collect(),
                hessian,
                diagnostics,
            };
            (summary, rows)
        })
        .collect();
    records.sort_by(|a, b| a.0.tau.total_cmp(&b.0.tau).then(a.0.start.cmp(&b.0.start)));
    let mut rays = Vec::with_capacity(records.len());
    let mut summaries = Vec::with_capacity(records.len());
    for (id, (mut s, rows)) in records.into_iter().enumerate() {
        s.id = id;
        rays.push(RayPath { id, rows });
        summaries.push(s);
    }

    let failures: Vec<FailureSummary> = found
        .failures
        .iter()
        .map(|f| FailureSummary {
            start: f.start,
            guard_abort: f.error.is_guard_abort(),
            message: f.error.to_string(),
            tau_history: f.error.tau_history().map(|h| h.iter().map(|t| sign * t).collect()),
        })
        .collect();

    let betti = sc.morse.betti_map()?;
    let pairs: Vec<(usize, bool)> = summaries
        .iter()
        .map(|r| (r.mu.unwrap_or(0), r.nondegenerate.unwrap_or(false)))
        .collect();
    let ledger = assemble_series(&pairs, &betti, sc.morse.max_degree);
    let relations = check_relations(&ledger);
    let contractible = sc.morse.contractible.unwrap_or(true);
    let parity = parity_check(&ledger, contractible);

    let mut reasons = Vec::new();
    let mut warnings = Vec::new();
    let aborted: Vec<usize> = failures.iter().filter(|f| f.guard_abort).map(|f| f.start).collect();
    for f in &failures {
        let line = format!("start {} failed: {}", f.start, f.message);
        if f.guard_abort {
            reasons.push(line);
        } else {
            warnings.push(line);
        }
    }
    if let fermat_core::morse::Verdict::Violated { degree } = relations.verdict {
        reasons.push(format!("Morse relations violated at degree {degree}"));
    }
    if let Some(c) = &convexity {
        let v = c.pair_violations + c.grazing_violations;
        if v > 0 {
            reasons.push(format!("light-convexity check found {v} violations of region {}", c.region));
        }
    }
    if !parity.consistent {
        match sc.morse.parity_policy {
            ParityPolicy::Fail => reasons.push(format!("parity: {}", parity.message)),
            ParityPolicy::Warn => warnings.push(format!("parity: {}", parity.message)),
        }
    }
    for r in &summaries {
        if r.hessian.as_ref().is_some_and(|h| !h.agrees) {
            warnings.push(format!("ray {}: Hessian index disagrees with conjugate-point index", r.id));
        }
        if r.nondegenerate == Some(false) {
            warnings.push(format!("ray {}: conjugate endpoint, excluded from the Morse counts", r.id));
        }
    }

    let report = RunReport {
        scenario: sc.clone(),
        scenario_sha256: scenario_hash(sc),
        direction: if sc.past { "past" } else { "future" },
        records: summaries,
        duplicates: found.duplicates,
        failures,
        ledger: LedgerSummary {
            counts: ledger.counts.clone(),
            betti: ledger.betti.clone(),
            max_degree: ledger.max_degree,
            excluded_degenerate: ledger.excluded_degenerate,
            relations,
            parity,
            field: sc.morse.field.clone().unwrap_or_default(),
            provenance: sc.morse.provenance.clone(),
        },
        guards: Guards {
            convexity,
            aborted_starts: aborted,
        },
        exit: ExitSummary {
            code: if reasons.is_empty() { 0 } else { 1 },
            reasons,
            warnings,
        },
    };
    timings.total_s = t_total.elapsed().as_secs_f64();
    Ok(RunOutcome { report, timings, rays })
}
