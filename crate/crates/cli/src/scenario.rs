//! Scenario files: TOML schema, defaults and validation.

use std::collections::BTreeMap;
use std::path::Path;

use fermat_core::causal::{lift_time, SpatialPath};
use fermat_core::metric::{catalog, ChartParams, Event, ObserverCurve, RegionSpec, SplittingChart};
use fermat_core::morse::{contractible_betti, Betti};
use fermat_core::shortening::{ShorteningConfig, StartHint};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub seed: u64,
    /// Search past-pointing rays by reflecting time in the chart.
    #[serde(default)]
    pub past: bool,
    pub chart: ChartSpec,
    pub p: EventSpec,
    pub observer: ObserverSpec,
    #[serde(default)]
    pub region: RegionSection,
    #[serde(default)]
    pub shortening: ShorteningSection,
    #[serde(default)]
    pub starts: Vec<StartHint>,
    #[serde(default)]
    pub morse: MorseSection,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub checks: Checks,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartSpec {
    pub name: String,
    #[serde(default)]
    pub params: ChartParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventSpec {
    pub x: Vec<f64>,
    #[serde(default)]
    pub t: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverSpec {
    pub x: Vec<f64>,
    pub t_range: [f64; 2],
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegionSection {
    #[default]
    All,
    Ball { center: Vec<f64>, radius: f64 },
    Exterior { center: Vec<f64>, radius: f64 },
    Annulus { center: Vec<f64>, inner: f64, outer: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl RegionSection {
    pub fn build(&self) -> RegionSpec {
        let v = |x: &[f64]| DVector::from_column_slice(x);
        match self {
            RegionSection::All => RegionSpec::everywhere(),
            RegionSection::Ball { center, radius } => RegionSpec::ball(v(center), *radius),
            RegionSection::Exterior { center, radius } => RegionSpec::exterior(v(center), *radius),
            RegionSection::Annulus { center, inner, outer } => RegionSpec::annulus(v(center), *inner, *outer),
            RegionSection::Box { lo, hi } => RegionSpec::boxed(v(lo), v(hi)),
        }
    }

    /// Whether the region is contractible when nothing else is said.
    fn contractible_by_shape(&self) -> bool {
        match self {
            RegionSection::All | RegionSection::Ball { .. } | RegionSection::Box { .. } => true,
            RegionSection::Exterior { .. } | RegionSection::Annulus { .. } => false,
        }
    }

    fn points(&self) -> Vec<&[f64]> {
        match self {
            RegionSection::All => vec![],
            RegionSection::Ball { center, .. }
            | RegionSection::Exterior { center, .. }
            | RegionSection::Annulus { center, .. } => vec![center],
            RegionSection::Box { lo, hi } => vec![lo, hi],
        }
    }
}

/// Shortening settings. `rho_star` and `d_cap` are derived from the
/// geometry when left out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShorteningSection {
    pub n_segments: usize,
    pub tau_tol: f64,
    pub junction_tol: f64,
    pub max_iters: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho_star: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_cap: Option<f64>,
    pub local_min_grid: usize,
    pub descent_iters: usize,
    pub lift_substeps: usize,
    pub shooting_tol: f64,
    pub segment_max_step: f64,
    pub max_segments: usize,
}

impl Default for ShorteningSection {
    fn default() -> Self {
        let c = ShorteningConfig::default();
        ShorteningSection {
            n_segments: c.n_segments,
            tau_tol: c.tau_tol,
            junction_tol: c.junction_tol,
            max_iters: c.max_iters,
            rho_star: None,
            d_cap: None,
            local_min_grid: c.local_min_grid,
            descent_iters: c.descent_iters,
            lift_substeps: c.lift_substeps,
            shooting_tol: c.shooting_tol,
            segment_max_step: c.segment_max_step,
            max_segments: c.max_segments,
        }
    }
}

impl ShorteningSection {
    /// Config for a resolved scenario.
    pub fn config(&self) -> ShorteningConfig {
        let d = ShorteningConfig::default();
        ShorteningConfig {
            n_segments: self.n_segments,
            tau_tol: self.tau_tol,
            junction_tol: self.junction_tol,
            max_iters: self.max_iters,
            rho_star: self.rho_star.unwrap_or(d.rho_star),
            d_cap: self.d_cap.unwrap_or(d.d_cap),
            local_min_grid: self.local_min_grid,
            descent_iters: self.descent_iters,
            lift_substeps: self.lift_substeps,
            shooting_tol: self.shooting_tol,
            segment_max_step: self.segment_max_step,
            max_segments: self.max_segments,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParityPolicy {
    #[default]
    Warn,
    Fail,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MorseSection {
    /// Defaults from the region shape: balls, boxes and the whole chart are
    /// contractible.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contractible: Option<bool>,
    /// Betti numbers by degree (integers or "inf"). Required for
    /// non-contractible regions.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub betti: Option<BTreeMap<String, Betti>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_degree: Option<usize>,
    /// Coefficient field label, informational.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    /// Where user-supplied Betti numbers come from.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
    pub parity_policy: ParityPolicy,
}

impl MorseSection {
    pub fn betti_map(&self) -> Result<BTreeMap<usize, Betti>, CliError> {
        match &self.betti {
            None => Ok(contractible_betti()),
            Some(m) => m
                .iter()
                .map(|(k, v)| {
                    k.trim()
                        .parse::<usize>()
                        .map(|d| (d, *v))
                        .map_err(|_| CliError::Validation(format!("betti degree `{k}` is not a nonnegative integer")))
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Endpoint-to-observer snap distance.
    pub snap_tol: f64,
    pub svd_tol: f64,
    pub inertia_tol: f64,
    /// Affine steps per geodesic in refinement (max step is the inverse).
    pub geodesic_steps: usize,
    pub hessian_modes: usize,
    pub dedup_tau: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dedup_radius: Option<f64>,
    pub convexity_samples: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            snap_tol: 1e-9,
            svd_tol: 1e-6,
            inertia_tol: 1e-8,
            geodesic_steps: 1000,
            hessian_modes: 8,
            dedup_tau: 1e-8,
            dedup_radius: None,
            convexity_samples: 200,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Checks {
    pub convexity: bool,
    pub hessian_crosscheck: bool,
}

impl Scenario {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes to TOML")
    }

    pub fn chart(&self) -> Result<SplittingChart, CliError> {
        Ok(catalog(&self.chart.name, &self.chart.params)?)
    }

    pub fn source(&self) -> Event {
        Event::from_slice(&self.p.x, self.p.t)
    }

    pub fn observer_curve(&self) -> Result<ObserverCurve, CliError> {
        Ok(ObserverCurve::new(
            DVector::from_column_slice(&self.observer.x),
            (self.observer.t_range[0], self.observer.t_range[1]),
        )?)
    }

    fn chord(&self) -> f64 {
        self.p
            .x
            .iter()
            .zip(&self.observer.x)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Reads, parses and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenario(&text, &path.display().to_string())
}

/// Parses scenario text; `origin` names the source in error messages.
pub fn parse_scenario(text: &str, origin: &str) -> Result<Scenario, CliError> {
    let raw: Scenario = toml::from_str(text).map_err(|e| {
        let (line, col) = e
            .span()
            .map(|sp| line_col(text, sp.start))
            .unwrap_or((0, 0));
        CliError::Parse {
            origin: origin.to_string(),
            line,
            col,
            message: e.message().to_string(),
        }
    })?;
    resolve(raw)
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

/// Validates a parsed scenario and fills every derived default, so that the
/// echo reloads to an identical scenario.
pub fn resolve(mut sc: Scenario) -> Result<Scenario, CliError> {
    let bad = |m: String| Err(CliError::Validation(m));
    let chart = sc.chart()?;
    let n = chart.spatial_dim();
    if sc.p.x.len() != n {
        return bad(format!("p has {} spatial coordinates, chart `{}` has {n}", sc.p.x.len(), sc.chart.name));
    }
    if sc.observer.x.len() != n {
        return bad(format!(
            "observer has {} spatial coordinates, chart `{}` has {n}",
            sc.observer.x.len(),
            sc.chart.name
        ));
    }
    for pt in sc.region.points() {
        if pt.len() != n {
            return bad(format!("region point {pt:?} has {} coordinates, expected {n}", pt.len()));
        }
    }
    let [lo, hi] = sc.observer.t_range;
    if !(lo < hi) {
        return bad(format!("observer t_range [{lo}, {hi}] is empty"));
    }
    let all_finite = sc.p.x.iter().chain(&sc.observer.x).chain([&sc.p.t]).all(|v| v.is_finite());
    if !all_finite {
        return bad("p and observer coordinates must be finite".into());
    }
    if sc.chord() <= sc.tolerances.snap_tol {
        return bad(format!(
            "source event lies on the observer worldline; rays need p∉γ(]α,β[) (p.x = {:?})",
            sc.p.x
        ));
    }
    let p = sc.source();
    if !chart.contains(&p) {
        return bad(format!("p = {:?} is outside the domain of chart `{}`", p.coords().as_slice(), sc.chart.name));
    }
    let t_probe = if hi.is_finite() { 0.5 * (lo.max(p.t) + hi) } else { lo.max(p.t) + 1.0 };
    let q = Event::from_slice(&sc.observer.x, t_probe);
    if !chart.contains(&q) {
        return bad(format!("observer x = {:?} is outside the domain of chart `{}`", sc.observer.x, sc.chart.name));
    }
    let region = sc.region.build();
    if !region.contains(&p) {
        return bad(format!("p = {:?} is outside the region", sc.p.x));
    }
    if !region.contains(&q) {
        return bad(format!("observer x = {:?} is outside the region", sc.observer.x));
    }
    let (pt, wlo, whi) = if sc.past { (-p.t, -hi, -lo) } else { (p.t, lo, hi) };
    if whi <= pt {
        return bad(format!(
            "observer window ({wlo}, {whi}) ends before the source time {pt} in the search direction; no {} ray can reach it",
            if sc.past { "past-pointing" } else { "future-pointing" }
        ));
    }

    let chord = sc.chord();
    if sc.shortening.n_segments < 1 {
        return bad("shortening.n_segments must be at least 1".into());
    }
    let positive = [
        ("shortening.tau_tol", sc.shortening.tau_tol),
        ("shortening.junction_tol", sc.shortening.junction_tol),
        ("shortening.shooting_tol", sc.shortening.shooting_tol),
        ("shortening.segment_max_step", sc.shortening.segment_max_step),
        ("tolerances.snap_tol", sc.tolerances.snap_tol),
        ("tolerances.svd_tol", sc.tolerances.svd_tol),
        ("tolerances.inertia_tol", sc.tolerances.inertia_tol),
        ("tolerances.dedup_tau", sc.tolerances.dedup_tau),
    ];
    for (name, v) in positive {
        if !(v > 0.0 && v.is_finite()) {
            return bad(format!("{name} must be positive, got {v}"));
        }
    }
    if sc.tolerances.geodesic_steps == 0 || sc.tolerances.hessian_modes == 0 {
        return bad("tolerances.geodesic_steps and tolerances.hessian_modes must be positive".into());
    }
    sc.shortening.rho_star.get_or_insert(0.1 * chord);
    if sc.shortening.d_cap.is_none() {
        let straight = SpatialPath::polyline(&[p.x.clone(), DVector::from_column_slice(&sc.observer.x)])
            .and_then(|path| lift_time(&chart, &path, p.t))
            .and_then(|c| c.riemann_length(&chart));
        let base = straight.unwrap_or(std::f64::consts::SQRT_2 * chord);
        sc.shortening.d_cap = Some(20.0 * base);
    }
    for (name, v) in [("shortening.rho_star", sc.shortening.rho_star), ("shortening.d_cap", sc.shortening.d_cap)] {
        let v = v.unwrap();
        if !(v > 0.0 && v.is_finite()) {
            return bad(format!("{name} must be positive, got {v}"));
        }
    }
    sc.tolerances.dedup_radius.get_or_insert(1e-3 * chord);
    if sc.starts.is_empty() {
        sc.starts.push(StartHint::Straight);
    }

    let contractible = *sc.morse.contractible.get_or_insert(sc.region.contractible_by_shape());
    if !contractible && sc.morse.betti.is_none() {
        return bad("non-contractible region: morse.betti must be given (with morse.provenance)".into());
    }
    if sc.morse.betti.is_none() {
        sc.morse.betti = Some(
            contractible_betti()
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
        );
    }
    sc.morse.betti_map()?;
    sc.morse.field.get_or_insert_with(|| "Q".into());
    Ok(sc)
}
