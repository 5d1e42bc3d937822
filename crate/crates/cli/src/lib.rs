//! Scenario files in, ray reports out.
//!
//! A scenario names a chart, a source event, an observer line and a region;
//! [`run`](run::run) searches lightlike geodesics from several starts,
//! classifies them by conjugate-point index and audits the counts against
//! the Morse relations. [`emit_outputs`](output::emit_outputs) writes the
//! report files.

pub mod error;
pub mod output;
pub mod run;
pub mod scenario;

pub use error::CliError;
pub use output::emit_outputs;
pub use run::{run, RunOutcome, RunReport};
pub use scenario::{load_scenario, parse_scenario, Scenario};

/// One line per catalog chart with its parameters.
pub fn catalog_listing() -> Vec<(&'static str, &'static str)> {
    vec![
        ("minkowski", "flat; params: dim (default 3)"),
        (
            "static_spherical",
            "isotropic exterior of a point mass, r > r_min; params: mass, r_min (> mass/2), dim (default 4)",
        ),
        (
            "conformally_stationary_demo",
            "flat spatial metric with constant shift; params: delta (default (0.3, 0, ...)), dim (default 3)",
        ),
        ("product_sphere", "time times a round 2-sphere in (theta, phi); params: radius (default 1)"),
        ("tabulated", "metric sampled on a grid, multilinear; params: grid {lo, hi, shape, alpha, delta}"),
    ]
}
