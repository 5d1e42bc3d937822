//! Lightlike geodesics joining an event to a timelike observer curve in a
//! stationary-splitting spacetime chart.
//!
//! The pipeline: [`metric`] evaluates the chart, [`causal`] lifts spatial
//! paths to lightlike curves, [`shortening`] runs the arrival-time shortening
//! flow, [`jacobi`] refines the result to a geodesic and computes its index,
//! and [`morse`] audits the collected indices against topology.

pub mod causal;
pub mod error;
pub mod jacobi;
pub mod metric;
pub mod morse;
mod ode;
pub mod shortening;

pub use error::{Error, Result};
pub use metric::{Event, ObserverCurve, RegionSpec, SplittingChart};
