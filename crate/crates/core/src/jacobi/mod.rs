//! Null geodesics, Jacobi fields, conjugate points and the index of the
//! arrival-time functional.

mod field;
mod geodesic;
mod hessian;

pub use field::{
    conjugate_points, geometric_index, jacobi_frame, solve_jacobi, ConjugatePoint, IndexReport,
    JacobiFrame, JacobiSample, JacobiSolution, CONJUGATE_MERGE,
};
pub use geodesic::{
    integrate_geodesic, integrate_null_geodesic, refine_geodesic, GeodesicRecord,
    GeodesicSample, GeodesicTrace, RefineOptions,
};
pub(crate) use geodesic::{record_from_trajectory, shoot_to};
pub use hessian::{
    hessian_matrix, morse_index_numeric, parallel_frame, HessianReport, InertiaReport,
    GRAM_CONDITION_LIMIT,
};

use crate::error::Result;
use crate::metric::SplittingChart;

/// Fills the conjugate points, index and nondegeneracy flag of a record.
pub fn analyze_record(chart: &SplittingChart, record: &mut GeodesicRecord, svd_tol: f64) -> Result<()> {
    let points = conjugate_points(chart, &record.samples, svd_tol)?;
    let s_end = record.samples.last().map(|p| p.s).unwrap_or(1.0);
    let report = geometric_index(&points, s_end);
    record.conjugate_points = report.points;
    record.index = Some(report.mu);
    record.nondegenerate = Some(report.nondegenerate);
    Ok(())
}
