//! Classical RK4 for autonomous systems, fixed-step and step-doubling adaptive.

use nalgebra::DVector;

use crate::error::{Error, Result};

pub(crate) fn rk4_step<F>(f: &F, y: &DVector<f64>, h: f64) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let k1 = f(y)?;
    let k2 = f(&(y + &k1 * (0.5 * h)))?;
    let k3 = f(&(y + &k2 * (0.5 * h)))?;
    let k4 = f(&(y + &k3 * h))?;
    Ok(y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

/// One accepted adaptive step: two RK4 half steps of size `h/2`.
pub(crate) fn double_half_step<F>(f: &F, y: &DVector<f64>, h: f64) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let mid = rk4_step(f, y, 0.5 * h)?;
    rk4_step(f, &mid, 0.5 * h)
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct AdaptiveOptions {
    pub tol: f64,
    pub h_max: f64,
    pub h_min: f64,
}

#[derive(Clone, Debug)]
pub(crate) struct Trajectory {
    pub s: Vec<f64>,
    pub y: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn last(&self) -> &DVector<f64> {
        self.y.last().expect("trajectory has at least one state")
    }

    pub fn steps(&self) -> Vec<f64> {
        self.s.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

fn scaled_error(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs() / (1.0 + y.abs()))
        .fold(0.0, f64::max)
}

/// Integrates `y' = f(y)` over `[0, length]` with step doubling. Each accepted
/// step is stored; the stored value is the two-half-step result.
pub(crate) fn integrate_adaptive<F>(
    f: &F,
    y0: DVector<f64>,
    length: f64,
    opts: AdaptiveOptions,
) -> Result<Trajectory>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let mut s = 0.0;
    let mut y = y0;
    let mut out = Trajectory {
        s: vec![0.0],
        y: vec![y.clone()],
    };
    let mut h = opts.h_max.min(length);
    while s < length {
        let last = s + h >= length * (1.0 - 1e-14);
        let step = if last { length - s } else { h };
        let full = rk4_step(f, &y, step);
        let fine = double_half_step(f, &y, step);
        let (full, fine) = match (full, fine) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => {
                if step * 0.25 < opts.h_min {
                    return Err(e);
                }
                h = step * 0.25;
                continue;
            }
        };
        let err = scaled_error(&full, &fine);
        if err <= opts.tol || step <= opts.h_min {
            s = if last { length } else { s + step };
            y = fine;
            out.s.push(s);
            out.y.push(y.clone());
            let grow = if err > 0.0 {
                0.9 * (opts.tol / err).powf(0.2)
            } else {
                4.0
            };
            h = (step * grow.clamp(0.2, 4.0)).min(opts.h_max);
        } else {
            h = (step * (0.9 * (opts.tol / err).powf(0.2)).clamp(0.1, 0.9)).max(opts.h_min);
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::OutOfDomain {
                point: y.iter().copied().collect(),
                s: Some(s),
            });
        }
    }
    Ok(out)
}

/// Replays a step sequence produced by [`integrate_adaptive`] from a new
/// initial state, so nearby runs share one grid.
pub(crate) fn replay<F>(f: &F, y0: DVector<f64>, steps: &[f64]) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let mut y = y0;
    for &h in steps {
        y = double_half_step(f, &y, h)?;
    }
    Ok(y)
}

/// Fixed-step RK4 returning every state.
#[cfg(test)]
pub(crate) fn integrate_fixed<F>(
    f: &F,
    y0: DVector<f64>,
    length: f64,
    n_steps: usize,
) -> Result<Trajectory>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let h = length / n_steps as f64;
    let mut out = Trajectory {
        s: Vec::with_capacity(n_steps + 1),
        y: Vec::with_capacity(n_steps + 1),
    };
    out.s.push(0.0);
    out.y.push(y0.clone());
    let mut y = y0;
    for k in 0..n_steps {
        y = rk4_step(f, &y, h).map_err(|e| with_param(e, k as f64 * h))?;
        out.s.push(if k + 1 == n_steps { length } else { (k + 1) as f64 * h });
        out.y.push(y.clone());
    }
    Ok(out)
}

pub(crate) fn with_param(e: Error, s: f64) -> Error {
    match e {
        Error::OutOfDomain { point, s: None } => Error::OutOfDomain { point, s: Some(s) },
        other => other,
    }
}
