use serde::{Deserialize, Serialize};

use super::OdeModel;
use crate::error::{CapeError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// log10 N (N in billions).
    pub grid: Vec<f64>,
    /// Raw integrated states; use `clamped` for reporting.
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn clamped(&self) -> Vec<Vec<f64>> {
        self.states.iter().map(|s| s.iter().map(|v| v.clamp(0.0, 1.0)).collect()).collect()
    }

    pub fn last(&self) -> &[f64] {
        self.states.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

fn axpy(a: f64, x: &[f64], y: &[f64]) -> Vec<f64> {
    y.iter().zip(x).map(|(yi, xi)| yi + a * xi).collect()
}

fn rk4_step(model: &OdeModel, s: &[f64], h: f64) -> Vec<f64> {
    let k1 = model.rhs(s);
    let k2 = model.rhs(&axpy(0.5 * h, &k1, s));
    let k3 = model.rhs(&axpy(0.5 * h, &k2, s));
    let k4 = model.rhs(&axpy(h, &k3, s));
    s.iter()
        .enumerate()
        .map(|(i, v)| v + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// Classical RK4 from `x0` to `x1`; a negative direction integrates backwards.
/// The final step is shortened to land exactly on `x1`.
pub fn integrate(model: &OdeModel, initial: &[f64], x0: f64, x1: f64, step: f64) -> Result<Trajectory> {
    if !(step > 0.0) {
        return Err(CapeError::InvalidArgument(format!("step {step} must be positive")));
    }
    if initial.len() != model.library.state_dim {
        return Err(CapeError::InvalidArgument(format!(
            "initial state has {} entries; model has {}",
            initial.len(),
            model.library.state_dim
        )));
    }
    let dir = if x1 >= x0 { 1.0 } else { -1.0 };
    let span = (x1 - x0).abs();
    let n_steps = (span / step - 1e-9).ceil().max(0.0) as usize;
    let mut grid = vec![x0];
    let mut states = vec![initial.to_vec()];
    let mut s = initial.to_vec();
    for k in 1..=n_steps {
        let x_prev = x0 + dir * step * (k - 1) as f64;
        let x_next = if k == n_steps { x1 } else { x0 + dir * step * k as f64 };
        s = rk4_step(model, &s, x_next - x_prev);
        if s.iter().any(|v| !v.is_finite()) {
            return Err(CapeError::NonFiniteState { at: *grid.last().expect("non-empty") });
        }
        grid.push(x_next);
        states.push(s.clone());
    }
    Ok(Trajectory { grid, states })
}

/// States at each target (ascending from `x0`), integrating segment by segment.
pub fn integrate_to_points(
    model: &OdeModel,
    initial: &[f64],
    x0: f64,
    targets: &[f64],
    step: f64,
) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(targets.len());
    let mut x = x0;
    let mut s = initial.to_vec();
    for &t in targets {
        let tr = integrate(model, &s, x, t, step)?;
        s = tr.last().to_vec();
        x = t;
        out.push(s.clone());
    }
    Ok(out)
}
