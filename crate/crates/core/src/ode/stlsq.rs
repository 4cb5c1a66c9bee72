use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DerivativeData, OdeModel, TermLibrary};
use crate::error::{CapeError, Result};
use crate::linalg::lstsq;

fn design(library: &TermLibrary, data: &DerivativeData) -> DMatrix<f64> {
    let rows: Vec<Vec<f64>> = data.x.iter().map(|s| library.evaluate(s)).collect();
    DMatrix::from_fn(rows.len(), library.len(), |i, k| rows[i][k])
}

fn solve_on(theta: &DMatrix<f64>, target: &DVector<f64>, active: &[bool]) -> Result<(Vec<f64>, bool)> {
    let cols: Vec<usize> = (0..active.len()).filter(|&k| active[k]).collect();
    let mut full = vec![0.0; active.len()];
    if cols.is_empty() {
        return Ok((full, false));
    }
    let sub = theta.select_columns(&cols);
    let sol = lstsq(&sub, target)?;
    for (j, &k) in cols.iter().enumerate() {
        full[k] = sol.solution[j];
    }
    Ok((full, sol.rank_deficient))
}

fn check_data(library: &TermLibrary, data: &DerivativeData) -> Result<()> {
    if data.len() < 2 {
        return Err(CapeError::TooFewPoints { needed: 2, got: data.len() });
    }
    let dim = library.state_dim;
    if data.x.iter().chain(&data.dx).any(|r| r.len() != dim) {
        return Err(CapeError::InvalidArgument(format!("state rows must have {dim} entries")));
    }
    Ok(())
}

/// Sequentially thresholded least squares, one equation per state.
pub fn stlsq(
    library: &TermLibrary,
    data: &DerivativeData,
    benchmarks: &[&str],
    threshold: f64,
    max_sweeps: usize,
) -> Result<OdeModel> {
    check_data(library, data)?;
    if benchmarks.len() != library.state_dim {
        return Err(CapeError::InvalidArgument("one benchmark name per state".into()));
    }
    if !(threshold >= 0.0) {
        return Err(CapeError::InvalidArgument(format!("threshold {threshold} must be non-negative")));
    }
    let theta = design(library, data);
    let per_eq: Vec<Result<(Vec<f64>, Vec<String>)>> = (0..library.state_dim)
        .into_par_iter()
        .map(|i| {
            let target = DVector::from_iterator(data.len(), data.dx.iter().map(|r| r[i]));
            let mut active = vec![true; library.len()];
            let mut warnings = Vec::new();
            let mut deficient = false;
            let mut converged = false;
            let mut coefs = vec![0.0; library.len()];
            for _ in 0..max_sweeps.max(1) {
                let (c, rd) = solve_on(&theta, &target, &active)?;
                deficient |= rd;
                coefs = c;
                let next: Vec<bool> = active.iter().zip(&coefs).map(|(a, c)| *a && c.abs() >= threshold).collect();
                if next == active {
                    converged = true;
                    break;
                }
                active = next;
            }
            if !converged {
                warnings.push(format!("equation {}: no fixed point after {max_sweeps} sweeps", benchmarks[i]));
            }
            for c in coefs.iter_mut() {
                if c.abs() < threshold {
                    *c = 0.0;
                }
            }
            if deficient {
                warnings.push(format!(
                    "equation {}: rank-deficient design; minimum-norm solution reported",
                    benchmarks[i]
                ));
            }
            Ok((coefs, warnings))
        })
        .collect();
    let mut coefficients = Vec::with_capacity(library.state_dim);
    let mut warnings = Vec::new();
    for r in per_eq {
        let (c, w) = r?;
        coefficients.push(c);
        warnings.extend(w);
    }
    let active_counts = coefficients.iter().map(|r| r.iter().filter(|c| **c != 0.0).count()).collect();
    Ok(OdeModel {
        benchmarks: benchmarks.iter().map(|s| s.to_string()).collect(),
        library: library.clone(),
        coefficients,
        threshold_used: threshold,
        active_counts,
        fit_window: data.params_range,
        phase_tag: None,
        warnings,
    })
}

/// Least squares restricted to the model's current support.
pub fn refit_support(model: &OdeModel, data: &DerivativeData) -> Result<Vec<Vec<f64>>> {
    check_data(&model.library, data)?;
    let theta = design(&model.library, data);
    model
        .support()
        .iter()
        .enumerate()
        .map(|(i, active)| {
            let target = DVector::from_iterator(data.len(), data.dx.iter().map(|r| r[i]));
            Ok(solve_on(&theta, &target, active)?.0)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdFit {
    pub threshold: f64,
    pub active_counts: Vec<usize>,
    /// Same support and coefficient signs as the fit at the centre threshold.
    pub matches_center: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityScan {
    pub center: f64,
    pub fits: Vec<ThresholdFit>,
    pub stable: bool,
}

fn signs(m: &OdeModel) -> Vec<Vec<i8>> {
    m.coefficients.iter().map(|r| r.iter().map(|c| if *c > 0.0 { 1 } else if *c < 0.0 { -1 } else { 0 }).collect()).collect()
}

/// Refit at 9 thresholds log-spaced over one decade centred on `center`.
pub fn stability_scan(
    library: &TermLibrary,
    data: &DerivativeData,
    benchmarks: &[&str],
    center: f64,
) -> Result<StabilityScan> {
    if !(center > 0.0) {
        return Err(CapeError::InvalidArgument("scan centre must be positive".into()));
    }
    let reference = signs(&stlsq(library, data, benchmarks, center, super::DEFAULT_MAX_SWEEPS)?);
    let fits: Vec<Result<ThresholdFit>> = (0..9)
        .into_par_iter()
        .map(|k| {
            let threshold = center * 10f64.powf(-0.5 + k as f64 / 8.0);
            let m = stlsq(library, data, benchmarks, threshold, super::DEFAULT_MAX_SWEEPS)?;
            Ok(ThresholdFit { threshold, matches_center: signs(&m) == reference, active_counts: m.active_counts })
        })
        .collect();
    let fits = fits.into_iter().collect::<Result<Vec<_>>>()?;
    let stable = fits.iter().all(|f| f.matches_center);
    Ok(StabilityScan { center, fits, stable })
}
