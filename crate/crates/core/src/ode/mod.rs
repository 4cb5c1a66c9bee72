//! Sparse discovery and integration of coupled benchmark dynamics
//! `dB_i / dlog10 N = f_i(B)` over a polynomial candidate library.

mod integrate;
mod predict;
mod stlsq;

pub use integrate::{integrate, integrate_to_points, Trajectory};
pub use predict::{
    cross_predict, gamma_fixed_point, per_phase_coefficients, polynomial_baseline, BaselinePrediction,
    CrossPrediction, GammaFixedPoint, PhaseCoefficients,
};
pub use stlsq::{refit_support, stability_scan, stlsq, StabilityScan, ThresholdFit};

use serde::{Deserialize, Serialize};

use crate::coupling::PhaseLabel;
use crate::error::{CapeError, Result};
use crate::store::FamilySeries;

pub const DEFAULT_THRESHOLD: f64 = 0.1;
pub const DEFAULT_MAX_SWEEPS: usize = 20;
pub const DEFAULT_STEP: f64 = 0.01;
pub const DEFAULT_MAX_DEGREE: usize = 3;

/// Monomials up to a total degree, each stored as a sorted list of state
/// indices (`[]` is the constant, `[0, 0, 2]` is `B0^2 B2`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermLibrary {
    pub state_dim: usize,
    pub max_degree: usize,
    pub terms: Vec<Vec<usize>>,
}

impl TermLibrary {
    pub fn new(state_dim: usize, max_degree: usize) -> Self {
        let mut terms = vec![Vec::new()];
        let mut previous: Vec<Vec<usize>> = vec![Vec::new()];
        for _ in 0..max_degree {
            let mut next = Vec::new();
            for t in &previous {
                let start = t.last().copied().unwrap_or(0);
                for j in start..state_dim {
                    let mut m = t.clone();
                    m.push(j);
                    next.push(m);
                }
            }
            terms.extend(next.iter().cloned());
            previous = next;
        }
        Self { state_dim, max_degree, terms }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn evaluate(&self, state: &[f64]) -> Vec<f64> {
        self.terms.iter().map(|t| t.iter().map(|&j| state[j]).product()).collect()
    }

    pub fn term_name(&self, k: usize, names: &[String]) -> String {
        let t = &self.terms[k];
        if t.is_empty() {
            return "1".into();
        }
        t.iter().map(|&j| names.get(j).cloned().unwrap_or_else(|| format!("B{j}"))).collect::<Vec<_>>().join("*")
    }

    pub fn term_index(&self, monomial: &[usize]) -> Option<usize> {
        let mut m = monomial.to_vec();
        m.sort_unstable();
        self.terms.iter().position(|t| *t == m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdeModel {
    pub benchmarks: Vec<String>,
    pub library: TermLibrary,
    /// `state_dim x n_terms`, fraction units per decade of log10 N.
    pub coefficients: Vec<Vec<f64>>,
    pub threshold_used: f64,
    pub active_counts: Vec<usize>,
    /// Parameter range of the training data, billions.
    pub fit_window: (f64, f64),
    pub phase_tag: Option<PhaseLabel>,
    pub warnings: Vec<String>,
}

impl OdeModel {
    pub fn rhs(&self, state: &[f64]) -> Vec<f64> {
        let theta = self.library.evaluate(state);
        self.coefficients.iter().map(|row| row.iter().zip(&theta).map(|(c, t)| c * t).sum()).collect()
    }

    pub fn coefficient(&self, equation: usize, monomial: &[usize]) -> f64 {
        self.library.term_index(monomial).map_or(0.0, |k| self.coefficients[equation][k])
    }

    pub fn support(&self) -> Vec<Vec<bool>> {
        self.coefficients.iter().map(|row| row.iter().map(|c| *c != 0.0).collect()).collect()
    }

    /// Human-readable right-hand sides, one per equation.
    pub fn equations(&self) -> Vec<String> {
        self.coefficients
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let terms: Vec<String> = row
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| **c != 0.0)
                    .map(|(k, c)| format!("{c:+.4}*{}", self.library.term_name(k, &self.benchmarks)))
                    .collect();
                let rhs = if terms.is_empty() { "0".to_string() } else { terms.join(" ") };
                format!("d{}/dlog10N = {rhs}", self.benchmarks[i])
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text).map_err(|e| CapeError::InvalidArgument(format!("model JSON: {e}")))?;
        let n = m.library.len();
        if m.coefficients.len() != m.library.state_dim
            || m.benchmarks.len() != m.library.state_dim
            || m.coefficients.iter().any(|r| r.len() != n)
            || m.library != TermLibrary::new(m.library.state_dim, m.library.max_degree)
        {
            return Err(CapeError::InconsistentBasisOrder);
        }
        Ok(m)
    }
}

/// Regression samples: states at interval midpoints and forward differences.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DerivativeData {
    /// Endpoint-mean state per interval.
    pub x: Vec<Vec<f64>>,
    /// `Delta B / Delta log10 N` per interval.
    pub dx: Vec<Vec<f64>>,
    pub log_n_mid: Vec<f64>,
    pub params_range: (f64, f64),
}

impl DerivativeData {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn extend(&mut self, other: DerivativeData) {
        if self.is_empty() {
            *self = other;
            return;
        }
        self.params_range = (self.params_range.0.min(other.params_range.0), self.params_range.1.max(other.params_range.1));
        self.x.extend(other.x);
        self.dx.extend(other.dx);
        self.log_n_mid.extend(other.log_n_mid);
    }

    pub fn subset(&self, rows: &[usize]) -> DerivativeData {
        DerivativeData {
            x: rows.iter().map(|&i| self.x[i].clone()).collect(),
            dx: rows.iter().map(|&i| self.dx[i].clone()).collect(),
            log_n_mid: rows.iter().map(|&i| self.log_n_mid[i]).collect(),
            params_range: self.params_range,
        }
    }
}

pub fn finite_differences(series: &FamilySeries, benchmarks: &[&str]) -> Result<DerivativeData> {
    if series.len() < 2 {
        return Err(CapeError::SingletonFamily(series.family.clone()));
    }
    let cols: Vec<Vec<f64>> = benchmarks.iter().map(|b| series.scores(b)).collect::<Result<_>>()?;
    let logn: Vec<f64> = series.models.iter().map(|m| m.log10_params()).collect();
    let mut out = DerivativeData {
        params_range: (series.models[0].params, series.models[series.len() - 1].params),
        ..Default::default()
    };
    for i in 0..series.len() - 1 {
        let h = logn[i + 1] - logn[i];
        out.x.push(cols.iter().map(|c| 0.5 * (c[i] + c[i + 1])).collect());
        out.dx.push(cols.iter().map(|c| (c[i + 1] - c[i]) / h).collect());
        out.log_n_mid.push(0.5 * (logn[i] + logn[i + 1]));
    }
    Ok(out)
}

pub fn pooled_differences(series: &[&FamilySeries], benchmarks: &[&str]) -> Result<DerivativeData> {
    let mut out = DerivativeData::default();
    for s in series {
        out.extend(finite_differences(s, benchmarks)?);
    }
    Ok(out)
}
