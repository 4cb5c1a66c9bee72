//! Shape of the benchmark manifold: PCA per cohort, participation ratio,
//! eigenvalue and eigenvector traces across scale.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::{frontier_cohort, phase_cohort, PhaseLabel};
use crate::error::{CapeError, Result};
use crate::stats::{ols, percentile, task_rng};
use crate::store::{FamilySeries, ModelRecord, Panel, HELLASWAG, TRUTHFULQA};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PcaKind {
    #[default]
    Covariance,
    Correlation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaResult {
    /// Descending, non-negative.
    pub eigenvalues: Vec<f64>,
    /// `eigenvectors[i]` pairs with `eigenvalues[i]`; components follow `benchmark_order`.
    pub eigenvectors: Vec<Vec<f64>>,
    pub n_models: usize,
    pub phase: Option<PhaseLabel>,
    pub benchmark_order: Vec<String>,
    pub kind: PcaKind,
}

impl PcaResult {
    pub fn participation_ratio(&self) -> Result<f64> {
        participation_ratio(&self.eigenvalues)
    }

    fn axis(&self, benchmark: &str) -> Option<usize> {
        self.benchmark_order.iter().position(|b| b == benchmark)
    }
}

/// Flip `v` so its loading on `anchor` is non-negative; if that loading is
/// zero, the first non-zero component decides.
fn apply_sign_convention(v: &mut [f64], anchor: usize) {
    let pivot = if v[anchor].abs() > 1e-12 {
        v[anchor]
    } else {
        v.iter().copied().find(|x| x.abs() > 1e-12).unwrap_or(0.0)
    };
    if pivot < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// PCA of a score matrix (rows = models) over the given benchmark axes.
pub fn pca(models: &[&ModelRecord], benchmarks: &[&str], kind: PcaKind) -> Result<PcaResult> {
    let n = models.len();
    let d = benchmarks.len();
    if n < 3 {
        return Err(CapeError::InsufficientPhasePopulation {
            phase: "cohort".into(),
            detail: format!("{n} models; PCA needs at least 3"),
        });
    }
    let mut data = DMatrix::<f64>::zeros(n, d);
    for (i, m) in models.iter().enumerate() {
        for (j, b) in benchmarks.iter().enumerate() {
            data[(i, j)] = m.score(b)?;
        }
    }
    for j in 0..d {
        let mean = data.column(j).mean();
        data.column_mut(j).add_scalar_mut(-mean);
    }
    let mut cov = data.transpose() * &data / (n as f64 - 1.0);
    if kind == PcaKind::Correlation {
        let sd: Vec<f64> = (0..d).map(|j| cov[(j, j)].sqrt()).collect();
        if sd.iter().any(|s| *s <= 0.0) {
            return Err(CapeError::DegenerateVariance("a benchmark is constant across the cohort".into()));
        }
        for i in 0..d {
            for j in 0..d {
                cov[(i, j)] /= sd[i] * sd[j];
            }
        }
    }
    let trace = cov.trace();
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let floor = 1e-14 * trace.abs().max(f64::MIN_POSITIVE);
    let anchor = benchmarks.iter().position(|b| *b == HELLASWAG).unwrap_or(0);
    let eigenvalues = order
        .iter()
        .map(|&k| {
            let v = eig.eigenvalues[k];
            if v.abs() <= floor { 0.0 } else { v.max(0.0) }
        })
        .collect();
    let eigenvectors = order
        .iter()
        .map(|&k| {
            let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
            apply_sign_convention(&mut v, anchor);
            v
        })
        .collect();
    Ok(PcaResult {
        eigenvalues,
        eigenvectors,
        n_models: n,
        phase: None,
        benchmark_order: benchmarks.iter().map(|s| s.to_string()).collect(),
        kind,
    })
}

/// Covariance PCA of one coupling phase's cohort (phase assigned on the
/// HellaSwag/TruthfulQA pair).
pub fn phase_pca(panel: &Panel, phase: PhaseLabel, benchmarks: &[&str]) -> Result<PcaResult> {
    let cohort = phase_cohort(panel, phase, HELLASWAG, TRUTHFULQA);
    let models: Vec<&ModelRecord> = cohort.values().flatten().copied().collect();
    if models.len() < 3 {
        return Err(CapeError::InsufficientPhasePopulation {
            phase: phase.to_string(),
            detail: format!("{} models in phase; need 3", models.len()),
        });
    }
    let mut res = pca(&models, benchmarks, PcaKind::Covariance)?;
    res.phase = Some(phase);
    Ok(res)
}

/// Covariance PCA over frontier-tagged base records.
pub fn frontier_pca(panel: &Panel, benchmarks: &[&str]) -> Result<PcaResult> {
    let models: Vec<&ModelRecord> = frontier_cohort(panel).values().flatten().copied().collect();
    pca(&models, benchmarks, PcaKind::Covariance)
}

/// `(sum lambda)^2 / sum lambda^2`.
pub fn participation_ratio(eigenvalues: &[f64]) -> Result<f64> {
    let s: f64 = eigenvalues.iter().sum();
    let s2: f64 = eigenvalues.iter().map(|l| l * l).sum();
    if !eigenvalues.iter().any(|&l| l > 0.0) || s2 <= 0.0 {
        return Err(CapeError::AllZeroSpectrum);
    }
    Ok(s * s / s2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipationCi {
    pub low: f64,
    pub high: f64,
    pub n_resamples: usize,
    pub n_fitted: usize,
}

/// Family-stratified bootstrap of the participation ratio: each family is
/// resampled with replacement to its own size, then the cohort is pooled.
pub fn bootstrap_participation_ci(
    groups: &BTreeMap<String, Vec<&ModelRecord>>,
    benchmarks: &[&str],
    n_resamples: usize,
    seed: u64,
) -> Result<ParticipationCi> {
    let families: Vec<&Vec<&ModelRecord>> = groups.values().filter(|g| !g.is_empty()).collect();
    let values: Vec<Option<f64>> = (0..n_resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = task_rng(seed, r as u64);
            let mut pooled: Vec<&ModelRecord> = Vec::new();
            for g in &families {
                for _ in 0..g.len() {
                    pooled.push(g[rng.random_range(0..g.len())]);
                }
            }
            pca(&pooled, benchmarks, PcaKind::Covariance).ok()?.participation_ratio().ok()
        })
        .collect();
    let mut v: Vec<f64> = values.into_iter().flatten().collect();
    if v.is_empty() {
        return Err(CapeError::InsufficientResamples { fitted: 0, required: 1 });
    }
    v.sort_by(f64::total_cmp);
    Ok(ParticipationCi {
        low: percentile(&v, 0.025),
        high: percentile(&v, 0.975),
        n_resamples,
        n_fitted: v.len(),
    })
}

/// PCA over every run of `window` consecutive models; the abscissa of each
/// window is the geometric mean of its sizes.
pub fn sliding_pca(
    series: &FamilySeries,
    benchmarks: &[&str],
    window: usize,
    kind: PcaKind,
) -> Result<Vec<(f64, PcaResult)>> {
    if window < 3 || series.len() < window {
        return Err(CapeError::TooFewPoints { needed: window.max(3), got: series.len() });
    }
    series
        .models
        .windows(window)
        .map(|w| {
            let refs: Vec<&ModelRecord> = w.iter().collect();
            let n = (w.iter().map(|m| m.params.ln()).sum::<f64>() / w.len() as f64).exp();
            Ok((n, pca(&refs, benchmarks, kind)?))
        })
        .collect()
}

/// Exponent and R^2 of `lambda2 ~ N^exponent` (OLS in log-log space).
pub fn lambda2_powerlaw(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(CapeError::TooFewPoints { needed: 2, got: points.len() });
    }
    if let Some(&(n, l)) = points.iter().find(|(n, l)| *n <= 0.0 || *l <= 0.0) {
        return Err(CapeError::NonPositiveValue { value: if n <= 0.0 { n } else { l } });
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().map(|(n, l)| (n.log10(), l.log10())).unzip();
    let fit = ols(&xs, &ys)?;
    Ok((fit.slope, fit.r_squared))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationPoint {
    pub n: f64,
    /// Angle of e2 in the (HellaSwag, TruthfulQA) plane, radians.
    pub theta: f64,
    pub tqa_loading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationTrace {
    pub points: Vec<RotationPoint>,
    pub theta_star: Option<f64>,
}

pub fn eigenvector_rotation(per_scale: &[(f64, PcaResult)]) -> Result<RotationTrace> {
    if per_scale.len() < 3 {
        return Err(CapeError::TooFewPoints { needed: 3, got: per_scale.len() });
    }
    let order = &per_scale[0].1.benchmark_order;
    if per_scale.iter().any(|(_, p)| &p.benchmark_order != order) {
        return Err(CapeError::InconsistentBasisOrder);
    }
    let first = &per_scale[0].1;
    let (Some(hs), Some(tqa)) = (first.axis(HELLASWAG), first.axis(TRUTHFULQA)) else {
        return Err(CapeError::InvalidArgument("rotation needs hellaswag and truthfulqa_mc1 axes".into()));
    };
    let points = per_scale
        .iter()
        .map(|(n, p)| {
            let mut e2 = p.eigenvectors.get(1).cloned().ok_or(CapeError::TooFewPoints { needed: 2, got: 1 })?;
            apply_sign_convention(&mut e2, hs);
            let mut theta = e2[tqa].atan2(e2[hs]);
            if theta <= -std::f64::consts::FRAC_PI_2 {
                theta += std::f64::consts::PI;
            }
            Ok(RotationPoint { n: *n, theta, tqa_loading: e2[tqa] })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RotationTrace { points, theta_star: None })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiccatiFit {
    /// `dtheta/dlog10N = a + b theta + c theta^2`.
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub theta_star: f64,
    pub sin_theta_star: f64,
    /// True when the flow converges toward `theta_star`.
    pub stable: bool,
}

/// Fit the quadratic rotation flow to finite differences of the trace and
/// return its attracting root.
pub fn riccati_fixed_point(trace: &RotationTrace) -> Result<RiccatiFit> {
    let pts = &trace.points;
    if pts.len() < 4 {
        return Err(CapeError::TooFewPoints { needed: 4, got: pts.len() });
    }
    let mut rows = Vec::with_capacity(pts.len() - 1);
    for w in pts.windows(2) {
        let dx = w[1].n.log10() - w[0].n.log10();
        if dx <= 0.0 {
            return Err(CapeError::DegenerateSpacing("trace scales must increase".into()));
        }
        let theta = 0.5 * (w[0].theta + w[1].theta);
        rows.push((theta, (w[1].theta - w[0].theta) / dx));
    }
    let design = DMatrix::from_fn(rows.len(), 3, |i, j| rows[i].0.powi(j as i32));
    let target = nalgebra::DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
    let coef = crate::linalg::lstsq(&design, &target)?.solution;
    let (a, b, c) = (coef[0], coef[1], coef[2]);
    let half_pi = std::f64::consts::FRAC_PI_2;
    let in_range = |t: f64| t > -half_pi && t <= half_pi;
    let slope_at = |t: f64| b + 2.0 * c * t;

    let roots: Vec<f64> = if c.abs() < 1e-12 * (a.abs() + b.abs()).max(1e-300) {
        if b == 0.0 {
            return Err(CapeError::DegenerateRegressor("flow is constant".into()));
        }
        vec![-a / b]
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            return Err(CapeError::NoRealRoot { real_part: -b / (2.0 * c) });
        }
        let sq = disc.sqrt();
        // Numerically stable pair.
        let q = -0.5 * (b + b.signum() * sq);
        let mut r = vec![q / c];
        if q != 0.0 {
            r.push(a / q);
        }
        r
    };
    let pick = roots
        .iter()
        .copied()
        .filter(|&t| in_range(t) && slope_at(t) < 0.0)
        .min_by(|x, y| x.abs().total_cmp(&y.abs()))
        .or_else(|| roots.iter().copied().filter(|&t| in_range(t)).min_by(|x, y| x.abs().total_cmp(&y.abs())))
        .or_else(|| roots.iter().copied().min_by(|x, y| x.abs().total_cmp(&y.abs())))
        .expect("at least one root");
    Ok(RiccatiFit { a, b, c, theta_star: pick, sin_theta_star: pick.sin(), stable: slope_at(pick) < 0.0 })
}

/// `M[i][j] = |e_i(tax) . e_j(bonus)|`.
pub fn phase_transfer_matrix(tax: &PcaResult, bonus: &PcaResult) -> Result<Vec<Vec<f64>>> {
    if tax.benchmark_order != bonus.benchmark_order {
        return Err(CapeError::InconsistentBasisOrder);
    }
    Ok(tax
        .eigenvectors
        .iter()
        .map(|ei| bonus.eigenvectors.iter().map(|ej| ei.iter().zip(ej).map(|(a, b)| a * b).sum::<f64>().abs()).collect())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetExtrapolation {
    pub slope: f64,
    pub intercept: f64,
    /// Billions.
    pub n_zero: f64,
}

/// Linear fit of `det = lambda1 * lambda2` against log10 N and its forward root.
pub fn det_extrapolation(points: &[(f64, f64, f64)]) -> Result<DetExtrapolation> {
    if points.len() < 3 {
        return Err(CapeError::TooFewPoints { needed: 3, got: points.len() });
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().map(|(n, l1, l2)| (n.log10(), l1 * l2)).unzip();
    let fit = ols(&xs, &ys)?;
    if fit.slope >= 0.0 {
        return Err(CapeError::NonDecreasingDeterminant { slope: fit.slope });
    }
    Ok(DetExtrapolation { slope: fit.slope, intercept: fit.intercept, n_zero: 10f64.powf(-fit.intercept / fit.slope) })
}
