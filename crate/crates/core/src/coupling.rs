//! Local and population coupling between two benchmarks.
//!
//! Local coupling is the ratio of score changes between consecutive model
//! sizes, `gamma = dB2 / dB1`. Its running fit
//! `gamma(N) = gamma0 * log10(N / N_c)` locates the critical scale `N_c`
//! where the coupling changes sign.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CapeError, Result};
use crate::stats::{self, ols, pearson_r, percentile, task_rng};
use crate::store::{FamilySeries, ModelRecord, Panel};

/// Below this |dB1| (0.01 pp) an interval's coupling is left undefined.
pub const EPS_DENOMINATOR: f64 = 1e-4;
/// Half-width of the transition band around zero coupling.
pub const PHASE_BAND: f64 = 0.1;
/// Records carrying this tag form the frontier cohort and are kept out of
/// the tax/transition/bonus cohorts.
pub const FRONTIER_TAG: &str = "frontier";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseLabel {
    Tax,
    Transition,
    Bonus,
    Undefined,
}

impl PhaseLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Tax => "tax",
            Self::Transition => "transition",
            Self::Bonus => "bonus",
            Self::Undefined => "undefined",
        }
    }
}

impl std::fmt::Display for PhaseLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PhaseLabel {
    type Err = CapeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tax" => Ok(Self::Tax),
            "transition" => Ok(Self::Transition),
            "bonus" => Ok(Self::Bonus),
            "undefined" => Ok(Self::Undefined),
            other => Err(CapeError::InvalidArgument(format!("unknown phase {other:?}"))),
        }
    }
}

/// Boundaries +-0.1 belong to the transition band; non-finite input is undefined.
pub fn classify_phase(gamma: f64) -> PhaseLabel {
    if !gamma.is_finite() {
        PhaseLabel::Undefined
    } else if gamma < -PHASE_BAND {
        PhaseLabel::Tax
    } else if gamma > PHASE_BAND {
        PhaseLabel::Bonus
    } else {
        PhaseLabel::Transition
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingPoint {
    pub n_mid: f64,
    /// Zero when `defined` is false.
    pub gamma: f64,
    pub defined: bool,
    pub interval: (String, String),
    pub delta_b1: f64,
    pub delta_b2: f64,
    pub phase: PhaseLabel,
}

pub fn local_coupling(series: &FamilySeries, b1: &str, b2: &str) -> Result<Vec<CouplingPoint>> {
    let s1 = series.scores(b1)?;
    let s2 = series.scores(b2)?;
    Ok(series
        .intervals()
        .iter()
        .enumerate()
        .map(|(i, iv)| {
            let d1 = s1[i + 1] - s1[i];
            let d2 = s2[i + 1] - s2[i];
            let defined = d1.abs() >= EPS_DENOMINATOR;
            let gamma = if defined { d2 / d1 } else { 0.0 };
            CouplingPoint {
                n_mid: iv.n_mid,
                gamma,
                defined,
                interval: (iv.left.name.clone(), iv.right.name.clone()),
                delta_b1: d1,
                delta_b2: d2,
                phase: if defined { classify_phase(gamma) } else { PhaseLabel::Undefined },
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningCouplingFit {
    /// Slope of gamma per decade of N.
    pub gamma0: f64,
    /// Billions.
    pub n_c: f64,
    pub intercept: f64,
    pub residual_sse: f64,
    pub n_points: usize,
    /// False when the slope is non-positive or `n_c` falls more than two
    /// decades outside the sampled range.
    pub zero_crossing: bool,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

impl RunningCouplingFit {
    pub fn gamma_at(&self, n: f64) -> f64 {
        self.gamma0 * (n / self.n_c).log10()
    }

    pub fn require_crossing(&self) -> Result<&Self> {
        if self.zero_crossing {
            Ok(self)
        } else {
            Err(CapeError::NoZeroCrossing { slope: self.gamma0, n_c: self.n_c })
        }
    }
}

/// OLS of gamma on log10(n_mid) over the defined points.
pub fn fit_running_coupling(points: &[CouplingPoint]) -> Result<RunningCouplingFit> {
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        points.iter().filter(|p| p.defined).map(|p| (p.n_mid.log10(), p.gamma)).unzip();
    if xs.len() < 2 {
        return Err(CapeError::TooFewPoints { needed: 2, got: xs.len() });
    }
    let fit = ols(&xs, &ys)?;
    let log_nc = -fit.intercept / fit.slope;
    let n_c = 10f64.powf(log_nc);
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min) - 2.0;
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 2.0;
    let zero_crossing = fit.slope > 0.0 && log_nc.is_finite() && (lo..=hi).contains(&log_nc);
    Ok(RunningCouplingFit {
        gamma0: fit.slope,
        n_c,
        intercept: fit.intercept,
        residual_sse: fit.sse,
        n_points: xs.len(),
        zero_crossing,
        ci_low: None,
        ci_high: None,
    })
}

/// The first interval where a negative coupling is followed by a non-negative one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstCrossing {
    pub before: (String, String),
    pub after: (String, String),
    /// Geometric mean of the two interval abscissas, billions.
    pub n_cross: f64,
}

pub fn first_crossing(points: &[CouplingPoint]) -> Option<FirstCrossing> {
    let defined: Vec<&CouplingPoint> = points.iter().filter(|p| p.defined).collect();
    defined.windows(2).find(|w| w[0].gamma < 0.0 && w[1].gamma >= 0.0).map(|w| FirstCrossing {
        before: w[0].interval.clone(),
        after: w[1].interval.clone(),
        n_cross: (w[0].n_mid * w[1].n_mid).sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub low: f64,
    pub high: f64,
    pub n_resamples: usize,
    pub n_fitted: usize,
    pub seed: u64,
}

/// Minimum number of resamples that must produce a zero crossing.
pub const MIN_FITTED_RESAMPLES: usize = 100;

/// Percentile bootstrap CI for `N_c`: models are drawn with replacement
/// within the family, duplicates collapse, intervals are rebuilt and refit.
pub fn bootstrap_nc_ci(
    series: &FamilySeries,
    b1: &str,
    b2: &str,
    n_resamples: usize,
    seed: u64,
) -> Result<BootstrapCi> {
    if series.len() < 4 {
        return Err(CapeError::TooFewPoints { needed: 4, got: series.len() });
    }
    // Fail early on missing benchmarks.
    series.scores(b1)?;
    series.scores(b2)?;
    let n = series.len();
    let fits: Vec<Option<f64>> = (0..n_resamples)
        .into_par_iter()
        .map(|r| {
            use rand::Rng;
            let mut rng = task_rng(seed, r as u64);
            let mut picked = vec![false; n];
            for _ in 0..n {
                picked[rng.random_range(0..n)] = true;
            }
            let models: Vec<ModelRecord> =
                series.models.iter().zip(&picked).filter(|(_, &p)| p).map(|(m, _)| m.clone()).collect();
            if models.len() < 3 {
                return None;
            }
            let resampled = FamilySeries::new(series.family.clone(), models).ok()?;
            let pts = local_coupling(&resampled, b1, b2).ok()?;
            let fit = fit_running_coupling(&pts).ok()?;
            fit.zero_crossing.then_some(fit.n_c)
        })
        .collect();
    let mut ncs: Vec<f64> = fits.into_iter().flatten().collect();
    if ncs.len() < MIN_FITTED_RESAMPLES {
        return Err(CapeError::InsufficientResamples { fitted: ncs.len(), required: MIN_FITTED_RESAMPLES });
    }
    ncs.sort_by(f64::total_cmp);
    Ok(BootstrapCi {
        low: percentile(&ncs, 0.025),
        high: percentile(&ncs, 0.975),
        n_resamples,
        n_fitted: ncs.len(),
        seed,
    })
}

/// Phase of each model in a series: the phase of the interval that ends at
/// it, or for the smallest model the interval that starts at it.
pub fn model_phases(points: &[CouplingPoint]) -> Vec<PhaseLabel> {
    if points.is_empty() {
        return Vec::new();
    }
    std::iter::once(points[0].phase).chain(points.iter().map(|p| p.phase)).collect()
}

/// Models of one coupling phase across the panel, grouped by family.
///
/// Families are analysed separately; frontier-tagged records and families
/// missing either benchmark are skipped.
pub fn phase_cohort<'a>(
    panel: &'a Panel,
    phase: PhaseLabel,
    b1: &str,
    b2: &str,
) -> BTreeMap<String, Vec<&'a ModelRecord>> {
    let mut out: BTreeMap<String, Vec<&ModelRecord>> = BTreeMap::new();
    for family in panel.families() {
        let members: Vec<ModelRecord> =
            panel.family_records(&family).into_iter().filter(|r| !r.has_tag(FRONTIER_TAG)).cloned().collect();
        let Ok(series) = FamilySeries::new(family.clone(), members) else { continue };
        let Ok(points) = local_coupling(&series, b1, b2) else { continue };
        for (model, label) in series.models.iter().zip(model_phases(&points)) {
            if label == phase {
                let original = panel
                    .records
                    .iter()
                    .find(|r| r.family == model.family && r.name == model.name)
                    .expect("record drawn from panel");
                out.entry(family.clone()).or_default().push(original);
            }
        }
    }
    out
}

/// Records tagged `frontier`, grouped by family.
pub fn frontier_cohort(panel: &Panel) -> BTreeMap<String, Vec<&ModelRecord>> {
    let mut out: BTreeMap<String, Vec<&ModelRecord>> = BTreeMap::new();
    for r in panel.records.iter().filter(|r| r.has_tag(FRONTIER_TAG)) {
        out.entry(r.family.clone()).or_default().push(r);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemeanedCorrelation {
    pub pooled_r: f64,
    pub demeaned_r: f64,
    pub n_models: usize,
    pub n_groups: usize,
}

/// Pearson r before and after subtracting each group's mean from both axes.
pub fn demeaned_correlation_groups(groups: &[Vec<(f64, f64)>]) -> Result<DemeanedCorrelation> {
    let (px, py): (Vec<f64>, Vec<f64>) = groups.iter().flatten().copied().unzip();
    let pooled_r = pearson_r(&px, &py)?;
    let mut rx = Vec::with_capacity(px.len());
    let mut ry = Vec::with_capacity(py.len());
    for g in groups.iter().filter(|g| !g.is_empty()) {
        let mx = g.iter().map(|p| p.0).sum::<f64>() / g.len() as f64;
        let my = g.iter().map(|p| p.1).sum::<f64>() / g.len() as f64;
        for &(x, y) in g {
            rx.push(x - mx);
            ry.push(y - my);
        }
    }
    let demeaned_r = pearson_r(&rx, &ry)?;
    Ok(DemeanedCorrelation {
        pooled_r,
        demeaned_r,
        n_models: px.len(),
        n_groups: groups.iter().filter(|g| !g.is_empty()).count(),
    })
}

pub fn demeaned_correlation(panel: &Panel, phase: PhaseLabel, b1: &str, b2: &str) -> Result<DemeanedCorrelation> {
    let cohort = phase_cohort(panel, phase, b1, b2);
    let qualifying = cohort.values().filter(|v| v.len() >= 2).count();
    if qualifying < 2 {
        return Err(CapeError::InsufficientPhasePopulation {
            phase: phase.to_string(),
            detail: format!("{qualifying} families with at least two models; need 2"),
        });
    }
    let groups: Vec<Vec<(f64, f64)>> = cohort
        .values()
        .map(|models| models.iter().map(|m| Ok((m.score(b1)?, m.score(b2)?))).collect::<Result<_>>())
        .collect::<Result<_>>()?;
    demeaned_correlation_groups(&groups)
}

/// Pearson r and permutation p of (b1, b2) over one phase cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationCoupling {
    pub phase: PhaseLabel,
    pub n_models: usize,
    pub n_families: usize,
    pub r: f64,
    pub permutation: stats::PermutationResult,
}

pub fn population_coupling(
    models: &[&ModelRecord],
    phase: PhaseLabel,
    b1: &str,
    b2: &str,
    n_mc: u64,
    seed: u64,
) -> Result<PopulationCoupling> {
    let xs: Vec<f64> = models.iter().map(|m| m.score(b1)).collect::<Result<_>>()?;
    let ys: Vec<f64> = models.iter().map(|m| m.score(b2)).collect::<Result<_>>()?;
    let permutation = stats::permutation_test(&xs, &ys, n_mc, seed)?;
    let mut fams: Vec<&str> = models.iter().map(|m| m.family.as_str()).collect();
    fams.sort_unstable();
    fams.dedup();
    Ok(PopulationCoupling { phase, n_models: models.len(), n_families: fams.len(), r: permutation.r_observed, permutation })
}
