//! Command bodies shared by the CLI and the HTTP API. Everything here is a
//! pure function of the panel and the parameters.

use std::path::Path;

use cape_core::coupling::{
    demeaned_correlation, first_crossing, model_phases, phase_cohort, population_coupling, DemeanedCorrelation,
    FirstCrossing, PopulationCoupling,
};
use cape_core::data::{default_panel, load_panel_dir};
use cape_core::field::{
    calibrate_isocline, frontier_points, frontier_regression, h_field, isocline_sign_predict, loo_lab_mae,
    FrontierRegression, HField, IsoclineCalibration, IsoclineReport, LOO_MIN_MODELS,
};
use cape_core::geometry::{frontier_pca, phase_pca};
use cape_core::ode::{
    cross_predict, finite_differences, integrate, polynomial_baseline, pooled_differences, stability_scan, stlsq,
    BaselinePrediction, CrossPrediction, StabilityScan, DEFAULT_MAX_DEGREE, DEFAULT_MAX_SWEEPS, DEFAULT_STEP,
    DEFAULT_THRESHOLD,
};
use cape_core::scaling::{norm_id, width_normalize_series};
use cape_core::stats::{ols, pearson_r};
use cape_core::store::{ingest_frontier, ingest_table};
use cape_core::{
    bootstrap_nc_ci, fit_running_coupling, local_coupling, BootstrapCi, CapeError, CouplingPoint, FamilySeries,
    FrontierRecord, OdeModel, Panel, PhaseLabel, Result, RunningCouplingFit, TableFormat, TermLibrary, Trajectory,
    CORE_BENCHMARKS, HELLASWAG, TRUTHFULQA,
};
use serde::{Deserialize, Serialize};

use crate::plot::{self, PlotSeries};

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_RESAMPLES: usize = 1000;
pub const DEFAULT_D_REF: u32 = 512;
pub const DEFAULT_BOUNDARY_MODEL: &str = "olmo-1b";
/// Monte Carlo draws for permutation tests above the exact-enumeration size.
pub const PERMUTATION_DRAWS: u64 = 10_000;

/// Bundled/`CAPE_DATA_DIR` panel when `path` is `None`, a data directory, or
/// a single base table (CSV or JSON by extension).
pub fn load_panel(path: Option<&Path>) -> Result<Panel> {
    let Some(path) = path else { return default_panel() };
    if path.is_dir() {
        return load_panel_dir(path);
    }
    let text = read_text(path)?;
    let mut panel = ingest_table(&text, TableFormat::from_path(path))?;
    panel.metadata.provenance.push(path.display().to_string());
    Ok(panel)
}

pub fn load_frontier(path: Option<&Path>) -> Result<Vec<FrontierRecord>> {
    match path {
        None => Ok(default_panel()?.frontier),
        Some(p) if p.is_dir() => Ok(load_panel_dir(p)?.frontier),
        Some(p) => Ok(ingest_frontier(&read_text(p)?, TableFormat::from_path(p))?.0),
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CapeError::Io(format!("{}: {e}", path.display())))
}

fn default_pair() -> (String, String) {
    (HELLASWAG.to_string(), TRUTHFULQA.to_string())
}

fn default_resamples() -> usize {
    DEFAULT_RESAMPLES
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

fn default_benchmarks() -> Vec<String> {
    CORE_BENCHMARKS.iter().map(|s| s.to_string()).collect()
}

fn default_train() -> Vec<String> {
    vec!["pythia".to_string()]
}

fn default_width_mult() -> f64 {
    1.0
}

fn family_or_404(panel: &Panel, family: &str) -> Result<FamilySeries> {
    if !panel.families().iter().any(|f| f == family) {
        return Err(CapeError::UnknownFamily(family.to_string()));
    }
    panel.family_series(family)
}

// ---------------------------------------------------------------- diagnose

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseParams {
    #[serde(default)]
    pub family: Option<String>,
    #[serde(default = "default_pair")]
    pub pair: (String, String),
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_resamples")]
    pub resamples: usize,
}

impl Default for DiagnoseParams {
    fn default() -> Self {
        Self { family: None, pair: default_pair(), seed: None, resamples: DEFAULT_RESAMPLES }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidthRerun {
    pub d_ref: u32,
    pub raw_r: Option<f64>,
    pub normalized_r: Option<f64>,
    pub sign_flip: bool,
    pub points: Vec<CouplingPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyDiagnosis {
    pub family: String,
    pub models: Vec<String>,
    pub params_b: Vec<f64>,
    pub points: Vec<CouplingPoint>,
    /// One label per model.
    pub model_phases: Vec<PhaseLabel>,
    pub phase_sequence: Vec<PhaseLabel>,
    pub pearson_r: Option<f64>,
    pub running_fit: Option<RunningCouplingFit>,
    pub first_crossing: Option<FirstCrossing>,
    pub bootstrap: Option<BootstrapCi>,
    pub width_normalized: Option<WidthRerun>,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePopulation {
    pub phase: PhaseLabel,
    pub n_models: usize,
    pub n_families: usize,
    pub coupling: Option<PopulationCoupling>,
    pub participation_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSummary {
    pub phases: Vec<PhasePopulation>,
    pub frontier_participation_ratio: Option<f64>,
    pub bonus_demeaned: Option<DemeanedCorrelation>,
    pub flags: Vec<String>,
}

/// Everything in a diagnosis except the wall-clock timestamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisBody {
    pub toolkit_version: String,
    pub panel_digest: String,
    pub seed: u64,
    pub pair: (String, String),
    pub resamples: usize,
    pub families: Vec<FamilyDiagnosis>,
    pub population: PopulationSummary,
    pub plots: Vec<PlotSeries>,
}

fn diagnose_family(series: &FamilySeries, pair: (&str, &str), seed: u64, resamples: usize) -> Result<FamilyDiagnosis> {
    let (b1, b2) = pair;
    let points = local_coupling(series, b1, b2)?;
    let mut flags = Vec::new();
    let pearson = if series.len() >= 2 { pearson_r(&series.scores(b1)?, &series.scores(b2)?).ok() } else { None };
    let running_fit = match fit_running_coupling(&points) {
        Ok(f) if f.zero_crossing => Some(f),
        Ok(f) => {
            flags.push(format!("no forward zero crossing (slope {:.4}); N_c not reported", f.gamma0));
            None
        }
        Err(e) => {
            flags.push(format!("no N_c fit: {e}"));
            None
        }
    };
    let bootstrap = match &running_fit {
        Some(_) if series.len() >= 4 => match bootstrap_nc_ci(series, b1, b2, resamples, seed) {
            Ok(ci) => Some(ci),
            Err(e) => {
                flags.push(format!("bootstrap skipped: {e}"));
                None
            }
        },
        Some(_) => {
            flags.push("bootstrap skipped: fewer than 4 models".into());
            None
        }
        None => None,
    };
    let running_fit = running_fit.map(|mut f| {
        if let Some(ci) = &bootstrap {
            f.ci_low = Some(ci.low);
            f.ci_high = Some(ci.high);
        }
        f
    });
    if points.iter().any(|p| !p.defined) {
        flags.push("interval with |dB1| below the denominator floor: coupling undefined".into());
    }
    let width_normalized = match width_normalize_series(series, DEFAULT_D_REF) {
        Ok(norm) => {
            let (n1, n2) = (norm_id(b1), norm_id(b2));
            let normalized_r = pearson_r(&norm.scores(&n1)?, &norm.scores(&n2)?).ok();
            Some(WidthRerun {
                d_ref: DEFAULT_D_REF,
                raw_r: pearson,
                normalized_r,
                sign_flip: matches!((pearson, normalized_r), (Some(a), Some(b)) if a * b < 0.0),
                points: local_coupling(&norm, &n1, &n2)?,
            })
        }
        Err(e) => {
            flags.push(format!("width normalization skipped: {e}"));
            None
        }
    };
    Ok(FamilyDiagnosis {
        family: series.family.clone(),
        models: series.models.iter().map(|m| m.name.clone()).collect(),
        params_b: series.params(),
        model_phases: model_phases(&points),
        phase_sequence: points.iter().map(|p| p.phase).collect(),
        first_crossing: first_crossing(&points),
        points,
        pearson_r: pearson,
        running_fit,
        bootstrap,
        width_normalized,
        flags,
    })
}

fn population(panel: &Panel, b1: &str, b2: &str, seed: u64) -> PopulationSummary {
    let mut flags = Vec::new();
    let mut phases = Vec::new();
    for phase in [PhaseLabel::Tax, PhaseLabel::Transition, PhaseLabel::Bonus] {
        let cohort = phase_cohort(panel, phase, b1, b2);
        let models: Vec<_> = cohort.values().flatten().copied().collect();
        let coupling = match population_coupling(&models, phase, b1, b2, PERMUTATION_DRAWS, seed) {
            Ok(c) => Some(c),
            Err(e) => {
                flags.push(format!("{phase} coupling skipped: {e}"));
                None
            }
        };
        let participation_ratio = match phase_pca(panel, phase, &CORE_BENCHMARKS).and_then(|p| p.participation_ratio()) {
            Ok(v) => Some(v),
            Err(e) => {
                flags.push(format!("{phase} participation ratio skipped: {e}"));
                None
            }
        };
        phases.push(PhasePopulation { phase, n_models: models.len(), n_families: cohort.len(), coupling, participation_ratio });
    }
    let frontier_participation_ratio = match frontier_pca(panel, &CORE_BENCHMARKS).and_then(|p| p.participation_ratio()) {
        Ok(v) => Some(v),
        Err(e) => {
            flags.push(format!("frontier participation ratio skipped: {e}"));
            None
        }
    };
    let bonus_demeaned = match demeaned_correlation(panel, PhaseLabel::Bonus, b1, b2) {
        Ok(d) => Some(d),
        Err(e) => {
            flags.push(format!("de-meaned bonus correlation skipped: {e}"));
            None
        }
    };
    PopulationSummary { phases, frontier_participation_ratio, bonus_demeaned, flags }
}

/// Coupling, phases, critical scale and bootstrap per family, plus the
/// phase-cohort statistics of the whole panel.
pub fn diagnose(panel: &Panel, params: &DiagnoseParams, seed: u64) -> Result<DiagnosisBody> {
    let pair = (params.pair.0.as_str(), params.pair.1.as_str());
    let names: Vec<String> = match &params.family {
        Some(f) => {
            family_or_404(panel, f)?;
            vec![f.clone()]
        }
        None => panel.families(),
    };
    let mut families = Vec::new();
    for name in &names {
        match panel.family_series(name) {
            Ok(s) if s.len() >= 2 => families.push(diagnose_family(&s, pair, seed, params.resamples)?),
            Ok(_) | Err(CapeError::SingletonFamily(_)) if params.family.is_none() => continue,
            Ok(_) => return Err(CapeError::SingletonFamily(name.clone())),
            Err(e) => return Err(e),
        }
    }
    let plots = families.iter().map(|f| plot::phase_diagram(panel, f, pair)).collect::<Result<Vec<_>>>()?;
    Ok(DiagnosisBody {
        toolkit_version: cape_core::VERSION.to_string(),
        panel_digest: crate::report::panel_digest(panel),
        seed,
        pair: params.pair.clone(),
        resamples: params.resamples,
        families,
        population: population(panel, pair.0, pair.1, seed),
        plots,
    })
}

// ---------------------------------------------------------------- ode

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitOdeParams {
    #[serde(default = "default_train")]
    pub families: Vec<String>,
    #[serde(default = "default_benchmarks")]
    pub benchmarks: Vec<String>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

impl Default for FitOdeParams {
    fn default() -> Self {
        Self { families: default_train(), benchmarks: default_benchmarks(), threshold: DEFAULT_THRESHOLD }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdeFitReport {
    pub families: Vec<String>,
    pub n_samples: usize,
    pub equations: Vec<String>,
    pub active_counts: Vec<usize>,
    pub stability: StabilityScan,
    pub warnings: Vec<String>,
    pub model: OdeModel,
}

pub fn fit_ode(panel: &Panel, params: &FitOdeParams) -> Result<OdeFitReport> {
    if params.families.is_empty() {
        return Err(CapeError::InvalidArgument("at least one training family".into()));
    }
    let series = params.families.iter().map(|f| family_or_404(panel, f)).collect::<Result<Vec<_>>>()?;
    let refs: Vec<&FamilySeries> = series.iter().collect();
    let benches: Vec<&str> = params.benchmarks.iter().map(String::as_str).collect();
    let data = pooled_differences(&refs, &benches)?;
    let library = TermLibrary::new(benches.len(), DEFAULT_MAX_DEGREE);
    let model = stlsq(&library, &data, &benches, params.threshold, DEFAULT_MAX_SWEEPS)?;
    let stability = stability_scan(&library, &data, &benches, params.threshold.max(f64::MIN_POSITIVE))?;
    let mut warnings = model.warnings.clone();
    if model.active_counts.iter().all(|&k| k == 0) {
        warnings.push("all coefficients are zero: the training data carry no resolvable dynamics".into());
    }
    if !stability.stable {
        warnings.push("support changes within a decade of the threshold".into());
    }
    Ok(OdeFitReport {
        families: params.families.clone(),
        n_samples: data.len(),
        equations: model.equations(),
        active_counts: model.active_counts.clone(),
        stability,
        warnings,
        model,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictReport {
    pub holdout: String,
    pub cross: CrossPrediction,
    pub baseline: Option<BaselinePrediction>,
    pub beats_baseline: Option<bool>,
    pub plots: Vec<PlotSeries>,
}

/// Integrate `model` across `holdout`; the polynomial baseline is fit on
/// `baseline_train` when given.
pub fn predict(
    model: &OdeModel,
    holdout: &FamilySeries,
    baseline_train: &[&FamilySeries],
    degree: usize,
) -> Result<PredictReport> {
    let cross = cross_predict(model, holdout, DEFAULT_STEP)?;
    let baseline = if baseline_train.is_empty() {
        None
    } else {
        let names: Vec<&str> = model.benchmarks.iter().map(String::as_str).collect();
        Some(polynomial_baseline(baseline_train, holdout, &names, degree)?)
    };
    let beats_baseline = baseline.as_ref().map(|b| cross.mae_percent < b.mae_percent);
    let plots = plot::trajectory_series(&cross, &model.benchmarks);
    Ok(PredictReport { holdout: holdout.family.clone(), cross, baseline, beats_baseline, plots })
}

// ---------------------------------------------------------------- isocline

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IsoclineParams {
    #[serde(default)]
    pub boundary_model: Option<String>,
    #[serde(default = "default_pair")]
    pub pair: (String, String),
    /// Defaults to every family with at least two models.
    #[serde(default)]
    pub families: Vec<String>,
    #[serde(default)]
    pub above_is_positive: Option<bool>,
}

impl Default for IsoclineParams {
    fn default() -> Self {
        Self { boundary_model: None, pair: default_pair(), families: Vec::new(), above_is_positive: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsoclineSummary {
    pub calibration: IsoclineCalibration,
    pub reports: Vec<IsoclineReport>,
    pub hits: usize,
    pub counted: usize,
}

pub fn isocline(panel: &Panel, params: &IsoclineParams) -> Result<IsoclineSummary> {
    let boundary_name = params.boundary_model.as_deref().unwrap_or(DEFAULT_BOUNDARY_MODEL);
    let boundary = panel
        .records
        .iter()
        .find(|r| r.name == boundary_name)
        .ok_or_else(|| CapeError::InvalidArgument(format!("boundary model {boundary_name:?} not in panel")))?;
    let mut calibration = calibrate_isocline(boundary, &params.pair.0, &params.pair.1)?;
    if let Some(o) = params.above_is_positive {
        calibration.above_is_positive = o;
    }
    let names = if params.families.is_empty() { panel.families() } else { params.families.clone() };
    let mut reports = Vec::new();
    for name in &names {
        let series = family_or_404(panel, name);
        match series {
            Ok(s) if s.len() >= 2 => reports.push(isocline_sign_predict(&s, &calibration)?),
            Ok(_) | Err(CapeError::SingletonFamily(_)) if params.families.is_empty() => continue,
            Ok(_) => return Err(CapeError::SingletonFamily(name.clone())),
            Err(e) => return Err(e),
        }
    }
    let hits = reports.iter().map(|r| r.hits).sum();
    let counted = reports.iter().map(|r| r.counted).sum();
    Ok(IsoclineSummary { calibration, reports, hits, counted })
}

// ---------------------------------------------------------------- frontier

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrontierParams {
    /// Replaces the panel's frontier table when present.
    #[serde(default)]
    pub records: Option<Vec<FrontierRecord>>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierReport {
    pub n: usize,
    pub n_labs: usize,
    pub beta1: Option<f64>,
    pub beta0: Option<f64>,
    pub regression: Option<FrontierRegression>,
    pub h_field: Option<HField>,
    pub loo: Option<cape_core::field::LooReport>,
    pub warnings: Vec<String>,
    pub plots: Vec<PlotSeries>,
}

pub fn frontier(records: &[FrontierRecord], seed: u64) -> Result<FrontierReport> {
    if records.len() < 2 {
        return Err(CapeError::TooFewPoints { needed: 2, got: records.len() });
    }
    let mut warnings = Vec::new();
    let (xs, ys): (Vec<f64>, Vec<f64>) = records.iter().map(|r| (r.swe, r.gpqa)).unzip();
    let line = ols(&xs, &ys)?;
    let regression = match frontier_regression(records, PERMUTATION_DRAWS, seed) {
        Ok(r) => Some(r),
        Err(e) => {
            warnings.push(format!("degenerate statistics: {e}; only the fitted line is reported"));
            None
        }
    };
    let h = match h_field(&frontier_points(records)) {
        Ok(h) => Some(h),
        Err(e) => {
            warnings.push(format!("h-field skipped: {e}"));
            None
        }
    };
    let loo = match loo_lab_mae(records, LOO_MIN_MODELS) {
        Ok(l) => Some(l),
        Err(e) => {
            warnings.push(format!("leave-one-lab-out skipped: {e}"));
            None
        }
    };
    let labs: std::collections::BTreeSet<&str> = records.iter().map(|r| r.lab.as_str()).collect();
    Ok(FrontierReport {
        n: records.len(),
        n_labs: labs.len(),
        beta1: Some(line.slope),
        beta0: Some(line.intercept),
        regression,
        plots: plot::frontier_series(records, h.as_ref()),
        h_field: h,
        loo,
        warnings,
    })
}

// ---------------------------------------------------------------- what-if

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WhatIfParams {
    pub family: String,
    /// Added to the second benchmark of the pair before analysis.
    #[serde(default)]
    pub h_offset: f64,
    /// Multiplies d_model before width normalization.
    #[serde(default = "default_width_mult")]
    pub width_mult: f64,
    /// Integrate the fitted dynamics out to this log10 N (billions).
    #[serde(default)]
    pub scale_extend: Option<f64>,
    #[serde(default = "default_pair")]
    pub pair: (String, String),
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub phase: PhaseLabel,
    pub gamma: f64,
    pub recommendation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfReport {
    pub family: String,
    pub params: WhatIfParams,
    pub points: Vec<CouplingPoint>,
    pub normalized_r: Option<f64>,
    pub verdict: Verdict,
    pub trajectory: Option<Trajectory>,
    pub base_trajectory: Option<Trajectory>,
    pub warnings: Vec<String>,
}

pub fn recommendation(phase: PhaseLabel) -> &'static str {
    match phase {
        PhaseLabel::Tax => "negative coupling: scaling one axis may degrade the other; change data or objectives before scaling",
        PhaseLabel::Transition => "near-zero coupling: the axes move independently; target each directly",
        PhaseLabel::Bonus => "positive coupling: scaling improves both axes together",
        PhaseLabel::Undefined => "coupling undefined: the first benchmark barely moves across this interval",
    }
}

fn shifted(series: &FamilySeries, b2: &str, h_offset: f64, width_mult: f64) -> Result<FamilySeries> {
    let mut models = series.models.clone();
    for m in &mut models {
        let v = m.score(b2)?;
        m.scores.insert(b2.to_string(), v + h_offset);
        m.d_model = m.d_model.map(|d| ((d as f64) * width_mult).round().max(1.0) as u32);
    }
    FamilySeries::new(series.family.clone(), models)
}

fn fitted_trajectory(series: &FamilySeries, threshold: f64, end: Option<f64>) -> Result<Trajectory> {
    let data = finite_differences(series, &CORE_BENCHMARKS)?;
    let model = stlsq(&TermLibrary::new(CORE_BENCHMARKS.len(), DEFAULT_MAX_DEGREE), &data, &CORE_BENCHMARKS, threshold, DEFAULT_MAX_SWEEPS)?;
    let first = &series.models[0];
    let start: Vec<f64> = CORE_BENCHMARKS.iter().map(|b| first.score(b)).collect::<Result<_>>()?;
    let last = series.models.last().expect("non-empty").log10_params();
    integrate(&model, &start, first.log10_params(), end.unwrap_or(last).max(last), DEFAULT_STEP)
}

/// Re-run the coupling analysis under a curation offset, a width change and
/// an optional scale extension; the identity request reproduces the base.
pub fn whatif(panel: &Panel, params: &WhatIfParams) -> Result<WhatIfReport> {
    if !(params.width_mult > 0.0) {
        return Err(CapeError::InvalidArgument(format!("width_mult {} must be positive", params.width_mult)));
    }
    let base = family_or_404(panel, &params.family)?;
    let (b1, b2) = (params.pair.0.as_str(), params.pair.1.as_str());
    let series = shifted(&base, b2, params.h_offset, params.width_mult)?;
    let points = local_coupling(&series, b1, b2)?;
    let last = points.last().ok_or(CapeError::SingletonFamily(params.family.clone()))?;
    let verdict = Verdict { phase: last.phase, gamma: last.gamma, recommendation: recommendation(last.phase).to_string() };
    let mut warnings = Vec::new();
    let normalized_r = match width_normalize_series(&series, DEFAULT_D_REF) {
        Ok(n) => pearson_r(&n.scores(&norm_id(b1))?, &n.scores(&norm_id(b2))?).ok(),
        Err(e) => {
            warnings.push(format!("width normalization skipped: {e}"));
            None
        }
    };
    let (trajectory, base_trajectory) =
        match (fitted_trajectory(&series, params.threshold, params.scale_extend), fitted_trajectory(&base, params.threshold, params.scale_extend)) {
            (Ok(t), Ok(b)) => (Some(t), Some(b)),
            (t, b) => {
                if let Some(e) = t.as_ref().err().or(b.as_ref().err()) {
                    warnings.push(format!("trajectory skipped: {e}"));
                }
                (t.ok(), b.ok())
            }
        };
    Ok(WhatIfReport {
        family: params.family.clone(),
        params: params.clone(),
        points,
        normalized_r,
        verdict,
        trajectory,
        base_trajectory,
        warnings,
    })
}
