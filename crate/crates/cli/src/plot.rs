//! Plot-ready data series. Rendering is left to the consumer.

use cape_core::field::HField;
use cape_core::ode::CrossPrediction;
use cape_core::{FrontierRecord, Panel, Result};
use serde::{Deserialize, Serialize};

use crate::analysis::FamilyDiagnosis;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub label: String,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub x: f64,
    pub y: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub y_err: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub label: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub category: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSeries {
    pub id: String,
    pub axes: (Axis, Axis),
    pub points: Vec<PlotPoint>,
    /// `scatter` or `line`.
    pub style: String,
}

impl PlotSeries {
    fn new(id: String, x: (&str, &str), y: (&str, &str), style: &str, points: Vec<PlotPoint>) -> Self {
        let axis = |(label, unit): (&str, &str)| Axis { label: label.into(), unit: unit.into() };
        // Non-finite points would not survive JSON; drop them here.
        let points = points.into_iter().filter(|p| p.x.is_finite() && p.y.is_finite()).collect();
        Self { id, axes: (axis(x), axis(y)), points, style: style.into() }
    }
}

fn point(x: f64, y: f64) -> PlotPoint {
    PlotPoint { x, y, y_err: None, label: None, category: None }
}

/// Per-model scatter in the benchmark pair, coloured by model phase.
pub fn phase_diagram(panel: &Panel, diag: &FamilyDiagnosis, pair: (&str, &str)) -> Result<PlotSeries> {
    let series = panel.family_series(&diag.family)?;
    let points = series
        .models
        .iter()
        .zip(diag.model_phases.iter())
        .map(|(m, ph)| {
            Ok(PlotPoint {
                label: Some(m.name.clone()),
                category: Some(ph.to_string()),
                ..point(m.score(pair.0)?, m.score(pair.1)?)
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PlotSeries::new(format!("phase-diagram/{}", diag.family), (pair.0, "fraction"), (pair.1, "fraction"), "scatter", points))
}

/// Predicted trajectory (line) and observed holdout points, one pair of series per benchmark.
/// `benchmarks` is the model's state order.
pub fn trajectory_series(cp: &CrossPrediction, benchmarks: &[String]) -> Vec<PlotSeries> {
    let mut out = Vec::new();
    for (j, b) in benchmarks.iter().enumerate() {
        let line = cp.trajectory.grid.iter().zip(&cp.trajectory.states).map(|(x, s)| point(*x, s[j])).collect();
        out.push(PlotSeries::new(format!("trajectory/{}/{b}", cp.family), ("log10 N", "log10 billions"), (b, "fraction"), "line", line));
        let obs = cp
            .log_n
            .iter()
            .zip(&cp.actual)
            .zip(&cp.models)
            .map(|((x, a), m)| PlotPoint { label: Some(m.clone()), ..point(*x, a[j]) })
            .collect();
        out.push(PlotSeries::new(format!("observed/{}/{b}", cp.family), ("log10 N", "log10 billions"), (b, "fraction"), "scatter", obs));
    }
    out
}

/// GPQA against SWE-bench, categorised by lab, plus per-lab mean residuals.
pub fn frontier_series(records: &[FrontierRecord], h: Option<&HField>) -> Vec<PlotSeries> {
    let scatter = records
        .iter()
        .map(|r| PlotPoint { label: Some(r.model.clone()), category: Some(r.lab.clone()), ..point(r.swe, r.gpqa) })
        .collect();
    let mut out = vec![PlotSeries::new("frontier/scatter".into(), ("swe_verified", "fraction"), ("gpqa_diamond", "fraction"), "scatter", scatter)];
    if let Some(h) = h {
        let bars = h
            .per_group_mean
            .iter()
            .enumerate()
            .map(|(i, (lab, v))| PlotPoint { label: Some(lab.clone()), category: Some(lab.clone()), ..point(i as f64, *v) })
            .collect();
        out.push(PlotSeries::new("frontier/h-field".into(), ("lab", "index"), ("mean residual", "fraction"), "bar", bars));
    }
    out
}
