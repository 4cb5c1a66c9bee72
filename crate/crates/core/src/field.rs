//! Isocline sign prediction, population h-field, frontier regression and
//! the critical-field heuristic.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::{local_coupling, PhaseLabel};
use crate::error::{CapeError, Result};
use crate::stats::{mean, ols, pearson_parametric_p, pearson_r, permutation_test, sample_std, PermutationResult};
use crate::store::{FamilySeries, FrontierRecord, ModelRecord};

/// Monte Carlo draws for the frontier permutation p-value.
pub const FRONTIER_PERMUTATIONS: u64 = 100_000;
pub const LOO_MIN_MODELS: usize = 3;
pub const CRITICAL_EXPONENT: f64 = 1.5;
const BOUNDARY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsoclineCalibration {
    /// `a/b` such that `B2_c = sqrt((a/b) B1)`.
    pub a_over_b: f64,
    pub boundary_model: String,
    pub pair: (String, String),
    /// True: a left model above the isocline predicts positive coupling.
    /// Defaults to false: on the bundled panel small models near MC1 chance
    /// sit above the curve while their next interval is a tax.
    pub above_is_positive: bool,
}

impl IsoclineCalibration {
    pub fn b2_on_isocline(&self, b1: f64) -> f64 {
        (self.a_over_b * b1).sqrt()
    }
}

/// Invert the isocline at a model taken to sit on it: `a/b = B2^2 / B1`.
pub fn calibrate_isocline(boundary: &ModelRecord, b1: &str, b2: &str) -> Result<IsoclineCalibration> {
    let (s1, s2) = (boundary.score(b1)?, boundary.score(b2)?);
    for (b, s) in [(b1, s1), (b2, s2)] {
        if s == 0.0 {
            return Err(CapeError::ZeroScore { model: boundary.name.clone(), benchmark: b.to_string() });
        }
        if !(0.0..1.0).contains(&s) {
            return Err(CapeError::InvalidArgument(format!("{b} score {s} outside (0, 1)")));
        }
    }
    Ok(IsoclineCalibration {
        a_over_b: s2 * s2 / s1,
        boundary_model: boundary.name.clone(),
        pair: (b1.to_string(), b2.to_string()),
        above_is_positive: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignPrediction {
    Positive,
    Negative,
    Boundary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsoclineInterval {
    pub interval: (String, String),
    pub gamma: f64,
    pub phase: PhaseLabel,
    pub predicted: SignPrediction,
    /// `None` when excluded (boundary prediction, transition or undefined γ).
    pub hit: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsoclineReport {
    pub family: String,
    pub intervals: Vec<IsoclineInterval>,
    pub hits: usize,
    pub counted: usize,
}

pub fn isocline_sign_predict(series: &FamilySeries, calib: &IsoclineCalibration) -> Result<IsoclineReport> {
    let (b1, b2) = (&calib.pair.0, &calib.pair.1);
    let points = local_coupling(series, b1, b2)?;
    let mut intervals = Vec::with_capacity(points.len());
    for (left, p) in series.models.iter().zip(&points) {
        let gap = left.score(b2)? - calib.b2_on_isocline(left.score(b1)?);
        let predicted = if gap.abs() <= BOUNDARY_TOL {
            SignPrediction::Boundary
        } else if (gap > 0.0) == calib.above_is_positive {
            SignPrediction::Positive
        } else {
            SignPrediction::Negative
        };
        let hit = match (predicted, p.phase) {
            (SignPrediction::Boundary, _) | (_, PhaseLabel::Transition | PhaseLabel::Undefined) => None,
            (SignPrediction::Positive, ph) => Some(ph == PhaseLabel::Bonus),
            (SignPrediction::Negative, ph) => Some(ph == PhaseLabel::Tax),
        };
        intervals.push(IsoclineInterval { interval: p.interval.clone(), gamma: p.gamma, phase: p.phase, predicted, hit });
    }
    let hits = intervals.iter().filter(|i| i.hit == Some(true)).count();
    let counted = intervals.iter().filter(|i| i.hit.is_some()).count();
    Ok(IsoclineReport { family: series.family.clone(), intervals, hits, counted })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldPoint {
    pub id: String,
    pub group: String,
    pub b1: f64,
    pub b2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HField {
    pub beta0: f64,
    pub beta1: f64,
    pub residuals: BTreeMap<String, f64>,
    pub per_group_mean: BTreeMap<String, f64>,
    pub per_group_count: BTreeMap<String, usize>,
}

/// OLS of B2 on B1; `h_i` is the residual of model i.
pub fn h_field(population: &[FieldPoint]) -> Result<HField> {
    if population.len() < 3 {
        return Err(CapeError::TooFewPoints { needed: 3, got: population.len() });
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = population.iter().map(|p| (p.b1, p.b2)).unzip();
    let fit = ols(&xs, &ys)?;
    let mut residuals = BTreeMap::new();
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for p in population {
        let h = p.b2 - fit.predict(p.b1);
        residuals.insert(p.id.clone(), h);
        groups.entry(p.group.clone()).or_default().push(h);
    }
    Ok(HField {
        beta0: fit.intercept,
        beta1: fit.slope,
        residuals,
        per_group_count: groups.iter().map(|(g, v)| (g.clone(), v.len())).collect(),
        per_group_mean: groups.into_iter().map(|(g, v)| (g, mean(&v))).collect(),
    })
}

pub fn frontier_points(frontier: &[FrontierRecord]) -> Vec<FieldPoint> {
    frontier
        .iter()
        .map(|r| FieldPoint { id: format!("{}/{}", r.lab, r.model), group: r.lab.clone(), b1: r.swe, b2: r.gpqa })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierRegression {
    pub beta1: f64,
    pub beta0: f64,
    pub r: f64,
    pub n: usize,
    pub n_labs: usize,
    pub p_permutation: f64,
    pub p_parametric: f64,
    pub permutation: PermutationResult,
}

/// GPQA on SWE-bench across the frontier table.
pub fn frontier_regression(frontier: &[FrontierRecord], n_mc: u64, seed: u64) -> Result<FrontierRegression> {
    if frontier.len() < 3 {
        return Err(CapeError::TooFewPoints { needed: 3, got: frontier.len() });
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = frontier.iter().map(|r| (r.swe, r.gpqa)).unzip();
    let fit = ols(&xs, &ys)?;
    let r = pearson_r(&xs, &ys)?;
    let permutation = if xs.len() >= 4 {
        permutation_test(&xs, &ys, n_mc, seed)?
    } else {
        PermutationResult {
            r_observed: r,
            p_value: 1.0,
            method: crate::stats::PermutationMethod::Exact,
            n_permutations: 0,
            seed,
        }
    };
    let labs: std::collections::BTreeSet<&str> = frontier.iter().map(|r| r.lab.as_str()).collect();
    Ok(FrontierRegression {
        beta1: fit.slope,
        beta0: fit.intercept,
        r,
        n: xs.len(),
        n_labs: labs.len(),
        p_permutation: permutation.p_value,
        p_parametric: pearson_parametric_p(r, xs.len()),
        permutation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooFold {
    pub lab: String,
    pub n_models: usize,
    pub mae_pp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooReport {
    pub folds: Vec<LooFold>,
    pub mean_mae_pp: f64,
    pub std_mae_pp: f64,
}

/// Hold out each lab with at least `min_models` models; fit on the rest.
pub fn loo_lab_mae(frontier: &[FrontierRecord], min_models: usize) -> Result<LooReport> {
    let mut labs: BTreeMap<&str, usize> = BTreeMap::new();
    for r in frontier {
        *labs.entry(r.lab.as_str()).or_default() += 1;
    }
    let qualifying: Vec<(&str, usize)> = labs.into_iter().filter(|(_, n)| *n >= min_models).collect();
    if qualifying.len() < 2 {
        return Err(CapeError::NoQualifyingLab { min_models });
    }
    let folds: Vec<Result<LooFold>> = qualifying
        .par_iter()
        .map(|&(lab, n_models)| {
            let (train, test): (Vec<&FrontierRecord>, Vec<&FrontierRecord>) = frontier.iter().partition(|r| r.lab != lab);
            let (xs, ys): (Vec<f64>, Vec<f64>) = train.iter().map(|r| (r.swe, r.gpqa)).unzip();
            let fit = ols(&xs, &ys)?;
            let mae = test.iter().map(|r| (r.gpqa - fit.predict(r.swe)).abs()).sum::<f64>() / test.len() as f64;
            Ok(LooFold { lab: lab.to_string(), n_models, mae_pp: mae * 100.0 })
        })
        .collect();
    let folds = folds.into_iter().collect::<Result<Vec<_>>>()?;
    let maes: Vec<f64> = folds.iter().map(|f| f.mae_pp).collect();
    Ok(LooReport { mean_mae_pp: mean(&maes), std_mae_pp: sample_std(&maes), folds })
}

/// `h_c = k (n_c - n)^exponent` below the critical scale, 0 at or above it.
pub fn critical_field(n: f64, n_c: f64, k: f64, exponent: f64) -> Result<f64> {
    if !(n_c > 0.0) {
        return Err(CapeError::InvalidArgument(format!("n_c = {n_c} must be positive")));
    }
    Ok(if n >= n_c { 0.0 } else { k * (n_c - n).powf(exponent) })
}

/// The `k` that makes `critical_field(n, n_c, k) == h`.
pub fn calibrate_critical_k(n: f64, h: f64, n_c: f64, exponent: f64) -> Result<f64> {
    if !(n < n_c) {
        return Err(CapeError::InvalidArgument("calibration point must lie below n_c".into()));
    }
    Ok(h / (n_c - n).powf(exponent))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn rec(name: &str, params: f64, b1: f64, b2: f64) -> ModelRecord {
        ModelRecord {
            family: "f".into(),
            name: name.into(),
            params,
            d_model: None,
            n_layers: None,
            scores: [("x".to_string(), b1), ("y".to_string(), b2)].into(),
            tags: vec![],
        }
    }

    fn fr(lab: &str, i: usize, swe: f64, gpqa: f64) -> FrontierRecord {
        FrontierRecord { lab: lab.into(), model: format!("{lab}-{i}"), swe, gpqa, ifeval: None, release_date: None }
    }

    #[test]
    fn unit_calibration() {
        // B2 = 0.5, B1 = 0.25 gives a/b = 1.
        let c = calibrate_isocline(&rec("m", 1.0, 0.25, 0.5), "x", "y").unwrap();
        assert_relative_eq!(c.a_over_b, 1.0);
        assert_relative_eq!(c.b2_on_isocline(0.25), 0.5);
        assert!(!c.above_is_positive);
        assert!(matches!(calibrate_isocline(&rec("m", 1.0, 0.25, 0.0), "x", "y"), Err(CapeError::ZeroScore { .. })));
    }

    #[test]
    fn sign_prediction_and_exclusions() {
        let calib = IsoclineCalibration { a_over_b: 1.0, boundary_model: "b".into(), pair: ("x".into(), "y".into()), above_is_positive: true };
        let s = FamilySeries::new(
            "f",
            vec![
                // Above (0.6 > sqrt 0.25), next γ = +1: hit.
                rec("a", 1.0, 0.25, 0.6),
                // Above, next γ = -10: miss.
                rec("b", 2.0, 0.35, 0.7),
                // On the isocline: boundary.
                rec("c", 3.0, 0.36, 0.6),
                // Below, next γ = 0: transition, excluded.
                rec("d", 4.0, 0.46, 0.5),
                rec("e", 5.0, 0.56, 0.5),
            ],
        )
        .unwrap();
        let r = isocline_sign_predict(&s, &calib).unwrap();
        let preds: Vec<SignPrediction> = r.intervals.iter().map(|i| i.predicted).collect();
        assert_eq!(preds, vec![SignPrediction::Positive, SignPrediction::Positive, SignPrediction::Boundary, SignPrediction::Negative]);
        assert_eq!((r.hits, r.counted), (1, 2));

        let flipped = isocline_sign_predict(&s, &IsoclineCalibration { above_is_positive: false, ..calib }).unwrap();
        let preds: Vec<SignPrediction> = flipped.intervals.iter().map(|i| i.predicted).collect();
        assert_eq!(preds, vec![SignPrediction::Negative, SignPrediction::Negative, SignPrediction::Boundary, SignPrediction::Positive]);
        assert_eq!((flipped.hits, flipped.counted), (1, 2));
    }

    fn two_group_fixture(delta: f64) -> Vec<FieldPoint> {
        let mut out = Vec::new();
        for i in 0..5 {
            let x = 0.1 * i as f64;
            for (g, s) in [("up", delta), ("down", -delta)] {
                out.push(FieldPoint { id: format!("{g}{i}"), group: g.into(), b1: x, b2: 0.3 + 0.5 * x + s });
            }
        }
        out
    }

    #[test]
    fn h_field_group_offsets() {
        let h = h_field(&two_group_fixture(0.04)).unwrap();
        assert_relative_eq!(h.beta1, 0.5, epsilon = 1e-12);
        assert_relative_eq!(h.beta0, 0.3, epsilon = 1e-12);
        assert_relative_eq!(h.per_group_mean["up"], 0.04, epsilon = 1e-12);
        assert_relative_eq!(h.per_group_mean["down"], -0.04, epsilon = 1e-12);
        let on_line = h_field(&two_group_fixture(0.0)).unwrap();
        assert!(on_line.residuals.values().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn collinear_frontier() {
        let f: Vec<FrontierRecord> = (0..10).map(|i| fr(if i < 5 { "a" } else { "b" }, i, 0.05 * i as f64, 0.4 + 0.25 * i as f64 * 0.05)).collect();
        let reg = frontier_regression(&f, 20_000, 1).unwrap();
        assert_relative_eq!(reg.r, 1.0, epsilon = 1e-12);
        // Minimum attainable Monte Carlo p: no draw beats |r| = 1 except ties.
        assert!(reg.p_permutation <= 1e-3);
        let loo = loo_lab_mae(&f, 3).unwrap();
        assert!(loo.mean_mae_pp < 1e-10 && loo.std_mae_pp < 1e-10);
    }

    #[test]
    fn shuffled_frontier_is_null() {
        use rand::seq::SliceRandom;
        let mut rng = crate::stats::task_rng(4, 0);
        let xs: Vec<f64> = (0..30).map(|i| 0.02 * i as f64).collect();
        let mut ys: Vec<f64> = xs.iter().map(|x| 0.3 + 0.5 * x).collect();
        ys.shuffle(&mut rng);
        let f: Vec<FrontierRecord> = xs.iter().zip(&ys).enumerate().map(|(i, (x, y))| fr("lab", i, *x, *y)).collect();
        let reg = frontier_regression(&f, 20_000, 2).unwrap();
        assert!(reg.r.abs() < 0.45);
        assert!(reg.p_permutation > 0.01);
    }

    #[test]
    fn loo_requires_labs() {
        let f: Vec<FrontierRecord> = (0..6).map(|i| fr("only", i, 0.1 * i as f64, 0.2 + 0.1 * (i % 3) as f64)).collect();
        assert_eq!(loo_lab_mae(&f, 3), Err(CapeError::NoQualifyingLab { min_models: 3 }));
    }

    #[test]
    fn critical_field_examples() {
        assert_eq!(critical_field(5.0, 3.5, 10.0, 1.5).unwrap(), 0.0);
        assert_relative_eq!(critical_field(0.0, 4.0, 1.0, 1.5).unwrap(), 8.0, epsilon = 1e-12);
        let k = calibrate_critical_k(1.0, 60.0, 3.5, 1.5).unwrap();
        assert_relative_eq!(k, 60.0 / 2.5f64.powf(1.5), epsilon = 1e-12);
        assert!((k - 15.2).abs() < 0.05);
        let h3 = critical_field(3.0, 3.5, k, 1.5).unwrap();
        assert!((h3 - 5.37).abs() < 0.01);
    }

    proptest! {
        #[test]
        fn residuals_satisfy_normal_equations(pts in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 3..30)) {
            let pop: Vec<FieldPoint> = pts.iter().enumerate()
                .map(|(i, (a, b))| FieldPoint { id: i.to_string(), group: (i % 3).to_string(), b1: *a, b2: *b }).collect();
            if let Ok(h) = h_field(&pop) {
                let sum: f64 = h.residuals.values().sum();
                let dot: f64 = pop.iter().map(|p| p.b1 * h.residuals[&p.id]).sum();
                prop_assert!(sum.abs() < 1e-10);
                prop_assert!(dot.abs() < 1e-10);
            }
        }

        #[test]
        fn critical_field_monotone(a in 0.0f64..10.0, b in 0.0f64..10.0, n_c in 0.1f64..10.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(critical_field(lo, n_c, 2.0, 1.5).unwrap() >= critical_field(hi, n_c, 2.0, 1.5).unwrap());
            prop_assert!(critical_field(n_c - 1e-9, n_c, 2.0, 1.5).unwrap() < 1e-12);
        }

        #[test]
        fn regression_invariant_to_order_and_duplication(pts in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 4..20)) {
            let f: Vec<FrontierRecord> = pts.iter().enumerate().map(|(i, (x, y))| fr("l", i, *x, *y)).collect();
            let mut rev = f.clone();
            rev.reverse();
            let mut dup = f.clone();
            dup.extend(f.iter().map(|r| FrontierRecord { model: format!("{}-dup", r.model), ..r.clone() }));
            if let Ok(a) = frontier_regression(&f, 100, 0) {
                let b = frontier_regression(&rev, 100, 0).unwrap();
                let c = frontier_regression(&dup, 100, 0).unwrap();
                prop_assert!((a.beta1 - b.beta1).abs() < 1e-9 && (a.beta0 - b.beta0).abs() < 1e-9);
                prop_assert!((a.beta1 - c.beta1).abs() < 1e-9 && (a.beta0 - c.beta0).abs() < 1e-9);
            }
        }
    }
}
