use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{integrate, integrate_to_points, stlsq, DerivativeData, OdeModel, TermLibrary, Trajectory};
use crate::coupling::{CouplingPoint, PhaseLabel};
use crate::error::{CapeError, Result};
use crate::linalg::{polyfit, polyval};
use crate::stats::ols;
use crate::store::FamilySeries;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossPrediction {
    pub family: String,
    /// Mean |predicted - actual| over every (model, benchmark) pair, x100.
    pub mae_percent: f64,
    pub mae_percent_clamped: f64,
    pub per_benchmark: BTreeMap<String, f64>,
    pub n_pairs: usize,
    pub models: Vec<String>,
    pub log_n: Vec<f64>,
    pub predicted: Vec<Vec<f64>>,
    pub actual: Vec<Vec<f64>>,
    /// Dense trajectory from the smallest to the largest holdout size.
    pub trajectory: Trajectory,
}

fn holdout_matrix(holdout: &FamilySeries, benchmarks: &[&str]) -> Result<Vec<Vec<f64>>> {
    holdout.models.iter().map(|m| benchmarks.iter().map(|b| m.score(b)).collect()).collect()
}

fn mae(pred: &[Vec<f64>], actual: &[Vec<f64>]) -> (f64, Vec<f64>) {
    let dim = actual.first().map_or(0, Vec::len);
    let mut per = vec![0.0; dim];
    for (p, a) in pred.iter().zip(actual) {
        for j in 0..dim {
            per[j] += (p[j] - a[j]).abs();
        }
    }
    let n = actual.len() as f64;
    let total = per.iter().sum::<f64>() / (n * dim as f64) * 100.0;
    (total, per.iter().map(|s| s / n * 100.0).collect())
}

/// Integrate from the holdout's smallest model across its size range.
pub fn cross_predict(model: &OdeModel, holdout: &FamilySeries, step: f64) -> Result<CrossPrediction> {
    let names: Vec<&str> = model.benchmarks.iter().map(String::as_str).collect();
    let actual = holdout_matrix(holdout, &names)?;
    let log_n: Vec<f64> = holdout.models.iter().map(|m| m.log10_params()).collect();
    let mut predicted = vec![actual[0].clone()];
    predicted.extend(integrate_to_points(model, &actual[0], log_n[0], &log_n[1..], step)?);
    let trajectory = integrate(model, &actual[0], log_n[0], *log_n.last().expect("non-empty"), step)?;
    let (mae_percent, per) = mae(&predicted, &actual);
    let clamped: Vec<Vec<f64>> = predicted.iter().map(|s| s.iter().map(|v| v.clamp(0.0, 1.0)).collect()).collect();
    let (mae_percent_clamped, _) = mae(&clamped, &actual);
    Ok(CrossPrediction {
        family: holdout.family.clone(),
        mae_percent,
        mae_percent_clamped,
        per_benchmark: names.iter().map(|s| s.to_string()).zip(per).collect(),
        n_pairs: actual.len() * names.len(),
        models: holdout.models.iter().map(|m| m.name.clone()).collect(),
        log_n,
        predicted,
        actual,
        trajectory,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselinePrediction {
    pub degree: usize,
    pub mae_percent: f64,
    pub per_benchmark: BTreeMap<String, f64>,
    /// Constant-first polynomial coefficients in log10 N per benchmark.
    pub coefficients: BTreeMap<String, Vec<f64>>,
    pub predicted: Vec<Vec<f64>>,
}

/// Independent per-benchmark polynomial in log10 N fit on the training families.
pub fn polynomial_baseline(
    train: &[&FamilySeries],
    holdout: &FamilySeries,
    benchmarks: &[&str],
    degree: usize,
) -> Result<BaselinePrediction> {
    let n_train: usize = train.iter().map(|s| s.len()).sum();
    if n_train < degree + 2 {
        return Err(CapeError::TooFewPoints { needed: degree + 2, got: n_train });
    }
    let actual = holdout_matrix(holdout, benchmarks)?;
    let mut coefficients = BTreeMap::new();
    let mut predicted = vec![vec![0.0; benchmarks.len()]; holdout.len()];
    for (j, b) in benchmarks.iter().enumerate() {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for s in train {
            for m in &s.models {
                xs.push(m.log10_params());
                ys.push(m.score(b)?);
            }
        }
        let c = polyfit(&xs, &ys, degree)?;
        for (i, m) in holdout.models.iter().enumerate() {
            predicted[i][j] = polyval(&c, m.log10_params());
        }
        coefficients.insert(b.to_string(), c);
    }
    let (mae_percent, per) = mae(&predicted, &actual);
    Ok(BaselinePrediction {
        degree,
        mae_percent,
        per_benchmark: benchmarks.iter().map(|s| s.to_string()).zip(per).collect(),
        coefficients,
        predicted,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseCoefficients {
    /// Coefficient of `source` in the `target` equation, per phase.
    pub per_phase: BTreeMap<PhaseLabel, f64>,
    /// |bonus| / |tax|, when the tax coefficient is nonzero.
    pub ratio: Option<f64>,
    pub models: BTreeMap<PhaseLabel, OdeModel>,
}

pub const MIN_PHASE_INTERVALS: usize = 3;

/// STLSQ separately on tax and bonus intervals.
#[allow(clippy::too_many_arguments)]
pub fn per_phase_coefficients(
    library: &TermLibrary,
    data: &DerivativeData,
    phases: &[PhaseLabel],
    benchmarks: &[&str],
    threshold: f64,
    source: &str,
    target: &str,
) -> Result<PhaseCoefficients> {
    if phases.len() != data.len() {
        return Err(CapeError::InvalidArgument("one phase label per interval".into()));
    }
    let idx = |b: &str| {
        benchmarks
            .iter()
            .position(|x| *x == b)
            .ok_or_else(|| CapeError::InvalidArgument(format!("{b} is not a state")))
    };
    let (si, ti) = (idx(source)?, idx(target)?);
    let fits: Vec<Result<(PhaseLabel, OdeModel)>> = [PhaseLabel::Tax, PhaseLabel::Bonus]
        .into_par_iter()
        .map(|ph| {
            let rows: Vec<usize> = (0..phases.len()).filter(|&i| phases[i] == ph).collect();
            if rows.len() < MIN_PHASE_INTERVALS {
                return Err(CapeError::InsufficientPhasePopulation {
                    phase: ph.to_string(),
                    detail: format!("{} interval(s); need {MIN_PHASE_INTERVALS}", rows.len()),
                });
            }
            let mut m = stlsq(library, &data.subset(&rows), benchmarks, threshold, super::DEFAULT_MAX_SWEEPS)?;
            m.phase_tag = Some(ph);
            Ok((ph, m))
        })
        .collect();
    let models: BTreeMap<PhaseLabel, OdeModel> = fits.into_iter().collect::<Result<_>>()?;
    let per_phase: BTreeMap<PhaseLabel, f64> = models.iter().map(|(p, m)| (*p, m.coefficient(ti, &[si]))).collect();
    let tax = per_phase[&PhaseLabel::Tax];
    let ratio = (tax != 0.0).then(|| per_phase[&PhaseLabel::Bonus].abs() / tax.abs());
    Ok(PhaseCoefficients { per_phase, ratio, models })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaFixedPoint {
    /// `dgamma/dlog10 N = a gamma + b`.
    pub a: f64,
    pub b: f64,
    pub gamma_star: f64,
    /// False when `a >= 0` (repelling fixed point).
    pub stable: bool,
}

/// Fixed point of a linear relaxation law fit to a coupling trace.
pub fn gamma_fixed_point(points: &[CouplingPoint]) -> Result<GammaFixedPoint> {
    let defined: Vec<&CouplingPoint> = points.iter().filter(|p| p.defined).collect();
    if defined.len() < 3 {
        return Err(CapeError::TooFewPoints { needed: 3, got: defined.len() });
    }
    let mut g = Vec::new();
    let mut dg = Vec::new();
    for w in defined.windows(2) {
        let h = w[1].n_mid.log10() - w[0].n_mid.log10();
        if h <= 0.0 {
            return Err(CapeError::DegenerateSpacing("coupling points must have increasing n_mid".into()));
        }
        g.push(0.5 * (w[0].gamma + w[1].gamma));
        dg.push((w[1].gamma - w[0].gamma) / h);
    }
    let fit = ols(&g, &dg).map_err(|_| CapeError::DegenerateRegressor("gamma is constant along the trace".into()))?;
    if fit.slope == 0.0 {
        return Err(CapeError::DegenerateRegressor("zero relaxation rate".into()));
    }
    Ok(GammaFixedPoint { a: fit.slope, b: fit.intercept, gamma_star: -fit.intercept / fit.slope, stable: fit.slope < 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::classify_phase;
    use crate::ode::tests::series;
    use approx::assert_relative_eq;

    fn cp(n_mid: f64, gamma: f64) -> CouplingPoint {
        CouplingPoint {
            n_mid,
            gamma,
            defined: true,
            interval: (String::new(), String::new()),
            delta_b1: 0.1,
            delta_b2: 0.1 * gamma,
            phase: classify_phase(gamma),
        }
    }

    fn linear_2d() -> OdeModel {
        let library = TermLibrary::new(2, 1);
        OdeModel {
            benchmarks: vec!["a".into(), "b".into()],
            // da = 0.05, db = 0.2 a - 0.1
            coefficients: vec![vec![0.05, 0.0, 0.0], vec![-0.1, 0.2, 0.0]],
            library,
            threshold_used: 0.0,
            active_counts: vec![1, 2],
            fit_window: (0.1, 100.0),
            phase_tag: None,
            warnings: vec![],
        }
    }

    #[test]
    fn self_generated_holdout_has_zero_error() {
        let m = linear_2d();
        let xs = [0.0, 0.4, 1.1, 1.8];
        let states = integrate_to_points(&m, &[0.4, 0.3], -0.5, &xs, 0.01).unwrap();
        let rows: Vec<(f64, &[f64])> = xs.iter().zip(&states).map(|(x, s)| (10f64.powf(*x), s.as_slice())).collect();
        let holdout = series(&rows, &["a", "b"]);
        let cp = cross_predict(&m, &holdout, 0.01).unwrap();
        assert!(cp.mae_percent < 1e-9);
        assert_eq!(cp.n_pairs, 8);
        assert_relative_eq!(cp.trajectory.grid[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn mae_includes_the_anchor_pair() {
        // Zero dynamics: prediction is the start state everywhere.
        let mut m = linear_2d();
        m.coefficients = vec![vec![0.0; 3]; 2];
        let holdout = series(&[(1.0, &[0.5, 0.2]), (10.0, &[0.6, 0.2])], &["a", "b"]);
        let cp = cross_predict(&m, &holdout, 0.01).unwrap();
        // One nonzero error of 0.1 across four pairs.
        assert_relative_eq!(cp.mae_percent, 2.5, epsilon = 1e-12);
        assert_relative_eq!(cp.per_benchmark["a"], 5.0, epsilon = 1e-12);
    }

    #[test]
    fn baselines() {
        let train = series(&[(0.1, &[0.3]), (1.0, &[0.4]), (10.0, &[0.6]), (100.0, &[0.9])], &["a"]);
        // Degree 0 predicts the training mean 0.55.
        let holdout = series(&[(1.0, &[0.5]), (10.0, &[0.7])], &["a"]);
        let b = polynomial_baseline(&[&train], &holdout, &["a"], 0).unwrap();
        assert_relative_eq!(b.mae_percent, 0.5 * (0.05 + 0.15) * 100.0, epsilon = 1e-10);
        // Quadratic holdout drawn from the fitted curve.
        let q = |x: f64| 0.4 + 0.1 * x + 0.05 * x * x;
        let rows: Vec<(f64, Vec<f64>)> = [-1.0, 0.0, 1.0, 2.0].iter().map(|x: &f64| (10f64.powf(*x), vec![q(*x)])).collect();
        let vals: Vec<(f64, &[f64])> = rows.iter().map(|(n, v)| (*n, v.as_slice())).collect();
        let tr = series(&vals, &["a"]);
        let on_curve = series(&[(3.0, &[q(3f64.log10())]), (30.0, &[q(30f64.log10())])], &["a"]);
        assert!(polynomial_baseline(&[&tr], &on_curve, &["a"], 2).unwrap().mae_percent < 1e-9);
        assert!(polynomial_baseline(&[&tr], &on_curve, &["a"], 3).is_err());
    }

    fn phase_fixture(tax_rate: f64, bonus_rate: f64) -> (DerivativeData, Vec<PhaseLabel>) {
        // States (hs, tqa); d tqa = rate * hs, d hs = 0.3.
        let mut data = DerivativeData::default();
        let mut phases = Vec::new();
        for (k, (rate, ph)) in [(tax_rate, PhaseLabel::Tax), (bonus_rate, PhaseLabel::Bonus)].iter().enumerate() {
            for i in 0..4 {
                let hs = 0.3 + 0.1 * i as f64 + 0.05 * k as f64;
                data.x.push(vec![hs, 0.3 + 0.02 * (i * i) as f64]);
                data.dx.push(vec![0.3, rate * hs]);
                data.log_n_mid.push(i as f64);
                phases.push(*ph);
            }
        }
        (data, phases)
    }

    #[test]
    fn per_phase_ratio() {
        let lib = TermLibrary::new(2, 1);
        let lib_ref = &lib;
        let run = |t: f64, b: f64| {
            let (d, p) = phase_fixture(t, b);
            per_phase_coefficients(lib_ref, &d, &p, &["hs", "tqa"], 0.05, "hs", "tqa").unwrap()
        };
        let same = run(0.4, 0.4);
        assert_relative_eq!(same.ratio.unwrap(), 1.0, epsilon = 1e-9);
        let planted = run(0.15, 0.75);
        assert!((planted.ratio.unwrap() - 5.0).abs() < 0.25);

        let (d, mut p) = phase_fixture(0.1, 0.5);
        p[0] = PhaseLabel::Transition;
        p[1] = PhaseLabel::Transition;
        assert!(matches!(
            per_phase_coefficients(&lib, &d, &p, &["hs", "tqa"], 0.05, "hs", "tqa"),
            Err(CapeError::InsufficientPhasePopulation { .. })
        ));
    }

    #[test]
    fn gamma_relaxation_fixed_point() {
        // gamma(x) = 0.5 + 0.8 e^{-x}: exact solution of dgamma/dx = -(gamma - 0.5).
        let pts: Vec<CouplingPoint> =
            (0..6).map(|i| i as f64 * 0.4).map(|x: f64| cp(10f64.powf(x), 0.5 + 0.8 * (-x).exp())).collect();
        let f = gamma_fixed_point(&pts).unwrap();
        assert_relative_eq!(f.gamma_star, 0.5, epsilon = 1e-10);
        assert!(f.stable);

        // a = -2, b = 1: the midpoint/forward-difference pairs lie on the line exactly
        // when generated from it directly.
        let mut pts = vec![cp(1.0, 0.0)];
        let h: f64 = 0.25;
        for i in 1..5 {
            let g0 = pts[i - 1].gamma;
            // Solve (g1 - g0)/h = -2 (g0 + g1)/2 + 1 for g1.
            let g1 = (g0 * (1.0 / h - 1.0) + 1.0) / (1.0 / h + 1.0);
            pts.push(cp(10f64.powf(h * i as f64), g1));
        }
        let f = gamma_fixed_point(&pts).unwrap();
        assert_relative_eq!(f.a, -2.0, epsilon = 1e-9);
        assert_relative_eq!(f.b, 1.0, epsilon = 1e-9);
        assert_relative_eq!(f.gamma_star, 0.5, epsilon = 1e-9);

        let flat: Vec<CouplingPoint> = (0..4).map(|i| cp(10f64.powi(i), 0.3)).collect();
        assert!(matches!(gamma_fixed_point(&flat), Err(CapeError::DegenerateRegressor(_))));
    }
}
