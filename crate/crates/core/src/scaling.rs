//! Loss power law with an irreducible floor, width normalization, gradient
//! norm fits and the fixed-form universal coupling law.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::coupling::PhaseLabel;
use crate::error::{CapeError, Result};
use crate::stats::{mean, ols, pearson_r, sample_std};
use crate::store::{FamilySeries, LossPoint, ModelRecord, Panel};

/// Parameters per "billion" in the tables.
pub const PARAMS_PER_BILLION: f64 = 1e9;
/// Reference width for normalization (the narrowest model of the reference family).
pub const D_REF: u32 = 512;
/// Suffix of width-normalized benchmark ids.
pub const NORM_SUFFIX: &str = "_norm";

const GOLDEN_TOL: f64 = 1e-6;
const GOLDEN_MAX_ITER: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossFit {
    /// Irreducible loss E, nats.
    pub e_floor: f64,
    /// A in `L = E + A N^-alpha` with N in billions.
    pub amplitude: f64,
    pub alpha: f64,
    pub r_squared: f64,
    /// Mean of `N^alpha (L - E)` with N as an absolute parameter count.
    pub compensated_mean: f64,
    /// Sample coefficient of variation of the same quantity.
    pub compensated_cv: f64,
    pub compensated: Vec<f64>,
}

impl LossFit {
    pub fn predict(&self, params_b: f64) -> f64 {
        self.e_floor + self.amplitude * params_b.powf(-self.alpha)
    }
}

/// For a fixed floor, (ln A, alpha, SSE in loss space).
fn loss_profile(points: &[LossPoint], e: f64) -> Option<(f64, f64, f64)> {
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        points.iter().map(|p| (p.params.ln(), (p.loss - e).ln())).unzip();
    let fit = ols(&xs, &ys).ok()?;
    let (ln_a, alpha) = (fit.intercept, -fit.slope);
    let sse = points.iter().map(|p| (p.loss - e - (ln_a - alpha * p.params.ln()).exp()).powi(2)).sum();
    Some((ln_a, alpha, sse))
}

/// Fit `L(N) = E + A N^-alpha`: golden-section search on E in
/// `[0, 0.999 min L]`, log-log OLS for (A, alpha) at each E.
pub fn fit_loss_powerlaw(points: &[LossPoint]) -> Result<LossFit> {
    if points.len() < 4 {
        return Err(CapeError::TooFewPoints { needed: 4, got: points.len() });
    }
    let mut sizes: Vec<f64> = points.iter().map(|p| p.params).collect();
    sizes.sort_by(f64::total_cmp);
    sizes.dedup();
    if sizes.len() < 4 {
        return Err(CapeError::DegenerateSpacing(format!("{} distinct sizes; need 4", sizes.len())));
    }
    if let Some(p) = points.iter().find(|p| p.loss <= 0.0 || p.params <= 0.0) {
        return Err(CapeError::NonPositiveValue { value: p.loss.min(p.params) });
    }
    let min_loss = points.iter().map(|p| p.loss).fold(f64::INFINITY, f64::min);
    let sse = |e: f64| loss_profile(points, e).map_or(f64::INFINITY, |r| r.2);

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0, 0.999 * min_loss);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (sse(c), sse(d));
    let mut iter = 0;
    while (b - a) > GOLDEN_TOL {
        iter += 1;
        if iter > GOLDEN_MAX_ITER {
            return Err(CapeError::NonConvergence(format!("golden-section bracket still {} wide", b - a)));
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = sse(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = sse(d);
        }
    }
    // The interior optimum competes with the bracket ends.
    let candidates = [0.5 * (a + b), 0.0, 0.999 * min_loss];
    let e_floor = candidates
        .into_iter()
        .min_by(|x, y| sse(*x).total_cmp(&sse(*y)))
        .expect("non-empty");
    let (ln_a, alpha, sse_best) = loss_profile(points, e_floor)
        .ok_or_else(|| CapeError::NonConvergence("profile undefined at the optimum".into()))?;
    let ml = mean(&points.iter().map(|p| p.loss).collect::<Vec<_>>());
    let sst: f64 = points.iter().map(|p| (p.loss - ml).powi(2)).sum();
    let compensated: Vec<f64> = points
        .iter()
        .map(|p| (p.params * PARAMS_PER_BILLION).powf(alpha) * (p.loss - e_floor))
        .collect();
    let cm = mean(&compensated);
    Ok(LossFit {
        e_floor,
        amplitude: ln_a.exp(),
        alpha,
        r_squared: if sst > 0.0 { 1.0 - sse_best / sst } else { 1.0 },
        compensated_mean: cm,
        compensated_cv: sample_std(&compensated) / cm,
        compensated,
    })
}

pub fn norm_id(benchmark: &str) -> String {
    format!("{benchmark}{NORM_SUFFIX}")
}

fn normalize_record(r: &ModelRecord, d_ref: u32) -> Result<ModelRecord> {
    let d = r.d_model.ok_or_else(|| CapeError::MissingWidth { model: r.name.clone() })?;
    let factor = d as f64 / d_ref as f64;
    let mut out = r.clone();
    for (b, v) in &r.scores {
        if !b.ends_with(NORM_SUFFIX) {
            out.scores.insert(norm_id(b), v / factor);
        }
    }
    Ok(out)
}

/// Adds `<id>_norm = score / (d_model / d_ref)` for every score of every record.
pub fn width_normalize(panel: &Panel, d_ref: u32) -> Result<Panel> {
    let records = panel.records.iter().map(|r| normalize_record(r, d_ref)).collect::<Result<Vec<_>>>()?;
    Ok(Panel { records, ..panel.clone() })
}

pub fn width_normalize_series(series: &FamilySeries, d_ref: u32) -> Result<FamilySeries> {
    let models = series.models.iter().map(|r| normalize_record(r, d_ref)).collect::<Result<Vec<_>>>()?;
    Ok(FamilySeries { family: series.family.clone(), models })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientPowerLaw {
    /// Exponent in `|grad L| ~ L^beta`.
    pub beta: f64,
    /// Correlation of the log-log fit.
    pub r: f64,
    pub log_prefactor: f64,
    /// Per-point log residuals (observed minus trend).
    pub residuals: Vec<f64>,
}

fn check_positive(points: &[(f64, f64)]) -> Result<()> {
    match points.iter().find(|(l, g)| *l <= 0.0 || *g <= 0.0) {
        Some(&(l, g)) => Err(CapeError::NonPositiveValue { value: l.min(g) }),
        None => Ok(()),
    }
}

/// OLS of ln |grad L| on ln L over (loss, grad_norm) pairs.
pub fn fit_gradient_powerlaw(points: &[(f64, f64)]) -> Result<GradientPowerLaw> {
    if points.len() < 2 {
        return Err(CapeError::TooFewPoints { needed: 2, got: points.len() });
    }
    check_positive(points)?;
    let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().map(|(l, g)| (l.ln(), g.ln())).unzip();
    let fit = ols(&xs, &ys)?;
    let r = if xs.len() == 2 { fit.slope.signum() } else { pearson_r(&xs, &ys)? };
    let residuals = xs.iter().zip(&ys).map(|(x, y)| y - fit.predict(*x)).collect();
    Ok(GradientPowerLaw { beta: fit.slope, r, log_prefactor: fit.intercept, residuals })
}

/// Per phase, `C = -slope` of ln |grad L| against 1/L.
pub fn fit_arrhenius(points: &[(f64, f64)], phases: &[PhaseLabel]) -> Result<BTreeMap<PhaseLabel, f64>> {
    if points.len() != phases.len() {
        return Err(CapeError::InvalidArgument("one phase label per point".into()));
    }
    check_positive(points)?;
    let mut by_phase: BTreeMap<PhaseLabel, Vec<(f64, f64)>> = BTreeMap::new();
    for (p, ph) in points.iter().zip(phases) {
        by_phase.entry(*ph).or_default().push(*p);
    }
    by_phase
        .into_iter()
        .map(|(ph, pts)| {
            if pts.len() < 2 {
                return Err(CapeError::InsufficientPhasePopulation {
                    phase: ph.to_string(),
                    detail: format!("{} point(s); need 2", pts.len()),
                });
            }
            Ok((ph, arrhenius_constant(&pts)?))
        })
        .collect()
}

/// Activation constant from a single pooled fit.
pub fn arrhenius_constant(points: &[(f64, f64)]) -> Result<f64> {
    check_positive(points)?;
    let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().map(|(l, g)| (1.0 / l, g.ln())).unzip();
    Ok(-ols(&xs, &ys)?.slope)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniversalFit {
    /// Proportionality constant in `TQA_norm = k HS_norm^2 / (log10 N)^2`.
    pub k: f64,
    pub sse: f64,
    /// SSE of the two-parameter linear baseline `TQA_norm = a + b HS_norm`.
    pub linear_sse: f64,
    pub n_points: usize,
}

/// Least-squares `k` over (params in billions, HS_norm, TQA_norm); the
/// logarithm uses the absolute parameter count.
pub fn fit_universal_form(points: &[(f64, f64, f64)]) -> Result<UniversalFit> {
    if points.is_empty() {
        return Err(CapeError::TooFewPoints { needed: 1, got: 0 });
    }
    let z: Vec<f64> = points
        .iter()
        .map(|(n, hs, _)| hs * hs / (n * PARAMS_PER_BILLION).log10().powi(2))
        .collect();
    let zz: f64 = z.iter().map(|v| v * v).sum();
    if !(zz > 0.0) || !zz.is_finite() {
        return Err(CapeError::DegenerateRegressor("HS_norm^2/(log N)^2 is identically zero".into()));
    }
    let k = z.iter().zip(points).map(|(zi, p)| zi * p.2).sum::<f64>() / zz;
    let sse = z.iter().zip(points).map(|(zi, p)| (p.2 - k * zi).powi(2)).sum();
    let (hs, tq): (Vec<f64>, Vec<f64>) = points.iter().map(|p| (p.1, p.2)).unzip();
    let linear_sse = ols(&hs, &tq).map(|f| f.sse).unwrap_or(f64::NAN);
    Ok(UniversalFit { k, sse, linear_sse, n_points: points.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{HELLASWAG, TRUTHFULQA};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn lp(params: f64, loss: f64) -> LossPoint {
        LossPoint { params, loss, grad_norm: None }
    }

    #[test]
    fn noiseless_loss_recovery() {
        let sizes = [0.07, 0.16, 0.41, 1.0, 1.4, 2.8, 6.9, 12.0];
        let pts: Vec<LossPoint> = sizes.iter().map(|&n: &f64| lp(n, 1.7 + 100.0 * n.powf(-0.3))).collect();
        let fit = fit_loss_powerlaw(&pts).unwrap();
        assert!((fit.e_floor - 1.7).abs() < 1e-6, "{}", fit.e_floor);
        assert!((fit.alpha - 0.3).abs() < 1e-6, "{}", fit.alpha);
        assert!(fit.r_squared > 0.999_999);
        // Compensated form is exactly constant: (1e9)^0.3 * 100.
        assert_relative_eq!(fit.compensated_mean, 1e9f64.powf(0.3) * 100.0, max_relative = 1e-5);
        assert!(fit.compensated_cv < 1e-5);
    }

    #[test]
    fn pure_power_law_has_zero_floor() {
        // Closed form: with E = 0, ln L = ln 3 - 0.2 ln N exactly.
        let pts: Vec<LossPoint> = [0.1, 1.0, 10.0, 100.0].iter().map(|&n: &f64| lp(n, 3.0 * n.powf(-0.2))).collect();
        let fit = fit_loss_powerlaw(&pts).unwrap();
        assert!(fit.e_floor < 1e-5);
        assert!((fit.alpha - 0.2).abs() < 1e-5);
        assert!((fit.amplitude - 3.0).abs() < 1e-4);
    }

    #[test]
    fn loss_fit_errors() {
        let pts = vec![lp(1.0, 3.0), lp(1.0, 3.1), lp(2.0, 2.9), lp(2.0, 2.8)];
        assert!(matches!(fit_loss_powerlaw(&pts), Err(CapeError::DegenerateSpacing(_))));
        assert!(matches!(fit_loss_powerlaw(&pts[..3]), Err(CapeError::TooFewPoints { .. })));
    }

    #[test]
    fn compensated_cv_is_internally_consistent() {
        let sizes = [0.07, 0.16, 0.41, 1.0, 1.4, 2.8, 6.9, 12.0];
        let wiggle = [1.01, 0.99, 1.005, 0.995, 1.0, 1.008, 0.992, 1.0];
        let pts: Vec<LossPoint> =
            sizes.iter().zip(wiggle).map(|(&n, w): (&f64, f64)| lp(n, 1.7 + w * 0.5 * n.powf(-0.25))).collect();
        let fit = fit_loss_powerlaw(&pts).unwrap();
        let c: Vec<f64> = pts
            .iter()
            .map(|p| (p.params * PARAMS_PER_BILLION).powf(fit.alpha) * (p.loss - fit.e_floor))
            .collect();
        assert_relative_eq!(fit.compensated_cv, sample_std(&c) / mean(&c), epsilon = 1e-14);
        let mut shuffled = pts.clone();
        shuffled.reverse();
        let again = fit_loss_powerlaw(&shuffled).unwrap();
        assert_relative_eq!(again.alpha, fit.alpha, epsilon = 1e-12);
    }

    fn panel_with_widths(widths: &[Option<u32>]) -> Panel {
        let records = widths
            .iter()
            .enumerate()
            .map(|(i, w)| ModelRecord {
                family: "f".into(),
                name: format!("m{i}"),
                params: 1.0 + i as f64,
                d_model: *w,
                n_layers: None,
                scores: [(HELLASWAG.to_string(), 0.3 + 0.1 * i as f64), (TRUTHFULQA.to_string(), 0.25)].into(),
                tags: vec![],
            })
            .collect();
        Panel::new(records, vec![], BTreeMap::new(), Default::default()).unwrap()
    }

    #[test]
    fn width_normalization() {
        let p = panel_with_widths(&[Some(512), Some(2048)]);
        let n = width_normalize(&p, D_REF).unwrap();
        assert_eq!(n.records[0].scores["hellaswag_norm"], n.records[0].scores["hellaswag"]);
        assert_relative_eq!(n.records[1].scores["hellaswag_norm"], 0.4 / 4.0);
        assert!(matches!(
            width_normalize(&panel_with_widths(&[Some(512), None]), D_REF),
            Err(CapeError::MissingWidth { .. })
        ));
    }

    #[test]
    fn gradient_power_law_examples() {
        let pts: Vec<(f64, f64)> = [2.0, 2.5, 3.0, 3.5].iter().map(|&l| (l, l * l)).collect();
        let g = fit_gradient_powerlaw(&pts).unwrap();
        assert_relative_eq!(g.beta, 2.0, epsilon = 1e-12);
        assert_relative_eq!(g.r, 1.0, epsilon = 1e-12);
        // Two points: slope = ln(g2/g1) / ln(L2/L1).
        let g = fit_gradient_powerlaw(&[(2.0, 10.0), (3.0, 40.0)]).unwrap();
        assert_relative_eq!(g.beta, (4.0f64).ln() / 1.5f64.ln(), epsilon = 1e-12);
        assert_eq!(g.r, 1.0);
        assert!(matches!(fit_gradient_powerlaw(&[(2.0, 1.0), (3.0, -1.0)]), Err(CapeError::NonPositiveValue { .. })));
    }

    #[test]
    fn arrhenius_examples() {
        let pts: Vec<(f64, f64)> = [2.0, 2.4, 2.8, 3.2].iter().map(|&l: &f64| (l, (-10.0 / l).exp())).collect();
        let c = fit_arrhenius(&pts, &[PhaseLabel::Tax; 4]).unwrap();
        assert_relative_eq!(c[&PhaseLabel::Tax], 10.0, epsilon = 1e-10);

        // Closed-form two-point constant: C = -ln(g2/g1) / (1/L2 - 1/L1).
        let two = [(2.0, 3.0), (2.5, 5.0)];
        let want = -(5.0f64 / 3.0).ln() / (1.0 / 2.5 - 1.0 / 2.0);
        assert_relative_eq!(arrhenius_constant(&two).unwrap(), want, epsilon = 1e-12);

        // Two phases with different constants; the pooled fit matches neither.
        let mut pts = Vec::new();
        let mut labels = Vec::new();
        for &l in &[3.0f64, 3.2, 3.4] {
            pts.push((l, 50.0 * (-20.0 / l).exp()));
            labels.push(PhaseLabel::Tax);
        }
        for &l in &[2.0f64, 2.2, 2.4] {
            pts.push((l, 5e3 * (-60.0 / l).exp()));
            labels.push(PhaseLabel::Bonus);
        }
        let per = fit_arrhenius(&pts, &labels).unwrap();
        assert_relative_eq!(per[&PhaseLabel::Tax], 20.0, epsilon = 1e-9);
        assert_relative_eq!(per[&PhaseLabel::Bonus], 60.0, epsilon = 1e-9);
        let pooled = arrhenius_constant(&pts).unwrap();
        assert!((pooled - 20.0).abs() > 1.0 && (pooled - 60.0).abs() > 1.0);

        assert!(matches!(
            fit_arrhenius(&pts[..4], &labels[..4]),
            Err(CapeError::InsufficientPhasePopulation { .. })
        ));
    }

    #[test]
    fn universal_form_examples() {
        let pts: Vec<(f64, f64, f64)> = [(0.1, 0.5), (1.0, 0.3), (7.0, 0.1), (12.0, 0.08)]
            .iter()
            .map(|&(n, hs): &(f64, f64)| (n, hs, 0.8 * hs * hs / (n * 1e9).log10().powi(2)))
            .collect();
        assert_relative_eq!(fit_universal_form(&pts).unwrap().k, 0.8, epsilon = 1e-8);

        // One point: k = TQA_norm / z. Choose HS_norm so z = 0.4 at N = 1e9.
        let hs = (0.4f64 * 81.0).sqrt();
        let single = fit_universal_form(&[(1.0, hs, 0.2)]).unwrap();
        assert_relative_eq!(single.k, 0.5, epsilon = 1e-12);
        assert!(matches!(fit_universal_form(&[(1.0, 0.0, 0.2)]), Err(CapeError::DegenerateRegressor(_))));
    }

    proptest! {
        #[test]
        fn normalization_inverts(widths in proptest::collection::vec(64u32..16384, 1..6)) {
            let p = panel_with_widths(&widths.iter().map(|w| Some(*w)).collect::<Vec<_>>());
            let n = width_normalize(&p, D_REF).unwrap();
            for r in &n.records {
                let f = r.d_model.unwrap() as f64 / D_REF as f64;
                for b in [HELLASWAG, TRUTHFULQA] {
                    prop_assert!((r.scores[&norm_id(b)] * f - r.scores[b]).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn gradient_fit_order_invariant(mut pts in proptest::collection::vec((1.5f64..4.0, 1.0f64..100.0), 3..8)) {
            let a = fit_gradient_powerlaw(&pts);
            pts.reverse();
            let b = fit_gradient_powerlaw(&pts);
            if let (Ok(a), Ok(b)) = (a, b) {
                prop_assert!((a.beta - b.beta).abs() < 1e-9);
            }
        }
    }
}
