//! Correlation, regression and resampling primitives shared by the analyses.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{CapeError, Result};

/// Largest sample size for which permutation p-values are enumerated exactly.
pub const EXACT_PERMUTATION_MAX_N: usize = 8;

/// Deterministic per-task generator: one ChaCha stream per task index under a
/// shared master seed, so results never depend on scheduling order.
pub fn task_rng(seed: u64, task: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(task);
    rng
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Percentile with linear interpolation between order statistics (`q` in [0, 1]).
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn centered(xs: &[f64]) -> (Vec<f64>, f64) {
    let m = mean(xs);
    let c: Vec<f64> = xs.iter().map(|x| x - m).collect();
    let ss = c.iter().map(|v| v * v).sum::<f64>();
    (c, ss)
}

/// Product-moment correlation.
pub fn pearson_r(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(CapeError::InvalidArgument(format!("length mismatch {} vs {}", xs.len(), ys.len())));
    }
    if xs.len() < 3 {
        return Err(CapeError::TooFewPoints { needed: 3, got: xs.len() });
    }
    let (cx, sx) = centered(xs);
    let (cy, sy) = centered(ys);
    let scale = xs.iter().chain(ys).fold(0.0_f64, |a, v| a.max(v.abs())).max(1.0);
    let tiny = 1e-24 * scale * scale * xs.len() as f64;
    if sx <= tiny || sy <= tiny {
        return Err(CapeError::DegenerateVariance("zero variance in an input".into()));
    }
    let sxy: f64 = cx.iter().zip(&cy).map(|(a, b)| a * b).sum();
    Ok((sxy / (sx * sy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Sum of squared residuals.
    pub sse: f64,
}

impl LinearFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

/// Ordinary least squares of `ys` on `xs` with an intercept.
pub fn ols(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() {
        return Err(CapeError::InvalidArgument(format!("length mismatch {} vs {}", xs.len(), ys.len())));
    }
    if xs.len() < 2 {
        return Err(CapeError::TooFewPoints { needed: 2, got: xs.len() });
    }
    let (cx, sxx) = centered(xs);
    if sxx <= 0.0 {
        return Err(CapeError::DegenerateVariance("regressor is constant".into()));
    }
    let my = mean(ys);
    let sxy: f64 = cx.iter().zip(ys).map(|(a, y)| a * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mean(xs);
    let sse: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let sst: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let r_squared = if sst > 0.0 { 1.0 - sse / sst } else { 1.0 };
    Ok(LinearFit { slope, intercept, r_squared, sse })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PermutationMethod {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationResult {
    pub r_observed: f64,
    /// Two-sided, on |r|.
    pub p_value: f64,
    pub method: PermutationMethod,
    pub n_permutations: u64,
    pub seed: u64,
}

/// Two-sided permutation test of Pearson correlation.
///
/// Enumerates all `n!` orderings when `n <= 8`; otherwise draws `n_mc` random
/// permutations and reports `(1 + k) / (1 + n_mc)`.
pub fn permutation_test(xs: &[f64], ys: &[f64], n_mc: u64, seed: u64) -> Result<PermutationResult> {
    if xs.len() < 4 {
        return Err(CapeError::TooFewPoints { needed: 4, got: xs.len() });
    }
    let r_observed = pearson_r(xs, ys)?;
    let (cx, sx) = centered(xs);
    let (cy, sy) = centered(ys);
    let norm = (sx * sy).sqrt();
    // Ties at the observed statistic count as extreme.
    let threshold = r_observed.abs() * norm * (1.0 - 1e-12);
    let n = xs.len();

    if n <= EXACT_PERMUTATION_MAX_N {
        let mut perm: Vec<usize> = (0..n).collect();
        let mut hits = 0_u64;
        let mut total = 0_u64;
        heap_permutations(&mut perm, |p| {
            total += 1;
            let s: f64 = p.iter().enumerate().map(|(i, &j)| cx[i] * cy[j]).sum();
            if s.abs() >= threshold {
                hits += 1;
            }
        });
        return Ok(PermutationResult {
            r_observed,
            p_value: hits as f64 / total as f64,
            method: PermutationMethod::Exact,
            n_permutations: total,
            seed,
        });
    }

    if n_mc == 0 {
        return Err(CapeError::InvalidArgument("n_mc must be positive for n > 8".into()));
    }
    const CHUNK: u64 = 4096;
    let chunks = n_mc.div_ceil(CHUNK);
    let hits: u64 = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = task_rng(seed, c);
            let mut idx: Vec<usize> = (0..n).collect();
            let count = CHUNK.min(n_mc - c * CHUNK);
            let mut h = 0;
            for _ in 0..count {
                idx.shuffle(&mut rng);
                let s: f64 = idx.iter().enumerate().map(|(i, &j)| cx[i] * cy[j]).sum();
                if s.abs() >= threshold {
                    h += 1;
                }
            }
            h
        })
        .sum();
    Ok(PermutationResult {
        r_observed,
        p_value: (1 + hits) as f64 / (1 + n_mc) as f64,
        method: PermutationMethod::MonteCarlo,
        n_permutations: n_mc,
        seed,
    })
}

/// Heap's algorithm; calls `f` once for every permutation of `items`.
fn heap_permutations(items: &mut [usize], mut f: impl FnMut(&[usize])) {
    let n = items.len();
    let mut c = vec![0usize; n];
    f(items);
    let mut i = 1;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                items.swap(0, i);
            } else {
                items.swap(c[i], i);
            }
            f(items);
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

/// Parametric two-sided p-value for Pearson r via the t distribution with n - 2 dof.
pub fn pearson_parametric_p(r: f64, n: usize) -> f64 {
    if n < 3 {
        return 1.0;
    }
    let dof = (n - 2) as f64;
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let t = r.abs() * (dof / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, dof).expect("positive dof");
    2.0 * (1.0 - dist.cdf(t))
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(k: u64, n: u64, confidence: f64) -> Result<(f64, f64)> {
    if n == 0 || k > n {
        return Err(CapeError::InvalidArgument(format!("need 0 <= k <= n and n >= 1, got k={k}, n={n}")));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(CapeError::InvalidArgument(format!("confidence must be in (0,1), got {confidence}")));
    }
    let z = Normal::standard().inverse_cdf(0.5 + confidence / 2.0);
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    Ok(((center - half).max(0.0), (center + half).min(1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn pearson_examples() {
        let xs = [0.1, 0.2, 0.35, 0.5];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        assert_relative_eq!(pearson_r(&xs, &ys).unwrap(), 1.0, epsilon = 1e-12);
        // Hand computation: centered xs {-1,0,1}, ys {-1/3, 2/3, -1/3}; covariance 0.
        assert_relative_eq!(pearson_r(&[0.0, 1.0, 2.0], &[0.0, 1.0, 0.0]).unwrap(), 0.0, epsilon = 1e-15);
        assert!(matches!(pearson_r(&[1.0, 2.0, 3.0], &[0.5, 0.5, 0.5]), Err(CapeError::DegenerateVariance(_))));
        assert!(matches!(pearson_r(&[1.0, 2.0], &[0.5, 0.4]), Err(CapeError::TooFewPoints { .. })));
    }

    /// Brute force over all 24 orderings without Heap's algorithm.
    fn brute_force_p(xs: &[f64], ys: &[f64]) -> f64 {
        let r0 = pearson_r(xs, ys).unwrap().abs();
        let n = xs.len();
        let mut hits = 0;
        let mut total = 0;
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    for d in 0..n {
                        let p = [a, b, c, d];
                        let mut seen = [false; 4];
                        if p.iter().any(|&i| std::mem::replace(&mut seen[i], true)) {
                            continue;
                        }
                        total += 1;
                        let permuted: Vec<f64> = p.iter().map(|&i| ys[i]).collect();
                        if pearson_r(xs, &permuted).unwrap().abs() >= r0 - 1e-12 {
                            hits += 1;
                        }
                    }
                }
            }
        }
        hits as f64 / total as f64
    }

    #[test]
    fn exact_permutation_matches_brute_force() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let res = permutation_test(&xs, &xs, 0, 1).unwrap();
        assert_eq!(res.method, PermutationMethod::Exact);
        assert_eq!(res.n_permutations, 24);
        assert_relative_eq!(res.p_value, 2.0 / 24.0, epsilon = 1e-15);
        assert_relative_eq!(res.p_value, brute_force_p(&xs, &xs), epsilon = 1e-15);

        let ys = [0.3, 0.1, 0.5, 0.45];
        let res = permutation_test(&xs, &ys, 0, 1).unwrap();
        assert_relative_eq!(res.p_value, brute_force_p(&xs, &ys), epsilon = 1e-15);
    }

    #[test]
    fn permutation_errors() {
        assert!(matches!(
            permutation_test(&[1.0, 2.0, 3.0, 4.0], &[1.0; 4], 0, 0),
            Err(CapeError::DegenerateVariance(_))
        ));
        assert!(permutation_test(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], 0, 0).is_err());
    }

    #[test]
    fn monte_carlo_permutation_is_seeded() {
        let xs: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let ys: Vec<f64> = (0..12).map(|i| ((i * 7) % 12) as f64).collect();
        let a = permutation_test(&xs, &ys, 20_000, 9).unwrap();
        let b = permutation_test(&xs, &ys, 20_000, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.method, PermutationMethod::MonteCarlo);
        assert!(a.p_value > 0.0 && a.p_value <= 1.0);
        let perfect = permutation_test(&xs, &xs, 20_000, 9).unwrap();
        assert_relative_eq!(perfect.p_value, 1.0 / 20_001.0, epsilon = 1e-15);
    }

    #[test]
    fn wilson_examples() {
        let (lo, hi) = wilson_interval(40, 40, 0.95).unwrap();
        assert_eq!(hi, 1.0);
        assert!(lo > 0.9 && lo < 0.92);
        // Direct formula with z = 1.959964, k = 1, n = 2:
        // center = (0.5 + z^2/4) / (1 + z^2/2) = 0.5, half = z/(1+z^2/2) * sqrt(1/8 + z^2/16)
        let z: f64 = 1.959_963_984_540_054;
        let half = z / (1.0 + z * z / 2.0) * (0.125 + z * z / 16.0).sqrt();
        let (lo, hi) = wilson_interval(1, 2, 0.95).unwrap();
        assert_relative_eq!(lo, 0.5 - half, epsilon = 1e-12);
        assert_relative_eq!(hi, 0.5 + half, epsilon = 1e-12);
        assert!(wilson_interval(3, 2, 0.95).is_err());
    }

    #[test]
    fn parametric_p_is_small_for_strong_r() {
        assert!(pearson_parametric_p(-0.989, 8) < 1e-5);
        assert_relative_eq!(pearson_parametric_p(0.0, 10), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn percentile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile(&v, 0.5), 3.0);
        assert_eq!(percentile(&v, 0.125), 1.5);
    }

    proptest! {
        #[test]
        fn exact_p_is_multiple_of_inverse_factorial(
            xs in proptest::collection::vec(-1.0f64..1.0, 5..=6),
            seed in 0u64..1000,
        ) {
            let mut ys = xs.clone();
            ys.reverse();
            ys[0] += 0.37;
            prop_assume!(pearson_r(&xs, &ys).is_ok());
            let n = xs.len();
            let fact: u64 = (1..=n as u64).product();
            let res = permutation_test(&xs, &ys, 0, seed).unwrap();
            let k = res.p_value * fact as f64;
            prop_assert!((k - k.round()).abs() < 1e-9);
            prop_assert!(res.p_value > 0.0 && res.p_value <= 1.0);
        }

        #[test]
        fn two_sided_p_symmetric_under_negation(xs in proptest::collection::vec(-1.0f64..1.0, 4..=7)) {
            prop_assume!(pearson_r(&xs, &xs).is_ok());
            let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
            let a = permutation_test(&xs, &xs, 0, 0).unwrap();
            let b = permutation_test(&xs, &neg, 0, 0).unwrap();
            prop_assert_eq!(a.p_value, b.p_value);
        }
    }
}
