use nalgebra::{DMatrix, DVector};

use crate::error::{CapeError, Result};

#[derive(Debug, Clone)]
pub struct LstsqSolution {
    pub solution: DVector<f64>,
    pub rank: usize,
    /// True when the design has fewer independent columns than columns;
    /// `solution` is then the minimum-norm minimizer.
    pub rank_deficient: bool,
}

/// Minimum-norm least squares through the SVD.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<LstsqSolution> {
    if a.nrows() != b.len() {
        return Err(CapeError::InvalidArgument(format!("design has {} rows, target {}", a.nrows(), b.len())));
    }
    if a.ncols() == 0 {
        return Ok(LstsqSolution { solution: DVector::zeros(0), rank: 0, rank_deficient: false });
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(CapeError::InvalidArgument("non-finite value in least-squares system".into()));
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let tol = smax * f64::EPSILON * a.nrows().max(a.ncols()) as f64;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    let solution = svd.solve(b, tol).map_err(|e| CapeError::RankDeficient(e.to_string()))?;
    Ok(LstsqSolution { solution, rank, rank_deficient: rank < a.ncols() })
}

/// Coefficients (constant first) of the least-squares polynomial of `degree`.
pub fn polyfit(xs: &[f64], ys: &[f64], degree: usize) -> Result<Vec<f64>> {
    if xs.len() != ys.len() {
        return Err(CapeError::InvalidArgument("length mismatch".into()));
    }
    let design = DMatrix::from_fn(xs.len(), degree + 1, |i, j| xs[i].powi(j as i32));
    let target = DVector::from_column_slice(ys);
    let sol = lstsq(&design, &target)?;
    if sol.rank_deficient {
        return Err(CapeError::RankDeficient(format!(
            "degree-{degree} polynomial on {} points has rank {}",
            xs.len(),
            sol.rank
        )));
    }
    Ok(sol.solution.iter().copied().collect())
}

pub fn polyval(coefs: &[f64], x: f64) -> f64 {
    coefs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}
