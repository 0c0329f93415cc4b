use nalgebra::{DMatrix, Schur};

use crate::counts::{degrees, CountMatrix};
use crate::linalg::LinalgError;

use super::EstimatorError;

/// Relative tolerance on eigengap ties.
const GAP_TIE_TOL: f64 = 1e-10;

/// Location of the largest gap between successive eigenvalue moduli of the
/// modularity matrix `M̂_xy = N̂_xy − d_x^in d_y^out / ℓ`.
///
/// Moduli are sorted descending; the estimate is the `i ≥ 2` maximizing
/// `|λ_{i−1}| − |λ_i|`, taken literally, so a gap right after the first
/// eigenvalue yields 2.
pub fn megh_estimate(counts: &CountMatrix) -> Result<usize, EstimatorError> {
    if counts.ell < 1 {
        return Err(EstimatorError::InvalidInput("trajectory has no transitions".into()));
    }
    let n = counts.n;
    if n == 1 {
        return Ok(1);
    }
    let deg = degrees(counts);
    let ell = counts.ell as f64;
    let mut m = DMatrix::from_fn(n, n, |x, y| {
        -(deg.d_in[x] as f64) * (deg.d_out[y] as f64) / ell
    });
    for (&(x, y), &c) in &counts.entries {
        m[(x as usize, y as usize)] += c as f64;
    }
    let schur = Schur::try_new(m, f64::EPSILON, 1000 * n)
        .ok_or(EstimatorError::Linalg(LinalgError::EigenFailure))?;
    let moduli: Vec<f64> = schur.complex_eigenvalues().iter().map(|z| z.norm()).collect();
    if moduli.iter().any(|v| !v.is_finite()) {
        return Err(EstimatorError::Linalg(LinalgError::EigenFailure));
    }
    Ok(megh_from_moduli(moduli))
}

/// The gap rule on a list of eigenvalue moduli (any order).
pub fn megh_from_moduli(mut moduli: Vec<f64>) -> usize {
    if moduli.len() < 2 {
        return moduli.len();
    }
    moduli.sort_by(|a, b| b.total_cmp(a));
    let gaps: Vec<f64> = moduli.windows(2).map(|w| w[0] - w[1]).collect();
    let largest = gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let slack = GAP_TIE_TOL * moduli[0];
    let first = gaps.iter().position(|&g| g >= largest - slack).unwrap_or(0);
    first + 2
}
