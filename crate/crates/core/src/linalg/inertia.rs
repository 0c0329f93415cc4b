use nalgebra::DMatrix;

use super::svd::{svd_truncated_with, SvdMethod, DENSE_SVD_MAX_DIM};
use super::{LinalgError, MatrixOp};

/// Pivots within `INERTIA_REL_TOL·γ²` of zero count as zero, so a singular
/// value sitting on the threshold is counted as `≥ γ`.
pub const INERTIA_REL_TOL: f64 = 1e-12;

/// Bunch–Kaufman pivot growth constant `(1 + √17)/8`.
const BK_ALPHA: f64 = 0.640_388_203_202_208_4;

/// Eigenvalue sign counts of a symmetric matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Inertia {
    pub positive: usize,
    pub zero: usize,
    pub negative: usize,
}

impl Inertia {
    fn record(&mut self, d: f64, tol: f64) {
        if d > tol {
            self.positive += 1;
        } else if d < -tol {
            self.negative += 1;
        } else {
            self.zero += 1;
        }
    }
}

/// Inertia of a symmetric matrix (only the lower triangle is read) from the
/// block-diagonal factor of `P S Pᵀ = L D Lᵀ`. Values within `tol` of zero go
/// to [`Inertia::zero`]; `2×2` blocks are classified by their eigenvalues.
pub fn symmetric_inertia(s: &DMatrix<f64>, tol: f64) -> Result<Inertia, LinalgError> {
    let n = s.nrows();
    assert_eq!(n, s.ncols(), "inertia of a non-square matrix");
    let mut a: Vec<f64> = s.as_slice().to_vec();
    let at = |i: usize, j: usize| i + j * n;
    let mut out = Inertia::default();
    let mut k = 0;
    while k < n {
        let absakk = a[at(k, k)].abs();
        let (mut imax, mut colmax) = (k, 0.0f64);
        for i in k + 1..n {
            let v = a[at(i, k)].abs();
            if v > colmax {
                imax = i;
                colmax = v;
            }
        }
        if !(absakk.is_finite() && colmax.is_finite()) {
            return Err(LinalgError::FactorizationBreakdown(k));
        }
        if absakk.max(colmax) == 0.0 {
            out.record(0.0, tol);
            k += 1;
            continue;
        }

        let (kp, kstep) = if absakk >= BK_ALPHA * colmax {
            (k, 1)
        } else {
            let mut rowmax = 0.0f64;
            for j in k..imax {
                rowmax = rowmax.max(a[at(imax, j)].abs());
            }
            for i in imax + 1..n {
                rowmax = rowmax.max(a[at(i, imax)].abs());
            }
            if absakk >= BK_ALPHA * colmax * (colmax / rowmax) {
                (k, 1)
            } else if a[at(imax, imax)].abs() >= BK_ALPHA * rowmax {
                (imax, 1)
            } else {
                (imax, 2)
            }
        };

        let kk = k + kstep - 1;
        if kp != kk {
            for i in kp + 1..n {
                a.swap(at(i, kk), at(i, kp));
            }
            for j in kk + 1..kp {
                a.swap(at(j, kk), at(kp, j));
            }
            a.swap(at(kk, kk), at(kp, kp));
            if kstep == 2 {
                a.swap(at(k + 1, k), at(kp, k));
            }
        }

        if kstep == 1 {
            let d = a[at(k, k)];
            let (head, tail) = a.split_at_mut((k + 1) * n);
            let colk = &head[k * n..];
            for j in k + 1..n {
                let t = colk[j] / d;
                if t == 0.0 {
                    continue;
                }
                let colj = &mut tail[(j - k - 1) * n..(j - k) * n];
                for i in j..n {
                    colj[i] -= colk[i] * t;
                }
            }
            out.record(d, tol);
        } else {
            let (a11, a21, a22) = (a[at(k, k)], a[at(k + 1, k)], a[at(k + 1, k + 1)]);
            let det = a11 * a22 - a21 * a21;
            if det == 0.0 || !det.is_finite() {
                return Err(LinalgError::FactorizationBreakdown(k));
            }
            let (head, tail) = a.split_at_mut((k + 2) * n);
            let (c0, c1) = head[k * n..].split_at(n);
            for j in k + 2..n {
                let w1 = (a22 * c0[j] - a21 * c1[j]) / det;
                let w2 = (a11 * c1[j] - a21 * c0[j]) / det;
                let colj = &mut tail[(j - k - 2) * n..(j - k - 1) * n];
                for i in j..n {
                    colj[i] -= c0[i] * w1 + c1[i] * w2;
                }
            }
            let mean = 0.5 * (a11 + a22);
            let rad = (0.25 * (a11 - a22).powi(2) + a21 * a21).sqrt();
            out.record(mean + rad, tol);
            out.record(mean - rad, tol);
        }
        k += kstep;
    }
    Ok(out)
}

/// `#{i : σ_i(A) ≥ γ}`, read off the inertia of `AᵀA − γ²I`.
///
/// Falls back to [`count_singvals_above_by_svd`] if the factorization breaks
/// down on non-finite values. Matrices larger than [`DENSE_SVD_MAX_DIM`] skip
/// the dense Gram matrix and count from a growing iterative SVD instead.
pub fn count_singvals_above<A: MatrixOp + ?Sized>(a: &A, gamma: f64) -> Result<usize, LinalgError> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(LinalgError::BadThreshold(gamma));
    }
    if a.nrows().max(a.ncols()) > DENSE_SVD_MAX_DIM {
        return count_by_iterative_svd(a, gamma);
    }
    let g2 = gamma * gamma;
    let mut s = a.gram();
    for i in 0..s.nrows() {
        s[(i, i)] -= g2;
    }
    match symmetric_inertia(&s, INERTIA_REL_TOL * g2) {
        Ok(inertia) => Ok(inertia.positive + inertia.zero),
        Err(LinalgError::FactorizationBreakdown(_)) => count_singvals_above_by_svd(a, gamma),
        Err(e) => Err(e),
    }
}

fn count_by_iterative_svd<A: MatrixOp + ?Sized>(a: &A, gamma: f64) -> Result<usize, LinalgError> {
    let cutoff = gamma * (1.0 - INERTIA_REL_TOL).sqrt();
    let max_rank = a.nrows().min(a.ncols());
    let mut r = 8.min(max_rank);
    loop {
        let svd = svd_truncated_with(a, r, SvdMethod::Iterative)?;
        let count = svd.s.iter().filter(|&&s| s >= cutoff).count();
        if count < r || r == max_rank {
            return Ok(count);
        }
        r = (2 * r).min(max_rank);
    }
}

/// Same count from a full singular value decomposition.
pub fn count_singvals_above_by_svd<A: MatrixOp + ?Sized>(
    a: &A,
    gamma: f64,
) -> Result<usize, LinalgError> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(LinalgError::BadThreshold(gamma));
    }
    let mut dense = a.to_dense();
    let scale = dense.amax();
    if scale == 0.0 {
        return Ok(0);
    }
    dense /= scale;
    let sv = dense.singular_values();
    let cutoff = gamma * (1.0 - INERTIA_REL_TOL).sqrt() / scale;
    Ok(sv.iter().filter(|&&s| s >= cutoff).count())
}
