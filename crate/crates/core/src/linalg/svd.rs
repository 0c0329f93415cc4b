use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{LinalgError, MatrixOp};

/// Largest dimension handled by the dense path under [`SvdMethod::Auto`].
pub const DENSE_SVD_MAX_DIM: usize = 4096;

/// Below this ratio `σ_r/σ_1` the Gram route loses too many digits and the
/// dense path falls back to a full bidiagonal SVD.
const GRAM_FALLBACK_RATIO: f64 = 1e-4;

const ITER_TOL: f64 = 1e-8;
const ITER_MAX: usize = 2000;
const ITER_OVERSAMPLE: usize = 10;
const ITER_SEED: u64 = 0x5eed_5eed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SvdMethod {
    /// Dense up to [`DENSE_SVD_MAX_DIM`], iterative above.
    #[default]
    Auto,
    Dense,
    Iterative,
}

/// Leading singular triplets, `s` descending.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdResult {
    /// `m×r`, orthonormal columns.
    pub u: DMatrix<f64>,
    pub s: Vec<f64>,
    /// `n×r`, orthonormal columns.
    pub v: DMatrix<f64>,
}

impl SvdResult {
    pub fn rank(&self) -> usize {
        self.s.len()
    }
}

pub fn svd_truncated<A: MatrixOp + ?Sized>(a: &A, r: usize) -> Result<SvdResult, LinalgError> {
    svd_truncated_with(a, r, SvdMethod::Auto)
}

pub fn svd_truncated_with<A: MatrixOp + ?Sized>(
    a: &A,
    r: usize,
    method: SvdMethod,
) -> Result<SvdResult, LinalgError> {
    let available = a.nrows().min(a.ncols());
    if r == 0 || r > available {
        return Err(LinalgError::InvalidRank {
            requested: r,
            available,
        });
    }
    let dense = match method {
        SvdMethod::Dense => true,
        SvdMethod::Iterative => false,
        SvdMethod::Auto => a.nrows().max(a.ncols()) <= DENSE_SVD_MAX_DIM,
    };
    if dense {
        Ok(dense_svd(a, r))
    } else {
        iterative_svd(a, r)
    }
}

fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[j].total_cmp(&values[i]).then(i.cmp(&j)));
    idx
}

fn dense_svd<A: MatrixOp + ?Sized>(a: &A, r: usize) -> SvdResult {
    let eig = a.gram().symmetric_eigen();
    let order = descending_order(eig.eigenvalues.as_slice());
    let s: Vec<f64> = order[..r]
        .iter()
        .map(|&i| eig.eigenvalues[i].max(0.0).sqrt())
        .collect();
    if s[0] == 0.0 || s[r - 1] < GRAM_FALLBACK_RATIO * s[0] {
        return full_svd(&a.to_dense(), r);
    }
    let m = a.nrows();
    let mut u = DMatrix::zeros(m, r);
    let mut v = DMatrix::zeros(a.ncols(), r);
    for (c, &i) in order[..r].iter().enumerate() {
        let vi = eig.eigenvectors.column(i);
        v.set_column(c, &vi);
        let av = a.mul_vec(vi.as_slice());
        for (row, x) in av.into_iter().enumerate() {
            u[(row, c)] = x / s[c];
        }
    }
    SvdResult { u, s, v }
}

fn full_svd(dense: &DMatrix<f64>, r: usize) -> SvdResult {
    let svd = dense.clone().svd(true, true);
    let (uf, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let order = descending_order(svd.singular_values.as_slice());
    let mut u = DMatrix::zeros(dense.nrows(), r);
    let mut v = DMatrix::zeros(dense.ncols(), r);
    let mut s = Vec::with_capacity(r);
    for (c, &i) in order[..r].iter().enumerate() {
        s.push(svd.singular_values[i]);
        u.set_column(c, &uf.column(i));
        v.set_column(c, &vt.row(i).transpose());
    }
    SvdResult { u, s, v }
}

fn apply<A: MatrixOp + ?Sized>(a: &A, q: &DMatrix<f64>, transpose: bool) -> DMatrix<f64> {
    let rows = if transpose { a.ncols() } else { a.nrows() };
    let mut out = DMatrix::zeros(rows, q.ncols());
    for c in 0..q.ncols() {
        let col = q.column(c);
        let y = if transpose {
            a.tr_mul_vec(col.as_slice())
        } else {
            a.mul_vec(col.as_slice())
        };
        out.column_mut(c).copy_from_slice(&y);
    }
    out
}

/// Block subspace iteration on `AᵀA` with Rayleigh–Ritz extraction. Stops
/// once every requested triplet has `‖Aᵀu − σv‖ ≤ 1e-8·σ_1`.
fn iterative_svd<A: MatrixOp + ?Sized>(a: &A, r: usize) -> Result<SvdResult, LinalgError> {
    let n = a.ncols();
    let b = (r + ITER_OVERSAMPLE).min(a.nrows().min(n));
    let mut rng = ChaCha8Rng::seed_from_u64(ITER_SEED);
    let start = DMatrix::from_fn(n, b, |_, _| StandardNormal.sample(&mut rng));
    let mut q = start.qr().q();
    for iter in 1..=ITER_MAX {
        let z = apply(a, &apply(a, &q, false), true);
        q = z.qr().q();

        let proj = apply(a, &q, false);
        let small = full_svd(&proj, r);
        let v = &q * &small.v;
        let u = small.u;
        let s = small.s;
        if s[0] == 0.0 {
            return Ok(SvdResult { u, s, v });
        }
        let tol = ITER_TOL * s[0];
        let converged = (0..r).all(|c| {
            let atu = a.tr_mul_vec(u.column(c).as_slice());
            let res: f64 = atu
                .iter()
                .zip(v.column(c).iter())
                .map(|(x, y)| (x - s[c] * y).powi(2))
                .sum::<f64>()
                .sqrt();
            res <= tol
        });
        if converged {
            return Ok(SvdResult { u, s, v });
        }
        if iter == ITER_MAX {
            break;
        }
    }
    Err(LinalgError::NoConvergence(ITER_MAX))
}
