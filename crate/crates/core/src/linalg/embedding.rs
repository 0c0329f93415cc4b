use nalgebra::DMatrix;

use super::{LinalgError, SvdResult};

/// Row `x` is `(σ_1 U_x1, …, σ_r U_xr, σ_1 V_x1, …, σ_r V_xr)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub n: usize,
    pub r: usize,
    /// Row-major `n × 2r`.
    data: Vec<f64>,
}

impl Embedding {
    /// Points given directly, row-major with `2r` coordinates each.
    pub fn from_rows(n: usize, r: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * 2 * r, "embedding data has the wrong length");
        Self { n, r, data }
    }

    pub fn dim(&self) -> usize {
        2 * self.r
    }

    pub fn row(&self, x: usize) -> &[f64] {
        let d = self.dim();
        &self.data[x * d..(x + 1) * d]
    }

    pub fn dist2(&self, x: usize, y: usize) -> f64 {
        self.row(x)
            .iter()
            .zip(self.row(y))
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.dim(), &self.data)
    }
}

fn check_rank(svd: &SvdResult, r: usize) -> Result<(), LinalgError> {
    if r == 0 || r > svd.rank() {
        return Err(LinalgError::InvalidRank {
            requested: r,
            available: svd.rank(),
        });
    }
    Ok(())
}

pub fn embed(svd: &SvdResult, r: usize) -> Result<Embedding, LinalgError> {
    check_rank(svd, r)?;
    let n = svd.u.nrows();
    assert_eq!(n, svd.v.nrows(), "embedding needs a square matrix");
    let mut data = Vec::with_capacity(n * 2 * r);
    for x in 0..n {
        data.extend((0..r).map(|i| svd.s[i] * svd.u[(x, i)]));
        data.extend((0..r).map(|i| svd.s[i] * svd.v[(x, i)]));
    }
    Ok(Embedding { n, r, data })
}

/// Rank-`r` approximation `R̂ = Σ_{i≤r} σ_i u_i v_iᵀ`, kept in factored form.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankPair {
    us: DMatrix<f64>,
    v: DMatrix<f64>,
}

impl LowRankPair {
    pub fn dense(&self) -> DMatrix<f64> {
        &self.us * self.v.transpose()
    }

    /// `(R̂_{x,·}, R̂_{·,x})`, length `2n`.
    pub fn row(&self, x: usize) -> Vec<f64> {
        let out_row = &self.v * self.us.row(x).transpose();
        let in_col = &self.us * self.v.row(x).transpose();
        out_row.iter().chain(in_col.iter()).copied().collect()
    }
}

pub fn lowrank_rows(svd: &SvdResult, r: usize) -> Result<LowRankPair, LinalgError> {
    check_rank(svd, r)?;
    let mut us = svd.u.columns(0, r).into_owned();
    for i in 0..r {
        us.column_mut(i).scale_mut(svd.s[i]);
    }
    Ok(LowRankPair {
        us,
        v: svd.v.columns(0, r).into_owned(),
    })
}
