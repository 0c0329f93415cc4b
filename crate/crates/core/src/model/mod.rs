//! Block Markov chain parameters, finite-`n` instances, trajectories and
//! the random parameter ensembles used by the experiments.
//!
//! A block Markov chain on `n` states is described by a cluster map
//! `σ: [n] → [K]` and a `K×K` row-stochastic matrix `p`; the state-level
//! kernel is `P[x][y] = p[σ(x)][σ(y)] / |V_σ(y)|`. Nothing here ever
//! materializes the `n×n` kernel.

mod characteristics;
mod ensemble;
mod trajectory;

pub use characteristics::{information_quantity, mixing_time};
pub use ensemble::{
    sample_assortative_ensemble, sample_lowrank_ensemble, sample_reversible_ensemble,
    sample_uniform_ensemble, AlphaMode, Ensemble, ENSEMBLE_RETRY_BUDGET,
};
pub use trajectory::{
    simulate, simulate_with_start, PerturbationSpec, PerturbedSampler, StartRule, Trajectory,
    TrajectoryFormat,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on row sums of `p` and on the sum of `alpha`.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Maximum number of power iterations in [`stationary_distribution`].
pub const STATIONARY_MAX_ITER: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("cluster count K must be at least 1")]
    EmptyModel,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("row {row} of p is not stochastic (sum = {sum}, min entry = {min})")]
    NotStochastic { row: usize, sum: f64, min: f64 },
    #[error("cluster transition matrix is not irreducible")]
    NotIrreducible,
    #[error("bad cluster fractions: {0}")]
    BadAlpha(String),
    #[error("cluster {cluster} would hold {size} states at n = {n}")]
    ClusterTooSmall { cluster: usize, size: i64, n: usize },
    #[error("power iteration did not converge after {0} iterations")]
    NoConvergence(usize),
    #[error("total variation did not drop below 1/4 within {0} steps")]
    NoMixing(usize),
    #[error("degenerate dot-product vectors")]
    DegenerateVectors,
    #[error("ensemble rejection budget of {0} samples exhausted")]
    RejectionBudget(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("trajectory format: {0}")]
    Format(String),
}

/// Cluster-level description `(K, p, α)` of a block Markov chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BmcParams {
    #[serde(rename = "K")]
    pub k: usize,
    pub p: Vec<Vec<f64>>,
    pub alpha: Vec<f64>,
}

impl BmcParams {
    /// Builds and validates.
    pub fn new(p: Vec<Vec<f64>>, alpha: Vec<f64>) -> Result<Self, ModelError> {
        let params = Self {
            k: p.len(),
            p,
            alpha,
        };
        validate_params(&params)?;
        Ok(params)
    }

    /// Two-cluster family `p = [[p0, 1-p0], [1-p0, p0]]`, `α = (1/2, 1/2)`.
    pub fn symmetric_two_cluster(p0: f64) -> Result<Self, ModelError> {
        Self::new(vec![vec![p0, 1.0 - p0], vec![1.0 - p0, p0]], vec![0.5, 0.5])
    }

    /// The three-cluster dot-product example with `v1 = a(1,0)`,
    /// `v2 = b(1,1)`, `v3 = a(0,1)` and equal cluster fractions.
    pub fn dot_product_example(a: f64, b: f64) -> Result<Self, ModelError> {
        if !(a > 0.0 && b > 0.0) {
            return Err(ModelError::InvalidParameter(format!(
                "dot-product example needs a, b > 0 (got a = {a}, b = {b})"
            )));
        }
        let vectors = vec![vec![a, 0.0], vec![b, b], vec![0.0, a]];
        let p = dot_product_matrix(&vectors)?;
        Self::new(p, vec![1.0 / 3.0; 3])
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let params: Self = serde_json::from_str(text)
            .map_err(|e| ModelError::InvalidParameter(format!("params JSON: {e}")))?;
        validate_params(&params)?;
        Ok(params)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("params serialize")
    }

    /// Stationary vector of `p` (power iteration, linear solve on failure).
    pub fn stationary(&self) -> Result<Vec<f64>, ModelError> {
        stationary_distribution(&self.p).or_else(|_| stationary_by_solve(&self.p))
    }
}

/// Row-normalizes pairwise inner products: `p[i][j] = <v_i, v_j> / Σ_j <v_i, v_j>`.
pub fn dot_product_matrix(vectors: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, ModelError> {
    let k = vectors.len();
    let mut p = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            p[i][j] = vectors[i]
                .iter()
                .zip(&vectors[j])
                .map(|(a, b)| a * b)
                .sum();
        }
        let total: f64 = p[i].iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(ModelError::DegenerateVectors);
        }
        p[i].iter_mut().for_each(|v| *v /= total);
    }
    Ok(p)
}

pub fn validate_params(params: &BmcParams) -> Result<(), ModelError> {
    let k = params.k;
    if k == 0 {
        return Err(ModelError::EmptyModel);
    }
    if params.p.len() != k || params.p.iter().any(|row| row.len() != k) {
        return Err(ModelError::Shape(format!("p must be {k}x{k}")));
    }
    if params.alpha.len() != k {
        return Err(ModelError::Shape(format!(
            "alpha has {} entries, expected {k}",
            params.alpha.len()
        )));
    }
    for (row, values) in params.p.iter().enumerate() {
        let sum: f64 = values.iter().sum();
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(min >= 0.0) || !((sum - 1.0).abs() <= STOCHASTIC_TOL) {
            return Err(ModelError::NotStochastic { row, sum, min });
        }
    }
    let alpha_sum: f64 = params.alpha.iter().sum();
    if params.alpha.iter().any(|&a| !(a > 0.0)) {
        return Err(ModelError::BadAlpha("entries must be strictly positive".into()));
    }
    if !((alpha_sum - 1.0).abs() <= STOCHASTIC_TOL) {
        return Err(ModelError::BadAlpha(format!("entries sum to {alpha_sum}")));
    }
    if !is_irreducible(&params.p) {
        return Err(ModelError::NotIrreducible);
    }
    Ok(())
}

/// Strong connectivity of the digraph with an edge `i → j` whenever `p[i][j] > 0`.
pub fn is_irreducible(p: &[Vec<f64>]) -> bool {
    let k = p.len();
    let reach = |forward: bool| {
        let mut seen = vec![false; k];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..k {
                let w = if forward { p[i][j] } else { p[j][i] };
                if w > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    k > 0 && reach(true) && reach(false)
}

/// Stationary distribution of an irreducible stochastic matrix.
///
/// Power iteration runs on the lazy kernel `(I + p) / 2`, which has the same
/// stationary vector and is aperiodic, until `‖π p − π‖₁ ≤ 1e-12`.
pub fn stationary_distribution(p: &[Vec<f64>]) -> Result<Vec<f64>, ModelError> {
    let k = p.len();
    if k == 0 {
        return Err(ModelError::EmptyModel);
    }
    let mut pi = vec![1.0 / k as f64; k];
    let mut next = vec![0.0; k];
    for _ in 0..STATIONARY_MAX_ITER {
        left_multiply(&pi, p, &mut next);
        let residual: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        if residual <= 1e-12 {
            return Ok(normalized(pi));
        }
        for (slot, moved) in pi.iter_mut().zip(&next) {
            *slot = 0.5 * (*slot + moved);
        }
        let total: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|v| *v /= total);
    }
    Err(ModelError::NoConvergence(STATIONARY_MAX_ITER))
}

/// Solves `π (p − I) = 0`, `Σ π = 1` directly.
fn stationary_by_solve(p: &[Vec<f64>]) -> Result<Vec<f64>, ModelError> {
    let k = p.len();
    // Rows of the system are the columns of (p - I)^T; the last one is
    // replaced by the normalization constraint.
    let mut m = nalgebra::DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            m[(j, i)] = p[i][j] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for i in 0..k {
        m[(k - 1, i)] = 1.0;
    }
    let mut rhs = nalgebra::DVector::<f64>::zeros(k);
    rhs[k - 1] = 1.0;
    let sol = m
        .lu()
        .solve(&rhs)
        .ok_or(ModelError::NoConvergence(STATIONARY_MAX_ITER))?;
    Ok(normalized(sol.iter().map(|v| v.max(0.0)).collect()))
}

fn left_multiply(v: &[f64], p: &[Vec<f64>], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for (vi, row) in v.iter().zip(p) {
        for (o, pij) in out.iter_mut().zip(row) {
            *o += vi * pij;
        }
    }
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= total);
    v
}

/// Cluster sizes under the finite-`n` rule: `|V_k| = ⌊n α_k⌋` for `k ≥ 2`,
/// the remainder goes to cluster 1.
pub fn cluster_sizes(alpha: &[f64], n: usize) -> Result<Vec<usize>, ModelError> {
    let mut sizes = vec![0usize; alpha.len()];
    let mut assigned = 0i64;
    for (k, &a) in alpha.iter().enumerate().skip(1) {
        let size = (n as f64 * a).floor() as i64;
        if size < 1 {
            return Err(ModelError::ClusterTooSmall { cluster: k, size, n });
        }
        sizes[k] = size as usize;
        assigned += size;
    }
    let first = n as i64 - assigned;
    if first < 1 {
        return Err(ModelError::ClusterTooSmall {
            cluster: 0,
            size: first,
            n,
        });
    }
    sizes[0] = first as usize;
    Ok(sizes)
}

/// A block Markov chain realized on `n` states with a contiguous cluster layout.
#[derive(Debug, Clone, PartialEq)]
pub struct BmcInstance {
    pub params: BmcParams,
    pub n: usize,
    pub sigma: Vec<usize>,
    pub cluster_sizes: Vec<usize>,
    /// First state index of each cluster.
    pub offsets: Vec<usize>,
    /// Stationary vector of `p`.
    pub pi: Vec<f64>,
}

impl BmcInstance {
    /// `Π_x = π_σ(x) / |V_σ(x)|`.
    pub fn state_stationary(&self, x: usize) -> f64 {
        let k = self.sigma[x];
        self.pi[k] / self.cluster_sizes[k] as f64
    }

    /// Materializes the length-`n` stationary vector `Π`.
    pub fn state_stationary_vector(&self) -> Vec<f64> {
        (0..self.n).map(|x| self.state_stationary(x)).collect()
    }

    /// State-level transition probability `P[x][y]`.
    pub fn transition_probability(&self, x: usize, y: usize) -> f64 {
        let (i, j) = (self.sigma[x], self.sigma[y]);
        self.params.p[i][j] / self.cluster_sizes[j] as f64
    }

    pub fn k(&self) -> usize {
        self.params.k
    }
}

pub fn build_instance(params: BmcParams, n: usize) -> Result<BmcInstance, ModelError> {
    validate_params(&params)?;
    let cluster_sizes = cluster_sizes(&params.alpha, n)?;
    let mut sigma = Vec::with_capacity(n);
    let mut offsets = Vec::with_capacity(params.k);
    for (k, &size) in cluster_sizes.iter().enumerate() {
        offsets.push(sigma.len());
        sigma.extend(std::iter::repeat(k).take(size));
    }
    let pi = params.stationary()?;
    Ok(BmcInstance {
        params,
        n,
        sigma,
        cluster_sizes,
        offsets,
        pi,
    })
}
