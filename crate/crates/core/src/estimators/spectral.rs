use crate::counts::{build_counts, trim, TrimmedCounts};
use crate::linalg::{count_singvals_above, embed, svd_truncated, Embedding, MatrixOp, SvdResult};
use crate::model::Trajectory;

use super::{Diagnostics, EstimateResult, EstimatorError, Labeling, Thresholds};

/// Singular values at or below this fraction of `σ_1` count as zero when
/// checking that an embedding has full rank.
const NULL_SINGULAR_RATIO: f64 = 1e-12;

/// Singular values of the trimmed counts at or above `γ`.
///
/// Also returns the trimmed counts so later stages can reuse them.
pub fn alg1_spectral_count(
    traj: &Trajectory,
    thresholds: &Thresholds,
) -> Result<(usize, TrimmedCounts), EstimatorError> {
    thresholds.validate()?;
    if traj.ell < 1 {
        return Err(EstimatorError::InvalidInput("trajectory has no transitions".into()));
    }
    let trimmed = trim(build_counts(traj));
    let gamma = thresholds.gamma(traj.n, traj.ell);
    let k_spec = count_singvals_above(&trimmed.to_csr(), gamma)?;
    Ok((k_spec, trimmed))
}

/// Rank-`r` embedding of the trimmed counts followed by [`density_peel`]
/// with the radius `h` and size threshold `ρ` of `thresholds`.
pub fn alg2_density_count(
    trimmed: &TrimmedCounts,
    r: usize,
    thresholds: &Thresholds,
) -> Result<(EstimateResult, Embedding), EstimatorError> {
    thresholds.validate()?;
    let (n, ell) = (trimmed.n(), trimmed.ell());
    let (mut result, emb) = alg2_on_matrix(
        &trimmed.to_csr(),
        r,
        thresholds.h(n, ell),
        thresholds.rho(n, ell),
    )?;
    result.diagnostics.trimmed = trimmed.gamma_set.len();
    Ok((result, emb))
}

/// The density step on an arbitrary square matrix.
pub fn alg2_on_matrix<A: MatrixOp + ?Sized>(
    a: &A,
    r: usize,
    h: f64,
    rho: f64,
) -> Result<(EstimateResult, Embedding), EstimatorError> {
    let svd = checked_svd(a, r)?;
    let emb = embed(&svd, r)?;
    let outcome = density_peel(&emb, h, rho);
    Ok((
        EstimateResult {
            k_hat: outcome.centers.len(),
            centers: outcome.centers,
            partial_clusters: outcome.sets,
            embedding_rank: r,
            diagnostics: Diagnostics {
                k_spec: None,
                trimmed: 0,
                singular_values: svd.s,
            },
        },
        emb,
    ))
}

fn checked_svd<A: MatrixOp + ?Sized>(a: &A, r: usize) -> Result<SvdResult, EstimatorError> {
    let n = a.nrows();
    if r == 0 {
        return Err(EstimatorError::InvalidInput("embedding rank must be at least 1".into()));
    }
    if r > n {
        return Err(EstimatorError::EmptyEmbedding {
            requested: r,
            available: n,
        });
    }
    let svd = svd_truncated(a, r)?;
    let cutoff = NULL_SINGULAR_RATIO * svd.s[0];
    let available = svd.s.iter().filter(|&&s| s > cutoff).count();
    if available < r {
        return Err(EstimatorError::EmptyEmbedding {
            requested: r,
            available,
        });
    }
    Ok(svd)
}

/// Centers and their sets, in selection order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeelOutcome {
    pub centers: Vec<usize>,
    pub sets: Vec<Vec<usize>>,
}

/// Greedy cover by `h`-neighborhoods, tracking for each point how many of
/// its neighbors are still uncovered.
struct Peeler {
    neighbors: Vec<Vec<u32>>,
    uncovered: Vec<usize>,
    covered: Vec<bool>,
}

impl Peeler {
    fn new(emb: &Embedding, h: f64) -> Self {
        let n = emb.n;
        let mut neighbors: Vec<Vec<u32>> = (0..n).map(|x| vec![x as u32]).collect();
        for x in 0..n {
            for y in x + 1..n {
                if emb.dist2(x, y).sqrt() <= h {
                    neighbors[x].push(y as u32);
                    neighbors[y].push(x as u32);
                }
            }
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        let uncovered = neighbors.iter().map(Vec::len).collect();
        Self {
            neighbors,
            uncovered,
            covered: vec![false; n],
        }
    }

    /// Point with the most uncovered neighbors, smallest index among ties.
    fn best(&self) -> (usize, usize) {
        let mut best = (0, 0);
        for (x, &c) in self.uncovered.iter().enumerate() {
            if c > best.1 {
                best = (x, c);
            }
        }
        best
    }

    fn take(&mut self, z: usize) -> Vec<usize> {
        let set: Vec<usize> = self.neighbors[z]
            .iter()
            .map(|&y| y as usize)
            .filter(|&y| !self.covered[y])
            .collect();
        for &y in &set {
            self.covered[y] = true;
            // neighborhoods are symmetric
            for &x in &self.neighbors[y] {
                self.uncovered[x as usize] -= 1;
            }
        }
        set
    }
}

/// `N_x = {y : ‖X̂_x − X̂_y‖ ≤ h}`. Starting from `V̂_0 = [n]`, while the
/// last set has at least `ρ` states, pick the point whose neighborhood has
/// the most uncovered states and store those states as the next set. The
/// final set is below `ρ` and is dropped, so `K̂` is one less than the
/// number of iterations.
pub fn density_peel(emb: &Embedding, h: f64, rho: f64) -> PeelOutcome {
    let mut peeler = Peeler::new(emb, h);
    let mut out = PeelOutcome {
        centers: Vec::new(),
        sets: Vec::new(),
    };
    let mut last = emb.n;
    while last as f64 >= rho {
        let (z, _) = peeler.best();
        let set = peeler.take(z);
        last = set.len();
        out.centers.push(z);
        out.sets.push(set);
        if last == 0 {
            break;
        }
    }
    out.centers.pop();
    out.sets.pop();
    out
}

/// The same greedy loop run for exactly `k` picks, ignoring `ρ`. Stops early
/// only when every state is covered.
pub fn peel_exact(emb: &Embedding, h: f64, k: usize) -> PeelOutcome {
    let mut peeler = Peeler::new(emb, h);
    let mut out = PeelOutcome {
        centers: Vec::new(),
        sets: Vec::new(),
    };
    for _ in 0..k {
        let (z, count) = peeler.best();
        if count == 0 {
            break;
        }
        out.sets.push(peeler.take(z));
        out.centers.push(z);
    }
    out
}

/// Gives every uncovered state the label of its nearest center, smallest
/// cluster index among ties. One pass, centers stay fixed.
pub fn alg3_complete(emb: &Embedding, result: &EstimateResult) -> Result<Labeling, EstimatorError> {
    complete(emb, &result.centers, &result.partial_clusters)
}

fn complete(
    emb: &Embedding,
    centers: &[usize],
    clusters: &[Vec<usize>],
) -> Result<Labeling, EstimatorError> {
    if centers.is_empty() {
        return Err(EstimatorError::NoCenters);
    }
    let mut labeling = Labeling::from_partial(emb.n, clusters);
    for x in 0..emb.n {
        if labeling.labels[x] != super::UNASSIGNED {
            continue;
        }
        let mut best = (0, emb.dist2(x, centers[0]));
        for (k, &z) in centers.iter().enumerate().skip(1) {
            let d = emb.dist2(x, z);
            if d < best.1 {
                best = (k, d);
            }
        }
        labeling.labels[x] = best.0;
    }
    Ok(labeling)
}

/// Full pipeline: spectral count, density peeling at rank
/// `r_override.unwrap_or(max(k_spec, 1))`, then completion. The labeling is
/// `None` when no cluster survives the peeling.
pub fn estimate_full(
    traj: &Trajectory,
    thresholds: &Thresholds,
    r_override: Option<usize>,
) -> Result<(EstimateResult, Option<Labeling>), EstimatorError> {
    let (k_spec, trimmed) = alg1_spectral_count(traj, thresholds)?;
    let r = r_override.unwrap_or(k_spec.max(1));
    let (mut result, emb) = alg2_density_count(&trimmed, r, thresholds)?;
    result.diagnostics.k_spec = Some(k_spec);
    let labeling = if result.k_hat >= 1 {
        Some(alg3_complete(&emb, &result)?)
    } else {
        None
    };
    Ok((result, labeling))
}

/// Clustering into exactly `k` groups (fewer only if the neighborhoods
/// cover every state sooner) from the embedding at rank `max(k_spec, 1)`,
/// for comparing against the estimate when the true count is revealed.
pub fn revealed_k_labels(
    traj: &Trajectory,
    thresholds: &Thresholds,
    k: usize,
) -> Result<Labeling, EstimatorError> {
    let (k_spec, trimmed) = alg1_spectral_count(traj, thresholds)?;
    let r = k_spec.clamp(1, traj.n);
    let svd = svd_truncated(&trimmed.to_csr(), r)?;
    let emb = embed(&svd, r)?;
    let outcome = peel_exact(&emb, thresholds.h(traj.n, traj.ell), k);
    complete(&emb, &outcome.centers, &outcome.sets)
}

/// Exactly-`k` peeling plus completion on the rank-`k` prefix of `svd`.
pub(crate) fn labels_for_k(svd: &SvdResult, h: f64, k: usize) -> Result<Labeling, EstimatorError> {
    let emb = embed(svd, k.min(svd.rank()))?;
    let outcome = peel_exact(&emb, h, k);
    complete(&emb, &outcome.centers, &outcome.sets)
}
