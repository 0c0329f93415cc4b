use crate::counts::{build_counts, trim, CountMatrix};
use crate::linalg::svd_truncated;
use crate::model::Trajectory;

use super::spectral::labels_for_k;
use super::{EstimatorError, Labeling, Thresholds};

/// Sweep cap of the single-state reassignment pass.
pub const LLCI_MAX_SWEEPS: usize = 20;

/// Smallest likelihood gain that counts as an improvement.
const IMPROVE_EPS: f64 = 1e-9;

fn xlnx(v: f64) -> f64 {
    if v > 0.0 {
        v * v.ln()
    } else {
        0.0
    }
}

fn distinct_states(states: &[u32]) -> usize {
    let mut seen = std::collections::BTreeSet::new();
    for &s in states {
        seen.insert(s);
        if seen.len() >= 2 {
            break;
        }
    }
    seen.len()
}

/// One candidate clustering per `k = 1..=k_max` (capped at `n`), all from a
/// single SVD of the trimmed counts of `traj`.
fn candidate_labelings(
    traj: &Trajectory,
    k_max: usize,
    thresholds: &Thresholds,
) -> Result<Vec<Labeling>, EstimatorError> {
    thresholds.validate()?;
    if k_max == 0 {
        return Err(EstimatorError::InvalidInput("k_max must be at least 1".into()));
    }
    let k_top = k_max.min(traj.n);
    let trimmed = trim(build_counts(traj));
    let svd = svd_truncated(&trimmed.to_csr(), k_top)?;
    let h = thresholds.h(traj.n, traj.ell);
    (1..=k_top).map(|k| labels_for_k(&svd, h, k)).collect()
}

/// Cluster-level transition counts along `states`.
fn cluster_counts(labels: &[usize], k: usize, states: &[u32]) -> Vec<Vec<f64>> {
    let mut c = vec![vec![0.0; k]; k];
    for w in states.windows(2) {
        c[labels[w[0] as usize]][labels[w[1] as usize]] += 1.0;
    }
    c
}

/// `(C_ij + s)/(C_i + k·s)`; rows without observations become uniform.
fn smoothed_transitions(counts: &[Vec<f64>], s: f64) -> Vec<Vec<f64>> {
    let k = counts.len() as f64;
    counts
        .iter()
        .map(|row| {
            let total: f64 = row.iter().sum();
            row.iter().map(|&c| (c + s) / (total + k * s)).collect()
        })
        .collect()
}

/// `Σ_t ln(p̂_{Ŷ_t Ŷ_{t+1}} / |V̂_{Ŷ_{t+1}}|)` over the transitions of `states`.
fn path_log_likelihood(labeling: &Labeling, p_hat: &[Vec<f64>], states: &[u32]) -> f64 {
    let sizes = labeling.sizes();
    states
        .windows(2)
        .map(|w| {
            let (i, j) = (labeling.labels[w[0] as usize], labeling.labels[w[1] as usize]);
            (p_hat[i][j] / sizes[j] as f64).ln()
        })
        .sum()
}

/// Fits `p̂` on `fit` and scores `eval` under the same labeling.
fn fit_and_score(labeling: &Labeling, fit: &[u32], eval: &[u32], smoothing: f64) -> f64 {
    let counts = cluster_counts(&labeling.labels, labeling.k, fit);
    let p_hat = smoothed_transitions(&counts, smoothing);
    path_log_likelihood(labeling, &p_hat, eval)
}

/// Train/validation halves `X_0..X_⌊ℓ/2⌋` and `X_{⌊ℓ/2⌋+1}..X_ℓ`.
fn split(traj: &Trajectory) -> Result<(Trajectory, Trajectory), EstimatorError> {
    if traj.ell < 4 {
        return Err(EstimatorError::InvalidInput(
            "cross-validation needs at least four transitions".into(),
        ));
    }
    let half = traj.ell / 2;
    let train = traj.window(0, half);
    let val = traj.window(half + 1, traj.ell);
    if distinct_states(&train.states) < 2 || distinct_states(&val.states) < 2 {
        return Err(EstimatorError::DegenerateSplit);
    }
    Ok((train, val))
}

fn validation_scores(
    traj: &Trajectory,
    k_max: usize,
    thresholds: &Thresholds,
    improve: bool,
) -> Result<Vec<f64>, EstimatorError> {
    let (train, val) = split(traj)?;
    let half = traj.ell / 2;
    let smoothing = 1.0 / traj.ell as f64;
    let train_counts = build_counts(&train);
    let mut labelings = candidate_labelings(&train, k_max, thresholds)?;
    if improve {
        for lab in &mut labelings {
            improve_labels(lab, &train_counts);
        }
    }
    // the validation transitions X_t → X_{t+1}, t = ⌊ℓ/2⌋+1, …, ℓ−1
    Ok(labelings
        .iter()
        .map(|lab| fit_and_score(lab, &train.states, &val.states, smoothing) / half as f64)
        .collect())
}

/// Validation log-likelihood per candidate `k = 1, 2, …`.
pub fn llsc_scores(
    traj: &Trajectory,
    k_max: usize,
    thresholds: &Thresholds,
) -> Result<Vec<f64>, EstimatorError> {
    validation_scores(traj, k_max, thresholds, false)
}

fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Cross-validated likelihood choice of `k`, smallest `k` among ties.
///
/// Each candidate clusters the first half with the rank-`k` embedding, the
/// neighborhood peeling run to exactly `k` centers and nearest-center
/// completion. Cluster transition probabilities are fitted on the first
/// half with additive `1/ℓ` smoothing and scored on the second.
pub fn llsc_estimate(
    traj: &Trajectory,
    k_max: usize,
    thresholds: &Thresholds,
) -> Result<usize, EstimatorError> {
    Ok(argmax_first(&llsc_scores(traj, k_max, thresholds)?) + 1)
}

/// [`llsc_estimate`] with each candidate clustering refined by greedy
/// single-state moves that raise the training likelihood (at most
/// [`LLCI_MAX_SWEEPS`] sweeps, clusters never emptied). This approximates a
/// full likelihood-based cluster improvement step.
pub fn llci_estimate(
    traj: &Trajectory,
    k_max: usize,
    thresholds: &Thresholds,
) -> Result<usize, EstimatorError> {
    let scores = validation_scores(traj, k_max, thresholds, true)?;
    Ok(argmax_first(&scores) + 1)
}

pub fn caic_degrees_of_freedom(n: usize, k: usize) -> usize {
    n + k * (k - 1)
}

/// `CAIC(k) = −2 Σ_t ln(p̂/|V̂|) + (n + k(k−1))(ln ℓ − 1)` per candidate, with
/// clustering, refinement and `p̂` all fitted on the whole path.
pub fn caic_scores(
    traj: &Trajectory,
    k_max: usize,
    thresholds: &Thresholds,
) -> Result<Vec<f64>, EstimatorError> {
    if traj.ell < 2 {
        return Err(EstimatorError::InvalidInput(
            "information criterion needs at least two transitions".into(),
        ));
    }
    if distinct_states(&traj.states) < 2 {
        return Err(EstimatorError::DegenerateSplit);
    }
    let counts = build_counts(traj);
    let smoothing = 1.0 / traj.ell as f64;
    let penalty_unit = (traj.ell as f64).ln() - 1.0;
    let mut labelings = candidate_labelings(traj, k_max, thresholds)?;
    Ok(labelings
        .iter_mut()
        .enumerate()
        .map(|(i, lab)| {
            improve_labels(lab, &counts);
            let ll = fit_and_score(lab, &traj.states, &traj.states, smoothing);
            -2.0 * ll + caic_degrees_of_freedom(traj.n, i + 1) as f64 * penalty_unit
        })
        .collect())
}

pub fn caic_estimate(
    traj: &Trajectory,
    k_max: usize,
    thresholds: &Thresholds,
) -> Result<usize, EstimatorError> {
    let scores = caic_scores(traj, k_max, thresholds)?;
    let negated: Vec<f64> = scores.iter().map(|v| -v).collect();
    Ok(argmax_first(&negated) + 1)
}

/// Maximum-likelihood fit of a labeling to counts:
/// `Σ C_ij ln C_ij − Σ_i R_i ln R_i − Σ_j D_j ln |V_j|`, with `C` the
/// cluster transition counts, `R` their row sums and `D` their column sums.
pub fn train_log_likelihood(labeling: &Labeling, counts: &CountMatrix) -> f64 {
    ClusterStats::new(labeling, counts).total()
}

struct ClusterStats {
    c: Vec<Vec<i64>>,
    rows: Vec<i64>,
    cols: Vec<i64>,
    sizes: Vec<i64>,
}

impl ClusterStats {
    fn new(labeling: &Labeling, counts: &CountMatrix) -> Self {
        let k = labeling.k;
        let mut c = vec![vec![0i64; k]; k];
        let mut rows = vec![0i64; k];
        let mut cols = vec![0i64; k];
        for (&(x, y), &n) in &counts.entries {
            let (i, j) = (labeling.labels[x as usize], labeling.labels[y as usize]);
            c[i][j] += n as i64;
            rows[i] += n as i64;
            cols[j] += n as i64;
        }
        let sizes = labeling.sizes().into_iter().map(|s| s as i64).collect();
        Self {
            c,
            rows,
            cols,
            sizes,
        }
    }

    fn size_term(&self, j: usize) -> f64 {
        if self.sizes[j] > 0 {
            self.cols[j] as f64 * (self.sizes[j] as f64).ln()
        } else {
            0.0
        }
    }

    fn total(&self) -> f64 {
        let k = self.rows.len();
        let mut l = 0.0;
        for i in 0..k {
            l += self.c[i].iter().map(|&v| xlnx(v as f64)).sum::<f64>();
            l -= xlnx(self.rows[i] as f64);
            l -= self.size_term(i);
        }
        l
    }

    /// The part of [`Self::total`] that depends on clusters `a` and `b`.
    fn partial(&self, a: usize, b: usize) -> f64 {
        let k = self.rows.len();
        let mut l = 0.0;
        for m in 0..k {
            l += xlnx(self.c[a][m] as f64) + xlnx(self.c[b][m] as f64);
            if m != a && m != b {
                l += xlnx(self.c[m][a] as f64) + xlnx(self.c[m][b] as f64);
            }
        }
        l - xlnx(self.rows[a] as f64)
            - xlnx(self.rows[b] as f64)
            - self.size_term(a)
            - self.size_term(b)
    }

    fn shift(&mut self, state: &StateProfile, from: usize, to: usize) {
        let k = self.rows.len();
        for m in 0..k {
            self.c[from][m] -= state.out_by_cluster[m];
            self.c[to][m] += state.out_by_cluster[m];
            self.c[m][from] -= state.in_by_cluster[m];
            self.c[m][to] += state.in_by_cluster[m];
        }
        self.c[from][from] -= state.self_loops;
        self.c[to][to] += state.self_loops;
        self.rows[from] -= state.d_out;
        self.rows[to] += state.d_out;
        self.cols[from] -= state.d_in;
        self.cols[to] += state.d_in;
        self.sizes[from] -= 1;
        self.sizes[to] += 1;
    }
}

/// Transitions of one state, grouped by the cluster at the other end.
struct StateProfile {
    out_by_cluster: Vec<i64>,
    in_by_cluster: Vec<i64>,
    self_loops: i64,
    d_out: i64,
    d_in: i64,
}

/// Greedy hill-climb: visit states in index order and move each to the
/// cluster that raises [`train_log_likelihood`] most, if any does.
fn improve_labels(labeling: &mut Labeling, counts: &CountMatrix) {
    let n = counts.n;
    let k = labeling.k;
    if k < 2 {
        return;
    }
    let mut out_adj: Vec<Vec<(usize, i64)>> = vec![Vec::new(); n];
    let mut in_adj: Vec<Vec<(usize, i64)>> = vec![Vec::new(); n];
    let mut self_loops = vec![0i64; n];
    for (&(x, y), &c) in &counts.entries {
        let (x, y, c) = (x as usize, y as usize, c as i64);
        if x == y {
            self_loops[x] = c;
        } else {
            out_adj[x].push((y, c));
            in_adj[y].push((x, c));
        }
    }
    let mut stats = ClusterStats::new(labeling, counts);
    for _ in 0..LLCI_MAX_SWEEPS {
        let mut moved = false;
        for x in 0..n {
            let a = labeling.labels[x];
            if stats.sizes[a] <= 1 {
                continue;
            }
            let mut profile = StateProfile {
                out_by_cluster: vec![0; k],
                in_by_cluster: vec![0; k],
                self_loops: self_loops[x],
                d_out: self_loops[x],
                d_in: self_loops[x],
            };
            for &(y, c) in &out_adj[x] {
                profile.out_by_cluster[labeling.labels[y]] += c;
                profile.d_out += c;
            }
            for &(y, c) in &in_adj[x] {
                profile.in_by_cluster[labeling.labels[y]] += c;
                profile.d_in += c;
            }
            let mut best: Option<(usize, f64)> = None;
            for b in (0..k).filter(|&b| b != a) {
                let before = stats.partial(a, b);
                stats.shift(&profile, a, b);
                let gain = stats.partial(a, b) - before;
                stats.shift(&profile, b, a);
                if gain > IMPROVE_EPS && best.is_none_or(|(_, g)| gain > g) {
                    best = Some((b, gain));
                }
            }
            if let Some((b, _)) = best {
                stats.shift(&profile, a, b);
                labeling.labels[x] = b;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_instance, simulate, BmcParams};
    use proptest::prelude::*;

    fn two_cluster_traj(n: usize, ell: usize, seed: u64) -> Trajectory {
        let inst = build_instance(BmcParams::symmetric_two_cluster(0.9).unwrap(), n).unwrap();
        simulate(&inst, ell, seed)
    }

    #[test]
    fn degrees_of_freedom() {
        assert_eq!(caic_degrees_of_freedom(50, 1), 50);
        assert_eq!(caic_degrees_of_freedom(1000, 3), 1006);
    }

    #[test]
    fn smoothing_keeps_rows_stochastic() {
        let p = smoothed_transitions(&[vec![3.0, 0.0], vec![0.0, 0.0]], 0.01);
        assert!((p[0].iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(p[0][1] > 0.0);
        assert_eq!(p[1], vec![0.5, 0.5]);
    }

    #[test]
    fn split_requires_variety() {
        let flat = Trajectory::new(3, vec![0, 0, 0, 0, 0, 1, 2, 1, 0]).unwrap();
        assert_eq!(
            llsc_estimate(&flat, 2, &Thresholds::default()),
            Err(EstimatorError::DegenerateSplit)
        );
        let short = Trajectory::new(3, vec![0, 1, 2]).unwrap();
        assert!(matches!(
            llsc_estimate(&short, 2, &Thresholds::default()),
            Err(EstimatorError::InvalidInput(_))
        ));
    }

    #[test]
    fn likelihood_methods_find_two_clear_clusters() {
        let traj = two_cluster_traj(60, 60 * 150, 5);
        let t = Thresholds::default();
        assert_eq!(llsc_estimate(&traj, 4, &t).unwrap(), 2);
        assert_eq!(llci_estimate(&traj, 4, &t).unwrap(), 2);
        assert_eq!(caic_estimate(&traj, 4, &t).unwrap(), 2);
    }

    #[test]
    fn single_cluster_truth_selects_one() {
        let params = BmcParams::new(vec![vec![1.0]], vec![1.0]).unwrap();
        let inst = build_instance(params, 40).unwrap();
        let t = Thresholds::default();
        let mut ones = 0;
        for seed in 0..20 {
            let traj = simulate(&inst, 40 * 200, seed);
            if llsc_estimate(&traj, 3, &t).unwrap() == 1 {
                ones += 1;
            }
        }
        assert!(ones >= 15, "k = 1 chosen in {ones} of 20 runs");
    }

    #[test]
    fn estimates_are_deterministic() {
        let traj = two_cluster_traj(40, 4000, 8);
        let t = Thresholds::default();
        assert_eq!(llsc_scores(&traj, 3, &t).unwrap(), llsc_scores(&traj, 3, &t).unwrap());
        assert_eq!(caic_scores(&traj, 3, &t).unwrap(), caic_scores(&traj, 3, &t).unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn improvement_never_lowers_training_likelihood(
            states in proptest::collection::vec(0u32..10, 20..200),
            raw in proptest::collection::vec(0usize..3, 10),
        ) {
            let traj = Trajectory::new(10, states).unwrap();
            let counts = build_counts(&traj);
            let mut lab = Labeling { labels: raw, k: 3 };
            let before_sizes = lab.sizes();
            let before = train_log_likelihood(&lab, &counts);
            improve_labels(&mut lab, &counts);
            let after = train_log_likelihood(&lab, &counts);
            prop_assert!(after >= before - 1e-9);
            for (s0, s1) in before_sizes.iter().zip(lab.sizes()) {
                prop_assert!(*s0 == 0 || s1 >= 1);
            }
        }

        #[test]
        fn incremental_update_matches_recount(
            states in proptest::collection::vec(0u32..8, 10..120),
            raw in proptest::collection::vec(0usize..3, 8),
            x in 0usize..8,
            to in 0usize..3,
        ) {
            let traj = Trajectory::new(8, states).unwrap();
            let counts = build_counts(&traj);
            let lab = Labeling { labels: raw, k: 3 };
            let from = lab.labels[x];
            prop_assume!(from != to);
            let mut stats = ClusterStats::new(&lab, &counts);
            let mut moved = lab.clone();
            moved.labels[x] = to;
            let mut profile = StateProfile {
                out_by_cluster: vec![0; 3],
                in_by_cluster: vec![0; 3],
                self_loops: counts.get(x, x) as i64,
                d_out: 0,
                d_in: 0,
            };
            for (&(a, b), &c) in &counts.entries {
                let (a, b, c) = (a as usize, b as usize, c as i64);
                if a == x { profile.d_out += c; }
                if b == x { profile.d_in += c; }
                if a == x && b != x { profile.out_by_cluster[lab.labels[b]] += c; }
                if b == x && a != x { profile.in_by_cluster[lab.labels[a]] += c; }
            }
            let before = stats.partial(from, to);
            let total_before = stats.total();
            stats.shift(&profile, from, to);
            let gain = stats.partial(from, to) - before;
            let expected = ClusterStats::new(&moved, &counts);
            prop_assert_eq!(&stats.c, &expected.c);
            prop_assert_eq!(&stats.sizes, &expected.sizes);
            prop_assert!((stats.total() - expected.total()).abs() < 1e-9);
            prop_assert!((gain - (expected.total() - total_before)).abs() < 1e-8);
        }
    }
}
