//! Comparison of estimated and true clusterings.

use std::io::BufRead;

use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Above this many parts, the best label matching comes from the Hungarian
/// algorithm instead of trying every permutation.
pub const BRUTE_FORCE_MAX_PARTS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("partitions cover {0} and {1} states")]
    LengthMismatch(usize, usize),
    #[error("label {label} at position {index} is not below k = {k}")]
    LabelOutOfRange { index: usize, label: usize, k: usize },
    #[error("partition is empty")]
    Empty,
    #[error("normalized entropy needs at least two clusters")]
    NormalizeUndefined,
    #[error("cannot parse labels: {0}")]
    Parse(String),
}

/// Cluster ids `0..k` per state; some clusters may be empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    labels: Vec<usize>,
    k: usize,
}

impl Partition {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self, MetricsError> {
        if labels.is_empty() {
            return Err(MetricsError::Empty);
        }
        if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= k) {
            return Err(MetricsError::LabelOutOfRange { index, label, k });
        }
        Ok(Self { labels, k })
    }

    /// `k` is one more than the largest label.
    pub fn from_labels(labels: Vec<usize>) -> Result<Self, MetricsError> {
        let k = labels.iter().max().map_or(0, |m| m + 1);
        Self::new(labels, k)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &l in &self.labels {
            s[l] += 1;
        }
        s
    }

    /// Same labels with room for `k` clusters.
    pub fn padded(&self, k: usize) -> Self {
        Self {
            labels: self.labels.clone(),
            k: self.k.max(k),
        }
    }
}

/// Newline-delimited non-negative integers; blank lines are skipped.
pub fn read_labels<R: BufRead>(input: R) -> Result<Vec<usize>, MetricsError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| MetricsError::Parse(e.to_string()))?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        out.push(
            t.parse()
                .map_err(|_| MetricsError::Parse(format!("line {}: {t:?}", i + 1)))?,
        );
    }
    Ok(out)
}

/// `(K̂ − K)/K`.
pub fn relative_accuracy(k_hat: usize, k_true: usize) -> f64 {
    assert!(k_true >= 1, "true cluster count must be positive");
    (k_hat as f64 - k_true as f64) / k_true as f64
}

fn entropy_of_sizes(sizes: &[usize], n: usize) -> f64 {
    let n = n as f64;
    -sizes
        .iter()
        .filter(|&&s| s > 0)
        .map(|&s| {
            let p = s as f64 / n;
            p * p.ln()
        })
        .sum::<f64>()
}

/// `H = −Σ_k (|A_k|/n) ln(|A_k|/n)`.
pub fn entropy(part: &Partition) -> f64 {
    entropy_of_sizes(&part.sizes(), part.n())
}

/// `H / ln K`.
pub fn normalized_entropy(part: &Partition) -> Result<f64, MetricsError> {
    if part.k < 2 {
        return Err(MetricsError::NormalizeUndefined);
    }
    Ok(entropy(part) / (part.k as f64).ln())
}

/// Overlap counts `|A_k ∩ B_l|`.
pub fn contingency(a: &Partition, b: &Partition) -> Result<Vec<Vec<usize>>, MetricsError> {
    if a.n() != b.n() {
        return Err(MetricsError::LengthMismatch(a.n(), b.n()));
    }
    let mut table = vec![vec![0usize; b.k]; a.k];
    for (&x, &y) in a.labels.iter().zip(&b.labels) {
        table[x][y] += 1;
    }
    Ok(table)
}

pub fn mutual_information(a: &Partition, b: &Partition) -> Result<f64, MetricsError> {
    let table = contingency(a, b)?;
    let (sa, sb) = (a.sizes(), b.sizes());
    let n = a.n() as f64;
    let mut mi = 0.0;
    for (k, row) in table.iter().enumerate() {
        for (l, &c) in row.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                mi += c / n * (n * c / (sa[k] as f64 * sb[l] as f64)).ln();
            }
        }
    }
    Ok(mi)
}

/// `ln m!` for `m = 0..=n`.
fn ln_factorials(n: usize) -> Vec<f64> {
    let mut t = Vec::with_capacity(n + 1);
    t.push(0.0);
    for m in 1..=n {
        t.push(t[m - 1] + (m as f64).ln());
    }
    t
}

/// Expected mutual information of two independent uniformly random
/// partitions with part sizes `sa` and `sb`, from the hypergeometric law of
/// each overlap.
pub fn expected_mutual_information(sa: &[usize], sb: &[usize]) -> f64 {
    let n: usize = sa.iter().sum();
    debug_assert_eq!(n, sb.iter().sum::<usize>());
    let lf = ln_factorials(n);
    let nf = n as f64;
    let mut emi = 0.0;
    for &ai in sa.iter().filter(|&&s| s > 0) {
        for &bj in sb.iter().filter(|&&s| s > 0) {
            let lo = (ai + bj).saturating_sub(n).max(1);
            let hi = ai.min(bj);
            let fixed = lf[ai] + lf[bj] + lf[n - ai] + lf[n - bj] - lf[n];
            for nij in lo..=hi {
                let log_p =
                    fixed - lf[nij] - lf[ai - nij] - lf[bj - nij] - lf[n + nij - ai - bj];
                let c = nij as f64;
                emi += c / nf * (nf * c / (ai as f64 * bj as f64)).ln() * log_p.exp();
            }
        }
    }
    emi
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AmiValue {
    pub value: f64,
    /// Set when one partition has zero entropy; `value` is then 0.
    pub degenerate: bool,
}

/// `(MI − E[MI]) / (√(H(a)H(b)) − E[MI])`.
pub fn ami(a: &Partition, b: &Partition) -> Result<AmiValue, MetricsError> {
    let mi = mutual_information(a, b)?;
    let (ha, hb) = (entropy(a), entropy(b));
    if ha * hb == 0.0 {
        return Ok(AmiValue {
            value: 0.0,
            degenerate: true,
        });
    }
    let emi = expected_mutual_information(&a.sizes(), &b.sizes());
    let denom = (ha * hb).sqrt() - emi;
    let value = if denom == 0.0 { 0.0 } else { (mi - emi) / denom };
    Ok(AmiValue {
        value,
        degenerate: false,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Misclassification {
    pub count: usize,
    /// `permutation[k]` is the estimated cluster matched to true cluster `k`,
    /// over `max(K, K̂)` padded parts.
    pub permutation: Vec<usize>,
}

/// States outside the best one-to-one matching of true and estimated
/// clusters. Both sides are padded with empty clusters to `max(K, K̂)` parts.
pub fn misclassification(truth: &Partition, est: &Partition) -> Result<Misclassification, MetricsError> {
    let m = truth.k.max(est.k);
    let table = contingency(&truth.padded(m), &est.padded(m))?;
    let (matched, permutation) = if m <= BRUTE_FORCE_MAX_PARTS {
        best_permutation(&table)
    } else {
        hungarian(&table)
    };
    Ok(Misclassification {
        count: truth.n() - matched,
        permutation,
    })
}

/// Exhaustive search, first permutation in lexicographic order on ties.
pub(crate) fn best_permutation(table: &[Vec<usize>]) -> (usize, Vec<usize>) {
    fn search(
        table: &[Vec<usize>],
        row: usize,
        used: &mut [bool],
        current: &mut Vec<usize>,
        score: usize,
        best: &mut (usize, Vec<usize>),
    ) {
        if row == table.len() {
            if best.1.is_empty() || score > best.0 {
                *best = (score, current.clone());
            }
            return;
        }
        for col in 0..table.len() {
            if !used[col] {
                used[col] = true;
                current.push(col);
                search(table, row + 1, used, current, score + table[row][col], best);
                current.pop();
                used[col] = false;
            }
        }
    }
    let mut best = (0, Vec::new());
    search(table, 0, &mut vec![false; table.len()], &mut Vec::new(), 0, &mut best);
    best
}

fn hungarian(table: &[Vec<usize>]) -> (usize, Vec<usize>) {
    let m = table.len();
    let weights = Matrix::from_fn(m, m, |(i, j)| table[i][j] as i64);
    let (total, assignment) = kuhn_munkres(&weights);
    (total as usize, assignment)
}

/// Everything the `metrics` command prints.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub relative_accuracy: f64,
    pub ami: f64,
    pub ami_degenerate: bool,
    pub mi: f64,
    pub entropy_a: f64,
    pub entropy_b: f64,
    pub misclassified_count: usize,
    pub optimal_permutation: Vec<usize>,
}

/// `truth` plays the role of `a`; `K` and `K̂` are the two partitions' `k`.
pub fn compare(truth: &Partition, est: &Partition) -> Result<ComparisonReport, MetricsError> {
    let ami_value = ami(truth, est)?;
    let mis = misclassification(truth, est)?;
    Ok(ComparisonReport {
        relative_accuracy: relative_accuracy(est.k, truth.k),
        ami: ami_value.value,
        ami_degenerate: ami_value.degenerate,
        mi: mutual_information(truth, est)?,
        entropy_a: entropy(truth),
        entropy_b: entropy(est),
        misclassified_count: mis.count,
        optimal_permutation: mis.permutation,
    })
}
