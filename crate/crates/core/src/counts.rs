//! Transition counts `N̂`, trimming of the most visited states, and degrees.

use std::collections::BTreeMap;
use std::io::Write;

use crate::linalg::CsrMatrix;
use crate::model::Trajectory;

/// Sparse `n×n` matrix of observed transition counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountMatrix {
    pub n: usize,
    /// `(x, y) → #{t < ℓ : X_t = x, X_{t+1} = y}`; zero entries are absent.
    pub entries: BTreeMap<(u32, u32), u64>,
    pub ell: usize,
}

impl CountMatrix {
    pub fn get(&self, x: usize, y: usize) -> u64 {
        self.entries
            .get(&(x as u32, y as u32))
            .copied()
            .unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.entries.values().sum()
    }

    /// Column sums (transitions into each state).
    pub fn in_counts(&self) -> Vec<u64> {
        let mut d = vec![0u64; self.n];
        for (&(_, y), &c) in &self.entries {
            d[y as usize] += c;
        }
        d
    }

    /// Row sums (transitions out of each state).
    pub fn out_counts(&self) -> Vec<u64> {
        let mut d = vec![0u64; self.n];
        for (&(x, _), &c) in &self.entries {
            d[x as usize] += c;
        }
        d
    }

    /// CSR form with the rows and columns flagged in `removed` dropped.
    pub fn to_csr_excluding(&self, removed: Option<&[bool]>) -> CsrMatrix {
        let keep = |i: u32| removed.is_none_or(|r| !r[i as usize]);
        let triplets = self
            .entries
            .iter()
            .filter(|(&(x, y), _)| keep(x) && keep(y))
            .map(|(&(x, y), &c)| (x as usize, y as usize, c as f64));
        CsrMatrix::from_sorted_triplets(self.n, self.n, triplets)
    }

    pub fn to_csr(&self) -> CsrMatrix {
        self.to_csr_excluding(None)
    }

    /// Coordinate text: a header line `n ell`, then `x y count` per nonzero.
    pub fn write_coordinate<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{} {}", self.n, self.ell)?;
        for (&(x, y), &c) in &self.entries {
            writeln!(out, "{x} {y} {c}")?;
        }
        Ok(())
    }
}

pub fn build_counts(traj: &Trajectory) -> CountMatrix {
    let mut entries = BTreeMap::new();
    for w in traj.states.windows(2) {
        *entries.entry((w[0], w[1])).or_insert(0u64) += 1;
    }
    CountMatrix {
        n: traj.n,
        entries,
        ell: traj.ell,
    }
}

/// Number of states removed by trimming: `⌊n·exp(−ℓ/n)⌋`.
pub fn trim_size(n: usize, ell: usize) -> usize {
    if n == 0 {
        return 0;
    }
    (n as f64 * (-(ell as f64) / n as f64).exp()).floor() as usize
}

/// Counts with the rows and columns of `gamma_set` treated as zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrimmedCounts {
    pub base: CountMatrix,
    /// Removed states, sorted ascending.
    pub gamma_set: Vec<usize>,
    removed: Vec<bool>,
}

impl TrimmedCounts {
    pub fn is_removed(&self, x: usize) -> bool {
        self.removed[x]
    }

    pub fn n(&self) -> usize {
        self.base.n
    }

    pub fn ell(&self) -> usize {
        self.base.ell
    }

    pub fn get(&self, x: usize, y: usize) -> u64 {
        if self.removed[x] || self.removed[y] {
            0
        } else {
            self.base.get(x, y)
        }
    }

    /// `N̂_Γ` in CSR form.
    pub fn to_csr(&self) -> CsrMatrix {
        self.base.to_csr_excluding(Some(&self.removed))
    }
}

/// Removes the `⌊n·e^{−ℓ/n}⌋` states with the largest in-counts (column
/// sums), smallest index first among ties.
pub fn trim(counts: CountMatrix) -> TrimmedCounts {
    let size = trim_size(counts.n, counts.ell);
    let col_sums = counts.in_counts();
    let mut order: Vec<usize> = (0..counts.n).collect();
    // Column sums of the untrimmed matrix never change as states are
    // removed, so the greedy loop is a stable sort.
    order.sort_by(|&a, &b| col_sums[b].cmp(&col_sums[a]).then(a.cmp(&b)));
    let mut gamma_set: Vec<usize> = order.into_iter().take(size).collect();
    gamma_set.sort_unstable();
    let mut removed = vec![false; counts.n];
    for &x in &gamma_set {
        removed[x] = true;
    }
    TrimmedCounts {
        base: counts,
        gamma_set,
        removed,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DegreeProfile {
    pub d_in: Vec<u64>,
    pub d_out: Vec<u64>,
}

pub fn degrees(counts: &CountMatrix) -> DegreeProfile {
    DegreeProfile {
        d_in: counts.in_counts(),
        d_out: counts.out_counts(),
    }
}
