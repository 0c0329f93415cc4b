//! Seeded Monte Carlo experiments: scenario configuration, the replication
//! runner, aggregation and result files.
//!
//! Every replication `i` of a scenario draws its parameters and its path from
//! the child seed [`child_seed`]`(root_seed, i)`, and rows are collected in
//! replication order, so output does not depend on the number of threads.

mod output;
mod run;
mod suites;

pub use output::{
    read_csv, read_jsonl, write_csv, write_jsonl, write_pivot, write_summary, OutputFormat,
    CSV_HEADER,
};
pub use run::{
    aggregate, run_replication, run_scenario, run_scenario_with_threads, sample_replication,
    CellSummary,
};
pub use suites::{suite, table1_cell, SUITE_NAMES};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::{EstimatorKind, Thresholds};
use crate::model::{Ensemble, ModelError, PerturbationSpec, StartRule};

/// Environment variable capping the worker threads.
pub const THREADS_ENV: &str = "BMC_THREADS";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("malformed result file: {0}")]
    Parse(String),
}

/// Path length rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EllSpec {
    /// `⌊n (ln n)^β⌋`.
    LogPower(f64),
    /// `n²`.
    Quadratic,
    Explicit(usize),
}

impl EllSpec {
    pub fn resolve(&self, n: usize) -> usize {
        match *self {
            EllSpec::LogPower(beta) => {
                let nf = n as f64;
                (nf * nf.ln().powf(beta)).floor() as usize
            }
            EllSpec::Quadratic => n * n,
            EllSpec::Explicit(ell) => ell,
        }
    }
}

/// Sample until the 95% margin of error of the mean `K̂` is small enough.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequentialRule {
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default = "default_min_samples")]
    pub min_samples: usize,
    /// Replications added per round.
    #[serde(default = "default_batch")]
    pub batch: usize,
    /// Hard cap on replications.
    #[serde(default = "default_max_samples")]
    pub max_samples: usize,
}

fn default_margin() -> f64 {
    0.15
}
fn default_min_samples() -> usize {
    250
}
fn default_batch() -> usize {
    50
}
fn default_max_samples() -> usize {
    5000
}

impl Default for SequentialRule {
    fn default() -> Self {
        Self {
            margin: default_margin(),
            min_samples: default_min_samples(),
            batch: default_batch(),
            max_samples: default_max_samples(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_id")]
    pub id: String,
    pub ensemble: Ensemble,
    /// Number of clusters. Taken from the parameters for fixed ensembles.
    #[serde(default)]
    pub k: Option<usize>,
    pub n: usize,
    pub ell: EllSpec,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default)]
    pub start: StartRule,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorKind>,
    /// Largest candidate for the likelihood methods, `max(10, 2K)` if unset.
    #[serde(default)]
    pub k_max: Option<usize>,
    /// Embedding rank for `alg2`, `max(K̂^spec, 1)` if unset.
    #[serde(default)]
    pub r_override: Option<usize>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub sequential: Option<SequentialRule>,
    #[serde(default)]
    pub root_seed: u64,
    /// Record AMI scores against the true clustering.
    #[serde(default)]
    pub compute_labels: bool,
    /// Fill `wall_time_ms`; off by default since it breaks byte equality.
    #[serde(default)]
    pub record_timing: bool,
}

fn default_id() -> String {
    "scenario".into()
}
fn default_estimators() -> Vec<EstimatorKind> {
    vec![EstimatorKind::Alg2]
}
fn default_replications() -> usize {
    10
}

impl Scenario {
    pub fn new(id: impl Into<String>, ensemble: Ensemble, k: usize, n: usize, ell: EllSpec) -> Self {
        Self {
            id: id.into(),
            ensemble,
            k: Some(k),
            n,
            ell,
            epsilon: 0.0,
            start: StartRule::default(),
            thresholds: Thresholds::default(),
            estimators: default_estimators(),
            k_max: None,
            r_override: None,
            replications: default_replications(),
            sequential: None,
            root_seed: 0,
            compute_labels: false,
            record_timing: false,
        }
    }

    /// One scenario or a list of them.
    pub fn parse_many(text: &str) -> Result<Vec<Scenario>, HarnessError> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let list = if value.is_array() {
            serde_json::from_value(value)?
        } else {
            vec![serde_json::from_value(value)?]
        };
        Ok(list)
    }

    pub fn ell(&self) -> usize {
        self.ell.resolve(self.n)
    }

    /// True cluster count.
    pub fn cluster_count(&self) -> Result<usize, HarnessError> {
        if self.ensemble.is_fixed() {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let params = self.ensemble.sample(self.k.unwrap_or(0), self.n, &mut rng)?;
            if let Some(k) = self.k.filter(|&k| k != params.k) {
                return Err(HarnessError::Config(format!(
                    "k = {k} but the fixed parameters have {} clusters",
                    params.k
                )));
            }
            return Ok(params.k);
        }
        self.k
            .ok_or_else(|| HarnessError::Config("k is required for random ensembles".into()))
    }

    pub fn k_max(&self, k: usize) -> usize {
        self.k_max.unwrap_or(10.max(2 * k))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let k = self.cluster_count()?;
        if k == 0 || self.n < k {
            return Err(HarnessError::Config(format!(
                "need 1 <= k <= n, got k = {k}, n = {}",
                self.n
            )));
        }
        if self.ell() < 1 {
            return Err(HarnessError::Config("path length must be at least 1".into()));
        }
        PerturbationSpec::new(self.epsilon)?;
        self.thresholds
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        if self.estimators.is_empty() {
            return Err(HarnessError::Config("no estimators selected".into()));
        }
        if self.k_max(k) == 0 || self.r_override == Some(0) {
            return Err(HarnessError::Config("k_max and r must be positive".into()));
        }
        match &self.sequential {
            None if self.replications == 0 => {
                Err(HarnessError::Config("replications must be positive".into()))
            }
            Some(rule) if rule.batch == 0 || rule.max_samples == 0 || !(rule.margin > 0.0) => {
                Err(HarnessError::Config(
                    "sequential rule needs positive batch, cap and margin".into(),
                ))
            }
            _ => Ok(()),
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of replication `index`. Distinct indices give distinct seeds, since
/// the map is a bijection of `root + φ·(index + 1)` with `φ` odd.
pub fn child_seed(root: u64, index: u64) -> u64 {
    splitmix64(root.wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(index.wrapping_add(1))))
}

/// Seed of the path simulation, kept apart from the parameter stream.
pub(crate) fn path_seed(seed: u64) -> u64 {
    splitmix64(seed ^ 0x7061_7468_7061_7468)
}

/// Row status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowStatus {
    Ok,
    Error,
}

impl RowStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RowStatus::Ok => "ok",
            RowStatus::Error => "error",
        }
    }
}

/// One estimator run on one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario: String,
    pub replication: usize,
    pub seed: u64,
    pub estimator: String,
    pub status: RowStatus,
    pub error: Option<String>,
    pub n: usize,
    pub ell: usize,
    pub epsilon: f64,
    pub k_true: usize,
    pub k_hat: Option<usize>,
    pub k_spec: Option<usize>,
    pub relative_accuracy: Option<f64>,
    pub ami: Option<f64>,
    /// AMI of the exactly-`K` clustering, `alg2` only.
    pub ami_revealed: Option<f64>,
    /// `None` when infinite (a single cluster).
    pub information_quantity: Option<f64>,
    pub normalized_entropy: Option<f64>,
    pub t_mix: Option<usize>,
    pub wall_time_ms: Option<f64>,
}
