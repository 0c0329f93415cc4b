//! Cluster-count estimators.
//!
//! - [`alg1_spectral_count`]: singular values of the trimmed counts above `γ`.
//! - [`alg2_density_count`]: greedy density peeling of the spectral embedding.
//! - [`alg3_complete`]: nearest-center completion of a partial clustering.
//! - [`megh_estimate`], [`llsc_estimate`], [`llci_estimate`], [`caic_estimate`]:
//!   the eigengap, cross-validated likelihood and information-criterion
//!   baselines.
//!
//! [`EstimatorKind`] selects any of them by string id.

mod likelihood;
mod megh;
mod spectral;

pub use likelihood::{
    caic_degrees_of_freedom, caic_estimate, caic_scores, llci_estimate, llsc_estimate, llsc_scores,
    train_log_likelihood, LLCI_MAX_SWEEPS,
};
pub use megh::{megh_estimate, megh_from_moduli};
pub use spectral::{
    alg1_spectral_count, alg2_density_count, alg2_on_matrix, alg3_complete, density_peel,
    estimate_full, peel_exact, revealed_k_labels, PeelOutcome,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::LinalgError;
use crate::model::Trajectory;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("embedding rank {requested} exceeds the {available} nonzero singular values")]
    EmptyEmbedding { requested: usize, available: usize },
    #[error("no cluster centers to complete from")]
    NoCenters,
    #[error("a trajectory half visits fewer than two distinct states")]
    DegenerateSplit,
    #[error("invalid thresholds: {0}")]
    BadThresholds(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("unknown estimator id {0:?}")]
    UnknownEstimator(String),
    #[error("external estimator failed: {0}")]
    External(String),
}

impl EstimatorError {
    /// Whether the failure comes from the numerics rather than the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            EstimatorError::Linalg(_) | EstimatorError::EmptyEmbedding { .. }
        )
    }
}

/// Exponents that set `γ`, `h` and `ρ` as powers of the mean visit count
/// `ℓ/n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    #[serde(default = "default_a")]
    pub a: f64,
    #[serde(default = "default_b")]
    pub b: f64,
    #[serde(default = "default_c")]
    pub c: f64,
}

fn default_a() -> f64 {
    0.9
}
fn default_b() -> f64 {
    0.1
}
fn default_c() -> f64 {
    0.75
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            a: default_a(),
            b: default_b(),
            c: default_c(),
        }
    }
}

impl Thresholds {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self, EstimatorError> {
        let t = Self { a, b, c };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), EstimatorError> {
        let Self { a, b, c } = *self;
        if !(0.0 < a && a < 1.0 && 0.0 < b && b < a && 0.0 < c && c < 1.0) {
            return Err(EstimatorError::BadThresholds(format!(
                "need 0<b<a<1 and 0<c<1, got a={a} b={b} c={c}"
            )));
        }
        Ok(())
    }

    fn ratio(n: usize, ell: usize) -> f64 {
        ell as f64 / n as f64
    }

    /// Singular-value threshold `(ℓ/n)^c`.
    pub fn gamma(&self, n: usize, ell: usize) -> f64 {
        Self::ratio(n, ell).powf(self.c)
    }

    /// Neighborhood radius `√((ℓ/n)^{1+a}/n)`.
    pub fn h(&self, n: usize, ell: usize) -> f64 {
        (Self::ratio(n, ell).powf(1.0 + self.a) / n as f64).sqrt()
    }

    /// Neighborhood size threshold `n/(ℓ/n)^{a−b}`.
    pub fn rho(&self, n: usize, ell: usize) -> f64 {
        n as f64 / Self::ratio(n, ell).powf(self.a - self.b)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Diagnostics {
    pub k_spec: Option<usize>,
    /// Number of trimmed states.
    pub trimmed: usize,
    /// Leading singular values of the trimmed counts.
    pub singular_values: Vec<f64>,
}

/// Output of the density peeling step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateResult {
    pub k_hat: usize,
    pub centers: Vec<usize>,
    /// Pairwise disjoint, one per center, each sorted ascending.
    pub partial_clusters: Vec<Vec<usize>>,
    pub embedding_rank: usize,
    pub diagnostics: Diagnostics,
}

/// Label of a state the partial clustering does not cover.
pub const UNASSIGNED: usize = usize::MAX;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Labeling {
    pub labels: Vec<usize>,
    pub k: usize,
}

impl Labeling {
    pub fn from_partial(n: usize, clusters: &[Vec<usize>]) -> Self {
        let mut labels = vec![UNASSIGNED; n];
        for (k, set) in clusters.iter().enumerate() {
            for &x in set {
                labels[x] = k;
            }
        }
        Self {
            labels,
            k: clusters.len(),
        }
    }

    pub fn is_complete(&self) -> bool {
        self.labels.iter().all(|&l| l != UNASSIGNED)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            if l != UNASSIGNED {
                sizes[l] += 1;
            }
        }
        sizes
    }
}

/// What one estimator run reports.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EstimatorOutput {
    pub k_hat: usize,
    pub k_spec: Option<usize>,
    /// Complete state labels, when the estimator produces a clustering.
    pub labels: Option<Vec<usize>>,
}

pub trait Estimator: Send + Sync {
    fn id(&self) -> &str;
    fn estimate(&self, traj: &Trajectory) -> Result<EstimatorOutput, EstimatorError>;
}

/// Built-in estimators, addressed by `"alg1"`, `"alg2"`, `"megh"`, `"llsc"`,
/// `"llci"` or `"caic"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Alg1,
    Alg2,
    Megh,
    Llsc,
    Llci,
    Caic,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 6] = [
        EstimatorKind::Alg1,
        EstimatorKind::Alg2,
        EstimatorKind::Megh,
        EstimatorKind::Llsc,
        EstimatorKind::Llci,
        EstimatorKind::Caic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::Alg1 => "alg1",
            EstimatorKind::Alg2 => "alg2",
            EstimatorKind::Megh => "megh",
            EstimatorKind::Llsc => "llsc",
            EstimatorKind::Llci => "llci",
            EstimatorKind::Caic => "caic",
        }
    }

    pub fn from_id(id: &str) -> Result<Self, EstimatorError> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == id)
            .ok_or_else(|| EstimatorError::UnknownEstimator(id.to_string()))
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A built-in estimator with its settings.
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltinEstimator {
    pub kind: EstimatorKind,
    pub thresholds: Thresholds,
    /// Largest candidate for the likelihood methods.
    pub k_max: usize,
    /// Forces the embedding rank of `alg2`.
    pub r_override: Option<usize>,
    /// Whether `alg2` runs the completion step.
    pub compute_labels: bool,
}

impl BuiltinEstimator {
    pub fn new(kind: EstimatorKind) -> Self {
        Self {
            kind,
            thresholds: Thresholds::default(),
            k_max: 10,
            r_override: None,
            compute_labels: true,
        }
    }
}

impl Estimator for BuiltinEstimator {
    fn id(&self) -> &str {
        self.kind.as_str()
    }

    fn estimate(&self, traj: &Trajectory) -> Result<EstimatorOutput, EstimatorError> {
        let t = &self.thresholds;
        match self.kind {
            EstimatorKind::Alg1 => {
                let (k_spec, _) = alg1_spectral_count(traj, t)?;
                Ok(EstimatorOutput {
                    k_hat: k_spec,
                    k_spec: Some(k_spec),
                    labels: None,
                })
            }
            EstimatorKind::Alg2 => {
                let (result, labeling) = estimate_full(traj, t, self.r_override)?;
                Ok(EstimatorOutput {
                    k_hat: result.k_hat,
                    k_spec: result.diagnostics.k_spec,
                    labels: labeling
                        .filter(|_| self.compute_labels)
                        .map(|l| l.labels),
                })
            }
            EstimatorKind::Megh => {
                let counts = crate::counts::build_counts(traj);
                Ok(EstimatorOutput {
                    k_hat: megh_estimate(&counts)?,
                    ..Default::default()
                })
            }
            EstimatorKind::Llsc => Ok(EstimatorOutput {
                k_hat: llsc_estimate(traj, self.k_max, t)?,
                ..Default::default()
            }),
            EstimatorKind::Llci => Ok(EstimatorOutput {
                k_hat: llci_estimate(traj, self.k_max, t)?,
                ..Default::default()
            }),
            EstimatorKind::Caic => Ok(EstimatorOutput {
                k_hat: caic_estimate(traj, self.k_max, t)?,
                ..Default::default()
            }),
        }
    }
}

type ExternalFn = dyn Fn(&Trajectory) -> Result<EstimatorOutput, String> + Send + Sync;

/// Wraps an outside method (for example a precomputed HDBSCAN run) so its
/// results land in the same tables.
pub struct ExternalEstimator {
    id: String,
    run: Box<ExternalFn>,
}

impl ExternalEstimator {
    pub fn new<F>(id: impl Into<String>, run: F) -> Self
    where
        F: Fn(&Trajectory) -> Result<EstimatorOutput, String> + Send + Sync + 'static,
    {
        Self {
            id: id.into(),
            run: Box::new(run),
        }
    }
}

impl Estimator for ExternalEstimator {
    fn id(&self) -> &str {
        &self.id
    }

    fn estimate(&self, traj: &Trajectory) -> Result<EstimatorOutput, EstimatorError> {
        (self.run)(traj).map_err(EstimatorError::External)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn threshold_values() {
        let t = Thresholds::default();
        // ℓ/n = 16
        assert_relative_eq!(t.gamma(100, 1600), 8.0, max_relative = 1e-14);
        assert_relative_eq!(t.h(100, 1600), (16f64.powf(1.9) / 100.0).sqrt(), max_relative = 1e-14);
        assert_relative_eq!(t.rho(100, 1600), 100.0 / 16f64.powf(0.8), max_relative = 1e-14);
        assert!(Thresholds::new(0.5, 0.6, 0.5).is_err());
        assert!(Thresholds::new(0.9, 0.1, 1.0).is_err());
    }

    #[test]
    fn threshold_json_defaults() {
        let t: Thresholds = serde_json::from_str(r#"{"c": 0.5}"#).unwrap();
        assert_eq!(t, Thresholds { c: 0.5, ..Thresholds::default() });
    }

    #[test]
    fn estimator_ids_round_trip() {
        for k in EstimatorKind::ALL {
            assert_eq!(EstimatorKind::from_id(k.as_str()).unwrap(), k);
        }
        assert!(EstimatorKind::from_id("hdbs").is_err());
    }

    #[test]
    fn external_estimator_reports_through_the_interface() {
        let ext = ExternalEstimator::new("hdbs", |t: &Trajectory| {
            Ok(EstimatorOutput {
                k_hat: t.n,
                ..Default::default()
            })
        });
        let traj = Trajectory::new(4, vec![0, 1, 2]).unwrap();
        assert_eq!(ext.id(), "hdbs");
        assert_eq!(ext.estimate(&traj).unwrap().k_hat, 4);
    }
}
