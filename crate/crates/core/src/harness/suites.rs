//! Built-in scenario families.

use crate::estimators::{EstimatorKind, Thresholds};
use crate::model::{AlphaMode, BmcParams, Ensemble};

use super::{EllSpec, HarnessError, Scenario};

pub const SUITE_NAMES: [&str; 7] = [
    "table1",
    "proof_of_concept",
    "low_rank",
    "rank_sensitivity",
    "sparse",
    "perturbation",
    "characteristics",
];

const N: usize = 1000;

fn ell_tag(ell: EllSpec) -> String {
    match ell {
        EllSpec::LogPower(beta) => format!("beta{beta:.2}"),
        EllSpec::Quadratic => "n2".into(),
        EllSpec::Explicit(ell) => format!("ell{ell}"),
    }
}

/// One cell of the method comparison: test `1..=4`, `k` clusters, `n = 1000`,
/// all six estimators.
///
/// 1. assortative, `p_ii = 0.8`;
/// 2. `p` and `α` uniform on the simplex;
/// 3. uniform `p`, `α_k = 1/K`, perturbed with `ε = 0.2`;
/// 4. dot-product `p` of rank `⌈K/2⌉`, `α_k = 1/K`.
pub fn table1_cell(test: u8, k: usize, ell: EllSpec) -> Result<Scenario, HarnessError> {
    let (ensemble, epsilon) = match test {
        1 => (Ensemble::Assortative { p0: 0.8 }, 0.0),
        2 => (
            Ensemble::Uniform {
                alpha: AlphaMode::Uniform,
            },
            0.0,
        ),
        3 => (
            Ensemble::Uniform {
                alpha: AlphaMode::Constant,
            },
            0.2,
        ),
        4 => (
            Ensemble::LowRank {
                d: None,
                alpha: AlphaMode::Constant,
            },
            0.0,
        ),
        _ => return Err(HarnessError::Config(format!("no test {test}"))),
    };
    let mut s = Scenario::new(format!("test{test}_k{k}_{}", ell_tag(ell)), ensemble, k, N, ell);
    s.epsilon = epsilon;
    s.estimators = EstimatorKind::ALL.to_vec();
    Ok(s)
}

fn table1() -> Vec<Scenario> {
    let mut out = Vec::new();
    for ell in [EllSpec::LogPower(2.0), EllSpec::Quadratic] {
        for k in [3, 6, 10] {
            for test in 1..=4 {
                out.push(table1_cell(test, k, ell).expect("valid test number"));
            }
        }
    }
    out
}

/// Symmetric three-cluster chains of decreasing separation over growing `n`.
fn proof_of_concept() -> Vec<Scenario> {
    let mut out = Vec::new();
    for (name, p0) in [("a", 0.9), ("b", 0.75), ("c", 0.6), ("d", 0.5)] {
        let off = (1.0 - p0) / 2.0;
        let p = (0..3)
            .map(|i| (0..3).map(|j| if i == j { p0 } else { off }).collect())
            .collect();
        let params = BmcParams::new(p, vec![1.0 / 3.0; 3]).expect("valid chain");
        for n in [250, 500, 1000, 2000] {
            for beta in [1.5, 1.75, 2.0] {
                let ell = EllSpec::LogPower(beta);
                let mut s = Scenario::new(
                    format!("poc_{name}_n{n}_{}", ell_tag(ell)),
                    Ensemble::Explicit {
                        params: params.clone(),
                    },
                    3,
                    n,
                    ell,
                );
                s.estimators = vec![EstimatorKind::Alg1, EstimatorKind::Alg2];
                out.push(s);
            }
        }
    }
    out
}

/// `K = 10` dot-product chains of rank 5.
fn low_rank() -> Vec<Scenario> {
    [2.0, 3.5, 5.0]
        .into_iter()
        .map(|beta| {
            let ell = EllSpec::LogPower(beta);
            let mut s = Scenario::new(
                format!("lowrank_k10_d5_{}", ell_tag(ell)),
                Ensemble::LowRank {
                    d: Some(5),
                    alpha: AlphaMode::Uniform,
                },
                10,
                N,
                ell,
            );
            s.estimators = vec![EstimatorKind::Alg1, EstimatorKind::Alg2];
            s
        })
        .collect()
}

/// Forced embedding ranks on `K = 10` uniform and reversible chains.
fn rank_sensitivity() -> Vec<Scenario> {
    let mut out = Vec::new();
    for (name, ensemble) in [
        (
            "uniform",
            Ensemble::Uniform {
                alpha: AlphaMode::Uniform,
            },
        ),
        ("reversible", Ensemble::Reversible),
    ] {
        for beta in [2.0, 3.0, 4.0] {
            for r in [5, 10, 15] {
                let ell = EllSpec::LogPower(beta);
                let mut s = Scenario::new(
                    format!("rank_{name}_r{r}_{}", ell_tag(ell)),
                    ensemble.clone(),
                    10,
                    N,
                    ell,
                );
                s.r_override = Some(r);
                out.push(s);
            }
        }
    }
    out
}

/// Two symmetric clusters, `β ≤ 1`, `c = 0.95`. The `_a` scenarios run the
/// spectral count and the full pipeline, `_b` the pipeline at `r = 2` on the
/// same seeds.
fn sparse() -> Vec<Scenario> {
    let thresholds = Thresholds {
        c: 0.95,
        ..Thresholds::default()
    };
    let mut out = Vec::new();
    for step in 0..9 {
        let p0 = 0.55 + 0.05 * step as f64;
        let params = BmcParams::symmetric_two_cluster(p0).expect("p0 in (1/2, 1)");
        for beta in [0.25, 0.5, 0.75, 1.0] {
            let ell = EllSpec::LogPower(beta);
            let mut s = Scenario::new(
                format!("sparse_p0{p0:.2}_{}_a", ell_tag(ell)),
                Ensemble::Explicit {
                    params: params.clone(),
                },
                2,
                N,
                ell,
            );
            s.thresholds = thresholds;
            s.estimators = vec![EstimatorKind::Alg1, EstimatorKind::Alg2];
            let mut b = s.clone();
            b.id = format!("sparse_p0{p0:.2}_{}_b", ell_tag(ell));
            b.estimators = vec![EstimatorKind::Alg2];
            b.r_override = Some(2);
            out.push(s);
            out.push(b);
        }
    }
    out
}

/// Uniform `K = 5` chains mixed with the uniform walk.
fn perturbation() -> Vec<Scenario> {
    let mut out = Vec::new();
    for beta in [3.0, 4.0] {
        for step in 0..=10 {
            let epsilon = step as f64 / 10.0;
            let ell = EllSpec::LogPower(beta);
            let mut s = Scenario::new(
                format!("perturb_eps{epsilon:.1}_{}", ell_tag(ell)),
                Ensemble::Uniform {
                    alpha: AlphaMode::Uniform,
                },
                5,
                N,
                ell,
            );
            s.epsilon = epsilon;
            out.push(s);
        }
    }
    out
}

/// Uniform chains with AMI scores, for relating accuracy to `I(α, p)` and
/// the cluster-size entropy.
fn characteristics() -> Vec<Scenario> {
    [5, 10, 20]
        .into_iter()
        .map(|k| {
            let mut s = Scenario::new(
                format!("characteristics_k{k}"),
                Ensemble::Uniform {
                    alpha: AlphaMode::Uniform,
                },
                k,
                N,
                EllSpec::LogPower(3.0),
            );
            s.compute_labels = true;
            s
        })
        .collect()
}

pub fn suite(name: &str) -> Result<Vec<Scenario>, HarnessError> {
    Ok(match name {
        "table1" => table1(),
        "proof_of_concept" => proof_of_concept(),
        "low_rank" => low_rank(),
        "rank_sensitivity" => rank_sensitivity(),
        "sparse" => sparse(),
        "perturbation" => perturbation(),
        "characteristics" => characteristics(),
        _ => {
            return Err(HarnessError::Config(format!(
                "unknown suite {name:?}, expected one of {}",
                SUITE_NAMES.join(", ")
            )))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn every_suite_is_valid() {
        for name in SUITE_NAMES {
            let list = suite(name).unwrap();
            assert!(!list.is_empty());
            let ids: HashSet<&str> = list.iter().map(|s| s.id.as_str()).collect();
            assert_eq!(ids.len(), list.len(), "duplicate ids in {name}");
            for s in &list {
                s.validate().unwrap();
            }
        }
        assert!(suite("nope").is_err());
    }

    #[test]
    fn table1_grid() {
        let grid = suite("table1").unwrap();
        assert_eq!(grid.len(), 24);
        assert!(grid.iter().all(|s| s.estimators.len() == 6 && s.n == 1000));
        let t3 = table1_cell(3, 6, EllSpec::Quadratic).unwrap();
        assert_eq!(t3.epsilon, 0.2);
        assert_eq!(t3.ell(), 1_000_000);
        assert_eq!(table1_cell(1, 3, EllSpec::LogPower(2.0)).unwrap().ell(), 47717);
        assert!(table1_cell(5, 3, EllSpec::Quadratic).is_err());
    }

    #[test]
    fn sparse_pairs_share_seeds() {
        let list = suite("sparse").unwrap();
        assert_eq!(list.len(), 9 * 4 * 2);
        for pair in list.chunks(2) {
            assert_eq!(pair[0].root_seed, pair[1].root_seed);
            assert_eq!(pair[0].ensemble, pair[1].ensemble);
            assert_eq!(pair[1].r_override, Some(2));
            assert_eq!(pair[0].thresholds.c, 0.95);
        }
    }
}
