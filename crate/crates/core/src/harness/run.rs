use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::estimators::{
    revealed_k_labels, BuiltinEstimator, Estimator, EstimatorKind, EstimatorOutput,
};
use crate::metrics::{ami, normalized_entropy, relative_accuracy, Partition};
use crate::model::{
    build_instance, information_quantity, mixing_time, BmcInstance, ModelError,
    PerturbationSpec, PerturbedSampler, Trajectory,
};

use super::{child_seed, path_seed, HarnessError, ResultRow, RowStatus, Scenario, THREADS_ENV};

struct Prepared {
    k: usize,
    ell: usize,
    estimators: Vec<BuiltinEstimator>,
}

fn prepare(s: &Scenario) -> Result<Prepared, HarnessError> {
    s.validate()?;
    let k = s.cluster_count()?;
    let estimators = s
        .estimators
        .iter()
        .map(|&kind| BuiltinEstimator {
            kind,
            thresholds: s.thresholds,
            k_max: s.k_max(k),
            r_override: s.r_override,
            compute_labels: s.compute_labels,
        })
        .collect();
    Ok(Prepared {
        k,
        ell: s.ell(),
        estimators,
    })
}

/// All rows of replication `index`, one per estimator.
pub fn run_replication(s: &Scenario, index: usize) -> Result<Vec<ResultRow>, HarnessError> {
    Ok(replicate(s, &prepare(s)?, index))
}

fn blank_row(s: &Scenario, prep: &Prepared, index: usize, seed: u64, estimator: &str) -> ResultRow {
    ResultRow {
        scenario: s.id.clone(),
        replication: index,
        seed,
        estimator: estimator.to_string(),
        status: RowStatus::Ok,
        error: None,
        n: s.n,
        ell: prep.ell,
        epsilon: s.epsilon,
        k_true: prep.k,
        k_hat: None,
        k_spec: None,
        relative_accuracy: None,
        ami: None,
        ami_revealed: None,
        information_quantity: None,
        normalized_entropy: None,
        t_mix: None,
        wall_time_ms: None,
    }
}

fn draw(
    s: &Scenario,
    k: usize,
    ell: usize,
    seed: u64,
) -> Result<(BmcInstance, Trajectory), ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = s.ensemble.sample(k, s.n, &mut rng)?;
    let instance = build_instance(params, s.n)?;
    let spec = PerturbationSpec::new(s.epsilon)?;
    let traj = PerturbedSampler::new(&instance, spec)
        .with_start(s.start)
        .simulate(ell, path_seed(seed));
    Ok((instance, traj))
}

/// The chain and path of replication `index`, as the runner sees them.
pub fn sample_replication(
    s: &Scenario,
    index: usize,
) -> Result<(BmcInstance, Trajectory), HarnessError> {
    s.validate()?;
    let seed = child_seed(s.root_seed, index as u64);
    Ok(draw(s, s.cluster_count()?, s.ell(), seed)?)
}

fn replicate(s: &Scenario, prep: &Prepared, index: usize) -> Vec<ResultRow> {
    let seed = child_seed(s.root_seed, index as u64);
    let error_rows = |msg: String| -> Vec<ResultRow> {
        prep.estimators
            .iter()
            .map(|e| ResultRow {
                status: RowStatus::Error,
                error: Some(msg.clone()),
                ..blank_row(s, prep, index, seed, e.id())
            })
            .collect()
    };

    let (instance, traj) = match draw(s, prep.k, prep.ell, seed) {
        Ok(pair) => pair,
        Err(e) => return error_rows(e.to_string()),
    };
    let info = information_quantity(&instance.params)
        .ok()
        .filter(|v| v.is_finite());
    let t_mix = mixing_time(&instance.params).ok();
    let truth = Partition::new(instance.sigma.clone(), prep.k)
        .expect("instance labels lie in 0..k");
    let entropy = normalized_entropy(&truth).ok();

    prep.estimators
        .iter()
        .map(|est| {
            let mut row = ResultRow {
                information_quantity: info,
                normalized_entropy: entropy,
                t_mix,
                ..blank_row(s, prep, index, seed, est.id())
            };
            let start = Instant::now();
            let result = est.estimate(&traj);
            if s.record_timing {
                row.wall_time_ms = Some(start.elapsed().as_secs_f64() * 1e3);
            }
            match result {
                Ok(out) => fill_ok(&mut row, s, est, &truth, &traj, out),
                Err(e) => {
                    row.status = RowStatus::Error;
                    row.error = Some(e.to_string());
                }
            }
            row
        })
        .collect()
}

fn ami_against(truth: &Partition, labels: Vec<usize>) -> Option<f64> {
    let est = Partition::from_labels(labels).ok()?;
    ami(truth, &est).ok().map(|a| a.value)
}

fn fill_ok(
    row: &mut ResultRow,
    s: &Scenario,
    est: &BuiltinEstimator,
    truth: &Partition,
    traj: &Trajectory,
    out: EstimatorOutput,
) {
    row.k_hat = Some(out.k_hat);
    row.k_spec = out.k_spec;
    row.relative_accuracy = Some(relative_accuracy(out.k_hat, row.k_true));
    if !s.compute_labels {
        return;
    }
    row.ami = out.labels.and_then(|l| ami_against(truth, l));
    if est.kind == EstimatorKind::Alg2 {
        row.ami_revealed = revealed_k_labels(traj, &s.thresholds, row.k_true)
            .ok()
            .and_then(|l| ami_against(truth, l.labels));
    }
}

fn thread_count() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&t| t > 0)
}

/// Runs a scenario with the thread cap from `BMC_THREADS`.
pub fn run_scenario(s: &Scenario) -> Result<Vec<ResultRow>, HarnessError> {
    run_scenario_with_threads(s, thread_count())
}

/// Runs every replication of `s`, in parallel over replications, and returns
/// the rows in replication order. In sequential mode, batches are added until
/// every estimator has at least `min_samples` successful rows with a margin
/// of error at most `margin`, or `max_samples` replications have run.
pub fn run_scenario_with_threads(
    s: &Scenario,
    threads: Option<usize>,
) -> Result<Vec<ResultRow>, HarnessError> {
    let prep = prepare(s)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    let run_range = |from: usize, to: usize| -> Vec<ResultRow> {
        pool.install(|| {
            (from..to)
                .into_par_iter()
                .map(|i| replicate(s, &prep, i))
                .collect::<Vec<_>>()
                .into_iter()
                .flatten()
                .collect()
        })
    };

    let Some(rule) = s.sequential else {
        return Ok(run_range(0, s.replications));
    };
    let mut rows = Vec::new();
    let mut done = 0;
    while done < rule.max_samples {
        let next = (done + rule.batch).min(rule.max_samples);
        rows.extend(run_range(done, next));
        done = next;
        let satisfied = aggregate(&rows).iter().all(|cell| {
            cell.count >= rule.min_samples && cell.margin.is_some_and(|m| m <= rule.margin)
        });
        if satisfied {
            break;
        }
    }
    Ok(rows)
}

/// Summary of one (scenario, estimator) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub scenario: String,
    pub estimator: String,
    /// Successful rows.
    pub count: usize,
    pub errors: usize,
    pub mean: Option<f64>,
    /// Sample standard deviation, `n − 1` denominator.
    pub sd: Option<f64>,
    /// `1.96·sd/√count`.
    pub margin: Option<f64>,
}

/// Mean, standard deviation and 95% margin of `K̂` per cell, in order of first
/// appearance. Error rows are only counted.
pub fn aggregate(rows: &[ResultRow]) -> Vec<CellSummary> {
    let mut cells: Vec<(CellSummary, Vec<f64>)> = Vec::new();
    for row in rows {
        let pos = cells
            .iter()
            .position(|(c, _)| c.scenario == row.scenario && c.estimator == row.estimator);
        let pos = pos.unwrap_or_else(|| {
            cells.push((
                CellSummary {
                    scenario: row.scenario.clone(),
                    estimator: row.estimator.clone(),
                    count: 0,
                    errors: 0,
                    mean: None,
                    sd: None,
                    margin: None,
                },
                Vec::new(),
            ));
            cells.len() - 1
        });
        match (row.status, row.k_hat) {
            (RowStatus::Ok, Some(k)) => cells[pos].1.push(k as f64),
            _ => cells[pos].0.errors += 1,
        }
    }
    cells
        .into_iter()
        .map(|(mut cell, values)| {
            let count = values.len();
            cell.count = count;
            if count > 0 {
                let mean = values.iter().sum::<f64>() / count as f64;
                cell.mean = Some(mean);
                if count > 1 {
                    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                        / (count - 1) as f64;
                    let sd = var.sqrt();
                    cell.sd = Some(sd);
                    cell.margin = Some(1.96 * sd / (count as f64).sqrt());
                }
            }
            cell
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{EllSpec, SequentialRule};
    use crate::model::{BmcParams, Ensemble};

    fn row(scenario: &str, estimator: &str, k_hat: Option<usize>) -> ResultRow {
        ResultRow {
            scenario: scenario.into(),
            replication: 0,
            seed: 0,
            estimator: estimator.into(),
            status: if k_hat.is_some() {
                RowStatus::Ok
            } else {
                RowStatus::Error
            },
            error: k_hat.is_none().then(|| "boom".to_string()),
            n: 10,
            ell: 10,
            epsilon: 0.0,
            k_true: 3,
            k_hat,
            k_spec: None,
            relative_accuracy: None,
            ami: None,
            ami_revealed: None,
            information_quantity: None,
            normalized_entropy: None,
            t_mix: None,
            wall_time_ms: None,
        }
    }

    #[test]
    fn aggregate_examples() {
        let same = aggregate(&vec![row("s", "alg2", Some(3)); 4]);
        assert_eq!(same.len(), 1);
        assert_eq!(same[0].mean, Some(3.0));
        assert_eq!(same[0].sd, Some(0.0));
        assert_eq!(same[0].margin, Some(0.0));

        let pair = aggregate(&[row("s", "alg2", Some(2)), row("s", "alg2", Some(4))]);
        assert_eq!(pair[0].mean, Some(3.0));
        assert!((pair[0].sd.unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!((pair[0].margin.unwrap() - 1.96 * 2f64.sqrt() / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn errors_are_counted_apart() {
        let rows = vec![
            row("s", "alg2", Some(3)),
            row("s", "alg2", None),
            row("s", "megh", Some(7)),
            row("s", "alg2", Some(5)),
        ];
        let cells = aggregate(&rows);
        assert_eq!(cells[0].estimator, "alg2");
        assert_eq!((cells[0].count, cells[0].errors), (2, 1));
        assert_eq!(cells[0].mean, Some(4.0));
        assert_eq!((cells[1].count, cells[1].sd), (1, None));
    }

    fn small_scenario() -> Scenario {
        let mut s = Scenario::new(
            "small",
            Ensemble::Explicit {
                params: BmcParams::symmetric_two_cluster(0.9).unwrap(),
            },
            2,
            60,
            EllSpec::LogPower(2.0),
        );
        s.estimators = vec![EstimatorKind::Alg1, EstimatorKind::Alg2, EstimatorKind::Megh];
        s.replications = 4;
        s.root_seed = 11;
        s
    }

    #[test]
    fn fixed_mode_row_count_and_order() {
        let s = small_scenario();
        let rows = run_scenario_with_threads(&s, Some(2)).unwrap();
        assert_eq!(rows.len(), 4 * 3);
        for (i, chunk) in rows.chunks(3).enumerate() {
            assert!(chunk.iter().all(|r| r.replication == i));
            assert!(chunk.iter().all(|r| r.seed == child_seed(11, i as u64)));
            let ids: Vec<&str> = chunk.iter().map(|r| r.estimator.as_str()).collect();
            assert_eq!(ids, ["alg1", "alg2", "megh"]);
        }
        assert!(rows.iter().all(|r| r.status == RowStatus::Ok));
        assert_eq!(rows, run_scenario_with_threads(&s, Some(1)).unwrap());
    }

    #[test]
    fn failed_replications_become_error_rows() {
        let mut s = small_scenario();
        // every estimate is rejected by the thresholds
        s.estimators = vec![EstimatorKind::Llsc];
        s.ell = EllSpec::Explicit(1);
        let rows = run_scenario_with_threads(&s, Some(1)).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.status == RowStatus::Error && r.error.is_some()));
        assert_eq!(aggregate(&rows)[0].errors, 4);
    }

    #[test]
    fn sequential_floor() {
        let mut s = small_scenario();
        s.n = 20;
        s.ell = EllSpec::Explicit(400);
        s.estimators = vec![EstimatorKind::Alg1];
        s.sequential = Some(SequentialRule::default());
        let rows = run_scenario_with_threads(&s, None).unwrap();
        let cell = &aggregate(&rows)[0];
        assert!(cell.count >= 250);
        assert!(cell.margin.unwrap() <= 0.15 || rows.len() == 5000);
        assert_eq!(rows.len() % 50, 0);
    }

    #[test]
    fn labels_give_ami() {
        let mut s = small_scenario();
        s.n = 100;
        s.estimators = vec![EstimatorKind::Alg2];
        s.compute_labels = true;
        let rows = run_scenario_with_threads(&s, Some(1)).unwrap();
        for r in &rows {
            assert_eq!(r.k_hat, Some(2));
            assert!(r.ami.unwrap() > 0.9);
            assert!(r.ami_revealed.unwrap() > 0.9);
            assert_eq!(r.normalized_entropy, Some(1.0));
            assert!(r.information_quantity.unwrap() > 0.0);
        }
    }
}
