//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line.

use std::process::Command;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use bmc_kdetect::counts::{build_counts, degrees, trim};
use bmc_kdetect::estimators::{estimate_full, EstimatorKind, Thresholds};
use bmc_kdetect::harness::{
    run_scenario_with_threads, table1_cell, EllSpec, ResultRow, RowStatus, Scenario,
};
use bmc_kdetect::linalg::{count_singvals_above, embed, svd_truncated, MatrixOp};
use bmc_kdetect::metrics::{ami, misclassification, normalized_entropy, Partition};
use bmc_kdetect::model::{
    build_instance, information_quantity, mixing_time, sample_uniform_ensemble, simulate,
    AlphaMode, BmcParams, Ensemble, PerturbationSpec, PerturbedSampler,
};

fn report(id: u32, name: &str, pass: bool, detail: String) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("criterion {id:>2} {verdict}: {name}: {detail}");
    assert!(pass, "criterion {id} failed: {detail}");
}

fn log_power_ell(n: usize, beta: f64) -> usize {
    EllSpec::LogPower(beta).resolve(n)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

fn ok_rows(rows: &[ResultRow]) -> Vec<&ResultRow> {
    rows.iter().filter(|r| r.status == RowStatus::Ok).collect()
}

#[test]
fn criterion_01_inertia_count_matches_svd_count() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut checks, mut mismatches) = (0, 0);
    for m in 0..100 {
        let scale = 10f64.powi(rng.random_range(-3..=3));
        let a = DMatrix::from_fn(50, 50, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            // every other matrix is nonnegative and sparse, like count data
            if m % 2 == 0 {
                scale * z
            } else if rng.random::<f64>() < 0.2 {
                (scale * z.abs()).round()
            } else {
                0.0
            }
        });
        let sv = a.clone().singular_values();
        let top = sv.iter().copied().fold(0.0, f64::max).max(1.0);
        for _ in 0..5 {
            let gamma = rng.random_range(0.0..1.1) * top + f64::MIN_POSITIVE;
            let direct = sv.iter().filter(|&&s| s >= gamma).count();
            let got = count_singvals_above(&a, gamma).unwrap();
            checks += 1;
            if got != direct {
                mismatches += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        1,
        "inertia count equals direct SVD count",
        mismatches == 0 && secs < 10.0,
        format!("{mismatches} mismatches in {checks} checks, {secs:.2} s"),
    );
}

#[test]
fn criterion_02_embedding_distances_equal_lowrank_distances() {
    let n = 100;
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst_ratio: f64 = 0.0;
    for m in 0..50u64 {
        let k = rng.random_range(2..=5);
        let params = sample_uniform_ensemble(k, AlphaMode::Uniform, n, &mut rng).unwrap();
        let inst = build_instance(params, n).unwrap();
        let beta = rng.random_range(1.5..3.0);
        let traj = simulate(&inst, log_power_ell(n, beta), 1000 + m);
        let a = trim(build_counts(&traj)).to_csr().to_dense();

        // independent reference: full SVD, then the rank-r truncation in full
        let full = a.clone().svd(true, true);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| full.singular_values[j].total_cmp(&full.singular_values[i]));
        let (u, vt) = (full.u.as_ref().unwrap(), full.v_t.as_ref().unwrap());
        let s1 = full.singular_values[order[0]];

        for r in [1, 2, 5] {
            let mut r0 = DMatrix::<f64>::zeros(n, n);
            for &i in &order[..r] {
                r0 += full.singular_values[i] * u.column(i) * vt.row(i);
            }
            let emb = embed(&svd_truncated(&a, r).unwrap(), r).unwrap();
            let mut worst: f64 = 0.0;
            for _ in 0..100 {
                let (x, y) = (rng.random_range(0..n), rng.random_range(0..n));
                let rows = (r0.row(x) - r0.row(y)).norm_squared();
                let cols = (r0.column(x) - r0.column(y)).norm_squared();
                let d_lowrank = (rows + cols).sqrt();
                let d_emb = emb.dist2(x, y).sqrt();
                worst = worst.max((d_lowrank - d_emb).abs());
            }
            worst_ratio = worst_ratio.max(worst / s1);
        }
    }
    report(
        2,
        "embedding distances equal low-rank row distances",
        worst_ratio <= 1e-8,
        format!("max |difference| / sigma_1 = {worst_ratio:.3e} over 150 matrices"),
    );
}

#[test]
fn criterion_03_easy_assortative_cell() {
    let mut s = table1_cell(1, 3, EllSpec::LogPower(2.0)).unwrap();
    s.estimators = vec![EstimatorKind::Alg2];
    s.replications = 50;
    s.root_seed = 303;
    let start = Instant::now();
    let rows = run_scenario_with_threads(&s, None).unwrap();
    let ok = ok_rows(&rows);
    let mean = ok.iter().map(|r| r.k_hat.unwrap() as f64).sum::<f64>() / ok.len() as f64;
    report(
        3,
        "assortative K=3, n=1000, l=n(ln n)^2, mean alg2 estimate in [2.85, 3.15]",
        ok.len() == 50 && (2.85..=3.15).contains(&mean),
        format!(
            "mean {mean:.3} over {} ok rows ({} errors), {:.0} s",
            ok.len(),
            rows.len() - ok.len(),
            start.elapsed().as_secs_f64()
        ),
    );
}

#[test]
fn criterion_04_rank_deficient_chain() {
    let mut s = Scenario::new(
        "dot_product",
        Ensemble::DotProductExample { a: 1.0, b: 1.0 },
        3,
        500,
        EllSpec::LogPower(4.0),
    );
    s.replications = 30;
    s.root_seed = 404;
    let rows = run_scenario_with_threads(&s, None).unwrap();
    let spec_two = rows.iter().filter(|r| r.k_spec == Some(2)).count();
    let full_three = rows.iter().filter(|r| r.k_hat == Some(3)).count();
    report(
        4,
        "rank-2 three-cluster chain: k_spec = 2 in >= 80%, estimate = 3 in >= 60%",
        spec_two * 10 >= 30 * 8 && full_three * 10 >= 30 * 6,
        format!("k_spec = 2 in {spec_two}/30, estimate = 3 in {full_three}/30"),
    );
}

#[test]
fn criterion_05_singular_value_scaling() {
    let n = 1000;
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let params = sample_uniform_ensemble(5, AlphaMode::Uniform, n, &mut rng).unwrap();
    let inst = build_instance(params, n).unwrap();
    let mut signal = Vec::new();
    let mut noise = Vec::new();
    for beta in [2.0, 3.0, 4.0] {
        let ell = log_power_ell(n, beta);
        let scale = n as f64 / ell as f64;
        let (mut s5, mut s6) = (Vec::new(), Vec::new());
        for seed in 0..10 {
            let traj = simulate(&inst, ell, 5000 + seed);
            let svd = svd_truncated(&trim(build_counts(&traj)).to_csr(), 6).unwrap();
            s5.push(svd.s[4] * scale);
            s6.push(svd.s[5] * scale.sqrt());
        }
        signal.push(median(s5));
        noise.push(median(s6));
    }
    let spread = |v: &[f64]| {
        v.iter().copied().fold(f64::MIN, f64::max) / v.iter().copied().fold(f64::MAX, f64::min)
    };
    let (ss, sn) = (spread(&signal), spread(&noise));
    report(
        5,
        "sigma_5 n/l and sigma_6 sqrt(n/l) stable across l",
        ss < 2.0 && sn < 2.0,
        format!("sigma_5 n/l medians {signal:.3?} (spread {ss:.3}), sigma_6 sqrt(n/l) medians {noise:.3?} (spread {sn:.3})"),
    );
}

fn p0_grid() -> Vec<f64> {
    (0..9).map(|i| 0.55 + 0.05 * i as f64).collect()
}

#[test]
fn criterion_06_information_quantity_closed_form() {
    let mut worst: f64 = 0.0;
    for p0 in p0_grid() {
        let got = information_quantity(&BmcParams::symmetric_two_cluster(p0).unwrap()).unwrap();
        let closed = 4.0 * (p0 - 0.5) * (p0 / (1.0 - p0)).ln();
        worst = worst.max((got - closed).abs());
    }
    report(
        6,
        "two-cluster information quantity matches closed form",
        worst <= 1e-12,
        format!("max abs error {worst:.2e} over 9 values of p0"),
    );
}

#[test]
fn criterion_07_mixing_time_closed_form() {
    let mut mismatches = Vec::new();
    for p0 in p0_grid() {
        let got = mixing_time(&BmcParams::symmetric_two_cluster(p0).unwrap()).unwrap();
        let closed = (2f64.ln() / (1.0 / (2.0 * p0 - 1.0)).ln()).ceil() as usize;
        if got != closed {
            mismatches.push((p0, got, closed));
        }
    }
    report(
        7,
        "two-cluster mixing time matches closed form",
        mismatches.is_empty(),
        format!("mismatches (p0, got, closed form): {mismatches:?}"),
    );
}

#[test]
fn criterion_08_mean_counts() {
    let (n, ell, seeds) = (20, 2000, 500);
    let inst = build_instance(BmcParams::symmetric_two_cluster(0.7).unwrap(), n).unwrap();
    let mut sum = vec![0.0; n * n];
    let mut sum_sq = vec![0.0; n * n];
    for seed in 0..seeds {
        let counts = build_counts(&simulate(&inst, ell, 8000 + seed));
        for x in 0..n {
            for y in 0..n {
                let c = counts.get(x, y) as f64;
                sum[x * n + y] += c;
                sum_sq[x * n + y] += c * c;
            }
        }
    }
    let m = seeds as f64;
    let mut within = 0;
    for x in 0..n {
        for y in 0..n {
            let mean = sum[x * n + y] / m;
            let var = (sum_sq[x * n + y] - m * mean * mean) / (m - 1.0);
            let se = (var / m).sqrt();
            let expected = ell as f64 * inst.state_stationary(x) * inst.transition_probability(x, y);
            if (mean - expected).abs() <= 4.0 * se {
                within += 1;
            }
        }
    }
    report(
        8,
        "mean transition counts match l Pi_x P_xy",
        within * 100 >= 99 * n * n,
        format!("{within}/{} entries within 4 standard errors", n * n),
    );
}

#[test]
fn criterion_09_misclassification_shrinks_with_path_length() {
    let n = 1000;
    let thresholds = Thresholds::default();
    let mut fractions = [0.0, 0.0];
    for seed in 0..30u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(9000 + seed);
        let params = sample_uniform_ensemble(5, AlphaMode::Uniform, n, &mut rng).unwrap();
        let inst = build_instance(params, n).unwrap();
        let truth = Partition::new(inst.sigma.clone(), 5).unwrap();
        for (slot, beta) in [2.0, 3.0].into_iter().enumerate() {
            let traj = simulate(&inst, log_power_ell(n, beta), 9000 + seed);
            let (_, labeling) = estimate_full(&traj, &thresholds, None).unwrap();
            let wrong = match labeling {
                Some(l) => {
                    let est = Partition::new(l.labels, l.k).unwrap();
                    misclassification(&truth, &est).unwrap().count
                }
                None => n,
            };
            fractions[slot] += wrong as f64 / n as f64 / 30.0;
        }
    }
    report(
        9,
        "misclassified fraction smaller at l=n(ln n)^3 than at n(ln n)^2",
        fractions[1] < fractions[0],
        format!(
            "mean |E|/n: {:.4} at beta=2, {:.4} at beta=3",
            fractions[0], fractions[1]
        ),
    );
}

#[test]
fn criterion_10_metric_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let labels: Vec<usize> = (0..1000).map(|_| rng.random_range(0..5)).collect();
    let part = Partition::new(labels.clone(), 5).unwrap();
    let self_ami = ami(&part, &part).unwrap().value;

    let mut total = 0.0;
    for _ in 0..100 {
        let mut shuffled = labels.clone();
        shuffled.shuffle(&mut rng);
        total += ami(&part, &Partition::new(shuffled, 5).unwrap()).unwrap().value;
    }
    let mean_shuffled = total / 100.0;

    let equal = Partition::new((0..1000).map(|i| i % 5).collect(), 5).unwrap();
    let h = normalized_entropy(&equal).unwrap();
    report(
        10,
        "AMI and entropy properties",
        (self_ami - 1.0).abs() <= 1e-9 && mean_shuffled.abs() <= 0.05 && (h - 1.0).abs() <= 1e-12,
        format!("AMI(s,s) = {self_ami}, mean AMI vs shuffled = {mean_shuffled:.4}, equal-size entropy = {h}"),
    );
}

#[test]
fn criterion_11_degree_boundary() {
    let mut rng = ChaCha8Rng::seed_from_u64(1111);
    let mut violations = 0;
    for t in 0..100u64 {
        let k = rng.random_range(1..=6);
        let n = rng.random_range(k.max(2)..200);
        let params = sample_uniform_ensemble(k, AlphaMode::Uniform, n, &mut rng).unwrap();
        let inst = build_instance(params, n).unwrap();
        let eps = if t % 2 == 0 { 0.0 } else { rng.random::<f64>() };
        let ell = rng.random_range(1..5000);
        let traj = PerturbedSampler::new(&inst, PerturbationSpec::new(eps).unwrap())
            .simulate(ell, 11_000 + t);
        let d = degrees(&build_counts(&traj));
        violations += d
            .d_in
            .iter()
            .zip(&d.d_out)
            .filter(|(i, o)| i.abs_diff(**o) > 1)
            .count();
    }
    report(
        11,
        "in- and out-degrees differ by at most one",
        violations == 0,
        format!("{violations} violating states over 100 trajectories"),
    );
}

#[test]
fn criterion_12_experiment_output_is_thread_independent() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("scenario.json");
    std::fs::write(
        &config,
        r#"{"id": "determinism", "ensemble": {"type": "uniform"}, "k": 4, "n": 150,
            "ell": {"log_power": 2.5}, "epsilon": 0.1,
            "estimators": ["alg1", "alg2", "megh", "llsc", "llci", "caic"],
            "replications": 8, "root_seed": 1212, "compute_labels": true}"#,
    )
    .unwrap();
    let run = |threads: &str, name: &str| {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_bmc-kdetect"))
            .args(["experiment", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .env("BMC_THREADS", threads)
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read(out).unwrap()
    };
    let one = run("1", "one.csv");
    let four = run("4", "four.csv");
    let again = run("1", "again.csv");
    let lines = String::from_utf8_lossy(&one).lines().count();
    report(
        12,
        "experiment CSV identical across thread counts",
        one == four && one == again && lines == 1 + 8 * 6,
        format!(
            "{} bytes, {lines} lines, 1 vs 4 threads identical: {}, rerun identical: {}",
            one.len(),
            one == four,
            one == again
        ),
    );
}
