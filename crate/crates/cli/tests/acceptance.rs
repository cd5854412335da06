//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line (visible with `--nocapture`).
//!
//! The synthetic workload is the (200, 200, 20) rank-4 tensor with
//! 50 000 noise-free entries, generator seed 777. The recovery oracle is
//! a frozen pilot value; see `PILOT_TEST_RMSE` for how it was produced.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;
use std::time::Instant;

use trifact_core::gradcheck::{self, GradCheckConfig, Mutation};
use trifact_core::model::{RegMode, sigmoid};
use trifact_core::solver::{self, SolverKind, TrainConfig};
use trifact_core::tensor::{SparseTensorCOO, SplitAssignment, TensorShape};
use trifact_core::{ingest, metrics};

/// Held-out (test split) RMSE of the pilot calibration run, frozen as
/// the recovery oracle. Pilot recipe: this file's synthetic tensor,
/// split 0.7/0.1/0.2 with seed 42, and `synth_config(42)` below, i.e.
/// rank 4, eta 0.01, lambda 1e-5, gamma 0.9, epoch cap 500, patience 10.
/// Regenerate with:
///   trifact synth --out s --dims 200,200,20 --true-rank 4 --entries 50000 --seed 777
///   trifact train --data s/tensor.tsv --out t --rank 4 --eta 0.01 \
///     --lambda 1e-5 --gamma 0.9 --epochs 500 --patience 10 --seed 42
///   trifact eval --model t/model.tsv --data s/tensor.tsv --on test --seed 42
const PILOT_TEST_RMSE: f64 = 0.0070240393251624405;

const SYNTH_SEED: u64 = 777;
const SPLIT_SEED: u64 = 42;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_trifact"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("failed to spawn trifact")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn sample_edges() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/sample_edges.csv")
}

fn synth_config(seed: u64) -> TrainConfig {
    TrainConfig {
        rank: 4,
        eta: 0.01,
        lambda: 1e-5,
        gamma: 0.9,
        max_epochs: 500,
        patience: 10,
        seed,
        reg_mode: RegMode::Exact,
        init_scale: 0.1,
    }
}

/// The shared synthetic workload, built once per process.
fn big_synth() -> &'static (SparseTensorCOO, SplitAssignment) {
    static BIG: OnceLock<(SparseTensorCOO, SplitAssignment)> = OnceLock::new();
    BIG.get_or_init(|| {
        let dims = TensorShape::new(200, 200, 20).unwrap();
        let (tensor, _) = metrics::synth_tensor(dims, 4, 50_000, 0.0, SYNTH_SEED).unwrap();
        let split = tensor.split((0.7, 0.1, 0.2), SPLIT_SEED).unwrap();
        (tensor, split)
    })
}

fn report(criterion: &str, passed: bool, detail: &str) {
    println!(
        "criterion {criterion}: {} ({detail})",
        if passed { "PASS" } else { "FAIL" }
    );
    assert!(passed, "criterion {criterion} failed: {detail}");
}

#[test]
fn criterion_1_gradient_correctness() {
    let started = Instant::now();
    let clean = gradcheck::check_gradients(&GradCheckConfig {
        cases: 1000,
        seed: 1,
        lambda: None,
        reg_mode: RegMode::Exact,
        mutation: Mutation::None,
    })
    .unwrap();
    let elapsed = started.elapsed();

    let mutant = gradcheck::check_gradients(&GradCheckConfig {
        cases: 1000,
        seed: 1,
        lambda: None,
        reg_mode: RegMode::Exact,
        mutation: Mutation::SignFlip,
    })
    .unwrap();

    // the CLI surface agrees with the library on both outcomes
    let cli_clean = run(&["grad-check", "--cases", "1000", "--seed", "1"]);
    let cli_mutant = run(&[
        "grad-check",
        "--cases",
        "1000",
        "--seed",
        "1",
        "--mutation",
        "sign-flip",
    ]);

    let passed = clean.passed
        && clean.max_rel_err <= 1e-6
        && elapsed.as_secs() < 60
        && !mutant.passed
        && (mutant.max_rel_err - 2.0).abs() < 0.2
        && cli_clean.status.code() == Some(0)
        && cli_mutant.status.code() == Some(2);
    report(
        "1 (gradient correctness)",
        passed,
        &format!(
            "1000 cases, max rel err {:.3e} in {:.2?}; sign-flip mutant err {:.3e}",
            clean.max_rel_err, elapsed, mutant.max_rel_err
        ),
    );
}

#[test]
fn criterion_2_zero_gamma_degeneracy() {
    let mut identical_on = Vec::new();

    // synthetic tensor
    {
        let (tensor, split) = big_synth();
        let mut config = synth_config(5);
        config.gamma = 0.0;
        config.max_epochs = 12;
        config.patience = 12;
        let (_, plain) =
            solver::train_observed(tensor, split, &config, SolverKind::PlainSgd, |_, _| {})
                .unwrap();
        let (_, momentum) =
            solver::train_observed(tensor, split, &config, SolverKind::MomentumSgd, |_, _| {})
                .unwrap();
        identical_on.push(("synthetic", traces_bit_identical(&plain, &momentum)));
    }

    // real ingested edge list
    {
        let records = ingest::read_edge_file(sample_edges(), ',').unwrap();
        let (tensor, _) =
            ingest::build_tensor(&records, 165, trifact_core::DuplicatePolicy::Mean).unwrap();
        let split = tensor.split((0.7, 0.1, 0.2), 3).unwrap();
        let config = TrainConfig {
            rank: 8,
            gamma: 0.0,
            max_epochs: 30,
            patience: 30,
            seed: 13,
            ..synth_config(13)
        };
        let (_, plain) =
            solver::train_observed(&tensor, &split, &config, SolverKind::PlainSgd, |_, _| {})
                .unwrap();
        let (_, momentum) =
            solver::train_observed(&tensor, &split, &config, SolverKind::MomentumSgd, |_, _| {})
                .unwrap();
        identical_on.push(("ingested", traces_bit_identical(&plain, &momentum)));
    }

    let passed = identical_on.iter().all(|(_, same)| *same);
    report(
        "2 (gamma=0 degeneracy)",
        passed,
        &format!(
            "bit-identical traces on {}",
            identical_on
                .iter()
                .map(|(name, same)| format!("{name}={same}"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    );
}

fn traces_bit_identical(a: &solver::TrainTrace, b: &solver::TrainTrace) -> bool {
    a.epochs.len() == b.epochs.len()
        && a.epochs.iter().zip(&b.epochs).all(|(x, y)| {
            x.epoch == y.epoch
                && x.train_loss.to_bits() == y.train_loss.to_bits()
                && x.val_rmse.to_bits() == y.val_rmse.to_bits()
        })
        && a.best_epoch == b.best_epoch
        && a.best_val_rmse.to_bits() == b.best_val_rmse.to_bits()
}

#[test]
fn criterion_3_factors_stay_positive_without_projection() {
    let (tensor, split) = big_synth();
    let mut config = synth_config(3);
    config.max_epochs = 120;

    let mut all_in_range = true;
    let mut min_parameter = f64::INFINITY;
    let mut epochs_seen = 0usize;
    let (_, trace) = solver::train_observed(tensor, split, &config, SolverKind::Auto, |_, state| {
        epochs_seen += 1;
        for table in [state.y_i(), state.y_j(), state.y_k()] {
            for &y in table.values() {
                min_parameter = min_parameter.min(y);
                let x = sigmoid(y);
                all_in_range &= x > 0.0 && x < 1.0;
            }
        }
    })
    .unwrap();

    // raw parameters roam negative freely because nothing projects them;
    // the mapped factors stay interior anyway
    let passed = all_in_range && min_parameter < 0.0 && epochs_seen == trace.epochs.len();
    report(
        "3 (non-negativity by construction)",
        passed,
        &format!(
            "{epochs_seen} epochs sampled, min raw parameter {min_parameter:.4}, all mapped factors in (0,1): {all_in_range}"
        ),
    );
}

#[test]
fn criterion_4_synthetic_recovery_vs_pilot() {
    let started = Instant::now();
    let (tensor, split) = big_synth();
    // fresh training seed; the pilot's split is kept so the oracle applies
    let config = synth_config(7);
    let (best_state, trace) = solver::train(tensor, split, &config).unwrap();

    let test_entries: Vec<_> = split.test.iter().map(|&i| tensor.entries()[i]).collect();
    let held_out = metrics::rmse(&best_state, &test_entries).unwrap();
    let elapsed = started.elapsed();

    let passed = held_out <= 3.0 * PILOT_TEST_RMSE && elapsed.as_secs() <= 300;
    report(
        "4 (synthetic recovery)",
        passed,
        &format!(
            "held-out rmse {held_out:.6} vs pilot {PILOT_TEST_RMSE:.6} (limit 3x), \
             best epoch {} of {}, {:.2?}",
            trace.best_epoch,
            trace.epochs.len(),
            elapsed
        ),
    );
}

#[test]
fn criterion_5_momentum_speedup() {
    let dir = tempfile::tempdir().unwrap();
    let synth_dir = dir.path().join("synth");
    assert_success(&run(&[
        "synth",
        "--out",
        synth_dir.to_str().unwrap(),
        "--dims",
        "200,200,20",
        "--true-rank",
        "4",
        "--entries",
        "50000",
        "--noise-sd",
        "0",
        "--seed",
        "777",
    ]));
    let cmp_dir = dir.path().join("cmp");
    assert_success(&run(&[
        "compare",
        "--data",
        synth_dir.join("tensor.tsv").to_str().unwrap(),
        "--out",
        cmp_dir.to_str().unwrap(),
        "--rank",
        "4",
        "--eta",
        "0.01",
        "--lambda",
        "1e-5",
        "--gamma",
        "0.9",
        "--epochs",
        "500",
        "--patience",
        "10",
        "--seed",
        "1",
        "--seeds",
        "10",
    ]));

    // pair up epochs_to_best by seed label
    let report_csv = fs::read_to_string(cmp_dir.join("compare.csv")).unwrap();
    let mut momentum = std::collections::HashMap::new();
    let mut plain = std::collections::HashMap::new();
    for line in report_csv.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        let epochs: usize = fields[2].parse().unwrap();
        if let Some(seed) = fields[0].strip_prefix("momentum-seed") {
            momentum.insert(seed.to_string(), epochs);
        } else if let Some(seed) = fields[0].strip_prefix("plain-seed") {
            plain.insert(seed.to_string(), epochs);
        }
    }
    assert_eq!(momentum.len(), 10);
    assert_eq!(plain.len(), 10);
    let wins = momentum
        .iter()
        .filter(|(seed, m)| **m < plain[*seed])
        .count();

    let passed = wins >= 8;
    report(
        "5 (momentum speedup)",
        passed,
        &format!("momentum reached its best epoch strictly sooner in {wins} of 10 paired runs"),
    );
}

/// Best-effort real-data check. Points at a public Bitcoin trust edge
/// list (source,target,rating,timestamp CSV) via TRIFACT_REAL_EDGES or
/// data/bitcoin_trust.csv; skips when neither exists.
#[test]
fn criterion_6_real_data_ballpark() {
    let candidate = std::env::var("TRIFACT_REAL_EDGES")
        .map(PathBuf::from)
        .unwrap_or_else(|_| {
            Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/bitcoin_trust.csv")
        });
    if !candidate.exists() {
        println!(
            "criterion 6 (real-data ballpark): SKIP (no real dataset at {}; set TRIFACT_REAL_EDGES)",
            candidate.display()
        );
        return;
    }

    let records = ingest::read_edge_file(&candidate, ',').unwrap();
    let (tensor, _) =
        ingest::build_tensor(&records, 165, trifact_core::DuplicatePolicy::Mean).unwrap();
    let split = tensor.split((0.7, 0.1, 0.2), 1).unwrap();

    // small validation-driven sweep over step size, penalty and momentum
    let mut best = f64::INFINITY;
    for eta in [0.005, 0.01, 0.02] {
        for lambda in [1e-4, 1e-2] {
            for gamma in [0.0, 0.9] {
                let config = TrainConfig {
                    rank: 20,
                    eta,
                    lambda,
                    gamma,
                    max_epochs: 300,
                    patience: 10,
                    seed: 1,
                    reg_mode: RegMode::Exact,
                    init_scale: 0.1,
                };
                if let Ok((_, trace)) = solver::train(&tensor, &split, &config) {
                    best = best.min(trace.best_val_rmse);
                }
            }
        }
    }

    let passed = (0.40..=0.60).contains(&best);
    report(
        "6 (real-data ballpark)",
        passed,
        &format!("lowest tuned validation rmse {best:.4}, expected within [0.40, 0.60]"),
    );
}

#[test]
fn criterion_7_metric_and_density_worked_cases() {
    // rank 4 at the origin predicts exactly 0.5
    let state =
        trifact_core::FactorState::zeros(TensorShape::new(2, 2, 2).unwrap(), 4).unwrap();
    let entries = [
        trifact_core::Entry::new(0, 0, 0, 1.0),
        trifact_core::Entry::new(1, 1, 1, 0.0),
    ];
    let rmse_exact = metrics::rmse(&state, &entries).unwrap() == 0.5;

    let d1 = 24186.0 / TensorShape::new(7604, 7604, 165).unwrap().volume();
    let d2 = 35592.0 / TensorShape::new(6005, 6005, 165).unwrap().volume();
    let d1_ok = (d1 / 2.53e-6 - 1.0).abs() < 0.01;
    let d2_ok = (d2 / 5.98e-6 - 1.0).abs() < 0.01;

    let passed = rmse_exact && d1_ok && d2_ok;
    report(
        "7 (metric and density checks)",
        passed,
        &format!("rmse worked case exact: {rmse_exact}; densities {d1:.3e} and {d2:.3e} within 1%"),
    );
}

#[test]
fn criterion_8_determinism_and_persistence() {
    let dir = tempfile::tempdir().unwrap();
    let synth_dir = dir.path().join("synth");
    assert_success(&run(&[
        "synth",
        "--out",
        synth_dir.to_str().unwrap(),
        "--dims",
        "40,40,8",
        "--entries",
        "4000",
        "--seed",
        "21",
    ]));
    let tensor_path = synth_dir.join("tensor.tsv");

    let train = |out_dir: &Path| {
        assert_success(&run(&[
            "train",
            "--data",
            tensor_path.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
            "--rank",
            "4",
            "--gamma",
            "0.9",
            "--lambda",
            "1e-5",
            "--epochs",
            "15",
            "--seed",
            "2",
        ]));
    };
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    train(&a);
    train(&b);
    let byte_identical = ["model.tsv", "trace.csv", "runspec.conf"].iter().all(|file| {
        fs::read(a.join(file)).unwrap() == fs::read(b.join(file)).unwrap()
    });

    // save/load keeps every prediction bit-exact
    let (state, _) = trifact_core::model::load_factors(a.join("model.tsv")).unwrap();
    let reloaded_path = dir.path().join("reloaded.tsv");
    trifact_core::model::save_factors(&state, 2, &reloaded_path).unwrap();
    let (reloaded, _) = trifact_core::model::load_factors(&reloaded_path).unwrap();
    let tensor = SparseTensorCOO::read_file(&tensor_path).unwrap();
    let bits_preserved = tensor.entries().iter().take(500).all(|e| {
        state.predict(e.i, e.j, e.k).unwrap().to_bits()
            == reloaded.predict(e.i, e.j, e.k).unwrap().to_bits()
    });

    let passed = byte_identical && bits_preserved;
    report(
        "8 (determinism and persistence)",
        passed,
        &format!("byte-identical reruns: {byte_identical}; predict bits preserved: {bits_preserved}"),
    );
}
