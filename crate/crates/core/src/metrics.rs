//! Accuracy metrics over entry sets, run comparison, and a synthetic
//! ground-truth generator used as a controlled recovery oracle.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::FactorState;
use crate::solver::TrainTrace;
use crate::tensor::{Entry, SparseTensorCOO, TensorShape};

const STREAM_SYNTH: u64 = 3;

/// Root mean squared residual over `entries`.
pub fn rmse(state: &FactorState, entries: &[Entry]) -> Result<f64> {
    if entries.is_empty() {
        return Err(Error::Eval("rmse over an empty entry set".into()));
    }
    let mut sum = 0.0;
    for entry in entries {
        let e = state.residual(entry)?;
        sum += e * e;
    }
    Ok((sum / entries.len() as f64).sqrt())
}

/// Mean absolute residual over `entries`.
pub fn mae(state: &FactorState, entries: &[Entry]) -> Result<f64> {
    if entries.is_empty() {
        return Err(Error::Eval("mae over an empty entry set".into()));
    }
    let mut sum = 0.0;
    for entry in entries {
        sum += state.residual(entry)?.abs();
    }
    Ok(sum / entries.len() as f64)
}

/// Both metrics over one split, labelled for reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub split_name: String,
    pub entry_count: usize,
    pub rmse: f64,
    pub mae: f64,
}

pub fn evaluate(state: &FactorState, entries: &[Entry], split_name: &str) -> Result<EvalReport> {
    Ok(EvalReport {
        split_name: split_name.to_string(),
        entry_count: entries.len(),
        rmse: rmse(state, entries)?,
        mae: mae(state, entries)?,
    })
}

/// One line of a convergence comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub label: String,
    pub best_rmse: f64,
    pub epochs_to_best: usize,
}

/// Summarizes traces into (label, best RMSE, epochs-to-best) rows,
/// ordered by best RMSE ascending; ties keep input order.
pub fn compare_runs(traces: &[(String, TrainTrace)]) -> Vec<ComparisonRow> {
    let mut rows: Vec<ComparisonRow> = traces
        .iter()
        .map(|(label, trace)| ComparisonRow {
            label: label.clone(),
            best_rmse: trace.best_val_rmse,
            epochs_to_best: trace.best_epoch,
        })
        .collect();
    rows.sort_by(|a, b| a.best_rmse.total_cmp(&b.best_rmse));
    rows
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from("label,best_rmse,epochs_to_best\n");
    for row in rows {
        out.push_str(&format!("{},{},{}\n", row.label, row.best_rmse, row.epochs_to_best));
    }
    out
}

pub fn write_comparison_csv(rows: &[ComparisonRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, comparison_csv(rows)).map_err(|e| Error::io(path, e))
}

/// Generates an incomplete tensor from a random ground-truth state.
///
/// Cell values are the truth's predictions divided by `true_rank`, so
/// targets occupy (0, 1) like normalized real data, plus optional
/// Gaussian noise, clamped back to [0, 1]. Returns the tensor and the
/// generating state.
pub fn synth_tensor(
    dims: TensorShape,
    true_rank: usize,
    n_entries: usize,
    noise_sd: f64,
    seed: u64,
) -> Result<(SparseTensorCOO, FactorState)> {
    if noise_sd < 0.0 || !noise_sd.is_finite() {
        return Err(Error::Config(format!(
            "noise standard deviation must be non-negative and finite, got {noise_sd}"
        )));
    }
    let volume = dims.dim_i as u128 * dims.dim_j as u128 * dims.dim_k as u128;
    if n_entries as u128 > volume {
        return Err(Error::Config(format!(
            "{n_entries} entries requested from a tensor of {volume} cells"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_SYNTH);
    let truth = FactorState::random(dims, true_rank, 1.0, &mut rng)?;

    let triples = sample_distinct_triples(dims, n_entries, &mut rng);
    let noise = if noise_sd > 0.0 {
        Some(Normal::new(0.0, noise_sd).map_err(|e| Error::Config(e.to_string()))?)
    } else {
        None
    };

    let mut tensor = SparseTensorCOO::new(dims);
    for (i, j, k) in triples {
        let mut value = truth.predict(i, j, k)? / true_rank as f64;
        if let Some(normal) = &noise {
            value = (value + normal.sample(&mut rng)).clamp(0.0, 1.0);
        }
        tensor.insert_or_merge(Entry::new(i, j, k, value), crate::tensor::DuplicatePolicy::Mean)?;
    }
    Ok((tensor, truth))
}

/// Distinct (i, j, k) triples in draw order. Rejection sampling while the
/// request is sparse relative to the volume, full enumeration otherwise.
fn sample_distinct_triples(
    dims: TensorShape,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<(usize, usize, usize)> {
    let volume = dims.dim_i as u128 * dims.dim_j as u128 * dims.dim_k as u128;
    if (n as u128) * 2 <= volume {
        let mut seen = HashSet::with_capacity(n);
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let triple = (
                rng.random_range(0..dims.dim_i),
                rng.random_range(0..dims.dim_j),
                rng.random_range(0..dims.dim_k),
            );
            if seen.insert(triple) {
                out.push(triple);
            }
        }
        out
    } else {
        use rand::seq::SliceRandom;
        let mut linear: Vec<usize> = (0..volume as usize).collect();
        linear.shuffle(rng);
        linear
            .into_iter()
            .take(n)
            .map(|idx| {
                let k = idx % dims.dim_k;
                let j = (idx / dims.dim_k) % dims.dim_j;
                let i = idx / (dims.dim_k * dims.dim_j);
                (i, j, k)
            })
            .collect()
    }
}
