//! Per-entry stochastic training of a [`FactorState`].
//!
//! Two update rules share one gradient routine: plain descent subtracts
//! the scaled gradient directly, while the momentum rule first folds it
//! into a decayed velocity and subtracts that. Velocities start at zero,
//! so the first touch of every parameter is identical under both rules,
//! and a zero momentum constant makes the two rules agree bit for bit on
//! every step.
//!
//! An epoch is one pass over the training entries in a freshly seeded
//! random order. Validation error is measured after every epoch, the
//! best-validation state is snapshotted, and training stops on patience
//! or on the epoch cap.

use std::fmt;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::metrics;
use crate::model::{FactorState, FactorTable, RegMode, entry_gradient};
use crate::tensor::{Entry, SparseTensorCOO, SplitAssignment, TensorShape};

const STREAM_INIT: u64 = 2;
/// Epoch shuffle streams live far above the small named streams.
const STREAM_EPOCH_BASE: u64 = 1 << 32;

/// Threshold below which a validation improvement does not reset patience.
pub const IMPROVEMENT_THRESHOLD: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub rank: usize,
    /// Step size.
    pub eta: f64,
    /// Tikhonov regularization strength.
    pub lambda: f64,
    /// Momentum constant in [0, 1); 0 selects the plain-descent path.
    pub gamma: f64,
    pub max_epochs: usize,
    /// Epochs without qualifying validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub reg_mode: RegMode,
    /// Half-width of the uniform initialization interval.
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            rank: 20,
            eta: 0.01,
            lambda: 0.01,
            gamma: 0.9,
            max_epochs: 1000,
            patience: 10,
            seed: 0,
            reg_mode: RegMode::Exact,
            init_scale: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::Config("rank must be at least 1".into()));
        }
        if self.eta <= 0.0 || !self.eta.is_finite() {
            return Err(Error::Config(format!(
                "step size eta must be positive and finite, got {}",
                self.eta
            )));
        }
        if self.lambda < 0.0 || !self.lambda.is_finite() {
            return Err(Error::Config(format!(
                "lambda must be non-negative and finite, got {}",
                self.lambda
            )));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!(
                "momentum gamma must lie in [0, 1), got {}",
                self.gamma
            )));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max epochs must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if self.init_scale <= 0.0 || !self.init_scale.is_finite() {
            return Err(Error::Config(format!(
                "init scale must be positive and finite, got {}",
                self.init_scale
            )));
        }
        Ok(())
    }
}

/// Momentum velocities, one per model parameter. Zero before epoch 1.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityState {
    v_i: FactorTable,
    v_j: FactorTable,
    v_k: FactorTable,
}

impl VelocityState {
    pub fn zeros_like(state: &FactorState) -> Self {
        let (di, dj, dk) = state.dims();
        VelocityState {
            v_i: FactorTable::zeros(di, state.rank()),
            v_j: FactorTable::zeros(dj, state.rank()),
            v_k: FactorTable::zeros(dk, state.rank()),
        }
    }

    pub fn v_i(&self) -> &FactorTable {
        &self.v_i
    }

    pub fn v_j(&self) -> &FactorTable {
        &self.v_j
    }

    pub fn v_k(&self) -> &FactorTable {
        &self.v_k
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_rmse: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Patience,
    MaxEpochs,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StopReason::Patience => f.write_str("patience"),
            StopReason::MaxEpochs => f.write_str("max_epochs"),
        }
    }
}

/// Full record of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainTrace {
    pub epochs: Vec<EpochRecord>,
    /// First epoch attaining the minimum validation error (1-based).
    pub best_epoch: usize,
    pub best_val_rmse: f64,
    pub stopped: StopReason,
}

impl TrainTrace {
    /// CSV form: `epoch,train_loss,val_rmse` rows and a `#best` footer.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_rmse\n");
        for rec in &self.epochs {
            out.push_str(&format!("{},{},{}\n", rec.epoch, rec.train_loss, rec.val_rmse));
        }
        out.push_str(&format!("#best,{},{}\n", self.best_epoch, self.best_val_rmse));
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Which update rule the epoch loop runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolverKind {
    /// Momentum when `gamma > 0`, plain descent otherwise.
    #[default]
    Auto,
    /// Plain per-entry descent; never reads `gamma` or a velocity.
    PlainSgd,
    /// The velocity recurrence, whatever `gamma` is.
    MomentumSgd,
}

/// Seeded uniform initialization on `[-init_scale, init_scale]`.
pub fn init_factors(shape: TensorShape, config: &TrainConfig) -> Result<FactorState> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(STREAM_INIT);
    FactorState::random(shape, config.rank, config.init_scale, &mut rng)
}

/// One plain-descent update on a single entry. The three touched rows
/// are rewritten from gradients evaluated at the pre-step state.
pub fn sgd_step(state: &mut FactorState, entry: &Entry, config: &TrainConfig) -> Result<()> {
    let rank = state.rank();
    let mut bufs = StepBuffers::new(rank);
    step_entry(state, None, entry, config, &mut bufs)
        .then_some(())
        .ok_or(Error::Divergence {
            i: entry.i,
            j: entry.j,
            k: entry.k,
            epoch: None,
        })
}

/// One momentum update on a single entry: fold the gradient into the
/// decayed velocity, then subtract the velocity from the parameters.
pub fn msgd_step(
    state: &mut FactorState,
    velocity: &mut VelocityState,
    entry: &Entry,
    config: &TrainConfig,
) -> Result<()> {
    let rank = state.rank();
    let mut bufs = StepBuffers::new(rank);
    step_entry(state, Some(velocity), entry, config, &mut bufs)
        .then_some(())
        .ok_or(Error::Divergence {
            i: entry.i,
            j: entry.j,
            k: entry.k,
            epoch: None,
        })
}

struct StepBuffers {
    g_i: Vec<f64>,
    g_j: Vec<f64>,
    g_k: Vec<f64>,
}

impl StepBuffers {
    fn new(rank: usize) -> Self {
        StepBuffers {
            g_i: vec![0.0; rank],
            g_j: vec![0.0; rank],
            g_k: vec![0.0; rank],
        }
    }
}

/// Shared inner step. Returns false when any touched parameter or
/// velocity came out non-finite.
fn step_entry(
    state: &mut FactorState,
    velocity: Option<&mut VelocityState>,
    entry: &Entry,
    config: &TrainConfig,
    bufs: &mut StepBuffers,
) -> bool {
    entry_gradient(
        state.y_i().row(entry.i),
        state.y_j().row(entry.j),
        state.y_k().row(entry.k),
        entry.value,
        config.lambda,
        config.reg_mode,
        &mut bufs.g_i,
        &mut bufs.g_j,
        &mut bufs.g_k,
    );
    let eta = config.eta;
    let mut finite = true;
    match velocity {
        None => {
            let mut apply = |row: &mut [f64], grad: &[f64]| {
                for (y, g) in row.iter_mut().zip(grad) {
                    *y -= eta * g;
                    finite &= y.is_finite();
                }
            };
            apply(state.y_i_mut().row_mut(entry.i), &bufs.g_i);
            apply(state.y_j_mut().row_mut(entry.j), &bufs.g_j);
            apply(state.y_k_mut().row_mut(entry.k), &bufs.g_k);
        }
        Some(vel) => {
            let gamma = config.gamma;
            let mut apply = |row: &mut [f64], v_row: &mut [f64], grad: &[f64]| {
                for ((y, v), g) in row.iter_mut().zip(v_row).zip(grad) {
                    *v = gamma * *v + eta * g;
                    *y -= *v;
                    finite &= y.is_finite() && v.is_finite();
                }
            };
            apply(
                state.y_i_mut().row_mut(entry.i),
                vel.v_i.row_mut(entry.i),
                &bufs.g_i,
            );
            apply(
                state.y_j_mut().row_mut(entry.j),
                vel.v_j.row_mut(entry.j),
                &bufs.g_j,
            );
            apply(
                state.y_k_mut().row_mut(entry.k),
                vel.v_k.row_mut(entry.k),
                &bufs.g_k,
            );
        }
    }
    finite
}

/// Trains on the split's training block and returns the state snapshot
/// from the best-validation epoch together with the full trace.
pub fn train(
    tensor: &SparseTensorCOO,
    split: &SplitAssignment,
    config: &TrainConfig,
) -> Result<(FactorState, TrainTrace)> {
    train_observed(tensor, split, config, SolverKind::Auto, |_, _| {})
}

/// [`train`] with an explicit update rule and a per-epoch observer
/// called on the freshly updated state.
pub fn train_observed(
    tensor: &SparseTensorCOO,
    split: &SplitAssignment,
    config: &TrainConfig,
    kind: SolverKind,
    mut observer: impl FnMut(&EpochRecord, &FactorState),
) -> Result<(FactorState, TrainTrace)> {
    config.validate()?;
    if split.train.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    if split.validation.is_empty() {
        return Err(Error::Config("validation split is empty".into()));
    }
    let gather = |idxs: &[usize]| -> Result<Vec<Entry>> {
        idxs.iter()
            .map(|&idx| {
                tensor.entries().get(idx).copied().ok_or_else(|| {
                    Error::Config(format!(
                        "split references entry {idx}, tensor has {}",
                        tensor.len()
                    ))
                })
            })
            .collect()
    };
    let mut train_set = gather(&split.train)?;
    let val_set = gather(&split.validation)?;

    let use_momentum = match kind {
        SolverKind::Auto => config.gamma > 0.0,
        SolverKind::PlainSgd => false,
        SolverKind::MomentumSgd => true,
    };

    let mut state = init_factors(tensor.shape(), config)?;
    let mut velocity = use_momentum.then(|| VelocityState::zeros_like(&state));
    let mut bufs = StepBuffers::new(config.rank);

    let mut records = Vec::new();
    let mut best_state = state.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut patience_anchor = f64::INFINITY;
    let mut stalled = 0usize;
    let mut stopped = StopReason::MaxEpochs;

    for epoch in 1..=config.max_epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(STREAM_EPOCH_BASE + epoch as u64);
        train_set.shuffle(&mut rng);

        for entry in &train_set {
            if !step_entry(&mut state, velocity.as_mut(), entry, config, &mut bufs) {
                return Err(Error::Divergence {
                    i: entry.i,
                    j: entry.j,
                    k: entry.k,
                    epoch: Some(epoch),
                });
            }
        }

        let train_loss = state.loss(&train_set, config.lambda)?.total;
        let val_rmse = metrics::rmse(&state, &val_set)?;
        let record = EpochRecord {
            epoch,
            train_loss,
            val_rmse,
        };
        records.push(record);
        observer(&record, &state);

        if val_rmse < best_val {
            best_val = val_rmse;
            best_epoch = epoch;
            best_state = state.clone();
        }
        if val_rmse < patience_anchor - IMPROVEMENT_THRESHOLD {
            patience_anchor = val_rmse;
            stalled = 0;
        } else {
            stalled += 1;
            if stalled >= config.patience {
                stopped = StopReason::Patience;
                break;
            }
        }
    }

    let trace = TrainTrace {
        epochs: records,
        best_epoch,
        best_val_rmse: best_val,
        stopped,
    };
    Ok((best_state, trace))
}
