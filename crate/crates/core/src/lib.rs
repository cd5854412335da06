//! Non-negative latent-factor analysis of sparse 3-way temporal network
//! tensors.
//!
//! A dynamic weighted network is stored as the coordinate list of its
//! observed (source, target, time-slot) cells. The model assigns every
//! source, target and time slot an R-dimensional parameter vector and
//! predicts a cell as the rank-R sum of triple products of the
//! sigmoid-mapped parameters, which keeps all effective factors positive
//! without any constraint handling in the solver. Training runs
//! per-entry stochastic descent, plain or with a decayed velocity, and
//! tracks validation error for early stopping.
//!
//! - [`tensor`]: coordinate storage, duplicate merging, seeded splits
//! - [`model`]: parameter tables, prediction, loss, analytic gradient
//! - [`solver`]: the two update rules and the epoch loop
//! - [`metrics`]: RMSE/MAE, run comparison, synthetic ground truth
//! - [`ingest`]: edge-list parsing, time binning, normalization
//! - [`gradcheck`]: finite-difference validation of the gradient

pub mod error;
pub mod gradcheck;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod solver;
pub mod tensor;

pub use error::{Error, Result};
pub use ingest::{IngestManifest, RawRecord};
pub use metrics::{ComparisonRow, EvalReport};
pub use model::{FactorState, LossBreakdown, PointGradient, RegMode};
pub use solver::{SolverKind, StopReason, TrainConfig, TrainTrace, VelocityState};
pub use tensor::{DuplicatePolicy, Entry, SparseTensorCOO, SplitAssignment, TensorShape};
