//! Finite-difference validation of the analytic per-entry gradient.
//!
//! Each case draws a random state, entry and regularization strength,
//! then compares every analytic gradient component against a central
//! finite difference of the single-entry loss. The harness can negate
//! the analytic side on purpose, which must make the check fail; that
//! guards the harness itself against silently passing everything.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{FactorState, RegMode};
use crate::tensor::{Entry, TensorShape};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// A case passes when its worst component score stays at or below this.
pub const TOLERANCE: f64 = 1e-6;
/// Components smaller than this in magnitude are judged by the absolute
/// deviation instead; folding the floor into the score makes
/// `score <= TOLERANCE` equivalent to `|diff| <= 1e-9` for them.
pub const SCALE_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mutation {
    #[default]
    None,
    /// Negate the analytic gradient before comparing. Self-test of the
    /// harness: the run must then fail with a score near 2.
    SignFlip,
}

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    pub cases: usize,
    pub seed: u64,
    /// Fixed regularization strength for every case; `None` sweeps a mix
    /// of zero and small positive values.
    pub lambda: Option<f64>,
    pub reg_mode: RegMode,
    pub mutation: Mutation,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            cases: 1000,
            seed: 1,
            lambda: None,
            reg_mode: RegMode::Exact,
            mutation: Mutation::None,
        }
    }
}

/// The full input of the worst-scoring component, sufficient to replay
/// the comparison by hand.
#[derive(Debug, Clone)]
pub struct WorstCase {
    pub case_index: usize,
    pub dims: (usize, usize, usize),
    pub rank: usize,
    pub entry: Entry,
    pub lambda: f64,
    /// Parameter rows the entry touches, in role order i, j, k.
    pub y_i_row: Vec<f64>,
    pub y_j_row: Vec<f64>,
    pub y_k_row: Vec<f64>,
    /// Role (0 = i, 1 = j, 2 = k) and rank position of the component.
    pub role: usize,
    pub component: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub cases: usize,
    pub components: usize,
    pub max_rel_err: f64,
    pub passed: bool,
    pub worst: Option<WorstCase>,
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "gradient check: {} cases, {} components, max relative error {:.3e} -> {}",
            self.cases,
            self.components,
            self.max_rel_err,
            if self.passed { "pass" } else { "FAIL" }
        )?;
        if let Some(w) = &self.worst
            && !self.passed
        {
            writeln!(f, "worst case #{}:", w.case_index)?;
            writeln!(f, "  dims ({}, {}, {}), rank {}", w.dims.0, w.dims.1, w.dims.2, w.rank)?;
            writeln!(
                f,
                "  entry ({}, {}, {}) value {:.17}, lambda {:.17}",
                w.entry.i, w.entry.j, w.entry.k, w.entry.value, w.lambda
            )?;
            writeln!(f, "  y_i row {:?}", w.y_i_row)?;
            writeln!(f, "  y_j row {:?}", w.y_j_row)?;
            writeln!(f, "  y_k row {:?}", w.y_k_row)?;
            let role = ["i", "j", "k"][w.role];
            writeln!(
                f,
                "  component ({role}, r={}): analytic {:.17e}, finite-diff {:.17e}, score {:.3e}",
                w.component, w.analytic, w.numeric, w.score
            )?;
        }
        Ok(())
    }
}

/// Runs the sweep and reports the worst component over all cases.
pub fn check_gradients(config: &GradCheckConfig) -> Result<GradCheckReport> {
    if config.cases == 0 {
        return Err(Error::Config("gradient check needs at least one case".into()));
    }
    if let Some(lambda) = config.lambda
        && (lambda < 0.0 || !lambda.is_finite())
    {
        return Err(Error::Config(format!(
            "lambda must be non-negative and finite, got {lambda}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(4);

    let mut max_score = 0.0f64;
    let mut worst: Option<WorstCase> = None;
    let mut components = 0usize;

    for case_index in 0..config.cases {
        let dims = (
            rng.random_range(2..=6),
            rng.random_range(2..=6),
            rng.random_range(2..=6),
        );
        let rank = rng.random_range(1..=5);
        let shape = TensorShape::new(dims.0, dims.1, dims.2)?;
        let mut state = FactorState::random(shape, rank, 2.0, &mut rng)?;
        let entry = Entry::new(
            rng.random_range(0..dims.0),
            rng.random_range(0..dims.1),
            rng.random_range(0..dims.2),
            rng.random_range(0.0..1.0),
        );
        let lambda = match config.lambda {
            Some(fixed) => fixed,
            // quarter of the sweep exercises the penalty-free path
            None if case_index % 4 == 0 => 0.0,
            None => rng.random_range(0.0..0.1),
        };

        let grad = state.point_gradient(&entry, lambda, config.reg_mode)?;
        let analytic_rows = [&grad.grad_y_i, &grad.grad_y_j, &grad.grad_y_k];
        let rows = [entry.i, entry.j, entry.k];
        type RowAccess = fn(&mut FactorState) -> &mut crate::model::FactorTable;
        let tables: [RowAccess; 3] = [
            FactorState::y_i_mut,
            FactorState::y_j_mut,
            FactorState::y_k_mut,
        ];

        for role in 0..3 {
            for (r, &component) in analytic_rows[role].iter().enumerate() {
                let analytic = if config.mutation == Mutation::SignFlip {
                    -component
                } else {
                    component
                };

                let row = rows[role];
                let original = tables[role](&mut state).row(row)[r];
                tables[role](&mut state).row_mut(row)[r] = original + FD_STEP;
                let upper = state.loss(&[entry], lambda)?.total;
                tables[role](&mut state).row_mut(row)[r] = original - FD_STEP;
                let lower = state.loss(&[entry], lambda)?.total;
                tables[role](&mut state).row_mut(row)[r] = original;
                let numeric = (upper - lower) / (2.0 * FD_STEP);

                let scale = analytic.abs().max(numeric.abs()).max(SCALE_FLOOR);
                let score = (analytic - numeric).abs() / scale;
                components += 1;
                if score > max_score {
                    max_score = score;
                    worst = Some(WorstCase {
                        case_index,
                        dims,
                        rank,
                        entry,
                        lambda,
                        y_i_row: state.y_i().row(entry.i).to_vec(),
                        y_j_row: state.y_j().row(entry.j).to_vec(),
                        y_k_row: state.y_k().row(entry.k).to_vec(),
                        role,
                        component: r,
                        analytic,
                        numeric,
                        score,
                    });
                }
            }
        }
    }

    Ok(GradCheckReport {
        cases: config.cases,
        components,
        max_rel_err: max_score,
        passed: max_score <= TOLERANCE,
        worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn correct_gradient_passes() {
        let report = check_gradients(&GradCheckConfig {
            cases: 200,
            ..Default::default()
        })
        .unwrap();
        assert!(report.passed, "max error {}", report.max_rel_err);
    }

    #[test]
    fn sign_flip_fails_loudly() {
        let report = check_gradients(&GradCheckConfig {
            cases: 50,
            mutation: Mutation::SignFlip,
            ..Default::default()
        })
        .unwrap();
        assert!(!report.passed);
        // negating the gradient doubles the deviation relative to its size
        assert!((report.max_rel_err - 2.0).abs() < 0.2);
        let worst = report.worst.unwrap();
        assert_eq!(worst.y_i_row.len(), worst.rank);
    }

    #[test]
    fn zero_lambda_sweep_passes() {
        let report = check_gradients(&GradCheckConfig {
            cases: 200,
            lambda: Some(0.0),
            ..Default::default()
        })
        .unwrap();
        assert!(report.passed);
    }

    #[test]
    fn raw_y_mode_is_consistent_with_its_own_objective_only_at_zero_lambda() {
        // with lambda = 0 both reg modes are the exact gradient
        let report = check_gradients(&GradCheckConfig {
            cases: 100,
            lambda: Some(0.0),
            reg_mode: RegMode::RawY,
            ..Default::default()
        })
        .unwrap();
        assert!(report.passed);
    }
}
