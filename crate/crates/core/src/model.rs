//! The latent-factor model.
//!
//! Decision parameters are unconstrained real tables; every factor the
//! model actually uses is the sigmoid image of a parameter, so factors
//! are positive for every reachable state and no projection is ever
//! needed. A cell is predicted as the rank-R sum of triple products of
//! mapped factors, and the training objective is the half squared error
//! plus a Tikhonov penalty on the mapped factors, accumulated per
//! observed cell.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Entry, TensorShape};

/// Logistic function, evaluated in the numerically stable branch form.
pub fn sigmoid(alpha: f64) -> f64 {
    if alpha >= 0.0 {
        1.0 / (1.0 + (-alpha).exp())
    } else {
        let e = alpha.exp();
        e / (1.0 + e)
    }
}

/// Derivative of [`sigmoid`]: `s * (1 - s)`, in (0, 0.25].
pub fn sigmoid_derivative(alpha: f64) -> f64 {
    let s = sigmoid(alpha);
    s * (1.0 - s)
}

/// Which quantity the Tikhonov gradient penalizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RegMode {
    /// Exact descent gradient of the regularized loss: the penalty term
    /// differentiates to `lambda * sigmoid(y) * sigmoid'(y)`.
    #[default]
    Exact,
    /// Compatibility mode that penalizes the raw parameter instead,
    /// using `lambda * y * sigmoid'(y)`. Not the gradient of the loss;
    /// kept so runs against legacy update rules stay comparable.
    RawY,
}

impl FromStr for RegMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(RegMode::Exact),
            "raw-y" => Ok(RegMode::RawY),
            other => Err(Error::Config(format!(
                "unknown reg mode {other:?} (expected \"exact\" or \"raw-y\")"
            ))),
        }
    }
}

impl fmt::Display for RegMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegMode::Exact => f.write_str("exact"),
            RegMode::RawY => f.write_str("raw-y"),
        }
    }
}

/// Row-major `rows x rank` table of real parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorTable {
    rows: usize,
    rank: usize,
    data: Vec<f64>,
}

impl FactorTable {
    pub fn zeros(rows: usize, rank: usize) -> Self {
        FactorTable {
            rows,
            rank,
            data: vec![0.0; rows * rank],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>, rank: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * rank);
        for row in &rows {
            if row.len() != rank {
                return Err(Error::Config(format!(
                    "factor row has {} values, expected rank {rank}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(FactorTable {
            rows: rows.len(),
            rank,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.rank..(r + 1) * self.rank]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.rank..(r + 1) * self.rank]
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn fill_uniform(&mut self, scale: f64, rng: &mut impl Rng) {
        for v in &mut self.data {
            *v = rng.random_range(-scale..=scale);
        }
    }
}

/// The three parameter tables of the model, plus the rank they share.
///
/// Mutated only by the solver; everything else reads a frozen state.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorState {
    rank: usize,
    y_i: FactorTable,
    y_j: FactorTable,
    y_k: FactorTable,
}

impl FactorState {
    pub fn zeros(shape: TensorShape, rank: usize) -> Result<Self> {
        if rank == 0 {
            return Err(Error::Config("rank must be at least 1".into()));
        }
        Ok(FactorState {
            rank,
            y_i: FactorTable::zeros(shape.dim_i, rank),
            y_j: FactorTable::zeros(shape.dim_j, rank),
            y_k: FactorTable::zeros(shape.dim_k, rank),
        })
    }

    /// Independent uniform draws on `[-scale, scale]` for every parameter.
    pub fn random(shape: TensorShape, rank: usize, scale: f64, rng: &mut impl Rng) -> Result<Self> {
        if scale <= 0.0 || !scale.is_finite() {
            return Err(Error::Config(format!(
                "init scale must be positive, got {scale}"
            )));
        }
        let mut state = Self::zeros(shape, rank)?;
        state.y_i.fill_uniform(scale, rng);
        state.y_j.fill_uniform(scale, rng);
        state.y_k.fill_uniform(scale, rng);
        Ok(state)
    }

    pub fn from_tables(y_i: FactorTable, y_j: FactorTable, y_k: FactorTable) -> Result<Self> {
        let rank = y_i.rank();
        if y_j.rank() != rank || y_k.rank() != rank {
            return Err(Error::Config("factor tables disagree on rank".into()));
        }
        if rank == 0 {
            return Err(Error::Config("rank must be at least 1".into()));
        }
        Ok(FactorState { rank, y_i, y_j, y_k })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn y_i(&self) -> &FactorTable {
        &self.y_i
    }

    pub fn y_j(&self) -> &FactorTable {
        &self.y_j
    }

    pub fn y_k(&self) -> &FactorTable {
        &self.y_k
    }

    pub(crate) fn y_i_mut(&mut self) -> &mut FactorTable {
        &mut self.y_i
    }

    pub(crate) fn y_j_mut(&mut self) -> &mut FactorTable {
        &mut self.y_j
    }

    pub(crate) fn y_k_mut(&mut self) -> &mut FactorTable {
        &mut self.y_k
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.y_i.rows(), self.y_j.rows(), self.y_k.rows())
    }

    pub fn matches_shape(&self, shape: TensorShape) -> bool {
        self.dims() == (shape.dim_i, shape.dim_j, shape.dim_k)
    }

    fn check_indices(&self, i: usize, j: usize, k: usize) -> Result<()> {
        let (di, dj, dk) = self.dims();
        if i < di && j < dj && k < dk {
            Ok(())
        } else {
            Err(Error::Bounds {
                i,
                j,
                k,
                dim_i: di,
                dim_j: dj,
                dim_k: dk,
            })
        }
    }

    /// Model estimate for cell (i, j, k); lies in (0, rank).
    pub fn predict(&self, i: usize, j: usize, k: usize) -> Result<f64> {
        self.check_indices(i, j, k)?;
        Ok(self.predict_raw(i, j, k))
    }

    pub(crate) fn predict_raw(&self, i: usize, j: usize, k: usize) -> f64 {
        let yi = self.y_i.row(i);
        let yj = self.y_j.row(j);
        let yk = self.y_k.row(k);
        let mut sum = 0.0;
        for r in 0..self.rank {
            sum += sigmoid(yi[r]) * sigmoid(yj[r]) * sigmoid(yk[r]);
        }
        sum
    }

    /// Observed value minus prediction.
    pub fn residual(&self, entry: &Entry) -> Result<f64> {
        Ok(entry.value - self.predict(entry.i, entry.j, entry.k)?)
    }

    /// Regularized loss over `entries`; the penalty is accumulated once
    /// per observed cell, over the 3R factors that cell touches.
    pub fn loss(&self, entries: &[Entry], lambda: f64) -> Result<LossBreakdown> {
        if lambda < 0.0 {
            return Err(Error::Config(format!(
                "lambda must be non-negative, got {lambda}"
            )));
        }
        let mut squared = 0.0;
        let mut penalty = 0.0;
        for entry in entries {
            self.check_indices(entry.i, entry.j, entry.k)?;
            let yi = self.y_i.row(entry.i);
            let yj = self.y_j.row(entry.j);
            let yk = self.y_k.row(entry.k);
            let mut pred = 0.0;
            for r in 0..self.rank {
                let (pi, pj, pk) = (sigmoid(yi[r]), sigmoid(yj[r]), sigmoid(yk[r]));
                pred += pi * pj * pk;
                penalty += pi * pi + pj * pj + pk * pk;
            }
            let e = entry.value - pred;
            squared += e * e;
        }
        let data_term = 0.5 * squared;
        let reg_term = 0.5 * lambda * penalty;
        Ok(LossBreakdown {
            data_term,
            reg_term,
            total: data_term + reg_term,
        })
    }

    /// Exact gradient of the single-entry loss with respect to the 3R
    /// parameters the entry touches.
    pub fn point_gradient(
        &self,
        entry: &Entry,
        lambda: f64,
        reg_mode: RegMode,
    ) -> Result<PointGradient> {
        if lambda < 0.0 {
            return Err(Error::Config(format!(
                "lambda must be non-negative, got {lambda}"
            )));
        }
        self.check_indices(entry.i, entry.j, entry.k)?;
        let mut grad = PointGradient {
            grad_y_i: vec![0.0; self.rank],
            grad_y_j: vec![0.0; self.rank],
            grad_y_k: vec![0.0; self.rank],
        };
        entry_gradient(
            self.y_i.row(entry.i),
            self.y_j.row(entry.j),
            self.y_k.row(entry.k),
            entry.value,
            lambda,
            reg_mode,
            &mut grad.grad_y_i,
            &mut grad.grad_y_j,
            &mut grad.grad_y_k,
        );
        Ok(grad)
    }
}

/// Loss split into its squared-error and penalty parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub data_term: f64,
    pub reg_term: f64,
    pub total: f64,
}

/// Single-entry gradient, one component per touched parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct PointGradient {
    pub grad_y_i: Vec<f64>,
    pub grad_y_j: Vec<f64>,
    pub grad_y_k: Vec<f64>,
}

/// Shared inner routine for the single-entry gradient. All sigmoids are
/// taken from the rows as given, so the three outputs describe one
/// simultaneous update. Buffers must have length `rank`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn entry_gradient(
    yi: &[f64],
    yj: &[f64],
    yk: &[f64],
    value: f64,
    lambda: f64,
    reg_mode: RegMode,
    out_i: &mut [f64],
    out_j: &mut [f64],
    out_k: &mut [f64],
) {
    let rank = yi.len();
    let mut pred = 0.0;
    for r in 0..rank {
        let (pi, pj, pk) = (sigmoid(yi[r]), sigmoid(yj[r]), sigmoid(yk[r]));
        out_i[r] = pi;
        out_j[r] = pj;
        out_k[r] = pk;
        pred += pi * pj * pk;
    }
    let e = value - pred;
    for r in 0..rank {
        let (pi, pj, pk) = (out_i[r], out_j[r], out_k[r]);
        let (reg_i, reg_j, reg_k) = match reg_mode {
            RegMode::Exact => (lambda * pi, lambda * pj, lambda * pk),
            RegMode::RawY => (lambda * yi[r], lambda * yj[r], lambda * yk[r]),
        };
        out_i[r] = pi * (1.0 - pi) * (-e * pj * pk + reg_i);
        out_j[r] = pj * (1.0 - pj) * (-e * pi * pk + reg_j);
        out_k[r] = pk * (1.0 - pk) * (-e * pi * pj + reg_k);
    }
}

const FACTORS_HEADER: &str = "#factors";

/// Writes the model as text: a header carrying shape, rank and seed,
/// then the parameter rows of the three tables in order.
pub fn save_factors(state: &FactorState, seed: u64, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, factors_to_text(state, seed)).map_err(|e| Error::io(path, e))
}

pub fn load_factors(path: impl AsRef<Path>) -> Result<(FactorState, u64)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    factors_from_text(&text)
}

pub fn factors_to_text(state: &FactorState, seed: u64) -> String {
    let (di, dj, dk) = state.dims();
    let mut out = String::new();
    out.push_str(&format!(
        "{FACTORS_HEADER}\t{di}\t{dj}\t{dk}\t{}\t{seed}\n",
        state.rank()
    ));
    for table in [state.y_i(), state.y_j(), state.y_k()] {
        for r in 0..table.rows() {
            let row: Vec<String> = table.row(r).iter().map(|v| format!("{v:.16e}")).collect();
            out.push_str(&row.join("\t"));
            out.push('\n');
        }
    }
    out
}

pub fn factors_from_text(text: &str) -> Result<(FactorState, u64)> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
        line: 1,
        message: "empty factor file".into(),
    })?;
    let fields: Vec<&str> = header.trim().split('\t').collect();
    if fields.len() != 6 || fields[0] != FACTORS_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: "expected header \"#factors<TAB>dim_i<TAB>dim_j<TAB>dim_k<TAB>R<TAB>seed\""
                .into(),
        });
    }
    let num = |s: &str| {
        s.parse::<usize>().map_err(|_| Error::Parse {
            line: 1,
            message: format!("invalid header field {s:?}"),
        })
    };
    let (di, dj, dk, rank) = (num(fields[1])?, num(fields[2])?, num(fields[3])?, num(fields[4])?);
    let seed = fields[5].parse::<u64>().map_err(|_| Error::Parse {
        line: 1,
        message: format!("invalid seed {:?}", fields[5]),
    })?;
    if rank == 0 {
        return Err(Error::Parse {
            line: 1,
            message: "rank must be at least 1".into(),
        });
    }

    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(di + dj + dk);
    for (idx, raw) in lines {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        let row: Vec<f64> = trimmed
            .split('\t')
            .map(|s| {
                s.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    message: format!("invalid parameter value {s:?}"),
                })
            })
            .collect::<Result<_>>()?;
        if row.len() != rank {
            return Err(Error::Parse {
                line,
                message: format!("expected {rank} values per row, got {}", row.len()),
            });
        }
        rows.push(row);
    }
    if rows.len() != di + dj + dk {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "header promises {} parameter rows, file has {}",
                di + dj + dk,
                rows.len()
            ),
        });
    }
    let rest = rows.split_off(di);
    let (j_rows, k_rows) = {
        let mut rest = rest;
        let k_rows = rest.split_off(dj);
        (rest, k_rows)
    };
    let state = FactorState::from_tables(
        FactorTable::from_rows(rows, rank)?,
        FactorTable::from_rows(j_rows, rank)?,
        FactorTable::from_rows(k_rows, rank)?,
    )?;
    Ok((state, seed))
}
