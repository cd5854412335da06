//! Coordinate-format storage for incomplete 3-way tensors.
//!
//! A dynamic network is kept as the set of its known cells only: each
//! [`Entry`] is an `(i, j, k, value)` quadruple indexing source entity,
//! target entity and time slot. The unknown complement is implicit. The
//! module also owns the seeded train/validation/test split and the
//! line-oriented on-disk form.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Stream tag so split shuffles never share a keystream with other
/// consumers of the same user-facing seed.
const STREAM_SPLIT: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorShape {
    pub dim_i: usize,
    pub dim_j: usize,
    pub dim_k: usize,
}

impl TensorShape {
    pub fn new(dim_i: usize, dim_j: usize, dim_k: usize) -> Result<Self> {
        if dim_i == 0 || dim_j == 0 || dim_k == 0 {
            return Err(Error::Config(format!(
                "tensor dimensions must all be at least 1, got ({dim_i}, {dim_j}, {dim_k})"
            )));
        }
        Ok(TensorShape { dim_i, dim_j, dim_k })
    }

    /// Total number of cells, as a float so huge shapes cannot overflow.
    pub fn volume(&self) -> f64 {
        self.dim_i as f64 * self.dim_j as f64 * self.dim_k as f64
    }

    pub fn contains(&self, i: usize, j: usize, k: usize) -> bool {
        i < self.dim_i && j < self.dim_j && k < self.dim_k
    }

    pub(crate) fn bounds_error(&self, i: usize, j: usize, k: usize) -> Error {
        Error::Bounds {
            i,
            j,
            k,
            dim_i: self.dim_i,
            dim_j: self.dim_j,
            dim_k: self.dim_k,
        }
    }
}

/// One known cell of the tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub value: f64,
}

impl Entry {
    pub fn new(i: usize, j: usize, k: usize, value: f64) -> Self {
        Entry { i, j, k, value }
    }
}

/// How to resolve two observations landing on the same (i, j, k) cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DuplicatePolicy {
    /// Arithmetic mean of every observation merged into the cell. Order
    /// independent, so ingestion stays deterministic under reordering.
    #[default]
    Mean,
    /// Keep only the most recently inserted observation.
    LastWins,
}

impl FromStr for DuplicatePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(DuplicatePolicy::Mean),
            "last-wins" => Ok(DuplicatePolicy::LastWins),
            other => Err(Error::Config(format!(
                "unknown duplicate policy {other:?} (expected \"mean\" or \"last-wins\")"
            ))),
        }
    }
}

impl fmt::Display for DuplicatePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DuplicatePolicy::Mean => f.write_str("mean"),
            DuplicatePolicy::LastWins => f.write_str("last-wins"),
        }
    }
}

/// Sparse tensor in coordinate form: the known-cell set plus its shape.
///
/// Entries keep insertion order; a triple index enforces the
/// no-duplicate invariant. Read-only after construction, single writer
/// during it.
#[derive(Debug, Clone)]
pub struct SparseTensorCOO {
    shape: TensorShape,
    entries: Vec<Entry>,
    /// Observations folded into each entry so far; lets the mean policy
    /// compute the true mean of all observations in any arrival order.
    merge_counts: Vec<u32>,
    index: HashMap<(usize, usize, usize), usize>,
}

impl SparseTensorCOO {
    pub fn new(shape: TensorShape) -> Self {
        SparseTensorCOO {
            shape,
            entries: Vec::new(),
            merge_counts: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// Builds a tensor from pre-collected entries, rejecting out-of-range
    /// indices and duplicate triples.
    pub fn from_entries(shape: TensorShape, entries: Vec<Entry>) -> Result<Self> {
        let mut tensor = SparseTensorCOO::new(shape);
        tensor.entries.reserve(entries.len());
        for entry in entries {
            if !shape.contains(entry.i, entry.j, entry.k) {
                return Err(shape.bounds_error(entry.i, entry.j, entry.k));
            }
            let key = (entry.i, entry.j, entry.k);
            if tensor.index.insert(key, tensor.entries.len()).is_some() {
                return Err(Error::Config(format!(
                    "duplicate entry at ({}, {}, {})",
                    entry.i, entry.j, entry.k
                )));
            }
            tensor.entries.push(entry);
            tensor.merge_counts.push(1);
        }
        Ok(tensor)
    }

    pub fn shape(&self) -> TensorShape {
        self.shape
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> Option<f64> {
        self.index.get(&(i, j, k)).map(|&pos| self.entries[pos].value)
    }

    /// Fraction of cells that are known.
    pub fn density(&self) -> f64 {
        self.entries.len() as f64 / self.shape.volume()
    }

    /// Appends `candidate`, or merges it into an existing cell per `policy`.
    pub fn insert_or_merge(&mut self, candidate: Entry, policy: DuplicatePolicy) -> Result<()> {
        if !self.shape.contains(candidate.i, candidate.j, candidate.k) {
            return Err(self.shape.bounds_error(candidate.i, candidate.j, candidate.k));
        }
        let key = (candidate.i, candidate.j, candidate.k);
        match self.index.get(&key) {
            None => {
                self.index.insert(key, self.entries.len());
                self.entries.push(candidate);
                self.merge_counts.push(1);
            }
            Some(&pos) => match policy {
                DuplicatePolicy::Mean => {
                    let count = self.merge_counts[pos];
                    let old = self.entries[pos].value;
                    self.entries[pos].value =
                        (old * count as f64 + candidate.value) / (count as f64 + 1.0);
                    self.merge_counts[pos] = count + 1;
                }
                DuplicatePolicy::LastWins => {
                    self.entries[pos].value = candidate.value;
                }
            },
        }
        Ok(())
    }

    /// Deterministically partitions entry indices into train/validation/test.
    ///
    /// Indices are shuffled by a seeded permutation and cut into contiguous
    /// blocks whose sizes follow `ratios` under largest-remainder rounding,
    /// so they always sum to the entry count.
    pub fn split(&self, ratios: (f64, f64, f64), seed: u64) -> Result<SplitAssignment> {
        let sizes = split_sizes(self.len(), ratios)?;

        let mut order: Vec<usize> = (0..self.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(STREAM_SPLIT);
        order.shuffle(&mut rng);

        let validation_start = sizes[0];
        let test_start = sizes[0] + sizes[1];
        let test = order.split_off(test_start);
        let validation = order.split_off(validation_start);
        Ok(SplitAssignment {
            train: order,
            validation,
            test,
            seed,
        })
    }

    /// Writes the line-oriented text form: a `#shape` header, then one
    /// `i<TAB>j<TAB>k<TAB>value` line per entry.
    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(32 * (self.entries.len() + 1));
        out.push_str(&format!(
            "#shape\t{}\t{}\t{}\n",
            self.shape.dim_i, self.shape.dim_j, self.shape.dim_k
        ));
        for e in &self.entries {
            out.push_str(&format!("{}\t{}\t{}\t{:.16e}\n", e.i, e.j, e.k, e.value));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (header_line, header) = lines
            .next()
            .ok_or_else(|| Error::Parse {
                line: 1,
                message: "empty tensor file".into(),
            })?;
        let shape = parse_shape_header(header_line + 1, header)?;

        let mut tensor = SparseTensorCOO::new(shape);
        for (idx, raw) in lines {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split('\t').collect();
            if fields.len() != 4 {
                return Err(Error::Parse {
                    line,
                    message: format!("expected 4 tab-separated fields, got {}", fields.len()),
                });
            }
            let parse_idx = |s: &str, name: &str| {
                s.parse::<usize>().map_err(|_| Error::Parse {
                    line,
                    message: format!("invalid {name} index {s:?}"),
                })
            };
            let entry = Entry::new(
                parse_idx(fields[0], "i")?,
                parse_idx(fields[1], "j")?,
                parse_idx(fields[2], "k")?,
                fields[3].parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    message: format!("invalid value {:?}", fields[3]),
                })?,
            );
            if !shape.contains(entry.i, entry.j, entry.k) {
                return Err(Error::Parse {
                    line,
                    message: format!(
                        "entry ({}, {}, {}) outside declared shape",
                        entry.i, entry.j, entry.k
                    ),
                });
            }
            if tensor.index.contains_key(&(entry.i, entry.j, entry.k)) {
                return Err(Error::Parse {
                    line,
                    message: format!(
                        "duplicate entry at ({}, {}, {})",
                        entry.i, entry.j, entry.k
                    ),
                });
            }
            tensor.index.insert((entry.i, entry.j, entry.k), tensor.entries.len());
            tensor.entries.push(entry);
            tensor.merge_counts.push(1);
        }
        Ok(tensor)
    }
}

fn parse_shape_header(line: usize, header: &str) -> Result<TensorShape> {
    let fields: Vec<&str> = header.trim().split('\t').collect();
    if fields.len() != 4 || fields[0] != "#shape" {
        return Err(Error::Parse {
            line,
            message: "expected header \"#shape<TAB>dim_i<TAB>dim_j<TAB>dim_k\"".into(),
        });
    }
    let dim = |s: &str| {
        s.parse::<usize>().map_err(|_| Error::Parse {
            line,
            message: format!("invalid dimension {s:?}"),
        })
    };
    TensorShape::new(dim(fields[1])?, dim(fields[2])?, dim(fields[3])?)
}

/// Largest-remainder block sizes for an `n`-element three-way split.
pub(crate) fn split_sizes(n: usize, ratios: (f64, f64, f64)) -> Result<[usize; 3]> {
    let parts = [ratios.0, ratios.1, ratios.2];
    if parts.iter().any(|&r| r <= 0.0 || !r.is_finite()) {
        return Err(Error::Config(format!(
            "split ratios must all be positive, got ({}, {}, {})",
            parts[0], parts[1], parts[2]
        )));
    }
    let sum: f64 = parts.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split ratios must sum to 1, got {sum}"
        )));
    }

    let exact: Vec<f64> = parts.iter().map(|r| r * n as f64).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|&e| e.floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    let mut order: Vec<usize> = (0..3).collect();
    // ties broken by block order: train, validation, test
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for pos in 0..(n - assigned) {
        sizes[order[pos % 3]] += 1;
    }

    if n >= 3 && sizes.contains(&0) {
        return Err(Error::Config(format!(
            "ratios ({}, {}, {}) leave an empty split for {n} entries",
            parts[0], parts[1], parts[2]
        )));
    }
    Ok([sizes[0], sizes[1], sizes[2]])
}

/// Index partition of a tensor's entries, reproducible from its seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitAssignment {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

impl SplitAssignment {
    pub fn total(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }
}
