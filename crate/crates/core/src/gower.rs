//! Gower dissimilarity over mixed numerical/categorical instances and the
//! train/test matrix blocks built from it.
//!
//! A training matrix is `k x k` over the training instances. Test rows are
//! compared against training columns only, using ranges computed from the
//! training instances, so no test statistics leak into the features.

use std::collections::HashMap;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::data::{check_row, FeatureKind, FeatureSchema, InstanceTable, Value};
use crate::error::{Error, Result};

pub const DEFAULT_MEMORY_CAP: u64 = 8 * 1024 * 1024 * 1024;

/// Per-feature range `max - min` over a reference set. Categorical
/// positions hold 0 and are never read.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeVector {
    ranges: Vec<f64>,
}

impl RangeVector {
    pub fn new(ranges: Vec<f64>) -> Self {
        Self { ranges }
    }

    pub fn get(&self, feature: usize) -> f64 {
        self.ranges[feature]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.ranges
    }
}

/// Range of every numerical feature over the non-missing cells of
/// `reference[..n]`.
fn ranges_over(reference: &InstanceTable, n: usize) -> RangeVector {
    let schema = reference.schema();
    let ranges = (0..schema.feature_count())
        .map(|f| {
            if schema.kind(f) == FeatureKind::Categorical {
                return 0.0;
            }
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for row in &reference.rows()[..n] {
                if let Value::Number(x) = row[f] {
                    lo = lo.min(x);
                    hi = hi.max(x);
                }
            }
            if lo.is_finite() {
                hi - lo
            } else {
                0.0
            }
        })
        .collect();
    RangeVector { ranges }
}

pub fn compute_ranges(reference: &InstanceTable) -> RangeVector {
    ranges_over(reference, reference.len())
}

/// Contribution of one feature; `None` when either side is missing.
pub fn partial_dissimilarity(a: &Value, b: &Value, kind: FeatureKind, range: f64) -> Option<f64> {
    match (a, b) {
        (Value::Missing, _) | (_, Value::Missing) => None,
        (Value::Token(x), Value::Token(y)) if kind == FeatureKind::Categorical => {
            Some(if x == y { 0.0 } else { 1.0 })
        }
        (Value::Number(x), Value::Number(y)) if kind == FeatureKind::Numerical => {
            Some(numeric_partial(*x, *y, range))
        }
        // kind/value disagreement counts as a mismatch
        _ => Some(1.0),
    }
}

#[inline]
fn numeric_partial(x: f64, y: f64, range: f64) -> f64 {
    if range > 0.0 {
        ((x - y).abs() / range).min(1.0)
    } else {
        0.0
    }
}

/// Mean of the non-missing partial dissimilarities; 1.0 when every pair of
/// cells has a missing side.
pub fn gower_distance(i: &[Value], j: &[Value], schema: &FeatureSchema, ranges: &RangeVector) -> f64 {
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for f in 0..schema.feature_count() {
        if let Some(pd) = partial_dissimilarity(&i[f], &j[f], schema.kind(f), ranges.get(f)) {
            sum += pd;
            count += 1;
        }
    }
    if count == 0 {
        1.0
    } else {
        sum / count as f64
    }
}

/// Row-major encoding: numerics as-is, categories as interned codes,
/// missing as NaN. Accumulation order matches [`gower_distance`] exactly.
struct Encoded {
    kinds: Vec<FeatureKind>,
    width: usize,
    cells: Vec<f64>,
}

impl Encoded {
    fn new(table: &InstanceTable) -> Self {
        let schema = table.schema();
        let width = schema.feature_count();
        let kinds: Vec<FeatureKind> = (0..width).map(|f| schema.kind(f)).collect();
        let mut interners: Vec<HashMap<&str, f64>> = vec![HashMap::new(); width];
        let mut cells = Vec::with_capacity(table.len() * width);
        for row in table.rows() {
            for (f, v) in row.iter().enumerate() {
                cells.push(match v {
                    Value::Missing => f64::NAN,
                    Value::Number(x) => *x,
                    Value::Token(t) => {
                        let next = interners[f].len() as f64;
                        *interners[f].entry(t.as_str()).or_insert(next)
                    }
                });
            }
        }
        Self {
            kinds,
            width,
            cells,
        }
    }

    fn row(&self, r: usize) -> &[f64] {
        &self.cells[r * self.width..(r + 1) * self.width]
    }

    fn distance(&self, a: usize, b: usize, ranges: &[f64]) -> f64 {
        let (x, y) = (self.row(a), self.row(b));
        let mut sum = 0.0f64;
        let mut count = 0usize;
        for f in 0..self.width {
            let (p, q) = (x[f], y[f]);
            if p.is_nan() || q.is_nan() {
                continue;
            }
            sum += match self.kinds[f] {
                FeatureKind::Categorical => {
                    if p == q {
                        0.0
                    } else {
                        1.0
                    }
                }
                FeatureKind::Numerical => numeric_partial(p, q, ranges[f]),
            };
            count += 1;
        }
        if count == 0 {
            1.0
        } else {
            sum / count as f64
        }
    }
}

/// Dense row-major block of 32-bit dissimilarities.
#[derive(Debug, Clone, PartialEq)]
pub struct GowerMatrix {
    values: Vec<f32>,
    rows: usize,
    cols: usize,
    row_labels: Vec<u8>,
    col_reference_id: String,
}

impl GowerMatrix {
    pub fn from_parts(
        values: Vec<f32>,
        rows: usize,
        cols: usize,
        row_labels: Vec<u8>,
        col_reference_id: impl Into<String>,
    ) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values for a {rows}x{cols} matrix",
                values.len()
            )));
        }
        if row_labels.len() != rows {
            return Err(Error::Shape(format!(
                "{} labels for {rows} rows",
                row_labels.len()
            )));
        }
        if row_labels.iter().any(|&l| l > 1) {
            return Err(Error::Format("row labels must be 0 or 1".into()));
        }
        Ok(Self {
            values,
            rows,
            cols,
            row_labels,
            col_reference_id: col_reference_id.into(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.values[r * self.cols + c]
    }

    pub fn row_labels(&self) -> &[u8] {
        &self.row_labels
    }

    pub fn col_reference_id(&self) -> &str {
        &self.col_reference_id
    }

    /// Stacks a row produced by [`append_row`].
    pub fn push_row(&mut self, row: &[f32], label: u8) -> Result<()> {
        if row.len() != self.cols {
            return Err(Error::Shape(format!(
                "row of length {} for a matrix of width {}",
                row.len(),
                self.cols
            )));
        }
        if label > 1 {
            return Err(Error::InvalidArgument("label must be 0 or 1".into()));
        }
        self.values.extend_from_slice(row);
        self.row_labels.push(label);
        self.rows += 1;
        Ok(())
    }

    /// Splits into rows `[0, at)` and `[at, rows)`.
    pub fn split_rows(&self, at: usize) -> (GowerMatrix, GowerMatrix) {
        let at = at.min(self.rows);
        let cut = at * self.cols;
        let make = |values: &[f32], labels: &[u8], rows| GowerMatrix {
            values: values.to_vec(),
            rows,
            cols: self.cols,
            row_labels: labels.to_vec(),
            col_reference_id: self.col_reference_id.clone(),
        };
        (
            make(&self.values[..cut], &self.row_labels[..at], at),
            make(&self.values[cut..], &self.row_labels[at..], self.rows - at),
        )
    }

    /// Row-wise concatenation of matrices sharing a width.
    pub fn stack(parts: &[&GowerMatrix]) -> Result<GowerMatrix> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("nothing to stack".into()))?;
        let mut out = GowerMatrix {
            values: Vec::new(),
            rows: 0,
            cols: first.cols,
            row_labels: Vec::new(),
            col_reference_id: "stacked".into(),
        };
        for m in parts {
            if m.cols != out.cols {
                return Err(Error::Shape(format!(
                    "cannot stack width {} onto width {}",
                    m.cols, out.cols
                )));
            }
            out.values.extend_from_slice(&m.values);
            out.row_labels.extend_from_slice(&m.row_labels);
            out.rows += m.rows;
        }
        Ok(out)
    }
}

fn reference_id(table: &InstanceTable, n: usize) -> String {
    let mut h = Sha256::new();
    for (row, label) in table.rows()[..n].iter().zip(table.labels()) {
        for v in row {
            match v {
                Value::Missing => h.update([0u8]),
                Value::Number(x) => {
                    h.update([1u8]);
                    h.update(x.to_le_bytes());
                }
                Value::Token(t) => {
                    h.update([2u8]);
                    h.update((t.len() as u64).to_le_bytes());
                    h.update(t.as_bytes());
                }
            }
        }
        h.update([*label]);
    }
    hex::encode(&h.finalize()[..8])
}

/// Bytes needed to hold a `rows x cols` matrix plus its label sidecar.
pub fn required_bytes(rows: usize, cols: usize) -> u64 {
    (rows as u64)
        .saturating_mul(cols as u64)
        .saturating_mul(4)
        .saturating_add(rows as u64)
}

/// Matrix builder carrying the memory cap.
#[derive(Debug, Clone, Copy)]
pub struct GowerEngine {
    pub memory_cap: u64,
}

impl Default for GowerEngine {
    fn default() -> Self {
        Self {
            memory_cap: DEFAULT_MEMORY_CAP,
        }
    }
}

impl GowerEngine {
    pub fn with_memory_cap(memory_cap: u64) -> Self {
        Self { memory_cap }
    }

    fn check_budget(&self, rows: usize, cols: usize) -> Result<()> {
        let required = required_bytes(rows, cols);
        if required > self.memory_cap {
            return Err(Error::MemoryBudget {
                required,
                cap: self.memory_cap,
            });
        }
        Ok(())
    }

    /// Rows `row_start..` of `table` against columns `0..cols`, with the
    /// ranges over `table[..range_rows]`.
    fn block(
        &self,
        table: &InstanceTable,
        row_start: usize,
        cols: usize,
        range_rows: usize,
    ) -> Result<GowerMatrix> {
        let rows = table.len() - row_start;
        self.check_budget(rows, cols)?;
        let ranges = ranges_over(table, range_rows);
        let enc = Encoded::new(table);
        let mut values = vec![0f32; rows * cols];
        values
            .par_chunks_mut(cols)
            .enumerate()
            .for_each(|(r, out)| {
                let a = row_start + r;
                for (c, cell) in out.iter_mut().enumerate() {
                    *cell = if a == c {
                        0.0
                    } else {
                        enc.distance(a, c, ranges.as_slice()) as f32
                    };
                }
            });
        Ok(GowerMatrix {
            values,
            rows,
            cols,
            row_labels: table.labels()[row_start..].to_vec(),
            col_reference_id: reference_id(table, range_rows),
        })
    }

    /// Square `k x k` matrix over `train`, ranges from `train`.
    pub fn matrix(&self, train: &InstanceTable) -> Result<GowerMatrix> {
        if train.is_empty() {
            return Err(Error::InvalidArgument("training table is empty".into()));
        }
        self.block(train, 0, train.len(), train.len())
    }

    /// Every instance against the first `col_limit` instances; the left
    /// block of [`GowerEngine::matrix`].
    pub fn matrix_limit_cols(&self, instances: &InstanceTable, col_limit: usize) -> Result<GowerMatrix> {
        if col_limit == 0 || col_limit > instances.len() {
            return Err(Error::InvalidArgument(format!(
                "col_limit must be in 1..={}, got {col_limit}",
                instances.len()
            )));
        }
        self.block(instances, 0, col_limit, instances.len())
    }

    /// Instances after `skip_train` against the first `col_limit` training
    /// instances, ranges from the training instances only.
    pub fn sliced_matrix_limit_cols(
        &self,
        all: &InstanceTable,
        skip_train: usize,
        col_limit: usize,
    ) -> Result<GowerMatrix> {
        if skip_train >= all.len() {
            return Err(Error::InvalidArgument(format!(
                "skip_train {skip_train} leaves no test rows out of {}",
                all.len()
            )));
        }
        if col_limit == 0 || col_limit > skip_train {
            return Err(Error::InvalidArgument(format!(
                "col_limit must be in 1..={skip_train} (test columns are never produced), got {col_limit}"
            )));
        }
        self.block(all, skip_train, col_limit, skip_train)
    }
}

pub fn gower_matrix(train: &InstanceTable) -> Result<GowerMatrix> {
    GowerEngine::default().matrix(train)
}

pub fn gower_matrix_limit_cols(instances: &InstanceTable, col_limit: usize) -> Result<GowerMatrix> {
    GowerEngine::default().matrix_limit_cols(instances, col_limit)
}

pub fn sliced_gower_matrix_limit_cols(
    all: &InstanceTable,
    skip_train: usize,
    col_limit: usize,
) -> Result<GowerMatrix> {
    GowerEngine::default().sliced_matrix_limit_cols(all, skip_train, col_limit)
}

/// Distances from one new instance to the matrix's training columns, linear
/// in the width. `ranges` stay fixed at the training ranges.
pub fn append_row(
    matrix: &GowerMatrix,
    new_instance: &[Value],
    train: &InstanceTable,
    ranges: &RangeVector,
) -> Result<Vec<f32>> {
    let schema = train.schema();
    check_row(schema, new_instance)?;
    if matrix.cols() > train.len() {
        return Err(Error::Shape(format!(
            "matrix width {} exceeds {} training instances",
            matrix.cols(),
            train.len()
        )));
    }
    if ranges.as_slice().len() != schema.feature_count() {
        return Err(Error::Shape("range vector does not match schema".into()));
    }
    Ok(train.rows()[..matrix.cols()]
        .iter()
        .map(|t| gower_distance(new_instance, t, schema, ranges) as f32)
        .collect())
}
