//! Cost matrices for the cost-sensitive penalty.
//!
//! Three matrices are involved:
//!
//! * the quadratic ground cost `M2(i, j) = (i - j)^2`,
//! * the row-normalized confusion matrix `M*(i, j) = t_ij / s_i` estimated
//!   from inter-observer disagreement counts,
//! * the atomic sub-task (AST) average `(M2 + I - M*) / 2`, which lowers the
//!   penalty on mistakes that human graders also make while keeping the
//!   quadratic ordering where the counts carry no information. `I` is the
//!   identity, so diagonal entries are `(1 - t_ii) / 2` and off-diagonal
//!   entries are `(d^2 - t_ij) / 2` with `d = |i - j|`.
//!
//! All matrices are square, row-major, indexed from 0. Rows are true grades
//! and columns are assigned (or predicted) grades.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Confusion counts between expert graders and adjudicated consensus for the
/// five-grade diabetic retinopathy scale (rows: consensus grade, columns:
/// individual grade).
pub const GRADER_DISAGREEMENT_COUNTS: [[u64; 5]; 5] = [
    [1469, 4, 5, 0, 0],
    [58, 62, 5, 0, 0],
    [22, 3, 118, 1, 0],
    [0, 0, 13, 36, 1],
    [0, 0, 0, 1, 15],
];

/// Serialized form shared by every square matrix type.
#[derive(Serialize, Deserialize)]
struct MatrixRepr<T> {
    num_classes: usize,
    matrix: Vec<Vec<T>>,
}

fn flatten<T: Copy>(repr: MatrixRepr<T>) -> Result<(usize, Vec<T>)> {
    let n = repr.num_classes;
    if repr.matrix.len() != n {
        return Err(Error::InvalidDimension { what: "matrix rows", expected: n, got: repr.matrix.len() });
    }
    let mut data = Vec::with_capacity(n * n);
    for row in &repr.matrix {
        if row.len() != n {
            return Err(Error::InvalidDimension { what: "matrix columns", expected: n, got: row.len() });
        }
        data.extend_from_slice(row);
    }
    Ok((n, data))
}

fn nest<T: Copy>(n: usize, data: &[T]) -> MatrixRepr<T> {
    MatrixRepr { num_classes: n, matrix: data.chunks(n.max(1)).map(<[T]>::to_vec).collect() }
}

fn check_square(n: usize, len: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidDimension { what: "class count", expected: 2, got: n });
    }
    if len != n * n {
        return Err(Error::InvalidDimension { what: "matrix entries", expected: n * n, got: len });
    }
    Ok(())
}

/// Square matrix of non-negative integer counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr<u64>", into = "MatrixRepr<u64>")]
pub struct ConfusionCounts {
    num_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionCounts {
    /// All-zero counts for `num_classes` grades.
    pub fn zeros(num_classes: usize) -> Result<Self> {
        check_square(num_classes, num_classes * num_classes)?;
        Ok(ConfusionCounts { num_classes, counts: alloc::vec![0; num_classes * num_classes] })
    }

    /// Builds counts from row-major data.
    pub fn from_row_major(num_classes: usize, counts: Vec<u64>) -> Result<Self> {
        check_square(num_classes, counts.len())?;
        Ok(ConfusionCounts { num_classes, counts })
    }

    pub fn from_rows<R: AsRef<[u64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        let mut counts = Vec::with_capacity(n * n);
        for row in rows {
            let row = row.as_ref();
            if row.len() != n {
                return Err(Error::InvalidDimension { what: "matrix columns", expected: n, got: row.len() });
            }
            counts.extend_from_slice(row);
        }
        Self::from_row_major(n, counts)
    }

    /// The inter-observer disagreement counts in [`GRADER_DISAGREEMENT_COUNTS`].
    pub fn grader_disagreement() -> Self {
        Self::from_rows(&GRADER_DISAGREEMENT_COUNTS).expect("constant is 5x5")
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, row: usize, col: usize) -> u64 {
        self.counts[row * self.num_classes + col]
    }

    pub fn increment(&mut self, row: usize, col: usize) {
        self.counts[row * self.num_classes + col] += 1;
    }

    pub fn row(&self, row: usize) -> &[u64] {
        &self.counts[row * self.num_classes..(row + 1) * self.num_classes]
    }

    pub fn row_sum(&self, row: usize) -> u64 {
        self.row(row).iter().sum()
    }

    pub fn col_sum(&self, col: usize) -> u64 {
        (0..self.num_classes).map(|r| self.get(r, col)).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn as_row_major(&self) -> &[u64] {
        &self.counts
    }

    /// True grades with no items.
    pub fn absent_classes(&self) -> Vec<usize> {
        (0..self.num_classes).filter(|&r| self.row_sum(r) == 0).collect()
    }

    /// Entry-wise multiple of the counts.
    pub fn scaled(&self, factor: u64) -> Self {
        ConfusionCounts {
            num_classes: self.num_classes,
            counts: self.counts.iter().map(|c| c * factor).collect(),
        }
    }

    /// Row percentages rounded to the nearest integer; empty rows stay zero.
    pub fn row_percentages(&self) -> Vec<Vec<u64>> {
        (0..self.num_classes)
            .map(|r| {
                let s = self.row_sum(r);
                self.row(r)
                    .iter()
                    .map(|&c| if s == 0 { 0 } else { (200 * c + s) / (2 * s) })
                    .collect()
            })
            .collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<u64>> {
        nest(self.num_classes, &self.counts).matrix
    }
}

impl TryFrom<MatrixRepr<u64>> for ConfusionCounts {
    type Error = Error;
    fn try_from(repr: MatrixRepr<u64>) -> Result<Self> {
        let (n, data) = flatten(repr)?;
        Self::from_row_major(n, data)
    }
}

impl From<ConfusionCounts> for MatrixRepr<u64> {
    fn from(m: ConfusionCounts) -> Self {
        nest(m.num_classes, &m.counts)
    }
}

/// Square matrix whose rows are probability distributions, `t_ij = P(j | i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr<f64>", into = "MatrixRepr<f64>")]
pub struct RowStochastic {
    num_classes: usize,
    probs: Vec<f64>,
}

/// Row sums must match 1 within this tolerance.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

impl RowStochastic {
    /// Validates entries in `[0, 1]` and unit row sums (within [`ROW_SUM_TOLERANCE`]).
    pub fn from_row_major(num_classes: usize, probs: Vec<f64>) -> Result<Self> {
        check_square(num_classes, probs.len())?;
        for (k, &p) in probs.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidInput(format!(
                    "row-stochastic entry ({}, {}) = {p} outside [0, 1]",
                    k / num_classes,
                    k % num_classes
                )));
            }
        }
        for (r, row) in probs.chunks(num_classes).enumerate() {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::InvalidInput(format!("row {r} sums to {s}, expected 1")));
            }
        }
        Ok(RowStochastic { num_classes, probs })
    }

    /// Identity: every item keeps its grade.
    pub fn identity(num_classes: usize) -> Result<Self> {
        let mut probs = alloc::vec![0.0; num_classes * num_classes];
        for i in 0..num_classes {
            probs[i * num_classes + i] = 1.0;
        }
        Self::from_row_major(num_classes, probs)
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.probs[row * self.num_classes + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.probs[row * self.num_classes..(row + 1) * self.num_classes]
    }

    pub fn as_row_major(&self) -> &[f64] {
        &self.probs
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        nest(self.num_classes, &self.probs).matrix
    }
}

impl TryFrom<MatrixRepr<f64>> for RowStochastic {
    type Error = Error;
    fn try_from(repr: MatrixRepr<f64>) -> Result<Self> {
        let (n, data) = flatten(repr)?;
        Self::from_row_major(n, data)
    }
}

impl From<RowStochastic> for MatrixRepr<f64> {
    fn from(m: RowStochastic) -> Self {
        nest(m.num_classes, &m.probs)
    }
}

/// Square matrix of non-negative, finite penalties. Row `y` holds the cost of
/// predicting each grade when the true grade is `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr<f64>", into = "MatrixRepr<f64>")]
pub struct CostMatrix {
    num_classes: usize,
    costs: Vec<f64>,
}

impl CostMatrix {
    /// General cost matrix; entries must be finite and non-negative.
    pub fn from_row_major(num_classes: usize, costs: Vec<f64>) -> Result<Self> {
        check_square(num_classes, costs.len())?;
        if let Some(k) = costs.iter().position(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::InvalidInput(format!(
                "cost entry ({}, {}) = {} is negative or non-finite",
                k / num_classes,
                k % num_classes,
                costs[k]
            )));
        }
        Ok(CostMatrix { num_classes, costs })
    }

    pub fn zeros(num_classes: usize) -> Result<Self> {
        Self::from_row_major(num_classes, alloc::vec![0.0; num_classes * num_classes])
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.costs[row * self.num_classes + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.costs[row * self.num_classes..(row + 1) * self.num_classes]
    }

    pub fn as_row_major(&self) -> &[f64] {
        &self.costs
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        nest(self.num_classes, &self.costs).matrix
    }

    /// Symmetric with a zero diagonal.
    pub fn is_symmetric_zero_diagonal(&self) -> bool {
        let n = self.num_classes;
        (0..n).all(|i| self.get(i, i) == 0.0 && (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }
}

impl TryFrom<MatrixRepr<f64>> for CostMatrix {
    type Error = Error;
    fn try_from(repr: MatrixRepr<f64>) -> Result<Self> {
        let (n, data) = flatten(repr)?;
        Self::from_row_major(n, data)
    }
}

impl From<CostMatrix> for MatrixRepr<f64> {
    fn from(m: CostMatrix) -> Self {
        nest(m.num_classes, &m.costs)
    }
}

/// Quadratic ground cost, `(i - j)^2`.
pub fn quadratic_cost_matrix(num_classes: usize) -> Result<CostMatrix> {
    if num_classes < 2 {
        return Err(Error::InvalidDimension { what: "class count", expected: 2, got: num_classes });
    }
    let costs = (0..num_classes * num_classes)
        .map(|k| {
            let d = (k / num_classes) as f64 - (k % num_classes) as f64;
            d * d
        })
        .collect();
    let m = CostMatrix::from_row_major(num_classes, costs)?;
    debug_assert!(m.is_symmetric_zero_diagonal());
    Ok(m)
}

/// Divides every count by its row total.
///
/// Each entry is a single division of two exactly represented integers, so
/// the result is the correctly rounded value of the rational `t_ij / s_i`.
pub fn row_normalize(m: &ConfusionCounts) -> Result<RowStochastic> {
    let n = m.num_classes();
    let mut probs = Vec::with_capacity(n * n);
    for r in 0..n {
        let s = m.row_sum(r);
        if s == 0 {
            return Err(Error::ZeroRow { grade: r });
        }
        probs.extend(m.row(r).iter().map(|&c| c as f64 / s as f64));
    }
    RowStochastic::from_row_major(n, probs)
}

/// Averaged atomic sub-task cost `(M2 + I - M*) / 2` from an already
/// normalized matrix.
pub fn ast_cost_from_stochastic(m_star: &RowStochastic) -> Result<CostMatrix> {
    let n = m_star.num_classes();
    let quad = quadratic_cost_matrix(n)?;
    let costs = (0..n * n)
        .map(|k| {
            let (i, j) = (k / n, k % n);
            let ident = if i == j { 1.0 } else { 0.0 };
            (quad.get(i, j) + ident - m_star.get(i, j)) / 2.0
        })
        .collect();
    CostMatrix::from_row_major(n, costs)
}

/// Averaged atomic sub-task cost `(M2 + I - M*) / 2` with `M* = row_normalize(m)`.
pub fn ast_cost_matrix(m: &ConfusionCounts) -> Result<CostMatrix> {
    ast_cost_from_stochastic(&row_normalize(m)?)
}
