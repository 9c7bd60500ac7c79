use super::grid::Grid;
use crate::error::{Error, Result};
use crate::linalg;

fn check_values(what: &str, expected: usize, values: &[f64]) -> Result<()> {
    if values.len() != expected {
        return Err(Error::InvalidArgument(format!(
            "{what}: expected {expected} values, got {}",
            values.len()
        )));
    }
    if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("{what}: non-finite value at {pos}")));
    }
    Ok(())
}

/// Scalar samples on a grid (signals, images, subgradients).
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        check_values("field", grid.len(), &values)?;
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Self { grid, values: vec![value; grid.len()] }
    }

    /// Builds a field from a function of `(i, j)`; `j` is always 0 on a line.
    pub fn from_fn(grid: Grid, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let (r, c) = grid.shape();
        let mut values = Vec::with_capacity(r * c);
        for i in 0..r {
            for j in 0..c {
                values.push(f(i, j));
            }
        }
        Self { grid, values }
    }

    pub(crate) fn from_raw(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(grid.len(), values.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        let (_, c) = self.grid.shape();
        self.values[i * c + j]
    }

    pub fn ensure_same_grid(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(format!("{:?} vs {:?}", self.grid, other.grid)));
        }
        Ok(())
    }

    pub fn dot(&self, other: &Field) -> f64 {
        linalg::dot(&self.values, &other.values)
    }

    pub fn norm(&self) -> f64 {
        linalg::norm(&self.values)
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn add(&self, other: &Field) -> Field {
        Field::from_raw(self.grid, linalg::add(&self.values, &other.values))
    }

    pub fn sub(&self, other: &Field) -> Field {
        Field::from_raw(self.grid, linalg::sub(&self.values, &other.values))
    }

    pub fn scale(&self, a: f64) -> Field {
        Field::from_raw(self.grid, linalg::scale(a, &self.values))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field::from_raw(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn count_nonzero(&self) -> usize {
        self.values.iter().filter(|v| **v != 0.0).count()
    }
}

/// Gradient-space samples: `d` channels per node, stored channel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    grid: Grid,
    values: Vec<f64>,
}

impl VectorField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        check_values("vector field", grid.vector_channels() * grid.len(), &values)?;
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: vec![0.0; grid.vector_channels() * grid.len()] }
    }

    /// Builds channel `ch` at node `(i, j)` from `f(ch, i, j)`.
    pub fn from_fn(grid: Grid, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let (r, c) = grid.shape();
        let mut values = Vec::with_capacity(grid.vector_channels() * r * c);
        for ch in 0..grid.vector_channels() {
            for i in 0..r {
                for j in 0..c {
                    values.push(f(ch, i, j));
                }
            }
        }
        Self { grid, values }
    }

    pub(crate) fn from_raw(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(grid.vector_channels() * grid.len(), values.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn channels(&self) -> usize {
        self.grid.vector_channels()
    }

    pub fn channel(&self, ch: usize) -> &[f64] {
        let n = self.grid.len();
        &self.values[ch * n..(ch + 1) * n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dot(&self, other: &VectorField) -> f64 {
        linalg::dot(&self.values, &other.values)
    }

    pub fn norm(&self) -> f64 {
        linalg::norm(&self.values)
    }

    /// Euclidean length of the vector sample at each node.
    pub fn pointwise_norms(&self) -> Vec<f64> {
        let n = self.grid.len();
        (0..n)
            .map(|idx| {
                (0..self.channels())
                    .map(|ch| self.values[ch * n + idx].powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }
}

/// Symmetric `d x d` tensor samples stored as `d(d+1)/2` channels:
/// `[xx]` on a line, `[xx, yy, xy]` on a plane.
///
/// The inner product is the Frobenius one, so the off-diagonal channel counts
/// twice.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorField {
    grid: Grid,
    values: Vec<f64>,
}

impl TensorField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        check_values("tensor field", grid.tensor_channels() * grid.len(), &values)?;
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: vec![0.0; grid.tensor_channels() * grid.len()] }
    }

    pub(crate) fn from_raw(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(grid.tensor_channels() * grid.len(), values.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn channel(&self, ch: usize) -> &[f64] {
        let n = self.grid.len();
        &self.values[ch * n..(ch + 1) * n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Entry `(a, b)` of the matrix at node `idx`.
    pub fn entry(&self, idx: usize, a: usize, b: usize) -> f64 {
        let n = self.grid.len();
        let ch = match (a, b) {
            (0, 0) => 0,
            (1, 1) => 1,
            _ => 2,
        };
        self.values[ch * n + idx]
    }

    pub fn dot(&self, other: &TensorField) -> f64 {
        let n = self.grid.len();
        let mut acc = linalg::dot(&self.values[..n], &other.values[..n]);
        if self.grid.ndim() == 2 {
            acc += linalg::dot(&self.values[n..2 * n], &other.values[n..2 * n]);
            acc += 2.0 * linalg::dot(&self.values[2 * n..], &other.values[2 * n..]);
        }
        acc
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Frobenius norm of the matrix at each node.
    pub fn pointwise_norms(&self) -> Vec<f64> {
        let n = self.grid.len();
        (0..n)
            .map(|idx| {
                let mut s = self.values[idx].powi(2);
                if self.grid.ndim() == 2 {
                    s += self.values[n + idx].powi(2) + 2.0 * self.values[2 * n + idx].powi(2);
                }
                s.sqrt()
            })
            .collect()
    }
}
