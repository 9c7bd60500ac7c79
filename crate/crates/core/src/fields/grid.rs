use crate::error::{Error, Result};

/// A regular grid with unit spacing, either a line of `n` nodes or a
/// `rows x cols` plane stored row-major.
///
/// Axis 0 runs along rows (index `i`), axis 1 along columns (index `j`).
/// A line is handled internally as an `n x 1` plane with a single axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Grid {
    Line(usize),
    Plane { rows: usize, cols: usize },
}

impl Grid {
    pub fn line(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!("line grid needs n >= 2, got {n}")));
        }
        Ok(Grid::Line(n))
    }

    pub fn plane(rows: usize, cols: usize) -> Result<Self> {
        if rows < 2 || cols < 2 {
            return Err(Error::InvalidArgument(format!(
                "plane grid needs rows, cols >= 2, got {rows}x{cols}"
            )));
        }
        Ok(Grid::Plane { rows, cols })
    }

    pub fn ndim(&self) -> usize {
        match self {
            Grid::Line(_) => 1,
            Grid::Plane { .. } => 2,
        }
    }

    /// `(rows, cols)`; a line reports `(n, 1)`.
    pub fn shape(&self) -> (usize, usize) {
        match *self {
            Grid::Line(n) => (n, 1),
            Grid::Plane { rows, cols } => (rows, cols),
        }
    }

    /// The sizes along each axis, as written in the FIELD header.
    pub fn dims(&self) -> Vec<usize> {
        match *self {
            Grid::Line(n) => vec![n],
            Grid::Plane { rows, cols } => vec![rows, cols],
        }
    }

    pub fn len(&self) -> usize {
        let (r, c) = self.shape();
        r * c
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Channels of a gradient-space sample (one per axis).
    pub fn vector_channels(&self) -> usize {
        self.ndim()
    }

    /// Channels of a symmetric-tensor sample: `d(d+1)/2`.
    pub fn tensor_channels(&self) -> usize {
        let d = self.ndim();
        d * (d + 1) / 2
    }

    /// Whether the forward difference along `axis` exists at `node`.
    pub fn has_forward(&self, axis: usize, node: usize) -> bool {
        let (r, c) = self.shape();
        match axis {
            0 => node / c + 1 < r,
            _ => node % c + 1 < c,
        }
    }
}
