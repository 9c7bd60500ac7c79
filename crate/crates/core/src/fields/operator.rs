use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::forward::ForwardOperator;
use super::grid::Grid;
use super::stencil;
use crate::linalg;

/// Multiplier applied to power-iteration estimates so that step sizes derived
/// from them stay on the safe side.
pub const OPERATOR_NORM_SAFETY: f64 = 1.05;

/// A matrix-free linear map between flat real vectors.
pub trait LinearOperator {
    fn domain_len(&self) -> usize;
    fn range_len(&self) -> usize;
    fn apply_into(&self, x: &[f64], y: &mut [f64]);
    fn adjoint_into(&self, y: &[f64], x: &mut [f64]);
}

/// Upper estimate of the spectral norm: power iteration on `K^T K` from a
/// seeded Gaussian start, at least 50 iterations, times [`OPERATOR_NORM_SAFETY`].
pub fn operator_norm_estimate(op: &dyn LinearOperator, seed: u64) -> f64 {
    OPERATOR_NORM_SAFETY * power_iteration(op, seed, 50, 1000)
}

/// Raw largest singular value from power iteration (no safety factor).
pub fn power_iteration(op: &dyn LinearOperator, seed: u64, min_iters: usize, max_iters: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..op.domain_len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut y = vec![0.0; op.range_len()];
    let mut z = vec![0.0; op.domain_len()];
    let nx = linalg::norm(&x);
    if nx == 0.0 {
        return 0.0;
    }
    x.iter_mut().for_each(|v| *v /= nx);
    let mut estimate = 0.0;
    for it in 0..max_iters {
        op.apply_into(&x, &mut y);
        op.adjoint_into(&y, &mut z);
        let nz = linalg::norm(&z);
        if nz == 0.0 {
            return 0.0;
        }
        let next = nz.sqrt();
        let settled = (next - estimate).abs() <= 1e-12 * next;
        estimate = next;
        x.iter_mut().zip(&z).for_each(|(a, b)| *a = b / nz);
        if it + 1 >= min_iters && settled {
            break;
        }
    }
    estimate
}

/// `gradient_fd` as a [`LinearOperator`].
pub struct GradientOperator(pub Grid);

impl LinearOperator for GradientOperator {
    fn domain_len(&self) -> usize {
        self.0.len()
    }
    fn range_len(&self) -> usize {
        self.0.vector_channels() * self.0.len()
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        stencil::gradient(&self.0, x, y, false);
    }
    fn adjoint_into(&self, y: &[f64], x: &mut [f64]) {
        stencil::gradient_t(&self.0, y, x, false);
    }
}

/// The symmetrized gradient in isometric coordinates (off-diagonal scaled by
/// `sqrt(2)` so the Euclidean norm equals the Frobenius norm).
pub struct SymGradientOperator(pub Grid);

impl LinearOperator for SymGradientOperator {
    fn domain_len(&self) -> usize {
        self.0.vector_channels() * self.0.len()
    }
    fn range_len(&self) -> usize {
        self.0.tensor_channels() * self.0.len()
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        stencil::sym_gradient(&self.0, x, y, false, std::f64::consts::SQRT_2);
    }
    fn adjoint_into(&self, y: &[f64], x: &mut [f64]) {
        stencil::sym_gradient_t(&self.0, y, x, false, std::f64::consts::SQRT_2);
    }
}

/// A forward operator bound to a grid.
pub struct BoundForward<'a> {
    pub op: &'a ForwardOperator,
    pub grid: Grid,
}

impl LinearOperator for BoundForward<'_> {
    fn domain_len(&self) -> usize {
        self.grid.len()
    }
    fn range_len(&self) -> usize {
        self.grid.len()
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        self.op.apply_slice(&self.grid, x, y);
    }
    fn adjoint_into(&self, y: &[f64], x: &mut [f64]) {
        self.op.adjoint_slice(&self.grid, y, x);
    }
}
