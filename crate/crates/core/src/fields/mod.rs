//! Grids, sampled fields, finite-difference operators and forward operators.

mod field;
mod forward;
mod grid;
pub mod io;
mod operator;
pub(crate) mod stencil;

pub use field::{Field, TensorField, VectorField};
pub use forward::ForwardOperator;
pub use grid::Grid;
pub use operator::{
    operator_norm_estimate, power_iteration, BoundForward, GradientOperator, LinearOperator,
    SymGradientOperator, OPERATOR_NORM_SAFETY,
};

/// Forward differences per axis with the last difference along each axis set
/// to zero (Neumann boundary).
pub fn gradient_fd(u: &Field) -> VectorField {
    let grid = u.grid();
    let mut out = vec![0.0; grid.vector_channels() * grid.len()];
    stencil::gradient(&grid, u.values(), &mut out, false);
    VectorField::from_raw(grid, out)
}

/// Negative adjoint of [`gradient_fd`].
pub fn divergence_fd(w: &VectorField) -> Field {
    let grid = w.grid();
    let mut out = vec![0.0; grid.len()];
    stencil::gradient_t(&grid, w.values(), &mut out, false);
    out.iter_mut().for_each(|v| *v = -*v);
    Field::from_raw(grid, out)
}

/// Symmetrized forward-difference derivative `(d_i w_j + d_j w_i) / 2`,
/// taken over the support of the gradient channels.
pub fn sym_gradient(w: &VectorField) -> TensorField {
    let grid = w.grid();
    let mut out = vec![0.0; grid.tensor_channels() * grid.len()];
    stencil::sym_gradient(&grid, w.values(), &mut out, false, 1.0);
    TensorField::from_raw(grid, out)
}

/// Negative adjoint of [`sym_gradient`] under the Frobenius inner product.
pub fn sym_divergence(m: &TensorField) -> VectorField {
    let grid = m.grid();
    let n = grid.len();
    let mut weighted = m.values().to_vec();
    if grid.ndim() == 2 {
        weighted[2 * n..].iter_mut().for_each(|v| *v *= 2.0);
    }
    let mut out = vec![0.0; grid.vector_channels() * n];
    stencil::sym_gradient_t(&grid, &weighted, &mut out, false, 1.0);
    out.iter_mut().for_each(|v| *v = -*v);
    VectorField::from_raw(grid, out)
}

/// The `C v` tensor field of the oscillatory TGV with `C = omega omega^T`.
pub fn oscillation_term(v: &Field, omega: &[f64]) -> TensorField {
    let grid = v.grid();
    let mut out = vec![0.0; grid.tensor_channels() * grid.len()];
    stencil::oscillation(&grid, omega, v.values(), &mut out, false, 1.0);
    TensorField::from_raw(grid, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(grid: Grid, rng: &mut ChaCha8Rng) -> Field {
        Field::from_fn(grid, |_, _| rng.random_range(-1.0..1.0))
    }

    fn random_vector(grid: Grid, rng: &mut ChaCha8Rng) -> VectorField {
        VectorField::from_fn(grid, |_, _, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        for grid in [Grid::line(7).unwrap(), Grid::plane(5, 4).unwrap()] {
            let g = gradient_fd(&Field::constant(grid, 3.25));
            assert!(g.values().iter().all(|v| *v == 0.0));
            let d = divergence_fd(&g);
            assert!(d.values().iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn gradient_of_ramp() {
        let u = Field::new(Grid::line(4).unwrap(), vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(gradient_fd(&u).values(), &[1.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn divergence_of_unit_vector() {
        let grid = Grid::line(4).unwrap();
        let w = VectorField::new(grid, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(divergence_fd(&w).values(), &[1.0, -1.0, 0.0, 0.0]);
        assert!(divergence_fd(&VectorField::zeros(grid)).values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gradient_adjoint_against_dense_matrix() {
        // Explicit forward-difference matrix with the last row zero.
        let n = 64;
        let grid = Grid::line(n).unwrap();
        let mut d = vec![vec![0.0; n]; n];
        for (i, row) in d.iter_mut().enumerate().take(n - 1) {
            row[i] = -1.0;
            row[i + 1] = 1.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u = random_field(grid, &mut rng);
        let w = random_vector(grid, &mut rng);
        let du: Vec<f64> = d.iter().map(|row| row.iter().zip(u.values()).map(|(a, b)| a * b).sum()).collect();
        let g = gradient_fd(&u);
        for (a, b) in du.iter().zip(g.values()) {
            assert!((a - b).abs() < 1e-14);
        }
        let dtw: Vec<f64> = (0..n).map(|j| (0..n).map(|i| d[i][j] * w.values()[i]).sum()).collect();
        let div = divergence_fd(&w);
        for (a, b) in dtw.iter().zip(div.values()) {
            assert!((a + b).abs() < 1e-14);
        }
        assert!((g.dot(&w) + u.dot(&div)).abs() < 1e-12);
    }

    #[test]
    fn sym_gradient_of_constant_and_linear() {
        let grid = Grid::plane(6, 5).unwrap();
        let c = VectorField::from_fn(grid, |ch, _, _| if ch == 0 { 2.0 } else { -1.5 });
        assert!(sym_gradient(&c).values().iter().all(|v| *v == 0.0));

        let lin = VectorField::from_fn(grid, |ch, i, j| if ch == 0 { i as f64 } else { j as f64 });
        let e = sym_gradient(&lin);
        let (r, cols) = grid.shape();
        for i in 0..r - 2 {
            for j in 0..cols - 2 {
                let idx = i * cols + j;
                assert_eq!(e.entry(idx, 0, 0), 1.0);
                assert_eq!(e.entry(idx, 1, 1), 1.0);
                assert_eq!(e.entry(idx, 0, 1), 0.0);
            }
        }
    }

    #[test]
    fn sym_gradient_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for grid in [Grid::plane(7, 9).unwrap(), Grid::line(12).unwrap()] {
            let w = random_vector(grid, &mut rng);
            let m = TensorField::new(
                grid,
                (0..grid.tensor_channels() * grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect(),
            )
            .unwrap();
            let lhs = sym_gradient(&w).dot(&m);
            let rhs = -w.dot(&sym_divergence(&m));
            assert!((lhs - rhs).abs() < 1e-12, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn blur_of_delta_is_kernel() {
        let grid = Grid::line(21).unwrap();
        let a = ForwardOperator::gaussian_blur(1.0);
        let mut x = Field::zeros(grid);
        x.values_mut()[1] = 1.0;
        let y = a.apply(&x);
        let k = a.kernel_1d();
        assert_eq!(k.len(), 9);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for (t, kt) in k.iter().enumerate() {
            let pos = (1 + t as isize - 4).rem_euclid(21) as usize;
            assert!((y.values()[pos] - kt).abs() < 1e-15);
        }
    }

    #[test]
    fn blur_preserves_constants_and_mean() {
        let grid = Grid::plane(12, 10).unwrap();
        let a = ForwardOperator::gaussian_blur(1.0);
        let y = a.apply(&Field::constant(grid, 0.7));
        assert!(y.values().iter().all(|v| (v - 0.7).abs() < 1e-14));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_field(grid, &mut rng);
        assert!((a.apply(&x).mean() - x.mean()).abs() < 1e-12);
        assert_eq!(ForwardOperator::Identity.apply(&x), x);
    }

    #[test]
    fn operator_norms() {
        let id = ForwardOperator::Identity;
        let grid = Grid::plane(8, 8).unwrap();
        let est = operator_norm_estimate(&BoundForward { op: &id, grid }, 3);
        assert!((est / OPERATOR_NORM_SAFETY - 1.0).abs() < 1e-6);
        let blur = ForwardOperator::gaussian_blur(1.0);
        let raw = power_iteration(&BoundForward { op: &blur, grid }, 3, 50, 1000);
        assert!(raw <= 1.0 + 1e-6);
    }
}
