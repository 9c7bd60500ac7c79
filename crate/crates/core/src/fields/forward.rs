use super::field::Field;
use super::grid::Grid;
use super::stencil;

/// The linear forward operator `A` of the decomposition problem.
#[derive(Clone, Debug, PartialEq)]
pub enum ForwardOperator {
    Identity,
    /// Periodic convolution with a truncated, renormalized Gaussian applied
    /// separably along every axis.
    PeriodicGaussianBlur { std: f64, truncation_radius: usize },
}

impl ForwardOperator {
    /// Blur with the default truncation radius `ceil(4 * std)`.
    pub fn gaussian_blur(std: f64) -> Self {
        assert!(std > 0.0, "blur std must be positive");
        ForwardOperator::PeriodicGaussianBlur {
            std,
            truncation_radius: (4.0 * std).ceil() as usize,
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, ForwardOperator::Identity)
    }

    /// The normalized 1D kernel, indexed from `-radius` to `radius`.
    pub fn kernel_1d(&self) -> Vec<f64> {
        match *self {
            ForwardOperator::Identity => vec![1.0],
            ForwardOperator::PeriodicGaussianBlur { std, truncation_radius } => {
                let r = truncation_radius as isize;
                let mut k: Vec<f64> = (-r..=r)
                    .map(|t| (-(t * t) as f64 / (2.0 * std * std)).exp())
                    .collect();
                let s: f64 = k.iter().sum();
                k.iter_mut().for_each(|v| *v /= s);
                k
            }
        }
    }

    pub fn apply(&self, u: &Field) -> Field {
        let mut out = vec![0.0; u.len()];
        self.apply_slice(&u.grid(), u.values(), &mut out);
        Field::from_raw(u.grid(), out)
    }

    pub fn adjoint(&self, y: &Field) -> Field {
        let mut out = vec![0.0; y.len()];
        self.adjoint_slice(&y.grid(), y.values(), &mut out);
        Field::from_raw(y.grid(), out)
    }

    pub(crate) fn apply_slice(&self, grid: &Grid, x: &[f64], out: &mut [f64]) {
        match self {
            ForwardOperator::Identity => out.copy_from_slice(x),
            ForwardOperator::PeriodicGaussianBlur { .. } => {
                stencil::periodic_blur(grid, &self.kernel_1d(), x, out, false)
            }
        }
    }

    pub(crate) fn adjoint_slice(&self, grid: &Grid, y: &[f64], out: &mut [f64]) {
        match self {
            ForwardOperator::Identity => out.copy_from_slice(y),
            ForwardOperator::PeriodicGaussianBlur { .. } => {
                stencil::periodic_blur(grid, &self.kernel_1d(), y, out, true)
            }
        }
    }
}
