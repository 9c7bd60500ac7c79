//! Splitting structures: the form in which regularizers and data terms are
//! handed to the primal-dual solver.
//!
//! A structure describes the objective
//!
//! ```text
//!   constant + sum_b <c_b, z_b> + lambda/2 |sum_{b in F} z_b - f|^2 + sum_a phi_a(K_a z + o_a)
//! ```
//!
//! over primal blocks `z_b`, where every `phi_a` is either `1/2 |.|^2` or a
//! (possibly Moreau-smoothed) group norm with unit weight. Weights are folded
//! into the linear maps so that the solver's diagonal steps see them.

use crate::fields::{stencil, ForwardOperator, Grid, LinearOperator};

/// Elementary linear maps acting on one primal block.
#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    /// Scalar field to itself.
    Identity,
    /// Scalar field to gradient space.
    Gradient,
    /// Gradient space to itself, zeroing entries outside the gradient support.
    GradientSupport,
    /// Gradient space to tensor space (isometric off-diagonal scaling).
    SymGradient,
    /// Scalar field to tensor space: the `C v` term for frequency `omega`.
    Oscillation(Vec<f64>),
    /// Periodic blur with the given normalized 1D kernel.
    Blur(Vec<f64>),
}

impl Op {
    pub fn forward(op: &ForwardOperator) -> Op {
        match op {
            ForwardOperator::Identity => Op::Identity,
            _ => Op::Blur(op.kernel_1d()),
        }
    }

    pub fn in_len(&self, grid: &Grid) -> usize {
        match self {
            Op::GradientSupport | Op::SymGradient => grid.vector_channels() * grid.len(),
            _ => grid.len(),
        }
    }

    pub fn out_len(&self, grid: &Grid) -> usize {
        match self {
            Op::Identity | Op::Blur(_) => grid.len(),
            Op::Gradient | Op::GradientSupport => grid.vector_channels() * grid.len(),
            Op::SymGradient | Op::Oscillation(_) => grid.tensor_channels() * grid.len(),
        }
    }

    /// `out = K x` (or `|K| x`); `out` is overwritten.
    pub fn apply(&self, grid: &Grid, x: &[f64], out: &mut [f64], abs: bool) {
        const R2: f64 = std::f64::consts::SQRT_2;
        match self {
            Op::Identity => out.copy_from_slice(x),
            Op::Gradient => stencil::gradient(grid, x, out, abs),
            Op::GradientSupport => stencil::support(grid, x, out),
            Op::SymGradient => stencil::sym_gradient(grid, x, out, abs, R2),
            Op::Oscillation(w) => stencil::oscillation(grid, w, x, out, abs, R2),
            Op::Blur(k) => stencil::periodic_blur(grid, k, x, out, false),
        }
    }

    /// `out = K^T y` (or `|K|^T y`); `out` is overwritten.
    pub fn transpose(&self, grid: &Grid, y: &[f64], out: &mut [f64], abs: bool) {
        const R2: f64 = std::f64::consts::SQRT_2;
        match self {
            Op::Identity => out.copy_from_slice(y),
            Op::Gradient => stencil::gradient_t(grid, y, out, abs),
            Op::GradientSupport => stencil::support(grid, y, out),
            Op::SymGradient => stencil::sym_gradient_t(grid, y, out, abs, R2),
            Op::Oscillation(w) => stencil::oscillation_t(grid, w, y, out, abs, R2),
            Op::Blur(k) => stencil::periodic_blur(grid, k, y, out, true),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub block: usize,
    pub coef: f64,
    pub op: Op,
}

/// Penalty applied to the output of an atom's linear map.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Penalty {
    /// `1/2 |y|^2`
    HalfSquared,
    /// `sum_nodes psi(|y_node|)` over `channels` channels per node, with
    /// `psi(t) = t` or its Moreau envelope with parameter `smoothing`.
    GroupNorm { channels: usize, smoothing: f64 },
}

impl Penalty {
    pub fn value(&self, y: &[f64]) -> f64 {
        match *self {
            Penalty::HalfSquared => 0.5 * crate::linalg::dot(y, y),
            Penalty::GroupNorm { channels, smoothing } => {
                let n = y.len() / channels;
                (0..n)
                    .map(|idx| {
                        let t = (0..channels).map(|ch| y[ch * n + idx].powi(2)).sum::<f64>().sqrt();
                        envelope(t, smoothing)
                    })
                    .sum()
            }
        }
    }
}

/// Moreau envelope of `|.|` with parameter `s` evaluated at a norm `t`.
pub fn envelope(t: f64, s: f64) -> f64 {
    if s > 0.0 && t <= s {
        t * t / (2.0 * s)
    } else if s > 0.0 {
        t - 0.5 * s
    } else {
        t
    }
}

/// One `(linear map, penalty)` pair of a splitting structure.
#[derive(Clone, Debug)]
pub struct Atom {
    pub label: &'static str,
    pub terms: Vec<Term>,
    pub out_len: usize,
    pub offset: Vec<f64>,
    pub penalty: Penalty,
}

impl Atom {
    /// `out = K z + offset`
    pub fn apply(&self, grid: &Grid, z: &[Vec<f64>], out: &mut [f64], scratch: &mut Vec<f64>) {
        out.copy_from_slice(&self.offset);
        for t in &self.terms {
            scratch.resize(t.op.out_len(grid), 0.0);
            t.op.apply(grid, &z[t.block], scratch, false);
            crate::linalg::axpy(t.coef, scratch, out);
        }
    }

    pub fn value(&self, grid: &Grid, z: &[Vec<f64>]) -> f64 {
        let mut out = vec![0.0; self.out_len];
        let mut scratch = Vec::new();
        self.apply(grid, z, &mut out, &mut scratch);
        self.penalty.value(&out)
    }
}

/// The quadratic fidelity `weight/2 |sum_{b in blocks} z_b - target|^2` kept in
/// the primal proximal step (used when the forward operator is the identity).
#[derive(Clone, Debug)]
pub struct PrimalFidelity {
    pub blocks: Vec<usize>,
    pub weight: f64,
    pub target: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct SplitStructure {
    pub grid: Grid,
    pub block_lens: Vec<usize>,
    pub block_labels: Vec<&'static str>,
    pub linear: Vec<Option<Vec<f64>>>,
    pub pinned: Vec<bool>,
    pub fidelity: Option<PrimalFidelity>,
    pub atoms: Vec<Atom>,
    pub constant: f64,
}

impl SplitStructure {
    pub fn new(grid: Grid) -> Self {
        Self {
            grid,
            block_lens: Vec::new(),
            block_labels: Vec::new(),
            linear: Vec::new(),
            pinned: Vec::new(),
            fidelity: None,
            atoms: Vec::new(),
            constant: 0.0,
        }
    }

    pub fn add_block(&mut self, label: &'static str, len: usize) -> usize {
        self.block_lens.push(len);
        self.block_labels.push(label);
        self.linear.push(None);
        self.pinned.push(false);
        self.block_lens.len() - 1
    }

    /// Adds `<c, z_block>` to the objective.
    pub fn add_linear(&mut self, block: usize, c: &[f64]) {
        let slot = self.linear[block].get_or_insert_with(|| vec![0.0; c.len()]);
        crate::linalg::axpy(1.0, c, slot);
    }

    pub fn add_atom(&mut self, atom: Atom) {
        debug_assert_eq!(atom.offset.len(), atom.out_len);
        self.atoms.push(atom);
    }

    pub fn zero_primal(&self) -> Vec<Vec<f64>> {
        self.block_lens.iter().map(|&n| vec![0.0; n]).collect()
    }

    pub fn zero_dual(&self) -> Vec<Vec<f64>> {
        self.atoms.iter().map(|a| vec![0.0; a.out_len]).collect()
    }

    pub fn objective(&self, z: &[Vec<f64>]) -> f64 {
        let mut value = self.constant;
        for (b, c) in self.linear.iter().enumerate() {
            if let Some(c) = c {
                value += crate::linalg::dot(c, &z[b]);
            }
        }
        if let Some(fid) = &self.fidelity {
            value += 0.5 * fid.weight * self.fidelity_residual_sq(fid, z);
        }
        for atom in &self.atoms {
            value += atom.value(&self.grid, z);
        }
        value
    }

    fn fidelity_residual_sq(&self, fid: &PrimalFidelity, z: &[Vec<f64>]) -> f64 {
        (0..fid.target.len())
            .map(|i| {
                let s: f64 = fid.blocks.iter().map(|&b| z[b][i]).sum();
                (s - fid.target[i]).powi(2)
            })
            .sum()
    }

    fn total_primal(&self) -> usize {
        self.block_lens.iter().sum()
    }

    fn total_dual(&self) -> usize {
        self.atoms.iter().map(|a| a.out_len).sum()
    }
}

/// The stacked map `z -> (K_a z)_a` (offsets excluded), flattened.
impl LinearOperator for SplitStructure {
    fn domain_len(&self) -> usize {
        self.total_primal()
    }

    fn range_len(&self) -> usize {
        self.total_dual()
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let blocks = split_flat(x, &self.block_lens);
        let mut scratch = Vec::new();
        let mut start = 0;
        for atom in &self.atoms {
            let out = &mut y[start..start + atom.out_len];
            out.fill(0.0);
            for t in &atom.terms {
                scratch.resize(t.op.out_len(&self.grid), 0.0);
                t.op.apply(&self.grid, &blocks[t.block], &mut scratch, false);
                crate::linalg::axpy(t.coef, &scratch, out);
            }
            start += atom.out_len;
        }
    }

    fn adjoint_into(&self, y: &[f64], x: &mut [f64]) {
        let mut blocks = self.zero_primal();
        let mut scratch = Vec::new();
        let mut start = 0;
        for atom in &self.atoms {
            let ya = &y[start..start + atom.out_len];
            for t in &atom.terms {
                scratch.resize(t.op.in_len(&self.grid), 0.0);
                t.op.transpose(&self.grid, ya, &mut scratch, false);
                crate::linalg::axpy(t.coef, &scratch, &mut blocks[t.block]);
            }
            start += atom.out_len;
        }
        let mut pos = 0;
        for b in blocks {
            x[pos..pos + b.len()].copy_from_slice(&b);
            pos += b.len();
        }
    }
}

pub(crate) fn split_flat(x: &[f64], lens: &[usize]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(lens.len());
    let mut pos = 0;
    for &n in lens {
        out.push(x[pos..pos + n].to_vec());
        pos += n;
    }
    out
}
