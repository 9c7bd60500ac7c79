//! Conjugate gradients for the quadratic part of the primal step, with a
//! cosine-transform preconditioner.
//!
//! The Neumann difference Laplacian is diagonal in the DCT-II basis; a
//! symmetric blur is approximately so (exactly up to boundary wrap). Systems
//! built from identities, blurs and gradients acting on scalar blocks are
//! therefore preconditioned by small per-frequency block inverses.

use std::sync::Arc;

use rustdct::{DctPlanner, TransformType2And3};

use crate::fields::Grid;
use crate::linalg;
use crate::regularizers::split::{Op, SplitStructure};

/// Per-axis DCT plans for a grid.
pub(crate) struct Cosine {
    grid: Grid,
    plans: Vec<Arc<dyn TransformType2And3<f64>>>,
}

impl Cosine {
    pub fn new(grid: Grid) -> Self {
        let mut planner = DctPlanner::new();
        let plans = grid.dims().iter().map(|&n| planner.plan_dct2(n)).collect();
        Self { grid, plans }
    }

    fn along_axes(&self, x: &mut [f64], inverse: bool) {
        let (r, c) = self.grid.shape();
        let run = |plan: &Arc<dyn TransformType2And3<f64>>, buf: &mut [f64]| {
            if inverse {
                plan.process_dct3(buf)
            } else {
                plan.process_dct2(buf)
            }
        };
        if self.grid.ndim() == 1 {
            run(&self.plans[0], x);
            return;
        }
        for row in x.chunks_mut(c) {
            run(&self.plans[1], row);
        }
        let mut col = vec![0.0; r];
        for j in 0..c {
            (0..r).for_each(|i| col[i] = x[i * c + j]);
            run(&self.plans[0], &mut col);
            (0..r).for_each(|i| x[i * c + j] = col[i]);
        }
    }

    /// Unnormalized DCT-II along every axis.
    pub fn forward(&self, x: &mut [f64]) {
        self.along_axes(x, false);
    }

    /// Exact inverse of [`Cosine::forward`].
    pub fn inverse(&self, x: &mut [f64]) {
        self.along_axes(x, true);
        let scale: f64 = self.grid.dims().iter().map(|&n| 2.0 / n as f64).product();
        x.iter_mut().for_each(|v| *v *= scale);
    }

    /// Per-node frequency index pairs in storage order.
    fn frequencies(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let (r, c) = self.grid.shape();
        (0..r * c).map(move |idx| (idx / c, idx % c))
    }
}

/// Symbol of `D^T D` for the Neumann forward difference of length `n` at
/// DCT frequency `k`.
fn laplace_symbol(k: usize, n: usize) -> f64 {
    let s = (std::f64::consts::PI * k as f64 / (2.0 * n as f64)).sin();
    4.0 * s * s
}

fn kernel_symbol(kernel: &[f64], k: usize, n: usize) -> f64 {
    let r = kernel.len() / 2;
    let mut acc = kernel[r];
    for t in 1..=r {
        acc += (kernel[r + t] + kernel[r - t]) * (std::f64::consts::PI * (k * t) as f64 / n as f64).cos();
    }
    acc
}

#[derive(Clone, Copy, PartialEq)]
enum Family {
    Scalar,
    Gradient,
}

fn family(op: &Op) -> Option<Family> {
    match op {
        Op::Identity => Some(Family::Scalar),
        Op::Blur(k) if k.iter().zip(k.iter().rev()).all(|(a, b)| (a - b).abs() <= 1e-15 * a.abs().max(1.0)) => {
            Some(Family::Scalar)
        }
        Op::Gradient => Some(Family::Gradient),
        _ => None,
    }
}

/// The quadratic system `(theta T^-1 + sum_a K_a^T K_a + lambda E^T E) z = b`
/// over the blocks touched by quadratic atoms or the primal fidelity.
pub(crate) struct QuadraticSystem {
    /// Unknown blocks (not pinned).
    pub blocks: Vec<usize>,
    /// Indices of the quadratic atoms.
    pub atoms: Vec<usize>,
    /// Fidelity blocks that are unknowns.
    fid_blocks: Vec<usize>,
    fid_weight: f64,
    inv_tau: Vec<Vec<f64>>,
    theta: f64,
    pre: Preconditioner,
    scratch: Vec<f64>,
    scratch2: Vec<f64>,
}

enum Preconditioner {
    /// Per-frequency inverses of the block symbol, `blocks^2` entries each.
    Spectral { cosine: Cosine, inverses: Vec<f64> },
    Jacobi(Vec<Vec<f64>>),
}

impl QuadraticSystem {
    pub fn new(s: &SplitStructure, atoms: Vec<usize>, inv_tau: Vec<Vec<f64>>, theta: f64) -> Self {
        let mut blocks: Vec<usize> = atoms.iter().flat_map(|&a| s.atoms[a].terms.iter().map(|t| t.block)).collect();
        if let Some(f) = &s.fidelity {
            blocks.extend(f.blocks.iter().copied());
        }
        blocks.sort_unstable();
        blocks.dedup();
        blocks.retain(|&b| !s.pinned[b]);
        let (fid_blocks, fid_weight) = match &s.fidelity {
            Some(f) => (f.blocks.iter().copied().filter(|b| blocks.contains(b)).collect(), f.weight),
            None => (Vec::new(), 0.0),
        };
        let mut sys = Self {
            blocks,
            atoms,
            fid_blocks,
            fid_weight,
            inv_tau,
            theta,
            pre: Preconditioner::Jacobi(Vec::new()),
            scratch: Vec::new(),
            scratch2: Vec::new(),
        };
        sys.pre = sys.build_preconditioner(s);
        sys
    }

    pub fn set_theta(&mut self, s: &SplitStructure, theta: f64) {
        if theta != self.theta {
            self.theta = theta;
            self.pre = self.build_preconditioner(s);
        }
    }

    fn build_preconditioner(&self, s: &SplitStructure) -> Preconditioner {
        self.spectral(s).unwrap_or_else(|| Preconditioner::Jacobi(self.jacobi(s)))
    }

    fn spectral(&self, s: &SplitStructure) -> Option<Preconditioner> {
        let grid = s.grid;
        let n = grid.len();
        if self.blocks.iter().any(|&b| s.block_lens[b] != n) {
            return None;
        }
        let mut fams = Vec::new();
        for &a in &self.atoms {
            let f: Vec<Family> = s.atoms[a].terms.iter().map(|t| family(&t.op)).collect::<Option<_>>()?;
            if f.windows(2).any(|w| w[0] != w[1]) {
                return None;
            }
            fams.push(f.first().copied().unwrap_or(Family::Scalar));
        }
        let nb = self.blocks.len();
        let pos = |b: usize| self.blocks.iter().position(|&x| x == b);
        let mean_inv: Vec<f64> = self
            .blocks
            .iter()
            .map(|&b| self.theta * self.inv_tau[b].iter().sum::<f64>() / n as f64)
            .collect();
        let cosine = Cosine::new(grid);
        let dims = grid.dims();
        let (r, c) = grid.shape();
        let mut inverses = vec![0.0; n * nb * nb];
        let mut m = vec![0.0; nb * nb];
        for (idx, (k1, k2)) in cosine.frequencies().enumerate() {
            m.fill(0.0);
            for i in 0..nb {
                m[i * nb + i] = mean_inv[i];
            }
            let lap = if dims.len() == 1 { laplace_symbol(k1, r) } else { laplace_symbol(k1, r) + laplace_symbol(k2, c) };
            for (&a, fam) in self.atoms.iter().zip(&fams) {
                let terms = &s.atoms[a].terms;
                for t in terms {
                    let Some(i) = pos(t.block) else { continue };
                    for t2 in terms {
                        let Some(j) = pos(t2.block) else { continue };
                        let sym = match fam {
                            Family::Gradient => lap,
                            Family::Scalar => {
                                let one = |op: &Op| match op {
                                    Op::Blur(k) => {
                                        let mut v = kernel_symbol(k, k1, r);
                                        if dims.len() == 2 {
                                            v *= kernel_symbol(k, k2, c);
                                        }
                                        v
                                    }
                                    _ => 1.0,
                                };
                                one(&t.op) * one(&t2.op)
                            }
                        };
                        m[i * nb + j] += t.coef * t2.coef * sym;
                    }
                }
            }
            for &b in &self.fid_blocks {
                for &b2 in &self.fid_blocks {
                    m[pos(b)? * nb + pos(b2)?] += self.fid_weight;
                }
            }
            let inv = invert_spd(&m, nb)?;
            inverses[idx * nb * nb..(idx + 1) * nb * nb].copy_from_slice(&inv);
        }
        Some(Preconditioner::Spectral { cosine, inverses })
    }

    fn jacobi(&self, s: &SplitStructure) -> Vec<Vec<f64>> {
        let grid = s.grid;
        let mut diag: Vec<Vec<f64>> =
            self.blocks.iter().map(|&b| self.inv_tau[b].iter().map(|v| self.theta * v).collect()).collect();
        let mut tmp = Vec::new();
        let mut tmp2 = Vec::new();
        for &a in &self.atoms {
            let atom = &s.atoms[a];
            for t in &atom.terms {
                let Some(i) = self.blocks.iter().position(|&b| b == t.block) else { continue };
                let ones = vec![1.0; t.op.in_len(&grid)];
                tmp.resize(atom.out_len, 0.0);
                t.op.apply(&grid, &ones, &mut tmp, true);
                tmp2.resize(t.op.in_len(&grid), 0.0);
                t.op.transpose(&grid, &tmp, &mut tmp2, true);
                // |K|^T |K| 1 bounds the diagonal of K^T K from above; exact for
                // single-entry rows such as the identity.
                let sq: f64 = match &t.op {
                    Op::Blur(k) => k.iter().map(|v| v * v).sum::<f64>().powi(grid.ndim() as i32),
                    _ => -1.0,
                };
                for (d, v) in diag[i].iter_mut().zip(&tmp2) {
                    *d += t.coef * t.coef * if sq >= 0.0 { sq } else { *v };
                }
            }
        }
        for &b in &self.fid_blocks {
            let i = self.blocks.iter().position(|&x| x == b).expect("fidelity block");
            diag[i].iter_mut().for_each(|d| *d += self.fid_weight);
        }
        diag.into_iter().map(|d| d.into_iter().map(|v| if v > 0.0 { 1.0 / v } else { 1.0 }).collect()).collect()
    }

    /// `out = M x` on the unknown blocks (`x`, `out` indexed by structure block).
    fn apply(&mut self, s: &SplitStructure, x: &[Vec<f64>], out: &mut [Vec<f64>]) {
        let grid = s.grid;
        for &b in &self.blocks {
            for ((o, v), it) in out[b].iter_mut().zip(&x[b]).zip(&self.inv_tau[b]) {
                *o = self.theta * it * v;
            }
        }
        for &a in &self.atoms {
            let atom = &s.atoms[a];
            let terms: Vec<&crate::regularizers::split::Term> =
                atom.terms.iter().filter(|t| self.blocks.contains(&t.block)).collect();
            if terms.is_empty() {
                continue;
            }
            let shared = terms.windows(2).all(|w| w[0].op == w[1].op);
            let mut acc = std::mem::take(&mut self.scratch);
            acc.resize(atom.out_len, 0.0);
            if shared {
                // K_a x = op(sum_t coef_t x_t): one application and one transpose.
                let in_len = terms[0].op.in_len(&grid);
                let mut combined = vec![0.0; in_len];
                for t in &terms {
                    linalg::axpy(t.coef, &x[t.block], &mut combined);
                }
                terms[0].op.apply(&grid, &combined, &mut acc, false);
                self.scratch2.resize(in_len, 0.0);
                terms[0].op.transpose(&grid, &acc, &mut self.scratch2, false);
                for t in &terms {
                    linalg::axpy(t.coef, &self.scratch2, &mut out[t.block]);
                }
            } else {
                acc.fill(0.0);
                for t in &terms {
                    self.scratch2.resize(atom.out_len, 0.0);
                    t.op.apply(&grid, &x[t.block], &mut self.scratch2, false);
                    linalg::axpy(t.coef, &self.scratch2, &mut acc);
                }
                for t in &terms {
                    self.scratch2.resize(s.block_lens[t.block], 0.0);
                    t.op.transpose(&grid, &acc, &mut self.scratch2, false);
                    linalg::axpy(t.coef, &self.scratch2, &mut out[t.block]);
                }
            }
            self.scratch = acc;
        }
        if !self.fid_blocks.is_empty() {
            let n = x[self.fid_blocks[0]].len();
            for i in 0..n {
                let sum: f64 = self.fid_blocks.iter().map(|&b| x[b][i]).sum();
                for &b in &self.fid_blocks {
                    out[b][i] += self.fid_weight * sum;
                }
            }
        }
    }

    fn precondition(&self, r: &[Vec<f64>], out: &mut [Vec<f64>]) {
        match &self.pre {
            Preconditioner::Jacobi(d) => {
                for (i, &b) in self.blocks.iter().enumerate() {
                    for ((o, v), w) in out[b].iter_mut().zip(&r[b]).zip(&d[i]) {
                        *o = v * w;
                    }
                }
            }
            Preconditioner::Spectral { cosine, inverses } => {
                let nb = self.blocks.len();
                let mut hat: Vec<Vec<f64>> = self
                    .blocks
                    .iter()
                    .map(|&b| {
                        let mut v = r[b].clone();
                        cosine.forward(&mut v);
                        v
                    })
                    .collect();
                let n = hat[0].len();
                let mut tmp = vec![0.0; nb];
                for idx in 0..n {
                    let inv = &inverses[idx * nb * nb..(idx + 1) * nb * nb];
                    for i in 0..nb {
                        tmp[i] = (0..nb).map(|j| inv[i * nb + j] * hat[j][idx]).sum();
                    }
                    for i in 0..nb {
                        hat[i][idx] = tmp[i];
                    }
                }
                for (i, &b) in self.blocks.iter().enumerate() {
                    cosine.inverse(&mut hat[i]);
                    out[b].copy_from_slice(&hat[i]);
                }
            }
        }
    }

    /// Preconditioned CG from the initial guess in `x`; returns the iteration count.
    pub fn solve(&mut self, s: &SplitStructure, rhs: &[Vec<f64>], x: &mut [Vec<f64>], tol: f64, max_iter: usize) -> usize {
        let dot = |a: &[Vec<f64>], b: &[Vec<f64>], blocks: &[usize]| -> f64 {
            blocks.iter().map(|&k| linalg::dot(&a[k], &b[k])).sum()
        };
        let blocks = self.blocks.clone();
        let zero = || -> Vec<Vec<f64>> { s.block_lens.iter().map(|&n| vec![0.0; n]).collect() };
        let b_norm = dot(rhs, rhs, &blocks).sqrt();
        if b_norm == 0.0 {
            blocks.iter().for_each(|&b| x[b].fill(0.0));
            return 0;
        }
        let mut ax = zero();
        self.apply(s, x, &mut ax);
        let mut r = zero();
        for &b in &blocks {
            for i in 0..r[b].len() {
                r[b][i] = rhs[b][i] - ax[b][i];
            }
        }
        let mut z = zero();
        self.precondition(&r, &mut z);
        let mut p = z.clone();
        let mut rz = dot(&r, &z, &blocks);
        let target = tol * b_norm;
        for it in 0..max_iter {
            if dot(&r, &r, &blocks).sqrt() <= target {
                return it;
            }
            self.apply(s, &p, &mut ax);
            let pap = dot(&p, &ax, &blocks);
            if pap <= 0.0 {
                return it;
            }
            let alpha = rz / pap;
            for &b in &blocks {
                linalg::axpy(alpha, &p[b], &mut x[b]);
                linalg::axpy(-alpha, &ax[b], &mut r[b]);
            }
            self.precondition(&r, &mut z);
            let rz_new = dot(&r, &z, &blocks);
            let beta = rz_new / rz;
            rz = rz_new;
            for &b in &blocks {
                for i in 0..p[b].len() {
                    p[b][i] = z[b][i] + beta * p[b][i];
                }
            }
        }
        max_iter
    }
}

/// Inverse of a small symmetric positive definite matrix (Gauss-Jordan).
fn invert_spd(m: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut a = m.to_vec();
    let mut inv = vec![0.0; n * n];
    (0..n).for_each(|i| inv[i * n + i] = 1.0);
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))?;
        if a[piv * n + col].abs() < 1e-300 {
            return None;
        }
        for k in 0..n {
            a.swap(col * n + k, piv * n + k);
            inv.swap(col * n + k, piv * n + k);
        }
        let d = a[col * n + col];
        for k in 0..n {
            a[col * n + k] /= d;
            inv[col * n + k] /= d;
        }
        for row in 0..n {
            if row != col {
                let f = a[row * n + col];
                if f != 0.0 {
                    for k in 0..n {
                        a[row * n + k] -= f * a[col * n + k];
                        inv[row * n + k] -= f * inv[col * n + k];
                    }
                }
            }
        }
    }
    Some(inv)
}
