//! Flat-slice kernels for the discrete differential operators.
//!
//! Every kernel takes an `abs` flag. With `abs = true` each coefficient is
//! replaced by its absolute value, which gives `|K| x` and `|K|^T y`; the
//! solver uses those to build its diagonal step sizes.
//!
//! Gradient channels are forward differences with the last difference along
//! each axis dropped (stored as 0). The symmetrized gradient acts on the
//! support of the gradient: channel `c` of a vector field only exists where
//! the forward difference along axis `c` exists, and each tensor component is
//! a forward difference over that support. Off-diagonal tensor entries are
//! multiplied by `offdiag` (1 for the plain component, `sqrt(2)` for the
//! isometric embedding used inside the solver).

use super::grid::Grid;

#[inline]
fn minus(abs: bool) -> f64 {
    if abs {
        1.0
    } else {
        -1.0
    }
}

pub fn gradient(grid: &Grid, u: &[f64], out: &mut [f64], abs: bool) {
    let (r, c) = grid.shape();
    let n = r * c;
    let s = minus(abs);
    for i in 0..r {
        for j in 0..c {
            let idx = i * c + j;
            out[idx] = if i + 1 < r { u[idx + c] + s * u[idx] } else { 0.0 };
        }
    }
    if grid.ndim() == 2 {
        for i in 0..r {
            for j in 0..c {
                let idx = i * c + j;
                out[n + idx] = if j + 1 < c { u[idx + 1] + s * u[idx] } else { 0.0 };
            }
        }
    }
}

/// Transpose of [`gradient`] (not the divergence; `div = -gradient_t`).
pub fn gradient_t(grid: &Grid, y: &[f64], out: &mut [f64], abs: bool) {
    let (r, c) = grid.shape();
    let n = r * c;
    let s = minus(abs);
    out[..n].fill(0.0);
    for i in 0..r.saturating_sub(1) {
        for j in 0..c {
            let idx = i * c + j;
            out[idx + c] += y[idx];
            out[idx] += s * y[idx];
        }
    }
    if grid.ndim() == 2 {
        for i in 0..r {
            for j in 0..c - 1 {
                let idx = i * c + j;
                out[idx + 1] += y[n + idx];
                out[idx] += s * y[n + idx];
            }
        }
    }
}

/// Projection onto the gradient support (self-adjoint).
pub fn support(grid: &Grid, w: &[f64], out: &mut [f64]) {
    let n = grid.len();
    for ch in 0..grid.ndim() {
        for idx in 0..n {
            out[ch * n + idx] = if grid.has_forward(ch, idx) { w[ch * n + idx] } else { 0.0 };
        }
    }
}

pub fn sym_gradient(grid: &Grid, w: &[f64], out: &mut [f64], abs: bool, offdiag: f64) {
    let (r, c) = grid.shape();
    let n = r * c;
    let s = minus(abs);
    let (w0, rest) = w.split_at(n);
    for i in 0..r {
        for j in 0..c {
            let idx = i * c + j;
            out[idx] = if i + 2 < r { w0[idx + c] + s * w0[idx] } else { 0.0 };
        }
    }
    if grid.ndim() == 2 {
        let w1 = &rest[..n];
        let k = 0.5 * offdiag.abs();
        for i in 0..r {
            for j in 0..c {
                let idx = i * c + j;
                out[n + idx] = if j + 2 < c { w1[idx + 1] + s * w1[idx] } else { 0.0 };
                out[2 * n + idx] = if i + 1 < r && j + 1 < c {
                    k * (w0[idx + 1] + s * w0[idx] + w1[idx + c] + s * w1[idx])
                } else {
                    0.0
                };
            }
        }
    }
}

pub fn sym_gradient_t(grid: &Grid, m: &[f64], out: &mut [f64], abs: bool, offdiag: f64) {
    let (r, c) = grid.shape();
    let n = r * c;
    let s = minus(abs);
    let d = grid.ndim();
    out[..d * n].fill(0.0);
    for i in 0..r.saturating_sub(2) {
        for j in 0..c {
            let idx = i * c + j;
            out[idx + c] += m[idx];
            out[idx] += s * m[idx];
        }
    }
    if d == 2 {
        let k = 0.5 * offdiag.abs();
        for i in 0..r {
            for j in 0..c.saturating_sub(2) {
                let idx = i * c + j;
                out[n + idx + 1] += m[n + idx];
                out[n + idx] += s * m[n + idx];
            }
        }
        for i in 0..r - 1 {
            for j in 0..c - 1 {
                let idx = i * c + j;
                let h = k * m[2 * n + idx];
                out[idx + 1] += h;
                out[idx] += s * h;
                out[n + idx + c] += h;
                out[n + idx] += s * h;
            }
        }
    }
}

/// The `C v` term of the oscillatory TGV, `C = omega omega^T`, with each
/// component sampled where the matching symmetrized-gradient component lives:
/// the diagonal entries one node ahead along their axis, the off-diagonal
/// entry at the cell centre (mean of the four corners).
pub fn oscillation(grid: &Grid, omega: &[f64], v: &[f64], out: &mut [f64], abs: bool, offdiag: f64) {
    let (r, c) = grid.shape();
    let n = r * c;
    let c00 = omega[0] * omega[0];
    for i in 0..r {
        for j in 0..c {
            let idx = i * c + j;
            out[idx] = if i + 2 < r { c00 * v[idx + c] } else { 0.0 };
        }
    }
    if grid.ndim() == 2 {
        let c11 = omega[1] * omega[1];
        let mut c01 = omega[0] * omega[1];
        if abs {
            c01 = c01.abs();
        }
        let k = 0.25 * c01 * offdiag.abs();
        for i in 0..r {
            for j in 0..c {
                let idx = i * c + j;
                out[n + idx] = if j + 2 < c { c11 * v[idx + 1] } else { 0.0 };
                out[2 * n + idx] = if i + 1 < r && j + 1 < c {
                    k * (v[idx] + v[idx + 1] + v[idx + c] + v[idx + c + 1])
                } else {
                    0.0
                };
            }
        }
    }
}

pub fn oscillation_t(grid: &Grid, omega: &[f64], m: &[f64], out: &mut [f64], abs: bool, offdiag: f64) {
    let (r, c) = grid.shape();
    let n = r * c;
    out[..n].fill(0.0);
    let c00 = omega[0] * omega[0];
    for i in 0..r.saturating_sub(2) {
        for j in 0..c {
            let idx = i * c + j;
            out[idx + c] += c00 * m[idx];
        }
    }
    if grid.ndim() == 2 {
        let c11 = omega[1] * omega[1];
        let mut c01 = omega[0] * omega[1];
        if abs {
            c01 = c01.abs();
        }
        let k = 0.25 * c01 * offdiag.abs();
        for i in 0..r {
            for j in 0..c.saturating_sub(2) {
                let idx = i * c + j;
                out[idx + 1] += c11 * m[n + idx];
            }
        }
        for i in 0..r - 1 {
            for j in 0..c - 1 {
                let idx = i * c + j;
                let h = k * m[2 * n + idx];
                out[idx] += h;
                out[idx + 1] += h;
                out[idx + c] += h;
                out[idx + c + 1] += h;
            }
        }
    }
}

/// Separable periodic convolution with a symmetric-or-not 1D kernel of odd
/// length `2 * radius + 1`, applied along every axis of the grid.
/// `transpose = true` gives the periodic correlation (the exact adjoint).
pub fn periodic_blur(grid: &Grid, kernel: &[f64], x: &[f64], out: &mut [f64], transpose: bool) {
    let (r, c) = grid.shape();
    let radius = kernel.len() / 2;
    let wrap = |k: isize, len: usize| k.rem_euclid(len as isize) as usize;
    // Convolution reads x[i - off], correlation x[i + off]; with a flipped
    // kernel both become a correlation.
    let taps: Vec<f64> = if transpose { kernel.to_vec() } else { kernel.iter().rev().copied().collect() };

    let mut tmp = vec![0.0; r * c];
    for i in 0..r {
        let row_out = &mut tmp[i * c..(i + 1) * c];
        for (t, &kt) in taps.iter().enumerate() {
            let src = wrap(i as isize + t as isize - radius as isize, r);
            for (o, v) in row_out.iter_mut().zip(&x[src * c..(src + 1) * c]) {
                *o += kt * v;
            }
        }
    }
    if grid.ndim() == 1 {
        out[..r].copy_from_slice(&tmp);
        return;
    }
    let mut ext = vec![0.0; c + 2 * radius];
    for i in 0..r {
        let row = &tmp[i * c..(i + 1) * c];
        for (e, slot) in ext.iter_mut().enumerate() {
            *slot = row[wrap(e as isize - radius as isize, c)];
        }
        let dst = &mut out[i * c..(i + 1) * c];
        for (j, o) in dst.iter_mut().enumerate() {
            *o = taps.iter().zip(&ext[j..j + taps.len()]).map(|(k, v)| k * v).sum();
        }
    }
}
