//! Quality metrics and the correlation-based stopping rule.

use crate::error::{Error, Result};
use crate::fields::Field;

/// Normalized periodic cross-correlation over all lags.
///
/// For a line of length `N` the lags run over `-(N-1)..=N-1`; for an `R x C`
/// image over `(-(R-1)..=R-1) x (-(C-1)..=C-1)`, stored row-major with the
/// most negative lag first.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationMap {
    pub values: Vec<f64>,
    /// Lag-grid shape `(2R-1, 2C-1)`; a line of length `N` gives `(2N-1, 1)`.
    pub shape: (usize, usize),
    /// `|u| |v|`
    pub norm_uv: f64,
}

impl CorrelationMap {
    /// Value at lag `(k, m)`; for lines `m` must be 0.
    pub fn at(&self, k: isize, m: isize) -> f64 {
        let (r, c) = self.shape;
        let (hr, hc) = ((r as isize - 1) / 2, (c as isize - 1) / 2);
        self.values[((k + hr) as usize) * c + (m + hc) as usize]
    }
}

/// `rho_{k,m}(u, v) = sum_{i,j} u_{i,j} v_{i+k, j+m} / (|u| |v|)` with `v`
/// extended periodically.
pub fn ncc(u: &Field, v: &Field) -> Result<CorrelationMap> {
    u.ensure_same_grid(v)?;
    let norm_uv = u.norm() * v.norm();
    if norm_uv == 0.0 {
        return Err(Error::ZeroSignal);
    }
    let (rows, cols) = u.grid().shape();
    let (lr, lc) = (2 * rows - 1, 2 * cols - 1);
    // With v periodic, lags k and k - rows coincide: evaluate each distinct
    // circular lag once and copy it to both positions.
    let circular = circular_correlation(u.values(), v.values(), rows, cols);
    let mut values = vec![0.0; lr * lc];
    for (a, k) in (-(rows as isize - 1)..rows as isize).enumerate() {
        let kk = k.rem_euclid(rows as isize) as usize;
        for (b, m) in (-(cols as isize - 1)..cols as isize).enumerate() {
            let mm = m.rem_euclid(cols as isize) as usize;
            values[a * lc + b] = circular[kk * cols + mm] / norm_uv;
        }
    }
    Ok(CorrelationMap { values, shape: (lr, lc), norm_uv })
}

/// `c[k, m] = sum_{i,j} u[i, j] v[(i+k) mod R, (j+m) mod C]` for `0 <= k < R`, `0 <= m < C`.
fn circular_correlation(u: &[f64], v: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for k in 0..rows {
        for m in 0..cols {
            let mut acc = 0.0;
            for i in 0..rows {
                let ii = (i + k) % rows;
                let (ur, vr) = (&u[i * cols..(i + 1) * cols], &v[ii * cols..(ii + 1) * cols]);
                for (j, &x) in ur.iter().enumerate() {
                    let jj = if j + m < cols { j + m } else { j + m - cols };
                    acc += x * vr[jj];
                }
            }
            out[k * cols + m] = acc;
        }
    }
    out
}

/// `|rho(u, v)|^2 / (R C)` (`/ N` for lines).
pub fn scalar_correlation(u: &Field, v: &Field) -> Result<f64> {
    let rho = ncc(u, v)?;
    let n = u.grid().len() as f64;
    Ok(rho.values.iter().map(|r| r * r).sum::<f64>() / n)
}

/// First 1-based index `l >= 2` with `s[l-1] >= s[l] <= s[l+1]`, strict on at
/// least one side.
pub fn first_local_min(series: &[f64]) -> Option<usize> {
    (1..series.len().saturating_sub(1))
        .find(|&i| {
            let (a, b, c) = (series[i - 1], series[i], series[i + 1]);
            a >= b && b <= c && (a > b || c > b)
        })
        .map(|i| i + 1)
}

/// Upper limit reported for an exact match.
pub const PSNR_CAP: f64 = 300.0;

/// `10 log10(peak^2 / MSE)` with `peak` the dynamic range of `reference`.
pub fn psnr(x: &Field, reference: &Field) -> Result<f64> {
    x.ensure_same_grid(reference)?;
    let peak = reference.max() - reference.min();
    if peak <= 0.0 {
        return Err(Error::DegenerateReference);
    }
    let mse = x.sub(reference).values().iter().map(|d| d * d).sum::<f64>() / x.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (peak * peak / mse).log10()).min(PSNR_CAP))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundCheck {
    pub l: usize,
    pub h_value: f64,
    pub bound: f64,
    pub ok: bool,
}

/// Compares `h(v_l)` against `h(0) + g(x_bar) / l` for `l = 1, 2, ...`.
pub fn bound_tracker(h_values: &[f64], h0: f64, g_xbar: f64) -> Vec<BoundCheck> {
    h_values
        .iter()
        .enumerate()
        .map(|(i, &h)| {
            let l = i + 1;
            let bound = h0 + g_xbar / l as f64;
            BoundCheck { l, h_value: h, bound, ok: h <= bound * (1.0 + 1e-3) }
        })
        .collect()
}

/// Sum of the component PSNRs, the quantity the stopping rule is judged by.
pub fn psnr_sum(u: &Field, v: &Field, u_ref: &Field, v_ref: &Field) -> Result<f64> {
    Ok(psnr(u, u_ref)? + psnr(v, v_ref)?)
}
