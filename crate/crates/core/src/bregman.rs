//! Classical Bregman iterations for `J = g □ h` with discrepancy stopping.
//!
//! Each step solves the Tikhonov problem with the data shifted by the
//! accumulated residuals, `min lambda/2 |A(u+v) - (f + zeta_{k-1})|^2 + g(u) + h(v)`
//! with `zeta_k = sum_{i<=k} (f - A(u_i + v_i))`; this is the same iteration
//! as tilting `J` by `xi_{k-1} = lambda A^T zeta_{k-1}` at every step.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::fields::Field;
use crate::solvers::{solve_tikhonov_warm, DecompositionProblem, PdhgState, SolverConfig};

#[derive(Clone, Debug)]
pub struct BregmanState {
    /// 1-based step index.
    pub k: usize,
    pub u: Field,
    pub v: Field,
    /// Subgradient `xi_k = lambda A^T zeta_k` of `J` at `u_k + v_k`.
    pub xi: Field,
    /// `|A(u_k + v_k) - f|` against the unshifted data.
    pub residual: f64,
    pub g_value: f64,
    pub h_value: f64,
    /// `lambda/2 residual^2 + g_value + h_value`
    pub objective: f64,
    pub inner_iters: usize,
}

#[derive(Clone, Debug)]
pub struct BregmanRun {
    pub lambda: f64,
    pub states: Vec<BregmanState>,
    /// 1-based index of the first state meeting the stopping level, if any.
    pub stop_index: Option<usize>,
    /// Accumulated residual `zeta_k` of the last state.
    pub zeta: Field,
}

impl BregmanRun {
    /// The state the iteration stopped at (the last one when it never did).
    pub fn stopped(&self) -> &BregmanState {
        &self.states[self.stop_index.unwrap_or(self.states.len()) - 1]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,residual,g_value,h_value,objective\n");
        for s in &self.states {
            let _ = writeln!(out, "{},{:e},{:e},{:e},{:e}", s.k, s.residual, s.g_value, s.h_value, s.objective);
        }
        out
    }
}

/// Smallest 1-based `k` with `residuals[k-1] < tau * delta`.
pub fn discrepancy_index(residuals: &[f64], tau: f64, delta: f64) -> Option<usize> {
    let level = tau * delta;
    residuals.iter().position(|&r| r < level).map(|i| i + 1)
}

/// Bregman iterations stopped by the discrepancy principle `residual < tau delta`
/// or after `max_k` steps.
pub fn bregman_run(
    prob: &DecompositionProblem,
    lambda: f64,
    tau: f64,
    max_k: usize,
    cfg: &SolverConfig,
) -> Result<BregmanRun> {
    if prob.delta > 0.0 && !(tau > 1.0) {
        return Err(Error::InvalidArgument(format!("discrepancy factor must exceed 1, got {tau}")));
    }
    bregman_until(prob, lambda, |r| r < tau * prob.delta, max_k, cfg)
}

/// Bregman iterations until `stop(residual)` holds or `max_k` steps are done.
pub fn bregman_until(
    prob: &DecompositionProblem,
    lambda: f64,
    stop: impl Fn(f64) -> bool,
    max_k: usize,
    cfg: &SolverConfig,
) -> Result<BregmanRun> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    if max_k == 0 {
        return Err(Error::InvalidArgument("at least one Bregman step is required".into()));
    }
    let grid = prob.f_delta.grid();
    let mut zeta = Field::zeros(grid);
    let mut states = Vec::new();
    let mut warm: Option<PdhgState> = None;
    let mut stop_index = None;
    for k in 1..=max_k {
        let shifted = prob.with_data(prob.f_delta.add(&zeta));
        let r = solve_tikhonov_warm(&shifted, lambda, cfg, warm.as_ref())?;
        let x = r.u.add(&r.v);
        let misfit = prob.f_delta.sub(&prob.a.apply(&x));
        let residual = misfit.norm();
        zeta = zeta.add(&misfit);
        let (g_value, h_value) = r.component_values(prob)?;
        states.push(BregmanState {
            k,
            xi: prob.a.adjoint(&zeta).scale(lambda),
            residual,
            g_value,
            h_value,
            objective: 0.5 * lambda * residual * residual + g_value + h_value,
            inner_iters: r.inner_iters,
            u: r.u,
            v: r.v,
        });
        warm = Some(r.state);
        if stop(residual) {
            stop_index = Some(k);
            break;
        }
    }
    Ok(BregmanRun { lambda, states, stop_index, zeta })
}
