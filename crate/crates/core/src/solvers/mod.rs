//! Tikhonov and Morozov solvers for the two-component decomposition problem.

mod admm;
mod pdhg;
mod precond;

pub use pdhg::{pdhg, PdhgOutcome, PdhgState};

use crate::error::{Error, Result};
use crate::fields::{Field, ForwardOperator};
use crate::regularizers::split::{Atom, Op, Penalty, PrimalFidelity, SplitStructure, Term};
use crate::regularizers::{Argument, Regularizer};

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub max_inner_iters: usize,
    /// Estimated relative distance to the optimal objective: the relative
    /// objective change per iteration times the iteration count.
    pub rel_tol: f64,
    /// Normalized primal/dual fixed-point residual.
    pub kkt_tol: f64,
    /// Absolute residual below which a side counts as converged regardless of scale.
    pub abs_tol: f64,
    /// Objective magnitude below which changes are measured absolutely.
    pub objective_floor: f64,
    pub check_every: usize,
    pub adaptive_balance: bool,
    /// Fail with `NonConverged` instead of returning an unconverged iterate.
    pub strict: bool,
    pub bisection_margin: f64,
    pub bisection_max_steps: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub seed: u64,
    /// Keep quadratic atoms in the primal step (solved by conjugate gradients)
    /// instead of dualizing them.
    pub quadratic_in_primal: bool,
    pub cg_tol: f64,
    pub cg_max_iters: usize,
    pub backend: Backend,
    pub admm_check_every: usize,
    pub admm_prox_eps: f64,
    /// Over-relaxation factor in (0, 2).
    pub admm_relaxation: f64,
    /// Residual ratio that triggers a penalty update.
    pub admm_balance_ratio: f64,
    /// Nesterov-accelerated ADMM with restarts (disables over-relaxation).
    pub admm_accelerate: bool,
}

/// Which iteration runs a splitting structure.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Backend {
    Pdhg,
    Admm,
    /// ADMM when every nonsmooth atom acts through identities or gradients on
    /// scalar fields (well-preconditioned linear solves), PDHG otherwise.
    Auto,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_inner_iters: 5000,
            rel_tol: 1e-6,
            kkt_tol: 1e-4,
            abs_tol: 1e-12,
            objective_floor: 1e-12,
            check_every: 50,
            adaptive_balance: true,
            strict: true,
            bisection_margin: 1e-3,
            bisection_max_steps: 60,
            lambda_min: 1e-8,
            lambda_max: 1e12,
            seed: 0,
            quadratic_in_primal: true,
            cg_tol: 1e-10,
            cg_max_iters: 500,
            backend: Backend::Auto,
            admm_check_every: 10,
            admm_prox_eps: 1e-10,
            admm_relaxation: 1.7,
            admm_balance_ratio: 10.0,
            admm_accelerate: false,
        }
    }
}

impl SolverConfig {
    /// Settings for reference-quality solves on small problems.
    pub fn tight() -> Self {
        Self { max_inner_iters: 200_000, rel_tol: 1e-11, kkt_tol: 1e-7, ..Self::default() }
    }

    /// Settings for the inner minimization over the auxiliary field of TGV values.
    pub fn auxiliary() -> Self {
        Self { max_inner_iters: 50_000, rel_tol: 1e-9, kkt_tol: 1e-5, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.max_inner_iters > 0
            && self.rel_tol > 0.0
            && self.kkt_tol > 0.0
            && self.check_every > 0
            && self.bisection_margin > 0.0
            && self.bisection_max_steps > 0
            && self.lambda_min > 0.0
            && self.lambda_max > self.lambda_min;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid solver configuration {self:?}")))
        }
    }
}

#[derive(Clone, Debug)]
pub struct DecompositionProblem {
    pub a: ForwardOperator,
    pub f_delta: Field,
    pub delta: f64,
    pub g: Regularizer,
    pub h: Regularizer,
}

impl DecompositionProblem {
    pub fn new(a: ForwardOperator, f_delta: Field, delta: f64, g: Regularizer, h: Regularizer) -> Result<Self> {
        if !(delta.is_finite() && delta >= 0.0) {
            return Err(Error::InvalidArgument(format!("noise level must be >= 0, got {delta}")));
        }
        for reg in [&g, &h] {
            if let Some(t) = &reg.tilt {
                f_delta.ensure_same_grid(&t.p)?;
            }
        }
        Ok(Self { a, f_delta, delta, g, h })
    }

    /// The same problem with `g` and `h` replaced.
    pub fn with_regularizers(&self, g: Regularizer, h: Regularizer) -> Self {
        Self { g, h, ..self.clone() }
    }

    /// The same problem with shifted data.
    pub fn with_data(&self, f: Field) -> Self {
        Self { f_delta: f, ..self.clone() }
    }

    pub fn residual(&self, u: &Field, v: &Field) -> f64 {
        self.a.apply(&u.add(v)).sub(&self.f_delta).norm()
    }

    /// Splitting structure of `lambda/2 |A(u+v) - f|^2 + g(u) + h(v)`; block 0
    /// is `u`, block 1 is `v`.
    pub fn structure(&self, lambda: f64) -> Result<SplitStructure> {
        Ok(self.structure_with_aux(lambda)?.0)
    }

    /// [`DecompositionProblem::structure`] together with the block indices of
    /// the auxiliary fields of `g` and `h` (TGV variants).
    pub fn structure_with_aux(&self, lambda: f64) -> Result<(SplitStructure, [Option<usize>; 2])> {
        let grid = self.f_delta.grid();
        let mut s = SplitStructure::new(grid);
        let u = s.add_block("u", grid.len());
        let v = s.add_block("v", grid.len());
        self.g.contribute(&mut s, Argument::block(u))?;
        let g_aux = (s.block_lens.len() > 2).then_some(2);
        let before = s.block_lens.len();
        self.h.contribute(&mut s, Argument::block(v))?;
        let h_aux = (s.block_lens.len() > before).then_some(before);
        if self.a.is_identity() {
            s.fidelity = Some(PrimalFidelity {
                blocks: vec![u, v],
                weight: lambda,
                target: self.f_delta.values().to_vec(),
            });
        } else {
            let w = lambda.sqrt();
            let op = Op::forward(&self.a);
            s.add_atom(Atom {
                label: "data",
                terms: vec![Term { block: u, coef: w, op: op.clone() }, Term { block: v, coef: w, op }],
                out_len: grid.len(),
                offset: self.f_delta.values().iter().map(|f| -w * f).collect(),
                penalty: Penalty::HalfSquared,
            });
        }
        Ok((s, [g_aux, h_aux]))
    }
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub u: Field,
    pub v: Field,
    /// `|A(u+v) - f|`
    pub residual: f64,
    pub lambda: f64,
    pub inner_iters: usize,
    pub converged: bool,
    /// Morozov only: the constraint is inactive (residual below the noise
    /// level at the smallest multiplier).
    pub interior: bool,
    /// Tikhonov objective at the returned point (tilts included).
    pub objective: f64,
    pub state: PdhgState,
    /// Solver blocks holding the auxiliary fields of `g` and `h`, if any.
    pub aux_blocks: [Option<usize>; 2],
}

impl SolveResult {
    /// Auxiliary field of `g` (`which = 0`) or `h` (`which = 1`).
    pub fn aux(&self, which: usize) -> Option<&[f64]> {
        self.aux_blocks[which].map(|b| self.state.primal[b].as_slice())
    }

    /// `(g(u), h(v))`, with auxiliary minimizations warm-started from the solve.
    pub fn component_values(&self, prob: &DecompositionProblem) -> Result<(f64, f64)> {
        let g = prob.g.eval_warm(&self.u, self.aux(0))?.0;
        let h = prob.h.eval_warm(&self.v, self.aux(1))?.0;
        Ok((g, h))
    }
}

/// Minimizes `lambda/2 |A(u+v) - f|^2 + g(u) + h(v)` from zeros.
pub fn solve_tikhonov(prob: &DecompositionProblem, lambda: f64, cfg: &SolverConfig) -> Result<SolveResult> {
    solve_tikhonov_warm(prob, lambda, cfg, None)
}

/// As [`solve_tikhonov`], starting from a previous solver state.
pub fn solve_tikhonov_warm(
    prob: &DecompositionProblem,
    lambda: f64,
    cfg: &SolverConfig,
    warm: Option<&PdhgState>,
) -> Result<SolveResult> {
    cfg.validate()?;
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    let (s, aux_blocks) = prob.structure_with_aux(lambda)?;
    let mut out = pdhg(&s, warm, cfg)?;
    if prob.g.is_shift_invariant() && prob.h.is_shift_invariant() {
        normalize_split(&mut out.state);
        out.objective = s.objective(&out.state.primal);
    }
    let grid = prob.f_delta.grid();
    let u = Field::new(grid, out.state.primal[0].clone())?;
    let v = Field::new(grid, out.state.primal[1].clone())?;
    let residual = prob.residual(&u, &v);
    Ok(SolveResult {
        u,
        v,
        residual,
        lambda,
        inner_iters: out.iterations,
        converged: out.converged,
        interior: false,
        objective: out.objective,
        state: out.state,
        aux_blocks,
    })
}

/// Moves a constant between the components so that `mean(u) = mean(v)`.
///
/// When `g` and `h` both ignore constants, `(u + c, v - c)` is optimal for
/// every `c`; this picks the representative of least norm.
fn normalize_split(state: &mut PdhgState) {
    let n = state.primal[0].len() as f64;
    let c = (state.primal[1].iter().sum::<f64>() - state.primal[0].iter().sum::<f64>()) / (2.0 * n);
    state.primal[0].iter_mut().for_each(|x| *x += c);
    state.primal[1].iter_mut().for_each(|x| *x -= c);
}

/// Minimizes `g(u) + h(v)` subject to `|A(u+v) - f| <= delta` by searching the
/// Tikhonov multiplier `lambda`.
pub fn solve_morozov(prob: &DecompositionProblem, cfg: &SolverConfig) -> Result<SolveResult> {
    solve_morozov_warm(prob, cfg, None)
}

/// As [`solve_morozov`], starting the multiplier search at `start.1` from solver
/// state `start.0`.
pub fn solve_morozov_warm(
    prob: &DecompositionProblem,
    cfg: &SolverConfig,
    start: Option<(&PdhgState, f64)>,
) -> Result<SolveResult> {
    cfg.validate()?;
    let delta = prob.delta;
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument("Morozov solve needs a positive noise level".into()));
    }
    let margin = cfg.bisection_margin;
    let (lo_ok, hi_ok) = (delta * (1.0 - margin), delta * (1.0 + margin));
    let mut total_iters = 0usize;
    let mut solves = 0usize;
    let mut last_state = start.map(|(s, _)| s.clone());
    let solve = |lambda: f64, warm: &mut Option<PdhgState>| -> Result<SolveResult> {
        let r = solve_tikhonov_warm(prob, lambda, cfg, warm.as_ref())?;
        *warm = Some(r.state.clone());
        Ok(r)
    };
    let finish = |mut r: SolveResult, iters: usize| {
        r.inner_iters = iters;
        r
    };

    let lambda0 = start.map_or(1.0, |(_, l)| l).clamp(cfg.lambda_min, cfg.lambda_max);
    let first = solve(lambda0, &mut last_state)?;
    solves += 1;
    total_iters += first.inner_iters;
    if (lo_ok..=hi_ok).contains(&first.residual) {
        return Ok(finish(first, total_iters));
    }

    // Bracket: `lo` has residual above delta, `hi` below.
    let (mut lo, mut hi);
    // From a warm start the multiplier is usually close: expand gently first.
    let mut factor = if start.is_some() { 1.05f64 } else { 10.0 };
    let mut grow = || {
        let f = factor;
        factor = (factor * factor).min(10.0);
        f
    };
    if first.residual > delta {
        let mut prev = first;
        loop {
            let lambda = (prev.lambda * grow()).min(cfg.lambda_max);
            if prev.lambda >= cfg.lambda_max * (1.0 - 1e-12) {
                return Err(Error::Infeasible { residual: prev.residual, delta });
            }
            let next = solve(lambda, &mut last_state)?;
            solves += 1;
            total_iters += next.inner_iters;
            if next.residual > prev.residual * (1.0 + 1e-4) + 1e-14 {
                return Err(Error::BracketFailure(format!(
                    "residual grew from {:.6e} to {:.6e} when increasing the multiplier to {lambda:.3e}",
                    prev.residual, next.residual
                )));
            }
            if (lo_ok..=hi_ok).contains(&next.residual) {
                return Ok(finish(next, total_iters));
            }
            if next.residual < delta {
                lo = prev;
                hi = next;
                break;
            }
            prev = next;
        }
    } else {
        let mut prev = first;
        loop {
            let lambda = (prev.lambda / grow()).max(cfg.lambda_min);
            if prev.lambda <= cfg.lambda_min * (1.0 + 1e-12) {
                let mut r = prev;
                r.interior = true;
                return Ok(finish(r, total_iters));
            }
            let next = solve(lambda, &mut last_state)?;
            solves += 1;
            total_iters += next.inner_iters;
            if next.residual + 1e-14 < prev.residual * (1.0 - 1e-4) {
                return Err(Error::BracketFailure(format!(
                    "residual shrank from {:.6e} to {:.6e} when decreasing the multiplier to {lambda:.3e}",
                    prev.residual, next.residual
                )));
            }
            if (lo_ok..=hi_ok).contains(&next.residual) {
                return Ok(finish(next, total_iters));
            }
            if next.residual > delta {
                lo = next;
                hi = prev;
                break;
            }
            prev = next;
        }
    }

    // Illinois false position on (ln lambda, ln r - ln delta).
    let phi = |r: &SolveResult| (r.residual.max(1e-300) / delta).ln();
    let (mut f_lo, mut f_hi) = (phi(&lo), phi(&hi));
    let mut side = 0i32;
    while solves < cfg.bisection_max_steps {
        let (t_lo, t_hi) = (lo.lambda.ln(), hi.lambda.ln());
        let mut t = (t_lo * f_hi - t_hi * f_lo) / (f_hi - f_lo);
        if !t.is_finite() || t <= t_lo.min(t_hi) || t >= t_lo.max(t_hi) {
            t = 0.5 * (t_lo + t_hi);
        }
        let warm_from = if (t - t_lo).abs() < (t - t_hi).abs() { &lo.state } else { &hi.state };
        let mut warm = Some(warm_from.clone());
        let mid = solve(t.exp(), &mut warm)?;
        solves += 1;
        total_iters += mid.inner_iters;
        if (lo_ok..=hi_ok).contains(&mid.residual) {
            return Ok(finish(mid, total_iters));
        }
        let fm = phi(&mid);
        if mid.residual > delta {
            lo = mid;
            f_lo = fm;
            if side == -1 {
                f_hi *= 0.5;
            }
            side = -1;
        } else {
            hi = mid;
            f_hi = fm;
            if side == 1 {
                f_lo *= 0.5;
            }
            side = 1;
        }
    }
    let best = if (lo.residual - delta).abs() < (hi.residual - delta).abs() { lo } else { hi };
    Err(Error::NonConverged { iters: total_iters, change: (best.residual - delta).abs() / delta })
}
