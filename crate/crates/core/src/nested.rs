//! Nested Bregman iterations: an outer Bregman loop on `g` around inner
//! decomposition solves.
//!
//! * [`Algorithm::NoiseFree`]: each step minimizes `D_g(u, u_{l-1}) + h(v)`
//!   subject to `A(u+v) = f`, enforced by inner Bregman iterations run to a
//!   tight residual.
//! * [`Algorithm::Morozov`]: the same objective under `|A(u+v) - f| <= delta`.
//! * [`Algorithm::InnerBregman`]: inner Bregman loops on `D_g + h` stopped by
//!   the discrepancy principle.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::bregman::{bregman_until, BregmanRun};
use crate::diagnostics::{first_local_min, psnr, scalar_correlation};
use crate::error::{Error, Result};
use crate::fields::Field;
use crate::regularizers::{bregman_shift, Regularizer};
use crate::solvers::{solve_morozov_warm, DecompositionProblem, PdhgState, SolveResult, SolverConfig};

/// How `p_l in dg(u_l)` is obtained after a Morozov step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SubgradientRule {
    /// `p_l = grad g(u_l)`; needs a differentiable `g`.
    GradientG,
    /// `p_l = grad h(v_l) + p_{l-1}`; needs a differentiable (or smoothed) `h`.
    GradientH,
    /// `p_l = p_{l-1} + lambda_l A^T(f - A(u_l + v_l))` with the multiplier
    /// found by the Morozov search.
    Residual,
}

impl SubgradientRule {
    /// `GradientG` for differentiable `g`, otherwise the residual rule.
    pub fn default_for(g: &Regularizer) -> Self {
        if g.is_differentiable() && !g.has_auxiliary() {
            Self::GradientG
        } else {
            Self::Residual
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Algorithm {
    /// Exact data; inner Bregman iterations with multiplier `lambda` until
    /// `|A(u+v) - f| <= eq_tol |f|`.
    NoiseFree { lambda: f64, eq_tol: f64, max_inner: usize },
    Morozov,
    /// Inner Bregman loops with multiplier `lambda`, stopped at `residual < tau delta`.
    InnerBregman { lambda: f64, tau: f64, max_inner: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopRule {
    FirstLocalMinCorrelation,
    MaxOuter,
    /// Index of the largest PSNR sum; needs the ground truth.
    BestPsnrOracle,
}

/// Ground-truth components for per-step quality metrics.
#[derive(Clone, Debug)]
pub struct Reference {
    pub u: Field,
    pub v: Field,
}

#[derive(Clone, Debug)]
pub struct NestedOptions {
    pub rule: SubgradientRule,
    /// Check `p_l` with random Bregman-nonnegativity probes after every step.
    pub certify: bool,
    pub probes: usize,
    pub probe_seed: u64,
    pub reference: Option<Reference>,
    /// Stop computing once the stop rule has fired.
    pub halt_on_stop: bool,
}

impl NestedOptions {
    pub fn new(rule: SubgradientRule) -> Self {
        Self { rule, certify: true, probes: 20, probe_seed: 0, reference: None, halt_on_stop: false }
    }

    pub fn with_reference(mut self, u: Field, v: Field) -> Self {
        self.reference = Some(Reference { u, v });
        self
    }
}

#[derive(Clone, Debug)]
pub struct NestedState {
    /// 1-based outer index.
    pub l: usize,
    pub u: Field,
    pub v: Field,
    /// Subgradient `p_l` of `g` at `u_l`.
    pub p: Field,
    pub lambda_used: f64,
    pub h_value: f64,
    /// `D_g^{p_{l-1}}(u_l, u_{l-1})` (`g(u_1)` at the first step).
    pub g_bregman_value: f64,
    pub residual: f64,
    /// Scalar cross-correlation of `u_l` and `v_l` (NaN if either vanishes).
    pub correlation: f64,
    /// The constraint was inactive and `p_l = p_{l-1}`.
    pub stationary: bool,
    pub inner_iters: usize,
    pub psnr_u: Option<f64>,
    pub psnr_v: Option<f64>,
    pub psnr_x: Option<f64>,
    /// Solver state for warm starts.
    pub solver_state: Option<PdhgState>,
}

impl NestedState {
    pub fn psnr_sum(&self) -> Option<f64> {
        Some(self.psnr_u? + self.psnr_v?)
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub states: Vec<NestedState>,
    /// 1-based index of the selected state.
    pub stop_index: usize,
    pub stop_rule: StopRule,
}

impl Trajectory {
    pub fn stopped(&self) -> &NestedState {
        &self.states[self.stop_index - 1]
    }

    pub fn h_values(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.h_value).collect()
    }

    pub fn correlations(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.correlation).collect()
    }

    /// 1-based index of the largest PSNR sum, if the metrics are available.
    pub fn best_psnr_index(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for s in &self.states {
            let v = s.psnr_sum()?;
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((s.l, v));
            }
        }
        best.map(|(l, _)| l)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("l,h_value,g_bregman_value,residual,lambda,correlation,psnr_u,psnr_v,psnr_x,stop_flag\n");
        let opt = |v: Option<f64>| v.map_or_else(String::new, |v| format!("{v:e}"));
        for s in &self.states {
            let _ = writeln!(
                out,
                "{},{:e},{:e},{:e},{:e},{:e},{},{},{},{}",
                s.l,
                s.h_value,
                s.g_bregman_value,
                s.residual,
                s.lambda_used,
                s.correlation,
                opt(s.psnr_u),
                opt(s.psnr_v),
                opt(s.psnr_x),
                u8::from(s.l == self.stop_index)
            );
        }
        out
    }
}

/// `p_l` from one of the three update rules. `prob` carries the untilted `g`, `h`.
pub fn subgradient_update(
    rule: SubgradientRule,
    prev_p: &Field,
    result: &SolveResult,
    prob: &DecompositionProblem,
    lambda: f64,
) -> Result<Field> {
    match rule {
        SubgradientRule::GradientG => prob.g.untilted().gradient(&result.u),
        SubgradientRule::GradientH => Ok(prob.h.untilted().gradient(&result.v)?.add(prev_p)),
        SubgradientRule::Residual => {
            let misfit = prob.f_delta.sub(&prob.a.apply(&result.u.add(&result.v)));
            Ok(prev_p.add(&prob.a.adjoint(&misfit).scale(lambda)))
        }
    }
}

/// Checks `g(x') >= g(u) + <p, x' - u> - eps` on random probes `x'` around `u`,
/// `eps = 1e-4 (1 + |g(u)| + |<p, x' - u>|)`.
pub fn certify_subgradient(g: &Regularizer, u: &Field, p: &Field, probes: usize, seed: u64) -> Result<()> {
    let g = g.untilted();
    let (gu, aux) = g.eval_with_aux(u)?;
    let n = u.len();
    let radius = u.norm().max(1e-3 * (n as f64).sqrt());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: Option<(f64, f64)> = None;
    for i in 0..probes {
        let raw: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let dir = Field::from_raw(u.grid(), raw);
        // probe lengths spread over three decades
        let t = radius * 10f64.powf(-3.0 + 3.0 * i as f64 / probes.saturating_sub(1).max(1) as f64) / dir.norm();
        let step = dir.scale(t);
        let lin = p.dot(&step);
        let value = g.eval_warm(&u.add(&step), aux.as_deref())?.0;
        let violation = gu + lin - value;
        let tolerance = 1e-4 * (1.0 + gu.abs() + lin.abs());
        if violation > tolerance && worst.is_none_or(|(v, _)| violation > v) {
            worst = Some((violation, tolerance));
        }
    }
    match worst {
        Some((violation, tolerance)) => Err(Error::CertificateFailure { violation, tolerance }),
        None => Ok(()),
    }
}

/// Bregman-shifted `g` for step `l` (plain `g` when `prev` is `None`).
fn shifted_g(prob: &DecompositionProblem, prev: Option<&NestedState>) -> Result<Regularizer> {
    match prev {
        Some(s) => bregman_shift(&prob.g.untilted(), &s.p, &s.u),
        None => Ok(prob.g.untilted()),
    }
}

#[allow(clippy::too_many_arguments)]
fn make_state(
    l: usize,
    u: Field,
    v: Field,
    p: Field,
    lambda_used: f64,
    g_bregman_value: f64,
    h_value: f64,
    prob: &DecompositionProblem,
    stationary: bool,
    inner_iters: usize,
    reference: Option<&Reference>,
    solver_state: Option<PdhgState>,
) -> Result<NestedState> {
    let residual = prob.residual(&u, &v);
    let correlation = match scalar_correlation(&u, &v) {
        Ok(c) => c,
        Err(Error::ZeroSignal) => f64::NAN,
        Err(e) => return Err(e),
    };
    let (mut psnr_u, mut psnr_v, mut psnr_x) = (None, None, None);
    if let Some(r) = reference {
        psnr_u = Some(psnr(&u, &r.u)?);
        psnr_v = Some(psnr(&v, &r.v)?);
        psnr_x = Some(psnr(&u.add(&v), &r.u.add(&r.v))?);
    }
    Ok(NestedState {
        l,
        u,
        v,
        p,
        lambda_used,
        h_value,
        g_bregman_value,
        residual,
        correlation,
        stationary,
        inner_iters,
        psnr_u,
        psnr_v,
        psnr_x,
        solver_state,
    })
}

/// One step of the Morozov variant: minimizes `D_g^{p_{l-1}}(u, u_{l-1}) + h(v)`
/// subject to `|A(u+v) - f| <= delta` and updates `p`.
///
/// If the constraint turns out inactive the step is stationary: `p_l = p_{l-1}`.
pub fn nested_morozov_step(
    prev: Option<&NestedState>,
    prob: &DecompositionProblem,
    opts: &NestedOptions,
    cfg: &SolverConfig,
) -> Result<NestedState> {
    let l = prev.map_or(1, |s| s.l + 1);
    let g_l = shifted_g(prob, prev)?;
    let h = prob.h.untilted();
    let sub = prob.with_regularizers(g_l, h);
    let start = prev.and_then(|s| s.solver_state.as_ref().map(|st| (st, s.lambda_used)));
    let r = solve_morozov_warm(&sub, cfg, start)?;
    let prev_p = prev.map_or_else(|| Field::zeros(prob.f_delta.grid()), |s| s.p.clone());
    let p = if r.interior {
        prev_p
    } else {
        subgradient_update(opts.rule, &prev_p, &r, &prob.with_regularizers(prob.g.untilted(), prob.h.untilted()), r.lambda)?
    };
    if opts.certify {
        certify_subgradient(&prob.g, &r.u, &p, opts.probes, opts.probe_seed.wrapping_add(l as u64))?;
    }
    let (g_value, h_value) = r.component_values(&sub)?;
    make_state(
        l,
        r.u.clone(),
        r.v.clone(),
        p,
        r.lambda,
        g_value,
        h_value,
        prob,
        r.interior,
        r.inner_iters,
        opts.reference.as_ref(),
        Some(r.state),
    )
}

fn state_from_bregman(
    l: usize,
    run: &BregmanRun,
    prev: Option<&NestedState>,
    prob: &DecompositionProblem,
    sub: &DecompositionProblem,
    opts: &NestedOptions,
) -> Result<NestedState> {
    let last = run.stopped();
    let prev_p = prev.map_or_else(|| Field::zeros(prob.f_delta.grid()), |s| s.p.clone());
    let p = prev_p.add(&last.xi);
    if opts.certify {
        certify_subgradient(&prob.g, &last.u, &p, opts.probes, opts.probe_seed.wrapping_add(l as u64))?;
    }
    let inner_iters = run.states.iter().map(|s| s.inner_iters).sum();
    let h_value = prob.h.untilted().eval(&last.v)?;
    let g_value = sub.g.eval(&last.u)?;
    make_state(
        l,
        last.u.clone(),
        last.v.clone(),
        p,
        run.lambda,
        g_value,
        h_value,
        prob,
        false,
        inner_iters,
        opts.reference.as_ref(),
        None,
    )
}

/// One step of the discrepancy-stopped variant: Bregman iterations on
/// `J_l(u, v) = D_g^{p_{l-1}}(u, u_{l-1}) + h(v)` until `residual < tau delta`,
/// then `p_l = p_{l-1} + xi`.
pub fn nested_bregman_step(
    prev: Option<&NestedState>,
    prob: &DecompositionProblem,
    lambda: f64,
    tau: f64,
    max_inner: usize,
    opts: &NestedOptions,
    cfg: &SolverConfig,
) -> Result<NestedState> {
    if !(tau > 1.0) || !(prob.delta > 0.0) {
        return Err(Error::InvalidArgument("inner Bregman loops need tau > 1 and a positive noise level".into()));
    }
    let l = prev.map_or(1, |s| s.l + 1);
    let sub = prob.with_regularizers(shifted_g(prob, prev)?, prob.h.untilted());
    let level = tau * prob.delta;
    let run = bregman_until(&sub, lambda, |r| r < level, max_inner, cfg)?;
    if run.stop_index.is_none() {
        let residual = run.states.last().map_or(f64::INFINITY, |s| s.residual);
        return Err(Error::DiscrepancyNeverMet { steps: max_inner, residual, target: level });
    }
    state_from_bregman(l, &run, prev, prob, &sub, opts)
}

/// One step of the noise-free variant: Bregman iterations on `D_g + h` until
/// `|A(u+v) - f| <= eq_tol |f|`.
pub fn nested_noisefree_step(
    prev: Option<&NestedState>,
    prob: &DecompositionProblem,
    lambda: f64,
    eq_tol: f64,
    max_inner: usize,
    opts: &NestedOptions,
    cfg: &SolverConfig,
) -> Result<NestedState> {
    let l = prev.map_or(1, |s| s.l + 1);
    let sub = prob.with_regularizers(shifted_g(prob, prev)?, prob.h.untilted());
    let level = eq_tol * prob.f_delta.norm();
    let run = bregman_until(&sub, lambda, |r| r <= level, max_inner, cfg)?;
    if run.stop_index.is_none() {
        let residual = run.states.last().map_or(f64::INFINITY, |s| s.residual);
        return Err(Error::DiscrepancyNeverMet { steps: max_inner, residual, target: level });
    }
    state_from_bregman(l, &run, prev, prob, &sub, opts)
}

/// Noise-free nested iterations (`prob.delta` is ignored).
pub fn nested_noisefree_run(
    prob: &DecompositionProblem,
    lambda: f64,
    max_outer: usize,
    opts: &NestedOptions,
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    let algo = Algorithm::NoiseFree { lambda, eq_tol: 1e-8, max_inner: 10_000 };
    run_nested(prob, algo, max_outer, StopRule::MaxOuter, opts, cfg)
}

/// Runs up to `max_outer` outer steps and selects the stop index with `rule`.
///
/// With [`StopRule::FirstLocalMinCorrelation`] the index is the first local
/// minimum (`l >= 2`) of the scalar correlation; if none occurs the last
/// index is used and the reported rule is [`StopRule::MaxOuter`].
pub fn run_nested(
    prob: &DecompositionProblem,
    algo: Algorithm,
    max_outer: usize,
    rule: StopRule,
    opts: &NestedOptions,
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    if max_outer == 0 {
        return Err(Error::InvalidArgument("at least one outer step is required".into()));
    }
    if rule == StopRule::BestPsnrOracle && opts.reference.is_none() {
        return Err(Error::InvalidArgument("the PSNR oracle needs reference components".into()));
    }
    let mut states: Vec<NestedState> = Vec::new();
    for _ in 0..max_outer {
        let prev = states.last();
        let next = match algo {
            Algorithm::Morozov => nested_morozov_step(prev, prob, opts, cfg)?,
            Algorithm::InnerBregman { lambda, tau, max_inner } => {
                nested_bregman_step(prev, prob, lambda, tau, max_inner, opts, cfg)?
            }
            Algorithm::NoiseFree { lambda, eq_tol, max_inner } => {
                nested_noisefree_step(prev, prob, lambda, eq_tol, max_inner, opts, cfg)?
            }
        };
        states.push(next);
        if opts.halt_on_stop && rule == StopRule::FirstLocalMinCorrelation {
            let c: Vec<f64> = states.iter().map(|s| s.correlation).collect();
            if first_local_min(&c).is_some() {
                break;
            }
        }
    }
    let traj = Trajectory { stop_index: states.len(), states, stop_rule: StopRule::MaxOuter };
    Ok(select_stop(traj, rule))
}

/// Recomputes the stop index of a trajectory under `rule`.
pub fn select_stop(mut traj: Trajectory, rule: StopRule) -> Trajectory {
    let (index, used) = match rule {
        StopRule::MaxOuter => (traj.states.len(), StopRule::MaxOuter),
        StopRule::FirstLocalMinCorrelation => match first_local_min(&traj.correlations()) {
            Some(l) => (l, rule),
            None => (traj.states.len(), StopRule::MaxOuter),
        },
        StopRule::BestPsnrOracle => match traj.best_psnr_index() {
            Some(l) => (l, rule),
            None => (traj.states.len(), StopRule::MaxOuter),
        },
    };
    traj.stop_index = index;
    traj.stop_rule = used;
    traj
}
