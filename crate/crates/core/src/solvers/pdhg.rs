//! Diagonally preconditioned primal-dual hybrid gradient iterations over a
//! [`SplitStructure`].

use super::precond::QuadraticSystem;
use super::admm::admm_run;
use super::{Backend, SolverConfig};
use crate::error::{Error, Result};
use crate::linalg;
use crate::regularizers::split::{Penalty, SplitStructure};

/// Floating-point noise of a structure's objective and of its residuals,
/// estimated from the values at the zero iterate. Changes below these levels
/// carry no information, e.g. when the optimal value is zero.
pub(super) struct RoundingLevel {
    pub objective: f64,
    pub residual: f64,
}

impl RoundingLevel {
    pub(super) fn of(s: &SplitStructure, dual: &[usize]) -> Self {
        let eps = 100.0 * f64::EPSILON;
        let offsets: f64 = dual.iter().map(|&a| linalg::dot(&s.atoms[a].offset, &s.atoms[a].offset)).sum();
        Self { objective: eps * s.objective(&s.zero_primal()).abs(), residual: eps * offsets.sqrt() }
    }
}

/// Iterate of the primal-dual scheme, reusable as a warm start for any
/// structure with the same block and atom layout.
#[derive(Clone, Debug, PartialEq)]
pub struct PdhgState {
    pub primal: Vec<Vec<f64>>,
    pub dual: Vec<Vec<f64>>,
    /// Ratio between dual and primal step scaling; adapted during the run.
    pub balance: f64,
}

impl PdhgState {
    pub fn zeros(s: &SplitStructure) -> Self {
        Self { primal: s.zero_primal(), dual: s.zero_dual(), balance: 1.0 }
    }

    pub(crate) fn fits(&self, s: &SplitStructure) -> bool {
        self.primal.len() == s.block_lens.len()
            && self.primal.iter().zip(&s.block_lens).all(|(b, &n)| b.len() == n)
            && self.dual.len() == s.atoms.len()
            && self.dual.iter().zip(&s.atoms).all(|(y, a)| y.len() == a.out_len)
    }
}

#[derive(Clone, Debug)]
pub struct PdhgOutcome {
    pub state: PdhgState,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
    /// Largest of the relative stopping measures at the last check.
    pub change: f64,
}

/// Diagonal step sizes: inverse primal steps per block (0 = infinite step,
/// used for blocks handled entirely by the quadratic solve) and dual steps
/// per dual atom.
struct Steps {
    inv_tau: Vec<Vec<f64>>,
    sigma: Vec<Vec<f64>>,
}

fn diagonal_steps(s: &SplitStructure, dual: &[usize], in_system: &[bool]) -> Steps {
    let g = &s.grid;
    let mut col: Vec<Vec<f64>> = s.zero_primal();
    let mut sigma = vec![Vec::new(); s.atoms.len()];
    let mut scratch = Vec::new();
    for &a in dual {
        let atom = &s.atoms[a];
        let mut row = vec![0.0; atom.out_len];
        let ones_out = vec![1.0; atom.out_len];
        for t in &atom.terms {
            let ones_in = vec![1.0; t.op.in_len(g)];
            scratch.resize(atom.out_len, 0.0);
            t.op.apply(g, &ones_in, &mut scratch, true);
            linalg::axpy(t.coef.abs(), &scratch, &mut row);
            scratch.resize(t.op.in_len(g), 0.0);
            t.op.transpose(g, &ones_out, &mut scratch, true);
            linalg::axpy(t.coef.abs(), &scratch, &mut col[t.block]);
        }
        let mut sig: Vec<f64> = row.iter().map(|&r| if r > 0.0 { 1.0 / r } else { 1.0 }).collect();
        if let Penalty::GroupNorm { channels, .. } = atom.penalty {
            let n = atom.out_len / channels;
            for idx in 0..n {
                let m = (0..channels).map(|ch| sig[ch * n + idx]).fold(f64::INFINITY, f64::min);
                (0..channels).for_each(|ch| sig[ch * n + idx] = m);
            }
        }
        sigma[a] = sig;
    }
    let inv_tau = col
        .into_iter()
        .zip(in_system)
        .map(|(c, &sys)| c.into_iter().map(|v| if v > 0.0 { v } else if sys { 0.0 } else { 1.0 }).collect())
        .collect();
    Steps { inv_tau, sigma }
}

/// Workspace for applying `K` and `K^T` block-wise.
struct Work {
    scratch: Vec<f64>,
}

impl Work {
    /// `out_a = K_a z + offset_a` for every atom.
    fn forward(&mut self, s: &SplitStructure, atoms: &[usize], z: &[Vec<f64>], out: &mut [Vec<f64>], with_offset: bool) {
        for &a in atoms {
            let (atom, o) = (&s.atoms[a], &mut out[a]);
            if with_offset {
                o.copy_from_slice(&atom.offset);
            } else {
                o.fill(0.0);
            }
            for t in &atom.terms {
                self.scratch.resize(atom.out_len, 0.0);
                t.op.apply(&s.grid, &z[t.block], &mut self.scratch, false);
                linalg::axpy(t.coef, &self.scratch, o);
            }
        }
    }

    /// `out_b = (K^T y)_b` for every block.
    fn adjoint(&mut self, s: &SplitStructure, atoms: &[usize], y: &[Vec<f64>], out: &mut [Vec<f64>]) {
        out.iter_mut().for_each(|b| b.fill(0.0));
        for &a in atoms {
            let (atom, ya) = (&s.atoms[a], &y[a]);
            for t in &atom.terms {
                self.scratch.resize(out[t.block].len(), 0.0);
                t.op.transpose(&s.grid, ya, &mut self.scratch, false);
                linalg::axpy(t.coef, &self.scratch, &mut out[t.block]);
            }
        }
    }
}

fn prox_conjugate(penalty: Penalty, sigma: &[f64], y: &mut [f64]) {
    match penalty {
        Penalty::HalfSquared => y.iter_mut().zip(sigma).for_each(|(v, &s)| *v /= 1.0 + s),
        Penalty::GroupNorm { channels, smoothing } => {
            let n = y.len() / channels;
            for idx in 0..n {
                let shrink = 1.0 + sigma[idx] * smoothing;
                let mut sq = 0.0;
                for ch in 0..channels {
                    let v = &mut y[ch * n + idx];
                    *v /= shrink;
                    sq += *v * *v;
                }
                if sq > 1.0 {
                    let inv = 1.0 / sq.sqrt();
                    (0..channels).for_each(|ch| y[ch * n + idx] *= inv);
                }
            }
        }
    }
}

fn flat_norm(v: &[Vec<f64>]) -> f64 {
    v.iter().map(|b| linalg::dot(b, b)).sum::<f64>().sqrt()
}

/// Runs the scheme from `warm` (or zeros) until the stopping rule of `cfg`
/// holds or `cfg.max_inner_iters` is reached.
///
/// Quadratic atoms and the primal fidelity are kept in the primal step, which
/// is then a linear solve (preconditioned conjugate gradients); only the
/// group-norm atoms are dualized. Stopping requires, at a check every
/// `cfg.check_every` iterations, a relative objective change below
/// `cfg.rel_tol` since the previous check and normalized primal/dual
/// fixed-point residuals below `cfg.kkt_tol`.
/// Returns [`Error::NonConverged`] on exhaustion when `cfg.strict` is set.
pub fn pdhg(s: &SplitStructure, warm: Option<&PdhgState>, cfg: &SolverConfig) -> Result<PdhgOutcome> {
    let use_admm = match cfg.backend {
        Backend::Pdhg => false,
        Backend::Admm => true,
        Backend::Auto => admm_friendly(s),
    };
    let out = if use_admm { admm_run(s, warm, cfg) } else { pdhg_run(s, warm, cfg) };
    if !out.converged && cfg.strict {
        return Err(Error::NonConverged { iters: out.iterations, change: out.change });
    }
    Ok(out)
}

/// True when all blocks are scalar fields and every group-norm atom uses only
/// identity or gradient maps.
fn admm_friendly(s: &SplitStructure) -> bool {
    use crate::regularizers::split::Op;
    let n = s.grid.len();
    s.block_lens.iter().all(|&l| l == n)
        && s.atoms.iter().all(|a| {
            !matches!(a.penalty, Penalty::GroupNorm { .. })
                || a.terms.iter().all(|t| matches!(t.op, Op::Identity | Op::Gradient))
        })
}

pub(crate) fn pdhg_run(s: &SplitStructure, warm: Option<&PdhgState>, cfg: &SolverConfig) -> PdhgOutcome {
    let (dual, quad): (Vec<usize>, Vec<usize>) = (0..s.atoms.len())
        .partition(|&a| !cfg.quadratic_in_primal || !matches!(s.atoms[a].penalty, Penalty::HalfSquared));
    let mut in_system = vec![false; s.block_lens.len()];
    if !quad.is_empty() {
        for &a in &quad {
            s.atoms[a].terms.iter().for_each(|t| in_system[t.block] = true);
        }
        if let Some(f) = &s.fidelity {
            f.blocks.iter().for_each(|&b| in_system[b] = true);
        }
    }
    for (b, pinned) in s.pinned.iter().enumerate() {
        if *pinned {
            in_system[b] = false;
        }
    }
    let steps = diagonal_steps(s, &dual, &in_system);
    let mut state = match warm {
        Some(w) if w.fits(s) => w.clone(),
        _ => PdhgState::zeros(s),
    };
    for (b, pinned) in s.pinned.iter().enumerate() {
        if *pinned {
            state.primal[b].fill(0.0);
        }
    }
    for &a in &quad {
        state.dual[a].fill(0.0);
    }
    if dual.is_empty() && quad.is_empty() && s.fidelity.is_none() && s.linear.iter().all(Option::is_none) {
        let objective = s.objective(&state.primal);
        return PdhgOutcome { state, iterations: 0, converged: true, objective, change: 0.0 };
    }

    let mut theta = state.balance;
    let mut system = if quad.is_empty() {
        None
    } else {
        Some(QuadraticSystem::new(s, quad.clone(), steps.inv_tau.clone(), theta))
    };
    // Constant part of the linear-solve right-hand side.
    let mut const_rhs = s.zero_primal();
    let mut work = Work { scratch: Vec::new() };
    if let Some(sys) = &system {
        for &b in &sys.blocks {
            if let Some(c) = &s.linear[b] {
                linalg::axpy(-1.0, c, &mut const_rhs[b]);
            }
        }
        let offsets: Vec<Vec<f64>> = s.atoms.iter().map(|a| a.offset.clone()).collect();
        let mut back = s.zero_primal();
        work.adjoint(s, &quad, &offsets, &mut back);
        for &b in &sys.blocks {
            linalg::axpy(-1.0, &back[b], &mut const_rhs[b]);
        }
        if let Some(f) = &s.fidelity {
            for &b in f.blocks.iter().filter(|b| sys.blocks.contains(b)) {
                linalg::axpy(f.weight, &f.target, &mut const_rhs[b]);
            }
        }
    }

    let mut kty = s.zero_primal();
    let mut kty_new = s.zero_primal();
    let mut kdual_a = s.zero_primal();
    let mut z_new = s.zero_primal();
    let mut z_bar = s.zero_primal();
    let mut rhs = s.zero_primal();
    let mut kz = s.zero_dual();
    let mut y_old = s.zero_dual();
    let mut prev_obj: Option<f64> = None;
    let dual_len: usize = dual.iter().map(|&a| s.atoms[a].out_len).sum();
    let noise = RoundingLevel::of(s, &dual);
    let mut change = f64::INFINITY;
    let mut adaptations = 0usize;
    let check = cfg.check_every.max(1);
    let max_iters = if dual.is_empty() { 1 } else { cfg.max_inner_iters };

    for it in 1..=max_iters {
        work.adjoint(s, &dual, &state.dual, &mut kty);

        for b in 0..s.block_lens.len() {
            if s.pinned[b] {
                z_new[b].fill(0.0);
                continue;
            }
            if in_system[b] {
                let it = &steps.inv_tau[b];
                for j in 0..rhs[b].len() {
                    rhs[b][j] = theta * it[j] * state.primal[b][j] - kty[b][j] + const_rhs[b][j];
                }
                z_new[b].copy_from_slice(&state.primal[b]);
                continue;
            }
            let (z, zn, g, it) = (&state.primal[b], &mut z_new[b], &kty[b], &steps.inv_tau[b]);
            match &s.linear[b] {
                Some(c) => (0..zn.len()).for_each(|j| zn[j] = z[j] - (g[j] + c[j]) / (theta * it[j])),
                None => (0..zn.len()).for_each(|j| zn[j] = z[j] - g[j] / (theta * it[j])),
            }
        }
        if let Some(sys) = system.as_mut() {
            sys.solve(s, &rhs, &mut z_new, cfg.cg_tol, cfg.cg_max_iters);
        } else if let Some(fid) = &s.fidelity {
            let active: Vec<usize> = fid.blocks.iter().copied().filter(|&b| !s.pinned[b]).collect();
            for i in 0..fid.target.len() {
                let mut sum = -fid.target[i];
                let mut tsum = 0.0;
                for &b in &fid.blocks {
                    sum += z_new[b][i];
                }
                for &b in &active {
                    tsum += 1.0 / (theta * steps.inv_tau[b][i]);
                }
                let r = sum / (1.0 + fid.weight * tsum);
                for &b in &active {
                    z_new[b][i] -= fid.weight * r / (theta * steps.inv_tau[b][i]);
                }
            }
        }

        if dual.is_empty() {
            std::mem::swap(&mut state.primal, &mut z_new);
            break;
        }

        for b in 0..z_bar.len() {
            for j in 0..z_bar[b].len() {
                z_bar[b][j] = 2.0 * z_new[b][j] - state.primal[b][j];
            }
        }
        work.forward(s, &dual, &z_bar, &mut kz, true);
        let checking = it % check == 0 || it == max_iters;
        if checking {
            y_old.clone_from(&state.dual);
        }
        for &a in &dual {
            let (y, v, sig) = (&mut state.dual[a], &kz[a], &steps.sigma[a]);
            let sig_eff: Vec<f64> = sig.iter().map(|v| v * theta).collect();
            for i in 0..y.len() {
                y[i] += sig_eff[i] * v[i];
            }
            prox_conjugate(s.atoms[a].penalty, &sig_eff, y);
        }

        if !checking {
            std::mem::swap(&mut state.primal, &mut z_new);
            continue;
        }

        // Fixed-point residuals of the step just taken.
        work.adjoint(s, &dual, &state.dual, &mut kty_new);
        // Scale of K^T y from the atoms separately: the sum itself vanishes
        // at optimality for blocks without a smooth term.
        let mut p_scale_b = 0.0;
        for &a in &dual {
            work.adjoint(s, &[a], &state.dual, &mut kdual_a);
            p_scale_b += kdual_a.iter().zip(&s.pinned).filter(|(_, p)| !**p).map(|(b, _)| linalg::dot(b, b)).sum::<f64>();
        }
        let mut p_res = 0.0;
        let mut p_scale_a = 0.0;
        for b in 0..s.block_lens.len() {
            if s.pinned[b] {
                continue;
            }
            for j in 0..z_new[b].len() {
                let step = (state.primal[b][j] - z_new[b][j]) * theta * steps.inv_tau[b][j];
                let sub = step - kty[b][j];
                let r = sub + kty_new[b][j];
                p_res += r * r;
                p_scale_a += sub * sub;
            }
        }
        let p_rel = p_res.sqrt() / p_scale_a.sqrt().max(p_scale_b.sqrt()).max(1e-300);

        let dz: Vec<Vec<f64>> = z_new.iter().zip(&state.primal).map(|(a, b)| linalg::sub(a, b)).collect();
        let mut kdz = s.zero_dual();
        work.forward(s, &dual, &dz, &mut kdz, false);
        let mut kz_new = s.zero_dual();
        work.forward(s, &dual, &z_new, &mut kz_new, true);
        let mut d_res = 0.0;
        for &a in &dual {
            for i in 0..kdz[a].len() {
                let r = (y_old[a][i] - state.dual[a][i]) / (steps.sigma[a][i] * theta) + kdz[a][i];
                d_res += r * r;
            }
        }
        // Same floor as the ADMM primal residual: keeps the test meaningful
        // when the optimal K z vanishes.
        let d_floor = prev_obj.map_or(0.0, |o: f64| o.abs() / (dual_len.max(1) as f64).sqrt());
        let d_rel = d_res.sqrt() / flat_norm(&kz_new).max(d_floor).max(1e-300);

        std::mem::swap(&mut state.primal, &mut z_new);
        let obj = s.objective(&state.primal);
        let obj_change = match prev_obj {
            Some(p) if (obj - p).abs() <= noise.objective => 0.0,
            Some(p) => (obj - p).abs() / obj.abs().max(p.abs()).max(cfg.objective_floor),
            None => f64::INFINITY,
        };
        prev_obj = Some(obj);
        // Sublinear tails: the remaining decrease is roughly the iteration
        // count times the current per-iteration decrease.
        let obj_change = obj_change * (it as f64 / cfg.check_every as f64).max(1.0);
        let p_ok = p_rel <= cfg.kkt_tol || p_res.sqrt() <= cfg.abs_tol;
        let d_ok = d_rel <= cfg.kkt_tol || d_res.sqrt() <= cfg.abs_tol.max(noise.residual);
        change = obj_change.max(p_rel).max(d_rel);
        if p_ok && d_ok && obj_change <= cfg.rel_tol {
            state.balance = theta;
            return PdhgOutcome { state, iterations: it, converged: true, objective: obj, change };
        }

        if cfg.adaptive_balance && adaptations < 40 && it < max_iters / 2 {
            let (pr, dr) = (p_rel.max(1e-300), d_rel.max(1e-300));
            let before = theta;
            if pr > 10.0 * dr {
                theta /= 2.0;
            } else if dr > 10.0 * pr {
                theta *= 2.0;
            }
            theta = theta.clamp(1e-6, 1e6);
            if theta != before {
                adaptations += 1;
                if let Some(sys) = system.as_mut() {
                    sys.set_theta(s, theta);
                }
            }
        }
    }
    state.balance = theta;
    let objective = s.objective(&state.primal);
    let converged = dual.is_empty();
    if converged {
        change = 0.0;
    }
    PdhgOutcome { state, iterations: max_iters, converged, objective, change }
}
