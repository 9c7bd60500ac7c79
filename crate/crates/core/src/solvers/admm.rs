//! Alternating direction method of multipliers over a [`SplitStructure`].
//!
//! Every group-norm atom gets a splitting variable `d_a = K_a z + o_a`; the
//! remaining quadratic part together with `rho/2 |K z + o - d + mu|^2` is
//! minimized exactly by preconditioned conjugate gradients. This converges far
//! faster than the linearized primal-dual iteration when the linear solves are
//! well preconditioned (identity and gradient maps on scalar fields).

use super::pdhg::{PdhgOutcome, PdhgState, RoundingLevel};
use super::precond::QuadraticSystem;
use super::SolverConfig;
use crate::linalg;
use crate::regularizers::split::{Penalty, SplitStructure};

/// Proximal map of `phi / rho` for a unit-weight (smoothed) group norm, in place.
fn prox_penalty(penalty: Penalty, rho: f64, d: &mut [f64]) {
    let Penalty::GroupNorm { channels, smoothing } = penalty else {
        // 1/2|d|^2 / rho
        d.iter_mut().for_each(|v| *v *= rho / (1.0 + rho));
        return;
    };
    let n = d.len() / channels;
    let t = 1.0 / rho;
    for idx in 0..n {
        let norm = (0..channels).map(|ch| d[ch * n + idx].powi(2)).sum::<f64>().sqrt();
        // Moreau envelope of |.| with parameter s: prox is a scaling of the
        // argument, either the quadratic branch or soft shrinkage.
        let factor = if smoothing > 0.0 && norm <= smoothing + t {
            smoothing / (smoothing + t)
        } else if norm > t {
            1.0 - t / norm
        } else {
            0.0
        };
        (0..channels).for_each(|ch| d[ch * n + idx] *= factor);
    }
}

fn system_structure(s: &SplitStructure, dual: &[usize], rho: f64) -> SplitStructure {
    let mut sys = s.clone();
    for &a in dual {
        let atom = &mut sys.atoms[a];
        atom.penalty = Penalty::HalfSquared;
        atom.terms.iter_mut().for_each(|t| t.coef *= rho.sqrt());
        atom.offset.fill(0.0);
    }
    sys
}

struct Linear<'a> {
    s: &'a SplitStructure,
    scratch: Vec<f64>,
}

impl Linear<'_> {
    fn forward(&mut self, a: usize, z: &[Vec<f64>], out: &mut [f64]) {
        let atom = &self.s.atoms[a];
        out.copy_from_slice(&atom.offset);
        for t in &atom.terms {
            self.scratch.resize(atom.out_len, 0.0);
            t.op.apply(&self.s.grid, &z[t.block], &mut self.scratch, false);
            linalg::axpy(t.coef, &self.scratch, out);
        }
    }

    fn adjoint_add(&mut self, a: usize, y: &[f64], scale: f64, out: &mut [Vec<f64>]) {
        let atom = &self.s.atoms[a];
        for t in &atom.terms {
            self.scratch.resize(self.s.block_lens[t.block], 0.0);
            t.op.transpose(&self.s.grid, y, &mut self.scratch, false);
            linalg::axpy(scale * t.coef, &self.scratch, &mut out[t.block]);
        }
    }
}

pub(crate) fn admm_run(s: &SplitStructure, warm: Option<&PdhgState>, cfg: &SolverConfig) -> PdhgOutcome {
    let (dual, quad): (Vec<usize>, Vec<usize>) =
        (0..s.atoms.len()).partition(|&a| matches!(s.atoms[a].penalty, Penalty::GroupNorm { .. }));
    let mut state = match warm {
        Some(w) if w.fits(s) => w.clone(),
        _ => PdhgState::zeros(s),
    };
    for (b, pinned) in s.pinned.iter().enumerate() {
        if *pinned {
            state.primal[b].fill(0.0);
        }
    }
    let mut rho = if warm.is_some() && state.balance > 0.0 { state.balance } else { 1.0 };

    let mut lin = Linear { s, scratch: Vec::new() };
    // Constant part of the right-hand side.
    let mut const_rhs = s.zero_primal();
    for (b, c) in s.linear.iter().enumerate() {
        if let Some(c) = c {
            linalg::axpy(-1.0, c, &mut const_rhs[b]);
        }
    }
    for &a in &quad {
        let o = s.atoms[a].offset.clone();
        lin.adjoint_add(a, &o, -1.0, &mut const_rhs);
    }
    if let Some(f) = &s.fidelity {
        for &b in &f.blocks {
            linalg::axpy(f.weight, &f.target, &mut const_rhs[b]);
        }
    }

    // Tiny proximal term keeping the system definite when the problem has
    // flat directions (e.g. constants traded between two seminorms).
    let prox_eps = cfg.admm_prox_eps;
    let all: Vec<usize> = (0..s.atoms.len()).collect();
    let eps_diag: Vec<Vec<f64>> = s.block_lens.iter().map(|&n| vec![prox_eps; n]).collect();
    let mut sys_struct = system_structure(s, &dual, rho);
    let mut system = QuadraticSystem::new(&sys_struct, all.clone(), eps_diag.clone(), 1.0);

    let mut kz = s.zero_dual();
    let mut d = s.zero_dual();
    let mut mu = s.zero_dual();
    for &a in &dual {
        lin.forward(a, &state.primal, &mut kz[a]);
        d[a].clone_from(&kz[a]);
        mu[a] = state.dual[a].iter().map(|y| y / rho).collect();
    }

    let mut d_hat = d.clone();
    let mut mu_hat = mu.clone();
    let mut mu_old = s.zero_dual();
    let accelerate = cfg.admm_accelerate;
    let mut momentum = 1.0f64;
    let mut combined_prev = f64::INFINITY;
    let mut rhs = s.zero_primal();
    let mut tmp = s.zero_primal();
    let mut d_old = s.zero_dual();
    let mut prev_obj: Option<f64> = None;
    let mut last_check = 0usize;
    let mut change = f64::INFINITY;
    let check = cfg.admm_check_every.max(1);
    let relax = if accelerate { 1.0 } else { cfg.admm_relaxation };
    let mut adaptations = 0usize;
    let max_iters = if dual.is_empty() { 1 } else { cfg.max_inner_iters };
    // Floor for the primal residual scale: with unit-weight penalties a
    // residual r moves the objective by at most sqrt(m) |r|, so this keeps the
    // test meaningful when the optimal K z vanishes (e.g. v = 0 under L1).
    let dual_len: usize = dual.iter().map(|&a| s.atoms[a].out_len).sum();
    let floor_of = |obj: f64| obj.abs() / (dual_len.max(1) as f64).sqrt();
    let mut r_floor = floor_of(s.objective(&state.primal));
    let noise = RoundingLevel::of(s, &dual);

    for it in 1..=max_iters {
        for b in 0..rhs.len() {
            for j in 0..rhs[b].len() {
                rhs[b][j] = const_rhs[b][j] + prox_eps * state.primal[b][j];
            }
        }
        for &a in &dual {
            let v: Vec<f64> = (0..d[a].len()).map(|i| s.atoms[a].offset[i] - d_hat[a][i] + mu_hat[a][i]).collect();
            lin.adjoint_add(a, &v, -rho, &mut rhs);
        }
        system.solve(&sys_struct, &rhs, &mut state.primal, cfg.cg_tol, cfg.cg_max_iters);
        for (b, pinned) in s.pinned.iter().enumerate() {
            if *pinned {
                state.primal[b].fill(0.0);
            }
        }
        if dual.is_empty() {
            break;
        }

        let mut r_sq = 0.0;
        let mut kz_sq = 0.0;
        let mut d_sq = 0.0;
        let mut combined = 0.0;
        for &a in &dual {
            lin.forward(a, &state.primal, &mut kz[a]);
            d_old[a].clone_from(&d[a]);
            mu_old[a].clone_from(&mu[a]);
            // Over-relaxed splitting: hat = relax K z + (1 - relax) d_hat.
            let hat: Vec<f64> = (0..d[a].len()).map(|i| relax * kz[a][i] + (1.0 - relax) * d_hat[a][i]).collect();
            for i in 0..d[a].len() {
                d[a][i] = hat[i] + mu_hat[a][i];
            }
            prox_penalty(s.atoms[a].penalty, rho, &mut d[a]);
            for i in 0..d[a].len() {
                let r = kz[a][i] - d[a][i];
                mu[a][i] = mu_hat[a][i] + hat[i] - d[a][i];
                r_sq += r * r;
                kz_sq += kz[a][i] * kz[a][i];
                d_sq += d[a][i] * d[a][i];
                combined += (mu[a][i] - mu_hat[a][i]).powi(2) + (d[a][i] - d_hat[a][i]).powi(2);
            }
        }
        // Nesterov extrapolation with restart on growth of the combined residual.
        if accelerate && combined < 0.999 * combined_prev {
            let momentum_next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
            let w = (momentum - 1.0) / momentum_next;
            for &a in &dual {
                for i in 0..d[a].len() {
                    d_hat[a][i] = d[a][i] + w * (d[a][i] - d_old[a][i]);
                    mu_hat[a][i] = mu[a][i] + w * (mu[a][i] - mu_old[a][i]);
                }
            }
            momentum = momentum_next;
            combined_prev = combined;
        } else {
            momentum = 1.0;
            combined_prev = combined / 0.999;
            for &a in &dual {
                d_hat[a].clone_from(&d[a]);
                mu_hat[a].clone_from(&mu[a]);
            }
        }
        // Dual residual rho K^T (d - d_old) and its scale rho K^T mu.
        tmp.iter_mut().for_each(|b| b.fill(0.0));
        for &a in &dual {
            let dd = linalg::sub(&d[a], &d_old[a]);
            lin.adjoint_add(a, &dd, rho, &mut tmp);
        }
        let s_norm: f64 = tmp.iter().map(|b| linalg::dot(b, b)).sum::<f64>().sqrt();
        tmp.iter_mut().for_each(|b| b.fill(0.0));
        for &a in &dual {
            let m = mu[a].clone();
            lin.adjoint_add(a, &m, rho, &mut tmp);
        }
        let s_scale: f64 = tmp.iter().map(|b| linalg::dot(b, b)).sum::<f64>().sqrt();
        let r_rel = r_sq.sqrt() / kz_sq.sqrt().max(d_sq.sqrt()).max(r_floor).max(1e-300);
        let s_rel = s_norm / s_scale.max(1e-300);
        let r_ok = r_rel <= cfg.kkt_tol || r_sq.sqrt() <= cfg.abs_tol.max(noise.residual);
        let s_ok = s_rel <= cfg.kkt_tol || s_norm <= cfg.abs_tol;

        if it % check == 0 || (r_ok && s_ok) {
            let obj = s.objective(&state.primal);
            let obj_change = match prev_obj {
                Some(p) if (obj - p).abs() <= noise.objective => 0.0,
                Some(p) => (obj - p).abs() / obj.abs().max(p.abs()).max(cfg.objective_floor),
                None => f64::INFINITY,
            };
            prev_obj = Some(obj);
            r_floor = floor_of(obj);
            let obj_change = obj_change * ((it - last_check) as f64).recip() * it as f64;
            last_check = it;
            change = obj_change.max(r_rel).max(s_rel);
            if r_ok && s_ok && obj_change <= cfg.rel_tol {
                return finish(s, state, &dual, &mu, rho, it, true, change);
            }
        }

        if cfg.adaptive_balance && adaptations < 60 && it < max_iters / 2 {
            let factor = if r_rel > cfg.admm_balance_ratio * s_rel {
                2.0
            } else if s_rel > cfg.admm_balance_ratio * r_rel {
                0.5
            } else {
                1.0
            };
            if factor != 1.0 {
                rho *= factor;
                mu.iter_mut().for_each(|m| m.iter_mut().for_each(|v| *v /= factor));
                mu_hat.clone_from(&mu);
                d_hat.clone_from(&d);
                momentum = 1.0;
                combined_prev = f64::INFINITY;
                adaptations += 1;
                sys_struct = system_structure(s, &dual, rho);
                system = QuadraticSystem::new(&sys_struct, all.clone(), eps_diag.clone(), 1.0);
            }
        }
    }
    let converged = dual.is_empty();
    if converged {
        change = 0.0;
    }
    finish(s, state, &dual, &mu, rho, max_iters, converged, change)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    s: &SplitStructure,
    mut state: PdhgState,
    dual: &[usize],
    mu: &[Vec<f64>],
    rho: f64,
    iterations: usize,
    converged: bool,
    change: f64,
) -> PdhgOutcome {
    for &a in dual {
        state.dual[a] = mu[a].iter().map(|m| m * rho).collect();
    }
    state.balance = rho;
    let objective = s.objective(&state.primal);
    PdhgOutcome { state, iterations, converged, objective, change }
}
