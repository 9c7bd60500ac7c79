//! Convex penalties for the two components, their Bregman-tilted variants and
//! the splitting structures handed to the primal-dual solver.

pub mod split;

use crate::error::{Error, Result};
use crate::fields::{stencil, Field, Grid};
use crate::linalg;
use crate::solvers::{pdhg, PdhgState, SolverConfig};
use split::{Atom, Op, Penalty, SplitStructure, Term};

#[derive(Clone, Debug, PartialEq)]
pub enum RegularizerKind {
    /// `alpha/2 |grad x|^2`
    H1Sq { alpha: f64 },
    /// `beta |x|_1`
    L1 { beta: f64 },
    /// `beta sum_nodes |grad x(node)|_2`
    TVIso { beta: f64 },
    /// `min_w alpha1 |grad x - w|_M + beta1 |E w|_M`
    TGV2 { alpha1: f64, beta1: f64 },
    /// `min_w alpha2 |grad x - w|_M + beta2 |E w + C x|_M`, `C = omega omega^T`
    TGVOsci { alpha2: f64, beta2: f64, omega: Vec<f64> },
    /// `gamma/2 |x|^2`; a strongly convex test penalty.
    L2Sq { gamma: f64 },
    /// Indicator of `{0}`: pins its component to zero.
    PinnedZero,
}

/// Linear tilt turning a regularizer `J` into `J(x) - J(anchor) - <p, x - anchor>`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tilt {
    pub p: Field,
    pub anchor: Field,
    /// Untilted (possibly smoothed) value at the anchor.
    pub anchor_value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Regularizer {
    pub kind: RegularizerKind,
    pub tilt: Option<Tilt>,
    /// Moreau-envelope parameter for the one-homogeneous terms (0 = exact).
    pub smoothing: f64,
}

/// Where a regularizer's argument lives inside a splitting structure:
/// `coef * z_block + offset`, or a constant when `block` is `None`.
#[derive(Clone, Copy, Debug)]
pub struct Argument<'a> {
    pub block: Option<usize>,
    pub coef: f64,
    pub offset: Option<&'a [f64]>,
}

impl<'a> Argument<'a> {
    pub fn block(block: usize) -> Self {
        Self { block: Some(block), coef: 1.0, offset: None }
    }

    pub fn constant(x: &'a [f64]) -> Self {
        Self { block: None, coef: 1.0, offset: Some(x) }
    }

    fn terms(&self, weight: f64, op: Op) -> Vec<Term> {
        self.block
            .map(|block| vec![Term { block, coef: self.coef * weight, op }])
            .unwrap_or_default()
    }

    fn mapped_offset(&self, grid: &Grid, weight: f64, op: &Op) -> Vec<f64> {
        let mut out = vec![0.0; op.out_len(grid)];
        if let Some(o) = self.offset {
            op.apply(grid, o, &mut out, false);
            out.iter_mut().for_each(|v| *v *= weight);
        }
        out
    }
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::InvalidArgument(format!("{name} must be positive and finite, got {v}")))
    }
}

impl Regularizer {
    fn plain(kind: RegularizerKind) -> Self {
        Self { kind, tilt: None, smoothing: 0.0 }
    }

    pub fn h1sq(alpha: f64) -> Result<Self> {
        Ok(Self::plain(RegularizerKind::H1Sq { alpha: positive("alpha", alpha)? }))
    }

    pub fn l1(beta: f64) -> Result<Self> {
        Ok(Self::plain(RegularizerKind::L1 { beta: positive("beta", beta)? }))
    }

    pub fn tv(beta: f64) -> Result<Self> {
        Ok(Self::plain(RegularizerKind::TVIso { beta: positive("beta", beta)? }))
    }

    pub fn tgv2(alpha1: f64, beta1: f64) -> Result<Self> {
        Ok(Self::plain(RegularizerKind::TGV2 {
            alpha1: positive("alpha1", alpha1)?,
            beta1: positive("beta1", beta1)?,
        }))
    }

    pub fn tgv_osci(alpha2: f64, beta2: f64, omega: &[f64]) -> Result<Self> {
        if omega.iter().any(|w| !w.is_finite()) || omega.is_empty() || omega.len() > 2 {
            return Err(Error::InvalidArgument(format!("bad frequency vector {omega:?}")));
        }
        Ok(Self::plain(RegularizerKind::TGVOsci {
            alpha2: positive("alpha2", alpha2)?,
            beta2: positive("beta2", beta2)?,
            omega: omega.to_vec(),
        }))
    }

    pub fn l2sq(gamma: f64) -> Result<Self> {
        Ok(Self::plain(RegularizerKind::L2Sq { gamma: positive("gamma", gamma)? }))
    }

    pub fn pinned_zero() -> Self {
        Self::plain(RegularizerKind::PinnedZero)
    }

    /// Same regularizer with Moreau smoothing `mu` on its one-homogeneous terms.
    pub fn with_smoothing(mut self, mu: f64) -> Result<Self> {
        if !(mu.is_finite() && mu >= 0.0) {
            return Err(Error::InvalidArgument(format!("smoothing must be >= 0, got {mu}")));
        }
        self.smoothing = mu;
        if let Some(t) = &self.tilt {
            let (p, anchor) = (t.p.clone(), t.anchor.clone());
            self.tilt = None;
            return bregman_shift(&self, &p, &anchor);
        }
        Ok(self)
    }

    /// All weights multiplied by `c > 0` (tilt dropped).
    pub fn scaled(&self, c: f64) -> Result<Self> {
        positive("scale", c)?;
        let kind = match &self.kind {
            RegularizerKind::H1Sq { alpha } => RegularizerKind::H1Sq { alpha: c * alpha },
            RegularizerKind::L1 { beta } => RegularizerKind::L1 { beta: c * beta },
            RegularizerKind::TVIso { beta } => RegularizerKind::TVIso { beta: c * beta },
            RegularizerKind::TGV2 { alpha1, beta1 } => RegularizerKind::TGV2 { alpha1: c * alpha1, beta1: c * beta1 },
            RegularizerKind::TGVOsci { alpha2, beta2, omega } => RegularizerKind::TGVOsci {
                alpha2: c * alpha2,
                beta2: c * beta2,
                omega: omega.clone(),
            },
            RegularizerKind::L2Sq { gamma } => RegularizerKind::L2Sq { gamma: c * gamma },
            RegularizerKind::PinnedZero => RegularizerKind::PinnedZero,
        };
        Ok(Self { kind, tilt: None, smoothing: self.smoothing })
    }

    pub fn untilted(&self) -> Self {
        Self { kind: self.kind.clone(), tilt: None, smoothing: self.smoothing }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            RegularizerKind::H1Sq { .. } => "h1sq",
            RegularizerKind::L1 { .. } => "l1",
            RegularizerKind::TVIso { .. } => "tv",
            RegularizerKind::TGV2 { .. } => "tgv2",
            RegularizerKind::TGVOsci { .. } => "tgv_osci",
            RegularizerKind::L2Sq { .. } => "l2sq",
            RegularizerKind::PinnedZero => "pinned_zero",
        }
    }

    /// Whether [`Regularizer::gradient`] is available.
    pub fn is_differentiable(&self) -> bool {
        match self.kind {
            RegularizerKind::H1Sq { .. } | RegularizerKind::L2Sq { .. } => true,
            RegularizerKind::PinnedZero => false,
            _ => self.smoothing > 0.0,
        }
    }

    /// Whether the untilted value is unchanged by adding constants.
    pub fn is_shift_invariant(&self) -> bool {
        matches!(self.kind, RegularizerKind::H1Sq { .. } | RegularizerKind::TVIso { .. } | RegularizerKind::TGV2 { .. })
    }

    pub fn has_auxiliary(&self) -> bool {
        matches!(self.kind, RegularizerKind::TGV2 { .. } | RegularizerKind::TGVOsci { .. })
    }

    /// Adds this regularizer (with its tilt) acting on `arg` to `s`.
    pub fn contribute(&self, s: &mut SplitStructure, arg: Argument<'_>) -> Result<()> {
        let grid = s.grid;
        let mu = self.smoothing;
        let group = |channels: usize, w: f64| Penalty::GroupNorm { channels, smoothing: mu * w * w };
        let d = grid.vector_channels();
        let t = grid.tensor_channels();
        let n = grid.len();
        match &self.kind {
            RegularizerKind::H1Sq { alpha } => {
                let w = alpha.sqrt();
                s.add_atom(Atom {
                    label: "h1",
                    terms: arg.terms(w, Op::Gradient),
                    out_len: d * n,
                    offset: arg.mapped_offset(&grid, w, &Op::Gradient),
                    penalty: Penalty::HalfSquared,
                });
            }
            RegularizerKind::L2Sq { gamma } => {
                let w = gamma.sqrt();
                s.add_atom(Atom {
                    label: "l2",
                    terms: arg.terms(w, Op::Identity),
                    out_len: n,
                    offset: arg.mapped_offset(&grid, w, &Op::Identity),
                    penalty: Penalty::HalfSquared,
                });
            }
            RegularizerKind::L1 { beta } => s.add_atom(Atom {
                label: "l1",
                terms: arg.terms(*beta, Op::Identity),
                out_len: n,
                offset: arg.mapped_offset(&grid, *beta, &Op::Identity),
                penalty: group(1, *beta),
            }),
            RegularizerKind::TVIso { beta } => s.add_atom(Atom {
                label: "tv",
                terms: arg.terms(*beta, Op::Gradient),
                out_len: d * n,
                offset: arg.mapped_offset(&grid, *beta, &Op::Gradient),
                penalty: group(d, *beta),
            }),
            RegularizerKind::TGV2 { alpha1: a, beta1: b } | RegularizerKind::TGVOsci { alpha2: a, beta2: b, .. } => {
                let wb = s.add_block("w", d * n);
                let mut first = arg.terms(*a, Op::Gradient);
                first.push(Term { block: wb, coef: -a, op: Op::GradientSupport });
                s.add_atom(Atom {
                    label: "tgv_first",
                    terms: first,
                    out_len: d * n,
                    offset: arg.mapped_offset(&grid, *a, &Op::Gradient),
                    penalty: group(d, *a),
                });
                let mut second = vec![Term { block: wb, coef: *b, op: Op::SymGradient }];
                let mut offset = vec![0.0; t * n];
                if let RegularizerKind::TGVOsci { omega, .. } = &self.kind {
                    if omega.len() != grid.ndim() {
                        return Err(Error::InvalidArgument(format!(
                            "frequency vector has {} entries on a {}-dimensional grid",
                            omega.len(),
                            grid.ndim()
                        )));
                    }
                    let op = Op::Oscillation(omega.clone());
                    second.extend(arg.terms(*b, op.clone()));
                    offset = arg.mapped_offset(&grid, *b, &op);
                }
                s.add_atom(Atom {
                    label: "tgv_second",
                    terms: second,
                    out_len: t * n,
                    offset,
                    penalty: group(t, *b),
                });
            }
            RegularizerKind::PinnedZero => match (arg.block, arg.offset) {
                (Some(b), None) => s.pinned[b] = true,
                _ => {
                    return Err(Error::InvalidArgument(
                        "a pinned component must be a free block of the structure".into(),
                    ))
                }
            },
        }
        if let Some(tilt) = &self.tilt {
            if tilt.p.grid() != grid {
                return Err(Error::GridMismatch("tilt lives on a different grid".into()));
            }
            let p = tilt.p.values();
            if let Some(b) = arg.block {
                s.add_linear(b, &linalg::scale(-arg.coef, p));
            }
            if let Some(o) = arg.offset {
                s.constant -= linalg::dot(p, o);
            }
            s.constant += linalg::dot(p, tilt.anchor.values()) - tilt.anchor_value;
        }
        Ok(())
    }

    fn check_grid(&self, x: &Field) -> Result<()> {
        if let Some(t) = &self.tilt {
            if t.p.grid() != x.grid() {
                return Err(Error::GridMismatch(format!("tilt on {:?}, argument on {:?}", t.p.grid(), x.grid())));
            }
        }
        if let RegularizerKind::TGVOsci { omega, .. } = &self.kind {
            if omega.len() != x.grid().ndim() {
                return Err(Error::InvalidArgument("frequency vector does not match the grid dimension".into()));
            }
        }
        Ok(())
    }

    /// Untilted value (smoothed when `smoothing > 0`).
    pub fn base_value(&self, x: &Field) -> Result<f64> {
        self.untilted().eval(x)
    }

    /// Value at `x`; for a tilted regularizer the full Bregman distance
    /// `J(x) - J(anchor) - <p, x - anchor>`.
    pub fn eval(&self, x: &Field) -> Result<f64> {
        Ok(self.eval_with_aux(x)?.0)
    }

    /// Value together with the optimal auxiliary field (TGV variants).
    pub fn eval_with_aux(&self, x: &Field) -> Result<(f64, Option<Vec<f64>>)> {
        self.eval_warm(x, None)
    }

    /// As [`Regularizer::eval_with_aux`], starting the auxiliary minimization
    /// from `aux` (e.g. the auxiliary block of a decomposition solve).
    pub fn eval_warm(&self, x: &Field, aux: Option<&[f64]>) -> Result<(f64, Option<Vec<f64>>)> {
        self.check_grid(x)?;
        if self.kind == RegularizerKind::PinnedZero {
            let base = if x.values().iter().all(|&v| v == 0.0) { 0.0 } else { f64::INFINITY };
            let tilt = self.tilt.as_ref().map_or(0.0, |t| {
                -t.anchor_value - linalg::dot(t.p.values(), &linalg::sub(x.values(), t.anchor.values()))
            });
            return Ok((base + tilt, None));
        }
        let mut s = SplitStructure::new(x.grid());
        self.contribute(&mut s, Argument::constant(x.values()))?;
        if s.block_lens.is_empty() {
            return Ok((s.objective(&[]), None));
        }
        let grid = x.grid();
        let mut w0 = vec![0.0; grid.vector_channels() * grid.len()];
        match aux {
            Some(a) if a.len() == w0.len() => w0.copy_from_slice(a),
            _ => stencil::gradient(&grid, x.values(), &mut w0, false),
        }
        let warm = PdhgState { primal: vec![w0], dual: s.zero_dual(), balance: 1.0 };
        let out = pdhg(&s, Some(&warm), &SolverConfig::auxiliary())?;
        let w = out.state.primal.into_iter().next();
        Ok((out.objective, w))
    }

    /// Gradient at `x` (tilt included) for differentiable or smoothed variants.
    pub fn gradient(&self, x: &Field) -> Result<Field> {
        self.check_grid(x)?;
        if !self.is_differentiable() {
            return Err(Error::NotDifferentiable(self.name().into()));
        }
        let grid = x.grid();
        let mut s = SplitStructure::new(grid);
        let main = s.add_block("x", grid.len());
        self.contribute(&mut s, Argument::block(main))?;
        let mut z = s.zero_primal();
        z[main] = x.values().to_vec();
        if self.has_auxiliary() {
            let (_, w) = self.eval_with_aux(x)?;
            z[1] = w.expect("auxiliary field");
        }
        Ok(Field::from_raw(grid, structure_gradient(&s, &z, main)))
    }
}

/// Gradient of a structure objective with respect to one block, assuming all
/// penalties acting on it are differentiable.
pub(crate) fn structure_gradient(s: &SplitStructure, z: &[Vec<f64>], block: usize) -> Vec<f64> {
    let grid = s.grid;
    let mut grad = s.linear[block].clone().unwrap_or_else(|| vec![0.0; s.block_lens[block]]);
    let mut y = Vec::new();
    let mut scratch = Vec::new();
    let mut back = Vec::new();
    for atom in &s.atoms {
        if !atom.terms.iter().any(|t| t.block == block) {
            continue;
        }
        y.resize(atom.out_len, 0.0);
        atom.apply(&grid, z, &mut y, &mut scratch);
        match atom.penalty {
            Penalty::HalfSquared => {}
            Penalty::GroupNorm { channels, smoothing } => {
                let n = atom.out_len / channels;
                for idx in 0..n {
                    let t = (0..channels).map(|ch| y[ch * n + idx].powi(2)).sum::<f64>().sqrt();
                    let scale = 1.0 / t.max(smoothing);
                    (0..channels).for_each(|ch| y[ch * n + idx] *= scale);
                }
            }
        }
        for t in atom.terms.iter().filter(|t| t.block == block) {
            back.resize(s.block_lens[block], 0.0);
            t.op.transpose(&grid, &y, &mut back, false);
            linalg::axpy(t.coef, &back, &mut grad);
        }
    }
    if let Some(fid) = &s.fidelity {
        if fid.blocks.contains(&block) {
            for i in 0..grad.len() {
                let sum: f64 = fid.blocks.iter().map(|&b| z[b][i]).sum();
                grad[i] += fid.weight * (sum - fid.target[i]);
            }
        }
    }
    grad
}

/// Tilted copy of `reg` whose value is the Bregman distance `D_reg^p(., anchor)`.
///
/// Tilting an already tilted regularizer composes the tilts.
pub fn bregman_shift(reg: &Regularizer, p: &Field, anchor: &Field) -> Result<Regularizer> {
    p.ensure_same_grid(anchor)?;
    let base = reg.untilted();
    let total_p = match &reg.tilt {
        Some(t) => {
            t.p.ensure_same_grid(p)?;
            t.p.add(p)
        }
        None => p.clone(),
    };
    let anchor_value = base.eval(anchor)?;
    if !anchor_value.is_finite() {
        return Err(Error::InvalidArgument("anchor outside the regularizer's domain".into()));
    }
    Ok(Regularizer {
        tilt: Some(Tilt { p: total_p, anchor: anchor.clone(), anchor_value }),
        ..base
    })
}

/// `beta sum_nodes f_gamma(grad x(node))` with the Huber function
/// `f_gamma(y) = |y|^2 / (2 gamma)` for `|y| < gamma`, `|y| - gamma/2` otherwise,
/// and `gamma = beta / alpha`.
pub fn huber_tv(x: &Field, alpha: f64, beta: f64) -> Result<f64> {
    positive("alpha", alpha)?;
    positive("beta", beta)?;
    let gamma = beta / alpha;
    let norms = crate::fields::gradient_fd(x).pointwise_norms();
    Ok(beta
        * norms
            .iter()
            .map(|&t| if t < gamma { t * t / (2.0 * gamma) } else { t - gamma / 2.0 })
            .sum::<f64>())
}

/// Minimizer of the infimal convolution `g □ h` at `x`.
#[derive(Clone, Debug)]
pub struct InfConv {
    pub value: f64,
    pub u: Field,
    pub v: Field,
    pub iterations: usize,
}

/// `(g □ h)(x) = min_{u + v = x} g(u) + h(v)`, with `v = x - u` eliminated.
pub fn inf_conv_eval(g: &Regularizer, h: &Regularizer, x: &Field) -> Result<InfConv> {
    inf_conv_eval_with(g, h, x, &SolverConfig::tight())
}

pub fn inf_conv_eval_with(g: &Regularizer, h: &Regularizer, x: &Field, cfg: &SolverConfig) -> Result<InfConv> {
    g.check_grid(x)?;
    h.check_grid(x)?;
    let grid = x.grid();
    let mut s = SplitStructure::new(grid);
    let u = s.add_block("u", grid.len());
    g.contribute(&mut s, Argument::block(u))?;
    h.contribute(&mut s, Argument { block: Some(u), coef: -1.0, offset: Some(x.values()) })?;
    let out = pdhg(&s, None, cfg)?;
    let uf = Field::from_raw(grid, out.state.primal[u].clone());
    let vf = x.sub(&uf);
    Ok(InfConv { value: out.objective, u: uf, v: vf, iterations: out.iterations })
}

/// Both sides of the Bregman-distance decomposition of an infimal convolution:
/// `D_{g□h}^xi(x, x_hat)` and `min_{u+v=x} D_g^xi(u, u_hat) + D_h^xi(v, v_hat)`,
/// where `(u_hat, v_hat)` is the exact split of `x_hat` and `xi` a subgradient
/// of `g □ h` at `x_hat`.
pub fn bregman_distance_decomposition_check(
    g: &Regularizer,
    h: &Regularizer,
    xi: &Field,
    x: &Field,
    x_hat: &Field,
) -> Result<(f64, f64)> {
    let at_hat = inf_conv_eval(g, h, x_hat)?;
    let at_x = inf_conv_eval(g, h, x)?;
    let lhs = at_x.value - at_hat.value - xi.dot(&x.sub(x_hat));
    let gs = bregman_shift(g, xi, &at_hat.u)?;
    let hs = bregman_shift(h, xi, &at_hat.v)?;
    let rhs = inf_conv_eval(&gs, &hs, x)?.value;
    Ok((lhs, rhs))
}
