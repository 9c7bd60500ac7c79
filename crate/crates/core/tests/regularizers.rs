mod common;

use common::{dense, line, random_field, rng};
use nalgebra::{DMatrix, DVector};
use nested_bregman::fields::{gradient_fd, GradientOperator, LinearOperator};
use nested_bregman::regularizers::{
    bregman_distance_decomposition_check, bregman_shift, huber_tv, inf_conv_eval, inf_conv_eval_with,
};
use nested_bregman::{Field, Grid, Regularizer, SolverConfig};
use proptest::prelude::*;
use rand::Rng;

const OMEGA: [f64; 2] = [0.25, 0.5];

fn dyadic_field(grid: Grid, seed: u64) -> Field {
    let mut r = rng(seed);
    Field::from_fn(grid, |_, _| r.random_range(-64i32..=64) as f64 / 64.0)
}

fn grad_matrix(grid: Grid) -> DMatrix<f64> {
    let op = GradientOperator(grid);
    dense(op.domain_len(), op.range_len(), |x, y| op.apply_into(x, y))
}

#[test]
fn h1_of_constant_is_zero() {
    let r = Regularizer::h1sq(2.0).unwrap();
    assert_eq!(r.eval(&Field::constant(Grid::plane(5, 7).unwrap(), 1.3)).unwrap(), 0.0);
}

#[test]
fn tv_of_unit_step() {
    let r = Regularizer::tv(1.0).unwrap();
    assert_eq!(r.eval(&line(&[0.0, 0.0, 1.0, 1.0])).unwrap(), 1.0);
}

#[test]
fn simple_values_match_direct_sums() {
    let x = random_field(Grid::plane(6, 5).unwrap(), 4);
    let g = gradient_fd(&x);
    let h1 = 0.5 * 3.0 * g.norm().powi(2);
    let tv = 2.0 * g.pointwise_norms().iter().sum::<f64>();
    let l1 = 0.5 * x.values().iter().map(|v| v.abs()).sum::<f64>();
    let l2 = 0.5 * 4.0 * x.norm().powi(2);
    assert!((Regularizer::h1sq(3.0).unwrap().eval(&x).unwrap() - h1).abs() < 1e-12 * h1);
    assert!((Regularizer::tv(2.0).unwrap().eval(&x).unwrap() - tv).abs() < 1e-12 * tv);
    assert!((Regularizer::l1(0.5).unwrap().eval(&x).unwrap() - l1).abs() < 1e-12 * l1);
    assert!((Regularizer::l2sq(4.0).unwrap().eval(&x).unwrap() - l2).abs() < 1e-12 * l2);
}

#[test]
fn tgv2_vanishes_on_affine_fields() {
    let x = Field::from_fn(Grid::plane(12, 12).unwrap(), |i, j| 3.0 * i as f64 - j as f64 + 2.0);
    let v = Regularizer::tgv2(5.0, 5.0).unwrap().eval(&x).unwrap();
    assert!(v.abs() <= 1e-4, "{v}");
}

#[test]
fn tgv_is_bounded_by_its_first_order_part() {
    // w = 0 is admissible, so TGV2 <= alpha1 TV; and TGV2 >= 0.
    let x = random_field(Grid::plane(8, 8).unwrap(), 2);
    let tgv = Regularizer::tgv2(1.0, 2.0).unwrap().eval(&x).unwrap();
    let tv = Regularizer::tv(1.0).unwrap().eval(&x).unwrap();
    assert!(tgv >= -1e-8 && tgv <= tv * (1.0 + 1e-8), "{tgv} vs {tv}");
}

#[test]
fn tgv_osci_kernel_shrinks_under_refinement() {
    let value = |side: usize, w: [f64; 2]| {
        let x = Field::from_fn(Grid::plane(side, side).unwrap(), |i, j| (w[0] * i as f64 + w[1] * j as f64).sin());
        Regularizer::tgv_osci(1.0, 1.0, &w).unwrap().eval(&x).unwrap() / x.norm()
    };
    // Halving the frequency is the same continuum function on a grid twice as fine.
    let coarse = value(24, OMEGA);
    let fine = value(48, [OMEGA[0] / 2.0, OMEGA[1] / 2.0]);
    assert!(fine < coarse, "{fine} vs {coarse}");
}

#[test]
fn huber_constant_and_kink() {
    let (alpha, beta) = (4.0, 2.0);
    assert_eq!(huber_tv(&Field::constant(Grid::line(9).unwrap(), 2.0), alpha, beta).unwrap(), 0.0);
    let gamma = beta / alpha;
    let at_kink = huber_tv(&line(&[0.0, gamma]), alpha, beta).unwrap();
    assert!((at_kink - beta * gamma / 2.0).abs() < 1e-15);
    let eps = 1e-9;
    let below = huber_tv(&line(&[0.0, gamma - eps]), alpha, beta).unwrap();
    let above = huber_tv(&line(&[0.0, gamma + eps]), alpha, beta).unwrap();
    assert!(below < at_kink && at_kink < above && above - below < 1e-8);
}

#[test]
fn inf_conv_of_constant_with_h1_is_zero() {
    let x = Field::constant(Grid::line(16).unwrap(), 0.7);
    let r = inf_conv_eval(&Regularizer::h1sq(3.0).unwrap(), &Regularizer::l1(1.0).unwrap(), &x).unwrap();
    assert!(r.value.abs() < 1e-9, "{}", r.value);
    assert!(r.v.norm() < 1e-6);
}

#[test]
fn inf_conv_is_commutative() {
    let x = random_field(Grid::line(24).unwrap(), 8);
    let g = Regularizer::h1sq(2.0).unwrap();
    let h = Regularizer::l1(0.3).unwrap();
    let a = inf_conv_eval(&g, &h, &x).unwrap();
    let b = inf_conv_eval(&h, &g, &x).unwrap();
    assert!((a.value - b.value).abs() <= 1e-8, "{} vs {}", a.value, b.value);
    // v = x - u, so the split reproduces x up to one rounding per entry.
    let sum = a.u.add(&a.v);
    for (s, x) in sum.values().iter().zip(x.values()) {
        assert!((s - x).abs() <= 4.0 * f64::EPSILON * (1.0 + x.abs()));
    }
}

/// Coordinate descent on `min_v 1/2 v'Qv - b'v + beta |v|_1`, run to a fixed point.
fn lasso_cd(q: &DMatrix<f64>, b: &DVector<f64>, beta: f64) -> DVector<f64> {
    let n = b.len();
    let mut v = DVector::zeros(n);
    for _ in 0..200_000 {
        let mut change: f64 = 0.0;
        for i in 0..n {
            let rest = (q.row(i) * &v)[0] - q[(i, i)] * v[i];
            let z = b[i] - rest;
            let next = z.signum() * (z.abs() - beta).max(0.0) / q[(i, i)];
            change = change.max((next - v[i]).abs());
            v[i] = next;
        }
        if change < 1e-15 {
            break;
        }
    }
    v
}

#[test]
fn l1_h1_inf_conv_matches_lasso_oracle() {
    let grid = Grid::line(16).unwrap();
    let (alpha, beta) = (5.0, 0.4);
    let mut x = random_field(grid, 21);
    x.values_mut()[6] += 4.0;
    let d = grad_matrix(grid);
    let q = alpha * d.transpose() * &d;
    let xv = DVector::from_column_slice(x.values());
    // u = x - v: alpha/2 |D(x - v)|^2 + beta |v|_1.
    let v = lasso_cd(&q, &(&q * &xv), beta);
    let du = &d * (&xv - &v);
    let oracle = 0.5 * alpha * du.norm_squared() + beta * v.abs().sum();
    let r = inf_conv_eval(&Regularizer::h1sq(alpha).unwrap(), &Regularizer::l1(beta).unwrap(), &x).unwrap();
    assert!((r.value - oracle).abs() <= 1e-4 * oracle, "{} vs {oracle}", r.value);
    let g = Regularizer::h1sq(alpha).unwrap().eval(&x).unwrap();
    let h = Regularizer::l1(beta).unwrap().eval(&x).unwrap();
    assert!(r.value < g.min(h));
    // the impulse ends up in the sparse part
    assert!(r.v.values()[6] > 3.0);
}

#[test]
fn bregman_shift_trivial_cases() {
    let grid = Grid::line(12).unwrap();
    let tv = Regularizer::tv(1.5).unwrap();
    let zero = Field::zeros(grid);
    let shifted = bregman_shift(&tv, &zero, &Field::constant(grid, 2.0)).unwrap();
    for seed in 0..5 {
        let x = random_field(grid, seed);
        assert!((shifted.eval(&x).unwrap() - tv.eval(&x).unwrap()).abs() < 1e-12);
    }
    let anchor = random_field(grid, 40);
    let p = random_field(grid, 41);
    let s = bregman_shift(&tv, &p, &anchor).unwrap();
    assert!(s.eval(&anchor).unwrap().abs() < 1e-12);
}

#[test]
fn h1_bregman_distance_is_quadratic() {
    let grid = Grid::line(8).unwrap();
    let alpha = 3.0;
    let d = grad_matrix(grid);
    let anchor = random_field(grid, 1);
    let av = DVector::from_column_slice(anchor.values());
    let p = Field::new(grid, (alpha * d.transpose() * &d * &av).as_slice().to_vec()).unwrap();
    let shifted = bregman_shift(&Regularizer::h1sq(alpha).unwrap(), &p, &anchor).unwrap();
    for seed in 2..12 {
        let x = random_field(grid, seed);
        let diff = DVector::from_column_slice(x.values()) - &av;
        let expected = 0.5 * alpha * (&d * diff).norm_squared();
        assert!((shifted.eval(&x).unwrap() - expected).abs() <= 1e-12 * (1.0 + expected));
    }
}

#[test]
fn tilting_twice_composes() {
    let grid = Grid::line(10).unwrap();
    let reg = Regularizer::h1sq(1.0).unwrap();
    let (p1, p2) = (random_field(grid, 1), random_field(grid, 2));
    let anchor = random_field(grid, 3);
    let once = bregman_shift(&bregman_shift(&reg, &p1, &anchor).unwrap(), &p2, &anchor).unwrap();
    let direct = bregman_shift(&reg, &p1.add(&p2), &anchor).unwrap();
    let x = random_field(grid, 4);
    assert!((once.eval(&x).unwrap() - direct.eval(&x).unwrap()).abs() < 1e-12);
}

#[test]
fn bregman_distance_decomposes_for_quadratics() {
    let grid = Grid::line(20).unwrap();
    let (a, b) = (2.0, 6.0);
    let g = Regularizer::h1sq(a).unwrap();
    let h = Regularizer::h1sq(b).unwrap();
    let x_hat = random_field(grid, 5);
    let x = random_field(grid, 6);
    // g □ h = (ab/(a+b))/2 |D.|^2, so xi = ab/(a+b) D'D x_hat.
    let xi = Regularizer::h1sq(a * b / (a + b)).unwrap().gradient(&x_hat).unwrap();
    let (lhs, rhs) = bregman_distance_decomposition_check(&g, &h, &xi, &x, &x_hat).unwrap();
    assert!((lhs - rhs).abs() <= 1e-6 * (1.0 + lhs.abs()), "{lhs} vs {rhs}");
    let (l0, r0) = bregman_distance_decomposition_check(&g, &h, &xi, &x_hat, &x_hat).unwrap();
    assert!(l0.abs() < 1e-8 && r0.abs() < 1e-8, "{l0} {r0}");
}

#[test]
fn gradients_match_finite_differences() {
    let grid = Grid::plane(5, 6).unwrap();
    let x = random_field(grid, 12);
    let dir = random_field(grid, 13);
    for reg in [
        Regularizer::h1sq(2.0).unwrap(),
        Regularizer::l2sq(1.5).unwrap(),
        Regularizer::tv(1.0).unwrap().with_smoothing(0.1).unwrap(),
        Regularizer::l1(1.0).unwrap().with_smoothing(0.1).unwrap(),
    ] {
        let g = reg.gradient(&x).unwrap();
        let eps = 1e-6;
        let fd = (reg.eval(&x.add(&dir.scale(eps))).unwrap() - reg.eval(&x.sub(&dir.scale(eps))).unwrap()) / (2.0 * eps);
        assert!((g.dot(&dir) - fd).abs() <= 1e-6 * (1.0 + fd.abs()), "{}: {} vs {fd}", reg.name(), g.dot(&dir));
    }
    assert!(Regularizer::tv(1.0).unwrap().gradient(&x).is_err());
}

#[test]
fn rejects_bad_weights() {
    assert!(Regularizer::h1sq(0.0).is_err());
    assert!(Regularizer::l1(-1.0).is_err());
    assert!(Regularizer::tv(f64::NAN).is_err());
    assert!(Regularizer::tgv_osci(1.0, 1.0, &[]).is_err());
    assert!(Regularizer::tv(1.0).unwrap().with_smoothing(-1.0).is_err());
}

#[test]
fn tgv2_translation_invariance() {
    let grid = Grid::plane(8, 8).unwrap();
    let reg = Regularizer::tgv2(1.0, 2.0).unwrap();
    for seed in 0..3 {
        let x = dyadic_field(grid, seed);
        let a = reg.eval(&x).unwrap();
        let b = reg.eval(&x.add(&Field::constant(grid, 0.75))).unwrap();
        assert!((a - b).abs() <= 1e-10, "{a} vs {b}");
    }
}

#[test]
fn tgv_scaling_is_linear() {
    let grid = Grid::plane(8, 8).unwrap();
    let x = random_field(grid, 30);
    for reg in [Regularizer::tgv2(1.0, 2.0).unwrap(), Regularizer::tgv_osci(1.0, 1.0, &OMEGA).unwrap()] {
        let base = reg.eval(&x).unwrap();
        let scaled = reg.scaled(3.5).unwrap().eval(&x).unwrap();
        assert!((scaled - 3.5 * base).abs() <= 1e-6 * scaled, "{}: {scaled} vs {}", reg.name(), 3.5 * base);
    }
}

#[test]
fn smoothed_tgv_is_below_exact() {
    let grid = Grid::plane(8, 8).unwrap();
    let x = random_field(grid, 31);
    let reg = Regularizer::tgv2(1.0, 2.0).unwrap();
    let exact = reg.eval(&x).unwrap();
    let s1 = reg.clone().with_smoothing(1e-2).unwrap().eval(&x).unwrap();
    let s2 = reg.with_smoothing(1e-1).unwrap().eval(&x).unwrap();
    let slack = 1e-6 * exact;
    assert!(s2 <= s1 + slack && s1 <= exact + slack, "{s2} {s1} {exact}");
}

#[test]
fn tight_config_is_tighter_than_default() {
    let x = random_field(Grid::line(16).unwrap(), 3);
    let g = Regularizer::h1sq(1.0).unwrap();
    let h = Regularizer::l1(0.2).unwrap();
    let loose = inf_conv_eval_with(&g, &h, &x, &SolverConfig::default()).unwrap();
    let tight = inf_conv_eval(&g, &h, &x).unwrap();
    assert!(tight.value <= loose.value + 1e-9);
}

fn grid_strategy() -> impl Strategy<Value = Grid> {
    prop_oneof![
        (3usize..40).prop_map(|n| Grid::line(n).unwrap()),
        (3usize..12, 3usize..12).prop_map(|(r, c)| Grid::plane(r, c).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn values_are_nonnegative(grid in grid_strategy(), seed in any::<u64>()) {
        let x = random_field(grid, seed);
        for reg in [
            Regularizer::h1sq(1.0).unwrap(),
            Regularizer::l1(1.0).unwrap(),
            Regularizer::tv(1.0).unwrap(),
            Regularizer::l2sq(1.0).unwrap(),
        ] {
            prop_assert!(reg.eval(&x).unwrap() >= 0.0);
        }
    }

    #[test]
    fn scaling_weights_scales_values(grid in grid_strategy(), seed in any::<u64>(), c in 0.01f64..100.0) {
        let x = random_field(grid, seed);
        for reg in [
            Regularizer::h1sq(1.3).unwrap(),
            Regularizer::l1(0.7).unwrap(),
            Regularizer::tv(2.0).unwrap(),
        ] {
            let base = reg.eval(&x).unwrap();
            let scaled = reg.scaled(c).unwrap().eval(&x).unwrap();
            prop_assert!((scaled - c * base).abs() <= 1e-12 * (1.0 + scaled.abs()));
        }
    }

    #[test]
    fn seminorms_ignore_constants(grid in grid_strategy(), seed in any::<u64>(), c in -10.0f64..10.0) {
        let x = random_field(grid, seed);
        let shifted = x.add(&Field::constant(grid, c));
        for reg in [Regularizer::h1sq(1.0).unwrap(), Regularizer::tv(1.0).unwrap()] {
            prop_assert!(reg.is_shift_invariant());
            prop_assert!((reg.eval(&x).unwrap() - reg.eval(&shifted).unwrap()).abs() <= 1e-10);
        }
    }

    #[test]
    fn moreau_smoothing_is_monotone(
        grid in grid_strategy(),
        seed in any::<u64>(),
        mu1 in 1e-4f64..1.0,
        factor in 1.0f64..10.0,
    ) {
        let x = random_field(grid, seed);
        let mu2 = mu1 * factor;
        for reg in [Regularizer::l1(1.0).unwrap(), Regularizer::tv(1.0).unwrap()] {
            let exact = reg.eval(&x).unwrap();
            let v1 = reg.clone().with_smoothing(mu1).unwrap().eval(&x).unwrap();
            let v2 = reg.clone().with_smoothing(mu2).unwrap().eval(&x).unwrap();
            prop_assert!(v2 <= v1 + 1e-12 && v1 <= exact + 1e-12);
        }
    }

    #[test]
    fn bregman_distance_of_convex_reg_is_nonnegative(seed in any::<u64>()) {
        // p = grad g(anchor) is a valid subgradient.
        let grid = Grid::plane(6, 6).unwrap();
        let reg = Regularizer::tv(1.0).unwrap().with_smoothing(0.05).unwrap();
        let anchor = random_field(grid, seed);
        let p = reg.gradient(&anchor).unwrap();
        let shifted = bregman_shift(&reg, &p, &anchor).unwrap();
        let x = random_field(grid, seed.wrapping_add(1));
        prop_assert!(shifted.eval(&x).unwrap() >= -1e-12);
    }
}
