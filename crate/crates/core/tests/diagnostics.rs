mod common;

use common::{line, ncc_brute, random_field, rng};
use nested_bregman::diagnostics::{
    bound_tracker, first_local_min, ncc, psnr, psnr_sum, scalar_correlation, PSNR_CAP,
};
use nested_bregman::experiments::add_gaussian_noise;
use nested_bregman::{Error, Field, Grid};
use proptest::prelude::*;
use rand::Rng;

fn small_grid(r: &mut impl Rng) -> Grid {
    if r.random_bool(0.5) {
        Grid::line(r.random_range(2..=32)).unwrap()
    } else {
        Grid::plane(r.random_range(2..=8), r.random_range(2..=8)).unwrap()
    }
}

#[test]
fn ncc_matches_brute_force() {
    let mut r = rng(2024);
    for case in 0..50 {
        let grid = small_grid(&mut r);
        let u = random_field(grid, 2 * case);
        let v = random_field(grid, 2 * case + 1);
        let map = ncc(&u, &v).unwrap();
        let brute = ncc_brute(&u, &v);
        let (rows, cols) = grid.shape();
        assert_eq!(map.shape, (2 * rows - 1, 2 * cols - 1));
        assert_eq!(map.values.len(), brute.len());
        for (a, b) in map.values.iter().zip(&brute) {
            assert!((a - b).abs() <= 1e-12, "case {case} on {grid:?}: {a} vs {b}");
        }
        assert!((map.norm_uv - u.norm() * v.norm()).abs() <= 1e-12 * map.norm_uv);
    }
}

#[test]
fn impulses_peak_at_their_offset() {
    let u = line(&[1.0, 0.0, 0.0, 0.0]);
    let v = line(&[0.0, 0.0, 1.0, 0.0]);
    let map = ncc(&u, &v).unwrap();
    for k in -3..=3isize {
        let expected = if k.rem_euclid(4) == 2 { 1.0 } else { 0.0 };
        assert_eq!(map.at(k, 0), expected, "lag {k}");
    }
}

#[test]
fn constant_fields_have_closed_form_correlation() {
    for n in [3usize, 10, 31] {
        let c = Field::constant(Grid::line(n).unwrap(), 2.0);
        let s = scalar_correlation(&c, &c).unwrap();
        let expected = (2 * n - 1) as f64 / n as f64;
        assert!((s - expected).abs() <= 1e-12, "n={n}: {s}");
    }
    let c = Field::constant(Grid::plane(4, 6).unwrap(), -1.5);
    let s = scalar_correlation(&c, &c.scale(3.0)).unwrap();
    assert!((s - (7.0 * 11.0) / 24.0).abs() <= 1e-12);
}

#[test]
fn scalar_correlation_is_bounded_by_cauchy_schwarz() {
    for seed in 0..10 {
        let grid = Grid::plane(6, 5).unwrap();
        let u = random_field(grid, seed);
        let map = ncc(&u, &random_field(grid, seed + 100)).unwrap();
        assert!(map.values.iter().all(|r| r.abs() <= 1.0 + 1e-12));
    }
}

#[test]
fn zero_fields_and_grid_mismatch_are_errors() {
    let z = Field::zeros(Grid::line(5).unwrap());
    let u = random_field(Grid::line(5).unwrap(), 1);
    assert!(matches!(ncc(&z, &u), Err(Error::ZeroSignal)));
    assert!(matches!(scalar_correlation(&u, &z), Err(Error::ZeroSignal)));
    assert!(ncc(&u, &random_field(Grid::line(6).unwrap(), 1)).is_err());
    let flat = Field::constant(Grid::line(5).unwrap(), 1.0);
    assert!(psnr(&u, &flat).is_err());
}

#[test]
fn first_local_min_examples() {
    assert_eq!(first_local_min(&[5.0, 3.0, 4.0]), Some(2));
    assert_eq!(first_local_min(&[3.0, 5.0, 4.0, 6.0]), Some(3));
    assert_eq!(first_local_min(&[5.0, 4.0, 3.0, 2.0, 1.0]), None);
    assert_eq!(first_local_min(&[1.0, 2.0, 3.0]), None);
    assert_eq!(first_local_min(&[2.0, 2.0, 2.0]), None);
    assert_eq!(first_local_min(&[3.0, 2.0, 2.0, 4.0]), Some(2));
    assert_eq!(first_local_min(&[]), None);
    assert_eq!(first_local_min(&[1.0]), None);
}

#[test]
fn psnr_examples() {
    let reference = line(&[0.0, 1.0, 0.0, 1.0]);
    assert_eq!(psnr(&reference, &reference).unwrap(), PSNR_CAP);
    // MSE = 1e-4 with unit peak
    let off = reference.map(|x| x + 1e-2);
    assert!((psnr(&off, &reference).unwrap() - 40.0).abs() <= 1e-9);
    // one error of 0.1 over four samples: 10 log10(400) = 26.0206
    let one = line(&[0.1, 1.0, 0.0, 1.0]);
    assert!((psnr(&one, &reference).unwrap() - 26.020_599_913_279_62).abs() <= 1e-9);
    let s = psnr_sum(&off, &one, &reference, &reference).unwrap();
    assert!((s - 66.020_599_913_279_62).abs() <= 1e-9);
}

#[test]
fn psnr_drops_as_noise_grows() {
    let reference = random_field(Grid::plane(20, 20).unwrap(), 3);
    let mut prev = f64::INFINITY;
    for std in [1e-3, 1e-2, 0.05, 0.2, 1.0] {
        let (noisy, _) = add_gaussian_noise(&reference, std, 4).unwrap();
        let p = psnr(&noisy, &reference).unwrap();
        assert!(p < prev, "std {std}: {p} >= {prev}");
        prev = p;
    }
}

#[test]
fn bound_tracker_flags_violations() {
    let checks = bound_tracker(&[3.0, 1.4, 2.0], 0.0, 3.0);
    assert_eq!(checks.iter().map(|c| c.bound).collect::<Vec<_>>(), vec![3.0, 1.5, 1.0]);
    assert_eq!(checks.iter().map(|c| c.ok).collect::<Vec<_>>(), vec![true, true, false]);
    assert_eq!(checks[2].l, 3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scalar_correlation_is_symmetric(seed in any::<u64>(), r in 2usize..9, c in 1usize..9) {
        let grid = if c == 1 { Grid::line(r).unwrap() } else { Grid::plane(r, c).unwrap() };
        let u = random_field(grid, seed);
        let v = random_field(grid, seed.wrapping_add(1));
        let a = scalar_correlation(&u, &v).unwrap();
        let b = scalar_correlation(&v, &u).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a));
    }

    #[test]
    fn correlation_ignores_positive_and_negative_scaling(seed in any::<u64>(), s in 1e-3f64..1e3, t in -1e3f64..-1e-3) {
        let grid = Grid::plane(5, 7).unwrap();
        let u = random_field(grid, seed);
        let v = random_field(grid, seed.wrapping_add(7));
        let base = ncc(&u, &v).unwrap();
        let scaled = ncc(&u.scale(s), &v.scale(t)).unwrap();
        for (a, b) in base.values.iter().zip(&scaled.values) {
            prop_assert!((a + b).abs() <= 1e-12);
        }
        let c0 = scalar_correlation(&u, &v).unwrap();
        let c1 = scalar_correlation(&u.scale(s), &v.scale(t)).unwrap();
        prop_assert!((c0 - c1).abs() <= 1e-12 * (1.0 + c0));
    }

    #[test]
    fn psnr_is_translation_invariant(seed in any::<u64>(), shift in -10.0f64..10.0) {
        let grid = Grid::line(40).unwrap();
        let reference = random_field(grid, seed);
        let x = random_field(grid, seed.wrapping_add(3));
        let a = psnr(&x, &reference).unwrap();
        let b = psnr(&x.map(|z| z + shift), &reference.map(|z| z + shift)).unwrap();
        prop_assert!((a - b).abs() <= 1e-9);
    }
}
