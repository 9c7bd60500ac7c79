#![allow(dead_code)]

use nested_bregman::{Field, Grid};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(r)).collect()
}

pub fn random_field(grid: Grid, seed: u64) -> Field {
    let mut r = rng(seed);
    Field::new(grid, gaussian(&mut r, grid.len())).unwrap()
}

pub fn line(values: &[f64]) -> Field {
    Field::new(Grid::line(values.len()).unwrap(), values.to_vec()).unwrap()
}

/// Naive double loop over every lag with `v` extended periodically.
pub fn ncc_brute(u: &Field, v: &Field) -> Vec<f64> {
    let (rows, cols) = u.grid().shape();
    let (r, c) = (rows as isize, cols as isize);
    let norm = u.norm() * v.norm();
    let mut out = Vec::new();
    for k in -(r - 1)..r {
        for m in -(c - 1)..c {
            let mut acc = 0.0;
            for i in 0..r {
                for j in 0..c {
                    let ii = (i + k).rem_euclid(r) as usize;
                    let jj = (j + m).rem_euclid(c) as usize;
                    acc += u.at(i as usize, j as usize) * v.at(ii, jj);
                }
            }
            out.push(acc / norm);
        }
    }
    out
}

/// Dense matrix of a linear map given by its action on basis vectors.
pub fn dense(n_in: usize, n_out: usize, apply: impl Fn(&[f64], &mut [f64])) -> nalgebra::DMatrix<f64> {
    let mut m = nalgebra::DMatrix::zeros(n_out, n_in);
    let mut e = vec![0.0; n_in];
    let mut col = vec![0.0; n_out];
    for j in 0..n_in {
        e[j] = 1.0;
        apply(&e, &mut col);
        for i in 0..n_out {
            m[(i, j)] = col[i];
        }
        e[j] = 0.0;
    }
    m
}
