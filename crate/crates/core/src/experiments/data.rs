//! Synthetic ground truths and seeded noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::fields::{Field, ForwardOperator, Grid};

/// Default noise standard deviation of all three experiments.
pub const DEFAULT_NOISE_STD: f64 = 0.05;
/// Number of spikes in the sparse component of the first experiment.
pub const EXP1_SPIKES: usize = 7;
/// Peak height of the smooth bump in the second experiment.
pub const EXP2_BUMP_AMPLITUDE: f64 = 0.75;
/// Blur width (pixels) of the second experiment.
pub const EXP2_BLUR_STD: f64 = 1.0;
/// Frequency of the texture in the third experiment.
pub const EXP3_OMEGA: [f64; 2] = [0.25, 0.5];

// Independent ChaCha streams for layout randomness and for noise.
const LAYOUT_STREAM: u64 = 0;
const NOISE_STREAM: u64 = 1;

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Clean components, the observation and its exact noise level.
#[derive(Clone, Debug)]
pub struct GroundTruth {
    pub a: ForwardOperator,
    pub u_true: Field,
    pub v_true: Field,
    pub x_true: Field,
    pub f_clean: Field,
    pub f_delta: Field,
    /// `|f_delta - f_clean|`, from the realized noise.
    pub delta: f64,
}

impl GroundTruth {
    fn assemble(a: ForwardOperator, u_true: Field, v_true: Field, noise_std: f64, seed: u64) -> Result<Self> {
        let x_true = u_true.add(&v_true);
        let f_clean = a.apply(&x_true);
        let (f_delta, delta) = add_gaussian_noise(&f_clean, noise_std, seed)?;
        Ok(Self { a, u_true, v_true, x_true, f_clean, f_delta, delta })
    }
}

/// I.i.d. Gaussian noise from the seeded ChaCha8 generator (noise stream);
/// returns the noisy field and the norm of the realized noise.
pub fn add_gaussian_noise(f: &Field, std: f64, seed: u64) -> Result<(Field, f64)> {
    if !(std.is_finite() && std >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise std must be >= 0, got {std}")));
    }
    if std == 0.0 {
        return Ok((f.clone(), 0.0));
    }
    let normal = Normal::new(0.0, std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut r = rng(seed, NOISE_STREAM);
    let noise: Vec<f64> = (0..f.len()).map(|_| normal.sample(&mut r)).collect();
    let delta = noise.iter().map(|e| e * e).sum::<f64>().sqrt();
    let values = f.values().iter().zip(&noise).map(|(a, b)| a + b).collect();
    Ok((Field::new(f.grid(), values)?, delta))
}

/// One sine period plus sparse spikes on a line of `n` nodes, no blur.
pub fn gen_exp1(n: usize, seed: u64) -> Result<GroundTruth> {
    gen_exp1_with(n, seed, DEFAULT_NOISE_STD)
}

pub fn gen_exp1_with(n: usize, seed: u64, noise_std: f64) -> Result<GroundTruth> {
    if n < 16 {
        return Err(Error::InvalidArgument(format!("experiment 1 needs n >= 16, got {n}")));
    }
    let grid = Grid::line(n)?;
    let u = Field::from_fn(grid, |i, _| (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).sin());
    let mut r = rng(seed, LAYOUT_STREAM);
    let mut spikes = vec![0.0; n];
    let mut placed = 0;
    while placed < EXP1_SPIKES {
        let pos = r.random_range(0..n);
        if spikes[pos] != 0.0 {
            continue;
        }
        let amp: f64 = r.random_range(0.5..=1.5);
        spikes[pos] = if r.random_bool(0.5) { amp } else { -amp };
        placed += 1;
    }
    let v = Field::new(grid, spikes)?;
    GroundTruth::assemble(ForwardOperator::Identity, u, v, noise_std, seed)
}

/// Smooth bump plus the indicator of a centered square, blurred.
pub fn gen_exp2(side: usize, seed: u64) -> Result<GroundTruth> {
    gen_exp2_with(side, seed, DEFAULT_NOISE_STD)
}

pub fn gen_exp2_with(side: usize, seed: u64, noise_std: f64) -> Result<GroundTruth> {
    if side < 32 {
        return Err(Error::InvalidArgument(format!("experiment 2 needs side >= 32, got {side}")));
    }
    let grid = Grid::plane(side, side)?;
    let pi = std::f64::consts::PI;
    let m = (side - 1) as f64;
    let u = Field::from_fn(grid, |i, j| {
        EXP2_BUMP_AMPLITUDE * (pi * i as f64 / m).sin() * (pi * j as f64 / m).sin()
    });
    let s = side / 3;
    let start = (side - s) / 2;
    let inside = |k: usize| (start..start + s).contains(&k);
    let v = Field::from_fn(grid, |i, j| if inside(i) && inside(j) { 1.0 } else { 0.0 });
    GroundTruth::assemble(ForwardOperator::gaussian_blur(EXP2_BLUR_STD), u, v, noise_std, seed)
}

/// 3x3 blocks of `subsquare` pixels: an affine ramp in the centre block and a
/// texture `cos(omega.z) + sin(omega.z)` in the eight outer blocks.
pub fn gen_exp3(subsquare: usize, seed: u64) -> Result<GroundTruth> {
    gen_exp3_with(subsquare, seed, DEFAULT_NOISE_STD)
}

pub fn gen_exp3_with(subsquare: usize, seed: u64, noise_std: f64) -> Result<GroundTruth> {
    if subsquare < 16 {
        return Err(Error::InvalidArgument(format!("experiment 3 needs subsquare >= 16, got {subsquare}")));
    }
    let side = 3 * subsquare;
    let grid = Grid::plane(side, side)?;
    let local = |k: usize| ((k / subsquare), (k % subsquare) as f64);
    let u = Field::from_fn(grid, |i, j| {
        let ((bi, z1), (bj, z2)) = (local(i), local(j));
        if bi == 1 && bj == 1 {
            (z1 + z2) / (2.0 * subsquare as f64)
        } else {
            0.0
        }
    });
    let v = Field::from_fn(grid, |i, j| {
        let ((bi, z1), (bj, z2)) = (local(i), local(j));
        if bi == 1 && bj == 1 {
            0.0
        } else {
            let phase = EXP3_OMEGA[0] * z1 + EXP3_OMEGA[1] * z2;
            phase.cos() + phase.sin()
        }
    });
    GroundTruth::assemble(ForwardOperator::Identity, u, v, noise_std, seed)
}
