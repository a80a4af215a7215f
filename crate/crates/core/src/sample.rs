//! Seeded generators shared by the interchange checker, the check runner
//! and the tests. Everything is driven by `ChaCha8Rng` so a seed pins the
//! whole stream across platforms.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::rotation::{BlockRotation, DenseTransform};
use crate::signal::Signal;

pub type SeededRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform entries in `[-1, 1)`.
pub fn vector(rng: &mut SeededRng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Uniform angles in `[-pi, pi)`.
pub fn rotation(rng: &mut SeededRng, blocks: usize) -> BlockRotation {
    let angles = (0..blocks).map(|_| rng.random_range(-PI..PI)).collect();
    BlockRotation::from_angles(angles).expect("finite angles")
}

/// `I + spread * U[-1, 1)`; retries until the determinant test passes.
pub fn dense(rng: &mut SeededRng, d: usize, spread: f64) -> DenseTransform {
    loop {
        let m = DMatrix::from_fn(d, d, |i, j| {
            let e = spread * rng.random_range(-1.0..1.0);
            if i == j {
                1.0 + e
            } else {
                e
            }
        });
        if let Ok(t) = DenseTransform::from_matrix(m) {
            if t.inverse().is_ok() {
                return t;
            }
        }
    }
}

/// Plain `d_out x d_in` matrix with uniform entries.
pub fn matrix(rng: &mut SeededRng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

pub fn signal(rng: &mut SeededRng, shape: Vec<usize>, dim: usize) -> Signal {
    let n = shape.iter().product::<usize>() * dim;
    Signal::new(shape, dim, vector(rng, n)).expect("consistent shape")
}

/// Nonzero integer in `[-max, max]`.
pub fn nonzero_power(rng: &mut SeededRng, max: i64) -> i64 {
    loop {
        let p = rng.random_range(-max..=max);
        if p != 0 {
            return p;
        }
    }
}

pub fn power(rng: &mut SeededRng, max: i64) -> i64 {
    rng.random_range(-max..=max)
}

/// Uniform integer in `[lo, hi]`.
pub fn size(rng: &mut SeededRng, lo: usize, hi: usize) -> usize {
    rng.random_range(lo..=hi)
}

/// Uniform draw in `[lo, hi)`.
pub fn uniform(rng: &mut SeededRng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

/// Product of two random Householder reflections: orthogonal with
/// determinant one, dense, and generically non-commuting across draws.
pub fn orthogonal(rng: &mut SeededRng, d: usize) -> DenseTransform {
    let reflect = |rng: &mut SeededRng| {
        let mut u = DMatrix::from_column_slice(d, 1, &vector(rng, d));
        u /= u.norm().max(f64::MIN_POSITIVE);
        DMatrix::identity(d, d) - (&u * u.transpose()) * 2.0
    };
    let q = reflect(rng) * reflect(rng);
    DenseTransform::from_matrix(q).expect("orthogonal matrices are invertible")
}
