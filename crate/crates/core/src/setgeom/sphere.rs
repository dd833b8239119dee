//! Deterministic unit-sphere samples.

use crate::linalg::normalized;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GAUSS_SEED: u64 = 0x5eed;

/// Default direction count per dimension.
pub fn default_count(dim: usize) -> usize {
    match dim {
        1 => 2,
        2 => 64,
        3 => 512,
        _ => 2048,
    }
}

pub fn default_sphere(dim: usize) -> Vec<Vec<f64>> {
    sphere_sample(dim, default_count(dim))
}

/// `count` unit vectors in `R^dim`: `{-1, 1}` on the line, equiangular on the
/// circle (starting at angle 0), a Fibonacci lattice in three dimensions and
/// seeded Gaussian directions beyond.
pub fn sphere_sample(dim: usize, count: usize) -> Vec<Vec<f64>> {
    let count = count.max(1);
    match dim {
        0 => Vec::new(),
        1 => vec![vec![-1.0], vec![1.0]],
        2 => (0..count)
            .map(|k| {
                let a = std::f64::consts::TAU * k as f64 / count as f64;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|i| {
                    let z = 1.0 - (2.0 * i as f64 + 1.0) / count as f64;
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    let phi = golden * i as f64;
                    normalized(&[r * phi.cos(), r * phi.sin(), z]).unwrap()
                })
                .collect()
        }
        d => {
            let mut rng = ChaCha8Rng::seed_from_u64(GAUSS_SEED ^ d as u64);
            let mut out = Vec::with_capacity(count);
            while out.len() < count {
                let g: Vec<f64> = (0..d).map(|_| gaussian(&mut rng)).collect();
                if let Some(u) = normalized(&g) {
                    out.push(u);
                }
            }
            out
        }
    }
}

fn gaussian(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
