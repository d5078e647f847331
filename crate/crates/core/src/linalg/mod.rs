//! Matrix-free Krylov and block eigensolvers plus small dense helpers.

mod cg;
pub mod dense;
mod lobpcg;
mod minres;

pub use cg::{cg, CgInfo};
pub use lobpcg::{lobpcg, EigOptions, EigProblem, EigResult};
pub use minres::minres;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += s * x`
#[inline]
pub fn axpy(s: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += s * xi;
    }
}

/// Remove the mean of each of `ncomp` equal-length blocks.
pub fn remove_block_means(v: &mut [f64], ncomp: usize) {
    let m = v.len() / ncomp;
    for c in 0..ncomp {
        let blk = &mut v[c * m..(c + 1) * m];
        let mean = blk.iter().sum::<f64>() / m as f64;
        for x in blk {
            *x -= mean;
        }
    }
}

/// Seeded uniform vector in `[-1, 1)`.
pub fn random_vec(len: usize, rng: &mut impl rand::Rng) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}
