//! Small deterministic PRNG for Monte-Carlo estimates.
//!
//! Every sampling routine in the crate takes an explicit seed so that runs
//! are reproducible bit-for-bit; the generator is a SplitMix64, which is
//! enough for the sup-estimation and experiment sampling done here.

use alloc::vec::Vec;
use nalgebra::DVector;
#[allow(unused_imports)]
use num_traits::Float;

/// SplitMix64 generator (Steele, Lea, Flood 2014).
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform draw in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in (0, 1].
    pub fn uniform_open_closed(&mut self) -> f64 {
        1.0 - self.uniform()
    }

    /// Uniform draw in [lo, hi).
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform_open_closed();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * core::f64::consts::PI * u2).cos()
    }

    /// Uniform direction on the unit sphere in `dim` dimensions.
    pub fn unit_sphere(&mut self, dim: usize) -> DVector<f64> {
        loop {
            let v = DVector::from_fn(dim, |_, _| self.normal());
            let n = v.norm();
            if n > 1e-12 {
                return v / n;
            }
        }
    }

    /// Vector with independent entries uniform in [lo, hi).
    pub fn uniform_vector(&mut self, dim: usize, lo: f64, hi: f64) -> DVector<f64> {
        DVector::from_fn(dim, |_, _| self.uniform_in(lo, hi))
    }
}

/// Rank-1 lattice (Kronecker/Weyl) point set on the unit cube, used for
/// deterministic sup-sampling grids. Uses the R_d generalized golden-ratio
/// generator so no seed is needed.
pub fn lattice(dim: usize, count: usize) -> Vec<Vec<f64>> {
    // Unique positive root of x^{d+1} = x + 1 by fixed-point iteration.
    let mut phi = 1.5f64;
    for _ in 0..64 {
        phi = (1.0 + phi).powf(1.0 / (dim as f64 + 1.0));
    }
    let gamma: Vec<f64> = (1..=dim).map(|i| phi.powi(-(i as i32))).collect();
    (0..count)
        .map(|k| {
            gamma
                .iter()
                .map(|g| {
                    let x = 0.5 + g * (k as f64 + 1.0);
                    x - x.floor()
                })
                .collect()
        })
        .collect()
}
