#![allow(dead_code)]

use mmimo_core::linalg::{c, CMat};
use mmimo_core::network::{CorrelationSet, Dims};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> CMat {
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    })
}

/// Random full-rank correlation matrix with trace `beta * m`.
pub fn random_correlation(m: usize, beta: f64, rng: &mut impl Rng) -> CMat {
    let a = gaussian_matrix(m, m, rng);
    let r = &a * a.adjoint() + CMat::identity(m, m) * c(0.1 * m as f64);
    let tr = r.trace().re;
    r * c(beta * m as f64 / tr)
}

/// Random correlation set with own-cell gains near 1 and inter-cell gains in
/// `[0.01, 0.5]`.
pub fn random_correlation_set(dims: Dims, rng: &mut impl Rng) -> CorrelationSet {
    CorrelationSet::from_fn(dims, |j, l, _| {
        let beta = if j == l { rng.random_range(0.5..1.5) } else { rng.random_range(0.01..0.5) };
        random_correlation(dims.antennas, beta, rng)
    })
    .unwrap()
}
