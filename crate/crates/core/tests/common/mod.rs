#![allow(dead_code)]

use mcm_core::linalg::orthonormalize;
use mcm_core::rng::StreamRng;
use mcm_core::RealVec;

pub fn gaussian(rng: &mut StreamRng, d: usize) -> RealVec {
    RealVec::new((0..d).map(|_| rng.normal()).collect()).unwrap()
}

pub fn scaled_gaussian(rng: &mut StreamRng, sd: &[f64]) -> RealVec {
    RealVec::new(sd.iter().map(|s| s * rng.normal()).collect()).unwrap()
}

/// Haar-ish random orthogonal matrix, rows orthonormal.
pub fn random_orthogonal(rng: &mut StreamRng, d: usize) -> Vec<Vec<f64>> {
    let raw: Vec<RealVec> = (0..d).map(|_| gaussian(rng, d)).collect();
    orthonormalize(&raw)
        .unwrap()
        .into_iter()
        .map(RealVec::into_inner)
        .collect()
}

pub fn apply(q: &[Vec<f64>], x: &[f64]) -> RealVec {
    RealVec::new(
        q.iter()
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect(),
    )
    .unwrap()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
