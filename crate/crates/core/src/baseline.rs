//! Classical (non-robust) covariance, the reference PCA.

use crate::error::{Error, Result};
use crate::geomedian::check_points;
use crate::linalg::{RealVec, SymMat};

/// One-pass mean and covariance (Welford's update, rank-one form).
#[derive(Debug, Clone, PartialEq)]
pub struct RunningCovariance {
    n: u64,
    mean: Vec<f64>,
    m2: SymMat,
    delta: Vec<f64>,
}

impl RunningCovariance {
    pub fn new(dim: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; dim],
            m2: SymMat::zeros(dim),
            delta: vec![0.0; dim],
        }
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn push(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((d, m), xi) in self.delta.iter_mut().zip(self.mean.iter_mut()).zip(x) {
            *d = xi - *m;
            *m += *d / n;
        }
        self.m2.add_rank_one((n - 1.0) / n, &self.delta);
    }

    /// Unbiased covariance (`1 / (n - 1)`); needs two observations.
    pub fn covariance(&self) -> Result<SymMat> {
        if self.n < 2 {
            return Err(Error::NoObservations);
        }
        Ok(self.m2.scaled(1.0 / (self.n - 1) as f64))
    }
}

pub fn sample_covariance(points: &[RealVec]) -> Result<SymMat> {
    let d = check_points(points)?;
    let mut acc = RunningCovariance::new(d);
    for p in points {
        acc.push(p);
    }
    acc.covariance()
}
