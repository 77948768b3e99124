//! Synthetic contamination scenarios.
//!
//! Each row is `Y = (1 - O) X + O eps` with `O ~ Bernoulli(delta)`,
//! `X ~ N(0, Sigma)` for the discretized Brownian covariance
//! `Sigma[l][j] = min(l, j) / d` (1-based), and `eps` drawn from one of the
//! [`Contamination`] laws.
//!
//! Per row the stream consumes one uniform for `O`, then either `d` normals
//! for `X`, `d * (nu + 1)` normals for i.i.d. Student `t_nu` coordinates
//! (`z / sqrt(chi2_nu / nu)`, numerator first), or `d` normals for the
//! reverse-time Brownian law. See [`crate::rng`] for the base stream.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, sym_eigen, RealVec, SymMat, EIGEN_TOL};
use crate::rng::StreamRng;

const SPECTRAL_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Contamination {
    StudentT1,
    StudentT2,
    ReverseBrownian,
    None,
}

impl Contamination {
    pub fn name(self) -> &'static str {
        match self {
            Contamination::StudentT1 => "student_t1",
            Contamination::StudentT2 => "student_t2",
            Contamination::ReverseBrownian => "reverse_brownian",
            Contamination::None => "none",
        }
    }
}

impl fmt::Display for Contamination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Contamination {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "student_t1" | "t1" => Ok(Contamination::StudentT1),
            "student_t2" | "t2" => Ok(Contamination::StudentT2),
            "reverse_brownian" | "inv_brownian" => Ok(Contamination::ReverseBrownian),
            "none" => Ok(Contamination::None),
            other => Err(Error::InvalidParameter(format!(
                "unknown contamination scenario '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub d: usize,
    pub delta: f64,
    pub contamination: Contamination,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn new(d: usize, delta: f64, contamination: Contamination, seed: u64) -> Result<Self> {
        let cfg = Self {
            d,
            delta,
            contamination,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::InvalidParameter(format!(
                "dimension d must be at least 2, got {}",
                self.d
            )));
        }
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(Error::InvalidParameter(format!(
                "contamination rate must lie in [0, 1], got {}",
                self.delta
            )));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// `min(l, j) / d` with 1-based indices.
pub fn brownian_cov(d: usize) -> SymMat {
    SymMat::from_fn(d, |i, j| (i.min(j) + 1) as f64 / d as f64)
}

/// `2 min(d - l, d - j) / d` with 1-based indices; singular (last row is zero).
pub fn reverse_brownian_cov(d: usize) -> SymMat {
    SymMat::from_fn(d, |i, j| 2.0 * (d - 1 - i.max(j)) as f64 / d as f64)
}

/// Linear map turning i.i.d. standard normals into `N(0, Sigma)` draws.
#[derive(Debug, Clone)]
pub enum GaussianFactor {
    /// Lower-triangular Cholesky factor.
    Cholesky(Vec<Vec<f64>>),
    /// `(sqrt(lambda_k), v_k)` for eigenvalues above `1e-12`.
    Spectral(Vec<(f64, Vec<f64>)>),
}

impl GaussianFactor {
    pub fn cholesky(cov: &SymMat) -> Result<Self> {
        Ok(GaussianFactor::Cholesky(cholesky(cov)?))
    }

    /// Rank-revealing factor for singular or near-singular covariances.
    pub fn spectral(cov: &SymMat) -> Result<Self> {
        let pairs = sym_eigen(cov, EIGEN_TOL)?;
        if let Some(p) = pairs.last() {
            if p.value < -1e-8 * (1.0 + pairs[0].value.abs()) {
                return Err(Error::InvalidParameter(format!(
                    "covariance has a negative eigenvalue {:e}",
                    p.value
                )));
            }
        }
        Ok(GaussianFactor::Spectral(
            pairs
                .into_iter()
                .filter(|p| p.value > SPECTRAL_FLOOR)
                .map(|p| (p.value.sqrt(), p.vector.into_inner()))
                .collect(),
        ))
    }

    fn apply(&self, z: &[f64], out: &mut [f64]) {
        match self {
            GaussianFactor::Cholesky(l) => {
                for (o, row) in out.iter_mut().zip(l) {
                    *o = row.iter().zip(z).map(|(a, b)| a * b).sum();
                }
            }
            GaussianFactor::Spectral(factors) => {
                out.iter_mut().for_each(|o| *o = 0.0);
                for ((s, v), zk) in factors.iter().zip(z) {
                    let c = s * zk;
                    out.iter_mut().zip(v).for_each(|(o, vi)| *o += c * vi);
                }
            }
        }
    }
}

/// Row generator for one scenario; deterministic for a given seed.
#[derive(Debug, Clone)]
pub struct Sampler {
    cfg: ScenarioConfig,
    clean: GaussianFactor,
    reverse: Option<GaussianFactor>,
    rng: StreamRng,
    z: Vec<f64>,
    contaminated: u64,
    drawn: u64,
}

impl Sampler {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let clean = GaussianFactor::cholesky(&brownian_cov(cfg.d))?;
        let reverse = match cfg.contamination {
            Contamination::ReverseBrownian => {
                Some(GaussianFactor::spectral(&reverse_brownian_cov(cfg.d))?)
            }
            _ => None,
        };
        Ok(Self {
            cfg: *cfg,
            clean,
            reverse,
            rng: StreamRng::new(cfg.seed),
            z: vec![0.0; cfg.d],
            contaminated: 0,
            drawn: 0,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    /// Rows drawn from the contamination law so far.
    pub fn contaminated(&self) -> u64 {
        self.contaminated
    }

    pub fn drawn(&self) -> u64 {
        self.drawn
    }

    /// Writes the next row into `out` and reports whether it was contaminated.
    pub fn next_into(&mut self, out: &mut [f64]) -> bool {
        let d = self.cfg.d;
        debug_assert_eq!(out.len(), d);
        let switch = self.rng.uniform() < self.cfg.delta;
        let contaminated = switch && self.cfg.contamination != Contamination::None;
        self.drawn += 1;
        if !contaminated {
            self.fill_normals();
            self.clean.apply(&self.z, out);
            return false;
        }
        self.contaminated += 1;
        match self.cfg.contamination {
            Contamination::StudentT1 => self.fill_student(out, 1),
            Contamination::StudentT2 => self.fill_student(out, 2),
            Contamination::ReverseBrownian => {
                self.fill_normals();
                self.reverse
                    .as_ref()
                    .expect("reverse factor")
                    .apply(&self.z, out);
            }
            Contamination::None => unreachable!(),
        }
        true
    }

    pub fn next_row(&mut self) -> RealVec {
        let mut out = vec![0.0; self.cfg.d];
        self.next_into(&mut out);
        RealVec::from_raw(out)
    }

    fn fill_normals(&mut self) {
        for z in self.z.iter_mut() {
            *z = self.rng.normal();
        }
    }

    fn fill_student(&mut self, out: &mut [f64], nu: u32) {
        for o in out.iter_mut() {
            *o = loop {
                let num = self.rng.normal();
                let chi2: f64 = (0..nu).map(|_| self.rng.normal().powi(2)).sum();
                // chi2 == 0 has probability zero but would yield an infinite draw
                if chi2 > 0.0 {
                    break num / (chi2 / nu as f64).sqrt();
                }
            };
        }
    }
}

/// `n` rows of the scenario.
pub fn draw_sample(cfg: &ScenarioConfig, n: usize) -> Result<Vec<RealVec>> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "sample size must be at least 1".into(),
        ));
    }
    let mut sampler = Sampler::new(cfg)?;
    Ok((0..n).map(|_| sampler.next_row()).collect())
}

/// Writes rows as CSV; with `header`, the first line is `x1,...,xd`.
pub fn write_csv<W: Write>(rows: &[RealVec], writer: W, header: bool) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(writer);
    if let (true, Some(first)) = (header, rows.first()) {
        w.write_record((1..=first.dim()).map(|i| format!("x{i}")))?;
    }
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Streams `n` scenario rows straight to CSV without holding the sample.
pub fn simulate_csv<W: Write>(
    cfg: &ScenarioConfig,
    n: usize,
    writer: W,
    header: bool,
) -> Result<()> {
    let mut sampler = Sampler::new(cfg)?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(writer);
    if header {
        w.write_record((1..=cfg.d).map(|i| format!("x{i}")))?;
    }
    let mut row = vec![0.0; cfg.d];
    for _ in 0..n {
        sampler.next_into(&mut row);
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
