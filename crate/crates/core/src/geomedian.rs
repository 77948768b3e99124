//! Geometric median: averaged stochastic gradient stream and batch Weiszfeld.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::linalg::{norm, RealVec};

/// Distances below this are clamped in Weiszfeld weight denominators.
pub const ANCHOR_FLOOR: f64 = 1e-12;

/// Descent steps `gamma_n = c * n^(-alpha)`, `n >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    c: f64,
    alpha: f64,
}

impl StepSchedule {
    pub fn new(c: f64, alpha: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "step constant c must be positive, got {c}"
            )));
        }
        if !(alpha > 0.5 && alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "step exponent alpha must lie in (1/2, 1), got {alpha}"
            )));
        }
        Ok(Self { c, alpha })
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    #[inline]
    pub fn gamma(&self, n: u64) -> f64 {
        debug_assert!(n >= 1);
        self.c * (n as f64).powf(-self.alpha)
    }
}

impl Default for StepSchedule {
    fn default() -> Self {
        Self {
            c: 2.0,
            alpha: 0.75,
        }
    }
}

/// Robbins-Monro median iterate together with its running average.
///
/// `n` counts updates; `m_bar` is the mean of the iterates `m_1..m_n`
/// (it equals the starting point while `n == 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct MedianState {
    pub(crate) n: u64,
    pub(crate) m: Vec<f64>,
    pub(crate) m_bar: Vec<f64>,
    pub(crate) schedule: StepSchedule,
}

impl MedianState {
    pub fn new(start: RealVec, schedule: StepSchedule) -> Self {
        let m = start.into_inner();
        Self {
            n: 0,
            m_bar: m.clone(),
            m,
            schedule,
        }
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }

    pub fn iterate(&self) -> &[f64] {
        &self.m
    }

    pub fn average(&self) -> &[f64] {
        &self.m_bar
    }

    pub fn schedule(&self) -> StepSchedule {
        self.schedule
    }

    pub fn update(&mut self, x: &RealVec) -> Result<()> {
        Error::check_dim(self.dim(), x.dim())?;
        self.update_slice(x);
        Ok(())
    }

    /// One step on a finite observation of matching dimension.
    ///
    /// When `x` coincides with the iterate the move is skipped but the
    /// counter and the average still advance.
    pub(crate) fn update_slice(&mut self, x: &[f64]) {
        let k = self.n + 1;
        let gamma = self.schedule.gamma(k);
        let mut diff: Vec<f64> = x.iter().zip(&self.m).map(|(a, b)| a - b).collect();
        let dist = norm(&diff);
        if dist > 0.0 {
            let s = gamma / dist;
            diff.iter_mut().for_each(|v| *v *= s);
            self.m
                .iter_mut()
                .zip(&diff)
                .for_each(|(m, step)| *m += step);
        }
        let w = 1.0 / k as f64;
        self.m_bar
            .iter_mut()
            .zip(&self.m)
            .for_each(|(mb, m)| *mb -= w * (*mb - m));
        self.n = k;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeiszfeldOptions {
    pub eps: f64,
    pub max_iter: usize,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for WeiszfeldOptions {
    fn default() -> Self {
        Self {
            eps: 1e-8,
            max_iter: 1000,
            execution: Execution::default(),
        }
    }
}

impl WeiszfeldOptions {
    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "eps must be positive, got {}",
                self.eps
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter(
                "max_iter must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Result of a converged Weiszfeld run.
#[derive(Debug, Clone, PartialEq)]
pub struct WeiszfeldFit<T> {
    pub estimate: T,
    pub iterations: usize,
    pub displacement: f64,
    /// Objective at the pilot and after every iteration.
    pub objective_trace: Vec<f64>,
}

/// Error returned when Weiszfeld exhausts its iteration budget.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("weiszfeld stopped after {iterations} iterations with displacement {displacement:e}")]
pub struct WeiszfeldStall<T: std::fmt::Debug> {
    pub last: T,
    pub iterations: usize,
    pub displacement: f64,
}

impl<T: std::fmt::Debug> From<WeiszfeldStall<T>> for Error {
    fn from(s: WeiszfeldStall<T>) -> Self {
        Error::NoConvergence {
            algorithm: "weiszfeld",
            iterations: s.iterations,
            residual: s.displacement,
        }
    }
}

pub(crate) fn check_points(points: &[RealVec]) -> Result<usize> {
    let d = points.first().ok_or(Error::NoObservations)?.dim();
    for p in points {
        Error::check_dim(d, p.dim())?;
    }
    Ok(d)
}

/// `sum_i ||x_i - u||`.
pub fn median_objective(points: &[RealVec], u: &RealVec) -> Result<f64> {
    let d = check_points(points)?;
    Error::check_dim(d, u.dim())?;
    Ok(objective(points, u))
}

fn objective(points: &[RealVec], u: &[f64]) -> f64 {
    points.iter().map(|p| dist(p, u)).sum()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff)
}

/// Median of a non-empty slice, averaging the two middle values for even lengths.
pub(crate) fn scalar_median(values: &mut [f64]) -> f64 {
    let n = values.len();
    let mid = n / 2;
    let (_, hi, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let hi = *hi;
    if n % 2 == 1 {
        hi
    } else {
        let lo = values[..mid]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lo + hi)
    }
}

/// Coordinate-wise median, used as the Weiszfeld pilot.
pub fn coordinate_median(points: &[RealVec]) -> Result<RealVec> {
    let d = check_points(points)?;
    let mut column = vec![0.0; points.len()];
    let out = (0..d)
        .map(|j| {
            column.iter_mut().zip(points).for_each(|(c, p)| *c = p[j]);
            scalar_median(&mut column)
        })
        .collect();
    Ok(RealVec::from_raw(out))
}

/// Batch geometric median by Weiszfeld's fixed-point iteration.
///
/// Starts from the coordinate-wise median and stops once two consecutive
/// iterates are within `eps`.
pub fn weiszfeld_median(
    points: &[RealVec],
    opts: &WeiszfeldOptions,
) -> Result<WeiszfeldFit<RealVec>, WeiszfeldError<RealVec>> {
    opts.validate()?;
    check_points(points)?;
    let mut current = coordinate_median(points)?.into_inner();
    let mut trace = vec![objective(points, &current)];
    let mut displacement = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let next = weiszfeld_step(points, &current, opts.execution);
        displacement = dist(&next, &current);
        current = next;
        trace.push(objective(points, &current));
        if displacement <= opts.eps {
            return Ok(WeiszfeldFit {
                estimate: RealVec::from_raw(current),
                iterations: it,
                displacement,
                objective_trace: trace,
            });
        }
    }
    Err(WeiszfeldError::Stalled(WeiszfeldStall {
        last: RealVec::from_raw(current),
        iterations: opts.max_iter,
        displacement,
    }))
}

/// Normalized Weiszfeld weights with the collision handling of Vardi and Zhang.
///
/// Points within [`ANCHOR_FLOOR`] of the iterate are "coincident": they get no
/// weight in the reweighted mean `T`, and the step is then blended back
/// toward the iterate (see [`AnchorWeights::blend`]). Other denominators are
/// floored at [`ANCHOR_FLOOR`].
pub(crate) struct AnchorWeights {
    pub weights: Vec<f64>,
    inv_total: f64,
    coincident: usize,
}

impl AnchorWeights {
    pub fn new(dists: &[f64]) -> Self {
        let mut coincident = 0;
        let mut weights: Vec<f64> = dists
            .iter()
            .map(|&d| {
                if d <= ANCHOR_FLOOR {
                    coincident += 1;
                    0.0
                } else {
                    1.0 / d.max(ANCHOR_FLOOR)
                }
            })
            .collect();
        let inv_total: f64 = weights.iter().sum();
        if inv_total > 0.0 {
            weights.iter_mut().for_each(|w| *w /= inv_total);
        }
        Self {
            weights,
            inv_total,
            coincident,
        }
    }

    /// Share `lambda` of `T` in the next iterate `lambda T + (1 - lambda) u`,
    /// given `gap = ||T - u||`. Zero when the iterate already is optimal.
    pub fn blend(&self, gap: f64) -> f64 {
        if self.coincident == 0 {
            return 1.0;
        }
        let pull = self.inv_total * gap;
        let mass = self.coincident as f64;
        if pull <= mass {
            0.0
        } else {
            1.0 - mass / pull
        }
    }
}

/// One Weiszfeld map `u -> sum_i w_i(u) x_i`, collision-safe.
pub(crate) fn weiszfeld_step(points: &[RealVec], u: &[f64], execution: Execution) -> Vec<f64> {
    let dists: Vec<f64> = execution.map(points, |p| dist(p, u));
    let aw = AnchorWeights::new(&dists);
    let mut next = vec![0.0; u.len()];
    for (p, w) in points.iter().zip(&aw.weights) {
        next.iter_mut().zip(p.iter()).for_each(|(n, x)| *n += w * x);
    }
    let lambda = aw.blend(dist(&next, u));
    if lambda < 1.0 {
        next.iter_mut()
            .zip(u)
            .for_each(|(n, ui)| *n = lambda * *n + (1.0 - lambda) * ui);
    }
    next
}

/// `|| u - sum_i w_i(u) x_i ||`; zero at an exact Weiszfeld fixed point.
pub fn weiszfeld_residual(points: &[RealVec], u: &RealVec) -> Result<f64> {
    let d = check_points(points)?;
    Error::check_dim(d, u.dim())?;
    Ok(dist(u, &weiszfeld_step(points, u, Execution::Sequential)))
}

/// Failure of a Weiszfeld run: either bad input or an exhausted iteration budget.
#[derive(Debug, thiserror::Error)]
pub enum WeiszfeldError<T: std::fmt::Debug> {
    #[error(transparent)]
    Input(#[from] Error),
    #[error(transparent)]
    Stalled(WeiszfeldStall<T>),
}

impl<T: std::fmt::Debug> From<WeiszfeldError<T>> for Error {
    fn from(e: WeiszfeldError<T>) -> Self {
        match e {
            WeiszfeldError::Input(e) => e,
            WeiszfeldError::Stalled(s) => s.into(),
        }
    }
}
