//! Subspace loss and Monte Carlo summaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{projector, RealVec, SymMat};

const PROJECTOR_TOL: f64 = 1e-6;
const FORMULA_AGREEMENT: f64 = 1e-8;

/// Squared Frobenius distance between two orthogonal projectors of equal rank.
///
/// Computed both as `||P_hat - P||_F^2` and as `2q - 2 tr(P_hat P)`; the two
/// must agree to `1e-8`. Lies in `[0, 2q]`.
pub fn eigenspace_error(p_hat: &SymMat, p_true: &SymMat) -> Result<f64> {
    Error::check_dim(p_true.dim(), p_hat.dim())?;
    let q_hat = projector_rank(p_hat, "estimated")?;
    let q_true = projector_rank(p_true, "reference")?;
    if q_hat != q_true {
        return Err(Error::NotProjector(format!(
            "ranks differ: estimated {q_hat}, reference {q_true}"
        )));
    }
    let direct = p_hat.sub(p_true)?.frob_norm_sq();
    let via_trace = 2.0 * q_hat as f64 - 2.0 * p_hat.frob_dot(p_true);
    if (direct - via_trace).abs() > FORMULA_AGREEMENT {
        return Err(Error::NotProjector(format!(
            "loss formulas disagree: {direct:e} vs {via_trace:e}"
        )));
    }
    Ok(direct.clamp(0.0, 2.0 * q_hat as f64))
}

fn projector_rank(p: &SymMat, which: &str) -> Result<usize> {
    let trace = p.trace();
    let q = trace.round();
    if (trace - q).abs() > PROJECTOR_TOL || q < 0.0 {
        return Err(Error::NotProjector(format!(
            "{which} trace {trace} is not an integer"
        )));
    }
    let dense = p.to_dense();
    let d = p.dim();
    let mut defect = 0.0;
    for i in 0..d {
        for j in 0..d {
            let pp: f64 = (0..d).map(|k| dense[i][k] * dense[k][j]).sum();
            defect += (pp - dense[i][j]).powi(2);
        }
    }
    if defect.sqrt() > PROJECTOR_TOL {
        return Err(Error::NotProjector(format!(
            "{which} matrix is not idempotent (||P^2 - P||_F = {:e})",
            defect.sqrt()
        )));
    }
    Ok(q as usize)
}

/// Loss between the spans of two bases.
pub fn subspace_error(estimated: &[RealVec], reference: &[RealVec]) -> Result<f64> {
    eigenspace_error(&projector(estimated)?, &projector(reference)?)
}

/// Median, quartiles and mean of Monte Carlo losses.
///
/// Quantiles use linear interpolation between order statistics
/// (`h = (n - 1) p`, the "type 7" rule); the median of an even count is the
/// midpoint of the two central values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub mean: f64,
}

pub fn mc_summary(values: &[f64]) -> Result<McSummary> {
    if values.is_empty() {
        return Err(Error::NoObservations);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(McSummary {
        median: quantile_sorted(&sorted, 0.5),
        q1: quantile_sorted(&sorted, 0.25),
        q3: quantile_sorted(&sorted, 0.75),
        mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
    })
}

fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
