//! Dense vector and symmetric-matrix kernel.
//!
//! [`SymMat`] stores only the upper triangle (row-major, packed), so every
//! matrix produced by this crate is exactly symmetric. The Frobenius inner
//! product counts each off-diagonal entry twice.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default relative tolerance for [`sym_eigen`].
pub const EIGEN_TOL: f64 = 1e-12;

const JACOBI_MAX_SWEEPS: usize = 100;
const GRAM_SCHMIDT_PIVOT: f64 = 1e-12;

/// Dense real vector with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealVec(Vec<f64>);

impl RealVec {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::InvalidParameter(
                "vector dimension must be at least 1".into(),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("vector"));
        }
        Ok(Self(data))
    }

    pub fn zeros(d: usize) -> Self {
        Self(vec![0.0; d])
    }

    /// Unit basis vector `e_i` in `R^d`.
    pub fn basis(d: usize, i: usize) -> Self {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        Self(v)
    }

    /// Wraps values that the caller has already checked (or computed from finite inputs).
    pub(crate) fn from_raw(data: Vec<f64>) -> Self {
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Self(data)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn dot(&self, other: &RealVec) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn sub(&self, other: &RealVec) -> Result<RealVec> {
        Error::check_dim(self.dim(), other.dim())?;
        Ok(Self(
            self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect(),
        ))
    }

    pub fn add(&self, other: &RealVec) -> Result<RealVec> {
        Error::check_dim(self.dim(), other.dim())?;
        Ok(Self(
            self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect(),
        ))
    }

    pub fn scaled(&self, factor: f64) -> RealVec {
        Self(self.0.iter().map(|v| v * factor).collect())
    }
}

impl Deref for RealVec {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for RealVec {
    type Error = Error;

    fn try_from(data: Vec<f64>) -> Result<Self> {
        Self::new(data)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean norm, rescaled when the plain sum of squares would overflow or underflow.
pub(crate) fn norm(x: &[f64]) -> f64 {
    let ss: f64 = x.iter().map(|v| v * v).sum();
    if ss.is_finite() && ss > 1e-290 {
        return ss.sqrt();
    }
    let scale = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    let ss: f64 = x.iter().map(|v| (v / scale) * (v / scale)).sum();
    scale * ss.sqrt()
}

/// Dense symmetric `d x d` matrix, packed upper triangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymMat {
    dim: usize,
    data: Vec<f64>,
}

#[inline]
fn packed_len(d: usize) -> usize {
    d * (d + 1) / 2
}

#[inline]
fn row_offset(d: usize, i: usize) -> usize {
    i * (2 * d - i + 1) / 2
}

impl SymMat {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; packed_len(dim)],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::diag(&vec![1.0; dim])
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    /// Builds the matrix from `f(i, j)` evaluated on the upper triangle (`i <= j`).
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(packed_len(dim));
        for i in 0..dim {
            for j in i..dim {
                data.push(f(i, j));
            }
        }
        Self { dim, data }
    }

    /// Builds from a dense row-major matrix, using its upper triangle.
    /// Rejects inputs whose lower triangle disagrees by more than `1e-12` relative.
    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        for r in rows {
            Error::check_dim(d, r.len())?;
        }
        for i in 0..d {
            for j in 0..i {
                let (a, b) = (rows[i][j], rows[j][i]);
                if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                    return Err(Error::InvalidParameter(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let m = Self::from_fn(d, |i, j| rows[i][j]);
        m.ensure_finite()?;
        Ok(m)
    }

    /// Raw packed storage (`d(d+1)/2` values); used by the snapshot format.
    pub fn from_packed(dim: usize, data: Vec<f64>) -> Result<Self> {
        Error::check_dim(packed_len(dim), data.len())?;
        let m = Self { dim, data };
        m.ensure_finite()?;
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn packed(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    fn index(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        row_offset(self.dim, i) + (j - i)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.index(i, j)]
    }

    /// Writes both `(i, j)` and `(j, i)`.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.index(i, j);
        self.data[k] = v;
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j)).collect())
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn ensure_finite(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite("symmetric matrix"))
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn frob_norm_sq(&self) -> f64 {
        let mut diag = 0.0;
        let mut off = 0.0;
        for i in 0..self.dim {
            let row = &self.data[row_offset(self.dim, i)..row_offset(self.dim, i + 1)];
            diag += row[0] * row[0];
            off += row[1..].iter().map(|v| v * v).sum::<f64>();
        }
        diag + 2.0 * off
    }

    pub fn frob_norm(&self) -> f64 {
        self.frob_norm_sq().sqrt()
    }

    /// Unchecked Frobenius inner product; callers guarantee equal dimensions.
    pub(crate) fn frob_dot(&self, other: &SymMat) -> f64 {
        let mut diag = 0.0;
        let mut off = 0.0;
        for i in 0..self.dim {
            let (s, e) = (row_offset(self.dim, i), row_offset(self.dim, i + 1));
            let (a, b) = (&self.data[s..e], &other.data[s..e]);
            diag += a[0] * b[0];
            off += dot(&a[1..], &b[1..]);
        }
        diag + 2.0 * off
    }

    /// `A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; d];
        for i in 0..d {
            let row = &self.data[row_offset(d, i)..row_offset(d, i + 1)];
            let xi = x[i];
            out[i] += row[0] * xi;
            let mut acc = 0.0;
            for (k, &a) in row[1..].iter().enumerate() {
                let j = i + 1 + k;
                acc += a * x[j];
                out[j] += a * xi;
            }
            out[i] += acc;
        }
        out
    }

    /// Quadratic form `x^T A x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let d = self.dim;
        let mut diag = 0.0;
        let mut off = 0.0;
        for i in 0..d {
            let row = &self.data[row_offset(d, i)..row_offset(d, i + 1)];
            diag += row[0] * x[i] * x[i];
            off += x[i] * dot(&row[1..], &x[i + 1..]);
        }
        diag + 2.0 * off
    }

    /// `self <- keep * self + weight * y y^T`.
    pub(crate) fn scale_add_rank_one(&mut self, keep: f64, weight: f64, y: &[f64]) {
        let d = self.dim;
        for i in 0..d {
            let s = row_offset(d, i);
            let wi = weight * y[i];
            for (a, &yj) in self.data[s..s + d - i].iter_mut().zip(&y[i..]) {
                *a = keep * *a + wi * yj;
            }
        }
    }

    /// `self <- self + weight * y y^T`.
    pub fn add_rank_one(&mut self, weight: f64, y: &[f64]) {
        self.scale_add_rank_one(1.0, weight, y);
    }

    /// `self <- self + t * (other - self)`.
    pub(crate) fn lerp_toward(&mut self, other: &SymMat, t: f64) {
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += t * (b - *a);
        }
    }

    pub fn sub(&self, other: &SymMat) -> Result<SymMat> {
        Error::check_dim(self.dim, other.dim)?;
        Ok(Self {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    pub fn scaled(&self, factor: f64) -> SymMat {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    /// `Q A Q^T` for a dense row-major `Q`.
    pub fn congruence(&self, q: &[Vec<f64>]) -> Result<SymMat> {
        let d = self.dim;
        Error::check_dim(d, q.len())?;
        let a = self.to_dense();
        // t = Q A
        let t: Vec<Vec<f64>> = q
            .iter()
            .map(|qr| {
                (0..d)
                    .map(|j| (0..d).map(|k| qr[k] * a[k][j]).sum())
                    .collect()
            })
            .collect();
        Ok(Self::from_fn(d, |i, j| {
            (0..d).map(|k| t[i][k] * q[j][k]).sum()
        }))
    }
}

/// Frobenius inner product `tr(A^T B)`.
pub fn frob_inner(a: &SymMat, b: &SymMat) -> Result<f64> {
    Error::check_dim(a.dim, b.dim)?;
    Ok(a.frob_dot(b))
}

/// Outer product. For `x == y` this is the rank-one PSD matrix `x x^T`;
/// otherwise the symmetric part `(x y^T + y x^T) / 2` is returned.
pub fn outer(x: &RealVec, y: &RealVec) -> Result<SymMat> {
    Error::check_dim(x.dim(), y.dim())?;
    Ok(SymMat::from_fn(x.dim(), |i, j| {
        0.5 * (x[i] * y[j] + y[i] * x[j])
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub value: f64,
    pub vector: RealVec,
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Pairs are sorted by descending eigenvalue; each vector has its first
/// nonzero coordinate positive. Iterates until the off-diagonal Frobenius
/// mass is at most `tol * ||a||_F / 2`.
pub fn sym_eigen(a: &SymMat, tol: f64) -> Result<Vec<EigenPair>> {
    a.ensure_finite()?;
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "eigen tolerance must be positive, got {tol}"
        )));
    }
    let d = a.dim;
    let mut m = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            m[i * d + j] = a.get(i, j);
        }
    }
    let mut v = vec![0.0; d * d];
    for i in 0..d {
        v[i * d + i] = 1.0;
    }

    let target = 0.5 * tol * a.frob_norm();
    let off_norm = |m: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..d {
            for j in i + 1..d {
                s += m[i * d + j] * m[i * d + j];
            }
        }
        (2.0 * s).sqrt()
    };

    let mut off = off_norm(&m);
    let mut sweeps = 0;
    while off > target {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::NoConvergence {
                algorithm: "jacobi eigensolver",
                iterations: sweeps,
                residual: off,
            });
        }
        for p in 0..d {
            for q in p + 1..d {
                let apq = m[p * d + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q * d + q] - m[p * d + p]) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut m, d, p, q, c, s);
                m[p * d + p] -= t * apq;
                m[q * d + q] += t * apq;
                m[p * d + q] = 0.0;
                m[q * d + p] = 0.0;
                for r in 0..d {
                    let (vp, vq) = (v[r * d + p], v[r * d + q]);
                    v[r * d + p] = c * vp - s * vq;
                    v[r * d + q] = s * vp + c * vq;
                }
            }
        }
        sweeps += 1;
        off = off_norm(&m);
    }

    let mut pairs: Vec<EigenPair> = (0..d)
        .map(|k| {
            let mut vec: Vec<f64> = (0..d).map(|r| v[r * d + k]).collect();
            fix_sign(&mut vec);
            EigenPair {
                value: m[k * d + k],
                vector: RealVec::from_raw(vec),
            }
        })
        .collect();
    pairs.sort_by(|a, b| b.value.total_cmp(&a.value));
    Ok(pairs)
}

// Off-diagonal part of the two-sided rotation J^T M J on rows/columns p, q.
fn rotate(m: &mut [f64], d: usize, p: usize, q: usize, c: f64, s: f64) {
    for r in 0..d {
        if r == p || r == q {
            continue;
        }
        let (mrp, mrq) = (m[r * d + p], m[r * d + q]);
        let np = c * mrp - s * mrq;
        let nq = s * mrp + c * mrq;
        m[r * d + p] = np;
        m[p * d + r] = np;
        m[r * d + q] = nq;
        m[q * d + r] = nq;
    }
}

pub(crate) fn fix_sign(v: &mut [f64]) {
    if let Some(first) = v.iter().copied().find(|c| c.abs() > 1e-12) {
        if first < 0.0 {
            v.iter_mut().for_each(|c| *c = -*c);
        }
    }
}

/// Top-`q` eigenvectors of `a`, descending eigenvalue order.
pub fn top_eigenvectors(a: &SymMat, q: usize) -> Result<Vec<RealVec>> {
    if q == 0 || q > a.dim {
        return Err(Error::InvalidParameter(format!(
            "subspace dimension {q} out of range 1..={}",
            a.dim
        )));
    }
    Ok(sym_eigen(a, EIGEN_TOL)?
        .into_iter()
        .take(q)
        .map(|p| p.vector)
        .collect())
}

pub fn min_eigenvalue(a: &SymMat) -> Result<f64> {
    let pairs = sym_eigen(a, EIGEN_TOL)?;
    Ok(pairs.last().map_or(0.0, |p| p.value))
}

/// Modified Gram-Schmidt with one re-orthogonalization pass.
///
/// Fails when a vector's residual falls below `1e-12` of its original norm.
pub fn orthonormalize(basis: &[RealVec]) -> Result<Vec<RealVec>> {
    let d = match basis.first() {
        Some(b) => b.dim(),
        None => return Err(Error::InvalidParameter("empty basis".into())),
    };
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(basis.len());
    for (index, b) in basis.iter().enumerate() {
        Error::check_dim(d, b.dim())?;
        let original = b.norm();
        let mut w = b.as_slice().to_vec();
        for _ in 0..2 {
            for e in &out {
                let c = dot(&w, e);
                w.iter_mut().zip(e).for_each(|(wi, ei)| *wi -= c * ei);
            }
        }
        let n = norm(&w);
        if original == 0.0 || n <= GRAM_SCHMIDT_PIVOT * original {
            return Err(Error::RankDeficient { index });
        }
        w.iter_mut().for_each(|wi| *wi /= n);
        out.push(w);
    }
    Ok(out.into_iter().map(RealVec::from_raw).collect())
}

/// Orthogonal projector `U U^T` onto the span of `basis`.
pub fn projector(basis: &[RealVec]) -> Result<SymMat> {
    let ortho = orthonormalize(basis)?;
    Ok(projector_from_orthonormal(&ortho))
}

pub(crate) fn projector_from_orthonormal(ortho: &[RealVec]) -> SymMat {
    let d = ortho[0].dim();
    let mut p = SymMat::zeros(d);
    for u in ortho {
        p.add_rank_one(1.0, u);
    }
    p
}

/// Lower-triangular Cholesky factor, row-major dense.
pub fn cholesky(a: &SymMat) -> Result<Vec<Vec<f64>>> {
    let d = a.dim;
    let mut l = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let r = a.get(i, i) - s;
                if !(r > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "matrix is not positive definite (pivot {i} = {r:e})"
                    )));
                }
                l[i][i] = r.sqrt();
            } else {
                l[i][j] = (a.get(i, j) - s) / l[j][j];
            }
        }
    }
    Ok(l)
}
