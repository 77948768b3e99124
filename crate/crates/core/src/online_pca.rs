//! Recursive top-`q` eigenvectors of the evolving MCM estimate.
//!
//! Each step applies `u_j <- u_j + (V_bar u_j / ||u_j|| - u_j) / (n + 1)` and
//! then deflates the vectors by Gram-Schmidt in index order. The raw vectors
//! are deflated in place but not normalized, so `||u_j||` tracks the `j`-th
//! eigenvalue and `u_j / ||u_j||` the eigenvector.

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, RealVec, SymMat};
use crate::rng::StreamRng;

/// Raw vectors shorter than this are re-drawn.
pub const COLLAPSE_NORM: f64 = 1e-12;

// Relative Gram-Schmidt residual below which a candidate start vector is rejected.
const INDEPENDENCE_PIVOT: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct EigenBasis {
    pub(crate) n: u64,
    pub(crate) raw: Vec<Vec<f64>>,
    pub(crate) ortho: Vec<RealVec>,
    pub(crate) eigvals: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EigenStatus {
    /// Number of raw vectors re-drawn after collapsing.
    pub reinitialized: usize,
}

impl EigenBasis {
    /// Starts from arbitrary nonzero vectors, orthonormalized in order.
    pub fn from_vectors(start: &[RealVec]) -> Result<Self> {
        if start.is_empty() {
            return Err(Error::InvalidParameter(
                "eigen basis needs at least one vector".into(),
            ));
        }
        let ortho = crate::linalg::orthonormalize(start)?;
        Ok(Self {
            n: 0,
            raw: ortho.iter().map(|u| u.as_slice().to_vec()).collect(),
            eigvals: vec![1.0; ortho.len()],
            ortho,
        })
    }

    pub fn q(&self) -> usize {
        self.raw.len()
    }

    pub fn dim(&self) -> usize {
        self.ortho[0].dim()
    }

    /// Updates performed since tracking started.
    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn raw(&self) -> &[Vec<f64>] {
        &self.raw
    }

    pub fn ortho(&self) -> &[RealVec] {
        &self.ortho
    }

    /// `||u_j||` estimates, in tracking (deflation) order.
    pub fn eigvals(&self) -> &[f64] {
        &self.eigvals
    }

    /// `(eigenvalue, eigenvector)` pairs sorted by descending eigenvalue.
    pub fn sorted_pairs(&self) -> Vec<(f64, RealVec)> {
        let mut pairs: Vec<(f64, RealVec)> = self
            .eigvals
            .iter()
            .copied()
            .zip(self.ortho.iter().cloned())
            .collect();
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
        pairs
    }
}

/// One recursion step against the current averaged estimate.
pub fn eigen_update(
    basis: &mut EigenBasis,
    v_bar: &SymMat,
    rng: &mut StreamRng,
) -> Result<EigenStatus> {
    Error::check_dim(basis.dim(), v_bar.dim())?;
    let gain = 1.0 / (basis.n + 1) as f64;
    for u in basis.raw.iter_mut() {
        let len = norm(u);
        let vu = v_bar.mul_vec(u);
        u.iter_mut()
            .zip(&vu)
            .for_each(|(ui, vi)| *ui += gain * (vi / len - *ui));
    }
    let status = deflate(basis, rng);
    basis.n += 1;
    Ok(status)
}

fn deflate(basis: &mut EigenBasis, rng: &mut StreamRng) -> EigenStatus {
    let mut status = EigenStatus::default();
    for j in 0..basis.raw.len() {
        let (done, rest) = basis.ortho.split_at_mut(j);
        let u = &mut basis.raw[j];
        for e in done.iter() {
            let c = dot(u, e);
            u.iter_mut()
                .zip(e.iter())
                .for_each(|(ui, ei)| *ui -= c * ei);
        }
        let mut len = norm(u);
        if !(len >= COLLAPSE_NORM) {
            *u = random_orthogonal_unit(done, u.len(), rng);
            len = 1.0;
            status.reinitialized += 1;
        }
        basis.eigvals[j] = len;
        rest[0] = RealVec::from_raw(u.iter().map(|c| c / len).collect());
    }
    status
}

fn random_orthogonal_unit(against: &[RealVec], d: usize, rng: &mut StreamRng) -> Vec<f64> {
    loop {
        let mut w: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        for _ in 0..2 {
            for e in against {
                let c = dot(&w, e);
                w.iter_mut()
                    .zip(e.iter())
                    .for_each(|(wi, ei)| *wi -= c * ei);
            }
        }
        let len = norm(&w);
        if len > 1e-6 {
            return w.into_iter().map(|c| c / len).collect();
        }
    }
}

/// Principal-component scores of `x` and its distance to the tracked subspace.
pub fn pc_scores(x: &[f64], center: &[f64], basis: &EigenBasis) -> Result<(Vec<f64>, f64)> {
    Error::check_dim(basis.dim(), x.len())?;
    Error::check_dim(basis.dim(), center.len())?;
    let mut resid: Vec<f64> = x.iter().zip(center).map(|(a, b)| a - b).collect();
    let scores: Vec<f64> = basis.ortho.iter().map(|e| dot(&resid, e)).collect();
    for (s, e) in scores.iter().zip(&basis.ortho) {
        resid
            .iter_mut()
            .zip(e.iter())
            .for_each(|(r, ei)| *r -= s * ei);
    }
    Ok((scores, norm(&resid)))
}

/// Online eigen tracker fed alongside an MCM stream.
///
/// Collects the first `q` linearly independent centered observations as the
/// starting basis, then performs one [`eigen_update`] per observation.
#[derive(Debug, Clone)]
pub struct OnlineEigen {
    pub(crate) dim: usize,
    pub(crate) q: usize,
    pub(crate) pending: Vec<Vec<f64>>,
    pub(crate) basis: Option<EigenBasis>,
    pub(crate) rng: StreamRng,
    pub(crate) reinitialized: u64,
}

impl OnlineEigen {
    pub fn new(dim: usize, q: usize, seed: u64) -> Result<Self> {
        if q == 0 || q > dim {
            return Err(Error::InvalidParameter(format!(
                "q must lie in 1..={dim}, got {q}"
            )));
        }
        Ok(Self {
            dim,
            q,
            pending: Vec::new(),
            basis: None,
            rng: StreamRng::new(seed),
            reinitialized: 0,
        })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn basis(&self) -> Option<&EigenBasis> {
        self.basis.as_ref()
    }

    /// Total raw vectors re-drawn so far.
    pub fn reinitialized(&self) -> u64 {
        self.reinitialized
    }

    /// Feeds one centered observation and the estimate it produced.
    pub fn observe(&mut self, centered: &[f64], v_bar: &SymMat) -> Result<EigenStatus> {
        Error::check_dim(self.dim, centered.len())?;
        match &mut self.basis {
            Some(basis) => {
                let status = eigen_update(basis, v_bar, &mut self.rng)?;
                self.reinitialized += status.reinitialized as u64;
                Ok(status)
            }
            None => {
                if self.is_independent(centered) {
                    self.pending.push(centered.to_vec());
                    if self.pending.len() == self.q {
                        self.start_from_pending();
                    }
                }
                Ok(EigenStatus::default())
            }
        }
    }

    /// Starts tracking now, padding missing start vectors with random ones.
    pub fn force_start(&mut self) {
        if self.basis.is_none() {
            self.start_from_pending();
        }
    }

    fn is_independent(&self, x: &[f64]) -> bool {
        let len = norm(x);
        if !(len > 0.0) {
            return false;
        }
        let mut w = x.to_vec();
        let ortho = crate::linalg::orthonormalize(
            &self
                .pending
                .iter()
                .map(|p| RealVec::from_raw(p.clone()))
                .collect::<Vec<_>>(),
        );
        if let Ok(ortho) = ortho {
            for e in &ortho {
                let c = dot(&w, e);
                w.iter_mut()
                    .zip(e.iter())
                    .for_each(|(wi, ei)| *wi -= c * ei);
            }
        }
        norm(&w) > INDEPENDENCE_PIVOT * len
    }

    fn start_from_pending(&mut self) {
        let mut ortho: Vec<RealVec> = if self.pending.is_empty() {
            Vec::new()
        } else {
            let start: Vec<RealVec> = self
                .pending
                .iter()
                .map(|p| RealVec::from_raw(p.clone()))
                .collect();
            crate::linalg::orthonormalize(&start).expect("pending vectors are independent")
        };
        while ortho.len() < self.q {
            let u = random_orthogonal_unit(&ortho, self.dim, &mut self.rng);
            ortho.push(RealVec::from_raw(u));
        }
        self.pending.clear();
        self.basis = Some(EigenBasis {
            n: 0,
            raw: ortho.iter().map(|u| u.as_slice().to_vec()).collect(),
            eigvals: vec![1.0; self.q],
            ortho,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{sym_eigen, EIGEN_TOL};

    fn rv(x: &[f64]) -> RealVec {
        RealVec::new(x.to_vec()).unwrap()
    }

    #[test]
    fn rank_one_fixed_point() {
        let lambda = 2.5;
        let u = rv(&[0.6, 0.8, 0.0]);
        let mut v = SymMat::zeros(3);
        v.add_rank_one(lambda, &u);
        let mut b = EigenBasis::from_vectors(std::slice::from_ref(&u)).unwrap();
        b.raw[0] = u.scaled(lambda).into_inner();
        b.n = 7;
        let mut rng = StreamRng::new(0);
        eigen_update(&mut b, &v, &mut rng).unwrap();
        for (got, want) in b.raw[0].iter().zip(u.scaled(lambda).iter()) {
            assert!((got - want).abs() < 1e-14);
        }
        assert!((b.eigvals()[0] - lambda).abs() < 1e-14);
        assert_eq!(b.n(), 8);
    }

    #[test]
    fn zero_estimate_shrinks() {
        let mut b = EigenBasis::from_vectors(&[rv(&[3.0, 4.0])]).unwrap();
        b.raw[0] = vec![3.0, 4.0];
        b.n = 3;
        let mut rng = StreamRng::new(0);
        eigen_update(&mut b, &SymMat::zeros(2), &mut rng).unwrap();
        assert!((b.raw[0][0] - 3.0 * 0.75).abs() < 1e-15);
        assert!((b.raw[0][1] - 4.0 * 0.75).abs() < 1e-15);
    }

    #[test]
    fn converges_to_top_eigenvector() {
        let v = SymMat::diag(&[3.0, 1.0, 0.0]);
        let truth = &sym_eigen(&v, EIGEN_TOL).unwrap()[0].vector;
        let mut b = EigenBasis::from_vectors(&[rv(&[1.0, 1.0, 1.0])]).unwrap();
        let mut rng = StreamRng::new(0);
        for _ in 0..500 {
            eigen_update(&mut b, &v, &mut rng).unwrap();
        }
        let cos = b.ortho()[0].dot(truth).abs().min(1.0);
        assert!(cos.acos() <= 1e-2, "angle {}", cos.acos());
    }

    #[test]
    fn deflation_gives_orthonormal_nested_spans() {
        let v = SymMat::from_fn(5, |i, j| if i == j { 5.0 - i as f64 } else { 0.1 });
        let start = [
            rv(&[1.0, 0.2, 0.0, 0.3, 0.0]),
            rv(&[0.5, 1.0, 0.1, 0.0, 0.2]),
            rv(&[0.0, 0.3, 1.0, 0.4, 0.1]),
        ];
        let mut b = EigenBasis::from_vectors(&start).unwrap();
        let mut rng = StreamRng::new(1);
        for _ in 0..50 {
            eigen_update(&mut b, &v, &mut rng).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    let g = b.ortho[i].dot(&b.ortho[j]);
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((g - want).abs() < 1e-8);
                }
                // raw_i lies in span(ortho_0..=i) and has norm eigvals[i]
                let raw = rv(&b.raw[i]);
                assert!((raw.norm() - b.eigvals[i]).abs() < 1e-12);
                let mut resid = raw.into_inner();
                for e in &b.ortho[..=i] {
                    let c = dot(&resid, e);
                    resid
                        .iter_mut()
                        .zip(e.iter())
                        .for_each(|(r, x)| *r -= c * x);
                }
                assert!(norm(&resid) < 1e-10);
            }
        }
    }

    #[test]
    fn collapse_is_reinitialized_orthogonally() {
        let mut b =
            EigenBasis::from_vectors(&[rv(&[1.0, 0.0, 0.0]), rv(&[0.0, 1.0, 0.0])]).unwrap();
        // V kills the second direction: u_2 collapses after a full-gain step.
        let v = SymMat::diag(&[1.0, 0.0, 0.0]);
        let mut rng = StreamRng::new(9);
        let status = eigen_update(&mut b, &v, &mut rng).unwrap();
        assert_eq!(status.reinitialized, 1);
        assert!(b.ortho[0].dot(&b.ortho[1]).abs() < 1e-12);
        assert!((b.ortho[1].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scores_examples() {
        let b = EigenBasis::from_vectors(&[RealVec::basis(3, 0), RealVec::basis(3, 1)]).unwrap();
        let (s, dist) = pc_scores(&[1.0, 2.0, 3.0], &[0.0; 3], &b).unwrap();
        assert_eq!(s, vec![1.0, 2.0]);
        assert_eq!(dist, 3.0);
        let (s, dist) = pc_scores(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], &b).unwrap();
        assert_eq!(s, vec![0.0, 0.0]);
        assert_eq!(dist, 0.0);
        assert!(pc_scores(&[1.0], &[0.0], &b).is_err());
    }

    #[test]
    fn tracker_collects_independent_start_vectors() {
        let mut t = OnlineEigen::new(3, 2, 5).unwrap();
        let v = SymMat::identity(3);
        t.observe(&[1.0, 0.0, 0.0], &v).unwrap();
        t.observe(&[2.0, 0.0, 0.0], &v).unwrap();
        assert!(t.basis().is_none());
        t.observe(&[0.0, 0.0, 0.0], &v).unwrap();
        t.observe(&[1.0, 1.0, 0.0], &v).unwrap();
        let b = t.basis().unwrap();
        assert_eq!(b.n(), 0);
        assert_eq!(b.ortho()[1].as_slice(), &[0.0, 1.0, 0.0]);
        t.observe(&[0.0, 0.0, 1.0], &v).unwrap();
        assert_eq!(t.basis().unwrap().n(), 1);
    }

    #[test]
    fn force_start_pads_with_random_vectors() {
        let mut t = OnlineEigen::new(4, 3, 11).unwrap();
        t.observe(&[1.0, 0.0, 0.0, 0.0], &SymMat::zeros(4)).unwrap();
        t.force_start();
        let b = t.basis().unwrap();
        assert_eq!(b.q(), 3);
        for i in 0..3 {
            for j in 0..3 {
                let g = b.ortho()[i].dot(&b.ortho()[j]);
                assert!((g - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn invalid_q_rejected() {
        assert!(OnlineEigen::new(3, 0, 0).is_err());
        assert!(OnlineEigen::new(3, 4, 0).is_err());
    }
}
