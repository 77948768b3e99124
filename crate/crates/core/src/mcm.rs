//! Median covariation matrix (MCM) estimators.
//!
//! The MCM is the geometric median, under the Frobenius norm, of the rank-one
//! matrices `Y = (X - m)(X - m)^T`. [`McmState`] estimates it in one pass by
//! averaged stochastic gradient steps, either around a known center or jointly
//! with a streaming geometric median. [`weiszfeld_mcm`] is the batch
//! fixed-point alternative.
//!
//! Each streaming update costs `O(d^2)`: the distance `||Y - V||_F` is
//! obtained from `||y||^4 - 2 y^T V y + ||V||_F^2` without forming `Y`.

use crate::error::{Error, Result};
use crate::geomedian::{
    check_points, scalar_median, weiszfeld_median, AnchorWeights, MedianState, StepSchedule,
    WeiszfeldError, WeiszfeldFit, WeiszfeldOptions, WeiszfeldStall,
};
use crate::linalg::{norm, RealVec, SymMat};

/// Above this centered norm the update switches to a rescaled formula so
/// that `||y||^4` is never formed.
pub const HUGE_NORM: f64 = 1e60;

// Relative size below which `||Y - V||_F` is treated as zero.
const ZERO_DIRECTION: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct McmConfig {
    pub median_schedule: StepSchedule,
    pub mcm_schedule: StepSchedule,
    /// Thresholded steps `min(gamma_n, ||Y - V_n||_F)` that keep `V_n` PSD.
    pub psd_mode: bool,
    pub v0: Option<SymMat>,
}

impl Default for McmConfig {
    fn default() -> Self {
        Self {
            median_schedule: StepSchedule::default(),
            mcm_schedule: StepSchedule::default(),
            psd_mode: true,
            v0: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Center {
    Known(Vec<f64>),
    /// `None` until the first observation seeds the median iterate.
    Joint(Option<MedianState>),
}

/// Streaming MCM estimator state.
#[derive(Debug, Clone, PartialEq)]
pub struct McmState {
    pub(crate) dim: usize,
    pub(crate) n_obs: u64,
    pub(crate) center: Center,
    pub(crate) median_schedule: StepSchedule,
    pub(crate) schedule: StepSchedule,
    pub(crate) psd_mode: bool,
    pub(crate) v: SymMat,
    pub(crate) v_bar: SymMat,
    pub(crate) v_updates: u64,
}

/// What a single observation did to the covariation iterate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpdateOutcome {
    /// The observation only seeded the median iterate.
    Seeded,
    /// `V` moved by `step` in Frobenius norm.
    Moved { step: f64 },
    /// `Y == V`: no direction, only the average advanced.
    Degenerate,
}

impl McmState {
    /// Joint estimation of the median and the MCM. The first observation
    /// becomes the starting median iterate and does not move `V`.
    pub fn joint(dim: usize, cfg: &McmConfig) -> Result<Self> {
        Self::build(dim, Center::Joint(None), cfg)
    }

    /// MCM around a fixed, known center.
    pub fn known_median(median: RealVec, cfg: &McmConfig) -> Result<Self> {
        let dim = median.dim();
        Self::build(dim, Center::Known(median.into_inner()), cfg)
    }

    fn build(dim: usize, center: Center, cfg: &McmConfig) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter(
                "dimension must be at least 1".into(),
            ));
        }
        let v = match &cfg.v0 {
            Some(v0) => {
                Error::check_dim(dim, v0.dim())?;
                v0.ensure_finite()?;
                v0.clone()
            }
            None => SymMat::zeros(dim),
        };
        Ok(Self {
            dim,
            n_obs: 0,
            center,
            median_schedule: cfg.median_schedule,
            schedule: cfg.mcm_schedule,
            psd_mode: cfg.psd_mode,
            v_bar: v.clone(),
            v,
            v_updates: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Observations consumed.
    pub fn n(&self) -> u64 {
        self.n_obs
    }

    /// Number of covariation steps taken (`V_1..V_k` are averaged).
    pub fn updates(&self) -> u64 {
        self.v_updates
    }

    pub fn psd_mode(&self) -> bool {
        self.psd_mode
    }

    pub fn mcm_schedule(&self) -> StepSchedule {
        self.schedule
    }

    pub fn median_schedule(&self) -> StepSchedule {
        self.median_schedule
    }

    pub fn is_joint(&self) -> bool {
        matches!(self.center, Center::Joint(_))
    }

    /// Current center: the averaged median in joint mode, the fixed median otherwise.
    pub fn center(&self) -> Option<&[f64]> {
        match &self.center {
            Center::Known(m) => Some(m),
            Center::Joint(Some(ms)) => Some(ms.average()),
            Center::Joint(None) => None,
        }
    }

    pub fn median_state(&self) -> Option<&MedianState> {
        match &self.center {
            Center::Joint(ms) => ms.as_ref(),
            Center::Known(_) => None,
        }
    }

    /// Robbins-Monro iterate `V_n`.
    pub fn iterate(&self) -> &SymMat {
        &self.v
    }

    /// Averaged estimate `V_bar_n`.
    pub fn estimate(&self) -> Result<&SymMat> {
        if self.v_updates == 0 {
            return Err(Error::NoObservations);
        }
        Ok(&self.v_bar)
    }

    pub fn update(&mut self, x: &RealVec) -> Result<UpdateOutcome> {
        Error::check_dim(self.dim, x.dim())?;
        Ok(self.update_slice(x))
    }

    /// Joint mode feeds `x` to the median first, but centers the covariation
    /// step at the average from *before* that update.
    pub(crate) fn update_slice(&mut self, x: &[f64]) -> UpdateOutcome {
        self.n_obs += 1;
        let y: Vec<f64> = match &mut self.center {
            Center::Known(m) => x.iter().zip(m.iter()).map(|(a, b)| a - b).collect(),
            Center::Joint(slot @ None) => {
                let start = RealVec::from_raw(x.to_vec());
                *slot = Some(MedianState::new(start, self.median_schedule));
                return UpdateOutcome::Seeded;
            }
            Center::Joint(Some(ms)) => {
                let y = x.iter().zip(ms.average()).map(|(a, b)| a - b).collect();
                ms.update_slice(x);
                y
            }
        };
        self.covariation_step(&y)
    }

    fn covariation_step(&mut self, y: &[f64]) -> UpdateOutcome {
        let k = self.v_updates + 1;
        let gamma = self.schedule.gamma(k);
        let outcome = match rank_one_step(&self.v, y) {
            None => UpdateOutcome::Degenerate,
            Some(geom) => {
                let step = if self.psd_mode {
                    gamma.min(geom.distance)
                } else {
                    gamma
                };
                // V <- (1 - s) V + s y y^T with s = step / ||Y - V||_F
                let s = step * geom.inv_distance;
                let w = step * geom.yy_over_distance;
                self.v.scale_add_rank_one(1.0 - s, w, &geom.direction);
                UpdateOutcome::Moved { step }
            }
        };
        self.v_bar.lerp_toward(&self.v, 1.0 / k as f64);
        self.v_updates = k;
        outcome
    }
}

struct RankOneGeometry {
    /// `||Y - V||_F`, possibly `+inf` for enormous observations.
    distance: f64,
    inv_distance: f64,
    /// `||y||^2 / ||Y - V||_F`.
    yy_over_distance: f64,
    /// `y / ||y||`, or `y` itself when `||y|| == 0`.
    direction: Vec<f64>,
}

fn rank_one_step(v: &SymMat, y: &[f64]) -> Option<RankOneGeometry> {
    let r = norm(y);
    let vv = v.frob_norm_sq();
    if r == 0.0 {
        let distance = vv.sqrt();
        if distance == 0.0 {
            return None;
        }
        return Some(RankOneGeometry {
            distance,
            inv_distance: 1.0 / distance,
            yy_over_distance: 0.0,
            direction: y.to_vec(),
        });
    }
    let direction: Vec<f64> = y.iter().map(|c| c / r).collect();
    let q = v.quad_form(&direction);
    if r <= HUGE_NORM {
        let rr = r * r;
        let d2 = rr * rr - 2.0 * rr * q + vv;
        let distance = d2.max(0.0).sqrt();
        if distance <= ZERO_DIRECTION * (rr + vv.sqrt()) {
            return None;
        }
        Some(RankOneGeometry {
            distance,
            inv_distance: 1.0 / distance,
            yy_over_distance: rr / distance,
            direction,
        })
    } else {
        // ||Y - V||_F = r^2 * kappa with kappa = sqrt(1 - 2 q / r^2 + ||V||^2 / r^4).
        let t = 1.0 / (r * r);
        let kappa = (1.0 - 2.0 * q * t + vv * t * t).max(0.0).sqrt();
        if kappa <= ZERO_DIRECTION {
            return None;
        }
        Some(RankOneGeometry {
            distance: r * r * kappa,
            inv_distance: t / kappa,
            yy_over_distance: 1.0 / kappa,
            direction,
        })
    }
}

/// Centered observations `x_i - m_hat`.
fn centered(points: &[RealVec], m_hat: &RealVec) -> Result<Vec<Vec<f64>>> {
    let d = check_points(points)?;
    Error::check_dim(d, m_hat.dim())?;
    Ok(points
        .iter()
        .map(|p| p.iter().zip(m_hat.iter()).map(|(a, b)| a - b).collect())
        .collect())
}

/// `||y y^T - V||_F` computed entrywise.
fn rank_one_distance(y: &[f64], v: &SymMat) -> f64 {
    let d = y.len();
    let packed = v.packed();
    let mut diag = 0.0;
    let mut off = 0.0;
    let mut k = 0;
    for i in 0..d {
        let e = y[i] * y[i] - packed[k];
        diag += e * e;
        k += 1;
        for j in i + 1..d {
            let e = y[i] * y[j] - packed[k];
            off += e * e;
            k += 1;
        }
    }
    (diag + 2.0 * off).sqrt()
}

/// Empirical MCM risk `sum_i (||Y_i - V||_F - ||Y_i||_F)`.
pub fn mcm_objective(points: &[RealVec], m_hat: &RealVec, v: &SymMat) -> Result<f64> {
    let ys = centered(points, m_hat)?;
    Error::check_dim(ys[0].len(), v.dim())?;
    Ok(objective(&ys, v))
}

fn objective(ys: &[Vec<f64>], v: &SymMat) -> f64 {
    ys.iter()
        .map(|y| {
            let yy: f64 = y.iter().map(|c| c * c).sum();
            rank_one_distance(y, v) - yy
        })
        .sum()
}

/// Entrywise median of the `Y_i`, the pilot for [`weiszfeld_mcm`].
fn entrywise_median(ys: &[Vec<f64>]) -> SymMat {
    let d = ys[0].len();
    let mut column = vec![0.0; ys.len()];
    SymMat::from_fn(d, |i, j| {
        column
            .iter_mut()
            .zip(ys)
            .for_each(|(c, y)| *c = y[i] * y[j]);
        scalar_median(&mut column)
    })
}

/// One fixed-point map `sum_i W_i(V) Y_i`, collision-safe as in the median case.
fn weiszfeld_mcm_step(ys: &[Vec<f64>], v: &SymMat, opts: &WeiszfeldOptions) -> SymMat {
    let d = v.dim();
    let dists: Vec<f64> = opts.execution.map(ys, |y| rank_one_distance(y, v));
    let aw = AnchorWeights::new(&dists);
    let w = &aw.weights;
    // Rows accumulate independently; each entry sums over points in order.
    let rows = opts.execution.map_range(d, |i| {
        let mut row = vec![0.0; d - i];
        for (y, wk) in ys.iter().zip(w) {
            let wi = wk * y[i];
            row.iter_mut()
                .zip(&y[i..])
                .for_each(|(r, yj)| *r += wi * yj);
        }
        row
    });
    let packed: Vec<f64> = rows.into_iter().flatten().collect();
    let next = SymMat::from_packed(d, packed).expect("finite weighted sum");
    let lambda = aw.blend(next.sub(v).expect("same dimension").frob_norm());
    if lambda < 1.0 {
        next.scaled(lambda)
            .sub(&v.scaled(lambda - 1.0))
            .expect("same dimension")
    } else {
        next
    }
}

/// Batch MCM around `m_hat` by Weiszfeld's iteration on the rank-one matrices.
///
/// The result is a convex combination of PSD matrices and hence PSD.
pub fn weiszfeld_mcm(
    points: &[RealVec],
    m_hat: &RealVec,
    opts: &WeiszfeldOptions,
) -> Result<WeiszfeldFit<SymMat>, WeiszfeldError<SymMat>> {
    opts.validate()?;
    let ys = centered(points, m_hat)?;
    let mut current = entrywise_median(&ys);
    let mut trace = vec![objective(&ys, &current)];
    let mut displacement = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let next = weiszfeld_mcm_step(&ys, &current, opts);
        displacement = next.sub(&current)?.frob_norm();
        current = next;
        trace.push(objective(&ys, &current));
        if displacement <= opts.eps {
            return Ok(WeiszfeldFit {
                estimate: current,
                iterations: it,
                displacement,
                objective_trace: trace,
            });
        }
    }
    Err(WeiszfeldError::Stalled(WeiszfeldStall {
        last: current,
        iterations: opts.max_iter,
        displacement,
    }))
}

/// `||V - sum_i W_i(V) Y_i||_F`, the violation of the MCM fixed-point identity.
pub fn mcm_fixed_point_residual(points: &[RealVec], m_hat: &RealVec, v: &SymMat) -> Result<f64> {
    let ys = centered(points, m_hat)?;
    Error::check_dim(ys[0].len(), v.dim())?;
    let opts = WeiszfeldOptions {
        execution: crate::exec::Execution::Sequential,
        ..Default::default()
    };
    weiszfeld_mcm_step(&ys, v, &opts)
        .sub(v)
        .map(|m| m.frob_norm())
}

/// Two-stage batch pipeline: Weiszfeld median, then Weiszfeld MCM around it.
pub fn weiszfeld_pipeline(
    points: &[RealVec],
    opts: &WeiszfeldOptions,
) -> Result<(RealVec, SymMat)> {
    let median: WeiszfeldFit<RealVec> = weiszfeld_median(points, opts)?;
    let mcm = weiszfeld_mcm(points, &median.estimate, opts)?;
    Ok((median.estimate, mcm.estimate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{min_eigenvalue, outer};

    fn rv(x: &[f64]) -> RealVec {
        RealVec::new(x.to_vec()).unwrap()
    }

    fn cfg(psd: bool) -> McmConfig {
        McmConfig {
            psd_mode: psd,
            ..Default::default()
        }
    }

    #[test]
    fn single_known_median_step() {
        let e1 = rv(&[1.0, 0.0]);
        let mut st = McmState::known_median(RealVec::zeros(2), &cfg(false)).unwrap();
        assert_eq!(st.update(&e1).unwrap(), UpdateOutcome::Moved { step: 2.0 });
        assert_eq!(st.iterate(), &SymMat::diag(&[2.0, 0.0]));
        assert_eq!(st.estimate().unwrap(), &SymMat::diag(&[2.0, 0.0]));

        let mut st = McmState::known_median(RealVec::zeros(2), &cfg(true)).unwrap();
        assert_eq!(st.update(&e1).unwrap(), UpdateOutcome::Moved { step: 1.0 });
        assert_eq!(st.iterate(), &SymMat::diag(&[1.0, 0.0]));
    }

    #[test]
    fn zero_direction_only_averages() {
        let v0 = SymMat::diag(&[1.0, 0.0]);
        let c = McmConfig {
            v0: Some(v0.clone()),
            psd_mode: false,
            ..Default::default()
        };
        let mut st = McmState::known_median(RealVec::zeros(2), &c).unwrap();
        assert_eq!(
            st.update(&rv(&[1.0, 0.0])).unwrap(),
            UpdateOutcome::Degenerate
        );
        assert_eq!(st.iterate(), &v0);
        assert_eq!(st.estimate().unwrap(), &v0);
        assert_eq!(st.updates(), 1);
    }

    #[test]
    fn constant_stream_at_median_shrinks() {
        let c = McmConfig {
            v0: Some(SymMat::diag(&[4.0, 4.0])),
            psd_mode: false,
            ..Default::default()
        };
        let m = rv(&[1.0, -1.0]);
        let mut st = McmState::known_median(m.clone(), &c).unwrap();
        let before = st.iterate().clone();
        st.update(&m).unwrap();
        let delta = st.iterate().sub(&before).unwrap();
        // Moves along -V / ||V||_F with length gamma_1 = 2.
        let expected = before.scaled(-2.0 / before.frob_norm());
        assert!(delta.sub(&expected).unwrap().frob_norm() < 1e-12);
    }

    #[test]
    fn step_length_is_gamma_or_thresholded() {
        for psd in [false, true] {
            let mut st = McmState::joint(3, &cfg(psd)).unwrap();
            let xs = [
                [1.0, 2.0, 0.0],
                [0.0, -1.0, 3.0],
                [4.0, 0.5, -2.0],
                [0.3, 0.3, 0.3],
                [-5.0, 1.0, 1.0],
            ];
            assert_eq!(st.update(&rv(&xs[0])).unwrap(), UpdateOutcome::Seeded);
            for x in &xs[1..] {
                let before = st.iterate().clone();
                let k = st.updates() + 1;
                let out = st.update(&rv(x)).unwrap();
                let moved = st.iterate().sub(&before).unwrap().frob_norm();
                match out {
                    UpdateOutcome::Moved { step } => {
                        assert!((moved - step).abs() < 1e-9 * (1.0 + step));
                        if psd {
                            assert!(step <= st.mcm_schedule().gamma(k) + 1e-15);
                        } else {
                            assert_eq!(step, st.mcm_schedule().gamma(k));
                        }
                    }
                    other => panic!("unexpected {other:?}"),
                }
            }
        }
    }

    #[test]
    fn joint_mode_centers_before_median_update() {
        let mut st = McmState::joint(2, &cfg(false)).unwrap();
        st.update(&rv(&[0.0, 0.0])).unwrap();
        // Centered at the seed (0, 0), not at the freshly updated median.
        st.update(&rv(&[1.0, 0.0])).unwrap();
        assert_eq!(st.iterate(), &SymMat::diag(&[2.0, 0.0]));
        assert_eq!(st.center().unwrap(), &[2.0, 0.0]);
        assert_eq!(st.n(), 2);
        assert_eq!(st.updates(), 1);
    }

    #[test]
    fn estimate_requires_an_update() {
        let st = McmState::joint(2, &cfg(true)).unwrap();
        assert!(matches!(st.estimate(), Err(Error::NoObservations)));
    }

    #[test]
    fn averaging_identities() {
        let mut st = McmState::known_median(RealVec::zeros(2), &cfg(false)).unwrap();
        st.update(&rv(&[1.0, 2.0])).unwrap();
        let v1 = st.iterate().clone();
        assert_eq!(st.estimate().unwrap(), &v1);
        st.update(&rv(&[-3.0, 0.5])).unwrap();
        let v2 = st.iterate().clone();
        let direct = SymMat::from_fn(2, |i, j| 0.5 * (v1.get(i, j) + v2.get(i, j)));
        assert!(st.estimate().unwrap().sub(&direct).unwrap().frob_norm() < 1e-14);
    }

    #[test]
    fn huge_observation_stays_finite_and_psd() {
        let mut st = McmState::known_median(RealVec::zeros(2), &cfg(true)).unwrap();
        st.update(&rv(&[1.0, 0.5])).unwrap();
        st.update(&rv(&[1e200, -3e199])).unwrap();
        assert!(st.iterate().is_finite());
        assert!(min_eigenvalue(st.iterate()).unwrap() >= -1e-8);
        st.update(&rv(&[0.2, 0.1])).unwrap();
        assert!(st.estimate().unwrap().is_finite());
    }

    #[test]
    fn huge_path_agrees_with_direct_path_near_threshold() {
        let v = SymMat::from_dense(&[vec![2.0, 0.3], vec![0.3, 1.0]]).unwrap();
        for (y, r) in [([3e59, 4e59], 5e59_f64), ([3e60, 4e60], 5e60)] {
            let g = rank_one_step(&v, &y).unwrap();
            let t = 1.0 / (r * r);
            let q = v.quad_form(&g.direction);
            let kappa = (1.0 - 2.0 * q * t + v.frob_norm_sq() * t * t).sqrt();
            assert!((g.yy_over_distance - 1.0 / kappa).abs() < 1e-12);
        }
    }

    #[test]
    fn weiszfeld_mcm_single_point_is_zero() {
        let p = rv(&[1.0, 2.0, 3.0]);
        let fit =
            weiszfeld_mcm(std::slice::from_ref(&p), &p, &WeiszfeldOptions::default()).unwrap();
        assert_eq!(fit.estimate, SymMat::zeros(3));
    }

    #[test]
    fn weiszfeld_mcm_identical_points() {
        let x = rv(&[1.0, -2.0]);
        let pts = vec![x.clone(); 5];
        let fit = weiszfeld_mcm(&pts, &RealVec::zeros(2), &WeiszfeldOptions::default()).unwrap();
        assert!(
            fit.estimate
                .sub(&outer(&x, &x).unwrap())
                .unwrap()
                .frob_norm()
                < 1e-12
        );
    }

    #[test]
    fn weiszfeld_mcm_symmetric_cross_matches_scalar_oracle() {
        // argmin over a 1e-6 grid of 2 sqrt((1-g)^2 + g^2) * 2.
        const CROSS_GAMMA: f64 = 0.5;
        let pts: Vec<RealVec> = [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]
            .iter()
            .map(|p| rv(p))
            .collect();
        let fit = weiszfeld_mcm(&pts, &RealVec::zeros(2), &WeiszfeldOptions::default()).unwrap();
        let g = SymMat::identity(2).scaled(CROSS_GAMMA);
        assert!(fit.estimate.sub(&g).unwrap().frob_norm() < 1e-4);
    }

    #[test]
    fn weiszfeld_mcm_beats_covariance_and_is_fixed_point() {
        let pts: Vec<RealVec> = [[0.3, -1.2, 2.0], [1.7, 0.4, -0.5], [-0.9, 0.8, 0.1]]
            .iter()
            .map(|p| rv(p))
            .collect();
        let (m, g) = weiszfeld_pipeline(&pts, &WeiszfeldOptions::default()).unwrap();
        let mut cov = SymMat::zeros(3);
        for p in &pts {
            cov.add_rank_one(1.0 / 3.0, &p.sub(&m).unwrap());
        }
        assert!(mcm_objective(&pts, &m, &g).unwrap() <= mcm_objective(&pts, &m, &cov).unwrap());
        assert!(mcm_fixed_point_residual(&pts, &m, &g).unwrap() <= 10.0 * 1e-8);
        assert!(min_eigenvalue(&g).unwrap() >= -1e-10);
    }

    #[test]
    fn objective_examples() {
        let pts = vec![rv(&[1.0, 2.0]), rv(&[-1.0, 0.5])];
        let z = RealVec::zeros(2);
        assert!(mcm_objective(&pts, &z, &SymMat::zeros(2)).unwrap().abs() < 1e-14);
        let y = outer(&pts[0], &pts[0]).unwrap();
        let single = mcm_objective(&pts[..1], &z, &y).unwrap();
        assert!((single + y.frob_norm()).abs() < 1e-12);
    }
}
