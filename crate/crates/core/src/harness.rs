//! Monte Carlo benchmark harness.
//!
//! Replication `r` draws its sample with seed `base_seed + r`. Replications
//! run on the [`Execution`] pool and are reduced in index order, so reports
//! are byte-identical for any worker count.

use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baseline::{sample_covariance, RunningCovariance};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::geomedian::{StepSchedule, WeiszfeldOptions};
use crate::linalg::{projector, projector_from_orthonormal, top_eigenvectors, RealVec, SymMat};
use crate::mcm::{weiszfeld_pipeline, McmConfig, McmState};
use crate::metrics::{eigenspace_error, mc_summary};
use crate::online_pca::OnlineEigen;
use crate::simgen::{brownian_cov, draw_sample, Contamination, Sampler, ScenarioConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// Eigenvectors of the sample covariance.
    Pca,
    /// Weiszfeld median followed by Weiszfeld MCM.
    McmW,
    /// Averaged recursive MCM with plain steps.
    McmR,
    /// Averaged recursive MCM with PSD-preserving thresholded steps.
    McmRPlus,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 4] = [
        EstimatorKind::Pca,
        EstimatorKind::McmW,
        EstimatorKind::McmR,
        EstimatorKind::McmRPlus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Pca => "pca",
            EstimatorKind::McmW => "mcm_w",
            EstimatorKind::McmR => "mcm_r",
            EstimatorKind::McmRPlus => "mcm_rplus",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown estimator '{s}'")))
    }
}

pub fn parse_estimators(list: &str) -> Result<Vec<EstimatorKind>> {
    let mut out: Vec<EstimatorKind> = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    out.sort();
    out.dedup();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub n: usize,
    pub q: usize,
    pub replications: usize,
    pub estimators: Vec<EstimatorKind>,
    pub median_schedule: StepSchedule,
    pub mcm_schedule: StepSchedule,
    /// Thresholded steps for the streaming curve (`bench` always runs both variants as requested).
    pub psd_mode: bool,
    pub weiszfeld: WeiszfeldOptions,
    pub output_path: Option<PathBuf>,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig {
                d: 50,
                delta: 0.0,
                contamination: Contamination::StudentT1,
                seed: 1,
            },
            n: 200,
            q: 2,
            replications: 100,
            estimators: EstimatorKind::ALL.to_vec(),
            median_schedule: StepSchedule::default(),
            mcm_schedule: StepSchedule::default(),
            psd_mode: true,
            weiszfeld: WeiszfeldOptions::default(),
            output_path: None,
            execution: Execution::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.replications == 0 {
            return Err(Error::InvalidParameter(
                "replications must be at least 1".into(),
            ));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidParameter(
                "at least one estimator is required".into(),
            ));
        }
        if self.q == 0 || self.q > self.scenario.d {
            return Err(Error::InvalidParameter(format!(
                "q must lie in 1..={}, got {}",
                self.scenario.d, self.q
            )));
        }
        if self.n < 2 {
            return Err(Error::InvalidParameter(
                "sample size n must be at least 2".into(),
            ));
        }
        self.weiszfeld.validate()
    }

    fn mcm_config(&self, psd_mode: bool) -> McmConfig {
        McmConfig {
            median_schedule: self.median_schedule,
            mcm_schedule: self.mcm_schedule,
            psd_mode,
            v0: None,
        }
    }

    fn replication_seed(&self, r: usize) -> u64 {
        self.scenario.seed.wrapping_add(r as u64)
    }
}

/// Aggregated losses for one estimator.
///
/// CSV column order: `estimator,scenario,delta,d,n,q,replications,failed,
/// median_R,q1_R,q3_R,mean_R,seed`, plus `wall_time_ms` (mean per
/// replication) when timing output is requested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub estimator: EstimatorKind,
    pub scenario: Contamination,
    pub delta: f64,
    pub d: usize,
    pub n: usize,
    pub q: usize,
    pub replications: usize,
    pub failed: usize,
    pub median_r: f64,
    pub q1_r: f64,
    pub q3_r: f64,
    pub mean_r: f64,
    pub wall_time_ms: f64,
    pub seed: u64,
}

/// Loss of one estimator in one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationResult {
    pub replication: usize,
    pub seed: u64,
    pub estimator: EstimatorKind,
    pub loss: std::result::Result<f64, String>,
    pub wall_time_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<ReportRow>,
    pub replications: Vec<ReplicationResult>,
}

/// Projector onto the top-`q` eigenvectors of the Brownian covariance.
pub fn reference_projector(d: usize, q: usize) -> Result<SymMat> {
    projector(&top_eigenvectors(&brownian_cov(d), q)?)
}

/// Fits one estimator to a batch sample and returns its dispersion matrix.
pub fn fit_estimator(kind: EstimatorKind, sample: &[RealVec], cfg: &RunConfig) -> Result<SymMat> {
    match kind {
        EstimatorKind::Pca => sample_covariance(sample),
        EstimatorKind::McmW => Ok(weiszfeld_pipeline(sample, &cfg.weiszfeld)?.1),
        EstimatorKind::McmR | EstimatorKind::McmRPlus => {
            let d = sample.first().ok_or(Error::NoObservations)?.dim();
            let mut st = McmState::joint(d, &cfg.mcm_config(kind == EstimatorKind::McmRPlus))?;
            for x in sample {
                st.update_slice(x);
            }
            st.estimate().cloned()
        }
    }
}

fn subspace_loss(estimate: &SymMat, truth: &SymMat, q: usize) -> Result<f64> {
    estimate.ensure_finite()?;
    eigenspace_error(&projector(&top_eigenvectors(estimate, q)?)?, truth)
}

pub fn run_benchmark(cfg: &RunConfig) -> Result<BenchReport> {
    cfg.validate()?;
    let truth = reference_projector(cfg.scenario.d, cfg.q)?;
    let per_rep: Vec<Result<Vec<ReplicationResult>>> =
        cfg.execution.map_range(cfg.replications, |r| {
            let seed = cfg.replication_seed(r);
            let sample = draw_sample(&cfg.scenario.with_seed(seed), cfg.n)?;
            Ok(cfg
                .estimators
                .iter()
                .map(|&estimator| {
                    let start = Instant::now();
                    let loss = fit_estimator(estimator, &sample, cfg)
                        .and_then(|est| subspace_loss(&est, &truth, cfg.q))
                        .map_err(|e| e.to_string());
                    ReplicationResult {
                        replication: r,
                        seed,
                        estimator,
                        loss,
                        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
                    }
                })
                .collect())
        });
    let mut replications = Vec::with_capacity(cfg.replications * cfg.estimators.len());
    for rep in per_rep {
        replications.extend(rep?);
    }

    let rows = cfg
        .estimators
        .iter()
        .map(|&estimator| {
            let mine: Vec<&ReplicationResult> = replications
                .iter()
                .filter(|r| r.estimator == estimator)
                .collect();
            let losses: Vec<f64> = mine
                .iter()
                .filter_map(|r| r.loss.as_ref().ok().copied())
                .collect();
            let (median_r, q1_r, q3_r, mean_r) = match mc_summary(&losses) {
                Ok(s) => (s.median, s.q1, s.q3, s.mean),
                Err(_) => (f64::NAN, f64::NAN, f64::NAN, f64::NAN),
            };
            let wall = mine.iter().map(|r| r.wall_time_ms).sum::<f64>() / mine.len() as f64;
            ReportRow {
                estimator,
                scenario: cfg.scenario.contamination,
                delta: cfg.scenario.delta,
                d: cfg.scenario.d,
                n: cfg.n,
                q: cfg.q,
                replications: losses.len(),
                failed: mine.len() - losses.len(),
                median_r,
                q1_r,
                q3_r,
                mean_r,
                wall_time_ms: wall,
                seed: cfg.scenario.seed,
            }
        })
        .collect();
    Ok(BenchReport { rows, replications })
}

pub fn write_report_csv<W: Write>(rows: &[ReportRow], out: W, timing: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![
        "estimator",
        "scenario",
        "delta",
        "d",
        "n",
        "q",
        "replications",
        "failed",
        "median_R",
        "q1_R",
        "q3_R",
        "mean_R",
        "seed",
    ];
    if timing {
        header.push("wall_time_ms");
    }
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.estimator.to_string(),
            r.scenario.to_string(),
            r.delta.to_string(),
            r.d.to_string(),
            r.n.to_string(),
            r.q.to_string(),
            r.replications.to_string(),
            r.failed.to_string(),
            r.median_r.to_string(),
            r.q1_r.to_string(),
            r.q3_r.to_string(),
            r.mean_r.to_string(),
            r.seed.to_string(),
        ];
        if timing {
            rec.push(format!("{:.3}", r.wall_time_ms));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Provenance sidecar: the full configuration plus failure counts.
pub fn write_report_json<W: Write>(cfg: &RunConfig, rows: &[ReportRow], out: W) -> Result<()> {
    #[derive(Serialize)]
    struct Sidecar<'a> {
        config: &'a RunConfig,
        failures: Vec<(EstimatorKind, usize)>,
    }
    let sidecar = Sidecar {
        config: cfg,
        failures: rows.iter().map(|r| (r.estimator, r.failed)).collect(),
    };
    serde_json::to_writer_pretty(out, &sidecar)?;
    Ok(())
}

/// Series reported by [`convergence_curve`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveSeries {
    /// Top-q eigenvectors of `V_bar_n` by full eigendecomposition.
    Mcm,
    /// Online recursive eigenvectors.
    McmUpdate,
    /// Running sample covariance.
    Pca,
    /// Online versus batch eigenvectors of the same `V_bar_n`.
    OnlineVsBatch,
}

impl CurveSeries {
    pub const ALL: [CurveSeries; 4] = [
        CurveSeries::Mcm,
        CurveSeries::McmUpdate,
        CurveSeries::Pca,
        CurveSeries::OnlineVsBatch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CurveSeries::Mcm => "mcm",
            CurveSeries::McmUpdate => "mcm_update",
            CurveSeries::Pca => "pca",
            CurveSeries::OnlineVsBatch => "online_vs_batch",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub n: usize,
    pub series: CurveSeries,
    /// Mean loss over replications that produced a value.
    pub mean_r: f64,
    pub replications: usize,
}

/// Loss at each checkpoint for one replication, series-major.
type RepCurve = Vec<[Option<f64>; 4]>;

fn curve_replication(
    cfg: &RunConfig,
    checkpoints: &[usize],
    truth: &SymMat,
    seed: u64,
) -> Result<RepCurve> {
    let d = cfg.scenario.d;
    let mut sampler = Sampler::new(&cfg.scenario.with_seed(seed))?;
    let mut mcm = McmState::joint(d, &cfg.mcm_config(cfg.psd_mode))?;
    let mut eigen = OnlineEigen::new(d, cfg.q, seed)?;
    let mut cov = RunningCovariance::new(d);
    let mut x = vec![0.0; d];
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut next = checkpoints.iter().peekable();
    for n in 1..=*checkpoints.last().expect("nonempty checkpoints") {
        sampler.next_into(&mut x);
        let centered: Option<Vec<f64>> = mcm
            .center()
            .map(|c| x.iter().zip(c).map(|(a, b)| a - b).collect());
        mcm.update_slice(&x);
        if let Some(y) = centered {
            eigen.observe(&y, &mcm.v_bar)?;
        }
        cov.push(&x);
        if next.peek() == Some(&&n) {
            next.next();
            let batch = mcm
                .estimate()
                .ok()
                .map(|v| top_eigenvectors(v, cfg.q).and_then(|b| projector(&b)))
                .transpose()?;
            let online = eigen.basis().map(|b| projector_from_orthonormal(b.ortho()));
            let pca = cov
                .covariance()
                .ok()
                .map(|c| subspace_loss(&c, truth, cfg.q))
                .transpose()?;
            let loss =
                |p: &Option<SymMat>| p.as_ref().map(|p| eigenspace_error(p, truth)).transpose();
            let agree = match (&online, &batch) {
                (Some(o), Some(b)) => Some(eigenspace_error(o, b)?),
                _ => None,
            };
            out.push([loss(&batch)?, loss(&online)?, pca, agree]);
        }
    }
    Ok(out)
}

/// Mean eigenspace loss along a single growing stream, over replications.
pub fn convergence_curve(cfg: &RunConfig, checkpoints: &[usize]) -> Result<Vec<CurveRow>> {
    cfg.validate()?;
    if checkpoints.is_empty() || checkpoints[0] == 0 || checkpoints.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(Error::InvalidParameter(
            "checkpoints must be positive and strictly increasing".into(),
        ));
    }
    let truth = reference_projector(cfg.scenario.d, cfg.q)?;
    let reps: Vec<Result<RepCurve>> = cfg.execution.map_range(cfg.replications, |r| {
        curve_replication(cfg, checkpoints, &truth, cfg.replication_seed(r))
    });
    let reps: Vec<RepCurve> = reps.into_iter().collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(checkpoints.len() * CurveSeries::ALL.len());
    for (c, &n) in checkpoints.iter().enumerate() {
        for (s, &series) in CurveSeries::ALL.iter().enumerate() {
            let vals: Vec<f64> = reps.iter().filter_map(|rep| rep[c][s]).collect();
            let mean_r = if vals.is_empty() {
                f64::NAN
            } else {
                vals.iter().sum::<f64>() / vals.len() as f64
            };
            rows.push(CurveRow {
                n,
                series,
                mean_r,
                replications: vals.len(),
            });
        }
    }
    Ok(rows)
}

pub fn write_curve_csv<W: Write>(rows: &[CurveRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "series", "mean_R", "replications"])?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.series.name().to_string(),
            r.mean_r.to_string(),
            r.replications.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(estimators: Vec<EstimatorKind>) -> RunConfig {
        RunConfig {
            scenario: ScenarioConfig::new(8, 0.0, Contamination::None, 5).unwrap(),
            n: 100,
            q: 1,
            replications: 3,
            estimators,
            ..Default::default()
        }
    }

    #[test]
    fn estimator_names_round_trip() {
        for k in EstimatorKind::ALL {
            assert_eq!(k.name().parse::<EstimatorKind>().unwrap(), k);
        }
        assert_eq!(
            parse_estimators("mcm_r, pca,pca").unwrap(),
            vec![EstimatorKind::Pca, EstimatorKind::McmR]
        );
        assert!(parse_estimators("mcd").is_err());
    }

    #[test]
    fn single_replication_quartiles_collapse() {
        let mut cfg = small(vec![EstimatorKind::Pca, EstimatorKind::McmRPlus]);
        cfg.replications = 1;
        let report = run_benchmark(&cfg).unwrap();
        for row in &report.rows {
            assert_eq!(row.q1_r, row.median_r);
            assert_eq!(row.q3_r, row.median_r);
            assert!(row.median_r >= 0.0 && row.median_r <= 2.0 * cfg.q as f64);
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = small(vec![]);
        assert!(run_benchmark(&cfg).is_err());
        cfg.estimators = vec![EstimatorKind::Pca];
        cfg.replications = 0;
        assert!(run_benchmark(&cfg).is_err());
        cfg.replications = 1;
        cfg.q = 9;
        assert!(run_benchmark(&cfg).is_err());
    }

    #[test]
    fn weiszfeld_failure_is_counted_not_fatal() {
        let mut cfg = small(vec![EstimatorKind::McmW, EstimatorKind::Pca]);
        cfg.weiszfeld.max_iter = 1;
        cfg.weiszfeld.eps = 1e-300;
        let report = run_benchmark(&cfg).unwrap();
        let w = report
            .rows
            .iter()
            .find(|r| r.estimator == EstimatorKind::McmW)
            .unwrap();
        assert_eq!(w.failed, 3);
        assert_eq!(w.replications, 0);
        assert!(w.median_r.is_nan());
        let p = report
            .rows
            .iter()
            .find(|r| r.estimator == EstimatorKind::Pca)
            .unwrap();
        assert_eq!(p.failed, 0);
    }

    #[test]
    fn report_csv_layout() {
        let report = run_benchmark(&small(vec![EstimatorKind::Pca])).unwrap();
        let mut buf = Vec::new();
        write_report_csv(&report.rows, &mut buf, false).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "estimator,scenario,delta,d,n,q,replications,failed,median_R,q1_R,q3_R,mean_R,seed"
        );
        assert!(lines.next().unwrap().starts_with("pca,none,0,8,100,1,3,0,"));
    }

    #[test]
    fn single_checkpoint_gives_one_row_per_series() {
        let cfg = small(vec![EstimatorKind::McmRPlus]);
        let rows = convergence_curve(&cfg, &[60]).unwrap();
        assert_eq!(rows.len(), CurveSeries::ALL.len());
        assert!(rows.iter().all(|r| r.n == 60 && r.replications == 3));
        assert!(convergence_curve(&cfg, &[10, 10]).is_err());
        assert!(convergence_curve(&cfg, &[]).is_err());
    }
}
