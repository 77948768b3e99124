//! One-pass robust PCA with the median covariation matrix.
//!
//! The streaming path ([`McmState`], [`OnlineEigen`], [`StreamFitter`]) keeps
//! `O(d^2)` state and costs `O(d^2)` per observation. The batch Weiszfeld
//! estimators and the Monte Carlo [`harness`] serve as references.

// `!(x > 0.0)` guards deliberately reject NaN; index loops mirror matrix notation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod baseline;
pub mod config;
pub mod error;
pub mod exec;
pub mod geomedian;
pub mod harness;
pub mod linalg;
pub mod mcm;
pub mod metrics;
pub mod online_pca;
pub mod rng;
pub mod simgen;
pub mod snapshot;
pub mod stream;

pub use baseline::{sample_covariance, RunningCovariance};
pub use error::{Error, ErrorKind, Result};
pub use exec::Execution;
pub use geomedian::{
    coordinate_median, median_objective, weiszfeld_median, MedianState, StepSchedule, WeiszfeldFit,
    WeiszfeldOptions,
};
pub use harness::{
    convergence_curve, run_benchmark, write_curve_csv, write_report_csv, CurveRow, CurveSeries,
    EstimatorKind, ReportRow, RunConfig,
};
pub use linalg::{projector, sym_eigen, top_eigenvectors, RealVec, SymMat};
pub use mcm::{weiszfeld_mcm, weiszfeld_pipeline, McmConfig, McmState, UpdateOutcome};
pub use metrics::{eigenspace_error, mc_summary, McSummary};
pub use online_pca::{pc_scores, EigenBasis, OnlineEigen};
pub use simgen::{brownian_cov, draw_sample, simulate_csv, Contamination, Sampler, ScenarioConfig};
pub use stream::{fit_csv, CsvOptions, FitReport, StreamFitter};
