//! Single-pass fitting of CSV streams.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcm::{McmConfig, McmState, UpdateOutcome};
use crate::online_pca::{pc_scores, OnlineEigen};

/// Joint median/MCM estimator with an optional online eigen tracker.
#[derive(Debug, Clone)]
pub struct StreamFitter {
    mcm: McmState,
    eigen: Option<OnlineEigen>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub n: u64,
    pub dim: usize,
    pub updates: u64,
    pub psd_mode: bool,
    pub c_median: f64,
    pub c_mcm: f64,
    pub alpha: f64,
    pub median: Vec<f64>,
    /// Online eigenvalue estimates, descending; empty until tracking starts.
    pub eigenvalues: Vec<f64>,
    pub eigen_reinitialized: u64,
}

impl StreamFitter {
    /// `q = 0` disables eigen tracking.
    pub fn new(dim: usize, cfg: &McmConfig, q: usize, seed: u64) -> Result<Self> {
        let mcm = McmState::joint(dim, cfg)?;
        let eigen = if q == 0 {
            None
        } else {
            Some(OnlineEigen::new(dim, q, seed)?)
        };
        Ok(Self { mcm, eigen })
    }

    pub fn from_parts(mcm: McmState, eigen: Option<OnlineEigen>) -> Result<Self> {
        if let Some(e) = &eigen {
            Error::check_dim(mcm.dim(), e.dim())?;
        }
        Ok(Self { mcm, eigen })
    }

    pub fn mcm(&self) -> &McmState {
        &self.mcm
    }

    pub fn eigen(&self) -> Option<&OnlineEigen> {
        self.eigen.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.mcm.dim()
    }

    /// Consumes one finite observation of the right dimension.
    pub fn push(&mut self, x: &[f64]) -> Result<()> {
        Error::check_dim(self.dim(), x.len())?;
        let centered: Option<Vec<f64>> = self
            .mcm
            .center()
            .map(|c| x.iter().zip(c).map(|(a, b)| a - b).collect());
        let outcome = self.mcm.update_slice(x);
        if let (Some(eigen), Some(y)) = (&mut self.eigen, centered) {
            if outcome != UpdateOutcome::Seeded {
                eigen.observe(&y, &self.mcm.v_bar)?;
            }
        }
        Ok(())
    }

    pub fn report(&self) -> FitReport {
        let eigenvalues = self
            .eigen
            .as_ref()
            .and_then(|e| e.basis())
            .map(|b| b.sorted_pairs().into_iter().map(|(v, _)| v).collect())
            .unwrap_or_default();
        FitReport {
            n: self.mcm.n(),
            dim: self.dim(),
            updates: self.mcm.updates(),
            psd_mode: self.mcm.psd_mode(),
            c_median: self.mcm.median_schedule().c(),
            c_mcm: self.mcm.mcm_schedule().c(),
            alpha: self.mcm.mcm_schedule().alpha(),
            median: self.mcm.center().map(|c| c.to_vec()).unwrap_or_default(),
            eigenvalues,
            eigen_reinitialized: self.eigen.as_ref().map_or(0, |e| e.reinitialized()),
        }
    }

    pub fn write_snapshot<W: Write>(&self, out: W) -> Result<()> {
        crate::snapshot::write_snapshot(&self.mcm, self.eigen.as_ref(), out)
    }

    pub fn read_snapshot<R: Read>(input: R) -> Result<Self> {
        let (mcm, eigen) = crate::snapshot::read_snapshot(input)?;
        Self::from_parts(mcm, eigen)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CsvOptions {
    pub has_header: bool,
}

/// Parses one CSV record into finite floats, reporting the first bad cell.
fn parse_record(
    record: &csv::StringRecord,
    expected: Option<usize>,
    line: u64,
) -> Result<Vec<f64>> {
    if let Some(d) = expected {
        if record.len() != d {
            return Err(Error::Data {
                line,
                message: format!("expected {d} fields, found {}", record.len()),
            });
        }
    }
    record
        .iter()
        .enumerate()
        .map(|(col, cell)| {
            let cell = cell.trim();
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                Ok(_) => Err(Error::Data {
                    line,
                    message: format!("column {}: non-finite value '{cell}'", col + 1),
                }),
                Err(_) => Err(Error::Data {
                    line,
                    message: format!("column {}: cannot parse '{cell}' as a number", col + 1),
                }),
            }
        })
        .collect()
}

/// Visits every data row of a CSV stream with its 1-based line number.
pub fn for_each_row<R: Read>(
    input: R,
    opts: CsvOptions,
    expected_dim: Option<usize>,
    mut visit: impl FnMut(u64, &[f64]) -> Result<()>,
) -> Result<u64> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(opts.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut dim = expected_dim;
    let mut rows = 0;
    let mut record = csv::StringRecord::new();
    while reader.read_record(&mut record)? {
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let row = parse_record(&record, dim, line)?;
        dim.get_or_insert(row.len());
        visit(line, &row)?;
        rows += 1;
    }
    Ok(rows)
}

/// Fits a CSV stream in one pass.
///
/// `fitter` continues a resumed fit; when `None` a fresh one is built from
/// the first row's width. With `scores`, every row seen after tracking starts
/// emits `line,score_1..score_q,ortho_dist`.
pub fn fit_csv<R: Read>(
    input: R,
    opts: CsvOptions,
    fitter: Option<StreamFitter>,
    new_fitter: impl FnOnce(usize) -> Result<StreamFitter>,
    mut scores: Option<&mut dyn Write>,
) -> Result<StreamFitter> {
    let mut fitter = fitter;
    let mut new_fitter = Some(new_fitter);
    let expected = fitter.as_ref().map(|f| f.dim());
    for_each_row(input, opts, expected, |line, row| {
        if fitter.is_none() {
            let make = new_fitter.take().expect("constructor used once");
            fitter = Some(make(row.len())?);
        }
        let f = fitter.as_mut().expect("fitter initialized");
        f.push(row)?;
        if let Some(out) = scores.as_deref_mut() {
            if let (Some(basis), Some(center)) =
                (f.eigen().and_then(|e| e.basis()), f.mcm().center())
            {
                let (s, dist) = pc_scores(row, center, basis)?;
                let mut line_out = line.to_string();
                for v in s.iter().chain(std::iter::once(&dist)) {
                    line_out.push(',');
                    line_out.push_str(&v.to_string());
                }
                line_out.push('\n');
                out.write_all(line_out.as_bytes())?;
            }
        }
        Ok(())
    })?;
    fitter.ok_or(Error::NoObservations)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fresh(q: usize) -> impl FnOnce(usize) -> Result<StreamFitter> {
        move |d| StreamFitter::new(d, &McmConfig::default(), q, 1)
    }

    #[test]
    fn three_rows() {
        let f = fit_csv(
            "1,2\n3,4\n5,6\n".as_bytes(),
            CsvOptions::default(),
            None,
            fresh(1),
            None,
        )
        .unwrap();
        assert_eq!(f.report().n, 3);
        assert_eq!(f.report().dim, 2);
    }

    #[test]
    fn header_is_skipped() {
        let opts = CsvOptions { has_header: true };
        let f = fit_csv("x1,x2\n1,2\n3,4\n".as_bytes(), opts, None, fresh(0), None).unwrap();
        assert_eq!(f.report().n, 2);
    }

    #[test]
    fn ragged_row_reports_line() {
        let err = fit_csv(
            "1,2\n3,4\n5\n".as_bytes(),
            CsvOptions::default(),
            None,
            fresh(1),
            None,
        )
        .unwrap_err();
        match err {
            Error::Data { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("expected 2"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_numeric_cell_reports_location() {
        let err = fit_csv(
            "1,2\n3,abc\n".as_bytes(),
            CsvOptions::default(),
            None,
            fresh(1),
            None,
        )
        .unwrap_err();
        match err {
            Error::Data { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("column 2"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(fit_csv(
            "1,NaN\n".as_bytes(),
            CsvOptions::default(),
            None,
            fresh(1),
            None
        )
        .is_err());
    }

    #[test]
    fn identical_rows_give_that_median() {
        let data = "2.5,-1\n".repeat(50);
        let f = fit_csv(data.as_bytes(), CsvOptions::default(), None, fresh(1), None).unwrap();
        let m = f.report().median;
        assert!((m[0] - 2.5).abs() < 1e-12 && (m[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(
            fit_csv("".as_bytes(), CsvOptions::default(), None, fresh(1), None),
            Err(Error::NoObservations)
        ));
    }

    #[test]
    fn scores_sidecar_rows() {
        let data: String = (0..20)
            .map(|i| format!("{},{},{}\n", i % 3, (i * 7) % 5, i % 2))
            .collect();
        let mut side = Vec::new();
        fit_csv(
            data.as_bytes(),
            CsvOptions::default(),
            None,
            fresh(2),
            Some(&mut side),
        )
        .unwrap();
        let text = String::from_utf8(side).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert!(!lines.is_empty());
        assert!(lines.iter().all(|l| l.split(',').count() == 4));
    }
}
