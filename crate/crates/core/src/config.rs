//! Flat `key = value` run configuration files.
//!
//! One setting per line, `#` starts a comment, and keys accept either `-` or
//! `_` as separator. Recognized keys: `d`, `n`, `delta`, `scenario`,
//! `estimators`, `reps`, `seed`, `alpha`, `c-median`, `c-mcm`, `psd-mode`,
//! `out`, `q`, `checkpoints`, `eps`, `max-iter`.

use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::geomedian::StepSchedule;
use crate::harness::{parse_estimators, RunConfig};

/// Parsed settings; unset keys leave the target untouched.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    pub d: Option<usize>,
    pub n: Option<usize>,
    pub delta: Option<f64>,
    pub scenario: Option<String>,
    pub estimators: Option<String>,
    pub reps: Option<usize>,
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    pub c_median: Option<f64>,
    pub c_mcm: Option<f64>,
    pub psd_mode: Option<bool>,
    pub out: Option<PathBuf>,
    pub q: Option<usize>,
    pub checkpoints: Option<Vec<usize>>,
    pub eps: Option<f64>,
    pub max_iter: Option<usize>,
}

fn value<T: std::str::FromStr>(key: &str, raw: &str, line: usize) -> Result<T> {
    raw.parse().map_err(|_| {
        Error::InvalidParameter(format!("line {line}: invalid value '{raw}' for '{key}'"))
    })
}

fn parse_bool(key: &str, raw: &str, line: usize) -> Result<bool> {
    match raw.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::InvalidParameter(format!(
            "line {line}: invalid boolean '{raw}' for '{key}'"
        ))),
    }
}

pub fn parse_list(raw: &str) -> Result<Vec<usize>> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| Error::InvalidParameter(format!("invalid list entry '{s}'")))
        })
        .collect()
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ConfigFile::default();
        for (idx, raw_line) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw_line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, raw) = content.split_once('=').ok_or_else(|| {
                Error::InvalidParameter(format!("line {line}: expected 'key = value'"))
            })?;
            let key = key.trim().replace('_', "-");
            let raw = raw.trim();
            match key.as_str() {
                "d" => cfg.d = Some(value(&key, raw, line)?),
                "n" => cfg.n = Some(value(&key, raw, line)?),
                "delta" => cfg.delta = Some(value(&key, raw, line)?),
                "scenario" => cfg.scenario = Some(raw.to_string()),
                "estimators" => cfg.estimators = Some(raw.to_string()),
                "reps" => cfg.reps = Some(value(&key, raw, line)?),
                "seed" => cfg.seed = Some(value(&key, raw, line)?),
                "alpha" => cfg.alpha = Some(value(&key, raw, line)?),
                "c-median" => cfg.c_median = Some(value(&key, raw, line)?),
                "c-mcm" => cfg.c_mcm = Some(value(&key, raw, line)?),
                "psd-mode" => cfg.psd_mode = Some(parse_bool(&key, raw, line)?),
                "out" => cfg.out = Some(PathBuf::from(raw)),
                "q" => cfg.q = Some(value(&key, raw, line)?),
                "checkpoints" => {
                    cfg.checkpoints = Some(
                        parse_list(raw)
                            .map_err(|e| Error::InvalidParameter(format!("line {line}: {e}")))?,
                    )
                }
                "eps" => cfg.eps = Some(value(&key, raw, line)?),
                "max-iter" => cfg.max_iter = Some(value(&key, raw, line)?),
                other => {
                    return Err(Error::InvalidParameter(format!(
                        "line {line}: unknown key '{other}'"
                    )))
                }
            }
        }
        Ok(cfg)
    }

    /// Overlays the set keys onto `run` and re-validates it.
    pub fn apply(&self, run: &mut RunConfig) -> Result<()> {
        if let Some(d) = self.d {
            run.scenario.d = d;
        }
        if let Some(n) = self.n {
            run.n = n;
        }
        if let Some(delta) = self.delta {
            run.scenario.delta = delta;
        }
        if let Some(s) = &self.scenario {
            run.scenario.contamination = s.parse()?;
        }
        if let Some(e) = &self.estimators {
            run.estimators = parse_estimators(e)?;
        }
        if let Some(r) = self.reps {
            run.replications = r;
        }
        if let Some(s) = self.seed {
            run.scenario.seed = s;
        }
        let alpha = self.alpha.unwrap_or(run.mcm_schedule.alpha());
        run.median_schedule =
            StepSchedule::new(self.c_median.unwrap_or(run.median_schedule.c()), alpha)?;
        run.mcm_schedule = StepSchedule::new(self.c_mcm.unwrap_or(run.mcm_schedule.c()), alpha)?;
        if let Some(p) = self.psd_mode {
            run.psd_mode = p;
        }
        if let Some(o) = &self.out {
            run.output_path = Some(o.clone());
        }
        if let Some(q) = self.q {
            run.q = q;
        }
        if let Some(eps) = self.eps {
            run.weiszfeld.eps = eps;
        }
        if let Some(m) = self.max_iter {
            run.weiszfeld.max_iter = m;
        }
        run.validate()
    }
}
