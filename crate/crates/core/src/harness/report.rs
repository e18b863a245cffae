use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;

pub const CSV_HEADER: &str = "step,d_loss,g_loss,fid,is_mean,is_std,modes,hq_frac,wall_ms";

/// One evaluation point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub step: usize,
    pub d_loss: f64,
    pub g_loss: f64,
    pub fid: f64,
    pub is_mean: f64,
    pub is_std: f64,
    pub modes: usize,
    pub hq_frac: f64,
    /// Milliseconds since the run (or resumed segment) started. Not
    /// reproducible and excluded from determinism comparisons.
    pub wall_ms: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rows: Vec<ReportRow>,
}

impl MetricReport {
    pub fn push(&mut self, row: ReportRow) {
        debug_assert!(self.rows.last().is_none_or(|r| r.step < row.step));
        self.rows.push(row);
    }

    pub fn last(&self) -> Option<&ReportRow> {
        self.rows.last()
    }

    pub fn best_fid(&self) -> Option<&ReportRow> {
        self.rows.iter().fold(None, |best: Option<&ReportRow>, r| match best {
            Some(b) if b.fid <= r.fid => Some(b),
            _ => Some(r),
        })
    }

    /// Copy with every wall-clock field zeroed.
    pub fn without_wall_clock(&self) -> Self {
        Self {
            rows: self
                .rows
                .iter()
                .map(|r| ReportRow {
                    wall_ms: 0,
                    ..r.clone()
                })
                .collect(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.step, r.d_loss, r.g_loss, r.fid, r.is_mean, r.is_std, r.modes, r.hq_frac, r.wall_ms
            )
            .expect("write to string");
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, HarnessError> {
        let mut lines = text.lines();
        if lines.next() != Some(CSV_HEADER) {
            return Err(HarnessError::Config(format!("report header must be {CSV_HEADER:?}")));
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let f: Vec<&str> = line.split(',').collect();
            let err = || HarnessError::Config(format!("malformed report line {}: {line:?}", i + 2));
            if f.len() != 9 {
                return Err(err());
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| err());
            let int = |s: &str| s.parse::<usize>().map_err(|_| err());
            rows.push(ReportRow {
                step: int(f[0])?,
                d_loss: num(f[1])?,
                g_loss: num(f[2])?,
                fid: num(f[3])?,
                is_mean: num(f[4])?,
                is_std: num(f[5])?,
                modes: int(f[6])?,
                hq_frac: num(f[7])?,
                wall_ms: f[8].parse().map_err(|_| err())?,
            });
        }
        Ok(Self { rows })
    }
}

/// JSON summary written next to the CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub loss: String,
    pub seed: u64,
    pub steps_completed: usize,
    pub evaluations: usize,
    pub final_row: Option<ReportRow>,
    pub best_fid: Option<f64>,
    pub best_fid_step: Option<usize>,
    pub collapsed: bool,
    pub diverged_at: Option<usize>,
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| HarnessError::Io {
            path: parent.display().to_string(),
            message: e.to_string(),
        })?;
    }
    std::fs::write(path, text).map_err(|e| HarnessError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}
