//! Tab-separated per-step metric log.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::error::{Result, TrainError};

pub const METRICS_HEADER: &str = "step\tlr\tL_tri\tL_ce\tL_total";

/// One logged training step. `step` is the index of the update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub lr: f64,
    pub triplet: f64,
    pub ce: f64,
    pub total: f64,
}

impl StepRecord {
    /// Floats use the shortest representation that parses back to the same value.
    pub fn to_line(&self) -> String {
        format!("{}\t{}\t{}\t{}\t{}", self.step, self.lr, self.triplet, self.ce, self.total)
    }

    pub fn parse_line(line: &str) -> Option<Self> {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 5 {
            return None;
        }
        Some(StepRecord {
            step: f[0].parse().ok()?,
            lr: f[1].parse().ok()?,
            triplet: f[2].parse().ok()?,
            ce: f[3].parse().ok()?,
            total: f[4].parse().ok()?,
        })
    }
}

/// Append-only writer; the header is written when the file is new.
pub struct MetricLog {
    path: PathBuf,
    file: File,
}

impl MetricLog {
    pub fn open(path: &Path) -> Result<Self> {
        let fresh = !path.exists();
        let mut file =
            OpenOptions::new().create(true).append(true).open(path).map_err(|e| TrainError::io(path, e))?;
        if fresh {
            writeln!(file, "{METRICS_HEADER}").map_err(|e| TrainError::io(path, e))?;
        }
        Ok(MetricLog { path: path.to_path_buf(), file })
    }

    pub fn append(&mut self, r: &StepRecord) -> Result<()> {
        writeln!(self.file, "{}", r.to_line()).map_err(|e| TrainError::io(&self.path, e))
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<StepRecord>> {
    let file = File::open(path).map_err(|e| TrainError::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| TrainError::io(path, e))?;
        if line == METRICS_HEADER || line.is_empty() {
            continue;
        }
        out.push(StepRecord::parse_line(&line).ok_or_else(|| TrainError::Checkpoint {
            path: path.to_path_buf(),
            message: format!("bad metric line {line:?}"),
        })?);
    }
    Ok(out)
}
