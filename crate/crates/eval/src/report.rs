//! View x condition report tables and flat retrieval summaries.

use std::fmt::Write as _;

use cvvnet_core::{Condition, ViewGroup};

use crate::error::{EvalError, Result};
use crate::metrics::{mean_average_precision, rank_curve, Exclusion};
use crate::record::EvalRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    /// Per (view, condition) rank-1 with a gallery of every record.
    DroneGaitStyle,
    /// One rank-1 / rank-5 / mAP over all records.
    FlatStyle,
}

/// Which views the gallery may contain for a probe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GalleryScope {
    /// Every view, minus the probe itself.
    #[default]
    AllViews,
    /// Only views other than the probe's.
    OtherViews,
}

impl GalleryScope {
    pub fn exclusion(self) -> Exclusion {
        match self {
            GalleryScope::AllViews => Exclusion::SameSequence,
            GalleryScope::OtherViews => Exclusion::SameSequenceAndView,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellResult {
    pub rank1: f64,
    pub probes: usize,
}

/// Rank-1 per (test view, condition); `None` where a cell has no probes.
pub type CellTable = [[Option<CellResult>; 3]; 3];

/// Flat retrieval scores, all in percent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatScores {
    pub rank1: f64,
    pub rank5: f64,
    pub map: f64,
    pub probes: usize,
    /// Probes left out of mAP because no positive was available.
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub protocol: Protocol,
    pub scope: GalleryScope,
    pub cells: Option<CellTable>,
    pub flat: FlatScores,
}

/// Rank-1 / rank-5 / mAP of `probes` against `gallery`.
pub fn flat_scores(probes: &[EvalRecord], gallery: &[EvalRecord], exclusion: Exclusion) -> Result<FlatScores> {
    let curve = rank_curve(probes, gallery, 5, exclusion)?;
    let map = mean_average_precision(probes, gallery, exclusion)?;
    Ok(FlatScores { rank1: curve[0], rank5: curve[4], map: map.map, probes: probes.len(), skipped: map.skipped })
}

/// Groups `probes` by view and condition and scores each group's rank-1.
pub fn cell_table(probes: &[EvalRecord], gallery: &[EvalRecord], exclusion: Exclusion) -> Result<CellTable> {
    let mut table: CellTable = [[None; 3]; 3];
    for v in ViewGroup::ALL {
        for c in Condition::ALL {
            let cell: Vec<EvalRecord> = probes
                .iter()
                .map(|r| labels(r).map(|(rv, rc)| (rv == v && rc == c).then(|| r.clone())))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .flatten()
                .collect();
            if !cell.is_empty() {
                let rank1 = rank_curve(&cell, gallery, 1, exclusion)?[0];
                table[v.index()][c.index()] = Some(CellResult { rank1, probes: cell.len() });
            }
        }
    }
    Ok(table)
}

fn labels(r: &EvalRecord) -> Result<(ViewGroup, Condition)> {
    match (r.view_group, r.condition) {
        (Some(v), Some(c)) => Ok((v, c)),
        _ => Err(EvalError::MissingLabels(r.sequence_id.clone())),
    }
}

/// Evaluates `records` under `protocol`. Every record serves as a probe
/// and as a gallery candidate for the others.
pub fn cross_view_report(records: &[EvalRecord], protocol: Protocol, scope: GalleryScope) -> Result<EvalReport> {
    let exclusion = scope.exclusion();
    let cells = match protocol {
        Protocol::DroneGaitStyle => {
            for r in records {
                labels(r)?;
            }
            Some(cell_table(records, records, exclusion)?)
        }
        Protocol::FlatStyle => None,
    };
    let flat = flat_scores(records, records, exclusion)?;
    Ok(EvalReport { protocol, scope, cells, flat })
}

/// Aligned text table with test views as rows and conditions as columns.
pub fn render_cell_table(title: &str, cells: &CellTable) -> String {
    let mut s = format!("{title}\n{:<10}", "Test view");
    for c in Condition::ALL {
        let _ = write!(s, " {:>7}", c.as_str());
    }
    s.push('\n');
    for v in ViewGroup::ALL {
        let _ = write!(s, "{:<10}", v.as_str());
        for c in Condition::ALL {
            match cells[v.index()][c.index()] {
                Some(cell) => {
                    let _ = write!(s, " {:>7.1}", cell.rank1);
                }
                None => {
                    let _ = write!(s, " {:>7}", "-");
                }
            }
        }
        s.push('\n');
    }
    s
}

impl EvalReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let scope = match self.scope {
            GalleryScope::AllViews => "all views",
            GalleryScope::OtherViews => "other views only",
        };
        if let Some(cells) = &self.cells {
            s.push_str(&render_cell_table(&format!("Rank-1 (%) by test view and condition; gallery: {scope}"), cells));
            s.push('\n');
        }
        let f = &self.flat;
        let _ = writeln!(s, "{:>8} {:>8} {:>8}", "Rank-1", "Rank-5", "mAP");
        let _ = writeln!(s, "{:>8.1} {:>8.1} {:>8.1}", f.rank1, f.rank5, f.map);
        let _ = writeln!(s, "probes: {}  skipped for mAP: {}", f.probes, f.skipped);
        s
    }

    /// One `key=value` line per metric.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let protocol = match self.protocol {
            Protocol::DroneGaitStyle => "dronegait",
            Protocol::FlatStyle => "flat",
        };
        let scope = match self.scope {
            GalleryScope::AllViews => "all",
            GalleryScope::OtherViews => "other",
        };
        let _ = writeln!(s, "protocol={protocol}\ngallery_scope={scope}");
        if let Some(cells) = &self.cells {
            for v in ViewGroup::ALL {
                for c in Condition::ALL {
                    if let Some(cell) = cells[v.index()][c.index()] {
                        let _ = writeln!(s, "rank1.{v}.{c}={}", cell.rank1);
                        let _ = writeln!(s, "probes.{v}.{c}={}", cell.probes);
                    }
                }
            }
        }
        let f = &self.flat;
        let _ = write!(s, "rank1={}\nrank5={}\nmap={}\nprobes={}\nskipped={}\n", f.rank1, f.rank5, f.map, f.probes, f.skipped);
        s
    }
}
