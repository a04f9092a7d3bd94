//! The extractor x aggregator grid, each cell trained under several seeds.

use std::fmt::Write as _;
use std::path::Path;

use cvvnet_model::{Aggregator, Extractor};
use cvvnet_train::{EmbeddingKind, SequenceData, TrainConfig};

use crate::desk::{desk_experiment, DeskOutcome};
use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub extractor: Extractor,
    pub aggregator: Aggregator,
    pub seeds: Vec<u64>,
    /// Cross-view rank-1 per seed, by condition (NM, BG, CL).
    pub per_seed: Vec<[f64; 3]>,
    /// Same-view rank-1 per seed.
    pub same_view: Vec<f64>,
}

impl AblationRow {
    /// Seed-mean cross-view rank-1 by condition.
    pub fn mean_cells(&self) -> [f64; 3] {
        let n = self.per_seed.len().max(1) as f64;
        std::array::from_fn(|i| self.per_seed.iter().map(|c| c[i]).sum::<f64>() / n)
    }

    /// Seed-mean cross-view rank-1 over all conditions.
    pub fn mean(&self) -> f64 {
        self.mean_cells().iter().sum::<f64>() / 3.0
    }
}

/// Trains one grid cell once per seed and collects its scores.
pub fn ablation_table(
    base: &TrainConfig,
    seqs: &[SequenceData],
    extractor: Extractor,
    aggregator: Aggregator,
    seeds: &[u64],
    out_dir: &Path,
) -> Result<AblationRow> {
    let mut row = AblationRow { extractor, aggregator, seeds: seeds.to_vec(), per_seed: Vec::new(), same_view: Vec::new() };
    for &seed in seeds {
        let mut config = base.clone();
        config.backbone.extractor = extractor;
        config.backbone.aggregator = aggregator;
        config.model_seed = seed;
        config.data_seed = seed;
        let run_dir = out_dir.join(format!("{extractor}-{aggregator}-seed{seed}"));
        std::fs::create_dir_all(&run_dir).map_err(|e| CliError::io(&run_dir, e))?;
        let outcome: DeskOutcome = desk_experiment(&config, seqs, EmbeddingKind::default(), &run_dir)?;
        row.per_seed.push(outcome.cross_view_cells());
        row.same_view.push(outcome.same_view());
    }
    Ok(row)
}

fn label(e: Extractor, a: Aggregator) -> (&'static str, &'static str) {
    let fe = match e {
        Extractor::P3d => "P3D",
        Extractor::Hlfe => "HLFE",
    };
    let ag = match a {
        Aggregator::Add => "Add",
        Aggregator::Concat => "Concat",
        Aggregator::Dga => "DGA",
    };
    (fe, ag)
}

/// One row per grid cell with seed-mean cross-view rank-1 per condition.
pub fn render_ablation(rows: &[AblationRow]) -> String {
    let mut s = String::from("Cross-view rank-1 (%), mean over seeds\n");
    let _ = writeln!(s, "{:<6} {:<7} {:>6} {:>6} {:>6}", "FE.", "Aggr.", "NM", "BG", "CL");
    for r in rows {
        let (fe, ag) = label(r.extractor, r.aggregator);
        let [nm, bg, cl] = r.mean_cells();
        let _ = writeln!(s, "{fe:<6} {ag:<7} {nm:>6.1} {bg:>6.1} {cl:>6.1}");
    }
    s
}
