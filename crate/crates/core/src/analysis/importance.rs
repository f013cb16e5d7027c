//! Per-submodel importance scores from single and bagged trees.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow_tree, ConfigStats, Tree, TreeData};
use crate::error::{Error, Result};
use crate::harness::OutputTable;
use crate::stream::RandomStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BagWeighting {
    Uniform,
    TssWeighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ReportKind {
    SingleTree,
    Bagged { trees: usize, weighting: BagWeighting },
    /// Weighted combination of per-state reports.
    Aggregate { states: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    /// Mean TSS reduction per split, per submodel.
    pub per_submodel: Vec<f64>,
    /// Splits per submodel (summed over trees when bagged).
    pub split_counts: Vec<usize>,
    /// `RSS / (N - C + 1)` with `N` outputs over `C` configurations.
    pub aleatoric: f64,
    pub tss: f64,
    pub rss: f64,
    pub kind: ReportKind,
}

impl ImportanceReport {
    /// Submodel indices ordered by decreasing score; ties keep index order.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.per_submodel.len()).collect();
        idx.sort_by(|&a, &b| self.per_submodel[b].total_cmp(&self.per_submodel[a]).then(a.cmp(&b)));
        idx
    }
}

/// Scores of a grown tree. `data` must be the data the tree was grown on.
pub fn importance(tree: &Tree, data: &TreeData) -> ImportanceReport {
    let mut sums = vec![0.0; tree.features];
    let mut counts = vec![0usize; tree.features];
    for (split, gain) in tree.splits() {
        sums[split.submodel] += gain;
        counts[split.submodel] += 1;
    }
    let per_submodel = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
        .collect();
    let rss = data.within_ss();
    let dof = data.total_count() - data.stats.len() as f64 + 1.0;
    ImportanceReport {
        per_submodel,
        split_counts: counts,
        aleatoric: if dof > 0.0 { rss / dof } else { 0.0 },
        tss: tree.tss(),
        rss,
        kind: ReportKind::SingleTree,
    }
}

/// Grows one tree on the whole table and scores it.
pub fn table_importance(table: &OutputTable) -> Result<ImportanceReport> {
    let data = TreeData::from_table(table);
    let tree = grow_tree(&data)?;
    Ok(importance(&tree, &data))
}

/// Tree data from a with-replacement resample of the `(config, replication)` rows.
pub fn resampled_data(table: &OutputTable, stream: &RandomStream) -> TreeData {
    let offsets: Vec<usize> = table
        .outputs
        .iter()
        .scan(0, |acc, r| {
            let start = *acc;
            *acc += r.len();
            Some(start)
        })
        .collect();
    let total = table.total_outputs();
    let mut rng = stream.rng();
    let mut picked: Vec<Vec<f64>> = vec![Vec::new(); table.rows()];
    for _ in 0..total {
        let k = rng.random_range(0..total);
        let c = offsets.partition_point(|&o| o <= k) - 1;
        picked[c].push(table.outputs[c][k - offsets[c]]);
    }
    let mut levels = Vec::new();
    let mut stats = Vec::new();
    for (c, ys) in picked.iter().enumerate() {
        if !ys.is_empty() {
            levels.push(table.design.entries[c].clone());
            stats.push(ConfigStats::from_outputs(ys));
        }
    }
    TreeData {
        levels,
        stats,
        features: table.design.submodels(),
    }
}

/// Bagged importance: `trees` trees on row resamples, tree `t` using `stream.derive(t)`.
pub fn bagged_importance(
    table: &OutputTable,
    trees: usize,
    weighting: BagWeighting,
    stream: &RandomStream,
) -> Result<ImportanceReport> {
    if trees == 0 {
        return Err(Error::InvalidArgument("bagging needs at least one tree".into()));
    }
    let reports = (0..trees)
        .into_par_iter()
        .map(|t| {
            let data = resampled_data(table, &stream.derive(t as u64));
            let tree = grow_tree(&data)?;
            Ok(importance(&tree, &data))
        })
        .collect::<Result<Vec<_>>>()?;
    let weights: Vec<f64> = match weighting {
        BagWeighting::Uniform => vec![1.0; trees],
        BagWeighting::TssWeighted => reports.iter().map(|r| r.tss).collect(),
    };
    let mut combined = combine(&reports, &weights);
    combined.kind = ReportKind::Bagged { trees, weighting };
    Ok(combined)
}

/// Weighted average of reports. Falls back to equal weights when all weights are zero.
/// `tss` and `rss` are plain means; split counts are summed.
pub(crate) fn combine(reports: &[ImportanceReport], weights: &[f64]) -> ImportanceReport {
    let l = reports[0].per_submodel.len();
    let total: f64 = weights.iter().sum();
    let w: Vec<f64> = if total > 0.0 {
        weights.iter().map(|x| x / total).collect()
    } else {
        vec![1.0 / reports.len() as f64; reports.len()]
    };
    let k = reports.len() as f64;
    let mut per_submodel = vec![0.0; l];
    let mut split_counts = vec![0usize; l];
    let mut aleatoric = 0.0;
    for (r, &wi) in reports.iter().zip(&w) {
        for i in 0..l {
            per_submodel[i] += wi * r.per_submodel[i];
            split_counts[i] += r.split_counts[i];
        }
        aleatoric += wi * r.aleatoric;
    }
    ImportanceReport {
        per_submodel,
        split_counts,
        aleatoric,
        tss: reports.iter().map(|r| r.tss).sum::<f64>() / k,
        rss: reports.iter().map(|r| r.rss).sum::<f64>() / k,
        kind: reports[0].kind,
    }
}
