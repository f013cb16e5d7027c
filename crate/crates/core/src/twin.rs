//! Digital-twin experiments: one stacked design per observed state, importance
//! aggregated across states and the state-average bias estimator.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{combine, quantile_ci, ImportanceReport, QuantileCI, ReportKind};
use crate::design::stacked_design;
use crate::error::{Error, Result};
use crate::harness::{run_experiment, OutputTable, StreamMode};
use crate::model::SimulationModel;
use crate::resample::InstanceMatrix;
use crate::stream::RandomStream;

/// A hot-startable system state observed at the start of an epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot<P> {
    pub state_id: usize,
    pub clock: f64,
    pub payload: P,
    /// KPI observed on the real system over the epoch that starts here.
    pub observed_kpi: Option<f64>,
}

impl<P> StateSnapshot<P> {
    pub fn new(state_id: usize, clock: f64, payload: P) -> Result<Self> {
        if !(clock >= 0.0) {
            return Err(Error::InvalidSnapshot(format!("clock {clock} is negative")));
        }
        Ok(Self {
            state_id,
            clock,
            payload,
            observed_kpi: None,
        })
    }

    pub fn with_observation(mut self, kpi: f64) -> Self {
        self.observed_kpi = Some(kpi);
        self
    }
}

/// One stacked design of `B * S` rows per state and its output table.
///
/// State `i` draws its design from `root.derive_path(&[i, 0])` and its
/// replications from `root.derive_path(&[i, 1])`, so states are independent of
/// one another and of their order.
pub fn per_state_experiment<M, P>(
    model: &M,
    instances: &InstanceMatrix,
    states: &[StateSnapshot<P>],
    stacks: usize,
    n: usize,
    root: &RandomStream,
) -> Result<Vec<OutputTable>>
where
    M: SimulationModel<State = StateSnapshot<P>>,
    P: Sync,
{
    let b = crate::design::common_instance_count(&instances.iter().map(Vec::len).collect::<Vec<_>>())?;
    let slots = model.num_submodels();
    states
        .par_iter()
        .map(|state| {
            let branch = root.derive(state.state_id as u64);
            let design = stacked_design(b, stacks, slots, &branch.derive(0))?.deduplicate();
            let mut table = run_experiment(model, instances, &design, n, Some(state), &branch.derive(1))?;
            table.state_id = Some(state.state_id);
            Ok(table)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StateWeighting {
    Uniform,
    /// Each state weighted by the mean TSS of its bagged trees.
    AvgTssWeighted,
}

/// Weighted mean of per-state reports.
pub fn aggregate_importance(reports: &[ImportanceReport], weighting: StateWeighting) -> Result<ImportanceReport> {
    let Some(first) = reports.first() else {
        return Err(Error::InvalidArgument("no reports to aggregate".into()));
    };
    if reports.iter().any(|r| r.per_submodel.len() != first.per_submodel.len()) {
        return Err(Error::InvalidArgument("reports cover different numbers of submodels".into()));
    }
    let weights: Vec<f64> = match weighting {
        StateWeighting::Uniform => vec![1.0; reports.len()],
        StateWeighting::AvgTssWeighted => reports.iter().map(|r| r.tss).collect(),
    };
    let mut out = combine(reports, &weights);
    out.kind = ReportKind::Aggregate { states: reports.len() };
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateAverageBias {
    /// Mean over states of (configuration mean - observed KPI), one per stacked row.
    pub estimates: Vec<f64>,
    pub ci: QuantileCI,
    pub states: usize,
}

/// Pairs the `b'`-th stacked row of every state and averages its simulated
/// mean minus the state's observation.
pub fn state_average_bias(tables: &[OutputTable], observed: &[Option<f64>], alpha: f64) -> Result<StateAverageBias> {
    if tables.is_empty() || tables.len() != observed.len() {
        return Err(Error::InvalidArgument("need one observation per state table".into()));
    }
    let ys = observed
        .iter()
        .enumerate()
        .map(|(i, y)| y.ok_or(Error::MissingObservation { state: tables[i].state_id.unwrap_or(i) }))
        .collect::<Result<Vec<f64>>>()?;
    let width = tables[0].design.stacked_rows();
    if tables.iter().any(|t| t.design.stacked_rows() != width) {
        return Err(Error::InvalidDesign("states have different numbers of stacked configurations".into()));
    }
    let mut estimates = vec![0.0; width];
    for (t, y) in tables.iter().zip(&ys) {
        for (e, m) in estimates.iter_mut().zip(t.stacked_means()) {
            *e += m - y;
        }
    }
    let n = tables.len() as f64;
    estimates.iter_mut().for_each(|e| *e /= n);
    let ci = quantile_ci(&estimates, alpha)?;
    Ok(StateAverageBias {
        estimates,
        ci,
        states: tables.len(),
    })
}

/// Writes `state_<i>/design.csv` and `state_<i>/outputs.csv` (plus sidecar) for every table.
pub fn write_state_tables(dir: &Path, tables: &[OutputTable], kpi: &str, root: &RandomStream) -> Result<()> {
    for (i, t) in tables.iter().enumerate() {
        let id = t.state_id.unwrap_or(i);
        let sub = dir.join(format!("state_{id}"));
        std::fs::create_dir_all(&sub)?;
        t.design.write_csv(&sub.join("design.csv"))?;
        let branch = root.derive_path(&[id as u64, 1]);
        t.write(&sub, &t.sidecar(kpi, &branch, StreamMode::Independent))?;
    }
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}
