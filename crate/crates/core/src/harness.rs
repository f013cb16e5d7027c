//! Running replications over a design and collecting the output table.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::DesignMatrix;
use crate::error::{Error, Result};
use crate::model::SimulationModel;
use crate::numeric;
use crate::resample::InstanceMatrix;
use crate::stream::RandomStream;
use crate::submodel::SubmodelInstance;

/// How replication streams are assigned to configurations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StreamMode {
    /// Replication `j` of row `b'` uses the stream at `(b', j)`.
    #[default]
    Independent,
    /// Replication `j` uses the stream at `(j)` in every row.
    Common,
}

/// KPI replications per configuration.
///
/// Row `b'` holds `n * multiplicity[b']` replications, so merged design rows
/// keep the total replication budget of the stacked design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputTable {
    pub design: DesignMatrix,
    pub outputs: Vec<Vec<f64>>,
    pub config_means: Vec<f64>,
    pub grand_mean: f64,
    /// Replications per unit of multiplicity.
    pub replications: usize,
    pub state_id: Option<usize>,
}

/// Metadata written next to `outputs.csv`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableSidecar {
    pub kpi: String,
    pub root_seed: u64,
    pub root_path: Vec<u64>,
    pub replications: usize,
    pub streams: StreamMode,
    pub state_id: Option<usize>,
    pub configurations: usize,
    pub stacked_configurations: usize,
    pub instances: usize,
    pub stacks: usize,
    pub multiplicity: Vec<usize>,
    pub grand_mean: f64,
}

impl OutputTable {
    /// Builds a table from raw outputs, computing the means.
    pub fn new(design: DesignMatrix, outputs: Vec<Vec<f64>>, replications: usize, state_id: Option<usize>) -> Result<Self> {
        if outputs.len() != design.rows() {
            return Err(Error::InvalidArgument(format!(
                "{} output rows for a design with {} rows",
                outputs.len(),
                design.rows()
            )));
        }
        if outputs.iter().any(Vec::is_empty) {
            return Err(Error::InvalidArgument("every configuration needs at least one output".into()));
        }
        let config_means = outputs.iter().map(|r| numeric::mean(r)).collect();
        let total: usize = outputs.iter().map(Vec::len).sum();
        let grand_mean = outputs.iter().flatten().sum::<f64>() / total as f64;
        Ok(Self {
            design,
            outputs,
            config_means,
            grand_mean,
            replications,
            state_id,
        })
    }

    pub fn rows(&self) -> usize {
        self.outputs.len()
    }

    pub fn total_outputs(&self) -> usize {
        self.outputs.iter().map(Vec::len).sum()
    }

    /// Sum of squares of all outputs around the grand mean.
    pub fn tss(&self) -> f64 {
        let g = self.grand_mean;
        self.outputs.iter().flatten().map(|y| (y - g) * (y - g)).sum()
    }

    /// Within-configuration sum of squares.
    pub fn within_ss(&self) -> f64 {
        self.outputs
            .iter()
            .zip(&self.config_means)
            .map(|(row, m)| row.iter().map(|y| (y - m) * (y - m)).sum::<f64>())
            .sum()
    }

    /// Standard error of the grand mean treating all outputs as iid.
    pub fn standard_error(&self) -> f64 {
        let all: Vec<f64> = self.outputs.iter().flatten().copied().collect();
        if all.len() < 2 {
            return 0.0;
        }
        (numeric::sample_variance(&all) / all.len() as f64).sqrt()
    }

    /// Configuration means expanded to the `B'` stacked rows.
    pub fn stacked_means(&self) -> Vec<f64> {
        self.design.origin.iter().map(|&o| self.config_means[o]).collect()
    }

    /// `config,replication,kpi` with 1-based indices.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("config,replication,kpi\n");
        for (i, row) in self.outputs.iter().enumerate() {
            for (j, y) in row.iter().enumerate() {
                let _ = writeln!(out, "{},{},{}", i + 1, j + 1, y);
            }
        }
        out
    }

    /// Parses `config,replication,kpi` rows (1-based configurations, any order)
    /// against `design`. Replications are kept in file order.
    pub fn from_csv(design: DesignMatrix, text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == "config,replication,kpi" => {}
            other => return Err(Error::InvalidArgument(format!("unexpected outputs header {other:?}"))),
        }
        let mut outputs: Vec<Vec<f64>> = vec![Vec::new(); design.rows()];
        for (n, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = || Error::InvalidArgument(format!("outputs row {}: `{line}`", n + 1));
            if fields.len() != 3 {
                return Err(bad());
            }
            let config: usize = fields[0].parse().map_err(|_| bad())?;
            let y: f64 = fields[2].parse().map_err(|_| bad())?;
            if config == 0 || config > design.rows() {
                return Err(bad());
            }
            outputs[config - 1].push(y);
        }
        let per_unit = outputs
            .iter()
            .zip(&design.multiplicity)
            .map(|(o, &m)| o.len() / m.max(1))
            .min()
            .unwrap_or(0);
        Self::new(design, outputs, per_unit, None)
    }

    pub fn sidecar(&self, kpi: &str, root: &RandomStream, streams: StreamMode) -> TableSidecar {
        TableSidecar {
            kpi: kpi.to_string(),
            root_seed: root.root_seed(),
            root_path: root.path().to_vec(),
            replications: self.replications,
            streams,
            state_id: self.state_id,
            configurations: self.rows(),
            stacked_configurations: self.design.stacked_rows(),
            instances: self.design.instances,
            stacks: self.design.stacks,
            multiplicity: self.design.multiplicity.clone(),
            grand_mean: self.grand_mean,
        }
    }

    /// Writes `outputs.csv` and `outputs.json` into `dir`.
    pub fn write(&self, dir: &Path, sidecar: &TableSidecar) -> Result<()> {
        std::fs::write(dir.join("outputs.csv"), self.to_csv())?;
        std::fs::write(dir.join("outputs.json"), serde_json::to_string_pretty(sidecar)? + "\n")?;
        Ok(())
    }
}

/// Runs `n` replications (times the row multiplicity) at every design row.
pub fn run_experiment<M: SimulationModel>(
    model: &M,
    instances: &InstanceMatrix,
    design: &DesignMatrix,
    n: usize,
    state: Option<&M::State>,
    root: &RandomStream,
) -> Result<OutputTable> {
    run_experiment_with(model, instances, design, n, state, root, StreamMode::Independent)
}

pub fn run_experiment_with<M: SimulationModel>(
    model: &M,
    instances: &InstanceMatrix,
    design: &DesignMatrix,
    n: usize,
    state: Option<&M::State>,
    root: &RandomStream,
    streams: StreamMode,
) -> Result<OutputTable> {
    if n < 1 {
        return Err(Error::InvalidArgument("need at least one replication".into()));
    }
    let slots = model.num_submodels();
    if instances.len() != slots || design.submodels() != slots {
        return Err(Error::InvalidDesign(format!(
            "model has {slots} slots, instance matrix {} and design {}",
            instances.len(),
            design.submodels()
        )));
    }
    let mut rows: Vec<Vec<&SubmodelInstance>> = Vec::with_capacity(design.rows());
    for row in &design.entries {
        let vector = row
            .iter()
            .enumerate()
            .map(|(l, &b)| {
                instances[l]
                    .get(b)
                    .ok_or_else(|| Error::InvalidDesign(format!("instance {b} of slot {l} does not exist")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(vector);
    }
    let jobs: Vec<(usize, usize)> = design
        .multiplicity
        .iter()
        .enumerate()
        .flat_map(|(i, &m)| (0..n * m).map(move |j| (i, j)))
        .collect();
    let values = jobs
        .par_iter()
        .map(|&(i, j)| {
            let stream = match streams {
                StreamMode::Independent => root.derive_path(&[i as u64, j as u64]),
                StreamMode::Common => root.derive(j as u64),
            };
            model
                .replicate(&rows[i], state, &mut stream.rng())
                .map_err(|e| Error::ModelFailure {
                    config: i,
                    replication: j,
                    message: e.to_string(),
                })
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut outputs: Vec<Vec<f64>> = design.multiplicity.iter().map(|&m| Vec::with_capacity(n * m)).collect();
    for (&(i, _), y) in jobs.iter().zip(values) {
        outputs[i].push(y);
    }
    OutputTable::new(design.clone(), outputs, n, None)
}

/// `n` replications with the true subprocesses in every slot.
pub fn run_true_baseline<M: SimulationModel>(
    model: &M,
    true_instances: &[SubmodelInstance],
    n: usize,
    state: Option<&M::State>,
    root: &RandomStream,
) -> Result<OutputTable> {
    let instances: InstanceMatrix = true_instances.iter().map(|i| vec![i.clone()]).collect();
    let design = DesignMatrix {
        entries: vec![vec![0; true_instances.len()]],
        instances: 1,
        stacks: 1,
        multiplicity: vec![1],
        origin: vec![0],
    };
    run_experiment(model, &instances, &design, n, state, root)
}
