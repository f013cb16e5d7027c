//! Bias and variance over all `2^L` combinations of true and estimated submodels.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SimulationModel;
use crate::numeric;
use crate::stream::RandomStream;
use crate::submodel::SubmodelInstance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorialRow {
    /// Bit `l` set means slot `l` uses its estimate.
    pub mask: usize,
    pub estimated: Vec<bool>,
    /// Mean of the per-dataset KPI means minus the true mean.
    pub bias: f64,
    /// Sample variance of the per-dataset KPI means.
    pub variance: f64,
    /// Monte Carlo standard error of `bias`.
    pub standard_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorialStudyResult {
    pub true_mean: f64,
    pub datasets: usize,
    pub replications: usize,
    pub rows: Vec<FactorialRow>,
}

impl FactorialStudyResult {
    pub fn row(&self, mask: usize) -> &FactorialRow {
        &self.rows[mask]
    }
}

/// Runs the study.
///
/// `estimate(stream)` draws a fresh training set from `stream` and returns an
/// estimated instance for every slot. For mask `k` and dataset `r` the
/// training stream is `stream.derive_path(&[k, r, 0])` and replication `j`
/// uses `stream.derive_path(&[k, r, 1, j])`.
pub fn factorial_study<M, E>(
    model: &M,
    true_instances: &[SubmodelInstance],
    estimate: E,
    datasets: usize,
    replications: usize,
    true_mean: f64,
    stream: &RandomStream,
) -> Result<FactorialStudyResult>
where
    M: SimulationModel<State = ()>,
    E: Fn(&RandomStream) -> Result<Vec<SubmodelInstance>> + Sync,
{
    let l = model.num_submodels();
    if true_instances.len() != l {
        return Err(Error::InvalidArgument(format!("{} true instances for {l} slots", true_instances.len())));
    }
    if datasets < 2 || replications < 1 {
        return Err(Error::InvalidArgument("need at least two datasets and one replication".into()));
    }
    let masks = 1usize << l;
    let jobs: Vec<(usize, usize)> = (0..masks).flat_map(|k| (0..datasets).map(move |r| (k, r))).collect();
    let means = jobs
        .par_iter()
        .map(|&(k, r)| {
            let cell = stream.derive_path(&[k as u64, r as u64]);
            let estimated = if k == 0 { Vec::new() } else { estimate(&cell.derive(0))? };
            let vector: Vec<&SubmodelInstance> = (0..l)
                .map(|s| if k >> s & 1 == 1 { &estimated[s] } else { &true_instances[s] })
                .collect();
            let reps = cell.derive(1);
            let mut sum = 0.0;
            for j in 0..replications {
                sum += model.replicate(&vector, None, &mut reps.derive(j as u64).rng())?;
            }
            Ok(sum / replications as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    let rows = means
        .chunks(datasets)
        .enumerate()
        .map(|(k, ms)| {
            let variance = numeric::sample_variance(ms);
            FactorialRow {
                mask: k,
                estimated: (0..l).map(|s| k >> s & 1 == 1).collect(),
                bias: numeric::mean(ms) - true_mean,
                variance,
                standard_error: (variance / datasets as f64).sqrt(),
            }
        })
        .collect();
    Ok(FactorialStudyResult {
        true_mean,
        datasets,
        replications,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::NormalParams;
    use crate::model::FnModel;
    use crate::submodel::{Provenance, Submodel};

    fn normal(slot: usize, mean: f64) -> SubmodelInstance {
        SubmodelInstance::new(slot, 0, Provenance::True, Submodel::Normal(NormalParams { mean, sd: 1.0 }))
    }

    #[test]
    fn shifted_estimate_shows_up_as_bias() {
        let model = FnModel::new(2, "sum", |inst, rng| {
            Ok(inst[0].invoke_scalar(None, rng)? + inst[1].invoke_scalar(None, rng)?)
        });
        let truth = vec![normal(0, 0.0), normal(1, 0.0)];
        let res = factorial_study(
            &model,
            &truth,
            |_| Ok(vec![normal(0, 1.0), normal(1, 0.0)]),
            20,
            200,
            0.0,
            &RandomStream::root(3),
        )
        .unwrap();
        assert_eq!(res.rows.len(), 4);
        assert!(res.row(0).bias.abs() < 4.0 * res.row(0).standard_error.max(0.01));
        assert!((res.row(1).bias - 1.0).abs() < 0.1);
        assert!(res.row(2).bias.abs() < 0.1);
    }
}
