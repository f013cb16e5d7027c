//! Generating `B` plausible instances of every submodel, either by
//! refitting on bootstrap resamples or by drawing from a posterior.
//!
//! Submodels that share a dataset form a *joint group*. In bootstrap modes a
//! group's dataset is resampled once per instance index `b` and every member
//! is fitted on that same resample, so dependence between members survives.

mod fit;
mod posterior;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use fit::{gamma_mle, Family, Fitter};

use crate::error::{Error, Result};
use crate::stream::{RandomStream, StreamRng};
use crate::submodel::{Provenance, SubmodelInstance, TrainingDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResampleMode {
    /// Resample output-only records with replacement.
    BootstrapIid,
    /// Resample (input, output) records jointly with replacement.
    BootstrapPaired,
    /// Normal approximation around the MLE with inverse observed information.
    PosteriorNormalApprox,
    /// Exact conjugate posteriors under reference priors.
    PosteriorExactConjugate,
    /// `B` copies of the point estimate (no epistemic variation).
    PointEstimate,
}

impl ResampleMode {
    pub fn name(self) -> &'static str {
        match self {
            ResampleMode::BootstrapIid => "BootstrapIID",
            ResampleMode::BootstrapPaired => "BootstrapPaired",
            ResampleMode::PosteriorNormalApprox => "PosteriorNormalApprox",
            ResampleMode::PosteriorExactConjugate => "PosteriorExactConjugate",
            ResampleMode::PointEstimate => "PointEstimate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointGroup {
    /// Submodel slots fitted from this group's dataset.
    pub members: Vec<usize>,
    /// Overrides the plan-wide mode for this group.
    pub mode: Option<ResampleMode>,
}

impl JointGroup {
    pub fn new(members: Vec<usize>) -> Self {
        Self { members, mode: None }
    }

    pub fn single(member: usize) -> Self {
        Self::new(vec![member])
    }

    pub fn with_mode(mut self, mode: ResampleMode) -> Self {
        self.mode = Some(mode);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResamplePlan {
    pub mode: ResampleMode,
    /// Instances per submodel.
    pub instances: usize,
    pub groups: Vec<JointGroup>,
}

impl ResamplePlan {
    /// One group per submodel, all in `mode`.
    pub fn independent(mode: ResampleMode, instances: usize, submodels: usize) -> Self {
        Self {
            mode,
            instances,
            groups: (0..submodels).map(JointGroup::single).collect(),
        }
    }

    fn validate(&self, submodels: usize) -> Result<()> {
        if self.instances < 2 {
            return Err(Error::InvalidPlan("need at least two instances per submodel".into()));
        }
        let mut seen = vec![false; submodels];
        for g in &self.groups {
            if g.members.is_empty() {
                return Err(Error::InvalidPlan("empty joint group".into()));
            }
            for &m in &g.members {
                if m >= submodels || seen[m] {
                    return Err(Error::InvalidPlan(format!(
                        "joint groups must partition 0..{submodels}; slot {m} is out of range or repeated"
                    )));
                }
                seen[m] = true;
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidPlan(format!("slot {missing} is in no joint group")));
        }
        Ok(())
    }
}

/// `[L][B]` matrix of instances; `matrix[l][b].instance_id == b`.
pub type InstanceMatrix = Vec<Vec<SubmodelInstance>>;

/// Indices of a with-replacement resample of `m` records.
pub fn bootstrap_indices(m: usize, rng: &mut StreamRng) -> Vec<usize> {
    (0..m).map(|_| rng.random_range(0..m)).collect()
}

/// Same-size resample of whole records, drawn uniformly with replacement.
pub fn bootstrap_dataset(data: &TrainingDataset, rng: &mut StreamRng) -> Result<TrainingDataset> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let idx = bootstrap_indices(data.len(), rng);
    Ok(TrainingDataset::new(
        data.submodel_id,
        idx.into_iter().map(|i| data.records[i].clone()).collect(),
    ))
}

/// Point estimate on the original data.
pub fn fit(fitter: &Fitter, data: &TrainingDataset) -> Result<SubmodelInstance> {
    fitter.fit(data)
}

/// Produces the `[L][B]` instance matrix described by `plan`.
///
/// `fitters[l]` must describe slot `l`, and `datasets[g]` is the training
/// data of `plan.groups[g]`. Instance `b` of group `g` depends only on the
/// stream at `(g, b)`.
pub fn sample_instances(
    plan: &ResamplePlan,
    fitters: &[Fitter],
    datasets: &[TrainingDataset],
    stream: &RandomStream,
) -> Result<InstanceMatrix> {
    let slots = fitters.len();
    plan.validate(slots)?;
    if let Some((l, f)) = fitters.iter().enumerate().find(|(l, f)| f.submodel_id != *l) {
        return Err(Error::InvalidPlan(format!(
            "fitter at position {l} describes slot {}",
            f.submodel_id
        )));
    }
    if datasets.len() != plan.groups.len() {
        return Err(Error::InvalidPlan(format!(
            "{} datasets for {} joint groups",
            datasets.len(),
            plan.groups.len()
        )));
    }

    let mut matrix: Vec<Option<Vec<SubmodelInstance>>> = vec![None; slots];
    for (g, (group, data)) in plan.groups.iter().zip(datasets).enumerate() {
        let mode = group.mode.unwrap_or(plan.mode);
        let members: Vec<&Fitter> = group.members.iter().map(|&m| &fitters[m]).collect();
        let group_stream = stream.derive(g as u64);
        let per_b: Vec<Vec<SubmodelInstance>> = match mode {
            ResampleMode::BootstrapIid | ResampleMode::BootstrapPaired => {
                if mode == ResampleMode::BootstrapIid && data.has_inputs() {
                    return Err(Error::IncompatibleMode {
                        mode: mode.name(),
                        family: members[0].family.name(),
                    });
                }
                (0..plan.instances)
                    .into_par_iter()
                    .map(|b| {
                        let s = group_stream.derive(b as u64);
                        let resample = bootstrap_dataset(data, &mut s.rng())?;
                        members
                            .iter()
                            .map(|f| {
                                let mut inst = f.fit(&resample)?;
                                inst.instance_id = b;
                                inst.provenance = Provenance::Bootstrap(s.fingerprint());
                                Ok(inst)
                            })
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?
            }
            ResampleMode::PointEstimate => {
                let fitted: Vec<SubmodelInstance> = members.iter().map(|f| f.fit(data)).collect::<Result<_>>()?;
                (0..plan.instances)
                    .map(|b| {
                        fitted
                            .iter()
                            .map(|inst| {
                                let mut inst = inst.clone();
                                inst.instance_id = b;
                                inst
                            })
                            .collect()
                    })
                    .collect()
            }
            ResampleMode::PosteriorNormalApprox | ResampleMode::PosteriorExactConjugate => {
                let fitted = members
                    .iter()
                    .map(|f| f.fit_detailed(data))
                    .collect::<Result<Vec<_>>>()?;
                (0..plan.instances)
                    .into_par_iter()
                    .map(|b| {
                        let s = group_stream.derive(b as u64);
                        let mut rng = s.rng();
                        members
                            .iter()
                            .zip(&fitted)
                            .map(|(f, fitted)| {
                                let model = posterior::draw(fitted, f.family.name(), mode, &mut rng)?;
                                Ok(SubmodelInstance::new(
                                    f.submodel_id,
                                    b,
                                    Provenance::Posterior(s.fingerprint()),
                                    model,
                                ))
                            })
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?
            }
        };
        for (k, &slot) in group.members.iter().enumerate() {
            matrix[slot] = Some(per_b.iter().map(|row| row[k].clone()).collect());
        }
    }
    Ok(matrix.into_iter().map(|col| col.expect("validated partition")).collect())
}
