//! Benchmark with known truth: `Y = p(X1) + q(X2)`.
//!
//! `X1 ~ N(1, 0.5^2)`, `X2 ~ N(1, 2^2)`, `p(x) = x^7 + x^4 + 3x^3 + sin x + 4`
//! and `q(x) = x^3 + x^2 + 4x`. Slots are ordered `[X1, X2, p, q]`. The input
//! models are estimated by normal MLE and `p`, `q` by k-nearest neighbours.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    self, bagged_importance, naive_t_interval, quantile_ci, table_importance, BagWeighting, FactorialStudyResult,
    ImportanceReport, Interval,
};
use crate::design::stacked_design;
use crate::error::{Error, Result};
use crate::families::NormalParams;
use crate::harness::{run_experiment, OutputTable};
use crate::model::SimulationModel;
use crate::numeric;
use crate::resample::{sample_instances, Family, Fitter, JointGroup, ResampleMode, ResamplePlan};
use crate::stream::{RandomStream, StreamRng};
use crate::submodel::{FunctionSubmodel, Provenance, Record, Submodel, SubmodelInstance, TrainingDataset};

/// The published value of `E[Y]`.
pub const TRUE_MEAN: f64 = 49.13;

pub const LABELS: [&str; 4] = ["X1", "X2", "p", "q"];

pub fn p(x: f64) -> f64 {
    x.powi(7) + x.powi(4) + 3.0 * x.powi(3) + x.sin() + 4.0
}

pub fn q(x: f64) -> f64 {
    x.powi(3) + x.powi(2) + 4.0 * x
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub x1: NormalParams,
    pub x2: NormalParams,
    /// Neighbours used by the `p` and `q` regressors.
    pub knn_k: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            x1: NormalParams { mean: 1.0, sd: 0.5 },
            x2: NormalParams { mean: 1.0, sd: 2.0 },
            knn_k: 5,
        }
    }
}

/// Raw moment `E[X^k]` of `N(mu, sigma^2)`.
pub fn normal_moment(mu: f64, sigma: f64, k: u32) -> f64 {
    let (mut prev, mut cur) = (1.0, mu);
    if k == 0 {
        return 1.0;
    }
    for j in 2..=k {
        let next = mu * cur + (j - 1) as f64 * sigma * sigma * prev;
        prev = cur;
        cur = next;
    }
    cur
}

impl SyntheticSpec {
    /// `E[Y]` from Gaussian moments.
    pub fn analytic_mean(&self) -> f64 {
        let (m1, s1) = (self.x1.mean, self.x1.sd);
        let (m2, s2) = (self.x2.mean, self.x2.sd);
        let ep = normal_moment(m1, s1, 7) + normal_moment(m1, s1, 4) + 3.0 * normal_moment(m1, s1, 3)
            + m1.sin() * (-0.5 * s1 * s1).exp()
            + 4.0;
        let eq = normal_moment(m2, s2, 3) + normal_moment(m2, s2, 2) + 4.0 * m2;
        ep + eq
    }

    pub fn true_instances(&self) -> Vec<SubmodelInstance> {
        let truth = |slot, model| SubmodelInstance::new(slot, 0, Provenance::True, model);
        vec![
            truth(0, Submodel::Normal(self.x1)),
            truth(1, Submodel::Normal(self.x2)),
            truth(2, Submodel::Function(FunctionSubmodel::deterministic("p", |x| vec![p(x[0])]))),
            truth(3, Submodel::Function(FunctionSubmodel::deterministic("q", |x| vec![q(x[0])]))),
        ]
    }

    pub fn fitters(&self) -> Vec<Fitter> {
        vec![
            Fitter::new(0, Family::NormalMle),
            Fitter::new(1, Family::NormalMle),
            Fitter::new(2, Family::Knn { k: self.knn_k }),
            Fitter::new(3, Family::Knn { k: self.knn_k }),
        ]
    }
}

/// `Y = p(X1) + q(X2)` with every piece taken from the instance vector.
#[derive(Debug, Clone, Copy, Default)]
pub struct SyntheticModel;

impl SimulationModel for SyntheticModel {
    type State = ();

    fn num_submodels(&self) -> usize {
        4
    }

    fn kpi_name(&self) -> &str {
        "Y"
    }

    fn replicate(&self, inst: &[&SubmodelInstance], _: Option<&()>, rng: &mut StreamRng) -> Result<f64> {
        let x1 = inst[0].invoke_scalar(None, rng)?;
        let x2 = inst[1].invoke_scalar(None, rng)?;
        Ok(inst[2].invoke_scalar(Some(&[x1]), rng)? + inst[3].invoke_scalar(Some(&[x2]), rng)?)
    }
}

/// Observations of `(X1, p(X1), X2, q(X2), Y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticData {
    pub x1: Vec<f64>,
    pub px1: Vec<f64>,
    pub x2: Vec<f64>,
    pub qx2: Vec<f64>,
    pub y: Vec<f64>,
}

impl SyntheticData {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// All five columns as output-only records.
    pub fn joint(&self) -> TrainingDataset {
        TrainingDataset::new(
            0,
            (0..self.len())
                .map(|i| Record::output(vec![self.x1[i], self.px1[i], self.x2[i], self.qx2[i], self.y[i]]))
                .collect(),
        )
    }

    /// Per-slot datasets: `X1`, `X2` outputs and `(x, p(x))`, `(x, q(x))` pairs.
    pub fn slot_datasets(&self) -> Vec<TrainingDataset> {
        vec![
            TrainingDataset::scalars(0, &self.x1),
            TrainingDataset::scalars(1, &self.x2),
            TrainingDataset::scalar_pairs(2, &self.x1, &self.px1),
            TrainingDataset::scalar_pairs(3, &self.x2, &self.qx2),
        ]
    }
}

/// `m` draws from the true mechanisms.
pub fn generate_training(spec: &SyntheticSpec, m: usize, stream: &RandomStream) -> Result<SyntheticData> {
    if m == 0 {
        return Err(Error::InvalidArgument("training size must be at least 1".into()));
    }
    let mut rng = stream.rng();
    let mut d = SyntheticData {
        x1: Vec::with_capacity(m),
        px1: Vec::with_capacity(m),
        x2: Vec::with_capacity(m),
        qx2: Vec::with_capacity(m),
        y: Vec::with_capacity(m),
    };
    for _ in 0..m {
        let x1 = spec.x1.sample(&mut rng);
        let x2 = spec.x2.sample(&mut rng);
        d.x1.push(x1);
        d.px1.push(p(x1));
        d.x2.push(x2);
        d.qx2.push(q(x2));
        d.y.push(p(x1) + q(x2));
    }
    Ok(d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    NoEpistemic,
    InputOnly,
    FullSu,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::NoEpistemic, Scenario::InputOnly, Scenario::FullSu];

    pub fn label(self) -> &'static str {
        match self {
            Scenario::NoEpistemic => "no-epistemic",
            Scenario::InputOnly => "input-only",
            Scenario::FullSu => "full-su",
        }
    }

    /// Inputs resampled on their own, response pairs jointly; `InputOnly`
    /// keeps `p` and `q` at their point estimates.
    pub fn plan(self, instances: usize) -> ResamplePlan {
        let response = match self {
            Scenario::FullSu => ResampleMode::BootstrapPaired,
            _ => ResampleMode::PointEstimate,
        };
        ResamplePlan {
            mode: ResampleMode::BootstrapIid,
            instances,
            groups: vec![
                JointGroup::single(0),
                JointGroup::single(1),
                JointGroup::single(2).with_mode(response),
                JointGroup::single(3).with_mode(response),
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSettings {
    /// Training set size.
    pub m: usize,
    pub instances: usize,
    pub stacks: usize,
    pub replications: usize,
    pub alpha: f64,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        Self {
            m: 50,
            instances: 100,
            stacks: 1,
            replications: 50,
            alpha: 0.1,
        }
    }
}

/// One macro-replication's output table under `scenario`.
///
/// Streams below `stream`: training `(0)`, resampling `(1)`, design `(2)`,
/// replications `(3)`.
pub fn scenario_table(
    spec: &SyntheticSpec,
    scenario: Scenario,
    settings: &ExperimentSettings,
    stream: &RandomStream,
) -> Result<OutputTable> {
    let data = generate_training(spec, settings.m, &stream.derive(0))?;
    let fitters = spec.fitters();
    let model = SyntheticModel;
    match scenario {
        Scenario::NoEpistemic => {
            let fitted: Vec<SubmodelInstance> = fitters
                .iter()
                .zip(data.slot_datasets())
                .map(|(f, d)| f.fit(&d))
                .collect::<Result<_>>()?;
            crate::harness::run_true_baseline(&model, &fitted, settings.replications, None, &stream.derive(3))
        }
        _ => {
            let instances = sample_instances(
                &scenario.plan(settings.instances),
                &fitters,
                &data.slot_datasets(),
                &stream.derive(1),
            )?;
            let design = stacked_design(settings.instances, settings.stacks, 4, &stream.derive(2))?.deduplicate();
            run_experiment(&model, &instances, &design, settings.replications, None, &stream.derive(3))
        }
    }
}

/// Interval of one macro-replication: a t-interval for `NoEpistemic`,
/// otherwise quantiles of the stacked configuration means.
pub fn scenario_interval(scenario: Scenario, table: &OutputTable, alpha: f64) -> Result<Interval> {
    match scenario {
        Scenario::NoEpistemic => naive_t_interval(&table.outputs[0], alpha),
        _ => quantile_ci(&table.stacked_means(), alpha),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageSummary {
    pub scenario: Scenario,
    pub target: f64,
    /// Fraction of intervals containing `target`.
    pub coverage: f64,
    pub mean_width: f64,
    pub width_se: f64,
    pub intervals: Vec<Interval>,
}

/// Coverage of `target` over `macro_reps` macro-replications; macro `r` uses `stream.derive(r)`.
pub fn coverage_experiment(
    spec: &SyntheticSpec,
    scenario: Scenario,
    macro_reps: usize,
    settings: &ExperimentSettings,
    target: f64,
    stream: &RandomStream,
) -> Result<CoverageSummary> {
    if macro_reps < 2 {
        return Err(Error::InvalidArgument("need at least two macro-replications".into()));
    }
    let intervals = (0..macro_reps)
        .into_par_iter()
        .map(|r| {
            let table = scenario_table(spec, scenario, settings, &stream.derive(r as u64))?;
            scenario_interval(scenario, &table, settings.alpha)
        })
        .collect::<Result<Vec<_>>>()?;
    let widths: Vec<f64> = intervals.iter().map(Interval::width).collect();
    let covered = intervals.iter().filter(|ci| ci.contains(target)).count();
    Ok(CoverageSummary {
        scenario,
        target,
        coverage: covered as f64 / macro_reps as f64,
        mean_width: numeric::mean(&widths),
        width_se: (numeric::sample_variance(&widths) / macro_reps as f64).sqrt(),
        intervals,
    })
}

/// Single-tree and bagged importance for one `FullSu` macro-replication.
/// Bagging draws from `stream.derive(4)`.
pub fn importance_macro(
    spec: &SyntheticSpec,
    settings: &ExperimentSettings,
    trees: usize,
    weighting: BagWeighting,
    stream: &RandomStream,
) -> Result<(ImportanceReport, ImportanceReport)> {
    let table = scenario_table(spec, Scenario::FullSu, settings, stream)?;
    let single = table_importance(&table)?;
    let bagged = bagged_importance(&table, trees, weighting, &stream.derive(4))?;
    Ok((single, bagged))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VrfResult {
    pub single: Vec<Vec<f64>>,
    pub bagged: Vec<Vec<f64>>,
    /// `+inf` where the bagged scores never vary.
    pub vrf: Vec<f64>,
}

/// Importance-score variance across macro-replications, single tree vs bagged.
pub fn vrf_experiment(
    spec: &SyntheticSpec,
    macro_reps: usize,
    settings: &ExperimentSettings,
    trees: usize,
    stream: &RandomStream,
) -> Result<VrfResult> {
    let pairs = (0..macro_reps)
        .into_par_iter()
        .map(|r| importance_macro(spec, settings, trees, BagWeighting::Uniform, &stream.derive(r as u64)))
        .collect::<Result<Vec<_>>>()?;
    let single: Vec<Vec<f64>> = pairs.iter().map(|(s, _)| s.per_submodel.clone()).collect();
    let bagged: Vec<Vec<f64>> = pairs.iter().map(|(_, b)| b.per_submodel.clone()).collect();
    let vrf = analysis::vrf_unchecked(&single, &bagged)?;
    Ok(VrfResult { single, bagged, vrf })
}

/// All `2^4` true/estimated combinations with `datasets` fresh training sets of size `m`.
pub fn factorial(
    spec: &SyntheticSpec,
    datasets: usize,
    m: usize,
    replications: usize,
    stream: &RandomStream,
) -> Result<FactorialStudyResult> {
    let fitters = spec.fitters();
    analysis::factorial_study(
        &SyntheticModel,
        &spec.true_instances(),
        |s| {
            let data = generate_training(spec, m, s)?;
            fitters.iter().zip(data.slot_datasets()).map(|(f, d)| f.fit(&d)).collect()
        },
        datasets,
        replications,
        spec.analytic_mean(),
        stream,
    )
}

pub fn coverage_csv(rows: &[CoverageSummary]) -> String {
    let mut out = String::from("scenario,coverage,mean_width,width_se\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.scenario.label(), r.coverage, r.mean_width, r.width_se);
    }
    out
}

/// One row per combination; the four flag columns are 1 for a true and 0 for an estimated submodel.
pub fn factorial_csv(result: &FactorialStudyResult) -> String {
    let mut out = String::from("mask,x1,x2,p,q,bias,variance,standard_error\n");
    for r in &result.rows {
        let flags: Vec<&str> = r.estimated.iter().map(|&e| if e { "0" } else { "1" }).collect();
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.mask,
            flags.join(","),
            r.bias,
            r.variance,
            r.standard_error
        );
    }
    out
}

pub fn vrf_csv(result: &VrfResult) -> String {
    let mut out = String::from("submodel,vrf\n");
    for (label, v) in LABELS.iter().zip(&result.vrf) {
        let _ = writeln!(out, "{label},{v}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_of_standard_normal() {
        assert_eq!(normal_moment(0.0, 1.0, 4), 3.0);
        assert_eq!(normal_moment(0.0, 1.0, 6), 15.0);
        assert_eq!(normal_moment(2.0, 0.0, 3), 8.0);
    }

    #[test]
    fn analytic_mean_near_published_value() {
        assert!((SyntheticSpec::default().analytic_mean() - TRUE_MEAN).abs() < 0.01);
    }

    #[test]
    fn training_of_size_one() {
        let d = generate_training(&SyntheticSpec::default(), 1, &RandomStream::root(1)).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.y[0], d.px1[0] + d.qx2[0]);
        assert!(generate_training(&SyntheticSpec::default(), 0, &RandomStream::root(1)).is_err());
    }

    #[test]
    fn true_model_reproduces_mechanism() {
        let spec = SyntheticSpec::default();
        let truth = spec.true_instances();
        let refs: Vec<&SubmodelInstance> = truth.iter().collect();
        let s = RandomStream::root(3);
        let y = SyntheticModel.replicate(&refs, None, &mut s.rng()).unwrap();
        let mut rng = s.rng();
        let x1 = spec.x1.sample(&mut rng);
        let x2 = spec.x2.sample(&mut rng);
        assert_eq!(y, p(x1) + q(x2));
    }

    #[test]
    fn plans_cover_every_slot() {
        for s in Scenario::ALL {
            let plan = s.plan(3);
            assert_eq!(plan.groups.len(), 4);
        }
    }
}
