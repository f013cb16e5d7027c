//! Contact center with two contact classes, three expert groups,
//! nonhomogeneous Poisson arrivals, copula-coupled patience and handle times
//! and two routing subprocesses, run as a digital twin over 30-minute epochs.

mod config;
mod sim;

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use config::{CenterConfig, GammaSpec, RoutingRule, EXPERT_GROUPS, SHARED_GROUP};
pub use sim::{
    routing_features, simulate_epoch, true_routing, CenterSnapshot, CenterState, Contact, EpochOutcome, EventKind,
    EventRecord, Expert, RoutingDecision, Service, SimLog, Trigger, ARRIVALS, PATIENCE_HANDLE, ROUTING_CONTACT,
    ROUTING_EXPERT, SLOT_LABELS,
};

use crate::analysis::{bagged_importance, naive_t_interval, quantile_ci, BagWeighting, ImportanceReport, Interval};
use crate::error::Result;
use crate::harness::{run_true_baseline, OutputTable};
use crate::model::SimulationModel;
use crate::plot;
use crate::resample::{sample_instances, Family, Fitter, InstanceMatrix, JointGroup, ResampleMode, ResamplePlan};
use crate::stream::{RandomStream, StreamRng};
use crate::submodel::{FunctionSubmodel, Provenance, Record, Submodel, SubmodelInstance, TrainingDataset};
use crate::twin::{self, StateAverageBias, StateSnapshot, StateWeighting};

/// One epoch of the center, hot-started from the supplied snapshot (or from
/// an empty center at time 0).
#[derive(Debug, Clone)]
pub struct CenterModel {
    pub config: CenterConfig,
}

impl SimulationModel for CenterModel {
    type State = CenterSnapshot;

    fn num_submodels(&self) -> usize {
        SLOT_LABELS.len()
    }

    fn kpi_name(&self) -> &str {
        "class2_mean_wait"
    }

    fn replicate(&self, instances: &[&SubmodelInstance], state: Option<&CenterSnapshot>, rng: &mut StreamRng) -> Result<f64> {
        let stream = RandomStream::root(rng.random());
        match state {
            Some(s) => Ok(simulate_epoch(&self.config, instances, s, &stream)?.kpi),
            None => Ok(simulate_epoch(&self.config, instances, &empty_snapshot(&self.config), &stream)?.kpi),
        }
    }
}

pub fn empty_snapshot(config: &CenterConfig) -> CenterSnapshot {
    StateSnapshot {
        state_id: 0,
        clock: 0.0,
        payload: CenterState::empty(config),
        observed_kpi: None,
    }
}

fn routing_truth(slot: usize, trigger: Trigger, rule: RoutingRule) -> SubmodelInstance {
    let f = FunctionSubmodel::deterministic(SLOT_LABELS[slot], move |x| match true_routing(trigger, x, &rule) {
        Ok(a) => {
            let mut p = vec![0.0; 2];
            p[a] = 1.0;
            p
        }
        Err(_) => vec![0.0; 2],
    });
    SubmodelInstance::new(slot, 0, Provenance::True, Submodel::Function(f))
}

/// The data-generating subprocesses in slot order.
pub fn true_instances(config: &CenterConfig) -> Vec<SubmodelInstance> {
    let mut v: Vec<SubmodelInstance> = (0..2)
        .map(|c| SubmodelInstance::new(ARRIVALS + c, 0, Provenance::True, Submodel::PiecewiseRate(config.arrival_rate(c))))
        .collect();
    v.extend((0..2).map(|c| {
        SubmodelInstance::new(PATIENCE_HANDLE + c, 0, Provenance::True, Submodel::Copula(config.copula(c)))
    }));
    v.push(routing_truth(ROUTING_CONTACT, Trigger::ContactTriggered, config.routing));
    v.push(routing_truth(ROUTING_EXPERT, Trigger::ExpertTriggered, config.routing));
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayRecord {
    /// Observed state at the start of every epoch, with the epoch's realised KPI.
    pub snapshots: Vec<CenterSnapshot>,
    pub log: SimLog,
    pub end: CenterSnapshot,
}

/// Simulates a whole day from an empty center; epoch `e` uses `stream.derive(e)`.
pub fn simulate_day(config: &CenterConfig, instances: &[&SubmodelInstance], stream: &RandomStream) -> Result<DayRecord> {
    let mut current = empty_snapshot(config);
    let mut snapshots = Vec::with_capacity(config.epochs());
    let mut log = SimLog::default();
    for e in 0..config.epochs() {
        let out = simulate_epoch(config, instances, &current, &stream.derive(e as u64))?;
        snapshots.push(StateSnapshot {
            state_id: e,
            clock: current.clock,
            payload: current.payload.observed(),
            observed_kpi: Some(out.kpi),
        });
        log.extend(out.log);
        current = out.end;
    }
    Ok(DayRecord {
        snapshots,
        log,
        end: current,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TwinMode {
    /// Bootstrap refits of maximum-likelihood estimates.
    Frequentist,
    /// Posterior draws: conjugate arrival rates, normal-approximation copulas
    /// and Laplace-approximated logistic routing.
    Bayesian,
}

/// Training sets in slot order.
pub fn collect_training(log: &SimLog) -> Vec<TrainingDataset> {
    let mut out: Vec<TrainingDataset> = (0..2).map(|c| TrainingDataset::scalars(ARRIVALS + c, &log.arrivals[c])).collect();
    out.extend((0..2).map(|c| {
        TrainingDataset::new(
            PATIENCE_HANDLE + c,
            log.pairs[c].iter().map(|p| Record::output(p.to_vec())).collect(),
        )
    }));
    for (slot, trigger) in [(ROUTING_CONTACT, Trigger::ContactTriggered), (ROUTING_EXPERT, Trigger::ExpertTriggered)] {
        let records = log
            .routing
            .iter()
            .filter(|d| d.trigger == trigger)
            .map(|d| Record::pair(d.features.clone(), vec![d.action as f64]))
            .collect();
        out.push(TrainingDataset::new(slot, records));
    }
    out
}

/// Fitters in slot order. Arrival exposure is the observed time per rate piece.
pub fn fitters(config: &CenterConfig, mode: TwinMode, days: usize) -> Vec<Fitter> {
    let arrivals = Family::PiecewiseRateMle {
        period: config.period_minutes,
        periods: config.periods(),
        exposure: config.period_minutes * days as f64,
    };
    let routing = match mode {
        TwinMode::Frequentist => Family::LogisticMle { classes: 2 },
        TwinMode::Bayesian => Family::LogisticLaplace { classes: 2 },
    };
    vec![
        Fitter::new(0, arrivals.clone()),
        Fitter::new(1, arrivals),
        Fitter::new(2, Family::GaussianCopula),
        Fitter::new(3, Family::GaussianCopula),
        Fitter::new(4, routing.clone()),
        Fitter::new(5, routing),
    ]
}

pub fn resample_plan(mode: TwinMode, instances: usize) -> ResamplePlan {
    let groups = match mode {
        TwinMode::Frequentist => vec![
            JointGroup::single(0),
            JointGroup::single(1),
            JointGroup::single(2),
            JointGroup::single(3),
            JointGroup::single(4).with_mode(ResampleMode::BootstrapPaired),
            JointGroup::single(5).with_mode(ResampleMode::BootstrapPaired),
        ],
        TwinMode::Bayesian => vec![
            JointGroup::single(0).with_mode(ResampleMode::PosteriorExactConjugate),
            JointGroup::single(1).with_mode(ResampleMode::PosteriorExactConjugate),
            JointGroup::single(2),
            JointGroup::single(3),
            JointGroup::single(4),
            JointGroup::single(5),
        ],
    };
    ResamplePlan {
        mode: match mode {
            TwinMode::Frequentist => ResampleMode::BootstrapIid,
            TwinMode::Bayesian => ResampleMode::PosteriorNormalApprox,
        },
        instances,
        groups,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwinSettings {
    pub instances: usize,
    pub stacks: usize,
    pub replications: usize,
    pub no_su_replications: usize,
    pub truth_replications: usize,
    pub trees: usize,
    pub alpha: f64,
}

impl Default for TwinSettings {
    fn default() -> Self {
        Self {
            instances: 5,
            stacks: 2,
            replications: 100,
            no_su_replications: 100,
            truth_replications: 1000,
            trees: 40,
            alpha: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: usize,
    pub observed: f64,
    pub truth_mean: f64,
    pub truth_se: f64,
    /// Quantile interval over the state's stacked configuration means.
    pub su: Interval,
    /// t-interval of the point-estimated model.
    pub no_su: Interval,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TwinResult {
    pub mode: TwinMode,
    pub seed: u64,
    pub settings: TwinSettings,
    pub epochs: Vec<EpochSummary>,
    pub state_importance: Vec<ImportanceReport>,
    pub aggregate: ImportanceReport,
    pub bias: StateAverageBias,
    pub tables: Vec<OutputTable>,
    pub day: DayRecord,
}

impl TwinResult {
    /// Epochs whose SU interval is at least as wide as the no-SU interval.
    pub fn wider_epochs(&self) -> usize {
        self.epochs.iter().filter(|e| e.su.width() >= e.no_su.width()).count()
    }
}

/// The full twin workflow on one simulated ground-truth day.
///
/// Below `RandomStream::root(seed)`: true day `(0)`, instance sampling `(1)`,
/// per-state experiments `(2)`, no-SU runs `(3, i)`, truth runs `(4, i)`,
/// bagging `(5, i)`.
pub fn run_twin_experiment(mode: TwinMode, config: &CenterConfig, settings: &TwinSettings, seed: u64) -> Result<TwinResult> {
    config.validate()?;
    let root = RandomStream::root(seed);
    let truth = true_instances(config);
    let truth_refs: Vec<&SubmodelInstance> = truth.iter().collect();
    let day = simulate_day(config, &truth_refs, &root.derive(0))?;
    let data = collect_training(&day.log);
    let fits = fitters(config, mode, 1);
    let instances: InstanceMatrix =
        sample_instances(&resample_plan(mode, settings.instances), &fits, &data, &root.derive(1))?;
    let point: Vec<SubmodelInstance> = fits.iter().zip(&data).map(|(f, d)| f.fit(d)).collect::<Result<_>>()?;

    let model = CenterModel { config: config.clone() };
    let tables = twin::per_state_experiment(&model, &instances, &day.snapshots, settings.stacks, settings.replications, &root.derive(2))?;

    let mut epochs = Vec::with_capacity(tables.len());
    let mut state_importance = Vec::with_capacity(tables.len());
    for (state, table) in day.snapshots.iter().zip(&tables) {
        let i = state.state_id as u64;
        let no_su = run_true_baseline(&model, &point, settings.no_su_replications, Some(state), &root.derive_path(&[3, i]))?;
        let truth_run = run_true_baseline(&model, &truth, settings.truth_replications, Some(state), &root.derive_path(&[4, i]))?;
        epochs.push(EpochSummary {
            epoch: state.state_id,
            observed: state.observed_kpi.unwrap_or(f64::NAN),
            truth_mean: truth_run.grand_mean,
            truth_se: truth_run.standard_error(),
            su: quantile_ci(&table.stacked_means(), settings.alpha)?,
            no_su: naive_t_interval(&no_su.outputs[0], settings.alpha)?,
        });
        state_importance.push(bagged_importance(table, settings.trees, BagWeighting::Uniform, &root.derive_path(&[5, i]))?);
    }
    let aggregate = twin::aggregate_importance(&state_importance, StateWeighting::AvgTssWeighted)?;
    let observed: Vec<Option<f64>> = day.snapshots.iter().map(|s| s.observed_kpi).collect();
    let bias = twin::state_average_bias(&tables, &observed, settings.alpha)?;
    Ok(TwinResult {
        mode,
        seed,
        settings: settings.clone(),
        epochs,
        state_importance,
        aggregate,
        bias,
        tables,
        day,
    })
}

/// `epoch,observed,truth_mean,truth_se,su_lower,su_upper,no_su_lower,no_su_upper`, epochs 1-based.
pub fn epochs_csv(epochs: &[EpochSummary]) -> String {
    let mut out = String::from("epoch,observed,truth_mean,truth_se,su_lower,su_upper,no_su_lower,no_su_upper\n");
    for e in epochs {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            e.epoch + 1,
            e.observed,
            e.truth_mean,
            e.truth_se,
            e.su.lower,
            e.su.upper,
            e.no_su.lower,
            e.no_su.upper
        );
    }
    out
}

/// `submodel,score,splits` for an importance report.
pub fn importance_csv(report: &ImportanceReport, labels: &[&str]) -> String {
    let mut out = String::from("submodel,score,splits\n");
    for (l, label) in labels.iter().enumerate() {
        let _ = writeln!(out, "{},{},{}", label, report.per_submodel[l], report.split_counts[l]);
    }
    out
}

/// Writes every artifact of a twin run into `dir`.
pub fn write_twin(dir: &Path, config: &CenterConfig, result: &TwinResult) -> Result<()> {
    let root = RandomStream::root(result.seed).derive(2);
    twin::write_state_tables(dir, &result.tables, "class2_mean_wait", &root)?;
    twin::write_json(&dir.join("config.json"), config)?;
    twin::write_json(&dir.join("snapshots.json"), &result.day.snapshots)?;
    std::fs::write(dir.join("events.csv"), result.day.log.events_csv())?;
    std::fs::write(dir.join("epochs.csv"), epochs_csv(&result.epochs))?;
    twin::write_json(&dir.join("epochs.json"), &result.epochs)?;
    twin::write_json(&dir.join("aggregate_importance.json"), &result.aggregate)?;
    twin::write_json(&dir.join("state_importance.json"), &result.state_importance)?;
    std::fs::write(dir.join("importance.csv"), importance_csv(&result.aggregate, &SLOT_LABELS))?;
    twin::write_json(&dir.join("state_average_bias.json"), &result.bias)?;

    let su: Vec<(f64, f64)> = result.epochs.iter().map(|e| (e.su.lower, e.su.upper)).collect();
    let no_su: Vec<(f64, f64)> = result.epochs.iter().map(|e| (e.no_su.lower, e.no_su.upper)).collect();
    let truth: Vec<Option<f64>> = result.epochs.iter().map(|e| Some(e.truth_mean)).collect();
    let svg = plot::whisker_chart(
        "Class-2 mean wait per epoch",
        &[("with SU", "#c0392b", su), ("without SU", "#2471a3", no_su)],
        &truth,
    );
    std::fs::write(dir.join("epoch_intervals.svg"), svg)?;
    let labels: Vec<String> = SLOT_LABELS.iter().map(|s| s.to_string()).collect();
    std::fs::write(
        dir.join("importance.svg"),
        plot::bar_chart("Aggregate submodel importance", &labels, &result.aggregate.per_submodel),
    )?;
    Ok(())
}
