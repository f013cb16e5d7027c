//! Event-driven simulation of one epoch.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::config::{CenterConfig, RoutingRule, SHARED_GROUP};
use crate::error::{Error, Result};
use crate::stream::{RandomStream, StreamRng};
use crate::submodel::{sample_discrete, Submodel, SubmodelInstance};
use crate::twin::StateSnapshot;

/// Slot order of the instance vector.
pub const SLOT_LABELS: [&str; 6] = [
    "arrivals_1",
    "arrivals_2",
    "patience_handle_1",
    "patience_handle_2",
    "routing_contact",
    "routing_expert",
];
pub const ARRIVALS: usize = 0;
pub const PATIENCE_HANDLE: usize = 2;
pub const ROUTING_CONTACT: usize = 4;
pub const ROUTING_EXPERT: usize = 5;

const REJECTION_TRIES: usize = 10_000;

/// A waiting contact. Latent times are `None` in observed snapshots and get
/// drawn on hot start, conditioned on the time already waited.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contact {
    pub id: u64,
    pub class: usize,
    pub arrival: f64,
    #[serde(default)]
    pub patience: Option<f64>,
    #[serde(default)]
    pub handle: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Service {
    pub contact: u64,
    pub class: usize,
    pub start: f64,
    #[serde(default)]
    pub end: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expert {
    pub group: usize,
    pub idle_since: f64,
    pub serving: Option<Service>,
}

/// Queues (oldest first), expert status and the next contact id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterState {
    pub queues: [Vec<Contact>; 2],
    pub experts: Vec<Expert>,
    pub next_id: u64,
}

impl CenterState {
    /// Empty queues, all experts idle since time 0.
    pub fn empty(config: &CenterConfig) -> Self {
        Self {
            queues: [Vec::new(), Vec::new()],
            experts: (0..config.experts())
                .map(|e| Expert {
                    group: config.expert_group(e),
                    idle_since: 0.0,
                    serving: None,
                })
                .collect(),
            next_id: 0,
        }
    }

    /// Drops every latent quantity the real system would not reveal.
    pub fn observed(&self) -> Self {
        let mut s = self.clone();
        for c in s.queues.iter_mut().flatten() {
            c.patience = None;
            c.handle = None;
        }
        for e in &mut s.experts {
            if let Some(sv) = &mut e.serving {
                sv.end = None;
            }
        }
        s
    }

    pub fn in_system(&self) -> usize {
        self.queues.iter().map(Vec::len).sum::<usize>() + self.experts.iter().filter(|e| e.serving.is_some()).count()
    }
}

pub type CenterSnapshot = StateSnapshot<CenterState>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Trigger {
    ContactTriggered,
    ExpertTriggered,
}

/// A routing choice between two feasible actions.
///
/// Contact-triggered actions: 0 = dedicated group, 1 = shared group.
/// Expert-triggered actions: the contact class taken.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub trigger: Trigger,
    pub time: f64,
    pub features: Vec<f64>,
    pub action: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Arrival,
    Start,
    Abandon,
    Complete,
}

impl EventKind {
    fn label(self) -> &'static str {
        match self {
            EventKind::Arrival => "arrival",
            EventKind::Start => "start",
            EventKind::Abandon => "abandon",
            EventKind::Complete => "complete",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub time: f64,
    pub kind: EventKind,
    pub class: usize,
    pub contact: u64,
    pub expert: Option<usize>,
}

/// Everything recorded while simulating.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimLog {
    pub arrivals: [Vec<f64>; 2],
    /// Latent (patience, handle) of every arrival, per class.
    pub pairs: [Vec<[f64; 2]>; 2],
    pub routing: Vec<RoutingDecision>,
    pub events: Vec<EventRecord>,
    pub abandoned: usize,
    pub completed: usize,
}

impl SimLog {
    pub fn extend(&mut self, other: SimLog) {
        for c in 0..2 {
            self.arrivals[c].extend(other.arrivals[c].iter());
            self.pairs[c].extend(other.pairs[c].iter());
        }
        self.routing.extend(other.routing);
        self.events.extend(other.events);
        self.abandoned += other.abandoned;
        self.completed += other.completed;
    }

    pub fn arrived(&self) -> usize {
        self.arrivals[0].len() + self.arrivals[1].len()
    }

    /// `time,event,class,contact,expert` with 1-based class and expert.
    pub fn events_csv(&self) -> String {
        let mut out = String::from("time,event,class,contact,expert\n");
        for e in &self.events {
            let expert = e.expert.map(|x| (x + 1).to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{},{}", e.time, e.kind.label(), e.class + 1, e.contact, expert);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochOutcome {
    /// Mean wait of class-2 contacts whose wait ended in the epoch; 0 if none did.
    pub kpi: f64,
    pub end: CenterSnapshot,
    pub log: SimLog,
}

/// Routing features: queue lengths, idle counts per group, head-of-queue
/// waits, one-hot period of day. Contact-triggered decisions append the
/// arriving contact's class.
pub fn routing_features(config: &CenterConfig, state: &CenterState, now: f64, class: Option<usize>) -> Vec<f64> {
    let mut f = Vec::with_capacity(8 + config.periods());
    for q in &state.queues {
        f.push(q.len() as f64);
    }
    for g in 0..3 {
        f.push(state.experts.iter().filter(|e| e.group == g && e.serving.is_none()).count() as f64);
    }
    for q in &state.queues {
        f.push(q.first().map_or(0.0, |c| now - c.arrival));
    }
    let piece = ((now / config.period_minutes).floor().max(0.0) as usize) % config.periods();
    f.extend((0..config.periods()).map(|h| if h == piece { 1.0 } else { 0.0 }));
    if let Some(c) = class {
        f.push(c as f64);
    }
    f
}

/// The reference rules, as an action index.
pub fn true_routing(trigger: Trigger, features: &[f64], rule: &RoutingRule) -> Result<usize> {
    match trigger {
        Trigger::ContactTriggered => {
            let class = *features.last().ok_or(Error::NoFeasibleAction)? as usize;
            let dedicated = features[2 + class] > 0.0;
            let shared = features[2 + SHARED_GROUP] > 0.0;
            let order = if rule.prefer_dedicated {
                [(dedicated, 0), (shared, 1)]
            } else {
                [(shared, 1), (dedicated, 0)]
            };
            order.iter().find(|(ok, _)| *ok).map(|&(_, a)| a).ok_or(Error::NoFeasibleAction)
        }
        Trigger::ExpertTriggered => {
            let p = rule.priority_class;
            if features[p] > 0.0 {
                Ok(p)
            } else if features[1 - p] > 0.0 {
                Ok(1 - p)
            } else {
                Err(Error::NoFeasibleAction)
            }
        }
    }
}

fn arrivals_in(inst: &SubmodelInstance, start: f64, end: f64, rng: &mut StreamRng) -> Result<Vec<f64>> {
    match &inst.model {
        Submodel::PiecewiseRate(r) => Ok(r.arrival_times(start, end, rng)),
        _ => {
            let mut ts: Vec<f64> = inst.invoke(None, rng)?.into_iter().filter(|&t| t >= start && t < end).collect();
            ts.sort_by(f64::total_cmp);
            Ok(ts)
        }
    }
}

fn pair_above(inst: &SubmodelInstance, lower: f64, rng: &mut StreamRng) -> Result<[f64; 2]> {
    if let Submodel::Copula(c) = &inst.model {
        return Ok(c.sample_first_above(lower, rng));
    }
    for _ in 0..REJECTION_TRIES {
        let v = inst.invoke(None, rng)?;
        if v.len() < 2 {
            return Err(Error::InvalidArgument("patience/handle submodel must return two values".into()));
        }
        if v[0] > lower || lower <= 0.0 {
            return Ok([v[0], v[1]]);
        }
    }
    Err(Error::InvalidSnapshot(format!("could not draw a patience above {lower}")))
}

fn handle_above(inst: &SubmodelInstance, lower: f64, rng: &mut StreamRng) -> Result<f64> {
    if let Submodel::Copula(c) = &inst.model {
        return Ok(c.marginals[1].sample_above(lower, rng));
    }
    for _ in 0..REJECTION_TRIES {
        let v = inst.invoke(None, rng)?;
        if v.len() >= 2 && (v[1] > lower || lower <= 0.0) {
            return Ok(v[1]);
        }
    }
    Err(Error::InvalidSnapshot(format!("could not draw a handle time above {lower}")))
}

struct Sim<'a> {
    config: &'a CenterConfig,
    instances: &'a [&'a SubmodelInstance],
    state: CenterState,
    routing_rng: StreamRng,
    waits: Vec<f64>,
    log: SimLog,
}

impl Sim<'_> {
    fn record_wait(&mut self, class: usize, wait: f64) {
        if class == 1 {
            self.waits.push(wait);
        }
    }

    fn route(&mut self, trigger: Trigger, features: Vec<f64>, now: f64) -> Result<usize> {
        let slot = match trigger {
            Trigger::ContactTriggered => ROUTING_CONTACT,
            Trigger::ExpertTriggered => ROUTING_EXPERT,
        };
        let probs = self.instances[slot].invoke(Some(&features), &mut self.routing_rng)?;
        if probs.len() != 2 || !probs.iter().all(|p| p.is_finite() && *p >= 0.0) || probs.iter().sum::<f64>() <= 0.0 {
            return Err(Error::NoFeasibleAction);
        }
        let action = sample_discrete(&probs, &mut self.routing_rng);
        self.log.routing.push(RoutingDecision {
            trigger,
            time: now,
            features,
            action,
        });
        Ok(action)
    }

    /// Longest-idle free expert of `group`; ties go to the lower index.
    fn idle_in(&self, group: usize) -> Option<usize> {
        self.state
            .experts
            .iter()
            .enumerate()
            .filter(|(_, e)| e.group == group && e.serving.is_none())
            .min_by(|a, b| a.1.idle_since.total_cmp(&b.1.idle_since).then(a.0.cmp(&b.0)))
            .map(|(i, _)| i)
    }

    fn start_service(&mut self, expert: usize, contact: Contact, now: f64) {
        self.record_wait(contact.class, now - contact.arrival);
        self.log.events.push(EventRecord {
            time: now,
            kind: EventKind::Start,
            class: contact.class,
            contact: contact.id,
            expert: Some(expert),
        });
        let handle = contact.handle.expect("latent times filled before the event loop");
        self.state.experts[expert].serving = Some(Service {
            contact: contact.id,
            class: contact.class,
            start: now,
            end: Some(now + handle),
        });
    }

    fn arrive(&mut self, contact: Contact, now: f64) -> Result<()> {
        let c = contact.class;
        self.log.events.push(EventRecord {
            time: now,
            kind: EventKind::Arrival,
            class: c,
            contact: contact.id,
            expert: None,
        });
        if !self.state.queues[c].is_empty() {
            self.state.queues[c].push(contact);
            return Ok(());
        }
        let dedicated = self.idle_in(c);
        let shared = self.idle_in(SHARED_GROUP);
        let expert = match (dedicated, shared) {
            (None, None) => {
                self.state.queues[c].push(contact);
                return Ok(());
            }
            (Some(e), None) | (None, Some(e)) => e,
            (Some(d), Some(s)) => {
                let features = routing_features(self.config, &self.state, now, Some(c));
                if self.route(Trigger::ContactTriggered, features, now)? == 0 {
                    d
                } else {
                    s
                }
            }
        };
        self.start_service(expert, contact, now);
        Ok(())
    }

    fn complete(&mut self, expert: usize, now: f64) -> Result<()> {
        let done = self.state.experts[expert].serving.take().expect("busy expert");
        self.log.completed += 1;
        self.log.events.push(EventRecord {
            time: now,
            kind: EventKind::Complete,
            class: done.class,
            contact: done.contact,
            expert: Some(expert),
        });
        self.state.experts[expert].idle_since = now;
        let group = self.state.experts[expert].group;
        let class = if group == SHARED_GROUP {
            match (self.state.queues[0].is_empty(), self.state.queues[1].is_empty()) {
                (true, true) => None,
                (false, true) => Some(0),
                (true, false) => Some(1),
                (false, false) => {
                    let features = routing_features(self.config, &self.state, now, None);
                    Some(self.route(Trigger::ExpertTriggered, features, now)?)
                }
            }
        } else if self.state.queues[group].is_empty() {
            None
        } else {
            Some(group)
        };
        if let Some(c) = class {
            let contact = self.state.queues[c].remove(0);
            self.start_service(expert, contact, now);
        }
        Ok(())
    }

    fn abandon(&mut self, class: usize, pos: usize, now: f64) {
        let contact = self.state.queues[class].remove(pos);
        self.record_wait(class, now - contact.arrival);
        self.log.abandoned += 1;
        self.log.events.push(EventRecord {
            time: now,
            kind: EventKind::Abandon,
            class,
            contact: contact.id,
            expert: None,
        });
    }
}

fn epoch_index(config: &CenterConfig, clock: f64) -> Result<usize> {
    let e = clock / config.epoch_minutes;
    let k = e.round();
    if (e - k).abs() > 1e-9 || k < 0.0 || k as usize >= config.epochs() {
        return Err(Error::InvalidSnapshot(format!("clock {clock} is not the start of an epoch")));
    }
    Ok(k as usize)
}

fn check_state(config: &CenterConfig, state: &CenterState, clock: f64) -> Result<()> {
    if state.experts.len() != config.experts() {
        return Err(Error::InvalidSnapshot(format!(
            "{} experts, configuration has {}",
            state.experts.len(),
            config.experts()
        )));
    }
    for (e, x) in state.experts.iter().enumerate() {
        if x.group != config.expert_group(e) {
            return Err(Error::InvalidSnapshot(format!("expert {e} is in the wrong group")));
        }
        if let Some(s) = &x.serving {
            if s.start > clock || s.end.is_some_and(|t| t < clock) {
                return Err(Error::InvalidSnapshot(format!("expert {e} has an inconsistent service")));
            }
        }
    }
    for (c, q) in state.queues.iter().enumerate() {
        for w in q.windows(2) {
            if w[1].arrival < w[0].arrival {
                return Err(Error::InvalidSnapshot(format!("queue {c} is not in arrival order")));
            }
        }
        for x in q {
            if x.class != c || x.arrival > clock || x.patience.is_some_and(|p| x.arrival + p < clock) {
                return Err(Error::InvalidSnapshot(format!("queued contact {} is inconsistent", x.id)));
            }
        }
    }
    Ok(())
}

/// Simulates the epoch starting at `start.clock`.
///
/// Below `stream`: class `c` arrivals `(c)`, class `c` patience/handle draws
/// `(2 + c)`, routing `(4)`, hot-start latent times `(5)`.
pub fn simulate_epoch(
    config: &CenterConfig,
    instances: &[&SubmodelInstance],
    start: &CenterSnapshot,
    stream: &RandomStream,
) -> Result<EpochOutcome> {
    if instances.len() != SLOT_LABELS.len() {
        return Err(Error::InvalidArgument(format!("{} instances for 6 slots", instances.len())));
    }
    let epoch = epoch_index(config, start.clock)?;
    let t0 = start.clock;
    let t1 = t0 + config.epoch_minutes;
    let mut state = start.payload.clone();
    check_state(config, &state, t0)?;

    let mut latent = stream.derive(5).rng();
    for c in 0..2 {
        for x in &mut state.queues[c] {
            if x.patience.is_none() || x.handle.is_none() {
                let [p, h] = pair_above(instances[PATIENCE_HANDLE + c], t0 - x.arrival, &mut latent)?;
                x.patience.get_or_insert(p);
                x.handle.get_or_insert(h);
            }
        }
    }
    for x in &mut state.experts {
        if let Some(s) = &mut x.serving {
            if s.end.is_none() {
                let h = handle_above(instances[PATIENCE_HANDLE + s.class], t0 - s.start, &mut latent)?;
                s.end = Some(s.start + h);
            }
        }
    }

    let mut pending: Vec<Contact> = Vec::new();
    let mut log = SimLog::default();
    for c in 0..2 {
        let times = arrivals_in(instances[ARRIVALS + c], t0, t1, &mut stream.derive(c as u64).rng())?;
        let mut draws = stream.derive(2 + c as u64).rng();
        for t in times {
            let [p, h] = pair_above(instances[PATIENCE_HANDLE + c], 0.0, &mut draws)?;
            log.arrivals[c].push(t);
            log.pairs[c].push([p, h]);
            pending.push(Contact {
                id: 0,
                class: c,
                arrival: t,
                patience: Some(p),
                handle: Some(h),
            });
        }
    }
    pending.sort_by(|a, b| a.arrival.total_cmp(&b.arrival).then(a.class.cmp(&b.class)));
    for x in &mut pending {
        x.id = state.next_id;
        state.next_id += 1;
    }

    let mut sim = Sim {
        config,
        instances,
        state,
        routing_rng: stream.derive(4).rng(),
        waits: Vec::new(),
        log,
    };
    let mut next = 0;
    loop {
        // (time, priority, sequence): completion < abandonment < arrival.
        let mut best: Option<(f64, u8, u64, usize, usize)> = None;
        let mut consider = |cand: (f64, u8, u64, usize, usize)| {
            let better = match best {
                None => true,
                Some(b) => cand.0.total_cmp(&b.0).then(cand.1.cmp(&b.1)).then(cand.2.cmp(&b.2)).is_lt(),
            };
            if better {
                best = Some(cand);
            }
        };
        for (e, x) in sim.state.experts.iter().enumerate() {
            if let Some(s) = &x.serving {
                consider((s.end.expect("filled"), 0, e as u64, e, 0));
            }
        }
        for (c, q) in sim.state.queues.iter().enumerate() {
            for (pos, x) in q.iter().enumerate() {
                consider((x.arrival + x.patience.expect("filled"), 1, x.id, c, pos));
            }
        }
        if let Some(x) = pending.get(next) {
            consider((x.arrival, 2, x.id, 0, 0));
        }
        let Some((t, kind, _, a, b)) = best else { break };
        if t >= t1 {
            break;
        }
        match kind {
            0 => sim.complete(a, t)?,
            1 => sim.abandon(a, b, t),
            _ => {
                let x = pending[next].clone();
                next += 1;
                sim.arrive(x, t)?;
            }
        }
    }

    let kpi = if sim.waits.is_empty() {
        0.0
    } else {
        sim.waits.iter().sum::<f64>() / sim.waits.len() as f64
    };
    Ok(EpochOutcome {
        kpi,
        end: StateSnapshot {
            state_id: epoch + 1,
            clock: t1,
            payload: sim.state,
            observed_kpi: None,
        },
        log: sim.log,
    })
}
