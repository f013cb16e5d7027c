use subq::contact_center::*;
use subq::families::GammaParams;
use subq::numeric::normal_scores_correlation;
use subq::submodel::FunctionSubmodel;
use subq::twin::StateSnapshot;
use subq::{Provenance, RandomStream, Submodel, SubmodelInstance, SubmodelKind};

fn refs(v: &[SubmodelInstance]) -> Vec<&SubmodelInstance> {
    v.iter().collect()
}

fn fixed_arrivals(slot: usize, times: Vec<f64>) -> SubmodelInstance {
    let f = FunctionSubmodel::new("fixed", SubmodelKind::UnconditionalStochastic, move |_, _| times.clone());
    SubmodelInstance::new(slot, 0, Provenance::True, Submodel::Function(f))
}

/// Erlang C mean wait, computed from the textbook sum.
fn erlang_c_wait(lambda: f64, mu: f64, c: u32) -> f64 {
    let a = lambda / mu;
    let fact = |k: u32| (1..=k).map(f64::from).product::<f64>();
    let head: f64 = (0..c).map(|k| a.powi(k as i32) / fact(k)).sum();
    let tail = a.powi(c as i32) / fact(c) * f64::from(c) / (f64::from(c) - a);
    tail / (head + tail) / (f64::from(c) * mu - lambda)
}

#[test]
fn erlang_c_limit() {
    // Class 2 only, served by its dedicated pair plus the shared pair: M/M/4.
    let hours = 100_000.0;
    let cfg = CenterConfig {
        period_minutes: 60.0 * hours,
        rates_per_hour: [vec![0.0], vec![3.0]],
        epoch_minutes: 60.0 * hours,
        patience: [GammaSpec { shape: 1.0, mean: 1e12 }; 2],
        handle: [GammaSpec { shape: 1.0, mean: 60.0 }; 2],
        rho: [0.0, 0.0],
        ..CenterConfig::default()
    };
    cfg.validate().unwrap();
    let truth = true_instances(&cfg);
    let out = simulate_epoch(&cfg, &refs(&truth), &empty_snapshot(&cfg), &RandomStream::root(5)).unwrap();
    let expected = erlang_c_wait(3.0 / 60.0, 1.0 / 60.0, 4);
    assert!((expected - 30.566).abs() < 1e-2);
    let rel = (out.kpi - expected).abs() / expected;
    assert!(rel < 0.05, "simulated {} vs Erlang C {expected}", out.kpi);
}

#[test]
fn nhpp_hourly_counts() {
    let cfg = CenterConfig::default();
    let rate = cfg.arrival_rate(1);
    let days = 10_000;
    let mut counts = vec![vec![0.0; days]; cfg.periods()];
    let s = RandomStream::root(8);
    for d in 0..days {
        for t in rate.arrival_times(0.0, cfg.horizon(), &mut s.derive(d as u64).rng()) {
            counts[(t / 60.0) as usize][d] += 1.0;
        }
    }
    for (h, c) in counts.iter().enumerate() {
        let lambda = cfg.rates_per_hour[1][h];
        let mean = c.iter().sum::<f64>() / days as f64;
        let var = c.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (days - 1) as f64;
        assert!((mean / lambda - 1.0).abs() < 0.01, "hour {h}: mean {mean} vs {lambda}");
        assert!((var / lambda - 1.0).abs() < 0.05, "hour {h}: variance {var} vs {lambda}");
    }
}

/// Kolmogorov-Smirnov statistic of a sample against a CDF.
fn ks(sample: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn copula_correlation_and_marginals() {
    let cfg = CenterConfig::default();
    let cop = cfg.copula(1);
    let mut rng = RandomStream::root(9).rng();
    let n = 100_000;
    let draws: Vec<[f64; 2]> = (0..n).map(|_| cop.sample(&mut rng)).collect();
    let mut p: Vec<f64> = draws.iter().map(|d| d[0]).collect();
    let mut h: Vec<f64> = draws.iter().map(|d| d[1]).collect();
    let r = normal_scores_correlation(&p, &h);
    assert!((r - cfg.rho[1]).abs() < 0.03, "normal-scores correlation {r}");
    let critical = 1.628 / (n as f64).sqrt();
    let pm: GammaParams = cfg.patience[1].params();
    let hm: GammaParams = cfg.handle[1].params();
    assert!(ks(&mut p, |x| pm.cdf(x)) < critical);
    assert!(ks(&mut h, |x| hm.cdf(x)) < critical);
}

#[test]
fn hot_start_matches_continuous_run() {
    let cfg = CenterConfig::default();
    let truth = true_instances(&cfg);
    let s = RandomStream::root(21);
    let day = simulate_day(&cfg, &refs(&truth), &s).unwrap();
    let mut snap = empty_snapshot(&cfg);
    for e in 0..6 {
        let out = simulate_epoch(&cfg, &refs(&truth), &snap, &s.derive(e)).unwrap();
        assert_eq!(out.kpi.to_bits(), day.snapshots[e as usize].observed_kpi.unwrap().to_bits());
        let json = serde_json::to_string(&out.end).unwrap();
        snap = serde_json::from_str(&json).unwrap();
        assert_eq!(snap, out.end);
    }
}

#[test]
fn day_conserves_contacts() {
    let cfg = CenterConfig::default();
    let truth = true_instances(&cfg);
    let day = simulate_day(&cfg, &refs(&truth), &RandomStream::root(3)).unwrap();
    let log = &day.log;
    assert_eq!(log.arrived(), log.completed + log.abandoned + day.end.payload.in_system());
    assert_eq!(day.snapshots.len(), 18);
    // Roughly the expected daily volume per class.
    for c in 0..2 {
        let expected: f64 = cfg.rates_per_hour[c].iter().sum();
        let got = log.arrivals[c].len() as f64;
        assert!((got - expected).abs() < 5.0 * expected.sqrt(), "class {c}: {got} arrivals");
    }
    assert_eq!(log.events.iter().filter(|e| e.kind == EventKind::Arrival).count(), log.arrived());
    // Logged actions are feasible under the logged features.
    for d in &log.routing {
        match d.trigger {
            Trigger::ContactTriggered => {
                let class = *d.features.last().unwrap() as usize;
                let group = if d.action == 0 { class } else { SHARED_GROUP };
                assert!(d.features[2 + group] > 0.0);
            }
            Trigger::ExpertTriggered => assert!(d.features[d.action] > 0.0),
        }
    }
}

#[test]
fn identical_seeds_identical_logs() {
    let cfg = CenterConfig::default();
    let truth = true_instances(&cfg);
    let a = simulate_day(&cfg, &refs(&truth), &RandomStream::root(4)).unwrap();
    let b = simulate_day(&cfg, &refs(&truth), &RandomStream::root(4)).unwrap();
    assert_eq!(a.log.events_csv(), b.log.events_csv());
}

#[test]
fn zero_rates_give_zero_kpi() {
    let cfg = CenterConfig {
        rates_per_hour: [vec![0.0; 9], vec![0.0; 9]],
        ..CenterConfig::default()
    };
    let truth = true_instances(&cfg);
    let out = simulate_epoch(&cfg, &refs(&truth), &empty_snapshot(&cfg), &RandomStream::root(1)).unwrap();
    assert_eq!(out.kpi, 0.0);
    assert_eq!(out.end.payload.in_system(), 0);
    assert_eq!(out.end.clock, 30.0);
}

#[test]
fn lone_class2_arrival_goes_to_dedicated_group() {
    let cfg = CenterConfig::default();
    let mut inst = true_instances(&cfg);
    inst[0] = fixed_arrivals(0, vec![]);
    inst[1] = fixed_arrivals(1, vec![5.0]);
    let out = simulate_epoch(&cfg, &refs(&inst), &empty_snapshot(&cfg), &RandomStream::root(1)).unwrap();
    assert_eq!(out.kpi, 0.0);
    let start = out.log.events.iter().find(|e| e.kind == EventKind::Start).unwrap();
    assert_eq!(cfg.expert_group(start.expert.unwrap()), 1);
    assert_eq!(out.log.routing.len(), 1);
}

fn busy(cfg: &CenterConfig, expert: usize, end: f64) -> Expert {
    Expert {
        group: cfg.expert_group(expert),
        idle_since: 0.0,
        serving: Some(Service {
            contact: 1000 + expert as u64,
            class: 0,
            start: 0.0,
            end: Some(end),
        }),
    }
}

#[test]
fn arrival_without_compatible_idle_expert_queues() {
    let cfg = CenterConfig::default();
    let mut inst = true_instances(&cfg);
    inst[0] = fixed_arrivals(0, vec![]);
    inst[1] = fixed_arrivals(1, vec![2.0]);
    let mut state = CenterState::empty(&cfg);
    for e in 2..6 {
        state.experts[e] = busy(&cfg, e, 1000.0);
    }
    let snap = StateSnapshot::new(0, 0.0, state).unwrap();
    let out = simulate_epoch(&cfg, &refs(&inst), &snap, &RandomStream::root(1)).unwrap();
    assert!(out.log.routing.is_empty());
    let waiting = out.end.payload.queues[1].len() + out.log.abandoned;
    assert_eq!(waiting, 1);
}

#[test]
fn freed_shared_expert_takes_class1_first() {
    let cfg = CenterConfig::default();
    let mut inst = true_instances(&cfg);
    inst[0] = fixed_arrivals(0, vec![]);
    inst[1] = fixed_arrivals(1, vec![]);
    let mut state = CenterState::empty(&cfg);
    for e in 0..6 {
        state.experts[e] = busy(&cfg, e, if e == 4 { 1.0 } else { 1000.0 });
    }
    for c in 0..2 {
        state.queues[c].push(Contact {
            id: c as u64,
            class: c,
            arrival: 0.0,
            patience: Some(500.0),
            handle: Some(10.0),
        });
    }
    let snap = StateSnapshot::new(0, 0.0, state).unwrap();
    let out = simulate_epoch(&cfg, &refs(&inst), &snap, &RandomStream::root(1)).unwrap();
    assert_eq!(out.log.routing.len(), 1);
    assert_eq!(out.log.routing[0].trigger, Trigger::ExpertTriggered);
    assert_eq!(out.log.routing[0].action, 0);
    let first = out.log.events.iter().find(|e| e.kind == EventKind::Start).unwrap();
    assert_eq!((first.contact, first.expert), (0, Some(4)));
}

#[test]
fn contact_rule_table() {
    let cfg = CenterConfig::default();
    let rule = RoutingRule::default();
    for class in 0..2 {
        for idle in 0..27 {
            let counts = [idle % 3, idle / 3 % 3, idle / 9];
            let mut state = CenterState::empty(&cfg);
            for (g, &k) in counts.iter().enumerate() {
                for m in k..2 {
                    let e = g * 2 + m;
                    state.experts[e] = busy(&cfg, e, 100.0);
                }
            }
            let f = routing_features(&cfg, &state, 0.0, Some(class));
            let expected = if counts[class] > 0 {
                Some(0)
            } else if counts[SHARED_GROUP] > 0 {
                Some(1)
            } else {
                None
            };
            assert_eq!(true_routing(Trigger::ContactTriggered, &f, &rule).ok(), expected);
        }
    }
}

#[test]
fn invalid_snapshot_is_rejected() {
    let cfg = CenterConfig::default();
    let truth = true_instances(&cfg);
    let snap = StateSnapshot::new(0, 7.0, CenterState::empty(&cfg)).unwrap();
    let err = simulate_epoch(&cfg, &refs(&truth), &snap, &RandomStream::root(1)).unwrap_err();
    assert!(matches!(err, subq::Error::InvalidSnapshot(_)));
}

#[test]
fn observed_snapshots_hot_start() {
    let cfg = CenterConfig::default();
    let truth = true_instances(&cfg);
    let day = simulate_day(&cfg, &refs(&truth), &RandomStream::root(2)).unwrap();
    for s in &day.snapshots {
        assert!(s.payload.queues.iter().flatten().all(|c| c.patience.is_none()));
        let out = simulate_epoch(&cfg, &refs(&truth), s, &RandomStream::root(3)).unwrap();
        assert!(out.kpi >= 0.0);
    }
}

#[test]
fn training_sets_have_expected_shape() {
    let cfg = CenterConfig::default();
    let truth = true_instances(&cfg);
    let day = simulate_day(&cfg, &refs(&truth), &RandomStream::root(6)).unwrap();
    let data = collect_training(&day.log);
    assert_eq!(data.len(), 6);
    assert!(data[0].len() > 100 && data[1].len() > 100);
    assert_eq!(data[2].len(), data[0].len());
    assert_eq!(data[4].records[0].input.as_ref().unwrap().len(), 17);
    assert_eq!(data[5].records[0].input.as_ref().unwrap().len(), 16);
    for (f, d) in fitters(&cfg, TwinMode::Frequentist, 1).iter().zip(&data) {
        f.fit(d).unwrap();
    }
    assert!(collect_training(&SimLog::default()).iter().all(|d| d.is_empty()));
}
