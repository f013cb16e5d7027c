//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

use std::io::Write as _;
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use rand::Rng;
use rayon::prelude::*;
use subq::analysis::{grow_tree, quantile_ci, BagWeighting, ConfigStats, TreeData};
use subq::contact_center::*;
use subq::design::stacked_design;
use subq::families::GammaParams;
use subq::harness::run_true_baseline;
use subq::numeric::normal_scores_correlation;
use subq::synthetic::{self, ExperimentSettings, Scenario, SyntheticModel, SyntheticSpec, TRUE_MEAN};
use subq::RandomStream;

/// Writes straight to stderr so the line shows even when output is captured.
fn verdict(criterion: u32, ok: bool, elapsed: Duration, detail: &str) -> bool {
    let tag = if ok { "PASS" } else { "FAIL" };
    let _ = writeln!(
        std::io::stderr(),
        "{tag} criterion {criterion} ({:.1} s): {detail}",
        elapsed.as_secs_f64()
    );
    ok
}

fn sum_sq(ys: &[f64]) -> f64 {
    let m = ys.iter().sum::<f64>() / ys.len() as f64;
    ys.iter().map(|y| (y - m) * (y - m)).sum()
}

#[test]
fn criterion_01_synthetic_truth() {
    let t = Instant::now();
    let spec = SyntheticSpec::default();
    let table = run_true_baseline(&SyntheticModel, &spec.true_instances(), 1_000_000, None, &RandomStream::root(1)).unwrap();
    let mean = table.grand_mean;
    let elapsed = t.elapsed();
    let ok = (mean - TRUE_MEAN).abs() <= 0.10 && elapsed < Duration::from_secs(10);
    assert!(verdict(1, ok, elapsed, &format!("mean {mean:.4} vs {TRUE_MEAN} +/- 0.10")));
}

#[test]
fn criterion_02_coverage_table() {
    let t = Instant::now();
    let spec = SyntheticSpec::default();
    let settings = ExperimentSettings {
        m: 50,
        instances: 100,
        stacks: 1,
        replications: 50,
        alpha: 0.1,
    };
    let stream = RandomStream::root(1).derive(0);
    let rows: Vec<_> = Scenario::ALL
        .iter()
        .map(|&s| synthetic::coverage_experiment(&spec, s, 100, &settings, spec.analytic_mean(), &stream).unwrap())
        .collect();
    let (no, input, full) = (&rows[0], &rows[1], &rows[2]);
    let ok = no.coverage <= 0.70
        && (0.79..=0.95).contains(&full.coverage)
        && no.mean_width < input.mean_width
        && input.mean_width < full.mean_width
        && (full.mean_width / 38.60 - 1.0).abs() <= 0.25;
    let detail = format!(
        "coverage {:.2}/{:.2}/{:.2}, widths {:.2}/{:.2}/{:.2}",
        no.coverage, input.coverage, full.coverage, no.mean_width, input.mean_width, full.mean_width
    );
    assert!(verdict(2, ok, t.elapsed(), &detail));
}

#[test]
fn criterion_03_factorial() {
    let t = Instant::now();
    let spec = SyntheticSpec::default();
    let result = synthetic::factorial(&spec, 100, 50, 500, &RandomStream::root(1).derive(1)).unwrap();
    // Mask bit l set means slot l (X1, X2, p, q) is estimated.
    let singles = [1usize, 2, 4, 8];
    let top = singles
        .iter()
        .copied()
        .max_by(|&a, &b| result.row(a).bias.abs().total_cmp(&result.row(b).bias.abs()))
        .unwrap();
    let min_var = (0..16).min_by(|&a, &b| result.row(a).variance.total_cmp(&result.row(b).variance)).unwrap();
    let elapsed = t.elapsed();
    let ok = top == 4 && min_var == 0 && elapsed < Duration::from_secs(20 * 60);
    let detail = format!(
        "largest single-mask |bias| at mask {top} ({:.3}), smallest variance at mask {min_var} ({:.3}; all-true {:.3})",
        result.row(top).bias,
        result.row(min_var).variance,
        result.row(0).variance
    );
    assert!(verdict(3, ok, elapsed, &detail));
}

#[test]
fn criterion_04_importance_ranking() {
    let t = Instant::now();
    let spec = SyntheticSpec::default();
    let settings = ExperimentSettings {
        m: 50,
        instances: 8,
        stacks: 64,
        replications: 50,
        alpha: 0.1,
    };
    let stream = RandomStream::root(1).derive(2);
    let hits = (0..100u64)
        .into_par_iter()
        .filter(|&r| {
            let (_, bagged) = synthetic::importance_macro(&spec, &settings, 50, BagWeighting::Uniform, &stream.derive(r)).unwrap();
            let rank = bagged.ranking();
            let mut top = [rank[0], rank[1]];
            top.sort_unstable();
            top == [0, 2]
        })
        .count();
    assert!(verdict(4, hits >= 80, t.elapsed(), &format!("X1 and p top two in {hits}/100")));
}

#[test]
fn criterion_05_vrf() {
    let t = Instant::now();
    let spec = SyntheticSpec::default();
    let settings = ExperimentSettings {
        m: 25,
        instances: 8,
        stacks: 64,
        replications: 50,
        alpha: 0.1,
    };
    let result = synthetic::vrf_experiment(&spec, 100, &settings, 50, &RandomStream::root(1).derive(3)).unwrap();
    let elapsed = t.elapsed();
    let ok = result.vrf.iter().all(|&v| v >= 2.0) && elapsed < Duration::from_secs(30 * 60);
    let detail: Vec<String> = synthetic::LABELS.iter().zip(&result.vrf).map(|(l, v)| format!("{l} {v:.2}")).collect();
    assert!(verdict(5, ok, elapsed, &format!("VRF {}", detail.join(", "))));
}

/// Best two-way partition gain over every feature, from raw outputs.
fn exhaustive_best(rows: &[(Vec<usize>, Vec<f64>)], l: usize) -> f64 {
    let all: Vec<f64> = rows.iter().flat_map(|r| r.1.iter().copied()).collect();
    let total = sum_sq(&all);
    let mut best = f64::NEG_INFINITY;
    for f in 0..l {
        let mut levels: Vec<usize> = rows.iter().map(|r| r.0[f]).collect();
        levels.sort_unstable();
        levels.dedup();
        for mask in 1..(1u32 << levels.len()) - 1 {
            let left = |v: usize| mask >> levels.iter().position(|&x| x == v).unwrap() & 1 == 1;
            let a: Vec<f64> = rows.iter().filter(|r| left(r.0[f])).flat_map(|r| r.1.iter().copied()).collect();
            let b: Vec<f64> = rows.iter().filter(|r| !left(r.0[f])).flat_map(|r| r.1.iter().copied()).collect();
            best = best.max(total - sum_sq(&a) - sum_sq(&b));
        }
    }
    best
}

#[test]
fn criterion_06_tree_identities() {
    let t = Instant::now();
    let mut failures = Vec::new();
    let mut split_checks = 0;
    for k in 0..200u64 {
        let mut rng = RandomStream::root(6).derive(k).rng();
        let l = rng.random_range(1..=3usize);
        let b = rng.random_range(2..=4usize);
        let n = rng.random_range(1..=5usize);
        let mut rows: Vec<(Vec<usize>, Vec<f64>)> = Vec::new();
        for _ in 0..rng.random_range(1..=12) {
            let levels: Vec<usize> = (0..l).map(|_| rng.random_range(0..b)).collect();
            if rows.iter().any(|r| r.0 == levels) {
                continue;
            }
            let ys: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
            rows.push((levels, ys));
        }
        let data = TreeData {
            levels: rows.iter().map(|r| r.0.clone()).collect(),
            stats: rows.iter().map(|r| ConfigStats::from_outputs(&r.1)).collect(),
            features: l,
        };
        let tree = grow_tree(&data).unwrap();
        let all: Vec<f64> = rows.iter().flat_map(|r| r.1.iter().copied()).collect();
        let scale = sum_sq(&all).max(1.0);
        let reductions: f64 = tree.splits().map(|(_, g)| g).sum();
        if (tree.tss() - tree.rss() - reductions).abs() > 1e-9 * scale || (tree.tss() - sum_sq(&all)).abs() > 1e-9 * scale {
            failures.push(format!("instance {k}: TSS identity"));
        }
        for r in &rows {
            let mean = r.1.iter().sum::<f64>() / r.1.len() as f64;
            if (tree.predict(&r.0) - mean).abs() > 1e-9 * mean.abs().max(1.0) {
                failures.push(format!("instance {k}: leaf prediction"));
            }
        }
        if rows.len() >= 2 {
            split_checks += 1;
            let best = exhaustive_best(&rows, l);
            if (tree.root().delta_tss - best).abs() > 1e-9 * best.abs().max(1.0) {
                failures.push(format!("instance {k}: root split {} vs {best}", tree.root().delta_tss));
            }
        }
    }
    let elapsed = t.elapsed();
    let ok = failures.is_empty() && elapsed < Duration::from_secs(30);
    let detail = format!("200 instances, {split_checks} split-oracle checks, failures {failures:?}");
    assert!(verdict(6, ok, elapsed, &detail));
}

#[test]
fn criterion_07_design_properties() {
    let t = Instant::now();
    let mut bad = Vec::new();
    for k in 0..100u64 {
        let mut rng = RandomStream::root(7).derive(k).rng();
        let b = rng.random_range(1..=32usize);
        let s = rng.random_range(1..=16usize);
        let l = rng.random_range(1..=8usize);
        let d = stacked_design(b, s, l, &RandomStream::root(7).derive_path(&[k, 1])).unwrap();
        let stacks_ok = (0..s).all(|st| {
            (0..l).all(|col| {
                let mut column: Vec<usize> = d.entries[st * b..(st + 1) * b].iter().map(|row| row[col]).collect();
                column.sort_unstable();
                column == (0..b).collect::<Vec<_>>()
            })
        });
        let counts_ok = (0..l).all(|col| (0..b).all(|i| d.entries.iter().filter(|row| row[col] == i).count() == s));
        if !(stacks_ok && counts_ok && d.rows() == b * s) {
            bad.push((b, s, l));
        }
    }
    let elapsed = t.elapsed();
    let ok = bad.is_empty() && elapsed < Duration::from_secs(5);
    assert!(verdict(7, ok, elapsed, &format!("100 designs, failing {bad:?}")));
}

#[test]
fn criterion_08_quantile_ci() {
    let t = Instant::now();
    let xs: Vec<f64> = (1..=10).map(f64::from).collect();
    let ci = quantile_ci(&xs, 0.2).unwrap();
    let exact = ci.lower == 1.9 && ci.upper == 9.1;
    let mut rng = RandomStream::root(8).rng();
    let mut monotone = true;
    for _ in 0..100 {
        let k = rng.random_range(2..60);
        let means: Vec<f64> = (0..k).map(|_| rng.random_range(-100.0..100.0)).collect();
        let widths: Vec<f64> = (1..20).map(|a| quantile_ci(&means, a as f64 * 0.05).unwrap().width()).collect();
        monotone &= widths.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    }
    let detail = format!("[{}, {}], width monotone over alpha grid: {monotone}", ci.lower, ci.upper);
    assert!(verdict(8, exact && monotone, t.elapsed(), &detail));
}

fn erlang_c_wait(lambda: f64, mu: f64, c: u32) -> f64 {
    let a = lambda / mu;
    let fact = |k: u32| (1..=k).map(f64::from).product::<f64>();
    let head: f64 = (0..c).map(|k| a.powi(k as i32) / fact(k)).sum();
    let tail = a.powi(c as i32) / fact(c) * f64::from(c) / (f64::from(c) - a);
    tail / (head + tail) / (f64::from(c) * mu - lambda)
}

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
fn criterion_09_contact_center_oracles() {
    let t = Instant::now();
    let mut notes = Vec::new();

    let hours = 100_000.0;
    let mm4 = CenterConfig {
        period_minutes: 60.0 * hours,
        rates_per_hour: [vec![0.0], vec![3.0]],
        epoch_minutes: 60.0 * hours,
        patience: [GammaSpec { shape: 1.0, mean: 1e12 }; 2],
        handle: [GammaSpec { shape: 1.0, mean: 60.0 }; 2],
        rho: [0.0, 0.0],
        ..CenterConfig::default()
    };
    let truth = true_instances(&mm4);
    let refs: Vec<_> = truth.iter().collect();
    let wait = simulate_epoch(&mm4, &refs, &empty_snapshot(&mm4), &RandomStream::root(5)).unwrap().kpi;
    let expected = erlang_c_wait(3.0 / 60.0, 1.0 / 60.0, 4);
    let erlang_ok = (wait / expected - 1.0).abs() < 0.05;
    notes.push(format!("Erlang C {wait:.3} vs {expected:.3}"));

    let cfg = CenterConfig::default();
    let rate = cfg.arrival_rate(1);
    let days = 10_000;
    let mut counts = vec![vec![0.0; days]; cfg.periods()];
    let s = RandomStream::root(8);
    for d in 0..days {
        for x in rate.arrival_times(0.0, cfg.horizon(), &mut s.derive(d as u64).rng()) {
            counts[(x / 60.0) as usize][d] += 1.0;
        }
    }
    let mut worst = (0.0f64, 0.0f64);
    for (h, c) in counts.iter().enumerate() {
        let lambda = cfg.rates_per_hour[1][h];
        let mean = c.iter().sum::<f64>() / days as f64;
        let var = sum_sq(c) / (days - 1) as f64;
        worst.0 = worst.0.max((mean / lambda - 1.0).abs());
        worst.1 = worst.1.max((var / lambda - 1.0).abs());
    }
    let nhpp_ok = worst.0 < 0.01 && worst.1 < 0.05;
    notes.push(format!("NHPP worst relative error mean {:.4}, variance {:.4}", worst.0, worst.1));

    let cop = cfg.copula(1);
    let mut rng = RandomStream::root(9).rng();
    let n = 100_000;
    let draws: Vec<[f64; 2]> = (0..n).map(|_| cop.sample(&mut rng)).collect();
    let mut p: Vec<f64> = draws.iter().map(|d| d[0]).collect();
    let mut h: Vec<f64> = draws.iter().map(|d| d[1]).collect();
    let r = normal_scores_correlation(&p, &h);
    let critical = 1.628 / (n as f64).sqrt();
    let pm: GammaParams = cfg.patience[1].params();
    let hm: GammaParams = cfg.handle[1].params();
    let copula_ok = (r - cfg.rho[1]).abs() < 0.03 && ks(&mut p, |x| pm.cdf(x)) < critical && ks(&mut h, |x| hm.cdf(x)) < critical;
    notes.push(format!("copula normal-scores correlation {r:.4}"));

    let truth = true_instances(&cfg);
    let refs: Vec<_> = truth.iter().collect();
    let s = RandomStream::root(21);
    let day = simulate_day(&cfg, &refs, &s).unwrap();
    let mut snap = empty_snapshot(&cfg);
    let mut hot_ok = true;
    for e in 0..cfg.epochs() {
        let out = simulate_epoch(&cfg, &refs, &snap, &s.derive(e as u64)).unwrap();
        hot_ok &= out.kpi.to_bits() == day.snapshots[e].observed_kpi.unwrap().to_bits();
        snap = serde_json::from_str(&serde_json::to_string(&out.end).unwrap()).unwrap();
        hot_ok &= snap == out.end;
    }
    notes.push(format!("hot start bit-identical over {} epochs: {hot_ok}", cfg.epochs()));

    let elapsed = t.elapsed();
    let ok = erlang_ok && nhpp_ok && copula_ok && hot_ok && elapsed < Duration::from_secs(300);
    assert!(verdict(9, ok, elapsed, &notes.join("; ")));
}

/// Order-statistic interpolation at `h = (n - 1) p + 1`, written out independently.
fn interpolated_quantile(xs: &[f64], p: f64) -> f64 {
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    let h = (s.len() - 1) as f64 * p + 1.0;
    let lo = h.floor() as usize;
    if lo >= s.len() {
        return s[s.len() - 1];
    }
    s[lo - 1] + (h - lo as f64) * (s[lo] - s[lo - 1])
}

#[test]
fn criterion_10_twin() {
    let t = Instant::now();
    let settings = TwinSettings::default();
    let result = run_twin_experiment(TwinMode::Frequentist, &CenterConfig::default(), &settings, 11).unwrap();
    let wider = result.wider_epochs();

    let stacked = result.tables[0].design.stacked_rows();
    let estimates: Vec<f64> = (0..stacked)
        .map(|b| {
            let mut acc = 0.0;
            for (table, snap) in result.tables.iter().zip(&result.day.snapshots) {
                let row = &table.outputs[table.design.origin[b]];
                acc += row.iter().sum::<f64>() / row.len() as f64 - snap.observed_kpi.unwrap();
            }
            acc / result.tables.len() as f64
        })
        .collect();
    let lower = interpolated_quantile(&estimates, settings.alpha / 2.0);
    let upper = interpolated_quantile(&estimates, 1.0 - settings.alpha / 2.0);
    let ci = result.bias.ci;
    let excludes_zero = !ci.contains(0.0);
    let brute = (ci.lower - lower).abs() <= 1e-12 && (ci.upper - upper).abs() <= 1e-12;
    let elapsed = t.elapsed();
    let ok = wider >= 16 && (excludes_zero || brute) && elapsed < Duration::from_secs(20 * 60);
    let detail = format!(
        "SU wider in {wider}/{} epochs; bias CI [{:.4}, {:.4}], excludes 0: {excludes_zero}, brute force [{lower:.4}, {upper:.4}] matches: {brute}",
        result.epochs.len(),
        ci.lower,
        ci.upper
    );
    assert!(verdict(10, ok, elapsed, &detail));
}

fn csv_files(dir: &Path, prefix: &str, out: &mut Vec<(String, Vec<u8>)>) {
    let mut entries: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    entries.sort();
    for p in entries {
        let name = format!("{prefix}{}", p.file_name().unwrap().to_string_lossy());
        if p.is_dir() {
            csv_files(&p, &format!("{name}/"), out);
        } else if name.ends_with(".csv") {
            out.push((name, std::fs::read(&p).unwrap()));
        }
    }
}

fn run_cli(args: &[&str], threads: usize, config: &Path, out: &Path) {
    let status = Command::new(env!("CARGO_BIN_EXE_subq"))
        .args(args)
        .arg("--threads")
        .arg(threads.to_string())
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .stdout(Stdio::null())
        .env_remove("SUBQ_SEED")
        .status()
        .unwrap();
    assert!(status.success(), "{args:?} with {threads} threads");
}

#[test]
fn criterion_11_thread_determinism() {
    let t = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("config.json");
    std::fs::write(
        &config,
        r#"{
  "synthetic": {
    "macro": 6,
    "coverage": { "m": 30, "instances": 20, "stacks": 1, "replications": 10, "alpha": 0.1 },
    "factorial": { "datasets": 5, "m": 30, "replications": 20 },
    "importance": { "m": 30, "instances": 4, "stacks": 8, "replications": 10, "alpha": 0.1 },
    "importance_trees": 10,
    "vrf": { "m": 25, "instances": 4, "stacks": 8, "replications": 10, "alpha": 0.1 },
    "vrf_trees": 10
  },
  "twin": { "settings": { "instances": 3, "stacks": 2, "replications": 10, "no_su_replications": 10,
            "truth_replications": 20, "trees": 5, "alpha": 0.1 } }
}"#,
    )
    .unwrap();
    let mut compared = 0;
    let mut mismatched = Vec::new();
    for (name, args) in [("synthetic", vec!["synthetic", "--seed", "5"]), ("contact-center", vec!["contact-center", "--seed", "5"])] {
        let mut outputs = Vec::new();
        for threads in [1, 4] {
            let dir = tmp.path().join(format!("{name}-{threads}"));
            std::fs::create_dir(&dir).unwrap();
            run_cli(&args, threads, &config, &dir);
            let mut files = Vec::new();
            csv_files(&dir, "", &mut files);
            files.push(("manifest.json".into(), std::fs::read(dir.join("manifest.json")).unwrap()));
            outputs.push(files);
        }
        assert_eq!(outputs[0].len(), outputs[1].len());
        for (a, b) in outputs[0].iter().zip(&outputs[1]) {
            compared += 1;
            if a != b {
                mismatched.push(format!("{name}/{}", a.0));
            }
        }
    }
    let ok = mismatched.is_empty() && compared > 0;
    let detail = format!("{compared} files compared between --threads 1 and 4, mismatched {mismatched:?}");
    assert!(verdict(11, ok, t.elapsed(), &detail));
}
