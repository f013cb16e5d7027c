//! Experiment drivers. Every file is written below the output directory and
//! listed, in write order, for the manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use subq::analysis::{bagged_importance, quantile_ci, table_importance, BagWeighting, ImportanceReport};
use subq::contact_center::{self, SLOT_LABELS};
use subq::harness::OutputTable;
use subq::synthetic::{self, LABELS};
use subq::{plot, DesignMatrix, RandomStream};

use crate::config::{Experiment, RunConfig, Study};

/// A failed stage; the CLI exits with status 1 and names it.
#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub source: anyhow::Error,
}

impl std::fmt::Display for StageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "stage `{}` failed: {:#}", self.stage, self.source)
    }
}

trait Stage<T> {
    fn stage(self, stage: &'static str) -> Result<T, StageError>;
}

impl<T, E: Into<anyhow::Error>> Stage<T> for Result<T, E> {
    fn stage(self, stage: &'static str) -> Result<T, StageError> {
        self.map_err(|e| StageError { stage, source: e.into() })
    }
}

struct Output {
    dir: PathBuf,
    files: Vec<String>,
}

impl Output {
    fn text(&mut self, name: &str, body: &str) -> anyhow::Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> anyhow::Result<()> {
        self.text(name, &(serde_json::to_string_pretty(value)? + "\n"))
    }
}

/// Runs the configured experiment and writes `manifest.json` last.
pub fn execute(cfg: &RunConfig) -> Result<PathBuf, StageError> {
    let experiment = cfg.experiment.expect("validated config");
    let mut out = Output {
        dir: cfg.out.clone().expect("validated config"),
        files: Vec::new(),
    };
    let mut manifest = json!({
        "tool": "subq",
        "version": env!("CARGO_PKG_VERSION"),
        "experiment": experiment.name(),
        "seed": cfg.seed,
    });
    match experiment {
        Experiment::Synthetic => run_synthetic(cfg, &mut out)?,
        Experiment::ContactCenter => {
            run_center(cfg, &mut out)?;
            manifest["no_su_interval"] = json!("naive-t");
        }
        Experiment::Custom => run_custom(cfg, &mut out)?,
    }
    manifest["config"] = serde_json::to_value(cfg).stage("manifest")?;
    manifest["files"] = json!(out.files);
    let path = out.dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest).stage("manifest")? + "\n").stage("manifest")?;
    Ok(path)
}

fn top_two_is_x1_p(report: &ImportanceReport) -> bool {
    let r = report.ranking();
    let mut top = [r[0], r[1]];
    top.sort_unstable();
    top == [0, 2]
}

fn column_means(rows: &[Vec<f64>]) -> Vec<f64> {
    let k = rows.first().map_or(0, Vec::len);
    (0..k)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64)
        .collect()
}

fn run_synthetic(cfg: &RunConfig, out: &mut Output) -> Result<(), StageError> {
    let s = &cfg.synthetic;
    let root = RandomStream::root(cfg.seed);
    let mut studies = s.studies.clone();
    studies.sort_by_key(|&st| st as u8);
    studies.dedup();
    for study in studies {
        match study {
            Study::Coverage => {
                let target = s.spec.analytic_mean();
                let rows = s
                    .scenarios
                    .iter()
                    .map(|&sc| synthetic::coverage_experiment(&s.spec, sc, s.macro_reps, &s.coverage, target, &root.derive(0)))
                    .collect::<Result<Vec<_>, _>>()
                    .stage("coverage")?;
                let mut intervals = String::from("scenario,macro,lower,upper,covered\n");
                for r in &rows {
                    for (i, ci) in r.intervals.iter().enumerate() {
                        let _ = writeln!(
                            intervals,
                            "{},{},{},{},{}",
                            r.scenario.label(),
                            i + 1,
                            ci.lower,
                            ci.upper,
                            u8::from(ci.contains(target))
                        );
                    }
                }
                out.text("table1.csv", &synthetic::coverage_csv(&rows)).stage("coverage")?;
                out.text("table1_intervals.csv", &intervals).stage("coverage")?;
                out.json("table1.json", &rows).stage("coverage")?;
            }
            Study::Factorial => {
                let f = &s.factorial;
                let result = synthetic::factorial(&s.spec, f.datasets, f.m, f.replications, &root.derive(1)).stage("factorial")?;
                out.text("fig2_factorial.csv", &synthetic::factorial_csv(&result)).stage("factorial")?;
                out.json("fig2_factorial.json", &result).stage("factorial")?;
            }
            Study::Importance => {
                let stream = root.derive(2);
                let pairs = (0..s.macro_reps)
                    .into_par_iter()
                    .map(|r| {
                        synthetic::importance_macro(&s.spec, &s.importance, s.importance_trees, BagWeighting::Uniform, &stream.derive(r as u64))
                    })
                    .collect::<Result<Vec<_>, _>>()
                    .stage("importance")?;
                let mut csv = format!("macro,method,{}\n", LABELS.join(","));
                for (i, (single, bagged)) in pairs.iter().enumerate() {
                    for (method, rep) in [("single", single), ("bagged", bagged)] {
                        let scores: Vec<String> = rep.per_submodel.iter().map(f64::to_string).collect();
                        let _ = writeln!(csv, "{},{method},{}", i + 1, scores.join(","));
                    }
                }
                let single: Vec<Vec<f64>> = pairs.iter().map(|p| p.0.per_submodel.clone()).collect();
                let bagged: Vec<Vec<f64>> = pairs.iter().map(|p| p.1.per_submodel.clone()).collect();
                let mean_bagged = column_means(&bagged);
                let summary = json!({
                    "labels": LABELS,
                    "macro_reps": s.macro_reps,
                    "trees": s.importance_trees,
                    "mean_single": column_means(&single),
                    "mean_bagged": mean_bagged,
                    "top_two_x1_p": {
                        "single": pairs.iter().filter(|p| top_two_is_x1_p(&p.0)).count(),
                        "bagged": pairs.iter().filter(|p| top_two_is_x1_p(&p.1)).count(),
                    },
                    "example": { "single": pairs[0].0, "bagged": pairs[0].1 },
                });
                let labels: Vec<String> = LABELS.iter().map(|l| l.to_string()).collect();
                out.text("fig4_importance.csv", &csv).stage("importance")?;
                out.json("fig4_importance.json", &summary).stage("importance")?;
                out.text("fig4_importance.svg", &plot::bar_chart("Mean bagged importance", &labels, &mean_bagged))
                    .stage("importance")?;
            }
            Study::Vrf => {
                let result = synthetic::vrf_experiment(&s.spec, s.macro_reps, &s.vrf, s.vrf_trees, &root.derive(3)).stage("vrf")?;
                out.text("table2_vrf.csv", &synthetic::vrf_csv(&result)).stage("vrf")?;
                out.json("table2_vrf.json", &result).stage("vrf")?;
            }
        }
    }
    Ok(())
}

fn run_center(cfg: &RunConfig, out: &mut Output) -> Result<(), StageError> {
    let result = contact_center::run_twin_experiment(cfg.twin.mode, &cfg.center, &cfg.twin.settings, cfg.seed).stage("twin")?;
    contact_center::write_twin(&out.dir, &cfg.center, &result).stage("write")?;
    for t in &result.tables {
        let id = t.state_id.unwrap_or(0);
        for f in ["design.csv", "outputs.csv", "outputs.json"] {
            out.files.push(format!("state_{id}/{f}"));
        }
    }
    for f in [
        "config.json",
        "snapshots.json",
        "events.csv",
        "epochs.csv",
        "epochs.json",
        "aggregate_importance.json",
        "state_importance.json",
        "importance.csv",
        "state_average_bias.json",
        "epoch_intervals.svg",
        "importance.svg",
    ] {
        out.files.push(f.to_string());
    }
    let summary = json!({
        "mode": result.mode,
        "epochs": result.epochs.len(),
        "su_wider_epochs": result.wider_epochs(),
        "ranking": result.aggregate.ranking().iter().map(|&i| SLOT_LABELS[i]).collect::<Vec<_>>(),
        "bias_interval": result.bias.ci,
    });
    out.json("summary.json", &summary).stage("write")
}

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn run_custom(cfg: &RunConfig, out: &mut Output) -> Result<(), StageError> {
    let c = &cfg.custom;
    let design_path = c.design.as_deref().expect("validated config");
    let outputs_path = c.outputs.as_deref().expect("validated config");
    let design = read(design_path).and_then(|t| Ok(DesignMatrix::from_csv(&t)?)).stage("load")?;
    let table = read(outputs_path)
        .and_then(|t| Ok(OutputTable::from_csv(design, &t)?))
        .stage("load")?;
    let interval = quantile_ci(&table.stacked_means(), c.alpha).stage("interval")?;
    let single = table_importance(&table).stage("importance")?;
    let bagged = bagged_importance(&table, c.trees, BagWeighting::Uniform, &RandomStream::root(cfg.seed)).stage("importance")?;
    let labels: Vec<String> = (1..=table.design.submodels()).map(|l| format!("submodel_{l}")).collect();
    let mut csv = String::from("submodel,single,bagged,bagged_splits\n");
    for (i, label) in labels.iter().enumerate() {
        let _ = writeln!(csv, "{label},{},{},{}", single.per_submodel[i], bagged.per_submodel[i], bagged.split_counts[i]);
    }
    let summary = json!({
        "configurations": table.rows(),
        "outputs": table.total_outputs(),
        "grand_mean": table.grand_mean,
        "interval": interval,
        "aleatoric": bagged.aleatoric,
        "single": single,
        "bagged": bagged,
    });
    out.text("importance.csv", &csv).stage("write")?;
    out.json("analysis.json", &summary).stage("write")?;
    out.text("importance.svg", &plot::bar_chart("Bagged submodel importance", &labels, &bagged.per_submodel))
        .stage("write")
}
