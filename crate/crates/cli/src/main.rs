//! `subq`: run the submodel-uncertainty experiments from the command line.
//!
//! Exit status: 0 on success, 1 when a stage fails, 2 for invalid arguments
//! or configuration (checked before anything is written).

mod config;
mod report;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use subq::contact_center::TwinMode;
use subq::synthetic::Scenario;

use config::{Experiment, RunConfig, Study};

#[derive(Parser)]
#[command(name = "subq", version, about = "Submodel uncertainty quantification and attribution")]
struct Cli {
    /// JSON configuration; explicit flags take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, env = "SUBQ_SEED")]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Existing output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Coverage, factorial, importance and bagging studies on the synthetic model.
    Synthetic(SyntheticArgs),
    /// Digital-twin experiment on the contact-center model.
    ContactCenter(CenterArgs),
    /// Interval and importance analysis of an existing design and output table.
    Custom(CustomArgs),
    /// Run whatever experiment the configuration file names.
    Run {
        #[arg(long, value_enum)]
        experiment: Option<Experiment>,
    },
    /// Render report.md from a finished output directory.
    Report {
        /// Defaults to --out.
        dir: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioArg {
    All,
    NoEpistemic,
    InputOnly,
    FullSu,
}

#[derive(Args)]
struct Sizes {
    /// Instances per submodel.
    #[arg(long = "B")]
    instances: Option<usize>,
    /// Stacks.
    #[arg(long = "S")]
    stacks: Option<usize>,
    /// Replications per configuration.
    #[arg(long = "n")]
    replications: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Trees in the bagged ensemble.
    #[arg(long)]
    trees: Option<usize>,
}

#[derive(Args)]
struct SyntheticArgs {
    #[arg(long, value_enum)]
    scenario: Option<ScenarioArg>,
    /// Studies to run (repeatable); all by default.
    #[arg(long, value_enum)]
    study: Vec<Study>,
    /// Training set size.
    #[arg(long = "m")]
    m: Option<usize>,
    /// Macro-replications.
    #[arg(long = "macro")]
    macro_reps: Option<usize>,
    #[command(flatten)]
    sizes: Sizes,
}

#[derive(Args)]
struct CenterArgs {
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[command(flatten)]
    sizes: Sizes,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Frequentist,
    Bayesian,
}

#[derive(Args)]
struct CustomArgs {
    #[arg(long)]
    design: Option<PathBuf>,
    #[arg(long)]
    outputs: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    trees: Option<usize>,
}

fn resolve(cli: Cli) -> Result<RunConfig, String> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    if cli.out.is_some() {
        cfg.out = cli.out;
    }
    match cli.command {
        Command::Synthetic(a) => {
            cfg.experiment = Some(Experiment::Synthetic);
            let s = &mut cfg.synthetic;
            match a.scenario {
                None => {}
                Some(ScenarioArg::All) => s.scenarios = Scenario::ALL.to_vec(),
                Some(ScenarioArg::NoEpistemic) => s.scenarios = vec![Scenario::NoEpistemic],
                Some(ScenarioArg::InputOnly) => s.scenarios = vec![Scenario::InputOnly],
                Some(ScenarioArg::FullSu) => s.scenarios = vec![Scenario::FullSu],
            }
            if !a.study.is_empty() {
                s.studies = a.study;
            }
            if let Some(v) = a.macro_reps {
                s.macro_reps = v;
            }
            if let Some(v) = a.m {
                s.coverage.m = v;
            }
            let c = &mut s.coverage;
            apply(&a.sizes.instances, &mut c.instances);
            apply(&a.sizes.stacks, &mut c.stacks);
            apply(&a.sizes.replications, &mut c.replications);
            if let Some(alpha) = a.sizes.alpha {
                for e in [&mut s.coverage, &mut s.importance, &mut s.vrf] {
                    e.alpha = alpha;
                }
            }
            if let Some(t) = a.sizes.trees {
                s.importance_trees = t;
                s.vrf_trees = t;
            }
        }
        Command::ContactCenter(a) => {
            cfg.experiment = Some(Experiment::ContactCenter);
            match a.mode {
                Some(ModeArg::Frequentist) => cfg.twin.mode = TwinMode::Frequentist,
                Some(ModeArg::Bayesian) => cfg.twin.mode = TwinMode::Bayesian,
                None => {}
            }
            let t = &mut cfg.twin.settings;
            apply(&a.sizes.instances, &mut t.instances);
            apply(&a.sizes.stacks, &mut t.stacks);
            apply(&a.sizes.replications, &mut t.replications);
            apply(&a.sizes.alpha, &mut t.alpha);
            apply(&a.sizes.trees, &mut t.trees);
        }
        Command::Custom(a) => {
            cfg.experiment = Some(Experiment::Custom);
            let c = &mut cfg.custom;
            if a.design.is_some() {
                c.design = a.design;
            }
            if a.outputs.is_some() {
                c.outputs = a.outputs;
            }
            apply(&a.alpha, &mut c.alpha);
            apply(&a.trees, &mut c.trees);
        }
        Command::Run { experiment } => {
            if experiment.is_some() {
                cfg.experiment = experiment;
            }
        }
        Command::Report { .. } => unreachable!("handled before resolution"),
    }
    Ok(cfg)
}

fn apply<T: Copy>(flag: &Option<T>, target: &mut T) {
    if let Some(v) = flag {
        *target = *v;
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Command::Report { dir } = &cli.command {
        let Some(dir) = dir.clone().or_else(|| cli.out.clone()) else {
            eprintln!("error: report needs a directory");
            return ExitCode::from(2);
        };
        return match report::render(&dir) {
            Ok(path) => {
                println!("{}", path.display());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: stage `report` failed: {e:#}");
                ExitCode::from(1)
            }
        };
    }
    let cfg = match resolve(cli).and_then(|c| c.validate().map(|_| c)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(n) = cfg.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run::execute(&cfg) {
        Ok(path) => {
            println!("{}", path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
