//! Resolved run configuration: built-in defaults, then the `--config` file,
//! then command-line flags.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use subq::contact_center::{CenterConfig, TwinMode, TwinSettings};
use subq::synthetic::{ExperimentSettings, Scenario, SyntheticSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Synthetic,
    ContactCenter,
    Custom,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Synthetic => "synthetic",
            Experiment::ContactCenter => "contact-center",
            Experiment::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Study {
    Coverage,
    Factorial,
    Importance,
    Vrf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorialSettings {
    /// Fresh training sets per combination.
    pub datasets: usize,
    pub m: usize,
    pub replications: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSection {
    pub spec: SyntheticSpec,
    pub scenarios: Vec<Scenario>,
    pub studies: Vec<Study>,
    #[serde(rename = "macro")]
    pub macro_reps: usize,
    pub coverage: ExperimentSettings,
    pub factorial: FactorialSettings,
    pub importance: ExperimentSettings,
    pub importance_trees: usize,
    pub vrf: ExperimentSettings,
    pub vrf_trees: usize,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        Self {
            spec: SyntheticSpec::default(),
            scenarios: Scenario::ALL.to_vec(),
            studies: vec![Study::Coverage, Study::Factorial, Study::Importance, Study::Vrf],
            macro_reps: 100,
            coverage: ExperimentSettings::default(),
            factorial: FactorialSettings {
                datasets: 100,
                m: 50,
                replications: 500,
            },
            importance: ExperimentSettings {
                m: 50,
                instances: 8,
                stacks: 64,
                replications: 50,
                alpha: 0.1,
            },
            importance_trees: 50,
            vrf: ExperimentSettings {
                m: 25,
                instances: 8,
                stacks: 64,
                replications: 50,
                alpha: 0.1,
            },
            vrf_trees: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwinSection {
    pub mode: TwinMode,
    pub settings: TwinSettings,
}

impl Default for TwinSection {
    fn default() -> Self {
        Self {
            mode: TwinMode::Frequentist,
            settings: TwinSettings::default(),
        }
    }
}

/// Analysis of an existing design and output table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CustomSection {
    pub design: Option<PathBuf>,
    pub outputs: Option<PathBuf>,
    pub alpha: f64,
    pub trees: usize,
}

impl Default for CustomSection {
    fn default() -> Self {
        Self {
            design: None,
            outputs: None,
            alpha: 0.1,
            trees: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Option<Experiment>,
    pub seed: u64,
    /// Not echoed into the manifest so runs differing only here stay identical.
    #[serde(skip_serializing)]
    pub threads: Option<usize>,
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    pub synthetic: SyntheticSection,
    pub center: CenterConfig,
    pub twin: TwinSection,
    pub custom: CustomSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            seed: 1,
            threads: None,
            out: None,
            synthetic: SyntheticSection::default(),
            center: CenterConfig::default(),
            twin: TwinSection::default(),
            custom: CustomSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("invalid config {}: {e}", path.display()))
    }

    /// Checks everything that can be checked before any work starts.
    pub fn validate(&self) -> Result<(), String> {
        let experiment = self.experiment.ok_or("no experiment selected")?;
        match &self.out {
            None => return Err("no output directory given (--out)".into()),
            Some(p) if !p.is_dir() => return Err(format!("output directory {} does not exist", p.display())),
            _ => {}
        }
        if self.threads == Some(0) {
            return Err("--threads must be at least 1".into());
        }
        let alpha_ok = |a: f64| a > 0.0 && a < 1.0;
        match experiment {
            Experiment::Synthetic => {
                let s = &self.synthetic;
                if s.macro_reps < 2 {
                    return Err("--macro must be at least 2".into());
                }
                if s.scenarios.is_empty() || s.studies.is_empty() {
                    return Err("no scenarios or studies selected".into());
                }
                for (name, e) in [("coverage", &s.coverage), ("importance", &s.importance), ("vrf", &s.vrf)] {
                    if e.m < 2 || e.instances < 2 || e.stacks < 1 || e.replications < 1 {
                        return Err(format!("{name}: need m >= 2, B >= 2, S >= 1, n >= 1"));
                    }
                    if !alpha_ok(e.alpha) {
                        return Err(format!("{name}: alpha must lie in (0, 1)"));
                    }
                }
                let f = &s.factorial;
                if f.datasets < 2 || f.m < 2 || f.replications < 1 {
                    return Err("factorial: need datasets >= 2, m >= 2, replications >= 1".into());
                }
                if s.importance_trees < 1 || s.vrf_trees < 1 {
                    return Err("--trees must be at least 1".into());
                }
            }
            Experiment::ContactCenter => {
                self.center.validate().map_err(|e| e.to_string())?;
                let t = &self.twin.settings;
                if t.instances < 2 || t.stacks < 1 || t.replications < 1 || t.trees < 1 {
                    return Err("need B >= 2, S >= 1, n >= 1, trees >= 1".into());
                }
                if t.no_su_replications < 2 || t.truth_replications < 2 {
                    return Err("baseline runs need at least two replications".into());
                }
                if !alpha_ok(t.alpha) {
                    return Err("alpha must lie in (0, 1)".into());
                }
            }
            Experiment::Custom => {
                let c = &self.custom;
                for (flag, p) in [("--design", &c.design), ("--outputs", &c.outputs)] {
                    match p {
                        None => return Err(format!("custom analysis needs {flag}")),
                        Some(p) if !p.is_file() => return Err(format!("{} does not exist", p.display())),
                        _ => {}
                    }
                }
                if !alpha_ok(c.alpha) || c.trees < 1 {
                    return Err("need 0 < alpha < 1 and trees >= 1".into());
                }
            }
        }
        Ok(())
    }
}
