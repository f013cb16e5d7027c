//! Submodels, their instances, and the data they are fitted on.
//!
//! A submodel maps an optional input vector and a random stream to an output
//! vector. Three kinds are distinguished by which of the two arguments the
//! mapping actually uses:
//!
//! | kind | mapping | input | randomness |
//! |---|---|---|---|
//! | [`SubmodelKind::Deterministic`] | `g(x)` | required | none |
//! | [`SubmodelKind::UnconditionalStochastic`] | `g(xi)` | rejected | consumed |
//! | [`SubmodelKind::ConditionalStochastic`] | `g(x, xi)` | required | consumed |

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::{GammaParams, GaussianCopula, KnnRegressor, LogisticModel, NormalParams, PiecewiseRate};
use crate::stream::StreamRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SubmodelKind {
    Deterministic,
    UnconditionalStochastic,
    ConditionalStochastic,
}

impl SubmodelKind {
    pub fn takes_input(self) -> bool {
        !matches!(self, SubmodelKind::UnconditionalStochastic)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    /// Fitted once on the original training data.
    Estimated,
    /// Fitted on a bootstrap resample drawn from the stream with this path hash.
    Bootstrap(u64),
    /// Drawn from a posterior distribution.
    Posterior(u64),
    /// The true data-generating subprocess. Benchmark mode only.
    True,
}

/// A user-supplied mapping, used for true subprocesses in benchmark mode.
#[derive(Clone)]
pub struct FunctionSubmodel {
    pub name: String,
    pub kind: SubmodelKind,
    #[allow(clippy::type_complexity)]
    f: Arc<dyn Fn(Option<&[f64]>, &mut StreamRng) -> Vec<f64> + Send + Sync>,
}

impl FunctionSubmodel {
    /// Deterministic `y = f(x)`.
    pub fn deterministic<F>(name: impl Into<String>, f: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            kind: SubmodelKind::Deterministic,
            f: Arc::new(move |x, _| f(x.expect("input checked by invoke"))),
        }
    }

    /// Any kind; the closure receives the input (if the kind takes one) and the stream.
    pub fn new<F>(name: impl Into<String>, kind: SubmodelKind, f: F) -> Self
    where
        F: Fn(Option<&[f64]>, &mut StreamRng) -> Vec<f64> + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            kind,
            f: Arc::new(f),
        }
    }
}

impl fmt::Debug for FunctionSubmodel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FunctionSubmodel")
            .field("name", &self.name)
            .field("kind", &self.kind)
            .finish()
    }
}

/// Fitted-parameter payload of an instance.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Submodel {
    Normal(NormalParams),
    Gamma(GammaParams),
    PiecewiseRate(PiecewiseRate),
    Copula(GaussianCopula),
    Knn(KnnRegressor),
    Logistic(LogisticModel),
    #[serde(skip)]
    Function(FunctionSubmodel),
}

impl Submodel {
    pub fn kind(&self) -> SubmodelKind {
        match self {
            Submodel::Normal(_)
            | Submodel::Gamma(_)
            | Submodel::PiecewiseRate(_)
            | Submodel::Copula(_) => SubmodelKind::UnconditionalStochastic,
            // Logistic returns a class-probability vector; turning it into a
            // decision is the caller's job (see `sample_discrete`).
            Submodel::Knn(_) | Submodel::Logistic(_) => SubmodelKind::Deterministic,
            Submodel::Function(f) => f.kind,
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            Submodel::Normal(_) => "normal",
            Submodel::Gamma(_) => "gamma",
            Submodel::PiecewiseRate(_) => "piecewise_rate",
            Submodel::Copula(_) => "gaussian_copula",
            Submodel::Knn(_) => "knn",
            Submodel::Logistic(_) => "logistic",
            Submodel::Function(_) => "function",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SubmodelInstance {
    /// Slot index, 0-based.
    pub submodel_id: usize,
    /// Instance index within the slot, 0-based.
    pub instance_id: usize,
    pub provenance: Provenance,
    pub model: Submodel,
}

impl SubmodelInstance {
    pub fn new(submodel_id: usize, instance_id: usize, provenance: Provenance, model: Submodel) -> Self {
        Self {
            submodel_id,
            instance_id,
            provenance,
            model,
        }
    }

    pub fn kind(&self) -> SubmodelKind {
        self.model.kind()
    }

    /// Evaluates the instance once.
    ///
    /// Deterministic instances never touch `rng`; unconditional ones must
    /// not be given an input.
    pub fn invoke(&self, input: Option<&[f64]>, rng: &mut StreamRng) -> Result<Vec<f64>> {
        match (self.kind().takes_input(), input.is_some()) {
            (true, false) => {
                return Err(Error::MissingInput {
                    submodel: self.submodel_id,
                })
            }
            (false, true) => {
                return Err(Error::UnexpectedInput {
                    submodel: self.submodel_id,
                })
            }
            _ => {}
        }
        Ok(match &self.model {
            Submodel::Normal(p) => vec![p.sample(rng)],
            Submodel::Gamma(p) => vec![p.sample(rng)],
            Submodel::PiecewiseRate(p) => p.arrival_times(0.0, p.horizon(), rng),
            Submodel::Copula(c) => c.sample(rng).to_vec(),
            Submodel::Knn(k) => vec![k.predict(input.unwrap())?],
            Submodel::Logistic(l) => l.probabilities(input.unwrap())?,
            Submodel::Function(f) => (f.f)(input, rng),
        })
    }

    /// Convenience for scalar-output instances.
    pub fn invoke_scalar(&self, input: Option<&[f64]>, rng: &mut StreamRng) -> Result<f64> {
        Ok(self.invoke(input, rng)?[0])
    }
}

/// Inverse-CDF draw of an index from a probability vector using one uniform.
/// Zero-probability entries are never chosen; ties at a cumulative boundary go
/// to the lower index.
pub fn sample_discrete(probs: &[f64], rng: &mut StreamRng) -> usize {
    let u: f64 = rng.random();
    pick_discrete(probs, u)
}

pub(crate) fn pick_discrete(probs: &[f64], u: f64) -> usize {
    let total: f64 = probs.iter().sum();
    let target = u * total;
    let mut cum = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        last_positive = i;
        cum += p;
        if target < cum {
            return i;
        }
    }
    last_positive
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub input: Option<Vec<f64>>,
    pub output: Vec<f64>,
}

impl Record {
    pub fn output(output: Vec<f64>) -> Self {
        Self { input: None, output }
    }

    pub fn pair(input: Vec<f64>, output: Vec<f64>) -> Self {
        Self {
            input: Some(input),
            output,
        }
    }
}

/// Observations used to fit one submodel, or one joint group of submodels
/// (in which case `submodel_id` names the first member).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingDataset {
    pub submodel_id: usize,
    pub records: Vec<Record>,
}

impl TrainingDataset {
    pub fn new(submodel_id: usize, records: Vec<Record>) -> Self {
        Self { submodel_id, records }
    }

    /// Output-only dataset of scalar observations.
    pub fn scalars(submodel_id: usize, xs: &[f64]) -> Self {
        Self::new(submodel_id, xs.iter().map(|&x| Record::output(vec![x])).collect())
    }

    /// Paired dataset of scalar (input, output) observations.
    pub fn scalar_pairs(submodel_id: usize, xs: &[f64], ys: &[f64]) -> Self {
        Self::new(
            submodel_id,
            xs.iter().zip(ys).map(|(&x, &y)| Record::pair(vec![x], vec![y])).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn has_inputs(&self) -> bool {
        self.records.iter().any(|r| r.input.is_some())
    }

    /// Column `col` of the outputs.
    pub fn output_column(&self, col: usize) -> Vec<f64> {
        self.records.iter().map(|r| r.output[col]).collect()
    }
}
