//! The contract a simulation model must satisfy to be driven by the harness.

use crate::error::Result;
use crate::stream::StreamRng;
use crate::submodel::SubmodelInstance;

/// A stochastic simulation whose `L` submodel slots are filled from an
/// instance vector on every replication.
///
/// Implementations must be re-entrant: replications run concurrently and
/// all randomness has to come from the supplied generator.
pub trait SimulationModel: Sync {
    /// Model-specific hot-start state. Use `()` for models without one.
    type State: Sync;

    fn num_submodels(&self) -> usize;

    fn kpi_name(&self) -> &str {
        "kpi"
    }

    fn replicate(
        &self,
        instances: &[&SubmodelInstance],
        state: Option<&Self::State>,
        rng: &mut StreamRng,
    ) -> Result<f64>;
}

/// Adapter turning a closure into a stateless [`SimulationModel`].
pub struct FnModel<F> {
    slots: usize,
    name: String,
    f: F,
}

impl<F> FnModel<F>
where
    F: Fn(&[&SubmodelInstance], &mut StreamRng) -> Result<f64> + Sync,
{
    pub fn new(slots: usize, name: impl Into<String>, f: F) -> Self {
        Self {
            slots,
            name: name.into(),
            f,
        }
    }
}

impl<F> SimulationModel for FnModel<F>
where
    F: Fn(&[&SubmodelInstance], &mut StreamRng) -> Result<f64> + Sync,
{
    type State = ();

    fn num_submodels(&self) -> usize {
        self.slots
    }

    fn kpi_name(&self) -> &str {
        &self.name
    }

    fn replicate(&self, instances: &[&SubmodelInstance], _: Option<&()>, rng: &mut StreamRng) -> Result<f64> {
        (self.f)(instances, rng)
    }
}
