//! Submodel uncertainty in stochastic simulation.
//!
//! Resample plausible submodel instances, run stacked Latin hypercube
//! experiments over them, build quantile intervals for a KPI and attribute
//! its variability to individual submodels with fully grown regression trees.

pub mod analysis;
pub mod contact_center;
pub mod design;
pub mod error;
pub mod families;
pub mod harness;
pub mod model;
pub mod numeric;
pub mod plot;
pub mod resample;
pub mod stream;
pub mod submodel;
pub mod synthetic;
pub mod twin;

pub use design::DesignMatrix;
pub use error::{Error, Result};
pub use model::{FnModel, SimulationModel};
pub use resample::{Family, Fitter, JointGroup, ResampleMode, ResamplePlan};
pub use stream::{RandomStream, StreamRng};
pub use submodel::{Provenance, Record, Submodel, SubmodelInstance, SubmodelKind, TrainingDataset};
