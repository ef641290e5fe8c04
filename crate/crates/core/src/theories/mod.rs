//! The theory registry: each theory turns initial data, parameters and a
//! seed into a history of its primitive ontology.

pub mod cat;
pub mod id;
pub mod run;

pub use cat::{cat_scenario, CatScenario, CatSpec};
pub use id::{PoKind, TheoryId};
pub use run::{
    circular_mean, mean_configuration, run_theory, InitialConfig, InitialData, PoHistory, PrimitiveOntology,
    RunOptions, TheoryContext,
};
