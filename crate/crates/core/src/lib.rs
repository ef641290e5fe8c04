pub mod error;
pub mod evolution;
pub mod formalism;
pub mod harness;
pub mod hilbert;
pub mod ontology;
pub mod readout;
pub mod rng;
pub mod theories;

pub use error::{Error, Result};
