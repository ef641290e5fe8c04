//! Primitive ontologies read off states and collapse histories: matter
//! density fields, flashes and particle world lines.

pub mod flash;
pub mod matter;
pub mod sampling;
pub mod velocity;

pub use flash::{extract_flashes, Flash, FlashSet};
pub use matter::{matter_density, matter_density_from_dm, MatterField};
pub use sampling::{sample_quantum_equilibrium, EquilibriumSampler, EquilibriumSampling};
pub use velocity::{
    bohm_velocity, integrate_path, mbm_continuity_residual, mbm_velocity, BohmField, FieldLattice, FieldSource,
    MbmField, MixedSource, ParticlePath, PureSource, Velocity, VelocityField, NODE_EPSILON,
};
