//! Grids, states, operators and the Gaussian collapse primitives.

pub mod gaussian;
pub mod grid;
pub mod operator;
pub mod params;
pub mod spectral;
pub mod state;
pub mod tensor;

pub use gaussian::{
    collapse_density, collapse_state, collapse_state_symmetric, collapse_weight, collapse_weights, gaussian_profile,
    CollapseKernel, CollapseTarget,
};
pub use grid::{Configuration, GridSpec, StateKind, MIXED_DIM_CAP, PURE_DIM_CAP};
pub use operator::{build_hamiltonian, mass_density_operator, DensityWeight, Hamiltonian, LinOp};
pub use params::{expected_flash_rate, GrwParams, PhysicalDefaults, PHYSICAL_DEFAULTS};
pub use state::{DensityMatrix, StateVector, C64};
pub use tensor::{tensor_split, TensorSplit};
