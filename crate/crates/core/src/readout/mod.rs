//! Outcomes read off primitive ontologies: calibration functions and
//! macro-state classification.

pub mod calibration;
pub mod partition;

pub use calibration::{calibrate, mean_x1_flashes, mean_x1_matter, Calibration, Outcome, Region, DEFAULT_WINDOW};
pub use partition::{classify_po, macro_distribution, macro_probability, MacroLabel, MacroPartition, DOMINANCE};
