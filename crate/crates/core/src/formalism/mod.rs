pub mod experiment;
pub mod povm;
pub mod update;

pub use experiment::{experiment_povm, ExperimentSpec, OutcomeMap, OutcomeRule};
pub use povm::{flash_history_povm, history_label, history_probabilities, outcome_distribution, HistoryEffect, Povm};
pub use update::{bell_pair, formalism_update, ideal_operation, local_potential, no_signaling_check, system_flash_marginal, SystemHistory};
