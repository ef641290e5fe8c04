//! Unitary propagation, the GRW jump process, the master equation, the
//! collapsing density-matrix process and the discrete-time Kraus tree.

pub mod ensemble;
pub mod grw;
pub mod kraus;
pub mod log;
pub mod master;
pub mod mgrwf;
pub mod propagator;

pub use ensemble::{ensemble_density_matrix, sample_grw_ensemble};
pub use grw::{
    sample_grw_trajectory, CollapseEvent, CollapseMode, CollapseSchedule, GrwClock, GrwOptions, TrajectoryRecord,
};
pub use kraus::{history_operators, kraus_tree, KrausBranch, KrausNode, KrausStep};
pub use log::{parse_event_log, replay_events, EventLog};
pub use master::{master_propagate, MasterEquation, MasterMethod};
pub use mgrwf::mgrwf_trajectory;
pub use propagator::{schrodinger_propagate, Propagator, QuantumState};
