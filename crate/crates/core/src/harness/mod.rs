pub mod acceptance;
pub mod builtins;
pub mod protocols;
pub mod report;
pub mod scenario;
pub mod stats;

pub use acceptance::{run_acceptance, CriterionResult};
pub use builtins::{builtin, builtin_scenarios};
pub use protocols::{equivalence_suite, equivariance_test, grwp3_conditional_test, run_scenario, ScenarioOutput};
pub use report::{write_run_dir, Check, Manifest, RawTable, ReportFormat, Requirement, Status, TestReport};
pub use scenario::{Expectation, Model, ModelSpec, ReadoutSpec, ScenarioConfig, StateSpec, TestPlan};
pub use stats::{chi2_test, chi2_two_sample, fisher_combine, ks_test, tv_distance, TestStatistic};
