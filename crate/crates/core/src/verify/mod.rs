//! Verification suites: independent reference implementations, random
//! instance generators and finite-difference gradient checks.
//!
//! Nothing in the training path depends on this module. The reference code
//! here shares no classification or distance helpers with the library so a
//! bug in one is unlikely to be mirrored in the other. Every suite takes the
//! function under test as an argument, which lets tests feed it deliberately
//! broken variants.

pub mod gradcheck;
pub mod instances;
pub mod oracle;

pub use gradcheck::{check_model, check_reg_loss, check_si_loss, GradReport};
pub use instances::{random_reg_instance, RegInstance, StrategyKind};
pub use oracle::{
    check_metrics_oracle, check_partition, check_reg_oracle, check_subsumption, oracle_metrics,
    oracle_reg_loss, OracleReport,
};
