//! Experiment drivers, configuration, and reporting for the lattice Dirac
//! laboratory CLI. The binary wraps these; the acceptance suite calls them
//! directly.

pub mod config;
pub mod drivers;
pub mod report;

pub use config::ExperimentConfig;
pub use drivers::{DriverError, DriverResult};
pub use report::RunReport;
