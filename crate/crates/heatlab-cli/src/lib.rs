//! Command-line harness around the `heatlab` estimator suite.
//!
//! The binary reads an INI-style config, runs the requested measurement
//! scenarios over a sweep of mesh levels, and writes one CSV report plus a
//! human summary with a level-wise growth verdict per tracked quantity.

pub mod config;
pub mod run;
