//! Experiment harness around the `predopt` toolkit: config files in, CSV
//! result rows out.
//!
//! The binary (`predopt`) wraps two operations that are also callable as a
//! library (the integration tests drive them directly):
//!
//! - [`config::parse_config`]: parse + fully validate an experiment file.
//! - [`experiment::execute_run`]: run every (repetition × method) cell and
//!   append one CSV row per cell to `results.csv`.

pub mod config;
pub mod experiment;
