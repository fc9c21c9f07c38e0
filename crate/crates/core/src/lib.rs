//! Simulator of a wireless rechargeable sensor network under
//! denial-of-charging attack, with a statistical detection engine and a
//! twin-controlled charging queue.
//!
//! Module map:
//! - [`config`]: every tunable plus validation and the config-file format
//! - [`sim`]: the fixed-step physical plane (nodes, MCVs, energy transfer)
//! - [`attack`]: ground-truth-labeled adversary injection
//! - [`detect`]: the four maliciousness scorers, estimators, calibration
//! - [`twin`]: the replica network and the controller loop
//! - [`metrics`]: evaluation metrics and result export
//! - [`scenario`]: run/sweep/calibrate orchestration
//! - [`stats`], [`trace`]: numerics and the record stream underneath

pub mod attack;
pub mod config;
pub mod detect;
pub mod metrics;
pub mod scenario;
pub mod sim;
pub mod stats;
pub mod trace;
pub mod twin;

pub use config::{
    load_config, parse_config_str, validate_config, AttackSpec, AttackTier, ConfigError,
    DetectorParams, NetworkConfig, Point, ScenarioConfig, ScoreMode, ValidationReport, Weights,
};
pub use metrics::ScenarioResult;
pub use scenario::{
    calibrate, parse_sweep_str, run_scenario, run_sweep, write_sweep_outputs, ScenarioError,
    ScenarioOutcome, SweepOutput, SweepSpec,
};
