//! The discrete-event engine, energy model, metrics, trace and the named
//! experiment scenarios.

mod config;
mod energy;
mod engine;
mod metrics;
mod scenarios;
mod trace;

pub use config::{
    AtpcConfig, ChannelConfig, Compensation, InterfererConfig, MobilityTrace, NodeOverride, RadioConfig,
    ScenarioParams, SimConfig, TopologyConfig, TrafficConfig,
};
pub use energy::{energy_consumed, EnergyProfile, EnergyReport, RadioState};
pub use engine::{run, stream_rng, RunOutput};
pub use metrics::{CsvTable, Metrics, MetricsTable, NodeMetrics, METRICS_HEADER};
pub use scenarios::{
    atpc_closed_loop, cfo_errors, csi_error, r_squared, run_scenario, AtpcStep, ScenarioOutput, SCENARIOS,
};
pub use trace::{check_invariants, Entity, Trace, TraceEvent, TraceRecord, Violation};
