//! Multi-agent exploration simulator: scenario files, world generators,
//! the deterministic tick loop, and the sweep/trace/instance tooling the
//! command-line front end exposes.

pub mod ablate;
pub mod generate;
pub mod instance;
pub mod metrics;
pub mod scenario;
pub mod sim;
pub mod trace;

pub use metrics::RunMetrics;
pub use scenario::{build_world, Mode, ScenarioConfig, World};
pub use sim::{run_world, Simulation};
