//! Deterministic simulator and scheduling library for multi-robot payload
//! transport with battery-aware robot replacement.
//!
//! A formation of differential-drive robots carries a payload around a
//! closed trajectory lined with recharge hubs. Active robots drain their
//! batteries according to an empirical Li-Ion model driven by drivetrain
//! load; parked robots recharge. At every hub a replacement policy decides
//! which robots swap out: a naive charge threshold, or a moving-horizon
//! binary quadratic program that trades predicted discharge against robot
//! retention. The crate provides:
//!
//! - [`battery`]: the discharge/charge model,
//! - [`drivetrain`]: kinematics, inverse dynamics, motor power,
//! - [`formation`]: trajectories and the leader-follower control law,
//! - [`scheduler`]: the horizon program, its exact solver, and the
//!   baseline policy,
//! - [`engine`]: the tick-driven world with the replacement state machine,
//! - [`config`]: TOML-backed world configuration,
//! - [`metrics`]: run metrics and CSV export.

pub mod battery;
pub mod config;
pub mod drivetrain;
pub mod engine;
pub mod formation;
pub mod metrics;
pub mod scheduler;

pub use config::{PolicyConfig, WorldConfig};
pub use engine::{run, run_with_observer, World};
pub use metrics::{RunMetrics, RunSummary};
