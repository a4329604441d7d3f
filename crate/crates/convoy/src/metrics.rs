//! Run metrics: sampled time series, the replacement log and summary
//! counters, plus the fixed-format CSV exports.

use serde::{Deserialize, Serialize};
use std::io::{self, Write};

/// Why a run ended.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Termination {
    MaxSimTime,
    RobotDepleted { robot_id: u32 },
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Termination::MaxSimTime => write!(f, "max_sim_time"),
            Termination::RobotDepleted { robot_id } => write!(f, "robot_{robot_id}_depleted"),
        }
    }
}

/// One retained sample of one robot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotSample {
    pub time_s: f64,
    pub robot_id: u32,
    pub role: String,
    pub voltage_v: f64,
    pub discharge_mah: f64,
    pub remaining_fraction: f64,
    pub x_m: f64,
    pub y_m: f64,
}

/// One completed robot swap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplacementEvent {
    pub time_s: f64,
    pub hub_id: u32,
    pub leaving: u32,
    pub entering: u32,
    /// Leaver's remaining fraction when its swap cycle began.
    pub remaining_fraction_at_swap: f64,
    /// Wall-clock duration of the swap cycle, seconds.
    pub duration_s: f64,
}

/// Aggregated outcome of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub operational_time_s: f64,
    pub distance_m: f64,
    pub replacement_count: usize,
    pub waiting_time_s: f64,
    pub replacing_time_s: f64,
    pub sim_time_s: f64,
    pub termination: Termination,
    /// First time any formation robot's voltage crossed the configured
    /// threshold, if it did.
    pub first_threshold_crossing_s: Option<f64>,
    /// Smallest payload-supporter count observed during any tick.
    pub min_supporters: usize,
    /// Whether every tick kept each robot in exactly one role.
    pub conservation_ok: bool,
    /// Formation separation violations observed outside swap transients.
    pub separation_violations: usize,
    pub seed: u64,
    pub payload_mass_kg: f64,
    pub policy: String,
}

/// Full result of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub summary: RunSummary,
    pub samples: Vec<RobotSample>,
    pub replacements: Vec<ReplacementEvent>,
}

impl RunMetrics {
    /// Writes the replacement log in its fixed column order.
    pub fn write_replacements_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(
            w,
            "time_s,hub_id,leaving,entering,remaining_fraction_at_swap,duration_s"
        )?;
        for r in &self.replacements {
            writeln!(
                w,
                "{:.3},{},{},{},{:.6},{:.3}",
                r.time_s, r.hub_id, r.leaving, r.entering, r.remaining_fraction_at_swap, r.duration_s
            )?;
        }
        Ok(())
    }

    /// Serializes the summary as a structured-text record.
    pub fn summary_toml(&self) -> String {
        toml::to_string_pretty(&self.summary).expect("summary serializes")
    }
}

/// Per-tick view of one robot, handed to observers.
#[derive(Debug, Clone)]
pub struct RobotTickView {
    pub robot_id: u32,
    pub role: &'static str,
    pub voltage_v: f64,
    pub discharge_mah: f64,
    pub remaining_fraction: f64,
    pub x_m: f64,
    pub y_m: f64,
}

/// Per-tick view of the whole world.
#[derive(Debug, Clone)]
pub struct TickView<'a> {
    pub time_s: f64,
    pub phase: &'static str,
    pub supporters: usize,
    pub robots: &'a [RobotTickView],
}

/// Streaming consumer of simulation ticks; used for CSV export and for
/// independent invariant checks in tests.
pub trait TickObserver {
    fn on_tick(&mut self, view: &TickView<'_>);
}

/// No-op observer.
pub struct NullObserver;

impl TickObserver for NullObserver {
    fn on_tick(&mut self, _view: &TickView<'_>) {}
}

/// Streams the fixed-format per-tick CSV:
/// `time_s,robot_id,role,voltage_v,discharge_mah,x_m,y_m`.
pub struct CsvTickWriter<W: Write> {
    out: W,
    wrote_header: bool,
}

impl<W: Write> CsvTickWriter<W> {
    pub fn new(out: W) -> Self {
        Self {
            out,
            wrote_header: false,
        }
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write> TickObserver for CsvTickWriter<W> {
    fn on_tick(&mut self, view: &TickView<'_>) {
        if !self.wrote_header {
            writeln!(self.out, "time_s,robot_id,role,voltage_v,discharge_mah,x_m,y_m")
                .expect("tick csv write");
            self.wrote_header = true;
        }
        for r in view.robots {
            writeln!(
                self.out,
                "{:.3},{},{},{:.6},{:.6},{:.6},{:.6}",
                view.time_s, r.robot_id, r.role, r.voltage_v, r.discharge_mah, r.x_m, r.y_m
            )
            .expect("tick csv write");
        }
    }
}
