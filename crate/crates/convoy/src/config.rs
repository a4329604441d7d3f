//! World configuration: the single document describing a simulation run.
//!
//! Configs are plain TOML mirroring the field names here; see
//! `docs/world.example.toml` for a fully commented example. Shared robot
//! and battery parameters apply to the whole fleet; the roster partitions
//! robots into the initial formation, hub residents and support robots.

use crate::battery::{self, BatteryParams};
use crate::drivetrain::{self, BodyVelocity, RobotParams};
use crate::formation::{ControlGains, FormationSlot, TrajectorySpec, SEPARATION_MARGIN_M};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config serialize error: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Which replacement policy runs at hub arrivals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyConfig {
    /// No replacements; the run ends at the first depletion.
    None,
    /// Replace any active robot whose remaining fraction fell below the
    /// threshold with the most-charged eligible robot at the hub.
    Baseline { threshold_fraction: f64 },
    /// Moving-horizon optimization over the next `horizon_k` hubs.
    Optimized {
        horizon_k: usize,
        w1: f64,
        w2: f64,
        /// Battery threshold in mAh of accumulated discharge. When omitted
        /// it is derived from `threshold_voltage` through the battery curve.
        #[serde(default)]
        d_th_mah: Option<f64>,
    },
}

impl PolicyConfig {
    pub fn label(&self) -> String {
        match self {
            PolicyConfig::None => "none".into(),
            PolicyConfig::Baseline { threshold_fraction } => {
                format!("baseline{}", (threshold_fraction * 100.0).round() as u32)
            }
            PolicyConfig::Optimized { horizon_k, .. } => format!("optimized_k{horizon_k}"),
        }
    }

    /// Parses the compact command-line form: `none`, `baseline30`,
    /// `baseline40`, `baseline:0.35`, `optimized`, `optimized:3`.
    pub fn parse_flag(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(PolicyConfig::None),
            "baseline30" => Ok(PolicyConfig::Baseline {
                threshold_fraction: 0.30,
            }),
            "baseline40" => Ok(PolicyConfig::Baseline {
                threshold_fraction: 0.40,
            }),
            "optimized" => Ok(PolicyConfig::Optimized {
                horizon_k: 2,
                w1: 1.0,
                w2: default_w2(),
                d_th_mah: None,
            }),
            other => {
                if let Some(t) = other.strip_prefix("baseline:") {
                    let threshold: f64 =
                        t.parse().map_err(|_| format!("bad threshold in '{other}'"))?;
                    Ok(PolicyConfig::Baseline {
                        threshold_fraction: threshold,
                    })
                } else if let Some(k) = other.strip_prefix("optimized:") {
                    let horizon: usize =
                        k.parse().map_err(|_| format!("bad horizon in '{other}'"))?;
                    Ok(PolicyConfig::Optimized {
                        horizon_k: horizon,
                        w1: 1.0,
                        w2: default_w2(),
                        d_th_mah: None,
                    })
                } else {
                    Err(format!(
                        "unknown policy '{other}' (expected none|baseline30|baseline40|\
                         baseline:<frac>|optimized|optimized:<k>)"
                    ))
                }
            }
        }
    }
}

fn default_w2() -> f64 {
    0.5
}

/// A recharge hub along the trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HubConfig {
    pub position: [f64; 2],
    #[serde(default = "default_trigger_radius")]
    pub trigger_radius_m: f64,
    /// Robots parked here at the start.
    #[serde(default)]
    pub residents: Vec<u32>,
}

fn default_trigger_radius() -> f64 {
    0.5
}

/// Fleet roster: which robots exist and where they begin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetConfig {
    /// Robots forming up on the payload at the start; the first id takes
    /// the leader slot.
    pub initial_formation: Vec<u32>,
    /// Extra robots that prop the payload during swaps; excluded from
    /// scheduling. They park near the first hub.
    #[serde(default)]
    pub support: Vec<u32>,
    /// Initial remaining charge is drawn per robot from this fraction
    /// range, uniformly, using the run seed.
    #[serde(default = "default_initial_fraction")]
    pub initial_remaining_fraction: [f64; 2],
}

fn default_initial_fraction() -> [f64; 2] {
    [0.55, 0.90]
}

/// Slot descriptions in degrees for config ergonomics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotConfig {
    pub rho_m: f64,
    pub psi_deg: f64,
}

impl SlotConfig {
    pub fn to_slot(&self) -> FormationSlot {
        FormationSlot::new(self.rho_m, self.psi_deg)
    }
}

/// Formation geometry and command limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormationConfig {
    /// Slot 0 is the leader slot (rho 0); followers fill the rest.
    pub slots: Vec<SlotConfig>,
    #[serde(default = "default_robot_dimension")]
    pub robot_dimension_m: f64,
    #[serde(default = "default_v_max")]
    pub v_max_mps: f64,
    #[serde(default = "default_w_max")]
    pub w_max_radps: f64,
}

fn default_robot_dimension() -> f64 {
    0.2
}
fn default_v_max() -> f64 {
    0.25
}
fn default_w_max() -> f64 {
    1.5
}

impl FormationConfig {
    pub fn min_separation_m(&self) -> f64 {
        self.robot_dimension_m + SEPARATION_MARGIN_M
    }
}

/// Complete description of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    #[serde(default = "default_dt")]
    pub dt_s: f64,
    pub max_sim_time_s: f64,
    pub seed: u64,
    pub payload_mass_kg: f64,
    #[serde(default = "default_replacement_time")]
    pub replacement_time_s: f64,
    /// Drain halted robots at no-load motor power.
    #[serde(default = "default_true")]
    pub idle_drain: bool,
    /// Voltage whose first crossing is recorded as an endurance metric.
    #[serde(default = "default_threshold_voltage")]
    pub threshold_voltage_v: f64,
    /// Seconds between policy retries while waiting for a replacement.
    #[serde(default = "default_replan_poll")]
    pub replan_poll_s: f64,
    /// Seconds between retained samples in the in-memory time series.
    #[serde(default = "default_sample_every")]
    pub sample_every_s: f64,

    pub trajectory: TrajectorySpec,
    pub formation: FormationConfig,
    #[serde(default)]
    pub gains: ControlGains,
    #[serde(default)]
    pub robot: RobotParams,
    #[serde(default)]
    pub battery: BatteryParams,
    pub hubs: Vec<HubConfig>,
    pub fleet: FleetConfig,
    pub policy: PolicyConfig,
}

fn default_dt() -> f64 {
    0.1
}
fn default_replacement_time() -> f64 {
    180.0
}
fn default_true() -> bool {
    true
}
fn default_threshold_voltage() -> f64 {
    11.5
}
fn default_replan_poll() -> f64 {
    5.0
}
fn default_sample_every() -> f64 {
    1.0
}

impl WorldConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        let cfg: WorldConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, ConfigError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn formation_size(&self) -> usize {
        self.formation.slots.len()
    }

    /// All robot ids in roster order: formation, hub residents, support.
    pub fn all_robot_ids(&self) -> Vec<u32> {
        let mut ids = self.fleet.initial_formation.clone();
        for hub in &self.hubs {
            ids.extend(&hub.residents);
        }
        ids.extend(&self.fleet.support);
        ids
    }

    /// Ids that participate in scheduling (everything but support robots).
    pub fn schedulable_ids(&self) -> Vec<u32> {
        let mut ids = self.fleet.initial_formation.clone();
        for hub in &self.hubs {
            ids.extend(&hub.residents);
        }
        ids.sort_unstable();
        ids
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let inv = |m: String| Err(ConfigError::Invalid(m));
        if !(self.dt_s > 0.0) {
            return inv("dt_s must be > 0".into());
        }
        if !(self.max_sim_time_s > 0.0) {
            return inv("max_sim_time_s must be > 0".into());
        }
        if self.payload_mass_kg < 0.0 {
            return inv("payload_mass_kg must be >= 0".into());
        }
        self.trajectory
            .validate()
            .map_err(ConfigError::Invalid)?;
        self.robot.validate().map_err(ConfigError::Invalid)?;
        self.battery.validate().map_err(ConfigError::Invalid)?;
        if self.formation.slots.is_empty() {
            return inv("formation needs at least one slot".into());
        }
        if self.formation.slots[0].rho_m != 0.0 {
            return inv("slot 0 is the leader slot and must have rho_m = 0".into());
        }
        let min_sep = self.formation.min_separation_m();
        for (i, s) in self.formation.slots.iter().enumerate().skip(1) {
            if s.rho_m < min_sep {
                return inv(format!(
                    "slot {i} distance {} is below the minimum separation {min_sep}",
                    s.rho_m
                ));
            }
        }
        if self.fleet.initial_formation.len() != self.formation.slots.len() {
            return inv(format!(
                "initial_formation has {} robots but the formation has {} slots",
                self.fleet.initial_formation.len(),
                self.formation.slots.len()
            ));
        }
        if !matches!(self.policy, PolicyConfig::None) && self.hubs.is_empty() {
            return inv("replacement policies need at least one hub".into());
        }
        if let PolicyConfig::Optimized { horizon_k, .. } = self.policy {
            if horizon_k < 1 {
                return inv("horizon_k must be >= 1".into());
            }
        }
        if let PolicyConfig::Baseline { threshold_fraction } = self.policy {
            if !(threshold_fraction > 0.0 && threshold_fraction < 1.0) {
                return inv("threshold_fraction must lie in (0, 1)".into());
            }
        }
        let [lo, hi] = self.fleet.initial_remaining_fraction;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return inv("initial_remaining_fraction must be an ordered range in [0, 1]".into());
        }
        // Ids must be unique across the roster.
        let ids = self.all_robot_ids();
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != ids.len() {
            return inv("duplicate robot ids in roster".into());
        }
        Ok(())
    }

    /// Per-robot payload share while carrying, kg.
    pub fn payload_share_kg(&self) -> f64 {
        self.payload_mass_kg / self.formation_size() as f64
    }

    /// Mass of one carrying robot.
    pub fn loaded_mass_kg(&self) -> f64 {
        self.robot.bare_mass_kg() + self.payload_share_kg()
    }

    /// Travel time of one inter-hub leg at nominal speed, seconds. With no
    /// hubs the full lap is a single leg.
    pub fn leg_time_s(&self) -> f64 {
        let legs = self.hubs.len().max(1) as f64;
        self.trajectory.perimeter() / legs / self.trajectory.speed()
    }

    /// Discharge constants (r_d, r_c) for the scheduler, derived from the
    /// drivetrain load at nominal speed and from the charge rate over one
    /// leg.
    pub fn derive_leg_constants(&self) -> (f64, f64) {
        let vel = BodyVelocity::new(self.trajectory.speed(), 0.0);
        let power = drivetrain::steady_state_power(&vel, &self.robot, self.loaded_mass_kg());
        // Current at the nominal full-pack voltage is a good leg-scale
        // estimate; the engine tracks the real value step by step.
        let current_a = power / self.battery.v_full;
        let leg = self.leg_time_s();
        let r_d = current_a * leg * battery::MAH_PER_AMP_SECOND;
        let r_c = -(self.battery.charge_rate_ma / 1000.0) * leg * battery::MAH_PER_AMP_SECOND;
        (r_d, r_c)
    }

    /// Battery threshold for the optimizer, mAh: explicit config value or
    /// the discharge at which the fitted curve crosses the threshold
    /// voltage.
    pub fn derive_d_th(&self) -> f64 {
        if let PolicyConfig::Optimized {
            d_th_mah: Some(d), ..
        } = self.policy
        {
            return d;
        }
        battery::discharge_at_curve_value(&self.battery, self.threshold_voltage_v)
            .unwrap_or(self.battery.capacity_mah)
    }
}

/// The twelve-robot, three-hub reference scenario used by the comparison
/// campaigns: F = 3 on a circular trajectory, nine spares spread over the
/// hubs, one support robot, slow hub charging so the fleet genuinely runs
/// down.
pub fn standard_scenario(payload_mass_kg: f64, policy: PolicyConfig, seed: u64) -> WorldConfig {
    let radius = 6.0;
    let hub_offset = 0.45;
    let hub_r = radius + hub_offset;
    let hub_angle = |i: f64| 2.0 * std::f64::consts::PI * i / 3.0;
    WorldConfig {
        dt_s: 0.1,
        max_sim_time_s: 22_000.0,
        seed,
        payload_mass_kg,
        replacement_time_s: 180.0,
        idle_drain: true,
        threshold_voltage_v: 11.5,
        replan_poll_s: 5.0,
        sample_every_s: 2.0,
        trajectory: TrajectorySpec::Circle {
            center: [0.0, 0.0],
            radius_m: radius,
            speed_mps: 0.06,
            start_angle_rad: 0.3,
        },
        formation: FormationConfig {
            slots: vec![
                SlotConfig {
                    rho_m: 0.0,
                    psi_deg: 0.0,
                },
                SlotConfig {
                    rho_m: 0.6,
                    psi_deg: 90.0,
                },
                SlotConfig {
                    rho_m: 0.6,
                    psi_deg: -90.0,
                },
            ],
            robot_dimension_m: 0.2,
            v_max_mps: 0.25,
            w_max_radps: 1.5,
        },
        gains: ControlGains::default(),
        robot: RobotParams::default(),
        battery: BatteryParams {
            charge_rate_ma: 110.0,
            ..BatteryParams::default()
        },
        hubs: (0..3)
            .map(|i| HubConfig {
                position: [
                    hub_r * hub_angle(i as f64).cos(),
                    hub_r * hub_angle(i as f64).sin(),
                ],
                trigger_radius_m: 0.5,
                residents: vec![4 + 3 * i as u32, 5 + 3 * i as u32, 6 + 3 * i as u32],
            })
            .collect(),
        fleet: FleetConfig {
            initial_formation: vec![1, 2, 3],
            support: vec![13],
            initial_remaining_fraction: [0.55, 0.90],
        },
        policy,
    }
}

/// Standard optimized policy for the reference scenario. The retention
/// weight is expressed in mAh so a swap must buy a meaningful amount of
/// predicted discharge before it is worth the replacement downtime; the
/// battery threshold leaves a 10% reserve at the bottom of the pack.
pub fn standard_optimized_policy() -> PolicyConfig {
    PolicyConfig::Optimized {
        horizon_k: 2,
        w1: 1.0,
        w2: 80.0,
        d_th_mah: Some(1080.0),
    }
}

/// The small single-formation scenario used for endurance-vs-mass runs:
/// three robots, no hubs, no policy, starting near full charge so the
/// threshold-voltage crossing is a meaningful endurance measure.
pub fn endurance_scenario(payload_mass_kg: f64, seed: u64) -> WorldConfig {
    let mut cfg = standard_scenario(payload_mass_kg, PolicyConfig::None, seed);
    cfg.hubs.clear();
    cfg.fleet.support.clear();
    // The fitted curve falls steeply over the first few mAh, so under heavy
    // load the threshold voltage is crossed almost immediately unless the
    // packs start essentially full.
    cfg.fleet.initial_remaining_fraction = [0.99, 1.0];
    cfg.max_sim_time_s = 40_000.0;
    cfg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_scenario_validates() {
        let cfg = standard_scenario(6.0, standard_optimized_policy(), 1);
        cfg.validate().unwrap();
        assert_eq!(cfg.formation_size(), 3);
        assert_eq!(cfg.all_robot_ids().len(), 13);
        assert_eq!(cfg.schedulable_ids().len(), 12);
    }

    #[test]
    fn toml_round_trip_is_identical() {
        let cfg = standard_scenario(6.0, standard_optimized_policy(), 42);
        let text = cfg.to_toml_string().unwrap();
        let back = WorldConfig::from_toml_str(&text).unwrap();
        assert_eq!(cfg, back);

        let again = WorldConfig::from_toml_str(&back.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, again);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = standard_scenario(6.0, PolicyConfig::None, 1);
        cfg.dt_s = 0.0;
        assert!(cfg.validate().is_err());

        let mut cfg = standard_scenario(6.0, PolicyConfig::Baseline { threshold_fraction: 0.3 }, 1);
        cfg.hubs.clear();
        assert!(cfg.validate().is_err());

        let mut cfg = standard_scenario(6.0, PolicyConfig::None, 1);
        cfg.fleet.initial_formation = vec![1, 2];
        assert!(cfg.validate().is_err());

        let mut cfg = standard_scenario(6.0, PolicyConfig::None, 1);
        cfg.hubs[0].residents = vec![1];
        assert!(cfg.validate().is_err(), "duplicate ids must be rejected");
    }

    #[test]
    fn policy_flag_parsing() {
        assert_eq!(PolicyConfig::parse_flag("none").unwrap(), PolicyConfig::None);
        assert_eq!(
            PolicyConfig::parse_flag("baseline30").unwrap(),
            PolicyConfig::Baseline {
                threshold_fraction: 0.30
            }
        );
        assert!(matches!(
            PolicyConfig::parse_flag("optimized:3").unwrap(),
            PolicyConfig::Optimized { horizon_k: 3, .. }
        ));
        assert!(PolicyConfig::parse_flag("bogus").is_err());
    }

    #[test]
    fn leg_constants_have_expected_signs_and_scale() {
        let cfg = standard_scenario(6.0, standard_optimized_policy(), 1);
        let (r_d, r_c) = cfg.derive_leg_constants();
        assert!(r_d > 0.0 && r_c < 0.0 && r_d > r_c);
        // One leg is ~200 s; the active draw at 6 kg is around an amp, so
        // the per-leg discharge should be some tens of mAh.
        assert!(r_d > 10.0 && r_d < 200.0, "r_d = {r_d}");
    }

    #[test]
    fn d_th_defaults_to_threshold_voltage_inversion() {
        let cfg = standard_scenario(6.0, PolicyConfig::Optimized {
            horizon_k: 2,
            w1: 1.0,
            w2: 0.5,
            d_th_mah: None,
        }, 1);
        let d = cfg.derive_d_th();
        assert!((d - 275.72).abs() < 0.5, "d_th = {d}");

        let explicit = standard_scenario(6.0, standard_optimized_policy(), 1);
        assert_eq!(explicit.derive_d_th(), 1080.0);
    }
}
