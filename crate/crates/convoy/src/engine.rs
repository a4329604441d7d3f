//! Tick-driven world simulation.
//!
//! Each tick advances the leader along its trajectory, runs the follower
//! control law, converts commanded motion into electrical power and battery
//! discharge, charges hub-resident robots, and drives the replacement state
//! machine when the selected policy orders a swap. Everything is
//! deterministic given the config seed: the only randomness is the initial
//! battery draw.

use crate::battery::{self, BatteryError, BatteryState};
use crate::config::{PolicyConfig, WorldConfig};
use crate::drivetrain::{self, BodyVelocity, Pose};
use crate::formation::{self, ControllerState, FormationSlot};
use crate::metrics::{
    NullObserver, ReplacementEvent, RobotSample, RobotTickView, RunMetrics, RunSummary,
    Termination, TickObserver, TickView,
};
use crate::scheduler::{self, BaselineOutcome, ScheduleError, ScheduleProblem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("battery model error: {0}")]
    Battery(String),
}

/// Where a robot currently is.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Formation { slot: usize },
    HubResident { hub: usize },
    /// Parked support robot (home is its hub park spot).
    Support,
    /// Moving between hub and formation during a swap.
    Transit,
}

impl Role {
    fn label(&self) -> &'static str {
        match self {
            Role::Formation { slot: 0 } => "leader",
            Role::Formation { .. } => "follower",
            Role::HubResident { .. } => "hub",
            Role::Support => "support",
            Role::Transit => "transit",
        }
    }
}

#[derive(Debug, Clone)]
struct Robot {
    id: u32,
    pose: Pose,
    battery: BatteryState,
    ctrl: ControllerState,
    role: Role,
    piston_up: bool,
    prev_cmd: BodyVelocity,
    /// Hub whose park ring this robot returns to when idle.
    home_hub: usize,
}

/// The timed stages of one swap cycle, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SwapStage {
    PistonsUp,
    SupportJoining,
    SupportUp,
    LeaverDown,
    LeaverExit,
    EntrantJoin,
    EntrantUp,
    SupportDown,
    SupportExit,
    PistonsDown,
}

/// Drivetrain ramp limits applied to the accelerations fed into the
/// torque model, m/s² and rad/s².
const ACCEL_LIMIT: f64 = 0.05;
const YAW_ACCEL_LIMIT: f64 = 0.5;

const SWAP_STAGES: [SwapStage; 10] = [
    SwapStage::PistonsUp,
    SwapStage::SupportJoining,
    SwapStage::SupportUp,
    SwapStage::LeaverDown,
    SwapStage::LeaverExit,
    SwapStage::EntrantJoin,
    SwapStage::EntrantUp,
    SwapStage::SupportDown,
    SwapStage::SupportExit,
    SwapStage::PistonsDown,
];

#[derive(Debug, Clone)]
struct ActiveMove {
    robot: usize,
    from: (f64, f64),
    to: (f64, f64),
}

#[derive(Debug, Clone)]
struct SwapCycle {
    hub: usize,
    leaver: usize,
    entrant: usize,
    support: usize,
    slot: usize,
    stage_idx: usize,
    stage_elapsed_s: f64,
    started_at_s: f64,
    leaver_fraction_at_start: f64,
    current_move: Option<ActiveMove>,
}

#[derive(Debug, Clone)]
enum Phase {
    Transporting,
    Swapping(SwapCycle),
    Waiting { hub: usize, next_poll_s: f64 },
}

impl Phase {
    fn label(&self) -> &'static str {
        match self {
            Phase::Transporting => "transporting",
            Phase::Swapping(_) => "swapping",
            Phase::Waiting { .. } => "waiting",
        }
    }
}

/// A scheduled swap still waiting for its cycle to run.
#[derive(Debug, Clone, Copy)]
struct PendingSwap {
    hub: usize,
    leaver: usize,
    entrant: usize,
}

/// The simulation world. Construct with [`World::new`], drive with
/// [`World::step`] or run to completion with [`run`].
pub struct World {
    cfg: WorldConfig,
    robots: Vec<Robot>,
    phase: Phase,
    time_s: f64,
    transport_time_s: f64,
    operational_time_s: f64,
    waiting_time_s: f64,
    replacing_time_s: f64,
    distance_m: f64,
    inside_hub: Option<usize>,
    pending: VecDeque<PendingSwap>,
    /// Enter Waiting at this hub once the pending queue drains.
    wait_after_queue: Option<usize>,
    /// Indices of schedulable robots in problem order.
    sched_idx: Vec<usize>,
    /// Cyclic hub visit order along the trajectory and each hub's rank.
    hub_rank: Vec<usize>,
    r_d: f64,
    r_c: f64,
    d_th: f64,
    replacements: Vec<ReplacementEvent>,
    samples: Vec<RobotSample>,
    next_sample_s: f64,
    first_threshold_crossing_s: Option<f64>,
    min_supporters: usize,
    conservation_ok: bool,
    separation_violations: usize,
    termination: Option<Termination>,
    tick_robot_views: Vec<RobotTickView>,
}

impl World {
    pub fn new(cfg: WorldConfig) -> Result<Self, EngineError> {
        cfg.validate().map_err(|e| EngineError::Config(e.to_string()))?;
        if !matches!(cfg.policy, PolicyConfig::None) && cfg.fleet.support.is_empty() {
            return Err(EngineError::Config(
                "replacement policies need at least one support robot".into(),
            ));
        }

        // Deterministic initial charge: draw per robot in ascending id order
        // so every policy sees the same fleet for the same seed.
        let mut ids = cfg.all_robot_ids();
        ids.sort_unstable();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let [lo, hi] = cfg.fleet.initial_remaining_fraction;
        let mut initial_discharge = std::collections::BTreeMap::new();
        for &id in &ids {
            let fraction: f64 = if hi > lo { rng.gen_range(lo..hi) } else { lo };
            initial_discharge.insert(id, (1.0 - fraction) * cfg.battery.capacity_mah);
        }

        let (leader_pose, _) = formation::leader_command(0.0, &cfg.trajectory);
        let mut robots: Vec<Robot> = Vec::new();
        let mut push_robot = |id: u32, pose: Pose, role: Role, home_hub: usize| {
            let d0 = initial_discharge[&id];
            robots.push(Robot {
                id,
                pose,
                battery: BatteryState::at_discharge(&cfg.battery, d0)
                    .expect("initial battery state"),
                ctrl: ControllerState::default(),
                role,
                piston_up: false,
                prev_cmd: BodyVelocity::default(),
                home_hub,
            });
        };
        for (slot, &id) in cfg.fleet.initial_formation.iter().enumerate() {
            let pose = formation::slot_world_target(&leader_pose, &slot_of(&cfg, slot));
            push_robot(id, pose, Role::Formation { slot }, 0);
        }
        for (h, hub) in cfg.hubs.iter().enumerate() {
            for &id in &hub.residents {
                push_robot(id, park_pose(&cfg, h, id), Role::HubResident { hub: h }, h);
            }
        }
        for &id in &cfg.fleet.support {
            let pose = if cfg.hubs.is_empty() {
                Pose::new(0.0, 0.0, 0.0)
            } else {
                park_pose(&cfg, 0, id)
            };
            push_robot(id, pose, Role::Support, 0);
        }
        robots.sort_by_key(|r| r.id);

        let sched_ids = cfg.schedulable_ids();
        let sched_idx = sched_ids
            .iter()
            .map(|id| robots.iter().position(|r| r.id == *id).unwrap())
            .collect();

        let hub_rank = hub_visit_ranks(&cfg);
        let (r_d, r_c) = cfg.derive_leg_constants();
        let d_th = cfg.derive_d_th();
        let formation_size = cfg.formation_size();

        Ok(Self {
            cfg,
            robots,
            phase: Phase::Transporting,
            time_s: 0.0,
            transport_time_s: 0.0,
            operational_time_s: 0.0,
            waiting_time_s: 0.0,
            replacing_time_s: 0.0,
            distance_m: 0.0,
            inside_hub: None,
            pending: VecDeque::new(),
            wait_after_queue: None,
            sched_idx,
            hub_rank,
            r_d,
            r_c,
            d_th,
            replacements: Vec::new(),
            samples: Vec::new(),
            next_sample_s: 0.0,
            first_threshold_crossing_s: None,
            min_supporters: formation_size,
            conservation_ok: true,
            separation_violations: 0,
            termination: None,
            tick_robot_views: Vec::new(),
        })
    }

    pub fn config(&self) -> &WorldConfig {
        &self.cfg
    }

    pub fn time_s(&self) -> f64 {
        self.time_s
    }

    pub fn finished(&self) -> bool {
        self.termination.is_some()
    }

    pub fn phase_label(&self) -> &'static str {
        self.phase.label()
    }

    /// Robots as (id, role label, pose, voltage, remaining fraction,
    /// piston up) for display front ends.
    pub fn robot_display_states(&self) -> Vec<(u32, &'static str, Pose, f64, f64, bool)> {
        self.robots
            .iter()
            .map(|r| {
                (
                    r.id,
                    r.role.label(),
                    r.pose,
                    r.battery.voltage,
                    battery::remaining_fraction(&self.cfg.battery, &r.battery),
                    r.piston_up,
                )
            })
            .collect()
    }

    pub fn hub_positions(&self) -> Vec<([f64; 2], f64)> {
        self.cfg
            .hubs
            .iter()
            .map(|h| (h.position, h.trigger_radius_m))
            .collect()
    }

    pub fn replacement_count(&self) -> usize {
        self.replacements.len()
    }

    pub fn operational_time_s(&self) -> f64 {
        self.operational_time_s
    }

    /// Advances one tick. No-op once the run has terminated.
    pub fn step(&mut self, observer: &mut dyn TickObserver) {
        if self.termination.is_some() {
            return;
        }
        let dt = self.cfg.dt_s;
        self.time_s += dt;

        let phase = std::mem::replace(&mut self.phase, Phase::Transporting);
        match phase {
            Phase::Transporting => self.step_transporting(dt),
            Phase::Swapping(cycle) => self.step_swapping(cycle, dt),
            Phase::Waiting { hub, next_poll_s } => self.step_waiting(hub, next_poll_s, dt),
        }

        self.check_threshold_crossing();
        self.check_invariants();
        self.record_tick(observer);

        if self.termination.is_none() && self.time_s >= self.cfg.max_sim_time_s - 1e-9 {
            self.termination = Some(Termination::MaxSimTime);
        }
    }

    fn step_transporting(&mut self, dt: f64) {
        self.transport_time_s += dt;
        self.operational_time_s += dt;
        self.distance_m += self.cfg.trajectory.speed() * dt;

        // Leader snapshot first: all followers read the same reference.
        let (leader_pose, leader_vel) =
            formation::leader_command(self.transport_time_s, &self.cfg.trajectory);
        let wheel_rates = drivetrain::wheel_speeds(&leader_vel, &self.cfg.robot);

        let mut commands: Vec<(usize, BodyVelocity)> = Vec::new();
        for idx in 0..self.robots.len() {
            let Role::Formation { slot } = self.robots[idx].role else {
                continue;
            };
            if slot == 0 {
                let r = &mut self.robots[idx];
                r.pose = Pose {
                    phi_r: r.pose.phi_r + wheel_rates.0 * dt,
                    phi_l: r.pose.phi_l + wheel_rates.1 * dt,
                    ..leader_pose
                };
                commands.push((idx, leader_vel));
            } else {
                let slot_spec = slot_of(&self.cfg, slot);
                let r = &self.robots[idx];
                let (cmd, ctrl) = formation::follower_command(
                    &leader_pose,
                    &leader_vel,
                    &r.pose,
                    &slot_spec,
                    &self.cfg.gains,
                    &r.ctrl,
                    dt,
                )
                .expect("center offset validated non-zero");
                let cmd = cmd.clamped(self.cfg.formation.v_max_mps, self.cfg.formation.w_max_radps);
                let r = &mut self.robots[idx];
                r.ctrl = ctrl;
                r.pose = drivetrain::integrate_kinematics(&r.pose, &cmd, &self.cfg.robot, dt);
                commands.push((idx, cmd));
            }
        }

        let loaded_mass = self.cfg.loaded_mass_kg();
        for (idx, cmd) in commands {
            self.drain_moving(idx, cmd, loaded_mass, dt);
        }
        self.update_idle_batteries(dt, &[]);

        if self.termination.is_none() {
            if let Some(hub) = self.hub_arrival_check() {
                self.run_policy_at_hub(hub);
            }
        }
    }

    fn step_swapping(&mut self, mut cycle: SwapCycle, dt: f64) {
        self.replacing_time_s += dt;
        let stage_duration = self.cfg.replacement_time_s / SWAP_STAGES.len() as f64;
        cycle.stage_elapsed_s += dt;
        let progress = (cycle.stage_elapsed_s / stage_duration).min(1.0);

        let mut moving: Vec<usize> = Vec::new();
        if let Some(mv) = &cycle.current_move {
            let r = &mut self.robots[mv.robot];
            let (fx, fy) = mv.from;
            let (tx, ty) = mv.to;
            let heading = (ty - fy).atan2(tx - fx);
            r.pose = Pose {
                x: fx + (tx - fx) * progress,
                y: fy + (ty - fy) * progress,
                theta: if (tx - fx).abs() + (ty - fy).abs() > 1e-12 {
                    heading
                } else {
                    r.pose.theta
                },
                ..r.pose
            };
            moving.push(mv.robot);
        }

        // Halted formation robots idle; the moving actor pays transit power.
        let bare_mass = self.cfg.robot.bare_mass_kg();
        for &idx in &moving {
            let speed = self.transit_speed(&cycle, stage_duration);
            self.drain_moving(idx, BodyVelocity::new(speed, 0.0), bare_mass, dt);
        }
        self.update_idle_batteries(dt, &moving);

        if cycle.stage_elapsed_s + 1e-9 >= stage_duration {
            self.finish_stage(&mut cycle);
            if cycle.stage_idx + 1 < SWAP_STAGES.len() {
                cycle.stage_idx += 1;
                cycle.stage_elapsed_s = 0.0;
                self.enter_stage(&mut cycle);
                self.phase = Phase::Swapping(cycle);
            } else {
                self.complete_cycle(cycle);
            }
        } else {
            self.phase = Phase::Swapping(cycle);
        }
    }

    fn step_waiting(&mut self, hub: usize, next_poll_s: f64, dt: f64) {
        self.waiting_time_s += dt;
        self.update_idle_batteries(dt, &[]);
        if self.termination.is_some() {
            self.phase = Phase::Waiting { hub, next_poll_s };
            return;
        }
        if self.time_s + 1e-9 >= next_poll_s {
            self.run_policy_at_hub(hub);
            if let Phase::Transporting = self.phase {
                // Policy produced no orders and no wait: resume only if it
                // genuinely cleared, otherwise keep waiting.
                if self.pending.is_empty() && self.wait_after_queue.is_none() {
                    return;
                }
            }
            if let Phase::Transporting = self.phase {
                self.phase = Phase::Waiting {
                    hub,
                    next_poll_s: self.time_s + self.cfg.replan_poll_s,
                };
            }
        } else {
            self.phase = Phase::Waiting { hub, next_poll_s };
        }
    }

    /// Speed an actor needs to cover its move within one stage.
    fn transit_speed(&self, cycle: &SwapCycle, stage_duration: f64) -> f64 {
        cycle
            .current_move
            .as_ref()
            .map(|mv| {
                let d = ((mv.to.0 - mv.from.0).powi(2) + (mv.to.1 - mv.from.1).powi(2)).sqrt();
                (d / stage_duration).max(self.cfg.trajectory.speed())
            })
            .unwrap_or(0.0)
    }

    /// Applies movement power draw to one robot. The acceleration fed to
    /// the torque model is bounded: the drivetrain ramps up to commanded
    /// velocity steps rather than drawing an unbounded one-tick current
    /// spike.
    fn drain_moving(&mut self, idx: usize, cmd: BodyVelocity, mass: f64, dt: f64) {
        let prev = self.robots[idx].prev_cmd;
        let accel = (
            ((cmd.v - prev.v) / dt).clamp(-ACCEL_LIMIT, ACCEL_LIMIT),
            ((cmd.w - prev.w) / dt).clamp(-YAW_ACCEL_LIMIT, YAW_ACCEL_LIMIT),
        );
        let torques = drivetrain::required_torques(&cmd, accel, &self.cfg.robot, mass);
        let rates = drivetrain::wheel_speeds(&cmd, &self.cfg.robot);
        let power = drivetrain::electrical_power(torques, rates, &self.cfg.robot);
        self.robots[idx].prev_cmd = cmd;
        self.apply_discharge(idx, power, dt);
    }

    /// Charges hub-parked robots and idle-drains every halted robot that is
    /// not in `skip` (already handled this tick).
    fn update_idle_batteries(&mut self, dt: f64, skip: &[usize]) {
        let idle_power = if self.cfg.idle_drain {
            drivetrain::electrical_power((0.0, 0.0), (0.0, 0.0), &self.cfg.robot)
        } else {
            0.0
        };
        let halted = !matches!(self.phase, Phase::Transporting);
        for idx in 0..self.robots.len() {
            if skip.contains(&idx) {
                continue;
            }
            match self.robots[idx].role {
                Role::HubResident { .. } | Role::Support => {
                    let r = &mut self.robots[idx];
                    r.prev_cmd = BodyVelocity::default();
                    match battery::charge_step(&self.cfg.battery, &r.battery, dt) {
                        Ok(next) => r.battery = next,
                        Err(e) => {
                            self.termination = Some(Termination::RobotDepleted {
                                robot_id: self.robots[idx].id,
                            });
                            debug_assert!(false, "charge_step cannot fail: {e}");
                        }
                    }
                }
                Role::Formation { .. } if halted => {
                    self.robots[idx].prev_cmd = BodyVelocity::default();
                    self.apply_discharge(idx, idle_power, dt);
                }
                Role::Transit => {
                    // Actors not currently moving hold position at idle draw.
                    self.robots[idx].prev_cmd = BodyVelocity::default();
                    self.apply_discharge(idx, idle_power, dt);
                }
                Role::Formation { .. } => {}
            }
        }
    }

    fn apply_discharge(&mut self, idx: usize, power_w: f64, dt: f64) {
        let r = &mut self.robots[idx];
        match battery::discharge_step(&self.cfg.battery, &r.battery, power_w, dt) {
            Ok(next) => r.battery = next,
            Err(BatteryError::Depleted { state, .. }) => {
                r.battery = state;
                if self.termination.is_none() {
                    self.termination = Some(Termination::RobotDepleted { robot_id: r.id });
                }
            }
            Err(e) => panic!("battery model failure for robot {}: {e}", r.id),
        }
    }

    /// Edge-triggered hub detection: fires once when the leader enters a
    /// trigger circle, re-arms when it leaves.
    fn hub_arrival_check(&mut self) -> Option<usize> {
        let leader = self.leader_index()?;
        let pos = self.robots[leader].pose.position();
        let inside = self.cfg.hubs.iter().position(|h| {
            let dx = pos.0 - h.position[0];
            let dy = pos.1 - h.position[1];
            (dx * dx + dy * dy).sqrt() <= h.trigger_radius_m
        });
        match inside {
            None => {
                self.inside_hub = None;
                None
            }
            Some(h) if self.inside_hub != Some(h) => {
                self.inside_hub = Some(h);
                Some(h)
            }
            Some(_) => None,
        }
    }

    fn leader_index(&self) -> Option<usize> {
        self.robots
            .iter()
            .position(|r| matches!(r.role, Role::Formation { slot: 0 }))
    }

    /// Builds the scheduling instance from live telemetry.
    fn build_problem(&self, hub: usize, horizon_k: usize, w1: f64, w2: f64) -> ScheduleProblem {
        let n = self.sched_idx.len();
        let x0: Vec<u8> = self
            .sched_idx
            .iter()
            .map(|&i| matches!(self.robots[i].role, Role::Formation { .. }) as u8)
            .collect();
        let d0: Vec<f64> = self
            .sched_idx
            .iter()
            .map(|&i| self.robots[i].battery.discharge_mah)
            .collect();
        // Hub presence per horizon step: the current hub first, then the
        // hubs ahead in visit order, with current residency (robots are not
        // teleported forward).
        let mut hub_presence = Vec::with_capacity(horizon_k);
        let mut h = hub;
        for step in 0..horizon_k {
            if step > 0 {
                h = self.next_hub(h);
            }
            let presence: Vec<u8> = self
                .sched_idx
                .iter()
                .map(|&i| matches!(self.robots[i].role, Role::HubResident { hub } if hub == h) as u8)
                .collect();
            hub_presence.push(presence);
        }
        ScheduleProblem {
            n_robots: n,
            horizon_k,
            formation_size_f: self.cfg.formation_size(),
            d0,
            x0,
            hub_presence,
            r_c: self.r_c,
            r_d: self.r_d,
            d_th: self.d_th,
            capacity_mah: self.cfg.battery.capacity_mah,
            w1,
            w2,
        }
    }

    fn next_hub(&self, hub: usize) -> usize {
        let n = self.cfg.hubs.len();
        if n == 0 {
            return hub;
        }
        let rank = self.hub_rank[hub];
        let next_rank = (rank + 1) % n;
        self.hub_rank.iter().position(|&r| r == next_rank).unwrap()
    }

    /// Runs the configured policy at a hub and transitions the phase.
    fn run_policy_at_hub(&mut self, hub: usize) {
        let (orders, must_wait) = match self.cfg.policy.clone() {
            PolicyConfig::None => (Vec::new(), false),
            PolicyConfig::Baseline { threshold_fraction } => {
                let problem = self.build_problem(hub, 1, 1.0, 0.5);
                let BaselineOutcome { order, must_wait } =
                    scheduler::baseline_policy(&problem, threshold_fraction);
                (order.pairs().collect(), must_wait)
            }
            PolicyConfig::Optimized {
                horizon_k, w1, w2, ..
            } => {
                let problem = self.build_problem(hub, horizon_k, w1, w2);
                match scheduler::solve(&problem) {
                    Ok(solution) => {
                        let order = scheduler::diff_solutions(&problem.x0, &solution.x[0]);
                        (order.pairs().collect(), false)
                    }
                    Err(ScheduleError::Infeasible) => (Vec::new(), true),
                    Err(e) => panic!("scheduler rejected engine-built problem: {e}"),
                }
            }
        };

        for (leaver_p, entrant_p) in orders {
            self.pending.push_back(PendingSwap {
                hub,
                leaver: self.sched_idx[leaver_p],
                entrant: self.sched_idx[entrant_p],
            });
        }
        self.wait_after_queue = if must_wait { Some(hub) } else { None };
        self.advance_after_scheduling(hub);
    }

    /// Starts the next queued swap, or waits, or resumes transport.
    fn advance_after_scheduling(&mut self, hub: usize) {
        if let Some(swap) = self.pending.pop_front() {
            let cycle = self.start_cycle(swap);
            self.phase = Phase::Swapping(cycle);
        } else if let Some(wait_hub) = self.wait_after_queue.take() {
            self.phase = Phase::Waiting {
                hub: wait_hub,
                next_poll_s: self.time_s + self.cfg.replan_poll_s,
            };
        } else {
            let _ = hub;
            self.phase = Phase::Transporting;
        }
    }

    fn support_index(&self) -> usize {
        self.robots
            .iter()
            .position(|r| matches!(r.role, Role::Support))
            .expect("support robot validated present")
    }

    fn start_cycle(&mut self, swap: PendingSwap) -> SwapCycle {
        let Role::Formation { slot } = self.robots[swap.leaver].role else {
            panic!("swap leaver is not in formation");
        };
        let support = self.support_index();
        let leaver_fraction =
            battery::remaining_fraction(&self.cfg.battery, &self.robots[swap.leaver].battery);
        let mut cycle = SwapCycle {
            hub: swap.hub,
            leaver: swap.leaver,
            entrant: swap.entrant,
            support,
            slot,
            stage_idx: 0,
            stage_elapsed_s: 0.0,
            started_at_s: self.time_s,
            leaver_fraction_at_start: leaver_fraction,
            current_move: None,
        };
        self.enter_stage(&mut cycle);
        cycle
    }

    /// Current leader reference pose (the trajectory is frozen while halted).
    fn leader_reference(&self) -> Pose {
        formation::leader_command(self.transport_time_s, &self.cfg.trajectory).0
    }

    /// Where the support robot props the payload: just outside the slot it
    /// is covering, radially away from the leader.
    fn support_station(&self, slot: usize) -> (f64, f64) {
        let leader = self.leader_reference();
        let spec = slot_of(&self.cfg, slot);
        let bearing = if spec.rho_m == 0.0 {
            leader.theta + 3.0 * std::f64::consts::FRAC_PI_4
        } else {
            leader.theta + spec.psi_rad
        };
        let rho = spec.rho_m + 0.3;
        (
            leader.x + rho * bearing.cos(),
            leader.y + rho * bearing.sin(),
        )
    }

    fn enter_stage(&mut self, cycle: &mut SwapCycle) {
        use SwapStage::*;
        cycle.current_move = None;
        match SWAP_STAGES[cycle.stage_idx] {
            PistonsUp => {
                for r in &mut self.robots {
                    if matches!(r.role, Role::Formation { .. }) {
                        r.piston_up = true;
                    }
                }
            }
            SupportJoining => {
                let station = self.support_station(cycle.slot);
                self.robots[cycle.support].role = Role::Transit;
                cycle.current_move = Some(ActiveMove {
                    robot: cycle.support,
                    from: self.robots[cycle.support].pose.position(),
                    to: station,
                });
            }
            SupportUp => self.robots[cycle.support].piston_up = true,
            LeaverDown => self.robots[cycle.leaver].piston_up = false,
            LeaverExit => {
                let park = park_pose(&self.cfg, cycle.hub, self.robots[cycle.leaver].id);
                self.robots[cycle.leaver].role = Role::Transit;
                cycle.current_move = Some(ActiveMove {
                    robot: cycle.leaver,
                    from: self.robots[cycle.leaver].pose.position(),
                    to: park.position(),
                });
            }
            EntrantJoin => {
                let target =
                    formation::slot_world_target(&self.leader_reference(), &slot_of(&self.cfg, cycle.slot));
                self.robots[cycle.entrant].role = Role::Transit;
                cycle.current_move = Some(ActiveMove {
                    robot: cycle.entrant,
                    from: self.robots[cycle.entrant].pose.position(),
                    to: target.position(),
                });
            }
            EntrantUp => self.robots[cycle.entrant].piston_up = true,
            SupportDown => self.robots[cycle.support].piston_up = false,
            SupportExit => {
                let home = park_pose(&self.cfg, self.robots[cycle.support].home_hub, self.robots[cycle.support].id);
                cycle.current_move = Some(ActiveMove {
                    robot: cycle.support,
                    from: self.robots[cycle.support].pose.position(),
                    to: home.position(),
                });
            }
            PistonsDown => {
                for r in &mut self.robots {
                    if matches!(r.role, Role::Formation { .. }) {
                        r.piston_up = false;
                    }
                }
            }
        }
    }

    fn finish_stage(&mut self, cycle: &mut SwapCycle) {
        use SwapStage::*;
        match SWAP_STAGES[cycle.stage_idx] {
            LeaverExit => {
                let r = &mut self.robots[cycle.leaver];
                r.role = Role::HubResident { hub: cycle.hub };
                r.home_hub = cycle.hub;
                r.ctrl = ControllerState::default();
            }
            EntrantJoin => {
                let target = formation::slot_world_target(
                    &self.leader_reference(),
                    &slot_of(&self.cfg, cycle.slot),
                );
                let r = &mut self.robots[cycle.entrant];
                r.role = Role::Formation { slot: cycle.slot };
                r.pose = Pose {
                    phi_r: r.pose.phi_r,
                    phi_l: r.pose.phi_l,
                    ..target
                };
                r.ctrl = ControllerState::default();
            }
            SupportExit => {
                self.robots[cycle.support].role = Role::Support;
            }
            _ => {}
        }
        cycle.current_move = None;
    }

    fn complete_cycle(&mut self, cycle: SwapCycle) {
        self.replacements.push(ReplacementEvent {
            time_s: self.time_s,
            hub_id: cycle.hub as u32,
            leaving: self.robots[cycle.leaver].id,
            entering: self.robots[cycle.entrant].id,
            remaining_fraction_at_swap: cycle.leaver_fraction_at_start,
            duration_s: self.time_s - cycle.started_at_s,
        });
        self.advance_after_scheduling(cycle.hub);
    }

    fn check_threshold_crossing(&mut self) {
        if self.first_threshold_crossing_s.is_some() {
            return;
        }
        let crossed = self.robots.iter().any(|r| {
            matches!(r.role, Role::Formation { .. })
                && r.battery.voltage <= self.cfg.threshold_voltage_v
        });
        if crossed {
            self.first_threshold_crossing_s = Some(self.time_s);
        }
    }

    /// Payload supporter count implied by the current phase.
    fn supporter_count(&self) -> usize {
        let f = self.cfg.formation_size();
        match &self.phase {
            Phase::Transporting | Phase::Waiting { .. } => f,
            Phase::Swapping(cycle) => match SWAP_STAGES[cycle.stage_idx] {
                SwapStage::SupportUp | SwapStage::EntrantUp => f + 1,
                _ => f,
            },
        }
    }

    fn check_invariants(&mut self) {
        let supporters = self.supporter_count();
        self.min_supporters = self.min_supporters.min(supporters);

        // Every robot carries exactly one role by construction; what can
        // break is slot occupancy, so check that no slot is claimed twice
        // and the total accounts for the whole fleet.
        let mut slot_seen = vec![0usize; self.cfg.formation_size()];
        let mut counted = 0usize;
        for r in &self.robots {
            counted += 1;
            if let Role::Formation { slot } = r.role {
                slot_seen[slot] += 1;
            }
        }
        if counted != self.robots.len() || slot_seen.iter().any(|&c| c > 1) {
            self.conservation_ok = false;
        }

        if matches!(self.phase, Phase::Transporting) {
            let positions: Vec<(f64, f64)> = self
                .robots
                .iter()
                .filter(|r| matches!(r.role, Role::Formation { .. }))
                .map(|r| r.pose.position())
                .collect();
            if !formation::min_separation_ok(&positions, self.cfg.formation.min_separation_m()) {
                self.separation_violations += 1;
            }
        }
    }

    fn record_tick(&mut self, observer: &mut dyn TickObserver) {
        self.tick_robot_views.clear();
        for r in &self.robots {
            self.tick_robot_views.push(RobotTickView {
                robot_id: r.id,
                role: r.role.label(),
                voltage_v: r.battery.voltage,
                discharge_mah: r.battery.discharge_mah,
                remaining_fraction: battery::remaining_fraction(&self.cfg.battery, &r.battery),
                x_m: r.pose.x,
                y_m: r.pose.y,
            });
        }
        let view = TickView {
            time_s: self.time_s,
            phase: self.phase.label(),
            supporters: self.supporter_count(),
            robots: &self.tick_robot_views,
        };
        observer.on_tick(&view);

        if self.time_s + 1e-9 >= self.next_sample_s {
            for r in &self.tick_robot_views {
                self.samples.push(RobotSample {
                    time_s: self.time_s,
                    robot_id: r.robot_id,
                    role: r.role.to_string(),
                    voltage_v: r.voltage_v,
                    discharge_mah: r.discharge_mah,
                    remaining_fraction: r.remaining_fraction,
                    x_m: r.x_m,
                    y_m: r.y_m,
                });
            }
            self.next_sample_s += self.cfg.sample_every_s;
        }
    }

    pub fn into_metrics(self) -> RunMetrics {
        let termination = self.termination.unwrap_or(Termination::MaxSimTime);
        RunMetrics {
            summary: RunSummary {
                operational_time_s: self.operational_time_s,
                distance_m: self.distance_m,
                replacement_count: self.replacements.len(),
                waiting_time_s: self.waiting_time_s,
                replacing_time_s: self.replacing_time_s,
                sim_time_s: self.time_s,
                termination,
                first_threshold_crossing_s: self.first_threshold_crossing_s,
                min_supporters: self.min_supporters,
                conservation_ok: self.conservation_ok,
                separation_violations: self.separation_violations,
                seed: self.cfg.seed,
                payload_mass_kg: self.cfg.payload_mass_kg,
                policy: self.cfg.policy.label(),
            },
            samples: self.samples,
            replacements: self.replacements,
        }
    }
}

fn slot_of(cfg: &WorldConfig, slot: usize) -> FormationSlot {
    cfg.formation.slots[slot].to_slot()
}

/// Deterministic park spot near a hub for a given robot.
fn park_pose(cfg: &WorldConfig, hub: usize, robot_id: u32) -> Pose {
    let h = &cfg.hubs[hub];
    let angle = 2.0 * std::f64::consts::PI * (robot_id % 8) as f64 / 8.0;
    Pose::new(
        h.position[0] + 0.3 * angle.cos(),
        h.position[1] + 0.3 * angle.sin(),
        angle,
    )
}

/// Ranks hubs by the order the leader encounters them along the trajectory.
fn hub_visit_ranks(cfg: &WorldConfig) -> Vec<usize> {
    let n = cfg.hubs.len();
    if n == 0 {
        return Vec::new();
    }
    let samples = 4096;
    let perimeter = cfg.trajectory.perimeter();
    let speed = cfg.trajectory.speed();
    let mut best: Vec<(f64, f64)> = vec![(f64::INFINITY, 0.0); n]; // (dist, arc time)
    for s in 0..samples {
        let t = perimeter / speed * s as f64 / samples as f64;
        let (pose, _) = formation::leader_command(t, &cfg.trajectory);
        for (i, hub) in cfg.hubs.iter().enumerate() {
            let dx = pose.x - hub.position[0];
            let dy = pose.y - hub.position[1];
            let d = (dx * dx + dy * dy).sqrt();
            if d < best[i].0 {
                best[i] = (d, t);
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| best[a].1.partial_cmp(&best[b].1).unwrap().then(a.cmp(&b)));
    // order[rank] = hub; invert to hub -> rank.
    let mut rank = vec![0usize; n];
    for (r, &hub) in order.iter().enumerate() {
        rank[hub] = r;
    }
    rank
}

/// Runs a world to completion, streaming ticks into the observer.
pub fn run_with_observer(
    cfg: WorldConfig,
    observer: &mut dyn TickObserver,
) -> Result<RunMetrics, EngineError> {
    let mut world = World::new(cfg)?;
    while !world.finished() {
        world.step(observer);
    }
    Ok(world.into_metrics())
}

/// Runs a world to completion without streaming.
pub fn run(cfg: WorldConfig) -> Result<RunMetrics, EngineError> {
    run_with_observer(cfg, &mut NullObserver)
}
