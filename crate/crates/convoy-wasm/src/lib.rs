//! Browser bindings for the payload transport simulator.
//!
//! Three interactive surfaces, all driven from `www/index.html`:
//! an animated fleet simulation ([`SimHandle`]), battery discharge curve
//! and endurance traces ([`battery_curve`], [`discharge_trace`]), and a
//! one-shot scheduler solve ([`solve_schedule`]).
//!
//! Build with `wasm-pack build --target web` (requires the
//! `wasm32-unknown-unknown` toolchain); the crate also compiles natively
//! so the binding logic stays under ordinary `cargo test`.

use convoy::battery::{self, BatteryParams, BatteryState};
use convoy::config::{self, PolicyConfig};
use convoy::drivetrain::BodyVelocity;
use convoy::engine::World;
use convoy::metrics::NullObserver;
use convoy::scheduler::{self, ScheduleProblem};
use wasm_bindgen::prelude::*;

fn role_code(role: &str) -> f64 {
    match role {
        "leader" => 0.0,
        "follower" => 1.0,
        "hub" => 2.0,
        "support" => 3.0,
        _ => 4.0,
    }
}

/// A running simulation of the twelve-robot reference scenario.
#[wasm_bindgen]
pub struct SimHandle {
    world: World,
}

#[wasm_bindgen]
impl SimHandle {
    /// `policy` accepts `none`, `baseline30`, `baseline40`,
    /// `baseline:<frac>`, `optimized` or `optimized:<k>`.
    #[wasm_bindgen(constructor)]
    pub fn new(payload_mass_kg: f64, policy: &str, seed: u64) -> Result<SimHandle, String> {
        let policy = match policy {
            "optimized" => config::standard_optimized_policy(),
            other => PolicyConfig::parse_flag(other)?,
        };
        let mut cfg = config::standard_scenario(payload_mass_kg, policy, seed);
        cfg.sample_every_s = 1e15;
        let world = World::new(cfg).map_err(|e| e.to_string())?;
        Ok(SimHandle { world })
    }

    /// Advances the world by a simulated duration.
    pub fn step_seconds(&mut self, seconds: f64) {
        let dt = self.world.config().dt_s;
        let steps = (seconds / dt).round().max(0.0) as usize;
        let mut observer = NullObserver;
        for _ in 0..steps {
            if self.world.finished() {
                break;
            }
            self.world.step(&mut observer);
        }
    }

    pub fn time_s(&self) -> f64 {
        self.world.time_s()
    }

    pub fn finished(&self) -> bool {
        self.world.finished()
    }

    pub fn phase(&self) -> String {
        self.world.phase_label().to_string()
    }

    pub fn operational_time_s(&self) -> f64 {
        self.world.operational_time_s()
    }

    pub fn replacement_count(&self) -> usize {
        self.world.replacement_count()
    }

    /// Flat robot states, 7 numbers per robot:
    /// `[id, role, x, y, theta, remaining_fraction, piston_up]`.
    pub fn robot_states(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (id, role, pose, _voltage, fraction, piston) in self.world.robot_display_states() {
            out.extend_from_slice(&[
                id as f64,
                role_code(role),
                pose.x,
                pose.y,
                pose.theta,
                fraction,
                piston as u8 as f64,
            ]);
        }
        out
    }

    /// Hub circles, 3 numbers per hub: `[x, y, trigger_radius]`.
    pub fn hubs(&self) -> Vec<f64> {
        self.world
            .hub_positions()
            .into_iter()
            .flat_map(|(p, r)| [p[0], p[1], r])
            .collect()
    }

    /// Half-extent of the scene for viewport scaling.
    pub fn scene_radius(&self) -> f64 {
        self.world
            .hub_positions()
            .iter()
            .map(|(p, r)| (p[0].powi(2) + p[1].powi(2)).sqrt() + r)
            .fold(7.0, f64::max)
            + 0.5
    }
}

/// Samples the fitted discharge curve: `[d0, v0, d1, v1, ...]` over
/// `[0, capacity]`.
#[wasm_bindgen]
pub fn battery_curve(points: usize) -> Vec<f64> {
    let params = BatteryParams::default();
    let n = points.max(2);
    let mut out = Vec::with_capacity(2 * n);
    for i in 0..n {
        let d = params.capacity_mah * i as f64 / (n - 1) as f64;
        let v = battery::voltage_curve(&params, d).unwrap_or(f64::NAN);
        out.extend_from_slice(&[d, v]);
    }
    out
}

/// Terminal-voltage trace of one loaded robot at constant nominal speed:
/// `[t0, v0, t1, v1, ...]` sampled every `sample_s` until depletion or
/// `max_s`. Heavier payloads dive sooner.
#[wasm_bindgen]
pub fn discharge_trace(payload_mass_kg: f64, sample_s: f64, max_s: f64) -> Vec<f64> {
    let cfg = config::endurance_scenario(payload_mass_kg.max(0.0), 1);
    let params = cfg.battery.clone();
    let mass = cfg.loaded_mass_kg();
    let vel = BodyVelocity::new(cfg.trajectory.speed(), 0.0);
    let power = convoy::drivetrain::steady_state_power(&vel, &cfg.robot, mass);
    let mut state = BatteryState::full(&params);
    let mut out = Vec::new();
    let dt = 1.0;
    let mut t = 0.0;
    let mut next_sample = 0.0;
    while t < max_s {
        if t >= next_sample {
            out.extend_from_slice(&[t, state.voltage]);
            next_sample += sample_s.max(dt);
        }
        match battery::discharge_step(&params, &state, power, dt) {
            Ok(next) => state = next,
            Err(_) => break,
        }
        t += dt;
    }
    out
}

/// Solves a JSON-encoded `ScheduleProblem`, returning a JSON object with
/// the assignment, objective, and the implied replacement (1-based ids).
#[wasm_bindgen]
pub fn solve_schedule(problem_json: &str) -> Result<String, String> {
    let problem: ScheduleProblem =
        serde_json::from_str(problem_json).map_err(|e| format!("bad problem: {e}"))?;
    problem.validate().map_err(|e| e.to_string())?;
    match scheduler::solve(&problem) {
        Ok(solution) => {
            let order = scheduler::diff_solutions(&problem.x0, &solution.x[0]);
            let to_ids = |v: &[usize]| v.iter().map(|i| i + 1).collect::<Vec<_>>();
            let body = serde_json::json!({
                "feasible": true,
                "x": solution.x,
                "objective_value": solution.objective_value,
                "predicted_d": solution.predicted_d,
                "leaving": to_ids(&order.leaving),
                "entering": to_ids(&order.entering),
            });
            Ok(body.to_string())
        }
        Err(scheduler::ScheduleError::Infeasible) => {
            Ok(serde_json::json!({ "feasible": false, "message": "waiting for replacement" })
                .to_string())
        }
        Err(e) => Err(e.to_string()),
    }
}

/// The worked ten-robot example, prefilled into the demo page's editor.
#[wasm_bindgen]
pub fn example_problem() -> String {
    let problem = ScheduleProblem {
        n_robots: 10,
        horizon_k: 1,
        formation_size_f: 3,
        d0: vec![
            900.0, 10.0, 700.0, 100.0, 500.0, 100.0, 500.0, 500.0, 500.0, 500.0,
        ],
        x0: vec![1, 0, 0, 1, 0, 1, 0, 0, 0, 0],
        hub_presence: vec![vec![0, 1, 1, 0, 0, 0, 0, 0, 0, 0]],
        r_c: -25.0,
        r_d: 50.0,
        d_th: 800.0,
        capacity_mah: 1200.0,
        w1: 1.0,
        w2: 0.5,
    };
    serde_json::to_string_pretty(&problem).expect("serializes")
}
