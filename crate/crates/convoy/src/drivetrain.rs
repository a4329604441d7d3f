//! Differential-drive kinematics and inverse dynamics.
//!
//! Commanded body velocities are converted into wheel speeds, the wheel
//! torques needed to sustain them against inertia and rolling resistance,
//! and finally into DC-motor electrical power, which is what the battery
//! model consumes. Robots track their commands perfectly; the dynamics
//! here exist for power bookkeeping, not trajectory generation.

use serde::{Deserialize, Serialize};

pub const GRAVITY: f64 = 9.81;

/// Physical and electrical constants of one robot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotParams {
    pub wheel_radius_m: f64,
    pub wheel_base_m: f64,
    pub chassis_mass_kg: f64,
    pub wheel_mass_kg: f64,
    /// Torque constant K_t, N·m/A.
    pub torque_const_kt: f64,
    /// Back-EMF constant K_e, V·s/rad. Numerically equal to K_t for an
    /// SI-consistent DC motor.
    pub back_emf_ke: f64,
    /// Armature resistance R, ohms.
    pub armature_resistance_ohm: f64,
    /// No-load current I_0, amperes.
    pub no_load_current_a: f64,
    /// Viscous damping b, N·m·s/rad.
    pub damping_b: f64,
    /// Motor efficiency η in (0, 1].
    pub motor_efficiency: f64,
    /// Rolling resistance coefficient. The default comes from the endurance
    /// calibration sweep (`convoy calibrate`), not from a datasheet.
    pub rolling_resist_coeff: f64,
    /// Offset d from the wheel axle to the tracked reference point, meters.
    pub center_offset_d_m: f64,
}

impl Default for RobotParams {
    fn default() -> Self {
        Self {
            wheel_radius_m: 0.035,
            wheel_base_m: 0.115,
            chassis_mass_kg: 1.5,
            wheel_mass_kg: 0.1,
            torque_const_kt: 28.24e-3,
            back_emf_ke: 28.24e-3,
            armature_resistance_ohm: 2.4,
            no_load_current_a: 0.06,
            damping_b: 1e-5,
            motor_efficiency: 0.8,
            rolling_resist_coeff: 0.07,
            center_offset_d_m: 0.1,
        }
    }
}

impl RobotParams {
    /// Chassis plus both wheels, without any payload share.
    pub fn bare_mass_kg(&self) -> f64 {
        self.chassis_mass_kg + 2.0 * self.wheel_mass_kg
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("wheel_radius_m", self.wheel_radius_m),
            ("wheel_base_m", self.wheel_base_m),
            ("chassis_mass_kg", self.chassis_mass_kg),
            ("wheel_mass_kg", self.wheel_mass_kg),
            ("torque_const_kt", self.torque_const_kt),
            ("back_emf_ke", self.back_emf_ke),
            ("armature_resistance_ohm", self.armature_resistance_ohm),
            ("center_offset_d_m", self.center_offset_d_m),
        ] {
            if !(v > 0.0) {
                return Err(format!("{name} must be > 0"));
            }
        }
        for (name, v) in [
            ("no_load_current_a", self.no_load_current_a),
            ("damping_b", self.damping_b),
            ("rolling_resist_coeff", self.rolling_resist_coeff),
        ] {
            if v < 0.0 {
                return Err(format!("{name} must be >= 0"));
            }
        }
        if !(self.motor_efficiency > 0.0 && self.motor_efficiency <= 1.0) {
            return Err("motor_efficiency must lie in (0, 1]".into());
        }
        Ok(())
    }
}

/// Planar pose plus wheel angular positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    /// Heading, wrapped to (-π, π].
    pub theta: f64,
    pub phi_r: f64,
    pub phi_l: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
            phi_r: 0.0,
            phi_l: 0.0,
        }
    }

    pub fn position(&self) -> (f64, f64) {
        (self.x, self.y)
    }

    pub fn distance_to(&self, other: &Pose) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

/// Body-frame velocity command (v, ω).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BodyVelocity {
    pub v: f64,
    pub w: f64,
}

impl BodyVelocity {
    pub fn new(v: f64, w: f64) -> Self {
        Self { v, w }
    }

    pub fn clamped(&self, v_max: f64, w_max: f64) -> Self {
        Self {
            v: self.v.clamp(-v_max, v_max),
            w: self.w.clamp(-w_max, w_max),
        }
    }
}

/// Wraps an angle to (-π, π].
pub fn wrap_angle(theta: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut t = theta % two_pi;
    if t <= -std::f64::consts::PI {
        t += two_pi;
    } else if t > std::f64::consts::PI {
        t -= two_pi;
    }
    t
}

/// Explicit Euler step of the unicycle kinematics, including wheel angles.
pub fn integrate_kinematics(pose: &Pose, vel: &BodyVelocity, params: &RobotParams, dt: f64) -> Pose {
    debug_assert!(dt > 0.0);
    let (pr, pl) = wheel_speeds(vel, params);
    Pose {
        x: pose.x + vel.v * pose.theta.cos() * dt,
        y: pose.y + vel.v * pose.theta.sin() * dt,
        theta: wrap_angle(pose.theta + vel.w * dt),
        phi_r: pose.phi_r + pr * dt,
        phi_l: pose.phi_l + pl * dt,
    }
}

/// Wheel angular rates (right, left) for a body velocity.
pub fn wheel_speeds(vel: &BodyVelocity, params: &RobotParams) -> (f64, f64) {
    let half_base = 0.5 * params.wheel_base_m;
    let r = params.wheel_radius_m;
    ((vel.v + vel.w * half_base) / r, (vel.v - vel.w * half_base) / r)
}

/// Wheel torques (right, left) required to sustain the commanded motion.
///
/// Planar rigid-body inverse dynamics: longitudinal force from mass times
/// acceleration plus rolling resistance, yaw moment from an axle-track
/// inertia approximation. Valid in the low-speed regime this simulator
/// operates in, where Coriolis terms are negligible.
pub fn required_torques(
    vel: &BodyVelocity,
    accel: (f64, f64),
    params: &RobotParams,
    total_mass_kg: f64,
) -> (f64, f64) {
    debug_assert!(total_mass_kg > 0.0);
    let (v_dot, w_dot) = accel;
    let rolling = params.rolling_resist_coeff * total_mass_kg * GRAVITY * sign(vel.v);
    let force = total_mass_kg * v_dot + rolling;
    let half_base = 0.5 * params.wheel_base_m;
    let yaw_inertia =
        total_mass_kg * half_base * half_base + 2.0 * params.wheel_mass_kg * half_base * half_base;
    let moment = yaw_inertia * w_dot;
    let r = params.wheel_radius_m;
    (
        r * (0.5 * force + moment / params.wheel_base_m),
        r * (0.5 * force - moment / params.wheel_base_m),
    )
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Total electrical power drawn by both motors, watts, never negative.
///
/// Per motor the armature current follows from inverting the torque
/// equation `τ = K_t (I_w - I_0) - b·φ̇`, the applied voltage from the
/// armature resistance and back EMF, and the electrical power is floored
/// by the mechanical power over efficiency so a loaded motor can never
/// report less than it delivers.
pub fn electrical_power(
    torques: (f64, f64),
    wheel_speeds: (f64, f64),
    params: &RobotParams,
) -> f64 {
    let per_motor = |tau: f64, phi_dot: f64| -> f64 {
        let i_w = (tau + params.damping_b * phi_dot) / params.torque_const_kt
            + params.no_load_current_a;
        let volts = i_w * params.armature_resistance_ohm + params.back_emf_ke * phi_dot;
        let electrical = (volts * i_w).max(0.0);
        let mechanical = (tau * phi_dot / params.motor_efficiency).max(0.0);
        electrical.max(mechanical)
    };
    per_motor(torques.0, wheel_speeds.0) + per_motor(torques.1, wheel_speeds.1)
}

/// Steady-state electrical power at a constant body velocity for a robot of
/// the given total mass: zero acceleration, rolling resistance only.
pub fn steady_state_power(vel: &BodyVelocity, params: &RobotParams, total_mass_kg: f64) -> f64 {
    let torques = required_torques(vel, (0.0, 0.0), params, total_mass_kg);
    electrical_power(torques, wheel_speeds(vel, params), params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn kinematics_identity_at_rest() {
        let p = RobotParams::default();
        let pose = Pose::new(1.0, 2.0, 0.5);
        let next = integrate_kinematics(&pose, &BodyVelocity::new(0.0, 0.0), &p, 0.1);
        assert_eq!(next, pose);
    }

    #[test]
    fn kinematics_straight_line() {
        let p = RobotParams::default();
        let mut pose = Pose::new(0.0, 0.0, 0.0);
        // 100 steps of 0.1 s at 6 cm/s equals one 10 s integration.
        for _ in 0..100 {
            pose = integrate_kinematics(&pose, &BodyVelocity::new(0.06, 0.0), &p, 0.1);
        }
        assert_relative_eq!(pose.x, 0.6, epsilon = 1e-9);
        assert_relative_eq!(pose.y, 0.0, epsilon = 1e-12);
        assert_relative_eq!(pose.theta, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn kinematics_half_turn_wraps_to_pi() {
        let p = RobotParams::default();
        let pose = Pose::new(0.0, 0.0, 0.0);
        let dt = std::f64::consts::PI / 0.05;
        let next = integrate_kinematics(&pose, &BodyVelocity::new(0.0, 0.05), &p, dt);
        assert_relative_eq!(next.theta.abs(), std::f64::consts::PI, epsilon = 1e-9);
    }

    #[test]
    fn wheel_speed_examples() {
        let p = RobotParams::default();
        let (r, l) = wheel_speeds(&BodyVelocity::new(0.035, 0.0), &p);
        assert_relative_eq!(r, 1.0, epsilon = 1e-12);
        assert_relative_eq!(l, 1.0, epsilon = 1e-12);

        // Spin in place at w = 2r/L gives ±1 rad/s.
        let w = 2.0 * p.wheel_radius_m / p.wheel_base_m;
        let (r, l) = wheel_speeds(&BodyVelocity::new(0.0, w), &p);
        assert_relative_eq!(r, 1.0, epsilon = 1e-12);
        assert_relative_eq!(l, -1.0, epsilon = 1e-12);

        // Hand-evaluated: (0.06 ± 0.05·0.0575)/0.035.
        let (r, l) = wheel_speeds(&BodyVelocity::new(0.06, 0.05), &p);
        assert_relative_eq!(r, 1.7964285714285713, epsilon = 1e-12);
        assert_relative_eq!(l, 1.632142857142857, epsilon = 1e-12);
    }

    #[test]
    fn torque_coasting_without_losses_is_zero() {
        let p = RobotParams {
            rolling_resist_coeff: 0.0,
            ..RobotParams::default()
        };
        let (tr, tl) = required_torques(&BodyVelocity::new(0.06, 0.0), (0.0, 0.0), &p, 2.9);
        assert_eq!((tr, tl), (0.0, 0.0));
    }

    #[test]
    fn torque_steady_rolling_hand_value() {
        // τ = r·μ·m·g/2 per wheel with μ = 0.015, m = 2.9 kg.
        let p = RobotParams {
            rolling_resist_coeff: 0.015,
            ..RobotParams::default()
        };
        let (tr, tl) = required_torques(&BodyVelocity::new(0.06, 0.0), (0.0, 0.0), &p, 2.9);
        assert_relative_eq!(tr, 0.0074678625, epsilon = 1e-12);
        assert_relative_eq!(tl, 0.0074678625, epsilon = 1e-12);
    }

    #[test]
    fn torque_pure_yaw_is_antisymmetric() {
        let p = RobotParams {
            rolling_resist_coeff: 0.0,
            ..RobotParams::default()
        };
        let (tr, tl) = required_torques(&BodyVelocity::new(0.0, 0.1), (0.0, 0.5), &p, 2.9);
        assert_relative_eq!(tr, -tl, epsilon = 1e-15);
        assert!(tr > 0.0);
    }

    #[test]
    fn power_idle_is_zero_without_no_load_current() {
        let p = RobotParams {
            no_load_current_a: 0.0,
            ..RobotParams::default()
        };
        assert_eq!(electrical_power((0.0, 0.0), (0.0, 0.0), &p), 0.0);
    }

    #[test]
    fn power_no_load_draw_hand_value() {
        // 2·(I_0²·R) = 2·(0.06²·2.4) W at standstill.
        let p = RobotParams::default();
        assert_relative_eq!(
            electrical_power((0.0, 0.0), (0.0, 0.0), &p),
            0.01728,
            epsilon = 1e-12
        );
    }

    #[test]
    fn power_strictly_increases_with_mass() {
        let p = RobotParams::default();
        let vel = BodyVelocity::new(0.06, 0.0);
        let p1 = steady_state_power(&vel, &p, 2.9);
        let p2 = steady_state_power(&vel, &p, 5.8);
        assert!(p2 > p1, "doubling mass must increase power: {p1} vs {p2}");
    }

    proptest! {
        #[test]
        fn mirrored_yaw_swaps_wheels_and_torques(
            v in -0.2f64..0.2,
            w in -1.0f64..1.0,
            w_dot in -1.0f64..1.0,
        ) {
            let p = RobotParams::default();
            let (r1, l1) = wheel_speeds(&BodyVelocity::new(v, w), &p);
            let (r2, l2) = wheel_speeds(&BodyVelocity::new(v, -w), &p);
            prop_assert!((r1 - l2).abs() < 1e-12);
            prop_assert!((l1 - r2).abs() < 1e-12);

            let (tr1, tl1) = required_torques(&BodyVelocity::new(v, w), (0.0, w_dot), &p, 2.9);
            let (tr2, tl2) = required_torques(&BodyVelocity::new(v, -w), (0.0, -w_dot), &p, 2.9);
            prop_assert!((tr1 - tl2).abs() < 1e-12);
            prop_assert!((tl1 - tr2).abs() < 1e-12);
        }

        #[test]
        fn power_never_negative(
            tau_r in -0.5f64..0.5,
            tau_l in -0.5f64..0.5,
            wr in -20.0f64..20.0,
            wl in -20.0f64..20.0,
        ) {
            let p = RobotParams::default();
            prop_assert!(electrical_power((tau_r, tau_l), (wr, wl), &p) >= 0.0);
        }

        #[test]
        fn power_monotone_in_mass_at_steady_speed(
            mass in 1.8f64..8.0,
            extra in 0.1f64..5.0,
        ) {
            let p = RobotParams::default();
            let vel = BodyVelocity::new(0.06, 0.0);
            prop_assert!(
                steady_state_power(&vel, &p, mass + extra) > steady_state_power(&vel, &p, mass)
            );
        }
    }
}
