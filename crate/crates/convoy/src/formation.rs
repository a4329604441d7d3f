//! Leader trajectory generation and the decentralized leader-follower
//! control law.
//!
//! Followers hold a slot described by a desired distance and bearing from
//! the leader. Each follower turns the leader's pose and feedforward
//! velocities into its own body commands through a pair of auxiliary error
//! states integrated alongside the physics.

use crate::drivetrain::{wrap_angle, BodyVelocity, Pose};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Localization error margin added to the robot footprint when deriving the
/// minimum inter-robot separation, meters.
pub const SEPARATION_MARGIN_M: f64 = 0.05;

#[derive(Debug, Error, PartialEq)]
pub enum FormationError {
    #[error("center offset d must be non-zero for the angular control law")]
    DegenerateCenterOffset,
}

/// A follower slot: desired polar offset from the leader.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormationSlot {
    /// Desired distance from the leader, meters.
    pub rho_m: f64,
    /// Desired bearing from the leader's heading, radians.
    pub psi_rad: f64,
}

impl FormationSlot {
    pub fn new(rho_m: f64, psi_deg: f64) -> Self {
        Self {
            rho_m,
            psi_rad: psi_deg.to_radians(),
        }
    }
}

/// Control gains (k1..k6) plus the geometric constants the law needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlGains {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub k5: f64,
    pub k6: f64,
    /// Offset d between axle and tracked point; divides the angular command.
    pub center_offset_d_m: f64,
    /// Flip the sign of the desired bearing inside the trig terms. The
    /// published form is asymmetric (sin(ψ−θ) vs cos(ψ+θ)); this switch
    /// exists for experimentation and defaults to the printed form.
    #[serde(default)]
    pub psi_sign_flipped: bool,
}

impl Default for ControlGains {
    fn default() -> Self {
        Self {
            k1: 1.5,
            k2: 1.0,
            k3: 0.025,
            k4: 15.0,
            k5: 1.0,
            k6: 1.0,
            center_offset_d_m: 0.1,
            psi_sign_flipped: false,
        }
    }
}

/// Per-follower auxiliary error states, initialized to zero.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControllerState {
    pub alpha: f64,
    pub beta: f64,
}

/// Closed-loop trajectory carrying the leader.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrajectorySpec {
    Circle {
        center: [f64; 2],
        radius_m: f64,
        speed_mps: f64,
        #[serde(default)]
        start_angle_rad: f64,
    },
    /// Closed polyline traversed at constant speed; the last point connects
    /// back to the first.
    Waypoints {
        points: Vec<[f64; 2]>,
        speed_mps: f64,
    },
}

impl TrajectorySpec {
    pub fn speed(&self) -> f64 {
        match self {
            TrajectorySpec::Circle { speed_mps, .. } => *speed_mps,
            TrajectorySpec::Waypoints { speed_mps, .. } => *speed_mps,
        }
    }

    pub fn perimeter(&self) -> f64 {
        match self {
            TrajectorySpec::Circle { radius_m, .. } => 2.0 * std::f64::consts::PI * radius_m,
            TrajectorySpec::Waypoints { points, .. } => {
                let n = points.len();
                (0..n)
                    .map(|i| {
                        let a = points[i];
                        let b = points[(i + 1) % n];
                        ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
                    })
                    .sum()
            }
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.speed() > 0.0) {
            return Err("trajectory speed must be > 0".into());
        }
        match self {
            TrajectorySpec::Circle { radius_m, .. } if !(*radius_m > 0.0) => {
                Err("circle radius must be > 0".into())
            }
            TrajectorySpec::Waypoints { points, .. } if points.len() < 3 => {
                Err("waypoint loop needs at least 3 points".into())
            }
            _ => Ok(()),
        }
    }
}

/// Reference pose and feedforward velocities for the leader after `t`
/// seconds of transport along the trajectory.
pub fn leader_command(t: f64, trajectory: &TrajectorySpec) -> (Pose, BodyVelocity) {
    match trajectory {
        TrajectorySpec::Circle {
            center,
            radius_m,
            speed_mps,
            start_angle_rad,
        } => {
            let omega = speed_mps / radius_m;
            let phi = start_angle_rad + omega * t;
            let pose = Pose::new(
                center[0] + radius_m * phi.cos(),
                center[1] + radius_m * phi.sin(),
                phi + std::f64::consts::FRAC_PI_2,
            );
            (pose, BodyVelocity::new(*speed_mps, omega))
        }
        TrajectorySpec::Waypoints { points, speed_mps } => {
            let perimeter = trajectory_perimeter(points);
            let mut s = (speed_mps * t) % perimeter;
            let n = points.len();
            for i in 0..n {
                let a = points[i];
                let b = points[(i + 1) % n];
                let seg = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
                if s <= seg || i == n - 1 {
                    let f = if seg > 0.0 { s / seg } else { 0.0 };
                    let heading = (b[1] - a[1]).atan2(b[0] - a[0]);
                    let pose = Pose::new(
                        a[0] + f * (b[0] - a[0]),
                        a[1] + f * (b[1] - a[1]),
                        heading,
                    );
                    return (pose, BodyVelocity::new(*speed_mps, 0.0));
                }
                s -= seg;
            }
            unreachable!("arc length reduced below perimeter");
        }
    }
}

fn trajectory_perimeter(points: &[[f64; 2]]) -> f64 {
    let n = points.len();
    (0..n)
        .map(|i| {
            let a = points[i];
            let b = points[(i + 1) % n];
            ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
        })
        .sum()
}

/// World-frame target pose for a slot given the current leader pose.
pub fn slot_world_target(leader: &Pose, slot: &FormationSlot) -> Pose {
    Pose::new(
        leader.x + slot.rho_m * (leader.theta + slot.psi_rad).cos(),
        leader.y + slot.rho_m * (leader.theta + slot.psi_rad).sin(),
        leader.theta,
    )
}

/// One follower control update.
///
/// Tracking errors are the follower's displacement from its slot target
/// expressed in the leader's body frame (longitudinal x, lateral y), plus
/// the heading error θ_e = θ_leader − θ_follower. The auxiliary states are
/// advanced one Euler step and the body command is produced from the
/// feedforward terms plus the correction terms.
pub fn follower_command(
    leader_pose: &Pose,
    leader_vel: &BodyVelocity,
    follower_pose: &Pose,
    slot: &FormationSlot,
    gains: &ControlGains,
    ctrl: &ControllerState,
    dt: f64,
) -> Result<(BodyVelocity, ControllerState), FormationError> {
    if gains.center_offset_d_m == 0.0 {
        return Err(FormationError::DegenerateCenterOffset);
    }
    debug_assert!(dt > 0.0);
    let target = slot_world_target(leader_pose, slot);
    let ex = target.x - follower_pose.x;
    let ey = target.y - follower_pose.y;
    let (sin_i, cos_i) = leader_pose.theta.sin_cos();
    // Leader-frame errors.
    let x_e = cos_i * ex + sin_i * ey;
    let y_e = -sin_i * ex + cos_i * ey;
    let theta_e = wrap_angle(leader_pose.theta - follower_pose.theta);
    let theta_ij = theta_e;

    // Clamp pairs: f(e) = max(k·e, 0), g(e) = max(-k·e, 0).
    let f1 = (gains.k1 * x_e).max(0.0);
    let g1 = (-gains.k1 * x_e).max(0.0);
    let f2 = (gains.k2 * y_e).max(0.0);
    let g2 = (-gains.k2 * y_e).max(0.0);

    let alpha_dot =
        -gains.k4 * ctrl.alpha + (gains.k5 - ctrl.alpha) * f1 - (gains.k6 + ctrl.alpha) * g1;
    let beta_dot =
        -gains.k4 * ctrl.beta + (gains.k5 - ctrl.beta) * f2 - (gains.k6 + ctrl.beta) * g2;
    let next = ControllerState {
        alpha: ctrl.alpha + alpha_dot * dt,
        beta: ctrl.beta + beta_dot * dt,
    };

    let psi = if gains.psi_sign_flipped {
        -slot.psi_rad
    } else {
        slot.psi_rad
    };
    let v = gains.k1 * next.alpha + leader_vel.v * theta_ij.cos()
        - slot.rho_m * leader_vel.w * (psi - theta_ij).sin();
    let w = (leader_vel.v * theta_ij.sin()
        + slot.rho_m * leader_vel.w * (psi + theta_ij).cos()
        + gains.k2 * next.beta
        + gains.k3 * theta_e)
        / gains.center_offset_d_m;
    Ok((BodyVelocity::new(v, w), next))
}

/// True iff every pairwise planar distance is at least `min_separation`.
pub fn min_separation_ok(positions: &[(f64, f64)], min_separation: f64) -> bool {
    for i in 0..positions.len() {
        for j in (i + 1)..positions.len() {
            let dx = positions[i].0 - positions[j].0;
            let dy = positions[i].1 - positions[j].1;
            if (dx * dx + dy * dy).sqrt() < min_separation {
                return false;
            }
        }
    }
    true
}
