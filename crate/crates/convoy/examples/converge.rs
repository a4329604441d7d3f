// Temporary probe: closed-loop slot convergence on the default circle.
use convoy::drivetrain::{integrate_kinematics, Pose, RobotParams};
use convoy::formation::{
    follower_command, leader_command, slot_world_target, ControlGains, ControllerState,
    FormationSlot, TrajectorySpec,
};

fn main() {
    let radius: f64 = std::env::var("R").ok().and_then(|v| v.parse().ok()).unwrap_or(6.0);
    let d: f64 = std::env::var("D").ok().and_then(|v| v.parse().ok()).unwrap_or(0.1);
    let traj = TrajectorySpec::Circle {
        center: [0.0, 0.0],
        radius_m: radius,
        speed_mps: 0.06,
        start_angle_rad: 0.3,
    };
    let gains = ControlGains {
        center_offset_d_m: d,
        ..ControlGains::default()
    };
    let params = RobotParams::default();
    let dt = 0.1;
    let mut worst: (f64, String) = (0.0, String::new());
    for psi_deg in [0.0, 90.0, 180.0, -90.0] {
        let slot = FormationSlot::new(0.6, psi_deg);
        for dir in 0..8 {
            let ang = std::f64::consts::TAU * dir as f64 / 8.0;
            for r0 in [0.3, 0.15] {
                let (lp, _) = leader_command(0.0, &traj);
                let t0 = slot_world_target(&lp, &slot);
                let mut follower =
                    Pose::new(t0.x + r0 * ang.cos(), t0.y + r0 * ang.sin(), t0.theta);
                let mut ctrl = ControllerState::default();
                let mut t_conv = f64::INFINITY;
                let mut max_err_after_conv = 0.0f64;
                let steps = 3000; // 300 s
                for i in 0..steps {
                    let t = i as f64 * dt;
                    let (lp, lv) = leader_command(t, &traj);
                    let target = slot_world_target(&lp, &slot);
                    let err = target.distance_to(&follower);
                    if err < 0.1 && t_conv.is_infinite() {
                        t_conv = t;
                    }
                    if t_conv.is_finite() {
                        max_err_after_conv = max_err_after_conv.max(err);
                    }
                    let (cmd, next) =
                        follower_command(&lp, &lv, &follower, &slot, &gains, &ctrl, dt).unwrap();
                    let cmd = cmd.clamped(0.25, 1.5);
                    ctrl = next;
                    follower = integrate_kinematics(&follower, &cmd, &params, dt);
                }
                // Steady-state: max error over the final 50 s.
                let mut ss_err = 0.0f64;
                {
                    let mut f2 = follower;
                    let mut c2 = ctrl;
                    for i in steps..steps + 500 {
                        let t = i as f64 * dt;
                        let (lp, lv) = leader_command(t, &traj);
                        let target = slot_world_target(&lp, &slot);
                        ss_err = ss_err.max(target.distance_to(&f2));
                        let (cmd, next) =
                            follower_command(&lp, &lv, &f2, &slot, &gains, &c2, dt).unwrap();
                        let cmd = cmd.clamped(0.25, 1.5);
                        c2 = next;
                        f2 = integrate_kinematics(&f2, &cmd, &params, dt);
                    }
                }
                let label = format!(
                    "psi={psi_deg} dir={dir} r0={r0}: conv={t_conv:.0}s resid_max={max_err_after_conv:.3} ss={ss_err:.4}"
                );
                if t_conv > 120.0 || max_err_after_conv > 0.1 {
                    println!("FAIL {label}");
                }
                if t_conv > worst.0 || (dir == 0 && r0 == 0.3) {
                    worst = (t_conv, label.clone());
                    println!("{label}");
                }
            }
        }
    }
    println!("worst convergence: {} ({})", worst.0, worst.1);
}
