// Temporary tuning probe for the standard scenario.
use convoy::config::{self, PolicyConfig};
use convoy::engine;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mass: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(6.0);
    let policies: Vec<(&str, PolicyConfig)> = vec![
        ("none", PolicyConfig::None),
        ("b40", PolicyConfig::Baseline { threshold_fraction: 0.40 }),
        ("b30", PolicyConfig::Baseline { threshold_fraction: 0.30 }),
        ("opt", config::standard_optimized_policy()),
    ];
    let mut means = vec![0.0f64; policies.len()];
    for seed in 1..=5u64 {
        for (pi, (name, policy)) in policies.iter().enumerate() {
            let mut policy = policy.clone();
            if let PolicyConfig::Optimized { w2, d_th_mah, .. } = &mut policy {
                if let Ok(v) = std::env::var("W2") {
                    *w2 = v.parse().unwrap();
                }
                if let Ok(v) = std::env::var("DTH") {
                    *d_th_mah = Some(v.parse().unwrap());
                }
            }
            let mut cfg = config::standard_scenario(mass, policy, seed);
            if let Ok(v) = std::env::var("CHG") {
                cfg.battery.charge_rate_ma = v.parse().unwrap();
            }
            if let Ok(v) = std::env::var("CAP") {
                cfg.max_sim_time_s = v.parse().unwrap();
            }
            if let Ok(v) = std::env::var("R") {
                let r: f64 = v.parse().unwrap();
                if let convoy::formation::TrajectorySpec::Circle {
                    radius_m, ..
                } = &mut cfg.trajectory
                {
                    *radius_m = r;
                }
                let hub_r = r + 0.45;
                for (i, hub) in cfg.hubs.iter_mut().enumerate() {
                    let a = 2.0 * std::f64::consts::PI * i as f64 / 3.0;
                    hub.position = [hub_r * a.cos(), hub_r * a.sin()];
                }
            }
            cfg.sample_every_s = 1e15;
            let t0 = std::time::Instant::now();
            let m = engine::run(cfg).unwrap();
            let s = &m.summary;
            let high_swaps = m
                .replacements
                .iter()
                .filter(|r| r.remaining_fraction_at_swap > 0.5)
                .count();
            let max_frac_swap = m
                .replacements
                .iter()
                .map(|r| r.remaining_fraction_at_swap)
                .fold(0.0f64, f64::max);
            println!(
                "mass={mass:4.1} seed={seed} {name:5} op={:8.0} wait={:7.0} repl={:7.0} count={:3} high={:2} maxfrac={:.2} term={} [{:.1}s]",
                s.operational_time_s,
                s.waiting_time_s,
                s.replacing_time_s,
                s.replacement_count,
                high_swaps,
                max_frac_swap,
                s.termination,
                t0.elapsed().as_secs_f64(),
            );
            means[pi] += s.operational_time_s / 5.0;
        }
    }
    for ((name, _), mean) in policies.iter().zip(&means) {
        println!("MEAN {name:5} {mean:9.0}");
    }
    println!(
        "ratio opt/none = {:.2}",
        means[3] / means[0]
    );
}
