//! Command-line front end: single runs, sweep campaigns, one-shot
//! scheduler solves and the drivetrain calibration sweep.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 infeasible solve.

mod campaign;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use convoy::config::{self, PolicyConfig, WorldConfig};
use convoy::engine;
use convoy::metrics::CsvTickWriter;
use convoy::scheduler::{self, ScheduleError, ScheduleProblem};
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "convoy",
    about = "Multi-robot payload transport simulator with battery-aware robot replacement",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write its metric files.
    Run(RunArgs),
    /// Run a sweep campaign and write aggregate CSVs.
    Campaign(CampaignArgs),
    /// Solve one serialized scheduling problem and print the replacement.
    Solve(SolveArgs),
    /// Sweep the rolling-resistance coefficient against the endurance
    /// calibration target and print the suggested value.
    Calibrate(CalibrateArgs),
}

#[derive(Args)]
struct RunArgs {
    /// World config (TOML). Omit to use the built-in reference scenario.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for ticks.csv, replacements.csv and summary.toml.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    payload_mass: Option<f64>,
    /// none | baseline30 | baseline40 | baseline:<frac> | optimized |
    /// optimized:<k>
    #[arg(long)]
    policy: Option<String>,
    /// Horizon override for the optimized policy.
    #[arg(long)]
    horizon_k: Option<usize>,
}

#[derive(Args)]
struct CampaignArgs {
    /// Campaign file (TOML): base config plus sweep axes.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "campaign-out")]
    out: PathBuf,
    /// Concurrent cells.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct SolveArgs {
    /// Serialized ScheduleProblem (TOML).
    #[arg(long)]
    problem: PathBuf,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Target seconds from full charge to the threshold voltage for the
    /// five-robot 6 kg reference formation.
    #[arg(long, default_value_t = 1500.0)]
    target_s: f64,
}

fn main() -> ExitCode {
    init_logging();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not errors.
            if e.use_stderr() {
                eprintln!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    let outcome = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Campaign(args) => campaign::cmd_campaign(&args.config, &args.out, args.jobs),
        Command::Solve(args) => return cmd_solve(args),
        Command::Calibrate(args) => cmd_calibrate(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn init_logging() {
    let env = env_logger::Env::new()
        .filter("FLEET_LOG_LEVEL")
        .default_filter_or("warn");
    let _ = env_logger::Builder::from_env(env).try_init();
}

fn load_config(args: &RunArgs) -> Result<WorldConfig> {
    let mut cfg = match &args.config {
        Some(path) => WorldConfig::from_path(path)
            .with_context(|| format!("loading config {}", path.display()))?,
        None => config::standard_scenario(6.0, config::standard_optimized_policy(), 7),
    };
    // Precedence: command line > config file > built-ins.
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(mass) = args.payload_mass {
        cfg.payload_mass_kg = mass;
    }
    if let Some(policy) = &args.policy {
        cfg.policy = PolicyConfig::parse_flag(policy).map_err(anyhow::Error::msg)?;
    }
    if let Some(k) = args.horizon_k {
        if let PolicyConfig::Optimized { horizon_k, .. } = &mut cfg.policy {
            *horizon_k = k;
        } else {
            anyhow::bail!("--horizon-k only applies to the optimized policy");
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let cfg = load_config(&args)?;
    fs::create_dir_all(&args.out)?;

    let ticks_path = args.out.join("ticks.csv");
    let file = fs::File::create(&ticks_path)?;
    let mut writer = CsvTickWriter::new(BufWriter::new(file));
    let metrics = engine::run_with_observer(cfg, &mut writer)?;
    drop(writer);

    let mut replacements = Vec::new();
    metrics.write_replacements_csv(&mut replacements)?;
    fs::write(args.out.join("replacements.csv"), replacements)?;
    fs::write(args.out.join("summary.toml"), metrics.summary_toml())?;

    log::info!(
        "run finished: {} after {:.0} s simulated, {:.0} s operational",
        metrics.summary.termination,
        metrics.summary.sim_time_s,
        metrics.summary.operational_time_s
    );
    println!("{}", metrics.summary_toml());
    Ok(())
}

fn cmd_solve(args: SolveArgs) -> ExitCode {
    match try_solve(&args.problem) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

/// Returns Ok(false) for a well-formed but infeasible problem.
fn try_solve(path: &Path) -> Result<bool> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading problem {}", path.display()))?;
    let problem: ScheduleProblem = toml::from_str(&text).context("parsing problem")?;
    problem.validate().map_err(anyhow::Error::from)?;
    match scheduler::solve(&problem) {
        Ok(solution) => {
            for (j, x) in solution.x.iter().enumerate() {
                let active: Vec<String> = x
                    .iter()
                    .enumerate()
                    .filter(|&(_, &b)| b == 1)
                    .map(|(i, _)| (i + 1).to_string())
                    .collect();
                println!("x{} = {:?}  # robots {{{}}}", j + 1, x, active.join(", "));
            }
            println!("objective_value = {:.6}", solution.objective_value);
            for (j, d) in solution.predicted_d.iter().enumerate() {
                let rendered: Vec<String> = d.iter().map(|v| format!("{v:.3}")).collect();
                println!("predicted_d{} = [{}]", j + 1, rendered.join(", "));
            }
            let order = scheduler::diff_solutions(&problem.x0, &solution.x[0]);
            let fmt_ids = |ids: &[usize]| {
                let ids: Vec<String> = ids.iter().map(|i| (i + 1).to_string()).collect();
                format!("{{{}}}", ids.join(", "))
            };
            println!("leaving {}", fmt_ids(&order.leaving));
            println!("entering {}", fmt_ids(&order.entering));
            Ok(true)
        }
        Err(ScheduleError::Infeasible) => {
            println!("infeasible: waiting for replacement");
            Ok(false)
        }
        Err(e) => Err(e.into()),
    }
}

/// Five-robot reference endurance run used by the calibration sweep.
fn calibration_time_to_threshold(mu: f64) -> Option<f64> {
    let mut cfg = config::endurance_scenario(6.0, 1);
    cfg.formation.slots = vec![
        config::SlotConfig { rho_m: 0.0, psi_deg: 0.0 },
        config::SlotConfig { rho_m: 0.6, psi_deg: 0.0 },
        config::SlotConfig { rho_m: 0.6, psi_deg: 90.0 },
        config::SlotConfig { rho_m: 0.6, psi_deg: 180.0 },
        config::SlotConfig { rho_m: 0.6, psi_deg: -90.0 },
    ];
    cfg.fleet.initial_formation = vec![1, 2, 3, 4, 5];
    cfg.fleet.initial_remaining_fraction = [1.0, 1.0];
    cfg.robot.rolling_resist_coeff = mu;
    cfg.sample_every_s = 1e15;
    cfg.max_sim_time_s = 40_000.0;
    engine::run(cfg).ok()?.summary.first_threshold_crossing_s
}

fn cmd_calibrate(args: CalibrateArgs) -> Result<()> {
    // Time to threshold decreases monotonically with rolling resistance.
    let (mut lo, mut hi) = (0.005_f64, 0.30_f64);
    println!(
        "calibrating rolling_resist_coeff for {:.0} s to threshold voltage:",
        args.target_s
    );
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        let time = calibration_time_to_threshold(mid).unwrap_or(f64::INFINITY);
        log::debug!("mu={mid:.5} -> {time:.0} s");
        if time > args.target_s {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mu = 0.5 * (lo + hi);
    let achieved = calibration_time_to_threshold(mu).unwrap_or(f64::INFINITY);
    println!("suggested rolling_resist_coeff = {mu:.4} (time to threshold {achieved:.0} s)");
    Ok(())
}
