//! Sweep campaigns: a cartesian product of payload masses, policies and
//! seeds over a base config, with plot-ready aggregates.
//!
//! Outputs under the campaign directory:
//! - `runs.csv`: one row per cell.
//! - `operating_time_by_mass.csv`: mean operational time per (policy, mass).
//! - `replacement_counts_by_mass.csv`: mean swap count per (policy, mass).
//! - `replacement_charge_histogram.csv`: swap counts per remaining-charge
//!   decile per policy.
//! - `profiles/<policy>_<mass>kg_seed<seed>.csv`: remaining-fraction matrix
//!   over time, one column per robot.

use anyhow::{Context, Result};
use convoy::config::{PolicyConfig, WorldConfig};
use convoy::engine;
use convoy::metrics::RunMetrics;
use serde::Deserialize;
use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Mutex;

#[derive(Debug, Deserialize)]
struct CampaignConfig {
    payload_masses_kg: Vec<f64>,
    policies: Vec<PolicyConfig>,
    seeds: Vec<u64>,
    #[serde(default = "default_max_cells")]
    max_cells: usize,
    /// Seconds between rows in the per-run profile matrices.
    #[serde(default = "default_profile_every")]
    profile_sample_s: f64,
    base: WorldConfig,
}

fn default_max_cells() -> usize {
    256
}

fn default_profile_every() -> f64 {
    30.0
}

#[derive(Debug, Clone)]
struct Cell {
    mass: f64,
    policy: PolicyConfig,
    seed: u64,
}

struct CellResult {
    cell: Cell,
    metrics: RunMetrics,
}

pub fn cmd_campaign(config: &Path, out: &Path, jobs: usize) -> Result<()> {
    let text = fs::read_to_string(config)
        .with_context(|| format!("reading campaign {}", config.display()))?;
    let campaign: CampaignConfig = toml::from_str(&text).context("parsing campaign")?;
    campaign.base.validate()?;
    if campaign.payload_masses_kg.is_empty()
        || campaign.policies.is_empty()
        || campaign.seeds.is_empty()
    {
        anyhow::bail!("campaign axes must be non-empty");
    }

    let mut cells = Vec::new();
    for mass in &campaign.payload_masses_kg {
        for policy in &campaign.policies {
            for seed in &campaign.seeds {
                cells.push(Cell {
                    mass: *mass,
                    policy: policy.clone(),
                    seed: *seed,
                });
            }
        }
    }
    if cells.len() > campaign.max_cells {
        anyhow::bail!(
            "campaign has {} cells, above the max_cells cap of {}",
            cells.len(),
            campaign.max_cells
        );
    }

    fs::create_dir_all(out.join("profiles"))?;
    log::info!("running {} campaign cells on {} jobs", cells.len(), jobs.max(1));

    // Cells share nothing; results are collected by index so aggregate
    // files come out in deterministic cell order regardless of jobs.
    let mut results: Vec<Option<CellResult>> = Vec::new();
    results.resize_with(cells.len(), || None);
    let results = Mutex::new(&mut results);
    let next = std::sync::atomic::AtomicUsize::new(0);
    let worker_count = jobs.max(1).min(cells.len());
    let failure: Mutex<Option<String>> = Mutex::new(None);
    std::thread::scope(|scope| {
        for _ in 0..worker_count {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= cells.len() {
                    return;
                }
                let cell = cells[i].clone();
                match run_cell(&campaign, &cell, out) {
                    Ok(res) => {
                        results.lock().unwrap()[i] = Some(res);
                    }
                    Err(e) => {
                        *failure.lock().unwrap() = Some(format!("cell {i}: {e:#}"));
                        return;
                    }
                }
            });
        }
    });
    if let Some(msg) = failure.into_inner().unwrap() {
        anyhow::bail!("{msg}");
    }
    let results: Vec<CellResult> = results
        .into_inner()
        .unwrap()
        .iter_mut()
        .map(|r| r.take().expect("all cells completed"))
        .collect();

    write_runs_csv(&results, out)?;
    write_mean_by_mass(&results, out, "operating_time_by_mass.csv", |m| {
        m.summary.operational_time_s
    })?;
    write_mean_by_mass(&results, out, "replacement_counts_by_mass.csv", |m| {
        m.summary.replacement_count as f64
    })?;
    write_histogram(&results, out)?;
    println!(
        "campaign complete: {} runs aggregated into {}",
        results.len(),
        out.display()
    );
    Ok(())
}

fn run_cell(campaign: &CampaignConfig, cell: &Cell, out: &Path) -> Result<CellResult> {
    let mut cfg = campaign.base.clone();
    cfg.payload_mass_kg = cell.mass;
    cfg.policy = cell.policy.clone();
    cfg.seed = cell.seed;
    cfg.sample_every_s = campaign.profile_sample_s;
    cfg.validate()?;
    let metrics = engine::run(cfg)?;

    let name = format!(
        "{}_{}kg_seed{}.csv",
        cell.policy.label(),
        trim_float(cell.mass),
        cell.seed
    );
    fs::write(
        out.join("profiles").join(name),
        profile_matrix(&metrics)?,
    )?;
    Ok(CellResult {
        cell: cell.clone(),
        metrics,
    })
}

fn trim_float(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Remaining-fraction matrix: one row per sample time, one column per robot.
fn profile_matrix(metrics: &RunMetrics) -> Result<String> {
    let ids: BTreeSet<u32> = metrics.samples.iter().map(|s| s.robot_id).collect();
    let mut text = String::from("time_s");
    for id in &ids {
        write!(text, ",robot_{id}")?;
    }
    text.push('\n');
    let mut row_time = f64::NEG_INFINITY;
    let mut row: Vec<f64> = Vec::new();
    let flush = |text: &mut String, t: f64, row: &[f64]| {
        if !row.is_empty() {
            write!(text, "{t:.1}").unwrap();
            for v in row {
                write!(text, ",{v:.4}").unwrap();
            }
            text.push('\n');
        }
    };
    for s in &metrics.samples {
        if s.time_s != row_time {
            flush(&mut text, row_time, &row);
            row_time = s.time_s;
            row.clear();
        }
        row.push(s.remaining_fraction);
    }
    flush(&mut text, row_time, &row);
    Ok(text)
}

fn write_runs_csv(results: &[CellResult], out: &Path) -> Result<()> {
    let mut text = String::from(
        "policy,payload_mass_kg,seed,operational_time_s,distance_m,replacement_count,\
         waiting_time_s,termination\n",
    );
    for r in results {
        writeln!(
            text,
            "{},{},{},{:.3},{:.3},{},{:.3},{}",
            r.cell.policy.label(),
            r.cell.mass,
            r.cell.seed,
            r.metrics.summary.operational_time_s,
            r.metrics.summary.distance_m,
            r.metrics.summary.replacement_count,
            r.metrics.summary.waiting_time_s,
            r.metrics.summary.termination,
        )?;
    }
    fs::write(out.join("runs.csv"), text)?;
    Ok(())
}

/// Mean of a per-run quantity over seeds, one row per (policy, mass).
fn write_mean_by_mass(
    results: &[CellResult],
    out: &Path,
    filename: &str,
    value: impl Fn(&RunMetrics) -> f64,
) -> Result<()> {
    let mut keys: Vec<(String, f64)> = Vec::new();
    for r in results {
        let key = (r.cell.policy.label(), r.cell.mass);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    let mut text = String::from("policy,payload_mass_kg,mean_value,n_seeds\n");
    for (policy, mass) in keys {
        let values: Vec<f64> = results
            .iter()
            .filter(|r| r.cell.policy.label() == policy && r.cell.mass == mass)
            .map(|r| value(&r.metrics))
            .collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        writeln!(text, "{},{},{:.3},{}", policy, mass, mean, values.len())?;
    }
    fs::write(out.join(filename), text)?;
    Ok(())
}

/// Swap events bucketed by the leaver's remaining fraction, in deciles.
fn write_histogram(results: &[CellResult], out: &Path) -> Result<()> {
    let mut policies: Vec<String> = Vec::new();
    for r in results {
        let label = r.cell.policy.label();
        if !policies.contains(&label) {
            policies.push(label);
        }
    }
    let mut text = String::from("policy,decile_low_pct,decile_high_pct,swap_count\n");
    for policy in policies {
        let mut bins = [0usize; 10];
        for r in results.iter().filter(|r| r.cell.policy.label() == policy) {
            for ev in &r.metrics.replacements {
                let bin = ((ev.remaining_fraction_at_swap * 10.0) as usize).min(9);
                bins[bin] += 1;
            }
        }
        for (i, count) in bins.iter().enumerate() {
            writeln!(text, "{},{},{},{}", policy, i * 10, (i + 1) * 10, count)?;
        }
    }
    fs::write(out.join("replacement_charge_histogram.csv"), text)?;
    Ok(())
}
