//! Scenario configuration, single runs, homophily sweeps and their outputs.

mod config;
mod io;
mod metrics;
mod plot;

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

pub use config::{
    ColdStartConfig, CostConfig, CostsConfig, ExperimentConfig, GoalConfig, GoalName,
    NetworkConfig,
};
pub use io::{
    read_metrics, read_opinions, read_summary, write_errors, write_metrics, write_trace,
    CLUSTERS_FILE, CONFIG_FILE, ERRORS_FILE, MESSAGES_FILE, METRICS_FILE, OPINIONS_FILE,
    SUMMARY_FILE, SWEEP_FILE,
};
pub use metrics::{
    bimodality_along, final_bimodality, mean_distance_to_goal, metrics_from_trace, MetricsRecord,
};
pub use plot::{plot_directory, plot_sweep, plot_trace, plot_trajectories};

use crate::error::{Error, Result};
use crate::solver::{cold_start_messages, receding_horizon_run, Trace};

/// Directory holding the files of one scenario of a run.
pub fn scenario_dir(output_dir: &Path, seed: u64) -> PathBuf {
    output_dir.join(format!("seed_{seed}"))
}

/// Simulates one seed of `cfg` and returns the trace and its metrics
/// without writing anything.
pub fn simulate(cfg: &ExperimentConfig, seed: u64) -> Result<(Trace, MetricsRecord)> {
    let context = || format!("sigma {} seed {seed}", cfg.kernel.sigma);
    let inner = || -> Result<(Trace, MetricsRecord)> {
        cfg.validate()?;
        let pop = cfg.build_population(seed)?;
        let cost_a = cfg.costs.adversary.to_spec()?;
        let cost_d = cfg.costs.defender.to_spec()?;
        let cold = cfg.cold_start_messages(cold_start_messages(&pop, &cost_a));
        let trace = receding_horizon_run(
            &pop,
            &cost_a,
            &cost_d,
            &cfg.solver,
            &cfg.dynamics,
            &cfg.kernel,
            &cfg.clustering,
            Some(cold),
            seed,
        )?;
        let record = metrics_from_trace(&trace, cfg.kernel.sigma, seed, &cost_a.goal, &cost_d.goal);
        Ok((trace, record))
    };
    inner().map_err(|e| e.in_scenario(context()))
}

/// Simulates one seed and writes its trace and metrics into `dir`.
pub fn run_scenario_in(
    cfg: &ExperimentConfig,
    seed: u64,
    dir: &Path,
) -> Result<(Trace, MetricsRecord)> {
    let (trace, record) = simulate(cfg, seed)?;
    let persist = || -> Result<()> {
        write_trace(dir, &trace)?;
        write_metrics(&dir.join(METRICS_FILE), std::slice::from_ref(&record))
    };
    persist().map_err(|e| e.in_scenario(format!("writing {}", dir.display())))?;
    Ok((trace, record))
}

/// Simulates one seed, writing into `output_dir/seed_<seed>` and persisting
/// the configuration next to it.
pub fn run_scenario(cfg: &ExperimentConfig, seed: u64) -> Result<(Trace, MetricsRecord)> {
    fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    cfg.save(cfg.output_dir.join(CONFIG_FILE))?;
    run_scenario_in(cfg, seed, &scenario_dir(&cfg.output_dir, seed))
}

fn thread_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    if jobs == Some(0) {
        return Err(Error::invalid("jobs must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))
}

/// Runs `(sigma, seed, dir)` scenarios in parallel, in input order, turning
/// failures into flagged rows.
fn run_grid(
    cfg: &ExperimentConfig,
    grid: &[(f64, u64, PathBuf)],
    jobs: Option<usize>,
) -> Result<Vec<MetricsRecord>> {
    let pool = thread_pool(jobs)?;
    Ok(pool.install(|| {
        grid.par_iter()
            .map(|(sigma, seed, dir)| {
                let mut scenario = cfg.clone();
                scenario.kernel.sigma = *sigma;
                match run_scenario_in(&scenario, *seed, dir) {
                    Ok((_, record)) => record,
                    Err(e) => {
                        log::warn!("{e}");
                        MetricsRecord::failed(*sigma, *seed, e.to_string())
                    }
                }
            })
            .collect()
    }))
}

fn prepare_output(cfg: &ExperimentConfig) -> Result<()> {
    let out = &cfg.output_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    cfg.save(out.join(CONFIG_FILE))
}

/// Runs every configured seed at the configured sigma, each into
/// `output_dir/seed_<seed>`, and writes the combined metrics table and error
/// list into the output directory.
pub fn run_seeds(cfg: &ExperimentConfig, jobs: Option<usize>) -> Result<Vec<MetricsRecord>> {
    cfg.validate()?;
    thread_pool(jobs)?;
    prepare_output(cfg)?;
    let out = &cfg.output_dir;
    let grid: Vec<(f64, u64, PathBuf)> = cfg
        .seeds
        .iter()
        .map(|&seed| (cfg.kernel.sigma, seed, scenario_dir(out, seed)))
        .collect();
    let rows = run_grid(cfg, &grid, jobs)?;
    write_metrics(&out.join(METRICS_FILE), &rows)?;
    write_errors(&out.join(ERRORS_FILE), &rows)?;
    Ok(rows)
}

/// Runs every `(sigma, seed)` pair, at most `jobs` at a time (all cores when
/// `None`). Rows are ordered by `(sigma, seed)`; failures become flagged rows
/// and never stop the sweep. Writes the consolidated table, an error list and
/// the configuration into the output directory.
pub fn sweep_homophily(
    cfg: &ExperimentConfig,
    sigmas: &[f64],
    jobs: Option<usize>,
) -> Result<Vec<MetricsRecord>> {
    if sigmas.is_empty() {
        return Err(Error::invalid("sweep needs at least one sigma"));
    }
    if let Some(s) = sigmas.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
        return Err(Error::invalid(format!("sigma must be positive, got {s}")));
    }
    cfg.validate()?;
    thread_pool(jobs)?;
    let mut pairs: Vec<(f64, u64)> = sigmas
        .iter()
        .flat_map(|&s| cfg.seeds.iter().map(move |&seed| (s, seed)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    prepare_output(cfg)?;
    let out = &cfg.output_dir;
    let grid: Vec<(f64, u64, PathBuf)> = pairs
        .into_iter()
        .enumerate()
        .map(|(idx, (sigma, seed))| {
            (sigma, seed, out.join(format!("run_{idx:03}_sigma_{sigma}_seed_{seed}")))
        })
        .collect();
    let rows = run_grid(cfg, &grid, jobs)?;
    write_metrics(&out.join(SWEEP_FILE), &rows)?;
    write_errors(&out.join(ERRORS_FILE), &rows)?;
    Ok(rows)
}
