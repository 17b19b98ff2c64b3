//! Command-line front end: configuration, single runs and parameter sweeps.

pub mod config;
pub mod run;
pub mod sweep;

use anyhow::{anyhow, Result};
use clap::Parser;
use config::{RawConfig, RunConfig};
use std::path::PathBuf;

/// Batch ride-dispatch simulator.
///
/// Settings come from an optional `key = value` file; flags and `--set`
/// pairs override it. One run writes `<out>/<label>-<id>-seed<seed>/`;
/// `--sweep` with `--values` writes `<out>/sweep-<param>-<id>/sweep.csv`.
#[derive(Debug, Parser)]
#[command(name = "qdispatch", version)]
pub struct Cli {
    /// Configuration file of `key = value` lines.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Trip CSV to replay.
    #[arg(long)]
    pub input: Option<String>,
    /// Synthetic workload shape: uniform or hotspot.
    #[arg(long)]
    pub synthetic: Option<String>,
    #[arg(long)]
    pub drivers: Option<String>,
    /// Base pickup waiting time, seconds.
    #[arg(long)]
    pub base_wait: Option<String>,
    /// Seconds between dispatch batches.
    #[arg(long)]
    pub batch_interval: Option<String>,
    /// Scheduling window, seconds.
    #[arg(long)]
    pub window: Option<String>,
    /// Dispatch policy; a comma list is accepted with --sweep.
    #[arg(long)]
    pub policy: Option<String>,
    /// Demand predictor: HA, LR, oracle or file.
    #[arg(long)]
    pub predictor: Option<String>,
    #[arg(long)]
    pub alpha: Option<String>,
    #[arg(long)]
    pub beta: Option<String>,
    /// First seed.
    #[arg(long)]
    pub seed: Option<String>,
    /// Number of consecutive seeds.
    #[arg(long)]
    pub seeds: Option<String>,
    /// Swept parameter: drivers, base_wait, batch_interval or window.
    #[arg(long)]
    pub sweep: Option<String>,
    /// Comma-separated values for the swept parameter.
    #[arg(long)]
    pub values: Option<String>,
    /// Results directory.
    #[arg(long)]
    pub out: Option<String>,
    /// Write a per-batch trace.
    #[arg(long)]
    pub trace: bool,
    /// Worker threads for sweeps and multi-seed runs.
    #[arg(long)]
    pub workers: Option<String>,
    /// Any configuration key, as `key=value`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl Cli {
    /// File settings overlaid with flag values.
    pub fn raw_config(&self) -> Result<RawConfig> {
        let mut raw = match &self.config {
            Some(p) => RawConfig::from_path(p)?,
            None => RawConfig::default(),
        };
        let mut overrides = RawConfig::default();
        let flags = [
            ("input", &self.input),
            ("synthetic", &self.synthetic),
            ("drivers", &self.drivers),
            ("base_wait", &self.base_wait),
            ("batch_interval", &self.batch_interval),
            ("window", &self.window),
            ("dispatch.policy", &self.policy),
            ("predictor", &self.predictor),
            ("alpha", &self.alpha),
            ("beta", &self.beta),
            ("seed", &self.seed),
            ("seeds", &self.seeds),
            ("sweep", &self.sweep),
            ("values", &self.values),
            ("out", &self.out),
            ("workers", &self.workers),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                overrides.set(key, v)?;
            }
        }
        if self.trace {
            overrides.set("trace", "true")?;
        }
        for pair in &self.set {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| anyhow!("--set expects KEY=VALUE, got {pair:?}"))?;
            overrides.set(k.trim(), v.trim())?;
        }
        raw.merge(&overrides);
        Ok(raw)
    }
}

/// Executes the command and returns the directories written.
pub fn execute(cli: &Cli) -> Result<Vec<PathBuf>> {
    let cfg = RunConfig::resolve(cli.raw_config()?)?;
    let trips = run::load_trips(&cfg)?;
    if let Some(sweep) = &cfg.sweep {
        let (dir, _) = sweep::run_sweep(&cfg, sweep, trips.as_ref())?;
        return Ok(vec![dir]);
    }
    let fp = cfg.fingerprint()?;
    let first = cfg.sim.seed;
    let seeds: Vec<u64> = (first..first + cfg.seeds).collect();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build()?;
    let results: Vec<Result<run::RunResult>> = pool.install(|| {
        use rayon::prelude::*;
        seeds.par_iter().map(|&s| run::execute(&cfg, s, trips.as_ref(), &fp)).collect()
    });
    let mut dirs = Vec::new();
    for r in results {
        dirs.push(run::write_run(&cfg, &r?, trips.as_ref())?);
    }
    Ok(dirs)
}
