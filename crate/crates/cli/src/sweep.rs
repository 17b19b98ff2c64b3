use crate::config::{RunConfig, Sweep};
use crate::run::{create_fresh_dir, execute};
use anyhow::{Context, Result};
use qdispatch::dispatch::Policy;
use qdispatch::ingest::ParseOutcome;
use rayon::prelude::*;
use serde::Serialize;
use std::path::PathBuf;

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub parameter: &'static str,
    pub value: i64,
    pub policy: String,
    pub label: String,
    /// Seed number, or `mean` on aggregate rows.
    pub seed: String,
    pub revenue: Option<f64>,
    pub upper_bound: Option<f64>,
    pub served: Option<f64>,
    pub reneged: Option<f64>,
    pub total_riders: Option<f64>,
    pub mean_batch_ms: Option<f64>,
    pub error: String,
}

struct Job {
    value: i64,
    policy: Policy,
    seed: u64,
}

fn run_job(cfg: &RunConfig, sweep: &Sweep, job: &Job, trips: Option<&ParseOutcome>, fp: &str) -> SweepRow {
    let mut row = SweepRow {
        parameter: sweep.param.key(),
        value: job.value,
        policy: job.policy.to_string(),
        label: job.policy.to_string(),
        seed: job.seed.to_string(),
        revenue: None,
        upper_bound: None,
        served: None,
        reneged: None,
        total_riders: None,
        mean_batch_ms: None,
        error: String::new(),
    };
    let outcome = cfg
        .for_job(job.policy, sweep.param, job.value)
        .and_then(|c| execute(&c, job.seed, trips, fp));
    match outcome {
        Ok(r) => {
            let m = &r.output.metrics;
            let wall = &r.output.batch_wall;
            row.label = m.label.clone();
            row.revenue = Some(m.total_revenue);
            row.upper_bound = Some(m.upper_bound);
            row.served = Some(m.served as f64);
            row.reneged = Some(m.reneged as f64);
            row.total_riders = Some(m.total_riders as f64);
            row.mean_batch_ms = Some(if wall.is_empty() {
                0.0
            } else {
                1000.0 * wall.iter().sum::<f64>() / wall.len() as f64
            });
        }
        Err(e) => row.error = format!("{e:#}"),
    }
    row
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = values.collect();
    v.filter(|v| !v.is_empty()).map(|v| v.iter().sum::<f64>() / v.len() as f64)
}

/// Per-(value, policy) means over successful seeds. A cell with any failed
/// seed gets an empty mean and the count of failures.
fn mean_rows(rows: &[SweepRow]) -> Vec<SweepRow> {
    let mut out: Vec<SweepRow> = Vec::new();
    for chunk in rows.chunk_by(|a, b| a.value == b.value && a.policy == b.policy) {
        let failed = chunk.iter().filter(|r| !r.error.is_empty()).count();
        let ok = || chunk.iter().filter(|r| r.error.is_empty());
        let pick = |f: fn(&SweepRow) -> Option<f64>| if failed > 0 { None } else { mean(ok().map(f)) };
        out.push(SweepRow {
            seed: "mean".into(),
            label: ok().next().map_or_else(|| chunk[0].label.clone(), |r| r.label.clone()),
            revenue: pick(|r| r.revenue),
            upper_bound: pick(|r| r.upper_bound),
            served: pick(|r| r.served),
            reneged: pick(|r| r.reneged),
            total_riders: pick(|r| r.total_riders),
            mean_batch_ms: pick(|r| r.mean_batch_ms),
            error: if failed > 0 { format!("{failed} of {} seeds failed", chunk.len()) } else { String::new() },
            ..chunk[0].clone()
        });
    }
    out
}

/// Runs every value × policy × seed cell on `cfg.workers` threads and writes
/// `<out>/sweep-<param>-<id>/sweep.csv`. Rows keep job order regardless of
/// scheduling; failed cells are recorded, not fatal.
pub fn run_sweep(cfg: &RunConfig, sweep: &Sweep, trips: Option<&ParseOutcome>) -> Result<(PathBuf, Vec<SweepRow>)> {
    let fp = cfg.fingerprint()?;
    let dir = cfg.out.join(format!("sweep-{}-{}", sweep.param.key(), &fp[..12]));
    create_fresh_dir(&cfg.out, &dir)?;

    let first_seed = cfg.sim.seed;
    let jobs: Vec<Job> = sweep
        .values
        .iter()
        .flat_map(|&value| {
            cfg.policies.iter().flat_map(move |&policy| {
                (first_seed..first_seed + cfg.seeds).map(move |seed| Job { value, policy, seed })
            })
        })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .context("config key `workers`")?;
    let rows: Vec<SweepRow> = pool.install(|| jobs.par_iter().map(|j| run_job(cfg, sweep, j, trips, &fp)).collect());

    let mut w = csv::Writer::from_path(dir.join("sweep.csv"))?;
    let means = mean_rows(&rows);
    for r in rows.iter().chain(&means) {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok((dir, rows))
}
