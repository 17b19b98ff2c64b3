//! Workload construction, single runs and their result files.

use crate::config::{InputSource, RunConfig, Shape, SyntheticInput};
use anyhow::{bail, Context, Result};
use qdispatch::engine::{run_simulation, SimConfig, SimOutput, Workload};
use qdispatch::ingest::{
    generate_synthetic, init_drivers, parse_trip_csv, pickup_points, riders_from_trips, synthetic_history,
    HeaderMap, ParseOutcome, SyntheticSpec, DEFAULT_NOISE,
};
use qdispatch::prediction::{DemandHistory, DEFAULT_SLOT_LEN};
use qdispatch::stats::{counts_per_interval, poisson_gof};
use serde::Serialize;
use serde_json::{json, Value};
use std::fs;
use std::path::{Path, PathBuf};

// Independent generator streams derived from the run seed.
const DRIVER_STREAM: u64 = 0x5eed_d21e;
const HISTORY_STREAM: u64 = 0x5eed_4157;
const NOISE_STREAM: u64 = 0x5eed_0015;

/// Level of the arrival-process goodness-of-fit test in `accuracy.json`.
const GOF_LEVEL: f64 = 0.05;
const GOF_INTERVAL_S: i64 = 60;

pub fn load_trips(cfg: &RunConfig) -> Result<Option<ParseOutcome>> {
    let InputSource::Trips(path) = &cfg.input else {
        return Ok(None);
    };
    let file = fs::File::open(path).with_context(|| format!("config key `input`: opening {}", path.display()))?;
    let parsed = parse_trip_csv(std::io::BufReader::new(file), &HeaderMap::default(), cfg.sim.grid.bbox())
        .with_context(|| format!("config key `input`: parsing {}", path.display()))?;
    if parsed.records.is_empty() {
        bail!("config key `input`: no usable trips in {}", path.display());
    }
    Ok(Some(parsed))
}

fn synthetic_spec(s: &SyntheticInput, sim: &SimConfig) -> Result<SyntheticSpec> {
    let grid = &sim.grid;
    let mut spec = match s.shape {
        Shape::Uniform => SyntheticSpec::uniform(grid.n_regions(), s.rate, sim.start, sim.end, sim.base_wait),
        Shape::Hotspot => SyntheticSpec::hotspot(grid, s.rate, s.sigma, s.spread, sim.start, sim.end, sim.base_wait),
    };
    if let Some(rates) = &s.rates {
        spec.rates = rates.clone();
    }
    if let Some(dest) = &s.dest_matrix {
        spec.dest = dest.clone();
    }
    spec.validate(grid.n_regions())
        .context("config keys `synthetic.*`")?;
    Ok(spec)
}

/// Effective simulation config and workload for one seed.
pub fn build_workload(cfg: &RunConfig, seed: u64, trips: Option<&ParseOutcome>) -> Result<(SimConfig, Workload)> {
    let mut sim = cfg.sim.clone();
    sim.seed = seed;
    let grid = sim.grid;
    let model = sim.model;
    let workload = match (&cfg.input, trips) {
        (InputSource::Synthetic(s), _) => {
            let spec = synthetic_spec(s, &sim)?;
            let riders = generate_synthetic(&spec, &grid, &model, seed)?;
            let sources: Vec<_> = riders.iter().map(|r| r.source).collect();
            let drivers = init_drivers(&sources, sim.n_drivers, seed ^ DRIVER_STREAM, sim.start);
            let history = synthetic_history(&spec, s.history_slots, DEFAULT_SLOT_LEN, &[], seed ^ HISTORY_STREAM);
            Workload {
                riders,
                drivers,
                history: Some(history),
            }
        }
        (InputSource::Trips(_), Some(parsed)) => {
            let first = parsed.records.iter().map(|t| t.pickup_time).min().unwrap_or(0);
            let last = parsed.records.iter().map(|t| t.pickup_time).max().unwrap_or(0);
            sim.start = cfg.start.unwrap_or(first);
            sim.end = cfg.end.unwrap_or(last + 1);
            sim.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
            let in_span: Vec<_> = parsed
                .records
                .iter()
                .filter(|t| t.pickup_time >= sim.start && t.pickup_time < sim.end)
                .copied()
                .collect();
            let earlier = parsed.records.iter().filter(|t| t.pickup_time < sim.start);
            let history_start = earlier.clone().map(|t| t.pickup_time).min().unwrap_or(sim.start);
            let history = DemandHistory::from_events(
                DEFAULT_SLOT_LEN,
                history_start,
                sim.start,
                earlier.map(|t| (grid.region_of(t.pickup), t.pickup_time)),
            )?;
            let riders = riders_from_trips(&in_span, sim.base_wait, DEFAULT_NOISE, seed ^ NOISE_STREAM, &model);
            let points = pickup_points(&in_span);
            if points.is_empty() {
                bail!("config keys `start`/`end`: no trips inside [{}, {})", sim.start, sim.end);
            }
            let drivers = init_drivers(&points, sim.n_drivers, seed ^ DRIVER_STREAM, sim.start);
            Workload {
                riders,
                drivers,
                history: Some(history),
            }
        }
        (InputSource::Trips(_), None) => bail!("trip input was not loaded"),
    };
    Ok((sim, workload))
}

pub struct RunResult {
    pub run_id: String,
    pub sim: SimConfig,
    pub output: SimOutput,
}

pub fn execute(cfg: &RunConfig, seed: u64, trips: Option<&ParseOutcome>, fingerprint: &str) -> Result<RunResult> {
    let (sim, workload) = build_workload(cfg, seed, trips)?;
    let output = run_simulation(workload, &sim).map_err(|e| anyhow::anyhow!("{e}"))?;
    let run_id = format!("{}-{}-seed{seed}", sim.label(), &fingerprint[..12]);
    Ok(RunResult { run_id, sim, output })
}

#[derive(Serialize)]
struct BatchRow {
    time: i64,
    waiting: usize,
    available: usize,
    candidates: usize,
    assignments: usize,
    reneged: usize,
    revenue: f64,
    upper_bound: f64,
    wall_ms: f64,
}

fn arrivals_gof(out: &SimOutput, sim: &SimConfig) -> Value {
    let times: Vec<i64> = out.riders.iter().map(|r| r.post_time).collect();
    let counts = counts_per_interval(&times, sim.start, sim.end, GOF_INTERVAL_S);
    match poisson_gof(&counts, GOF_LEVEL) {
        Ok(g) => json!({ "interval_s": GOF_INTERVAL_S, "level": GOF_LEVEL, "intervals": counts.len(), "result": g }),
        Err(e) => json!({ "interval_s": GOF_INTERVAL_S, "level": GOF_LEVEL, "intervals": counts.len(), "error": e.to_string() }),
    }
}

fn input_echo(cfg: &RunConfig, trips: Option<&ParseOutcome>) -> Value {
    match (&cfg.input, trips) {
        (InputSource::Trips(path), Some(p)) => json!({
            "source": "trips",
            "path": path.display().to_string(),
            "rows_in": p.rows_in,
            "trips": p.records.len(),
            "malformed": p.malformed,
            "dropoff_before_pickup": p.dropoff_before_pickup,
            "out_of_bbox": p.out_of_bbox,
        }),
        _ => json!({ "source": "synthetic" }),
    }
}

/// Creates `<out>/<run id>` and writes `summary.json`, `accuracy.json` and,
/// when tracing, `batches.csv`. An existing directory is an error.
pub fn write_run(cfg: &RunConfig, result: &RunResult, trips: Option<&ParseOutcome>) -> Result<PathBuf> {
    let dir = cfg.out.join(&result.run_id);
    create_fresh_dir(&cfg.out, &dir)?;
    let sim = &result.sim;
    let out = &result.output;

    let mut config = cfg.raw.effective();
    config.insert("seed".into(), sim.seed.to_string());
    config.insert("start".into(), sim.start.to_string());
    config.insert("end".into(), sim.end.to_string());
    for key in ["seeds", "out", "workers"] {
        config.remove(key);
    }
    let summary = json!({
        "run_id": result.run_id,
        "label": sim.label(),
        "seed": sim.seed,
        "config": config,
        "input": input_echo(cfg, trips),
        "metrics": out.metrics,
    });
    write_json(&dir.join("summary.json"), &summary)?;

    let accuracy = json!({
        "idle_accuracy": out.metrics.idle_accuracy,
        "idle_samples": out.idle_samples.len(),
        "arrivals_gof": arrivals_gof(out, sim),
    });
    write_json(&dir.join("accuracy.json"), &accuracy)?;

    if sim.trace {
        let mut w = csv::Writer::from_path(dir.join("batches.csv"))?;
        for (t, wall) in out.trace.iter().zip(&out.batch_wall) {
            w.serialize(BatchRow {
                time: t.time,
                waiting: t.waiting,
                available: t.available,
                candidates: t.candidates,
                assignments: t.assignments,
                reneged: t.reneged,
                revenue: t.revenue,
                upper_bound: t.upper_bound + 0.0,
                wall_ms: wall * 1000.0,
            })?;
        }
        w.flush()?;
    }
    Ok(dir)
}

pub fn create_fresh_dir(parent: &Path, dir: &Path) -> Result<()> {
    fs::create_dir_all(parent).with_context(|| format!("config key `out`: creating {}", parent.display()))?;
    match fs::create_dir(dir) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => bail!(
            "{} already exists; results are never overwritten (remove it or choose another `out`)",
            dir.display()
        ),
        Err(e) => Err(e).with_context(|| format!("config key `out`: creating {}", dir.display())),
    }
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
