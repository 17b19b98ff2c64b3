//! Flat `key = value` run configuration.
//!
//! A configuration is a map of known keys to raw strings. Files are read
//! first and command-line values replace file values. [`RunConfig::resolve`]
//! fills defaults, checks every key and reports failures by key name.

use anyhow::{anyhow, bail, Context, Result};
use qdispatch::dispatch::Policy;
use qdispatch::domain::FeeRate;
use qdispatch::engine::SimConfig;
use qdispatch::ingest::parse_timestamp;
use qdispatch::prediction::{ForecastTable, Predictor, PredictorMethod};
use qdispatch::spatial::{BoundingBox, GridPartition, Metric, TravelModel};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// Every accepted key with its default (`None` when unset by default).
pub const KEYS: &[(&str, Option<&str>)] = &[
    ("input", None),
    ("synthetic", None),
    ("synthetic.rate", Some("0.5")),
    ("synthetic.rates", None),
    ("synthetic.dest_matrix", None),
    ("synthetic.sigma", Some("2.0")),
    ("synthetic.spread", Some("0.3")),
    ("synthetic.span_s", Some("3600")),
    ("synthetic.history_slots", Some("15")),
    ("drivers", Some("4000")),
    ("base_wait", Some("120")),
    ("batch_interval", Some("3")),
    ("window", Some("300")),
    ("alpha", Some("1")),
    ("beta", Some("1")),
    ("dispatch.policy", Some("LS")),
    ("predictor", Some("HA")),
    ("predictor.window", Some("15")),
    ("predictor.file", None),
    ("seed", Some("0")),
    ("seeds", Some("1")),
    ("start", None),
    ("end", None),
    ("grid.rows", Some("16")),
    ("grid.cols", Some("16")),
    ("grid.bbox", Some("-74.03,-73.77,40.58,40.92")),
    ("travel.speed_mps", Some("12")),
    ("travel.metric", Some("haversine")),
    ("trace", Some("false")),
    ("out", Some("runs")),
    ("workers", None),
    ("sweep", None),
    ("values", None),
];

/// Keys that select where results go or how many runs execute; they do not
/// change any single run and stay out of the run id.
const NON_IDENTITY_KEYS: &[&str] = &["out", "seeds", "seed", "workers", "sweep", "values"];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `key = value`, got {line:?}", i + 1))?;
            cfg.set(k.trim(), v.trim()).with_context(|| format!("line {}", i + 1))?;
        }
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KEYS.iter().any(|(k, _)| *k == key) {
            bail!("unknown config key `{key}`");
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Values after this map's entries replace the receiver's.
    pub fn merge(&mut self, overrides: &RawConfig) {
        for (k, v) in &overrides.values {
            self.values.insert(k.clone(), v.clone());
        }
    }

    /// Every key with its effective value, defaults included.
    pub fn effective(&self) -> BTreeMap<String, String> {
        KEYS.iter()
            .filter_map(|(k, d)| {
                self.get(k)
                    .or(*d)
                    .map(|v| (k.to_string(), v.to_string()))
            })
            .collect()
    }
}

fn field<T: FromStr>(raw: &RawConfig, key: &'static str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    let default = KEYS.iter().find(|(k, _)| *k == key).and_then(|(_, d)| *d);
    match raw.get(key).or(default) {
        None => Ok(None),
        Some(v) => v
            .parse::<T>()
            .map(Some)
            .map_err(|e| anyhow!("config key `{key}`: invalid value {v:?}: {e}")),
    }
}

fn required<T: FromStr>(raw: &RawConfig, key: &'static str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    field(raw, key)?.ok_or_else(|| anyhow!("config key `{key}` is required"))
}

fn list<T: FromStr>(raw: &RawConfig, key: &'static str) -> Result<Option<Vec<T>>>
where
    T::Err: std::fmt::Display,
{
    let Some(v) = raw.get(key) else {
        return Ok(None);
    };
    v.split(',')
        .map(|p| {
            p.trim()
                .parse::<T>()
                .map_err(|e| anyhow!("config key `{key}`: invalid entry {p:?}: {e}"))
        })
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

/// Seconds since the epoch, given as an integer or `YYYY-MM-DD HH:MM:SS`.
fn instant(raw: &RawConfig, key: &'static str) -> Result<Option<i64>> {
    let Some(v) = raw.get(key) else {
        return Ok(None);
    };
    v.parse::<i64>()
        .ok()
        .or_else(|| parse_timestamp(v))
        .map(Some)
        .ok_or_else(|| anyhow!("config key `{key}`: expected seconds or `YYYY-MM-DD HH:MM:SS`, got {v:?}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Uniform,
    Hotspot,
}

impl FromStr for Shape {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(Shape::Uniform),
            "hotspot" => Ok(Shape::Hotspot),
            _ => Err(format!("expected `uniform` or `hotspot`, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticInput {
    pub shape: Shape,
    /// Riders per second over the whole grid.
    pub rate: f64,
    /// Explicit per-region rates; replaces `shape` and `rate`.
    pub rates: Option<Vec<f64>>,
    pub dest_matrix: Option<Vec<Vec<f64>>>,
    pub sigma: f64,
    pub spread: f64,
    pub span: i64,
    pub history_slots: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InputSource {
    Trips(PathBuf),
    Synthetic(SyntheticInput),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Drivers,
    BaseWait,
    BatchInterval,
    Window,
}

impl SweepParam {
    pub fn key(self) -> &'static str {
        match self {
            SweepParam::Drivers => "drivers",
            SweepParam::BaseWait => "base_wait",
            SweepParam::BatchInterval => "batch_interval",
            SweepParam::Window => "window",
        }
    }
}

impl FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "drivers" | "n_drivers" | "n" => Ok(SweepParam::Drivers),
            "base_wait" | "tau" => Ok(SweepParam::BaseWait),
            "batch_interval" | "delta" => Ok(SweepParam::BatchInterval),
            "window" | "t_c" => Ok(SweepParam::Window),
            _ => Err(format!("expected drivers, base_wait, batch_interval or window, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Sweep {
    pub param: SweepParam,
    pub values: Vec<i64>,
}

/// A validated configuration. `sim.policy` is the first of `policies`.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub raw: RawConfig,
    pub input: InputSource,
    pub sim: SimConfig,
    pub policies: Vec<Policy>,
    /// Explicit span bounds; trip input derives missing ones from the data.
    pub start: Option<i64>,
    pub end: Option<i64>,
    pub seeds: u64,
    pub out: PathBuf,
    pub workers: usize,
    pub sweep: Option<Sweep>,
}

fn read_matrix(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .with_context(|| format!("config key `synthetic.dest_matrix`: reading {}", path.display()))?;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.context("config key `synthetic.dest_matrix`")?;
        let row = rec
            .iter()
            .map(|c| c.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .context("config key `synthetic.dest_matrix`: non-numeric entry")?;
        rows.push(row);
    }
    Ok(rows)
}

impl RunConfig {
    pub fn resolve(raw: RawConfig) -> Result<Self> {
        let grid = {
            let rows: usize = required(&raw, "grid.rows")?;
            let cols: usize = required(&raw, "grid.cols")?;
            let bbox: BoundingBox = required(&raw, "grid.bbox")?;
            GridPartition::new(bbox, rows, cols).map_err(|e| anyhow!("config key `grid.rows`/`grid.cols`: {e}"))?
        };
        let model = {
            let speed: f64 = required(&raw, "travel.speed_mps")?;
            let metric: Metric = required(&raw, "travel.metric")?;
            TravelModel::new(speed, metric).map_err(|e| anyhow!("config key `travel.speed_mps`: {e}"))?
        };

        let input = match (raw.get("input"), raw.get("synthetic")) {
            (Some(_), Some(_)) => bail!("config keys `input` and `synthetic` are mutually exclusive"),
            (None, None) => bail!("no input source: set `input` (trip CSV) or `synthetic` (uniform|hotspot)"),
            (Some(path), None) => InputSource::Trips(PathBuf::from(path)),
            (None, Some(_)) => {
                let rates: Option<Vec<f64>> = list(&raw, "synthetic.rates")?;
                if let Some(r) = &rates {
                    if r.len() != grid.n_regions() {
                        bail!(
                            "config key `synthetic.rates`: {} entries for {} regions",
                            r.len(),
                            grid.n_regions()
                        );
                    }
                }
                let dest_matrix = match raw.get("synthetic.dest_matrix") {
                    Some(p) => Some(read_matrix(Path::new(p))?),
                    None => None,
                };
                let span: i64 = required(&raw, "synthetic.span_s")?;
                if span <= 0 {
                    bail!("config key `synthetic.span_s`: must be > 0");
                }
                InputSource::Synthetic(SyntheticInput {
                    shape: required(&raw, "synthetic")?,
                    rate: required(&raw, "synthetic.rate")?,
                    rates,
                    dest_matrix,
                    sigma: required(&raw, "synthetic.sigma")?,
                    spread: required(&raw, "synthetic.spread")?,
                    span,
                    history_slots: required(&raw, "synthetic.history_slots")?,
                })
            }
        };

        let policies: Vec<Policy> = list(&raw, "dispatch.policy")?.unwrap_or_else(|| vec![Policy::Ls]);
        if policies.is_empty() {
            bail!("config key `dispatch.policy`: empty");
        }
        let method: PredictorMethod = required(&raw, "predictor")?;
        let mut predictor = Predictor::new(method, required(&raw, "predictor.window")?)
            .map_err(|e| anyhow!("config key `predictor.window`: {e}"))?;
        if let Some(path) = raw.get("predictor.file") {
            let table = ForecastTable::from_path(path).map_err(|e| anyhow!("config key `predictor.file`: {e}"))?;
            predictor = predictor.with_forecast(table);
        }
        let alpha = FeeRate::new(required(&raw, "alpha")?).map_err(|e| anyhow!("config key `alpha`: {e}"))?;

        let start = instant(&raw, "start")?;
        let end = instant(&raw, "end")?;
        let (sim_start, sim_end) = match &input {
            InputSource::Synthetic(s) => {
                let st = start.unwrap_or(0);
                (st, end.unwrap_or(st + s.span))
            }
            // Placeholder bounds; replaced once the trips are read.
            InputSource::Trips(_) => (start.unwrap_or(0), end.unwrap_or(start.unwrap_or(0) + 1)),
        };

        let sim = SimConfig {
            n_drivers: required(&raw, "drivers")?,
            base_wait: required(&raw, "base_wait")?,
            batch_interval: required(&raw, "batch_interval")?,
            window: required(&raw, "window")?,
            alpha,
            beta: required(&raw, "beta")?,
            grid,
            model,
            policy: policies[0],
            predictor,
            seed: required(&raw, "seed")?,
            start: sim_start,
            end: sim_end,
            trace: required(&raw, "trace")?,
        };
        sim.validate().map_err(|e| anyhow!("{e}"))?;

        let seeds: u64 = required(&raw, "seeds")?;
        if seeds == 0 {
            bail!("config key `seeds`: must be >= 1");
        }
        let workers = match field::<usize>(&raw, "workers")? {
            Some(0) => bail!("config key `workers`: must be >= 1"),
            Some(n) => n,
            None => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        };
        let sweep = match (field::<SweepParam>(&raw, "sweep")?, list::<i64>(&raw, "values")?) {
            (Some(param), Some(values)) => {
                let floor = if param == SweepParam::BaseWait { 0 } else { 1 };
                if let Some(v) = values.iter().find(|&&v| v < floor) {
                    bail!("config key `values`: {v} is out of range for `{}`", param.key());
                }
                Some(Sweep { param, values })
            }
            (Some(_), None) => bail!("config key `values` is required with `sweep`"),
            (None, Some(_)) => bail!("config key `values` needs `sweep`"),
            (None, None) => None,
        };
        if sweep.is_none() && policies.len() > 1 {
            bail!("config key `dispatch.policy`: several policies are only allowed in a sweep");
        }

        Ok(Self {
            input,
            sim,
            policies,
            start,
            end,
            seeds,
            out: PathBuf::from(raw.get("out").unwrap_or("runs")),
            workers,
            sweep,
            raw,
        })
    }

    /// Hex SHA-256 over every run-defining key and, for trip input, the file contents.
    pub fn fingerprint(&self) -> Result<String> {
        let mut h = Sha256::new();
        for (k, v) in self.raw.effective() {
            if NON_IDENTITY_KEYS.contains(&k.as_str()) {
                continue;
            }
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        for key in ["input", "synthetic.dest_matrix", "predictor.file"] {
            if let Some(path) = self.raw.get(key) {
                let bytes = std::fs::read(path).with_context(|| format!("config key `{key}`: reading {path}"))?;
                h.update(&bytes);
            }
        }
        Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
    }

    /// One sweep cell: `policy` with `param = value`, echoed into the raw map.
    pub fn for_job(&self, policy: Policy, param: SweepParam, value: i64) -> Result<Self> {
        let mut job = self.clone();
        job.raw.set("dispatch.policy", &policy.to_string())?;
        job.raw.set(param.key(), &value.to_string())?;
        job.sim.policy = policy;
        job.policies = vec![policy];
        match param {
            SweepParam::Drivers => job.sim.n_drivers = value as usize,
            SweepParam::BaseWait => job.sim.base_wait = value,
            SweepParam::BatchInterval => job.sim.batch_interval = value,
            SweepParam::Window => job.sim.window = value,
        }
        job.sim.validate().map_err(|e| anyhow!("{e}"))?;
        Ok(job)
    }
}
