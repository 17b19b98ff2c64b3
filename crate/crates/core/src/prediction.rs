//! Per-region demand forecasts and rejoin counts for one scheduling window.

use crate::domain::Seconds;
use crate::spatial::RegionId;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

pub const DEFAULT_SLOT_LEN: Seconds = 1800;
pub const DEFAULT_PREDICTOR_WINDOW: usize = 15;

#[derive(Debug, Error)]
pub enum PredictionError {
    #[error("slot length must be positive, got {0}")]
    NonPositiveSlot(Seconds),
    #[error("predictor window must be at least one slot")]
    ZeroWindow,
    #[error("no history slot precedes t = {0}")]
    NoHistory(Seconds),
    #[error("the oracle predictor needs a truth history")]
    MissingTruth,
    #[error("the file predictor needs a loaded forecast table")]
    MissingForecast,
    #[error("unknown predictor method {0:?} (expected ha, lr, oracle or file)")]
    UnknownMethod(String),
    #[error("forecast table: {0}")]
    Csv(#[from] csv::Error),
    #[error("forecast table: negative or non-finite count {count} for region {region}, slot {slot}")]
    BadForecast { region: RegionId, slot: i64, count: f64 },
}

/// Order arrivals bucketed into fixed slots, plus the exact arrival times.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DemandHistory {
    slot_len: Seconds,
    counts: HashMap<(RegionId, i64), u32>,
    times: HashMap<RegionId, Vec<Seconds>>,
    /// Half-open slot range observed so far; slots inside it without an entry hold zero orders.
    coverage: Option<(i64, i64)>,
}

impl DemandHistory {
    pub fn new(slot_len: Seconds) -> Result<Self, PredictionError> {
        if slot_len <= 0 {
            return Err(PredictionError::NonPositiveSlot(slot_len));
        }
        Ok(Self {
            slot_len,
            ..Self::default()
        })
    }

    /// Builds a history covering `[start, end)` from `(region, post_time)` events.
    pub fn from_events<I>(slot_len: Seconds, start: Seconds, end: Seconds, events: I) -> Result<Self, PredictionError>
    where
        I: IntoIterator<Item = (RegionId, Seconds)>,
    {
        let mut h = Self::new(slot_len)?;
        h.cover(start, end);
        for (region, t) in events {
            h.record(region, t);
        }
        h.finish();
        Ok(h)
    }

    pub fn slot_len(&self) -> Seconds {
        self.slot_len
    }

    pub fn slot_of(&self, t: Seconds) -> i64 {
        t.div_euclid(self.slot_len)
    }

    /// Extends coverage to include every slot touching `[start, end)`.
    pub fn cover(&mut self, start: Seconds, end: Seconds) {
        if end <= start {
            return;
        }
        let lo = self.slot_of(start);
        let hi = self.slot_of(end - 1) + 1;
        self.coverage = Some(match self.coverage {
            Some((a, b)) => (a.min(lo), b.max(hi)),
            None => (lo, hi),
        });
    }

    pub fn coverage(&self) -> Option<(i64, i64)> {
        self.coverage
    }

    /// Records one order; call [`DemandHistory::finish`] before querying exact windows.
    pub fn record(&mut self, region: RegionId, t: Seconds) {
        let slot = self.slot_of(t);
        *self.counts.entry((region, slot)).or_insert(0) += 1;
        self.times.entry(region).or_default().push(t);
        self.cover(t, t + 1);
    }

    /// Adds `n` orders to a slot without exact times; such orders are invisible to
    /// [`DemandHistory::count_between`].
    pub fn add_count(&mut self, region: RegionId, slot: i64, n: u32) {
        *self.counts.entry((region, slot)).or_insert(0) += n;
        self.cover(slot * self.slot_len, (slot + 1) * self.slot_len);
    }

    /// Sorts the exact arrival times.
    pub fn finish(&mut self) {
        for v in self.times.values_mut() {
            v.sort_unstable();
        }
    }

    pub fn count(&self, region: RegionId, slot: i64) -> u32 {
        self.counts.get(&(region, slot)).copied().unwrap_or(0)
    }

    /// Exact number of orders of `region` posted in `[start, end)`.
    pub fn count_between(&self, region: RegionId, start: Seconds, end: Seconds) -> usize {
        let Some(v) = self.times.get(&region) else {
            return 0;
        };
        debug_assert!(v.windows(2).all(|w| w[0] <= w[1]), "history not finished");
        v.partition_point(|&t| t < end) - v.partition_point(|&t| t < start)
    }

    /// Up to `window` covered slots immediately before `slot`, oldest first.
    fn trailing(&self, region: RegionId, slot: i64, window: usize) -> Vec<(i64, f64)> {
        let Some((first, last)) = self.coverage else {
            return Vec::new();
        };
        let lo = (slot - window as i64).max(first);
        let hi = slot.min(last);
        (lo..hi).map(|s| (s, self.count(region, s) as f64)).collect()
    }
}

/// Externally produced per-slot forecasts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ForecastTable {
    counts: HashMap<(RegionId, i64), f64>,
}

#[derive(Debug, Deserialize)]
struct ForecastRow {
    region: RegionId,
    slot: i64,
    count: f64,
}

impl ForecastTable {
    pub fn from_reader<R: Read>(reader: R) -> Result<Self, PredictionError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut counts = HashMap::new();
        for row in rdr.deserialize::<ForecastRow>() {
            let row = row?;
            if !(row.count.is_finite() && row.count >= 0.0) {
                return Err(PredictionError::BadForecast {
                    region: row.region,
                    slot: row.slot,
                    count: row.count,
                });
            }
            counts.insert((row.region, row.slot), row.count);
        }
        Ok(Self { counts })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, PredictionError> {
        let file = std::fs::File::open(path).map_err(csv::Error::from)?;
        Self::from_reader(std::io::BufReader::new(file))
    }

    pub fn insert(&mut self, region: RegionId, slot: i64, count: f64) {
        self.counts.insert((region, slot), count);
    }

    pub fn get(&self, region: RegionId, slot: i64) -> f64 {
        self.counts.get(&(region, slot)).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PredictorMethod {
    /// Historical average of trailing slots.
    Ha,
    /// Least-squares line through trailing slots.
    Lr,
    /// The true count.
    Oracle,
    /// Forecast table lookup.
    File,
}

impl FromStr for PredictorMethod {
    type Err = PredictionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ha" => Ok(Self::Ha),
            "lr" => Ok(Self::Lr),
            "oracle" | "real" => Ok(Self::Oracle),
            "file" => Ok(Self::File),
            _ => Err(PredictionError::UnknownMethod(s.to_string())),
        }
    }
}

impl std::fmt::Display for PredictorMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Ha => "ha",
            Self::Lr => "lr",
            Self::Oracle => "oracle",
            Self::File => "file",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predictor {
    pub method: PredictorMethod,
    pub window: usize,
    pub forecast: Option<ForecastTable>,
}

impl Predictor {
    pub fn new(method: PredictorMethod, window: usize) -> Result<Self, PredictionError> {
        if window == 0 {
            return Err(PredictionError::ZeroWindow);
        }
        Ok(Self {
            method,
            window,
            forecast: None,
        })
    }

    pub fn with_forecast(mut self, table: ForecastTable) -> Self {
        self.forecast = Some(table);
        self
    }

    /// `true` for the real-demand variant of a policy.
    pub fn is_oracle(&self) -> bool {
        self.method == PredictorMethod::Oracle
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Expected number of orders in the window; never negative.
    pub count: f64,
    /// Fewer trailing slots than the predictor window were available.
    pub fallback: bool,
}

/// `(slot, overlap seconds)` for every slot intersecting `[start, start + len)`.
fn overlapped_slots(slot_len: Seconds, start: Seconds, len: Seconds) -> Vec<(i64, f64)> {
    let end = start + len;
    let mut out = Vec::new();
    let mut slot = start.div_euclid(slot_len);
    loop {
        let lo = (slot * slot_len).max(start);
        let hi = ((slot + 1) * slot_len).min(end);
        if lo >= end {
            break;
        }
        out.push((slot, (hi - lo) as f64));
        slot += 1;
    }
    out
}

/// Ordinary least-squares `(intercept, slope)` of `y` on `x`.
fn least_squares(points: &[(i64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0 as f64).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 as f64 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return (my, 0.0);
    }
    let sxy: f64 = points.iter().map(|p| (p.0 as f64 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    (my - slope * mx, slope)
}

/// Expected number of orders of `region` in `[window_start, window_start + t_c)`.
pub fn predict_demand(
    history: &DemandHistory,
    region: RegionId,
    window_start: Seconds,
    t_c: Seconds,
    predictor: &Predictor,
    truth: Option<&DemandHistory>,
) -> Result<Prediction, PredictionError> {
    let slot_len = history.slot_len();
    match predictor.method {
        PredictorMethod::Oracle => {
            let truth = truth.ok_or(PredictionError::MissingTruth)?;
            Ok(Prediction {
                count: truth.count_between(region, window_start, window_start + t_c) as f64,
                fallback: false,
            })
        }
        PredictorMethod::File => {
            let table = predictor.forecast.as_ref().ok_or(PredictionError::MissingForecast)?;
            let count = overlapped_slots(slot_len, window_start, t_c)
                .into_iter()
                .map(|(s, overlap)| table.get(region, s) * overlap / slot_len as f64)
                .sum();
            Ok(Prediction { count, fallback: false })
        }
        PredictorMethod::Ha | PredictorMethod::Lr => {
            let s0 = history.slot_of(window_start);
            let points = history.trailing(region, s0, predictor.window);
            if points.is_empty() {
                return Err(PredictionError::NoHistory(window_start));
            }
            let fallback = points.len() < predictor.window;
            let count = if predictor.method == PredictorMethod::Ha {
                let mean = points.iter().map(|p| p.1).sum::<f64>() / points.len() as f64;
                mean * t_c as f64 / slot_len as f64
            } else {
                let (a, b) = least_squares(&points);
                overlapped_slots(slot_len, window_start, t_c)
                    .into_iter()
                    .map(|(s, overlap)| (a + b * s as f64).max(0.0) * overlap / slot_len as f64)
                    .sum()
            };
            Ok(Prediction { count, fallback })
        }
    }
}

/// Busy drivers rejoining `region` with `busy_until` in `[window_start, window_start + t_c)`.
pub fn count_upcoming_rejoins<I>(busy: I, region: RegionId, window_start: Seconds, t_c: Seconds) -> usize
where
    I: IntoIterator<Item = (Seconds, RegionId)>,
{
    busy.into_iter()
        .filter(|&(until, r)| r == region && until >= window_start && until < window_start + t_c)
        .count()
}
