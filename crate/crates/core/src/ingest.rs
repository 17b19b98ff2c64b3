//! Trip-record parsing, synthetic workloads and fleet initialization.

use crate::domain::{Driver, DriverId, Rider, RiderId, Seconds};
use crate::prediction::DemandHistory;
use crate::spatial::{BoundingBox, GeoPoint, GridPartition, RegionId, TravelModel};
use chrono::NaiveDateTime;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, Poisson};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::Read;
use thiserror::Error;

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M:%S";
/// Margin in degrees around the grid box outside which coordinates are discarded.
pub const SANITY_MARGIN_DEG: f64 = 0.5;
pub const DEFAULT_NOISE: (Seconds, Seconds) = (1, 10);

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("trip file is missing required column {0:?}")]
    MissingColumn(&'static str),
    #[error("trip file: {0}")]
    Csv(#[from] csv::Error),
    #[error("synthetic spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripRecord {
    pub pickup_time: Seconds,
    pub dropoff_time: Seconds,
    pub pickup: GeoPoint,
    pub dropoff: GeoPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TripField {
    PickupTime,
    DropoffTime,
    PickupLon,
    PickupLat,
    DropoffLon,
    DropoffLat,
}

impl TripField {
    const ALL: [TripField; 6] = [
        TripField::PickupTime,
        TripField::DropoffTime,
        TripField::PickupLon,
        TripField::PickupLat,
        TripField::DropoffLon,
        TripField::DropoffLat,
    ];

    pub fn canonical(self) -> &'static str {
        match self {
            TripField::PickupTime => "pickup_datetime",
            TripField::DropoffTime => "dropoff_datetime",
            TripField::PickupLon => "pickup_longitude",
            TripField::PickupLat => "pickup_latitude",
            TripField::DropoffLon => "dropoff_longitude",
            TripField::DropoffLat => "dropoff_latitude",
        }
    }
}

/// Accepted header names per field, compared case-insensitively after trimming.
#[derive(Debug, Clone, PartialEq)]
pub struct HeaderMap {
    aliases: HashMap<TripField, Vec<String>>,
}

impl Default for HeaderMap {
    fn default() -> Self {
        let mut map = Self {
            aliases: HashMap::new(),
        };
        for f in TripField::ALL {
            map.add_alias(f, f.canonical());
        }
        map.add_alias(TripField::PickupTime, "tpep_pickup_datetime");
        map.add_alias(TripField::DropoffTime, "tpep_dropoff_datetime");
        map.add_alias(TripField::PickupTime, "Trip_Pickup_DateTime");
        map.add_alias(TripField::DropoffTime, "Trip_Dropoff_DateTime");
        map.add_alias(TripField::PickupLon, "Start_Lon");
        map.add_alias(TripField::PickupLat, "Start_Lat");
        map.add_alias(TripField::DropoffLon, "End_Lon");
        map.add_alias(TripField::DropoffLat, "End_Lat");
        map
    }
}

impl HeaderMap {
    pub fn add_alias(&mut self, field: TripField, name: &str) {
        self.aliases
            .entry(field)
            .or_default()
            .push(name.trim().to_ascii_lowercase());
    }

    fn resolve(&self, headers: &csv::StringRecord) -> Result<[usize; 6], IngestError> {
        let names: Vec<String> = headers.iter().map(|h| h.trim().to_ascii_lowercase()).collect();
        let mut out = [0usize; 6];
        for (slot, f) in TripField::ALL.into_iter().enumerate() {
            let aliases = self.aliases.get(&f).map(Vec::as_slice).unwrap_or(&[]);
            out[slot] = names
                .iter()
                .position(|n| aliases.contains(n))
                .ok_or(IngestError::MissingColumn(f.canonical()))?;
        }
        Ok(out)
    }
}

/// Parsed trips plus per-cause drop counters; `rows_in == records.len() + skipped()`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParseOutcome {
    pub records: Vec<TripRecord>,
    pub rows_in: usize,
    pub malformed: usize,
    pub dropoff_before_pickup: usize,
    pub out_of_bbox: usize,
}

impl ParseOutcome {
    pub fn skipped(&self) -> usize {
        self.malformed + self.dropoff_before_pickup + self.out_of_bbox
    }
}

pub fn parse_timestamp(s: &str) -> Option<Seconds> {
    NaiveDateTime::parse_from_str(s.trim(), TIMESTAMP_FORMAT)
        .ok()
        .map(|t| t.and_utc().timestamp())
}

enum RowError {
    Malformed,
    Order,
    Bbox,
}

fn parse_row(row: &csv::StringRecord, cols: &[usize; 6], sanity: &BoundingBox) -> Result<TripRecord, RowError> {
    let field = |i: usize| row.get(cols[i]).map(str::trim).ok_or(RowError::Malformed);
    let num = |i: usize| field(i)?.parse::<f64>().map_err(|_| RowError::Malformed);
    let pickup_time = parse_timestamp(field(0)?).ok_or(RowError::Malformed)?;
    let dropoff_time = parse_timestamp(field(1)?).ok_or(RowError::Malformed)?;
    let (plon, plat, dlon, dlat) = (num(2)?, num(3)?, num(4)?, num(5)?);
    if dropoff_time < pickup_time {
        return Err(RowError::Order);
    }
    let point = |lon, lat| GeoPoint::new(lon, lat).ok().filter(|p| sanity.contains(*p));
    match (point(plon, plat), point(dlon, dlat)) {
        (Some(pickup), Some(dropoff)) => Ok(TripRecord {
            pickup_time,
            dropoff_time,
            pickup,
            dropoff,
        }),
        _ => Err(RowError::Bbox),
    }
}

/// Parses a trip CSV, keeping rows whose coordinates fall within `grid_bbox`
/// widened by [`SANITY_MARGIN_DEG`].
pub fn parse_trip_csv<R: Read>(reader: R, headers: &HeaderMap, grid_bbox: &BoundingBox) -> Result<ParseOutcome, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let cols = headers.resolve(rdr.headers()?)?;
    let sanity = grid_bbox.expanded(SANITY_MARGIN_DEG);
    let mut out = ParseOutcome::default();
    let mut row = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut row) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) if e.is_io_error() => return Err(e.into()),
            Err(_) => {
                out.rows_in += 1;
                out.malformed += 1;
                continue;
            }
        }
        out.rows_in += 1;
        match parse_row(&row, &cols, &sanity) {
            Ok(t) => out.records.push(t),
            Err(RowError::Malformed) => out.malformed += 1,
            Err(RowError::Order) => out.dropoff_before_pickup += 1,
            Err(RowError::Bbox) => out.out_of_bbox += 1,
        }
    }
    Ok(out)
}

fn deadline_noise(rng: &mut impl Rng, noise: (Seconds, Seconds)) -> Seconds {
    rng.random_range(noise.0..=noise.1)
}

/// One rider per trip, ordered by post time, with deadline `t + noise + tau`.
pub fn riders_from_trips(
    trips: &[TripRecord],
    tau: Seconds,
    noise: (Seconds, Seconds),
    seed: u64,
    model: &TravelModel,
) -> Vec<Rider> {
    let mut order: Vec<&TripRecord> = trips.iter().collect();
    order.sort_by_key(|t| t.pickup_time);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order
        .into_iter()
        .enumerate()
        .map(|(i, t)| {
            let deadline = t.pickup_time + deadline_noise(&mut rng, noise) + tau;
            Rider::new(RiderId(i as u32), t.pickup_time, t.pickup, t.dropoff, deadline, model)
                .expect("noise is at least one second")
        })
        .collect()
}

/// `n` drivers at locations drawn with replacement from `points`, available from `start`.
pub fn init_drivers(points: &[GeoPoint], n: usize, seed: u64, start: Seconds) -> Vec<Driver> {
    if points.is_empty() {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| Driver::new(DriverId(i as u32), points[rng.random_range(0..points.len())], start))
        .collect()
}

/// Pickup points of a trip list, for [`init_drivers`].
pub fn pickup_points(trips: &[TripRecord]) -> Vec<GeoPoint> {
    trips.iter().map(|t| t.pickup).collect()
}

/// Poisson workload description over the cells of a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// Riders per second, one entry per region.
    pub rates: Vec<f64>,
    /// Destination-region probabilities, one row per region.
    pub dest: Vec<Vec<f64>>,
    pub start: Seconds,
    pub end: Seconds,
    pub base_wait: Seconds,
    pub noise: (Seconds, Seconds),
}

impl SyntheticSpec {
    /// Equal rates everywhere, destinations uniform over all regions.
    pub fn uniform(n_regions: usize, total_rate: f64, start: Seconds, end: Seconds, base_wait: Seconds) -> Self {
        Self {
            rates: vec![total_rate / n_regions as f64; n_regions],
            dest: vec![vec![1.0 / n_regions as f64; n_regions]; n_regions],
            start,
            end,
            base_wait,
            noise: DEFAULT_NOISE,
        }
    }

    /// Demand concentrated around the grid centre with a Gaussian profile of
    /// width `sigma` cells. A share `dest_spread` of trips ends in a uniformly
    /// chosen region; the rest follow the demand profile.
    pub fn hotspot(
        grid: &GridPartition,
        total_rate: f64,
        sigma: f64,
        dest_spread: f64,
        start: Seconds,
        end: Seconds,
        base_wait: Seconds,
    ) -> Self {
        let n = grid.n_regions();
        let (cr, cc) = ((grid.rows() as f64 - 1.0) / 2.0, (grid.cols() as f64 - 1.0) / 2.0);
        let weight: Vec<f64> = (0..n)
            .map(|k| {
                let (r, c) = grid.row_col(k);
                let d2 = (r as f64 - cr).powi(2) + (c as f64 - cc).powi(2);
                (-d2 / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        let total: f64 = weight.iter().sum();
        let profile: Vec<f64> = weight.iter().map(|w| w / total).collect();
        let row: Vec<f64> = profile
            .iter()
            .map(|p| (1.0 - dest_spread) * p + dest_spread / n as f64)
            .collect();
        Self {
            rates: profile.iter().map(|p| p * total_rate).collect(),
            dest: vec![row; n],
            start,
            end,
            base_wait,
            noise: DEFAULT_NOISE,
        }
    }

    pub fn total_rate(&self) -> f64 {
        self.rates.iter().sum()
    }

    pub fn validate(&self, n_regions: usize) -> Result<(), IngestError> {
        let bad = |m: String| Err(IngestError::InvalidSpec(m));
        if self.rates.len() != n_regions || self.dest.len() != n_regions {
            return bad(format!(
                "expected {n_regions} rate and destination rows, got {} and {}",
                self.rates.len(),
                self.dest.len()
            ));
        }
        if self.end <= self.start {
            return bad(format!("span end {} must exceed start {}", self.end, self.start));
        }
        if self.base_wait < 0 || self.noise.0 < 1 || self.noise.1 < self.noise.0 {
            return bad("base wait must be >= 0 and noise a range within [1, inf)".into());
        }
        for (k, (&r, row)) in self.rates.iter().zip(&self.dest).enumerate() {
            if !(r.is_finite() && r >= 0.0) {
                return bad(format!("region {k}: rate {r} must be finite and >= 0"));
            }
            if row.len() != n_regions || row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return bad(format!("region {k}: destination row must hold {n_regions} probabilities"));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return bad(format!("region {k}: destination probabilities sum to {s}"));
            }
        }
        Ok(())
    }
}

/// Homogeneous Poisson riders per region, ordered by post time with ids in that order.
pub fn generate_synthetic(
    spec: &SyntheticSpec,
    grid: &GridPartition,
    model: &TravelModel,
    seed: u64,
) -> Result<Vec<Rider>, IngestError> {
    spec.validate(grid.n_regions())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut drafts: Vec<(Seconds, RegionId, GeoPoint, GeoPoint, Seconds)> = Vec::new();
    for (region, &rate) in spec.rates.iter().enumerate() {
        if rate <= 0.0 {
            continue;
        }
        let dest = WeightedIndex::new(&spec.dest[region]).map_err(|e| IngestError::InvalidSpec(e.to_string()))?;
        let mut t = spec.start as f64;
        loop {
            t += rng.sample::<f64, _>(Exp1) / rate;
            if t >= spec.end as f64 {
                break;
            }
            let post = t.floor() as Seconds;
            let source = grid.sample_in(region, &mut rng);
            let target = grid.sample_in(dest.sample(&mut rng), &mut rng);
            let deadline = post + deadline_noise(&mut rng, spec.noise) + spec.base_wait;
            drafts.push((post, region, source, target, deadline));
        }
    }
    drafts.sort_by_key(|d| (d.0, d.1));
    Ok(drafts
        .into_iter()
        .enumerate()
        .map(|(i, (post, _, s, e, deadline))| {
            Rider::new(RiderId(i as u32), post, s, e, deadline, model).expect("deadline follows post time")
        })
        .collect())
}

/// Slot counts for `slots` slots immediately before `spec.start`, drawn from
/// the spec's Poisson rates scaled by `rate_scale` per region.
pub fn synthetic_history(
    spec: &SyntheticSpec,
    slots: usize,
    slot_len: Seconds,
    rate_scale: &[f64],
    seed: u64,
) -> DemandHistory {
    let mut h = DemandHistory::new(slot_len).expect("positive slot length");
    let first = spec.start.div_euclid(slot_len) - slots as i64;
    h.cover(first * slot_len, spec.start);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (region, &rate) in spec.rates.iter().enumerate() {
        let mean = rate * slot_len as f64 * rate_scale.get(region).copied().unwrap_or(1.0);
        if mean <= 0.0 {
            continue;
        }
        let poisson = Poisson::new(mean).expect("positive mean");
        for s in first..first + slots as i64 {
            let c: f64 = poisson.sample(&mut rng);
            h.add_count(region, s, c as u32);
        }
    }
    h
}
