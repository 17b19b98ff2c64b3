//! Geometry, the grid partition of the service area and the travel-cost
//! model.
//!
//! Every `cost(u, v)` in the dispatch layer is a [`TravelModel::travel_time`]
//! between two [`GeoPoint`]s. Regions are the cells of a [`GridPartition`],
//! numbered row-major from the south-west corner.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Length of one degree of arc on the mean sphere.
pub const METERS_PER_DEGREE: f64 = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;

/// Default constant vehicle speed (m/s).
pub const DEFAULT_SPEED_MPS: f64 = 12.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpatialError {
    #[error("coordinate out of range: lon={lon}, lat={lat}")]
    InvalidCoordinate { lon: f64, lat: f64 },
    #[error("vehicle speed must be positive, got {0}")]
    NonPositiveSpeed(f64),
    #[error("invalid bounding box: {0}")]
    InvalidBbox(String),
    #[error("grid must have at least one row and one column, got {rows}x{cols}")]
    EmptyGrid { rows: usize, cols: usize },
    #[error("unknown distance metric `{0}`")]
    UnknownMetric(String),
}

/// A WGS-84 position in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lon: f64,
    pub lat: f64,
}

impl GeoPoint {
    pub fn new(lon: f64, lat: f64) -> Result<Self, SpatialError> {
        let ok = lon.is_finite()
            && lat.is_finite()
            && (-180.0..=180.0).contains(&lon)
            && (-90.0..=90.0).contains(&lat);
        if ok {
            Ok(Self { lon, lat })
        } else {
            Err(SpatialError::InvalidCoordinate { lon, lat })
        }
    }
}

impl fmt::Display for GeoPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.6}, {:.6})", self.lon, self.lat)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Metric {
    /// Great-circle distance on the mean sphere.
    #[default]
    Haversine,
    /// Planar distance on raw degrees, scaled by [`METERS_PER_DEGREE`].
    EuclideanDegrees,
}

impl std::str::FromStr for Metric {
    type Err = SpatialError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "haversine" => Ok(Metric::Haversine),
            "euclidean" | "euclidean-on-degrees" | "euclidean_degrees" => {
                Ok(Metric::EuclideanDegrees)
            }
            other => Err(SpatialError::UnknownMetric(other.to_string())),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Haversine => f.write_str("haversine"),
            Metric::EuclideanDegrees => f.write_str("euclidean-on-degrees"),
        }
    }
}

/// Distance in meters between two points.
pub fn distance(a: GeoPoint, b: GeoPoint, metric: Metric) -> f64 {
    if a == b {
        return 0.0;
    }
    match metric {
        Metric::Haversine => {
            let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
            let dlat = lat2 - lat1;
            let dlon = (b.lon - a.lon).to_radians();
            let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
            2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
        }
        Metric::EuclideanDegrees => (b.lon - a.lon).hypot(b.lat - a.lat) * METERS_PER_DEGREE,
    }
}

/// Constant-speed travel over a geometric metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TravelModel {
    speed_mps: f64,
    metric: Metric,
}

impl TravelModel {
    pub fn new(speed_mps: f64, metric: Metric) -> Result<Self, SpatialError> {
        if speed_mps.is_finite() && speed_mps > 0.0 {
            Ok(Self { speed_mps, metric })
        } else {
            Err(SpatialError::NonPositiveSpeed(speed_mps))
        }
    }

    pub fn speed_mps(&self) -> f64 {
        self.speed_mps
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    /// Seconds needed to drive from `a` to `b`.
    pub fn travel_time(&self, a: GeoPoint, b: GeoPoint) -> f64 {
        distance(a, b, self.metric) / self.speed_mps
    }
}

impl Default for TravelModel {
    fn default() -> Self {
        Self {
            speed_mps: DEFAULT_SPEED_MPS,
            metric: Metric::Haversine,
        }
    }
}

/// Region identifier: a row-major cell index of a [`GridPartition`].
pub type RegionId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub lon_min: f64,
    pub lon_max: f64,
    pub lat_min: f64,
    pub lat_max: f64,
}

impl BoundingBox {
    pub fn new(lon_min: f64, lon_max: f64, lat_min: f64, lat_max: f64) -> Result<Self, SpatialError> {
        let bbox = Self {
            lon_min,
            lon_max,
            lat_min,
            lat_max,
        };
        if !(lon_min < lon_max && lat_min < lat_max) {
            return Err(SpatialError::InvalidBbox(format!(
                "need lon_min < lon_max and lat_min < lat_max, got {bbox:?}"
            )));
        }
        GeoPoint::new(lon_min, lat_min)?;
        GeoPoint::new(lon_max, lat_max)?;
        Ok(bbox)
    }

    /// New York City service area used by the default configuration.
    pub fn nyc() -> Self {
        Self {
            lon_min: -74.03,
            lon_max: -73.77,
            lat_min: 40.58,
            lat_max: 40.92,
        }
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        (self.lon_min..=self.lon_max).contains(&p.lon) && (self.lat_min..=self.lat_max).contains(&p.lat)
    }

    /// The box grown by `margin` degrees on every side.
    pub fn expanded(&self, margin: f64) -> Self {
        Self {
            lon_min: self.lon_min - margin,
            lon_max: self.lon_max + margin,
            lat_min: self.lat_min - margin,
            lat_max: self.lat_max + margin,
        }
    }

    pub fn center(&self) -> GeoPoint {
        GeoPoint {
            lon: (self.lon_min + self.lon_max) / 2.0,
            lat: (self.lat_min + self.lat_max) / 2.0,
        }
    }
}

impl std::str::FromStr for BoundingBox {
    type Err = SpatialError;

    /// Parses `lon_min,lon_max,lat_min,lat_max`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| SpatialError::InvalidBbox(format!("{s:?}: {e}")))?;
        match parts[..] {
            [a, b, c, d] => BoundingBox::new(a, b, c, d),
            _ => Err(SpatialError::InvalidBbox(format!("expected 4 numbers, got {s:?}"))),
        }
    }
}

/// Even `rows x cols` partition of a bounding box.
///
/// Cells are half-open: a point on an interior edge belongs to the cell with
/// the larger index, the outer max edges belong to the last row/column, and
/// points outside the box clamp to the nearest cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPartition {
    bbox: BoundingBox,
    rows: usize,
    cols: usize,
}

impl GridPartition {
    pub fn new(bbox: BoundingBox, rows: usize, cols: usize) -> Result<Self, SpatialError> {
        if rows == 0 || cols == 0 {
            return Err(SpatialError::EmptyGrid { rows, cols });
        }
        let bbox = BoundingBox::new(bbox.lon_min, bbox.lon_max, bbox.lat_min, bbox.lat_max)?;
        Ok(Self { bbox, rows, cols })
    }

    pub fn bbox(&self) -> &BoundingBox {
        &self.bbox
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn n_regions(&self) -> usize {
        self.rows * self.cols
    }

    fn axis_index(value: f64, min: f64, max: f64, cells: usize) -> usize {
        let frac = (value - min) / (max - min);
        // Absorb the rounding error of `frac * cells` so exact edges land on
        // the upper cell.
        let idx = (frac * cells as f64 + 1e-9).floor();
        if idx.is_nan() || idx < 0.0 {
            0
        } else {
            (idx as usize).min(cells - 1)
        }
    }

    /// (row, col) of the cell holding `p`.
    pub fn cell_of(&self, p: GeoPoint) -> (usize, usize) {
        let b = &self.bbox;
        (
            Self::axis_index(p.lat, b.lat_min, b.lat_max, self.rows),
            Self::axis_index(p.lon, b.lon_min, b.lon_max, self.cols),
        )
    }

    pub fn region_of(&self, p: GeoPoint) -> RegionId {
        let (row, col) = self.cell_of(p);
        row * self.cols + col
    }

    pub fn row_col(&self, region: RegionId) -> (usize, usize) {
        (region / self.cols, region % self.cols)
    }

    /// Bounds of a cell as `(lon_min, lon_max, lat_min, lat_max)`.
    pub fn cell_bounds(&self, region: RegionId) -> BoundingBox {
        let (row, col) = self.row_col(region);
        let b = &self.bbox;
        let w = (b.lon_max - b.lon_min) / self.cols as f64;
        let h = (b.lat_max - b.lat_min) / self.rows as f64;
        BoundingBox {
            lon_min: b.lon_min + w * col as f64,
            lon_max: b.lon_min + w * (col + 1) as f64,
            lat_min: b.lat_min + h * row as f64,
            lat_max: b.lat_min + h * (row + 1) as f64,
        }
    }

    pub fn cell_center(&self, region: RegionId) -> GeoPoint {
        self.cell_bounds(region).center()
    }

    /// Uniform point inside a cell.
    pub fn sample_in<R: Rng + ?Sized>(&self, region: RegionId, rng: &mut R) -> GeoPoint {
        let c = self.cell_bounds(region);
        GeoPoint {
            lon: rng.random_range(c.lon_min..c.lon_max),
            lat: rng.random_range(c.lat_min..c.lat_max),
        }
    }

    /// The cell itself and its (up to) eight neighbours, in ascending id order.
    pub fn neighborhood(&self, region: RegionId) -> Vec<RegionId> {
        let (row, col) = self.row_col(region);
        let mut out = Vec::with_capacity(9);
        for r in row.saturating_sub(1)..=(row + 1).min(self.rows - 1) {
            for c in col.saturating_sub(1)..=(col + 1).min(self.cols - 1) {
                out.push(r * self.cols + c);
            }
        }
        out
    }
}

impl Default for GridPartition {
    fn default() -> Self {
        Self {
            bbox: BoundingBox::nyc(),
            rows: 16,
            cols: 16,
        }
    }
}
