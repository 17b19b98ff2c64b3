//! Riders, drivers and dispatch pairs.

use crate::spatial::{GeoPoint, RegionId, TravelModel};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Simulation time: integer seconds since the simulation epoch.
pub type Seconds = i64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RiderId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DriverId(pub u32);

impl fmt::Display for RiderId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

impl fmt::Display for DriverId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "d{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("rider {id}: deadline {deadline} must be after post time {post_time}")]
    DeadlineNotAfterPost {
        id: RiderId,
        post_time: Seconds,
        deadline: Seconds,
    },
    #[error("rider {id}: illegal transition {from:?} -> {to:?}")]
    RiderTransition {
        id: RiderId,
        from: RiderState,
        to: RiderState,
    },
    #[error("driver {0} is not available")]
    DriverNotAvailable(DriverId),
    #[error("driver {0} is not busy")]
    DriverNotBusy(DriverId),
    #[error("fee rate must be finite and non-negative, got {0}")]
    NegativeFeeRate(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RiderState {
    Waiting,
    Assigned,
    Served,
    Reneged,
}

/// A ride order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rider {
    pub id: RiderId,
    pub post_time: Seconds,
    pub source: GeoPoint,
    pub dest: GeoPoint,
    /// Latest time a driver may reach `source`.
    pub deadline: Seconds,
    /// Travel time from `source` to `dest`, cached at construction.
    pub serve_cost: f64,
    state: RiderState,
}

impl Rider {
    pub fn new(
        id: RiderId,
        post_time: Seconds,
        source: GeoPoint,
        dest: GeoPoint,
        deadline: Seconds,
        model: &TravelModel,
    ) -> Result<Self, DomainError> {
        if deadline <= post_time {
            return Err(DomainError::DeadlineNotAfterPost {
                id,
                post_time,
                deadline,
            });
        }
        Ok(Self {
            id,
            post_time,
            source,
            dest,
            deadline,
            serve_cost: model.travel_time(source, dest),
            state: RiderState::Waiting,
        })
    }

    pub fn state(&self) -> RiderState {
        self.state
    }

    fn transition(&mut self, from: RiderState, to: RiderState) -> Result<(), DomainError> {
        if self.state != from {
            return Err(DomainError::RiderTransition {
                id: self.id,
                from: self.state,
                to,
            });
        }
        self.state = to;
        Ok(())
    }

    pub fn assign(&mut self) -> Result<(), DomainError> {
        self.transition(RiderState::Waiting, RiderState::Assigned)
    }

    pub fn complete(&mut self) -> Result<(), DomainError> {
        self.transition(RiderState::Assigned, RiderState::Served)
    }

    pub fn renege(&mut self) -> Result<(), DomainError> {
        self.transition(RiderState::Waiting, RiderState::Reneged)
    }
}

/// Platform fee per second of service; revenue of a ride is `alpha * serve_cost`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeeRate(f64);

impl FeeRate {
    pub fn new(alpha: f64) -> Result<Self, DomainError> {
        if alpha.is_finite() && alpha >= 0.0 {
            Ok(Self(alpha))
        } else {
            Err(DomainError::NegativeFeeRate(alpha))
        }
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

impl Default for FeeRate {
    fn default() -> Self {
        Self(1.0)
    }
}

pub fn revenue_of(rider: &Rider, alpha: FeeRate) -> f64 {
    alpha.0 * rider.serve_cost
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DriverStatus {
    Available {
        since: Seconds,
    },
    Busy {
        until: Seconds,
        dest: GeoPoint,
        rejoin_region: RegionId,
    },
}

/// A servicing agent. Drivers stay where they were last dropped off while
/// available.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Driver {
    pub id: DriverId,
    pub location: GeoPoint,
    pub join_time: Seconds,
    status: DriverStatus,
    /// Closed queue-wait intervals `(available since, assigned at)`.
    pub idle_intervals: Vec<(Seconds, Seconds)>,
    /// Sum of `serve_cost` over riders this driver has been assigned.
    pub served_cost: f64,
    pub served_count: u32,
}

impl Driver {
    pub fn new(id: DriverId, location: GeoPoint, join_time: Seconds) -> Self {
        Self {
            id,
            location,
            join_time,
            status: DriverStatus::Available { since: join_time },
            idle_intervals: Vec::new(),
            served_cost: 0.0,
            served_count: 0,
        }
    }

    pub fn status(&self) -> DriverStatus {
        self.status
    }

    pub fn is_available(&self) -> bool {
        matches!(self.status, DriverStatus::Available { .. })
    }

    pub fn available_since(&self) -> Option<Seconds> {
        match self.status {
            DriverStatus::Available { since } => Some(since),
            DriverStatus::Busy { .. } => None,
        }
    }

    pub fn busy_until(&self) -> Option<Seconds> {
        match self.status {
            DriverStatus::Busy { until, .. } => Some(until),
            DriverStatus::Available { .. } => None,
        }
    }

    pub fn rejoin_region(&self) -> Option<RegionId> {
        match self.status {
            DriverStatus::Busy { rejoin_region, .. } => Some(rejoin_region),
            DriverStatus::Available { .. } => None,
        }
    }

    /// Marks the driver busy until `until`, closing the open idle interval at `now`.
    pub fn start_trip(
        &mut self,
        now: Seconds,
        until: Seconds,
        dest: GeoPoint,
        rejoin_region: RegionId,
        serve_cost: f64,
    ) -> Result<(), DomainError> {
        let since = self.available_since().ok_or(DomainError::DriverNotAvailable(self.id))?;
        debug_assert!(until >= now);
        self.idle_intervals.push((since, now));
        self.status = DriverStatus::Busy {
            until,
            dest,
            rejoin_region,
        };
        self.served_cost += serve_cost;
        self.served_count += 1;
        Ok(())
    }

    /// Drops the driver at its trip destination, available from `busy_until`.
    pub fn rejoin(&mut self) -> Result<Seconds, DomainError> {
        match self.status {
            DriverStatus::Busy { until, dest, .. } => {
                self.location = dest;
                self.status = DriverStatus::Available { since: until };
                Ok(until)
            }
            DriverStatus::Available { .. } => Err(DomainError::DriverNotBusy(self.id)),
        }
    }
}

/// A committed assignment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispatchPair {
    pub rider: RiderId,
    pub driver: DriverId,
    /// Seconds from the driver's location to the rider's source.
    pub pickup_time: f64,
    pub serve_cost: f64,
    pub revenue: f64,
}

/// Whether `driver` can reach `rider` by its deadline when dispatched at `now`.
///
/// Returns `false` rather than failing when the rider is not waiting or the
/// driver is not available.
pub fn is_valid_pair(rider: &Rider, driver: &Driver, now: Seconds, model: &TravelModel) -> bool {
    if rider.state() != RiderState::Waiting || !driver.is_available() {
        return false;
    }
    pickup_feasible(now, model.travel_time(driver.location, rider.source), rider.deadline)
}

/// `now + pickup <= deadline`, the feasibility core shared with candidate generation.
pub fn pickup_feasible(now: Seconds, pickup_time: f64, deadline: Seconds) -> bool {
    now as f64 + pickup_time <= deadline as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial::Metric;

    fn model() -> TravelModel {
        TravelModel::new(10.0, Metric::Haversine).unwrap()
    }

    fn rider_at(src: GeoPoint, deadline: Seconds) -> Rider {
        let dest = GeoPoint::new(src.lon, src.lat + 0.05).unwrap();
        Rider::new(RiderId(1), 0, src, dest, deadline, &model()).unwrap()
    }

    #[test]
    fn co_located_driver_is_valid_before_deadline() {
        let src = GeoPoint::new(-73.95, 40.75).unwrap();
        let r = rider_at(src, 100);
        let d = Driver::new(DriverId(1), src, 0);
        assert!(is_valid_pair(&r, &d, 50, &model()));
    }

    #[test]
    fn deadline_boundary() {
        let src = GeoPoint::new(-73.95, 40.75).unwrap();
        let r = rider_at(src, 100);
        let away = GeoPoint::new(-73.95, 40.751).unwrap();
        let d = Driver::new(DriverId(1), away, 0);
        assert!(!is_valid_pair(&r, &d, 100, &model()));
    }

    #[test]
    fn pickup_versus_slack() {
        // 120 s pickup against 100 s and 140 s of slack.
        assert!(!pickup_feasible(1000, 120.0, 1100));
        assert!(pickup_feasible(1000, 120.0, 1140));
    }

    #[test]
    fn invalid_states_are_not_errors() {
        let src = GeoPoint::new(-73.95, 40.75).unwrap();
        let mut r = rider_at(src, 100);
        let d = Driver::new(DriverId(1), src, 0);
        r.renege().unwrap();
        assert!(!is_valid_pair(&r, &d, 0, &model()));
    }

    #[test]
    fn revenue_examples() {
        let src = GeoPoint::new(-73.95, 40.75).unwrap();
        let mut r = rider_at(src, 100);
        r.serve_cost = 600.0;
        assert_eq!(revenue_of(&r, FeeRate::default()), 600.0);
        assert_eq!(revenue_of(&r, FeeRate::new(2.5).unwrap()), 1500.0);
        r.serve_cost = 0.0;
        assert_eq!(revenue_of(&r, FeeRate::new(7.0).unwrap()), 0.0);
        assert!(FeeRate::new(-0.1).is_err());
    }

    #[test]
    fn rider_state_machine() {
        let src = GeoPoint::new(-73.95, 40.75).unwrap();
        let mut r = rider_at(src, 100);
        assert!(r.complete().is_err());
        r.assign().unwrap();
        assert!(r.renege().is_err());
        r.complete().unwrap();
        assert_eq!(r.state(), RiderState::Served);
        assert!(Rider::new(RiderId(2), 10, src, src, 10, &model()).is_err());
    }

    #[test]
    fn serve_cost_matches_model() {
        let src = GeoPoint::new(-73.95, 40.75).unwrap();
        let r = rider_at(src, 100);
        assert_eq!(r.serve_cost, model().travel_time(r.source, r.dest));
    }

    #[test]
    fn trip_closes_idle_interval() {
        let src = GeoPoint::new(-73.95, 40.75).unwrap();
        let mut d = Driver::new(DriverId(3), src, 900);
        d.start_trip(1000, 1600, src, 4, 500.0).unwrap();
        assert_eq!(d.idle_intervals, vec![(900, 1000)]);
        assert_eq!(d.busy_until(), Some(1600));
        assert!(d.start_trip(1000, 1600, src, 4, 500.0).is_err());
        assert_eq!(d.rejoin().unwrap(), 1600);
        assert_eq!(d.available_since(), Some(1600));
    }
}
