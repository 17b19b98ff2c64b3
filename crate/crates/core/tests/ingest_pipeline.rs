use qdispatch::dispatch::Policy;
use qdispatch::engine::{run_simulation, SimConfig, Workload};
use qdispatch::ingest::{
    init_drivers, parse_timestamp, parse_trip_csv, pickup_points, riders_from_trips, HeaderMap, DEFAULT_NOISE,
};
use qdispatch::prediction::{DemandHistory, Predictor, PredictorMethod, DEFAULT_SLOT_LEN};
use qdispatch::spatial::{BoundingBox, GridPartition, TravelModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::Write;

/// A 2013-layout trip file: `good` valid rows followed by one row per
/// rejection cause.
fn trip_file(good: usize) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(2013);
    let mut s = String::from(
        "medallion,pickup_datetime,dropoff_datetime,passenger_count,pickup_longitude,pickup_latitude,dropoff_longitude,dropoff_latitude\n",
    );
    for i in 0..good {
        let minute = i * 30 / good;
        let (plon, plat) = (rng.random_range(-74.02..-73.78), rng.random_range(40.60..40.90));
        let (dlon, dlat) = (rng.random_range(-74.02..-73.78), rng.random_range(40.60..40.90));
        writeln!(
            s,
            "M{i},2013-01-01 07:{minute:02}:{:02},2013-01-01 07:59:00,1,{plon:.6},{plat:.6},{dlon:.6},{dlat:.6}",
            i % 60
        )
        .unwrap();
    }
    s.push_str("bad,not a time,2013-01-01 07:10:00,1,-73.9,40.7,-73.9,40.75\n");
    s.push_str("late,2013-01-01 07:10:00,2013-01-01 07:00:00,1,-73.9,40.7,-73.9,40.75\n");
    s.push_str("zero,2013-01-01 07:10:00,2013-01-01 07:20:00,1,0,0,0,0\n");
    s
}

#[test]
fn parsed_trips_drive_a_simulation() {
    let grid = GridPartition::default();
    let model = TravelModel::default();
    let parsed = parse_trip_csv(trip_file(400).as_bytes(), &HeaderMap::default(), grid.bbox()).unwrap();
    assert_eq!(parsed.rows_in, 403);
    assert_eq!(parsed.records.len(), 400);
    assert_eq!((parsed.malformed, parsed.dropoff_before_pickup, parsed.out_of_bbox), (1, 1, 1));
    assert_eq!(parsed.rows_in, parsed.records.len() + parsed.skipped());

    let start = parse_timestamp("2013-01-01 07:00:00").unwrap();
    let end = start + 1800;
    let riders = riders_from_trips(&parsed.records, 120, DEFAULT_NOISE, 9, &model);
    assert!(riders.windows(2).all(|w| w[0].post_time <= w[1].post_time));
    assert!(riders.iter().all(|r| r.deadline >= r.post_time + 121 && r.deadline <= r.post_time + 130));

    let drivers = init_drivers(&pickup_points(&parsed.records), 60, 10, start);
    assert_eq!(drivers.len(), 60);
    let cfg = SimConfig {
        n_drivers: 60,
        policy: Policy::Ls,
        predictor: Predictor::new(PredictorMethod::Oracle, 15).unwrap(),
        start,
        end,
        ..SimConfig::default()
    };
    let workload = Workload {
        riders,
        drivers,
        history: Some(DemandHistory::new(DEFAULT_SLOT_LEN).unwrap()),
    };
    let out = run_simulation(workload, &cfg).unwrap();
    let m = &out.metrics;
    assert_eq!(m.total_riders, 400);
    assert!(m.served > 0);
    assert!(m.conserves_riders());
    assert!(m.accounting_gap() <= 1e-6);
}

#[test]
fn custom_header_aliases() {
    let csv = "PU_TIME,DO_TIME,plon,plat,dlon,dlat\n2013-01-01 00:00:01,2013-01-01 00:10:00,-73.95,40.75,-73.9,40.8\n";
    let bbox = BoundingBox::nyc();
    assert!(parse_trip_csv(csv.as_bytes(), &HeaderMap::default(), &bbox).is_err());
    let mut headers = HeaderMap::default();
    use qdispatch::ingest::TripField::*;
    for (f, name) in [
        (PickupTime, "pu_time"),
        (DropoffTime, "do_time"),
        (PickupLon, "plon"),
        (PickupLat, "plat"),
        (DropoffLon, "dlon"),
        (DropoffLat, "dlat"),
    ] {
        headers.add_alias(f, name);
    }
    let parsed = parse_trip_csv(csv.as_bytes(), &headers, &bbox).unwrap();
    assert_eq!(parsed.records.len(), 1);
    assert_eq!(parsed.records[0].dropoff_time - parsed.records[0].pickup_time, 599);
}
