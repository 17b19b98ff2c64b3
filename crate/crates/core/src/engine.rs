//! Batch simulation loop.
//!
//! Batches run at `start + i * delta` for `i = 0..ceil((end - start) / delta)`.
//! Each batch admits riders posted up to `t`, reneges waiting riders whose
//! deadline is `<= t`, rejoins drivers whose trip ended by `t`, then builds
//! the per-region snapshots, dispatches and applies the assignments.

use crate::dispatch::{
    dispatch_batch, generate_candidates, upper_bound, DispatchContext, Policy, RegionSnapshot,
};
use crate::domain::{DomainError, Driver, DriverId, FeeRate, Rider, RiderState, Seconds};
use crate::prediction::{
    count_upcoming_rejoins, predict_demand, DemandHistory, PredictionError, Predictor, PredictorMethod,
    DEFAULT_PREDICTOR_WINDOW, DEFAULT_SLOT_LEN,
};
use crate::queueing::ExpectedIdle;
use crate::spatial::{GridPartition, RegionId, TravelModel};
use crate::stats::{idle_accuracy, AccuracyReport};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid configuration: {key}: {reason}")]
    Config { key: &'static str, reason: String },
    #[error("engine state inconsistency: {0}")]
    State(#[from] DomainError),
}

fn config_err(key: &'static str, reason: impl Into<String>) -> EngineError {
    EngineError::Config {
        key,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n_drivers: usize,
    /// Base pickup waiting time `tau`, seconds.
    pub base_wait: Seconds,
    /// Batch interval `delta`, seconds.
    pub batch_interval: Seconds,
    /// Scheduling window `t_c`, seconds.
    pub window: Seconds,
    pub alpha: FeeRate,
    pub beta: f64,
    pub grid: GridPartition,
    pub model: TravelModel,
    pub policy: Policy,
    pub predictor: Predictor,
    pub seed: u64,
    pub start: Seconds,
    pub end: Seconds,
    /// Keep a per-batch trace.
    pub trace: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_drivers: 4000,
            base_wait: 120,
            batch_interval: 3,
            window: 300,
            alpha: FeeRate::default(),
            beta: 1.0,
            grid: GridPartition::default(),
            model: TravelModel::default(),
            policy: Policy::Ls,
            predictor: Predictor::new(PredictorMethod::Ha, DEFAULT_PREDICTOR_WINDOW).expect("non-zero window"),
            seed: 0,
            start: 0,
            end: 3600,
            trace: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.batch_interval <= 0 {
            return Err(config_err("batch_interval", "must be > 0"));
        }
        if self.window <= 0 {
            return Err(config_err("window", "must be > 0"));
        }
        if self.base_wait < 0 {
            return Err(config_err("base_wait", "must be >= 0"));
        }
        if self.end <= self.start {
            return Err(config_err("end", "must exceed start"));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(config_err("beta", "must be finite and >= 0"));
        }
        if self.predictor.method == PredictorMethod::File && self.predictor.forecast.is_none() {
            return Err(config_err("predictor", "file predictor needs a forecast table"));
        }
        Ok(())
    }

    /// Run label such as `LS-R` (real demand) or `IRG-P` (predicted).
    pub fn label(&self) -> String {
        if self.policy.is_queue_aware() {
            let suffix = if self.predictor.is_oracle() { "R" } else { "P" };
            format!("{}-{}", self.policy, suffix)
        } else {
            self.policy.to_string()
        }
    }

    pub fn batch_count(&self) -> usize {
        ((self.end - self.start + self.batch_interval - 1) / self.batch_interval).max(0) as usize
    }
}

/// Riders in post-time order, the initial fleet and optional prior demand history.
#[derive(Debug, Clone, Default)]
pub struct Workload {
    pub riders: Vec<Rider>,
    pub drivers: Vec<Driver>,
    pub history: Option<DemandHistory>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimMetrics {
    pub label: String,
    pub seed: u64,
    pub n_drivers: usize,
    pub batches: usize,
    pub total_riders: usize,
    pub served: usize,
    pub reneged: usize,
    pub waiting_at_end: usize,
    pub total_revenue: f64,
    /// Sum of per-batch revenue upper bounds.
    pub upper_bound: f64,
    /// `alpha * (sum_j T_j - sum_j psi_j)` from driver-side bookkeeping.
    pub revenue_from_idle: f64,
    /// `sum_j psi_j`: driver time not spent serving riders, seconds.
    pub reduction_idle_total: f64,
    /// Mean seconds from post to assignment over served riders.
    pub mean_rider_wait: f64,
    pub prediction_fallbacks: usize,
    pub ls_swaps: usize,
    pub ls_max_scans: usize,
    pub ls_limit_hits: usize,
    pub idle_accuracy: Option<AccuracyReport>,
}

impl SimMetrics {
    /// `|revenue - revenue_from_idle|`, relative to revenue.
    pub fn accounting_gap(&self) -> f64 {
        let gap = (self.total_revenue - self.revenue_from_idle).abs();
        if self.total_revenue == 0.0 {
            gap
        } else {
            gap / self.total_revenue
        }
    }

    pub fn conserves_riders(&self) -> bool {
        self.served + self.reneged + self.waiting_at_end == self.total_riders
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchTrace {
    pub time: Seconds,
    pub waiting: usize,
    pub available: usize,
    pub candidates: usize,
    pub assignments: usize,
    pub reneged: usize,
    pub revenue: f64,
    pub upper_bound: f64,
}

/// Predicted idle time of a region-batch next to the realized mean wait.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdleSample {
    pub time: Seconds,
    pub region: RegionId,
    pub predicted: f64,
    pub realized: f64,
    pub drivers: usize,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub metrics: SimMetrics,
    /// Snapshot plus dispatch wall time per batch, seconds.
    pub batch_wall: Vec<f64>,
    pub trace: Vec<BatchTrace>,
    pub idle_samples: Vec<IdleSample>,
    pub riders: Vec<Rider>,
    pub drivers: Vec<Driver>,
}

/// A driver's stay in a region between becoming available and being assigned.
#[derive(Debug, Clone, Copy)]
struct Episode {
    region: RegionId,
    start: Seconds,
    end: Option<Seconds>,
}

struct State<'a> {
    cfg: &'a SimConfig,
    riders: Vec<Rider>,
    drivers: Vec<Driver>,
    waiting: Vec<usize>,
    busy: BinaryHeap<Reverse<(Seconds, usize)>>,
    episodes: Vec<Episode>,
    open_episode: Vec<Option<usize>>,
    assigned_at: Vec<Option<Seconds>>,
}

impl State<'_> {
    fn open(&mut self, driver: usize, since: Seconds) {
        let region = self.cfg.grid.region_of(self.drivers[driver].location);
        self.open_episode[driver] = Some(self.episodes.len());
        self.episodes.push(Episode {
            region,
            start: since,
            end: None,
        });
    }

    /// Waiting riders with `deadline <= now` renege.
    fn process_reneges(&mut self, now: Seconds) -> Result<usize, DomainError> {
        let riders = &mut self.riders;
        let mut gone = 0;
        let mut err = None;
        self.waiting.retain(|&i| {
            if riders[i].deadline <= now {
                if let Err(e) = riders[i].renege() {
                    err = Some(e);
                }
                gone += 1;
                false
            } else {
                true
            }
        });
        err.map_or(Ok(gone), Err)
    }

    fn process_rejoins(&mut self, now: Seconds) -> Result<(), DomainError> {
        while let Some(&Reverse((until, d))) = self.busy.peek() {
            if until > now {
                break;
            }
            self.busy.pop();
            let since = self.drivers[d].rejoin()?;
            self.open(d, since);
        }
        Ok(())
    }
}

/// Applies one assignment at batch time `now`: the driver is busy until
/// `now + ceil(pickup + serve)` and rejoins at the rider's destination.
pub fn apply_assignment(
    rider: &mut Rider,
    driver: &mut Driver,
    pickup_time: f64,
    now: Seconds,
    grid: &GridPartition,
) -> Result<Seconds, DomainError> {
    if !driver.is_available() {
        return Err(DomainError::DriverNotAvailable(driver.id));
    }
    rider.assign()?;
    let until = now + (pickup_time + rider.serve_cost).ceil() as Seconds;
    driver.start_trip(now, until, rider.dest, grid.region_of(rider.dest), rider.serve_cost)?;
    Ok(until)
}

pub fn run_simulation(workload: Workload, cfg: &SimConfig) -> Result<SimOutput, EngineError> {
    cfg.validate()?;
    let Workload {
        mut riders,
        drivers,
        history,
    } = workload;
    riders.sort_by_key(|r| (r.post_time, r.id));
    let grid = &cfg.grid;
    let n_regions = grid.n_regions();
    let ctx = DispatchContext::new(cfg.window as f64, cfg.beta);
    let queue_aware = cfg.policy.is_queue_aware();

    let mut history = match history {
        Some(h) => h,
        None => DemandHistory::new(DEFAULT_SLOT_LEN).expect("positive slot length"),
    };
    let truth = if cfg.predictor.is_oracle() {
        let events = riders.iter().map(|r| (grid.region_of(r.source), r.post_time));
        Some(DemandHistory::from_events(history.slot_len(), cfg.start, cfg.end, events).expect("positive slot length"))
    } else {
        None
    };

    let n_drivers = drivers.len();
    let n_riders = riders.len();
    let mut st = State {
        cfg,
        riders,
        drivers,
        waiting: Vec::new(),
        busy: BinaryHeap::new(),
        episodes: Vec::new(),
        open_episode: vec![None; n_drivers],
        assigned_at: vec![None; n_riders],
    };
    for d in 0..n_drivers {
        match st.drivers[d].busy_until() {
            Some(until) => st.busy.push(Reverse((until, d))),
            None => {
                let since = st.drivers[d].available_since().unwrap_or(cfg.start);
                st.open(d, since);
            }
        }
    }
    let driver_index: std::collections::HashMap<DriverId, usize> =
        st.drivers.iter().enumerate().map(|(i, d)| (d.id, i)).collect();
    let rider_index: std::collections::HashMap<_, usize> =
        st.riders.iter().enumerate().map(|(i, r)| (r.id, i)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut next_rider = 0usize;
    let mut revenue = 0.0;
    let mut upper = 0.0;
    let mut reneged = 0usize;
    let mut fallbacks = 0usize;
    let (mut ls_swaps, mut ls_max_scans, mut ls_limit_hits) = (0usize, 0usize, 0usize);
    let mut batch_wall = Vec::with_capacity(cfg.batch_count());
    let mut trace = Vec::new();
    let mut predicted_et: Vec<(Seconds, RegionId, f64)> = Vec::new();

    for b in 0..cfg.batch_count() {
        let now = cfg.start + b as Seconds * cfg.batch_interval;
        let batch_seed: u64 = rng.random();

        while next_rider < st.riders.len() && st.riders[next_rider].post_time <= now {
            let r = &st.riders[next_rider];
            if queue_aware && !cfg.predictor.is_oracle() {
                history.record(grid.region_of(r.source), r.post_time);
            }
            st.waiting.push(next_rider);
            next_rider += 1;
        }
        if queue_aware {
            history.cover(cfg.start, now + 1);
        }
        let gone = st.process_reneges(now)?;
        reneged += gone;
        st.process_rejoins(now)?;

        let timer = Instant::now();
        let available: Vec<usize> = (0..n_drivers).filter(|&d| st.drivers[d].is_available()).collect();
        let snapshots = if queue_aware {
            let mut waiting_by: Vec<Vec<_>> = vec![Vec::new(); n_regions];
            for &i in &st.waiting {
                waiting_by[grid.region_of(st.riders[i].source)].push(st.riders[i].id);
            }
            let mut avail_by: Vec<Vec<_>> = vec![Vec::new(); n_regions];
            for &d in &available {
                avail_by[grid.region_of(st.drivers[d].location)].push(st.drivers[d].id);
            }
            let mut rejoin_by = vec![0usize; n_regions];
            for Reverse((until, d)) in st.busy.iter() {
                if let Some(k) = st.drivers[*d].rejoin_region() {
                    rejoin_by[k] += count_upcoming_rejoins([(*until, k)], k, now, cfg.window);
                }
            }
            let mut snaps = Vec::with_capacity(n_regions);
            for (k, (w, a)) in waiting_by.into_iter().zip(avail_by).enumerate() {
                let predicted = match predict_demand(&history, k, now + 1, cfg.window, &cfg.predictor, truth.as_ref()) {
                    Ok(p) => {
                        fallbacks += p.fallback as usize;
                        p.count
                    }
                    Err(PredictionError::NoHistory(_)) => {
                        fallbacks += 1;
                        0.0
                    }
                    Err(e) => return Err(config_err("predictor", e.to_string())),
                };
                snaps.push(RegionSnapshot::new(k, w, a, predicted, rejoin_by[k], &ctx));
            }
            snaps
        } else {
            Vec::new()
        };
        let waiting_riders: Vec<&Rider> = st.waiting.iter().map(|&i| &st.riders[i]).collect();
        let available_drivers: Vec<&Driver> = available.iter().map(|&d| &st.drivers[d]).collect();
        let candidates = generate_candidates(
            &waiting_riders,
            &available_drivers,
            grid,
            &cfg.model,
            now,
            cfg.alpha,
            &snapshots,
        );
        let outcome = dispatch_batch(cfg.policy, &snapshots, &candidates, &ctx, batch_seed);
        batch_wall.push(timer.elapsed().as_secs_f64());

        let batch_upper = upper_bound(
            waiting_riders.iter().map(|r| cfg.alpha.value() * r.serve_cost),
            available.len(),
        );
        upper += batch_upper;
        if let Some(ls) = &outcome.local_search {
            ls_swaps += ls.swaps.len();
            ls_max_scans = ls_max_scans.max(ls.scans);
            ls_limit_hits += ls.hit_limit as usize;
        }
        for (k, et) in &outcome.final_idle_times {
            if let ExpectedIdle::Finite(v) = et {
                predicted_et.push((now, *k, *v));
            }
        }

        let waiting_count = st.waiting.len();
        let mut batch_revenue = 0.0;
        for p in &outcome.pairs {
            let ri = rider_index[&p.rider];
            let di = driver_index[&p.driver];
            let until = apply_assignment(&mut st.riders[ri], &mut st.drivers[di], p.pickup_time, now, grid)?;
            st.busy.push(Reverse((until, di)));
            st.assigned_at[ri] = Some(now);
            if let Some(e) = st.open_episode[di].take() {
                st.episodes[e].end = Some(now);
            }
            batch_revenue += p.revenue;
        }
        revenue += batch_revenue;
        let assigned: std::collections::HashSet<usize> =
            outcome.pairs.iter().map(|p| rider_index[&p.rider]).collect();
        st.waiting.retain(|i| !assigned.contains(i));
        if cfg.trace {
            trace.push(BatchTrace {
                time: now,
                waiting: waiting_count,
                available: available.len(),
                candidates: candidates.len(),
                assignments: outcome.pairs.len(),
                reneged: gone,
                revenue: batch_revenue,
                upper_bound: batch_upper,
            });
        }
    }

    // Trips still running at the end are completed for bookkeeping.
    while let Some(Reverse((_, d))) = st.busy.pop() {
        st.drivers[d].rejoin()?;
    }
    for r in st.riders.iter_mut().filter(|r| r.state() == RiderState::Assigned) {
        r.complete()?;
    }

    let served: Vec<&Rider> = st.riders.iter().filter(|r| r.state() == RiderState::Served).collect();
    let span = (cfg.end - cfg.start) as f64;
    let total_t = span * n_drivers as f64;
    let reduction_idle_total: f64 = st.drivers.iter().map(|d| span - d.served_cost).sum();
    let mean_rider_wait = if served.is_empty() {
        0.0
    } else {
        st.riders
            .iter()
            .zip(&st.assigned_at)
            .filter_map(|(r, a)| a.map(|t| (t - r.post_time) as f64))
            .sum::<f64>()
            / served.len() as f64
    };

    let idle_samples = if queue_aware {
        idle_samples(&st.episodes, &predicted_et, n_regions, cfg.window)
    } else {
        Vec::new()
    };
    let pairs: Vec<(f64, f64)> = idle_samples.iter().map(|s| (s.predicted, s.realized)).collect();

    let metrics = SimMetrics {
        label: cfg.label(),
        seed: cfg.seed,
        n_drivers,
        batches: cfg.batch_count(),
        total_riders: n_riders,
        served: served.len(),
        reneged,
        waiting_at_end: n_riders - served.len() - reneged,
        total_revenue: revenue,
        upper_bound: upper,
        revenue_from_idle: cfg.alpha.value() * (total_t - reduction_idle_total),
        reduction_idle_total,
        mean_rider_wait,
        prediction_fallbacks: fallbacks,
        ls_swaps,
        ls_max_scans,
        ls_limit_hits,
        idle_accuracy: idle_accuracy(&pairs).ok(),
    };
    Ok(SimOutput {
        metrics,
        batch_wall,
        trace,
        idle_samples,
        riders: st.riders,
        drivers: st.drivers,
    })
}

/// Pairs each region-batch's predicted idle time with the mean wait of
/// drivers who became available there within `[t, t + window)` and were
/// later assigned. Censored episodes and zero realized waits are left out.
fn idle_samples(
    episodes: &[Episode],
    predicted: &[(Seconds, RegionId, f64)],
    n_regions: usize,
    window: Seconds,
) -> Vec<IdleSample> {
    let mut per_region: Vec<Vec<(Seconds, f64)>> = vec![Vec::new(); n_regions];
    for e in episodes {
        if let Some(end) = e.end {
            per_region[e.region].push((e.start, (end - e.start) as f64));
        }
    }
    let prefix: Vec<(Vec<Seconds>, Vec<f64>)> = per_region
        .into_iter()
        .map(|mut v| {
            v.sort_by_key(|x| x.0);
            let mut acc = vec![0.0];
            for (_, w) in &v {
                acc.push(acc.last().copied().unwrap_or(0.0) + w);
            }
            (v.into_iter().map(|x| x.0).collect(), acc)
        })
        .collect();
    predicted
        .iter()
        .filter_map(|&(t, k, et)| {
            let (starts, acc) = &prefix[k];
            let lo = starts.partition_point(|&s| s < t);
            let hi = starts.partition_point(|&s| s < t + window);
            if hi == lo {
                return None;
            }
            let realized = (acc[hi] - acc[lo]) / (hi - lo) as f64;
            (realized > 0.0).then_some(IdleSample {
                time: t,
                region: k,
                predicted: et,
                realized,
                drivers: hi - lo,
            })
        })
        .collect()
}
