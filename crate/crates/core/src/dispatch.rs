//! Batch assignment policies.
//!
//! Every policy consumes one batch: per-region [`RegionSnapshot`]s and the
//! valid [`CandidatePair`]s. The queue-aware policies (IRG, LS, SHORT) keep
//! a [`RateBook`] of per-region rates that grows as pairs are committed; the
//! baselines ignore it.
//!
//! Rates are per second and idle times are in seconds at this interface. The
//! queueing model is evaluated in minutes (see [`DispatchContext::rate_unit`]).

use crate::domain::{pickup_feasible, DispatchPair, Driver, DriverId, FeeRate, Rider, RiderId, Seconds};
use crate::queueing::{expected_idle_time, ExpectedIdle, QueueError, QueueParams};
use crate::spatial::{GridPartition, RegionId, TravelModel};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

pub const DEFAULT_LS_MAX_SCANS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown dispatch policy {0:?} (expected IRG, LS, SHORT, RAND, LTG or NEAR)")]
pub struct UnknownPolicy(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Policy {
    Irg,
    Ls,
    Short,
    Rand,
    Ltg,
    Near,
}

impl Policy {
    pub const ALL: [Policy; 6] = [Policy::Irg, Policy::Ls, Policy::Short, Policy::Rand, Policy::Ltg, Policy::Near];

    /// Whether the policy consults demand forecasts and idle times.
    pub fn is_queue_aware(self) -> bool {
        matches!(self, Policy::Irg | Policy::Ls | Policy::Short)
    }
}

impl FromStr for Policy {
    type Err = UnknownPolicy;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "IRG" => Ok(Policy::Irg),
            "LS" => Ok(Policy::Ls),
            "SHORT" => Ok(Policy::Short),
            "RAND" => Ok(Policy::Rand),
            "LTG" => Ok(Policy::Ltg),
            "NEAR" => Ok(Policy::Near),
            _ => Err(UnknownPolicy(s.to_string())),
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Policy::Irg => "IRG",
            Policy::Ls => "LS",
            Policy::Short => "SHORT",
            Policy::Rand => "RAND",
            Policy::Ltg => "LTG",
            Policy::Near => "NEAR",
        })
    }
}

/// Batch-wide constants of the queue-aware policies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispatchContext {
    /// Scheduling window, seconds.
    pub t_c: f64,
    /// Reneging coefficient.
    pub beta: f64,
    /// Seconds per time unit of the queueing model.
    pub rate_unit: f64,
}

impl DispatchContext {
    pub fn new(t_c: f64, beta: f64) -> Self {
        Self {
            t_c,
            beta,
            rate_unit: 60.0,
        }
    }
}

/// `(lambda, mu)` per second from current and expected counts.
pub fn estimate_rates(waiting: usize, available: usize, predicted_riders: f64, upcoming_rejoins: usize, t_c: f64) -> (f64, f64) {
    let (r, d, dh) = (waiting as f64, available as f64, upcoming_rejoins as f64);
    if waiting <= available {
        (predicted_riders / t_c, (dh + d - r) / t_c)
    } else {
        ((predicted_riders + r - d) / t_c, dh / t_c)
    }
}

/// Expected idle time in seconds of a driver joining a region with the given
/// per-second rates and driver-side cap.
///
/// A diverging rider-side series means riders are unboundedly plentiful, so
/// the idle time is zero.
pub fn region_idle_time(lambda: f64, mu: f64, cap: u32, ctx: &DispatchContext) -> ExpectedIdle {
    let u = ctx.rate_unit;
    let Ok(params) = QueueParams::new(lambda * u, mu * u, ctx.beta, cap, ctx.t_c / u) else {
        return ExpectedIdle::Unbounded;
    };
    match expected_idle_time(&params) {
        Ok(et) => et.scaled(u),
        Err(QueueError::NonConvergent { .. }) => ExpectedIdle::Finite(0.0),
        Err(_) => ExpectedIdle::Unbounded,
    }
}

/// `ET / (serve_cost + ET)`; 1 for an unbounded idle time.
pub fn idle_ratio(serve_cost: f64, et: ExpectedIdle) -> f64 {
    match et {
        ExpectedIdle::Unbounded => 1.0,
        ExpectedIdle::Finite(e) if e <= 0.0 => 0.0,
        ExpectedIdle::Finite(e) => e / (serve_cost.max(0.0) + e),
    }
}

/// One region's view of a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSnapshot {
    pub region: RegionId,
    pub waiting_riders: Vec<RiderId>,
    pub available_drivers: Vec<DriverId>,
    pub predicted_riders: f64,
    pub upcoming_rejoins: usize,
    /// Riders per second.
    pub lambda: f64,
    /// Drivers per second.
    pub mu: f64,
    /// Driver-side cap `|D_k| + |D^_k|`.
    pub cap: u32,
    /// Seconds.
    pub et: ExpectedIdle,
}

impl RegionSnapshot {
    pub fn new(
        region: RegionId,
        waiting_riders: Vec<RiderId>,
        available_drivers: Vec<DriverId>,
        predicted_riders: f64,
        upcoming_rejoins: usize,
        ctx: &DispatchContext,
    ) -> Self {
        let (lambda, mu) = estimate_rates(
            waiting_riders.len(),
            available_drivers.len(),
            predicted_riders,
            upcoming_rejoins,
            ctx.t_c,
        );
        let cap = (available_drivers.len() + upcoming_rejoins) as u32;
        Self {
            region,
            waiting_riders,
            available_drivers,
            predicted_riders,
            upcoming_rejoins,
            lambda,
            mu,
            cap,
            et: region_idle_time(lambda, mu, cap, ctx),
        }
    }
}

/// A valid rider–driver pair of the current batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidatePair {
    pub rider: RiderId,
    pub driver: DriverId,
    pub pickup_time: f64,
    pub serve_cost: f64,
    pub revenue: f64,
    pub dest_region: RegionId,
    /// Idle ratio under the rates in force when the pair was produced or selected.
    pub idle_ratio: f64,
}

impl CandidatePair {
    fn ids(&self) -> (RiderId, DriverId) {
        (self.rider, self.driver)
    }

    /// Whether the drop-off falls inside the scheduling window.
    pub fn rejoins_within(&self, t_c: f64) -> bool {
        self.pickup_time + self.serve_cost < t_c
    }

    pub fn to_dispatch_pair(&self) -> DispatchPair {
        DispatchPair {
            rider: self.rider,
            driver: self.driver,
            pickup_time: self.pickup_time,
            serve_cost: self.serve_cost,
            revenue: self.revenue,
        }
    }
}

/// Valid pairs between `riders` and `drivers` at `now`, looking for drivers in
/// the rider's cell and its eight neighbours. Sorted by `(rider, driver)`.
#[allow(clippy::too_many_arguments)]
pub fn generate_candidates(
    riders: &[&Rider],
    drivers: &[&Driver],
    grid: &GridPartition,
    model: &TravelModel,
    now: Seconds,
    alpha: FeeRate,
    snapshots: &[RegionSnapshot],
) -> Vec<CandidatePair> {
    let mut by_region: HashMap<RegionId, Vec<&Driver>> = HashMap::new();
    for d in drivers.iter().filter(|d| d.is_available()) {
        by_region.entry(grid.region_of(d.location)).or_default().push(d);
    }
    let et_of: HashMap<RegionId, ExpectedIdle> = snapshots.iter().map(|s| (s.region, s.et)).collect();
    let mut out = Vec::new();
    for rider in riders {
        let home = grid.region_of(rider.source);
        let dest_region = grid.region_of(rider.dest);
        let et = et_of.get(&dest_region).copied().unwrap_or(ExpectedIdle::Unbounded);
        for cell in grid.neighborhood(home) {
            for d in by_region.get(&cell).into_iter().flatten() {
                let pickup = model.travel_time(d.location, rider.source);
                if !pickup_feasible(now, pickup, rider.deadline) {
                    continue;
                }
                out.push(CandidatePair {
                    rider: rider.id,
                    driver: d.id,
                    pickup_time: pickup,
                    serve_cost: rider.serve_cost,
                    revenue: alpha.value() * rider.serve_cost,
                    dest_region,
                    idle_ratio: idle_ratio(rider.serve_cost, et),
                });
            }
        }
    }
    out.sort_by_key(CandidatePair::ids);
    out
}

#[derive(Debug, Clone)]
struct RegionRates {
    lambda: f64,
    base_mu: f64,
    base_cap: u32,
    /// In-window rejoins committed during this batch.
    bumps: i64,
    cache: Vec<(i64, ExpectedIdle)>,
}

/// Per-region rates of a batch, updated as committed drivers are scheduled to
/// rejoin. `mu` and `cap` are always `base + bumps` so equal bump counts give
/// bit-identical idle times.
#[derive(Debug, Clone)]
pub struct RateBook {
    ctx: DispatchContext,
    regions: HashMap<RegionId, RegionRates>,
}

impl RateBook {
    pub fn new(snapshots: &[RegionSnapshot], ctx: DispatchContext) -> Self {
        let regions = snapshots
            .iter()
            .map(|s| {
                let rates = RegionRates {
                    lambda: s.lambda,
                    base_mu: s.mu,
                    base_cap: s.cap,
                    bumps: 0,
                    cache: vec![(0, s.et)],
                };
                (s.region, rates)
            })
            .collect();
        Self { ctx, regions }
    }

    pub fn context(&self) -> &DispatchContext {
        &self.ctx
    }

    /// Current idle time of `region` with `delta` extra rejoins.
    pub fn et_with(&mut self, region: RegionId, delta: i64) -> ExpectedIdle {
        let ctx = self.ctx;
        let Some(r) = self.regions.get_mut(&region) else {
            return ExpectedIdle::Unbounded;
        };
        let n = r.bumps + delta;
        if let Some(&(_, et)) = r.cache.iter().find(|(k, _)| *k == n) {
            return et;
        }
        let mu = (r.base_mu + n as f64 / ctx.t_c).max(0.0);
        let cap = (r.base_cap as i64 + n).max(0) as u32;
        let et = region_idle_time(r.lambda, mu, cap, &ctx);
        r.cache.push((n, et));
        et
    }

    pub fn et(&mut self, region: RegionId) -> ExpectedIdle {
        self.et_with(region, 0)
    }

    pub fn mu(&self, region: RegionId) -> f64 {
        self.regions
            .get(&region)
            .map(|r| r.base_mu + r.bumps as f64 / self.ctx.t_c)
            .unwrap_or(0.0)
    }

    pub fn bumps(&self, region: RegionId) -> i64 {
        self.regions.get(&region).map(|r| r.bumps).unwrap_or(0)
    }

    fn shift(&mut self, region: RegionId, by: i64) {
        if let Some(r) = self.regions.get_mut(&region) {
            r.bumps += by;
        }
    }

    /// Applies a committed pair: one more rejoin in its destination when it drops off within the window.
    pub fn commit(&mut self, pair: &CandidatePair) -> bool {
        let inside = pair.rejoins_within(self.ctx.t_c);
        if inside {
            self.shift(pair.dest_region, 1);
        }
        inside
    }

    /// Reverts [`RateBook::commit`].
    pub fn release(&mut self, pair: &CandidatePair) {
        if pair.rejoins_within(self.ctx.t_c) {
            self.shift(pair.dest_region, -1);
        }
    }

    /// Current idle times of all regions.
    pub fn idle_times(&mut self) -> Vec<(RegionId, ExpectedIdle)> {
        let mut ids: Vec<RegionId> = self.regions.keys().copied().collect();
        ids.sort_unstable();
        ids.into_iter().map(|k| (k, self.et(k))).collect()
    }
}

/// Heap entry; the smallest `(key, rider, driver)` is popped first.
#[derive(Debug, Clone, Copy)]
struct HeadEntry {
    key: f64,
    rider: RiderId,
    driver: DriverId,
    region: RegionId,
    candidate: usize,
    version: u64,
}

impl PartialEq for HeadEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeadEntry {}
impl PartialOrd for HeadEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeadEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed for a min-heap.
        other
            .key
            .total_cmp(&self.key)
            .then_with(|| (other.rider, other.driver).cmp(&(self.rider, self.driver)))
            .then_with(|| other.version.cmp(&self.version))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum GreedyKey {
    IdleRatio,
    CostPlusIdle,
}

impl GreedyKey {
    fn eval(self, cost: f64, et: ExpectedIdle) -> f64 {
        match self {
            GreedyKey::IdleRatio => idle_ratio(cost, et),
            GreedyKey::CostPlusIdle => match et {
                ExpectedIdle::Finite(e) => cost + e,
                ExpectedIdle::Unbounded => f64::INFINITY,
            },
        }
    }

    /// Whether every candidate of a region shares one key at this idle time.
    fn flat(self, et: ExpectedIdle) -> bool {
        match (self, et) {
            (_, ExpectedIdle::Unbounded) => true,
            (GreedyKey::IdleRatio, ExpectedIdle::Finite(e)) => e <= 0.0,
            (GreedyKey::CostPlusIdle, _) => false,
        }
    }
}

/// Candidates of one destination region in the two orders a greedy key can take.
struct RegionQueue {
    /// Key order for a fixed positive idle time.
    by_cost: Vec<usize>,
    /// `(rider, driver)` order, used when all keys coincide.
    by_id: Vec<usize>,
    cost_pos: usize,
    id_pos: usize,
    version: u64,
}

struct Usage {
    riders: HashSet<RiderId>,
    drivers: HashSet<DriverId>,
}

impl Usage {
    fn new() -> Self {
        Self {
            riders: HashSet::new(),
            drivers: HashSet::new(),
        }
    }

    fn live(&self, c: &CandidatePair) -> bool {
        !self.riders.contains(&c.rider) && !self.drivers.contains(&c.driver)
    }

    fn take(&mut self, c: &CandidatePair) {
        self.riders.insert(c.rider);
        self.drivers.insert(c.driver);
    }
}

fn greedy_with_feedback(
    candidates: &[CandidatePair],
    book: &mut RateBook,
    key: GreedyKey,
) -> Vec<CandidatePair> {
    let mut queues: HashMap<RegionId, RegionQueue> = HashMap::new();
    for (i, c) in candidates.iter().enumerate() {
        queues
            .entry(c.dest_region)
            .or_insert_with(|| RegionQueue {
                by_cost: Vec::new(),
                by_id: Vec::new(),
                cost_pos: 0,
                id_pos: 0,
                version: 0,
            })
            .by_cost
            .push(i);
    }
    for q in queues.values_mut() {
        q.by_id = q.by_cost.clone();
        q.by_id.sort_by_key(|&i| candidates[i].ids());
        q.by_cost.sort_by(|&a, &b| {
            let (ca, cb) = (&candidates[a], &candidates[b]);
            let by = match key {
                GreedyKey::IdleRatio => cb.serve_cost.total_cmp(&ca.serve_cost),
                GreedyKey::CostPlusIdle => ca.serve_cost.total_cmp(&cb.serve_cost),
            };
            by.then_with(|| ca.ids().cmp(&cb.ids()))
        });
    }

    let mut usage = Usage::new();
    let mut heap = BinaryHeap::new();

    let push_head = |region: RegionId,
                     queues: &mut HashMap<RegionId, RegionQueue>,
                     book: &mut RateBook,
                     usage: &Usage,
                     heap: &mut BinaryHeap<HeadEntry>| {
        let Some(q) = queues.get_mut(&region) else {
            return;
        };
        let et = book.et(region);
        let (list, pos) = if key.flat(et) {
            (&q.by_id, &mut q.id_pos)
        } else {
            (&q.by_cost, &mut q.cost_pos)
        };
        while *pos < list.len() && !usage.live(&candidates[list[*pos]]) {
            *pos += 1;
        }
        if let Some(&i) = list.get(*pos) {
            let c = &candidates[i];
            heap.push(HeadEntry {
                key: key.eval(c.serve_cost, et),
                rider: c.rider,
                driver: c.driver,
                region,
                candidate: i,
                version: q.version,
            });
        }
    };

    let mut regions: Vec<RegionId> = queues.keys().copied().collect();
    regions.sort_unstable();
    for &r in &regions {
        push_head(r, &mut queues, book, &usage, &mut heap);
    }

    let mut selected = Vec::new();
    while let Some(entry) = heap.pop() {
        let version = queues[&entry.region].version;
        if entry.version != version {
            continue;
        }
        let c = candidates[entry.candidate];
        if !usage.live(&c) {
            push_head(entry.region, &mut queues, book, &usage, &mut heap);
            continue;
        }
        usage.take(&c);
        selected.push(CandidatePair {
            idle_ratio: idle_ratio(c.serve_cost, book.et(c.dest_region)),
            ..c
        });
        if book.commit(&c) {
            if let Some(q) = queues.get_mut(&c.dest_region) {
                q.version += 1;
            }
        }
        push_head(entry.region, &mut queues, book, &usage, &mut heap);
    }
    selected
}

/// Idle-ratio greedy: repeatedly commits the pair with the smallest idle
/// ratio under the current rates. Returns the pairs in selection order.
pub fn irg_dispatch(snapshots: &[RegionSnapshot], candidates: &[CandidatePair], ctx: &DispatchContext) -> Vec<CandidatePair> {
    let mut book = RateBook::new(snapshots, *ctx);
    greedy_with_feedback(candidates, &mut book, GreedyKey::IdleRatio)
}

/// As [`irg_dispatch`] but ordered by `serve_cost + ET`, ascending.
pub fn short_dispatch(snapshots: &[RegionSnapshot], candidates: &[CandidatePair], ctx: &DispatchContext) -> Vec<CandidatePair> {
    let mut book = RateBook::new(snapshots, *ctx);
    greedy_with_feedback(candidates, &mut book, GreedyKey::CostPlusIdle)
}

/// One accepted local-search replacement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Swap {
    pub driver: DriverId,
    pub old_rider: RiderId,
    pub new_rider: RiderId,
    pub old_idle_ratio: f64,
    /// Recomputed after the swap was applied.
    pub new_idle_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalSearchOutcome {
    /// Final assignment, ordered by driver.
    pub pairs: Vec<CandidatePair>,
    pub scans: usize,
    pub swaps: Vec<Swap>,
    /// The last permitted scan still made a replacement.
    pub hit_limit: bool,
}

/// Replaces an assigned driver's rider with an unassigned valid rider of
/// strictly smaller idle ratio until a full scan changes nothing or
/// `max_scans` scans have run.
///
/// A pair's idle ratio is evaluated with its own rejoin counted, so the
/// current pair and each alternative are compared under the same fleet.
pub fn local_search(
    initial: &[CandidatePair],
    candidates: &[CandidatePair],
    snapshots: &[RegionSnapshot],
    ctx: &DispatchContext,
    max_scans: usize,
) -> LocalSearchOutcome {
    let mut book = RateBook::new(snapshots, *ctx);
    let mut by_driver: HashMap<DriverId, Vec<usize>> = HashMap::new();
    for (i, c) in candidates.iter().enumerate() {
        by_driver.entry(c.driver).or_default().push(i);
    }
    let mut assigned: Vec<CandidatePair> = initial.to_vec();
    assigned.sort_by_key(|c| c.driver);
    let mut taken: HashSet<RiderId> = assigned.iter().map(|c| c.rider).collect();
    for c in &assigned {
        book.commit(c);
    }

    let mut swaps = Vec::new();
    let mut scans = 0;
    let mut hit_limit = false;
    while scans < max_scans {
        scans += 1;
        let mut changed = 0usize;
        for entry in assigned.iter_mut() {
            let cur = *entry;
            let cur_inside = cur.rejoins_within(ctx.t_c) as i64;
            let cur_ir = idle_ratio(cur.serve_cost, book.et(cur.dest_region));
            let mut best: Option<(f64, RiderId, usize)> = None;
            for &i in by_driver.get(&cur.driver).map(Vec::as_slice).unwrap_or(&[]) {
                let alt = &candidates[i];
                if taken.contains(&alt.rider) {
                    continue;
                }
                let alt_inside = alt.rejoins_within(ctx.t_c) as i64;
                let delta = if alt.dest_region == cur.dest_region {
                    alt_inside - cur_inside
                } else {
                    alt_inside
                };
                let ir = idle_ratio(alt.serve_cost, book.et_with(alt.dest_region, delta));
                if ir < cur_ir && best.is_none_or(|(b, r, _)| (ir, alt.rider) < (b, r)) {
                    best = Some((ir, alt.rider, i));
                }
            }
            if let Some((_, _, i)) = best {
                let alt = candidates[i];
                book.release(&cur);
                book.commit(&alt);
                taken.remove(&cur.rider);
                taken.insert(alt.rider);
                let new_ir = idle_ratio(alt.serve_cost, book.et(alt.dest_region));
                *entry = CandidatePair {
                    idle_ratio: new_ir,
                    ..alt
                };
                swaps.push(Swap {
                    driver: cur.driver,
                    old_rider: cur.rider,
                    new_rider: alt.rider,
                    old_idle_ratio: cur_ir,
                    new_idle_ratio: new_ir,
                });
                changed += 1;
            }
        }
        if changed == 0 {
            break;
        }
        if scans == max_scans {
            hit_limit = true;
            log::warn!("local search stopped after {max_scans} scans; last scan made {changed} swaps");
        }
    }
    LocalSearchOutcome {
        pairs: assigned,
        scans,
        swaps,
        hit_limit,
    }
}

/// Commits candidates in the given order, skipping pairs whose rider or driver is taken.
fn commit_in_order<'a>(ordered: impl IntoIterator<Item = &'a CandidatePair>) -> Vec<CandidatePair> {
    let mut usage = Usage::new();
    let mut out = Vec::new();
    for c in ordered {
        if usage.live(c) {
            usage.take(c);
            out.push(*c);
        }
    }
    out
}

/// RAND, LTG or NEAR. Queue-aware policies are rejected with `None`.
pub fn baseline_dispatch(candidates: &[CandidatePair], policy: Policy, seed: u64) -> Option<Vec<CandidatePair>> {
    let mut order: Vec<&CandidatePair> = candidates.iter().collect();
    order.sort_by_key(|c| c.ids());
    match policy {
        Policy::Rand => order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed)),
        Policy::Ltg => order.sort_by(|a, b| b.revenue.total_cmp(&a.revenue)),
        Policy::Near => order.sort_by(|a, b| a.pickup_time.total_cmp(&b.pickup_time)),
        _ => return None,
    }
    Some(commit_in_order(order))
}

/// Sum of the `min(idle_drivers, riders)` largest rider revenues.
pub fn upper_bound(revenues: impl IntoIterator<Item = f64>, idle_drivers: usize) -> f64 {
    let mut v: Vec<f64> = revenues.into_iter().collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v.iter().take(idle_drivers).sum()
}

/// Result of one batch under a policy.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchDispatch {
    pub pairs: Vec<CandidatePair>,
    /// Per-region idle times after every commitment of the batch; empty for baselines.
    pub final_idle_times: Vec<(RegionId, ExpectedIdle)>,
    pub local_search: Option<LocalSearchOutcome>,
}

pub fn dispatch_batch(
    policy: Policy,
    snapshots: &[RegionSnapshot],
    candidates: &[CandidatePair],
    ctx: &DispatchContext,
    seed: u64,
) -> BatchDispatch {
    let final_times = |pairs: &[CandidatePair]| {
        let mut book = RateBook::new(snapshots, *ctx);
        for p in pairs {
            book.commit(p);
        }
        book.idle_times()
    };
    match policy {
        Policy::Irg | Policy::Short => {
            let pairs = if policy == Policy::Irg {
                irg_dispatch(snapshots, candidates, ctx)
            } else {
                short_dispatch(snapshots, candidates, ctx)
            };
            BatchDispatch {
                final_idle_times: final_times(&pairs),
                pairs,
                local_search: None,
            }
        }
        Policy::Ls => {
            let initial = irg_dispatch(snapshots, candidates, ctx);
            let outcome = local_search(&initial, candidates, snapshots, ctx, DEFAULT_LS_MAX_SCANS);
            BatchDispatch {
                final_idle_times: final_times(&outcome.pairs),
                pairs: outcome.pairs.clone(),
                local_search: Some(outcome),
            }
        }
        Policy::Rand | Policy::Ltg | Policy::Near => BatchDispatch {
            pairs: baseline_dispatch(candidates, policy, seed).unwrap_or_default(),
            final_idle_times: Vec::new(),
            local_search: None,
        },
    }
}
