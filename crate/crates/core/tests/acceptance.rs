//! End-to-end acceptance checks. Each test writes one `criterion N: PASS|FAIL`
//! line to stderr (unaffected by test output capture) and then asserts.

use qdispatch::dispatch::{
    dispatch_batch, BatchDispatch, CandidatePair, DispatchContext, Policy, RegionSnapshot, DEFAULT_LS_MAX_SCANS,
};
use qdispatch::domain::{DriverId, RiderId};
use qdispatch::engine::{run_simulation, SimConfig, SimMetrics, SimOutput, Workload};
use qdispatch::ingest::{generate_synthetic, init_drivers, synthetic_history, SyntheticSpec};
use qdispatch::prediction::{Predictor, PredictorMethod};
use qdispatch::queueing::{
    expected_idle_time, p_zero, simulate_queue, ChainDistribution, QueueParams, Regime,
};
use qdispatch::spatial::{GridPartition, TravelModel};
use qdispatch::stats::{chi_square_critical, counts_per_interval, idle_accuracy, poisson_gof};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;
use std::io::Write;
use std::sync::OnceLock;
use std::time::Instant;

const SEEDS: u64 = 10;

fn report(criterion: u32, pass: bool, detail: impl AsRef<str>) -> bool {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "criterion {criterion:>2}: {verdict} | {}", detail.as_ref());
    pass
}

// ---------------------------------------------------------------------------
// Queueing grid and series oracle

/// `(lambda, mu, beta, cap)` per minute: lambda/mu in {0.5, 1, 2}, beta in
/// {0, 0.5, 1}, K in {2, 10}, followed by the three anchor points.
fn queue_grid() -> Vec<(f64, f64, f64, u32)> {
    let mu = 0.5;
    let mut grid = Vec::new();
    for ratio in [0.5, 1.0, 2.0] {
        for beta in [0.0, 0.5, 1.0] {
            for cap in [2, 10] {
                grid.push((ratio * mu, mu, beta, cap));
            }
        }
    }
    grid.extend([(1.0, 0.5, 1.0, 2), (0.5, 1.0, 1.0, 2), (1.0, 1.0, 1.0, 2)]);
    grid
}

fn params((lambda, mu, beta, cap): (f64, f64, f64, u32)) -> QueueParams {
    QueueParams::new(lambda, mu, beta, cap, 30.0).unwrap()
}

/// Direct term-by-term evaluation of the stationary chain: `(p0, ET)`.
fn series_oracle(lambda: f64, mu: f64, beta: f64, cap: u32, unbounded_drivers: bool) -> (f64, f64) {
    let mut rider_mass = 0.0;
    let mut w = 1.0;
    for n in 1..1_000_000 {
        w *= lambda / (mu + (beta * n as f64 / mu).exp());
        rider_mass += w;
        if w < 1e-18 {
            break;
        }
    }
    let theta = mu / lambda;
    let mut driver_mass = 0.0;
    let mut weighted = 0.0;
    let mut term = 1.0;
    let mut i = 0u64;
    loop {
        driver_mass += term;
        weighted += (i + 1) as f64 * term;
        i += 1;
        term *= theta;
        let done = if unbounded_drivers { (i as f64 + 1.0) * term < 1e-18 } else { i > cap as u64 };
        if done {
            break;
        }
    }
    let p0 = 1.0 / (driver_mass + rider_mass);
    (p0, weighted * p0 / lambda)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn criterion_01_closed_forms_match_series() {
    let t0 = Instant::now();
    let mut worst_p0: f64 = 0.0;
    let mut worst_et: f64 = 0.0;
    for point in queue_grid() {
        let p = params(point);
        let (l, m, b, k) = point;
        let (p0, et) = series_oracle(l, m, b, k, p.regime() == Regime::RiderHeavy);
        worst_p0 = worst_p0.max(rel(p_zero(&p).unwrap(), p0));
        worst_et = worst_et.max(rel(expected_idle_time(&p).unwrap().finite().unwrap(), et));
    }
    let secs = t0.elapsed().as_secs_f64();
    let pass = worst_p0 <= 1e-9 && worst_et <= 1e-9 && secs < 1.0;
    report(
        1,
        pass,
        format!("max rel err p0 {worst_p0:.2e}, ET {worst_et:.2e} (tol 1e-9); {secs:.3} s (< 1 s)"),
    );
    assert!(pass);
}

#[test]
fn criterion_02_closed_form_matches_monte_carlo() {
    let t0 = Instant::now();
    let mut worst = (0.0f64, (0.0, 0.0, 0.0, 0));
    let mut anchors = Vec::new();
    for (i, point) in queue_grid().into_iter().enumerate() {
        let p = params(point);
        let closed = expected_idle_time(&p).unwrap().finite().unwrap();
        let sim = simulate_queue(&p, 1e6, 1000 + i as u64).unwrap();
        let err = rel(closed, sim.mean_wait);
        if err > worst.0 {
            worst = (err, point);
        }
        if i >= 18 {
            anchors.push((closed, sim.mean_wait));
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    let pass = worst.0 <= 0.10 && secs < 60.0;
    let shown: Vec<String> = anchors.iter().map(|(c, s)| format!("{c:.4}/{s:.4}")).collect();
    report(
        2,
        pass,
        format!(
            "max rel err {:.2}% at {:?} (tol 10%); anchors closed/MC [{}] min; {secs:.1} s (< 60 s)",
            worst.0 * 100.0,
            worst.1,
            shown.join(", ")
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_03_chain_invariants() {
    let mut worst_norm: f64 = 0.0;
    let mut worst_flow: f64 = 0.0;
    for point in queue_grid() {
        let d = ChainDistribution::materialize(&params(point)).unwrap();
        worst_norm = worst_norm.max((d.total() - 1.0).abs());
        worst_flow = worst_flow.max(d.max_flow_imbalance());
    }
    let pass = worst_norm <= 1e-9 && worst_flow <= 1e-12;
    report(
        3,
        pass,
        format!("normalization err {worst_norm:.2e} (tol 1e-9), flow imbalance {worst_flow:.2e} (tol 1e-12)"),
    );
    assert!(pass);
}

#[test]
fn criterion_04_chi_square_fidelity() {
    let constants = [(6, 12.592), (5, 11.070), (4, 9.488)];
    let exact = constants
        .iter()
        .all(|&(df, v)| chi_square_critical(df, 0.05).unwrap() == v);
    let grid = GridPartition::default();
    let model = TravelModel::default();
    let minutes = 210;
    let spec = SyntheticSpec::uniform(grid.n_regions(), 3.0 / 60.0, 0, minutes * 60, 120);
    let mut rejected = 0;
    for seed in 0..100 {
        let riders = generate_synthetic(&spec, &grid, &model, seed).unwrap();
        let times: Vec<i64> = riders.iter().map(|r| r.post_time).collect();
        let counts = counts_per_interval(&times, 0, minutes * 60, 60);
        rejected += poisson_gof(&counts, 0.05).unwrap().rejected as usize;
    }
    let pass = exact && rejected <= 10;
    report(
        4,
        pass,
        format!("table constants exact: {exact}; synthetic per-minute counts rejected {rejected}/100 (<= 10)"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// Dispatch instances

fn fixed_snapshot(region: usize, et: f64) -> RegionSnapshot {
    RegionSnapshot {
        region,
        waiting_riders: vec![],
        available_drivers: vec![],
        predicted_riders: 0.0,
        upcoming_rejoins: 0,
        lambda: 0.0,
        mu: 0.0,
        cap: 0,
        et: qdispatch::queueing::ExpectedIdle::Finite(et),
    }
}

fn candidate(rider: u32, driver: u32, pickup: f64, cost: f64, dest: usize) -> CandidatePair {
    CandidatePair {
        rider: RiderId(rider),
        driver: DriverId(driver),
        pickup_time: pickup,
        serve_cost: cost,
        revenue: cost,
        dest_region: dest,
        idle_ratio: 0.0,
    }
}

/// Random bipartite validity with `n_r <= 12` riders and `n_d <= 8` drivers.
fn random_edges(rng: &mut ChaCha8Rng) -> Vec<(u32, u32)> {
    let n_r = rng.random_range(1..=12);
    let n_d = rng.random_range(1..=8);
    let mut edges = Vec::new();
    for r in 0..n_r {
        for d in 0..n_d {
            if rng.random_bool(0.5) {
                edges.push((r, d));
            }
        }
    }
    edges
}

/// Sequential greedy over a total order: the selection sequence any correct
/// greedy matcher must reproduce.
fn greedy_oracle(mut cands: Vec<CandidatePair>, key: impl Fn(&CandidatePair) -> f64) -> Vec<(u32, u32)> {
    cands.sort_by(|a, b| {
        key(a)
            .total_cmp(&key(b))
            .then(a.rider.cmp(&b.rider))
            .then(a.driver.cmp(&b.driver))
    });
    let mut riders = HashSet::new();
    let mut drivers = HashSet::new();
    let mut out = Vec::new();
    for c in cands {
        if !riders.contains(&c.rider) && !drivers.contains(&c.driver) {
            riders.insert(c.rider);
            drivers.insert(c.driver);
            out.push((c.rider.0, c.driver.0));
        }
    }
    out
}

fn order(pairs: &[CandidatePair]) -> Vec<(u32, u32)> {
    pairs.iter().map(|p| (p.rider.0, p.driver.0)).collect()
}

#[test]
fn criterion_05_dispatch_rules() {
    // Drop-offs land beyond the window, so commitments leave every ET fixed.
    let ctx = DispatchContext::new(600.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let regions = 4;
    let mut rule_a = 0;
    let mut rule_b = 0;
    for _ in 0..1000 {
        let et = rng.random_range(10.0..1000.0);
        let snaps: Vec<_> = (0..regions).map(|k| fixed_snapshot(k, et)).collect();
        let cands: Vec<_> = random_edges(&mut rng)
            .into_iter()
            .map(|(r, d)| candidate(r, d, 600.0, rng.random_range(100.0..900.0), rng.random_range(0..regions)))
            .collect();
        let got = dispatch_batch(Policy::Irg, &snaps, &cands, &ctx, 0).pairs;
        rule_a += (order(&got) == greedy_oracle(cands, |c| -c.serve_cost)) as usize;

        let ets: Vec<f64> = (0..regions).map(|_| rng.random_range(10.0..1000.0)).collect();
        let snaps: Vec<_> = (0..regions).map(|k| fixed_snapshot(k, ets[k])).collect();
        let cands: Vec<_> = random_edges(&mut rng)
            .into_iter()
            .map(|(r, d)| candidate(r, d, 400.0, 300.0, rng.random_range(0..regions)))
            .collect();
        let got = dispatch_batch(Policy::Irg, &snaps, &cands, &ctx, 0).pairs;
        rule_b += (order(&got) == greedy_oracle(cands, |c| ets[c.dest_region])) as usize;
    }
    let pass = rule_a == 1000 && rule_b == 1000;
    report(
        5,
        pass,
        format!("equal ET -> descending cost: {rule_a}/1000; equal cost -> ascending ET: {rule_b}/1000"),
    );
    assert!(pass);
}

/// Up to 50 riders and 50 drivers over 16 regions with live queue snapshots.
fn random_batch(rng: &mut ChaCha8Rng, ctx: &DispatchContext) -> (Vec<RegionSnapshot>, Vec<CandidatePair>) {
    let regions = 16;
    let n_r = rng.random_range(5..=50u32);
    let n_d = rng.random_range(5..=50u32);
    let mut snaps = Vec::new();
    let mut next_rider = 0;
    let mut next_driver = 0;
    for k in 0..regions {
        let w = rng.random_range(0..4);
        let a = rng.random_range(0..4);
        let waiting = (0..w).map(|i| RiderId(next_rider + i)).collect();
        let available = (0..a).map(|i| DriverId(next_driver + i)).collect();
        next_rider += w;
        next_driver += a;
        let predicted = rng.random_range(0.0..8.0);
        let rejoins = rng.random_range(0..4);
        snaps.push(RegionSnapshot::new(k, waiting, available, predicted, rejoins, ctx));
    }
    let mut cands = Vec::new();
    for r in 0..n_r {
        let cost = rng.random_range(60.0..1200.0);
        let dest = rng.random_range(0..regions);
        for d in 0..n_d {
            if rng.random_bool(0.15) {
                cands.push(candidate(r, d, rng.random_range(0.0..300.0), cost, dest));
            }
        }
    }
    (snaps, cands)
}

fn revenue(b: &BatchDispatch) -> f64 {
    b.pairs.iter().map(|p| p.revenue).sum()
}

#[test]
fn criterion_06_local_search() {
    let ctx = DispatchContext::new(300.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = 200;
    let mut limit_hits = 0;
    let mut bad_swaps = 0;
    let mut swaps = 0;
    let mut ls_at_least_irg = 0;
    let (mut ls_total, mut irg_total) = (0.0, 0.0);
    for seed in 0..n {
        let (snaps, cands) = random_batch(&mut rng, &ctx);
        let irg = dispatch_batch(Policy::Irg, &snaps, &cands, &ctx, seed);
        let ls = dispatch_batch(Policy::Ls, &snaps, &cands, &ctx, seed);
        let outcome = ls.local_search.as_ref().expect("local search outcome");
        limit_hits += (outcome.hit_limit || outcome.scans > DEFAULT_LS_MAX_SCANS) as usize;
        swaps += outcome.swaps.len();
        bad_swaps += outcome
            .swaps
            .iter()
            .filter(|s| s.new_idle_ratio.partial_cmp(&s.old_idle_ratio) != Some(std::cmp::Ordering::Less))
            .count();
        let (a, b) = (revenue(&ls), revenue(&irg));
        ls_at_least_irg += (a >= b) as usize;
        ls_total += a;
        irg_total += b;
    }
    let share = ls_at_least_irg as f64 / n as f64;
    let pass = limit_hits == 0 && bad_swaps == 0 && share >= 0.6 && ls_total >= irg_total;
    report(
        6,
        pass,
        format!(
            "L_max hits {limit_hits}/{n}; non-improving swaps {bad_swaps}/{swaps}; LS >= IRG on {:.0}% (>= 60%); mean LS {:.1} vs IRG {:.1}",
            share * 100.0,
            ls_total / n as f64,
            irg_total / n as f64
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// Simulation workloads

struct Scenario {
    n_drivers: usize,
    /// Rider arrival rate, riders per second.
    rate: f64,
    span: i64,
    base_wait: i64,
    batch_interval: i64,
    policy: Policy,
    method: PredictorMethod,
    uniform: bool,
    /// Draw the recorded history from a uniform pattern with the same total
    /// rate instead of the live demand pattern.
    shifted_history: bool,
    seed: u64,
}

impl Scenario {
    fn hotspot(n_drivers: usize, rate: f64, policy: Policy, seed: u64) -> Self {
        Self {
            n_drivers,
            rate,
            span: 7200,
            base_wait: 120,
            batch_interval: 3,
            policy,
            method: PredictorMethod::Ha,
            uniform: false,
            shifted_history: false,
            seed,
        }
    }

    fn spec(&self, grid: &GridPartition) -> SyntheticSpec {
        if self.uniform {
            SyntheticSpec::uniform(grid.n_regions(), self.rate, 0, self.span, self.base_wait)
        } else {
            SyntheticSpec::hotspot(grid, self.rate, HOTSPOT_SIGMA, HOTSPOT_SPREAD, 0, self.span, self.base_wait)
        }
    }

    fn run(&self) -> SimOutput {
        let grid = GridPartition::default();
        let model = TravelModel::default();
        let spec = self.spec(&grid);
        let riders = generate_synthetic(&spec, &grid, &model, self.seed).unwrap();
        let points: Vec<_> = riders.iter().map(|r| r.source).collect();
        let drivers = init_drivers(&points, self.n_drivers, self.seed + 1000, 0);
        let past = if self.shifted_history {
            SyntheticSpec::uniform(grid.n_regions(), spec.total_rate(), 0, self.span, self.base_wait)
        } else {
            spec.clone()
        };
        let history = synthetic_history(&past, 15, 1800, &[], self.seed + 2000);
        let cfg = SimConfig {
            n_drivers: self.n_drivers,
            base_wait: self.base_wait,
            batch_interval: self.batch_interval,
            policy: self.policy,
            predictor: Predictor::new(self.method, 15).unwrap(),
            seed: self.seed,
            end: self.span,
            grid,
            model,
            ..SimConfig::default()
        };
        let out = run_simulation(
            Workload {
                riders,
                drivers,
                history: Some(history),
            },
            &cfg,
        )
        .unwrap();
        assert_accounting(&out.metrics);
        out
    }
}

const HOTSPOT_SIGMA: f64 = 2.0;
const HOTSPOT_SPREAD: f64 = 0.3;

/// Every simulated run must satisfy the revenue identity and conservation.
fn assert_accounting(m: &SimMetrics) {
    assert!(
        m.accounting_gap() <= 1e-6 && m.conserves_riders(),
        "criterion 11 violated by {} seed {}: gap {:.3e}, served {} + reneged {} + waiting {} vs {}",
        m.label,
        m.seed,
        m.accounting_gap(),
        m.served,
        m.reneged,
        m.waiting_at_end,
        m.total_riders
    );
}

/// Mean serve cost of trips drawn from the given workload shape.
fn mean_serve_cost(uniform: bool) -> f64 {
    static COSTS: OnceLock<(f64, f64)> = OnceLock::new();
    let (hot, uni) = *COSTS.get_or_init(|| {
        let grid = GridPartition::default();
        let model = TravelModel::default();
        let mean = |spec: SyntheticSpec| {
            let riders = generate_synthetic(&spec, &grid, &model, 99).unwrap();
            riders.iter().map(|r| r.serve_cost).sum::<f64>() / riders.len() as f64
        };
        (
            mean(SyntheticSpec::hotspot(&grid, 1.0, HOTSPOT_SIGMA, HOTSPOT_SPREAD, 0, 20_000, 120)),
            mean(SyntheticSpec::uniform(grid.n_regions(), 1.0, 0, 20_000, 120)),
        )
    });
    if uniform {
        uni
    } else {
        hot
    }
}

/// Riders per second a fleet of `n` drivers can serve back to back.
fn capacity(n: usize, uniform: bool) -> f64 {
    n as f64 / mean_serve_cost(uniform)
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.into_iter().collect();
    v.iter().sum::<f64>() / v.len() as f64
}

const SCARCE_FLEET: usize = 300;

fn scarce(policy: Policy, method: PredictorMethod, seed: u64) -> Scenario {
    Scenario {
        method,
        ..Scenario::hotspot(SCARCE_FLEET, 2.0 * capacity(SCARCE_FLEET, false), policy, seed)
    }
}

#[test]
fn criterion_07_policy_ordering() {
    let t0 = Instant::now();
    let policies = [Policy::Ls, Policy::Irg, Policy::Rand, Policy::Near, Policy::Ltg];
    let mut means = Vec::new();
    let mut upper_ok = true;
    for policy in policies {
        let runs: Vec<SimMetrics> = (0..SEEDS)
            .map(|s| scarce(policy, PredictorMethod::Ha, s).run().metrics)
            .collect();
        upper_ok &= runs.iter().all(|m| m.upper_bound >= m.total_revenue);
        means.push(mean(runs.iter().map(|m| m.total_revenue)));
    }
    let secs = t0.elapsed().as_secs_f64();
    let (ls, irg) = (means[0], means[1]);
    let best_baseline = means[2..].iter().copied().fold(f64::MIN, f64::max);
    let lift = ls / best_baseline - 1.0;
    let pass = ls >= irg && irg > best_baseline && lift >= 0.03 && upper_ok && secs < 600.0;
    report(
        7,
        pass,
        format!(
            "mean revenue LS {ls:.0}, IRG {irg:.0}, RAND {:.0}, NEAR {:.0}, LTG {:.0}; LS lift over best baseline {:.1}% (>= 3%); UPPER dominates: {upper_ok}; {secs:.0} s",
            means[2],
            means[3],
            means[4],
            lift * 100.0
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_08_oracle_demand_helps() {
    let run = |method, shifted_history| {
        mean((0..SEEDS).map(|s| {
            Scenario {
                shifted_history,
                ..scarce(Policy::Ls, method, s)
            }
            .run()
            .metrics
            .total_revenue
        }))
    };
    let real = run(PredictorMethod::Oracle, true);
    let predicted = run(PredictorMethod::Ha, true);
    let stationary_real = run(PredictorMethod::Oracle, false);
    let stationary_predicted = run(PredictorMethod::Ha, false);
    let pass = real >= predicted;
    report(
        8,
        pass,
        format!(
            "history from a shifted demand pattern: mean revenue LS-R {real:.0} vs LS-P(HA) {predicted:.0}; \
             stationary history (informational): LS-R {stationary_real:.0} vs LS-P(HA) {stationary_predicted:.0}"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_09_idle_time_accuracy() {
    let base = 1000;
    let rate = capacity(base, true);
    let mut errors = Vec::new();
    for mult in [0.25, 1.0, 4.0] {
        let n = (base as f64 * mult) as usize;
        let mut pairs = Vec::new();
        for seed in 0..3 {
            let out = Scenario {
                uniform: true,
                method: PredictorMethod::Oracle,
                ..Scenario::hotspot(n, rate, Policy::Ls, seed)
            }
            .run();
            pairs.extend(out.idle_samples.iter().map(|s| (s.predicted, s.realized)));
        }
        errors.push(idle_accuracy(&pairs).unwrap());
    }
    let balanced = errors[1].relative_rmse;
    let u_shape = errors[0].relative_rmse > balanced && errors[2].relative_rmse > balanced;
    let pass = balanced <= 15.0 && u_shape;
    let shown: Vec<String> = errors
        .iter()
        .zip(["0.25x", "1x", "4x"])
        .map(|(e, m)| format!("{m}: rel RMSE {:.1}% MAE {:.0} s over {} pairs", e.relative_rmse, e.mae, e.pairs))
        .collect();
    report(
        9,
        pass,
        format!("{}; balanced <= 15%: {}; U-shape: {u_shape}", shown.join("; "), balanced <= 15.0),
    );
    assert!(pass);
}

#[test]
fn criterion_10_trends() {
    let fleet = 200;
    let rate = 2.0 * capacity(fleet, false);
    let base = |policy, seed| Scenario {
        span: 3600,
        ..Scenario::hotspot(fleet, rate, policy, seed)
    };
    let revenue_of = |f: &dyn Fn(u64) -> Scenario| mean((0..SEEDS).map(|s| f(s).run().metrics.total_revenue));
    let served_of = |f: &dyn Fn(u64) -> Scenario| mean((0..SEEDS).map(|s| f(s).run().metrics.served as f64));

    let by_fleet: Vec<f64> = [100, 200, 400]
        .iter()
        .map(|&n| revenue_of(&|s| Scenario { n_drivers: n, ..base(Policy::Ls, s) }))
        .collect();
    let by_wait: Vec<f64> = [60, 120, 300]
        .iter()
        .map(|&w| revenue_of(&|s| Scenario { base_wait: w, ..base(Policy::Ls, s) }))
        .collect();
    let by_interval: Vec<f64> = [3, 10, 30]
        .iter()
        .map(|&d| revenue_of(&|s| Scenario { batch_interval: d, ..base(Policy::Ls, s) }))
        .collect();
    let short = served_of(&|s| base(Policy::Short, s));
    let others: Vec<f64> = [Policy::Rand, Policy::Near, Policy::Ltg]
        .iter()
        .map(|&p| served_of(&|s| base(p, s)))
        .collect();

    let nondecreasing = |v: &[f64]| v.windows(2).all(|w| w[1] >= w[0]);
    let fleet_ok = nondecreasing(&by_fleet);
    let wait_ok = nondecreasing(&by_wait);
    let interval_ok = by_interval.windows(2).all(|w| w[1] <= w[0]);
    let short_ok = others.iter().all(|&o| short >= o);
    let pass = fleet_ok && wait_ok && interval_ok && short_ok;
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.0}")).collect::<Vec<_>>().join(" ");
    report(
        10,
        pass,
        format!(
            "n_drivers 100/200/400 [{}] {fleet_ok}; tau 60/120/300 [{}] {wait_ok}; delta 3/10/30 [{}] {interval_ok}; served SHORT {short:.0} vs RAND/NEAR/LTG [{}] {short_ok}",
            fmt(&by_fleet),
            fmt(&by_wait),
            fmt(&by_interval),
            fmt(&others)
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_11_accounting() {
    let mut runs = 0;
    let mut worst: f64 = 0.0;
    let mut conserved = true;
    for policy in Policy::ALL {
        for method in [PredictorMethod::Ha, PredictorMethod::Oracle, PredictorMethod::Lr] {
            if !policy.is_queue_aware() && method != PredictorMethod::Ha {
                continue;
            }
            for seed in 0..2 {
                let s = Scenario {
                    span: 3600,
                    batch_interval: 3 + 7 * seed as i64,
                    ..scarce(policy, method, seed)
                };
                // The checked assertion lives in `Scenario::run`.
                let m = s.run().metrics;
                worst = worst.max(m.accounting_gap());
                conserved &= m.conserves_riders();
                runs += 1;
            }
        }
    }
    let pass = worst <= 1e-6 && conserved;
    report(
        11,
        pass,
        format!("{runs} runs here (all other simulation runs assert the same): max identity gap {worst:.2e} (tol 1e-6); conservation exact: {conserved}"),
    );
    assert!(pass);
}

#[test]
fn criterion_12_batch_runtime() {
    let grid = GridPartition::default();
    let model = TravelModel::default();
    let spec = SyntheticSpec::uniform(grid.n_regions(), 4000.0, 0, 1, 600);
    let mut riders = generate_synthetic(&spec, &grid, &model, 12).unwrap();
    riders.truncate(4000);
    let points: Vec<_> = riders.iter().map(|r| r.source).collect();
    let drivers = init_drivers(&points, 4000, 13, 0);
    let mut walls = Vec::new();
    for policy in [Policy::Irg, Policy::Ls] {
        let cfg = SimConfig {
            n_drivers: 4000,
            policy,
            predictor: Predictor::new(PredictorMethod::Oracle, 15).unwrap(),
            end: 3,
            ..SimConfig::default()
        };
        let workload = Workload {
            riders: riders.clone(),
            drivers: drivers.clone(),
            history: None,
        };
        let out = run_simulation(workload, &cfg).unwrap();
        assert_accounting(&out.metrics);
        walls.push((out.batch_wall[0], out.metrics.served));
    }
    let pass = walls.iter().all(|(w, _)| *w < 2.0);
    report(
        12,
        pass,
        format!(
            "{} riders x 4000 drivers: IRG {:.3} s ({} served), LS {:.3} s ({} served) (< 2 s)",
            riders.len(),
            walls[0].0,
            walls[0].1,
            walls[1].0,
            walls[1].1
        ),
    );
    assert!(pass);
}
