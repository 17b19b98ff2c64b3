//! Double-sided birth–death queue of one region.
//!
//! State `n > 0` counts waiting riders, state `n < 0` counts congested idle
//! drivers. Riders arrive at rate `lambda` (birth), rejoining drivers at rate
//! `mu` (death); in rider states the death rate is raised by the reneging
//! hazard `pi(n) = exp(beta * n / mu)`. The steady-state probabilities follow
//! from flow balance `mu_n * p_n = lambda * p_{n-1}`, and the expected idle
//! time of a newly rejoined driver is the mean wait until the `(|n| + 1)`-th
//! rider arrival, averaged over the states a driver sees on arrival.
//!
//! Three regimes have separate closed forms:
//!
//! * `lambda > mu`: the driver side is an unbounded geometric chain, the cap
//!   `K` plays no role.
//! * `lambda < mu`: the driver side is capped at `K` congested drivers.
//! * `lambda == mu` (within [`BALANCE_TOLERANCE`]): the capped chain with a
//!   flat driver side.
//!
//! All functions are unit-agnostic: rates and `beta` share one time unit and
//! idle times come back in that unit. Note that `pi(n)` is itself a rate, so
//! the unit changes the model, not just the scale of the answer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use thiserror::Error;

/// The rider-side series stops once the next product term falls below this.
pub const SERIES_TOLERANCE: f64 = 1e-12;
/// Hard cap on rider-side series terms.
pub const MAX_SERIES_TERMS: usize = 10_000;
/// `|lambda - mu| <= BALANCE_TOLERANCE * max(lambda, mu)` selects the balanced branch.
pub const BALANCE_TOLERANCE: f64 = 1e-9;

// Below this distance from 1 the driver-heavy closed forms lose digits to
// cancellation and the equivalent finite sums are used instead.
const NEAR_UNIT_RATIO: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QueueError {
    #[error("invalid queue parameter: {0}")]
    InvalidParameter(String),
    #[error("rider and driver rates are both zero")]
    BothRatesZero,
    #[error("rider arrival rate is zero; the idle time is unbounded")]
    NoRiderArrivals,
    #[error("reneging hazard is undefined for mu = 0 with beta > 0")]
    UndefinedReneging,
    #[error("reneging is only defined for rider states n >= 1, got {0}")]
    NotARiderState(i64),
    #[error("state {n} lies below the driver-side cap (minimum {min})")]
    StateOutOfRange { n: i64, min: i64 },
    #[error("rider-side series did not converge after {terms} terms (last term {last_term:e})")]
    NonConvergent { terms: usize, last_term: f64 },
}

/// Inputs of one region's queue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueueParams {
    /// Rider arrival rate.
    pub lambda: f64,
    /// Rejoining-driver arrival rate.
    pub mu: f64,
    /// Reneging coefficient.
    pub beta: f64,
    /// Maximum number of congested drivers in the capped regimes.
    pub cap: u32,
    /// Length of the scheduling window the rates describe.
    pub window: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// `lambda > mu`.
    RiderHeavy,
    /// `lambda < mu`.
    DriverHeavy,
    /// `lambda == mu` within tolerance.
    Balanced,
}

impl QueueParams {
    pub fn new(lambda: f64, mu: f64, beta: f64, cap: u32, window: f64) -> Result<Self, QueueError> {
        let check = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(QueueError::InvalidParameter(format!("{name} must be finite and >= 0, got {v}")))
            }
        };
        check("lambda", lambda)?;
        check("mu", mu)?;
        check("beta", beta)?;
        if !(window.is_finite() && window > 0.0) {
            return Err(QueueError::InvalidParameter(format!("window must be > 0, got {window}")));
        }
        Ok(Self {
            lambda,
            mu,
            beta,
            cap,
            window,
        })
    }

    pub fn regime(&self) -> Regime {
        let scale = self.lambda.max(self.mu);
        if (self.lambda - self.mu).abs() <= BALANCE_TOLERANCE * scale {
            Regime::Balanced
        } else if self.lambda > self.mu {
            Regime::RiderHeavy
        } else {
            Regime::DriverHeavy
        }
    }

    fn require_rates(&self) -> Result<(), QueueError> {
        match (self.lambda > 0.0, self.mu > 0.0) {
            (false, false) => Err(QueueError::BothRatesZero),
            (false, true) => Err(QueueError::NoRiderArrivals),
            _ => Ok(()),
        }
    }

    /// `theta = mu / lambda`.
    fn theta(&self) -> f64 {
        self.mu / self.lambda
    }
}

/// Reneging hazard `pi(n) = exp(beta * n / mu)` of rider state `n >= 1`.
pub fn reneging_rate(n: i64, beta: f64, mu: f64) -> Result<f64, QueueError> {
    if n < 1 {
        return Err(QueueError::NotARiderState(n));
    }
    if beta == 0.0 {
        return Ok(1.0);
    }
    if mu <= 0.0 {
        return Err(QueueError::UndefinedReneging);
    }
    Ok((beta * n as f64 / mu).exp())
}

/// Death rate `mu + pi(n)` of rider state `n >= 1`.
///
/// For `mu = 0` the hazard is taken in the limit `mu -> 0+`: infinite when
/// `beta > 0`, so the rider side is never occupied.
fn rider_state_service(n: i64, beta: f64, mu: f64) -> f64 {
    match reneging_rate(n, beta, mu) {
        Ok(pi) => mu + pi,
        Err(_) => f64::INFINITY,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailSum {
    pub sum: f64,
    /// Number of product terms included.
    pub terms: usize,
}

/// `sum_{n>=1} prod_{i=1..n} lambda / (mu + pi(i))`, truncated once the next
/// term drops below `eps`.
pub fn tail_sum(lambda: f64, mu: f64, beta: f64, eps: f64) -> Result<TailSum, QueueError> {
    let mut sum = 0.0;
    let mut term = 1.0;
    for n in 1..=MAX_SERIES_TERMS as i64 {
        term *= lambda / rider_state_service(n, beta, mu);
        if !term.is_finite() {
            return Err(QueueError::NonConvergent {
                terms: n as usize - 1,
                last_term: term,
            });
        }
        if term < eps {
            return Ok(TailSum {
                sum,
                terms: n as usize - 1,
            });
        }
        sum += term;
    }
    Err(QueueError::NonConvergent {
        terms: MAX_SERIES_TERMS,
        last_term: term,
    })
}

fn rider_tail(params: &QueueParams) -> Result<TailSum, QueueError> {
    tail_sum(params.lambda, params.mu, params.beta, SERIES_TOLERANCE)
}

/// `sum_{i=0..=k} theta^i`, summed directly.
fn geometric_sum(theta: f64, k: u32) -> f64 {
    let mut acc = 0.0;
    let mut pow = 1.0;
    for _ in 0..=k {
        acc += pow;
        pow *= theta;
    }
    acc
}

/// `sum_{i=0..=k} (i + 1) theta^i`, summed directly.
fn weighted_geometric_sum(theta: f64, k: u32) -> f64 {
    let mut acc = 0.0;
    let mut pow = 1.0;
    for i in 0..=k {
        acc += (i as f64 + 1.0) * pow;
        pow *= theta;
    }
    acc
}

/// Driver-side block `(theta^{K+1} - 1) / (theta - 1)`.
fn driver_block(params: &QueueParams) -> f64 {
    let theta_minus_one = (params.mu - params.lambda) / params.lambda;
    let k1 = params.cap as f64 + 1.0;
    if theta_minus_one.abs() < NEAR_UNIT_RATIO {
        return geometric_sum(1.0 + theta_minus_one, params.cap);
    }
    (k1 * theta_minus_one.ln_1p()).exp_m1() / theta_minus_one
}

/// Probability of the empty state `n = 0`.
pub fn p_zero(params: &QueueParams) -> Result<f64, QueueError> {
    params.require_rates()?;
    let tail = rider_tail(params)?.sum;
    let denom = match params.regime() {
        Regime::RiderHeavy => params.lambda / (params.lambda - params.mu) + tail,
        Regime::DriverHeavy => driver_block(params) + tail,
        Regime::Balanced => params.cap as f64 + 1.0 + tail,
    };
    Ok(1.0 / denom)
}

/// Steady-state probability of state `n`.
pub fn state_probability(n: i64, params: &QueueParams) -> Result<f64, QueueError> {
    let p0 = p_zero(params)?;
    if n == 0 {
        return Ok(p0);
    }
    if n < 0 {
        let min = -(params.cap as i64);
        if params.regime() != Regime::RiderHeavy && n < min {
            return Err(QueueError::StateOutOfRange { n, min });
        }
        return Ok(p0 * params.theta().powi((-n) as i32));
    }
    let mut p = p0;
    for i in 1..=n {
        p *= params.lambda / rider_state_service(i, params.beta, params.mu);
    }
    Ok(p)
}

/// Expected idle time of a rejoining driver, or the unbounded sentinel when
/// no riders arrive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ExpectedIdle {
    Finite(f64),
    Unbounded,
}

impl ExpectedIdle {
    pub fn finite(self) -> Option<f64> {
        match self {
            ExpectedIdle::Finite(v) => Some(v),
            ExpectedIdle::Unbounded => None,
        }
    }

    pub fn scaled(self, factor: f64) -> Self {
        match self {
            ExpectedIdle::Finite(v) => ExpectedIdle::Finite(v * factor),
            ExpectedIdle::Unbounded => ExpectedIdle::Unbounded,
        }
    }
}

/// Capped-chain idle time `S1 / (lambda * (S0 + tail))` with both driver-side
/// sums scaled by `theta^-K` so large `theta^K` does not overflow.
fn scaled_capped_idle(params: &QueueParams, tail: f64) -> f64 {
    let theta = params.theta();
    let k = params.cap;
    if theta <= 1.0 {
        let s0 = geometric_sum(theta, k);
        let s1 = weighted_geometric_sum(theta, k);
        return s1 / (params.lambda * (s0 + tail));
    }
    let inv = 1.0 / theta;
    let mut s0 = 0.0;
    let mut s1 = 0.0;
    let mut pow = 1.0;
    for j in 0..=k {
        s0 += pow;
        s1 += (k - j) as f64 * pow + pow;
        pow *= inv;
    }
    let tail_scaled = tail * inv.powi(k as i32);
    s1 / (params.lambda * (s0 + tail_scaled))
}

/// Expected idle time of a driver joining the region's queue.
pub fn expected_idle_time(params: &QueueParams) -> Result<ExpectedIdle, QueueError> {
    match params.require_rates() {
        Err(QueueError::NoRiderArrivals) => return Ok(ExpectedIdle::Unbounded),
        Err(e) => return Err(e),
        Ok(()) => {}
    }
    let lambda = params.lambda;
    let k = params.cap as f64;
    let tail = rider_tail(params)?.sum;
    let et = match params.regime() {
        Regime::RiderHeavy => {
            let p0 = 1.0 / (lambda / (lambda - params.mu) + tail);
            lambda * p0 / (lambda - params.mu).powi(2)
        }
        Regime::Balanced => {
            let p0 = 1.0 / (k + 1.0 + tail);
            p0 * (k + 1.0) * (k + 2.0) / (2.0 * lambda)
        }
        Regime::DriverHeavy => {
            let theta = params.theta();
            let p0 = 1.0 / (driver_block(params) + tail);
            let closed = if (theta - 1.0).abs() < NEAR_UNIT_RATIO {
                f64::NAN
            } else {
                let numer = (k + 1.0) * theta.powf(k + 2.0) - (k + 2.0) * theta.powf(k + 1.0) + 1.0;
                (p0 / lambda) * numer / (theta - 1.0).powi(2)
            };
            if closed.is_finite() {
                closed
            } else {
                scaled_capped_idle(params, tail)
            }
        }
    };
    Ok(ExpectedIdle::Finite(et))
}

/// Expected idle time on the capped chain (`-K..`) for any regime.
///
/// Coincides with [`expected_idle_time`] when `lambda <= mu`; for
/// `lambda > mu` it replaces the unbounded driver side with the cap, which
/// makes the idle time continuous across the balanced seam.
pub fn capped_expected_idle_time(params: &QueueParams) -> Result<ExpectedIdle, QueueError> {
    match params.require_rates() {
        Err(QueueError::NoRiderArrivals) => return Ok(ExpectedIdle::Unbounded),
        Err(e) => return Err(e),
        Ok(()) => {}
    }
    let tail = rider_tail(params)?.sum;
    Ok(ExpectedIdle::Finite(scaled_capped_idle(params, tail)))
}

/// Materialized steady-state distribution over `[min_state, n_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDistribution {
    pub min_state: i64,
    pub probs: Vec<f64>,
    /// Probability mass of states outside the materialized range.
    pub residual: f64,
    params: QueueParams,
}

// Depth at which an unbounded geometric driver side is cut when materialized.
const MAX_MATERIALIZED_DEPTH: usize = 200_000;

impl ChainDistribution {
    pub fn materialize(params: &QueueParams) -> Result<Self, QueueError> {
        let p0 = p_zero(params)?;
        let theta = params.theta();
        let (depth, residual) = match params.regime() {
            Regime::RiderHeavy => {
                // Cut once the geometric mass left is negligible.
                let mut depth = 0usize;
                let mut pow = 1.0;
                while depth < MAX_MATERIALIZED_DEPTH && p0 * pow * theta > 1e-18 {
                    pow *= theta;
                    depth += 1;
                }
                let residual = p0 * pow * theta / (1.0 - theta);
                (depth, residual)
            }
            _ => (params.cap as usize, 0.0),
        };
        let mut neg = Vec::with_capacity(depth);
        let mut p = p0;
        for _ in 0..depth {
            p *= theta;
            neg.push(p);
        }
        neg.reverse();
        let mut probs = neg;
        probs.push(p0);
        let terms = rider_tail(params)?.terms;
        let mut p = p0;
        for n in 1..=terms as i64 {
            p *= params.lambda / rider_state_service(n, params.beta, params.mu);
            probs.push(p);
        }
        Ok(Self {
            min_state: -(depth as i64),
            probs,
            residual,
            params: *params,
        })
    }

    pub fn max_state(&self) -> i64 {
        self.min_state + self.probs.len() as i64 - 1
    }

    pub fn get(&self, n: i64) -> Option<f64> {
        if n < self.min_state {
            return None;
        }
        self.probs.get((n - self.min_state) as usize).copied()
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum::<f64>() + self.residual
    }

    /// Death rate out of state `n`.
    pub fn death_rate(&self, n: i64) -> f64 {
        if n <= 0 {
            self.params.mu
        } else {
            rider_state_service(n, self.params.beta, self.params.mu)
        }
    }

    /// Largest `|mu_n p_n - lambda p_{n-1}|` over adjacent materialized states.
    pub fn max_flow_imbalance(&self) -> f64 {
        (self.min_state + 1..=self.max_state())
            .map(|n| {
                let down = self.death_rate(n) * self.get(n).unwrap_or(0.0);
                let up = self.params.lambda * self.get(n - 1).unwrap_or(0.0);
                (down - up).abs()
            })
            .fold(0.0, f64::max)
    }

    /// `sum (|n| + 1) / lambda * p_n` over materialized non-positive states.
    pub fn mean_driver_wait(&self) -> f64 {
        (self.min_state..=0)
            .map(|n| (n.unsigned_abs() as f64 + 1.0) / self.params.lambda * self.get(n).unwrap_or(0.0))
            .sum()
    }
}

/// Outcome of [`simulate_queue`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueueSimulation {
    /// Mean idle time over drivers whose wait ended within the horizon.
    pub mean_wait: f64,
    /// Batch-means standard error of `mean_wait`.
    pub std_error: f64,
    pub drivers: u64,
    /// Drivers that arrived to a full driver queue.
    pub blocked: u64,
    pub riders: u64,
    pub reneged: u64,
}

const SIM_BATCHES: usize = 50;

/// Event-driven Monte Carlo of one region's queue.
///
/// Riders and drivers arrive as independent Poisson streams and are matched
/// first-come first-served. In rider state `n > 0` one waiting rider reneges
/// with hazard `pi(n)`. In the capped regimes at most `K` drivers wait; a
/// driver arriving to a full queue leaves the chain untouched and is charged
/// its virtual wait, the time until `K + 1` further riders arrive.
pub fn simulate_queue(params: &QueueParams, horizon: f64, seed: u64) -> Result<QueueSimulation, QueueError> {
    if !(params.lambda > 0.0 && params.mu > 0.0) {
        return Err(QueueError::InvalidParameter(
            "simulation needs lambda > 0 and mu > 0".into(),
        ));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(QueueError::InvalidParameter(format!("horizon must be > 0, got {horizon}")));
    }
    let cap = match params.regime() {
        Regime::RiderHeavy => None,
        _ => Some(params.cap as i64),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = 0.0;
    let mut state: i64 = 0;
    let mut queue: VecDeque<f64> = VecDeque::new();
    // (arrival time, rider count at which the virtual wait ends)
    let mut virtual_waits: VecDeque<(f64, u64)> = VecDeque::new();
    let mut sums = [0.0f64; SIM_BATCHES];
    let mut counts = [0u64; SIM_BATCHES];
    let mut out = QueueSimulation {
        mean_wait: 0.0,
        std_error: 0.0,
        drivers: 0,
        blocked: 0,
        riders: 0,
        reneged: 0,
    };
    let mut record = |arrived: f64, now: f64| {
        let b = ((arrived / horizon) * SIM_BATCHES as f64) as usize;
        let b = b.min(SIM_BATCHES - 1);
        sums[b] += now - arrived;
        counts[b] += 1;
    };

    loop {
        let renege = if state > 0 {
            rider_state_service(state, params.beta, params.mu) - params.mu
        } else {
            0.0
        };
        let total = params.lambda + params.mu + renege;
        let dt: f64 = rng.sample::<f64, _>(Exp1) / total;
        t += dt;
        if t > horizon {
            break;
        }
        let u = rng.random::<f64>() * total;
        if u < params.lambda {
            out.riders += 1;
            while let Some(&(arrived, target)) = virtual_waits.front() {
                if target > out.riders {
                    break;
                }
                record(arrived, t);
                virtual_waits.pop_front();
            }
            if state < 0 {
                let arrived = queue.pop_front().expect("driver queue tracks negative states");
                record(arrived, t);
            }
            state += 1;
        } else if u < params.lambda + params.mu {
            out.drivers += 1;
            if state > 0 {
                record(t, t);
                state -= 1;
            } else if cap.is_some_and(|k| state <= -k) {
                out.blocked += 1;
                let k = cap.unwrap_or(0) as u64;
                virtual_waits.push_back((t, out.riders + k + 1));
            } else {
                queue.push_back(t);
                state -= 1;
            }
        } else {
            out.reneged += 1;
            state -= 1;
        }
    }

    let n: u64 = counts.iter().sum();
    if n == 0 {
        return Ok(out);
    }
    out.mean_wait = sums.iter().sum::<f64>() / n as f64;
    let means: Vec<f64> = sums
        .iter()
        .zip(counts.iter())
        .filter(|(_, &c)| c > 0)
        .map(|(s, &c)| s / c as f64)
        .collect();
    if means.len() > 1 {
        let m = means.iter().sum::<f64>() / means.len() as f64;
        let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (means.len() - 1) as f64;
        out.std_error = (var / means.len() as f64).sqrt();
    }
    Ok(out)
}
