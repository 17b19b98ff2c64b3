//! Poisson goodness-of-fit and idle-time accuracy metrics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MIN_GOF_SAMPLES: usize = 30;
/// Smallest expected frequency of a merged interval.
pub const MIN_EXPECTED: f64 = 5.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("need at least {need} samples, got {got}")]
    InsufficientSamples { need: usize, got: usize },
    #[error("only {0} interval(s) remain after merging; the test needs at least 2")]
    TooFewIntervals(usize),
    #[error("interval {0} has zero expected probability")]
    ZeroProbability(usize),
    #[error("observed and probability vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("no tabulated chi-square critical value for df = {df} at level {level}")]
    UnsupportedCritical { df: usize, level: f64 },
    #[error("accuracy needs at least one (predicted, realized) pair")]
    EmptyInput,
}

/// Upper critical values for df = 1..=30.
const CHI2_05: [f64; 30] = [
    3.841, 5.991, 7.815, 9.488, 11.070, 12.592, 14.067, 15.507, 16.919, 18.307, 19.675, 21.026, 22.362, 23.685, 24.996,
    26.296, 27.587, 28.869, 30.144, 31.410, 32.671, 33.924, 35.172, 36.415, 37.652, 38.885, 40.113, 41.337, 42.557,
    43.773,
];
const CHI2_01: [f64; 30] = [
    6.635, 9.210, 11.345, 13.277, 15.086, 16.812, 18.475, 20.090, 21.666, 23.209, 24.725, 26.217, 27.688, 29.141, 30.578,
    32.000, 33.409, 34.805, 36.191, 37.566, 38.932, 40.289, 41.638, 42.980, 44.314, 45.642, 46.963, 48.278, 49.588,
    50.892,
];

/// Tabulated `chi^2_df(level)` for `level` 0.05 or 0.01.
pub fn chi_square_critical(df: usize, level: f64) -> Result<f64, StatsError> {
    let table = if level == 0.05 {
        &CHI2_05
    } else if level == 0.01 {
        &CHI2_01
    } else {
        return Err(StatsError::UnsupportedCritical { df, level });
    };
    if !(1..=30).contains(&df) {
        return Err(StatsError::UnsupportedCritical { df, level });
    }
    Ok(table[df - 1])
}

/// `sum (obs_i - n p_i)^2 / (n p_i)`.
pub fn chi_square_statistic(observed: &[u64], probs: &[f64], n: u64) -> Result<f64, StatsError> {
    if observed.len() != probs.len() {
        return Err(StatsError::LengthMismatch(observed.len(), probs.len()));
    }
    let n = n as f64;
    let mut k = 0.0;
    for (i, (&o, &p)) in observed.iter().zip(probs).enumerate() {
        if p <= 0.0 {
            return Err(StatsError::ZeroProbability(i));
        }
        let e = n * p;
        k += (o as f64 - e).powi(2) / e;
    }
    Ok(k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GofResult {
    pub k: f64,
    pub df: usize,
    pub critical: f64,
    pub rejected: bool,
}

impl GofResult {
    /// Applies the decision `k > critical` with `df = r - 1` for `r` intervals.
    pub fn decide(k: f64, intervals: usize, level: f64) -> Result<Self, StatsError> {
        let df = intervals.saturating_sub(1);
        let critical = chi_square_critical(df, level)?;
        Ok(Self {
            k,
            df,
            critical,
            rejected: k > critical,
        })
    }
}

/// Count intervals `[lo, hi]` (inclusive, `hi = None` for the open tail) with
/// their probabilities and observed counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: u64,
    pub hi: Option<u64>,
    pub prob: f64,
    pub observed: u64,
}

/// Singleton Poisson(`rate`) bins over `0..=max`, the last one open-ended,
/// merged left to right until each expected frequency reaches [`MIN_EXPECTED`].
pub fn poisson_intervals(samples: &[u64], rate: f64) -> Vec<Interval> {
    let n = samples.len() as f64;
    let max = samples.iter().copied().max().unwrap_or(0);
    let mut hist = vec![0u64; max as usize + 1];
    for &s in samples {
        hist[s as usize] += 1;
    }
    let mut pmf = (-rate).exp();
    let mut cdf = 0.0;
    let mut singles = Vec::with_capacity(hist.len());
    for (x, &obs) in hist.iter().enumerate() {
        let last = x == hist.len() - 1;
        let prob = if last { 1.0 - cdf } else { pmf };
        cdf += pmf;
        pmf *= rate / (x as f64 + 1.0);
        singles.push(Interval {
            lo: x as u64,
            hi: if last { None } else { Some(x as u64) },
            prob,
            observed: obs,
        });
    }
    let mut merged: Vec<Interval> = Vec::new();
    let mut open: Option<Interval> = None;
    for s in singles {
        let cur = match open.take() {
            None => s,
            Some(mut acc) => {
                acc.hi = s.hi;
                acc.prob += s.prob;
                acc.observed += s.observed;
                acc
            }
        };
        if n * cur.prob >= MIN_EXPECTED {
            merged.push(cur);
        } else {
            open = Some(cur);
        }
    }
    if let Some(rest) = open {
        match merged.last_mut() {
            Some(last) => {
                last.hi = rest.hi;
                last.prob += rest.prob;
                last.observed += rest.observed;
            }
            None => merged.push(rest),
        }
    }
    merged
}

/// Tests `samples ~ Poisson(mean)` with the rate estimated by the sample mean.
pub fn poisson_gof(samples: &[u64], level: f64) -> Result<GofResult, StatsError> {
    if samples.len() < MIN_GOF_SAMPLES {
        return Err(StatsError::InsufficientSamples {
            need: MIN_GOF_SAMPLES,
            got: samples.len(),
        });
    }
    let rate = samples.iter().sum::<u64>() as f64 / samples.len() as f64;
    let intervals = poisson_intervals(samples, rate);
    if intervals.len() < 2 {
        return Err(StatsError::TooFewIntervals(intervals.len()));
    }
    let observed: Vec<u64> = intervals.iter().map(|i| i.observed).collect();
    let probs: Vec<f64> = intervals.iter().map(|i| i.prob).collect();
    let k = chi_square_statistic(&observed, &probs, samples.len() as u64)?;
    GofResult::decide(k, intervals.len(), level)
}

/// Number of event times in each `width`-long interval of `[start, end)`.
pub fn counts_per_interval(times: &[i64], start: i64, end: i64, width: i64) -> Vec<u64> {
    let n = ((end - start) / width).max(0) as usize;
    let mut out = vec![0u64; n];
    for &t in times {
        if t >= start && t < start + n as i64 * width {
            out[((t - start) / width) as usize] += 1;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    /// Seconds.
    pub mae: f64,
    /// Percent, over pairs with a positive realized idle time.
    pub relative_rmse: f64,
    /// Seconds.
    pub real_rmse: f64,
    pub pairs: usize,
    pub relative_pairs: usize,
}

/// Error metrics of `(predicted, realized)` idle-time pairs.
pub fn idle_accuracy(pairs: &[(f64, f64)]) -> Result<AccuracyReport, StatsError> {
    if pairs.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let n = pairs.len() as f64;
    let mae = pairs.iter().map(|(p, r)| (p - r).abs()).sum::<f64>() / n;
    let real_rmse = (pairs.iter().map(|(p, r)| (p - r).powi(2)).sum::<f64>() / n).sqrt();
    let rel: Vec<f64> = pairs
        .iter()
        .filter(|(_, r)| *r > 0.0)
        .map(|(p, r)| ((p - r) / r).powi(2))
        .collect();
    let relative_rmse = if rel.is_empty() {
        0.0
    } else {
        (rel.iter().sum::<f64>() / rel.len() as f64).sqrt() * 100.0
    };
    Ok(AccuracyReport {
        mae,
        relative_rmse,
        real_rmse,
        pairs: pairs.len(),
        relative_pairs: rel.len(),
    })
}
