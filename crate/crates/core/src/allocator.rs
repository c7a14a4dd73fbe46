//! Choosing how many servers to run.
//!
//! Revenue as a function of the number of running servers is unimodal, which
//! lets [`optimize_allocation`] locate the best allocation with a binary search
//! over the expected revenue change, in `O(log S)` evaluations of `r(n)`.
//! [`exhaustive_optimal`] scans every allocation and serves as the reference.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::economics::{revenue_rate, switch_cost, EconomicModel, ReconfigCost};
use crate::queueing::Traffic;
use crate::{Error, Result};

/// Outcome of one allocation decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllocationDecision {
    /// Servers to run from now on.
    pub n_new: usize,
    /// Expected revenue change `Δr(n', n)` of the best candidate ($/s).
    pub predicted_delta: f64,
    pub changed: bool,
    /// Distinct evaluations of `r(n)` performed.
    pub evaluations: usize,
}

/// Tuning knobs for [`optimize_allocation_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchOptions {
    /// Stop climbing once the gain from one more server is below this ($/s).
    pub epsilon: f64,
    /// Servers are switched in multiples of this many (threads per machine).
    pub granularity: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions { epsilon: 0.0, granularity: 1 }
    }
}

/// Upper bound on [`AllocationDecision::evaluations`] for a farm of
/// `capacity` servers.
pub fn evaluation_budget(capacity: usize) -> usize {
    let bits = (usize::BITS - capacity.leading_zeros()) as usize; // ceil(log2(S + 1))
    3 * (bits + 2)
}

struct RevenueProbe<'a> {
    traffic: &'a Traffic,
    econ: &'a EconomicModel,
    cfg: &'a ReconfigCost,
    n_current: usize,
    granularity: usize,
    units: usize,
    cache: HashMap<usize, f64>,
}

impl RevenueProbe<'_> {
    fn revenue(&mut self, n: usize) -> Result<f64> {
        if let Some(r) = self.cache.get(&n) {
            return Ok(*r);
        }
        let r = revenue_rate(&self.traffic.with_servers(n), self.econ)?;
        self.cache.insert(n, r);
        Ok(r)
    }

    /// `Δr` of moving to `unit` granules of servers; `-inf` beyond capacity.
    fn delta(&mut self, unit: i64) -> Result<f64> {
        if unit < 0 || unit as usize > self.units {
            return Ok(f64::NEG_INFINITY);
        }
        let n = unit as usize * self.granularity;
        let gain = self.revenue(n)? - self.revenue(self.n_current)?;
        Ok(gain - switch_cost(n as i64 - self.n_current as i64, self.cfg, self.econ))
    }
}

/// Binary-search allocation with default [`SearchOptions`].
pub fn optimize_allocation(
    n_current: usize,
    capacity: usize,
    traffic: &Traffic,
    econ: &EconomicModel,
    cfg: &ReconfigCost,
) -> Result<AllocationDecision> {
    optimize_allocation_with(n_current, capacity, traffic, econ, cfg, SearchOptions::default())
}

/// Binary search over `Δr(n', n_current)` for the best number of servers.
///
/// The search starts from the offered load `ceil(lambda / mu)`, compares the
/// expected change at `n' - 1`, `n'` and `n' + 1`, and halves the interval
/// towards the rising side until it finds a local maximum. The candidate is
/// adopted only when it is expected to increase revenue.
pub fn optimize_allocation_with(
    n_current: usize,
    capacity: usize,
    traffic: &Traffic,
    econ: &EconomicModel,
    cfg: &ReconfigCost,
    opts: SearchOptions,
) -> Result<AllocationDecision> {
    traffic.validate()?;
    econ.validate()?;
    cfg.validate()?;
    if capacity == 0 {
        return Err(Error::domain("capacity must be at least one server"));
    }
    if n_current > capacity {
        return Err(Error::domain(format!("current allocation {n_current} exceeds capacity {capacity}")));
    }
    if opts.granularity == 0 {
        return Err(Error::domain("granularity must be >= 1"));
    }
    let units = capacity / opts.granularity;
    let mut probe = RevenueProbe { traffic, econ, cfg, n_current, granularity: opts.granularity, units, cache: HashMap::new() };

    let best_unit = if units <= 1 {
        // No interior point to centre the probes on.
        if units == 0 || probe.delta(0)? >= probe.delta(1)? {
            0
        } else {
            1
        }
    } else {
        let u = units as i64;
        let seed_servers = (traffic.lambda / traffic.mu).ceil();
        let mut candidate = ((seed_servers / opts.granularity as f64).ceil() as i64).clamp(1, u - 1);
        let (mut lower, mut upper) = (0i64, u);
        while lower < upper {
            let below = probe.delta(candidate - 1)?;
            let here = probe.delta(candidate)?;
            let above = probe.delta(candidate + 1)?;
            if below <= here && here >= above {
                break;
            }
            if below <= here && here <= above {
                if above - here < opts.epsilon {
                    break;
                }
                lower = candidate + 1;
            } else {
                upper = candidate - 1;
            }
            // ceil(lower + (upper - lower) / 2); upper may fall below lower
            // when the left end is reached.
            candidate = lower + (upper - lower + 1).div_euclid(2);
            candidate = candidate.clamp(0, u);
        }
        candidate as usize
    };

    let predicted_delta = probe.delta(best_unit as i64)?;
    let n_candidate = best_unit * opts.granularity;
    let changed = predicted_delta > 0.0 && n_candidate != n_current;
    Ok(AllocationDecision {
        n_new: if changed { n_candidate } else { n_current },
        predicted_delta,
        changed,
        evaluations: probe.cache.len(),
    })
}

/// Evaluates `r(n)` for every `n` in `0..=capacity` and returns the argmax
/// (smallest on ties) together with its revenue rate.
pub fn exhaustive_optimal(capacity: usize, traffic: &Traffic, econ: &EconomicModel) -> Result<(usize, f64)> {
    let curve = revenue_curve(capacity, traffic, econ)?;
    let mut best = (0usize, curve[0]);
    for (n, &r) in curve.iter().enumerate().skip(1) {
        if r > best.1 {
            best = (n, r);
        }
    }
    Ok(best)
}

/// `r(n)` for `n` in `0..=capacity`.
pub fn revenue_curve(capacity: usize, traffic: &Traffic, econ: &EconomicModel) -> Result<Vec<f64>> {
    (0..=capacity).map(|n| revenue_rate(&traffic.with_servers(n), econ)).collect()
}

/// Number of strict local maxima of `values` once runs of equal values are
/// collapsed into a single point.
pub fn count_local_maxima(values: &[f64]) -> usize {
    let mut collapsed: Vec<f64> = Vec::with_capacity(values.len());
    for &v in values {
        if collapsed.last() != Some(&v) {
            collapsed.push(v);
        }
    }
    let len = collapsed.len();
    (0..len)
        .filter(|&i| {
            let left = i == 0 || collapsed[i - 1] < collapsed[i];
            let right = i + 1 == len || collapsed[i + 1] < collapsed[i];
            left && right
        })
        .count()
}
