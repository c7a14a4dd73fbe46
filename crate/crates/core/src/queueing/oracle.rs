//! Brute-force stationary distribution of the Erlang-A birth-death chain.
//!
//! The chain is evaluated straight from its product-form balance equations on
//! a truncated state space. Nothing here uses Erlang-B or Palm's series, which
//! makes it an independent check on [`super::steady_state`].

use serde::{Deserialize, Serialize};

use super::SystemParams;
use crate::{Error, Result};

/// Required bound on the probability mass beyond the last retained state.
pub const TAIL_MASS_TOL: f64 = 1e-12;
/// Largest state space the oracle will allocate.
pub const MAX_STATES: usize = 1 << 26;

/// Stationary probabilities `p_0, ..., p_J` of the number of jobs in system.
///
/// `truncation` is the initial number of states; it is doubled until the mass
/// beyond the last state is provably below [`TAIL_MASS_TOL`]. Requires
/// `theta > 0`, since abandonment is what makes the truncation legitimate.
pub fn stationary_dist_oracle(params: &SystemParams, truncation: usize) -> Result<Vec<f64>> {
    params.validate()?;
    if params.theta <= 0.0 {
        return Err(Error::domain("the truncated-chain oracle needs theta > 0"));
    }
    if params.lambda == 0.0 {
        return Ok(vec![1.0]);
    }
    let mut states = truncation.max(params.n + 2).max(2);
    loop {
        let probs = truncated_chain(params, states);
        let last = states - 1;
        if let Some(bound) = tail_bound(params, &probs, last) {
            if bound < TAIL_MASS_TOL {
                return Ok(probs);
            }
        }
        if states >= MAX_STATES {
            return Err(Error::Numerical {
                message: format!("tail mass still above {TAIL_MASS_TOL} with {states} states"),
                partial: probs.iter().sum(),
            });
        }
        states = (states * 2).min(MAX_STATES);
    }
}

fn death_rate(params: &SystemParams, j: usize) -> f64 {
    if j <= params.n {
        j as f64 * params.mu
    } else {
        params.n as f64 * params.mu + (j - params.n) as f64 * params.theta
    }
}

fn truncated_chain(params: &SystemParams, states: usize) -> Vec<f64> {
    let ln_lambda = params.lambda.ln();
    let mut ln_w = Vec::with_capacity(states);
    ln_w.push(0.0);
    for j in 1..states {
        let prev = ln_w[j - 1];
        ln_w.push(prev + ln_lambda - death_rate(params, j).ln());
    }
    let max = ln_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = ln_w.iter().map(|w| (w - max).exp()).collect();
    let total = kahan_sum(probs.iter().copied());
    for p in &mut probs {
        *p /= total;
    }
    probs
}

// Past the point where the birth/death ratio drops below one, the ratio keeps
// shrinking, so the tail is dominated by a geometric series.
fn tail_bound(params: &SystemParams, probs: &[f64], last: usize) -> Option<f64> {
    if last < params.n {
        return None;
    }
    let ratio = params.lambda / death_rate(params, last + 1);
    if ratio >= 1.0 {
        return None;
    }
    Some(probs[last] * ratio / (1.0 - ratio))
}

fn kahan_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Performance measures computed from their definitions on an oracle vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleMetrics {
    pub p0: f64,
    pub pn: f64,
    /// `sum_{j>=n} p_j`, by PASTA.
    pub delay_prob: f64,
    /// `sum_j p_j P_j(Ab)` where `P_j(Ab)` is the abandonment probability of
    /// a job that finds `j` others in the system.
    pub abandon_prob: f64,
    /// `sum_j min(j, n) mu p_j`.
    pub throughput: f64,
    pub mean_in_system: f64,
}

/// Probability that a job finding `found` others ahead of it abandons.
pub fn abandon_prob_given_found(params: &SystemParams, found: usize) -> f64 {
    if found < params.n {
        return 0.0;
    }
    let position = (found + 1 - params.n) as f64;
    let impatience = position * params.theta;
    impatience / (params.n as f64 * params.mu + impatience)
}

pub fn oracle_metrics(params: &SystemParams, probs: &[f64]) -> OracleMetrics {
    let n = params.n;
    let at = |j: usize| probs.get(j).copied().unwrap_or(0.0);
    OracleMetrics {
        p0: at(0),
        pn: at(n),
        delay_prob: kahan_sum(probs.iter().skip(n).copied()),
        abandon_prob: kahan_sum(probs.iter().enumerate().map(|(j, p)| p * abandon_prob_given_found(params, j))),
        throughput: kahan_sum(probs.iter().enumerate().map(|(j, p)| j.min(n) as f64 * params.mu * p)),
        mean_in_system: kahan_sum(probs.iter().enumerate().map(|(j, p)| j as f64 * p)),
    }
}
