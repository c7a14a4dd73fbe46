//! Steady-state analysis of the M/M/n+M (Erlang-A) queue.
//!
//! Jobs arrive as a Poisson stream with rate `lambda`, are served by `n`
//! identical exponential servers with rate `mu`, and wait in an unbounded FIFO
//! queue where each waiting job abandons independently at rate `theta`.
//!
//! The closed forms are evaluated through the Erlang-B recurrence and Palm's
//! series `g(x, y)`. Everything that can overflow is carried in log space, so
//! heavily overloaded systems (where `g` is astronomically large) are handled
//! without loss of accuracy in the quantities that matter.
//!
//! [`oracle`] evaluates the same model by brute force over a truncated state
//! space and is used to check every closed form.

pub mod oracle;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::{Error, Result};

pub use oracle::{oracle_metrics, stationary_dist_oracle, OracleMetrics};

/// Relative size of a series term below which summation stops.
pub const PALM_REL_TOL: f64 = 1e-13;
/// Hard limit on the number of series terms.
pub const PALM_MAX_TERMS: usize = 1_000_000;

// Peaks further out than this are located with ln_gamma instead of walking the
// recurrence up from j = 0.
const DIRECT_PEAK_LIMIT: f64 = 10_000.0;
const RESCALE_ABOVE: f64 = 1e250;

/// Arrival, service and abandonment rates of a single service subsystem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Traffic {
    /// Arrival rate (jobs/s).
    pub lambda: f64,
    /// Service rate of one server (jobs/s).
    pub mu: f64,
    /// Abandonment rate of a waiting job (1/s). Zero means infinite patience.
    pub theta: f64,
}

impl Traffic {
    pub fn new(lambda: f64, mu: f64, theta: f64) -> Result<Self> {
        let t = Traffic { lambda, mu, theta };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::domain(format!("arrival rate must be finite and >= 0, got {}", self.lambda)));
        }
        if !(self.mu.is_finite() && self.mu > 0.0) {
            return Err(Error::domain(format!("service rate must be finite and > 0, got {}", self.mu)));
        }
        if !(self.theta.is_finite() && self.theta >= 0.0) {
            return Err(Error::domain(format!("abandonment rate must be finite and >= 0, got {}", self.theta)));
        }
        Ok(())
    }

    /// Offered load in server equivalents, `lambda / mu`.
    pub fn offered_load(&self) -> f64 {
        self.lambda / self.mu
    }

    pub fn with_servers(&self, n: usize) -> SystemParams {
        SystemParams { lambda: self.lambda, mu: self.mu, theta: self.theta, n }
    }
}

/// The queueing tuple every analytic formula consumes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub lambda: f64,
    pub mu: f64,
    pub theta: f64,
    /// Number of running servers.
    pub n: usize,
}

impl SystemParams {
    pub fn new(lambda: f64, mu: f64, theta: f64, n: usize) -> Result<Self> {
        let p = SystemParams { lambda, mu, theta, n };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.traffic().validate()
    }

    pub fn traffic(&self) -> Traffic {
        Traffic { lambda: self.lambda, mu: self.mu, theta: self.theta }
    }

    pub fn offered_load(&self) -> f64 {
        self.lambda / self.mu
    }
}

/// Stationary performance measures of an Erlang-A system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    /// Probability that the system is empty.
    pub p0: f64,
    /// Probability that all servers are busy and nobody waits.
    pub pn: f64,
    /// P(W > 0): an arrival has to wait.
    pub delay_prob: f64,
    /// P(Ab | W > 0).
    pub cond_abandon: f64,
    /// P(Ab) = P(W > 0) P(Ab | W > 0).
    pub abandon_prob: f64,
    /// Completed jobs per second.
    pub throughput: f64,
    /// Expected number of jobs in the system, waiting or in service.
    pub mean_in_system: f64,
}

/// Erlang-B blocking probability `B(n, rho)` via the stable recurrence
/// `B(k) = rho B(k-1) / (k + rho B(k-1))`.
pub fn erlang_b(n: usize, rho: f64) -> Result<f64> {
    if !(rho.is_finite() && rho >= 0.0) {
        return Err(Error::domain(format!("offered load must be finite and >= 0, got {rho}")));
    }
    let mut b = 1.0;
    for k in 1..=n {
        b = rho * b / (k as f64 + rho * b);
    }
    Ok(b)
}

/// Erlang-C delay probability of an M/M/n queue. Returns 1 when `rho >= n`.
pub fn erlang_c(n: usize, rho: f64) -> Result<f64> {
    let b = erlang_b(n, rho)?;
    let nf = n as f64;
    if rho >= nf {
        return Ok(1.0);
    }
    Ok((nf * b / (nf - rho * (1.0 - b))).clamp(0.0, 1.0))
}

/// Palm's series `g(x, y) = 1 + sum_{j>=1} y^j / prod_{k=1..j} (x + k)`.
///
/// Fails with [`Error::Numerical`] if the value overflows `f64`; use
/// [`ln_palm_g`] for very large arguments.
pub fn palm_g(x: f64, y: f64) -> Result<f64> {
    let s = PalmSeries::evaluate(x, y)?;
    let ln = s.ln_value();
    let g = ln.exp();
    if !g.is_finite() {
        return Err(Error::Numerical { message: format!("g({x}, {y}) overflows f64 (ln g = {ln})"), partial: f64::INFINITY });
    }
    Ok(g)
}

/// Natural logarithm of [`palm_g`].
pub fn ln_palm_g(x: f64, y: f64) -> Result<f64> {
    Ok(PalmSeries::evaluate(x, y)?.ln_value())
}

/// Scaled partial sums of Palm's series.
///
/// With `a_j = y^j / prod_{k<=j}(x+k)`, the represented values are
/// `sum_j a_j = e^ln_scale * (head + tail)` where `head` is the `j = 0` term,
/// and `sum_j j a_j = e^ln_scale * first_moment`.
#[derive(Debug, Clone, Copy)]
struct PalmSeries {
    ln_scale: f64,
    head: f64,
    tail: f64,
    first_moment: f64,
}

impl PalmSeries {
    fn evaluate(x: f64, y: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite()) || x < 0.0 || y < 0.0 {
            return Err(Error::domain(format!("palm_g needs finite non-negative arguments, got ({x}, {y})")));
        }
        if y == 0.0 {
            return Ok(PalmSeries { ln_scale: 0.0, head: 1.0, tail: 0.0, first_moment: 0.0 });
        }
        // Terms grow while j <= y - x and shrink afterwards.
        let peak = (y - x).floor().max(0.0);
        if peak <= DIRECT_PEAK_LIMIT {
            Self::from_origin(x, y)
        } else {
            Self::from_peak(x, y, peak)
        }
    }

    fn from_origin(x: f64, y: f64) -> Result<Self> {
        let mut s = PalmSeries { ln_scale: 0.0, head: 1.0, tail: 0.0, first_moment: 0.0 };
        let mut term = 1.0;
        let mut j = 0usize;
        loop {
            j += 1;
            let jf = j as f64;
            term *= y / (x + jf);
            s.tail += term;
            s.first_moment += jf * term;
            if s.tail > RESCALE_ABOVE {
                let f = RESCALE_ABOVE.recip();
                term *= f;
                s.head *= f;
                s.tail *= f;
                s.first_moment *= f;
                s.ln_scale += RESCALE_ABOVE.ln();
            }
            let total = s.head + s.tail;
            if jf > y - x && term < PALM_REL_TOL * total && jf * term < PALM_REL_TOL * s.first_moment {
                return Ok(s);
            }
            if j >= PALM_MAX_TERMS {
                return Err(Error::Numerical {
                    message: format!("g({x}, {y}) did not converge within {PALM_MAX_TERMS} terms"),
                    partial: s.ln_value().exp(),
                });
            }
        }
    }

    fn from_peak(x: f64, y: f64, peak: f64) -> Result<Self> {
        let ln_peak = peak * y.ln() - (ln_gamma(x + peak + 1.0) - ln_gamma(x + 1.0));
        let mut sum = 1.0;
        let mut first_moment = peak;
        let mut head = 0.0;
        let mut terms = 1usize;

        let mut term = 1.0;
        let mut j = peak;
        loop {
            j += 1.0;
            term *= y / (x + j);
            sum += term;
            first_moment += j * term;
            terms += 1;
            if term < PALM_REL_TOL * sum && j * term < PALM_REL_TOL * first_moment {
                break;
            }
            if terms >= PALM_MAX_TERMS {
                return Err(Error::Numerical {
                    message: format!("g({x}, {y}) did not converge within {PALM_MAX_TERMS} terms"),
                    partial: (ln_peak + sum.ln()).exp(),
                });
            }
        }

        term = 1.0;
        j = peak;
        while j > 0.0 {
            term *= (x + j) / y;
            j -= 1.0;
            sum += term;
            first_moment += j * term;
            terms += 1;
            if j == 0.0 {
                head = term;
            }
            if term < PALM_REL_TOL * sum {
                break;
            }
            if terms >= PALM_MAX_TERMS {
                return Err(Error::Numerical {
                    message: format!("g({x}, {y}) did not converge within {PALM_MAX_TERMS} terms"),
                    partial: (ln_peak + sum.ln()).exp(),
                });
            }
        }
        Ok(PalmSeries { ln_scale: ln_peak, head, tail: sum - head, first_moment })
    }

    fn ln_value(&self) -> f64 {
        if self.ln_scale == 0.0 && self.head == 1.0 {
            self.tail.ln_1p()
        } else {
            self.ln_scale + (self.head + self.tail).ln()
        }
    }

    /// `(g - 1) / g`, accurate for `g` close to 1.
    fn excess_ratio(&self) -> f64 {
        -(-self.ln_value()).exp_m1()
    }

    /// `ln sum_{j>=1} j a_j`, or `-inf` when the series is trivial.
    fn ln_first_moment(&self) -> f64 {
        self.ln_scale + self.first_moment.ln()
    }
}

fn ln_factorial(n: usize) -> f64 {
    ln_gamma(n as f64 + 1.0)
}

/// Exact stationary measures of the M/M/n+M queue.
///
/// Special cases:
/// * `n = 0`: nobody is ever served, so every arrival abandons.
/// * `theta = 0`: the Erlang-C limit. With `rho < n` nobody abandons; with
///   `rho >= n` the queue is unstable and the excess `lambda - n mu` is
///   counted as lost.
pub fn steady_state(params: &SystemParams) -> Result<SteadyState> {
    params.validate()?;
    let SystemParams { lambda, mu, theta, n } = *params;
    let nf = n as f64;
    let rho = lambda / mu;

    if n == 0 {
        let p0 = if lambda == 0.0 {
            1.0
        } else if theta > 0.0 {
            (-lambda / theta).exp()
        } else {
            0.0
        };
        let mean_in_system = if lambda == 0.0 {
            0.0
        } else if theta > 0.0 {
            lambda / theta
        } else {
            f64::INFINITY
        };
        return Ok(SteadyState { p0, pn: p0, delay_prob: 1.0, cond_abandon: 1.0, abandon_prob: 1.0, throughput: 0.0, mean_in_system });
    }

    if lambda == 0.0 {
        let cond_abandon = if theta > 0.0 { theta / (nf * mu + theta) } else { 0.0 };
        return Ok(SteadyState {
            p0: 1.0,
            pn: 0.0,
            delay_prob: 0.0,
            cond_abandon,
            abandon_prob: 0.0,
            throughput: 0.0,
            mean_in_system: 0.0,
        });
    }

    if theta == 0.0 {
        return erlang_c_state(n, mu, lambda);
    }

    let b = erlang_b(n, rho)?;
    let series = PalmSeries::evaluate(nf * mu / theta, lambda / theta)?;
    let ln_g = series.ln_value();
    let inv_g = (-ln_g).exp();

    // pn = B / (1 + B (g - 1)), rewritten in terms of 1/g.
    let denom = inv_g + b * (1.0 - inv_g);
    let pn = b * inv_g / denom;
    let delay_prob = (b / denom).min(1.0);
    let cond_abandon = (1.0 - (nf / rho) * series.excess_ratio()).clamp(0.0, 1.0);
    let abandon_prob = delay_prob * cond_abandon;
    let throughput = (nf * mu).min(lambda * (1.0 - abandon_prob));

    // pn itself can underflow while pn * sum i a_i stays finite.
    let ln_pn = b.ln() - ln_g - denom.ln();
    let p0 = (ln_factorial(n) - nf * rho.ln() + ln_pn).exp().min(1.0);

    // sum_{j<n} j p_j = rho (1 - P(W>0)) - n pn, and
    // sum_{j>=n} j p_j = n P(W>0) + pn sum_{i>=1} i a_i.
    let queued = if series.first_moment > 0.0 { (ln_pn + series.ln_first_moment()).exp() } else { 0.0 };
    let mean_in_system = (rho * (1.0 - delay_prob) - nf * pn).max(0.0) + nf * delay_prob + queued;

    Ok(SteadyState { p0, pn, delay_prob, cond_abandon, abandon_prob, throughput, mean_in_system })
}

fn erlang_c_state(n: usize, mu: f64, lambda: f64) -> Result<SteadyState> {
    let nf = n as f64;
    let rho = lambda / mu;
    if rho >= nf {
        let abandon_prob = 1.0 - nf * mu / lambda;
        return Ok(SteadyState {
            p0: 0.0,
            pn: 0.0,
            delay_prob: 1.0,
            cond_abandon: abandon_prob,
            abandon_prob,
            throughput: nf * mu,
            mean_in_system: f64::INFINITY,
        });
    }
    let c = erlang_c(n, rho)?;
    let pn = c * (nf - rho) / nf;
    let p0 = if pn > 0.0 { (ln_factorial(n) - nf * rho.ln() + pn.ln()).exp().min(1.0) } else { 0.0 };
    Ok(SteadyState {
        p0,
        pn,
        delay_prob: c,
        cond_abandon: 0.0,
        abandon_prob: 0.0,
        throughput: lambda,
        mean_in_system: rho + c * rho / (nf - rho),
    })
}
