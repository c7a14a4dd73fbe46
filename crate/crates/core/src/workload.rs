//! Arrival, service and patience processes, rate traces and forecasters.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Exp1, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// How jobs arrive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ArrivalProcess {
    /// Homogeneous Poisson stream (jobs/s).
    Poisson { rate: f64 },
    /// Renewal process with Log-Normal interarrival times.
    LogNormalRenewal { mean_interval: f64, scv: f64 },
    /// Piecewise-constant Poisson rate read from a CSV trace, multiplied by
    /// `scale`.
    Trace { path: PathBuf, scale: f64 },
}

/// Job sizes. Only the exponential family is modelled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ServiceProcess {
    Exponential { mu: f64 },
}

impl ServiceProcess {
    pub fn rate(&self) -> f64 {
        match *self {
            ServiceProcess::Exponential { mu } => mu,
        }
    }
}

/// How long a job is willing to wait for a server.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PatienceModel {
    Exponential { theta: f64 },
    LogNormal { mean: f64, scv: f64 },
    Infinite,
}

impl PatienceModel {
    /// Abandonment rate the Markovian model should assume (`1 / mean`).
    pub fn abandonment_rate(&self) -> f64 {
        match *self {
            PatienceModel::Exponential { theta } => theta,
            PatienceModel::LogNormal { mean, .. } => 1.0 / mean,
            PatienceModel::Infinite => 0.0,
        }
    }
}

/// Source of the arrival-rate estimate handed to the allocation policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Forecaster {
    /// The highest true arrival rate until the following decision can take
    /// effect.
    Oracle,
    /// The oracle value plus Laplace noise whose mean absolute size is the
    /// given fraction of the true rate.
    OracleWithLaplaceError { mean_abs_error_fraction: f64 },
    /// The rate observed during the window that just ended.
    LastWindow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    pub arrivals: ArrivalProcess,
    pub service: ServiceProcess,
    pub patience: PatienceModel,
    pub forecaster: Forecaster,
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::config(format!("{name} must be finite and > 0, got {v}")))
    }
}

impl WorkloadSpec {
    /// Markovian workload: Poisson arrivals, exponential sizes and patience.
    pub fn markovian(lambda: f64, mu: f64, theta: f64) -> Self {
        WorkloadSpec {
            arrivals: ArrivalProcess::Poisson { rate: lambda },
            service: ServiceProcess::Exponential { mu },
            patience: if theta > 0.0 { PatienceModel::Exponential { theta } } else { PatienceModel::Infinite },
            forecaster: Forecaster::Oracle,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.arrivals {
            ArrivalProcess::Poisson { rate } => {
                if !(rate.is_finite() && *rate >= 0.0) {
                    return Err(Error::config(format!("arrival rate must be finite and >= 0, got {rate}")));
                }
            }
            ArrivalProcess::LogNormalRenewal { mean_interval, scv } => {
                check_positive("mean interarrival time", *mean_interval)?;
                check_positive("interarrival scv", *scv)?;
            }
            ArrivalProcess::Trace { scale, .. } => check_positive("trace scale", *scale)?,
        }
        check_positive("service rate", self.service.rate())?;
        match self.patience {
            PatienceModel::Exponential { theta } => check_positive("abandonment rate", theta)?,
            PatienceModel::LogNormal { mean, scv } => {
                check_positive("mean patience", mean)?;
                check_positive("patience scv", scv)?;
            }
            PatienceModel::Infinite => {}
        }
        if let Forecaster::OracleWithLaplaceError { mean_abs_error_fraction } = self.forecaster {
            if !(mean_abs_error_fraction.is_finite() && mean_abs_error_fraction >= 0.0) {
                return Err(Error::config("forecast error fraction must be finite and >= 0"));
            }
        }
        Ok(())
    }
}

/// Location and scale `(mu_log, sigma_log)` of the Log-Normal distribution
/// with the given mean and squared coefficient of variation.
pub fn lognormal_from_mean_scv(mean: f64, scv: f64) -> Result<(f64, f64)> {
    if !(mean.is_finite() && mean > 0.0 && scv.is_finite() && scv > 0.0) {
        return Err(Error::domain(format!("mean and scv must be finite and > 0, got ({mean}, {scv})")));
    }
    let var_log = scv.ln_1p();
    Ok((mean.ln() - var_log / 2.0, var_log.sqrt()))
}

fn lognormal(mean: f64, scv: f64) -> Result<LogNormal<f64>> {
    let (m, s) = lognormal_from_mean_scv(mean, scv)?;
    LogNormal::new(m, s).map_err(|e| Error::domain(e.to_string()))
}

/// `true_rate` plus Laplace noise with scale `error_fraction * true_rate`,
/// clamped at zero. The scale is also the mean absolute error.
pub fn laplace_perturb<R: Rng + ?Sized>(true_rate: f64, error_fraction: f64, rng: &mut R) -> f64 {
    if error_fraction <= 0.0 || true_rate <= 0.0 {
        return true_rate.max(0.0);
    }
    let magnitude: f64 = Exp1.sample(rng);
    let noise = if rng.random::<bool>() { magnitude } else { -magnitude };
    (true_rate + error_fraction * true_rate * noise).max(0.0)
}

/// Piecewise-constant arrival rate: `rates[i]` holds on `[times[i], times[i+1])`
/// and the last rate holds forever. The rate before `times[0]` is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct RateTrace {
    times: Vec<f64>,
    rates: Vec<f64>,
}

impl RateTrace {
    pub fn new(times: Vec<f64>, rates: Vec<f64>) -> Result<Self> {
        if times.is_empty() || times.len() != rates.len() {
            return Err(Error::domain("a trace needs one rate per breakpoint and at least one row"));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::domain("trace times must be strictly increasing"));
        }
        if times.iter().chain(&rates).any(|v| !v.is_finite()) || rates.iter().any(|r| *r < 0.0) || times[0] < 0.0 {
            return Err(Error::domain("trace values must be finite, times and rates >= 0"));
        }
        Ok(RateTrace { times, rates })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn scaled(&self, factor: f64) -> RateTrace {
        RateTrace { times: self.times.clone(), rates: self.rates.iter().map(|r| r * factor).collect() }
    }

    fn segment(&self, t: f64) -> Option<usize> {
        match self.times.partition_point(|&s| s <= t) {
            0 => None,
            i => Some(i - 1),
        }
    }

    pub fn rate_at(&self, t: f64) -> f64 {
        self.segment(t).map_or(0.0, |i| self.rates[i])
    }

    /// The first breakpoint strictly after `t`, if any.
    pub fn next_change_after(&self, t: f64) -> Option<f64> {
        let i = self.times.partition_point(|&s| s <= t);
        self.times.get(i).copied()
    }

    /// Highest rate in force during `[from, to)`.
    pub fn peak_rate(&self, from: f64, to: f64) -> f64 {
        let mut peak = self.rate_at(from);
        let mut t = from;
        while let Some(c) = self.next_change_after(t).filter(|&c| c < to) {
            peak = peak.max(self.rate_at(c));
            t = c;
        }
        peak
    }

    /// Time-average of the rate over `[from, to)`.
    pub fn mean_rate(&self, from: f64, to: f64) -> f64 {
        if to <= from {
            return self.rate_at(from);
        }
        let mut area = 0.0;
        let mut t = from;
        while t < to {
            let end = self.next_change_after(t).map_or(to, |c| c.min(to));
            area += self.rate_at(t) * (end - t);
            t = end;
        }
        area / (to - from)
    }

    pub fn min_rate(&self) -> f64 {
        self.rates.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_rate(&self) -> f64 {
        self.rates.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "time_s,rate_jobs_per_s")?;
        for (t, r) in self.times.iter().zip(&self.rates) {
            writeln!(out, "{t},{r}")?;
        }
        Ok(())
    }
}

/// Reads a `time_s,rate_jobs_per_s` CSV and multiplies every rate by `scale`.
///
/// A header line and `#` comment lines are allowed.
pub fn parse_trace<R: Read>(reader: R, scale: f64) -> Result<RateTrace> {
    check_positive("trace scale", scale).map_err(|e| Error::TraceParse { line: 0, message: e.to_string() })?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).comment(Some(b'#')).trim(csv::Trim::All).flexible(true).from_reader(reader);
    let mut times: Vec<f64> = Vec::new();
    let mut rates = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::TraceParse { line: e.position().map_or(0, |p| p.line()), message: e.to_string() })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 2 {
            return Err(Error::TraceParse { line, message: format!("expected 2 fields, found {}", record.len()) });
        }
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if idx == 0 => continue,
            Err(e) => return Err(Error::TraceParse { line, message: e.to_string() }),
        };
        let (t, r) = (values[0], values[1]);
        if !t.is_finite() || t < 0.0 {
            return Err(Error::TraceParse { line, message: format!("time must be finite and >= 0, got {t}") });
        }
        if !r.is_finite() || r < 0.0 {
            return Err(Error::TraceParse { line, message: format!("rate must be finite and >= 0, got {r}") });
        }
        if let Some(&prev) = times.last() {
            if t <= prev {
                return Err(Error::TraceParse { line, message: format!("time {t} does not increase past {prev}") });
            }
        }
        times.push(t);
        rates.push(r * scale);
    }
    if times.is_empty() {
        return Err(Error::TraceParse { line: 0, message: "trace has no rows".into() });
    }
    RateTrace::new(times, rates).map_err(|e| Error::TraceParse { line: 0, message: e.to_string() })
}

pub fn load_trace(path: impl AsRef<Path>, scale: f64) -> Result<RateTrace> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_trace(file, scale)
}

/// Hourly sinusoid-plus-noise trace with a 24-hour period, stretched so its
/// smallest and largest rates are exactly `min_rate` and `max_rate`.
pub fn synthetic_diurnal_trace(hours: usize, min_rate: f64, max_rate: f64, seed: u64) -> Result<RateTrace> {
    if hours == 0 || !(min_rate.is_finite() && max_rate.is_finite()) || min_rate < 0.0 || max_rate <= min_rate {
        return Err(Error::domain("need at least one hour and 0 <= min_rate < max_rate"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.06).map_err(|e| Error::domain(e.to_string()))?;
    let raw: Vec<f64> = (0..hours)
        .map(|h| {
            let phase = 2.0 * std::f64::consts::PI * (h as f64 - 4.0) / 24.0;
            0.5 - 0.5 * phase.cos() + noise.sample(&mut rng)
        })
        .collect();
    let lo = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let rates = raw.iter().map(|v| (min_rate + (v - lo) / span * (max_rate - min_rate)).round()).collect();
    let times = (0..hours).map(|h| h as f64 * 3600.0).collect();
    RateTrace::new(times, rates)
}

/// Draws interarrival times for one [`ArrivalProcess`].
#[derive(Debug, Clone)]
pub enum ArrivalGenerator {
    Poisson { rate: f64 },
    Renewal { interval: LogNormal<f64>, mean_interval: f64 },
    Trace { trace: RateTrace },
}

impl ArrivalGenerator {
    /// Builds the generator, loading the trace file if there is one.
    pub fn new(process: &ArrivalProcess) -> Result<Self> {
        Ok(match process {
            ArrivalProcess::Poisson { rate } => ArrivalGenerator::Poisson { rate: *rate },
            ArrivalProcess::LogNormalRenewal { mean_interval, scv } => {
                ArrivalGenerator::Renewal { interval: lognormal(*mean_interval, *scv)?, mean_interval: *mean_interval }
            }
            ArrivalProcess::Trace { path, scale } => ArrivalGenerator::Trace { trace: load_trace(path, *scale)? },
        })
    }

    pub fn from_trace(trace: RateTrace) -> Self {
        ArrivalGenerator::Trace { trace }
    }

    /// Time of the arrival following one at `now`, or `None` if no further
    /// arrival will ever happen.
    pub fn next_after<R: Rng + ?Sized>(&self, now: f64, rng: &mut R) -> Option<f64> {
        match self {
            ArrivalGenerator::Poisson { rate } => {
                if *rate <= 0.0 {
                    return None;
                }
                let gap: f64 = Exp1.sample(rng);
                Some(now + gap / rate)
            }
            ArrivalGenerator::Renewal { interval, .. } => Some(now + interval.sample(rng)),
            ArrivalGenerator::Trace { trace } => {
                // Memorylessness lets each segment restart its own clock.
                let mut t = now;
                loop {
                    let rate = trace.rate_at(t);
                    let boundary = trace.next_change_after(t);
                    if rate > 0.0 {
                        let gap: f64 = Exp1.sample(rng);
                        let candidate = t + gap / rate;
                        match boundary {
                            Some(b) if candidate >= b => t = b,
                            _ => return Some(candidate),
                        }
                    } else {
                        t = boundary?;
                    }
                }
            }
        }
    }

    /// Mean arrival rate over `[from, to)`: what an exact forecaster reports.
    pub fn mean_rate(&self, from: f64, to: f64) -> f64 {
        match self {
            ArrivalGenerator::Poisson { rate } => *rate,
            ArrivalGenerator::Renewal { mean_interval, .. } => mean_interval.recip(),
            ArrivalGenerator::Trace { trace } => trace.mean_rate(from, to),
        }
    }

    /// Highest arrival rate in force during `[from, to)`.
    pub fn peak_rate(&self, from: f64, to: f64) -> f64 {
        match self {
            ArrivalGenerator::Trace { trace } => trace.peak_rate(from, to),
            _ => self.mean_rate(from, to),
        }
    }
}

/// Samples patience times.
#[derive(Debug, Clone, Copy)]
pub enum PatienceSampler {
    Exponential(Exp<f64>),
    LogNormal(LogNormal<f64>),
    Infinite,
}

impl PatienceSampler {
    pub fn new(model: &PatienceModel) -> Result<Self> {
        Ok(match *model {
            PatienceModel::Exponential { theta } => {
                PatienceSampler::Exponential(Exp::new(theta).map_err(|e| Error::domain(e.to_string()))?)
            }
            PatienceModel::LogNormal { mean, scv } => PatienceSampler::LogNormal(lognormal(mean, scv)?),
            PatienceModel::Infinite => PatienceSampler::Infinite,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            PatienceSampler::Exponential(d) => d.sample(rng),
            PatienceSampler::LogNormal(d) => d.sample(rng),
            PatienceSampler::Infinite => f64::INFINITY,
        }
    }
}
