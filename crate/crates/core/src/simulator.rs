//! Discrete-event simulation of the server farm.
//!
//! The model follows jobs through arrival, FIFO queueing, abandonment and
//! service, and servers through boot, idle, busy and shutdown. At every
//! decision epoch the configured [`Policy`] may change the number of running
//! servers; energy and money are integrated continuously.
//!
//! Abandonment is lazy: each job draws its patience on arrival and, if it
//! reaches the head of the queue after its deadline, it is counted as having
//! left at the deadline. Expired jobs never delay anybody, so this is
//! equivalent to scheduling an abandonment event per job, and it works for any
//! patience distribution. The queue is also purged at every window boundary so
//! abandonments land in the right window.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, VecDeque};
use std::io::Write;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocator::optimize_allocation;
use crate::economics::{EconomicModel, ReconfigCost, JOULES_PER_KWH, SECONDS_PER_HOUR};
use crate::queueing::Traffic;
use crate::stats::{confidence_interval, Estimate};
use crate::workload::{laplace_perturb, ArrivalGenerator, Forecaster, PatienceSampler, WorkloadSpec};
use crate::{Error, Result};

/// Confidence level of every reported interval.
pub const CONFIDENCE_LEVEL: f64 = 0.95;

/// Server allocation policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Policy {
    /// Always run the same number of servers.
    Static { n: usize },
    /// Re-optimize the allocation at every decision epoch.
    Adaptive,
}

/// Complete description of one simulation run.
///
/// The decision cadence is `reconfig.window_length`; the same value amortizes
/// the switching cost seen by the adaptive policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Total number of servers S.
    pub capacity: usize,
    /// Servers running at time zero (adaptive policy only).
    pub initial_n: usize,
    pub workload: WorkloadSpec,
    #[serde(default)]
    pub econ: EconomicModel,
    #[serde(default)]
    pub reconfig: ReconfigCost,
    pub policy: Policy,
    /// Simulated time (s).
    pub duration: f64,
    /// Statistics are collected from this time on (s).
    #[serde(default)]
    pub warmup: f64,
    /// Length of the revenue samples used for confidence intervals (s).
    pub sample_interval: f64,
    pub seed: u64,
}

impl SimConfig {
    pub fn window_length(&self) -> f64 {
        self.reconfig.window_length
    }

    pub fn validate(&self) -> Result<()> {
        self.workload.validate()?;
        self.econ.validate().map_err(|e| Error::config(e.to_string()))?;
        self.reconfig.validate().map_err(|e| Error::config(e.to_string()))?;
        if self.capacity == 0 {
            return Err(Error::config("capacity must be at least one server"));
        }
        if self.initial_n > self.capacity {
            return Err(Error::config(format!("initial_n {} exceeds capacity {}", self.initial_n, self.capacity)));
        }
        if let Policy::Static { n } = self.policy {
            if n > self.capacity {
                return Err(Error::config(format!("static allocation {n} exceeds capacity {}", self.capacity)));
            }
        }
        if !(self.warmup.is_finite() && self.warmup >= 0.0 && self.duration.is_finite() && self.duration > self.warmup) {
            return Err(Error::config(format!("need duration > warmup >= 0, got duration {} and warmup {}", self.duration, self.warmup)));
        }
        if !(self.sample_interval.is_finite() && self.sample_interval > 0.0) {
            return Err(Error::config("sample interval must be finite and > 0"));
        }
        Ok(())
    }
}

/// Activity during one observation window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub window_start_s: f64,
    /// Servers allocated for the window.
    pub n: usize,
    pub lambda_observed: f64,
    pub lambda_forecast: f64,
    pub completions: u64,
    pub abandonments: u64,
    pub energy_kwh: f64,
    pub revenue_usd: f64,
}

/// Measured outcome of one run. Totals cover `[warmup, duration)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    /// Net revenue rate: mean over samples with its confidence interval.
    pub revenue_per_hour: Estimate,
    pub revenue_usd: f64,
    pub energy_kwh: f64,
    /// Abandoned fraction of the jobs that arrived after warmup.
    pub lost_fraction: f64,
    /// Time-average number of waiting jobs.
    pub mean_queue_len: f64,
    /// Time-average number of jobs waiting or in service.
    pub mean_in_system: f64,
    /// Time-average number of servers switched on, including transitions.
    pub mean_servers_on: f64,
    /// Completions per second.
    pub throughput: f64,
    pub arrivals: u64,
    pub completions: u64,
    pub abandonments: u64,
    pub in_flight: u64,
    pub state_changes: u64,
    pub measured_seconds: f64,
    pub windows: Vec<WindowRecord>,
}

impl SimReport {
    /// Writes the per-window series as CSV with a header row.
    pub fn write_window_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "window_start_s,n,lambda_observed,lambda_forecast,completions,abandonments,energy_kwh,revenue_usd")?;
        for w in &self.windows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                format_significant(w.window_start_s, 6),
                w.n,
                format_significant(w.lambda_observed, 6),
                format_significant(w.lambda_forecast, 6),
                w.completions,
                w.abandonments,
                format_significant(w.energy_kwh, 6),
                format_significant(w.revenue_usd, 6),
            )?;
        }
        Ok(())
    }
}

/// Formats `x` with `digits` significant digits.
pub fn format_significant(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exponent = x.abs().log10().floor() as i32;
    if (-5..15).contains(&exponent) {
        let decimals = (digits as i32 - 1 - exponent).max(0) as usize;
        let s = format!("{x:.decimals$}");
        // Rounding can carry into a new digit (9.999995 -> 10.00000); that
        // only ever adds a trailing zero.
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{x:.prec$e}", prec = digits.saturating_sub(1))
    }
}

/// Aggregate over independent replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationReport {
    pub seeds: Vec<u64>,
    pub revenue_per_hour: Estimate,
    pub lost_fraction: Estimate,
    pub throughput: Estimate,
    pub energy_kwh: Estimate,
    pub mean_queue_len: Estimate,
    pub mean_in_system: Estimate,
    pub runs: Vec<SimReport>,
}

/// Seed of replication `index`, derived deterministically from `base`.
pub fn replication_seed(base: u64, index: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = base.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs `replications` independent copies of `config` (in parallel) and
/// aggregates their results with Student-t intervals across replications.
///
/// With a single replication, the revenue interval comes from that run's
/// batch samples and the other intervals are undefined.
pub fn run_replications(config: &SimConfig, replications: usize) -> Result<ReplicationReport> {
    if replications == 0 {
        return Err(Error::config("need at least one replication"));
    }
    config.validate()?;
    let seeds: Vec<u64> = (0..replications).map(|i| replication_seed(config.seed, i)).collect();
    let runs = seeds.par_iter().map(|&seed| run(&SimConfig { seed, ..config.clone() })).collect::<Result<Vec<_>>>()?;
    let over = |f: fn(&SimReport) -> f64| -> Estimate {
        let values: Vec<f64> = runs.iter().map(f).collect();
        confidence_interval(&values, CONFIDENCE_LEVEL)
    };
    let revenue_per_hour = if replications == 1 { runs[0].revenue_per_hour } else { over(|r| r.revenue_per_hour.mean) };
    Ok(ReplicationReport {
        revenue_per_hour,
        lost_fraction: over(|r| r.lost_fraction),
        throughput: over(|r| r.throughput),
        energy_kwh: over(|r| r.energy_kwh),
        mean_queue_len: over(|r| r.mean_queue_len),
        mean_in_system: over(|r| r.mean_in_system),
        seeds,
        runs,
    })
}

/// Runs one simulation. Deterministic for a given configuration and seed.
pub fn run(config: &SimConfig) -> Result<SimReport> {
    Engine::new(config)?.run()
}

#[derive(Debug, Clone, Copy)]
struct Job {
    id: u64,
    arrival: f64,
    deadline: f64,
    demand: f64,
    counted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum ServerState {
    Off,
    Booting { ready_at: f64 },
    Idle,
    Busy { counted: bool },
    ShuttingDown { done_at: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EventKind {
    Completion(usize),
    BootDone(usize),
    ShutdownDone(usize),
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // Reversed so that BinaryHeap pops the earliest event first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Running totals of money and energy over some interval.
#[derive(Debug, Clone, Copy, Default)]
struct Ledger {
    energy_j: f64,
    completions: u64,
    state_changes: u64,
}

impl Ledger {
    fn revenue(&self, econ: &EconomicModel, wear: f64) -> f64 {
        econ.income_per_job * self.completions as f64 - econ.cost_per_joule() * self.energy_j - wear * self.state_changes as f64
    }
}

#[derive(Debug, Clone)]
struct Window {
    start: f64,
    n: usize,
    forecast: f64,
    arrivals: u64,
    abandonments: u64,
    ledger: Ledger,
}

#[derive(Debug)]
struct Engine<'a> {
    cfg: &'a SimConfig,
    arrivals_gen: ArrivalGenerator,
    patience: PatienceSampler,
    mu: f64,
    wear: f64,

    rng_arrivals: ChaCha8Rng,
    rng_service: ChaCha8Rng,
    rng_patience: ChaCha8Rng,
    rng_forecast: ChaCha8Rng,

    now: f64,
    seq: u64,
    events: BinaryHeap<Event>,
    next_arrival: Option<f64>,
    next_decision: f64,
    next_sample: f64,
    next_job_id: u64,

    servers: Vec<ServerState>,
    draining: Vec<bool>,
    idle: BTreeSet<usize>,
    busy_count: usize,
    transition_count: usize,
    pending_boots: usize,
    queue: VecDeque<Job>,

    // Measurement over [warmup, duration).
    total: Ledger,
    sample: Ledger,
    samples: Vec<f64>,
    busy_area: f64,
    on_area: f64,
    queue_area: f64,
    arrivals: u64,
    completions: u64,
    abandonments: u64,

    window: Option<Window>,
    windows: Vec<WindowRecord>,
    service_starts: Option<Vec<u64>>,
}

impl<'a> Engine<'a> {
    fn new(cfg: &'a SimConfig) -> Result<Self> {
        cfg.validate()?;
        let arrivals_gen = ArrivalGenerator::new(&cfg.workload.arrivals)?;
        let patience = PatienceSampler::new(&cfg.workload.patience)?;
        let stream = |k: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(cfg.seed);
            r.set_stream(k);
            r
        };
        let initial = match cfg.policy {
            Policy::Static { n } => n,
            Policy::Adaptive => cfg.initial_n,
        };
        let mut servers = vec![ServerState::Off; cfg.capacity];
        for s in servers.iter_mut().take(initial) {
            *s = ServerState::Idle;
        }
        Ok(Engine {
            cfg,
            arrivals_gen,
            patience,
            mu: cfg.workload.service.rate(),
            wear: cfg.reconfig.wear_cost(),
            rng_arrivals: stream(0),
            rng_service: stream(1),
            rng_patience: stream(2),
            rng_forecast: stream(3),
            now: 0.0,
            seq: 0,
            events: BinaryHeap::new(),
            next_arrival: None,
            next_decision: 0.0,
            next_sample: cfg.warmup + cfg.sample_interval,
            next_job_id: 0,
            servers,
            draining: vec![false; cfg.capacity],
            idle: (0..initial).collect(),
            busy_count: 0,
            transition_count: 0,
            pending_boots: 0,
            queue: VecDeque::new(),
            total: Ledger::default(),
            sample: Ledger::default(),
            samples: Vec::new(),
            busy_area: 0.0,
            on_area: 0.0,
            queue_area: 0.0,
            arrivals: 0,
            completions: 0,
            abandonments: 0,
            window: None,
            windows: Vec::new(),
            service_starts: None,
        })
    }

    fn measuring(&self) -> bool {
        self.now >= self.cfg.warmup
    }

    fn power(&self) -> f64 {
        let p = &self.cfg.econ.power;
        self.idle.len() as f64 * p.idle_watts + self.busy_count as f64 * p.busy_watts + self.transition_count as f64 * p.transition_watts
    }

    /// Integrates continuous quantities up to `to`.
    fn advance(&mut self, to: f64) {
        debug_assert!(to >= self.now, "event at {to} precedes current time {}", self.now);
        let dt = to - self.now;
        if dt > 0.0 {
            let energy = self.power() * dt;
            if let Some(w) = self.window.as_mut() {
                w.ledger.energy_j += energy;
            }
            let measured = to - self.now.max(self.cfg.warmup);
            if measured > 0.0 {
                let e = self.power() * measured;
                self.total.energy_j += e;
                self.sample.energy_j += e;
                self.busy_area += self.busy_count as f64 * measured;
                let on = self.idle.len() + self.busy_count + self.transition_count;
                self.on_area += on as f64 * measured;
            }
        }
        self.now = to;
    }

    fn schedule(&mut self, time: f64, kind: EventKind) {
        self.seq += 1;
        self.events.push(Event { time, seq: self.seq, kind });
    }

    fn count_state_change(&mut self) {
        if let Some(w) = self.window.as_mut() {
            w.ledger.state_changes += 1;
        }
        if self.measuring() {
            self.total.state_changes += 1;
            self.sample.state_changes += 1;
        }
    }

    fn run(mut self) -> Result<SimReport> {
        self.start();
        while self.step()?.is_some() {}
        self.finish_at_end()
    }

    fn start(&mut self) {
        self.next_arrival = self.arrivals_gen.next_after(0.0, &mut self.rng_arrivals);
    }

    /// Processes the next event before the horizon and returns its time.
    fn step(&mut self) -> Result<Option<f64>> {
        let end = self.cfg.duration;
        let heap_next = self.events.peek().map_or(f64::INFINITY, |e| e.time);
        let arrival_next = self.next_arrival.unwrap_or(f64::INFINITY);
        let t = self.next_sample.min(self.next_decision).min(heap_next).min(arrival_next);
        if t >= end {
            return Ok(None);
        }
        self.advance(t);
        if t == self.next_sample {
            self.close_sample();
        } else if t == self.next_decision {
            self.decide()?;
        } else if t == heap_next {
            let ev = self.events.pop().expect("peeked event");
            match ev.kind {
                EventKind::Completion(s) => self.on_completion(s),
                EventKind::BootDone(s) => self.on_boot_done(s),
                EventKind::ShutdownDone(s) => self.on_shutdown_done(s),
            }
        } else {
            self.on_arrival();
        }
        Ok(Some(t))
    }

    fn finish_at_end(mut self) -> Result<SimReport> {
        let end = self.cfg.duration;
        self.advance(end);
        if self.next_sample <= end {
            self.close_sample();
        }
        Ok(self.finish())
    }

    fn close_sample(&mut self) {
        let revenue = self.sample.revenue(&self.cfg.econ, self.wear);
        self.samples.push(revenue / self.cfg.sample_interval * SECONDS_PER_HOUR);
        self.sample = Ledger::default();
        self.next_sample = self.cfg.warmup + (self.samples.len() + 1) as f64 * self.cfg.sample_interval;
    }

    fn on_arrival(&mut self) {
        let now = self.now;
        let unit: f64 = Exp1.sample(&mut self.rng_service);
        let demand = unit / self.mu;
        let deadline = now + self.patience.sample(&mut self.rng_patience);
        let counted = self.measuring();
        let job = Job { id: self.next_job_id, arrival: now, deadline, demand, counted };
        self.next_job_id += 1;
        if counted {
            self.arrivals += 1;
        }
        if let Some(w) = self.window.as_mut() {
            w.arrivals += 1;
        }
        match self.idle.pop_first() {
            Some(s) => self.start_service(s, job),
            None => self.queue.push_back(job),
        }
        self.next_arrival = self.arrivals_gen.next_after(now, &mut self.rng_arrivals);
    }

    fn start_service(&mut self, s: usize, job: Job) {
        self.add_queue_time(job.arrival, self.now);
        self.servers[s] = ServerState::Busy { counted: job.counted };
        self.busy_count += 1;
        if let Some(log) = self.service_starts.as_mut() {
            log.push(job.id);
        }
        self.schedule(self.now + job.demand, EventKind::Completion(s));
    }

    fn add_queue_time(&mut self, from: f64, to: f64) {
        let span = to.min(self.cfg.duration) - from.max(self.cfg.warmup);
        if span > 0.0 {
            self.queue_area += span;
        }
    }

    fn abandon(&mut self, job: Job) {
        self.add_queue_time(job.arrival, job.deadline);
        if job.counted {
            self.abandonments += 1;
        }
        if let Some(w) = self.window.as_mut() {
            w.abandonments += 1;
        }
    }

    /// Hands server `s` the next live job in the queue, or idles it.
    fn serve_next(&mut self, s: usize) {
        while let Some(job) = self.queue.pop_front() {
            if job.deadline <= self.now {
                self.abandon(job);
            } else {
                self.start_service(s, job);
                return;
            }
        }
        self.servers[s] = ServerState::Idle;
        self.idle.insert(s);
    }

    fn on_completion(&mut self, s: usize) {
        let ServerState::Busy { counted } = self.servers[s] else {
            unreachable!("completion on server {s} in state {:?}", self.servers[s]);
        };
        self.busy_count -= 1;
        if counted {
            self.completions += 1;
        }
        if let Some(w) = self.window.as_mut() {
            w.ledger.completions += 1;
        }
        if self.measuring() {
            self.total.completions += 1;
            self.sample.completions += 1;
        }
        if self.draining[s] {
            self.begin_shutdown(s);
        } else {
            self.serve_next(s);
        }
    }

    fn on_boot_done(&mut self, s: usize) {
        debug_assert!(matches!(self.servers[s], ServerState::Booting { .. }));
        self.transition_count -= 1;
        if self.draining[s] {
            self.begin_shutdown(s);
        } else {
            self.serve_next(s);
        }
    }

    fn on_shutdown_done(&mut self, s: usize) {
        debug_assert!(matches!(self.servers[s], ServerState::ShuttingDown { .. }));
        self.transition_count -= 1;
        self.servers[s] = ServerState::Off;
        if self.pending_boots > 0 {
            self.pending_boots -= 1;
            self.begin_boot(s);
        }
    }

    fn begin_boot(&mut self, s: usize) {
        let ready_at = self.now + self.cfg.reconfig.boot_time;
        self.servers[s] = ServerState::Booting { ready_at };
        self.transition_count += 1;
        self.count_state_change();
        self.schedule(ready_at, EventKind::BootDone(s));
    }

    fn begin_shutdown(&mut self, s: usize) {
        self.draining[s] = false;
        let done_at = self.now + self.cfg.reconfig.boot_time;
        self.servers[s] = ServerState::ShuttingDown { done_at };
        self.transition_count += 1;
        self.count_state_change();
        self.schedule(done_at, EventKind::ShutdownDone(s));
    }

    /// Servers counted towards the allocation: on or coming up, and not
    /// scheduled to go down.
    fn allocated(&self) -> usize {
        let active = self
            .servers
            .iter()
            .zip(&self.draining)
            .filter(|(s, d)| !**d && matches!(s, ServerState::Booting { .. } | ServerState::Idle | ServerState::Busy { .. }))
            .count();
        active + self.pending_boots
    }

    /// Moves the allocation to `target` servers and returns the time at which
    /// every server being powered up will be ready.
    fn apply_allocation(&mut self, target: usize) -> f64 {
        let current = self.allocated();
        if target > current {
            let mut need = target - current;
            for s in 0..self.servers.len() {
                if need == 0 {
                    break;
                }
                if self.draining[s] {
                    self.draining[s] = false;
                    need -= 1;
                }
            }
            for s in 0..self.servers.len() {
                if need == 0 {
                    break;
                }
                if self.servers[s] == ServerState::Off {
                    self.begin_boot(s);
                    need -= 1;
                }
            }
            // The rest come back as soon as a shutdown completes.
            self.pending_boots += need;
        } else if target < current {
            let mut excess = current - target;
            let cancelled = excess.min(self.pending_boots);
            self.pending_boots -= cancelled;
            excess -= cancelled;
            while excess > 0 {
                let Some(s) = self.idle.pop_last() else { break };
                self.begin_shutdown(s);
                excess -= 1;
            }
            for s in (0..self.servers.len()).rev() {
                if excess == 0 {
                    break;
                }
                if !self.draining[s] && matches!(self.servers[s], ServerState::Booting { .. }) {
                    self.draining[s] = true;
                    excess -= 1;
                }
            }
            for s in (0..self.servers.len()).rev() {
                if excess == 0 {
                    break;
                }
                if !self.draining[s] && matches!(self.servers[s], ServerState::Busy { .. }) {
                    self.draining[s] = true;
                    excess -= 1;
                }
            }
        }
        let boot = self.cfg.reconfig.boot_time;
        self.servers.iter().fold(self.now, |ready, s| match *s {
            ServerState::Booting { ready_at } => ready.max(ready_at),
            ServerState::ShuttingDown { done_at } if self.pending_boots > 0 => ready.max(done_at + boot),
            _ => ready,
        })
    }

    /// Rate handed to the policy. The oracle reports the highest rate in
    /// force before the following decision can take effect, which is at most
    /// a boot time plus a window away.
    fn forecast(&mut self, observed: Option<f64>) -> f64 {
        let horizon = self.cfg.reconfig.boot_time + self.cfg.window_length();
        let exact = self.arrivals_gen.peak_rate(self.now, self.now + horizon);
        match self.cfg.workload.forecaster {
            Forecaster::Oracle => exact,
            Forecaster::OracleWithLaplaceError { mean_abs_error_fraction } => {
                laplace_perturb(exact, mean_abs_error_fraction, &mut self.rng_forecast)
            }
            Forecaster::LastWindow => observed.unwrap_or(exact),
        }
    }

    fn purge_expired(&mut self) {
        let now = self.now;
        let mut expired = Vec::new();
        self.queue.retain(|job| {
            if job.deadline <= now {
                expired.push(*job);
                false
            } else {
                true
            }
        });
        for job in expired {
            self.abandon(job);
        }
    }

    fn close_window(&mut self) -> Option<f64> {
        self.purge_expired();
        let w = self.window.take()?;
        let elapsed = self.now - w.start;
        let observed = if elapsed > 0.0 { Some(w.arrivals as f64 / elapsed) } else { None };
        self.windows.push(WindowRecord {
            window_start_s: w.start,
            n: w.n,
            lambda_observed: observed.unwrap_or(0.0),
            lambda_forecast: w.forecast,
            completions: w.ledger.completions,
            abandonments: w.abandonments,
            energy_kwh: w.ledger.energy_j / JOULES_PER_KWH,
            revenue_usd: w.ledger.revenue(&self.cfg.econ, self.wear),
        });
        observed
    }

    fn decide(&mut self) -> Result<()> {
        let observed = self.close_window();
        let forecast = self.forecast(observed);
        let state_changes_before = self.total.state_changes;
        let ready = match self.cfg.policy {
            Policy::Static { .. } => self.now,
            Policy::Adaptive => {
                let traffic = Traffic { lambda: forecast, mu: self.mu, theta: self.cfg.workload.patience.abandonment_rate() };
                let current = self.allocated();
                let decision = optimize_allocation(current, self.cfg.capacity, &traffic, &self.cfg.econ, &self.cfg.reconfig)?;
                if decision.changed {
                    self.apply_allocation(decision.n_new)
                } else {
                    self.now
                }
            }
        };
        // State changes made at the decision instant belong to the new window.
        let carried = self.total.state_changes - state_changes_before;
        let n = self.allocated();
        self.window = Some(Window {
            start: self.now,
            n,
            forecast,
            arrivals: 0,
            abandonments: 0,
            ledger: Ledger { state_changes: carried, ..Ledger::default() },
        });
        self.next_decision = ready + self.cfg.window_length();
        Ok(())
    }

    fn finish(mut self) -> SimReport {
        let end = self.cfg.duration;
        self.close_window();
        // Jobs still waiting: expired ones left at their deadline, the rest
        // are in flight.
        let waiting: Vec<Job> = self.queue.drain(..).collect();
        let mut waiting_counted = 0u64;
        for job in waiting {
            if job.deadline <= end {
                self.abandon(job);
            } else {
                self.add_queue_time(job.arrival, end);
                if job.counted {
                    waiting_counted += 1;
                }
            }
        }
        let in_service = self.servers.iter().filter(|s| matches!(s, ServerState::Busy { counted: true })).count() as u64;
        let measured_seconds = end - self.cfg.warmup;
        let revenue_usd = self.total.revenue(&self.cfg.econ, self.wear);
        let mut revenue_per_hour = confidence_interval(&self.samples, CONFIDENCE_LEVEL);
        if self.samples.is_empty() {
            revenue_per_hour.mean = revenue_usd / measured_seconds * SECONDS_PER_HOUR;
        }
        let lost_fraction = if self.arrivals > 0 { self.abandonments as f64 / self.arrivals as f64 } else { 0.0 };
        SimReport {
            revenue_per_hour,
            revenue_usd,
            energy_kwh: self.total.energy_j / JOULES_PER_KWH,
            lost_fraction,
            mean_queue_len: self.queue_area / measured_seconds,
            mean_in_system: (self.queue_area + self.busy_area) / measured_seconds,
            mean_servers_on: self.on_area / measured_seconds,
            throughput: self.total.completions as f64 / measured_seconds,
            arrivals: self.arrivals,
            completions: self.completions,
            abandonments: self.abandonments,
            in_flight: waiting_counted + in_service,
            state_changes: self.total.state_changes,
            measured_seconds,
            windows: self.windows,
        }
    }
}
