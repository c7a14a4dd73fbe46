//! Money and power: what a given allocation earns and what changing it costs.
//!
//! Internally every rate is in dollars per second and every power in watts.
//! Kilowatt-hours and dollars per hour only appear through the conversion
//! helpers at the bottom of this module.

use serde::{Deserialize, Serialize};

use crate::queueing::{steady_state, SystemParams, Traffic};
use crate::{Error, Result};

pub const SECONDS_PER_HOUR: f64 = 3600.0;
pub const JOULES_PER_KWH: f64 = 3.6e6;

/// Per-server power figures, already scaled by the facility PUE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerProfile {
    /// Draw of a powered-on idle server (W).
    pub idle_watts: f64,
    /// Draw of a busy server (W).
    pub busy_watts: f64,
    /// Draw of a server that is booting or shutting down (W).
    pub transition_watts: f64,
    /// Power usage effectiveness the figures were scaled with.
    pub pue: f64,
}

impl PowerProfile {
    pub fn new(idle_watts: f64, busy_watts: f64, transition_watts: f64, pue: f64) -> Result<Self> {
        let p = PowerProfile { idle_watts, busy_watts, transition_watts, pue };
        p.validate()?;
        Ok(p)
    }

    /// Builds a profile from raw IT-equipment watts, multiplying by `pue`.
    /// Transitions are assumed to draw peak power.
    pub fn from_hardware(idle_watts: f64, busy_watts: f64, pue: f64) -> Result<Self> {
        Self::new(idle_watts * pue, busy_watts * pue, busy_watts * pue, pue)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.idle_watts, self.busy_watts, self.transition_watts, self.pue];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("power figures must be finite"));
        }
        if !(0.0 <= self.idle_watts && self.idle_watts <= self.busy_watts && self.busy_watts <= self.transition_watts) {
            return Err(Error::domain(format!(
                "expected 0 <= idle <= busy <= transition watts, got {} / {} / {}",
                self.idle_watts, self.busy_watts, self.transition_watts
            )));
        }
        if self.pue < 1.0 {
            return Err(Error::domain(format!("PUE must be >= 1, got {}", self.pue)));
        }
        Ok(())
    }
}

impl Default for PowerProfile {
    /// A quad-core machine drawing 140-220 W (35-55 W per core) behind a PUE
    /// of 1.7, rounded to whole watts.
    fn default() -> Self {
        PowerProfile { idle_watts: 59.0, busy_watts: 94.0, transition_watts: 94.0, pue: 1.7 }
    }
}

/// Income and electricity cost parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EconomicModel {
    /// Income per completed job ($).
    pub income_per_job: f64,
    /// Electricity tariff ($/kWh).
    pub tariff_per_kwh: f64,
    /// Scales the tariff to include indirect costs (capital, amortization).
    pub cost_multiplier: f64,
    #[serde(default)]
    pub power: PowerProfile,
}

impl EconomicModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.income_per_job.is_finite() && self.income_per_job >= 0.0) {
            return Err(Error::domain("income per job must be finite and >= 0"));
        }
        if !(self.tariff_per_kwh.is_finite() && self.tariff_per_kwh >= 0.0) {
            return Err(Error::domain("tariff must be finite and >= 0"));
        }
        if !(self.cost_multiplier.is_finite() && self.cost_multiplier >= 1.0) {
            return Err(Error::domain("cost multiplier must be finite and >= 1"));
        }
        self.power.validate()
    }

    /// All-in electricity cost in $ per joule (= $ per watt-second).
    pub fn cost_per_joule(&self) -> f64 {
        self.tariff_per_kwh * self.cost_multiplier / JOULES_PER_KWH
    }
}

impl Default for EconomicModel {
    /// 6.2e-6 $ per job, 0.1 $/kWh, indirect costs twice the direct ones.
    fn default() -> Self {
        EconomicModel { income_per_job: 6.2e-6, tariff_per_kwh: 0.1, cost_multiplier: 3.0, power: PowerProfile::default() }
    }
}

/// Cost of switching servers on or off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconfigCost {
    /// Time to boot or shut down a server (s).
    pub boot_time: f64,
    /// Wear cost per state change of each hardware component ($).
    pub component_costs: Vec<f64>,
    /// Length of an observation window (s).
    pub window_length: f64,
}

impl ReconfigCost {
    pub fn validate(&self) -> Result<()> {
        if !(self.boot_time.is_finite() && self.boot_time >= 0.0) {
            return Err(Error::domain("boot time must be finite and >= 0"));
        }
        if !(self.window_length.is_finite() && self.window_length > 0.0) {
            return Err(Error::domain("window length must be finite and > 0"));
        }
        if self.component_costs.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::domain("component costs must be finite and >= 0"));
        }
        Ok(())
    }

    /// Total wear cost of one state change ($).
    pub fn wear_cost(&self) -> f64 {
        self.component_costs.iter().sum()
    }
}

impl Default for ReconfigCost {
    fn default() -> Self {
        ReconfigCost { boot_time: 120.0, component_costs: vec![0.002], window_length: 3600.0 }
    }
}

/// Expected number of busy servers, `ceil(T / mu)`.
///
/// Callers clamp the result to the number of running servers.
pub fn occupancy(throughput: f64, mu: f64) -> Result<usize> {
    if !(throughput.is_finite() && throughput >= 0.0) {
        return Err(Error::domain(format!("throughput must be finite and >= 0, got {throughput}")));
    }
    if !(mu.is_finite() && mu > 0.0) {
        return Err(Error::domain(format!("service rate must be finite and > 0, got {mu}")));
    }
    Ok((throughput / mu).ceil() as usize)
}

/// Average draw of `n` running servers of which `busy` are busy (W).
pub fn power_draw(n: usize, busy: usize, profile: &PowerProfile) -> Result<f64> {
    if busy > n {
        return Err(Error::domain(format!("busy servers ({busy}) exceed running servers ({n})")));
    }
    Ok(n as f64 * profile.idle_watts + busy as f64 * (profile.busy_watts - profile.idle_watts))
}

/// Net revenue rate `r(n) = c T - r P` ($/s) of running `params.n` servers.
pub fn revenue_rate(params: &SystemParams, econ: &EconomicModel) -> Result<f64> {
    if params.n == 0 {
        params.validate()?;
        return Ok(0.0);
    }
    let state = steady_state(params)?;
    let busy = occupancy(state.throughput, params.mu)?.min(params.n);
    let watts = power_draw(params.n, busy, &econ.power)?;
    Ok(econ.income_per_job * state.throughput - econ.cost_per_joule() * watts)
}

/// Amortized cost rate ($/s) of switching `delta_n` servers on or off.
pub fn switch_cost(delta_n: i64, cfg: &ReconfigCost, econ: &EconomicModel) -> f64 {
    let per_change = cfg.wear_cost() + cfg.boot_time * econ.cost_per_joule() * econ.power.transition_watts;
    delta_n.unsigned_abs() as f64 / cfg.window_length * per_change
}

/// Expected change in revenue rate from moving `n_old` servers to `n_new`.
pub fn delta_revenue(n_new: usize, n_old: usize, traffic: &Traffic, econ: &EconomicModel, cfg: &ReconfigCost) -> Result<f64> {
    let gain = revenue_rate(&traffic.with_servers(n_new), econ)? - revenue_rate(&traffic.with_servers(n_old), econ)?;
    Ok(gain - switch_cost(n_new as i64 - n_old as i64, cfg, econ))
}

pub fn joules_to_kwh(joules: f64) -> f64 {
    joules / JOULES_PER_KWH
}

pub fn kwh_to_joules(kwh: f64) -> f64 {
    kwh * JOULES_PER_KWH
}

/// Energy (kWh) drawn by a constant load of `watts` over `seconds`.
pub fn energy_kwh(watts: f64, seconds: f64) -> f64 {
    joules_to_kwh(watts * seconds)
}

pub fn per_second_to_per_hour(rate: f64) -> f64 {
    rate * SECONDS_PER_HOUR
}

pub fn per_hour_to_per_second(rate: f64) -> f64 {
    rate / SECONDS_PER_HOUR
}
