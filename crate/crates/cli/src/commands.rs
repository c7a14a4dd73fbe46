//! The five subcommands. Every file written starts with a comment line
//! carrying the configuration hash and the seed.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use serverfarm::allocator::{optimize_allocation_with, AllocationDecision};
use serverfarm::economics::{occupancy, per_second_to_per_hour, power_draw, revenue_rate};
use serverfarm::queueing::steady_state;
use serverfarm::simulator::{format_significant, run_replications, Policy, ReplicationReport, SimConfig};
use serverfarm::workload::{ArrivalProcess, Forecaster};

use crate::config::{load, out_dir, require, LoadedConfig};
use crate::{CliError, CommonArgs};

const DIGITS: usize = 6;

fn num(x: f64) -> String {
    format_significant(x, DIGITS)
}

fn stamp(hash: &str, seed: u64) -> String {
    format!("# config_hash={hash} seed={seed}")
}

fn write_csv(path: &Path, hash: &str, seed: u64, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{}", stamp(hash, seed))?;
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// Base simulation with the command-line overrides applied.
fn simulation(loaded: &LoadedConfig, args: &CommonArgs) -> Result<(SimConfig, usize), CliError> {
    let mut sim = require(&loaded.config.simulation, "simulation")?.clone();
    if let Some(seed) = args.seed {
        sim.seed = seed;
    }
    let replications = args.replications.or(loaded.config.replications).unwrap_or(1);
    if replications == 0 {
        return Err(CliError::Config("replications must be at least 1".into()));
    }
    sim.validate()?;
    Ok((sim, replications))
}

fn seed_for_analytic(loaded: &LoadedConfig, args: &CommonArgs) -> u64 {
    args.seed.or(loaded.config.simulation.as_ref().map(|s| s.seed)).unwrap_or(0)
}

pub fn analyze(args: &CommonArgs) -> Result<(), CliError> {
    let loaded = load(&args.config)?;
    let model = require(&loaded.config.model, "model")?;
    model.validate()?;
    let traffic = model.traffic()?;
    let (lo, hi) = model.n_range();
    let mut rows = Vec::with_capacity(hi - lo + 1);
    let mut best: Option<(usize, f64)> = None;
    for n in lo..=hi {
        let params = traffic.with_servers(n);
        let s = steady_state(&params)?;
        let busy = occupancy(s.throughput, traffic.mu)?.min(n);
        let watts = power_draw(n, busy, &model.econ.power)?;
        let per_hour = per_second_to_per_hour(revenue_rate(&params, &model.econ)?);
        if best.is_none_or(|(_, r)| per_hour > r) {
            best = Some((n, per_hour));
        }
        rows.push(vec![n.to_string(), num(s.throughput), num(s.abandon_prob), num(watts), num(per_hour)]);
    }
    let dir = out_dir(&args.out)?;
    write_csv(
        &dir.join("analyze.csv"),
        &loaded.hash,
        seed_for_analytic(&loaded, args),
        &["n", "throughput_jobs_per_s", "abandon_prob", "power_w", "revenue_usd_per_h"],
        &rows,
    )?;
    let (n, r) = best.expect("range is non-empty");
    println!("best n = {n}, revenue {} $/h", num(r));
    Ok(())
}

#[derive(Serialize)]
struct OptimizeOutput {
    config_hash: String,
    n_current: usize,
    decision: AllocationDecision,
    revenue_usd_per_h: f64,
}

pub fn optimize(args: &CommonArgs) -> Result<(), CliError> {
    let loaded = load(&args.config)?;
    let model = require(&loaded.config.model, "model")?;
    model.validate()?;
    let traffic = model.traffic()?;
    let decision = optimize_allocation_with(model.n_current, model.capacity, &traffic, &model.econ, &model.reconfig, model.search)?;
    let revenue = per_second_to_per_hour(revenue_rate(&traffic.with_servers(decision.n_new), &model.econ)?);
    let output = OptimizeOutput { config_hash: loaded.hash.clone(), n_current: model.n_current, decision, revenue_usd_per_h: revenue };
    let dir = out_dir(&args.out)?;
    write_json(&dir.join("optimize.json"), &output)?;
    println!("{}", serde_json::to_string_pretty(&output).map_err(|e| CliError::Io(e.to_string()))?);
    Ok(())
}

#[derive(Serialize)]
struct SimulateOutput<'a> {
    config_hash: &'a str,
    config: &'a SimConfig,
    replications: usize,
    report: &'a ReplicationReport,
}

fn interval(e: &serverfarm::stats::Estimate) -> String {
    match e.half_width {
        Some(h) => format!("{} +/- {}", num(e.mean), num(h)),
        None => num(e.mean),
    }
}

pub fn simulate(args: &CommonArgs) -> Result<(), CliError> {
    let loaded = load(&args.config)?;
    let (sim, replications) = simulation(&loaded, args)?;
    let report = run_replications(&sim, replications)?;
    let dir = out_dir(&args.out)?;
    write_json(&dir.join("simulate.json"), &SimulateOutput { config_hash: &loaded.hash, config: &sim, replications, report: &report })?;
    let mut out = BufWriter::new(File::create(dir.join("windows.csv"))?);
    writeln!(out, "{}", stamp(&loaded.hash, sim.seed))?;
    report.runs[0].write_window_csv(&mut out)?;
    out.flush()?;
    println!("revenue {} $/h", interval(&report.revenue_per_hour));
    println!("lost jobs {} %", interval(&scaled(&report.lost_fraction, 100.0)));
    println!("energy {} kWh", interval(&report.energy_kwh));
    Ok(())
}

fn scaled(e: &serverfarm::stats::Estimate, k: f64) -> serverfarm::stats::Estimate {
    serverfarm::stats::Estimate { mean: e.mean * k, half_width: e.half_width.map(|h| h * k), ..*e }
}

fn policy_label(p: &Policy) -> String {
    match p {
        Policy::Static { n } => format!("static({n})"),
        Policy::Adaptive => "adaptive".into(),
    }
}

fn mean_over_runs(report: &ReplicationReport, f: impl Fn(&serverfarm::simulator::SimReport) -> f64) -> f64 {
    report.runs.iter().map(f).sum::<f64>() / report.runs.len() as f64
}

pub fn sweep(args: &CommonArgs) -> Result<(), CliError> {
    let loaded = load(&args.config)?;
    let (base, replications) = simulation(&loaded, args)?;
    let axes = require(&loaded.config.sweep, "sweep")?;
    if axes.lambdas.is_empty() || axes.policies.is_empty() {
        return Err(CliError::Config("sweep needs at least one lambda and one policy".into()));
    }
    let mut rows = Vec::new();
    for policy in &axes.policies {
        for &lambda in &axes.lambdas {
            let mut cfg = base.clone();
            cfg.workload.arrivals = ArrivalProcess::Poisson { rate: lambda };
            cfg.policy = *policy;
            cfg.validate()?;
            let r = run_replications(&cfg, replications)?;
            rows.push(vec![
                policy_label(policy),
                num(lambda),
                num(r.revenue_per_hour.mean),
                r.revenue_per_hour.half_width.map_or(String::new(), num),
                num(r.energy_kwh.mean),
                num(100.0 * r.lost_fraction.mean),
                num(mean_over_runs(&r, |s| s.mean_servers_on)),
            ]);
        }
    }
    let dir = out_dir(&args.out)?;
    write_csv(
        &dir.join("sweep.csv"),
        &loaded.hash,
        base.seed,
        &["policy", "lambda_jobs_per_s", "revenue_usd_per_h", "revenue_ci_half_width", "energy_kwh", "lost_jobs_pct", "mean_servers_on"],
        &rows,
    )?;
    println!("{} sweep points written", rows.len());
    Ok(())
}

pub fn sensitivity(args: &CommonArgs) -> Result<(), CliError> {
    let loaded = load(&args.config)?;
    let (base, replications) = simulation(&loaded, args)?;
    let axis = require(&loaded.config.sensitivity, "sensitivity")?;
    if axis.error_fractions.is_empty() {
        return Err(CliError::Config("sensitivity needs at least one error fraction".into()));
    }
    let mut rows = Vec::new();
    for &error in &axis.error_fractions {
        let mut cfg = base.clone();
        cfg.policy = Policy::Adaptive;
        cfg.workload.forecaster =
            if error == 0.0 { Forecaster::Oracle } else { Forecaster::OracleWithLaplaceError { mean_abs_error_fraction: error } };
        cfg.validate()?;
        let r = run_replications(&cfg, replications)?;
        let lost = 100.0 * r.lost_fraction.mean;
        println!("error {} %: lost jobs {} %", num(100.0 * error), num(lost));
        rows.push(vec![num(100.0 * error), num(lost), num(mean_over_runs(&r, |s| s.revenue_usd)), num(r.energy_kwh.mean)]);
    }
    let dir = out_dir(&args.out)?;
    write_csv(
        &dir.join("sensitivity.csv"),
        &loaded.hash,
        base.seed,
        &["error_pct", "lost_jobs_pct", "cumulative_revenue_usd", "cumulative_kwh"],
        &rows,
    )?;
    Ok(())
}
