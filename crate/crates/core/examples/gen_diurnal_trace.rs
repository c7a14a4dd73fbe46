//! Writes the 240-hour synthetic diurnal trace used by the trace experiments.
//!
//! ```text
//! cargo run -p serverfarm --example gen_diurnal_trace -- fixtures/diurnal_240h.csv
//! ```

use std::fs::File;
use std::io::BufWriter;

use serverfarm::workload::synthetic_diurnal_trace;

const HOURS: usize = 240;
const MIN_RATE: f64 = 2688.0;
const MAX_RATE: f64 = 5729.0;
const SEED: u64 = 20_130_613;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "fixtures/diurnal_240h.csv".to_string());
    let trace = synthetic_diurnal_trace(HOURS, MIN_RATE, MAX_RATE, SEED)?;
    trace.write_csv(BufWriter::new(File::create(&path)?))?;
    eprintln!("wrote {} hourly rates to {path}", trace.rates().len());
    Ok(())
}
