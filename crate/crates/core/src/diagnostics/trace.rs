use std::fs::File;
use std::io::{self, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Column order of trace files.
pub const TRACE_HEADER: [&str; 11] = [
    "iteration",
    "sigma",
    "sigma_es",
    "success",
    "f_est",
    "f_exact",
    "violation",
    "lyapunov",
    "samples",
    "accuracy_event",
    "wall_ms",
];

/// State after one iteration. `sigma`, `sigma_es`, `f_est` and the exact
/// references describe the incumbent *after* the update of that iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: u64,
    pub sigma: f64,
    pub sigma_es: f64,
    pub success: bool,
    /// Carried barrier estimate of the incumbent.
    pub f_est: f64,
    pub f_exact: Option<f64>,
    /// Largest positive constraint value at the incumbent, exact when the
    /// problem provides exact constraints and estimated otherwise.
    pub violation: f64,
    pub lyapunov: f64,
    /// Oracle draws spent in this iteration.
    pub samples: u64,
    pub accuracy_event: Option<bool>,
    /// Milliseconds since the start of the run, when recorded.
    pub wall_ms: Option<f64>,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("unexpected trace header {0:?}")]
    Header(Vec<String>),
}

/// Writes records as CSV with the fixed header. Absent optional values are
/// empty fields.
pub fn write_trace_to<W: Write>(records: &[TraceRecord], out: W) -> Result<(), TraceError> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace(records: &[TraceRecord], path: &Path) -> Result<(), TraceError> {
    write_trace_to(records, File::create(path)?)
}

pub fn read_trace_from<R: Read>(input: R) -> Result<Vec<TraceRecord>, TraceError> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != TRACE_HEADER {
        return Err(TraceError::Header(header));
    }
    let mut out = Vec::new();
    for rec in r.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>, TraceError> {
    read_trace_from(File::open(path)?)
}
