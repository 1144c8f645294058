//! CSV output. Values carry 17 significant digits so they round-trip.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::method::Trace;

pub fn format_value(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

/// `round,<metric>...` followed by one line per logged round.
pub fn trace_csv(trace: &Trace) -> String {
    let mut s = String::from("round");
    for m in &trace.metrics {
        s.push(',');
        s.push_str(m.name());
    }
    s.push('\n');
    for (round, row) in trace.rounds.iter().zip(&trace.values) {
        write!(s, "{round}").unwrap();
        for &v in row {
            s.push(',');
            s.push_str(&format_value(v));
        }
        s.push('\n');
    }
    s
}

pub fn write_trace(trace: &Trace, path: &Path) -> Result<()> {
    std::fs::write(path, trace_csv(trace))?;
    Ok(())
}

/// Parses a file written by [`trace_csv`] back into columns.
pub fn read_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| crate::Error::Dataset("empty CSV".into()))?
        .split(',')
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let row = line
            .split(',')
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| crate::Error::Dataset(format!("CSV line {}: {e}", k + 2)))?;
        if row.len() != header.len() {
            return Err(crate::Error::Dataset(format!("CSV line {} has {} fields", k + 2, row.len())));
        }
        rows.push(row);
    }
    Ok((header, rows))
}
