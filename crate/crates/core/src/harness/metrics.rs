//! Newline-delimited metrics: a schema header line, then one record per run.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use super::run::RunMetrics;

pub const METRICS_SCHEMA: &str = "tidewater-metrics";
pub const METRICS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsHeader {
    pub schema: String,
    pub version: u32,
}

/// Writes the header and one line per run, seeds ascending.
pub fn emit_metrics<W: Write>(metrics: &[RunMetrics], mut w: W) -> io::Result<()> {
    let header = MetricsHeader {
        schema: METRICS_SCHEMA.into(),
        version: METRICS_VERSION,
    };
    serde_json::to_writer(&mut w, &header)?;
    writeln!(w)?;
    let mut sorted: Vec<&RunMetrics> = metrics.iter().collect();
    sorted.sort_by_key(|m| m.seed);
    for m in sorted {
        serde_json::to_writer(&mut w, m)?;
        writeln!(w)?;
    }
    Ok(())
}

pub fn emit_metrics_file(metrics: &[RunMetrics], path: &std::path::Path) -> io::Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = io::BufWriter::new(file);
    emit_metrics(metrics, &mut w)?;
    w.flush()
}

pub fn parse_metrics<R: BufRead>(r: R) -> io::Result<Vec<RunMetrics>> {
    let mut lines = r.lines();
    let header: MetricsHeader = match lines.next() {
        Some(l) => serde_json::from_str(&l?)?,
        None => {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                "missing metrics header",
            ))
        }
    };
    if header.schema != METRICS_SCHEMA || header.version != METRICS_VERSION {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!(
                "unsupported metrics schema {} v{}",
                header.schema, header.version
            ),
        ));
    }
    let mut out = Vec::new();
    for l in lines {
        let l = l?;
        if !l.trim().is_empty() {
            out.push(serde_json::from_str(&l)?);
        }
    }
    Ok(out)
}
