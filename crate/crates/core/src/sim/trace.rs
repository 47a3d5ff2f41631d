//! Append-only event trace with a rolling digest and a line-oriented export.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use super::ProcessId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Compute,
    Deliver,
    Corrupt,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub ordinal: u64,
    pub kind: EventKind,
    pub src: u32,
    pub dst: u32,
    /// Hex digest of the delivered message; zero for compute/corrupt.
    pub msg_digest: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TraceMode {
    /// Keep every record.
    #[default]
    Full,
    /// Keep only the rolling digest.
    DigestOnly,
}

#[derive(Debug, Clone)]
pub struct TraceLog {
    mode: TraceMode,
    records: Vec<TraceRecord>,
    rolling: u64,
    len: u64,
}

// splitmix64 finalizer
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl TraceLog {
    pub fn new(mode: TraceMode) -> Self {
        TraceLog {
            mode,
            records: Vec::new(),
            rolling: 0x5eed,
            len: 0,
        }
    }

    pub(crate) fn push(&mut self, kind: EventKind, src: ProcessId, dst: ProcessId, digest: u64) {
        let code = match kind {
            EventKind::Compute => 1u64,
            EventKind::Deliver => 2,
            EventKind::Corrupt => 3,
        };
        let word = code | (u64::from(src.0) << 8) | (u64::from(dst.0) << 24);
        self.rolling = mix(self.rolling ^ mix(word ^ mix(digest ^ self.len)));
        if self.mode == TraceMode::Full {
            self.records.push(TraceRecord {
                ordinal: self.len,
                kind,
                src: src.0,
                dst: dst.0,
                msg_digest: format!("{digest:016x}"),
            });
        }
        self.len += 1;
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn digest(&self) -> u64 {
        self.rolling
    }

    pub fn mode(&self) -> TraceMode {
        self.mode
    }
}

/// Writes one JSON object per line, fields in declaration order.
pub fn export_trace<W: Write>(records: &[TraceRecord], mut w: W) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn import_trace<R: BufRead>(r: R) -> io::Result<Vec<TraceRecord>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(io::Error::other)?);
    }
    Ok(out)
}
