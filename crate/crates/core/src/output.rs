//! JSON and CSV writers.
//!
//! JSON field order follows struct declaration order and maps are sorted,
//! so equal values always serialize to equal bytes. Every CSV starts with
//! one metadata line
//!
//! ```text
//! # schema_version=1 kind=<kind> generated_unix=<seconds>
//! ```
//!
//! followed by a header row. The timestamp is the only run-dependent byte;
//! [`data_lines`] drops it for comparisons.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::sim::RunOutcome;

pub const SCHEMA_VERSION: u32 = 1;

pub fn metadata_line(kind: &str) -> String {
    let now = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("# schema_version={SCHEMA_VERSION} kind={kind} generated_unix={now}")
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// CSV rows with the metadata line and a header taken from `T`'s fields.
pub fn write_csv<T: Serialize>(path: &Path, kind: &str, rows: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", metadata_line(kind))?;
    let mut c = csv::Writer::from_writer(w);
    for r in rows {
        c.serialize(r)?;
    }
    c.flush()?;
    Ok(())
}

/// Reads rows written by [`write_csv`].
pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// File contents without metadata lines.
pub fn data_lines(text: &str) -> String {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .fold(String::new(), |mut acc, l| {
            acc.push_str(l);
            acc.push('\n');
            acc
        })
}

/// 64-bit FNV-1a, as 16 lowercase hex digits.
pub fn fnv1a_hex(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

/// One CSV row per simulated round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u64,
    pub branch: usize,
    pub failures: u64,
    pub accepted: bool,
    pub leftover_index: Option<usize>,
    pub leftover_truth_fidelity: Option<f64>,
    /// FNV-1a of the setting indices, one byte per tested system.
    pub settings_digest: String,
}

impl RoundRecord {
    pub fn new(round: u64, o: &RunOutcome, k: u64) -> Self {
        Self {
            round,
            branch: o.branch_index,
            failures: o.failures,
            accepted: o.accepted(k),
            leftover_index: o.leftover_index,
            leftover_truth_fidelity: o.leftover_truth_fidelity,
            settings_digest: fnv1a_hex(&o.settings),
        }
    }
}

pub fn round_records(outcomes: &[RunOutcome], k: u64) -> Vec<RoundRecord> {
    outcomes
        .iter()
        .enumerate()
        .map(|(i, o)| RoundRecord::new(i as u64, o, k))
        .collect()
}
