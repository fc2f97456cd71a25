//! Append-only, hash-chained audit log.
//!
//! One JSON object per line. Line 1 is a header naming the match; every
//! following line is one finalized decision carrying the SHA-256 (hex) of the
//! line before it in `prev_hash`. The hash of the final line is kept next to
//! the log (in `<file>.tip` for file-backed logs) so that edits to the last
//! line, or truncation, are detected too.
//!
//! ```text
//! {"format":"ringside-audit","version":1,"match_id":"m1"}
//! {"seq":1,"ts_ms":3667,"event_id":"e1",...,"prev_hash":"<sha256 of line 1>"}
//! ```

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::decision::verdict::{DecisionFlow, FinalLabel};
use crate::error::{Error, Result};
use crate::model::{Interval, ScoringEvent};

pub const AUDIT_FORMAT: &str = "ringside-audit";
pub const AUDIT_VERSION: u32 = 1;

/// A finalized decision before it is sequenced and chained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub ts_ms: u64,
    pub event_id: String,
    pub input_digest: String,
    pub y_hat: FinalLabel,
    pub entropy_nats: f64,
    pub decision_flow: DecisionFlow,
    pub override_by: Option<String>,
    pub impact: Interval,
    pub validity: Interval,
}

/// One line of the log, field for field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditRecord {
    pub seq: u64,
    pub ts_ms: u64,
    pub event_id: String,
    pub input_digest: String,
    pub y_hat: FinalLabel,
    pub entropy_nats: f64,
    pub decision_flow: DecisionFlow,
    pub override_by: Option<String>,
    pub impact_lo: f64,
    pub impact_hi: f64,
    pub p_lo: f64,
    pub p_hi: f64,
    pub prev_hash: String,
}

impl AuditRecord {
    pub fn entry(&self) -> Result<AuditEntry> {
        Ok(AuditEntry {
            ts_ms: self.ts_ms,
            event_id: self.event_id.clone(),
            input_digest: self.input_digest.clone(),
            y_hat: self.y_hat,
            entropy_nats: self.entropy_nats,
            decision_flow: self.decision_flow,
            override_by: self.override_by.clone(),
            impact: Interval::new(self.impact_lo, self.impact_hi)?,
            validity: Interval::new(self.p_lo, self.p_hi)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditHeader {
    pub format: String,
    pub version: u32,
    pub match_id: String,
}

/// Sequence number and hash of the last line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditTip {
    pub seq: u64,
    pub hash: String,
}

/// Raw lines plus the tip, as handed to a verifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditExport {
    pub lines: Vec<String>,
    pub tip: AuditTip,
}

impl AuditExport {
    pub fn verify(&self) -> Result<Vec<AuditRecord>> {
        verify_audit(&self.lines, Some(&self.tip)).map(|(_, r)| r)
    }
}

pub fn line_hash(line: &str) -> String {
    hex::encode(Sha256::digest(line.as_bytes()))
}

/// SHA-256 of the event's JSON serialization.
pub fn input_digest(event: &ScoringEvent) -> Result<String> {
    let json = serde_json::to_string(event).map_err(|e| Error::MalformedInput(e.to_string()))?;
    Ok(line_hash(&json))
}

pub fn tip_path(log: &Path) -> PathBuf {
    let mut name = log.as_os_str().to_owned();
    name.push(".tip");
    PathBuf::from(name)
}

fn tamper(line: usize, reason: impl Into<String>) -> Error {
    Error::TamperDetected {
        line,
        reason: reason.into(),
    }
}

/// Checks header, chain, sequence numbers, timestamp order and (if given) the tip.
/// Line numbers in errors are 1-based, counting the header.
pub fn verify_audit<S: AsRef<str>>(lines: &[S], tip: Option<&AuditTip>) -> Result<(AuditHeader, Vec<AuditRecord>)> {
    let first = lines.first().ok_or_else(|| tamper(1, "missing header"))?.as_ref();
    let header: AuditHeader = serde_json::from_str(first).map_err(|e| tamper(1, format!("bad header: {e}")))?;
    if header.format != AUDIT_FORMAT || header.version != AUDIT_VERSION {
        return Err(tamper(1, "unrecognized header"));
    }
    let mut prev = line_hash(first);
    let mut records = Vec::with_capacity(lines.len() - 1);
    let mut last_ts = 0;
    for (i, raw) in lines.iter().enumerate().skip(1) {
        let raw = raw.as_ref();
        let lineno = i + 1;
        let rec: AuditRecord = serde_json::from_str(raw).map_err(|e| tamper(lineno, format!("unparseable entry: {e}")))?;
        if serde_json::to_string(&rec).ok().as_deref() != Some(raw) {
            return Err(tamper(lineno, "entry is not in canonical form"));
        }
        if rec.prev_hash != prev {
            return Err(tamper(i, format!("hash of line {i} does not match prev_hash on line {lineno}")));
        }
        if rec.seq != i as u64 {
            return Err(tamper(lineno, format!("sequence {} where {i} was expected", rec.seq)));
        }
        if rec.ts_ms < last_ts {
            return Err(tamper(lineno, "timestamp goes backwards"));
        }
        rec.entry().map_err(|e| tamper(lineno, e.to_string()))?;
        last_ts = rec.ts_ms;
        prev = line_hash(raw);
        records.push(rec);
    }
    if let Some(tip) = tip {
        if tip.seq != records.len() as u64 || tip.hash != prev {
            return Err(tamper(lines.len(), "last line does not match the recorded tip"));
        }
    }
    Ok((header, records))
}

/// Per-match audit log, in memory or mirrored to a file.
#[derive(Debug, Clone)]
pub struct AuditLog {
    header: AuditHeader,
    lines: Vec<String>,
    records: Vec<AuditRecord>,
    path: Option<PathBuf>,
}

impl AuditLog {
    pub fn in_memory(match_id: &str) -> Self {
        let header = AuditHeader {
            format: AUDIT_FORMAT.into(),
            version: AUDIT_VERSION,
            match_id: match_id.into(),
        };
        let line = serde_json::to_string(&header).expect("header serializes");
        Self {
            header,
            lines: vec![line],
            records: Vec::new(),
            path: None,
        }
    }

    /// Creates a new log file; fails if one already exists.
    pub fn create(path: &Path, match_id: &str) -> Result<Self> {
        let mut log = Self::in_memory(match_id);
        let mut f = OpenOptions::new().write(true).create_new(true).open(path)?;
        writeln!(f, "{}", log.lines[0])?;
        f.sync_all()?;
        log.path = Some(path.to_path_buf());
        log.write_tip()?;
        Ok(log)
    }

    /// Loads and verifies an existing log against its tip file.
    pub fn open(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let tip_text = fs::read_to_string(tip_path(path))?;
        let tip: AuditTip = serde_json::from_str(&tip_text).map_err(|e| Error::StorageFailure(format!("bad tip file: {e}")))?;
        let lines: Vec<String> = text.lines().map(str::to_string).collect();
        let (header, records) = verify_audit(&lines, Some(&tip))?;
        Ok(Self {
            header,
            lines,
            records,
            path: Some(path.to_path_buf()),
        })
    }

    pub fn open_or_create(path: &Path, match_id: &str) -> Result<Self> {
        if path.exists() {
            let log = Self::open(path)?;
            if log.match_id() != match_id {
                return Err(Error::StorageFailure(format!(
                    "{} belongs to match {}",
                    path.display(),
                    log.match_id()
                )));
            }
            Ok(log)
        } else {
            Self::create(path, match_id)
        }
    }

    pub fn match_id(&self) -> &str {
        &self.header.match_id
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn records(&self) -> &[AuditRecord] {
        &self.records
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    pub fn last_ts(&self) -> Option<u64> {
        self.records.last().map(|r| r.ts_ms)
    }

    pub fn tip(&self) -> AuditTip {
        AuditTip {
            seq: self.records.len() as u64,
            hash: line_hash(self.lines.last().expect("header always present")),
        }
    }

    pub fn export(&self) -> AuditExport {
        AuditExport {
            lines: self.lines.clone(),
            tip: self.tip(),
        }
    }

    fn write_tip(&self) -> Result<()> {
        let Some(path) = &self.path else { return Ok(()) };
        let tip = tip_path(path);
        let tmp = tip.with_extension("tip.tmp");
        fs::write(&tmp, serde_json::to_string(&self.tip()).expect("tip serializes"))?;
        fs::rename(&tmp, &tip)?;
        Ok(())
    }

    /// Sequences, chains and persists one entry. Returns its sequence number.
    pub fn append(&mut self, entry: &AuditEntry) -> Result<u64> {
        if let Some(last) = self.last_ts() {
            if entry.ts_ms < last {
                return Err(Error::OutOfOrderTimestamp {
                    last,
                    got: entry.ts_ms,
                });
            }
        }
        if !entry.entropy_nats.is_finite() {
            return Err(Error::InvalidArgument("entropy must be finite".into()));
        }
        let rec = AuditRecord {
            seq: self.records.len() as u64 + 1,
            ts_ms: entry.ts_ms,
            event_id: entry.event_id.clone(),
            input_digest: entry.input_digest.clone(),
            y_hat: entry.y_hat,
            entropy_nats: entry.entropy_nats,
            decision_flow: entry.decision_flow,
            override_by: entry.override_by.clone(),
            impact_lo: entry.impact.lo(),
            impact_hi: entry.impact.hi(),
            p_lo: entry.validity.lo(),
            p_hi: entry.validity.hi(),
            prev_hash: line_hash(self.lines.last().expect("header always present")),
        };
        let line = serde_json::to_string(&rec).map_err(|e| Error::StorageFailure(e.to_string()))?;
        if let Some(path) = &self.path {
            let mut f = OpenOptions::new().append(true).open(path)?;
            writeln!(f, "{line}")?;
            f.flush()?;
        }
        let seq = rec.seq;
        self.lines.push(line);
        self.records.push(rec);
        self.write_tip()?;
        Ok(seq)
    }
}

/// Verifies a log file and its tip without keeping it open.
pub fn verify_file(path: &Path) -> Result<Vec<AuditRecord>> {
    AuditLog::open(path).map(|log| log.records)
}
