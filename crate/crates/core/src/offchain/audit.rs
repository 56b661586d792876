use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::OffchainError;
use crate::codec::{canonical_json, parse_canonical};
use crate::crypto::{digest_parts, Digest, PublicKey};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AuditAction {
    Read,
    Write,
    TokenCreate,
    TokenAccess,
    TokenRevoke,
    Denied,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditEntry {
    pub seq: u64,
    pub actor: PublicKey,
    pub action: AuditAction,
    /// Record id or token id.
    pub target: String,
    /// Name of the failed check for `Denied`, empty otherwise.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub reason: String,
    pub entry_digest: Digest,
}

#[derive(Serialize)]
struct Fields<'a> {
    seq: u64,
    actor: &'a PublicKey,
    action: AuditAction,
    target: &'a str,
    reason: &'a str,
}

impl AuditEntry {
    pub fn compute_digest(&self, prev: &Digest) -> Digest {
        let fields = Fields {
            seq: self.seq,
            actor: &self.actor,
            action: self.action,
            target: &self.target,
            reason: &self.reason,
        };
        digest_parts(&[prev.as_bytes(), &canonical_json(&fields)])
    }
}

/// Append-only, hash-chained log. Each digest covers the previous one.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AuditTrail {
    entries: Vec<AuditEntry>,
}

impl AuditTrail {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(
        &mut self,
        actor: PublicKey,
        action: AuditAction,
        target: impl Into<String>,
        reason: impl Into<String>,
    ) -> &AuditEntry {
        let prev = self.head();
        let mut entry = AuditEntry {
            seq: self.entries.len() as u64,
            actor,
            action,
            target: target.into(),
            reason: reason.into(),
            entry_digest: Digest::ZERO,
        };
        entry.entry_digest = entry.compute_digest(&prev);
        self.entries.push(entry);
        self.entries.last().expect("just pushed")
    }

    pub fn head(&self) -> Digest {
        self.entries.last().map_or(Digest::ZERO, |e| e.entry_digest)
    }

    pub fn entries(&self) -> &[AuditEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, action: AuditAction) -> usize {
        self.entries.iter().filter(|e| e.action == action).count()
    }
}

/// Recomputes the chain; `Err(i)` is the position of the first entry that
/// does not fit, either by digest or by sequence number.
pub fn verify_audit(entries: &[AuditEntry]) -> Result<(), u64> {
    let mut prev = Digest::ZERO;
    for (i, e) in entries.iter().enumerate() {
        if e.seq != i as u64 || e.compute_digest(&prev) != e.entry_digest {
            return Err(i as u64);
        }
        prev = e.entry_digest;
    }
    Ok(())
}

pub fn write_audit_file(path: &Path, entries: &[AuditEntry]) -> Result<(), OffchainError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for e in entries {
        out.write_all(&canonical_json(e))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_audit_file(path: &Path) -> Result<Vec<AuditEntry>, OffchainError> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut entries = Vec::new();
    for (i, line) in file.lines().enumerate() {
        let line = line?;
        let entry = parse_canonical(&line).map_err(|e| OffchainError::InvalidInput(format!("line {i}: {e}")))?;
        entries.push(entry);
    }
    Ok(entries)
}
