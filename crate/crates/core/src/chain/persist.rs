//! JSON-lines chain files: one canonical block object per line.

use std::io::{self, Write};
use std::path::Path;

use super::ledger::{ChainRejection, RejectReason};
use super::Block;
use crate::codec::{canonical_json, parse_canonical};

pub fn write_blocks<W: Write>(blocks: &[Block], mut out: W) -> io::Result<()> {
    for b in blocks {
        out.write_all(&canonical_json(b))?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn encode_blocks(blocks: &[Block]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_blocks(blocks, &mut buf).expect("writing to memory");
    buf
}

/// Parses a chain file. Any line that is not the canonical encoding of a
/// block is rejected at that line's height, so no edit to the file can
/// survive parsing unnoticed.
pub fn decode_blocks(bytes: &[u8]) -> Result<Vec<Block>, ChainRejection> {
    let body = match bytes.split_last() {
        None => return Err(ChainRejection::new(0, RejectReason::MissingGenesis, "empty chain file")),
        Some((b'\n', body)) => body,
        Some(_) => {
            let last = bytes.iter().filter(|b| **b == b'\n').count() as u64;
            return Err(ChainRejection::new(last, RejectReason::Malformed, "missing final newline"));
        }
    };
    body.split(|b| *b == b'\n')
        .enumerate()
        .map(|(i, line)| {
            let text = std::str::from_utf8(line)
                .map_err(|_| ChainRejection::new(i as u64, RejectReason::Malformed, "not utf-8"))?;
            parse_canonical::<Block>(text)
                .map_err(|e| ChainRejection::new(i as u64, RejectReason::Malformed, e.to_string()))
        })
        .collect()
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read chain file: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Rejected(#[from] ChainRejection),
}

pub fn read_chain_file(path: &Path) -> Result<Vec<Block>, LoadError> {
    Ok(decode_blocks(&std::fs::read(path)?)?)
}

pub fn write_chain_file(path: &Path, blocks: &[Block]) -> io::Result<()> {
    std::fs::write(path, encode_blocks(blocks))
}
