//! Command-line front end: runs scenario scripts and inspects chain files.
//!
//! Every command writes one JSON document to stdout. Diagnostics go to
//! stderr. Exit codes: 0 success, 1 assertion or verification failure,
//! 2 unusable input (bad script, unreadable file, bad selector).

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use ringchain::chain::{decode_blocks, verify_chain, Address, Block, ChainRejection, Replay};
use ringchain::codec::canonical_json;
use ringchain::contracts;
use ringchain::par::ExecMode;
use ringchain::scenario::{run_script, Script, ScenarioError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "ringchain", version, about = "Scenario runner and chain inspector")]
pub struct Cli {
    /// Run everything on one thread.
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario script against a fresh chain.
    Run {
        script: PathBuf,
        /// Overrides the seed in the script.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; defaults to `runs/<scenario name>`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Verify a chain file, then report on one block, account, or topic.
    Inspect {
        chain: PathBuf,
        #[command(flatten)]
        selector: Selector,
    },
    /// Verify a chain file by full replay.
    Verify { chain: PathBuf },
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct Selector {
    #[arg(long)]
    pub block: Option<u64>,
    #[arg(long)]
    pub account: Option<String>,
    #[arg(long)]
    pub topic: Option<String>,
}

impl Cli {
    fn mode(&self) -> ExecMode {
        if self.sequential {
            ExecMode::Sequential
        } else {
            ExecMode::Parallel
        }
    }
}

fn emit(out: &mut dyn Write, v: &Value) -> Result<()> {
    out.write_all(&canonical_json(v))?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Executes a parsed command line and returns the process exit code.
pub fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let mode = cli.mode();
    match &cli.command {
        Command::Run { script, seed, out: dir } => run(script, *seed, dir.as_deref(), mode, out, err),
        Command::Inspect { chain, selector } => inspect(chain, selector, mode, out, err),
        Command::Verify { chain } => {
            let blocks = match load(chain, mode, err)? {
                Loaded::Ok(blocks, replay) => (blocks, replay),
                Loaded::Rejected(r) => {
                    emit(out, &json!({ "valid": false, "height": r.height, "reason": r.reason, "detail": r.detail }))?;
                    return Ok(EXIT_FAILED);
                }
                Loaded::Unreadable => return Ok(EXIT_USAGE),
            };
            let (blocks, replay) = blocks;
            let tip = blocks.last().expect("verified chains have a genesis block");
            emit(
                out,
                &json!({
                    "valid": true,
                    "height": tip.height,
                    "tip_hash": tip.block_hash,
                    "state_digest": replay.state.digest(),
                }),
            )?;
            Ok(EXIT_OK)
        }
    }
}

fn run(
    path: &Path,
    seed: Option<u64>,
    dir: Option<&Path>,
    mode: ExecMode,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            writeln!(err, "cannot read {}: {e}", path.display())?;
            return Ok(EXIT_USAGE);
        }
    };
    let script = match Script::parse(&text) {
        Ok(s) => s,
        Err(e) => {
            writeln!(err, "{}: {e}", path.display())?;
            return Ok(EXIT_USAGE);
        }
    };
    let dir = dir.map(Path::to_path_buf).unwrap_or_else(|| Path::new("runs").join(&script.name));
    let outcome = match run_script(&script, seed.unwrap_or(script.seed), Some(&dir), mode) {
        Ok(o) => o,
        Err(e @ (ScenarioError::Parse(_) | ScenarioError::Invalid { .. })) => {
            writeln!(err, "{}: {e}", path.display())?;
            return Ok(EXIT_USAGE);
        }
        Err(e) => return Err(e).context("writing run output"),
    };
    let summary: Value = outcome
        .transcript
        .split(|b| *b == b'\n')
        .rfind(|l| !l.is_empty())
        .map(serde_json::from_slice)
        .transpose()?
        .unwrap_or(Value::Null);
    emit(out, &json!({ "out": dir, "summary": summary["summary"] }))?;
    for f in &outcome.failures {
        writeln!(err, "assertion failed at {f}")?;
    }
    Ok(if outcome.passed() { EXIT_OK } else { EXIT_FAILED })
}

enum Loaded {
    Ok(Vec<Block>, Replay),
    Rejected(ChainRejection),
    Unreadable,
}

fn load(path: &Path, mode: ExecMode, err: &mut dyn Write) -> Result<Loaded> {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) => {
            writeln!(err, "cannot read {}: {e}", path.display())?;
            return Ok(Loaded::Unreadable);
        }
    };
    let verdict = decode_blocks(&bytes).and_then(|blocks| {
        let replay = verify_chain(&blocks, &contracts::catalog(), mode)?;
        Ok((blocks, replay))
    });
    Ok(match verdict {
        Ok((blocks, replay)) => Loaded::Ok(blocks, replay),
        Err(r) => {
            writeln!(err, "verification failed at height {}: {} ({})", r.height, r.reason, r.detail)?;
            Loaded::Rejected(r)
        }
    })
}

fn inspect(path: &Path, sel: &Selector, mode: ExecMode, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let (blocks, replay) = match load(path, mode, err)? {
        Loaded::Ok(b, r) => (b, r),
        Loaded::Rejected(_) => return Ok(EXIT_FAILED),
        Loaded::Unreadable => return Ok(EXIT_USAGE),
    };
    let report = if let Some(h) = sel.block {
        let Some(block) = blocks.get(h as usize) else {
            writeln!(err, "no block at height {h}; tip is {}", blocks.len() - 1)?;
            return Ok(EXIT_USAGE);
        };
        json!({ "block": block, "receipts": replay.receipts[h as usize] })
    } else if let Some(a) = &sel.account {
        let Ok(address) = a.trim_start_matches("0x").parse::<Address>() else {
            writeln!(err, "not an address: {a}")?;
            return Ok(EXIT_USAGE);
        };
        match replay.state.account(&address) {
            Some(acct) => json!({
                "address": address,
                "balance": acct.balance,
                "nonce": acct.nonce,
                "contract": acct.contract,
                "storage_slots": acct.storage.len(),
            }),
            None => json!({ "address": address, "balance": 0, "nonce": 0, "contract": null, "storage_slots": 0 }),
        }
    } else {
        let topic = sel.topic.as_deref().expect("clap requires one selector");
        let logs: Vec<_> = replay
            .receipts
            .iter()
            .flatten()
            .flat_map(|r| r.logs.iter().filter(|l| l.topic == topic).map(move |l| (r, l)))
            .map(|(r, l)| json!({ "tx_digest": r.tx_digest, "log": l }))
            .collect();
        json!({ "topic": topic, "count": logs.len(), "logs": logs })
    };
    emit(out, &report)?;
    Ok(EXIT_OK)
}
