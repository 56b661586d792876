//! Off-chain delivery for the publisher hub: a polling messenger that turns
//! committed hub events into per-subscriber notifications, and an oracle
//! that serves push-mode tasks through callback transactions.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::chain::{Address, Chain, Payload, ReceiptStatus, Transaction, TxRequest};
use crate::codec::canonical_json;
use crate::contracts::hub::{
    DeliveredEvent, SubscriptionTable, TOPIC_DELIVERED, TOPIC_ORACLE_TASK,
};
use crate::crypto::{digest, Digest, KeyPair};

pub const CURSOR_FILE: &str = "messenger-cursor.json";
pub const OUTBOX_DIR: &str = "notifications";

#[derive(Debug, Error)]
pub enum NotifyError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("cursor {cursor} is past the chain tip {tip}")]
    CursorAhead { cursor: u64, tip: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Notification {
    pub topic: String,
    pub subscriber: Address,
    pub publisher: Address,
    pub sequence: u64,
    /// Height of the block the notification was read from.
    pub delivered_at: u64,
}

impl Notification {
    /// The identity that must be delivered exactly once.
    pub fn key(&self) -> (String, u64, Address) {
        (self.topic.clone(), self.sequence, self.subscriber)
    }
}

#[derive(Serialize, Deserialize)]
struct CursorFile {
    hub: Address,
    cursor: u64,
    table: SubscriptionTable,
}

/// Watches one hub. Persists its cursor together with the subscription
/// table rebuilt so far, so a restarted messenger resumes without gaps.
#[derive(Clone, Debug)]
pub struct Messenger {
    pub hub: Address,
    pub cursor: u64,
    pub table: SubscriptionTable,
    dir: Option<PathBuf>,
}

impl Messenger {
    pub fn new(hub: Address) -> Self {
        Messenger { hub, cursor: 0, table: SubscriptionTable::default(), dir: None }
    }

    /// A messenger that writes its cursor file and outbox under `dir`,
    /// resuming from an existing cursor file if there is one.
    pub fn open(hub: Address, dir: &Path) -> Result<Self, NotifyError> {
        let path = dir.join(CURSOR_FILE);
        let mut m = Messenger::new(hub);
        if path.exists() {
            let saved: CursorFile = serde_json::from_slice(&std::fs::read(&path)?)?;
            if saved.hub == hub {
                m.cursor = saved.cursor;
                m.table = saved.table;
            }
        }
        m.dir = Some(dir.to_path_buf());
        Ok(m)
    }

    /// Scans blocks in `(cursor, tip]` and returns their notifications in
    /// chain order. Polling again without new blocks returns nothing.
    pub fn poll_once(&mut self, chain: &Chain) -> Result<Vec<Notification>, NotifyError> {
        let tip = chain.height();
        if self.cursor > tip {
            return Err(NotifyError::CursorAhead { cursor: self.cursor, tip });
        }
        let mut out = Vec::new();
        for h in self.cursor + 1..=tip {
            for receipt in chain.receipts(h) {
                for log in &receipt.logs {
                    if log.emitter != self.hub {
                        continue;
                    }
                    if log.topic == TOPIC_DELIVERED {
                        if let Ok(d) = serde_json::from_value::<DeliveredEvent>(log.data.clone()) {
                            out.extend(d.subscribers.iter().map(|s| Notification {
                                topic: d.topic.clone(),
                                subscriber: *s,
                                publisher: d.publisher,
                                sequence: d.sequence,
                                delivered_at: h,
                            }));
                        }
                    } else if let Some(p) = self.table.apply(&self.hub, log) {
                        out.extend(self.table.subscribers(&log.topic).map(|s| Notification {
                            topic: log.topic.clone(),
                            subscriber: *s,
                            publisher: p.publisher,
                            sequence: p.sequence,
                            delivered_at: h,
                        }));
                    }
                }
            }
        }
        if let Some(dir) = &self.dir {
            write_outbox(dir, &out)?;
        }
        self.cursor = tip;
        self.save()?;
        Ok(out)
    }

    fn save(&self) -> Result<(), NotifyError> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        let file = CursorFile { hub: self.hub, cursor: self.cursor, table: self.table.clone() };
        let tmp = dir.join(format!("{CURSOR_FILE}.tmp"));
        std::fs::write(&tmp, canonical_json(&file))?;
        std::fs::rename(tmp, dir.join(CURSOR_FILE))?;
        Ok(())
    }
}

/// Appends each notification to `notifications/{subscriber}.jsonl`.
pub fn write_outbox(dir: &Path, notes: &[Notification]) -> Result<(), NotifyError> {
    let outbox = dir.join(OUTBOX_DIR);
    std::fs::create_dir_all(&outbox)?;
    let mut by_sub: BTreeMap<Address, Vec<&Notification>> = BTreeMap::new();
    for n in notes {
        by_sub.entry(n.subscriber).or_default().push(n);
    }
    for (sub, notes) in by_sub {
        let mut f = OpenOptions::new().create(true).append(true).open(outbox.join(format!("{sub}.jsonl")))?;
        let mut buf = Vec::new();
        for n in notes {
            buf.extend(canonical_json(n));
            buf.push(b'\n');
        }
        f.write_all(&buf)?;
    }
    Ok(())
}

/// A unit of push-mode work announced by a hub.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleTask {
    pub task_id: Digest,
    pub topic: String,
    pub sequence: u64,
    pub payload_ref: String,
    pub callback: (Address, String),
    pub fee: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleFailure {
    pub task_id: Digest,
    pub reason: String,
}

#[derive(Deserialize)]
struct TaskEvent {
    task_id: Digest,
    topic: String,
    sequence: u64,
    payload_ref: String,
    callback: CallbackRef,
    fee: u64,
}

#[derive(Deserialize)]
struct CallbackRef {
    contract: Address,
    method: String,
}

/// Trusted off-chain worker with its own keys and balance. Each task ends
/// as exactly one callback transaction or one recorded failure; there are
/// no retries.
#[derive(Debug)]
pub struct Oracle {
    pub keys: KeyPair,
    pub hub: Address,
    pub gas_limit: u64,
    pub gas_price: u64,
    cursor: u64,
    settled: u64,
    inflight: BTreeMap<Digest, Digest>,
    pub failures: Vec<OracleFailure>,
    pub delivered: Vec<Digest>,
}

impl Oracle {
    pub fn new(keys: KeyPair, hub: Address) -> Self {
        Oracle {
            keys,
            hub,
            gas_limit: 200_000,
            gas_price: 1,
            cursor: 0,
            settled: 0,
            inflight: BTreeMap::new(),
            failures: Vec::new(),
            delivered: Vec::new(),
        }
    }

    pub fn address(&self) -> Address {
        Address::from_public_key(&self.keys.public_key())
    }

    /// Tasks announced in blocks after the last scan.
    pub fn scan(&mut self, chain: &Chain) -> Vec<OracleTask> {
        let mut tasks = Vec::new();
        for h in self.cursor + 1..=chain.height() {
            for receipt in chain.receipts(h) {
                for log in receipt.logs.iter().filter(|l| l.emitter == self.hub && l.topic == TOPIC_ORACLE_TASK) {
                    if let Ok(t) = serde_json::from_value::<TaskEvent>(log.data.clone()) {
                        tasks.push(OracleTask {
                            task_id: t.task_id,
                            topic: t.topic,
                            sequence: t.sequence,
                            payload_ref: t.payload_ref,
                            callback: (t.callback.contract, t.callback.method),
                            fee: t.fee,
                        });
                    }
                }
            }
        }
        self.cursor = chain.height();
        tasks
    }

    /// Performs the task and submits its callback, or records why it could
    /// not be submitted.
    pub fn process(&mut self, chain: &mut Chain, task: &OracleTask) -> Option<Transaction> {
        let me = self.address();
        let (contract, method) = &task.callback;
        let escrow = chain.view(me, *contract, "escrow", vec![]).ok().and_then(|v| v.as_u64()).unwrap_or(0);
        if escrow < task.fee {
            self.fail(task.task_id, "insufficient-escrow");
            return None;
        }
        if (chain.state().balance(&me) as u128) < self.gas_limit as u128 * self.gas_price as u128 {
            self.fail(task.task_id, "oracle-cannot-pay-gas");
            return None;
        }
        let result = json!({ "payload_ref": task.payload_ref, "digest": digest(task.payload_ref.as_bytes()) });
        let tx = TxRequest {
            nonce: chain.next_nonce(&me),
            recipient: Some(*contract),
            payload: Payload::call(*contract, method.clone(), vec![json!(task.task_id), result]),
            value: 0,
            gas_limit: self.gas_limit,
            gas_price: self.gas_price,
        }
        .sign(&self.keys);
        self.inflight.insert(tx.digest(), task.task_id);
        chain.submit(tx.clone());
        Some(tx)
    }

    /// Scans and processes every new task. Returns how many callbacks were
    /// submitted.
    pub fn run(&mut self, chain: &mut Chain) -> usize {
        let tasks = self.scan(chain);
        tasks.iter().filter_map(|t| self.process(chain, t)).count()
    }

    /// Matches mined receipts against submitted callbacks. A callback that
    /// did not succeed, or left the pending pool without being mined, is
    /// recorded as a failure.
    pub fn settle(&mut self, chain: &Chain) {
        for h in self.settled + 1..=chain.height() {
            for receipt in chain.receipts(h) {
                let Some(task_id) = self.inflight.remove(&receipt.tx_digest) else {
                    continue;
                };
                if receipt.status == ReceiptStatus::Succeeded {
                    self.delivered.push(task_id);
                } else {
                    let reason = receipt.revert_reason.clone().unwrap_or_else(|| "out-of-gas".into());
                    self.fail(task_id, &reason);
                }
            }
        }
        self.settled = chain.height();
        let pending: Vec<Digest> = chain.pending().iter().map(Transaction::digest).collect();
        let dropped: Vec<Digest> = self.inflight.keys().filter(|d| !pending.contains(d)).copied().collect();
        for tx in dropped {
            let task_id = self.inflight.remove(&tx).expect("listed above");
            self.fail(task_id, "not-mined");
        }
    }

    fn fail(&mut self, task_id: Digest, reason: &str) {
        self.failures.push(OracleFailure { task_id, reason: reason.into() });
    }

    pub fn pending_callbacks(&self) -> usize {
        self.inflight.len()
    }
}

/// Brute-force oracle for deliveries: replays every hub event from genesis.
pub fn recount_deliveries(chain: &Chain, hub: Address) -> Vec<Notification> {
    let mut m = Messenger::new(hub);
    m.poll_once(chain).expect("fresh messenger starts at genesis")
}

/// Per-topic notification counts, for reports.
pub fn summarize(notes: &[Notification]) -> Value {
    let mut per_topic: BTreeMap<&str, usize> = BTreeMap::new();
    for n in notes {
        *per_topic.entry(&n.topic).or_default() += 1;
    }
    json!({ "total": notes.len(), "per_topic": per_topic })
}
