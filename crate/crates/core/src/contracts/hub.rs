//! Publisher/subscriber hub with two delivery variants.
//!
//! In `poll` mode a publish only bumps the topic's sequence number and emits
//! a log event under the topic itself; an off-chain messenger watches the
//! chain and fans out notifications. In `push` mode a publish snapshots the
//! subscriber set into an oracle task; the oracle calls `deliver` back,
//! which writes each subscriber's inbox slot and pays the oracle's fee out of
//! the hub's escrow.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::chain::Address;
use crate::crypto::{digest_parts, Digest};
use crate::vm::{args, revert, CallContext, LogEvent, Prototype, VmError};

pub const PUBLISHER_HUB: &str = "publisher_hub";

pub const TOPIC_SUBSCRIBE: &str = "hub/subscribe";
pub const TOPIC_UNSUBSCRIBE: &str = "hub/unsubscribe";
pub const TOPIC_DELIVERED: &str = "hub/delivered";
pub const TOPIC_ORACLE_TASK: &str = "oracle/task";

pub const REASON_EMPTY_TOPIC: &str = "empty-topic";
pub const REASON_RESERVED_TOPIC: &str = "reserved-topic";
pub const REASON_NOT_ORACLE: &str = "not-oracle";
pub const REASON_NOT_PUSH: &str = "not-push-mode";
pub const REASON_UNKNOWN_TASK: &str = "unknown-task";
pub const REASON_ALREADY_DELIVERED: &str = "already-delivered";
pub const REASON_INSUFFICIENT_ESCROW: &str = "insufficient-escrow";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HubMode {
    Poll,
    Push,
}

/// Topics under these prefixes belong to the hub's own bookkeeping events.
pub fn is_reserved_topic(topic: &str) -> bool {
    topic.starts_with("hub/") || topic.starts_with("oracle/")
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublishEvent {
    pub publisher: Address,
    pub sequence: u64,
    pub payload_ref: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubscriptionEvent {
    pub subscriber: Address,
    pub topic: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HubTask {
    pub task_id: Digest,
    pub topic: String,
    pub sequence: u64,
    pub publisher: Address,
    pub payload_ref: String,
    pub subscribers: Vec<Address>,
    pub fee: u64,
    pub delivered: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveredEvent {
    pub task_id: Digest,
    pub topic: String,
    pub sequence: u64,
    pub publisher: Address,
    pub subscribers: Vec<Address>,
    pub result: Value,
}

pub fn task_id(hub: &Address, topic: &str, sequence: u64) -> Digest {
    digest_parts(&[b"hub-task", hub.as_bytes(), topic.as_bytes(), &sequence.to_be_bytes()])
}

/// Off-chain mirror of a hub's subscriptions, rebuilt from its events.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubscriptionTable {
    pub topics: BTreeMap<String, BTreeSet<Address>>,
    pub latest: BTreeMap<String, (Address, u64)>,
}

impl SubscriptionTable {
    pub fn subscribers(&self, topic: &str) -> impl Iterator<Item = &Address> {
        self.topics.get(topic).into_iter().flatten()
    }

    /// Applies one event emitted by `hub`; returns the publish it carried, if any.
    pub fn apply(&mut self, hub: &Address, event: &LogEvent) -> Option<PublishEvent> {
        if event.emitter != *hub {
            return None;
        }
        match event.topic.as_str() {
            TOPIC_SUBSCRIBE | TOPIC_UNSUBSCRIBE => {
                let sub: SubscriptionEvent = serde_json::from_value(event.data.clone()).ok()?;
                let set = self.topics.entry(sub.topic.clone()).or_default();
                if event.topic == TOPIC_SUBSCRIBE {
                    set.insert(sub.subscriber);
                } else {
                    set.remove(&sub.subscriber);
                    if set.is_empty() {
                        self.topics.remove(&sub.topic);
                    }
                }
                None
            }
            t if is_reserved_topic(t) => None,
            t => {
                let publish: PublishEvent = serde_json::from_value(event.data.clone()).ok()?;
                self.latest.insert(t.to_string(), (publish.publisher, publish.sequence));
                Some(publish)
            }
        }
    }
}

fn subs_key(topic: &str) -> String {
    format!("subs/{topic}")
}

fn seq_key(topic: &str) -> String {
    format!("seq/{topic}")
}

fn latest_key(topic: &str) -> String {
    format!("latest/{topic}")
}

fn task_key(id: &Digest) -> String {
    format!("task/{id}")
}

fn inbox_key(subscriber: &Address, topic: &str) -> String {
    format!("inbox/{subscriber}/{topic}")
}

const MODE: &str = "mode";
const ORACLE: &str = "oracle";
const FEE: &str = "fee";
const ESCROW: &str = "escrow";

fn topic_arg(a: &[Value], i: usize) -> Result<String, VmError> {
    let topic = args::string(a, i)?;
    if topic.is_empty() {
        return Err(revert(REASON_EMPTY_TOPIC));
    }
    if is_reserved_topic(&topic) {
        return Err(revert(REASON_RESERVED_TOPIC));
    }
    Ok(topic)
}

fn subscribers(ctx: &mut CallContext<'_, '_>, topic: &str) -> Result<Vec<Address>, VmError> {
    Ok(ctx.load(&subs_key(topic))?.unwrap_or_default())
}

pub struct PublisherHub;

impl PublisherHub {
    fn set_subscription(ctx: &mut CallContext<'_, '_>, a: &[Value], on: bool) -> Result<Value, VmError> {
        let topic = topic_arg(a, 0)?;
        let who = ctx.caller();
        let mut subs = subscribers(ctx, &topic)?;
        let pos = subs.binary_search(&who);
        match (on, pos) {
            (true, Err(i)) => subs.insert(i, who),
            (false, Ok(i)) => {
                subs.remove(i);
            }
            // already in the requested state
            _ => return Ok(json!(false)),
        }
        if subs.is_empty() {
            ctx.remove(&subs_key(&topic))?;
        } else {
            ctx.store(&subs_key(&topic), &subs)?;
        }
        let event = SubscriptionEvent { subscriber: who, topic };
        ctx.emit(if on { TOPIC_SUBSCRIBE } else { TOPIC_UNSUBSCRIBE }, json!(event))?;
        Ok(json!(true))
    }

    fn publish(ctx: &mut CallContext<'_, '_>, a: &[Value]) -> Result<Value, VmError> {
        let topic = topic_arg(a, 0)?;
        let payload_ref = args::string(a, 1)?;
        let publisher = ctx.caller();
        let sequence = ctx.load::<u64>(&seq_key(&topic))?.unwrap_or(0) + 1;
        ctx.store(&seq_key(&topic), &sequence)?;
        ctx.store(&latest_key(&topic), &(publisher, sequence))?;
        let mode: HubMode = ctx.load(MODE)?.expect("set in constructor");
        match mode {
            HubMode::Poll => {
                let event = PublishEvent { publisher, sequence, payload_ref };
                ctx.emit(topic, json!(event))?;
            }
            HubMode::Push => {
                let hub = ctx.address();
                let task = HubTask {
                    task_id: task_id(&hub, &topic, sequence),
                    subscribers: subscribers(ctx, &topic)?,
                    fee: ctx.load(FEE)?.unwrap_or(0),
                    topic,
                    sequence,
                    publisher,
                    payload_ref,
                    delivered: false,
                };
                ctx.store(&task_key(&task.task_id), &task)?;
                ctx.emit(
                    TOPIC_ORACLE_TASK,
                    json!({
                        "task_id": task.task_id,
                        "topic": task.topic,
                        "sequence": sequence,
                        "payload_ref": task.payload_ref,
                        "callback": { "contract": hub, "method": "deliver" },
                        "fee": task.fee,
                    }),
                )?;
            }
        }
        Ok(json!(sequence))
    }

    fn deliver(ctx: &mut CallContext<'_, '_>, a: &[Value]) -> Result<Value, VmError> {
        let id: Digest = args::decode(a, 0)?;
        let result = args::value(a, 1).unwrap_or(Value::Null);
        let oracle: Option<Address> = ctx.load(ORACLE)?;
        if oracle != Some(ctx.caller()) {
            return Err(revert(REASON_NOT_ORACLE));
        }
        let mut task: HubTask = ctx.load(&task_key(&id))?.ok_or_else(|| revert(REASON_UNKNOWN_TASK))?;
        if task.delivered {
            return Err(revert(REASON_ALREADY_DELIVERED));
        }
        let escrow: u64 = ctx.load(ESCROW)?.unwrap_or(0);
        if escrow < task.fee {
            return Err(revert(REASON_INSUFFICIENT_ESCROW));
        }
        ctx.store(ESCROW, &(escrow - task.fee))?;
        for sub in &task.subscribers {
            ctx.store(&inbox_key(sub, &task.topic), &task.sequence)?;
        }
        task.delivered = true;
        ctx.store(&task_key(&id), &task)?;
        let oracle = oracle.expect("checked above");
        if task.fee > 0 && !ctx.transfer(oracle, task.fee)? {
            return Err(revert("fee-transfer-failed"));
        }
        let event = DeliveredEvent {
            task_id: id,
            topic: task.topic,
            sequence: task.sequence,
            publisher: task.publisher,
            subscribers: task.subscribers,
            result,
        };
        ctx.emit(TOPIC_DELIVERED, json!(event))?;
        Ok(json!(event.subscribers.len()))
    }
}

impl Prototype for PublisherHub {
    fn name(&self) -> &'static str {
        PUBLISHER_HUB
    }

    fn methods(&self) -> &'static [&'static str] {
        &[
            "subscribe",
            "unsubscribe",
            "publish",
            "fund",
            "deliver",
            "subscribers",
            "latest",
            "inbox",
            "escrow",
            "fee",
            "mode",
            "task",
        ]
    }

    /// Args: `[mode, oracle|null, fee]`; push mode requires an oracle.
    fn construct(&self, ctx: &mut CallContext<'_, '_>, a: &[Value]) -> Result<(), VmError> {
        let mode: HubMode = args::decode(a, 0)?;
        let oracle = args::opt_address(a, 1)?;
        let fee = if a.len() > 2 { args::u64(a, 2)? } else { 0 };
        if mode == HubMode::Push && oracle.is_none() {
            return Err(revert("push mode needs an oracle"));
        }
        ctx.store(MODE, &mode)?;
        if let Some(o) = oracle {
            ctx.store(ORACLE, &o)?;
        }
        ctx.store(FEE, &fee)?;
        let initial = ctx.value();
        ctx.store(ESCROW, &initial)
    }

    fn invoke(&self, ctx: &mut CallContext<'_, '_>, method: &str, a: &[Value]) -> Result<Value, VmError> {
        match method {
            "subscribe" => Self::set_subscription(ctx, a, true),
            // unsubscribing a non-subscriber is a no-op
            "unsubscribe" => Self::set_subscription(ctx, a, false),
            "publish" => Self::publish(ctx, a),
            "fund" => {
                let escrow: u64 = ctx.load(ESCROW)?.unwrap_or(0);
                let total = escrow + ctx.value();
                ctx.store(ESCROW, &total)?;
                Ok(json!(total))
            }
            "deliver" => {
                if ctx.load::<HubMode>(MODE)? != Some(HubMode::Push) {
                    return Err(revert(REASON_NOT_PUSH));
                }
                Self::deliver(ctx, a)
            }
            "subscribers" => {
                let topic = args::string(a, 0)?;
                Ok(json!(subscribers(ctx, &topic)?))
            }
            "latest" => {
                let topic = args::string(a, 0)?;
                Ok(ctx.load::<Value>(&latest_key(&topic))?.unwrap_or(Value::Null))
            }
            "inbox" => {
                let sub = args::address(a, 0)?;
                let topic = args::string(a, 1)?;
                Ok(json!(ctx.load::<u64>(&inbox_key(&sub, &topic))?))
            }
            "escrow" => Ok(json!(ctx.load::<u64>(ESCROW)?.unwrap_or(0))),
            "fee" => Ok(json!(ctx.load::<u64>(FEE)?.unwrap_or(0))),
            "mode" => Ok(json!(ctx.load::<HubMode>(MODE)?)),
            "task" => {
                let id: Digest = args::decode(a, 0)?;
                Ok(ctx.load::<Value>(&task_key(&id))?.unwrap_or(Value::Null))
            }
            _ => unreachable!("dispatch checks methods()"),
        }
    }
}
