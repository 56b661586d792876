use std::collections::{BTreeMap, BTreeSet};
use std::sync::mpsc;
use std::thread;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{verify_connector, AuditAction, AuditTrail, ConnectorDescriptor, SiloStore};
use crate::codec::canonical_json;
use crate::crypto::{self, KeyPair, PublicKey, Signature};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AccessRight {
    Read,
    Write,
}

/// Lightweight checks, run in policy order; the first failure denies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    SignaturePresent,
    DescriptorValid,
    ActorAllowed,
    RecordExists,
}

impl Check {
    pub fn name(self) -> &'static str {
        match self {
            Check::SignaturePresent => "signature-present",
            Check::DescriptorValid => "descriptor-valid",
            Check::ActorAllowed => "actor-allowed",
            Check::RecordExists => "record-exists",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessPolicy {
    pub allowed: BTreeMap<PublicKey, BTreeSet<AccessRight>>,
    pub checks: Vec<Check>,
}

impl Default for AccessPolicy {
    fn default() -> Self {
        AccessPolicy {
            allowed: BTreeMap::new(),
            checks: vec![Check::SignaturePresent, Check::DescriptorValid, Check::ActorAllowed, Check::RecordExists],
        }
    }
}

impl AccessPolicy {
    pub fn allow(mut self, actor: PublicKey, rights: &[AccessRight]) -> Self {
        self.allowed.entry(actor).or_default().extend(rights.iter().copied());
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum ProxyOp {
    Read { record_id: String },
    Write { record_id: String, document: Value },
}

impl ProxyOp {
    pub fn record_id(&self) -> &str {
        match self {
            ProxyOp::Read { record_id } | ProxyOp::Write { record_id, .. } => record_id,
        }
    }

    fn right(&self) -> AccessRight {
        match self {
            ProxyOp::Read { .. } => AccessRight::Read,
            ProxyOp::Write { .. } => AccessRight::Write,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProxyRequest {
    pub actor: PublicKey,
    pub descriptor: ConnectorDescriptor,
    pub op: ProxyOp,
    pub signature: Option<Signature>,
}

#[derive(Serialize)]
struct SignedRequest<'a> {
    descriptor: &'a ConnectorDescriptor,
    op: &'a ProxyOp,
}

impl ProxyRequest {
    pub fn signed_bytes(descriptor: &ConnectorDescriptor, op: &ProxyOp) -> Vec<u8> {
        canonical_json(&SignedRequest { descriptor, op })
    }

    pub fn new(actor: &KeyPair, descriptor: ConnectorDescriptor, op: ProxyOp) -> Self {
        let signature = actor.sign(&Self::signed_bytes(&descriptor, &op));
        ProxyRequest { actor: actor.public_key(), descriptor, op, signature: Some(signature) }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProxyOutcome {
    /// The document for reads, null for writes.
    Granted(Value),
    /// Names the failed check. A denial is a result, not an error.
    Denied(String),
}

impl ProxyOutcome {
    pub fn is_granted(&self) -> bool {
        matches!(self, ProxyOutcome::Granted(_))
    }
}

/// Gatekeeper in front of the silos. Every request, granted or denied,
/// appends exactly one audit entry.
#[derive(Debug)]
pub struct DatabaseProxy {
    pub policy: AccessPolicy,
    pub store: SiloStore,
    pub trail: AuditTrail,
}

impl DatabaseProxy {
    pub fn new(policy: AccessPolicy, store: SiloStore) -> Self {
        DatabaseProxy { policy, store, trail: AuditTrail::new() }
    }

    fn run_check(&self, check: Check, req: &ProxyRequest) -> bool {
        match check {
            Check::SignaturePresent => req.signature.as_ref().is_some_and(|sig| {
                crypto::verify(&req.actor, &ProxyRequest::signed_bytes(&req.descriptor, &req.op), sig)
            }),
            Check::DescriptorValid => req
                .descriptor
                .silo_id()
                .and_then(|id| self.store.get(id))
                .is_some_and(|silo| verify_connector(&req.descriptor, &silo.owner())),
            Check::ActorAllowed => self.policy.allowed.get(&req.actor).is_some_and(|r| r.contains(&req.op.right())),
            Check::RecordExists => match &req.op {
                ProxyOp::Read { record_id } => self.silo_for(req).is_some_and(|s| s.get(record_id).is_some()),
                ProxyOp::Write { .. } => true,
            },
        }
    }

    fn silo_for(&self, req: &ProxyRequest) -> Option<&super::DataSilo> {
        req.descriptor.silo_id().and_then(|id| self.store.get(id))
    }

    /// Connector handler: resolves the silo and performs the operation.
    fn forward(&mut self, req: &ProxyRequest) -> Result<Value, Check> {
        let silo_id = req.descriptor.silo_id().ok_or(Check::DescriptorValid)?.to_string();
        let silo = self.store.get_mut(&silo_id).ok_or(Check::DescriptorValid)?;
        match &req.op {
            ProxyOp::Read { record_id } => silo.get(record_id).cloned().ok_or(Check::RecordExists),
            ProxyOp::Write { record_id, document } => {
                silo.put(record_id.clone(), document.clone());
                Ok(Value::Null)
            }
        }
    }

    pub fn handle(&mut self, req: &ProxyRequest) -> ProxyOutcome {
        let target = req.op.record_id().to_string();
        let failed = self.policy.checks.iter().copied().find(|c| !self.run_check(*c, req));
        let result = match failed {
            Some(c) => Err(c),
            None => self.forward(req),
        };
        match result {
            Ok(v) => {
                let action = match req.op {
                    ProxyOp::Read { .. } => AuditAction::Read,
                    ProxyOp::Write { .. } => AuditAction::Write,
                };
                self.trail.append(req.actor, action, target, "");
                ProxyOutcome::Granted(v)
            }
            Err(c) => {
                self.trail.append(req.actor, AuditAction::Denied, target, c.name());
                ProxyOutcome::Denied(c.name().to_string())
            }
        }
    }

    /// Runs the proxy on its own thread; the returned handle is the only way
    /// in, so requests from any number of threads are applied one at a time.
    pub fn spawn(self) -> ProxyHandle {
        let (tx, rx) = mpsc::channel::<Msg>();
        thread::spawn(move || {
            let mut proxy = self;
            for msg in rx {
                match msg {
                    Msg::Request(req, reply) => {
                        let _ = reply.send(proxy.handle(&req));
                    }
                    Msg::Record { actor, action, target, reason, reply } => {
                        proxy.trail.append(actor, action, target, reason);
                        let _ = reply.send(());
                    }
                    Msg::Shutdown(reply) => {
                        let _ = reply.send(proxy);
                        return;
                    }
                }
            }
        });
        ProxyHandle { tx }
    }
}

enum Msg {
    Request(Box<ProxyRequest>, mpsc::Sender<ProxyOutcome>),
    Record {
        actor: PublicKey,
        action: AuditAction,
        target: String,
        reason: String,
        reply: mpsc::Sender<()>,
    },
    Shutdown(mpsc::Sender<DatabaseProxy>),
}

#[derive(Clone)]
pub struct ProxyHandle {
    tx: mpsc::Sender<Msg>,
}

const WORKER_GONE: &str = "proxy worker stopped";

impl ProxyHandle {
    pub fn submit(&self, req: ProxyRequest) -> ProxyOutcome {
        let (reply, rx) = mpsc::channel();
        self.tx.send(Msg::Request(Box::new(req), reply)).expect(WORKER_GONE);
        rx.recv().expect(WORKER_GONE)
    }

    /// Appends a token operation to the same trail as proxy requests.
    pub fn record(&self, actor: PublicKey, action: AuditAction, target: impl Into<String>, reason: impl Into<String>) {
        let (reply, rx) = mpsc::channel();
        let msg = Msg::Record { actor, action, target: target.into(), reason: reason.into(), reply };
        self.tx.send(msg).expect(WORKER_GONE);
        rx.recv().expect(WORKER_GONE)
    }

    /// Stops the worker and hands back its state.
    pub fn shutdown(self) -> DatabaseProxy {
        let (reply, rx) = mpsc::channel();
        self.tx.send(Msg::Shutdown(reply)).expect(WORKER_GONE);
        rx.recv().expect(WORKER_GONE)
    }
}
