use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use super::script::{Assertion, Cmp, Expect, ProxyExpect, ProxyOpKind, Script, Step};
use super::sim::Sim;
use super::ScenarioError;
use crate::chain::{encode_blocks, Address, Receipt, ReceiptStatus};
use crate::codec::canonical_json;
use crate::contracts::token::{AUDIT_TOPIC, TOKEN_REGISTRY};
use crate::contracts::{TokenAction, TokenRecord, TokenStatus};
use crate::crypto::{digest, Digest};
use crate::notify::{Messenger, Notification, Oracle};
use crate::offchain::{
    create_connector, redeem_token, tokenize_connector, verify_audit, write_audit_file, AccessPolicy,
    AuditAction, ConnectorDescriptor, DataSilo, DatabaseProxy, ProxyOp, ProxyOutcome, ProxyRequest, SiloStore,
    TokenLabels, DEFAULT_DESCRIPTOR_BOUND,
};
use crate::par::ExecMode;

pub const TRANSCRIPT_FILE: &str = "transcript.jsonl";
pub const CHAIN_FILE: &str = "chain.jsonl";
pub const AUDIT_FILE: &str = "audit.jsonl";

/// Everything a run produced.
pub struct RunOutcome {
    pub transcript: Vec<u8>,
    pub chain: Vec<u8>,
    /// Failing assertions, each prefixed with its step path.
    pub failures: Vec<String>,
    pub assertions: usize,
    pub runner: Runner,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Runs `script` against a fresh chain. With `out`, writes the transcript,
/// chain, audit trail, silos, and messenger state under that directory.
pub fn run_script(script: &Script, seed: u64, out: Option<&Path>, mode: ExecMode) -> Result<RunOutcome, ScenarioError> {
    let config = script.chain_config()?;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
    }
    let mut runner = Runner {
        sim: Sim::new(seed, config, mode),
        vars: BTreeMap::new(),
        pending: Vec::new(),
        labels: BTreeMap::new(),
        tags: BTreeMap::new(),
        messengers: BTreeMap::new(),
        oracles: BTreeMap::new(),
        proxy: DatabaseProxy::new(AccessPolicy::default(), SiloStore::new()),
        records: Vec::new(),
        failures: Vec::new(),
        assertions: 0,
        out: out.map(Path::to_path_buf),
        auto_label: 0,
    };
    for (i, step) in script.steps.iter().enumerate() {
        runner.step(&i.to_string(), step)?;
    }
    let mut summary = runner.summary();
    summary["scenario"] = json!(script.name);
    summary["seed"] = json!(seed);
    runner.records.push(json!({ "summary": summary }));

    let mut transcript = Vec::new();
    for r in &runner.records {
        transcript.extend(canonical_json(r));
        transcript.push(b'\n');
    }
    let chain = runner.sim.chain_ref().map(|c| encode_blocks(c.blocks())).unwrap_or_default();
    if let Some(dir) = out {
        std::fs::write(dir.join(TRANSCRIPT_FILE), &transcript)?;
        std::fs::write(dir.join(CHAIN_FILE), &chain)?;
        if !runner.proxy.trail.is_empty() {
            write_audit_file(&dir.join(AUDIT_FILE), runner.proxy.trail.entries())
                .map_err(|e| ScenarioError::Io(std::io::Error::other(e.to_string())))?;
        }
    }
    Ok(RunOutcome {
        transcript,
        chain,
        failures: runner.failures.clone(),
        assertions: runner.assertions,
        runner,
    })
}

struct Pending {
    digest: Digest,
    label: String,
    tag: Option<String>,
    expect: Option<ReceiptStatus>,
    path: String,
    /// Token registry call, mirrored into the off-chain audit trail.
    token_op: Option<(Address, String)>,
}

/// Interpreter state for one scenario run.
pub struct Runner {
    pub sim: Sim,
    pub vars: BTreeMap<String, Value>,
    pending: Vec<Pending>,
    labels: BTreeMap<String, Digest>,
    tags: BTreeMap<String, Vec<Digest>>,
    messengers: BTreeMap<String, (Messenger, Vec<Notification>)>,
    pub oracles: BTreeMap<String, Oracle>,
    pub proxy: DatabaseProxy,
    records: Vec<Value>,
    failures: Vec<String>,
    assertions: usize,
    out: Option<PathBuf>,
    auto_label: u64,
}

fn invalid(path: &str, msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid { step: path.to_string(), message: msg.into() }
}

fn substitute(v: &Value, var: &str, i: u64) -> Value {
    match v {
        Value::String(s) => Value::String(s.replace(&format!("{{{var}}}"), &i.to_string())),
        Value::Array(a) => Value::Array(a.iter().map(|x| substitute(x, var, i)).collect()),
        Value::Object(o) => Value::Object(o.iter().map(|(k, x)| (k.clone(), substitute(x, var, i))).collect()),
        other => other.clone(),
    }
}

fn as_number(v: &Value) -> Option<f64> {
    v.as_f64()
}

/// Checks every bound in `cmp`; returns the failed ones.
fn compare(actual: &Value, cmp: &Cmp) -> Vec<String> {
    let mut bad = Vec::new();
    if let Some(e) = &cmp.eq {
        if actual != e && !(as_number(actual).is_some() && as_number(actual) == as_number(e)) {
            bad.push(format!("expected == {e}"));
        }
    }
    if let Some(e) = &cmp.ne {
        if actual == e {
            bad.push(format!("expected != {e}"));
        }
    }
    type Bound<'a> = (&'a Option<Value>, &'static str, fn(f64, f64) -> bool);
    let ordered: [Bound; 4] = [
        (&cmp.gt, ">", |a, b| a > b),
        (&cmp.ge, ">=", |a, b| a >= b),
        (&cmp.lt, "<", |a, b| a < b),
        (&cmp.le, "<=", |a, b| a <= b),
    ];
    for (bound, op, f) in ordered {
        if let Some(b) = bound {
            match (as_number(actual), as_number(b)) {
                (Some(a), Some(b)) if f(a, b) => {}
                _ => bad.push(format!("expected {op} {b}")),
            }
        }
    }
    bad
}

impl Runner {
    fn record(&mut self, kind: &str, body: Value) {
        let mut obj = Map::new();
        obj.insert("event".into(), json!(kind));
        if let Value::Object(m) = body {
            obj.extend(m);
        }
        self.records.push(Value::Object(obj));
    }

    fn check(&mut self, path: &str, what: &str, actual: Value, problems: Vec<String>) {
        self.assertions += 1;
        let pass = problems.is_empty();
        if !pass {
            self.failures.push(format!("step {path}: {what}: got {actual}; {}", problems.join(", ")));
        }
        self.record("assert", json!({ "step": path, "check": what, "pass": pass, "actual": actual, "problems": problems }));
    }

    fn resolve(&self, path: &str, v: &Value) -> Result<Value, ScenarioError> {
        Ok(match v {
            Value::String(s) if s.starts_with('@') => json!(self.address(path, s)?),
            Value::String(s) if s.starts_with('$') => {
                // `$name.field.sub` walks into objects
                let mut parts = s[1..].split('.');
                let head = parts.next().unwrap_or_default();
                let mut v = self.vars.get(head).ok_or_else(|| invalid(path, format!("unbound variable {s}")))?;
                for p in parts {
                    v = v.get(p).ok_or_else(|| invalid(path, format!("{s}: no field {p}")))?;
                }
                v.clone()
            }
            Value::Array(a) => Value::Array(a.iter().map(|x| self.resolve(path, x)).collect::<Result<_, _>>()?),
            Value::Object(o) => Value::Object(
                o.iter().map(|(k, x)| Ok((k.clone(), self.resolve(path, x)?))).collect::<Result<_, ScenarioError>>()?,
            ),
            other => other.clone(),
        })
    }

    /// A name (with or without `@`), an address-valued `$var`, or a hex address.
    fn address(&self, path: &str, s: &str) -> Result<Address, ScenarioError> {
        if s.starts_with('$') {
            let v = self.resolve(path, &json!(s))?;
            return serde_json::from_value(v).map_err(|_| invalid(path, format!("{s} is not an address")));
        }
        let name = s.strip_prefix('@').unwrap_or(s);
        if let Some(a) = self.sim.address(name) {
            return Ok(a);
        }
        name.parse().map_err(|_| invalid(path, format!("unknown account or contract {s}")))
    }

    fn account(&self, path: &str, name: &str) -> Result<(), ScenarioError> {
        match self.sim.keys(name) {
            Some(_) => Ok(()),
            None => Err(invalid(path, format!("{name} is not an account with keys"))),
        }
    }

    fn var<T: serde::de::DeserializeOwned>(&self, path: &str, name: &str) -> Result<T, ScenarioError> {
        let name = name.strip_prefix('$').unwrap_or(name);
        let v = self.vars.get(name).ok_or_else(|| invalid(path, format!("unbound variable ${name}")))?;
        serde_json::from_value(v.clone()).map_err(|e| invalid(path, format!("${name}: {e}")))
    }

    fn step(&mut self, path: &str, step: &Step) -> Result<(), ScenarioError> {
        match step {
            Step::CreateAccounts { names, balance } => {
                if self.sim.started() {
                    return Err(invalid(path, "accounts must be created before the first transaction"));
                }
                let mut created = Map::new();
                for n in names {
                    if self.sim.address(n).is_some() {
                        return Err(invalid(path, format!("name {n} already bound")));
                    }
                    created.insert(n.clone(), json!(self.sim.create_account(n, *balance)));
                }
                self.record("accounts", json!({ "step": path, "balance": balance, "accounts": created }));
            }
            Step::Deploy { from, prototype, name, args, value, gas, tag } => {
                self.account(path, from)?;
                if self.sim.chain().catalog().get(prototype).is_none() {
                    return Err(invalid(path, format!("unknown prototype {prototype}")));
                }
                let args = args.iter().map(|a| self.resolve(path, a)).collect::<Result<Vec<_>, _>>()?;
                let digest = self.sim.deploy(from, prototype, name, args, *value, *gas);
                let address = self.sim.address(name).expect("bound by deploy");
                self.track(path, digest, name.clone(), tag.clone(), Some(ReceiptStatus::Succeeded), None);
                self.record("deploy", json!({ "step": path, "name": name, "prototype": prototype, "address": address }));
            }
            Step::Call { from, to, method, args, value, gas, gas_price, label, tag, expect } => {
                self.account(path, from)?;
                let to_addr = self.address(path, to)?;
                let args = args.iter().map(|a| self.resolve(path, a)).collect::<Result<Vec<_>, _>>()?;
                let label = label.clone().unwrap_or_else(|| {
                    self.auto_label += 1;
                    format!("tx{}", self.auto_label)
                });
                let token_op = (self.sim.prototype_of(&to_addr) == Some(TOKEN_REGISTRY))
                    .then(|| (to_addr, method.clone()));
                let digest = self.sim.call(from, to_addr, method, args, *value, *gas, *gas_price);
                self.track(path, digest, label.clone(), tag.clone(), *expect, token_op);
                self.record("submit", json!({ "step": path, "label": label, "from": from, "to": to, "method": method }));
            }
            Step::Mine { miner, count } => {
                let miner = match miner {
                    Some(m) => self.address(path, m)?,
                    None => Address::default(),
                };
                for _ in 0..*count {
                    self.mine_one(miner)?;
                }
            }
            Step::Poll { messenger, hub } => {
                let hub = self.address(path, hub)?;
                if !self.messengers.contains_key(messenger) {
                    let m = match &self.out {
                        Some(dir) => {
                            let d = dir.join("messengers").join(messenger);
                            std::fs::create_dir_all(&d)?;
                            Messenger::open(hub, &d).map_err(|e| invalid(path, e.to_string()))?
                        }
                        None => Messenger::new(hub),
                    };
                    self.messengers.insert(messenger.clone(), (m, Vec::new()));
                }
                let chain = self.sim.chain();
                let chain: &crate::chain::Chain = chain;
                let (m, seen) = self.messengers.get_mut(messenger).expect("inserted above");
                let notes = m.poll_once(chain).map_err(|e| invalid(path, e.to_string()))?;
                seen.extend(notes.iter().cloned());
                let cursor = m.cursor;
                self.record(
                    "poll",
                    json!({ "step": path, "messenger": messenger, "cursor": cursor, "notifications": notes }),
                );
            }
            Step::Oracle { oracle, hub } => {
                self.account(path, oracle)?;
                let hub = self.address(path, hub)?;
                let keys = self.sim.keys(oracle).expect("checked").clone();
                let o = self.oracles.entry(oracle.clone()).or_insert_with(|| Oracle::new(keys, hub));
                let failures_before = o.failures.len();
                let chain = self.sim.chain();
                let o = self.oracles.get_mut(oracle).expect("inserted above");
                let submitted = o.run(chain);
                let failures = o.failures[failures_before..].to_vec();
                self.record(
                    "oracle",
                    json!({ "step": path, "oracle": oracle, "submitted": submitted, "failures": failures }),
                );
            }
            Step::Silo { silo, kind, owner, records } => {
                self.account(path, owner)?;
                let mut s = DataSilo::new(silo.clone(), *kind, self.sim.keys(owner).expect("checked").clone());
                for (id, doc) in records {
                    s.put(id.clone(), doc.clone());
                }
                if let Some(dir) = &self.out {
                    let d = dir.join("silos");
                    std::fs::create_dir_all(&d)?;
                    s.save(&d.join(format!("{silo}.json"))).map_err(|e| invalid(path, e.to_string()))?;
                }
                self.proxy.store.insert(s);
                self.record("silo", json!({ "step": path, "silo": silo, "kind": kind, "records": records.len() }));
            }
            Step::Connector { silo, name, var, meta } => {
                let d = create_connector(&self.proxy.store, silo, name, meta.clone(), DEFAULT_DESCRIPTOR_BOUND)
                    .map_err(|e| invalid(path, e.to_string()))?;
                let size = d.to_wire().len();
                self.vars.insert(var.clone(), json!(d));
                self.record("connector", json!({ "step": path, "var": var, "descriptor": d, "bytes": size }));
            }
            Step::Tokenize { connector, owner, recipient, var } => {
                self.account(path, owner)?;
                self.account(path, recipient)?;
                let d: ConnectorDescriptor = self.var(path, connector)?;
                let owner_keys = self.sim.keys(owner).expect("checked").clone();
                let rcpt = self.sim.keys(recipient).expect("checked").public_key();
                let token = tokenize_connector(&d, &owner_keys, &rcpt, &TokenLabels::default(), &mut self.sim.rng)
                    .map_err(|e| invalid(path, e.to_string()))?;
                self.vars.insert(var.clone(), json!(token));
                self.record("tokenize", json!({ "step": path, "var": var, "token_id": token.token_id }));
            }
            Step::Redeem { token, recipient, var, registry, expect } => self.redeem(path, token, recipient, var, registry, *expect)?,
            Step::Grant { actor, rights } => {
                self.account(path, actor)?;
                let pk = self.sim.keys(actor).expect("checked").public_key();
                let policy = std::mem::take(&mut self.proxy.policy);
                self.proxy.policy = policy.allow(pk, rights);
                self.record("grant", json!({ "step": path, "actor": actor, "rights": rights }));
            }
            Step::Proxy { actor, connector, op, record, document, expect } => {
                self.account(path, actor)?;
                let d: ConnectorDescriptor = self.var(path, connector)?;
                let op = match op {
                    ProxyOpKind::Read => ProxyOp::Read { record_id: record.clone() },
                    ProxyOpKind::Write => ProxyOp::Write {
                        record_id: record.clone(),
                        document: self.resolve(path, document.as_ref().unwrap_or(&Value::Null))?,
                    },
                };
                let keys = self.sim.keys(actor).expect("checked").clone();
                let outcome = self.proxy.handle(&ProxyRequest::new(&keys, d, op));
                // documents stay off the transcript; only their digest is shown
                let shown = match &outcome {
                    ProxyOutcome::Granted(v) => json!({ "granted": digest(&canonical_json(v)) }),
                    ProxyOutcome::Denied(c) => json!({ "denied": c }),
                };
                self.record("proxy", json!({ "step": path, "actor": actor, "record": record, "outcome": shown }));
                if let Some(e) = expect {
                    let ok = outcome.is_granted() == (*e == ProxyExpect::Granted);
                    let problems = if ok { vec![] } else { vec![format!("expected {e:?}")] };
                    self.check(path, "proxy", shown, problems);
                }
            }
            Step::Set { var, value } => {
                let v = self.resolve(path, value)?;
                self.vars.insert(var.clone(), v);
            }
            Step::Repeat { times, var, steps } => {
                for i in 0..*times {
                    for (j, s) in steps.iter().enumerate() {
                        let raw = serde_json::to_value(s).expect("steps serialize");
                        let s: Step = serde_json::from_value(substitute(&raw, var, i))
                            .map_err(|e| invalid(path, e.to_string()))?;
                        self.step(&format!("{path}[{i}].{j}"), &s)?;
                    }
                }
            }
            Step::GasTable { tags } => {
                let table: BTreeMap<&String, BTreeMap<String, u64>> =
                    tags.iter().map(|t| (t, self.gas_by_kind(t))).collect();
                self.record("gas-table", json!({ "step": path, "table": table }));
            }
            Step::Assert(a) => self.assert(path, a)?,
        }
        Ok(())
    }

    fn track(
        &mut self,
        path: &str,
        digest: Digest,
        label: String,
        tag: Option<String>,
        expect: Option<ReceiptStatus>,
        token_op: Option<(Address, String)>,
    ) {
        self.labels.insert(label.clone(), digest);
        if let Some(t) = &tag {
            self.tags.entry(t.clone()).or_default().push(digest);
        }
        self.pending.push(Pending { digest, label, tag, expect, path: path.to_string(), token_op });
    }

    fn mine_one(&mut self, miner: Address) -> Result<(), ScenarioError> {
        let report = self.sim.mine(miner);
        let pending = std::mem::take(&mut self.pending);
        let mut txs = Vec::new();
        for p in pending {
            if let Some(r) = self.sim.receipt(&p.digest).cloned() {
                if let Some(out) = &r.output {
                    self.vars.insert(p.label.clone(), out.clone());
                }
                if let Some((_, method)) = &p.token_op {
                    self.mirror_token_op(&p, method, &r);
                }
                txs.push(json!({ "label": p.label, "tag": p.tag, "receipt": r }));
                if let Some(e) = p.expect {
                    let problems =
                        if r.status == e { vec![] } else { vec![format!("expected status {e:?}")] };
                    let what = format!("receipt {}", p.label);
                    self.check(&p.path, &what, json!({ "status": r.status, "revert_reason": r.revert_reason }), problems);
                }
            } else if let Some(err) = self.sim.rejection(&p.digest).cloned() {
                txs.push(json!({ "label": p.label, "rejected": err.to_string() }));
                if p.expect.is_some() {
                    let what = format!("receipt {}", p.label);
                    self.check(&p.path, &what, json!({ "rejected": err.to_string() }), vec!["transaction was not mined".into()]);
                }
            }
        }
        let chain = self.sim.chain();
        let tip = chain.tip().clone();
        let conservation = chain.conservation_holds();
        for o in self.oracles.values_mut() {
            o.settle(self.sim.chain_ref().expect("started"));
        }
        self.record(
            "block",
            json!({
                "height": report.height,
                "hash": tip.block_hash,
                "state_digest": tip.state_digest,
                "pow_attempts": report.pow_attempts,
                "conservation": conservation,
                "txs": txs,
            }),
        );
        Ok(())
    }

    /// Off-chain copy of a token registry call: one entry per call that
    /// reached the registry, with reverted calls logged as Denied.
    fn mirror_token_op(&mut self, p: &Pending, method: &str, r: &Receipt) {
        let Some(tx) = self.sim.chain_ref().and_then(|c| c.tip().tx_list.iter().find(|t| t.digest() == p.digest).cloned())
        else {
            return;
        };
        let actor = tx.signature.signer;
        let events: Vec<&Value> =
            r.logs.iter().filter(|l| l.topic == AUDIT_TOPIC).map(|l| &l.data).collect();
        if events.is_empty() {
            let target = tx.payload.args.first().map(|a| match a {
                Value::String(s) => s.clone(),
                other => other.get("token_id").and_then(Value::as_str).unwrap_or("").to_string(),
            });
            let reason = r.revert_reason.clone().unwrap_or_else(|| format!("{method}: {:?}", r.status));
            self.proxy.trail.append(actor, AuditAction::Denied, target.unwrap_or_default(), reason);
            return;
        }
        for e in events {
            let action = match serde_json::from_value::<TokenAction>(e["action"].clone()) {
                Ok(TokenAction::TokenCreate) => AuditAction::TokenCreate,
                Ok(TokenAction::TokenAccess) => AuditAction::TokenAccess,
                Ok(TokenAction::TokenRevoke) => AuditAction::TokenRevoke,
                _ => AuditAction::Denied,
            };
            let reason = e["detail"].as_str().unwrap_or("").to_string();
            let target = e["token_id"].as_str().unwrap_or("").to_string();
            self.proxy.trail.append(actor, action, target, reason);
        }
    }

    fn redeem(
        &mut self,
        path: &str,
        token: &str,
        recipient: &str,
        var: &Option<String>,
        registry: &Option<String>,
        expect: Option<Expect>,
    ) -> Result<(), ScenarioError> {
        self.account(path, recipient)?;
        let t: TokenRecord = self.var(path, token)?;
        let keys = self.sim.keys(recipient).expect("checked").clone();
        let mut refused = None;
        let checked = registry.is_some();
        if let Some(reg) = registry {
            let reg = self.address(path, reg)?;
            let status = self
                .sim
                .view(reg, "status", vec![json!(t.token_id)])
                .ok()
                .and_then(|v| serde_json::from_value::<TokenStatus>(v).ok());
            if status != Some(TokenStatus::Active) {
                let why = match status {
                    Some(TokenStatus::Revoked) => "revoked",
                    _ => "not-registered",
                };
                refused = Some(why.to_string());
            }
        }
        let result = match refused {
            Some(why) => Err(why),
            None => redeem_token(&t, &keys).map_err(|e| e.to_string()),
        };
        // every registry-checked redemption leaves exactly one entry
        if checked {
            let (action, reason) = match &result {
                Ok(_) => (AuditAction::TokenAccess, "redeemed".to_string()),
                Err(why) => (AuditAction::Denied, why.clone()),
            };
            self.proxy.trail.append(keys.public_key(), action, t.token_id.to_hex(), reason);
        }
        let ok = result.is_ok();
        let shown = match &result {
            Ok(d) => json!({ "ok": d.name }),
            Err(e) => json!({ "error": e }),
        };
        if let (Ok(d), Some(v)) = (&result, var) {
            self.vars.insert(v.clone(), json!(d));
        }
        self.record("redeem", json!({ "step": path, "recipient": recipient, "result": shown }));
        if let Some(e) = expect {
            let problems = if ok == (e == Expect::Ok) { vec![] } else { vec![format!("expected {e:?}")] };
            self.check(path, "redeem", shown, problems);
        }
        Ok(())
    }

    fn gas_by_kind(&self, tag: &str) -> BTreeMap<String, u64> {
        let mut sums = BTreeMap::new();
        for d in self.tags.get(tag).into_iter().flatten() {
            if let Some(r) = self.sim.receipt(d) {
                for (k, v) in &r.gas_by_kind {
                    *sums.entry(k.clone()).or_default() += v;
                }
                *sums.entry("total".to_string()).or_default() += r.gas_used;
            }
        }
        sums
    }

    fn assert(&mut self, path: &str, a: &Assertion) -> Result<(), ScenarioError> {
        match a {
            Assertion::Balance { account, cmp } => {
                let addr = self.address(path, account)?;
                let actual = json!(self.sim.chain().state().balance(&addr));
                let cmp = self.resolve_cmp(path, cmp)?;
                let problems = compare(&actual, &cmp);
                self.check(path, &format!("balance {account}"), actual, problems);
            }
            Assertion::View { from, to, method, args, cmp } => {
                let to_addr = self.address(path, to)?;
                let caller = match from {
                    Some(f) => self.address(path, f)?,
                    None => Address::default(),
                };
                let args = args.iter().map(|x| self.resolve(path, x)).collect::<Result<Vec<_>, _>>()?;
                let actual = match self.sim.view_as(caller, to_addr, method, args) {
                    Ok(v) => v,
                    Err(e) => json!({ "error": e.to_string() }),
                };
                let cmp = self.resolve_cmp(path, cmp)?;
                let problems = compare(&actual, &cmp);
                self.check(path, &format!("view {to}.{method}"), actual, problems);
            }
            Assertion::Var { var, cmp } => {
                let actual = self.vars.get(var).cloned().unwrap_or(Value::Null);
                let cmp = self.resolve_cmp(path, cmp)?;
                let problems = compare(&actual, &cmp);
                self.check(path, &format!("var {var}"), actual, problems);
            }
            Assertion::Receipt { label, status, revert_reason, gas_used, gas } => {
                let d = *self.labels.get(label).ok_or_else(|| invalid(path, format!("unknown label {label}")))?;
                let Some(r) = self.sim.receipt(&d).cloned() else {
                    self.check(path, &format!("receipt {label}"), Value::Null, vec!["not mined".into()]);
                    return Ok(());
                };
                let mut problems = Vec::new();
                if status.is_some_and(|s| s != r.status) {
                    problems.push(format!("expected status {status:?}"));
                }
                if revert_reason.is_some() && revert_reason != &r.revert_reason {
                    problems.push(format!("expected revert reason {revert_reason:?}"));
                }
                if gas_used.is_some_and(|g| g != r.gas_used) {
                    problems.push(format!("expected gas_used {gas_used:?}"));
                }
                for (k, v) in gas {
                    if r.gas_for(k) != *v {
                        problems.push(format!("expected {k} gas {v}"));
                    }
                }
                let actual = json!({ "status": r.status, "revert_reason": r.revert_reason, "gas_used": r.gas_used, "gas": r.gas_by_kind });
                self.check(path, &format!("receipt {label}"), actual, problems);
            }
            Assertion::Logs { topic, emitter, field, field_eq, cmp } => {
                let emitter = emitter.as_ref().map(|e| self.address(path, e)).transpose()?;
                let field_eq = field_eq.as_ref().map(|v| self.resolve(path, v)).transpose()?;
                let chain = self.sim.chain();
                let mut n = 0u64;
                for h in 0..=chain.height() {
                    for r in chain.receipts(h) {
                        for l in &r.logs {
                            let hit = l.topic == *topic
                                && emitter.is_none_or(|e| e == l.emitter)
                                && match (field, &field_eq) {
                                    (Some(f), Some(v)) => l.data.get(f) == Some(v),
                                    _ => true,
                                };
                            n += hit as u64;
                        }
                    }
                }
                let cmp = self.resolve_cmp(path, cmp)?;
                let problems = compare(&json!(n), &cmp);
                self.check(path, &format!("logs {topic}"), json!(n), problems);
            }
            Assertion::Conservation => {
                let chain = self.sim.chain();
                let actual = json!({
                    "supply": chain.state().total_supply().to_string(),
                    "expected": (chain.initial_supply() + chain.config().block_reward as u128 * chain.height() as u128).to_string(),
                });
                let problems = if chain.conservation_holds() { vec![] } else { vec!["supply mismatch".into()] };
                self.check(path, "conservation", actual, problems);
            }
            Assertion::Notifications { messenger, subscriber, topic, cmp } => {
                let sub = subscriber.as_ref().map(|s| self.address(path, s)).transpose()?;
                let seen = self.messengers.get(messenger).map(|(_, s)| s.as_slice()).unwrap_or(&[]);
                let n = seen
                    .iter()
                    .filter(|x| sub.is_none_or(|s| s == x.subscriber) && topic.as_ref().is_none_or(|t| *t == x.topic))
                    .count();
                let cmp = self.resolve_cmp(path, cmp)?;
                let problems = compare(&json!(n), &cmp);
                self.check(path, &format!("notifications {messenger}"), json!(n), problems);
            }
            Assertion::Audit { action, verify, cmp } => {
                let trail = &self.proxy.trail;
                let n = match action {
                    Some(a) => trail.count(*a),
                    None => trail.len(),
                };
                let mut problems = compare(&json!(n), cmp);
                let verdict = verify_audit(trail.entries());
                if *verify {
                    if let Err(seq) = verdict {
                        problems.push(format!("hash chain breaks at seq {seq}"));
                    }
                }
                let actions: Vec<AuditAction> = trail.entries().iter().map(|e| e.action).collect();
                self.check(path, "audit", json!({ "count": n, "actions": actions }), problems);
            }
            Assertion::GasRatio { kind, numerator, denominator, cmp } => {
                let num = self.gas_by_kind(numerator).get(kind).copied().unwrap_or(0);
                let den = self.gas_by_kind(denominator).get(kind).copied().unwrap_or(0);
                let ratio = if den == 0 { f64::INFINITY } else { num as f64 / den as f64 };
                let actual = json!({ "numerator": num, "denominator": den, "ratio": ratio });
                let problems = compare(&json!(ratio), cmp);
                self.check(path, &format!("gas ratio {kind} {numerator}/{denominator}"), actual, problems);
            }
            Assertion::Oracle { oracle, delivered, failures } => {
                let o = self.oracles.get(oracle).ok_or_else(|| invalid(path, format!("unknown oracle {oracle}")))?;
                let actual = json!({ "delivered": o.delivered.len(), "failures": o.failures });
                let mut problems = Vec::new();
                if delivered.is_some_and(|d| d != o.delivered.len()) {
                    problems.push(format!("expected {delivered:?} delivered"));
                }
                if failures.is_some_and(|f| f != o.failures.len()) {
                    problems.push(format!("expected {failures:?} failures"));
                }
                self.check(path, &format!("oracle {oracle}"), actual, problems);
            }
        }
        Ok(())
    }

    fn resolve_cmp(&self, path: &str, cmp: &Cmp) -> Result<Cmp, ScenarioError> {
        let r = |v: &Option<Value>| v.as_ref().map(|x| self.resolve(path, x)).transpose();
        Ok(Cmp { eq: r(&cmp.eq)?, ne: r(&cmp.ne)?, gt: r(&cmp.gt)?, ge: r(&cmp.ge)?, lt: r(&cmp.lt)?, le: r(&cmp.le)? })
    }

    fn summary(&mut self) -> Value {
        let (height, state_digest, conservation) = match self.sim.chain_ref() {
            Some(c) => (c.height(), c.state().digest(), c.conservation_holds()),
            None => (0, Digest::ZERO, true),
        };
        json!({
            "assertions": self.assertions,
            "passed": self.assertions - self.failures.len(),
            "failed": self.failures,
            "height": height,
            "state_digest": state_digest,
            "conservation": conservation,
            "audit_entries": self.proxy.trail.len(),
        })
    }

    pub fn notifications(&self, messenger: &str) -> &[Notification] {
        self.messengers.get(messenger).map(|(_, s)| s.as_slice()).unwrap_or(&[])
    }

    pub fn receipt(&self, label: &str) -> Option<&Receipt> {
        self.labels.get(label).and_then(|d| self.sim.receipt(d))
    }

    pub fn tagged_gas(&self, tag: &str) -> BTreeMap<String, u64> {
        self.gas_by_kind(tag)
    }

    pub fn silos(&self) -> &SiloStore {
        &self.proxy.store
    }
}
