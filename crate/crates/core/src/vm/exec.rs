use std::collections::BTreeMap;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::catalog::{Catalog, Prototype};
use super::gas::{GasSchedule, StepKind};
use crate::chain::{storage_key, Account, Address, ContractIdentity, StorageValue, WorldState};
use crate::codec::canonical_json;
use crate::crypto::Digest;

pub const REASON_DEPTH_EXCEEDED: &str = "depth-exceeded";
pub const REASON_UNKNOWN_METHOD: &str = "unknown-method";
pub const REASON_UNKNOWN_PROTOTYPE: &str = "unknown-prototype";
pub const REASON_INSUFFICIENT_BALANCE: &str = "insufficient-balance";
pub const REASON_NOT_A_CONTRACT: &str = "not-a-contract";
pub const REASON_ADDRESS_COLLISION: &str = "address-collision";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VmError {
    #[error("reverted: {0}")]
    Revert(String),
    /// Sticky: once raised, every later step in the transaction fails too.
    #[error("out of gas")]
    OutOfGas,
}

pub fn revert(reason: impl Into<String>) -> VmError {
    VmError::Revert(reason.into())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MessageCall {
    pub caller: Address,
    pub callee: Address,
    pub value: u64,
    /// Empty selects the fallback handler.
    pub method: String,
    pub args: Vec<Value>,
    pub gas_budget: u64,
    pub depth: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEvent {
    pub emitter: Address,
    pub topic: String,
    pub data: Value,
    pub block_height: u64,
    pub tx_index: u64,
    pub log_index: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub frame_depth: u32,
    pub step_kind: StepKind,
    pub gas_after: u64,
    pub contract: Address,
    pub method: String,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BlockEnv {
    pub height: u64,
    pub tx_index: u64,
}

#[derive(Clone, Debug)]
pub struct VmConfig {
    pub schedule: GasSchedule,
    pub max_call_depth: u32,
}

impl Default for VmConfig {
    fn default() -> Self {
        VmConfig { schedule: GasSchedule::default(), max_call_depth: 64 }
    }
}

/// How a transaction enters the VM.
#[derive(Clone, Debug)]
pub enum Entry {
    Call(MessageCall),
    Create {
        creator: Address,
        creator_nonce: u64,
        prototype: String,
        args: Vec<Value>,
        value: u64,
        gas_budget: u64,
    },
}

#[derive(Debug)]
pub struct ExecOutcome {
    pub result: Result<Value, VmError>,
    pub created: Option<Address>,
    /// Full budget under OutOfGas.
    pub gas_used: u64,
    pub gas_by_kind: BTreeMap<StepKind, u64>,
    /// Empty unless the call succeeded.
    pub logs: Vec<LogEvent>,
    pub trace: Vec<TraceRecord>,
}

enum Undo {
    Balance(Address, u64),
    Nonce(Address, u64),
    Slot(Address, Digest, Option<StorageValue>),
    Contract(Address, Option<ContractIdentity>),
    Created(Address),
}

struct Frame {
    address: Address,
    caller: Address,
    value: u64,
    method: String,
    depth: u32,
    budget: u64,
    used: u64,
}

/// Runs one transaction's worth of message calls against `state`.
///
/// Every mutation is journaled, so a reverting frame undoes exactly its own
/// effects and those of its children.
pub struct Executor<'a> {
    state: &'a mut WorldState,
    catalog: &'a Catalog,
    config: &'a VmConfig,
    env: BlockEnv,
    journal: Vec<Undo>,
    logs: Vec<LogEvent>,
    frames: Vec<Frame>,
    gas_by_kind: BTreeMap<StepKind, u64>,
    trace: Option<Vec<TraceRecord>>,
    halted: bool,
    root_used: u64,
}

impl<'a> Executor<'a> {
    pub fn new(state: &'a mut WorldState, catalog: &'a Catalog, config: &'a VmConfig, env: BlockEnv) -> Self {
        Executor {
            state,
            catalog,
            config,
            env,
            journal: Vec::new(),
            logs: Vec::new(),
            frames: Vec::new(),
            gas_by_kind: BTreeMap::new(),
            trace: None,
            halted: false,
            root_used: 0,
        }
    }

    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn execute(mut self, entry: Entry) -> ExecOutcome {
        let (result, created, budget) = match entry {
            Entry::Call(call) => {
                let budget = call.gas_budget;
                (self.run_call(call), None, budget)
            }
            Entry::Create { creator, creator_nonce, prototype, args, value, gas_budget } => {
                let address = Address::for_contract(&creator, creator_nonce);
                let r = self.run_create(creator, address, &prototype, args, value, gas_budget, 0);
                let created = r.as_ref().ok().copied();
                (r.map(|a| Value::String(a.to_hex())), created, gas_budget)
            }
        };
        let gas_used = match &result {
            Err(VmError::OutOfGas) => {
                self.rollback(0);
                budget
            }
            _ => self.root_used,
        };
        let logs = if result.is_ok() { std::mem::take(&mut self.logs) } else { Vec::new() };
        ExecOutcome {
            result,
            created,
            gas_used,
            gas_by_kind: self.gas_by_kind,
            logs,
            trace: self.trace.unwrap_or_default(),
        }
    }

    fn checkpoint(&self) -> (usize, usize) {
        (self.journal.len(), self.logs.len())
    }

    fn rollback_to(&mut self, (journal_len, logs_len): (usize, usize)) {
        self.rollback(journal_len);
        self.logs.truncate(logs_len);
    }

    fn rollback(&mut self, journal_len: usize) {
        while self.journal.len() > journal_len {
            match self.journal.pop().expect("non-empty journal") {
                Undo::Balance(a, old) => self.account_mut(a).balance = old,
                Undo::Nonce(a, old) => self.account_mut(a).nonce = old,
                Undo::Slot(a, key, old) => {
                    let storage = &mut self.account_mut(a).storage;
                    match old {
                        Some(v) => storage.insert(key, v),
                        None => storage.remove(&key),
                    };
                }
                Undo::Contract(a, old) => self.account_mut(a).contract = old,
                Undo::Created(a) => {
                    self.state.accounts.remove(&a);
                }
            }
        }
    }

    fn account_mut(&mut self, address: Address) -> &mut Account {
        self.state.accounts.get_mut(&address).expect("journaled account exists")
    }

    fn ensure_account(&mut self, address: Address) {
        if let std::collections::btree_map::Entry::Vacant(e) = self.state.accounts.entry(address) {
            e.insert(Account::default());
            self.journal.push(Undo::Created(address));
        }
    }

    fn frame(&self) -> &Frame {
        self.frames.last().expect("active frame")
    }

    fn charge(&mut self, kind: StepKind, count: u64) -> Result<(), VmError> {
        if self.halted {
            return Err(VmError::OutOfGas);
        }
        let cost = self.config.schedule.cost(kind).saturating_mul(count);
        let frame = self.frames.last_mut().expect("active frame");
        if frame.budget - frame.used < cost {
            frame.used = frame.budget;
            self.halted = true;
            return Err(VmError::OutOfGas);
        }
        frame.used += cost;
        *self.gas_by_kind.entry(kind).or_default() += cost;
        if let Some(trace) = &mut self.trace {
            trace.push(TraceRecord {
                frame_depth: frame.depth,
                step_kind: kind,
                gas_after: frame.budget - frame.used,
                contract: frame.address,
                method: frame.method.clone(),
            });
        }
        Ok(())
    }

    fn move_value(&mut self, from: Address, to: Address, amount: u64) -> Result<(), VmError> {
        let have = self.state.balance(&from);
        if have < amount {
            return Err(revert(REASON_INSUFFICIENT_BALANCE));
        }
        self.ensure_account(to);
        self.journal.push(Undo::Balance(from, have));
        self.account_mut(from).balance = have - amount;
        let old = self.state.balance(&to);
        self.journal.push(Undo::Balance(to, old));
        self.account_mut(to).balance = old + amount;
        Ok(())
    }

    /// Pushes a frame, runs `body`, pops it, and settles gas and rollback.
    fn in_frame<T>(
        &mut self,
        frame: Frame,
        body: impl FnOnce(&mut Self) -> Result<T, VmError>,
    ) -> Result<T, VmError> {
        if self.halted {
            return Err(VmError::OutOfGas);
        }
        if frame.depth >= self.config.max_call_depth {
            return Err(revert(REASON_DEPTH_EXCEEDED));
        }
        let cp = self.checkpoint();
        self.frames.push(frame);
        let result = body(self);
        let done = self.frames.pop().expect("frame pushed above");
        match self.frames.last_mut() {
            Some(parent) => parent.used += done.used,
            None => self.root_used = done.used,
        }
        match &result {
            Err(VmError::Revert(_)) => self.rollback_to(cp),
            Err(VmError::OutOfGas) => self.halted = true,
            Ok(_) => {}
        }
        result
    }

    fn run_call(&mut self, call: MessageCall) -> Result<Value, VmError> {
        let frame = Frame {
            address: call.callee,
            caller: call.caller,
            value: call.value,
            method: call.method.clone(),
            depth: call.depth,
            budget: call.gas_budget,
            used: 0,
        };
        self.in_frame(frame, |ex| {
            ex.charge(StepKind::CallBase, 1)?;
            if call.value > 0 {
                ex.charge(StepKind::ValueTransfer, 1)?;
                ex.move_value(call.caller, call.callee, call.value)?;
            }
            let identity = ex.state.account(&call.callee).and_then(|a| a.contract.clone());
            let Some(identity) = identity else {
                return if call.method.is_empty() { Ok(Value::Null) } else { Err(revert(REASON_NOT_A_CONTRACT)) };
            };
            let catalog: &'a Catalog = ex.catalog;
            let proto = catalog
                .get(&identity.prototype_name)
                .ok_or_else(|| revert(REASON_UNKNOWN_PROTOTYPE))?;
            let mut ctx = CallContext { ex };
            if call.method.is_empty() {
                dispatch_fallback(proto, &mut ctx)
            } else if proto.methods().contains(&call.method.as_str()) {
                proto.invoke(&mut ctx, &call.method, &call.args)
            } else if call.value > 0 && proto.has_fallback() {
                proto.fallback(&mut ctx)
            } else {
                Err(revert(REASON_UNKNOWN_METHOD))
            }
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn run_create(
        &mut self,
        creator: Address,
        address: Address,
        prototype: &str,
        args: Vec<Value>,
        value: u64,
        gas_budget: u64,
        depth: u32,
    ) -> Result<Address, VmError> {
        let frame = Frame {
            address,
            caller: creator,
            value,
            method: format!("<create {prototype}>"),
            depth,
            budget: gas_budget,
            used: 0,
        };
        self.in_frame(frame, |ex| {
            ex.charge(StepKind::CallBase, 1)?;
            ex.charge(StepKind::ContractCreate, 1)?;
            let catalog: &'a Catalog = ex.catalog;
            let proto = catalog.get(prototype).ok_or_else(|| revert(REASON_UNKNOWN_PROTOTYPE))?;
            if let Some(existing) = ex.state.account(&address) {
                if existing.contract.is_some() || existing.nonce > 0 || !existing.storage.is_empty() {
                    return Err(revert(REASON_ADDRESS_COLLISION));
                }
            }
            ex.ensure_account(address);
            let identity = ContractIdentity {
                prototype_name: proto.name().to_string(),
                version: proto.version().to_string(),
                instance_address: address,
            };
            let old = ex.account_mut(address).contract.replace(identity);
            ex.journal.push(Undo::Contract(address, old));
            if value > 0 {
                ex.charge(StepKind::ValueTransfer, 1)?;
                ex.move_value(creator, address, value)?;
            }
            proto.construct(&mut CallContext { ex }, &args)?;
            Ok(address)
        })
    }
}

fn dispatch_fallback(proto: &dyn Prototype, ctx: &mut CallContext<'_, '_>) -> Result<Value, VmError> {
    if proto.has_fallback() {
        proto.fallback(ctx)
    } else {
        Ok(Value::Null)
    }
}

/// The view a running contract has of the VM.
pub struct CallContext<'e, 'a> {
    ex: &'e mut Executor<'a>,
}

impl CallContext<'_, '_> {
    pub fn address(&self) -> Address {
        self.ex.frame().address
    }

    pub fn caller(&self) -> Address {
        self.ex.frame().caller
    }

    pub fn value(&self) -> u64 {
        self.ex.frame().value
    }

    pub fn depth(&self) -> u32 {
        self.ex.frame().depth
    }

    pub fn gas_left(&self) -> u64 {
        let f = self.ex.frame();
        f.budget - f.used
    }

    pub fn block_height(&self) -> u64 {
        self.ex.env.height
    }

    pub fn balance_of(&self, address: &Address) -> u64 {
        self.ex.state.balance(address)
    }

    pub fn self_balance(&self) -> u64 {
        self.balance_of(&self.address())
    }

    pub fn schedule(&self) -> &GasSchedule {
        &self.ex.config.schedule
    }

    /// Charges `count` compute steps.
    pub fn step(&mut self, count: u64) -> Result<(), VmError> {
        self.ex.charge(StepKind::ComputeStep, count)
    }

    pub fn read_raw(&mut self, path: &str) -> Result<Option<Vec<u8>>, VmError> {
        self.ex.charge(StepKind::StorageRead, 1)?;
        let me = self.address();
        Ok(self
            .ex
            .state
            .account(&me)
            .and_then(|a| a.storage.get(&storage_key(path)))
            .map(|v| v.0.clone()))
    }

    pub fn write_raw(&mut self, path: &str, value: Option<Vec<u8>>) -> Result<(), VmError> {
        self.ex.charge(StepKind::StorageWrite, 1)?;
        let me = self.address();
        let key = storage_key(path);
        let storage = &mut self.ex.account_mut(me).storage;
        let old = match value {
            Some(v) => storage.insert(key, StorageValue(v)),
            None => storage.remove(&key),
        };
        self.ex.journal.push(Undo::Slot(me, key, old));
        Ok(())
    }

    pub fn load<T: DeserializeOwned>(&mut self, path: &str) -> Result<Option<T>, VmError> {
        match self.read_raw(path)? {
            Some(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|e| revert(format!("corrupt slot {path}: {e}"))),
            None => Ok(None),
        }
    }

    pub fn store<T: Serialize + ?Sized>(&mut self, path: &str, value: &T) -> Result<(), VmError> {
        self.write_raw(path, Some(canonical_json(value)))
    }

    pub fn remove(&mut self, path: &str) -> Result<(), VmError> {
        self.write_raw(path, None)
    }

    pub fn emit(&mut self, topic: impl Into<String>, data: Value) -> Result<(), VmError> {
        self.ex.charge(StepKind::LogEmit, 1)?;
        let log = LogEvent {
            emitter: self.address(),
            topic: topic.into(),
            data,
            block_height: self.ex.env.height,
            tx_index: self.ex.env.tx_index,
            log_index: 0,
        };
        self.ex.logs.push(log);
        Ok(())
    }

    /// Message call forwarding all remaining gas.
    pub fn call(&mut self, to: Address, method: &str, args: Vec<Value>, value: u64) -> Result<Value, VmError> {
        let gas = self.gas_left();
        self.call_with_gas(to, method, args, value, gas)
    }

    pub fn call_with_gas(
        &mut self,
        to: Address,
        method: &str,
        args: Vec<Value>,
        value: u64,
        gas: u64,
    ) -> Result<Value, VmError> {
        let call = MessageCall {
            caller: self.address(),
            callee: to,
            value,
            method: method.to_string(),
            args,
            gas_budget: gas.min(self.gas_left()),
            depth: self.depth() + 1,
        };
        self.ex.run_call(call)
    }

    /// Sends `amount` through the callee's fallback and reports whether it
    /// went through. Only OutOfGas escapes as an error.
    pub fn transfer(&mut self, to: Address, amount: u64) -> Result<bool, VmError> {
        match self.call(to, "", Vec::new(), amount) {
            Ok(_) => Ok(true),
            Err(VmError::Revert(_)) => Ok(false),
            Err(e) => Err(e),
        }
    }

    /// Instantiates `prototype` from this contract, deriving the new address
    /// from this contract's nonce.
    pub fn create(&mut self, prototype: &str, args: Vec<Value>, value: u64) -> Result<Address, VmError> {
        if self.ex.halted {
            return Err(VmError::OutOfGas);
        }
        let me = self.address();
        let nonce = self.ex.state.nonce(&me);
        self.ex.journal.push(Undo::Nonce(me, nonce));
        self.ex.account_mut(me).nonce = nonce + 1;
        let address = Address::for_contract(&me, nonce);
        let gas = self.gas_left();
        let depth = self.depth() + 1;
        self.ex.run_create(me, address, prototype, args, value, gas, depth)
    }
}

/// Serializes trace records as JSON lines.
pub fn write_trace<W: std::io::Write>(records: &[TraceRecord], mut out: W) -> std::io::Result<()> {
    for r in records {
        out.write_all(&canonical_json(r))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
