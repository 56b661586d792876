use std::collections::BTreeMap;

use proptest::prelude::*;
use serde_json::{json, Value};

use super::*;
use crate::chain::{Address, WorldState};

/// Test contract exercising each VM primitive.
struct Probe;

impl Prototype for Probe {
    fn name(&self) -> &'static str {
        "probe"
    }

    fn methods(&self) -> &'static [&'static str] {
        &["write", "read", "emit", "fail_after_write", "burn", "forward", "catch", "recurse", "balance", "ops"]
    }

    fn has_fallback(&self) -> bool {
        true
    }

    fn construct(&self, ctx: &mut CallContext<'_, '_>, a: &[Value]) -> Result<(), VmError> {
        if let Some(v) = a.first() {
            ctx.store("init", v)?;
        }
        Ok(())
    }

    fn invoke(&self, ctx: &mut CallContext<'_, '_>, method: &str, a: &[Value]) -> Result<Value, VmError> {
        match method {
            "write" => {
                ctx.store(&args::string(a, 0)?, &args::value(a, 1)?)?;
                Ok(Value::Null)
            }
            "read" => Ok(ctx.load::<Value>(&args::string(a, 0)?)?.unwrap_or(Value::Null)),
            "emit" => {
                ctx.emit(args::string(a, 0)?, json!(1))?;
                Ok(Value::Null)
            }
            "fail_after_write" => {
                ctx.store("doomed", &1)?;
                ctx.emit("doomed", json!(1))?;
                Err(revert("boom"))
            }
            "burn" => {
                ctx.step(args::u64(a, 0)?)?;
                Ok(Value::Null)
            }
            // forward(to, method, args, value)
            "forward" => {
                let inner: Vec<Value> = args::decode(a, 2)?;
                ctx.call(args::address(a, 0)?, &args::string(a, 1)?, inner, args::u64(a, 3)?)
            }
            // catch(to, method): write, call, keep own write even if callee reverts
            "catch" => {
                ctx.store("mine", &true)?;
                let r = ctx.call(args::address(a, 0)?, &args::string(a, 1)?, vec![], 0);
                match r {
                    Ok(_) => Ok(json!("ok")),
                    Err(VmError::Revert(reason)) => Ok(json!(reason)),
                    Err(e) => Err(e),
                }
            }
            "recurse" => {
                let me = ctx.address();
                let d = ctx.depth();
                ctx.store("max_depth", &d)?;
                ctx.call(me, "recurse", vec![], 0)
            }
            "balance" => Ok(json!(ctx.self_balance())),
            // ops([[kind, n], ...]) for property tests
            "ops" => {
                let ops: Vec<(String, u64)> = args::decode(a, 0)?;
                for (i, (kind, n)) in ops.iter().enumerate() {
                    match kind.as_str() {
                        "w" => ctx.store(&format!("k{n}"), &i)?,
                        "r" => {
                            ctx.read_raw(&format!("k{n}"))?;
                        }
                        "e" => ctx.emit("t", json!(i))?,
                        _ => ctx.step(*n)?,
                    }
                }
                Ok(Value::Null)
            }
            _ => unreachable!(),
        }
    }

    fn fallback(&self, ctx: &mut CallContext<'_, '_>) -> Result<Value, VmError> {
        let v = ctx.value();
        ctx.store("received", &v)?;
        Ok(Value::Null)
    }
}

fn catalog() -> Catalog {
    Catalog::new().with(Probe)
}

fn user() -> Address {
    Address([7; 20])
}

struct Harness {
    state: WorldState,
    catalog: Catalog,
    config: VmConfig,
    nonce: u64,
}

impl Harness {
    fn new() -> Self {
        let alloc = BTreeMap::from([(user(), 1_000_000)]);
        Harness { state: WorldState::with_allocations(&alloc), catalog: catalog(), config: VmConfig::default(), nonce: 0 }
    }

    fn deploy(&mut self) -> Address {
        let out = self.run(Entry::Create {
            creator: user(),
            creator_nonce: self.nonce,
            prototype: "probe".into(),
            args: vec![],
            value: 0,
            gas_budget: 10_000,
        });
        self.nonce += 1;
        out.created.expect("deploy succeeds")
    }

    fn run(&mut self, entry: Entry) -> ExecOutcome {
        Executor::new(&mut self.state, &self.catalog, &self.config, BlockEnv::default()).execute(entry)
    }

    fn call(&mut self, to: Address, method: &str, args: Vec<Value>, value: u64, gas: u64) -> ExecOutcome {
        self.run(Entry::Call(MessageCall {
            caller: user(),
            callee: to,
            value,
            method: method.into(),
            args,
            gas_budget: gas,
            depth: 0,
        }))
    }
}

fn kind_total(out: &ExecOutcome) -> u64 {
    out.gas_by_kind.values().sum()
}

#[test]
fn create_charges_base_and_create() {
    let mut h = Harness::new();
    let out = h.run(Entry::Create {
        creator: user(),
        creator_nonce: 0,
        prototype: "probe".into(),
        args: vec![json!("x")],
        value: 0,
        gas_budget: 10_000,
    });
    let s = &h.config.schedule;
    assert_eq!(out.gas_used, s.call_base + s.contract_create + s.storage_write);
    let addr = out.created.unwrap();
    assert_eq!(addr, Address::for_contract(&user(), 0));
    assert_eq!(h.state.read_slot::<String>(&addr, "init").as_deref(), Some("x"));
}

#[test]
fn unknown_prototype_reverts_with_gas_charged() {
    let mut h = Harness::new();
    let out = h.run(Entry::Create {
        creator: user(),
        creator_nonce: 0,
        prototype: "nope".into(),
        args: vec![],
        value: 0,
        gas_budget: 10_000,
    });
    assert_eq!(out.result, Err(revert(REASON_UNKNOWN_PROTOTYPE)));
    assert_eq!(out.gas_used, h.config.schedule.call_base + h.config.schedule.contract_create);
    assert!(h.state.account(&Address::for_contract(&user(), 0)).is_none());
}

#[test]
fn gas_breakdown_matches_schedule() {
    let mut h = Harness::new();
    let p = h.deploy();
    let out = h.call(p, "write", vec![json!("a"), json!(1)], 0, 10_000);
    let s = &h.config.schedule;
    assert!(out.result.is_ok());
    assert_eq!(out.gas_used, s.call_base + s.storage_write);
    assert_eq!(out.gas_by_kind[&StepKind::StorageWrite], s.storage_write);
    assert_eq!(kind_total(&out), out.gas_used);
}

#[test]
fn exact_budget_boundary() {
    let mut h = Harness::new();
    let p = h.deploy();
    let s = h.config.schedule.clone();
    let need = s.call_base + s.storage_write;
    let before = h.state.clone();
    let out = h.call(p, "write", vec![json!("a"), json!(1)], 0, need - 1);
    assert_eq!(out.result, Err(VmError::OutOfGas));
    assert_eq!(out.gas_used, need - 1);
    assert_eq!(h.state, before);
    assert!(h.call(p, "write", vec![json!("a"), json!(1)], 0, need).result.is_ok());
}

#[test]
fn revert_discards_writes_and_logs() {
    let mut h = Harness::new();
    let p = h.deploy();
    let before = h.state.clone();
    let out = h.call(p, "fail_after_write", vec![], 0, 10_000);
    assert_eq!(out.result, Err(revert("boom")));
    assert!(out.logs.is_empty());
    assert_eq!(h.state, before);
    let s = &h.config.schedule;
    assert_eq!(out.gas_used, s.call_base + s.storage_write + s.log_emit);
}

#[test]
fn child_revert_only_undoes_child() {
    let mut h = Harness::new();
    let a = h.deploy();
    let b = h.deploy();
    let out = h.call(a, "catch", vec![json!(b), json!("fail_after_write")], 0, 10_000);
    assert_eq!(out.result, Ok(json!("boom")));
    assert_eq!(h.state.read_slot::<bool>(&a, "mine"), Some(true));
    assert_eq!(h.state.read_slot::<u64>(&b, "doomed"), None);
    assert!(out.logs.is_empty());
}

#[test]
fn child_out_of_gas_voids_transaction() {
    let mut h = Harness::new();
    let a = h.deploy();
    let b = h.deploy();
    let before = h.state.clone();
    let inner = json!([5000]);
    let out = h.call(a, "forward", vec![json!(b), json!("burn"), inner, json!(0)], 0, 2_000);
    assert_eq!(out.result, Err(VmError::OutOfGas));
    assert_eq!(out.gas_used, 2_000);
    assert_eq!(h.state, before);
}

#[test]
fn value_arrives_before_body_runs() {
    let mut h = Harness::new();
    let p = h.deploy();
    let out = h.call(p, "balance", vec![], 33, 10_000);
    assert_eq!(out.result, Ok(json!(33)));
    let s = &h.config.schedule;
    assert_eq!(out.gas_used, s.call_base + s.value_transfer);
    assert_eq!(h.state.balance(&user()), 1_000_000 - 33);
}

#[test]
fn plain_value_goes_to_fallback() {
    let mut h = Harness::new();
    let p = h.deploy();
    assert!(h.call(p, "", vec![], 9, 10_000).result.is_ok());
    assert_eq!(h.state.read_slot::<u64>(&p, "received"), Some(9));
    // unknown method with value also lands in the fallback
    assert!(h.call(p, "nosuch", vec![], 1, 10_000).result.is_ok());
    assert_eq!(h.call(p, "nosuch", vec![], 0, 10_000).result, Err(revert(REASON_UNKNOWN_METHOD)));
}

#[test]
fn transfer_to_plain_account() {
    let mut h = Harness::new();
    let to = Address([9; 20]);
    let out = h.call(to, "", vec![], 50, 1_000);
    assert!(out.result.is_ok());
    assert_eq!(out.gas_used, h.config.schedule.transfer_cost(50));
    assert_eq!(h.state.balance(&to), 50);
    assert_eq!(h.call(to, "m", vec![], 0, 1_000).result, Err(revert(REASON_NOT_A_CONTRACT)));
}

#[test]
fn insufficient_balance_reverts() {
    let mut h = Harness::new();
    let to = Address([9; 20]);
    let out = h.call(to, "", vec![], 2_000_000, 1_000);
    assert_eq!(out.result, Err(revert(REASON_INSUFFICIENT_BALANCE)));
    assert_eq!(h.state.balance(&user()), 1_000_000);
}

#[test]
fn depth_limit_reverts_innermost() {
    let mut h = Harness::new();
    h.config.max_call_depth = 8;
    let p = h.deploy();
    let out = h.call(p, "recurse", vec![], 0, 1_000_000);
    // every frame propagates the revert, so nothing sticks
    assert_eq!(out.result, Err(revert(REASON_DEPTH_EXCEEDED)));
    assert_eq!(h.state.read_slot::<u32>(&p, "max_depth"), None);
}

#[test]
fn trace_records_follow_gas() {
    let mut h = Harness::new();
    let p = h.deploy();
    let out = Executor::new(&mut h.state, &h.catalog, &h.config, BlockEnv::default())
        .with_trace()
        .execute(Entry::Call(MessageCall {
            caller: user(),
            callee: p,
            value: 0,
            method: "emit".into(),
            args: vec![json!("t")],
            gas_budget: 500,
            depth: 0,
        }));
    let kinds: Vec<StepKind> = out.trace.iter().map(|t| t.step_kind).collect();
    assert_eq!(kinds, vec![StepKind::CallBase, StepKind::LogEmit]);
    assert_eq!(out.trace.last().unwrap().gas_after, 500 - out.gas_used);
    let mut buf = Vec::new();
    write_trace(&out.trace, &mut buf).unwrap();
    assert_eq!(buf.iter().filter(|b| **b == b'\n').count(), 2);
}

fn op() -> impl Strategy<Value = (String, u64)> {
    (prop::sample::select(vec!["w", "r", "e", "s"]), 0u64..20).prop_map(|(k, n)| (k.to_string(), n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    /// Gas used equals the schedule sum over executed steps, and a budget one
    /// short of it fails with the state untouched.
    #[test]
    fn gas_is_exact(ops in prop::collection::vec(op(), 0..30)) {
        let mut h = Harness::new();
        let p = h.deploy();
        let s = h.config.schedule.clone();
        let expected = s.call_base + ops.iter().map(|(k, n)| match k.as_str() {
            "w" => s.storage_write,
            "r" => s.storage_read,
            "e" => s.log_emit,
            _ => s.compute_step * n,
        }).sum::<u64>();
        let before = h.state.clone();
        let short = h.call(p, "ops", vec![json!(ops)], 0, expected - 1);
        prop_assert_eq!(short.result, Err(VmError::OutOfGas));
        prop_assert_eq!(&h.state, &before);
        let ok = h.call(p, "ops", vec![json!(ops)], 0, expected);
        prop_assert!(ok.result.is_ok());
        prop_assert_eq!(ok.gas_used, expected);
        prop_assert_eq!(kind_total(&ok), expected);
        prop_assert_eq!(ok.logs.len(), ops.iter().filter(|(k, _)| k == "e").count());
    }
}
