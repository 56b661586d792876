//! Storage-only contract that outlives the logic contracts around it.
//!
//! Holds named data fields behind getters and setters, a repository of
//! component versions (append-only), and an access group with three
//! privilege levels. The owner's Admin right cannot be revoked.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::chain::Address;
use crate::vm::{args, revert, CallContext, Prototype, VmError};

pub const CONTRACT_MANAGER: &str = "contract_manager";

pub const REASON_UNAUTHORIZED: &str = "unauthorized";
pub const REASON_NOT_FOUND: &str = "not-found";
pub const REASON_DUPLICATE_VERSION: &str = "duplicate-version";
pub const REASON_OWNER_IRREVOCABLE: &str = "owner-irrevocable";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Privilege {
    Read,
    Write,
    Admin,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VersionEntry {
    pub version: String,
    pub address: Address,
}

const OWNER: &str = "owner";

fn field_key(name: &str) -> String {
    format!("field/{name}")
}

fn repo_key(component: &str) -> String {
    format!("repo/{component}")
}

fn access_key(member: &Address) -> String {
    format!("access/{member}")
}

fn privilege_of(ctx: &mut CallContext<'_, '_>, member: &Address) -> Result<Option<Privilege>, VmError> {
    ctx.load(&access_key(member))
}

fn require(ctx: &mut CallContext<'_, '_>, needed: Privilege) -> Result<(), VmError> {
    let caller = ctx.caller();
    match privilege_of(ctx, &caller)? {
        Some(p) if p >= needed => Ok(()),
        _ => Err(revert(REASON_UNAUTHORIZED)),
    }
}

fn history(ctx: &mut CallContext<'_, '_>, component: &str) -> Result<Vec<VersionEntry>, VmError> {
    Ok(ctx.load(&repo_key(component))?.unwrap_or_default())
}

pub struct ContractManager;

impl Prototype for ContractManager {
    fn name(&self) -> &'static str {
        CONTRACT_MANAGER
    }

    fn methods(&self) -> &'static [&'static str] {
        &[
            "get",
            "set",
            "register_version",
            "latest",
            "history",
            "grant",
            "revoke",
            "privilege",
            "owner",
        ]
    }

    fn construct(&self, ctx: &mut CallContext<'_, '_>, _args: &[Value]) -> Result<(), VmError> {
        let owner = ctx.caller();
        ctx.store(OWNER, &owner)?;
        ctx.store(&access_key(&owner), &Privilege::Admin)
    }

    fn invoke(&self, ctx: &mut CallContext<'_, '_>, method: &str, a: &[Value]) -> Result<Value, VmError> {
        match method {
            "get" => {
                require(ctx, Privilege::Read)?;
                let name = args::string(a, 0)?;
                ctx.load::<Value>(&field_key(&name))?.ok_or_else(|| revert(REASON_NOT_FOUND))
            }
            "set" => {
                require(ctx, Privilege::Write)?;
                let name = args::string(a, 0)?;
                let value = args::value(a, 1)?;
                ctx.store(&field_key(&name), &value)?;
                ctx.emit("manager/set", json!({ "field": name }))?;
                Ok(Value::Null)
            }
            "register_version" => {
                require(ctx, Privilege::Admin)?;
                let component = args::string(a, 0)?;
                let version = args::string(a, 1)?;
                let address = args::address(a, 2)?;
                let mut entries = history(ctx, &component)?;
                if entries.iter().any(|e| e.version == version) {
                    return Err(revert(REASON_DUPLICATE_VERSION));
                }
                entries.push(VersionEntry { version: version.clone(), address });
                ctx.store(&repo_key(&component), &entries)?;
                ctx.emit(
                    "manager/version",
                    json!({ "component": component, "version": version, "address": address }),
                )?;
                Ok(json!(entries.len()))
            }
            "latest" => {
                let component = args::string(a, 0)?;
                let entries = history(ctx, &component)?;
                let last = entries.last().ok_or_else(|| revert(REASON_NOT_FOUND))?;
                Ok(json!(last))
            }
            "history" => {
                let component = args::string(a, 0)?;
                Ok(json!(history(ctx, &component)?))
            }
            "grant" => {
                require(ctx, Privilege::Admin)?;
                let member = args::address(a, 0)?;
                let level: Privilege = args::decode(a, 1)?;
                let owner: Address = ctx.load(OWNER)?.expect("set in constructor");
                if member == owner && level != Privilege::Admin {
                    return Err(revert(REASON_OWNER_IRREVOCABLE));
                }
                ctx.store(&access_key(&member), &level)?;
                ctx.emit("manager/grant", json!({ "member": member, "privilege": level }))?;
                Ok(Value::Null)
            }
            "revoke" => {
                require(ctx, Privilege::Admin)?;
                let member = args::address(a, 0)?;
                let owner: Address = ctx.load(OWNER)?.expect("set in constructor");
                if member == owner {
                    return Err(revert(REASON_OWNER_IRREVOCABLE));
                }
                ctx.remove(&access_key(&member))?;
                ctx.emit("manager/revoke", json!({ "member": member }))?;
                Ok(Value::Null)
            }
            "privilege" => {
                let member = args::address(a, 0)?;
                Ok(json!(privilege_of(ctx, &member)?))
            }
            "owner" => Ok(json!(ctx.load::<Address>(OWNER)?)),
            _ => unreachable!("dispatch checks methods()"),
        }
    }
}
