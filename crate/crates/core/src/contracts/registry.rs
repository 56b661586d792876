//! Entity registry: a factory plus a shared store of intrinsic records.
//!
//! `get_entity` deploys an entity contract only when the identifier is new.
//! In the `flyweight` layout the intrinsic record (for example an insurance
//! policy shared by many patients) is written once into the registry's own
//! storage and entities keep only its key. The `naive` layout copies the
//! intrinsic record into every entity contract and exists as a baseline for
//! storage-cost comparisons.

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::chain::Address;
use crate::vm::{args, revert, CallContext, Prototype, VmError};

pub const ENTITY_REGISTRY: &str = "entity_registry";
pub const ENTITY_CONTRACT: &str = "entity_contract";

pub const REASON_EMPTY_ENTITY_ID: &str = "empty-entity-id";
pub const REASON_KIND_MISMATCH: &str = "kind-mismatch";
pub const REASON_NOT_FOUND: &str = "not-found";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EntityKind {
    Patient,
    Provider,
    Insurer,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    Flyweight,
    Naive,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub entity_id: String,
    pub kind: EntityKind,
    pub intrinsic_ref: String,
    pub extrinsic_address: Address,
}

const LAYOUT: &str = "layout";

fn entity_key(id: &str) -> String {
    format!("entity/{id}")
}

fn intrinsic_index_key(key: &str) -> String {
    format!("intrinsic/{key}")
}

fn intrinsic_field_key(key: &str, field: &str) -> String {
    format!("intrinsic/{key}/{field}")
}

fn object(v: &Value, what: &str) -> Result<Map<String, Value>, VmError> {
    v.as_object().cloned().ok_or_else(|| revert(format!("{what} must be an object")))
}

/// Writes each field of `obj` to its own slot under `prefix`, plus an index
/// slot listing the field names.
fn store_fields(ctx: &mut CallContext<'_, '_>, index_key: &str, obj: &Map<String, Value>, field_key: impl Fn(&str) -> String) -> Result<(), VmError> {
    let names: Vec<&String> = obj.keys().collect();
    ctx.store(index_key, &names)?;
    for (k, v) in obj {
        ctx.store(&field_key(k), v)?;
    }
    Ok(())
}

fn load_fields(ctx: &mut CallContext<'_, '_>, index_key: &str, field_key: impl Fn(&str) -> String) -> Result<Option<Value>, VmError> {
    let Some(names) = ctx.load::<Vec<String>>(index_key)? else {
        return Ok(None);
    };
    let mut out = Map::new();
    for n in names {
        let v = ctx.load::<Value>(&field_key(&n))?.unwrap_or(Value::Null);
        out.insert(n, v);
    }
    Ok(Some(Value::Object(out)))
}

pub struct EntityRegistry;

impl EntityRegistry {
    fn get_entity(ctx: &mut CallContext<'_, '_>, a: &[Value]) -> Result<Value, VmError> {
        let entity_id = args::string(a, 0)?;
        let kind: EntityKind = args::decode(a, 1)?;
        let intrinsic_key = args::string(a, 2)?;
        let intrinsic = object(&args::value(a, 3)?, "intrinsic")?;
        let extrinsic = args::value(a, 4)?;
        object(&extrinsic, "extrinsic")?;
        if entity_id.is_empty() {
            return Err(revert(REASON_EMPTY_ENTITY_ID));
        }
        if let Some(existing) = ctx.load::<EntityRecord>(&entity_key(&entity_id))? {
            if existing.kind != kind {
                return Err(revert(REASON_KIND_MISMATCH));
            }
            return Ok(json!(existing.extrinsic_address));
        }
        let layout: Layout = ctx.load(LAYOUT)?.expect("set in constructor");
        let inline = match layout {
            Layout::Flyweight => {
                if ctx.read_raw(&intrinsic_index_key(&intrinsic_key))?.is_none() {
                    store_fields(ctx, &intrinsic_index_key(&intrinsic_key), &intrinsic, |f| {
                        intrinsic_field_key(&intrinsic_key, f)
                    })?;
                }
                Value::Null
            }
            Layout::Naive => Value::Object(intrinsic),
        };
        let me = ctx.address();
        let address = ctx.create(
            ENTITY_CONTRACT,
            vec![json!(entity_id), json!(kind), json!(me), json!(intrinsic_key), extrinsic, inline],
            0,
        )?;
        let record = EntityRecord {
            entity_id: entity_id.clone(),
            kind,
            intrinsic_ref: intrinsic_key,
            extrinsic_address: address,
        };
        ctx.store(&entity_key(&entity_id), &record)?;
        ctx.emit("registry/created", json!({ "entity_id": entity_id, "address": address }))?;
        Ok(json!(address))
    }

    fn get_full(ctx: &mut CallContext<'_, '_>, a: &[Value]) -> Result<Value, VmError> {
        let entity_id = args::string(a, 0)?;
        let record: EntityRecord = ctx.load(&entity_key(&entity_id))?.ok_or_else(|| revert(REASON_NOT_FOUND))?;
        let layout: Layout = ctx.load(LAYOUT)?.expect("set in constructor");
        let intrinsic = match layout {
            Layout::Flyweight => {
                let key = record.intrinsic_ref.clone();
                load_fields(ctx, &intrinsic_index_key(&key), |f| intrinsic_field_key(&key, f))?
                    .unwrap_or(Value::Null)
            }
            Layout::Naive => ctx.call(record.extrinsic_address, "intrinsic", vec![], 0)?,
        };
        let extrinsic = ctx.call(record.extrinsic_address, "extrinsic", vec![], 0)?;
        Ok(json!({
            "entity_id": record.entity_id,
            "kind": record.kind,
            "address": record.extrinsic_address,
            "intrinsic_ref": record.intrinsic_ref,
            "intrinsic": intrinsic,
            "extrinsic": extrinsic,
        }))
    }
}

impl Prototype for EntityRegistry {
    fn name(&self) -> &'static str {
        ENTITY_REGISTRY
    }

    fn methods(&self) -> &'static [&'static str] {
        &["get_entity", "get_record", "get_full", "intrinsic"]
    }

    /// Args: `[layout]`, `"flyweight"` when omitted.
    fn construct(&self, ctx: &mut CallContext<'_, '_>, a: &[Value]) -> Result<(), VmError> {
        let layout: Layout = if a.is_empty() { Layout::Flyweight } else { args::decode(a, 0)? };
        ctx.store(LAYOUT, &layout)
    }

    fn invoke(&self, ctx: &mut CallContext<'_, '_>, method: &str, a: &[Value]) -> Result<Value, VmError> {
        match method {
            // get_entity(entity_id, kind, intrinsic_key, intrinsic, extrinsic)
            "get_entity" => Self::get_entity(ctx, a),
            "get_record" => {
                let id = args::string(a, 0)?;
                let rec: EntityRecord = ctx.load(&entity_key(&id))?.ok_or_else(|| revert(REASON_NOT_FOUND))?;
                Ok(json!(rec))
            }
            "get_full" => Self::get_full(ctx, a),
            "intrinsic" => {
                let key = args::string(a, 0)?;
                load_fields(ctx, &intrinsic_index_key(&key), |f| intrinsic_field_key(&key, f))?
                    .ok_or_else(|| revert(REASON_NOT_FOUND))
            }
            _ => unreachable!("dispatch checks methods()"),
        }
    }
}

/// Entity-specific data, deployed by the registry.
///
/// Constructor args: `[entity_id, kind, registry, intrinsic_key, extrinsic, inline_intrinsic|null]`.
pub struct EntityContract;

impl Prototype for EntityContract {
    fn name(&self) -> &'static str {
        ENTITY_CONTRACT
    }

    fn methods(&self) -> &'static [&'static str] {
        &["extrinsic", "intrinsic", "meta"]
    }

    fn construct(&self, ctx: &mut CallContext<'_, '_>, a: &[Value]) -> Result<(), VmError> {
        let meta = json!({
            "entity_id": args::string(a, 0)?,
            "kind": args::decode::<EntityKind>(a, 1)?,
            "registry": args::address(a, 2)?,
            "intrinsic_key": args::string(a, 3)?,
        });
        let extrinsic = object(&args::value(a, 4)?, "extrinsic")?;
        ctx.store("meta", &meta)?;
        store_fields(ctx, "ext", &extrinsic, |f| format!("ext/{f}"))?;
        let inline = args::value(a, 5)?;
        if !inline.is_null() {
            store_fields(ctx, "int", &object(&inline, "intrinsic")?, |f| format!("int/{f}"))?;
        }
        Ok(())
    }

    fn invoke(&self, ctx: &mut CallContext<'_, '_>, method: &str, _a: &[Value]) -> Result<Value, VmError> {
        match method {
            "extrinsic" => Ok(load_fields(ctx, "ext", |f| format!("ext/{f}"))?.unwrap_or(Value::Null)),
            "intrinsic" => Ok(load_fields(ctx, "int", |f| format!("int/{f}"))?.unwrap_or(Value::Null)),
            "meta" => Ok(ctx.load::<Value>("meta")?.unwrap_or(Value::Null)),
            _ => unreachable!("dispatch checks methods()"),
        }
    }
}
