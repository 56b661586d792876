use std::collections::BTreeMap;

use serde_json::Value;

use super::exec::{CallContext, VmError};

/// A contract prototype: native code plus a name that payloads refer to.
///
/// Prototypes hold no state of their own; everything lives in the instance
/// account's storage, reached through the [`CallContext`].
pub trait Prototype: Send + Sync {
    fn name(&self) -> &'static str;

    fn version(&self) -> &'static str {
        "1"
    }

    /// Methods callable by name. Anything else goes to the fallback when
    /// value is attached, or reverts.
    fn methods(&self) -> &'static [&'static str];

    fn has_fallback(&self) -> bool {
        false
    }

    fn construct(&self, ctx: &mut CallContext<'_, '_>, args: &[Value]) -> Result<(), VmError>;

    fn invoke(&self, ctx: &mut CallContext<'_, '_>, method: &str, args: &[Value]) -> Result<Value, VmError>;

    fn fallback(&self, _ctx: &mut CallContext<'_, '_>) -> Result<Value, VmError> {
        Ok(Value::Null)
    }
}

#[derive(Default)]
pub struct Catalog {
    prototypes: BTreeMap<&'static str, Box<dyn Prototype>>,
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, prototype: Box<dyn Prototype>) -> &mut Self {
        self.prototypes.insert(prototype.name(), prototype);
        self
    }

    pub fn with(mut self, prototype: impl Prototype + 'static) -> Self {
        self.register(Box::new(prototype));
        self
    }

    pub fn get(&self, name: &str) -> Option<&dyn Prototype> {
        self.prototypes.get(name).map(|p| p.as_ref())
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.prototypes.keys().copied()
    }
}
