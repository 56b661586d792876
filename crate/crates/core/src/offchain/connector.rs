use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{OffchainError, SiloStore};
use crate::codec::canonical_json;
use crate::crypto::{self, PublicKey, Signature};

/// Serialized descriptors above this many bytes are refused.
pub const DEFAULT_DESCRIPTOR_BOUND: usize = 1024;

/// Meta keys filled in by [`create_connector`].
const RESERVED_META: [&str; 3] = ["silo_id", "locator", "schema"];

/// Minimal signed stand-in for a data source: a name plus reference pointers,
/// never record contents.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectorDescriptor {
    pub name: String,
    pub meta: BTreeMap<String, String>,
    pub owner_signature: Signature,
}

#[derive(Serialize)]
struct Signed<'a> {
    name: &'a str,
    meta: &'a BTreeMap<String, String>,
}

impl ConnectorDescriptor {
    pub fn signed_bytes(name: &str, meta: &BTreeMap<String, String>) -> Vec<u8> {
        canonical_json(&Signed { name, meta })
    }

    /// Wire form: canonical JSON with a hex signature.
    pub fn to_wire(&self) -> Vec<u8> {
        canonical_json(self)
    }

    pub fn silo_id(&self) -> Option<&str> {
        self.meta.get("silo_id").map(String::as_str)
    }
}

/// Builds a descriptor for `silo_id`, signed by the silo owner. `extra` may
/// add meta entries (for example a content digest) but cannot override the
/// reserved ones.
pub fn create_connector(
    store: &SiloStore,
    silo_id: &str,
    name: &str,
    extra: BTreeMap<String, String>,
    bound: usize,
) -> Result<ConnectorDescriptor, OffchainError> {
    let silo = store.get(silo_id).ok_or_else(|| OffchainError::NotFound(format!("silo {silo_id}")))?;
    if let Some(k) = extra.keys().find(|k| RESERVED_META.contains(&k.as_str())) {
        return Err(OffchainError::InvalidInput(format!("meta key {k} is reserved")));
    }
    let mut meta = extra;
    meta.insert("silo_id".into(), silo_id.into());
    meta.insert("locator".into(), format!("silo://{silo_id}"));
    meta.insert("schema".into(), silo.kind.tag().into());
    let owner_signature = silo.owner_keys.sign(&ConnectorDescriptor::signed_bytes(name, &meta));
    let descriptor = ConnectorDescriptor { name: name.into(), meta, owner_signature };
    let size = descriptor.to_wire().len();
    if size > bound {
        return Err(OffchainError::TooLarge { size, bound });
    }
    Ok(descriptor)
}

pub fn verify_connector(descriptor: &ConnectorDescriptor, owner: &PublicKey) -> bool {
    crypto::verify(
        owner,
        &ConnectorDescriptor::signed_bytes(&descriptor.name, &descriptor.meta),
        &descriptor.owner_signature,
    )
}
