use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::OffchainError;
use crate::crypto::{KeyPair, PublicKey};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SiloKind {
    /// Low-frequency, high-fidelity clinical records.
    #[serde(rename = "LFQ")]
    Lfq,
    /// High-frequency, low-fidelity device data.
    #[serde(rename = "HFQ")]
    Hfq,
}

impl SiloKind {
    pub fn tag(self) -> &'static str {
        match self {
            SiloKind::Lfq => "LFQ",
            SiloKind::Hfq => "HFQ",
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SiloFile {
    silo_id: String,
    kind: SiloKind,
    records: BTreeMap<String, Value>,
}

/// A JSON-file data store owned by one key pair.
#[derive(Clone, Debug)]
pub struct DataSilo {
    pub silo_id: String,
    pub kind: SiloKind,
    pub owner_keys: KeyPair,
    pub records: BTreeMap<String, Value>,
}

impl DataSilo {
    pub fn new(silo_id: impl Into<String>, kind: SiloKind, owner_keys: KeyPair) -> Self {
        DataSilo { silo_id: silo_id.into(), kind, owner_keys, records: BTreeMap::new() }
    }

    pub fn owner(&self) -> PublicKey {
        self.owner_keys.public_key()
    }

    pub fn get(&self, record_id: &str) -> Option<&Value> {
        self.records.get(record_id)
    }

    pub fn put(&mut self, record_id: impl Into<String>, document: Value) {
        self.records.insert(record_id.into(), document);
    }

    pub fn load(path: &Path, owner_keys: KeyPair) -> Result<Self, OffchainError> {
        let file: SiloFile = serde_json::from_slice(&std::fs::read(path)?)?;
        Ok(DataSilo { silo_id: file.silo_id, kind: file.kind, owner_keys, records: file.records })
    }

    pub fn save(&self, path: &Path) -> Result<(), OffchainError> {
        let file = SiloFile { silo_id: self.silo_id.clone(), kind: self.kind, records: self.records.clone() };
        let mut bytes = serde_json::to_vec_pretty(&file)?;
        bytes.push(b'\n');
        std::fs::write(path, bytes)?;
        Ok(())
    }
}

/// All silos reachable by a connector handler, keyed by id.
#[derive(Clone, Debug, Default)]
pub struct SiloStore {
    silos: BTreeMap<String, DataSilo>,
}

impl SiloStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, silo: DataSilo) {
        self.silos.insert(silo.silo_id.clone(), silo);
    }

    pub fn get(&self, silo_id: &str) -> Option<&DataSilo> {
        self.silos.get(silo_id)
    }

    pub fn get_mut(&mut self, silo_id: &str) -> Option<&mut DataSilo> {
        self.silos.get_mut(silo_id)
    }

    pub fn silos(&self) -> impl Iterator<Item = &DataSilo> {
        self.silos.values()
    }
}
