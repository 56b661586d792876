use std::collections::BTreeMap;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use super::Address;
use crate::codec;
use crate::crypto::{digest, Digest};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractIdentity {
    pub prototype_name: String,
    pub version: String,
    pub instance_address: Address,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Account {
    pub balance: u64,
    pub nonce: u64,
    pub contract: Option<ContractIdentity>,
    pub storage: BTreeMap<Digest, StorageValue>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StorageValue(#[serde(with = "codec::hex_bytes")] pub Vec<u8>);

/// Storage slots are addressed by the digest of a readable key path.
pub fn storage_key(path: &str) -> Digest {
    digest(path.as_bytes())
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldState {
    pub accounts: BTreeMap<Address, Account>,
}

impl WorldState {
    pub fn with_allocations(allocations: &BTreeMap<Address, u64>) -> Self {
        let accounts = allocations
            .iter()
            .map(|(a, &balance)| (*a, Account { balance, ..Account::default() }))
            .collect();
        WorldState { accounts }
    }

    pub fn account(&self, address: &Address) -> Option<&Account> {
        self.accounts.get(address)
    }

    pub fn balance(&self, address: &Address) -> u64 {
        self.accounts.get(address).map_or(0, |a| a.balance)
    }

    pub fn nonce(&self, address: &Address) -> u64 {
        self.accounts.get(address).map_or(0, |a| a.nonce)
    }

    pub fn total_supply(&self) -> u128 {
        self.accounts.values().map(|a| a.balance as u128).sum()
    }

    pub fn is_contract(&self, address: &Address) -> bool {
        self.accounts.get(address).is_some_and(|a| a.contract.is_some())
    }

    /// Raw read of a contract slot, decoded from its JSON bytes.
    pub fn read_slot<T: DeserializeOwned>(&self, address: &Address, path: &str) -> Option<T> {
        let raw = self.accounts.get(address)?.storage.get(&storage_key(path))?;
        serde_json::from_slice(&raw.0).ok()
    }

    /// Order-sensitive digest over every account field.
    pub fn digest(&self) -> Digest {
        let mut h = Sha256::new();
        h.update((self.accounts.len() as u64).to_be_bytes());
        for (addr, acct) in &self.accounts {
            h.update(addr.as_bytes());
            h.update(acct.balance.to_be_bytes());
            h.update(acct.nonce.to_be_bytes());
            match &acct.contract {
                Some(c) => {
                    h.update([1]);
                    h.update(codec::canonical_json(c));
                }
                None => h.update([0]),
            }
            h.update((acct.storage.len() as u64).to_be_bytes());
            for (k, v) in &acct.storage {
                h.update(k.as_bytes());
                h.update((v.0.len() as u64).to_be_bytes());
                h.update(&v.0);
            }
        }
        Digest(h.finalize().into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_tracks_every_field() {
        let a = Address([1; 20]);
        let mut s = WorldState::with_allocations(&BTreeMap::from([(a, 10)]));
        let d0 = s.digest();
        s.accounts.get_mut(&a).unwrap().nonce = 1;
        let d1 = s.digest();
        s.accounts.get_mut(&a).unwrap().storage.insert(storage_key("x"), StorageValue(vec![]));
        let d2 = s.digest();
        assert!(d0 != d1 && d1 != d2 && d0 != d2);
        assert_eq!(s.total_supply(), 10);
    }
}
