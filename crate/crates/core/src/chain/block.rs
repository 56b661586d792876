use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use super::{Address, Receipt, Transaction};
use crate::codec::canonical_json;
use crate::crypto::{digest, Digest};
use crate::par::{self, ExecMode};
use crate::vm::{GasSchedule, VmConfig};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub block_reward: u64,
    pub difficulty: u64,
    pub block_gas_limit: u64,
    pub max_call_depth: u32,
    pub gas_schedule: GasSchedule,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            block_reward: 10,
            difficulty: 16,
            block_gas_limit: 50_000_000,
            max_call_depth: 64,
            gas_schedule: GasSchedule::default(),
        }
    }
}

impl ChainConfig {
    pub fn vm(&self) -> VmConfig {
        VmConfig { schedule: self.gas_schedule.clone(), max_call_depth: self.max_call_depth }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.difficulty == 0 {
            return Err("difficulty must be positive".into());
        }
        if self.block_gas_limit == 0 {
            return Err("block gas limit must be positive".into());
        }
        self.gas_schedule.validate()
    }
}

/// Carried by block 0 only: everything needed to replay from scratch.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenesisConfig {
    pub config: ChainConfig,
    pub allocations: BTreeMap<Address, u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Block {
    pub height: u64,
    pub prev_hash: Digest,
    pub timestamp: u64,
    pub difficulty: u64,
    pub pow_nonce: u64,
    pub miner: Address,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub genesis: Option<GenesisConfig>,
    pub tx_list: Vec<Transaction>,
    pub receipts_digest: Digest,
    pub state_digest: Digest,
    pub block_hash: Digest,
}

#[derive(Serialize)]
struct HeaderFields<'a> {
    height: u64,
    prev_hash: &'a Digest,
    timestamp: u64,
    difficulty: u64,
    miner: &'a Address,
    genesis: &'a Option<GenesisConfig>,
    tx_root: Digest,
    receipts_digest: &'a Digest,
    state_digest: &'a Digest,
}

pub fn tx_root(txs: &[Transaction]) -> Digest {
    let mut h = Sha256::new();
    for tx in txs {
        h.update(tx.digest().as_bytes());
    }
    Digest(h.finalize().into())
}

pub fn receipts_digest(receipts: &[Receipt]) -> Digest {
    digest(&canonical_json(receipts))
}

/// Hasher primed with every header field except the PoW nonce.
#[derive(Clone)]
pub struct HeaderHasher(Sha256);

impl HeaderHasher {
    pub fn new(block: &Block) -> Self {
        let fields = HeaderFields {
            height: block.height,
            prev_hash: &block.prev_hash,
            timestamp: block.timestamp,
            difficulty: block.difficulty,
            miner: &block.miner,
            genesis: &block.genesis,
            tx_root: tx_root(&block.tx_list),
            receipts_digest: &block.receipts_digest,
            state_digest: &block.state_digest,
        };
        let mut h = Sha256::new();
        h.update(canonical_json(&fields));
        HeaderHasher(h)
    }

    pub fn hash_with(&self, pow_nonce: u64) -> Digest {
        let mut h = self.0.clone();
        h.update(pow_nonce.to_be_bytes());
        Digest(h.finalize().into())
    }
}

impl Block {
    pub fn compute_hash(&self) -> Digest {
        HeaderHasher::new(self).hash_with(self.pow_nonce)
    }
}

/// `hash` read as a big-endian integer, times `difficulty`, stays below 2^256.
/// Equivalent to `hash < 2^256 / difficulty` over the reals.
pub fn meets_difficulty(hash: &Digest, difficulty: u64) -> bool {
    if difficulty == 0 {
        return false;
    }
    let mut carry: u128 = 0;
    for chunk in hash.0.rchunks(8) {
        let limb = u64::from_be_bytes(chunk.try_into().expect("8-byte chunk")) as u128;
        let product = limb * difficulty as u128 + carry;
        carry = product >> 64;
    }
    carry == 0
}

const SEARCH_CHUNK: u64 = 1 << 14;

/// Finds the smallest nonce satisfying the difficulty predicate. Returns the
/// nonce and the number of hashes an in-order search needs to reach it.
pub fn search_nonce(hasher: &HeaderHasher, difficulty: u64, mode: ExecMode) -> (u64, u64) {
    let mut start = 0u64;
    loop {
        let end = start.saturating_add(SEARCH_CHUNK);
        if let Some(n) = par::find_first(mode, start..end, |n| meets_difficulty(&hasher.hash_with(n), difficulty)) {
            return (n, n + 1);
        }
        assert!(end < u64::MAX, "nonce space exhausted");
        start = end;
    }
}
