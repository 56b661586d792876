use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::codec::{canonical_json, hex_newtype};
use crate::crypto::{self, digest, digest_parts, Digest, KeyPair, PublicKey, Signature};
use crate::vm::LogEvent;

/// 20-byte account identifier.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Address(pub [u8; 20]);
hex_newtype!(Address, 20);

impl Address {
    /// Externally owned account: trailing 20 bytes of the key digest.
    pub fn from_public_key(key: &PublicKey) -> Address {
        Self::tail(digest(key.as_bytes()))
    }

    /// Contract account created by `creator` while its nonce was `nonce`.
    pub fn for_contract(creator: &Address, nonce: u64) -> Address {
        Self::tail(digest_parts(&[b"contract", creator.as_bytes(), &nonce.to_be_bytes()]))
    }

    fn tail(d: Digest) -> Address {
        let mut out = [0u8; 20];
        out.copy_from_slice(&d.0[12..]);
        Address(out)
    }
}

pub const CREATE_TARGET: &str = "create";

/// Call name plus arguments. `contract` is a hex address, or `"create"` with
/// `method` naming the prototype to instantiate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Payload {
    pub contract: String,
    pub method: String,
    pub args: Vec<Value>,
}

impl Payload {
    pub fn call(contract: Address, method: impl Into<String>, args: Vec<Value>) -> Self {
        Payload { contract: contract.to_hex(), method: method.into(), args }
    }

    pub fn create(prototype: impl Into<String>, args: Vec<Value>) -> Self {
        Payload { contract: CREATE_TARGET.into(), method: prototype.into(), args }
    }

    pub fn transfer(to: Address) -> Self {
        Self::call(to, "", Vec::new())
    }

    pub fn encode(&self) -> Vec<u8> {
        canonical_json(self)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transaction {
    pub nonce: u64,
    pub sender: Address,
    pub recipient: Option<Address>,
    pub payload: Payload,
    pub value: u64,
    pub gas_limit: u64,
    pub gas_price: u64,
    pub signature: Signature,
}

#[derive(Serialize)]
struct TxBody<'a> {
    nonce: u64,
    sender: &'a Address,
    recipient: &'a Option<Address>,
    payload: &'a Payload,
    value: u64,
    gas_limit: u64,
    gas_price: u64,
}

/// Everything a sender chooses before signing.
#[derive(Clone, Debug)]
pub struct TxRequest {
    pub nonce: u64,
    pub recipient: Option<Address>,
    pub payload: Payload,
    pub value: u64,
    pub gas_limit: u64,
    pub gas_price: u64,
}

impl TxRequest {
    pub fn sign(self, keys: &KeyPair) -> Transaction {
        let sender = Address::from_public_key(&keys.public_key());
        let body = TxBody {
            nonce: self.nonce,
            sender: &sender,
            recipient: &self.recipient,
            payload: &self.payload,
            value: self.value,
            gas_limit: self.gas_limit,
            gas_price: self.gas_price,
        };
        let signature = keys.sign(&canonical_json(&body));
        Transaction {
            nonce: self.nonce,
            sender,
            recipient: self.recipient,
            payload: self.payload,
            value: self.value,
            gas_limit: self.gas_limit,
            gas_price: self.gas_price,
            signature,
        }
    }
}

impl Transaction {
    pub fn signing_bytes(&self) -> Vec<u8> {
        canonical_json(&TxBody {
            nonce: self.nonce,
            sender: &self.sender,
            recipient: &self.recipient,
            payload: &self.payload,
            value: self.value,
            gas_limit: self.gas_limit,
            gas_price: self.gas_price,
        })
    }

    /// Signature is valid, the signer owns `sender`, and `recipient` agrees
    /// with the payload target.
    pub fn is_well_formed(&self) -> bool {
        if Address::from_public_key(&self.signature.signer) != self.sender {
            return false;
        }
        let target_ok = match (&self.recipient, self.payload.contract.as_str()) {
            (None, CREATE_TARGET) => true,
            (Some(to), hex) => to.to_hex() == hex,
            _ => false,
        };
        target_ok && crypto::verify(&self.signature.signer, &self.signing_bytes(), &self.signature)
    }

    pub fn digest(&self) -> Digest {
        digest(&canonical_json(self))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReceiptStatus {
    Succeeded,
    Reverted,
    OutOfGas,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Receipt {
    pub tx_digest: Digest,
    pub status: ReceiptStatus,
    pub gas_used: u64,
    /// Gas per step kind; sums to `gas_used` except under OutOfGas, where the
    /// unspent remainder of the budget is forfeited as well.
    pub gas_by_kind: BTreeMap<String, u64>,
    pub logs: Vec<LogEvent>,
    pub created_address: Option<Address>,
    pub output: Option<Value>,
    pub revert_reason: Option<String>,
}

impl Receipt {
    pub fn succeeded(&self) -> bool {
        self.status == ReceiptStatus::Succeeded
    }

    pub fn gas_for(&self, kind: &str) -> u64 {
        self.gas_by_kind.get(kind).copied().unwrap_or(0)
    }
}
