use std::collections::BTreeMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde_json::Value;

use crate::chain::{Address, Chain, ChainConfig, MineReport, Payload, Receipt, Transaction, TxError, TxRequest};
use crate::contracts;
use crate::crypto::{Digest, KeyPair};
use crate::par::ExecMode;
use crate::vm::{Catalog, VmError};

/// A chain plus named, seeded accounts. The genesis block is built on first
/// use, so accounts must be created before anything is submitted.
pub struct Sim {
    config: ChainConfig,
    catalog: Arc<Catalog>,
    mode: ExecMode,
    pub rng: ChaCha20Rng,
    keys: BTreeMap<String, KeyPair>,
    names: BTreeMap<String, Address>,
    prototypes: BTreeMap<Address, String>,
    allocations: BTreeMap<Address, u64>,
    chain: Option<Chain>,
    /// Receipts of mined transactions submitted through this sim, by digest.
    receipts: BTreeMap<Digest, Receipt>,
    rejected: BTreeMap<Digest, TxError>,
}

impl Sim {
    pub fn new(seed: u64, config: ChainConfig, mode: ExecMode) -> Self {
        Sim {
            config,
            catalog: Arc::new(contracts::catalog()),
            mode,
            rng: ChaCha20Rng::seed_from_u64(seed),
            keys: BTreeMap::new(),
            names: BTreeMap::new(),
            prototypes: BTreeMap::new(),
            allocations: BTreeMap::new(),
            chain: None,
            receipts: BTreeMap::new(),
            rejected: BTreeMap::new(),
        }
    }

    pub fn started(&self) -> bool {
        self.chain.is_some()
    }

    /// Creates a seeded key pair funded with `balance` at genesis.
    ///
    /// # Panics
    /// If the chain has already started or the name is taken.
    pub fn create_account(&mut self, name: &str, balance: u64) -> Address {
        assert!(!self.started(), "accounts must be created before the first block");
        assert!(!self.names.contains_key(name), "name {name} already bound");
        let keys = KeyPair::generate(&mut self.rng);
        let address = Address::from_public_key(&keys.public_key());
        self.keys.insert(name.to_string(), keys);
        self.names.insert(name.to_string(), address);
        *self.allocations.entry(address).or_default() += balance;
        address
    }

    pub fn chain(&mut self) -> &mut Chain {
        if self.chain.is_none() {
            let chain = Chain::new(self.config.clone(), self.allocations.clone(), self.catalog.clone(), self.mode)
                .expect("config validated before the sim was built");
            self.chain = Some(chain);
        }
        self.chain.as_mut().expect("just created")
    }

    /// The chain if it has started.
    pub fn chain_ref(&self) -> Option<&Chain> {
        self.chain.as_ref()
    }

    pub fn address(&self, name: &str) -> Option<Address> {
        self.names.get(name).copied()
    }

    pub fn keys(&self, name: &str) -> Option<&KeyPair> {
        self.keys.get(name)
    }

    pub fn names(&self) -> &BTreeMap<String, Address> {
        &self.names
    }

    pub fn prototype_of(&self, address: &Address) -> Option<&str> {
        self.prototypes.get(address).map(String::as_str)
    }

    pub fn bind(&mut self, name: &str, address: Address) {
        self.names.insert(name.to_string(), address);
    }

    fn sign(&mut self, from: &str, recipient: Option<Address>, payload: Payload, value: u64, gas: u64, price: u64) -> Transaction {
        let keys = self.keys.get(from).unwrap_or_else(|| panic!("unknown account {from}")).clone();
        let sender = Address::from_public_key(&keys.public_key());
        let nonce = self.chain().next_nonce(&sender);
        TxRequest { nonce, recipient, payload, value, gas_limit: gas, gas_price: price }.sign(&keys)
    }

    /// Submits a contract creation and binds `name` to the address it will
    /// get once mined.
    pub fn deploy(&mut self, from: &str, prototype: &str, name: &str, args: Vec<Value>, value: u64, gas: u64) -> Digest {
        let tx = self.sign(from, None, Payload::create(prototype, args), value, gas, 1);
        let address = Address::for_contract(&tx.sender, tx.nonce);
        self.names.insert(name.to_string(), address);
        self.prototypes.insert(address, prototype.to_string());
        let digest = tx.digest();
        self.chain().submit(tx);
        digest
    }

    #[allow(clippy::too_many_arguments)]
    pub fn call(
        &mut self,
        from: &str,
        to: Address,
        method: &str,
        args: Vec<Value>,
        value: u64,
        gas: u64,
        gas_price: u64,
    ) -> Digest {
        let tx = self.sign(from, Some(to), Payload::call(to, method, args), value, gas, gas_price);
        let digest = tx.digest();
        self.chain().submit(tx);
        digest
    }

    pub fn mine(&mut self, miner: Address) -> MineReport {
        let report = self.chain().mine(miner);
        for r in &report.receipts {
            self.receipts.insert(r.tx_digest, r.clone());
        }
        for (tx, e) in &report.rejected {
            self.rejected.insert(tx.digest(), e.clone());
        }
        report
    }

    /// Submits one call and mines it on its own.
    pub fn transact(&mut self, from: &str, to: Address, method: &str, args: Vec<Value>, value: u64, gas: u64) -> Receipt {
        let d = self.call(from, to, method, args, value, gas, 1);
        self.mine(Address::default());
        self.receipt(&d).cloned().unwrap_or_else(|| panic!("transaction rejected: {:?}", self.rejected.get(&d)))
    }

    pub fn receipt(&self, digest: &Digest) -> Option<&Receipt> {
        self.receipts.get(digest)
    }

    pub fn rejection(&self, digest: &Digest) -> Option<&TxError> {
        self.rejected.get(digest)
    }

    pub fn view(&mut self, to: Address, method: &str, args: Vec<Value>) -> Result<Value, VmError> {
        self.chain().view(Address::default(), to, method, args)
    }

    pub fn view_as(&mut self, caller: Address, to: Address, method: &str, args: Vec<Value>) -> Result<Value, VmError> {
        self.chain().view(caller, to, method, args)
    }

    pub fn balance(&mut self, name: &str) -> u64 {
        let a = self.address(name).unwrap_or_else(|| panic!("unknown name {name}"));
        self.chain().state().balance(&a)
    }
}
