use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::block::{meets_difficulty, receipts_digest, search_nonce, HeaderHasher};
use super::{Address, Block, ChainConfig, GenesisConfig, Receipt, ReceiptStatus, Transaction, WorldState};
use crate::crypto::Digest;
use crate::par::{self, ExecMode};
use crate::vm::{BlockEnv, Catalog, Entry, Executor, MessageCall, TraceRecord, VmConfig, VmError};

/// Why a transaction was refused before execution. Refused transactions
/// produce no receipt and are never mined.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TxError {
    #[error("invalid signature or sender")]
    BadSignature,
    #[error("gas limit must be positive")]
    ZeroGasLimit,
    #[error("nonce mismatch: expected {expected}, got {got}")]
    NonceMismatch { expected: u64, got: u64 },
    #[error("insufficient funds: need {need}, have {have}")]
    InsufficientFunds { need: u128, have: u64 },
    #[error("block gas limit exceeded")]
    BlockGasExceeded,
}

/// Inputs shared by every transaction in a block.
pub struct TxEnv<'a> {
    pub catalog: &'a Catalog,
    pub vm: &'a VmConfig,
    pub miner: Address,
    pub height: u64,
    pub tx_index: u64,
    pub trace: bool,
}

/// Applies one transaction in place.
///
/// On Reverted or OutOfGas only the sender's nonce and the gas payment
/// survive; the miner collects `gas_used * gas_price` in every case.
pub fn apply_transaction(
    state: &mut WorldState,
    tx: &Transaction,
    env: &TxEnv<'_>,
) -> Result<(Receipt, Vec<TraceRecord>), TxError> {
    if !tx.is_well_formed() {
        return Err(TxError::BadSignature);
    }
    apply_signed(state, tx, env)
}

/// [`apply_transaction`] for a transaction whose signature was already checked.
fn apply_signed(
    state: &mut WorldState,
    tx: &Transaction,
    env: &TxEnv<'_>,
) -> Result<(Receipt, Vec<TraceRecord>), TxError> {
    if tx.gas_limit == 0 {
        return Err(TxError::ZeroGasLimit);
    }
    let expected = state.nonce(&tx.sender);
    if tx.nonce != expected {
        return Err(TxError::NonceMismatch { expected, got: tx.nonce });
    }
    let upfront = tx.gas_limit as u128 * tx.gas_price as u128;
    let need = upfront + tx.value as u128;
    let have = state.balance(&tx.sender);
    if (have as u128) < need {
        return Err(TxError::InsufficientFunds { need, have });
    }
    let upfront = upfront as u64;

    let sender = state.accounts.entry(tx.sender).or_default();
    sender.balance -= upfront;
    sender.nonce += 1;

    let entry = match tx.recipient {
        Some(callee) => Entry::Call(MessageCall {
            caller: tx.sender,
            callee,
            value: tx.value,
            method: tx.payload.method.clone(),
            args: tx.payload.args.clone(),
            gas_budget: tx.gas_limit,
            depth: 0,
        }),
        None => Entry::Create {
            creator: tx.sender,
            creator_nonce: tx.nonce,
            prototype: tx.payload.method.clone(),
            args: tx.payload.args.clone(),
            value: tx.value,
            gas_budget: tx.gas_limit,
        },
    };
    let block_env = BlockEnv { height: env.height, tx_index: env.tx_index };
    let mut executor = Executor::new(state, env.catalog, env.vm, block_env);
    if env.trace {
        executor = executor.with_trace();
    }
    let outcome = executor.execute(entry);

    let gas_used = outcome.gas_used;
    state.accounts.entry(tx.sender).or_default().balance += (tx.gas_limit - gas_used) * tx.gas_price;
    state.accounts.entry(env.miner).or_default().balance += gas_used * tx.gas_price;

    let (status, revert_reason, output) = match outcome.result {
        Ok(v) => (ReceiptStatus::Succeeded, None, if v.is_null() { None } else { Some(v) }),
        Err(VmError::Revert(r)) => (ReceiptStatus::Reverted, Some(r), None),
        Err(VmError::OutOfGas) => (ReceiptStatus::OutOfGas, None, None),
    };
    let mut logs = outcome.logs;
    for (i, log) in logs.iter_mut().enumerate() {
        log.log_index = i as u64;
    }
    let receipt = Receipt {
        tx_digest: tx.digest(),
        status,
        gas_used,
        gas_by_kind: outcome.gas_by_kind.into_iter().map(|(k, v)| (k.as_str().to_string(), v)).collect(),
        logs,
        created_address: outcome.created,
        output,
        revert_reason,
    };
    Ok((receipt, outcome.trace))
}

pub struct MineContext<'a> {
    pub catalog: &'a Catalog,
    pub config: &'a ChainConfig,
    pub miner: Address,
    pub mode: ExecMode,
    pub trace: bool,
}

pub struct MinedBlock {
    pub block: Block,
    pub state: WorldState,
    pub receipts: Vec<Receipt>,
    /// Index into `pending` and the refusal reason.
    pub rejected: Vec<(usize, TxError)>,
    pub traces: Vec<Vec<TraceRecord>>,
    pub pow_attempts: u64,
}

/// Builds and mines the child of `parent`. Transactions that fail their
/// preconditions or do not fit the block gas limit are left out.
pub fn mine_block(pending: &[Transaction], parent: &Block, state: &WorldState, ctx: &MineContext<'_>) -> MinedBlock {
    let vm = ctx.config.vm();
    let height = parent.height + 1;
    let mut next = state.clone();
    let mut included = Vec::new();
    let mut receipts = Vec::new();
    let mut traces = Vec::new();
    let mut rejected = Vec::new();
    let mut block_gas = 0u64;
    let signed = par::map(ctx.mode, pending, Transaction::is_well_formed);
    for (i, tx) in pending.iter().enumerate() {
        if !signed[i] {
            rejected.push((i, TxError::BadSignature));
            continue;
        }
        if tx.gas_limit > ctx.config.block_gas_limit - block_gas {
            rejected.push((i, TxError::BlockGasExceeded));
            continue;
        }
        let env = TxEnv {
            catalog: ctx.catalog,
            vm: &vm,
            miner: ctx.miner,
            height,
            tx_index: included.len() as u64,
            trace: ctx.trace,
        };
        match apply_signed(&mut next, tx, &env) {
            Ok((receipt, trace)) => {
                block_gas += receipt.gas_used;
                included.push(tx.clone());
                receipts.push(receipt);
                traces.push(trace);
            }
            Err(e) => rejected.push((i, e)),
        }
    }
    next.accounts.entry(ctx.miner).or_default().balance += ctx.config.block_reward;

    let mut block = Block {
        height,
        prev_hash: parent.block_hash,
        timestamp: parent.timestamp + 1,
        difficulty: ctx.config.difficulty,
        pow_nonce: 0,
        miner: ctx.miner,
        genesis: None,
        tx_list: included,
        receipts_digest: receipts_digest(&receipts),
        state_digest: next.digest(),
        block_hash: Digest::ZERO,
    };
    let pow_attempts = seal_block(&mut block, ctx.mode);
    MinedBlock { block, state: next, receipts, rejected, traces, pow_attempts }
}

/// Searches the PoW nonce and fills in `block_hash`. Returns hash attempts.
pub fn seal_block(block: &mut Block, mode: ExecMode) -> u64 {
    let hasher = HeaderHasher::new(block);
    let (nonce, attempts) = search_nonce(&hasher, block.difficulty, mode);
    block.pow_nonce = nonce;
    block.block_hash = hasher.hash_with(nonce);
    attempts
}

pub fn genesis_block(genesis: GenesisConfig, mode: ExecMode) -> Block {
    let state = WorldState::with_allocations(&genesis.allocations);
    let mut block = Block {
        height: 0,
        prev_hash: Digest::ZERO,
        timestamp: 0,
        difficulty: genesis.config.difficulty,
        pow_nonce: 0,
        miner: Address::default(),
        genesis: Some(genesis),
        tx_list: Vec::new(),
        receipts_digest: receipts_digest(&[]),
        state_digest: state.digest(),
        block_hash: Digest::ZERO,
    };
    seal_block(&mut block, mode);
    block
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    Malformed,
    MissingGenesis,
    HeightMismatch,
    HashMismatch,
    PrevHashMismatch,
    DifficultyNotMet,
    DifficultyMismatch,
    TimestampNotMonotone,
    BadTransaction,
    ReceiptsMismatch,
    StateMismatch,
}

impl RejectReason {
    pub fn code(&self) -> &'static str {
        match self {
            RejectReason::Malformed => "malformed",
            RejectReason::MissingGenesis => "missing-genesis",
            RejectReason::HeightMismatch => "height-mismatch",
            RejectReason::HashMismatch => "hash-mismatch",
            RejectReason::PrevHashMismatch => "prev-hash-mismatch",
            RejectReason::DifficultyNotMet => "difficulty-not-met",
            RejectReason::DifficultyMismatch => "difficulty-mismatch",
            RejectReason::TimestampNotMonotone => "timestamp-not-monotone",
            RejectReason::BadTransaction => "bad-transaction",
            RejectReason::ReceiptsMismatch => "receipts-mismatch",
            RejectReason::StateMismatch => "state-mismatch",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("chain rejected at height {height}: {reason} ({detail})")]
pub struct ChainRejection {
    pub height: u64,
    pub reason: RejectReason,
    pub detail: String,
}

impl ChainRejection {
    pub fn new(height: u64, reason: RejectReason, detail: impl Into<String>) -> Self {
        ChainRejection { height, reason, detail: detail.into() }
    }
}

/// Result of replaying a chain from its genesis block.
#[derive(Debug)]
pub struct Replay {
    pub state: WorldState,
    pub receipts: Vec<Vec<Receipt>>,
}

/// Checks that do not need the state: header hash, PoW, links, signatures.
fn check_block_static(blocks: &[Block], i: usize, config: &ChainConfig) -> Result<(), ChainRejection> {
    let b = &blocks[i];
    let h = i as u64;
    if b.compute_hash() != b.block_hash {
        return Err(ChainRejection::new(h, RejectReason::HashMismatch, "header hash differs from block_hash"));
    }
    if i > 0 && b.prev_hash != blocks[i - 1].block_hash {
        return Err(ChainRejection::new(h, RejectReason::PrevHashMismatch, "prev_hash does not match parent"));
    }
    if i == 0 && b.prev_hash != Digest::ZERO {
        return Err(ChainRejection::new(h, RejectReason::PrevHashMismatch, "genesis must have zero prev_hash"));
    }
    if b.height != h {
        return Err(ChainRejection::new(h, RejectReason::HeightMismatch, format!("stored height {}", b.height)));
    }
    if i > 0 && b.timestamp <= blocks[i - 1].timestamp {
        return Err(ChainRejection::new(h, RejectReason::TimestampNotMonotone, ""));
    }
    if b.difficulty != config.difficulty {
        return Err(ChainRejection::new(h, RejectReason::DifficultyMismatch, format!("{}", b.difficulty)));
    }
    if !meets_difficulty(&b.block_hash, b.difficulty) {
        return Err(ChainRejection::new(h, RejectReason::DifficultyNotMet, ""));
    }
    if i > 0 && b.genesis.is_some() {
        return Err(ChainRejection::new(h, RejectReason::Malformed, "genesis section outside block 0"));
    }
    if let Some(pos) = b.tx_list.iter().position(|tx| !tx.is_well_formed()) {
        return Err(ChainRejection::new(h, RejectReason::BadTransaction, format!("tx {pos} signature")));
    }
    Ok(())
}

/// Accepts iff every hash link, difficulty predicate, signature, and state
/// transition replays identically. Per-block static checks run under `mode`;
/// the state replay is sequential.
pub fn verify_chain(blocks: &[Block], catalog: &Catalog, mode: ExecMode) -> Result<Replay, ChainRejection> {
    let genesis = blocks
        .first()
        .and_then(|b| b.genesis.clone())
        .ok_or_else(|| ChainRejection::new(0, RejectReason::MissingGenesis, "block 0 has no genesis section"))?;
    let config = genesis.config;
    config.validate().map_err(|e| ChainRejection::new(0, RejectReason::Malformed, e))?;

    let indices: Vec<usize> = (0..blocks.len()).collect();
    let statics = par::map(mode, &indices, |&i| check_block_static(blocks, i, &config));
    let first_static = statics.into_iter().find_map(Result::err);
    let replay_until = first_static.as_ref().map_or(blocks.len(), |r| r.height as usize);

    let vm = config.vm();
    let mut state = WorldState::with_allocations(&genesis.allocations);
    let mut all_receipts = Vec::with_capacity(blocks.len());
    for (i, block) in blocks.iter().enumerate().take(replay_until) {
        let h = i as u64;
        if i == 0 {
            if !block.tx_list.is_empty() {
                return Err(ChainRejection::new(0, RejectReason::Malformed, "genesis carries transactions"));
            }
        } else {
            let mut receipts = Vec::with_capacity(block.tx_list.len());
            let mut block_gas = 0u64;
            for (idx, tx) in block.tx_list.iter().enumerate() {
                if tx.gas_limit > config.block_gas_limit - block_gas {
                    return Err(ChainRejection::new(h, RejectReason::BadTransaction, format!("tx {idx}: block gas")));
                }
                let env = TxEnv {
                    catalog,
                    vm: &vm,
                    miner: block.miner,
                    height: h,
                    tx_index: idx as u64,
                    trace: false,
                };
                let (receipt, _) = apply_signed(&mut state, tx, &env)
                    .map_err(|e| ChainRejection::new(h, RejectReason::BadTransaction, format!("tx {idx}: {e}")))?;
                block_gas += receipt.gas_used;
                receipts.push(receipt);
            }
            state.accounts.entry(block.miner).or_default().balance += config.block_reward;
            if receipts_digest(&receipts) != block.receipts_digest {
                return Err(ChainRejection::new(h, RejectReason::ReceiptsMismatch, ""));
            }
            all_receipts.push(receipts);
        }
        if i == 0 {
            if receipts_digest(&[]) != block.receipts_digest {
                return Err(ChainRejection::new(h, RejectReason::ReceiptsMismatch, ""));
            }
            all_receipts.push(Vec::new());
        }
        if state.digest() != block.state_digest {
            return Err(ChainRejection::new(h, RejectReason::StateMismatch, ""));
        }
    }
    match first_static {
        Some(r) => Err(r),
        None => Ok(Replay { state, receipts: all_receipts }),
    }
}

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("invalid chain config: {0}")]
    Config(String),
    #[error(transparent)]
    Rejected(#[from] ChainRejection),
}

#[derive(Debug)]
pub struct MineReport {
    pub height: u64,
    pub receipts: Vec<Receipt>,
    pub rejected: Vec<(Transaction, TxError)>,
    pub traces: Vec<Vec<TraceRecord>>,
    pub pow_attempts: u64,
}

/// A single-miner chain instance: committed blocks, their receipts, the
/// current state, and a pending pool.
pub struct Chain {
    catalog: Arc<Catalog>,
    config: ChainConfig,
    vm: VmConfig,
    initial_supply: u128,
    blocks: Vec<Block>,
    receipts: Vec<Vec<Receipt>>,
    state: WorldState,
    pending: Vec<Transaction>,
    mode: ExecMode,
    trace: bool,
}

impl Chain {
    pub fn new(
        config: ChainConfig,
        allocations: BTreeMap<Address, u64>,
        catalog: Arc<Catalog>,
        mode: ExecMode,
    ) -> Result<Chain, ChainError> {
        config.validate().map_err(ChainError::Config)?;
        let state = WorldState::with_allocations(&allocations);
        let genesis = genesis_block(GenesisConfig { config: config.clone(), allocations }, mode);
        Ok(Chain {
            catalog,
            vm: config.vm(),
            initial_supply: state.total_supply(),
            config,
            blocks: vec![genesis],
            receipts: vec![Vec::new()],
            state,
            pending: Vec::new(),
            mode,
            trace: false,
        })
    }

    /// Rebuilds a chain from persisted blocks, verifying everything.
    pub fn from_blocks(blocks: Vec<Block>, catalog: Arc<Catalog>, mode: ExecMode) -> Result<Chain, ChainRejection> {
        let replay = verify_chain(&blocks, &catalog, mode)?;
        let genesis = blocks[0].genesis.clone().expect("verified genesis");
        let initial_supply = genesis.allocations.values().map(|v| *v as u128).sum();
        Ok(Chain {
            catalog,
            vm: genesis.config.vm(),
            config: genesis.config,
            initial_supply,
            blocks,
            receipts: replay.receipts,
            state: replay.state,
            pending: Vec::new(),
            mode,
            trace: false,
        })
    }

    pub fn set_tracing(&mut self, on: bool) {
        self.trace = on;
    }

    pub fn config(&self) -> &ChainConfig {
        &self.config
    }

    pub fn catalog(&self) -> &Arc<Catalog> {
        &self.catalog
    }

    pub fn mode(&self) -> ExecMode {
        self.mode
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn tip(&self) -> &Block {
        self.blocks.last().expect("genesis always present")
    }

    pub fn height(&self) -> u64 {
        self.tip().height
    }

    pub fn receipts(&self, height: u64) -> &[Receipt] {
        self.receipts.get(height as usize).map_or(&[], Vec::as_slice)
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn pending(&self) -> &[Transaction] {
        &self.pending
    }

    pub fn initial_supply(&self) -> u128 {
        self.initial_supply
    }

    /// Σ balances = initial allocation + reward × blocks mined.
    pub fn conservation_holds(&self) -> bool {
        self.state.total_supply() == self.initial_supply + self.config.block_reward as u128 * self.height() as u128
    }

    pub fn submit(&mut self, tx: Transaction) {
        self.pending.push(tx);
    }

    /// Next nonce for `sender`, counting transactions still pending.
    pub fn next_nonce(&self, sender: &Address) -> u64 {
        self.state.nonce(sender) + self.pending.iter().filter(|t| t.sender == *sender).count() as u64
    }

    pub fn mine(&mut self, miner: Address) -> MineReport {
        let pending = std::mem::take(&mut self.pending);
        let ctx = MineContext {
            catalog: &self.catalog,
            config: &self.config,
            miner,
            mode: self.mode,
            trace: self.trace,
        };
        let mined = mine_block(&pending, self.tip(), &self.state, &ctx);
        let rejected = mined.rejected.into_iter().map(|(i, e)| (pending[i].clone(), e)).collect();
        self.state = mined.state;
        self.blocks.push(mined.block);
        self.receipts.push(mined.receipts.clone());
        MineReport {
            height: self.height(),
            receipts: mined.receipts,
            rejected,
            traces: mined.traces,
            pow_attempts: mined.pow_attempts,
        }
    }

    /// Runs a call against a scratch copy of the current state. Nothing is
    /// committed and no gas is paid.
    pub fn view(&self, caller: Address, to: Address, method: &str, args: Vec<Value>) -> Result<Value, VmError> {
        let mut scratch = self.state.clone();
        let call = MessageCall {
            caller,
            callee: to,
            value: 0,
            method: method.to_string(),
            args,
            gas_budget: self.config.block_gas_limit,
            depth: 0,
        };
        let env = BlockEnv { height: self.height() + 1, tx_index: 0 };
        Executor::new(&mut scratch, &self.catalog, &self.vm, env).execute(Entry::Call(call)).result
    }
}
