//! Hash-linked ledger: blocks, transactions, receipts, world state, mining,
//! and replay verification.

mod block;
mod ledger;
mod persist;
mod state;
mod types;


pub use block::{
    meets_difficulty, receipts_digest, search_nonce, tx_root, Block, ChainConfig, GenesisConfig, HeaderHasher,
};
pub use ledger::{
    apply_transaction, genesis_block, mine_block, seal_block, verify_chain, Chain, ChainError, ChainRejection,
    MineContext, MineReport, MinedBlock, RejectReason, Replay, TxEnv, TxError,
};
pub use persist::{decode_blocks, encode_blocks, read_chain_file, write_blocks, write_chain_file, LoadError};
pub use state::{storage_key, Account, ContractIdentity, StorageValue, WorldState};
pub use types::{Address, Payload, Receipt, ReceiptStatus, Transaction, TxRequest, CREATE_TARGET};
