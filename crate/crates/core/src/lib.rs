//! A small proof-of-work ledger with a metered contract VM, the healthcare
//! DApp design patterns built on it, and the off-chain storage and
//! notification services around them.

pub mod chain;
pub mod codec;
pub mod contracts;
pub mod crypto;
pub mod notify;
pub mod offchain;
pub mod par;
pub mod scenario;
pub mod vm;
