//! Storage layer: file-backed data silos, signed connector descriptors, the
//! audited database proxy, and sealed access tokens.
//!
//! Nothing in here writes to the chain. Record payloads stay in the silos;
//! the chain only ever sees token records and audit events.

mod audit;
mod connector;
mod proxy;
mod silo;
mod tokens;

use thiserror::Error;

pub use audit::{read_audit_file, verify_audit, write_audit_file, AuditAction, AuditEntry, AuditTrail};
pub use connector::{create_connector, verify_connector, ConnectorDescriptor, DEFAULT_DESCRIPTOR_BOUND};
pub use proxy::{
    AccessPolicy, AccessRight, Check, DatabaseProxy, ProxyHandle, ProxyOp, ProxyOutcome, ProxyRequest,
};
pub use silo::{DataSilo, SiloKind, SiloStore};
pub use tokens::{redeem_token, tokenize_connector, TokenLabels};

#[derive(Debug, Error)]
pub enum OffchainError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("descriptor is {size} bytes, bound is {bound}")]
    TooLarge { size: usize, bound: usize },
    #[error("decryption failed")]
    Decryption,
    #[error("token integrity: {0}")]
    TokenIntegrity(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
