//! Message-call execution for native contract prototypes.
//!
//! Calls carry value and a gas budget; value moves before the callee body
//! runs. Reverts undo only the reverting frame, while running out of gas
//! voids the whole transaction.

mod catalog;
mod exec;
mod gas;
pub mod args;

#[cfg(test)]
mod tests;

pub use catalog::{Catalog, Prototype};
pub use exec::{
    revert, write_trace, BlockEnv, CallContext, Entry, ExecOutcome, Executor, LogEvent, MessageCall, TraceRecord,
    VmConfig, VmError, REASON_ADDRESS_COLLISION, REASON_DEPTH_EXCEEDED, REASON_INSUFFICIENT_BALANCE,
    REASON_NOT_A_CONTRACT, REASON_UNKNOWN_METHOD, REASON_UNKNOWN_PROTOTYPE,
};
pub use gas::{GasSchedule, StepKind};
