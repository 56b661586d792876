//! Positional argument decoding for contract methods. Bad arguments revert.

use serde::de::DeserializeOwned;
use serde_json::Value;

use super::exec::{revert, VmError};
use crate::chain::Address;

fn arg(args: &[Value], i: usize) -> Result<&Value, VmError> {
    args.get(i).ok_or_else(|| revert(format!("missing argument {i}")))
}

pub fn address(args: &[Value], i: usize) -> Result<Address, VmError> {
    arg(args, i)?
        .as_str()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| revert(format!("argument {i} is not an address")))
}

pub fn opt_address(args: &[Value], i: usize) -> Result<Option<Address>, VmError> {
    match args.get(i) {
        None | Some(Value::Null) => Ok(None),
        Some(_) => address(args, i).map(Some),
    }
}

pub fn u64(args: &[Value], i: usize) -> Result<u64, VmError> {
    arg(args, i)?.as_u64().ok_or_else(|| revert(format!("argument {i} is not an unsigned integer")))
}

pub fn string(args: &[Value], i: usize) -> Result<String, VmError> {
    arg(args, i)?
        .as_str()
        .map(str::to_owned)
        .ok_or_else(|| revert(format!("argument {i} is not a string")))
}

pub fn value(args: &[Value], i: usize) -> Result<Value, VmError> {
    arg(args, i).cloned()
}

pub fn decode<T: DeserializeOwned>(args: &[Value], i: usize) -> Result<T, VmError> {
    serde_json::from_value(arg(args, i)?.clone()).map_err(|e| revert(format!("argument {i}: {e}")))
}
