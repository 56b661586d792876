use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::ScenarioError;
use crate::chain::{ChainConfig, ReceiptStatus};
use crate::offchain::{AccessRight, AuditAction, SiloKind};

/// A declarative scenario. Strings inside arguments and values resolve as
/// follows: `"@name"` is the address of an account or deployed contract,
/// `"$name"` is a variable bound by an earlier step, and `"{i}"` inside a
/// `repeat` body is the iteration index.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Script {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    /// Partial [`ChainConfig`]; unspecified fields keep their defaults.
    #[serde(default)]
    pub config: Value,
    #[serde(default)]
    pub steps: Vec<Step>,
}

impl Script {
    pub fn parse(text: &str) -> Result<Script, ScenarioError> {
        let script: Script = serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        script.chain_config()?;
        Ok(script)
    }

    pub fn chain_config(&self) -> Result<ChainConfig, ScenarioError> {
        let mut base = serde_json::to_value(ChainConfig::default()).expect("config serializes");
        if !self.config.is_null() {
            if !self.config.is_object() {
                return Err(ScenarioError::Parse("config must be an object".into()));
            }
            merge(&mut base, &self.config);
        }
        let config: ChainConfig =
            serde_json::from_value(base).map_err(|e| ScenarioError::Parse(format!("config: {e}")))?;
        config.validate().map_err(|e| ScenarioError::Parse(format!("config: {e}")))?;
        Ok(config)
    }
}

fn merge(base: &mut Value, over: &Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                merge(b.entry(k.clone()).or_insert(Value::Null), v);
            }
        }
        (b, o) => *b = o.clone(),
    }
}

fn default_gas() -> u64 {
    200_000
}

fn one() -> u64 {
    1
}

fn default_var() -> String {
    "i".into()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Step {
    /// Funded in the genesis block; only valid before the first block.
    CreateAccounts { names: Vec<String>, balance: u64 },
    Deploy {
        from: String,
        prototype: String,
        #[serde(rename = "as")]
        name: String,
        #[serde(default)]
        args: Vec<Value>,
        #[serde(default)]
        value: u64,
        #[serde(default = "default_gas")]
        gas: u64,
        #[serde(default)]
        tag: Option<String>,
    },
    Call {
        from: String,
        to: String,
        #[serde(default)]
        method: String,
        #[serde(default)]
        args: Vec<Value>,
        #[serde(default)]
        value: u64,
        #[serde(default = "default_gas")]
        gas: u64,
        #[serde(default = "one")]
        gas_price: u64,
        /// Binds the receipt, and the call's output as `$label`.
        #[serde(default)]
        label: Option<String>,
        /// Groups receipts for gas tables and ratios.
        #[serde(default)]
        tag: Option<String>,
        #[serde(default)]
        expect: Option<ReceiptStatus>,
    },
    Mine {
        #[serde(default)]
        miner: Option<String>,
        #[serde(default = "one")]
        count: u64,
    },
    Poll { messenger: String, hub: String },
    Oracle { oracle: String, hub: String },
    Silo {
        silo: String,
        kind: SiloKind,
        owner: String,
        #[serde(default)]
        records: BTreeMap<String, Value>,
    },
    Connector {
        silo: String,
        name: String,
        #[serde(rename = "as")]
        var: String,
        #[serde(default)]
        meta: BTreeMap<String, String>,
    },
    Tokenize {
        connector: String,
        owner: String,
        recipient: String,
        #[serde(rename = "as")]
        var: String,
    },
    Redeem {
        token: String,
        recipient: String,
        #[serde(default, rename = "as")]
        var: Option<String>,
        /// Token registry to consult first; a revoked token is refused.
        #[serde(default)]
        registry: Option<String>,
        #[serde(default)]
        expect: Option<Expect>,
    },
    Grant { actor: String, rights: Vec<AccessRight> },
    Proxy {
        actor: String,
        connector: String,
        op: ProxyOpKind,
        record: String,
        #[serde(default)]
        document: Option<Value>,
        #[serde(default)]
        expect: Option<ProxyExpect>,
    },
    Set { var: String, value: Value },
    Repeat {
        times: u64,
        #[serde(default = "default_var")]
        var: String,
        steps: Vec<Step>,
    },
    GasTable { tags: Vec<String> },
    Assert(Assertion),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Expect {
    Ok,
    Fail,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProxyOpKind {
    Read,
    Write,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProxyExpect {
    Granted,
    Denied,
}

/// Numeric or equality comparison; every bound given must hold.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cmp {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eq: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ne: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ge: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lt: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub le: Option<Value>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Assertion {
    Balance {
        account: String,
        #[serde(flatten)]
        cmp: Cmp,
    },
    View {
        #[serde(default)]
        from: Option<String>,
        to: String,
        method: String,
        #[serde(default)]
        args: Vec<Value>,
        #[serde(flatten)]
        cmp: Cmp,
    },
    Var {
        var: String,
        #[serde(flatten)]
        cmp: Cmp,
    },
    Receipt {
        label: String,
        #[serde(default)]
        status: Option<ReceiptStatus>,
        #[serde(default)]
        revert_reason: Option<String>,
        #[serde(default)]
        gas_used: Option<u64>,
        #[serde(default)]
        gas: BTreeMap<String, u64>,
    },
    /// Log events across the whole chain, optionally limited to one emitter.
    Logs {
        topic: String,
        #[serde(default)]
        emitter: Option<String>,
        #[serde(default)]
        field: Option<String>,
        #[serde(default)]
        field_eq: Option<Value>,
        #[serde(flatten)]
        cmp: Cmp,
    },
    Conservation,
    Notifications {
        messenger: String,
        #[serde(default)]
        subscriber: Option<String>,
        #[serde(default)]
        topic: Option<String>,
        #[serde(flatten)]
        cmp: Cmp,
    },
    Audit {
        /// Count only entries with this action.
        #[serde(default, rename = "entry")]
        action: Option<AuditAction>,
        #[serde(default)]
        verify: bool,
        #[serde(flatten)]
        cmp: Cmp,
    },
    /// Gas of `kind` summed over `numerator`-tagged receipts, divided by the
    /// same sum over `denominator`.
    GasRatio {
        kind: String,
        numerator: String,
        denominator: String,
        #[serde(flatten)]
        cmp: Cmp,
    },
    Oracle {
        oracle: String,
        #[serde(default)]
        delivered: Option<usize>,
        #[serde(default)]
        failures: Option<usize>,
    },
}
