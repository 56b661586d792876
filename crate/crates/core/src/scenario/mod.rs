//! Declarative JSON scenarios run against a fresh chain.

pub mod runner;
pub mod script;
pub mod sim;

use std::collections::BTreeSet;

use thiserror::Error;

pub use runner::{run_script, RunOutcome, Runner, AUDIT_FILE, CHAIN_FILE, TRANSCRIPT_FILE};
pub use script::{Assertion, Cmp, Script, Step};
pub use sim::Sim;

use crate::contracts::{
    CONTRACT_MANAGER, ENTITY_CONTRACT, ENTITY_REGISTRY, GUARDED_VAULT, PUBLISHER_HUB, TOKEN_REGISTRY,
    VULNERABLE_VAULT,
};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("step {step}: {message}")]
    Invalid { step: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Scenarios shipped with the crate, as `(name, json)`.
pub fn bundled() -> [(&'static str, &'static str); 8] {
    [
        ("reentrancy-attack", include_str!("../../scenarios/reentrancy-attack.json")),
        ("guarded-defense", include_str!("../../scenarios/guarded-defense.json")),
        ("manager-upgrade", include_str!("../../scenarios/manager-upgrade.json")),
        ("registry-dedup", include_str!("../../scenarios/registry-dedup.json")),
        ("token-grant-revoke", include_str!("../../scenarios/token-grant-revoke.json")),
        ("pubsub-poll", include_str!("../../scenarios/pubsub-poll.json")),
        ("pubsub-oracle", include_str!("../../scenarios/pubsub-oracle.json")),
        ("end-to-end-data-share", include_str!("../../scenarios/end-to-end-data-share.json")),
    ]
}

/// The eight design patterns a scenario can exercise.
pub const PATTERNS: [&str; 8] = [
    "layered-ring",
    "guarded-update",
    "contract-manager",
    "database-connector",
    "database-proxy",
    "entity-registry",
    "tokenized-exchange",
    "publisher-subscriber",
];

/// Patterns exercised by `script`, judged by the prototypes it deploys and
/// the off-chain steps it runs. Any deployment means the on-chain ring is
/// used; any silo, connector or proxy step the off-chain ring.
pub fn patterns_covered(script: &Script) -> BTreeSet<&'static str> {
    let mut out = BTreeSet::new();
    let mut on_chain = false;
    let mut off_chain = false;
    fn walk(steps: &[Step], out: &mut BTreeSet<&'static str>, on: &mut bool, off: &mut bool) {
        for s in steps {
            match s {
                Step::Deploy { prototype, .. } => {
                    *on = true;
                    match prototype.as_str() {
                        GUARDED_VAULT | VULNERABLE_VAULT => {
                            out.insert("guarded-update");
                        }
                        CONTRACT_MANAGER => {
                            out.insert("contract-manager");
                        }
                        ENTITY_REGISTRY | ENTITY_CONTRACT => {
                            out.insert("entity-registry");
                        }
                        TOKEN_REGISTRY => {
                            out.insert("tokenized-exchange");
                        }
                        PUBLISHER_HUB => {
                            out.insert("publisher-subscriber");
                        }
                        _ => {}
                    }
                }
                Step::Silo { .. } => *off = true,
                Step::Connector { .. } => {
                    *off = true;
                    out.insert("database-connector");
                }
                Step::Tokenize { .. } | Step::Redeem { .. } => {
                    out.insert("tokenized-exchange");
                }
                Step::Proxy { .. } | Step::Grant { .. } => {
                    *off = true;
                    out.insert("database-proxy");
                }
                Step::Poll { .. } | Step::Oracle { .. } => {
                    out.insert("publisher-subscriber");
                }
                Step::Repeat { steps, .. } => walk(steps, out, on, off),
                _ => {}
            }
        }
    }
    walk(&script.steps, &mut out, &mut on_chain, &mut off_chain);
    if on_chain && off_chain {
        out.insert("layered-ring");
    }
    out
}
