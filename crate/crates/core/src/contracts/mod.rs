//! Contract prototypes for the on-chain patterns.

pub mod hub;
pub mod manager;
pub mod registry;
pub mod token;
pub mod vault;

pub use hub::{HubMode, HubTask, PublisherHub, SubscriptionTable, PUBLISHER_HUB};
pub use manager::{ContractManager, Privilege, VersionEntry, CONTRACT_MANAGER};
pub use registry::{EntityContract, EntityKind, EntityRecord, EntityRegistry, Layout, ENTITY_CONTRACT, ENTITY_REGISTRY};
pub use token::{TokenAction, TokenRecord, TokenRegistry, TokenStatus, TOKEN_REGISTRY};
pub use vault::{Exploit, GuardedVault, VulnerableVault, EXPLOIT, GUARDED_VAULT, VULNERABLE_VAULT};

use crate::vm::Catalog;

/// Catalog with every bundled prototype registered.
pub fn catalog() -> Catalog {
    Catalog::new()
        .with(VulnerableVault)
        .with(GuardedVault)
        .with(Exploit)
        .with(ContractManager)
        .with(EntityRegistry)
        .with(EntityContract)
        .with(TokenRegistry)
        .with(PublisherHub)
}
