//! On-chain registry of sealed access tokens with an event-log audit trail.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::chain::Address;
use crate::codec::canonical_json;
use crate::crypto::{self, digest_parts, Digest, PublicKey, SealedBox, Signature};
use crate::vm::{args, revert, CallContext, Prototype, VmError};

pub const TOKEN_REGISTRY: &str = "token_registry";
pub const AUDIT_TOPIC: &str = "audit/token";

pub const REASON_INVALID_TOKEN: &str = "invalid-token";
pub const REASON_UNAUTHORIZED: &str = "unauthorized";
pub const REASON_NOT_FOUND: &str = "not-found";
pub const REASON_DUPLICATE_TOKEN: &str = "duplicate-token";
pub const REASON_ALREADY_REVOKED: &str = "already-revoked";

/// Compute steps charged for one on-chain signature check.
pub const VERIFY_STEPS: u64 = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TokenStatus {
    Active,
    Revoked,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenRecord {
    pub token_id: Digest,
    pub sealed_payload: SealedBox,
    /// Made over [`TokenRecord::signed_bytes`] of `sealed_payload`.
    pub owner_signature: Signature,
    /// Keys `encryption` and `signing`.
    pub algorithm_labels: BTreeMap<String, String>,
    pub recipient_hint: PublicKey,
    pub status: TokenStatus,
}

impl TokenRecord {
    pub fn signed_bytes(sealed: &SealedBox) -> Vec<u8> {
        canonical_json(sealed)
    }

    pub fn compute_id(sealed: &SealedBox, signature: &Signature) -> Digest {
        digest_parts(&[&Self::signed_bytes(sealed), signature.bytes.as_bytes()])
    }

    pub fn owner_address(&self) -> Address {
        Address::from_public_key(&self.owner_signature.signer)
    }

    pub fn signature_valid(&self) -> bool {
        crypto::verify(
            &self.owner_signature.signer,
            &Self::signed_bytes(&self.sealed_payload),
            &self.owner_signature,
        )
    }
}

/// Audit actions recorded on-chain; names match the off-chain trail.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TokenAction {
    TokenCreate,
    TokenAccess,
    TokenRevoke,
    Denied,
}

fn token_key(id: &Digest) -> String {
    format!("token/{id}")
}

fn audit(ctx: &mut CallContext<'_, '_>, action: TokenAction, id: &Digest, detail: Value) -> Result<(), VmError> {
    let actor = ctx.caller();
    ctx.emit(AUDIT_TOPIC, json!({ "action": action, "token_id": id, "actor": actor, "detail": detail }))
}

fn load_token(ctx: &mut CallContext<'_, '_>, a: &[Value]) -> Result<TokenRecord, VmError> {
    let id: Digest = args::decode(a, 0)?;
    ctx.load(&token_key(&id))?.ok_or_else(|| revert(REASON_NOT_FOUND))
}

pub struct TokenRegistry;

impl Prototype for TokenRegistry {
    fn name(&self) -> &'static str {
        TOKEN_REGISTRY
    }

    fn methods(&self) -> &'static [&'static str] {
        &["register", "access", "revoke", "status"]
    }

    fn construct(&self, _ctx: &mut CallContext<'_, '_>, _args: &[Value]) -> Result<(), VmError> {
        Ok(())
    }

    fn invoke(&self, ctx: &mut CallContext<'_, '_>, method: &str, a: &[Value]) -> Result<Value, VmError> {
        match method {
            "register" => {
                let mut token: TokenRecord =
                    args::decode(a, 0).map_err(|_| revert(REASON_INVALID_TOKEN))?;
                ctx.step(VERIFY_STEPS)?;
                if !token.signature_valid()
                    || token.token_id != TokenRecord::compute_id(&token.sealed_payload, &token.owner_signature)
                {
                    return Err(revert(REASON_INVALID_TOKEN));
                }
                if ctx.read_raw(&token_key(&token.token_id))?.is_some() {
                    return Err(revert(REASON_DUPLICATE_TOKEN));
                }
                token.status = TokenStatus::Active;
                ctx.store(&token_key(&token.token_id), &token)?;
                audit(ctx, TokenAction::TokenCreate, &token.token_id, Value::Null)?;
                Ok(json!(token.token_id))
            }
            "access" => {
                let token = load_token(ctx, a)?;
                match token.status {
                    TokenStatus::Active => {
                        audit(ctx, TokenAction::TokenAccess, &token.token_id, Value::Null)?;
                        Ok(json!(token))
                    }
                    TokenStatus::Revoked => {
                        audit(ctx, TokenAction::Denied, &token.token_id, json!("revoked"))?;
                        Ok(json!({ "token_id": token.token_id, "status": token.status }))
                    }
                }
            }
            "revoke" => {
                let mut token = load_token(ctx, a)?;
                if ctx.caller() != token.owner_address() {
                    return Err(revert(REASON_UNAUTHORIZED));
                }
                if token.status == TokenStatus::Revoked {
                    return Err(revert(REASON_ALREADY_REVOKED));
                }
                token.status = TokenStatus::Revoked;
                ctx.store(&token_key(&token.token_id), &token)?;
                audit(ctx, TokenAction::TokenRevoke, &token.token_id, Value::Null)?;
                Ok(Value::Null)
            }
            // unaudited status probe, for views only
            "status" => Ok(json!(load_token(ctx, a)?.status)),
            _ => unreachable!("dispatch checks methods()"),
        }
    }
}
