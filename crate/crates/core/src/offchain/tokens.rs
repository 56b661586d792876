use std::collections::BTreeMap;

use rand::{CryptoRng, RngCore};

use super::{verify_connector, ConnectorDescriptor, OffchainError};
use crate::codec::{canonical_json, parse_canonical};
use crate::contracts::{TokenRecord, TokenStatus};
use crate::crypto::{self, KeyPair, PublicKey, SEAL_ALGORITHM, SIGNATURE_ALGORITHM};

/// Opaque algorithm labels recorded in each token.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenLabels {
    pub encryption: String,
    pub signing: String,
}

impl Default for TokenLabels {
    fn default() -> Self {
        TokenLabels { encryption: SEAL_ALGORITHM.into(), signing: SIGNATURE_ALGORITHM.into() }
    }
}

/// Seals `descriptor` to `recipient` and signs the sealed box as its owner.
pub fn tokenize_connector<R: RngCore + CryptoRng>(
    descriptor: &ConnectorDescriptor,
    owner_keys: &KeyPair,
    recipient: &PublicKey,
    labels: &TokenLabels,
    rng: &mut R,
) -> Result<TokenRecord, OffchainError> {
    if !verify_connector(descriptor, &owner_keys.public_key()) {
        return Err(OffchainError::InvalidInput("descriptor does not verify under owner key".into()));
    }
    let sealed_payload = crypto::seal(recipient, &canonical_json(descriptor), rng)
        .map_err(|e| OffchainError::InvalidInput(e.to_string()))?;
    let owner_signature = owner_keys.sign(&TokenRecord::signed_bytes(&sealed_payload));
    Ok(TokenRecord {
        token_id: TokenRecord::compute_id(&sealed_payload, &owner_signature),
        algorithm_labels: BTreeMap::from([
            ("encryption".to_string(), labels.encryption.clone()),
            ("signing".to_string(), labels.signing.clone()),
        ]),
        recipient_hint: *recipient,
        sealed_payload,
        owner_signature,
        status: TokenStatus::Active,
    })
}

/// Opens a token with the recipient's keys and re-verifies the descriptor
/// against the token owner before returning it.
pub fn redeem_token(token: &TokenRecord, recipient_keys: &KeyPair) -> Result<ConnectorDescriptor, OffchainError> {
    if !token.signature_valid() {
        return Err(OffchainError::TokenIntegrity("owner signature".into()));
    }
    if token.token_id != TokenRecord::compute_id(&token.sealed_payload, &token.owner_signature) {
        return Err(OffchainError::TokenIntegrity("token id".into()));
    }
    let plain = recipient_keys.open(&token.sealed_payload).map_err(|_| OffchainError::Decryption)?;
    let text = std::str::from_utf8(&plain).map_err(|_| OffchainError::TokenIntegrity("payload encoding".into()))?;
    let descriptor: ConnectorDescriptor =
        parse_canonical(text).map_err(|e| OffchainError::TokenIntegrity(format!("payload: {e}")))?;
    if !verify_connector(&descriptor, &token.owner_signature.signer) {
        return Err(OffchainError::TokenIntegrity("descriptor signature".into()));
    }
    Ok(descriptor)
}
