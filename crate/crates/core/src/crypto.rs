//! Digests, signatures, and sealed boxes.
//!
//! | Primitive  | Algorithm                              |
//! |------------|----------------------------------------|
//! | Digest     | SHA-256 (32 B)                         |
//! | Signature  | Ed25519 (64 B)                         |
//! | Sealed box | X25519 + XSalsa20-Poly1305, anonymous  |
//!
//! One Ed25519 key pair serves both roles: its Montgomery form is the X25519
//! key used for sealing, so a party publishes a single 32-byte public key.

use crypto_box::aead::rand_core::CryptoRngCore;
use ed25519_dalek::{Signer, SigningKey, Verifier, VerifyingKey};
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::codec::{self, hex_newtype};

pub const HASH_ALGORITHM: &str = "sha-256";
pub const SIGNATURE_ALGORITHM: &str = "ed25519";
pub const SEAL_ALGORITHM: &str = "x25519-xsalsa20poly1305-sealedbox";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("malformed key: {0}")]
    KeyFormat(String),
    /// Wrong key, truncation, and tampering all map here.
    #[error("decryption failed")]
    Decryption,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Digest(pub [u8; 32]);
hex_newtype!(Digest, 32);

impl Digest {
    pub const ZERO: Digest = Digest([0; 32]);
}

pub fn digest(data: &[u8]) -> Digest {
    Digest(Sha256::digest(data).into())
}

/// Digest of the concatenation of `parts`.
pub fn digest_parts(parts: &[&[u8]]) -> Digest {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    Digest(h.finalize().into())
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PublicKey(pub [u8; 32]);
hex_newtype!(PublicKey, 32);

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct SignatureBytes(pub [u8; 64]);
hex_newtype!(SignatureBytes, 64);

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Signature {
    pub bytes: SignatureBytes,
    pub signer: PublicKey,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SealedBox {
    #[serde(with = "codec::hex_bytes")]
    pub ciphertext: Vec<u8>,
    pub recipient: PublicKey,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sender_hint: Option<PublicKey>,
}

/// Signing and sealing key pair. The secret half never serializes.
#[derive(Clone)]
pub struct KeyPair {
    signing: SigningKey,
}

impl std::fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KeyPair").field("public_key", &self.public_key()).finish_non_exhaustive()
    }
}

impl KeyPair {
    pub fn from_seed(seed: [u8; 32]) -> Self {
        KeyPair { signing: SigningKey::from_bytes(&seed) }
    }

    pub fn generate<R: CryptoRngCore + ?Sized>(rng: &mut R) -> Self {
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        Self::from_seed(seed)
    }

    pub fn public_key(&self) -> PublicKey {
        PublicKey(self.signing.verifying_key().to_bytes())
    }

    pub fn secret_key(&self) -> [u8; 32] {
        self.signing.to_bytes()
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        Signature {
            bytes: SignatureBytes(self.signing.sign(message).to_bytes()),
            signer: self.public_key(),
        }
    }

    pub fn open(&self, sealed: &SealedBox) -> Result<Vec<u8>, CryptoError> {
        open_with(&self.signing, sealed)
    }
}

fn signing_key(secret: &[u8]) -> Result<SigningKey, CryptoError> {
    let seed: [u8; 32] = secret
        .try_into()
        .map_err(|_| CryptoError::KeyFormat(format!("secret key must be 32 bytes, got {}", secret.len())))?;
    Ok(SigningKey::from_bytes(&seed))
}

fn verifying_key(public: &PublicKey) -> Result<VerifyingKey, CryptoError> {
    VerifyingKey::from_bytes(&public.0).map_err(|e| CryptoError::KeyFormat(e.to_string()))
}

pub fn sign(secret: &[u8], message: &[u8]) -> Result<Signature, CryptoError> {
    Ok(KeyPair { signing: signing_key(secret)? }.sign(message))
}

/// Accepts iff `signature` was made over `message` by the holder of `public`.
pub fn verify(public: &PublicKey, message: &[u8], signature: &Signature) -> bool {
    if signature.signer != *public {
        return false;
    }
    let Ok(key) = verifying_key(public) else {
        return false;
    };
    let sig = ed25519_dalek::Signature::from_bytes(&signature.bytes.0);
    key.verify(message, &sig).is_ok()
}

pub fn seal<R: CryptoRngCore + ?Sized>(
    recipient: &PublicKey,
    plaintext: &[u8],
    rng: &mut R,
) -> Result<SealedBox, CryptoError> {
    let montgomery = verifying_key(recipient)?.to_montgomery();
    let box_key = crypto_box::PublicKey::from(montgomery.to_bytes());
    let mut rng = RngAdapter(rng);
    let ciphertext = box_key.seal(&mut rng, plaintext).map_err(|_| CryptoError::Decryption)?;
    Ok(SealedBox { ciphertext, recipient: *recipient, sender_hint: None })
}

pub fn open(secret: &[u8], sealed: &SealedBox) -> Result<Vec<u8>, CryptoError> {
    open_with(&signing_key(secret)?, sealed)
}

fn open_with(signing: &SigningKey, sealed: &SealedBox) -> Result<Vec<u8>, CryptoError> {
    let box_key = crypto_box::SecretKey::from(signing.to_scalar_bytes());
    box_key.unseal(&sealed.ciphertext).map_err(|_| CryptoError::Decryption)
}

// `seal` wants a sized rng; this lets callers pass `&mut dyn` sources too.
struct RngAdapter<'a, R: ?Sized>(&'a mut R);

impl<R: CryptoRngCore + ?Sized> crypto_box::aead::rand_core::RngCore for RngAdapter<'_, R> {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.0.fill_bytes(dest)
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), crypto_box::aead::rand_core::Error> {
        self.0.try_fill_bytes(dest)
    }
}

impl<R: CryptoRngCore + ?Sized> crypto_box::aead::rand_core::CryptoRng for RngAdapter<'_, R> {}
