//! Canonical byte encodings shared by signing, hashing, and persistence.
//!
//! Canonical JSON means object keys in sorted order and no insignificant
//! whitespace. `serde_json::Value` keeps its maps in a `BTreeMap`, so routing
//! every value through it yields sorted keys regardless of struct field order.

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("invalid hex: {0}")]
    Hex(String),
    #[error("invalid json: {0}")]
    Json(String),
    #[error("non-canonical encoding")]
    NonCanonical,
}

/// Canonical JSON bytes for any serializable value.
pub fn canonical_json<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    let tree = serde_json::to_value(value).expect("serializable value");
    serde_json::to_vec(&tree).expect("json value always encodes")
}

pub fn canonical_string<T: Serialize + ?Sized>(value: &T) -> String {
    String::from_utf8(canonical_json(value)).expect("json is utf-8")
}

/// Parses `text` and rejects it unless re-encoding reproduces the exact bytes.
pub fn parse_canonical<T: Serialize + DeserializeOwned>(text: &str) -> Result<T, CodecError> {
    let value: T = serde_json::from_str(text).map_err(|e| CodecError::Json(e.to_string()))?;
    if canonical_json(&value) != text.as_bytes() {
        return Err(CodecError::NonCanonical);
    }
    Ok(value)
}

pub fn encode_hex(bytes: &[u8]) -> String {
    const DIGITS: &[u8; 16] = b"0123456789abcdef";
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        out.push(DIGITS[(b >> 4) as usize] as char);
        out.push(DIGITS[(b & 0x0f) as usize] as char);
    }
    out
}

/// Decodes lowercase hex only; uppercase digits are rejected so that every
/// byte string has exactly one textual form.
pub fn decode_hex(text: &str) -> Result<Vec<u8>, CodecError> {
    fn nibble(c: u8) -> Option<u8> {
        match c {
            b'0'..=b'9' => Some(c - b'0'),
            b'a'..=b'f' => Some(c - b'a' + 10),
            _ => None,
        }
    }
    let raw = text.as_bytes();
    if !raw.len().is_multiple_of(2) {
        return Err(CodecError::Hex(format!("odd length {}", raw.len())));
    }
    raw.chunks(2)
        .map(|pair| match (nibble(pair[0]), nibble(pair[1])) {
            (Some(hi), Some(lo)) => Ok(hi << 4 | lo),
            _ => Err(CodecError::Hex(format!("bad digit in {text:?}"))),
        })
        .collect()
}

pub fn decode_hex_array<const N: usize>(text: &str) -> Result<[u8; N], CodecError> {
    let bytes = decode_hex(text)?;
    bytes
        .try_into()
        .map_err(|v: Vec<u8>| CodecError::Hex(format!("expected {N} bytes, got {}", v.len())))
}

/// Serde adapter for `Vec<u8>` fields stored as lowercase hex strings.
pub mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::encode_hex(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        super::decode_hex(&text).map_err(serde::de::Error::custom)
    }
}

/// Implements `Display`, `FromStr`, `Debug` and hex serde for a
/// `struct Name(pub [u8; N])` newtype.
macro_rules! hex_newtype {
    ($name:ident, $len:expr) => {
        impl $name {
            pub const LEN: usize = $len;

            pub fn as_bytes(&self) -> &[u8; $len] {
                &self.0
            }

            pub fn to_hex(&self) -> String {
                $crate::codec::encode_hex(&self.0)
            }
        }

        impl std::fmt::Display for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(&self.to_hex())
            }
        }

        impl std::fmt::Debug for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                write!(f, "{}({})", stringify!($name), self.to_hex())
            }
        }

        impl std::str::FromStr for $name {
            type Err = $crate::codec::CodecError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                $crate::codec::decode_hex_array::<$len>(s).map($name)
            }
        }

        impl serde::Serialize for $name {
            fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&self.to_hex())
            }
        }

        impl<'de> serde::Deserialize<'de> for $name {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let text = <String as serde::Deserialize>::deserialize(d)?;
                text.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}
pub(crate) use hex_newtype;
