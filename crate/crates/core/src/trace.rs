//! Content digests, the user registry, and leak tracing.
//!
//! Every decoded copy carries a user-specific fingerprint, so its 128-bit
//! content digest identifies the user it was issued to. The registry maps
//! those reference digests back to user ids; tracing a suspect image is a
//! single digest lookup. The digest covers the canonical coefficient form,
//! so any single-coefficient tamper changes it.

use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::codec::CoefficientImage;
use crate::dcfe::{decode_image, recover_original, DecodeKey, ProducerKey};
use crate::error::{Error, Result};
use crate::keys::{serialize_key, Key};

/// A 128-bit content digest: the first 16 bytes of SHA-256.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fingerprint128([u8; 16]);

impl Fingerprint128 {
    pub fn new(bytes: [u8; 16]) -> Self {
        Fingerprint128(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 16] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        let bytes = hex::decode(s).map_err(|e| Error::format(format!("bad digest hex: {e}")))?;
        let bytes: [u8; 16] = bytes.try_into().map_err(|v: Vec<u8>| {
            Error::format(format!("digest is {} bytes, expected 16", v.len()))
        })?;
        Ok(Fingerprint128(bytes))
    }
}

impl fmt::Display for Fingerprint128 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Fingerprint128 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fingerprint128({})", self.to_hex())
    }
}

impl Serialize for Fingerprint128 {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Fingerprint128 {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Fingerprint128::from_hex(&s).map_err(D::Error::custom)
    }
}

/// The canonical byte form of a coefficient image: width and height
/// (u32 little-endian), component count, per-component sampling factors,
/// then every block's 64 coefficients as i16 little-endian in zigzag
/// order, blocks in the block ordering contract.
pub fn canonical_bytes(image: &CoefficientImage) -> Vec<u8> {
    let mut out = Vec::with_capacity(9 + 2 * image.components.len() + 128 * image.total_blocks());
    out.extend_from_slice(&image.width.to_le_bytes());
    out.extend_from_slice(&image.height.to_le_bytes());
    out.push(image.components.len() as u8);
    for c in &image.components {
        out.push(c.h);
        out.push(c.v);
    }
    for block in image.blocks() {
        for &v in &block.0 {
            out.extend_from_slice(&(v as i16).to_le_bytes());
        }
    }
    out
}

/// First 16 bytes of SHA-256 over `bytes`.
pub fn digest128(bytes: &[u8]) -> Fingerprint128 {
    let digest = Sha256::digest(bytes);
    Fingerprint128::new(digest[..16].try_into().unwrap())
}

/// One issued key's registry entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserRecord {
    pub user_id: String,
    /// Digest of the decode this key produces on the bound trial image.
    pub reference_hash: Fingerprint128,
    /// Digest of the serialized decode key.
    pub key_digest: Fingerprint128,
    /// Issuance timestamp, ISO-8601.
    pub issued_at: String,
}

/// Registry of issued keys for one trial image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Registry {
    version: u32,
    image_digest: Fingerprint128,
    users: Vec<UserRecord>,
}

impl Registry {
    pub fn new(image_digest: Fingerprint128) -> Self {
        Registry {
            version: 1,
            image_digest,
            users: Vec::new(),
        }
    }

    /// Parse and validate a registry document.
    pub fn from_json(text: &str) -> Result<Self> {
        let registry: Registry = serde_json::from_str(text)
            .map_err(|e| Error::format(format!("bad registry document: {e}")))?;
        if registry.version != 1 {
            return Err(Error::format(format!(
                "unsupported registry version {}",
                registry.version
            )));
        }
        for (i, user) in registry.users.iter().enumerate() {
            for other in &registry.users[..i] {
                if user.user_id == other.user_id {
                    return Err(Error::Conflict(format!(
                        "registry lists user {} twice",
                        user.user_id
                    )));
                }
                if user.reference_hash == other.reference_hash {
                    return Err(Error::Conflict(format!(
                        "registry reference hash collision between {} and {}",
                        other.user_id, user.user_id
                    )));
                }
            }
        }
        Ok(registry)
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("registry serializes");
        text.push('\n');
        text
    }

    /// Digest of the trial image this registry serves.
    pub fn image_digest(&self) -> Fingerprint128 {
        self.image_digest
    }

    pub fn users(&self) -> &[UserRecord] {
        &self.users
    }
}

/// Issue-time registration: simulate the user's decode of the trial and
/// record the resulting reference digest.
pub fn register_user(
    registry: &mut Registry,
    key: &DecodeKey,
    trial: &CoefficientImage,
    producer: &ProducerKey,
    issued_at: &str,
) -> Result<()> {
    let trial_digest = digest128(&canonical_bytes(trial));
    if registry.image_digest != trial_digest {
        return Err(Error::Precondition(format!(
            "registry is bound to content {}, trial digests to {trial_digest}",
            registry.image_digest
        )));
    }
    if key.image_digest != trial_digest {
        return Err(Error::Precondition(format!(
            "key was issued for content {}, trial digests to {trial_digest}",
            key.image_digest
        )));
    }
    recover_original(trial, producer)?;
    if registry.users.iter().any(|u| u.user_id == key.user_id) {
        return Err(Error::Conflict(format!(
            "user {} is already registered",
            key.user_id
        )));
    }
    let decoded = decode_image(trial, key)?;
    let reference_hash = digest128(&canonical_bytes(&decoded));
    if let Some(existing) = registry
        .users
        .iter()
        .find(|u| u.reference_hash == reference_hash)
    {
        return Err(Error::Conflict(format!(
            "reference hash for {} collides with registered user {}",
            key.user_id, existing.user_id
        )));
    }
    let key_digest = digest128(&serialize_key(&Key::User(key.clone()))?);
    registry.users.push(UserRecord {
        user_id: key.user_id.clone(),
        reference_hash,
        key_digest,
        issued_at: issued_at.to_string(),
    });
    Ok(())
}

/// Result of tracing a suspect image against a registry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceOutcome {
    Match(String),
    NoMatch,
}

/// Look up the suspect's content digest among the registered reference
/// hashes.
pub fn trace(suspect: &CoefficientImage, registry: &Registry) -> TraceOutcome {
    let digest = digest128(&canonical_bytes(suspect));
    match registry.users.iter().find(|u| u.reference_hash == digest) {
        Some(user) => TraceOutcome::Match(user.user_id.clone()),
        None => TraceOutcome::NoMatch,
    }
}
