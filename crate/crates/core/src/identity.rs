//! Owner identity: keypairs, verifier strings, and detached signatures.
//!
//! Signing is Ed25519 (RFC 8032), which is deterministic: the same key and
//! message always produce the same signature bytes. That property is load
//! bearing here — the watermark filter is re-derived from the signature
//! alone, so signing must be a pure function of (key, verifier string).

use std::fmt;
use std::path::Path;

use ed25519_dalek::{Signer, Verifier};

use crate::error::{Error, Result};

/// Length of a key seed in bytes.
pub const SEED_LEN: usize = 32;
/// Length of an Ed25519 public key in bytes.
pub const PUBLIC_KEY_LEN: usize = 32;
/// Length of an Ed25519 signature in bytes.
pub const SIGNATURE_LEN: usize = 64;
/// Identifier of the only signature scheme this crate implements.
pub const SCHEME_ED25519: &str = "ed25519";

// ---------------------------------------------------------------------------
// OwnerKeypair
// ---------------------------------------------------------------------------

/// An owner's signing keypair.
#[derive(Clone)]
pub struct OwnerKeypair {
    signing: ed25519_dalek::SigningKey,
}

impl OwnerKeypair {
    /// Derive a keypair from exactly 32 bytes of entropy. Deterministic:
    /// the same seed always yields the same keypair.
    pub fn generate(seed: &[u8]) -> Result<Self> {
        let seed: [u8; SEED_LEN] = seed
            .try_into()
            .map_err(|_| Error::InvalidSeed(seed.len()))?;
        Ok(Self {
            signing: ed25519_dalek::SigningKey::from_bytes(&seed),
        })
    }

    pub fn scheme_id(&self) -> &'static str {
        SCHEME_ED25519
    }

    /// Secret key bytes (the seed).
    pub fn private_key_bytes(&self) -> [u8; SEED_LEN] {
        self.signing.to_bytes()
    }

    /// Shareable public key.
    pub fn public_key(&self) -> PublicKey {
        PublicKey {
            bytes: self.signing.verifying_key().to_bytes(),
        }
    }

    /// Read a keypair from a private key file written by [`write_key_file`].
    pub fn from_key_file(path: &Path) -> Result<Self> {
        let (scheme, bytes) = read_key_file(path)?;
        if scheme != SCHEME_ED25519 {
            return Err(Error::Format(format!(
                "unsupported scheme_id `{scheme}` in {}",
                path.display()
            )));
        }
        Self::generate(&bytes)
    }
}

impl fmt::Debug for OwnerKeypair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Never print the private key.
        f.debug_struct("OwnerKeypair")
            .field("public", &self.public_key().to_hex())
            .finish()
    }
}

// ---------------------------------------------------------------------------
// PublicKey
// ---------------------------------------------------------------------------

/// An Ed25519 verification key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicKey {
    bytes: [u8; PUBLIC_KEY_LEN],
}

impl PublicKey {
    pub fn from_bytes(bytes: [u8; PUBLIC_KEY_LEN]) -> Self {
        Self { bytes }
    }

    pub fn as_bytes(&self) -> &[u8; PUBLIC_KEY_LEN] {
        &self.bytes
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.bytes)
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        let raw = hex::decode(s.trim())
            .map_err(|e| Error::Format(format!("public key hex: {e}")))?;
        let bytes: [u8; PUBLIC_KEY_LEN] = raw
            .as_slice()
            .try_into()
            .map_err(|_| Error::Format(format!("public key must be 32 bytes, got {}", raw.len())))?;
        Ok(Self { bytes })
    }

    pub fn from_key_file(path: &Path) -> Result<Self> {
        let (scheme, bytes) = read_key_file(path)?;
        if scheme != SCHEME_ED25519 {
            return Err(Error::Format(format!(
                "unsupported scheme_id `{scheme}` in {}",
                path.display()
            )));
        }
        let bytes: [u8; PUBLIC_KEY_LEN] = bytes
            .as_slice()
            .try_into()
            .map_err(|_| Error::Format("public key must be 32 bytes".into()))?;
        Ok(Self { bytes })
    }
}

// ---------------------------------------------------------------------------
// VerifierString
// ---------------------------------------------------------------------------

/// Owner identifier plus timestamp, with an injective canonical encoding:
/// one length byte, the UTF-8 identifier, then the timestamp as 8 big-endian
/// bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifierString {
    owner_id: String,
    timestamp: i64,
}

impl VerifierString {
    /// Build a verifier string. The owner id must be 1..=255 bytes of UTF-8
    /// so its length fits the single-byte prefix.
    pub fn new(owner_id: &str, timestamp: i64) -> Result<Self> {
        let len = owner_id.len();
        if len == 0 || len > 255 {
            return Err(Error::InvalidOwnerId(len));
        }
        Ok(Self {
            owner_id: owner_id.to_string(),
            timestamp,
        })
    }

    pub fn owner_id(&self) -> &str {
        &self.owner_id
    }

    pub fn timestamp(&self) -> i64 {
        self.timestamp
    }

    /// len(owner_id) ‖ owner_id ‖ timestamp (8-byte big-endian).
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let id = self.owner_id.as_bytes();
        let mut out = Vec::with_capacity(1 + id.len() + 8);
        out.push(id.len() as u8);
        out.extend_from_slice(id);
        out.extend_from_slice(&self.timestamp.to_be_bytes());
        out
    }
}

/// Convenience alias matching the operation name.
pub fn build_verifier_string(owner_id: &str, timestamp: i64) -> Result<VerifierString> {
    VerifierString::new(owner_id, timestamp)
}

// ---------------------------------------------------------------------------
// Signature
// ---------------------------------------------------------------------------

/// A detached signature over a verifier string's canonical bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Signature {
    bytes: Vec<u8>,
    scheme_id: String,
}

impl Signature {
    pub fn from_bytes(bytes: Vec<u8>, scheme_id: &str) -> Self {
        Self {
            bytes,
            scheme_id: scheme_id.to_string(),
        }
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn scheme_id(&self) -> &str {
        &self.scheme_id
    }

    pub fn to_hex(&self) -> String {
        hex::encode(&self.bytes)
    }

    pub fn from_hex(s: &str, scheme_id: &str) -> Result<Self> {
        let bytes =
            hex::decode(s.trim()).map_err(|e| Error::Format(format!("signature hex: {e}")))?;
        Ok(Self::from_bytes(bytes, scheme_id))
    }

    /// Write as a single hex line.
    pub fn write_file(&self, path: &Path) -> Result<()> {
        std::fs::write(path, format!("{}\n", self.to_hex()))?;
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_hex(&text, SCHEME_ED25519)
    }
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Sign a verifier string's canonical bytes. Deterministic.
pub fn sign_verifier(keypair: &OwnerKeypair, v: &VerifierString) -> Result<Signature> {
    let sig = keypair
        .signing
        .try_sign(&v.canonical_bytes())
        .map_err(|e| Error::SigningFailure(e.to_string()))?;
    Ok(Signature {
        bytes: sig.to_bytes().to_vec(),
        scheme_id: SCHEME_ED25519.to_string(),
    })
}

/// True iff `sig` is a valid signature of `v` under `public_key`.
/// Malformed inputs verify as false rather than erroring.
pub fn verify_signature(public_key: &PublicKey, sig: &Signature, v: &VerifierString) -> bool {
    if sig.scheme_id != SCHEME_ED25519 || sig.bytes.len() != SIGNATURE_LEN {
        return false;
    }
    let Ok(vk) = ed25519_dalek::VerifyingKey::from_bytes(&public_key.bytes) else {
        return false;
    };
    let raw: [u8; SIGNATURE_LEN] = sig.bytes.as_slice().try_into().expect("length checked");
    let sig = ed25519_dalek::Signature::from_bytes(&raw);
    vk.verify(&v.canonical_bytes(), &sig).is_ok()
}

// ---------------------------------------------------------------------------
// Key files
// ---------------------------------------------------------------------------

/// Write a key file: a `scheme_id:` header line followed by one hex line.
pub fn write_key_file(path: &Path, scheme_id: &str, key_bytes: &[u8]) -> Result<()> {
    std::fs::write(
        path,
        format!("scheme_id: {scheme_id}\n{}\n", hex::encode(key_bytes)),
    )?;
    Ok(())
}

fn read_key_file(path: &Path) -> Result<(String, Vec<u8>)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format(format!("empty key file {}", path.display())))?;
    let scheme = header
        .strip_prefix("scheme_id:")
        .ok_or_else(|| Error::Format(format!("missing scheme_id header in {}", path.display())))?
        .trim()
        .to_string();
    let hex_line = lines
        .next()
        .ok_or_else(|| Error::Format(format!("missing key line in {}", path.display())))?;
    let bytes = hex::decode(hex_line.trim())
        .map_err(|e| Error::Format(format!("key hex in {}: {e}", path.display())))?;
    Ok((scheme, bytes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn keypair(seed_byte: u8) -> OwnerKeypair {
        OwnerKeypair::generate(&[seed_byte; 32]).unwrap()
    }

    #[test]
    fn keypair_from_zero_seed_is_fixed() {
        let a = keypair(0);
        let b = keypair(0);
        assert_eq!(a.private_key_bytes(), b.private_key_bytes());
        assert_eq!(a.public_key(), b.public_key());
    }

    #[test]
    fn distinct_seeds_distinct_public_keys() {
        assert_ne!(keypair(1).public_key(), keypair(2).public_key());
    }

    #[test]
    fn wrong_seed_length_rejected() {
        assert!(matches!(
            OwnerKeypair::generate(&[0u8; 31]),
            Err(Error::InvalidSeed(31))
        ));
        assert!(matches!(
            OwnerKeypair::generate(&[0u8; 33]),
            Err(Error::InvalidSeed(33))
        ));
    }

    #[test]
    fn canonical_bytes_layout() {
        let v = VerifierString::new("A", 0).unwrap();
        let mut expected = vec![0x01, b'A'];
        expected.extend_from_slice(&[0u8; 8]);
        assert_eq!(v.canonical_bytes(), expected);
    }

    #[test]
    fn canonical_bytes_length_for_longer_id() {
        let v = VerifierString::new("Lab-EJUST", 1735689600).unwrap();
        assert_eq!(v.canonical_bytes().len(), 1 + 9 + 8);
    }

    #[test]
    fn canonical_bytes_injective_in_timestamp() {
        let a = VerifierString::new("A", 0).unwrap();
        let b = VerifierString::new("A", 1).unwrap();
        assert_ne!(a.canonical_bytes(), b.canonical_bytes());
    }

    #[test]
    fn owner_id_bounds() {
        assert!(matches!(
            VerifierString::new("", 0),
            Err(Error::InvalidOwnerId(0))
        ));
        let long = "x".repeat(256);
        assert!(matches!(
            VerifierString::new(&long, 0),
            Err(Error::InvalidOwnerId(256))
        ));
        assert!(VerifierString::new(&"x".repeat(255), 0).is_ok());
    }

    #[test]
    fn sign_verify_round_trip() {
        let kp = keypair(3);
        let v = VerifierString::new("owner", 1234).unwrap();
        let sig = sign_verifier(&kp, &v).unwrap();
        assert!(verify_signature(&kp.public_key(), &sig, &v));
    }

    #[test]
    fn verify_rejects_wrong_key() {
        let kp1 = keypair(4);
        let kp2 = keypair(5);
        let v = VerifierString::new("owner", 1234).unwrap();
        let sig = sign_verifier(&kp1, &v).unwrap();
        assert!(!verify_signature(&kp2.public_key(), &sig, &v));
    }

    #[test]
    fn signing_is_deterministic() {
        let kp = keypair(6);
        let v = VerifierString::new("owner", 99).unwrap();
        let a = sign_verifier(&kp, &v).unwrap();
        let b = sign_verifier(&kp, &v).unwrap();
        assert_eq!(a.bytes(), b.bytes());
        assert_eq!(a.bytes().len(), SIGNATURE_LEN);
    }

    #[test]
    fn single_byte_tamper_flips_verification() {
        let kp = keypair(7);
        let v = VerifierString::new("tamper-target", 777).unwrap();
        let sig = sign_verifier(&kp, &v).unwrap();
        let pk = kp.public_key();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let mut bytes = sig.bytes().to_vec();
            let idx = rng.gen_range(0..bytes.len());
            let bit = 1u8 << rng.gen_range(0..8);
            bytes[idx] ^= bit;
            let bad = Signature::from_bytes(bytes, SCHEME_ED25519);
            assert!(!verify_signature(&pk, &bad, &v));
        }
        // tampering with the verifier string instead
        for t in [1000i64, -1, 778] {
            let other = VerifierString::new("tamper-target", t).unwrap();
            assert!(!verify_signature(&pk, &sig, &other));
        }
    }

    #[test]
    fn malformed_signature_is_false_not_error() {
        let kp = keypair(8);
        let v = VerifierString::new("owner", 1).unwrap();
        let short = Signature::from_bytes(vec![1, 2, 3], SCHEME_ED25519);
        assert!(!verify_signature(&kp.public_key(), &short, &v));
        let wrong_scheme = Signature::from_bytes(vec![0u8; 64], "rsa");
        assert!(!verify_signature(&kp.public_key(), &wrong_scheme, &v));
    }

    #[test]
    fn key_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let kp = keypair(9);
        let priv_path = dir.path().join("owner_private.key");
        let pub_path = dir.path().join("owner_public.key");
        write_key_file(&priv_path, kp.scheme_id(), &kp.private_key_bytes()).unwrap();
        write_key_file(&pub_path, kp.scheme_id(), kp.public_key().as_bytes()).unwrap();

        let kp2 = OwnerKeypair::from_key_file(&priv_path).unwrap();
        assert_eq!(kp.private_key_bytes(), kp2.private_key_bytes());
        let pk = PublicKey::from_key_file(&pub_path).unwrap();
        assert_eq!(pk, kp.public_key());
    }

    #[test]
    fn signature_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let kp = keypair(10);
        let v = VerifierString::new("owner", 5).unwrap();
        let sig = sign_verifier(&kp, &v).unwrap();
        let path = dir.path().join("v.sig");
        sig.write_file(&path).unwrap();
        let loaded = Signature::from_file(&path).unwrap();
        assert_eq!(sig, loaded);
    }
}
