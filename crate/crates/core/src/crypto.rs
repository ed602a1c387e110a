// SPDX-License-Identifier: Apache-2.0

//! Hashing, signatures and key transport.
//!
//! Content hashes are SHA-256 ([`Digest256`]); launch measurements use the
//! SHA-384 domain ([`Digest384`]). Signatures are Ed25519, which is
//! deterministic, so identical inputs always produce byte-identical reports
//! and certificates.
//!
//! Key transport ([`encrypt_to`] / [`decrypt_with`]) converts the recipient's
//! Ed25519 verification key to its X25519 form, runs an ephemeral-static
//! Diffie-Hellman exchange, derives a ChaCha20-Poly1305 key with HKDF-SHA256
//! and seals the payload.

use chacha20poly1305::aead::{Aead, KeyInit};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use curve25519_dalek::montgomery::MontgomeryPoint;
use ed25519_dalek::{Signer, SigningKey, Verifier, VerifyingKey};
use hkdf::Hkdf;
use hmac::{Hmac, Mac};
use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256, Sha384};
use thiserror::Error;

use crate::codec::byte_newtype;

byte_newtype!(
    /// SHA-256 output.
    Digest256,
    32
);
byte_newtype!(
    /// SHA-384 output; the width of launch measurements.
    Digest384,
    48
);
byte_newtype!(
    /// Ed25519 verification key.
    PublicKey,
    32
);
byte_newtype!(Signature, 64);

pub fn hash256(data: &[u8]) -> Digest256 {
    Digest256(Sha256::digest(data).into())
}

pub fn hash384(data: &[u8]) -> Digest384 {
    Digest384(Sha384::digest(data).into())
}

pub fn hmac_sha256(key: &[u8], parts: &[&[u8]]) -> [u8; 32] {
    let mut mac = <Hmac<Sha256> as Mac>::new_from_slice(key).expect("hmac accepts any key length");
    for part in parts {
        mac.update(part);
    }
    mac.finalize().into_bytes().into()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KeyError {
    #[error("private key must be 32 bytes, got {0}")]
    PrivateKeyLength(usize),
    #[error("public key is not a valid curve point")]
    InvalidPublicKey,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KeyTransportError {
    #[error(transparent)]
    Key(#[from] KeyError),
    #[error("ciphertext too short")]
    Truncated,
    #[error("key agreement produced a degenerate shared secret")]
    WeakKey,
    #[error("decryption failed")]
    Decrypt,
}

/// Signing key pair. The private half is never serialized by this type; use
/// [`KeyPair::secret_bytes`] explicitly when it must be sealed or wrapped.
#[derive(Clone)]
pub struct KeyPair {
    signing: SigningKey,
}

impl KeyPair {
    pub fn from_seed(seed: &[u8; 32]) -> Self {
        Self {
            signing: SigningKey::from_bytes(seed),
        }
    }

    pub fn from_private_bytes(bytes: &[u8]) -> Result<Self, KeyError> {
        let seed: [u8; 32] = bytes.try_into().map_err(|_| KeyError::PrivateKeyLength(bytes.len()))?;
        Ok(Self::from_seed(&seed))
    }

    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        Self::from_seed(&seed)
    }

    pub fn public(&self) -> PublicKey {
        PublicKey(self.signing.verifying_key().to_bytes())
    }

    pub fn secret_bytes(&self) -> [u8; 32] {
        self.signing.to_bytes()
    }

    pub fn sign(&self, msg: &[u8]) -> Signature {
        Signature(self.signing.sign(msg).to_bytes())
    }
}

impl std::fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KeyPair")
            .field("public", &self.public())
            .finish_non_exhaustive()
    }
}

/// Signs with a raw 32-byte private key.
pub fn sign(private: &[u8], msg: &[u8]) -> Result<Signature, KeyError> {
    Ok(KeyPair::from_private_bytes(private)?.sign(msg))
}

/// Returns false for malformed keys as well as bad signatures.
pub fn verify(public: &PublicKey, msg: &[u8], sig: &Signature) -> bool {
    let Ok(key) = VerifyingKey::from_bytes(&public.0) else {
        return false;
    };
    let sig = ed25519_dalek::Signature::from_bytes(&sig.0);
    key.verify(msg, &sig).is_ok()
}

const KEY_TRANSPORT_INFO: &[u8] = b"revelio key transport v1";
const EPHEMERAL_LEN: usize = 32;
const NONCE_LEN: usize = 12;

fn transport_cipher(
    shared: &MontgomeryPoint,
    ephemeral: &[u8; 32],
    recipient: &PublicKey,
) -> Result<ChaCha20Poly1305, KeyTransportError> {
    if shared.as_bytes().iter().all(|b| *b == 0) {
        return Err(KeyTransportError::WeakKey);
    }
    let mut salt = [0u8; 64];
    salt[..32].copy_from_slice(ephemeral);
    salt[32..].copy_from_slice(&recipient.0);
    let hk = Hkdf::<Sha256>::new(Some(&salt), shared.as_bytes());
    let mut okm = [0u8; 32];
    hk.expand(KEY_TRANSPORT_INFO, &mut okm)
        .expect("32 bytes is a valid hkdf output length");
    Ok(ChaCha20Poly1305::new(Key::from_slice(&okm)))
}

/// Encrypts `plaintext` so that only the holder of `recipient`'s private key
/// can read it. Output layout: ephemeral X25519 key (32) ‖ nonce (12) ‖ AEAD
/// ciphertext.
pub fn encrypt_to<R: RngCore + CryptoRng>(
    recipient: &PublicKey,
    plaintext: &[u8],
    rng: &mut R,
) -> Result<Vec<u8>, KeyTransportError> {
    let vk = VerifyingKey::from_bytes(&recipient.0).map_err(|_| KeyError::InvalidPublicKey)?;
    let mut eph = [0u8; 32];
    rng.fill_bytes(&mut eph);
    let eph_public = MontgomeryPoint::mul_base_clamped(eph).to_bytes();
    let shared = vk.to_montgomery().mul_clamped(eph);
    let cipher = transport_cipher(&shared, &eph_public, recipient)?;

    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let ct = cipher
        .encrypt(Nonce::from_slice(&nonce), plaintext)
        .expect("chacha20poly1305 encryption is infallible for in-memory buffers");

    let mut out = Vec::with_capacity(EPHEMERAL_LEN + NONCE_LEN + ct.len());
    out.extend_from_slice(&eph_public);
    out.extend_from_slice(&nonce);
    out.extend_from_slice(&ct);
    Ok(out)
}

pub fn decrypt_with(keys: &KeyPair, ciphertext: &[u8]) -> Result<Vec<u8>, KeyTransportError> {
    if ciphertext.len() < EPHEMERAL_LEN + NONCE_LEN {
        return Err(KeyTransportError::Truncated);
    }
    let (eph, rest) = ciphertext.split_at(EPHEMERAL_LEN);
    let (nonce, ct) = rest.split_at(NONCE_LEN);
    let eph: [u8; 32] = eph.try_into().expect("split at 32");
    let shared = MontgomeryPoint(eph).mul_clamped(keys.signing.to_scalar_bytes());
    let cipher = transport_cipher(&shared, &eph, &keys.public())?;
    cipher
        .decrypt(Nonce::from_slice(nonce), ct)
        .map_err(|_| KeyTransportError::Decrypt)
}
