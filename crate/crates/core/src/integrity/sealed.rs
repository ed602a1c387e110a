// SPDX-License-Identifier: Apache-2.0

//! Volumes encrypted under a measurement-bound sealing key.
//!
//! ChaCha20-Poly1305 with a random per-volume nonce. On disk:
//! `nonce (12) ‖ key_binding (32) ‖ ciphertext`.

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::codec::{DecodeError, Reader};
use crate::crypto::{hash256, Digest256};
use crate::hrot::SealingKey;

const AAD: &[u8] = b"revelio sealed volume v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum AuthError {
    #[error("volume was sealed under a different key")]
    KeyMismatch,
    #[error("volume ciphertext failed authentication")]
    Tampered,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SealedVolume {
    pub ciphertext: Vec<u8>,
    pub nonce: [u8; 12],
    /// Hash of the sealing key; only used to tell a wrong key from tampering.
    pub key_binding: Digest256,
}

impl SealedVolume {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(44 + self.ciphertext.len());
        out.extend_from_slice(&self.nonce);
        out.extend_from_slice(self.key_binding.as_ref());
        out.extend_from_slice(&self.ciphertext);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let nonce = r.take_array()?;
        let key_binding = Digest256(r.take_array()?);
        let ciphertext = r.rest().to_vec();
        Ok(SealedVolume {
            ciphertext,
            nonce,
            key_binding,
        })
    }
}

pub fn seal_volume<R: RngCore + CryptoRng>(plaintext: &[u8], key: &SealingKey, rng: &mut R) -> SealedVolume {
    let mut nonce = [0u8; 12];
    rng.fill_bytes(&mut nonce);
    let cipher = ChaCha20Poly1305::new(Key::from_slice(key.expose()));
    let ciphertext = cipher
        .encrypt(
            Nonce::from_slice(&nonce),
            Payload {
                msg: plaintext,
                aad: AAD,
            },
        )
        .expect("in-memory encryption cannot fail");
    SealedVolume {
        ciphertext,
        nonce,
        key_binding: hash256(key.expose()),
    }
}

pub fn unseal_volume(volume: &SealedVolume, key: &SealingKey) -> Result<Vec<u8>, AuthError> {
    // the binding is outside the AEAD, so it must match exactly as well
    if volume.key_binding != hash256(key.expose()) {
        return Err(AuthError::KeyMismatch);
    }
    let cipher = ChaCha20Poly1305::new(Key::from_slice(key.expose()));
    cipher
        .decrypt(
            Nonce::from_slice(&volume.nonce),
            Payload {
                msg: &volume.ciphertext,
                aad: AAD,
            },
        )
        .map_err(|_| AuthError::Tampered)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn key(b: u8) -> SealingKey {
        SealingKey::from_bytes([b; 32])
    }

    #[test]
    fn round_trip_with_matching_key() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let vol = seal_volume(b"identity", &key(1), &mut rng);
        assert_eq!(unseal_volume(&vol, &key(1)).unwrap(), b"identity");
        let reparsed = SealedVolume::from_bytes(&vol.to_bytes()).unwrap();
        assert_eq!(reparsed, vol);
    }

    #[test]
    fn other_key_is_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let vol = seal_volume(b"identity", &key(1), &mut rng);
        assert_eq!(unseal_volume(&vol, &key(2)), Err(AuthError::KeyMismatch));
    }

    #[test]
    fn tampered_ciphertext_is_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let mut vol = seal_volume(b"identity", &key(1), &mut rng);
        vol.ciphertext[0] ^= 1;
        assert_eq!(unseal_volume(&vol, &key(1)), Err(AuthError::Tampered));
    }

    #[test]
    fn nonce_is_fresh_per_volume() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let a = seal_volume(b"same", &key(1), &mut rng);
        let b = seal_volume(b"same", &key(1), &mut rng);
        assert_ne!(a.nonce, b.nonce);
        assert_ne!(a.ciphertext, b.ciphertext);
    }
}
