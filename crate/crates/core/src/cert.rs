// SPDX-License-Identifier: Apache-2.0

//! Minimal certificates and the ARK → ASK → VCEK chain.
//!
//! Wire layout of a certificate:
//!
//! ```text
//! version (1) ‖ lp(subject) ‖ lp(subject_public_key) ‖ lp(issuer)
//!   ‖ lp(extensions) ‖ not_before (8) ‖ not_after (8) ‖ signature (64)
//! ```
//!
//! `lp(x)` is a big-endian `u32` length followed by `x`. The extensions blob is
//! a sequence of `lp(key) ‖ lp(value)` pairs in key order. The signature covers
//! every byte before it.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::codec::{put_lp, DecodeError, Reader};
use crate::crypto::{verify, KeyPair, PublicKey, Signature};
use crate::hrot::ChipId;

pub const CERT_VERSION: u8 = 1;

pub const EXT_CHIP_ID: &str = "chip_id";
pub const EXT_TCB_VERSION: &str = "tcb_version";
pub const EXT_SERIAL: &str = "serial";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Validity {
    pub not_before: u64,
    pub not_after: u64,
}

impl Validity {
    pub const FOREVER: Validity = Validity {
        not_before: 0,
        not_after: u64::MAX,
    };

    pub fn contains(&self, t: u64) -> bool {
        self.not_before <= t && t <= self.not_after
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Certificate {
    pub subject: String,
    pub subject_public_key: PublicKey,
    pub issuer: String,
    pub extensions: BTreeMap<String, Vec<u8>>,
    pub validity: Validity,
    pub signature: Signature,
}

impl Certificate {
    pub fn issue(
        issuer: &str,
        issuer_key: &KeyPair,
        subject: &str,
        subject_public_key: PublicKey,
        extensions: BTreeMap<String, Vec<u8>>,
        validity: Validity,
    ) -> Self {
        let mut cert = Certificate {
            subject: subject.to_owned(),
            subject_public_key,
            issuer: issuer.to_owned(),
            extensions,
            validity,
            signature: Signature([0; 64]),
        };
        cert.signature = issuer_key.sign(&cert.tbs_bytes());
        cert
    }

    /// The signed portion of the encoding.
    pub fn tbs_bytes(&self) -> Vec<u8> {
        let mut out = vec![CERT_VERSION];
        put_lp(&mut out, self.subject.as_bytes());
        put_lp(&mut out, self.subject_public_key.as_ref());
        put_lp(&mut out, self.issuer.as_bytes());
        let mut ext = Vec::new();
        for (k, v) in &self.extensions {
            put_lp(&mut ext, k.as_bytes());
            put_lp(&mut ext, v);
        }
        put_lp(&mut out, &ext);
        out.extend_from_slice(&self.validity.not_before.to_be_bytes());
        out.extend_from_slice(&self.validity.not_after.to_be_bytes());
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.tbs_bytes();
        out.extend_from_slice(self.signature.as_ref());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        if r.u8()? != CERT_VERSION {
            return Err(DecodeError::Invalid("certificate version"));
        }
        let subject = utf8(r.lp()?, "certificate subject")?;
        let subject_public_key =
            PublicKey::from_slice(r.lp()?).ok_or(DecodeError::Invalid("subject public key length"))?;
        let issuer = utf8(r.lp()?, "certificate issuer")?;

        let mut extensions = BTreeMap::new();
        let mut ext = Reader::new(r.lp()?);
        while ext.remaining() > 0 {
            let key = utf8(ext.lp()?, "extension key")?;
            let value = ext.lp()?.to_vec();
            if extensions.insert(key, value).is_some() {
                return Err(DecodeError::Invalid("duplicate extension"));
            }
        }
        let validity = Validity {
            not_before: r.u64()?,
            not_after: r.u64()?,
        };
        let signature = Signature(r.take_array()?);
        r.finish()?;
        Ok(Certificate {
            subject,
            subject_public_key,
            issuer,
            extensions,
            validity,
            signature,
        })
    }

    pub fn verify_signature(&self, issuer_key: &PublicKey) -> bool {
        verify(issuer_key, &self.tbs_bytes(), &self.signature)
    }

    /// The `(chip_id, tcb_version)` pair carried by a VCEK certificate.
    pub fn vcek_binding(&self) -> Option<(ChipId, u64)> {
        let chip = ChipId::from_slice(self.extensions.get(EXT_CHIP_ID)?)?;
        let tcb: [u8; 8] = self.extensions.get(EXT_TCB_VERSION)?.as_slice().try_into().ok()?;
        Some((chip, u64::from_be_bytes(tcb)))
    }

    pub fn serial(&self) -> Option<u64> {
        let raw: [u8; 8] = self.extensions.get(EXT_SERIAL)?.as_slice().try_into().ok()?;
        Some(u64::from_be_bytes(raw))
    }
}

fn utf8(bytes: &[u8], what: &'static str) -> Result<String, DecodeError> {
    String::from_utf8(bytes.to_vec()).map_err(|_| DecodeError::Invalid(what))
}

/// Certificate signing request: `lp(domain) ‖ lp(public_key) ‖ signature`,
/// self-signed by the requested key over everything before the signature.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Csr {
    pub domain: String,
    pub public_key: PublicKey,
    pub signature: Signature,
}

impl Csr {
    pub fn create(domain: &str, key: &KeyPair) -> Self {
        let mut csr = Csr {
            domain: domain.to_owned(),
            public_key: key.public(),
            signature: Signature([0; 64]),
        };
        csr.signature = key.sign(&csr.signed_bytes());
        csr
    }

    fn signed_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        put_lp(&mut out, self.domain.as_bytes());
        put_lp(&mut out, self.public_key.as_ref());
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.signed_bytes();
        out.extend_from_slice(self.signature.as_ref());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let domain = utf8(r.lp()?, "csr domain")?;
        let public_key = PublicKey::from_slice(r.lp()?).ok_or(DecodeError::Invalid("csr public key length"))?;
        let signature = Signature(r.take_array()?);
        r.finish()?;
        Ok(Csr {
            domain,
            public_key,
            signature,
        })
    }

    pub fn verify_self_signature(&self) -> bool {
        verify(&self.public_key, &self.signed_bytes(), &self.signature)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainError {
    #[error("ARK is not self-issued")]
    ArkNotSelfIssued,
    #[error("ARK public key does not match the trusted root")]
    UntrustedRoot,
    #[error("{0} issuer name does not match its parent's subject")]
    IssuerMismatch(&'static str),
    #[error("{0} signature does not verify under its parent")]
    BadSignature(&'static str),
    #[error("VCEK certificate lacks a well-formed chip_id/tcb_version pair")]
    MissingVcekBinding,
    #[error("{0} certificate not valid at time {1}")]
    Expired(&'static str, u64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CertChain {
    pub ark: Certificate,
    pub ask: Certificate,
    pub vcek: Certificate,
}

impl CertChain {
    /// Checks the three signature links and the VCEK binding extensions.
    pub fn validate(&self) -> Result<(), ChainError> {
        if self.ark.issuer != self.ark.subject {
            return Err(ChainError::ArkNotSelfIssued);
        }
        if !self.ark.verify_signature(&self.ark.subject_public_key) {
            return Err(ChainError::BadSignature("ARK"));
        }
        if self.ask.issuer != self.ark.subject {
            return Err(ChainError::IssuerMismatch("ASK"));
        }
        if !self.ask.verify_signature(&self.ark.subject_public_key) {
            return Err(ChainError::BadSignature("ASK"));
        }
        if self.vcek.issuer != self.ask.subject {
            return Err(ChainError::IssuerMismatch("VCEK"));
        }
        if !self.vcek.verify_signature(&self.ask.subject_public_key) {
            return Err(ChainError::BadSignature("VCEK"));
        }
        if self.vcek.vcek_binding().is_none() {
            return Err(ChainError::MissingVcekBinding);
        }
        Ok(())
    }

    /// [`validate`](Self::validate) plus pinning of the root key and a
    /// validity check at `now`.
    pub fn validate_anchored(&self, trusted_ark: &PublicKey, now: u64) -> Result<(), ChainError> {
        if &self.ark.subject_public_key != trusted_ark {
            return Err(ChainError::UntrustedRoot);
        }
        self.validate()?;
        for (name, cert) in [("ARK", &self.ark), ("ASK", &self.ask), ("VCEK", &self.vcek)] {
            if !cert.validity.contains(now) {
                return Err(ChainError::Expired(name, now));
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for cert in [&self.ark, &self.ask, &self.vcek] {
            put_lp(&mut out, &cert.to_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let ark = Certificate::from_bytes(r.lp()?)?;
        let ask = Certificate::from_bytes(r.lp()?)?;
        let vcek = Certificate::from_bytes(r.lp()?)?;
        r.finish()?;
        Ok(CertChain { ark, ask, vcek })
    }
}
