// SPDX-License-Identifier: Apache-2.0

//! Simulated key distribution server publishing VCEK certificates.

use std::collections::BTreeMap;

use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::cert::{CertChain, Certificate, Validity, EXT_CHIP_ID, EXT_TCB_VERSION};
use crate::crypto::{KeyPair, PublicKey};
use crate::hrot::{ChipId, ChipState};

pub const ARK_NAME: &str = "ARK-Sim";
pub const ASK_NAME: &str = "ASK-Sim";
pub const VCEK_NAME: &str = "VCEK";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KdsError {
    #[error("no VCEK provisioned for chip {chip} at tcb {tcb}")]
    NotProvisioned { chip: String, tcb: u64 },
    #[error("key distribution server unreachable: {0}")]
    Unreachable(String),
    #[error("malformed certificate chain: {0}")]
    Malformed(String),
}

/// Anything that can resolve a VCEK chain: the in-process [`Kds`], an HTTP
/// client, or a route through the simulated network.
pub trait VcekSource {
    fn fetch_vcek(&self, chip_id: &ChipId, tcb_version: u64) -> Result<CertChain, KdsError>;
}

impl<T: VcekSource + ?Sized> VcekSource for &T {
    fn fetch_vcek(&self, chip_id: &ChipId, tcb_version: u64) -> Result<CertChain, KdsError> {
        (**self).fetch_vcek(chip_id, tcb_version)
    }
}

#[derive(Clone)]
pub struct Kds {
    ark: Certificate,
    ask: Certificate,
    ask_key: KeyPair,
    vceks: BTreeMap<(ChipId, u64), Certificate>,
}

impl Kds {
    pub fn new(ark_key: &KeyPair, ask_key: KeyPair) -> Self {
        let ark = Certificate::issue(
            ARK_NAME,
            ark_key,
            ARK_NAME,
            ark_key.public(),
            BTreeMap::new(),
            Validity::FOREVER,
        );
        let ask = Certificate::issue(
            ARK_NAME,
            ark_key,
            ASK_NAME,
            ask_key.public(),
            BTreeMap::new(),
            Validity::FOREVER,
        );
        Self {
            ark,
            ask,
            ask_key,
            vceks: BTreeMap::new(),
        }
    }

    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let ark = KeyPair::generate(rng);
        let ask = KeyPair::generate(rng);
        Self::new(&ark, ask)
    }

    /// The trust anchor verifiers pin.
    pub fn ark_public(&self) -> PublicKey {
        self.ark.subject_public_key
    }

    pub fn provision(&mut self, chip_id: ChipId, tcb_version: u64, vcek: PublicKey) {
        let mut ext = BTreeMap::new();
        ext.insert(EXT_CHIP_ID.to_owned(), chip_id.as_ref().to_vec());
        ext.insert(EXT_TCB_VERSION.to_owned(), tcb_version.to_be_bytes().to_vec());
        let cert = Certificate::issue(ASK_NAME, &self.ask_key, VCEK_NAME, vcek, ext, Validity::FOREVER);
        self.vceks.insert((chip_id, tcb_version), cert);
    }

    pub fn provision_chip(&mut self, chip: &ChipState) {
        self.provision(*chip.chip_id(), chip.tcb_version(), chip.vcek_public());
    }
}

impl VcekSource for Kds {
    fn fetch_vcek(&self, chip_id: &ChipId, tcb_version: u64) -> Result<CertChain, KdsError> {
        let vcek = self
            .vceks
            .get(&(*chip_id, tcb_version))
            .ok_or_else(|| KdsError::NotProvisioned {
                chip: chip_id.to_hex(),
                tcb: tcb_version,
            })?;
        Ok(CertChain {
            ark: self.ark.clone(),
            ask: self.ask.clone(),
            vcek: vcek.clone(),
        })
    }
}

/// Path and query for the HTTP facade: `/vcek?chip_id=<hex>&tcb=<int>`.
pub fn vcek_request_path(chip_id: &ChipId, tcb_version: u64) -> String {
    format!("/vcek?chip_id={}&tcb={}", chip_id.to_hex(), tcb_version)
}

pub fn parse_vcek_query(query: &str) -> Option<(ChipId, u64)> {
    let mut chip = None;
    let mut tcb = None;
    for pair in query.split('&') {
        match pair.split_once('=')? {
            ("chip_id", v) => chip = ChipId::from_hex(v).ok(),
            ("tcb", v) => tcb = v.parse().ok(),
            _ => {}
        }
    }
    Some((chip?, tcb?))
}
