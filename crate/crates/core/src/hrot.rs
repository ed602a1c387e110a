// SPDX-License-Identifier: Apache-2.0

//! The simulated Security Processor: per-chip secrets, signed attestation
//! reports and measurement-bound sealing keys.
//!
//! The guest reaches the SP through in-process calls on [`ChipState`]; nothing
//! here is ever put on the simulated network except signed reports.

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boot::LaunchMeasurement;
use crate::codec::{byte_newtype, DecodeError, Reader};
use crate::crypto::{hmac_sha256, verify, Digest256, KeyPair, PublicKey, Signature};

byte_newtype!(
    /// Unique processor identifier.
    ChipId,
    64
);
byte_newtype!(
    /// Caller-chosen data bound into a signed report.
    ReportData,
    64
);

impl ReportData {
    /// A 32-byte digest left-aligned and zero-padded to 64 bytes.
    pub fn bind(digest: &Digest256) -> Self {
        let mut out = [0u8; 64];
        out[..32].copy_from_slice(digest.as_ref());
        ReportData(out)
    }
}

pub const REPORT_BODY_LEN: usize = 64 + 8 + 48 + 64;
pub const REPORT_LEN: usize = REPORT_BODY_LEN + 64;

const SEALING_LABEL: &[u8] = b"sealing";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReportError {
    #[error("report data must be exactly 64 bytes, got {0}")]
    InvalidReportData(usize),
}

/// Secrets held by one simulated processor. Immutable after provisioning.
pub struct ChipState {
    chip_id: ChipId,
    tcb_version: u64,
    vcek: KeyPair,
    chip_secret: [u8; 32],
}

impl ChipState {
    pub fn new(chip_id: ChipId, tcb_version: u64, vcek: KeyPair, chip_secret: [u8; 32]) -> Self {
        Self {
            chip_id,
            tcb_version,
            vcek,
            chip_secret,
        }
    }

    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R, tcb_version: u64) -> Self {
        let mut chip_id = [0u8; 64];
        rng.fill_bytes(&mut chip_id);
        let vcek = KeyPair::generate(rng);
        let mut chip_secret = [0u8; 32];
        rng.fill_bytes(&mut chip_secret);
        Self::new(ChipId(chip_id), tcb_version, vcek, chip_secret)
    }

    pub fn chip_id(&self) -> &ChipId {
        &self.chip_id
    }

    pub fn tcb_version(&self) -> u64 {
        self.tcb_version
    }

    pub fn vcek_public(&self) -> PublicKey {
        self.vcek.public()
    }

    pub fn issue_report(
        &self,
        measurement: &LaunchMeasurement,
        report_data: &[u8],
    ) -> Result<AttestationReport, ReportError> {
        let report_data =
            ReportData::from_slice(report_data).ok_or(ReportError::InvalidReportData(report_data.len()))?;
        let mut report = AttestationReport {
            chip_id: self.chip_id,
            tcb_version: self.tcb_version,
            measurement: *measurement,
            report_data,
            signature: Signature([0; 64]),
        };
        report.signature = self.vcek.sign(&report.body_bytes());
        Ok(report)
    }

    /// HMAC-SHA256 keyed by the chip secret over `"sealing" ‖ measurement`.
    pub fn derive_sealing_key(&self, measurement: &LaunchMeasurement) -> SealingKey {
        SealingKey(hmac_sha256(&self.chip_secret, &[SEALING_LABEL, measurement.as_ref()]))
    }
}

impl std::fmt::Debug for ChipState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChipState")
            .field("chip_id", &self.chip_id)
            .field("tcb_version", &self.tcb_version)
            .field("vcek", &self.vcek.public())
            .finish_non_exhaustive()
    }
}

/// Key material that must stay on the SP↔VM path.
#[derive(Clone, PartialEq, Eq)]
pub struct SealingKey(pub(crate) [u8; 32]);

impl SealingKey {
    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        SealingKey(bytes)
    }

    pub fn expose(&self) -> &[u8; 32] {
        &self.0
    }
}

impl std::fmt::Debug for SealingKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("SealingKey(..)")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttestationReport {
    pub chip_id: ChipId,
    pub tcb_version: u64,
    pub measurement: LaunchMeasurement,
    pub report_data: ReportData,
    pub signature: Signature,
}

impl AttestationReport {
    /// `chip_id ‖ tcb_version (u64 BE) ‖ measurement ‖ report_data`; the
    /// signed portion.
    pub fn body_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(REPORT_BODY_LEN);
        out.extend_from_slice(self.chip_id.as_ref());
        out.extend_from_slice(&self.tcb_version.to_be_bytes());
        out.extend_from_slice(self.measurement.as_ref());
        out.extend_from_slice(self.report_data.as_ref());
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.body_bytes();
        out.extend_from_slice(self.signature.as_ref());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let report = AttestationReport {
            chip_id: ChipId(r.take_array()?),
            tcb_version: r.u64()?,
            measurement: LaunchMeasurement(r.take_array()?),
            report_data: ReportData(r.take_array()?),
            signature: Signature(r.take_array()?),
        };
        r.finish()?;
        Ok(report)
    }

    pub fn verify(&self, vcek: &PublicKey) -> bool {
        verify(vcek, &self.body_bytes(), &self.signature)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::hash256;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn chip(seed: u64) -> ChipState {
        ChipState::generate(&mut ChaCha20Rng::seed_from_u64(seed), 1)
    }

    fn m(b: u8) -> LaunchMeasurement {
        LaunchMeasurement([b; 48])
    }

    #[test]
    fn issued_report_verifies_under_own_vcek_only() {
        let a = chip(1);
        let b = chip(2);
        let r = a.issue_report(&m(1), &[0u8; 64]).unwrap();
        assert!(r.verify(&a.vcek_public()));
        assert!(!r.verify(&b.vcek_public()));
    }

    #[test]
    fn identical_inputs_give_identical_reports() {
        let a = chip(1);
        let data = ReportData::bind(&hash256(b"pk"));
        let r1 = a.issue_report(&m(3), data.as_ref()).unwrap();
        let r2 = a.issue_report(&m(3), data.as_ref()).unwrap();
        assert_eq!(r1.to_bytes(), r2.to_bytes());
        assert_eq!(r1.to_bytes().len(), REPORT_LEN);
    }

    #[test]
    fn wrong_report_data_length_is_rejected() {
        let a = chip(1);
        assert_eq!(
            a.issue_report(&m(1), &[0u8; 32]),
            Err(ReportError::InvalidReportData(32))
        );
        assert_eq!(
            a.issue_report(&m(1), &[0u8; 65]),
            Err(ReportError::InvalidReportData(65))
        );
    }

    #[test]
    fn report_binary_and_json_forms_round_trip() {
        let a = chip(4);
        let r = a.issue_report(&m(9), &[5u8; 64]).unwrap();
        assert_eq!(AttestationReport::from_bytes(&r.to_bytes()).unwrap(), r);
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["tcb_version"], 1);
        assert_eq!(json["report_data"], hex::encode([5u8; 64]));
        let back: AttestationReport = serde_json::from_value(json).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn bind_left_aligns_and_zero_pads() {
        let d = hash256(b"x");
        let rd = ReportData::bind(&d);
        assert_eq!(&rd.0[..32], d.as_ref());
        assert!(rd.0[32..].iter().all(|b| *b == 0));
    }

    #[test]
    fn sealing_key_depends_on_chip_and_measurement() {
        let a = chip(1);
        let b = chip(2);
        assert_eq!(a.derive_sealing_key(&m(1)), a.derive_sealing_key(&m(1)));
        let mut other = m(1);
        other.0[47] ^= 1;
        assert_ne!(a.derive_sealing_key(&m(1)), a.derive_sealing_key(&other));
        assert_ne!(a.derive_sealing_key(&m(1)), b.derive_sealing_key(&m(1)));
    }

    #[test]
    fn debug_output_hides_secrets() {
        let a = chip(1);
        let s = format!("{:?} {:?}", a, a.derive_sealing_key(&m(1)));
        assert!(!s.contains(&hex::encode(a.chip_secret)));
        assert!(s.contains("SealingKey(..)"));
    }
}
