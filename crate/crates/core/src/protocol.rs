// SPDX-License-Identifier: Apache-2.0

//! Fleet certificate management.
//!
//! The SP node attests every fleet member through its report-CSR bundle,
//! picks a leader, has the CA issue one certificate for the leader's CSR and
//! pushes it to all accepted nodes together with the leader's address. Each
//! follower then runs a mutual attestation with the leader, which answers
//! with its own report and the TLS private key encrypted to the follower's
//! attested public key.

use std::collections::BTreeSet;
use std::sync::{Arc, Mutex};

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boot::LaunchMeasurement;
use crate::cert::{Certificate, Csr, Validity, EXT_SERIAL};
use crate::crypto::{decrypt_with, encrypt_to, hash256, KeyPair, PublicKey};
use crate::hrot::{AttestationReport, ChipId, ReportData};
use crate::kds::{KdsError, VcekSource};
use crate::transport::{Addr, Request, Transport};
use crate::wire::{CsrBundleResponse, InstallCertRequest, KeyRequest, KeyResponse, CSR_BUNDLE_PATH, INSTALL_CERT_PATH};

pub const DAY: u64 = 24 * 60 * 60;
pub const CERT_LIFETIME: u64 = 90 * DAY;
pub const CA_NAME: &str = "Revelio Sim CA";

/// Everything a verifier needs besides policy: where VCEKs come from, which
/// root key to pin, and the current time.
#[derive(Clone, Copy)]
pub struct AttestationContext<'a> {
    pub kds: &'a dyn VcekSource,
    pub trusted_ark: PublicKey,
    pub now: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeerPolicy {
    pub approved_chips: BTreeSet<ChipId>,
    pub approved_ips: BTreeSet<String>,
    pub expected_measurements: BTreeSet<LaunchMeasurement>,
    #[serde(default)]
    pub revoked_measurements: BTreeSet<LaunchMeasurement>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("policy has no approved {0}")]
    Empty(&'static str),
    #[error("measurement {0} is both expected and revoked")]
    RevokedExpected(LaunchMeasurement),
}

impl PeerPolicy {
    pub fn check(&self) -> Result<(), PolicyError> {
        if self.approved_chips.is_empty() {
            return Err(PolicyError::Empty("chips"));
        }
        if self.approved_ips.is_empty() {
            return Err(PolicyError::Empty("ips"));
        }
        if self.expected_measurements.is_empty() {
            return Err(PolicyError::Empty("measurements"));
        }
        if let Some(m) = self
            .expected_measurements
            .intersection(&self.revoked_measurements)
            .next()
        {
            return Err(PolicyError::RevokedExpected(*m));
        }
        Ok(())
    }

    /// Revokes a measurement, removing it from the expected set.
    pub fn revoke(&mut self, m: LaunchMeasurement) {
        self.expected_measurements.remove(&m);
        self.revoked_measurements.insert(m);
    }
}

/// The individual checks of bundle validation, in evaluation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Chain,
    Signature,
    Measurement,
    Binding,
    ChipId,
    Ip,
    Csr,
    Format,
}

impl Check {
    pub fn name(self) -> &'static str {
        match self {
            Check::Chain => "chain",
            Check::Signature => "signature",
            Check::Measurement => "measurement",
            Check::Binding => "binding",
            Check::ChipId => "chip_id",
            Check::Ip => "ip",
            Check::Csr => "csr",
            Check::Format => "format",
        }
    }
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", content = "reason", rename_all = "snake_case")]
pub enum Verdict {
    Accept,
    /// The first failing check.
    Reject(Check),
    /// Evidence could not be evaluated (e.g. KDS or peer unreachable); retryable.
    Inconclusive(String),
}

impl Verdict {
    pub fn is_accept(&self) -> bool {
        matches!(self, Verdict::Accept)
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::Accept => f.write_str("accept"),
            Verdict::Reject(check) => write!(f, "reject: {check}"),
            Verdict::Inconclusive(why) => write!(f, "inconclusive: {why}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadKind {
    Csr,
    PublicKey,
    EncryptedPrivateKey,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportBundle {
    pub report: AttestationReport,
    pub payload: Vec<u8>,
    pub kind: PayloadKind,
}

impl ReportBundle {
    /// The REPORT_DATA this bundle must carry. Encrypted-key bundles are bound
    /// to the leader's public key, which the payload does not contain; see
    /// [`accept_key_response`].
    pub fn expected_report_data(&self) -> Option<ReportData> {
        match self.kind {
            PayloadKind::Csr | PayloadKind::PublicKey => Some(ReportData::bind(&hash256(&self.payload))),
            PayloadKind::EncryptedPrivateKey => None,
        }
    }
}

/// Core report check shared by the SP node and by both sides of the key
/// exchange. Evaluates chain, signature, measurement, binding, chip and IP in
/// that order and reports the first failure.
pub fn attest_report(
    policy: &PeerPolicy,
    ctx: &AttestationContext<'_>,
    report: &AttestationReport,
    expected_data: Option<&ReportData>,
    claimed_ip: Option<&str>,
) -> Verdict {
    let chain = match ctx.kds.fetch_vcek(&report.chip_id, report.tcb_version) {
        Ok(chain) => chain,
        Err(KdsError::NotProvisioned { .. } | KdsError::Malformed(_)) => return Verdict::Reject(Check::Chain),
        Err(e @ KdsError::Unreachable(_)) => return Verdict::Inconclusive(e.to_string()),
    };
    if chain.validate_anchored(&ctx.trusted_ark, ctx.now).is_err()
        || chain.vcek.vcek_binding() != Some((report.chip_id, report.tcb_version))
    {
        return Verdict::Reject(Check::Chain);
    }
    if !report.verify(&chain.vcek.subject_public_key) {
        return Verdict::Reject(Check::Signature);
    }
    if !policy.expected_measurements.contains(&report.measurement)
        || policy.revoked_measurements.contains(&report.measurement)
    {
        return Verdict::Reject(Check::Measurement);
    }
    if expected_data != Some(&report.report_data) {
        return Verdict::Reject(Check::Binding);
    }
    if !policy.approved_chips.contains(&report.chip_id) {
        return Verdict::Reject(Check::ChipId);
    }
    if let Some(ip) = claimed_ip {
        if !policy.approved_ips.contains(ip) {
            return Verdict::Reject(Check::Ip);
        }
    }
    Verdict::Accept
}

pub fn validate_bundle(
    policy: &PeerPolicy,
    ctx: &AttestationContext<'_>,
    bundle: &ReportBundle,
    claimed_ip: Option<&str>,
) -> Verdict {
    attest_report(
        policy,
        ctx,
        &bundle.report,
        bundle.expected_report_data().as_ref(),
        claimed_ip,
    )
}

/// What the leader holds after installing the shared certificate.
pub struct LeaderCredentials<'a> {
    pub report: &'a AttestationReport,
    pub tls_key: &'a KeyPair,
}

/// Leader side of the key exchange. On acceptance the private key is
/// encrypted to the requester's attested public key.
pub fn answer_key_request<R: RngCore + CryptoRng>(
    policy: &PeerPolicy,
    ctx: &AttestationContext<'_>,
    leader: &LeaderCredentials<'_>,
    request: &KeyRequest,
    rng: &mut R,
) -> Result<KeyResponse, Verdict> {
    let bundle = ReportBundle {
        report: request.report.clone(),
        payload: request.public_key.as_ref().to_vec(),
        kind: PayloadKind::PublicKey,
    };
    match validate_bundle(policy, ctx, &bundle, None) {
        Verdict::Accept => {}
        other => return Err(other),
    }
    let encrypted_private_key = encrypt_to(&request.public_key, &leader.tls_key.secret_bytes(), rng)
        .map_err(|_| Verdict::Reject(Check::Format))?;
    Ok(KeyResponse {
        report: leader.report.clone(),
        encrypted_private_key,
    })
}

/// Follower side: attest the leader, decrypt, and confirm the key matches the
/// installed certificate.
pub fn accept_key_response(
    policy: &PeerPolicy,
    ctx: &AttestationContext<'_>,
    certificate: &Certificate,
    response: &KeyResponse,
    own_key: &KeyPair,
) -> Result<KeyPair, Verdict> {
    let expected = ReportData::bind(&hash256(certificate.subject_public_key.as_ref()));
    match attest_report(policy, ctx, &response.report, Some(&expected), None) {
        Verdict::Accept => {}
        other => return Err(other),
    }
    let secret = decrypt_with(own_key, &response.encrypted_private_key).map_err(|_| Verdict::Reject(Check::Format))?;
    let key = KeyPair::from_private_bytes(&secret).map_err(|_| Verdict::Reject(Check::Format))?;
    if key.public() != certificate.subject_public_key {
        return Err(Verdict::Reject(Check::Binding));
    }
    Ok(key)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateLimit {
    pub max_certificates: usize,
    /// Sliding window length in seconds.
    pub window: u64,
}

impl Default for RateLimit {
    fn default() -> Self {
        RateLimit {
            max_certificates: 5,
            window: 7 * DAY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssuedCert {
    pub domain: String,
    pub public_key: PublicKey,
    pub serial: u64,
    pub issued_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CaError {
    #[error("caller is not authorised for the domain")]
    Unauthorized,
    #[error("CSR self-signature does not verify")]
    BadCsr,
    #[error("rate limit reached for {0}")]
    RateLimited(String),
}

/// Certificate authority standing in for an ACME service. Proof of domain
/// control is reduced to a credential shared with the SP node.
pub struct SimulatedCA {
    root: KeyPair,
    credential: [u8; 32],
    rate_limit: RateLimit,
    issued: Vec<IssuedCert>,
}

impl SimulatedCA {
    pub fn new(root: KeyPair, credential: [u8; 32], rate_limit: RateLimit) -> Self {
        SimulatedCA {
            root,
            credential,
            rate_limit,
            issued: Vec::new(),
        }
    }

    pub fn root_public(&self) -> PublicKey {
        self.root.public()
    }

    pub fn rate_limit(&self) -> RateLimit {
        self.rate_limit
    }

    pub fn issued(&self) -> &[IssuedCert] {
        &self.issued
    }

    /// Replaces the issuance log, e.g. when resuming from persisted state.
    pub fn restore_log(&mut self, log: Vec<IssuedCert>) {
        self.issued = log;
    }

    pub fn issued_in_window(&self, domain: &str, now: u64) -> usize {
        self.issued
            .iter()
            .filter(|c| c.domain == domain && now.saturating_sub(c.issued_at) < self.rate_limit.window)
            .count()
    }

    pub fn issue(&mut self, credential: &[u8; 32], csr: &Csr, now: u64) -> Result<Certificate, CaError> {
        if credential != &self.credential {
            return Err(CaError::Unauthorized);
        }
        if !csr.verify_self_signature() {
            return Err(CaError::BadCsr);
        }
        if self.issued_in_window(&csr.domain, now) >= self.rate_limit.max_certificates {
            return Err(CaError::RateLimited(csr.domain.clone()));
        }
        let serial = self.issued.iter().map(|c| c.serial).max().unwrap_or(0) + 1;
        let mut ext = std::collections::BTreeMap::new();
        ext.insert(EXT_SERIAL.to_owned(), serial.to_be_bytes().to_vec());
        let cert = Certificate::issue(
            CA_NAME,
            &self.root,
            &csr.domain,
            csr.public_key,
            ext,
            Validity {
                not_before: now,
                not_after: now + CERT_LIFETIME,
            },
        );
        self.issued.push(IssuedCert {
            domain: csr.domain.clone(),
            public_key: csr.public_key,
            serial,
            issued_at: now,
        });
        Ok(cert)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeVerdict {
    pub node: Addr,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundOutcome {
    pub verdicts: Vec<NodeVerdict>,
    pub leader: Addr,
    pub leader_chip: ChipId,
    pub serial: u64,
    #[serde(with = "crate::codec::hex_bytes")]
    pub certificate: Vec<u8>,
    pub validations: usize,
    pub installs: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum RoundFailed {
    #[error("fleet is empty")]
    EmptyFleet,
    #[error("no node passed attestation")]
    NoAcceptedNodes { verdicts: Vec<NodeVerdict> },
    #[error("certificate authority rate limit reached")]
    RateLimit { verdicts: Vec<NodeVerdict> },
    #[error("certificate authority refused: {message}")]
    Ca { message: String },
}

impl RoundFailed {
    pub fn reason(&self) -> &'static str {
        match self {
            RoundFailed::EmptyFleet => "empty_fleet",
            RoundFailed::NoAcceptedNodes { .. } => "no_accepted_nodes",
            RoundFailed::RateLimit { .. } => "rate_limit",
            RoundFailed::Ca { .. } => "ca",
        }
    }
}

/// Host part of an address (`10.0.0.1:8443` → `10.0.0.1`).
pub fn addr_ip(addr: &Addr) -> &str {
    match addr.as_str().rsplit_once(':') {
        Some((host, port)) if port.chars().all(|c| c.is_ascii_digit()) => host,
        _ => addr.as_str(),
    }
}

/// The service provider's orchestration node.
pub struct SpNode {
    pub domain: String,
    pub policy: PeerPolicy,
    pub fleet: Vec<Addr>,
    pub ca: Arc<Mutex<SimulatedCA>>,
    pub ca_credential: [u8; 32],
}

impl SpNode {
    pub fn run_certificate_round(
        &self,
        transport: &dyn Transport,
        ctx: &AttestationContext<'_>,
    ) -> Result<RoundOutcome, RoundFailed> {
        if self.fleet.is_empty() {
            return Err(RoundFailed::EmptyFleet);
        }
        let mut verdicts = Vec::with_capacity(self.fleet.len());
        let mut accepted: Vec<(Addr, ChipId, Csr)> = Vec::new();
        let mut validations = 0;

        for addr in &self.fleet {
            let verdict = match self.attest_member(transport, ctx, addr, &mut validations) {
                Ok((chip, csr)) => {
                    accepted.push((addr.clone(), chip, csr));
                    Verdict::Accept
                }
                Err(v) => v,
            };
            verdicts.push(NodeVerdict {
                node: addr.clone(),
                verdict,
            });
        }

        let Some((leader, leader_chip, leader_csr)) = accepted.iter().min_by_key(|(_, chip, _)| *chip).cloned() else {
            return Err(RoundFailed::NoAcceptedNodes { verdicts });
        };

        let cert = {
            let mut ca = self.ca.lock().expect("ca lock poisoned");
            match ca.issue(&self.ca_credential, &leader_csr, ctx.now) {
                Ok(cert) => cert,
                Err(CaError::RateLimited(_)) => return Err(RoundFailed::RateLimit { verdicts }),
                Err(e) => return Err(RoundFailed::Ca { message: e.to_string() }),
            }
        };
        let certificate = cert.to_bytes();

        let install = InstallCertRequest {
            certificate: certificate.clone(),
            leader_ip: leader.0.clone(),
        };
        // leader first so that followers can fetch the key on installation
        accepted.sort_by_key(|(addr, _, _)| addr != &leader);
        let installs = accepted
            .iter()
            .filter(|(addr, _, _)| {
                transport
                    .call(addr, Request::post_json(INSTALL_CERT_PATH, &install))
                    .is_ok_and(|r| r.is_success())
            })
            .count();

        Ok(RoundOutcome {
            verdicts,
            leader,
            leader_chip,
            serial: cert.serial().expect("CA sets a serial"),
            certificate,
            validations,
            installs,
        })
    }

    fn attest_member(
        &self,
        transport: &dyn Transport,
        ctx: &AttestationContext<'_>,
        addr: &Addr,
        validations: &mut usize,
    ) -> Result<(ChipId, Csr), Verdict> {
        let resp = transport
            .call(addr, Request::post(CSR_BUNDLE_PATH, Vec::new()))
            .map_err(|e| Verdict::Inconclusive(e.to_string()))?;
        if !resp.is_success() {
            return Err(Verdict::Inconclusive(format!("status {}", resp.status)));
        }
        let body: CsrBundleResponse = resp.parse_json().map_err(|_| Verdict::Reject(Check::Format))?;
        let bundle = ReportBundle {
            report: body.report,
            payload: body.csr,
            kind: PayloadKind::Csr,
        };
        *validations += 1;
        match validate_bundle(&self.policy, ctx, &bundle, Some(addr_ip(addr))) {
            Verdict::Accept => {}
            other => return Err(other),
        }
        let csr = Csr::from_bytes(&bundle.payload).map_err(|_| Verdict::Reject(Check::Csr))?;
        if csr.domain != self.domain || !csr.verify_self_signature() {
            return Err(Verdict::Reject(Check::Csr));
        }
        Ok((bundle.report.chip_id, csr))
    }
}
