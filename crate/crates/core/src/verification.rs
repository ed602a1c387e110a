// SPDX-License-Identifier: Apache-2.0

//! Client-side verification: the trusted registry of golden measurements,
//! the four-stage attestation pipeline, and per-request session monitoring.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boot::LaunchMeasurement;
use crate::clock::Clock;
use crate::crypto::{hash256, PublicKey};
use crate::hrot::ReportData;
use crate::kds::KdsError;
use crate::protocol::AttestationContext;
use crate::release::{build_release, ReleaseError, ReleaseSources};
use crate::transport::{Addr, RemoteKds, Request, Response, Transport, TransportError, CONN_KEY_HEADER};
use crate::wire::{WellKnownResponse, WELL_KNOWN_PATH};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryEntry {
    #[serde(default)]
    pub accepted_measurements: BTreeSet<LaunchMeasurement>,
    #[serde(default)]
    pub revoked_measurements: BTreeSet<LaunchMeasurement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pinned_tls_public_key: Option<PublicKey>,
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("measurement {measurement} for {domain} is both accepted and revoked")]
    Conflict {
        domain: String,
        measurement: LaunchMeasurement,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Golden values per domain.
///
/// Text form, one fact per line, `#` starts a comment:
///
/// ```text
/// app.example.org  <96 hex chars>  accepted
/// app.example.org  <96 hex chars>  revoked
/// app.example.org  <64 hex chars>  pinned
/// ```
///
/// A JSON object keyed by domain is accepted as well.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TrustedRegistry {
    entries: BTreeMap<String, RegistryEntry>,
}

impl TrustedRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, domain: &str) -> Option<&RegistryEntry> {
        self.entries.get(domain)
    }

    pub fn domains(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Registers a domain with no measurements yet.
    pub fn register(&mut self, domain: &str) -> &mut RegistryEntry {
        self.entries.entry(domain.to_owned()).or_default()
    }

    pub fn accept(&mut self, domain: &str, m: LaunchMeasurement) -> Result<(), RegistryError> {
        let entry = self.register(domain);
        if entry.revoked_measurements.contains(&m) {
            return Err(RegistryError::Conflict {
                domain: domain.to_owned(),
                measurement: m,
            });
        }
        entry.accepted_measurements.insert(m);
        Ok(())
    }

    /// Revokes a measurement; it is dropped from the accepted set.
    pub fn revoke(&mut self, domain: &str, m: LaunchMeasurement) {
        let entry = self.register(domain);
        entry.accepted_measurements.remove(&m);
        entry.revoked_measurements.insert(m);
    }

    pub fn pin(&mut self, domain: &str, key: PublicKey) {
        self.register(domain).pinned_tls_public_key = Some(key);
    }

    fn check(&self) -> Result<(), RegistryError> {
        for (domain, e) in &self.entries {
            if let Some(m) = e.accepted_measurements.intersection(&e.revoked_measurements).next() {
                return Err(RegistryError::Conflict {
                    domain: domain.clone(),
                    measurement: *m,
                });
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (domain, e) in &self.entries {
            for m in &e.accepted_measurements {
                let _ = writeln!(out, "{domain} {m} accepted");
            }
            for m in &e.revoked_measurements {
                let _ = writeln!(out, "{domain} {m} revoked");
            }
            if let Some(k) = &e.pinned_tls_public_key {
                let _ = writeln!(out, "{domain} {k} pinned");
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, RegistryError> {
        let mut reg = TrustedRegistry::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| RegistryError::Parse { line: i + 1, message };
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [domain, value, flag] = fields[..] else {
                return Err(err(format!(
                    "expected `domain value flag`, got {} fields",
                    fields.len()
                )));
            };
            match flag {
                "accepted" | "revoked" => {
                    let m = LaunchMeasurement::from_hex(value).map_err(|e| err(e.to_string()))?;
                    let entry = reg.register(domain);
                    if flag == "accepted" {
                        entry.accepted_measurements.insert(m);
                    } else {
                        entry.revoked_measurements.insert(m);
                    }
                }
                "pinned" => {
                    let k = PublicKey::from_hex(value).map_err(|e| err(e.to_string()))?;
                    reg.pin(domain, k);
                }
                other => return Err(err(format!("unknown flag `{other}`"))),
            }
        }
        reg.check()?;
        Ok(reg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("registry serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, RegistryError> {
        let reg: TrustedRegistry = serde_json::from_str(text)?;
        reg.check()?;
        Ok(reg)
    }

    /// Reads either form; a leading `{` selects JSON.
    pub fn parse(text: &str) -> Result<Self, RegistryError> {
        if text.trim_start().starts_with('{') {
            Self::from_json(text)
        } else {
            Self::from_text(text)
        }
    }

    pub fn load(path: &Path) -> Result<Self, RegistryError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// Replaces the file atomically. `.json` paths get the JSON form.
    pub fn save(&self, path: &Path) -> Result<(), RegistryError> {
        let body = if path.extension().is_some_and(|e| e == "json") {
            self.to_json()
        } else {
            self.to_text()
        };
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        fs::write(&tmp, body)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VerdictStatus {
    Trusted,
    ChainError,
    SignatureError,
    MeasurementMismatch,
    RevokedMeasurement,
    BindingMismatch,
    ConnectionReset,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttestationVerdict {
    pub status: VerdictStatus,
    pub details: String,
}

impl AttestationVerdict {
    fn new(status: VerdictStatus, details: impl Into<String>) -> Self {
        AttestationVerdict {
            status,
            details: details.into(),
        }
    }

    pub fn is_trusted(&self) -> bool {
        self.status == VerdictStatus::Trusted
    }
}

/// Conditions under which no verdict can be given.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VerifyError {
    #[error("domain {0} is not in the registry")]
    UnregisteredDomain(String),
    #[error("no attested session for {0}")]
    NotAttested(String),
    #[error("inconclusive: {0}")]
    Inconclusive(String),
}

/// Runs the pipeline: chain, signature, measurement, binding. The first
/// failing stage determines the verdict.
pub fn attest_domain(
    registry: &TrustedRegistry,
    ctx: &AttestationContext<'_>,
    domain: &str,
    fetched: &WellKnownResponse,
    connection_public_key: &PublicKey,
) -> Result<AttestationVerdict, VerifyError> {
    use VerdictStatus::*;
    let entry = registry
        .get(domain)
        .ok_or_else(|| VerifyError::UnregisteredDomain(domain.to_owned()))?;
    let report = &fetched.report;

    let chain = match ctx.kds.fetch_vcek(&report.chip_id, report.tcb_version) {
        Ok(chain) => chain,
        Err(e @ KdsError::Unreachable(_)) => return Err(VerifyError::Inconclusive(e.to_string())),
        Err(e) => return Ok(AttestationVerdict::new(ChainError, e.to_string())),
    };
    if let Err(e) = chain.validate_anchored(&ctx.trusted_ark, ctx.now) {
        return Ok(AttestationVerdict::new(ChainError, e.to_string()));
    }
    if chain.vcek.vcek_binding() != Some((report.chip_id, report.tcb_version)) {
        return Ok(AttestationVerdict::new(
            ChainError,
            "VCEK does not belong to the reporting chip",
        ));
    }
    if !report.verify(&chain.vcek.subject_public_key) {
        return Ok(AttestationVerdict::new(
            SignatureError,
            "report signature does not verify under the VCEK",
        ));
    }
    if entry.revoked_measurements.contains(&report.measurement) {
        return Ok(AttestationVerdict::new(
            RevokedMeasurement,
            format!("measurement {} is revoked for {domain}", report.measurement),
        ));
    }
    if !entry.accepted_measurements.contains(&report.measurement) {
        return Ok(AttestationVerdict::new(
            MeasurementMismatch,
            format!("measurement {} is not accepted for {domain}", report.measurement),
        ));
    }
    if ReportData::bind(&hash256(fetched.tls_public_key.as_ref())) != report.report_data {
        return Ok(AttestationVerdict::new(
            BindingMismatch,
            "report does not bind the served public key",
        ));
    }
    if connection_public_key != &fetched.tls_public_key {
        return Ok(AttestationVerdict::new(
            BindingMismatch,
            format!("connection key {connection_public_key} differs from the attested key"),
        ));
    }
    if entry
        .pinned_tls_public_key
        .is_some_and(|pin| pin != fetched.tls_public_key)
    {
        return Ok(AttestationVerdict::new(
            BindingMismatch,
            "attested key differs from the pinned key",
        ));
    }
    Ok(AttestationVerdict::new(
        Trusted,
        format!("{domain} runs measurement {}", report.measurement),
    ))
}

/// Attested connection keys per domain.
#[derive(Debug, Clone, Default)]
pub struct SessionTable {
    sessions: BTreeMap<String, PublicKey>,
}

impl SessionTable {
    pub fn record(&mut self, domain: &str, key: PublicKey) {
        self.sessions.insert(domain.to_owned(), key);
    }

    pub fn attested_key(&self, domain: &str) -> Option<&PublicKey> {
        self.sessions.get(domain)
    }

    /// A changed key resets the session, so the next request has to attest
    /// again.
    pub fn monitor_request(
        &mut self,
        domain: &str,
        connection_public_key: &PublicKey,
    ) -> Result<AttestationVerdict, VerifyError> {
        let attested = *self
            .sessions
            .get(domain)
            .ok_or_else(|| VerifyError::NotAttested(domain.to_owned()))?;
        if &attested == connection_public_key {
            return Ok(AttestationVerdict::new(
                VerdictStatus::Trusted,
                "connection key unchanged",
            ));
        }
        self.sessions.remove(domain);
        Ok(AttestationVerdict::new(
            VerdictStatus::ConnectionReset,
            format!("connection key changed from {attested} to {connection_public_key}"),
        ))
    }
}

/// Rebuilds a release from its sources and returns the launch measurement a
/// node running it reports.
pub fn recompute_expected_measurement(sources: &ReleaseSources) -> Result<LaunchMeasurement, ReleaseError> {
    Ok(build_release(sources)?.measurement)
}

pub fn connection_key(resp: &Response) -> Option<PublicKey> {
    resp.header(CONN_KEY_HEADER).and_then(|h| PublicKey::from_hex(h).ok())
}

/// A browser-like client that attests a domain on first access and then
/// watches the connection key on every request.
pub struct AttestingClient<'a> {
    pub transport: &'a dyn Transport,
    pub registry: &'a TrustedRegistry,
    pub kds: Addr,
    pub trusted_ark: PublicKey,
    pub clock: Clock,
    pub sessions: SessionTable,
}

impl<'a> AttestingClient<'a> {
    pub fn new(
        transport: &'a dyn Transport,
        registry: &'a TrustedRegistry,
        kds: Addr,
        trusted_ark: PublicKey,
        clock: Clock,
    ) -> Self {
        AttestingClient {
            transport,
            registry,
            kds,
            trusted_ark,
            clock,
            sessions: SessionTable::default(),
        }
    }

    /// Fetches the well-known report from `server` and attests it for `domain`.
    pub fn first_access(&mut self, domain: &str, server: &Addr) -> Result<AttestationVerdict, VerifyError> {
        if self.registry.get(domain).is_none() {
            return Err(VerifyError::UnregisteredDomain(domain.to_owned()));
        }
        let resp = self
            .transport
            .call(server, Request::get(WELL_KNOWN_PATH))
            .map_err(|e: TransportError| VerifyError::Inconclusive(e.to_string()))?;
        if !resp.is_success() {
            return Err(VerifyError::Inconclusive(format!(
                "attestation endpoint returned {}",
                resp.status
            )));
        }
        let fetched: WellKnownResponse = resp
            .parse_json()
            .map_err(|e| VerifyError::Inconclusive(format!("malformed attestation response: {e}")))?;
        let Some(conn) = connection_key(&resp) else {
            return Ok(AttestationVerdict::new(
                VerdictStatus::BindingMismatch,
                "connection key not available",
            ));
        };
        let kds = RemoteKds {
            transport: self.transport,
            kds: self.kds.clone(),
        };
        let ctx = AttestationContext {
            kds: &kds,
            trusted_ark: self.trusted_ark,
            now: self.clock.now(),
        };
        let verdict = attest_domain(self.registry, &ctx, domain, &fetched, &conn)?;
        if verdict.is_trusted() {
            self.sessions.record(domain, conn);
        }
        Ok(verdict)
    }

    /// Sends a request on an attested session and checks the connection key.
    pub fn request(
        &mut self,
        domain: &str,
        server: &Addr,
        req: Request,
    ) -> Result<(AttestationVerdict, Response), VerifyError> {
        if self.sessions.attested_key(domain).is_none() {
            return Err(VerifyError::NotAttested(domain.to_owned()));
        }
        let resp = self
            .transport
            .call(server, req)
            .map_err(|e| VerifyError::Inconclusive(e.to_string()))?;
        let verdict = match connection_key(&resp) {
            Some(k) => self.sessions.monitor_request(domain, &k)?,
            None => {
                self.sessions.sessions.remove(domain);
                AttestationVerdict::new(VerdictStatus::ConnectionReset, "connection key not available")
            }
        };
        Ok((verdict, resp))
    }
}
