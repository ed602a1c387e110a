// SPDX-License-Identifier: Apache-2.0

//! The simulated confidential VM.
//!
//! A node boots through a fixed sequence of phases: the launch is measured
//! (with the firmware optionally checking the injected hash table), the
//! rootfs is verified against the root hash from the measured command line,
//! an identity is restored from or created into sealed storage, and finally
//! the fixed set of protocol endpoints is served. There is no management
//! endpoint and no write path to the rootfs.

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::boot::{
    cmdline_root_hash, firmware_verifies_hash_table, ovmf_verify, BootBundle, BootDecision, Component,
    LaunchMeasurement,
};
use crate::cert::{Certificate, Csr};
use crate::clock::Clock;
use crate::crypto::{hash256, Digest256, KeyPair, PublicKey};
use crate::hrot::{AttestationReport, ChipId, ChipState, ReportData};
use crate::integrity::{parse_image, seal_volume, unseal_volume, HostDisk, MerkleDevice, SealedVolume, VerityMeta};
use crate::protocol::{
    accept_key_response, answer_key_request, AttestationContext, LeaderCredentials, PeerPolicy, Verdict,
};
use crate::release::INDEX_FILE;
use crate::transport::{Addr, Method, RemoteKds, Request, Response, Transport, CONN_KEY_HEADER};
use crate::wire::{
    CsrBundleResponse, InstallCertRequest, InstallCertResponse, KeyRequest, KeyResponse, WellKnownResponse,
    CSR_BUNDLE_PATH, INDEX_PATH, INSTALL_CERT_PATH, KEY_REQUEST_PATH, WELL_KNOWN_PATH,
};

/// The complete inbound surface of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Route {
    WellKnown,
    CsrBundle,
    InstallCert,
    KeyRequest,
    Index,
}

impl Route {
    pub const ALL: [Route; 5] = [
        Route::WellKnown,
        Route::CsrBundle,
        Route::InstallCert,
        Route::KeyRequest,
        Route::Index,
    ];

    pub fn method(self) -> Method {
        match self {
            Route::WellKnown | Route::Index => Method::Get,
            Route::CsrBundle | Route::InstallCert | Route::KeyRequest => Method::Post,
        }
    }

    pub fn path(self) -> &'static str {
        match self {
            Route::WellKnown => WELL_KNOWN_PATH,
            Route::CsrBundle => CSR_BUNDLE_PATH,
            Route::InstallCert => INSTALL_CERT_PATH,
            Route::KeyRequest => KEY_REQUEST_PATH,
            Route::Index => INDEX_PATH,
        }
    }

    /// Resolves a request to a route, or the status to refuse it with.
    pub fn parse(req: &Request) -> Result<Route, u16> {
        let route = Route::ALL
            .into_iter()
            .find(|r| r.path() == req.path_only())
            .ok_or(404u16)?;
        if route.method() != req.method {
            return Err(405);
        }
        Ok(route)
    }

    /// Only certificate installation changes what the node serves.
    pub fn mutates_state(self) -> bool {
        matches!(self, Route::InstallCert)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeFailure {
    Ovmf(Component),
    Rootfs,
    Seal,
    Net,
}

impl NodeFailure {
    /// Short stage name, e.g. `rootfs` or `ovmf:kernel`.
    pub fn stage(&self) -> String {
        match self {
            NodeFailure::Ovmf(c) => format!("ovmf:{c}"),
            NodeFailure::Rootfs => "rootfs".into(),
            NodeFailure::Seal => "seal".into(),
            NodeFailure::Net => "net".into(),
        }
    }
}

impl fmt::Display for NodeFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.stage())
    }
}

impl Serialize for NodeFailure {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.stage())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NodePhase {
    PoweredOff,
    Measured,
    RootfsVerified,
    Identified,
    Serving,
    Failed(NodeFailure),
}

impl NodePhase {
    /// Position in the canonical order; `Failed` has none.
    pub fn rank(&self) -> Option<u8> {
        match self {
            NodePhase::PoweredOff => Some(0),
            NodePhase::Measured => Some(1),
            NodePhase::RootfsVerified => Some(2),
            NodePhase::Identified => Some(3),
            NodePhase::Serving => Some(4),
            NodePhase::Failed(_) => None,
        }
    }
}

/// Everything the host hands to a node at launch. Apart from the chip, all of
/// it is under host control.
#[derive(Clone)]
pub struct NodeConfig {
    pub chip: Arc<ChipState>,
    pub boot: BootBundle,
    pub disk: HostDisk,
    /// Serialized [`VerityMeta`] as shipped next to the rootfs.
    pub verity_meta: Vec<u8>,
    pub addr: Addr,
    pub domain: String,
    pub peer_policy: PeerPolicy,
    pub trusted_ark: PublicKey,
    pub ca_root: PublicKey,
    pub kds: Addr,
    pub clock: Clock,
}

/// Host-side persistent storage; survives reboots and is readable and
/// writable by the host.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NodeStorage {
    pub sealed: Option<Vec<u8>>,
}

#[derive(Debug, Clone)]
pub struct NodeIdentity {
    pub keypair: KeyPair,
    pub csr: Vec<u8>,
    pub report_pubkey: AttestationReport,
    pub report_csr: AttestationReport,
}

#[derive(Debug, Clone)]
struct TlsState {
    certificate: Vec<u8>,
    key: KeyPair,
    /// Report binding the shared public key.
    report: AttestationReport,
    leader: bool,
    leader_ip: String,
}

#[derive(Serialize, Deserialize)]
struct SealedState {
    #[serde(with = "crate::codec::hex_bytes")]
    identity_secret: Vec<u8>,
    tls: Option<SealedTls>,
}

#[derive(Clone, Serialize, Deserialize)]
struct SealedTls {
    #[serde(with = "crate::codec::hex_bytes")]
    certificate: Vec<u8>,
    #[serde(with = "crate::codec::hex_bytes")]
    secret: Vec<u8>,
    leader_ip: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum NodeEvent {
    BootAborted { stage: String },
    IdentityCreated { public_key: PublicKey },
    IdentityRestored { public_key: PublicKey },
    SealedVolumeUnreadable { error: String },
    CertificateInstalled { leader: bool, serial: Option<u64> },
    CertificateRejected { reason: String },
    KeyServed { requester: ChipId },
    KeyRequestRefused { verdict: Verdict },
    LeaderRejected { leader: String, verdict: Verdict },
    IntegrityFault { error: String },
    RequestRefused { method: String, path: String, status: u16 },
}

pub struct Node {
    config: NodeConfig,
    storage: NodeStorage,
    phase: NodePhase,
    history: Vec<NodePhase>,
    measurement: Option<LaunchMeasurement>,
    rootfs: Option<MerkleDevice>,
    identity: Option<NodeIdentity>,
    restored_tls: Option<SealedTls>,
    tls: Option<TlsState>,
    events: Vec<NodeEvent>,
    rng: ChaCha20Rng,
}

impl fmt::Debug for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Node")
            .field("addr", &self.config.addr)
            .field("phase", &self.phase)
            .finish_non_exhaustive()
    }
}

fn bind(bytes: &[u8]) -> ReportData {
    ReportData::bind(&hash256(bytes))
}

impl Node {
    pub fn new(config: NodeConfig, storage: NodeStorage, seed: u64) -> Self {
        Node {
            config,
            storage,
            phase: NodePhase::PoweredOff,
            history: vec![NodePhase::PoweredOff],
            measurement: None,
            rootfs: None,
            identity: None,
            restored_tls: None,
            tls: None,
            events: Vec::new(),
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    pub fn config(&self) -> &NodeConfig {
        &self.config
    }

    pub fn addr(&self) -> &Addr {
        &self.config.addr
    }

    pub fn phase(&self) -> NodePhase {
        self.phase
    }

    pub fn history(&self) -> &[NodePhase] {
        &self.history
    }

    pub fn events(&self) -> &[NodeEvent] {
        &self.events
    }

    pub fn measurement(&self) -> Option<LaunchMeasurement> {
        self.measurement
    }

    pub fn identity(&self) -> Option<&NodeIdentity> {
        self.identity.as_ref()
    }

    pub fn storage(&self) -> &NodeStorage {
        &self.storage
    }

    /// Powers the node off, returning the host-side storage for a reboot.
    pub fn into_storage(self) -> NodeStorage {
        self.storage
    }

    pub fn rootfs_root(&self) -> Option<Digest256> {
        self.rootfs.as_ref().map(MerkleDevice::root)
    }

    pub fn certificate(&self) -> Option<&[u8]> {
        self.tls.as_ref().map(|t| t.certificate.as_slice())
    }

    pub fn tls_public_key(&self) -> Option<PublicKey> {
        self.tls.as_ref().map(|t| t.key.public())
    }

    /// The installed TLS key pair. Exposed for simulator-side audits only.
    pub fn tls_keypair(&self) -> Option<&KeyPair> {
        self.tls.as_ref().map(|t| &t.key)
    }

    pub fn is_leader(&self) -> bool {
        self.tls.as_ref().is_some_and(|t| t.leader)
    }

    /// Key presented on connections: the shared TLS key once installed,
    /// otherwise the node's own identity key.
    pub fn connection_key(&self) -> Option<PublicKey> {
        self.tls_public_key()
            .or_else(|| self.identity.as_ref().map(|i| i.keypair.public()))
    }

    fn advance(&mut self, phase: NodePhase) {
        self.phase = phase;
        self.history.push(phase);
    }

    /// Moves to `Failed`, which is terminal.
    pub fn fail(&mut self, failure: NodeFailure) -> NodePhase {
        if !matches!(self.phase, NodePhase::Failed(_)) {
            self.events.push(NodeEvent::BootAborted { stage: failure.stage() });
            self.advance(NodePhase::Failed(failure));
        }
        self.phase
    }

    /// PoweredOff → Measured → RootfsVerified, or Failed with the stage.
    pub fn boot(&mut self) -> NodePhase {
        if self.phase != NodePhase::PoweredOff {
            return self.phase;
        }
        let boot = &self.config.boot;
        if firmware_verifies_hash_table(&boot.firmware) {
            if let BootDecision::Abort(c) = ovmf_verify(boot) {
                return self.fail(NodeFailure::Ovmf(c));
            }
        }
        self.measurement = Some(boot.launch_measurement());
        self.advance(NodePhase::Measured);

        let Some(root) = cmdline_root_hash(&self.config.boot.cmdline) else {
            return self.fail(NodeFailure::Rootfs);
        };
        let Ok(mut meta) = VerityMeta::from_bytes(&self.config.verity_meta) else {
            return self.fail(NodeFailure::Rootfs);
        };
        // the only trusted input is the measured root; the rest of the
        // metadata is checked against it
        meta.root = root;
        let Ok(device) = MerkleDevice::open(self.config.disk.clone(), &meta) else {
            return self.fail(NodeFailure::Rootfs);
        };
        if device.verified_read_all().is_err() {
            return self.fail(NodeFailure::Rootfs);
        }
        self.rootfs = Some(device);
        self.advance(NodePhase::RootfsVerified);
        self.phase
    }

    /// Restores the identity from sealed storage or creates a fresh one.
    pub fn first_boot_identity(&mut self) -> Result<&NodeIdentity, NodeFailure> {
        if self.phase != NodePhase::RootfsVerified {
            return Err(match self.phase {
                NodePhase::Failed(f) => f,
                _ => NodeFailure::Seal,
            });
        }
        let measurement = self.measurement.expect("measured before rootfs verification");
        let restored = match self.storage.sealed.as_deref().map(|blob| self.unseal(blob)) {
            Some(Ok(state)) => Some(state),
            Some(Err(error)) => {
                self.events.push(NodeEvent::SealedVolumeUnreadable { error });
                None
            }
            None => None,
        };
        let keypair = match restored {
            Some((key, tls)) => {
                self.events.push(NodeEvent::IdentityRestored {
                    public_key: key.public(),
                });
                self.restored_tls = tls;
                key
            }
            None => {
                let key = KeyPair::generate(&mut self.rng);
                self.events.push(NodeEvent::IdentityCreated {
                    public_key: key.public(),
                });
                key
            }
        };
        let csr = Csr::create(&self.config.domain, &keypair).to_bytes();
        let chip = &self.config.chip;
        let issued = chip
            .issue_report(&measurement, bind(keypair.public().as_ref()).as_ref())
            .and_then(|p| Ok((p, chip.issue_report(&measurement, bind(&csr).as_ref())?)));
        let Ok((report_pubkey, report_csr)) = issued else {
            self.fail(NodeFailure::Seal);
            return Err(NodeFailure::Seal);
        };
        self.identity = Some(NodeIdentity {
            keypair,
            csr,
            report_pubkey,
            report_csr,
        });
        self.seal();
        self.advance(NodePhase::Identified);
        Ok(self.identity.as_ref().expect("just set"))
    }

    fn unseal(&self, blob: &[u8]) -> Result<(KeyPair, Option<SealedTls>), String> {
        let key = self
            .config
            .chip
            .derive_sealing_key(&self.measurement.expect("measured"));
        let volume = SealedVolume::from_bytes(blob).map_err(|e| e.to_string())?;
        let plain = unseal_volume(&volume, &key).map_err(|e| e.to_string())?;
        let state: SealedState = serde_json::from_slice(&plain).map_err(|e| e.to_string())?;
        let keypair = KeyPair::from_private_bytes(&state.identity_secret).map_err(|e| e.to_string())?;
        Ok((keypair, state.tls))
    }

    fn seal(&mut self) {
        let Some(identity) = &self.identity else {
            return;
        };
        let tls = match &self.tls {
            Some(t) => Some(SealedTls {
                certificate: t.certificate.clone(),
                secret: t.key.secret_bytes().to_vec(),
                leader_ip: t.leader_ip.clone(),
            }),
            None => self.restored_tls.clone(),
        };
        let state = SealedState {
            identity_secret: identity.keypair.secret_bytes().to_vec(),
            tls,
        };
        let key = self
            .config
            .chip
            .derive_sealing_key(&self.measurement.expect("measured"));
        let plain = serde_json::to_vec(&state).expect("sealed state serializes");
        self.storage.sealed = Some(seal_volume(&plain, &key, &mut self.rng).to_bytes());
    }

    /// Identified → Serving. A certificate restored from sealed storage is
    /// reinstalled if it still checks out.
    pub fn serve(&mut self) -> Result<(), NodeFailure> {
        match self.phase {
            NodePhase::Identified => {}
            NodePhase::Serving => return Ok(()),
            NodePhase::Failed(f) => return Err(f),
            _ => return Err(NodeFailure::Net),
        }
        if let Some(saved) = self.restored_tls.take() {
            match (
                Certificate::from_bytes(&saved.certificate),
                KeyPair::from_private_bytes(&saved.secret),
            ) {
                (Ok(cert), Ok(key))
                    if self.certificate_acceptable(&cert).is_ok() && cert.subject_public_key == key.public() =>
                {
                    self.install_tls(saved.certificate, &cert, key, saved.leader_ip);
                }
                _ => self.events.push(NodeEvent::CertificateRejected {
                    reason: "sealed certificate no longer valid".into(),
                }),
            }
        }
        self.advance(NodePhase::Serving);
        Ok(())
    }

    /// Runs boot, identity and serve in sequence.
    pub fn start(&mut self) -> NodePhase {
        if self.boot() != NodePhase::RootfsVerified {
            return self.phase;
        }
        if self.first_boot_identity().is_err() {
            return self.phase;
        }
        let _ = self.serve();
        self.phase
    }

    fn certificate_acceptable(&self, cert: &Certificate) -> Result<(), &'static str> {
        if !cert.verify_signature(&self.config.ca_root) {
            return Err("certificate not issued by the trusted CA");
        }
        if cert.subject != self.config.domain {
            return Err("certificate is for another domain");
        }
        if !cert.validity.contains(self.config.clock.now()) {
            return Err("certificate outside its validity period");
        }
        Ok(())
    }

    fn install_tls(&mut self, certificate: Vec<u8>, cert: &Certificate, key: KeyPair, leader_ip: String) {
        let identity = self.identity.as_ref().expect("identified before serving");
        let leader = key.public() == identity.keypair.public();
        let report = if leader {
            identity.report_pubkey.clone()
        } else {
            self.config
                .chip
                .issue_report(
                    &self.measurement.expect("measured"),
                    bind(key.public().as_ref()).as_ref(),
                )
                .expect("64-byte report data")
        };
        self.events.push(NodeEvent::CertificateInstalled {
            leader,
            serial: cert.serial(),
        });
        self.tls = Some(TlsState {
            certificate,
            key,
            report,
            leader,
            leader_ip,
        });
    }

    /// Dispatches one request. Every response carries the connection key.
    pub fn handle(&mut self, req: &Request, net: &dyn Transport) -> Response {
        let resp = match Route::parse(req) {
            Err(status) => {
                self.events.push(NodeEvent::RequestRefused {
                    method: req.method.to_string(),
                    path: req.path.clone(),
                    status,
                });
                let msg = if status == 404 {
                    "not found"
                } else {
                    "method not allowed"
                };
                Response::error(status, msg)
            }
            Ok(_) if self.phase != NodePhase::Serving => Response::error(503, "node is not serving"),
            Ok(Route::WellKnown) => self.well_known(),
            Ok(Route::CsrBundle) => self.csr_bundle(),
            Ok(Route::InstallCert) => self.install_cert(&req.body, net),
            Ok(Route::KeyRequest) => self.key_request(&req.body, net),
            Ok(Route::Index) => self.index(),
        };
        match self.connection_key() {
            Some(k) => resp.with_header(CONN_KEY_HEADER, k.to_hex()),
            None => resp,
        }
    }

    fn identity_ref(&self) -> &NodeIdentity {
        self.identity.as_ref().expect("serving nodes have an identity")
    }

    fn well_known(&self) -> Response {
        let body = match &self.tls {
            Some(t) => WellKnownResponse {
                report: t.report.clone(),
                tls_public_key: t.key.public(),
            },
            None => WellKnownResponse {
                report: self.identity_ref().report_pubkey.clone(),
                tls_public_key: self.identity_ref().keypair.public(),
            },
        };
        Response::json(200, &body)
    }

    fn csr_bundle(&self) -> Response {
        let id = self.identity_ref();
        Response::json(
            200,
            &CsrBundleResponse {
                report: id.report_csr.clone(),
                csr: id.csr.clone(),
            },
        )
    }

    fn install_cert(&mut self, body: &[u8], net: &dyn Transport) -> Response {
        let Ok(req) = serde_json::from_slice::<InstallCertRequest>(body) else {
            return Response::error(400, "expected {certificate, leader_ip}");
        };
        let Ok(cert) = Certificate::from_bytes(&req.certificate) else {
            return Response::error(400, "malformed certificate");
        };
        if let Err(reason) = self.certificate_acceptable(&cert) {
            self.events
                .push(NodeEvent::CertificateRejected { reason: reason.into() });
            return Response::error(403, reason);
        }
        let own = self.identity_ref().keypair.clone();
        let status = if cert.subject_public_key == own.public() {
            self.install_tls(req.certificate, &cert, own, req.leader_ip);
            "leader"
        } else {
            match self.fetch_key_from_leader(&cert, &req.leader_ip, net) {
                Ok(key) => {
                    self.install_tls(req.certificate, &cert, key, req.leader_ip);
                    "installed"
                }
                Err(resp) => return resp,
            }
        };
        self.seal();
        Response::json(200, &InstallCertResponse { status: status.into() })
    }

    fn fetch_key_from_leader(
        &mut self,
        cert: &Certificate,
        leader_ip: &str,
        net: &dyn Transport,
    ) -> Result<KeyPair, Response> {
        let id = self.identity_ref();
        let request = KeyRequest {
            report: id.report_pubkey.clone(),
            public_key: id.keypair.public(),
        };
        let own = id.keypair.clone();
        let leader = Addr::new(leader_ip);
        let resp = net
            .call(&leader, Request::post_json(KEY_REQUEST_PATH, &request))
            .map_err(|e| Response::error(502, format!("leader unreachable: {e}")))?;
        if !resp.is_success() {
            let why = resp
                .error_message()
                .unwrap_or_else(|| format!("status {}", resp.status));
            return Err(Response::error(502, format!("leader refused: {why}")));
        }
        let Ok(answer) = resp.parse_json::<KeyResponse>() else {
            return Err(Response::error(502, "malformed key response"));
        };
        let kds = RemoteKds {
            transport: net,
            kds: self.config.kds.clone(),
        };
        let ctx = AttestationContext {
            kds: &kds,
            trusted_ark: self.config.trusted_ark,
            now: self.config.clock.now(),
        };
        accept_key_response(&self.config.peer_policy, &ctx, cert, &answer, &own).map_err(|verdict| {
            let msg = format!("leader rejected: {verdict}");
            self.events.push(NodeEvent::LeaderRejected {
                leader: leader_ip.to_owned(),
                verdict,
            });
            Response::error(502, msg)
        })
    }

    fn key_request(&mut self, body: &[u8], net: &dyn Transport) -> Response {
        let Some(tls) = self.tls.as_ref().filter(|t| t.leader) else {
            return Response::error(409, "not the leader");
        };
        let Ok(req) = serde_json::from_slice::<KeyRequest>(body) else {
            return Response::error(400, "expected {report, public_key}");
        };
        let kds = RemoteKds {
            transport: net,
            kds: self.config.kds.clone(),
        };
        let ctx = AttestationContext {
            kds: &kds,
            trusted_ark: self.config.trusted_ark,
            now: self.config.clock.now(),
        };
        let creds = LeaderCredentials {
            report: &tls.report,
            tls_key: &tls.key,
        };
        match answer_key_request(&self.config.peer_policy, &ctx, &creds, &req, &mut self.rng) {
            Ok(answer) => {
                self.events.push(NodeEvent::KeyServed {
                    requester: req.report.chip_id,
                });
                Response::json(200, &answer)
            }
            Err(verdict) => {
                let msg = format!("refused: {verdict}");
                self.events.push(NodeEvent::KeyRequestRefused { verdict });
                Response::error(403, msg)
            }
        }
    }

    fn index(&mut self) -> Response {
        if self.tls.is_none() {
            return Response::error(503, "TLS identity not installed");
        }
        let device = self.rootfs.as_ref().expect("serving nodes have a rootfs");
        let image = match device.verified_read_all() {
            Ok(image) => image,
            Err(e) => {
                self.events.push(NodeEvent::IntegrityFault { error: e.to_string() });
                return Response::error(500, format!("rootfs {e}"));
            }
        };
        let page = parse_image(&image)
            .ok()
            .and_then(|entries| entries.into_iter().find(|e| e.path == INDEX_FILE));
        match page {
            Some(entry) => Response::new(200, entry.content).with_header("content-type", "text/html"),
            None => Response::not_found(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn routes_cover_only_the_protocol_endpoints() {
        let paths: Vec<_> = Route::ALL.iter().map(|r| r.path()).collect();
        assert_eq!(
            paths,
            [
                WELL_KNOWN_PATH,
                CSR_BUNDLE_PATH,
                INSTALL_CERT_PATH,
                KEY_REQUEST_PATH,
                INDEX_PATH
            ]
        );
        for bad in ["/admin", "/shell", "/rootfs", "/", "/.well-known", "/install-cert/x"] {
            assert_eq!(Route::parse(&Request::get(bad)), Err(404), "{bad}");
        }
        assert_eq!(Route::parse(&Request::get(INSTALL_CERT_PATH)), Err(405));
        assert_eq!(
            Route::parse(&Request::get(format!("{WELL_KNOWN_PATH}?x=1"))),
            Ok(Route::WellKnown)
        );
        assert_eq!(Route::ALL.iter().filter(|r| r.mutates_state()).count(), 1);
    }

    #[test]
    fn failure_stage_names() {
        assert_eq!(NodeFailure::Ovmf(Component::Kernel).stage(), "ovmf:kernel");
        assert_eq!(NodeFailure::Rootfs.to_string(), "rootfs");
        assert_eq!(
            serde_json::to_string(&NodePhase::Failed(NodeFailure::Seal)).unwrap(),
            r#"{"failed":"seal"}"#
        );
    }
}
