// SPDX-License-Identifier: Apache-2.0

//! Scripted attacks against a simulated deployment.
//!
//! Every scenario runs the same lifecycle (launch the fleet, run one
//! certificate round, let clients attest and browse) with the adversary
//! interfering at one point. The report lists every verdict and the checks
//! performed over the transcript.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::rc::Rc;
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::boot::LaunchMeasurement;
use crate::cert::Csr;
use crate::crypto::{encrypt_to, hash256, KeyPair, PublicKey};
use crate::hrot::{ChipState, ReportData};
use crate::node::{NodeEvent, NodePhase, NodeStorage};
use crate::protocol::{RoundFailed, RoundOutcome, Verdict};
use crate::release::build_release;
use crate::sim::fleet::{client_addr, node_addr, FleetOptions, SimFleet, DOMAIN, TCB_VERSION};
use crate::sim::net::{Hook, HookAction, Service, SimMessage};
use crate::transport::{Addr, Method, Request, Response, Transport, CONN_KEY_HEADER};
use crate::verification::{connection_key, AttestationVerdict};
use crate::wire::{
    InstallCertRequest, KeyRequest, KeyResponse, WellKnownResponse, INDEX_PATH, INSTALL_CERT_PATH, KEY_REQUEST_PATH,
    WELL_KNOWN_PATH,
};

/// Node the adversary targets.
pub const TARGET: usize = 0;
pub const EVIL_ADDR: &str = "10.6.6.6";
pub const ROGUE_LEADER_ADDR: &str = "10.0.0.66";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    None,
    MaliciousKernel,
    MaliciousInitrd,
    MaliciousCmdline,
    MaliciousOvmf,
    TamperedRootfs,
    TamperedRoothash,
    RuntimeMutationAttempt,
    ImpersonatorValidReport,
    CertRedirectMitm,
    Rollback,
    WrongMeasurementLeader,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 12] = [
        ScenarioKind::None,
        ScenarioKind::MaliciousKernel,
        ScenarioKind::MaliciousInitrd,
        ScenarioKind::MaliciousCmdline,
        ScenarioKind::MaliciousOvmf,
        ScenarioKind::TamperedRootfs,
        ScenarioKind::TamperedRoothash,
        ScenarioKind::RuntimeMutationAttempt,
        ScenarioKind::ImpersonatorValidReport,
        ScenarioKind::CertRedirectMitm,
        ScenarioKind::Rollback,
        ScenarioKind::WrongMeasurementLeader,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::None => "none",
            ScenarioKind::MaliciousKernel => "malicious-kernel",
            ScenarioKind::MaliciousInitrd => "malicious-initrd",
            ScenarioKind::MaliciousCmdline => "malicious-cmdline",
            ScenarioKind::MaliciousOvmf => "malicious-ovmf",
            ScenarioKind::TamperedRootfs => "tampered-rootfs",
            ScenarioKind::TamperedRoothash => "tampered-roothash",
            ScenarioKind::RuntimeMutationAttempt => "runtime-mutation-attempt",
            ScenarioKind::ImpersonatorValidReport => "impersonator-valid-report",
            ScenarioKind::CertRedirectMitm => "cert-redirect-mitm",
            ScenarioKind::Rollback => "rollback",
            ScenarioKind::WrongMeasurementLeader => "wrong-measurement-leader",
        }
    }

    pub fn is_attack(self) -> bool {
        self != ScenarioKind::None
    }

    pub fn description(self) -> &'static str {
        match self {
            ScenarioKind::None => "honest deployment",
            ScenarioKind::MaliciousKernel => "hypervisor swaps the kernel but injects the original hash table",
            ScenarioKind::MaliciousInitrd => "hypervisor swaps the initrd but injects the original hash table",
            ScenarioKind::MaliciousCmdline => "hypervisor edits the command line but injects the original hash table",
            ScenarioKind::MaliciousOvmf => {
                "hypervisor boots firmware that skips hash-table checks, with a swapped kernel"
            }
            ScenarioKind::TamperedRootfs => "host modifies one rootfs block before boot",
            ScenarioKind::TamperedRoothash => {
                "host rebuilds the rootfs and splices its new root hash into the command line"
            }
            ScenarioKind::RuntimeMutationAttempt => {
                "host probes for management endpoints and rewrites the disk after boot"
            }
            ScenarioKind::ImpersonatorValidReport => "VM runs the genuine image on a chip outside the approved set",
            ScenarioKind::CertRedirectMitm => {
                "provider obtains a fresh certificate and redirects clients to a non-TEE server"
            }
            ScenarioKind::Rollback => "host boots an obsolete, revoked release",
            ScenarioKind::WrongMeasurementLeader => {
                "install messages point followers to a leader running another image"
            }
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown scenario `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Topology {
    pub nodes: usize,
    pub clients: usize,
}

impl Default for Topology {
    fn default() -> Self {
        Topology { nodes: 3, clients: 2 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BootRecord {
    pub node: Addr,
    pub phase: NodePhase,
    pub history: Vec<NodePhase>,
    pub measurement: Option<LaunchMeasurement>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClientVerdict {
    pub client: Addr,
    pub server: Addr,
    pub stage: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<AttestationVerdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub status: Option<u16>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub connection_key: Option<PublicKey>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct KeySecrecy {
    pub secrets_checked: usize,
    pub messages_scanned: usize,
    pub leaks: Vec<String>,
}

impl KeySecrecy {
    pub fn passed(&self) -> bool {
        self.leaks.is_empty()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioReport {
    pub scenario: ScenarioKind,
    pub description: &'static str,
    pub seed: u64,
    pub topology: Topology,
    pub boots: Vec<BootRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub round: Option<RoundOutcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub round_failure: Option<RoundFailed>,
    pub node_events: BTreeMap<Addr, Vec<NodeEvent>>,
    pub client_verdicts: Vec<ClientVerdict>,
    pub certificates_issued: usize,
    pub key_secrecy: KeySecrecy,
    pub rootfs_unchanged: bool,
    pub consistent_tls_identity: bool,
    /// Everything that stopped the adversary: boot failures, rejections and
    /// non-Trusted verdicts.
    pub detections: Vec<String>,
    /// Broken security properties. Must be empty for every scenario.
    pub violations: Vec<String>,
    pub transcript_messages: usize,
    pub transcript_digest: String,
    #[serde(skip)]
    pub transcript: Vec<SimMessage>,
}

impl ScenarioReport {
    /// Attacks must be detected; the honest run must detect nothing.
    pub fn passed(&self) -> bool {
        self.violations.is_empty() && (self.scenario.is_attack() != self.detections.is_empty())
    }

    pub fn transcript_jsonl(&self) -> String {
        self.transcript
            .iter()
            .map(|m| serde_json::to_string(m).expect("message serializes") + "\n")
            .collect()
    }
}

/// Non-TEE server run by the provider. It holds a genuinely issued
/// certificate for its own key and replays a real node's attestation.
struct EvilServer {
    key: KeyPair,
    replay: Option<WellKnownResponse>,
}

impl Service for EvilServer {
    fn serve(&mut self, _: &Addr, req: &Request, _: &dyn Transport) -> Response {
        let resp = match (req.method, req.path_only()) {
            (Method::Get, WELL_KNOWN_PATH) => match &self.replay {
                Some(body) => Response::json(200, body),
                None => Response::error(503, "nothing to replay"),
            },
            (Method::Get, INDEX_PATH) => Response::new(200, b"<p>looks legitimate</p>".to_vec()),
            _ => Response::not_found(),
        };
        resp.with_header(CONN_KEY_HEADER, self.key.public().to_hex())
    }
}

/// A VM on an approved chip running a different image, posing as leader.
struct RogueLeader {
    chip: Arc<ChipState>,
    measurement: LaunchMeasurement,
    key: KeyPair,
    rng: ChaCha20Rng,
}

impl Service for RogueLeader {
    fn serve(&mut self, _: &Addr, req: &Request, _: &dyn Transport) -> Response {
        if req.path_only() != KEY_REQUEST_PATH {
            return Response::not_found();
        }
        let Ok(kr) = serde_json::from_slice::<KeyRequest>(&req.body) else {
            return Response::error(400, "bad request");
        };
        let report = self
            .chip
            .issue_report(
                &self.measurement,
                ReportData::bind(&hash256(self.key.public().as_ref())).as_ref(),
            )
            .expect("64-byte report data");
        match encrypt_to(&kr.public_key, &self.key.secret_bytes(), &mut self.rng) {
            Ok(ct) => Response::json(
                200,
                &KeyResponse {
                    report,
                    encrypted_private_key: ct,
                },
            ),
            Err(_) => Response::error(400, "bad key"),
        }
    }
}

fn tamper_cmdline(cmdline: &str) -> String {
    cmdline.replace("ro ", "rw init=/bin/sh ")
}

pub fn run_scenario(topology: Topology, adversary: ScenarioKind, seed: u64) -> ScenarioReport {
    assert!(topology.nodes >= 1, "topology needs at least one node");
    let mut fleet = SimFleet::new(FleetOptions::new(topology.nodes, seed));
    let good = fleet.release.clone();
    let mut secrets: Vec<KeyPair> = Vec::new();

    // launch, with boot-time attacks against the target
    for i in 0..topology.nodes {
        let mut config = fleet.node_config(i, &good);
        if i == TARGET {
            match adversary {
                ScenarioKind::MaliciousKernel => config.boot.kernel.extend_from_slice(b" +rootkit"),
                ScenarioKind::MaliciousInitrd => config.boot.initrd.extend_from_slice(b"; nc -e /bin/sh"),
                ScenarioKind::MaliciousCmdline => config.boot.cmdline = tamper_cmdline(&config.boot.cmdline),
                ScenarioKind::MaliciousOvmf => {
                    config.boot.firmware = crate::boot::ovmf_firmware("edk2-custom", false);
                    config.boot.kernel.extend_from_slice(b" +rootkit");
                }
                ScenarioKind::TamperedRootfs => {
                    let disk = config.disk.snapshot();
                    let offset = disk.iter().position(|&b| b == b'<').unwrap_or(0);
                    config.disk.host_write(offset, b"!");
                }
                ScenarioKind::TamperedRoothash => {
                    let mut sources = fleet.sources.clone();
                    sources.rootfs = sources
                        .rootfs
                        .with_file("usr/bin/backdoor", "#!/bin/sh\nnc -l 4444\n", 0o755);
                    let evil = build_release(&sources).expect("tampered release builds");
                    config = fleet.node_config(i, &evil);
                }
                ScenarioKind::ImpersonatorValidReport => {
                    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x1_0000);
                    let chip = ChipState::generate(&mut rng, TCB_VERSION);
                    fleet.kds.borrow_mut().0.provision_chip(&chip);
                    config = fleet.config_on_chip(i, Arc::new(chip), &good);
                }
                ScenarioKind::Rollback => {
                    let old = fleet.revoked.clone();
                    config = fleet.node_config(i, &old);
                }
                _ => {}
            }
        }
        fleet.launch(i, config, NodeStorage::default());
    }
    let rootfs_roots: Vec<_> = (0..topology.nodes).map(|i| fleet.node(i).rootfs_root()).collect();

    if adversary == ScenarioKind::WrongMeasurementLeader && topology.nodes > 0 {
        let mut sources = fleet.sources.clone();
        sources.kernel.extend_from_slice(b" debug=1");
        let debug = build_release(&sources).expect("debug release builds");
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x2_0000);
        let key = KeyPair::generate(&mut rng);
        secrets.push(key.clone());
        fleet.net.add(
            ROGUE_LEADER_ADDR,
            RogueLeader {
                chip: fleet.chips[TARGET].clone(),
                measurement: debug.measurement,
                key,
                rng,
            },
        );
        let rogue = ROGUE_LEADER_ADDR.to_owned();
        fleet.net.add_hook(
            Hook::new(
                "leader-redirect",
                HookAction::RewriteRequest(Rc::new(move |req: &mut Request| {
                    if let Ok(mut body) = serde_json::from_slice::<InstallCertRequest>(&req.body) {
                        body.leader_ip = rogue.clone();
                        req.body = serde_json::to_vec(&body).expect("serializes");
                    }
                })),
            )
            .path(INSTALL_CERT_PATH),
        );
    }

    let round = fleet.run_round();

    if adversary == ScenarioKind::ImpersonatorValidReport {
        // replay the public certificate to the impersonator so it asks the
        // leader for the key
        if let Ok(outcome) = &round {
            let install = InstallCertRequest {
                certificate: outcome.certificate.clone(),
                leader_ip: outcome.leader.0.clone(),
            };
            let _ = fleet
                .net
                .endpoint("host")
                .call(&node_addr(TARGET), Request::post_json(INSTALL_CERT_PATH, &install));
        }
    }

    let mut client_verdicts = Vec::new();
    let mut mitm_key = None;
    if adversary == ScenarioKind::CertRedirectMitm {
        // the provider controls DNS and can obtain a certificate for any key
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x3_0000);
        let key = KeyPair::generate(&mut rng);
        secrets.push(key.clone());
        let csr = Csr::create(DOMAIN, &key);
        let _ = fleet
            .ca
            .lock()
            .expect("ca lock poisoned")
            .issue(&fleet.ca_credential, &csr, fleet.clock.now());
        let replay = fleet
            .net
            .endpoint("evil-scraper")
            .call(&node_addr(TARGET), Request::get(WELL_KNOWN_PATH))
            .ok()
            .and_then(|r| r.parse_json::<WellKnownResponse>().ok());
        mitm_key = Some(key.public());
        fleet.net.add(EVIL_ADDR, EvilServer { key, replay });
        // client 0 is redirected from its very first access
        fleet.net.add_hook(
            Hook::new("dns-redirect", HookAction::Redirect(EVIL_ADDR.into()))
                .from(client_addr(0))
                .to(node_addr(TARGET)),
        );
    }

    for c in 0..topology.clients {
        let server = node_addr(c % topology.nodes);
        let ep = fleet.net.endpoint(client_addr(c));
        let mut client = fleet.client(&ep, &fleet.registry);
        let first = client.first_access(DOMAIN, &server);
        let trusted = matches!(&first, Ok(v) if v.is_trusted());
        client_verdicts.push(ClientVerdict {
            client: client_addr(c),
            server: server.clone(),
            stage: "first_access",
            connection_key: client.sessions.attested_key(DOMAIN).copied(),
            status: None,
            verdict: first.as_ref().ok().cloned(),
            error: first.err().map(|e| e.to_string()),
        });
        if !trusted {
            continue;
        }
        if adversary == ScenarioKind::CertRedirectMitm && c == 1 {
            // mid-session redirect of an already attested client
            fleet.net.add_hook(
                Hook::new("session-hijack", HookAction::Redirect(EVIL_ADDR.into()))
                    .from(client_addr(1))
                    .to(server.clone()),
            );
        }
        if adversary == ScenarioKind::RuntimeMutationAttempt && server == node_addr(TARGET) {
            runtime_mutation(&fleet);
        }
        for _ in 0..2 {
            let r = client.request(DOMAIN, &server, Request::get(INDEX_PATH));
            client_verdicts.push(ClientVerdict {
                client: client_addr(c),
                server: server.clone(),
                stage: "request",
                status: r.as_ref().ok().map(|(_, resp)| resp.status),
                connection_key: r.as_ref().ok().and_then(|(_, resp)| connection_key(resp)),
                verdict: r.as_ref().ok().map(|(v, _)| v.clone()),
                error: r.err().map(|e| e.to_string()),
            });
        }
    }
    if adversary == ScenarioKind::RuntimeMutationAttempt && topology.clients == 0 {
        runtime_mutation(&fleet);
    }

    assemble_report(
        &fleet,
        topology,
        adversary,
        seed,
        round,
        client_verdicts,
        &rootfs_roots,
        secrets,
        mitm_key,
    )
}

/// Host-side attempts to change a running node: management endpoints, odd
/// methods on protocol paths, and a direct disk write under the index page.
fn runtime_mutation(fleet: &SimFleet) {
    let host = fleet.net.endpoint("host");
    let target = node_addr(TARGET);
    let probes = [
        Request::post("/admin", b"{\"cmd\":\"reload\"}".to_vec()),
        Request::post("/rootfs", vec![0; 16]),
        Request {
            method: Method::Put,
            path: INSTALL_CERT_PATH.into(),
            body: Vec::new(),
        },
        Request {
            method: Method::Delete,
            path: WELL_KNOWN_PATH.into(),
            body: Vec::new(),
        },
        Request::post("/exec", b"id".to_vec()),
    ];
    for p in probes {
        let _ = host.call(&target, p);
    }
    let node = fleet.node(TARGET);
    let disk = &node.config().disk;
    let image = disk.snapshot();
    let needle = b"<!doctype";
    let offset = image.windows(needle.len()).position(|w| w == needle).unwrap_or(0);
    disk.host_write(offset, b"<script>steal()</script>");
}

#[allow(clippy::too_many_arguments)]
fn assemble_report(
    fleet: &SimFleet,
    topology: Topology,
    scenario: ScenarioKind,
    seed: u64,
    round: Result<RoundOutcome, RoundFailed>,
    client_verdicts: Vec<ClientVerdict>,
    rootfs_roots: &[Option<crate::crypto::Digest256>],
    mut secrets: Vec<KeyPair>,
    mitm_key: Option<PublicKey>,
) -> ScenarioReport {
    let mut detections = Vec::new();
    let mut violations = Vec::new();
    let accepted = &fleet
        .registry
        .get(DOMAIN)
        .expect("domain registered")
        .accepted_measurements;

    let mut boots = Vec::new();
    let mut node_events = BTreeMap::new();
    let mut legit_keys = BTreeSet::new();
    for (i, node) in fleet.launched() {
        let addr = node.addr().clone();
        if let NodePhase::Failed(f) = node.phase() {
            detections.push(format!("{addr}: boot failed at {f}"));
        }
        if let Some(id) = node.identity() {
            secrets.push(id.keypair.clone());
        }
        if let Some(k) = node.tls_keypair() {
            secrets.push(k.clone());
        }
        let genuine = node.measurement().is_some_and(|m| accepted.contains(&m));
        if genuine && node.phase() == NodePhase::Serving {
            legit_keys.extend(node.connection_key());
        }
        for e in node.events() {
            match e {
                NodeEvent::KeyRequestRefused { verdict } => {
                    detections.push(format!("{addr}: leader refused key request ({verdict})"))
                }
                NodeEvent::LeaderRejected { leader, verdict } => {
                    detections.push(format!("{addr}: rejected leader {leader} ({verdict})"))
                }
                NodeEvent::IntegrityFault { error } => detections.push(format!("{addr}: rootfs read failed ({error})")),
                NodeEvent::CertificateRejected { reason } => {
                    detections.push(format!("{addr}: certificate refused ({reason})"))
                }
                NodeEvent::RequestRefused { method, path, status } => {
                    detections.push(format!("{addr}: refused {method} {path} with {status}"))
                }
                _ => {}
            }
        }
        if node.phase() == NodePhase::Serving && node.rootfs_root() != rootfs_roots[i] {
            violations.push(format!("{addr}: rootfs root changed while serving"));
        }
        node_events.insert(addr.clone(), node.events().to_vec());
        boots.push(BootRecord {
            node: addr,
            phase: node.phase(),
            history: node.history().to_vec(),
            measurement: node.measurement(),
        });
        let history_ok = node
            .history()
            .windows(2)
            .all(|w| matches!(w[1], NodePhase::Failed(_)) || w[1].rank() == w[0].rank().map(|r| r + 1));
        if !history_ok {
            violations.push(format!("{}: phase order violated", node.addr()));
        }
    }
    let rootfs_unchanged = !violations.iter().any(|v| v.contains("rootfs root changed"));

    let (round_ok, round_failure) = match round {
        Ok(outcome) => (Some(outcome), None),
        Err(e) => {
            detections.push(format!("certificate round failed: {}", e.reason()));
            (None, Some(e))
        }
    };
    if let Some(outcome) = &round_ok {
        for nv in &outcome.verdicts {
            if nv.verdict != Verdict::Accept {
                detections.push(format!("sp: {} {}", nv.node, nv.verdict));
            }
        }
        // nodes whose measurement the SP accepted must be genuine
        for nv in outcome.verdicts.iter().filter(|v| v.verdict.is_accept()) {
            let i = fleet.sp.fleet.iter().position(|a| a == &nv.node).expect("fleet member");
            if !fleet.node(i).measurement().is_some_and(|m| accepted.contains(&m)) {
                violations.push(format!("sp accepted {} running an unapproved image", nv.node));
            }
        }
    }

    for v in &client_verdicts {
        match (&v.verdict, &v.error) {
            (Some(verdict), _) if verdict.is_trusted() => {
                if let Some(k) = &v.connection_key {
                    if !legit_keys.contains(k) || Some(*k) == mitm_key {
                        violations.push(format!("{} trusted {} presenting a non-fleet key", v.client, v.server));
                    }
                }
                if v.stage == "request" && v.status != Some(200) {
                    detections.push(format!(
                        "{} {} {}: status {}",
                        v.client,
                        v.stage,
                        v.server,
                        v.status.unwrap_or(0)
                    ));
                }
            }
            (Some(verdict), _) => {
                detections.push(format!("{} {} {}: {:?}", v.client, v.stage, v.server, verdict.status))
            }
            (None, Some(err)) => detections.push(format!("{} {} {}: {err}", v.client, v.stage, v.server)),
            (None, None) => {}
        }
    }

    let tls: Vec<_> = fleet
        .launched()
        .filter_map(|(_, n)| n.certificate().map(|c| (c.to_vec(), n.tls_public_key())))
        .collect();
    let consistent_tls_identity = tls.windows(2).all(|w| w[0] == w[1]);
    if !consistent_tls_identity {
        violations.push("serving nodes present different TLS identities".into());
    }

    let transcript = fleet.net.transcript().clone();
    let key_secrecy = scan_for_secrets(&transcript, &secrets);
    violations.extend(key_secrecy.leaks.iter().cloned());

    if !scenario.is_attack() {
        let all_serving = fleet
            .launched()
            .all(|(_, n)| n.phase() == NodePhase::Serving && n.certificate().is_some());
        if !all_serving {
            violations.push("honest node did not reach Serving with a certificate".into());
        }
    }

    ScenarioReport {
        scenario,
        description: scenario.description(),
        seed,
        topology,
        boots,
        round: round_ok,
        round_failure,
        node_events,
        client_verdicts,
        certificates_issued: fleet.certificates_issued(),
        key_secrecy,
        rootfs_unchanged,
        consistent_tls_identity,
        detections,
        violations,
        transcript_messages: transcript.len(),
        transcript_digest: fleet.net.transcript_digest().to_hex(),
        transcript,
    }
}

/// Searches every payload and header for private keys, raw or hex encoded.
pub fn scan_for_secrets(transcript: &[SimMessage], keys: &[KeyPair]) -> KeySecrecy {
    let mut patterns: Vec<(String, Vec<u8>)> = Vec::new();
    let mut seen = BTreeSet::new();
    for k in keys {
        let secret = k.secret_bytes();
        if !seen.insert(secret) {
            continue;
        }
        let label = format!("private key of {}", k.public());
        patterns.push((label.clone(), secret.to_vec()));
        patterns.push((label.clone(), hex::encode(secret).into_bytes()));
        patterns.push((label, hex::encode_upper(secret).into_bytes()));
    }
    let mut leaks = Vec::new();
    for m in transcript {
        let headers: Vec<&[u8]> = m.headers.values().map(|v| v.as_bytes()).collect();
        for (label, p) in &patterns {
            let found = std::iter::once(m.payload.as_slice())
                .chain(headers.iter().copied())
                .any(|hay| hay.windows(p.len()).any(|w| w == p.as_slice()));
            if found {
                leaks.push(format!("{label} in message {} ({} -> {})", m.seq, m.src, m.dst));
            }
        }
    }
    KeySecrecy {
        secrets_checked: seen.len(),
        messages_scanned: transcript.len(),
        leaks,
    }
}

/// Runs every scenario once.
pub fn run_all(topology: Topology, seed: u64) -> Vec<ScenarioReport> {
    ScenarioKind::ALL
        .into_iter()
        .map(|k| run_scenario(topology, k, seed))
        .collect()
}
