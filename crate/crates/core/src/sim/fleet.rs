// SPDX-License-Identifier: Apache-2.0

//! A complete simulated deployment: KDS, CA, SP node, fleet VMs and clients
//! on one [`SimNet`], all derived from a single seed.

use std::cell::{Ref, RefCell, RefMut};
use std::rc::Rc;
use std::sync::{Arc, Mutex};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::clock::Clock;
use crate::crypto::{KeyPair, PublicKey};
use crate::hrot::ChipState;
use crate::integrity::HostDisk;
use crate::kds::Kds;
use crate::node::{Node, NodeConfig, NodePhase, NodeStorage};
use crate::protocol::{AttestationContext, PeerPolicy, RateLimit, RoundFailed, RoundOutcome, SimulatedCA, SpNode};
use crate::release::{build_release, Release, ReleaseSources};
use crate::sim::net::{Service, SimNet};
use crate::transport::{serve_kds, Addr, RemoteKds, Request, Response, Transport};
use crate::verification::{AttestingClient, TrustedRegistry};

pub const DOMAIN: &str = "app.revelio.test";
pub const KDS_ADDR: &str = "kds";
pub const SP_ADDR: &str = "sp";
pub const GOOD_VERSION: &str = "v2";
pub const REVOKED_VERSION: &str = "v1";
pub const TCB_VERSION: u64 = 3;
/// Simulated start time, comfortably inside every validity window.
pub const EPOCH: u64 = 1_700_000_000;

pub fn node_addr(i: usize) -> Addr {
    Addr::new(format!("10.0.0.{}", i + 1))
}

pub fn client_addr(i: usize) -> Addr {
    Addr::new(format!("client-{i}"))
}

pub struct KdsService(pub Kds);

impl Service for KdsService {
    fn serve(&mut self, _: &Addr, req: &Request, _: &dyn Transport) -> Response {
        serve_kds(&self.0, req)
    }
}

#[derive(Debug, Clone)]
pub struct FleetOptions {
    pub nodes: usize,
    pub seed: u64,
    pub rate_limit: RateLimit,
}

impl FleetOptions {
    pub fn new(nodes: usize, seed: u64) -> Self {
        FleetOptions {
            nodes,
            seed,
            rate_limit: RateLimit::default(),
        }
    }
}

pub struct SimFleet {
    pub net: SimNet,
    pub clock: Clock,
    pub kds: Rc<RefCell<KdsService>>,
    pub ark: PublicKey,
    pub chips: Vec<Arc<ChipState>>,
    pub sources: ReleaseSources,
    pub release: Release,
    pub revoked: Release,
    pub policy: PeerPolicy,
    pub registry: TrustedRegistry,
    pub ca: Arc<Mutex<SimulatedCA>>,
    pub ca_key: KeyPair,
    pub ca_credential: [u8; 32],
    pub ca_root: PublicKey,
    pub sp: SpNode,
    nodes: Vec<Option<Rc<RefCell<Node>>>>,
    rng: ChaCha20Rng,
}

impl SimFleet {
    pub fn new(opts: FleetOptions) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
        let mut kds = Kds::generate(&mut rng);
        let chips: Vec<Arc<ChipState>> = (0..opts.nodes)
            .map(|_| {
                let chip = ChipState::generate(&mut rng, TCB_VERSION);
                kds.provision_chip(&chip);
                Arc::new(chip)
            })
            .collect();
        let ark = kds.ark_public();

        let sources = ReleaseSources::sample(GOOD_VERSION);
        let release = build_release(&sources).expect("sample release builds");
        let revoked = build_release(&ReleaseSources::sample(REVOKED_VERSION)).expect("sample release builds");

        let mut policy = PeerPolicy {
            approved_chips: chips.iter().map(|c| *c.chip_id()).collect(),
            approved_ips: (0..opts.nodes).map(|i| node_addr(i).0).collect(),
            expected_measurements: [release.measurement].into(),
            revoked_measurements: Default::default(),
        };
        policy.revoke(revoked.measurement);

        let mut registry = TrustedRegistry::new();
        registry
            .accept(DOMAIN, release.measurement)
            .expect("fresh registry has no revocations");
        registry.revoke(DOMAIN, revoked.measurement);

        let mut ca_credential = [0u8; 32];
        rng.fill_bytes(&mut ca_credential);
        let ca_key = KeyPair::generate(&mut rng);
        let ca_root = ca_key.public();
        let ca = Arc::new(Mutex::new(SimulatedCA::new(
            ca_key.clone(),
            ca_credential,
            opts.rate_limit,
        )));

        let sp = SpNode {
            domain: DOMAIN.to_owned(),
            policy: policy.clone(),
            fleet: (0..opts.nodes).map(node_addr).collect(),
            ca: ca.clone(),
            ca_credential,
        };

        let net = SimNet::new();
        let kds = net.add(KDS_ADDR, KdsService(kds));

        SimFleet {
            net,
            clock: Clock::manual(EPOCH),
            kds,
            ark,
            chips,
            sources,
            release,
            revoked,
            policy,
            registry,
            ca,
            ca_key,
            ca_credential,
            ca_root,
            sp,
            nodes: vec![None; opts.nodes],
            rng,
        }
    }

    pub fn size(&self) -> usize {
        self.nodes.len()
    }

    pub fn next_seed(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Configuration an honest host would use to launch node `i` with `release`.
    pub fn node_config(&self, i: usize, release: &Release) -> NodeConfig {
        self.config_on_chip(i, self.chips[i].clone(), release)
    }

    pub fn config_on_chip(&self, i: usize, chip: Arc<ChipState>, release: &Release) -> NodeConfig {
        NodeConfig {
            chip,
            boot: release.boot.clone(),
            disk: HostDisk::new(release.image.clone()),
            verity_meta: release.verity.to_bytes(),
            addr: node_addr(i),
            domain: DOMAIN.to_owned(),
            peer_policy: self.policy.clone(),
            trusted_ark: self.ark,
            ca_root: self.ca_root,
            kds: Addr::from(KDS_ADDR),
            clock: self.clock.clone(),
        }
    }

    /// Boots node `i`; it joins the network only if it reaches `Serving`.
    pub fn launch(&mut self, i: usize, config: NodeConfig, storage: NodeStorage) -> NodePhase {
        let addr = config.addr.clone();
        let mut node = Node::new(config, storage, self.rng.next_u64());
        let phase = node.start();
        let node = Rc::new(RefCell::new(node));
        if phase == NodePhase::Serving {
            self.net.add_shared(addr, node.clone());
        } else {
            self.net.remove(&addr);
        }
        self.nodes[i] = Some(node);
        phase
    }

    pub fn launch_honest(&mut self, i: usize) -> NodePhase {
        let config = self.node_config(i, &self.release.clone());
        self.launch(i, config, NodeStorage::default())
    }

    pub fn launch_all(&mut self) -> Vec<NodePhase> {
        (0..self.size()).map(|i| self.launch_honest(i)).collect()
    }

    /// Powers node `i` off and boots it again with `config`, keeping its
    /// host-side storage.
    pub fn reboot(&mut self, i: usize, config: NodeConfig) -> NodePhase {
        let storage = self.nodes[i]
            .take()
            .map(|n| n.borrow().storage().clone())
            .unwrap_or_default();
        self.net.remove(&node_addr(i));
        self.launch(i, config, storage)
    }

    pub fn node(&self, i: usize) -> Ref<'_, Node> {
        self.nodes[i].as_ref().expect("node launched").borrow()
    }

    pub fn node_mut(&self, i: usize) -> RefMut<'_, Node> {
        self.nodes[i].as_ref().expect("node launched").borrow_mut()
    }

    pub fn launched(&self) -> impl Iterator<Item = (usize, Ref<'_, Node>)> {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.as_ref().map(|n| (i, n.borrow())))
    }

    pub fn run_round(&self) -> Result<RoundOutcome, RoundFailed> {
        let sp = self.net.endpoint(SP_ADDR);
        let kds = RemoteKds {
            transport: &sp,
            kds: Addr::from(KDS_ADDR),
        };
        let ctx = AttestationContext {
            kds: &kds,
            trusted_ark: self.ark,
            now: self.clock.now(),
        };
        self.sp.run_certificate_round(&sp, &ctx)
    }

    pub fn certificates_issued(&self) -> usize {
        self.ca.lock().expect("ca lock poisoned").issued().len()
    }

    /// A client at `addr` that trusts this deployment's registry and ARK.
    pub fn client<'a>(&'a self, transport: &'a dyn Transport, registry: &'a TrustedRegistry) -> AttestingClient<'a> {
        AttestingClient::new(transport, registry, Addr::from(KDS_ADDR), self.ark, self.clock.clone())
    }
}
