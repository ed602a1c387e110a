// SPDX-License-Identifier: Apache-2.0

use std::io;
use std::sync::{Arc, Mutex};

use revelio_core::clock::Clock;
use revelio_core::node::{Node, NodePhase, NodeStorage};
use revelio_core::protocol::{addr_ip, AttestationContext, RoundFailed, RoundOutcome, SpNode};
use revelio_core::sim::{FleetOptions, SimFleet};
use revelio_core::transport::{Addr, RemoteKds};

use crate::{bind, kds_router, node_router, serve, HttpTransport, ServerHandle};

pub struct DeployedNode {
    pub addr: Addr,
    pub phase: NodePhase,
    pub node: Arc<Mutex<Node>>,
    /// `None` when the node never reached `Serving`.
    pub server: Option<ServerHandle>,
}

/// A seeded fleet served over real sockets: one KDS and one HTTP server per
/// node, with the SP node and CA kept in-process.
pub struct LocalDeployment {
    /// Key material, releases and policy the deployment was derived from.
    pub fleet: SimFleet,
    pub kds: ServerHandle,
    pub nodes: Vec<DeployedNode>,
    pub sp: SpNode,
}

impl LocalDeployment {
    /// Binds every service on `host` with OS-assigned ports and boots the
    /// honest release on each node.
    pub fn launch(opts: FleetOptions, host: &str, clock: Clock) -> io::Result<Self> {
        let mut fleet = SimFleet::new(opts);
        fleet.clock = clock;

        let kds_listener = bind(&format!("{host}:0"))?;
        let kds_addr = Addr::new(kds_listener.local_addr()?.to_string());
        let kds = serve(kds_listener, kds_router(fleet.kds.borrow().0.clone()))?;

        let listeners = (0..fleet.size())
            .map(|_| bind(&format!("{host}:0")))
            .collect::<io::Result<Vec<_>>>()?;
        let addrs = listeners
            .iter()
            .map(|l| l.local_addr().map(|a| Addr::new(a.to_string())))
            .collect::<io::Result<Vec<_>>>()?;
        fleet.policy.approved_ips = addrs.iter().map(|a| addr_ip(a).to_owned()).collect();

        let release = fleet.release.clone();
        let mut nodes = Vec::new();
        for (i, (listener, addr)) in listeners.into_iter().zip(&addrs).enumerate() {
            let mut config = fleet.node_config(i, &release);
            config.addr = addr.clone();
            config.kds = kds_addr.clone();
            let mut node = Node::new(config, NodeStorage::default(), fleet.next_seed());
            let phase = node.start();
            let node = Arc::new(Mutex::new(node));
            let server = match phase {
                NodePhase::Serving => Some(serve(listener, node_router(node.clone(), HttpTransport::default()))?),
                _ => None,
            };
            nodes.push(DeployedNode {
                addr: addr.clone(),
                phase,
                node,
                server,
            });
        }

        let sp = SpNode {
            domain: fleet.sp.domain.clone(),
            policy: fleet.policy.clone(),
            fleet: addrs,
            ca: fleet.ca.clone(),
            ca_credential: fleet.ca_credential,
        };
        Ok(LocalDeployment { fleet, kds, nodes, sp })
    }

    pub fn kds_addr(&self) -> Addr {
        Addr::new(self.kds.addr().to_string())
    }

    pub fn node_addrs(&self) -> Vec<Addr> {
        self.nodes.iter().map(|n| n.addr.clone()).collect()
    }

    /// One certificate round driven by the in-process SP node over HTTP.
    pub fn run_round(&self, transport: &HttpTransport) -> Result<RoundOutcome, RoundFailed> {
        let kds = RemoteKds {
            transport,
            kds: self.kds_addr(),
        };
        let ctx = AttestationContext {
            kds: &kds,
            trusted_ark: self.fleet.ark,
            now: self.fleet.clock.now(),
        };
        self.sp.run_certificate_round(transport, &ctx)
    }
}
