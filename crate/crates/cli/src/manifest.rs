// SPDX-License-Identifier: Apache-2.0

//! `deployment.json`: what `revelio-sim serve` tells the SP node and clients
//! about a running local deployment.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use revelio_core::boot::LaunchMeasurement;
use revelio_core::crypto::{KeyPair, PublicKey};
use revelio_core::hrot::ChipId;
use revelio_core::protocol::{addr_ip, IssuedCert, PeerPolicy, RateLimit, SimulatedCA};
use revelio_core::transport::Addr;
use revelio_core::verification::TrustedRegistry;

use crate::write_atomic;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeploymentManifest {
    pub domain: String,
    pub kds: Addr,
    pub ark: PublicKey,
    pub nodes: Vec<Addr>,
    pub approved_chips: BTreeSet<ChipId>,
    pub expected_measurements: BTreeSet<LaunchMeasurement>,
    pub revoked_measurements: BTreeSet<LaunchMeasurement>,
    pub ca_root: PublicKey,
    /// Simulated CA signing key, hex. Only the SP node should read this.
    pub ca_key: String,
    pub ca_credential: String,
    pub rate_limit: RateLimit,
}

impl DeploymentManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec_pretty(self)?;
        write_atomic(path, &json).with_context(|| format!("writing {}", path.display()))
    }

    /// Peer policy for a round over `fleet`. Measurements come from the
    /// registry entry for the domain when one is given.
    pub fn policy(&self, fleet: &[Addr], registry: Option<&TrustedRegistry>) -> PeerPolicy {
        let (expected, revoked) = match registry.and_then(|r| r.get(&self.domain)) {
            Some(e) => (e.accepted_measurements.clone(), e.revoked_measurements.clone()),
            None => (self.expected_measurements.clone(), self.revoked_measurements.clone()),
        };
        PeerPolicy {
            approved_chips: self.approved_chips.clone(),
            approved_ips: fleet.iter().map(|a| addr_ip(a).to_owned()).collect(),
            expected_measurements: expected,
            revoked_measurements: revoked,
        }
    }

    pub fn credential(&self) -> Result<[u8; 32]> {
        let bytes = hex::decode(&self.ca_credential).context("ca_credential is not hex")?;
        bytes
            .try_into()
            .map_err(|_| anyhow::anyhow!("ca_credential must be 32 bytes"))
    }

    pub fn ca(&self, log: Vec<IssuedCert>) -> Result<SimulatedCA> {
        let key = KeyPair::from_private_bytes(&hex::decode(&self.ca_key).context("ca_key is not hex")?)?;
        anyhow::ensure!(key.public() == self.ca_root, "ca_key does not match ca_root");
        let mut ca = SimulatedCA::new(key, self.credential()?, self.rate_limit);
        ca.restore_log(log);
        Ok(ca)
    }
}

pub fn load_ca_log(path: &Path) -> Result<Vec<IssuedCert>> {
    match fs::read_to_string(path) {
        Ok(text) => serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display())),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(e) => Err(e).with_context(|| format!("reading {}", path.display())),
    }
}

pub fn save_ca_log(path: &Path, log: &[IssuedCert]) -> Result<()> {
    write_atomic(path, &serde_json::to_vec_pretty(log)?).with_context(|| format!("writing {}", path.display()))
}
