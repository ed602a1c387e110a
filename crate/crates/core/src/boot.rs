// SPDX-License-Identifier: Apache-2.0

//! Measured direct boot.
//!
//! The hypervisor hashes kernel, initrd and command line into a table that is
//! placed inside the measured firmware region. The launch measurement covers
//! `firmware ‖ encoded table`; the firmware then re-hashes the blobs it was
//! actually handed and refuses to boot on any mismatch.

use std::fmt;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec::{byte_newtype, put_lp};
use crate::crypto::{hash256, hash384, Digest256};

byte_newtype!(
    /// SHA-384 digest over the initial guest state.
    LaunchMeasurement,
    48
);

pub const FIRMWARE_MAGIC: &[u8; 8] = b"SIMOVMF1";
/// Firmware flag: verify the injected hash table before handing over control.
pub const FW_VERIFY_HASH_TABLE: u8 = 0x01;

/// Kernel command-line parameter carrying the rootfs verity root.
pub const ROOTHASH_PARAM: &str = "revelio.roothash=";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    Kernel,
    Initrd,
    Cmdline,
}

impl Component {
    pub const ALL: [Component; 3] = [Component::Kernel, Component::Initrd, Component::Cmdline];

    pub fn name(self) -> &'static str {
        match self {
            Component::Kernel => "kernel",
            Component::Initrd => "initrd",
            Component::Cmdline => "cmdline",
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The table injected into the firmware volume. Exactly one entry per
/// component, always in kernel → initrd → cmdline order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashTable {
    pub kernel: Digest256,
    pub initrd: Digest256,
    pub cmdline: Digest256,
}

impl HashTable {
    pub fn get(&self, component: Component) -> &Digest256 {
        match component {
            Component::Kernel => &self.kernel,
            Component::Initrd => &self.initrd,
            Component::Cmdline => &self.cmdline,
        }
    }

    pub fn entries(&self) -> [(&'static str, Digest256); 3] {
        Component::ALL.map(|c| (c.name(), *self.get(c)))
    }

    /// `lp(name) ‖ digest` for each entry in order.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(3 * (4 + 7 + 32));
        for (name, digest) in self.entries() {
            put_lp(&mut out, name.as_bytes());
            out.extend_from_slice(digest.as_ref());
        }
        out
    }
}

/// What the hypervisor hands to the guest at launch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BootBundle {
    pub firmware: Vec<u8>,
    pub kernel: Vec<u8>,
    pub initrd: Vec<u8>,
    pub cmdline: String,
    pub injected_hash_table: HashTable,
}

impl BootBundle {
    /// Bundle as an honest hypervisor would assemble it.
    pub fn assemble(firmware: Vec<u8>, kernel: Vec<u8>, initrd: Vec<u8>, cmdline: String) -> Self {
        let injected_hash_table = build_hash_table(&kernel, &initrd, &cmdline);
        Self {
            firmware,
            kernel,
            initrd,
            cmdline,
            injected_hash_table,
        }
    }

    pub fn component(&self, component: Component) -> &[u8] {
        match component {
            Component::Kernel => &self.kernel,
            Component::Initrd => &self.initrd,
            Component::Cmdline => self.cmdline.as_bytes(),
        }
    }

    pub fn launch_measurement(&self) -> LaunchMeasurement {
        compute_launch_digest(&self.firmware, &self.injected_hash_table)
    }

    /// Loads `firmware.bin`, `kernel.bin`, `initrd.img` and `cmdline.txt` and
    /// injects a freshly computed hash table.
    pub fn load_dir(dir: &Path) -> io::Result<Self> {
        let cmdline = String::from_utf8(fs::read(dir.join("cmdline.txt"))?)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        Ok(Self::assemble(
            fs::read(dir.join("firmware.bin"))?,
            fs::read(dir.join("kernel.bin"))?,
            fs::read(dir.join("initrd.img"))?,
            cmdline,
        ))
    }

    pub fn save_dir(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("firmware.bin"), &self.firmware)?;
        fs::write(dir.join("kernel.bin"), &self.kernel)?;
        fs::write(dir.join("initrd.img"), &self.initrd)?;
        fs::write(dir.join("cmdline.txt"), &self.cmdline)
    }
}

/// Hashes each blob; the command line is hashed as UTF-8 without a trailing NUL.
pub fn build_hash_table(kernel: &[u8], initrd: &[u8], cmdline: &str) -> HashTable {
    HashTable {
        kernel: hash256(kernel),
        initrd: hash256(initrd),
        cmdline: hash256(cmdline.as_bytes()),
    }
}

pub fn compute_launch_digest(firmware: &[u8], table: &HashTable) -> LaunchMeasurement {
    let mut buf = Vec::with_capacity(firmware.len() + 140);
    buf.extend_from_slice(firmware);
    buf.extend_from_slice(&table.encode());
    LaunchMeasurement(hash384(&buf).0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BootDecision {
    Proceed,
    Abort(Component),
}

/// Firmware-side check that each blob hashes to its injected table entry.
pub fn ovmf_verify(bundle: &BootBundle) -> BootDecision {
    for component in Component::ALL {
        if hash256(bundle.component(component)) != *bundle.injected_hash_table.get(component) {
            return BootDecision::Abort(component);
        }
    }
    BootDecision::Proceed
}

/// Builds a simulated firmware image. Only images carrying
/// [`FW_VERIFY_HASH_TABLE`] run [`ovmf_verify`].
pub fn ovmf_firmware(build_id: &str, verify_hash_table: bool) -> Vec<u8> {
    let mut out = FIRMWARE_MAGIC.to_vec();
    out.push(if verify_hash_table { FW_VERIFY_HASH_TABLE } else { 0 });
    out.extend_from_slice(build_id.as_bytes());
    out
}

/// Unrecognised images are treated as non-verifying.
pub fn firmware_verifies_hash_table(firmware: &[u8]) -> bool {
    firmware.len() > FIRMWARE_MAGIC.len()
        && firmware.starts_with(FIRMWARE_MAGIC)
        && firmware[FIRMWARE_MAGIC.len()] & FW_VERIFY_HASH_TABLE != 0
}

pub fn cmdline_root_hash(cmdline: &str) -> Option<Digest256> {
    cmdline
        .split_ascii_whitespace()
        .find_map(|arg| arg.strip_prefix(ROOTHASH_PARAM))
        .and_then(|hex| Digest256::from_hex(hex).ok())
}
