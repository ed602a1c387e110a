// SPDX-License-Identifier: Apache-2.0

//! The build pipeline from sources to a bootable release: rootfs image →
//! verity tree → root hash spliced into the command line → hash table →
//! launch measurement. Provisioning and third-party verifiers run the same
//! code, so a verifier holding the sources reproduces the measurement.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boot::{ovmf_firmware, BootBundle, LaunchMeasurement};
use crate::integrity::{build_image, build_merkle, ImageManifest, ManifestError, VerityMeta};

/// Placeholder in the command-line template replaced by the verity root.
pub const ROOTHASH_PLACEHOLDER: &str = "{roothash}";

pub const INDEX_FILE: &str = "srv/www/index.html";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReleaseSources {
    #[serde(with = "crate::codec::hex_bytes")]
    pub firmware: Vec<u8>,
    #[serde(with = "crate::codec::hex_bytes")]
    pub kernel: Vec<u8>,
    #[serde(with = "crate::codec::hex_bytes")]
    pub initrd: Vec<u8>,
    pub cmdline_template: String,
    pub rootfs: ImageManifest,
    #[serde(with = "crate::codec::hex_bytes", default)]
    pub salt: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReleaseError {
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("command-line template lacks the {ROOTHASH_PLACEHOLDER} placeholder")]
    MissingPlaceholder,
}

#[derive(Debug, Clone)]
pub struct Release {
    pub image: Vec<u8>,
    pub verity: VerityMeta,
    pub boot: BootBundle,
    pub measurement: LaunchMeasurement,
}

pub fn build_release(sources: &ReleaseSources) -> Result<Release, ReleaseError> {
    if !sources.cmdline_template.contains(ROOTHASH_PLACEHOLDER) {
        return Err(ReleaseError::MissingPlaceholder);
    }
    let image = build_image(&sources.rootfs)?;
    let verity = build_merkle(image.clone(), &sources.salt)
        .expect("built images are non-empty and block aligned")
        .metadata();
    let cmdline = sources
        .cmdline_template
        .replace(ROOTHASH_PLACEHOLDER, &verity.root.to_hex());
    let boot = BootBundle::assemble(
        sources.firmware.clone(),
        sources.kernel.clone(),
        sources.initrd.clone(),
        cmdline,
    );
    let measurement = boot.launch_measurement();
    Ok(Release {
        image,
        verity,
        boot,
        measurement,
    })
}

impl ReleaseSources {
    /// A small but complete service image, parameterised by version so that
    /// distinct versions measure differently.
    pub fn sample(version: &str) -> Self {
        let rootfs = ImageManifest::new()
            .with_file("etc/hostname", "revelio-vm\n", 0o644)
            .with_file(
                "etc/nginx/nginx.conf",
                "server {\n  listen 443 ssl;\n  ssl_certificate /run/revelio/tls/cert.pem;\n  \
                 ssl_certificate_key /run/revelio/tls/key.pem;\n  location / { root /srv/www; }\n  \
                 location /.well-known/revelio-attestation { fastcgi_pass unix:/run/revelio/cgi.sock; }\n}\n",
                0o644,
            )
            .with_file(
                "etc/nftables.conf",
                "table inet filter {\n  chain input { type filter hook input priority 0; policy drop;\n    \
                 ct state established,related accept\n    tcp dport 443 accept\n  }\n}\n",
                0o600,
            )
            .with_file(
                INDEX_FILE,
                format!("<!doctype html><title>revelio</title><p>service release {version}</p>\n"),
                0o644,
            )
            .with_file("usr/lib/revelio/VERSION", format!("{version}\n"), 0o644)
            .with_file(
                "usr/lib/revelio/bootstrap.sh",
                "#!/bin/sh\nexec /usr/lib/revelio/identity --first-boot\n",
                0o755,
            );
        ReleaseSources {
            firmware: ovmf_firmware("edk2-stable-sim", true),
            kernel: format!("vmlinuz-6.5.0-snp-guest release={version}").into_bytes(),
            initrd:
                b"initrd: veritysetup open /dev/vda2 root /dev/vdb1 $roothash; mount -o ro /dev/mapper/root /sysroot"
                    .to_vec(),
            cmdline_template: format!("console=ttyS0 root=/dev/mapper/root ro revelio.roothash={ROOTHASH_PLACEHOLDER}"),
            rootfs,
            salt: Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boot::{cmdline_root_hash, ovmf_verify, BootDecision};

    #[test]
    fn release_is_reproducible() {
        let a = build_release(&ReleaseSources::sample("v2")).unwrap();
        let b = build_release(&ReleaseSources::sample("v2")).unwrap();
        assert_eq!(a.image, b.image);
        assert_eq!(a.verity, b.verity);
        assert_eq!(a.measurement, b.measurement);
    }

    #[test]
    fn root_hash_lands_in_the_measured_cmdline() {
        let r = build_release(&ReleaseSources::sample("v2")).unwrap();
        assert_eq!(cmdline_root_hash(&r.boot.cmdline), Some(r.verity.root));
        assert_eq!(ovmf_verify(&r.boot), BootDecision::Proceed);
    }

    #[test]
    fn versions_measure_differently() {
        let a = build_release(&ReleaseSources::sample("v1")).unwrap();
        let b = build_release(&ReleaseSources::sample("v2")).unwrap();
        assert_ne!(a.measurement, b.measurement);
    }

    #[test]
    fn rootfs_only_change_still_changes_measurement() {
        let base = ReleaseSources::sample("v2");
        let mut changed = base.clone();
        changed.rootfs = changed.rootfs.with_file("usr/bin/backdoor", "x", 0o755);
        assert_eq!(base.kernel, changed.kernel);
        assert_ne!(
            build_release(&base).unwrap().measurement,
            build_release(&changed).unwrap().measurement
        );
    }

    #[test]
    fn template_without_placeholder_is_rejected() {
        let mut s = ReleaseSources::sample("v2");
        s.cmdline_template = "console=ttyS0".into();
        assert_eq!(build_release(&s).unwrap_err(), ReleaseError::MissingPlaceholder);
    }

    #[test]
    fn sources_serialize_to_json_and_back() {
        let s = ReleaseSources::sample("v3");
        let json = serde_json::to_string(&s).unwrap();
        let back: ReleaseSources = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
    }
}
