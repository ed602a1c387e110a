// SPDX-License-Identifier: Apache-2.0

//! Rootfs image construction, verity-style block integrity and sealed volumes.

mod image;
mod sealed;
mod verity;

pub use image::{build_image, parse_image, ImageManifest, ManifestEntry, ManifestError};
pub use sealed::{seal_volume, unseal_volume, AuthError, SealedVolume};
pub use verity::{
    build_merkle, build_merkle_over, compute_root, BlockStore, HostDisk, MerkleDevice, ReadError, TreeLevel,
    VerityError, VerityMeta, ARITY, BLOCK_SIZE, DIGEST_SIZE,
};
