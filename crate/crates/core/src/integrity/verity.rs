// SPDX-License-Identifier: Apache-2.0

//! Verity-style Merkle tree over fixed-size blocks.
//!
//! Layout: every data block is hashed as `sha256(salt ‖ block)`. Digests are
//! packed 128 to a 4 KiB hash block, the last block of each level zero-padded.
//! Each level above hashes the hash blocks of the level below the same way,
//! until a level consists of a single hash block; the root is the salted hash
//! of that block. `levels[0]` holds the leaf digests.
//!
//! Reads verify top-down, so a corrupted hash block is reported at its own
//! level rather than as a mismatch of whatever it covers.

use std::fmt;
use std::sync::{Arc, RwLock};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::codec::{put_lp, DecodeError, Reader};
use crate::crypto::Digest256;

pub const BLOCK_SIZE: usize = 4096;
pub const DIGEST_SIZE: usize = 32;
pub const ARITY: usize = BLOCK_SIZE / DIGEST_SIZE;

const META_MAGIC: &[u8; 8] = b"RVVERITY";

/// Read-only access to a block device image.
pub trait BlockStore: Send + Sync {
    fn len_bytes(&self) -> usize;
    fn read_at(&self, offset: usize, buf: &mut [u8]);
}

impl BlockStore for Vec<u8> {
    fn len_bytes(&self) -> usize {
        self.len()
    }

    fn read_at(&self, offset: usize, buf: &mut [u8]) {
        buf.copy_from_slice(&self[offset..offset + buf.len()]);
    }
}

/// A disk owned by the host. The host may rewrite it at any time; a guest
/// only ever sees it through a [`MerkleDevice`].
#[derive(Clone, Default)]
pub struct HostDisk(Arc<RwLock<Vec<u8>>>);

impl HostDisk {
    pub fn new(bytes: Vec<u8>) -> Self {
        HostDisk(Arc::new(RwLock::new(bytes)))
    }

    pub fn snapshot(&self) -> Vec<u8> {
        self.0.read().expect("disk lock poisoned").clone()
    }

    pub fn host_write(&self, offset: usize, bytes: &[u8]) {
        let mut disk = self.0.write().expect("disk lock poisoned");
        disk[offset..offset + bytes.len()].copy_from_slice(bytes);
    }

    pub fn host_flip_bit(&self, bit: usize) {
        let mut disk = self.0.write().expect("disk lock poisoned");
        disk[bit / 8] ^= 1 << (bit % 8);
    }
}

impl BlockStore for HostDisk {
    fn len_bytes(&self) -> usize {
        self.0.read().expect("disk lock poisoned").len()
    }

    fn read_at(&self, offset: usize, buf: &mut [u8]) {
        let disk = self.0.read().expect("disk lock poisoned");
        buf.copy_from_slice(&disk[offset..offset + buf.len()]);
    }
}

impl fmt::Debug for HostDisk {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HostDisk({} bytes)", self.len_bytes())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TreeLevel {
    /// A data block did not match its leaf digest.
    Data,
    /// The hash block at this level did not match its parent (or the root).
    Hash(usize),
}

impl fmt::Display for TreeLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TreeLevel::Data => f.write_str("data"),
            TreeLevel::Hash(l) => write!(f, "hash level {l}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ReadError {
    #[error("block {index} out of range (device has {blocks} blocks)")]
    OutOfRange { index: usize, blocks: usize },
    #[error("integrity error at {0}")]
    Integrity(TreeLevel),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VerityError {
    #[error("data length {0} is not a positive multiple of {BLOCK_SIZE}")]
    Unaligned(usize),
    #[error("hash tree geometry does not match a device of {0} blocks")]
    Geometry(usize),
    #[error("malformed verity metadata: {0}")]
    Meta(#[from] DecodeError),
}

fn salted_hash(salt: &[u8], block: &[u8]) -> [u8; DIGEST_SIZE] {
    let mut h = Sha256::new();
    h.update(salt);
    h.update(block);
    h.finalize().into()
}

/// Number of hash blocks on each level, bottom first.
fn level_sizes(data_blocks: usize) -> Vec<usize> {
    let mut sizes = Vec::new();
    let mut n = data_blocks;
    loop {
        let blocks = n.div_ceil(ARITY);
        sizes.push(blocks);
        if blocks == 1 {
            return sizes;
        }
        n = blocks;
    }
}

fn data_block_count(len: usize) -> Result<usize, VerityError> {
    if len == 0 || !len.is_multiple_of(BLOCK_SIZE) {
        return Err(VerityError::Unaligned(len));
    }
    Ok(len / BLOCK_SIZE)
}

/// Packs child digests into zero-padded hash blocks.
fn pack_level(digests: impl Iterator<Item = [u8; DIGEST_SIZE]>, blocks: usize) -> Vec<u8> {
    let mut level = vec![0u8; blocks * BLOCK_SIZE];
    for (i, d) in digests.enumerate() {
        level[i * DIGEST_SIZE..(i + 1) * DIGEST_SIZE].copy_from_slice(&d);
    }
    level
}

fn build_levels(store: &dyn BlockStore, salt: &[u8]) -> Result<(Vec<Vec<u8>>, Digest256), VerityError> {
    let blocks = data_block_count(store.len_bytes())?;
    let sizes = level_sizes(blocks);
    let mut buf = vec![0u8; BLOCK_SIZE];
    let leaves = (0..blocks).map(|i| {
        store.read_at(i * BLOCK_SIZE, &mut buf);
        salted_hash(salt, &buf)
    });
    let mut levels = vec![pack_level(leaves, sizes[0])];
    for &size in &sizes[1..] {
        let below = levels.last().expect("at least one level");
        let digests = below
            .chunks(BLOCK_SIZE)
            .map(|b| salted_hash(salt, b))
            .collect::<Vec<_>>();
        levels.push(pack_level(digests.into_iter(), size));
    }
    let top = levels.last().expect("at least one level");
    let root = Digest256(salted_hash(salt, top));
    Ok((levels, root))
}

/// Root digest of `data` without keeping the tree.
pub fn compute_root(data: &[u8], salt: &[u8]) -> Result<Digest256, VerityError> {
    struct Borrowed<'a>(&'a [u8]);
    impl BlockStore for Borrowed<'_> {
        fn len_bytes(&self) -> usize {
            self.0.len()
        }
        fn read_at(&self, offset: usize, buf: &mut [u8]) {
            buf.copy_from_slice(&self.0[offset..offset + buf.len()]);
        }
    }
    Ok(build_levels(&Borrowed(data), salt)?.1)
}

pub fn build_merkle(data: Vec<u8>, salt: &[u8]) -> Result<MerkleDevice, VerityError> {
    build_merkle_over(data, salt)
}

pub fn build_merkle_over<S: BlockStore + 'static>(store: S, salt: &[u8]) -> Result<MerkleDevice, VerityError> {
    let (levels, root) = build_levels(&store, salt)?;
    Ok(MerkleDevice {
        blocks: store.len_bytes() / BLOCK_SIZE,
        store: Box::new(store),
        salt: salt.to_vec(),
        levels,
        root,
    })
}

/// A read-only block device whose every read is checked against the root.
pub struct MerkleDevice {
    store: Box<dyn BlockStore>,
    blocks: usize,
    salt: Vec<u8>,
    levels: Vec<Vec<u8>>,
    root: Digest256,
}

impl MerkleDevice {
    /// Attaches previously generated metadata to a data store. The root is
    /// taken from `meta`; callers that hold a trusted root compare it first.
    pub fn open<S: BlockStore + 'static>(store: S, meta: &VerityMeta) -> Result<Self, VerityError> {
        let blocks = data_block_count(store.len_bytes())?;
        if meta.data_blocks != blocks as u64 {
            return Err(VerityError::Geometry(blocks));
        }
        let sizes = level_sizes(blocks);
        if sizes.len() != meta.levels.len()
            || sizes
                .iter()
                .zip(&meta.levels)
                .any(|(n, level)| level.len() != n * BLOCK_SIZE)
        {
            return Err(VerityError::Geometry(blocks));
        }
        Ok(MerkleDevice {
            store: Box::new(store),
            blocks,
            salt: meta.salt.clone(),
            levels: meta.levels.clone(),
            root: meta.root,
        })
    }

    pub fn root(&self) -> Digest256 {
        self.root
    }

    pub fn salt(&self) -> &[u8] {
        &self.salt
    }

    pub fn block_count(&self) -> usize {
        self.blocks
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    fn hash_block(&self, level: usize, index: usize) -> &[u8] {
        &self.levels[level][index * BLOCK_SIZE..(index + 1) * BLOCK_SIZE]
    }

    fn entry(&self, level: usize, child: usize) -> &[u8] {
        let block = self.hash_block(level, child / ARITY);
        let pos = child % ARITY;
        &block[pos * DIGEST_SIZE..(pos + 1) * DIGEST_SIZE]
    }

    pub fn verified_read(&self, index: usize) -> Result<Vec<u8>, ReadError> {
        if index >= self.blocks {
            return Err(ReadError::OutOfRange {
                index,
                blocks: self.blocks,
            });
        }
        let top = self.levels.len() - 1;
        if salted_hash(&self.salt, self.hash_block(top, 0)) != self.root.0 {
            return Err(ReadError::Integrity(TreeLevel::Hash(top)));
        }
        // index of the hash block on `level` that covers data block `index`
        let covering = |level: usize| index / ARITY.pow(level as u32 + 1);
        for level in (0..top).rev() {
            let child = covering(level);
            if salted_hash(&self.salt, self.hash_block(level, child)) != self.entry(level + 1, child) {
                return Err(ReadError::Integrity(TreeLevel::Hash(level)));
            }
        }
        let mut block = vec![0u8; BLOCK_SIZE];
        self.store.read_at(index * BLOCK_SIZE, &mut block);
        if salted_hash(&self.salt, &block) != self.entry(0, index) {
            return Err(ReadError::Integrity(TreeLevel::Data));
        }
        Ok(block)
    }

    /// Reads the whole device through verified reads.
    pub fn verified_read_all(&self) -> Result<Vec<u8>, ReadError> {
        let mut out = Vec::with_capacity(self.blocks * BLOCK_SIZE);
        for i in 0..self.blocks {
            out.extend_from_slice(&self.verified_read(i)?);
        }
        Ok(out)
    }

    pub fn metadata(&self) -> VerityMeta {
        VerityMeta {
            data_blocks: self.blocks as u64,
            salt: self.salt.clone(),
            root: self.root,
            levels: self.levels.clone(),
        }
    }
}

impl fmt::Debug for MerkleDevice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MerkleDevice")
            .field("blocks", &self.blocks)
            .field("levels", &self.levels.len())
            .field("root", &self.root)
            .finish()
    }
}

/// Sidecar metadata (`verity.meta`).
///
/// ```text
/// "RVVERITY" ‖ block_size (u32) ‖ digest_size (u32) ‖ data_blocks (u64)
///   ‖ lp(salt) ‖ root as 64 ASCII hex chars ‖ level_count (u32)
///   ‖ hash levels, bottom level first
/// ```
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerityMeta {
    pub data_blocks: u64,
    pub salt: Vec<u8>,
    pub root: Digest256,
    pub levels: Vec<Vec<u8>>,
}

impl VerityMeta {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = META_MAGIC.to_vec();
        out.extend_from_slice(&(BLOCK_SIZE as u32).to_be_bytes());
        out.extend_from_slice(&(DIGEST_SIZE as u32).to_be_bytes());
        out.extend_from_slice(&self.data_blocks.to_be_bytes());
        put_lp(&mut out, &self.salt);
        out.extend_from_slice(self.root.to_hex().as_bytes());
        out.extend_from_slice(&(self.levels.len() as u32).to_be_bytes());
        for level in &self.levels {
            out.extend_from_slice(level);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        if r.take(8)? != META_MAGIC {
            return Err(DecodeError::Invalid("verity magic"));
        }
        if r.u32()? as usize != BLOCK_SIZE {
            return Err(DecodeError::Invalid("verity block size"));
        }
        if r.u32()? as usize != DIGEST_SIZE {
            return Err(DecodeError::Invalid("verity digest size"));
        }
        let data_blocks = r.u64()?;
        let salt = r.lp()?.to_vec();
        let root_hex = std::str::from_utf8(r.take(64)?).map_err(|_| DecodeError::Invalid("verity root"))?;
        let root = Digest256::from_hex(root_hex)?;
        let level_count = r.u32()? as usize;
        let blocks = usize::try_from(data_blocks).map_err(|_| DecodeError::Invalid("verity block count"))?;
        if blocks == 0 {
            return Err(DecodeError::Invalid("verity block count"));
        }
        let sizes = level_sizes(blocks);
        if sizes.len() != level_count {
            return Err(DecodeError::Invalid("verity level count"));
        }
        let levels = sizes
            .iter()
            .map(|n| r.take(n * BLOCK_SIZE).map(<[u8]>::to_vec))
            .collect::<Result<Vec<_>, _>>()?;
        r.finish()?;
        Ok(VerityMeta {
            data_blocks,
            salt,
            root,
            levels,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::hash256;

    fn device(blocks: usize, salt: &[u8]) -> (Vec<u8>, MerkleDevice) {
        let data: Vec<u8> = (0..blocks * BLOCK_SIZE).map(|i| (i * 31 % 251) as u8).collect();
        let dev = build_merkle(data.clone(), salt).unwrap();
        (data, dev)
    }

    #[test]
    fn single_zero_block_root_golden() {
        // Independent script: sha256(sha256(zero block) ‖ 4064 zero bytes).
        let dev = build_merkle(vec![0; BLOCK_SIZE], b"").unwrap();
        assert_eq!(
            dev.root().to_hex(),
            "ec8e469cd349676fea41eeeb5b70e45a30f9a058d862edc5823b95ddf135c801"
        );
        let mut hb = hash256(&[0u8; BLOCK_SIZE]).0.to_vec();
        hb.resize(BLOCK_SIZE, 0);
        assert_eq!(dev.root(), hash256(&hb));

        let salted = build_merkle(vec![0; BLOCK_SIZE], b"revelio").unwrap();
        assert_eq!(
            salted.root().to_hex(),
            "b8e6acc1b251403986bf8724d7e43d843cf37839ed98a93cc4db89a7e9535df2"
        );
    }

    #[test]
    fn geometry_of_levels() {
        assert_eq!(level_sizes(1), [1]);
        assert_eq!(level_sizes(128), [1]);
        assert_eq!(level_sizes(129), [2, 1]);
        assert_eq!(level_sizes(128 * 128 + 1), [129, 2, 1]);
    }

    #[test]
    fn unaligned_or_empty_data_is_rejected() {
        assert_eq!(
            build_merkle(vec![0; 100], b"").unwrap_err(),
            VerityError::Unaligned(100)
        );
        assert_eq!(build_merkle(Vec::new(), b"").unwrap_err(), VerityError::Unaligned(0));
    }

    #[test]
    fn untouched_device_reads_every_block() {
        let (data, dev) = device(130, b"s");
        assert_eq!(dev.level_count(), 2);
        for i in 0..dev.block_count() {
            assert_eq!(
                dev.verified_read(i).unwrap(),
                &data[i * BLOCK_SIZE..(i + 1) * BLOCK_SIZE]
            );
        }
        assert_eq!(
            dev.verified_read(130),
            Err(ReadError::OutOfRange {
                index: 130,
                blocks: 130
            })
        );
    }

    #[test]
    fn rebuild_is_deterministic() {
        let (data, dev) = device(5, b"");
        assert_eq!(build_merkle(data, b"").unwrap().root(), dev.root());
    }

    #[test]
    fn corrupted_data_byte_fails_at_data_level() {
        let (mut data, dev) = device(3, b"");
        let meta = dev.metadata();
        data[BLOCK_SIZE + 17] ^= 0x40;
        let tampered = MerkleDevice::open(data, &meta).unwrap();
        assert!(tampered.verified_read(0).is_ok());
        assert_eq!(tampered.verified_read(1), Err(ReadError::Integrity(TreeLevel::Data)));
    }

    #[test]
    fn corrupted_hash_block_fails_at_its_level() {
        let (data, dev) = device(200, b"x");
        assert_eq!(dev.level_count(), 2);

        let mut meta = dev.metadata();
        meta.levels[0][5] ^= 1; // leaf digests of blocks 0..128
        let tampered = MerkleDevice::open(data.clone(), &meta).unwrap();
        assert_eq!(tampered.verified_read(0), Err(ReadError::Integrity(TreeLevel::Hash(0))));
        assert!(tampered.verified_read(150).is_ok());

        let mut meta = dev.metadata();
        meta.levels[1][40] ^= 1;
        let tampered = MerkleDevice::open(data, &meta).unwrap();
        assert_eq!(
            tampered.verified_read(199),
            Err(ReadError::Integrity(TreeLevel::Hash(1)))
        );
    }

    #[test]
    fn host_writes_are_caught_on_next_read() {
        let (data, _) = device(4, b"");
        let disk = HostDisk::new(data);
        let dev = build_merkle_over(disk.clone(), b"").unwrap();
        assert!(dev.verified_read(2).is_ok());
        disk.host_flip_bit(2 * BLOCK_SIZE * 8 + 3);
        assert_eq!(dev.verified_read(2), Err(ReadError::Integrity(TreeLevel::Data)));
        assert!(dev.verified_read(3).is_ok());
    }

    #[test]
    fn metadata_round_trips_and_rejects_bad_geometry() {
        let (data, dev) = device(129, b"salt");
        let bytes = dev.metadata().to_bytes();
        let meta = VerityMeta::from_bytes(&bytes).unwrap();
        assert_eq!(meta, dev.metadata());
        let reopened = MerkleDevice::open(data.clone(), &meta).unwrap();
        assert_eq!(reopened.root(), dev.root());

        assert!(VerityMeta::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut short = data;
        short.truncate(128 * BLOCK_SIZE);
        assert!(matches!(
            MerkleDevice::open(short, &meta),
            Err(VerityError::Geometry(128))
        ));
    }
}
