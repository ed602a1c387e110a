// SPDX-License-Identifier: Apache-2.0

//! Deterministic rootfs images.
//!
//! An image is a stream of records sorted by path, each
//! `lp(path) ‖ mode (u16 BE) ‖ lp(content)`, followed by zero padding up to a
//! whole number of blocks. A zero-length path terminates the stream, which is
//! why empty paths are rejected. Nothing time-dependent is encoded.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::BLOCK_SIZE;
use crate::codec::{put_lp, DecodeError, Reader};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    #[serde(with = "crate::codec::hex_bytes")]
    pub content: Vec<u8>,
    pub mode: u16,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageManifest {
    pub entries: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ManifestError {
    #[error("duplicate path in manifest: {0}")]
    DuplicatePath(String),
    #[error("manifest entry with empty path")]
    EmptyPath,
}

impl ImageManifest {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_file(mut self, path: &str, content: impl Into<Vec<u8>>, mode: u16) -> Self {
        self.entries.push(ManifestEntry {
            path: path.to_owned(),
            content: content.into(),
            mode,
        });
        self
    }

    /// Entries in canonical (path) order, rejecting duplicates.
    pub fn sorted(&self) -> Result<Vec<&ManifestEntry>, ManifestError> {
        let mut by_path = BTreeMap::new();
        for entry in &self.entries {
            if entry.path.is_empty() {
                return Err(ManifestError::EmptyPath);
            }
            if by_path.insert(entry.path.as_str(), entry).is_some() {
                return Err(ManifestError::DuplicatePath(entry.path.clone()));
            }
        }
        Ok(by_path.into_values().collect())
    }
}

pub fn build_image(manifest: &ImageManifest) -> Result<Vec<u8>, ManifestError> {
    let mut out = Vec::new();
    for entry in manifest.sorted()? {
        put_lp(&mut out, entry.path.as_bytes());
        out.extend_from_slice(&entry.mode.to_be_bytes());
        put_lp(&mut out, &entry.content);
    }
    // at least one block, and room for the terminator
    let blocks = (out.len() + 4).div_ceil(BLOCK_SIZE).max(1);
    out.resize(blocks * BLOCK_SIZE, 0);
    Ok(out)
}

pub fn parse_image(image: &[u8]) -> Result<Vec<ManifestEntry>, DecodeError> {
    let mut r = Reader::new(image);
    let mut entries = Vec::new();
    loop {
        let path = r.lp()?;
        if path.is_empty() {
            break;
        }
        let path = String::from_utf8(path.to_vec()).map_err(|_| DecodeError::Invalid("image path"))?;
        let mode = r.u16()?;
        let content = r.lp()?.to_vec();
        entries.push(ManifestEntry { path, content, mode });
    }
    if r.rest().iter().any(|b| *b != 0) {
        return Err(DecodeError::Invalid("non-zero image padding"));
    }
    Ok(entries)
}
