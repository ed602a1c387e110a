// SPDX-License-Identifier: Apache-2.0

//! Shared plumbing for the command-line tools.

pub mod manifest;

use std::fs;
use std::io;
use std::path::Path;

/// Writes `contents` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)?;
    fs::rename(tmp, path)
}

/// `println!` that tolerates a closed stdout (e.g. piping into `head`).
#[macro_export]
macro_rules! outln {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}
