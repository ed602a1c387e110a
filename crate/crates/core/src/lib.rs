// SPDX-License-Identifier: Apache-2.0

//! Simulated confidential-VM trust chain.
//!
//! A software model of a hardware root of trust, measured direct boot, a
//! verity-protected root filesystem, sealed storage, fleet-wide TLS identity
//! distribution between attested nodes, and the client-side verification
//! that consumes it all. The [`sim`] module wires these into a deterministic
//! network simulator with a programmable adversary.

pub mod boot;
pub mod cert;
pub mod clock;
pub mod codec;
pub mod crypto;
pub mod hrot;
pub mod integrity;
pub mod kds;
pub mod node;
pub mod protocol;
pub mod release;
pub mod sim;
pub mod transport;
pub mod verification;
pub mod wire;
